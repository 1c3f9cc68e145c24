"""ASCII-over-UDP command and telemetry link between controller and plant.

Wire grammar (one message per datagram, no terminator required)::

    command            enter SDK mode
    takeoff
    land
    rc A B C D         A..D signed decimal integers in [-100, 100]

Replies are ``ok`` or ``error <reason>``. Telemetry datagrams are
``key:value;`` pairs in a fixed order, sent at 10 Hz to the host of the last
command sender.

Rc channels map linearly onto the velocity interface: ``a`` -> vy (left),
``b`` -> vx (forward), ``c`` -> vz (up), ``d`` -> yaw rate, one unit being
1/100 of the plant's saturation.
"""

from __future__ import annotations

import logging
import math
import re
import socket
import threading
import time
from dataclasses import dataclass
from typing import Optional, Union

from .vehicle import DroneState, PlantParams, VelocityCommand, VelocityDisturbance, advance

log = logging.getLogger(__name__)

RC_LIMIT = 100
MAX_DATAGRAM = 256
COMMAND_PORT = 8889
TELEMETRY_PORT = 8890
TELEMETRY_HZ = 10.0
DEFAULT_TIMEOUT = 0.5

OK = "ok"
ERR_PARSE = "error parse"
ERR_NOT_SDK = "error not in sdk mode"
ERR_OVERSIZED = "error oversized"

_INT = re.compile(r"[+-]?[0-9]+")


class ParseError(ValueError):
    def __init__(self, message: str, token: str = ""):
        super().__init__(f"{message}: {token!r}" if token else message)
        self.token = token


class LinkTimeout(TimeoutError):
    pass


class LinkError(RuntimeError):
    pass


# -- messages -------------------------------------------------------------------


@dataclass(frozen=True)
class EnterSdk:
    pass


@dataclass(frozen=True)
class Takeoff:
    pass


@dataclass(frozen=True)
class Land:
    pass


def _clamp_rc(v) -> int:
    return max(-RC_LIMIT, min(RC_LIMIT, int(v)))


@dataclass(frozen=True)
class Rc:
    a: int = 0  # left
    b: int = 0  # forward
    c: int = 0  # up
    d: int = 0  # yaw rate

    def __post_init__(self):
        for name in "abcd":
            object.__setattr__(self, name, _clamp_rc(getattr(self, name)))


CommandMessage = Union[EnterSdk, Takeoff, Land, Rc]

_VERBS = {"command": EnterSdk, "takeoff": Takeoff, "land": Land}


def encode_command(m: CommandMessage) -> str:
    if isinstance(m, Rc):
        return f"rc {m.a} {m.b} {m.c} {m.d}"
    for verb, cls in _VERBS.items():
        if type(m) is cls:
            return verb
    raise TypeError(f"not a command message: {m!r}")


def decode_command(line: Union[str, bytes]) -> CommandMessage:
    """Parse one command; raises :class:`ParseError` naming the offending token."""
    if isinstance(line, (bytes, bytearray)):
        if len(line) > MAX_DATAGRAM:
            raise ParseError("oversized datagram")
        try:
            line = bytes(line).decode("ascii")
        except UnicodeDecodeError as exc:
            raise ParseError("non-ASCII input", repr(bytes(line)[exc.start:exc.end])) from None
    elif len(line.encode("utf-8", "surrogatepass")) > MAX_DATAGRAM:
        raise ParseError("oversized datagram")
    tokens = line.split()
    if not tokens:
        raise ParseError("empty command")
    verb, args = tokens[0], tokens[1:]
    if verb in _VERBS:
        if args:
            raise ParseError(f"'{verb}' takes no arguments", args[0])
        return _VERBS[verb]()
    if verb != "rc":
        raise ParseError("unknown verb", verb)
    if len(args) != 4:
        raise ParseError(f"rc takes 4 arguments, got {len(args)}", " ".join(args))
    vals = []
    for tok in args:
        if not _INT.fullmatch(tok):
            raise ParseError("not an integer", tok)
        v = int(tok)
        if abs(v) > RC_LIMIT:
            raise ParseError("out of range", tok)
        vals.append(v)
    return Rc(*vals)


def velocity_to_rc(cmd: VelocityCommand, v_max: float, w_max: float) -> Rc:
    """Quantize a velocity command to Rc units (round half to even)."""
    return Rc(
        round(cmd.vy / v_max * RC_LIMIT),
        round(cmd.vx / v_max * RC_LIMIT),
        round(cmd.vz / v_max * RC_LIMIT),
        round(cmd.wz / w_max * RC_LIMIT),
    )


def rc_to_velocity(rc: Rc, v_max: float, w_max: float) -> VelocityCommand:
    sv, sw = v_max / RC_LIMIT, w_max / RC_LIMIT
    return VelocityCommand(rc.b * sv, rc.a * sv, rc.c * sv, rc.d * sw, v_max=v_max, w_max=w_max)


# -- telemetry --------------------------------------------------------------------


TELEMETRY_FIELDS = ("time", "x", "y", "z", "yaw", "vx", "vy", "vz")


@dataclass(frozen=True)
class TelemetryMessage:
    time_ms: int
    position: tuple[float, float, float]
    yaw: float
    velocity: tuple[float, float, float]

    @classmethod
    def from_state(cls, s: DroneState) -> TelemetryMessage:
        return cls(
            int(round(s.t * 1000.0)),
            tuple(float(v) for v in s.position),
            float(s.yaw),
            tuple(float(v) for v in s.velocity_world),
        )


def encode_telemetry(m: TelemetryMessage) -> str:
    vals = (m.time_ms, *m.position, m.yaw, *m.velocity)
    parts = [f"{TELEMETRY_FIELDS[0]}:{vals[0]:d}"]
    parts += [f"{k}:{v!r}" for k, v in zip(TELEMETRY_FIELDS[1:], vals[1:])]
    return ";".join(parts) + ";"


def decode_telemetry(line: Union[str, bytes]) -> TelemetryMessage:
    if isinstance(line, (bytes, bytearray)):
        line = bytes(line).decode("ascii", errors="replace")
    items = [p for p in line.strip().split(";") if p]
    if len(items) != len(TELEMETRY_FIELDS):
        raise ParseError("telemetry field count", line[:40])
    vals = []
    for item, key in zip(items, TELEMETRY_FIELDS):
        k, sep, v = item.partition(":")
        if not sep or k != key:
            raise ParseError(f"expected '{key}'", item)
        try:
            vals.append(int(v) if key == "time" else float(v))
        except ValueError:
            raise ParseError("bad number", v) from None
    return TelemetryMessage(vals[0], tuple(vals[1:4]), vals[4], tuple(vals[5:8]))


# -- plant side -------------------------------------------------------------------


class Mailbox:
    """Single-slot, last-write-wins command hand-off between executors."""

    def __init__(self, initial: Optional[Rc] = None):
        self._lock = threading.Lock()
        self._value = initial if initial is not None else Rc()
        self._version = 0

    def put(self, rc: Rc) -> None:
        with self._lock:
            self._value = rc
            self._version += 1

    def get(self) -> tuple[Rc, int]:
        with self._lock:
            return self._value, self._version


def substeps_for_tick(k: int, rate: float, dt: float) -> int:
    """Plant substeps between camera ticks ``k`` and ``k + 1`` on a shared grid."""
    per = 1.0 / (rate * dt)
    return math.ceil((k + 1) * per - 1e-9) - math.ceil(k * per - 1e-9)


class PlantLoop:
    """Owner of the simulated vehicle; applies the mailbox command each tick.

    In tick-aligned mode the caller drives time with :meth:`request_tick`
    (blocking until the plant thread has integrated one camera period). In
    realtime mode :meth:`start_realtime` advances the plant on the wall clock.
    """

    def __init__(self, state: DroneState, params: PlantParams = PlantParams(),
                 disturbance: Optional[VelocityDisturbance] = None, rate: float = 30.0,
                 mailbox: Optional[Mailbox] = None):
        self.params = params
        self.disturbance = disturbance
        self.rate = rate
        self.mailbox = mailbox if mailbox is not None else Mailbox()
        self._state = state
        self._tick = 0
        self._state_lock = threading.Lock()
        self._request = threading.Semaphore(0)
        self._done = threading.Semaphore(0)
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def snapshot(self) -> DroneState:
        with self._state_lock:
            return self._state

    @property
    def tick_index(self) -> int:
        return self._tick

    def command(self) -> VelocityCommand:
        rc, _ = self.mailbox.get()
        return rc_to_velocity(rc, self.params.v_max, self.params.w_max)

    def advance_tick(self) -> DroneState:
        """Integrate one camera period in the calling thread."""
        n = substeps_for_tick(self._tick, self.rate, self.params.dt)
        nxt = advance(self.snapshot(), self.command(), self.params, n, self.disturbance)
        with self._state_lock:
            self._state = nxt
            self._tick += 1
        return nxt

    # tick-aligned executor
    def start(self) -> PlantLoop:
        self._thread = threading.Thread(target=self._run_aligned, name="plant", daemon=True)
        self._thread.start()
        return self

    def _run_aligned(self) -> None:
        while True:
            self._request.acquire()
            if self._stop.is_set():
                return
            self.advance_tick()
            self._done.release()

    def request_tick(self, timeout: float = 5.0) -> DroneState:
        self._request.release()
        if not self._done.acquire(timeout=timeout):
            raise LinkError("plant loop did not complete the tick")
        return self.snapshot()

    # wall-clock executor
    def start_realtime(self) -> PlantLoop:
        self._thread = threading.Thread(target=self._run_realtime, name="plant-rt", daemon=True)
        self._thread.start()
        return self

    def _run_realtime(self) -> None:
        period = 1.0 / self.rate
        nxt = time.monotonic()
        while not self._stop.is_set():
            self.advance_tick()
            nxt += period
            delay = nxt - time.monotonic()
            if delay > 0:
                self._stop.wait(delay)
            else:
                nxt = time.monotonic()

    def stop(self) -> None:
        self._stop.set()
        self._request.release()
        if self._thread is not None:
            self._thread.join(timeout=2.0)


class LinkServer:
    """UDP endpoint that feeds a :class:`PlantLoop` mailbox and streams telemetry."""

    def __init__(self, plant: PlantLoop, host: str = "127.0.0.1", port: int = COMMAND_PORT,
                 telemetry_port: int = TELEMETRY_PORT, telemetry_hz: float = TELEMETRY_HZ):
        self.plant = plant
        self.telemetry_port = telemetry_port
        self.telemetry_period = 1.0 / telemetry_hz
        self.sdk_mode = False
        self.airborne = False
        self.last_sender: Optional[tuple[str, int]] = None
        self.commands_applied = 0
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind((host, port))  # bind failures propagate as OSError
        self._sock.settimeout(0.02)
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def handle(self, data: bytes) -> str:
        """Apply one datagram and return the reply text."""
        if len(data) > MAX_DATAGRAM:
            return ERR_OVERSIZED
        try:
            m = decode_command(data)
        except ParseError:
            return ERR_PARSE
        if isinstance(m, EnterSdk):
            self.sdk_mode = True
            return OK
        if not self.sdk_mode:
            return ERR_NOT_SDK
        if isinstance(m, Takeoff):
            self.airborne = True
        elif isinstance(m, Land):
            self.airborne = False
            self.plant.mailbox.put(Rc())
        else:
            self.plant.mailbox.put(m)
        self.commands_applied += 1
        return OK

    def start(self) -> LinkServer:
        self._thread = threading.Thread(target=self._serve, name="link-server", daemon=True)
        self._thread.start()
        return self

    def _serve(self) -> None:
        next_tel = time.monotonic() + self.telemetry_period
        while not self._stop.is_set():
            try:
                data, addr = self._sock.recvfrom(MAX_DATAGRAM + 1)
            except socket.timeout:
                data = None
            except OSError:
                if self._stop.is_set():
                    return
                raise
            if data is not None:
                self.last_sender = addr
                self._sock.sendto(self.handle(data).encode("ascii"), addr)
            now = time.monotonic()
            if now >= next_tel:
                next_tel += self.telemetry_period * max(1, math.ceil((now - next_tel) / self.telemetry_period))
                self._emit_telemetry()

    def _emit_telemetry(self) -> None:
        if self.last_sender is None:
            return
        msg = encode_telemetry(TelemetryMessage.from_state(self.plant.snapshot()))
        try:
            self._sock.sendto(msg.encode("ascii"), (self.last_sender[0], self.telemetry_port))
        except OSError as exc:  # never let telemetry stall the server
            log.debug("telemetry send failed: %s", exc)

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        self._sock.close()


class LinkClient:
    """Controller-side session; every send waits for exactly one reply."""

    def __init__(self, host: str = "127.0.0.1", port: int = COMMAND_PORT,
                 timeout: float = DEFAULT_TIMEOUT, telemetry_port: Optional[int] = None):
        self.server = (host, port)
        self.timeout = timeout
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind(("127.0.0.1", 0))
        self._sock.settimeout(timeout)
        self._tel: Optional[socket.socket] = None
        if telemetry_port is not None:
            self._tel = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            self._tel.bind(("127.0.0.1", telemetry_port))
            self._tel.settimeout(timeout)

    def send(self, m: CommandMessage) -> str:
        """Send once; a missing reply raises :class:`LinkTimeout` and is never retried."""
        self._sock.sendto(encode_command(m).encode("ascii"), self.server)
        try:
            data, _ = self._sock.recvfrom(MAX_DATAGRAM)
        except socket.timeout:
            raise LinkTimeout(
                f"no reply from {self.server[0]}:{self.server[1]} within {self.timeout * 1000:.0f} ms"
            ) from None
        except ConnectionRefusedError:
            raise LinkTimeout(f"{self.server[0]}:{self.server[1]} refused the datagram") from None
        try:
            reply = data.decode("ascii")
        except UnicodeDecodeError:
            raise LinkError(f"malformed reply {data!r}") from None
        if reply != OK and not reply.startswith("error "):
            raise LinkError(f"malformed reply {reply!r}")
        return reply

    def telemetry(self) -> TelemetryMessage:
        if self._tel is None:
            raise LinkError("client was created without a telemetry port")
        try:
            data, _ = self._tel.recvfrom(MAX_DATAGRAM)
        except socket.timeout:
            raise LinkTimeout("no telemetry received") from None
        return decode_telemetry(data)

    def latest_telemetry(self) -> Optional[TelemetryMessage]:
        """Drain queued telemetry without blocking; None when nothing arrived."""
        if self._tel is None:
            raise LinkError("client was created without a telemetry port")
        latest = None
        self._tel.setblocking(False)
        try:
            while True:
                try:
                    data, _ = self._tel.recvfrom(MAX_DATAGRAM)
                except (BlockingIOError, socket.timeout):
                    break
                try:
                    latest = decode_telemetry(data)
                except ParseError:
                    continue
        finally:
            self._tel.settimeout(self.timeout)
        return latest

    def close(self) -> None:
        self._sock.close()
        if self._tel is not None:
            self._tel.close()

    def __enter__(self) -> LinkClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


__all__ = [
    "COMMAND_PORT",
    "EnterSdk",
    "Land",
    "LinkClient",
    "LinkError",
    "LinkServer",
    "LinkTimeout",
    "Mailbox",
    "ParseError",
    "PlantLoop",
    "Rc",
    "TELEMETRY_PORT",
    "Takeoff",
    "TelemetryMessage",
    "decode_command",
    "decode_telemetry",
    "encode_command",
    "encode_telemetry",
    "rc_to_velocity",
    "substeps_for_tick",
    "velocity_to_rc",
]
