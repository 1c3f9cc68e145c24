import os
import sys

from setuptools import setup

ext_modules = []
if not os.environ.get("GATERACE_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "gaterace._kernels",
                    ["src/gaterace/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError as exc:
        print(f"gaterace: building without compiled kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
