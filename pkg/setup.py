"""Build script: compiles the optional Cython kernels.

If Cython or a C compiler is unavailable the package still installs and
runs on the pure-Python kernels.
"""
import os
import sys

from setuptools import setup

ext_modules = []
if os.environ.get("CKYBLOWUP_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        # no fast-math and no contraction: the error-free transforms in the
        # interval kernels rely on every product and sum being rounded once
        flags = ["-O2", "-ffp-contract=off", "-fno-fast-math"]
        ext_modules = cythonize(
            [
                Extension(
                    "ckyblowup._core",
                    ["src/ckyblowup/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=flags,
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "legacy_implicit_noexcept": True,
            },
        )
    except Exception as exc:  # pragma: no cover - build environment dependent
        print(f"warning: building without compiled kernels ({exc})", file=sys.stderr)
        ext_modules = []

setup(ext_modules=ext_modules)
