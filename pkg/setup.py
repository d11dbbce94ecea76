"""Build script for the optional compiled kernels.

The package works without the extension (a NumPy fallback is selected at
import time), so any failure to build it degrades gracefully to a pure
Python install.
"""
import sys

from setuptools import Extension, setup


def extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        print("studypilot: cython/numpy unavailable, skipping compiled kernels",
              file=sys.stderr)
        return []
    ext = Extension(
        "studypilot._kernels._ckernels",
        ["src/studypilot/_kernels/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    try:
        return cythonize([ext], compiler_directives={"language_level": "3"})
    except Exception as exc:  # pragma: no cover - build-env dependent
        print(f"studypilot: skipping compiled kernels ({exc})", file=sys.stderr)
        return []


setup(ext_modules=extensions())
