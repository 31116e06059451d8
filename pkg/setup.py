"""Build script: compiles the optional grid-posterior kernel.

The package works without the extension (a NumPy fallback is selected at
import time), so any build failure here downgrades to a pure-Python install
instead of aborting.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/priorpool/_nimass.pyx"],
        language_level=3,
    )
    include_dirs = [numpy.get_include()]
except Exception:  # pragma: no cover - toolchain probing
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
