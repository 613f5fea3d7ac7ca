"""Build script: compiles the optional planar-dynamics kernel.

The compiled extension is a pure speed-up; `amble` falls back to the numpy
backend when it is missing (see amble/sim/backend.py).  Set AMBLE_NO_EXT=1
to skip compilation entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("AMBLE_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext = Extension(
            "amble.sim._kernel",
            ["src/amble/sim/_kernel.pyx"],
            extra_compile_args=["-O3"],
            optional=True,
        )
        ext_modules = cythonize([ext], language_level="3")
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
