"""Build script: compiles the simplex pivot kernel if Cython and a C compiler
are available, otherwise installs pure-Python only (the package falls back at
import time)."""

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    # A missing compiler must not block installation; the numpy kernel
    # is a complete functional substitute.
    def run(self):
        try:
            build_ext.run(self)
        except Exception as exc:
            print(f"warning: extension build skipped ({exc}); using pure-Python kernel")

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except Exception as exc:
            print(f"warning: {ext.name} build failed ({exc}); using pure-Python kernel")


ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/convexhedge/_simplex_core.pyx"],
        language_level=3,
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
except ImportError as exc:
    print(f"warning: cython unavailable ({exc}); using pure-Python kernel")

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
