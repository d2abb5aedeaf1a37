"""Build script for the optional compiled kernels.

The package is fully functional without the extension: ``slopesynth._kernels``
falls back to a numpy implementation at import time.  The extension is
therefore built best-effort -- a missing compiler or Cython downgrades the
install instead of failing it.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the kernel extension if possible, warn and continue if not."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            "WARNING: building slopesynth._kernels._core failed (%s); "
            "the pure-Python kernels will be used instead." % exc,
            file=sys.stderr,
        )


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        print(
            "WARNING: %s; skipping compiled kernels." % exc, file=sys.stderr
        )
        return []
    ext = Extension(
        "slopesynth._kernels._core",
        ["src/slopesynth/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
