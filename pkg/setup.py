"""Build script: compiles the optional fast-kernel extension.

The extension is a pure optimization; if Cython or a C compiler is missing
the install proceeds and the package falls back to the numpy kernels.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """build_ext that downgrades compile failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - depends on toolchain
            warnings.warn(f"fast kernels not built ({exc}); using numpy backend")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - depends on toolchain
            warnings.warn(f"fast kernels not built ({exc}); using numpy backend")


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover - depends on toolchain
        warnings.warn("Cython unavailable; using numpy backend")
        return []
    ext = Extension(
        "mixroute.kernels._fast",
        ["src/mixroute/kernels/_fast.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
