"""Build script: compiles the optional Cython core.

The compiled extension accelerates Gram-matrix assembly and farthest-point
sampling. If the build fails (no compiler, no Cython), the package falls
back to the pure-numpy backend at import time, so the extension is
strictly optional.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Swallow extension build failures; the numpy backend covers them."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: compiled core skipped ({exc})", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(
                f"warning: building {ext.name} failed ({exc}); "
                "falling back to the numpy backend",
                file=sys.stderr,
            )


def _extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "twostage_gp._backend._core",
        ["src/twostage_gp/_backend/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
