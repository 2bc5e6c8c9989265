"""Build script: compiles the optional fast conv kernels.

The extension is optional; if the build fails (no compiler, no Cython),
the package falls back to the pure-numpy kernels at import time.
"""
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: skipping fast kernels ({exc}); "
                  "pure-python fallback will be used", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: failed to build {ext.name} ({exc}); "
                  "pure-python fallback will be used", file=sys.stderr)


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "declick.nn._fastconv",
        ["src/declick/nn/_fastconv.pyx"],
        extra_compile_args=[
            "-O3", "-march=native", "-funroll-loops",
            "-ffast-math", "-mprefer-vector-width=512",
        ],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
