"""Build script: compiles the optional Cython step kernel.

The compiled extension is an accelerator only; if Cython or a C compiler is
missing the install falls back to the pure-numpy kernel selected at import.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Swallow compiler failures so the pure-Python install still works."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - depends on toolchain
            print(f"warning: compiled kernel skipped ({exc}); pure fallback in use")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover
            print(f"warning: building {ext.name} failed ({exc}); pure fallback in use")


def extensions():
    import os
    if not os.path.exists("src/lodisc/_kernel/_fast.pyx"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover
        return []
    ext = Extension(
        "lodisc._kernel._fast",
        sources=["src/lodisc/_kernel/_fast.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
