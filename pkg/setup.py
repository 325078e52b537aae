"""Build the optional Cython spline kernel.

The package works without it: ``gamlsskit._kernels`` falls back to a
pure-Python implementation when the compiled module is missing.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("GAMLSSKIT_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:  # pragma: no cover - cython absent
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "gamlsskit._spline_core",
                    ["src/gamlsskit/_spline_core.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
