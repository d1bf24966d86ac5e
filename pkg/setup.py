import os

from setuptools import setup

ext_modules = []
if not os.environ.get("PRIVSPRT_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "privsprt._kernels",
                    ["src/privsprt/_kernels.pyx"],
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # no Cython: the package runs on the pure-Python loops
        ext_modules = []

setup(ext_modules=ext_modules)
