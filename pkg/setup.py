"""Build script: compiles the optional C++ sampling kernel.

If Cython or a compiler is missing the package still installs and the
pure-Python kernel is used.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("PERFECTSIM_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "perfectsim._ckernel",
                    ["src/perfectsim/_ckernel.pyx"],
                    include_dirs=[numpy.get_include()],
                    language="c++",
                    extra_compile_args=["-O2", "-ffp-contract=off", "-std=c++14"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
