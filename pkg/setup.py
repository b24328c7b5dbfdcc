"""Build script for the optional compiled geometry kernels.

The package works without the extension (a NumPy fallback is selected at
import time); building it just makes the refinement hot loops faster.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SPECMESH_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "specmesh.kernels._geomfast",
                    ["src/specmesh/kernels/_geomfast.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
