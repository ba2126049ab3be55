"""Build script for the compiled kernel extension.

The package works without the extension (a pure-numpy backend is selected at
import time), so the build is best-effort: set RELIGHTKIT_NO_EXT=1 to skip it
explicitly, and any toolchain failure degrades to a source-only install.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("RELIGHTKIT_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "relightkit.nn._ckernels",
                    ["src/relightkit/nn/_ckernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
