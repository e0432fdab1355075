"""Build script for the optional compiled kernels.

The package works without the extension (a NumPy fallback is selected at
import time); Cython and a C compiler are only needed for the fast path.
-ffp-contract=off keeps the compiled kernels bit-identical to the NumPy
backend by forbidding FMA contraction in the inner loops.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    extensions = [
        Extension(
            "posemorph._kernels._native",
            ["src/posemorph/_kernels/_native.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3", "-ffp-contract=off"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ]
    ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
