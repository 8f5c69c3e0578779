"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure numpy/Python fallback is
selected at import time); building it makes the PRNG stream generation and
the Jacobi SVD sweeps roughly an order of magnitude faster.
"""

from setuptools import Extension, setup

import numpy as np
from Cython.Build import cythonize

ext_modules = [
    Extension(
        "robustae._kernels._core",
        ["src/robustae/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(ext_modules, language_level=3))
