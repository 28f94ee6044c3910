"""Build script for the optional compiled kernel.

The package is pure Python plus one Cython extension holding the fused
penalty objective/gradient kernel used by the benchmark solvers. If the
extension fails to build or import, edgeoco falls back to the vectorized
numpy implementation at import time, so the build is best-effort.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "edgeoco._kernels._speedups",
        ["src/edgeoco/_kernels/_speedups.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(extensions, language_level=3),
)
