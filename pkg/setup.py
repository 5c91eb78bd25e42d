import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# MATREC_NO_EXT=1 skips the compiled kernels; the package then runs on the NumPy fallback.
if os.environ.get("MATREC_NO_EXT"):
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "matrec.kernels._core",
                ["src/matrec/kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
