import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "wordrec._kernels._ckernels",
                ["src/wordrec/_kernels/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython: the package still installs and falls back to the
    # pure-Python kernels at import time.
    extensions = []

setup(ext_modules=extensions)
