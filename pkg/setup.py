import os

import numpy
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("ECOLM_SKIP_EXT") != "1":
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "ecolm._kernels._ckern",
                ["src/ecolm/_kernels/_ckern.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)
