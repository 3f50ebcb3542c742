import os

import numpy as np
from setuptools import Extension, setup

PYX = os.path.join("src", "dwb", "_core.pyx")

ext_modules = []
if os.path.exists(PYX):
    from Cython.Build import cythonize

    ext = Extension(
        "dwb._core",
        [PYX],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize(ext, language_level=3)

setup(ext_modules=ext_modules)
