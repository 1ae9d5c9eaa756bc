import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled kernels are optional: the package falls back to the numpy
# implementation when the extension is missing (see lieopt.backend).
ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "lieopt.backend._core",
                sources=["src/lieopt/backend/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)
