from Cython.Build import cythonize
from setuptools import Extension, setup

setup(
    ext_modules=cythonize(
        [Extension("hashgraph._kernels", ["src/hashgraph/_kernels.pyx"])],
        language_level=3,
    ),
)
