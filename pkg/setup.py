import numpy as np
from setuptools import setup

# The compiled kernels are optional: the package falls back to the numpy
# reference implementation when the extension is missing or fails to build.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/wwdamp/_kernels/_core.pyx",
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(
    ext_modules=ext_modules,
    include_dirs=[np.get_include()],
)
