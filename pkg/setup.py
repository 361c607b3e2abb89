import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - sdist without Cython
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("PSVI_NO_EXTENSION"):
    ext_modules = cythonize(
        [
            Extension(
                name="psvi._kernels",
                sources=["src/psvi/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
