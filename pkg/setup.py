import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the numpy fallback is used at runtime
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "prosim._kernels",
                ["src/prosim/_kernels.pyx"],
                include_dirs=[np.get_include()],
                library_dirs=[os.path.join(os.path.dirname(np.__file__), "random", "lib")],
                libraries=["npyrandom"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
