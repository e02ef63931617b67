from setuptools import setup
from setuptools.extension import Extension

import numpy as np

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compositing kernels are optional: without Cython the package falls
# back to the numpy implementation selected in splatfuse.kernels.
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "splatfuse.kernels._compositing",
                ["src/splatfuse/kernels/_compositing.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )
else:
    extensions = []

setup(
    ext_modules=extensions,
    include_dirs=[np.get_include()],
)
