"""Build script. The compiled kernel is optional: if Cython or a C compiler is
unavailable the package installs without it and falls back to the numpy
implementation at import time."""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "scoutgame._kernels._td_cython",
                ["src/scoutgame/_kernels/_td_cython.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
