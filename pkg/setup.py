"""Build script: compiles the optional accelerator extension when Cython is available.

The package is fully functional without the extension (pure numpy kernels are
selected at import time); `pip install .` on a box without a C toolchain still
works because the extension is skipped rather than required.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "cuffbench._accel",
                ["src/cuffbench/_accel.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
