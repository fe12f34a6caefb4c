"""Build the optional compiled kernels.

The package works without them: ``glvortex.kernels`` falls back to the
pure-Python implementations when the extension is missing.
"""
from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "glvortex._kernels",
                ["src/glvortex/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": 3},
    )
except ImportError:  # no Cython at build time: pure-Python fallback only
    pass

setup(ext_modules=ext_modules)
