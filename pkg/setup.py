"""Build script for the compiled walk kernel.

The package works without the extension (a pure-Python kernel is used as a
fallback), so the build degrades gracefully when Cython or a compiler is
unavailable.
"""

from setuptools import setup
from setuptools.extension import Extension

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "grfgp._walk_cy",
                ["src/grfgp/_walk_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
    setup(ext_modules=extensions)
else:
    setup()
