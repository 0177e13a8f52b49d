"""Build script for the optional compiled risk-set kernels.

The package is fully functional without the extension (a numpy fallback is
selected at import time); building it just makes the inner likelihood loops
faster.  ``pip install -e . --no-build-isolation`` compiles it in place.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "coxsieve._riskset_cy",
        sources=["src/coxsieve/_riskset_cy.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        language_level=3,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
)
