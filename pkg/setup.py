"""Build script: compiles the optional fast-path extension.

The package is fully functional without the extension (a pure-Python
implementation of the same kernels is selected at import time), so a
failing C build degrades to the slow path instead of aborting the
install.
"""

import sys

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:  # pure-Python install
    ext_modules = []
else:
    extensions = [
        Extension(
            "gsatnet._speedups",
            ["src/gsatnet/_speedups.pyx"],
            include_dirs=[numpy.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ]
    try:
        ext_modules = cythonize(extensions, language_level=3)
    except Exception as exc:  # noqa: BLE001
        print(f"warning: skipping fast-path extension ({exc})", file=sys.stderr)
        ext_modules = []

setup(ext_modules=ext_modules)
