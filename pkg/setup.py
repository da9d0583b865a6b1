"""Optional compiled kernel core.

The package is pure Python out of the box; build the Cython core with

    python setup.py build_ext --inplace

(needs cython + a C compiler). When the extension is absent the numpy
fallback is selected automatically at import.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "gpnn._accel.ckernels",
                ["src/gpnn/_accel/ckernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
