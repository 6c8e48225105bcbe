# Builds the compiled kernel extension (xytomo.kernels._native).
#
# The extension is optional at runtime: if it is absent or fails to import,
# the package falls back to the pure-numpy kernels in xytomo/kernels/pyref.py.
# Set XYTOMO_PURE_PYTHON=1 to skip compiling it entirely. Host-specific
# vectorization (-march=native) is probed and used when the compiler accepts
# it; set XYTOMO_PORTABLE=1 to disable the probe, or pass extra flags via
# XYTOMO_BUILD_CFLAGS.
#
#   pip install -e . --no-build-isolation

import os
import subprocess
import tempfile

from setuptools import Extension, setup


def compiler_accepts(flag):
    cc = os.environ.get("CC", "cc")
    with tempfile.TemporaryDirectory() as tmp:
        src = os.path.join(tmp, "probe.c")
        with open(src, "w") as fh:
            fh.write("int main(void) { return 0; }\n")
        try:
            result = subprocess.run(
                [cc, flag, "-o", os.path.join(tmp, "probe"), src],
                capture_output=True, timeout=30)
        except (OSError, subprocess.TimeoutExpired):
            return False
        return result.returncode == 0


ext_modules = []
if os.environ.get("XYTOMO_PURE_PYTHON") != "1":
    import numpy as np
    from Cython.Build import cythonize

    compile_args = ["-O3", "-fopenmp", "-funroll-loops"]
    link_args = ["-fopenmp"]
    if os.environ.get("XYTOMO_PORTABLE") != "1" and compiler_accepts("-march=native"):
        compile_args.append("-march=native")
    extra = os.environ.get("XYTOMO_BUILD_CFLAGS")
    if extra:
        compile_args += extra.split()

    ext = Extension(
        "xytomo.kernels._native",
        sources=["src/xytomo/kernels/_native.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=compile_args,
        extra_link_args=link_args,
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize(
        [ext],
        language_level=3,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
