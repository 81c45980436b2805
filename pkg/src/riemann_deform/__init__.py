"""Numerical Riemann-Hilbert problems for curvature-preserving surface deformations."""
from __future__ import annotations

import os
import sys
from pathlib import Path

__version__ = "0.1.0"


def _locate_mkl():
    # pypardiso needs libmkl_rt; wheels from the mkl package install it under <prefix>/lib
    if "PYPARDISO_MKL_RT" in os.environ:
        return
    for base in (sys.prefix, sys.base_prefix, "/usr/local", "/usr"):
        for cand in sorted(Path(base, "lib").glob("libmkl_rt.so*")):
            os.environ["PYPARDISO_MKL_RT"] = str(cand)
            return


_locate_mkl()
