#!/usr/bin/env python3
import os
import sys
from pathlib import Path

sys.path.append(str(Path(__file__).parent))

# BLAS pools read these once, before numpy is first imported
_threads = os.environ.get("QFLOW_THREADS")
if _threads:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, _threads)

from cli.qflow_cli import entrypoint  # noqa: E402

if __name__ == "__main__":
    entrypoint()
