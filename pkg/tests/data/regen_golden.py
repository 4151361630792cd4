"""Regenerate the golden end-to-end outputs from the checked-in synthetic world.

Run from the repository root after a deliberate, verified change to the
pipeline:  python tests/data/regen_golden.py
"""

import os
import shutil
import sys
import tempfile
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

from golden import GOLDEN_FILES, run_pipeline  # noqa: E402

with tempfile.TemporaryDirectory() as tmp:
    shutil.copytree(HERE / "world", Path(tmp) / "world")
    cwd = os.getcwd()
    os.chdir(tmp)
    try:
        run_pipeline()
    finally:
        os.chdir(cwd)
    for name in GOLDEN_FILES:
        shutil.copy(Path(tmp) / name, HERE / "golden" / name)
        print("wrote", HERE / "golden" / name)
