"""Output-directory helper shared by the scripts."""

import os
from pathlib import Path


def outdir(arg=None) -> Path:
    d = Path(arg or os.environ.get("CARBONSCHED_OUTDIR") or "results")
    d.mkdir(parents=True, exist_ok=True)
    return d
