"""Input, template and run directories of a lab checkout."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Final

PROJECT_ROOT: Final[Path] = Path.cwd()
RUNS_ENV: Final[str] = "SCALARFLAT_HOME"


def charts_dir() -> Path:
    return PROJECT_ROOT / "charts"


def functions_dir() -> Path:
    return PROJECT_ROOT / "functions"


def runs_dir() -> Path:
    """Default output root; ``$SCALARFLAT_HOME/runs`` when the variable is set."""
    home = os.environ.get(RUNS_ENV)
    if home:
        return Path(home).expanduser().resolve() / "runs"
    return PROJECT_ROOT / "runs"


def templates_dir() -> Path:
    return PROJECT_ROOT / "templates"
