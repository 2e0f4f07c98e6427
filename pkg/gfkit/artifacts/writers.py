from pathlib import Path

import logfire
import pandas as pd
from pydantic import BaseModel

from gfkit.models.trace import SimulationTrace


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    """Comma-separated with a header row; floats keep their shortest round-trip form."""

    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logfire.debug(f"Wrote {path}", rows=len(frame))

    return path


def write_model(model: BaseModel, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logfire.debug(f"Wrote {path}")

    return path


def write_snapshots(trace: SimulationTrace, directory: Path) -> Path:
    """One CSV per stored snapshot plus an index of their times."""

    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, snapshot in enumerate(trace.snapshots):
        name = f"snapshot_{i:04d}.csv"
        snapshot.to_frame().to_csv(directory / name, index=False)
        names.append(name)

    index = pd.DataFrame({"t": trace.snapshot_times, "file": names})
    return write_frame(index, directory / "index.csv")
