import concurrent.futures as cf
import itertools
from pathlib import Path

import logfire
import pandas as pd

from gfkit.artifacts.writers import write_frame
from gfkit.errors import GfkitError, ScenarioError
from gfkit.models.scenario import Scenario
from gfkit.pipelines.run import run_scenario

RESULT_COLUMNS = ["status", "error", "lambda", "sigma", "goodness", "conservation_drift"]


def parse_ranges(params: list[str]) -> dict[str, list[str]]:
    """`section.key=v1,v2,...` → {section.key: [v1, v2, ...]}, in argument order."""

    ranges: dict[str, list[str]] = {}
    for param in params:
        key, sep, values = param.partition("=")
        key = key.strip()
        if not sep or "." not in key:
            raise ScenarioError(f"Sweep parameter {param!r} must look like section.key=v1,v2.")
        ranges[key] = [value.strip() for value in values.split(",") if value.strip()]

    return ranges


def sweep_points(ranges: dict[str, list[str]]) -> list[dict[str, str]]:
    keys = list(ranges)
    return [dict(zip(keys, values, strict=True)) for values in itertools.product(*ranges.values())]


def _run_point(template: Path, overrides: dict[str, str], out: Path) -> dict[str, str | float]:
    """One sweep row. Failures are recorded in the row instead of propagating."""

    row: dict[str, str | float] = {"status": "ok", "error": ""}
    try:
        scenario = Scenario.from_file(template, overrides)
        summary = run_scenario(scenario, out, oracle=False)
    except (GfkitError, ValueError) as e:
        return row | {"status": "failed", "error": f"{type(e).__name__}: {e}"}

    return row | {
        "lambda": summary.lam,
        "sigma": summary.sigma,
        "goodness": summary.goodness,
        "conservation_drift": summary.conservation_drift,
    }


def run_sweep(template: Path, params: list[str], out: Path, jobs: int = 1) -> pd.DataFrame:
    """
    Run the template once per point of the Cartesian product of the ranges.

    Rows follow the product order whatever the completion order; a failed point keeps its row
    with status "failed" and the error text.
    """

    ranges = parse_ranges(params)
    points = sweep_points(ranges)
    columns = ["point", *ranges, *RESULT_COLUMNS]
    out.mkdir(parents=True, exist_ok=True)

    with logfire.span(f"Sweep of {template} over {len(points)} points with {jobs} jobs"):
        rows = []
        if points:
            with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [
                    pool.submit(_run_point, template, overrides, out / f"point_{i:04d}")
                    for i, overrides in enumerate(points)
                ]
                for i, (overrides, future) in enumerate(zip(points, futures, strict=True)):
                    result = future.result()
                    if result["status"] != "ok":
                        logfire.warning(f"Sweep point {i} failed: {result['error']}", **overrides)
                    rows.append({"point": i, **overrides, **result})

        frame = pd.DataFrame(rows, columns=columns)
        write_frame(frame, out / "sweep.csv")

    return frame
