"""File formats: CSV ingestion, JSON result documents, benchmark tables.

All writers are atomic (write to a sibling temp file, then rename), and
every result document embeds the fully resolved configuration and seed so
a run can be reproduced from the document alone.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile

import numpy as np

from .estimator import FitReport
from .model import PureStates, ThetaPriorConfig
from .simplexwalk import BetaMixtureHyper, InnovationSequence

RESULT_KIND = "fit_result"
TRUTH_KIND = "ground_truth"
METRICS_KIND = "metrics"
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# Atomic primitives
# ---------------------------------------------------------------------------


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_json(path: str, doc: dict) -> None:
    _atomic_write(path, json.dumps(doc, indent=1))


def load_json(path: str) -> dict:
    with open(path) as handle:
        return json.load(handle)


# ---------------------------------------------------------------------------
# CSV series
# ---------------------------------------------------------------------------


def read_series_csv(path: str) -> tuple[np.ndarray, list[str]]:
    """Read a multivariate series: header row, then numeric rows.

    A leading time/index column is detected by strict monotonicity and
    dropped.  Malformed rows raise with their 1-based line number.
    """
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        width = len(header)
        if width == 0:
            raise ValueError(f"{path}: empty header")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ValueError(
                    f"{path}:{line_no}: expected {width} columns, found {len(row)}"
                )
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                bad = next(c for c in row if not _is_float(c))
                raise ValueError(
                    f"{path}:{line_no}: non-numeric cell {bad!r}"
                ) from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.asarray(rows)
    columns = list(header)
    if data.shape[1] >= 2:
        first = data[:, 0]
        if data.shape[0] >= 2 and np.all(np.diff(first) > 0):
            data = data[:, 1:]
            columns = columns[1:]
    return data, columns


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def write_series_csv(path: str, y: np.ndarray, columns: list[str] | None = None) -> None:
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if columns is None:
        columns = [f"y{i}" for i in range(y.shape[1])]
    lines = [",".join(columns)]
    for row in y:
        lines.append(",".join(repr(float(v)) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Result documents
# ---------------------------------------------------------------------------


def report_to_doc(report: FitReport, metrics: dict | None = None, backend: str = "") -> dict:
    return {
        "kind": RESULT_KIND,
        "version": FORMAT_VERSION,
        "seed": report.seed,
        "backend": backend,
        "config": report.config,
        "theta": {
            "means": report.theta.means.tolist(),
            "covs": report.theta.covs.tolist(),
        },
        "hyper": {
            "w": report.hyper.w.tolist(),
            "a1": report.hyper.a1.tolist(),
            "b1": report.hyper.b1.tolist(),
            "a0": report.hyper.a0,
            "b0": report.hyper.b0,
        },
        "x0": report.seq.x0.tolist(),
        "gammas": report.seq.gammas.tolist(),
        "trajectory": report.trajectory.tolist(),
        "barycenters": {
            "means": report.barycenter_means.tolist(),
            "covs": report.barycenter_covs.tolist(),
        },
        "cost_trace": list(report.cost_trace),
        "flags": report.flags,
        "metrics": metrics or {},
    }


def doc_to_report(doc: dict) -> FitReport:
    if doc.get("kind") != RESULT_KIND:
        raise ValueError(f"not a fit result document (kind={doc.get('kind')!r})")
    prior = doc["config"]["prior"]
    return FitReport(
        theta=PureStates(
            means=np.asarray(doc["theta"]["means"]),
            covs=np.asarray(doc["theta"]["covs"]),
        ),
        seq=InnovationSequence(
            x0=np.asarray(doc["x0"]), gammas=np.asarray(doc["gammas"])
        ),
        hyper=BetaMixtureHyper(
            w=np.asarray(doc["hyper"]["w"]),
            a1=np.asarray(doc["hyper"]["a1"]),
            b1=np.asarray(doc["hyper"]["b1"]),
            a0=doc["hyper"]["a0"],
            b0=doc["hyper"]["b0"],
        ),
        prior=ThetaPriorConfig(
            m0=np.asarray(prior["m0"]),
            sigma0=prior["sigma0"],
            s=prior["s"],
            t_scale=prior["t_scale"],
        ),
        trajectory=np.asarray(doc["trajectory"]),
        barycenter_means=np.asarray(doc["barycenters"]["means"]),
        barycenter_covs=np.asarray(doc["barycenters"]["covs"]),
        cost_trace=tuple(doc["cost_trace"]),
        flags=doc["flags"],
        config=doc["config"],
        seed=doc["seed"],
    )


def truth_to_doc(theta: PureStates, trajectory: np.ndarray, spec: dict) -> dict:
    return {
        "kind": TRUTH_KIND,
        "version": FORMAT_VERSION,
        "theta": {"means": theta.means.tolist(), "covs": theta.covs.tolist()},
        "trajectory": np.asarray(trajectory).tolist(),
        "spec": spec,
    }


def doc_to_truth(doc: dict) -> tuple[PureStates, np.ndarray]:
    if doc.get("kind") != TRUTH_KIND:
        raise ValueError(f"not a ground-truth document (kind={doc.get('kind')!r})")
    theta = PureStates(
        means=np.asarray(doc["theta"]["means"]), covs=np.asarray(doc["theta"]["covs"])
    )
    return theta, np.asarray(doc["trajectory"])


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


def write_states_table(path: str, trajectory: np.ndarray, per_window_w2: np.ndarray) -> None:
    """Plot-ready per-window table: t, state columns, squared-W2 fit."""
    k = trajectory.shape[1]
    header = ["t"] + [f"x{j}" for j in range(k)] + ["w2"]
    lines = [",".join(header)]
    for t in range(trajectory.shape[0]):
        cells = (
            [str(t)]
            + [repr(float(v)) for v in trajectory[t]]
            + [repr(float(per_window_w2[t]))]
        )
        lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_benchmark_table(path: str, rows: list[dict], columns: tuple[str, ...]) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in columns))
    _atomic_write(path, "\n".join(lines) + "\n")
