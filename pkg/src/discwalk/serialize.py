"""JSON instance/report files and CSV trace emission.

Instances and reports are JSON (human-auditable, schema-checked on load);
dense traces go to CSV.  Serialization is canonical — sorted keys, no
whitespace padding — so identical runs produce byte-identical files, with
wall-clock timing isolated in its own top-level key.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .instances import COLUMN_NORM_EPS, InputError, Instance, MatrixInstance, SetSystemInstance
from .walk import FullTrace, RunReport, ScalarTrace

INSTANCE_FORMAT = "discwalk-instance"
REPORT_FORMAT = "discwalk-report"

#: Column norms up to this slack are accepted on load; anything in
#: (1, 1 + this] is renormalized down to exactly 1.
LOAD_NORM_SLACK = 1e-9


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":")) + "\n"


def instance_to_dict(instance: Instance, meta: Optional[dict] = None) -> dict:
    doc = {"format": INSTANCE_FORMAT, "n": instance.n, "meta": meta or {}}
    if isinstance(instance, SetSystemInstance):
        doc["kind"] = "set_system"
        doc["sets"] = [list(s) for s in instance.sets]
    else:
        doc["kind"] = "matrix"
        doc["rows"] = instance.rows.tolist()
    return doc


def instance_from_dict(doc: dict) -> Instance:
    if not isinstance(doc, dict) or doc.get("format") != INSTANCE_FORMAT:
        raise InputError("not a discwalk instance document")
    kind = doc.get("kind")
    n = doc.get("n")
    if not isinstance(n, int) or n < 0:
        raise InputError("instance document needs a non-negative integer n")
    if kind == "set_system":
        sets = doc.get("sets")
        if not isinstance(sets, list):
            raise InputError("set_system document needs a 'sets' list")
        return SetSystemInstance(n=n, sets=tuple(tuple(s) for s in sets))
    if kind == "matrix":
        rows = np.asarray(doc.get("rows"), dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != n:
            raise InputError("matrix document rows must be m x n")
        norms = np.sqrt((rows * rows).sum(axis=0)) if rows.size else np.zeros(n)
        if norms.size and float(norms.max(initial=0.0)) > 1.0 + LOAD_NORM_SLACK:
            raise InputError("matrix columns must have norm at most 1 (+1e-9)")
        over = norms > 1.0 + COLUMN_NORM_EPS
        if over.any():
            rows = rows.copy()
            rows[:, over] /= norms[over][None, :]
        return MatrixInstance(rows=rows)
    raise InputError(f"unknown instance kind {kind!r}")


def save_instance(instance: Instance, path: Union[str, Path],
                  meta: Optional[dict] = None) -> None:
    Path(path).write_text(canonical_json(instance_to_dict(instance, meta)))


def load_instance(path: Union[str, Path]) -> Instance:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read instance file: {exc}") from exc
    return instance_from_dict(doc)


def report_to_dict(report: RunReport, timing: Optional[dict] = None) -> dict:
    doc = {"format": REPORT_FORMAT}
    doc.update(report.to_dict())
    doc["timing"] = timing or {}
    return doc


def save_report(report: RunReport, path: Union[str, Path],
                timing: Optional[dict] = None) -> None:
    Path(path).write_text(canonical_json(report_to_dict(report, timing)))


def load_report(path: Union[str, Path]) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read report file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != REPORT_FORMAT:
        raise InputError("not a discwalk report document")
    return doc


def strip_timing(doc: dict) -> dict:
    out = dict(doc)
    out.pop("timing", None)
    return out


def write_scalar_trace_csv(trace: ScalarTrace, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "objective", "G_k", "frozen_count"])
        for i in range(len(trace.k)):
            writer.writerow([trace.k[i], repr(trace.objective[i]),
                             repr(trace.potential[i]), trace.frozen_count[i]])


def write_snapshot_csv(trace: ScalarTrace, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if trace.snapshots:
            m = len(trace.snapshots[0][1])
            writer.writerow(["k"] + [f"D_{j}" for j in range(m)])
            for k, per_row in trace.snapshots:
                writer.writerow([k] + [repr(float(v)) for v in per_row])


def write_step_jsonl(trace: ScalarTrace, path: Union[str, Path],
                     snapshot_every: int = 0) -> None:
    """One JSON object per step: k, objective, frozen count, potential,
    plus the per-row discrepancy snapshot whenever one was recorded."""
    snaps = {k: per_row for k, per_row in trace.snapshots}
    with open(path, "w") as fh:
        for i in range(len(trace.k)):
            k = trace.k[i]
            rec = {"k": k, "objective": trace.objective[i],
                   "frozen_count": trace.frozen_count[i],
                   "G_k": trace.potential[i]}
            if k in snaps:
                rec["per_row_discrepancy"] = [float(v) for v in snaps[k]]
            fh.write(json.dumps(_plain(rec), sort_keys=True) + "\n")


def write_ledger_csv(ledgers: Sequence, path: Union[str, Path]) -> None:
    """Ledger columns D/E/Q/L/Qp/Z per tracked row, one block per row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["k"]
        for led in ledgers:
            r = led.row
            header += [f"D_{r}", f"E_{r}", f"Q_{r}", f"L_{r}", f"Qp_{r}", f"Z_{r}"]
        writer.writerow(header)
        if not ledgers:
            return
        steps = ledgers[0].k
        for i, k in enumerate(steps):
            row = [int(k)]
            for led in ledgers:
                row += [repr(float(led.disc[i])), repr(float(led.energy[i])),
                        repr(float(led.quad[i])), repr(float(led.lin[i])),
                        repr(float(led.quad_pred[i])), repr(float(led.centered[i]))]
            writer.writerow(row)


def write_tail_csv(table, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "exceed_frequency", "bound", "exceedances", "trials"])
        for row in table.to_rows():
            writer.writerow([repr(row["lam"]), repr(row["exceed_frequency"]),
                             repr(row["bound"]), row["exceedances"], row["trials"]])
