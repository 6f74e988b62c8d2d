"""Sweep result rows and their CSV serialization.

The sweep CSV is the authoritative artifact.  Header:

    problem,noise,cond,method,accelerated,m,alpha0,seed,k_to_eps,samples_to_eps,final_gap,status

Floats are written with 17 significant digits so a round-trip reproduces
the table exactly; a run that never reaches epsilon leaves k_to_eps and
samples_to_eps empty.  Rows are sorted by all key columns before writing,
making the file a pure function of (config, master seed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

CSV_HEADER = [
    "problem", "noise", "cond", "method", "accelerated", "m", "alpha0",
    "seed", "k_to_eps", "samples_to_eps", "final_gap", "status",
]

KEY_COLUMNS = ["problem", "noise", "cond", "method", "accelerated", "m",
               "alpha0", "seed"]


@dataclass
class CellResult:
    problem: str
    noise: str
    cond: float
    method: str
    accelerated: bool
    m: int
    alpha0: float
    seed: int
    k_to_eps: int | None
    samples_to_eps: int | None
    final_gap: float
    status: str

    def sort_key(self):
        return (self.problem, self.noise, self.cond, self.method,
                self.accelerated, self.m, self.alpha0, self.seed)

    def to_row(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(results, path):
    rows = sorted(results, key=lambda r: r.sort_key())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow([_fmt(getattr(r, col)) for col in CSV_HEADER])


def read_csv(path):
    """Round-trip reader; returns CellResult rows."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected CSV header: {reader.fieldnames}")
        for rec in reader:
            out.append(CellResult(
                problem=rec["problem"],
                noise=rec["noise"],
                cond=float(rec["cond"]),
                method=rec["method"],
                accelerated=rec["accelerated"] == "true",
                m=int(rec["m"]),
                alpha0=float(rec["alpha0"]),
                seed=int(rec["seed"]),
                k_to_eps=int(rec["k_to_eps"]) if rec["k_to_eps"] else None,
                samples_to_eps=(int(rec["samples_to_eps"])
                                if rec["samples_to_eps"] else None),
                final_gap=float(rec["final_gap"]),
                status=rec["status"],
            ))
    return out


def rows_as_dicts(results, accelerated: bool | None = None):
    """Plain-dict view for the analysis summarizers, optionally filtered by
    the accelerated flag."""
    out = []
    for r in results:
        if accelerated is not None and r.accelerated != accelerated:
            continue
        out.append(r.to_row())
    return out


def write_profile_csv(curves, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "r", "fraction"])
        for curve in curves:
            for r, frac in zip(curve.r, curve.fraction):
                writer.writerow([curve.method, _fmt(float(r)), _fmt(float(frac))])


def write_speedup_csv(table, method, path, units="samples"):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "units", "m", "speedup"])
        for m in sorted(table):
            writer.writerow([method, units, m, _fmt(float(table[m]))])
