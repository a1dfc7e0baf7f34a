"""Per-iteration error metrics, transient-time estimation, and trace CSV IO.

The central identity: (1/n) sum_i ||x_i - x*||^2 decomposes exactly into
||xbar - x*||^2 + (1/n) sum_i ||x_i - xbar||^2, so every record carries the
optimization error of the average iterate and the consensus error of the
spread separately.
"""

import csv
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import objective
from .errors import LengthMismatch, MissingOptimum

COLUMNS = ("k", "eta", "residual", "mean_err", "consensus_err",
           "compression_err", "grad_norm_sq", "bits_cum")

_NAN = float("nan")


@dataclass
class Trace:
    """Columnar per-iteration records plus run metadata.

    data maps column name -> array over records; absent metrics are NaN.
    sd (aggregated traces only) maps float columns -> per-point sample
    standard deviation.
    """

    data: dict
    meta: dict
    sd: dict = None

    def __len__(self):
        return len(self.data["k"])


def measure(state, problem, xstar=None):
    """One metric record for the current network state.

    state needs an (n, p) iterate stack attribute X; the iteration counter,
    stepsize, compression error, and bit counter are read from it when
    present. grad_norm_sq (exact average gradient at xbar) is recorded for
    nonconvex problems, residual metrics for strongly convex ones.
    """
    x = np.asarray(getattr(state, "X", state), dtype=float)
    n = x.shape[0]
    xbar = x.mean(axis=0)
    cdiff = x - xbar
    consensus = float(np.einsum("ij,ij->", cdiff, cdiff)) / n
    if xstar is None:
        if problem.strongly_convex:
            raise MissingOptimum("strongly convex run measured without a reference optimum")
        residual = mean_err = _NAN
    else:
        rdiff = x - xstar
        residual = float(np.einsum("ij,ij->", rdiff, rdiff)) / n
        d = xbar - xstar
        mean_err = float(d @ d)
    if problem.kind == "nonconvex_logistic":
        g = objective.avg_grad(problem, xbar)
        grad_norm_sq = float(g @ g)
    else:
        grad_norm_sq = _NAN
    return {
        "k": int(getattr(state, "k", 0)),
        "eta": float(getattr(state, "eta_last", _NAN)),
        "residual": residual,
        "mean_err": mean_err,
        "consensus_err": consensus,
        "compression_err": float(getattr(state, "comp_err", _NAN)),
        "grad_norm_sq": grad_norm_sq,
        "bits_cum": float(getattr(state, "bits", _NAN)),
    }


def _trailing_mean(v, window):
    """Moving average over the trailing `window` points, partial at the start."""
    if window <= 1:
        return v.astype(float)
    c = np.concatenate(([0.0], np.cumsum(v, dtype=float)))
    idx = np.arange(len(v))
    lo = np.maximum(idx - window + 1, 0)
    return (c[idx + 1] - c[lo]) / (idx + 1 - lo)


def transient_time(dec_trace, cen_trace, window=25, rho_tol=1.2, metric=None):
    """First iteration after which the decentralized run tracks the
    centralized rate; None when never reached.

    The rate constant is self-calibrated: c is the largest residual*n*k over
    the tail half of the centralized trace, and the decentralized run must
    stay below rho_tol * c/(n k) from the returned iteration onward. Both
    residual curves are smoothed over `window` records first. For nonconvex
    traces the comparison uses running-average grad_norm_sq against
    c/sqrt(n k).
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if len(dec_trace) != len(cen_trace):
        raise LengthMismatch(f"trace lengths differ: {len(dec_trace)} vs {len(cen_trace)}")
    n = dec_trace.meta["n"]
    if metric is None:
        metric = "residual" if np.isfinite(dec_trace.data["residual"]).any() else "grad_avg"

    ks = np.asarray(dec_trace.data["k"], dtype=float)
    if metric == "residual":
        dec = _trailing_mean(dec_trace.data["residual"], window)
        cen = _trailing_mean(cen_trace.data["residual"], window)
        live = ks >= 1
        ks, dec, cen = ks[live], dec[live], cen[live]
        tail = ks >= ks[-1] / 2.0
        c = float(np.max(cen[tail] * n * ks[tail]))
        bound = rho_tol * c / (n * ks)
    else:
        g_dec = dec_trace.data["grad_norm_sq"]
        g_cen = cen_trace.data["grad_norm_sq"]
        run_dec = np.cumsum(g_dec) / np.arange(1, len(g_dec) + 1)
        run_cen = np.cumsum(g_cen) / np.arange(1, len(g_cen) + 1)
        live = ks >= 1
        ks, dec, cen = ks[live], run_dec[live], run_cen[live]
        tail = ks >= ks[-1] / 2.0
        c = float(np.max(cen[tail] * np.sqrt(n * ks[tail])))
        bound = rho_tol * c / np.sqrt(n * ks)

    ok = dec <= bound
    if ok.all():
        return int(ks[0])
    last_bad = int(np.flatnonzero(~ok)[-1])
    if last_bad == len(ks) - 1:
        return None
    return int(ks[last_bad + 1])


def aggregate(traces):
    """Pointwise mean trace with per-point sample standard deviation."""
    if not traces:
        raise ValueError("nothing to aggregate")
    length = len(traces[0])
    for t in traces[1:]:
        if len(t) != length:
            raise LengthMismatch(f"trace lengths differ: {len(t)} vs {length}")
        if t.meta.get("family_hash") != traces[0].meta.get("family_hash"):
            raise ValueError("traces come from different configs (family hash mismatch)")
    data = {"k": traces[0].data["k"].copy()}
    sd = {}
    reps = len(traces)
    for col in COLUMNS[1:]:
        stack = np.stack([t.data[col] for t in traces])
        data[col] = stack.mean(axis=0)
        spread = stack.std(axis=0, ddof=1) if reps > 1 else np.zeros(length)
        sd[col] = np.where(np.isnan(data[col]), _NAN, spread)
    meta = dict(traces[0].meta)
    meta["rep"] = None
    meta["reps"] = reps
    return Trace(data=data, meta=meta, sd=sd)


# --- CSV format ---
#
# Header comment lines: "# cedas-sim trace <version>" then "# key: value"
# metadata, followed by one csv header row and one row per record. Column
# order is COLUMNS, with "<col>_sd" columns appended for aggregated traces.
# Absent values are empty cells.

_FORMAT_LINE = "# cedas-sim trace 1"
_META_KEYS = ("config_hash", "family_hash", "algorithm", "n", "seed", "rep", "reps")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def write_trace(trace, path):
    """Write atomically (temp file + rename), so readers never see partial output."""
    cols = list(COLUMNS)
    sd_cols = [f"{c}_sd" for c in COLUMNS[1:]] if trace.sd is not None else []
    lines = [_FORMAT_LINE]
    for key in _META_KEYS:
        if key in trace.meta:
            lines.append(f"# {key}: {trace.meta[key]}")
    lines.append(",".join(cols + sd_cols))
    ks = trace.data["k"]
    for i in range(len(trace)):
        row = [str(int(ks[i]))] + [_fmt(trace.data[c][i]) for c in COLUMNS[1:]]
        row += [_fmt(trace.sd[c][i]) for c in COLUMNS[1:]] if sd_cols else []
        lines.append(",".join(row))
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write("\n".join(lines) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_trace(path):
    meta = {}
    rows = []
    header = None
    with open(path, newline="") as f:
        for line in f:
            line = line.rstrip("\n")
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, _, val = body.partition(":")
                    val = val.strip()
                    meta[key.strip()] = int(val) if val.lstrip("-").isdigit() else (None if val == "None" else val)
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(next(csv.reader([line])))
    if header is None:
        raise ValueError(f"no header row in {path}")
    raw = {name: [] for name in header}
    for row in rows:
        for name, cell in zip(header, row):
            raw[name].append(cell)
    data, sd = {}, {}
    for name, cells in raw.items():
        if name == "k":
            arr = np.array([int(c) for c in cells])
        else:
            arr = np.array([float(c) if c else _NAN for c in cells])
        if name.endswith("_sd"):
            sd[name[:-3]] = arr
        else:
            data[name] = arr
    return Trace(data=data, meta=meta, sd=sd or None)
