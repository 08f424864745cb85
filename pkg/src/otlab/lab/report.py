"""Collect the CSV outputs of a run directory into plots and summary tables."""

import math
from collections import defaultdict
from pathlib import Path

from ..errors import NothingToReportError
from . import svg
from .runner import read_csv, write_csv, write_json


def _float(s):
    try:
        return float(s)
    except (TypeError, ValueError):
        return float("nan")


def _label_of(path, stem):
    name = path.stem
    return name[len(stem) + 1:] if name.startswith(stem + "_") else (name if name != stem else "")


def observed_orders(spacings, values):
    """``log(|v_i - v_{i+1}| / |v_{i+1} - v_{i+2}|) / log(s_i / s_{i+1})`` per consecutive triple."""
    out = []
    for i in range(len(values) - 2):
        d1 = abs(values[i] - values[i + 1])
        d2 = abs(values[i + 1] - values[i + 2])
        r = spacings[i] / spacings[i + 1]
        if d1 > 0 and d2 > 0 and r > 1:
            out.append(math.log(d1 / d2) / math.log(r))
        else:
            out.append(float("nan"))
    return out


def _decay_plot(files):
    series = []
    for f in files:
        head, rows = read_csv(f)
        k, ratio = head.index("k"), head.index("ratio")
        series.append((_label_of(f, "decay") or "base", [_float(r[k]) for r in rows],
                       [_float(r[ratio]) for r in rows]))
    return svg.line_plot(series, "level-set ratio |D_k+1| / |D_k|", "k", "ratio")


def _w2p_outputs(path, report_dir):
    head, rows = read_csv(path)
    col = {h: i for i, h in enumerate(head)}
    by = defaultdict(list)
    for r in rows:
        by[(r[col["label"]], r[col["resolution"]])].append(
            (_float(r[col["p"]]), _float(r[col["direct"]])))
    series = [(f"{lab + ' ' if lab else ''}n={res}", [p for p, _ in v], [d for _, d in v])
              for (lab, res), v in sorted(by.items(), key=lambda kv: (kv[0][0], int(kv[0][1])))]
    (report_dir / "w2p_vs_p.svg").write_text(
        svg.line_plot(series, "W2p integral of the Hessian norm", "p", "integral", log_y=True),
        encoding="utf-8")
    conv = defaultdict(list)
    for r in rows:
        conv[(r[col["label"]], _float(r[col["p"]]))].append(
            (_float(r[col["spacing"]]), _float(r[col["direct"]]), r[col["resolution"]]))
    out = []
    for (lab, p), v in sorted(conv.items()):
        v.sort(key=lambda t: -t[0])
        orders = observed_orders([t[0] for t in v], [t[1] for t in v])
        for i, (s, d, res) in enumerate(v):
            o = orders[i - 2] if i >= 2 else None
            out.append([lab, p, res, s, d, o])
    return write_csv(report_dir / "convergence.csv",
                     ["label", "p", "resolution", "spacing", "direct", "observed_order"], out)


def _singular_plot(path):
    head, rows = read_csv(path)
    col = {h: i for i, h in enumerate(head)}
    by = defaultdict(list)
    for r in rows:
        by[r[col["label"]]].append((_float(r[col["resolution"]]), _float(r[col["fraction"]])))
    series = [(lab or "base", [a for a, _ in v], [b for _, b in v]) for lab, v in sorted(by.items())]
    return svg.line_plot(series, "singular fraction vs resolution", "cells per side",
                         "fraction of X", log_y=True)


def _boundary_plot(files):
    series = []
    for f in files:
        head, rows = read_csv(f)
        k, s = head.index("k"), head.index("power_sum_p")
        series.append((_label_of(f, "families") or "base", [_float(r[k]) for r in rows],
                       [_float(r[s]) for r in rows]))
    return svg.line_plot(series, "boundary family power sums", "band k", "sum h^(p/2)",
                         log_y=True)


def emit_report(run_dir):
    """Write ``report/`` inside ``run_dir``; returns the list of files written.

    Raises :class:`NothingToReportError` when the directory holds no CSV
    output of an analysis subcommand.
    """
    run_dir = Path(run_dir)
    report_dir = run_dir / "report"
    csvs = sorted(p for p in run_dir.rglob("*.csv")
                  if report_dir not in p.parents and "solves" not in p.relative_to(run_dir).parts)
    if not csvs:
        raise NothingToReportError(f"no analysis CSV files under {run_dir}")
    report_dir.mkdir(parents=True, exist_ok=True)
    written = []
    index = []
    for p in csvs:
        head, rows = read_csv(p)
        index.append([str(p.relative_to(run_dir)).replace("\\", "/"), len(rows), ";".join(head)])
    written.append(write_csv(report_dir / "index.csv", ["file", "rows", "columns"], index))

    decay = [p for p in csvs if p.parent.name == "decay"]
    if decay:
        (report_dir / "decay.svg").write_text(_decay_plot(decay), encoding="utf-8")
        written.append(report_dir / "decay.svg")
    w2p = run_dir / "w2p" / "w2p.csv"
    if w2p.exists():
        written.append(_w2p_outputs(w2p, report_dir))
        written.append(report_dir / "w2p_vs_p.svg")
    sing = run_dir / "singular" / "singular.csv"
    if sing.exists():
        (report_dir / "singular.svg").write_text(_singular_plot(sing), encoding="utf-8")
        written.append(report_dir / "singular.svg")
    fam = [p for p in csvs if p.parent.name == "boundary" and p.stem.startswith("families")]
    if fam:
        (report_dir / "boundary.svg").write_text(_boundary_plot(fam), encoding="utf-8")
        written.append(report_dir / "boundary.svg")
    summary = {"run_dir": run_dir.name, "files": [r[0] for r in index],
               "rows": {r[0]: r[1] for r in index},
               "outputs": sorted(str(p.relative_to(run_dir)).replace("\\", "/") for p in written)}
    written.append(write_json(report_dir / "summary.json", summary))
    return written
