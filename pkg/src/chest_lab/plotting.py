"""SVG line charts of experiment CSVs (error versus number of virtual paths)."""

import csv
from pathlib import Path as FsPath

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import SchemaError  # noqa: E402

BIAS_KEYS = {"scenario", "p"}
TRADEOFF_KEYS = {"S", "snr_db", "p", "method"}
ERROR_COLUMNS = ("rel_error", "mean_rel_error")


def _read(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: missing header row")
        return list(reader.fieldnames), list(reader)


def _classify(path, header):
    cols = set(header)
    err = next((c for c in ERROR_COLUMNS if c in cols), None)
    if err is None:
        raise SchemaError(f"{path}: no error column (expected one of {', '.join(ERROR_COLUMNS)})")
    if TRADEOFF_KEYS <= cols:
        return "tradeoff", err
    if BIAS_KEYS <= cols:
        return "bias", err
    missing = sorted(BIAS_KEYS - cols) if "scenario" in cols else sorted(TRADEOFF_KEYS - cols)
    raise SchemaError(f"{path}: missing columns {missing}")


def _mean_series(rows, key, err):
    """{label: ([p...], [mean error...])}, averaging over trials."""
    acc = {}
    for r in rows:
        acc.setdefault(key(r), {}).setdefault(int(r["p"]), []).append(float(r[err]))
    out = {}
    for label, by_p in acc.items():
        ps = sorted(by_p)
        out[label] = (ps, [sum(by_p[p]) / len(by_p[p]) for p in ps])
    return out


def _draw(series, title, out_path):
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (ps, ys) in series.items():
        ax.plot(ps, ys, marker=".", label=label)
    ax.set_xlabel("number of virtual paths p")
    ax.set_ylabel("relative error")
    ax.set_title(title)
    if series:
        ax.set_yscale("log" if all(y > 0 for _, ys in series.values() for y in ys) else "linear")
        ax.legend(fontsize="small")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def emit_plots(csv_files, out_dir=None):
    """Render one SVG per figure analog; returns a list of (svg_path, n_series).

    Bias CSVs give one curve per scenario. Tradeoff CSVs give one chart per
    oversampling factor S with one curve per (method, SNR) pair.
    """
    written = []
    for path in csv_files:
        path = FsPath(path)
        header, rows = _read(path)
        kind, err = _classify(path, header)
        target = FsPath(out_dir) if out_dir else path.parent
        target.mkdir(parents=True, exist_ok=True)
        if kind == "bias":
            series = _mean_series(rows, lambda r: r["scenario"], err)
            svg = _draw(series, path.stem, target / f"{path.stem}.svg")
            written.append((svg, len(series)))
            continue
        by_s = {}
        for r in rows:
            by_s.setdefault(r["S"], []).append(r)
        if not by_s:
            written.append((_draw({}, path.stem, target / f"{path.stem}.svg"), 0))
        for S, sub in by_s.items():
            series = _mean_series(sub, lambda r: f"{r['method']}, SNR {r['snr_db']} dB", err)
            svg = _draw(series, f"{path.stem}, S = {S}", target / f"{path.stem}_S{S}.svg")
            written.append((svg, len(series)))
    return written
