"""Vector-graphic plots and tables rendered from evaluation and analysis CSVs.

Output is byte-stable for identical inputs: SVG ids are salted with a fixed
string and the creation date is left out.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RC = {"svg.hashsalt": "qaspan", "svg.fonttype": "none", "font.size": 9}
_META = {"Date": None, "Creator": "qaspan"}


class ReportError(ValueError):
    pass


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _require(rows: list[dict], columns, path) -> None:
    if rows and not set(columns) <= set(rows[0]):
        raise ReportError(f"{path}: expected columns {sorted(columns)}, got {sorted(rows[0])}")


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def plot_roc(rows: list[dict], level: str, path: Path) -> Path:
    curves = defaultdict(list)
    for r in rows:
        if r["level"] == level:
            curves[r["system"]].append((float(r["fpr"]), float(r["tpr"])))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        for name in sorted(curves):
            xs, ys = zip(*curves[name])
            ax.plot(xs, ys, label=name, drawstyle="default")
        ax.plot([0, 1], [0, 1], color="0.7", linestyle=":", linewidth=0.8)
        ax.set(xlim=(0, 1), ylim=(0, 1.01), xlabel="false positive rate", ylabel="true positive rate",
               title=f"ROC ({level} level)")
        if curves:
            ax.legend(loc="lower right", frameon=False)
        return _save(fig, path)


def plot_sweep(rows: list[dict], level: str, path: Path) -> Path:
    """Precision against recall over each system's threshold sweep."""
    curves = defaultdict(list)
    for r in rows:
        if r["level"] == level:
            curves[r["system"]].append((float(r["recall"]), float(r["precision"])))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        for name in sorted(curves):
            xs, ys = zip(*curves[name])
            ax.plot(xs, ys, marker=".", markersize=3, label=name)
        ax.set(xlim=(0, 1.01), ylim=(0, 1.01), xlabel="recall (non-factual)", ylabel="precision",
               title=f"threshold sweep ({level} level)")
        if curves:
            ax.legend(loc="lower left", frameon=False)
        return _save(fig, path)


def render_table(rows: list[dict], title: str, path: Path) -> Path:
    """One table per page; an empty table gets a placeholder note."""
    with plt.rc_context(_RC):
        live = [r for r in rows if set(r) != {"note"}]
        if not live:
            note = rows[0]["note"] if rows else "no rows"
            fig, ax = plt.subplots(figsize=(5, 1.2))
            ax.axis("off")
            ax.text(0.5, 0.5, f"{title}: {note}", ha="center", va="center")
            return _save(fig, path)
        cols = list(live[0].keys())
        fig, ax = plt.subplots(figsize=(max(4.0, 1.3 * len(cols)), 0.6 + 0.3 * (len(live) + 1)))
        ax.axis("off")
        ax.set_title(title)
        tab = ax.table(cellText=[[r.get(c, "") for c in cols] for r in live], colLabels=cols, loc="center")
        tab.auto_set_font_size(False)
        tab.set_fontsize(7)
        return _save(fig, path)


def render_report(eval_dir, analyze_dir, outdir) -> list[Path]:
    eval_dir, outdir = Path(eval_dir), Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    roc_path = eval_dir / "roc.csv"
    roc = read_csv(roc_path)
    _require(roc, {"level", "system", "fpr", "tpr"}, roc_path)
    sweep_path = eval_dir / "sweep.csv"
    sweep = read_csv(sweep_path) if sweep_path.exists() else []
    _require(sweep, {"level", "system", "precision", "recall"}, sweep_path)
    written = []
    levels = sorted({r["level"] for r in roc}) or ["span"]
    for level in levels:
        written.append(plot_roc(roc, level, outdir / f"roc_{level}.svg"))
        written.append(plot_sweep(sweep, level, outdir / f"sweep_{level}.svg"))
    tables = [eval_dir / "bootstrap.csv"]
    if analyze_dir is not None:
        tables += sorted(Path(analyze_dir).glob("*.csv"))
    for p in tables:
        if not p.exists():
            continue
        rows = read_csv(p)
        (outdir / p.name).write_bytes(p.read_bytes())
        written.append(outdir / p.name)
        written.append(render_table(rows, p.stem.replace("_", " "), outdir / f"{p.stem}.svg"))
    return written
