"""Plot-data emission: CSV tables plus rendered matplotlib figures.

Each artifact kind mirrors one of the standard report figures: the
golden-value x ADC-state heatmap, the golden-value histogram, the drift
trajectory (effective-bit means and accuracy versus cycle), and the
per-cell effective-bit map.  The CSV is the delimited record; a PNG of
the same data is rendered next to it.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

KINDS = ("heatmap", "histogram", "trajectory", "ebmap")

HEADERS = {
    "heatmap": ["golden", "state", "count"],
    "histogram": ["value", "count"],
    "trajectory": ["cycle", "mu0", "mu1", "accuracy"],
    "ebmap": ["group", "column", "eb", "bit"],
}


class PlotKindError(ValueError):
    pass


def _read_rows(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def emit_plotdata(artifact_path: str, kind: str, out_dir: str, stem: str | None = None) -> tuple[str, str]:
    """Convert a stage artifact into (csv_path, png_path) in ``out_dir``.

    The artifact may already be a CSV with the right header (it is then
    re-emitted verbatim) or, for ``heatmap``/``histogram``, a counts
    JSON.  Kind mismatches raise :class:`PlotKindError`.
    """
    if kind not in KINDS:
        raise PlotKindError(f"kind must be one of {KINDS}")
    os.makedirs(out_dir, exist_ok=True)
    stem = stem or f"{kind}"
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    png_path = os.path.join(out_dir, f"{stem}.png")

    if artifact_path.endswith(".json"):
        rows = _rows_from_json(artifact_path, kind)
    else:
        header, rows = _read_rows(artifact_path)
        if header != HEADERS[kind]:
            raise PlotKindError(
                f"artifact header {header} does not match kind {kind!r} ({HEADERS[kind]})"
            )
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADERS[kind])
        w.writerows(rows)
    _render(kind, rows, png_path)
    return csv_path, png_path


def _rows_from_json(path: str, kind: str) -> list:
    with open(path) as fh:
        data = json.load(fh)
    if kind == "histogram" and isinstance(data, list):
        return [(i, int(v)) for i, v in enumerate(data)]
    raise PlotKindError(f"cannot derive {kind!r} rows from {path}")


def _render(kind: str, rows: list, png_path: str) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    if kind == "heatmap":
        golden = np.array([int(r[0]) for r in rows])
        state = np.array([int(r[1]) for r in rows])
        count = np.array([float(r[2]) for r in rows])
        mat = np.zeros((state.max() + 1, golden.max() + 1))
        mat[state, golden] = count
        im = ax.imshow(mat, origin="lower", aspect="auto", cmap="viridis")
        fig.colorbar(im, ax=ax, label="count")
        ax.set_xlabel("golden value")
        ax.set_ylabel("voltage state")
    elif kind == "histogram":
        vals = [int(r[0]) for r in rows]
        counts = [float(r[1]) for r in rows]
        ax.bar(vals, counts, color="tab:blue")
        ax.set_xlabel("golden value")
        ax.set_ylabel("count")
    elif kind == "trajectory":
        cyc = np.array([float(r[0]) for r in rows])
        mu0 = np.array([float(r[1]) for r in rows])
        mu1 = np.array([float(r[2]) for r in rows])
        ax.plot(cyc, mu0, "o-", color="tab:orange", label="mu0 (HRS)")
        ax.plot(cyc, mu1, "s-", color="tab:blue", label="mu1 (LRS)")
        ax.set_xlabel("stress cycles")
        ax.set_ylabel("effective-bit mean")
        accs = [r[3] for r in rows]
        if all(a not in ("", None) for a in accs):
            ax2 = ax.twinx()
            ax2.plot(cyc, [float(a) for a in accs], "^-", color="tab:red", label="accuracy")
            ax2.set_ylabel("accuracy")
            ax2.legend(loc="center right")
        ax.legend(loc="center left")
    elif kind == "ebmap":
        rows_i = np.array([int(r[0]) for r in rows])
        cols_i = np.array([int(r[1]) for r in rows])
        eb = np.array([float(r[2]) for r in rows])
        grid = np.full((rows_i.max() + 1, cols_i.max() + 1), np.nan)
        grid[rows_i, cols_i] = eb
        im = ax.imshow(grid, aspect="auto", cmap="coolwarm", vmin=-0.2, vmax=1.2)
        fig.colorbar(im, ax=ax, label="effective bit")
        ax.set_xlabel("column")
        ax.set_ylabel("cell row")
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
