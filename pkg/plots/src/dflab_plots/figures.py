"""The five figure kinds rendered from dflab harness artifacts.

This package computes no statistics of its own: it reads the documented
CSV/JSON schemas, validates the columns it needs, and draws.  Rendering is
pure -- fixed style, no timestamps -- so identical inputs produce
identical image bytes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = ["particle-traces", "weight-spectrum", "qv-compare",
         "identity-residuals", "varadhan-slope"]

_STYLE = {
    "figure.figsize": (7.0, 4.6),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


class MissingColumnError(ValueError):
    """An input artifact lacks a required column."""

    def __init__(self, path, column):
        self.column = column
        super().__init__(f"{path}: missing required column {column!r}")


@dataclass
class FigureSpec:
    """What to draw: input artifact path(s), figure kind, output path."""

    kind: str
    inputs: list
    output: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"expected one of {KINDS}")
        if not self.inputs:
            raise ValueError("at least one input artifact is required")


def _read_csv(path: str, required: list) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows) < 2:
        raise ValueError(f"{path}: empty artifact")
    header = rows[0]
    for col in required:
        if col not in header:
            raise MissingColumnError(path, col)
    idx = {c: header.index(c) for c in header}
    out = {c: [] for c in header}
    for row in rows[1:]:
        for c in header:
            cell = row[idx[c]]
            out[c].append(float(cell) if cell != "" else np.nan)
    return {c: np.asarray(v) for c, v in out.items()}


def _coord_columns(data: dict) -> list:
    cols = sorted(c for c in data if c.startswith("coord_"))
    if not cols:
        raise ValueError("no coord_* columns found")
    return cols


def _unwrap(series: np.ndarray, side: float = 1.0) -> np.ndarray:
    """Lift a wrapped trajectory to the universal cover by taking the
    shortest-representative increment at every step."""
    inc = np.diff(series)
    inc = (inc + side / 2.0) % side - side / 2.0
    return series[0] + np.concatenate([[0.0], np.cumsum(inc)])


# ---------------------------------------------------------------------------
# Renderers
# ---------------------------------------------------------------------------

def _render_particle_traces(spec: FigureSpec, ax):
    data = _read_csv(spec.inputs[0],
                     ["path_id", "t", "atom_id", "weight", "coord_1"])
    coords = _coord_columns(data)
    path_id = spec.options.get("path_id", int(data["path_id"].min()))
    sel = data["path_id"] == path_id
    atoms = np.unique(data["atom_id"][sel].astype(int))
    weights = {a: data["weight"][sel & (data["atom_id"] == a)][0]
               for a in atoms}
    wmax = max(weights.values())
    cmap = plt.get_cmap("viridis")
    for a in atoms:
        rows = sel & (data["atom_id"] == a)
        order = np.argsort(data["t"][rows])
        x = _unwrap(data[coords[0]][rows][order])
        y = (_unwrap(data[coords[1]][rows][order]) if len(coords) > 1
             else data["t"][rows][order])
        ax.plot(x, y, lw=0.9, color=cmap(weights[a] / wmax))
    ax.set_xlabel(f"{coords[0]} (unrolled)")
    ax.set_ylabel(f"{coords[1] if len(coords) > 1 else 't'} (unrolled)")
    ax.set_title(f"atom trajectories, path {path_id} "
                 "(brighter = heavier)")


def _render_weight_spectrum(spec: FigureSpec, ax):
    for path in spec.inputs:
        data = _read_csv(path, ["sample_id", "atom_id", "weight"])
        n_atoms = int(data["atom_id"].max()) + 1
        n_samples = int(data["sample_id"].max()) + 1
        grid = np.full((n_samples, n_atoms), np.nan)
        grid[data["sample_id"].astype(int),
             data["atom_id"].astype(int)] = data["weight"]
        spectrum = np.nanmean(grid, axis=0)
        ax.semilogy(np.arange(1, n_atoms + 1), spectrum, marker=".",
                    label=Path(path).stem)
    ax.set_xlabel("weight rank")
    ax.set_ylabel("mean weight")
    ax.set_title("ranked weight spectra")
    ax.legend()


def _render_qv_compare(spec: FigureSpec, ax):
    data = _read_csv(spec.inputs[0],
                     ["t", "realized_qv", "predicted_qv",
                      "se_realized_qv"])
    t = data["t"]
    ax.plot(t, data["predicted_qv"], label="predicted (grad-norm integral)",
            color="tab:blue")
    ax.plot(t, data["realized_qv"], label="realized (squared increments)",
            color="tab:orange")
    band = 3.0 * data["se_realized_qv"]
    ax.fill_between(t, data["realized_qv"] - band,
                    data["realized_qv"] + band, color="tab:orange",
                    alpha=0.25, label="realized +- 3 se")
    ax.set_xlabel("t")
    ax.set_ylabel("quadratic variation")
    ax.set_title("realized vs predicted quadratic variation")
    ax.legend()


def _render_identity_residuals(spec: FigureSpec, ax):
    labels, zs = [], []
    for path in spec.inputs:
        with open(path) as fh:
            report = json.load(fh)
        if "checks" not in report:
            raise MissingColumnError(path, "checks")
        for c in report["checks"]:
            if c.get("tol_kind") != "sigma" or not c.get("stderr"):
                continue
            labels.append(c["name"])
            zs.append((c["estimate"] - c["target"]) / c["stderr"])
    if not zs:
        raise ValueError("no sigma-judged checks found in the inputs")
    pos = np.arange(len(zs))
    ax.bar(pos, zs, color="tab:blue")
    for ref in (-3.0, 3.0):
        ax.axhline(ref, color="tab:red", lw=1.0, ls="--")
    ax.set_xlabel("check index")
    ax.set_ylabel("(estimate - target) / stderr")
    ax.set_title(f"identity residuals, {len(zs)} checks "
                 "(dashed: +-3 sigma)")
    ax.set_ylim(min(-4.0, min(zs) - 0.5), max(4.0, max(zs) + 0.5))


def _render_varadhan_slope(spec: FigureSpec, ax):
    data = _read_csv(spec.inputs[0],
                     ["t", "p_hat", "stderr", "t_log_p", "bound"])
    have = ~np.isnan(data["t_log_p"])
    t = data["t"][have]
    y = data["t_log_p"][have]
    band = 3.0 * data["t"][have] * data["stderr"][have] / \
        np.maximum(data["p_hat"][have], 1e-300)
    ax.errorbar(t, y, yerr=band, marker="o", ls="-", capsize=3,
                label="t log p_hat (+- 3 se band)")
    ax.axhline(data["bound"][0], color="tab:red", ls="--",
               label="-d^2 (1 - slack) / 2")
    ax.set_xlabel("t")
    ax.set_ylabel("t log p_t")
    ax.set_title("short-time crossing decay vs the one-sided bound")
    ax.legend()


_RENDERERS = {
    "particle-traces": _render_particle_traces,
    "weight-spectrum": _render_weight_spectrum,
    "qv-compare": _render_qv_compare,
    "identity-residuals": _render_identity_residuals,
    "varadhan-slope": _render_varadhan_slope,
}


def render(spec: FigureSpec) -> str:
    """Render the figure and return the output path."""
    for path in spec.inputs:
        if not Path(path).exists():
            raise FileNotFoundError(path)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        try:
            _RENDERERS[spec.kind](spec, ax)
            fig.tight_layout()
            fig.savefig(spec.output, format="png",
                        metadata={"Software": "dflab-plots"})
        finally:
            plt.close(fig)
    return spec.output
