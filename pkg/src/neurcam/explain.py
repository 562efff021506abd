"""Shape-graph extraction, centering, purification, and importance scores.

A fully annealed model is an additive model over its selected features: every
shape function reads exactly one coordinate (or one pair). Extraction merges
shape functions that selected the same feature into a single curve and merges
(i, j) with (j, i) pairs, sampling curves on a uniform grid and interactions
on a quantile-binned grid.

Mean-centering shifts each curve by its data-weighted mean (into per-cluster
intercepts); purification moves the density-weighted marginal means of each
interaction matrix into the touched features' main curves as per-bin step
corrections. Both transformations keep every training sample's total logits
unchanged: the per-sample contribution tables carry the exact same shifts, so
`reconstruct_logits` matches the model to machine precision.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import DualDataset
from .errors import StateError
from .model import ModelState, backbone_forward, shape_contributions

log = logging.getLogger(__name__)

GRID_POINTS = 256
INTERACTION_BINS = 32
PURIFY_TOL = 1e-8
PURIFY_MAX_ITERS = 500
DENSITY_BINS = 32


@dataclass
class SingleShape:
    """One feature's merged per-cluster curve plus its exact per-sample values."""

    feature: int
    name: str
    grid: np.ndarray  # (G,)
    values: np.ndarray  # (K, G)
    sample_values: np.ndarray  # (N, K), exact contributions at training samples
    bin_edges: np.ndarray  # (B+1,) quantile edges used by purification
    density: np.ndarray  # (B,) training counts per bin


@dataclass
class PairShape:
    """One merged interaction: binned matrices plus exact per-sample values."""

    features: tuple[int, int]
    names: tuple[str, str]
    rep_i: np.ndarray  # (Bi,) representative value per bin of the first feature
    rep_j: np.ndarray  # (Bj,)
    matrix: np.ndarray  # (K, Bi, Bj) binned contributions
    sample_values: np.ndarray  # (N, K)
    density: np.ndarray  # (Bi, Bj) joint training counts


@dataclass
class ShapeGraphSet:
    """Everything needed to display and audit a trained model's explanation."""

    k: int
    feature_names: list[str]
    intercepts: np.ndarray  # (K,)
    singles: dict[int, SingleShape]
    pairs: dict[tuple[int, int], PairShape]
    n_samples: int
    centered: bool = False
    purified: bool = False
    importance_single: dict[int, np.ndarray] = field(default_factory=dict)  # (K,) each
    importance_pair: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def reconstruct_logits(self) -> np.ndarray:
        """(N, K) logits rebuilt from intercepts plus all per-sample contributions."""
        out = np.tile(self.intercepts, (self.n_samples, 1))
        for shape in self.singles.values():
            out += shape.sample_values
        for shape in self.pairs.values():
            out += shape.sample_values
        return out


def _quantile_edges(col: np.ndarray, bins: int) -> np.ndarray:
    edges = np.quantile(col, np.linspace(0.0, 1.0, bins + 1))
    edges = np.unique(edges)
    if edges.size < 2:  # constant column
        edges = np.array([edges[0], edges[0] + 1.0])
    return edges


def _bin_of(col: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.clip(np.searchsorted(edges[1:-1], col, side="right"), 0, edges.size - 2)


def extract_shapes(
    model: ModelState, data: DualDataset, grid_points: int = GRID_POINTS
) -> ShapeGraphSet:
    """Merge per-gate shape functions into per-feature (and per-pair) graphs."""
    if not model.gates.fully_hard():
        raise StateError("extract requires a valid GAM: anneal gates to one-hot first")
    x = data.x_interp
    n = data.n
    contrib_s, contrib_p = shape_contributions(model, x)  # (n, C, K), (n, P, K)

    singles: dict[int, SingleShape] = {}
    sel = model.gates.single_selected()
    for feat in sorted(set(int(i) for i in sel)):
        gate_ids = np.flatnonzero(sel == feat)
        lam = model.lambda_single[gate_ids].sum(axis=0)  # (K, B)
        col = x[:, feat]
        grid = np.linspace(col.min(), col.max(), grid_points)
        basis, _ = backbone_forward(model.backbone_single, grid.reshape(-1, 1))  # (G, B)
        edges = _quantile_edges(col, INTERACTION_BINS)
        singles[feat] = SingleShape(
            feature=feat,
            name=data.feature_names[feat],
            grid=grid,
            values=lam @ basis.T,  # (K, G)
            sample_values=contrib_s[:, gate_ids, :].sum(axis=1),
            bin_edges=edges,
            density=np.bincount(_bin_of(col, edges), minlength=edges.size - 1).astype(np.float64),
        )

    pairs: dict[tuple[int, int], PairShape] = {}
    psel = model.gates.pair_selected()  # (P, 2)
    canon = [tuple(sorted((int(a), int(b)))) for a, b in psel]
    for key in sorted(set(canon)):
        i, j = key
        gate_ids = [g for g, c in enumerate(canon) if c == key]
        col_i, col_j = x[:, i], x[:, j]
        edges_i = _quantile_edges(col_i, INTERACTION_BINS)
        edges_j = _quantile_edges(col_j, INTERACTION_BINS)
        bi, bj = edges_i.size - 1, edges_j.size - 1
        bins_i = _bin_of(col_i, edges_i)
        bins_j = _bin_of(col_j, edges_j)
        density = np.zeros((bi, bj))
        np.add.at(density, (bins_i, bins_j), 1.0)
        # representative per bin: in-bin data mean, midpoint for empty bins
        rep_i = _bin_representatives(col_i, bins_i, edges_i)
        rep_j = _bin_representatives(col_j, bins_j, edges_j)
        # evaluate each gate at every bin-representative pair, in its own input order
        grid_a, grid_b = np.meshgrid(rep_i, rep_j, indexing="ij")
        matrix = np.zeros((model.k, bi, bj))
        for g in gate_ids:
            a, b = int(psel[g, 0]), int(psel[g, 1])
            inp = (
                np.stack([grid_a.ravel(), grid_b.ravel()], axis=1)
                if (a, b) == (i, j)
                else np.stack([grid_b.ravel(), grid_a.ravel()], axis=1)
            )
            basis, _ = backbone_forward(model.backbone_pair, inp)  # (Bi*Bj, B)
            matrix += (model.lambda_pair[g] @ basis.T).reshape(model.k, bi, bj)
        pairs[key] = PairShape(
            features=key,
            names=(data.feature_names[i], data.feature_names[j]),
            rep_i=rep_i,
            rep_j=rep_j,
            matrix=matrix,
            sample_values=contrib_p[:, gate_ids, :].sum(axis=1),
            density=density,
        )

    return ShapeGraphSet(
        k=model.k,
        feature_names=list(data.feature_names),
        intercepts=model.bias.copy(),
        singles=singles,
        pairs=pairs,
        n_samples=n,
    )


def _bin_representatives(col: np.ndarray, bins: np.ndarray, edges: np.ndarray) -> np.ndarray:
    reps = 0.5 * (edges[:-1] + edges[1:])
    for b in range(edges.size - 1):
        members = col[bins == b]
        if members.size:
            reps[b] = members.mean()
    return reps


def mean_center(
    shapes: ShapeGraphSet, data: DualDataset | None = None, singles_only: bool = False
) -> ShapeGraphSet:
    """Shift every curve by its data-weighted mean, preserving total logits.

    The shift goes into the per-cluster intercepts; per-sample contribution
    tables shift identically so reconstruction is unchanged. Idempotent.
    `singles_only` re-centers just the main curves: used after purification,
    whose matrices must keep their zero weighted marginals untouched.
    """
    for shape in shapes.singles.values():
        means = shape.sample_values.mean(axis=0)  # (K,)
        shape.sample_values -= means
        shape.values -= means[:, None]
        shapes.intercepts += means
    if not singles_only:
        for shape in shapes.pairs.values():
            means = shape.sample_values.mean(axis=0)
            shape.sample_values -= means
            shape.matrix -= means[:, None, None]
            shapes.intercepts += means
    shapes.centered = True
    return shapes


def _purify_matrix(
    matrix: np.ndarray, density: np.ndarray, tol: float = PURIFY_TOL, max_iters: int = PURIFY_MAX_ITERS
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Zero the density-weighted marginals of (K, Bi, Bj) matrices.

    Returns (purified, row_effect (K, Bi), col_effect (K, Bj), converged);
    matrix == purified + row_effect[:, :, None] + col_effect[:, None, :]
    holds pointwise. Bins with zero marginal mass are left untouched.
    """
    m = matrix.copy()
    row_mass = density.sum(axis=1)  # (Bi,)
    col_mass = density.sum(axis=0)  # (Bj,)
    rows_live = row_mass > 0
    cols_live = col_mass > 0
    u = np.zeros((m.shape[0], m.shape[1]))
    v = np.zeros((m.shape[0], m.shape[2]))
    converged = False
    for _ in range(max_iters):
        moved = 0.0
        if np.any(cols_live):
            cm = np.where(
                cols_live[None, :],
                np.einsum("kij,ij->kj", m, density) / np.where(cols_live, col_mass, 1.0)[None, :],
                0.0,
            )
            m -= cm[:, None, :]
            v += cm
            moved = max(moved, float(np.abs(cm).max()))
        if np.any(rows_live):
            rm = np.where(
                rows_live[None, :],
                np.einsum("kij,ij->ki", m, density) / np.where(rows_live, row_mass, 1.0)[None, :],
                0.0,
            )
            m -= rm[:, :, None]
            u += rm
            moved = max(moved, float(np.abs(rm).max()))
        if moved < tol:
            converged = True
            break
    return m, u, v, converged


def purify(shapes: ShapeGraphSet, data: DualDataset) -> ShapeGraphSet:
    """Move interaction marginals into main effects without changing outputs.

    Each transfer is a per-bin step function: it is added to the touched
    feature's curve and per-sample values and subtracted from the pair's, so
    the binned matrix, the displayed curves, and the exact per-sample tables
    all stay mutually consistent.
    """
    x = data.x_interp
    for key, pair in shapes.pairs.items():
        i, j = key
        edges_i = _edges_for(shapes, i, x)
        edges_j = _edges_for(shapes, j, x)
        purified, u, v, converged = _purify_matrix(pair.matrix, pair.density)
        if not converged:
            log.warning("purification did not converge for pair %s; using best iterate", key)
        pair.matrix = purified
        bins_i = _bin_of(x[:, i], edges_i)
        bins_j = _bin_of(x[:, j], edges_j)
        # self-interaction (i == j): both transfers land on the same main curve
        _absorb_step(shapes, i, x, edges_i, u, bins_i)
        _absorb_step(shapes, j, x, edges_j, v, bins_j)
        pair.sample_values -= u[:, bins_i].T + v[:, bins_j].T
    shapes.purified = True
    return shapes


def _edges_for(shapes: ShapeGraphSet, feat: int, x: np.ndarray) -> np.ndarray:
    if feat in shapes.singles:
        return shapes.singles[feat].bin_edges
    return _quantile_edges(x[:, feat], INTERACTION_BINS)


def _absorb_step(
    shapes: ShapeGraphSet,
    feat: int,
    x: np.ndarray,
    edges: np.ndarray,
    step: np.ndarray,  # (K, B)
    sample_bins: np.ndarray,
) -> None:
    """Add a per-bin step function to a feature's main curve, creating one if
    the feature was never selected by a single gate."""
    col = x[:, feat]
    if feat not in shapes.singles:
        grid = np.linspace(col.min(), col.max(), GRID_POINTS)
        shapes.singles[feat] = SingleShape(
            feature=feat,
            name=shapes.feature_names[feat],
            grid=grid,
            values=np.zeros((shapes.k, grid.size)),
            sample_values=np.zeros((shapes.n_samples, shapes.k)),
            bin_edges=edges,
            density=np.bincount(_bin_of(col, edges), minlength=edges.size - 1).astype(np.float64),
        )
    shape = shapes.singles[feat]
    shape.sample_values += step[:, sample_bins].T
    shape.values += step[:, _bin_of(shape.grid, edges)]


def importance(shapes: ShapeGraphSet) -> ShapeGraphSet:
    """Mean absolute contribution per feature: over samples, per cluster and
    averaged across clusters. Expects mean-centered shapes."""
    if not shapes.centered:
        raise StateError("importance expects mean-centered shapes")
    shapes.importance_single = {
        feat: np.abs(s.sample_values).mean(axis=0) for feat, s in shapes.singles.items()
    }
    shapes.importance_pair = {
        key: np.abs(p.sample_values).mean(axis=0) for key, p in shapes.pairs.items()
    }
    return shapes


def build_shape_graphs(
    model: ModelState, data: DualDataset, grid_points: int = GRID_POINTS
) -> ShapeGraphSet:
    """Full pipeline: extract, center, purify, re-center, score importance."""
    shapes = extract_shapes(model, data, grid_points)
    shapes = mean_center(shapes, data)
    if shapes.pairs:
        shapes = purify(shapes, data)
        # purification steps shift main-curve means; pair matrices stay put
        shapes = mean_center(shapes, data, singles_only=True)
    return importance(shapes)


def top_k_overlap(scores_a: dict, scores_b: dict, k: int) -> int:
    """Size of the intersection of the two top-k importance sets."""
    top_a = set(sorted(scores_a, key=lambda f: (-float(np.mean(scores_a[f])), f))[:k])
    top_b = set(sorted(scores_b, key=lambda f: (-float(np.mean(scores_b[f])), f))[:k])
    return len(top_a & top_b)


# --- export schema ---------------------------------------------------------

_SAFE = re.compile(r"[^A-Za-z0-9_.-]+")


def _safe_name(name: str) -> str:
    return _SAFE.sub("_", name).strip("_") or "feature"


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def export_shape_graphs(shapes: ShapeGraphSet, data: DualDataset, out_dir: str | Path) -> Path:
    """Write the plain-CSV export plus its manifest; returns the manifest path.

    Layout: one curve file and one density-histogram file per selected
    feature, one long-format matrix file per pair, and one importance table
    sorted by descending mean importance. Deterministic byte-for-byte.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = shapes.k
    cluster_cols = [f"cluster_{c}" for c in range(k)]
    curves: dict[str, str] = {}
    densities: dict[str, str] = {}
    x = data.x_interp

    for feat in sorted(shapes.singles):
        s = shapes.singles[feat]
        stem = f"f{feat}_{_safe_name(s.name)}"
        curve_file = f"curve_{stem}.csv"
        _write_csv(
            out / curve_file,
            ["grid_value"] + cluster_cols,
            (
                [float(s.grid[g])] + [float(s.values[c, g]) for c in range(k)]
                for g in range(s.grid.size)
            ),
        )
        curves[s.name] = curve_file
        col = x[:, feat]
        counts, edges = np.histogram(col, bins=DENSITY_BINS, range=(col.min(), col.max()))
        density_file = f"density_{stem}.csv"
        _write_csv(
            out / density_file,
            ["bin_left", "bin_right", "count"],
            (
                [float(edges[b]), float(edges[b + 1]), int(counts[b])]
                for b in range(counts.size)
            ),
        )
        densities[s.name] = density_file

    pair_files: dict[str, str] = {}
    for key in sorted(shapes.pairs):
        p = shapes.pairs[key]
        stem = f"f{key[0]}_{_safe_name(p.names[0])}__f{key[1]}_{_safe_name(p.names[1])}"
        pair_file = f"pair_{stem}.csv"
        rows = []
        for a in range(p.rep_i.size):
            for b in range(p.rep_j.size):
                rows.append(
                    [float(p.rep_i[a]), float(p.rep_j[b])]
                    + [float(p.matrix[c, a, b]) for c in range(k)]
                )
        _write_csv(out / pair_file, ["value_i", "value_j"] + cluster_cols, rows)
        pair_files[f"{p.names[0]}__{p.names[1]}"] = pair_file

    entries = []
    for feat in sorted(shapes.singles):
        s = shapes.singles[feat]
        per_cluster = shapes.importance_single.get(feat, np.zeros(k))
        entries.append((s.name, "single", float(np.mean(per_cluster)), per_cluster))
    for key in sorted(shapes.pairs):
        p = shapes.pairs[key]
        per_cluster = shapes.importance_pair.get(key, np.zeros(k))
        entries.append(
            (f"{p.names[0]}__{p.names[1]}", "pair", float(np.mean(per_cluster)), per_cluster)
        )
    entries.sort(key=lambda e: (-e[2], e[0]))
    _write_csv(
        out / "importance.csv",
        ["name", "kind", "importance"] + cluster_cols,
        ([name, kind, score] + [float(v) for v in pc] for name, kind, score, pc in entries),
    )

    manifest = {
        "schema_version": 1,
        "k": k,
        "feature_names": shapes.feature_names,
        "selected_features": [shapes.singles[f].name for f in sorted(shapes.singles)],
        "selected_pairs": [
            [shapes.pairs[key].names[0], shapes.pairs[key].names[1]] for key in sorted(shapes.pairs)
        ],
        "intercepts": [float(v) for v in shapes.intercepts],
        "curves": curves,
        "densities": densities,
        "pairs": pair_files,
        "importance": "importance.csv",
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest_path
