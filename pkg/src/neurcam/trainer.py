"""Two-phase training loop and the multi-seed min-inertia protocol.

Phase one (warmup) optimizes the clustering cost with soft gates at T = 1.
At the warmup horizon the full parameter set is snapshotted; afterwards every
batch adds the KL pull toward the snapshot's assignment (computed at T = 1)
while gate temperatures decay geometrically, pair bank first. Training ends
with every gate hard-switched to an exact coordinate selection, so the final
model is a genuine additive model over the selected features.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .config import TrainConfig
from .data import BatchPlan, DualDataset, make_epoch_batches
from .errors import ConfigError, NumericError
from .gates import AnnealSchedule, anneal_step
from .kmeans import mbk_fit
from .metrics import normalized_inertia
from .model import ModelState, init_model
from .objectives import PHASE_ANNEAL, PHASE_WARMUP, total_loss
from .optim import AdamState, PlateauScheduler, adam_step, plateau_step

log = logging.getLogger(__name__)

WATCHDOG_MASS_FRACTION = 1e-6
WATCHDOG_EPOCHS = 50


@dataclass
class TrainReport:
    """Per-epoch traces and the final summary for one training run."""

    seed: int
    epoch_clustering: list[float] = field(default_factory=list)  # per-sample means
    epoch_kl: list[float] = field(default_factory=list)
    epoch_total: list[float] = field(default_factory=list)
    epoch_lr: list[float] = field(default_factory=list)
    epoch_temp_single: list[float] = field(default_factory=list)
    epoch_temp_pair: list[float] = field(default_factory=list)
    final_temp_single: float = 1.0
    final_temp_pair: float = 1.0
    selected_single: list[int] = field(default_factory=list)
    selected_pair: list[tuple[int, int]] = field(default_factory=list)
    final_inertia: float = float("nan")
    kmeans_inertia: float = float("nan")
    wall_time: float = 0.0

    @property
    def epochs_run(self) -> int:
        return len(self.epoch_total)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "epoch_clustering": self.epoch_clustering,
            "epoch_kl": self.epoch_kl,
            "epoch_total": self.epoch_total,
            "epoch_lr": self.epoch_lr,
            "epoch_temp_single": self.epoch_temp_single,
            "epoch_temp_pair": self.epoch_temp_pair,
            "final_temp_single": self.final_temp_single,
            "final_temp_pair": self.final_temp_pair,
            "selected_single": list(map(int, self.selected_single)),
            "selected_pair": [[int(i), int(j)] for i, j in self.selected_pair],
            "final_inertia": self.final_inertia,
            "kmeans_inertia": self.kmeans_inertia,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        rep = cls(seed=d["seed"])
        rep.epoch_clustering = list(d["epoch_clustering"])
        rep.epoch_kl = list(d["epoch_kl"])
        rep.epoch_total = list(d["epoch_total"])
        rep.epoch_lr = list(d["epoch_lr"])
        rep.epoch_temp_single = list(d["epoch_temp_single"])
        rep.epoch_temp_pair = list(d["epoch_temp_pair"])
        rep.final_temp_single = d["final_temp_single"]
        rep.final_temp_pair = d["final_temp_pair"]
        rep.selected_single = [int(i) for i in d["selected_single"]]
        rep.selected_pair = [(int(i), int(j)) for i, j in d["selected_pair"]]
        rep.final_inertia = d["final_inertia"]
        rep.kmeans_inertia = d["kmeans_inertia"]
        rep.wall_time = d["wall_time"]
        return rep


class TrainingAborted(RuntimeError):
    """Raised when the loss turns non-finite; message names epoch and term."""


def ablation_mode(cfg: TrainConfig, mode: str) -> TrainConfig:
    """Derive the config for one ablation arm (full | no_cl | no_kl)."""
    return cfg.with_ablation(mode)


def _frozen_params(model: ModelState) -> set[str]:
    frozen = set()
    if model.c and model.gates.hard_single:
        frozen.add("gates.single")
    if model.p and model.gates.hard_pair:
        frozen.add("gates.pair")
    return frozen


def fit(
    dataset: DualDataset,
    cfg: TrainConfig,
    seed: int,
    checkpoint_path: str | None = None,
) -> tuple[ModelState, TrainReport]:
    """Train one model from one seed; deterministic given (dataset, cfg, seed)."""
    t0 = time.perf_counter()
    if cfg.d is None:
        cfg = replace(cfg, d=dataset.d)
    elif cfg.d != dataset.d:
        raise ConfigError(f"config says d={cfg.d} but dataset has {dataset.d} features")
    cfg.validate()

    kcfg = cfg.resolved_kmeans(seed)
    if kcfg.k != cfg.k:
        raise ConfigError("k-means config disagrees with cfg.k")
    centroids, km_inertia = mbk_fit(dataset.x_transformed, kcfg)
    model = init_model(cfg, seed, centroids)

    sched = AnnealSchedule(
        warmup_epochs=cfg.warmup_epochs,
        temper_epochs_single=cfg.temper_epochs,
        temper_epochs_pair=cfg.temper_epochs,
        t_final=cfg.t_final,
        epsilon=cfg.epsilon,
        hard_switch_tol=cfg.hard_switch_tol,
    )
    adam = AdamState.for_params(model.params(), cfg.lr)
    plateau = PlateauScheduler(
        patience=cfg.plateau_patience, factor=cfg.plateau_factor, min_lr=cfg.min_lr
    )
    report = TrainReport(seed=seed)
    n = dataset.n
    total = cfg.resolved_total()
    snapshot = model.copy() if cfg.warmup_epochs == 0 else None
    starved_epochs = np.zeros(cfg.k, dtype=np.int64)

    for epoch in range(1, total + 1):
        if epoch == cfg.warmup_epochs:
            snapshot = model.copy()
        phase = PHASE_ANNEAL if (epoch > cfg.warmup_epochs and snapshot is not None) else PHASE_WARMUP
        sums = np.zeros(3)  # clustering, kl, total
        mass = np.zeros(cfg.k)
        for batch_idx in make_epoch_batches(n, BatchPlan(cfg.batch, seed, epoch)):
            breakdown, tape, batch_mass = total_loss(
                model,
                snapshot,
                dataset.x_interp[batch_idx],
                dataset.x_transformed[batch_idx],
                cfg,
                phase,
            )
            if not np.isfinite(breakdown.total):
                term = "clustering" if not np.isfinite(breakdown.clustering) else "kl"
                raise TrainingAborted(
                    f"non-finite {term} loss at epoch {epoch} (seed {seed})"
                )
            adam_step(adam, model.params(), tape, frozen=_frozen_params(model))
            sums += (breakdown.clustering, breakdown.kl, breakdown.total)
            mass += batch_mass

        report.epoch_clustering.append(sums[0] / n)
        report.epoch_kl.append(sums[1] / n)
        report.epoch_total.append(sums[2] / n)
        report.epoch_lr.append(plateau_step(plateau, adam, sums[2] / n))
        report.epoch_temp_single.append(model.gates.temp_single)
        report.epoch_temp_pair.append(model.gates.temp_pair)
        if epoch < total:  # the post-final decay would only change reported temps
            anneal_step(model.gates, sched, epoch)

        starved = mass < WATCHDOG_MASS_FRACTION * n
        starved_epochs = np.where(starved, starved_epochs + 1, 0)
        for k in np.flatnonzero(starved_epochs == WATCHDOG_EPOCHS):
            log.warning(
                "cluster %d has held <%g of the fuzzy mass for %d epochs (seed %d)",
                k, WATCHDOG_MASS_FRACTION, WATCHDOG_EPOCHS, seed,
            )
        if checkpoint_path and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            from .persist import save_model

            save_model(checkpoint_path, model, cfg, seed=seed, feature_names=dataset.feature_names)

    if total > cfg.warmup_epochs:
        model.gates.force_hard()

    report.final_temp_single = model.gates.temp_single
    report.final_temp_pair = model.gates.temp_pair
    report.selected_single = [int(i) for i in model.gates.single_selected()]
    report.selected_pair = [(int(i), int(j)) for i, j in model.gates.pair_selected()]
    report.final_inertia = normalized_inertia(model, dataset.x_interp, dataset.x_transformed)
    report.kmeans_inertia = km_inertia / n
    report.wall_time = time.perf_counter() - t0
    return model, report


def _worker_cap() -> int:
    env = os.environ.get("NEURCAM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer NEURCAM_THREADS=%r", env)
    return 1


def fit_multi_seed(
    dataset: DualDataset, cfg: TrainConfig, checkpoint_dir: str | None = None
) -> tuple[ModelState, TrainReport, list[TrainReport]]:
    """Run every configured seed and keep the lowest-inertia model.

    Seeds run as independent jobs; NEURCAM_THREADS caps how many run at once.
    Ties on inertia resolve to the earliest seed in cfg.seeds.
    """
    seeds = list(cfg.seeds)

    def ckpt(seed: int) -> str | None:
        if checkpoint_dir is None:
            return None
        return os.path.join(checkpoint_dir, f"checkpoint_seed{seed}.json")

    workers = min(len(seeds), _worker_cap())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: fit(dataset, cfg, s, ckpt(s)), seeds))
    else:
        results = [fit(dataset, cfg, s, ckpt(s)) for s in seeds]
    reports = [rep for _, rep in results]
    best = min(range(len(seeds)), key=lambda i: (reports[i].final_inertia, i))
    model, report = results[best]
    return model, report, reports


def select_best_seed(reports: list[TrainReport]) -> int:
    """Index of the run with the lowest final inertia (earliest on ties)."""
    return min(range(len(reports)), key=lambda i: (reports[i].final_inertia, i))
