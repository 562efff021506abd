"""Model persistence: versioned JSON with full-precision decimal floats.

Python serializes float64 values with their shortest round-tripping decimal
representation, so a save/load cycle reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .data import ScalerStats
from .errors import FormatError
from .gates import GateBank
from .model import Backbone, ModelState

SCHEMA_VERSION = 1


@dataclass
class PersistedModel:
    model: ModelState
    cfg: TrainConfig
    feature_names: list[str]
    seed: int
    scaler_x: ScalerStats | None
    scaler_xt: ScalerStats | None


def _arr(a: np.ndarray) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def _backbone_dict(bb: Backbone | None) -> dict | None:
    if bb is None:
        return None
    return {k.split(".")[1]: _arr(v) for k, v in bb.params("bb").items()}


def _backbone_from(d: dict | None) -> Backbone | None:
    if d is None:
        return None
    return Backbone(*(np.asarray(d[k], dtype=np.float64) for k in ("w1", "b1", "w2", "b2", "w3", "b3")))


def save_model(
    path: str | Path,
    model: ModelState,
    cfg: TrainConfig,
    seed: int,
    feature_names: list[str],
    scaler_x: ScalerStats | None = None,
    scaler_xt: ScalerStats | None = None,
) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "train_config": cfg.to_dict(),
        "seed": seed,
        "feature_names": list(feature_names),
        "scaler_x": scaler_x.to_dict() if scaler_x else None,
        "scaler_xt": scaler_xt.to_dict() if scaler_xt else None,
        "gates": {
            "single_logits": _arr(model.gates.single_logits),
            "pair_logits": _arr(model.gates.pair_logits),
            "alpha": model.gates.alpha,
            "temp_single": model.gates.temp_single,
            "temp_pair": model.gates.temp_pair,
            "hard_single": model.gates.hard_single,
            "hard_pair": model.gates.hard_pair,
        },
        "backbone_single": _backbone_dict(model.backbone_single),
        "backbone_pair": _backbone_dict(model.backbone_pair),
        "lambda_single": _arr(model.lambda_single),
        "lambda_pair": _arr(model.lambda_pair),
        "bias": _arr(model.bias),
        "centroids": _arr(model.centroids),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_model(path: str | Path) -> PersistedModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a valid model file ({exc})") from None
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise FormatError(f"{path}: unsupported schema version {version!r}")
    g = doc["gates"]
    d = len(doc["feature_names"])
    single = np.asarray(g["single_logits"], dtype=np.float64).reshape(-1, d)
    pair = np.asarray(g["pair_logits"], dtype=np.float64).reshape(-1, 2, d)
    gates = GateBank(
        single_logits=single,
        pair_logits=pair,
        alpha=g["alpha"],
        temp_single=g["temp_single"],
        temp_pair=g["temp_pair"],
        hard_single=g["hard_single"],
        hard_pair=g["hard_pair"],
    )
    cfg = TrainConfig.from_dict(doc["train_config"])
    bias = np.asarray(doc["bias"], dtype=np.float64)
    k = bias.shape[0]
    b = cfg.b
    model = ModelState(
        gates=gates,
        backbone_single=_backbone_from(doc["backbone_single"]),
        backbone_pair=_backbone_from(doc["backbone_pair"]),
        lambda_single=np.asarray(doc["lambda_single"], dtype=np.float64).reshape(-1, k, b),
        lambda_pair=np.asarray(doc["lambda_pair"], dtype=np.float64).reshape(-1, k, b),
        bias=bias,
        centroids=np.asarray(doc["centroids"], dtype=np.float64),
    )
    return PersistedModel(
        model=model,
        cfg=cfg,
        feature_names=list(doc["feature_names"]),
        seed=doc["seed"],
        scaler_x=ScalerStats.from_dict(doc["scaler_x"]) if doc["scaler_x"] else None,
        scaler_xt=ScalerStats.from_dict(doc["scaler_xt"]) if doc["scaler_xt"] else None,
    )


def save_report(path: str | Path, report_dict: dict) -> None:
    Path(path).write_text(json.dumps(report_dict, sort_keys=True))


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
