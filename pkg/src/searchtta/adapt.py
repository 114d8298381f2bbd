"""Test-time adaptation of a score map from in-mission measurements.

The intensity at cell x is ``sigmoid(base_logit[x] + offset[region(x)])``:
the prior map stays frozen and one learnable offset per semantic region is
fitted by gradient ascent on the spatial Poisson point process log-likelihood

    L = sum_pos alpha_pos * log(lam(x_i)) - sum_neg alpha_neg(r_j) * lam(x_j)

where negatives are down-weighted until their region has been well covered.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from searchtta.errors import BoundsError, EmptyRegionError, NumericalFailureError, ParameterError
from searchtta.grid import ScoreMap
from searchtta.regions import RegionPartition
from searchtta.world import Measurement

EPS_CLAMP = 1e-4
OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class TtaConfig:
    alpha_pos: float = 4.0
    beta: float = 1.0 / 9.0
    gamma_exp: float = 2.0
    # 1e-6 / 1e-5 give the encoder-scale schedule; offsets need a larger step.
    lr_min: float = 0.1
    lr_max: float = 1.0
    optimizer: str = "sgd"
    adam: tuple = (0.9, 0.999, 1e-8)
    steps_per_event: int = 1
    cadence: int = 20
    reset_to_base: bool = True

    def __post_init__(self):
        object.__setattr__(self, "adam", tuple(float(v) for v in self.adam))
        if self.lr_min > self.lr_max:
            raise ParameterError(f"lr_min {self.lr_min} > lr_max {self.lr_max}")
        if self.alpha_pos <= 0 or self.beta <= 0:
            raise ParameterError("alpha_pos and beta must be positive")
        if self.gamma_exp < 0:
            raise ParameterError("gamma_exp must be >= 0")
        if self.cadence < 1 or self.steps_per_event < 1:
            raise ParameterError("cadence and steps_per_event must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ParameterError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if len(self.adam) != 3:
            raise ParameterError("adam expects (beta1, beta2, eps)")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["adam"] = list(self.adam)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TtaConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown TTA fields: {sorted(unknown)}")
        return cls(**doc)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


@dataclass(frozen=True, eq=False)
class IntensityModel:
    base_logits: np.ndarray
    offsets: np.ndarray
    partition: RegionPartition
    epsilon_clamp: float = EPS_CLAMP

    def __post_init__(self):
        base = np.array(self.base_logits, dtype=float).reshape(-1)
        offsets = np.array(self.offsets, dtype=float).reshape(-1)
        if base.size != self.partition.labels.size:
            raise ParameterError("base map and partition cover different cell counts")
        if offsets.size != self.partition.k:
            raise ParameterError(f"need {self.partition.k} offsets, got {offsets.size}")
        base.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "base_logits", base)
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def from_base(cls, base: ScoreMap, partition: RegionPartition, epsilon_clamp: float = EPS_CLAMP):
        p = np.clip(base.values, epsilon_clamp, 1.0 - epsilon_clamp)
        return cls(np.log(p) - np.log1p(-p), np.zeros(partition.k), partition, epsilon_clamp)

    @property
    def n(self) -> int:
        return math.isqrt(self.base_logits.size)

    @property
    def k(self) -> int:
        return self.partition.k

    def logits(self, offsets=None) -> np.ndarray:
        offsets = self.offsets if offsets is None else offsets
        return self.base_logits + offsets[self.partition.labels]

    def intensity(self) -> np.ndarray:
        return _sigmoid(self.logits())

    def with_offsets(self, offsets) -> "IntensityModel":
        return replace(self, offsets=np.asarray(offsets, dtype=float))

    def snapshot(self) -> dict:
        return {
            "base_logits": self.base_logits.tolist(),
            "offsets": self.offsets.tolist(),
            "k": self.k,
            "labels": self.partition.labels.tolist(),
            "epsilon_clamp": self.epsilon_clamp,
        }

    @classmethod
    def from_snapshot(cls, doc: dict) -> "IntensityModel":
        part = RegionPartition(int(doc["k"]), doc["labels"])
        return cls(doc["base_logits"], doc["offsets"], part, float(doc.get("epsilon_clamp", EPS_CLAMP)))


@dataclass(frozen=True)
class MeasurementLog:
    """Sensed cells, one entry per cell, plus per-region coverage counts."""

    partition: RegionPartition
    entries: tuple = ()
    observed: tuple = field(default=None)

    def __post_init__(self):
        if self.observed is None:
            counts = np.zeros(self.partition.k, dtype=int)
            for m in self.entries:
                counts[self.partition.labels[m.cell]] += 1
            object.__setattr__(self, "observed", tuple(int(c) for c in counts))

    def add(self, m: Measurement) -> "MeasurementLog":
        if not 0 <= m.cell < self.partition.labels.size:
            raise BoundsError(f"cell {m.cell} outside the partitioned map")
        for i, old in enumerate(self.entries):
            if old.cell == m.cell:
                if old.positive or not m.positive:
                    return self
                entries = self.entries[:i] + (m,) + self.entries[i + 1 :]
                return replace(self, entries=entries)
        observed = list(self.observed)
        observed[self.partition.labels[m.cell]] += 1
        return MeasurementLog(self.partition, self.entries + (m,), tuple(observed))

    def extend(self, measurements) -> "MeasurementLog":
        log = self
        for m in measurements:
            log = log.add(m)
        return log

    def __contains__(self, cell) -> bool:
        return any(m.cell == cell for m in self.entries)

    @property
    def O_r(self) -> np.ndarray:
        return np.array(self.observed, dtype=int)

    @property
    def positive_cells(self) -> np.ndarray:
        return np.array([m.cell for m in self.entries if m.positive], dtype=int)

    @property
    def negative_cells(self) -> np.ndarray:
        return np.array([m.cell for m in self.entries if not m.positive], dtype=int)

    @property
    def p(self) -> int:
        return sum(1 for m in self.entries if m.positive)

    @property
    def n(self) -> int:
        return len(self.entries) - self.p

    @property
    def distinct(self) -> int:
        return len(self.entries)


def alpha_neg(O_r: int, L_r: int, beta: float, gamma_exp: float) -> float:
    """Weight of a negative measurement in a region with O_r of L_r cells sensed."""
    if L_r <= 0:
        raise EmptyRegionError("region has no cells")
    if not 0 <= O_r <= L_r:
        raise ParameterError(f"observed count {O_r} outside [0, {L_r}]")
    return min(beta * (O_r / L_r) ** gamma_exp, 1.0)


def _negative_weights(log: MeasurementLog, cfg: TtaConfig) -> np.ndarray:
    sizes = log.partition.sizes
    per_region = np.array(
        [alpha_neg(o, int(sizes[r]), cfg.beta, cfg.gamma_exp) for r, o in enumerate(log.observed)]
    )
    return per_region[log.partition.labels[log.negative_cells]]


def sppp_loss(model: IntensityModel, log: MeasurementLog, cfg: TtaConfig, offsets=None):
    """Weighted SPPP log-likelihood; evaluated in the dtype of ``offsets`` (float64 by default)."""
    z = model.logits(offsets)
    pos = log.positive_cells
    neg = log.negative_cells
    gain = cfg.alpha_pos * np.sum(_log_sigmoid(z[pos]), dtype=z.dtype)
    penalty = np.dot(_negative_weights(log, cfg).astype(z.dtype), _sigmoid(z[neg]))
    return gain - penalty


def sppp_grad(model: IntensityModel, log: MeasurementLog, cfg: TtaConfig, offsets=None) -> np.ndarray:
    """Analytic gradient of ``sppp_loss`` with respect to the region offsets."""
    z = model.logits(offsets)
    labels = model.partition.labels
    pos = log.positive_cells
    neg = log.negative_cells
    lam_pos = _sigmoid(z[pos])
    lam_neg = _sigmoid(z[neg])
    up = np.bincount(labels[pos], weights=cfg.alpha_pos * (1.0 - lam_pos), minlength=model.k)
    down = np.bincount(
        labels[neg], weights=_negative_weights(log, cfg) * lam_neg * (1.0 - lam_neg), minlength=model.k
    )
    return up.astype(float) - down


def lr_schedule(distinct_sensed: int, n_cells: int, cfg: TtaConfig) -> float:
    if n_cells <= 0 or not 0 <= distinct_sensed <= n_cells:
        raise ParameterError(f"coverage {distinct_sensed}/{n_cells} out of range")
    return cfg.lr_min + (distinct_sensed / n_cells) * (cfg.lr_max - cfg.lr_min)


class Adam:
    """Adam for gradient *ascent*; state starts at zero."""

    def __init__(self, size, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def tta_update(model: IntensityModel, log: MeasurementLog, cfg: TtaConfig) -> IntensityModel:
    """One adaptation event over the whole log; returns a new model."""
    offsets = np.zeros(model.k) if cfg.reset_to_base else model.offsets.copy()
    lr = lr_schedule(log.distinct, model.base_logits.size, cfg)
    adam = Adam(model.k, lr, *cfg.adam) if cfg.optimizer == "adam" else None
    for _ in range(cfg.steps_per_event):
        grad = sppp_grad(model, log, cfg, offsets)
        if not np.all(np.isfinite(grad)):
            raise NumericalFailureError(f"non-finite SPPP gradient {grad}")
        offsets = adam.step(offsets, grad) if adam else offsets + lr * grad
    if not np.all(np.isfinite(offsets)):
        raise NumericalFailureError(f"non-finite offsets {offsets}")
    return model.with_offsets(offsets)


def lambda_map(model: IntensityModel) -> ScoreMap:
    return ScoreMap(model.n, model.intensity())


def load_tta_config(path) -> TtaConfig:
    with open(path, encoding="utf-8") as fh:
        return TtaConfig.from_dict(json.load(fh))
