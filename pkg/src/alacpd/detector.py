"""Online change-point detection with an ensemble of TAEnets.

Each incoming sample closes a window that every ensemble member tries to
reconstruct. A member flags the window when its loss exceeds its threshold
``coef * running_mean_loss``; the window is out-of-distribution when at least
``ceil(beta * M)`` members flag it. In-distribution windows are learned and
folded into the running means. ``n_cpd`` consecutive out-of-distribution
windows report a change-point ``n_cpd`` steps back, after which the members
are retrained on the buffered windows and the thresholds restart from them.
Windows flagged out-of-distribution are dropped as soon as a normal one
arrives, so only a constant number of raw windows is ever held.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .data import TimeSeries, standardize
from .ndcore import NonFiniteError, SgdConfig
from .taenet import TAEnet, TAEnetConfig


class DetectorError(RuntimeError):
    """Training diverged; the detector state is left as it was before the step."""


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnsembleConfig:
    # network
    window: int = 6
    hidden: int = 20
    horizon: int = 4
    learning_rate: float = 0.001
    use_ae: bool = True
    use_ar: bool = True
    # ensemble / state machine
    skip_sizes: tuple = (3, 5, 7)
    threshold_coef: float = 1.4
    grace_multiplier: float = 4.0
    grace_length: int = 5
    beta: float = 0.6
    n_cpd: int = 3
    n_init: Optional[int] = None
    n_init_frac: float = 0.1
    e_init: int = 10
    e_train: int = 5
    e_reinit: int = 100
    reset_on_change: bool = False

    def __post_init__(self):
        object.__setattr__(self, "skip_sizes", tuple(int(s) for s in self.skip_sizes))
        if not self.skip_sizes:
            raise ConfigError("need at least one ensemble member")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError("beta must lie in (0, 1]")
        if not self.threshold_coef > 1.0:
            raise ConfigError("threshold_coef must be > 1")
        if self.grace_multiplier < 1.0 or self.grace_length < 0:
            raise ConfigError("grace_multiplier must be >= 1 and grace_length >= 0")
        if self.n_cpd < 1:
            raise ConfigError("n_cpd must be >= 1")
        if not 0.0 < self.n_init_frac <= 1.0:
            raise ConfigError("n_init_frac must lie in (0, 1]")
        if min(self.e_init, self.e_train, self.e_reinit) < 0:
            raise ConfigError("epoch counts must be non-negative")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not (self.use_ae or self.use_ar):
            raise ConfigError("at least one of use_ae / use_ar must be enabled")

    @property
    def n_models(self) -> int:
        return len(self.skip_sizes)

    @property
    def vote_count(self) -> int:
        # small tolerance so that e.g. 0.6 * 5 does not round up to 4
        return max(1, math.ceil(self.beta * self.n_models - 1e-9))

    @property
    def variant(self) -> str:
        return self.member_config(1, self.skip_sizes[0]).variant

    def resolve_n_init(self, n: int) -> int:
        return self.n_init if self.n_init is not None else max(1, int(round(self.n_init_frac * n)))

    def member_config(self, n_dims: int, skip: int) -> TAEnetConfig:
        return TAEnetConfig(
            window=self.window,
            n_dims=n_dims,
            hidden=self.hidden,
            skip=skip,
            horizon=self.horizon,
            use_ae=self.use_ae,
            use_ar=self.use_ar,
        )


ABLATIONS = {
    "full": dict(use_ae=True, use_ar=True),
    "no_ar": dict(use_ae=True, use_ar=False),
    "no_ae": dict(use_ae=False, use_ar=True),
}


def with_ablation(cfg: EnsembleConfig, ablation: str) -> EnsembleConfig:
    if ablation not in ABLATIONS:
        raise ConfigError(f"unknown ablation {ablation!r}; expected one of {sorted(ABLATIONS)}")
    return replace(cfg, **ABLATIONS[ablation])


class Outcome(enum.Enum):
    NORMAL = "normal"
    ANOMALOUS = "anomalous"
    CHANGE_POINT = "change_point"


@dataclass(frozen=True)
class StepResult:
    t: int
    outcome: Outcome
    losses: np.ndarray
    change_point: Optional[int] = None

    @property
    def out_of_distribution(self) -> bool:
        return self.outcome is not Outcome.NORMAL


@dataclass
class ThresholdState:
    avg_loss: np.ndarray
    coef: float
    n_state: int

    @property
    def thresholds(self) -> np.ndarray:
        return self.coef * self.avg_loss

    def update(self, losses: np.ndarray) -> None:
        n = self.n_state
        self.avg_loss = (n * self.avg_loss + losses) / (n + 1)
        self.n_state = n + 1


def vote(losses, thresholds, vote_count: int) -> bool:
    """True when the window is out-of-distribution."""
    exceed = int(np.sum(np.asarray(losses) > np.asarray(thresholds)))
    return exceed >= vote_count


@dataclass
class DetectionReport:
    change_points: list
    flags: list
    n_init: int
    variant: str = "ALACPD"
    losses: Optional[list] = None
    thresholds: Optional[list] = None
    max_retained: int = 0

    def to_json(self, dataset: str, seed: int) -> dict:
        doc = {
            "dataset": dataset,
            "seed": seed,
            "variant": self.variant,
            "n_init": self.n_init,
            "change_points": list(self.change_points),
            "flags": list(self.flags),
        }
        if self.losses is not None:
            doc["losses"] = self.losses
            doc["thresholds"] = self.thresholds
        return doc


class Detector:
    """Streaming detector; feed samples one at a time through :meth:`step`."""

    def __init__(self, cfg: EnsembleConfig, n_dims: int, seed: int = 0):
        self.cfg = cfg
        self.n_dims = n_dims
        self.seed = seed
        self.sgd = SgdConfig(cfg.learning_rate)
        member_seeds = np.random.SeedSequence(seed).spawn(cfg.n_models)
        self.models = [
            TAEnet(cfg.member_config(n_dims, s), seed=np.random.default_rng(ss))
            for s, ss in zip(cfg.skip_sizes, member_seeds)
        ]
        self._context_len = self.models[0].config.context_length
        self.recent: deque = deque(maxlen=self._context_len)
        self.thresholds: Optional[ThresholdState] = None
        self.anomaly_buffer: list = []
        self.change_points: list = []
        self.t = -1
        self.grace_remaining = 0
        self.init_retained = 0  # windows held during initialization only
        self.max_retained = 0  # most windows held at once after initialization
        self._member_seeds = member_seeds

    @property
    def initialized(self) -> bool:
        return self.thresholds is not None

    # -- helpers -------------------------------------------------------------

    def _losses(self, context) -> np.ndarray:
        return np.array([m.loss(context) for m in self.models])

    def _fit(self, contexts: Sequence[np.ndarray], epochs: int) -> None:
        snapshot = [[p.value.copy() for p in m.all_parameters()] for m in self.models]
        try:
            for m in self.models:
                for _ in range(epochs):
                    for ctx in contexts:
                        m.train_step(ctx, self.sgd)
        except NonFiniteError as exc:
            for m, values in zip(self.models, snapshot):
                for p, v in zip(m.all_parameters(), values):
                    p.value[...] = v
                    p.zero_grad()
            raise DetectorError(f"training diverged at t={self.t}: {exc}") from exc

    def _mean_losses(self, contexts) -> np.ndarray:
        return np.mean([self._losses(c) for c in contexts], axis=0)

    def _reset_models(self) -> None:
        self._member_seeds = [ss.spawn(1)[0] for ss in self._member_seeds]
        self.models = [
            TAEnet(m.config, seed=np.random.default_rng(ss))
            for m, ss in zip(self.models, self._member_seeds)
        ]

    # -- algorithm -----------------------------------------------------------

    def initialize(self, prefix) -> None:
        """Train on a change-free prefix and set thresholds ``C * mean loss``."""
        cfg = self.cfg
        prefix = np.asarray(prefix, dtype=np.float64)
        if prefix.ndim == 1:
            prefix = prefix[:, None]
        if prefix.shape[1] != self.n_dims:
            raise ValueError(f"prefix has {prefix.shape[1]} dims, detector expects {self.n_dims}")
        n_init = prefix.shape[0]
        if n_init < cfg.window + cfg.horizon + 1:
            raise ConfigError(
                f"n_init={n_init} too small: need at least window + horizon + 1 = "
                f"{cfg.window + cfg.horizon + 1} samples"
            )
        L = self._context_len
        contexts = [prefix[max(0, t - L + 1) : t + 1] for t in range(cfg.window - 1, n_init)]
        self.init_retained = len(contexts)
        self._fit(contexts, cfg.e_init)
        avg = self._mean_losses(contexts)
        self.thresholds = ThresholdState(avg, cfg.threshold_coef, len(contexts))
        self.recent.clear()
        self.recent.extend(prefix[-L:])
        self.t = n_init - 1

    def classify(self, context) -> tuple[bool, np.ndarray]:
        """Out-of-distribution decision for one window; never updates the models."""
        losses = self._losses(context)
        return vote(losses, self.thresholds.thresholds, self.cfg.vote_count), losses

    def _tick_grace(self) -> None:
        if self.grace_remaining > 0:
            self.grace_remaining -= 1
            if self.grace_remaining == 0:
                self.thresholds.coef = self.cfg.threshold_coef

    def step(self, x) -> StepResult:
        if not self.initialized:
            raise RuntimeError("call initialize() before step()")
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.n_dims:
            raise ValueError(f"sample has {x.shape[0]} dims, detector expects {self.n_dims}")
        if not np.all(np.isfinite(x)):
            raise ValueError("sample contains non-finite values")
        cfg = self.cfg
        t = self.t + 1
        self.recent.append(x)
        context = np.array(self.recent)
        out, losses = self.classify(context)
        self.t = t

        if not out:
            try:
                self._fit([context], cfg.e_train)
            except DetectorError:
                self.t = t - 1
                self.recent.pop()
                raise
            self.thresholds.update(losses)
            self.anomaly_buffer.clear()
            self._tick_grace()
            return StepResult(t, Outcome.NORMAL, losses)

        self.anomaly_buffer.append((t, context))
        self.max_retained = max(self.max_retained, len(self.anomaly_buffer))
        if len(self.anomaly_buffer) < cfg.n_cpd:
            self._tick_grace()
            return StepResult(t, Outcome.ANOMALOUS, losses)

        cp = t - cfg.n_cpd
        batch = [c for _, c in self.anomaly_buffer]
        if cfg.reset_on_change:
            self._reset_models()
        self._fit(batch, cfg.e_reinit)
        self.change_points.append(cp)
        self.thresholds = ThresholdState(
            self._mean_losses(batch), cfg.threshold_coef * cfg.grace_multiplier, len(batch)
        )
        self.grace_remaining = cfg.grace_length
        if self.grace_remaining == 0:
            self.thresholds.coef = cfg.threshold_coef
        self.anomaly_buffer.clear()
        return StepResult(t, Outcome.CHANGE_POINT, losses, cp)


def run(
    series: TimeSeries,
    cfg: EnsembleConfig = EnsembleConfig(),
    seed: int = 0,
    standardization: Optional[str] = "init_prefix",
    trace: bool = False,
) -> DetectionReport:
    """Detect change-points over a whole series (indices in series coordinates)."""
    n = series.n
    n_init = cfg.resolve_n_init(n)
    if n <= n_init:
        raise ConfigError(f"series length {n} must exceed n_init={n_init}")
    if standardization:
        series, _ = standardize(series, standardization, n_init)
    values = series.values
    det = Detector(cfg, series.n_dims, seed)
    det.initialize(values[:n_init])
    flags = [0] * n
    losses = [] if trace else None
    ths = [] if trace else None
    for t in range(n_init, n):
        th = det.thresholds.thresholds.tolist()
        res = det.step(values[t])
        flags[t] = int(res.out_of_distribution)
        if trace:
            losses.append(res.losses.tolist())
            ths.append(th)
    return DetectionReport(
        change_points=list(det.change_points),
        flags=flags,
        n_init=n_init,
        variant=cfg.variant,
        losses=losses,
        thresholds=ths,
        max_retained=det.max_retained,
    )
