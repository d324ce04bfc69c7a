"""Gradient-based calibration of the bucket model (Adam, full batch)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from jkge._io import atomic_open
from jkge.benchmark import LTM, BenchmarkMethod, parse_method
from jkge.errors import ArgumentError, CalibrationError, DegenerateInputError
from jkge.hydromodel import PARAM_NAMES, BucketParams, BucketState, Forcing, run_batch
from jkge.metrics import DEFAULT_EPS_B, batch_metric
from jkge.series import TimeSeries, spinup_prepend

CALIBRATION_METRICS = ("mse", "nse", "kge_ss", "jkge_ss", "jkge_aug")
DEFAULT_SPINUP_YEARS = 3


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 1500
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ArgumentError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ArgumentError("beta1 and beta2 must lie in [0, 1)")
        if not self.eps > 0:
            raise ArgumentError("eps must be positive")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ArgumentError("epochs must be a positive integer")


@dataclass
class CalibrationResult:
    params: np.ndarray  # unconstrained, best recorded
    trace: np.ndarray  # loss at the start of each epoch
    seed: int
    best_epoch: int
    train_value: float | None = None  # metric (not loss) on the training years
    eval_value: float | None = None
    metric: str = ""
    method: str = ""
    seed_summary: list = field(default_factory=list)

    @property
    def best_loss(self) -> float:
        return float(self.trace[self.best_epoch])

    @property
    def bucket_params(self) -> BucketParams:
        return BucketParams.from_unconstrained(self.params)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "method": self.method,
            "seed": self.seed,
            "best_epoch": self.best_epoch,
            "train_value": self.train_value,
            "eval_value": self.eval_value,
            "params": dict(zip(PARAM_NAMES, map(float, self.params))),
            "physical_params": dict(zip(PARAM_NAMES, map(float, self.bucket_params.as_array()))),
            "trace": [float(x) for x in self.trace],
            "seeds": self.seed_summary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        return cls(
            params=np.array([d["params"][k] for k in PARAM_NAMES]),
            trace=np.array(d["trace"], dtype=float),
            seed=d["seed"], best_epoch=d["best_epoch"],
            train_value=d.get("train_value"), eval_value=d.get("eval_value"),
            metric=d.get("metric", ""), method=d.get("method", ""),
            seed_summary=d.get("seeds", []),
        )

    def save(self, path):
        with atomic_open(path) as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "CalibrationResult":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def adam_optimize(loss, init, cfg: AdamConfig = AdamConfig()) -> CalibrationResult:
    """Minimize ``loss(x) -> (value, grad)`` from ``init``.

    The returned params are those with the lowest recorded loss. A non-finite
    loss or gradient aborts with :class:`CalibrationError`, whose ``trace``
    attribute holds the losses recorded so far.
    """
    x = np.array(init, dtype=np.float64)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    trace = np.empty(cfg.epochs)
    best_x, best_i = x.copy(), 0
    for i in range(cfg.epochs):
        value, grad = loss(x)
        grad = np.asarray(grad, dtype=np.float64)
        if not (math.isfinite(value) and np.all(np.isfinite(grad))):
            err = CalibrationError(f"non-finite loss or gradient at epoch {i}")
            err.trace = trace[:i].copy()
            raise err
        trace[i] = value
        if value < trace[best_i] or i == 0:
            best_x, best_i = x.copy(), i
        m = cfg.beta1 * m + (1 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad
        m_hat = m / (1 - cfg.beta1 ** (i + 1))
        v_hat = v / (1 - cfg.beta2 ** (i + 1))
        x = x - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return CalibrationResult(best_x, trace, cfg.seed, best_i)


class MetricLoss:
    """``1 - metric`` of the simulated discharge on a masked record.

    Parameter gradients are central finite differences in unconstrained
    space; all ``2P + 1`` runs of one evaluation go through a single batched
    model call. For ``mse`` the loss is the MSE itself.
    """

    def __init__(self, metric: str, forcing: Forcing, obs: TimeSeries,
                 method: BenchmarkMethod = LTM(), mask=None, offset: int = 0,
                 state: BucketState = BucketState(), eps_b: float = DEFAULT_EPS_B,
                 h: float = 1e-5):
        if metric not in CALIBRATION_METRICS:
            raise ArgumentError(f"cannot calibrate against {metric!r}; choose from {CALIBRATION_METRICS}")
        if len(forcing) != offset + len(obs):
            raise ArgumentError("forcing length must equal spin-up offset + obs length")
        self.metric, self.method, self.eps_b, self.h = metric, method, eps_b, h
        self.offset, self.state = offset, state
        self.precip = forcing.precip.values
        self.pet = forcing.pet.values
        self.obs = obs.values
        usable = obs.usable if mask is None else obs.usable & np.asarray(mask, bool)
        if not usable.any():
            raise DegenerateInputError("no observed values inside the calibration mask")
        self.usable = usable
        self._obs_bench = method.apply(self.obs, usable)
        # fail early, naming the cause, when the record itself is degenerate
        self._scores(self.obs[None, :])

    def _scores(self, sims) -> np.ndarray:
        value = batch_metric(self.metric, sims, self.obs, self.usable, self.method, self.eps_b,
                             self._obs_bench)
        return value if self.metric == "mse" else 1.0 - value

    def simulate(self, theta_rows) -> np.ndarray:
        return run_batch(self.precip, self.pet, theta_rows, self.state)[:, self.offset:]

    def value(self, theta) -> float:
        return float(self._scores(self.simulate([theta]))[0])

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        p = theta.size
        rows = np.tile(theta, (2 * p + 1, 1))
        idx = np.arange(p)
        rows[1 + idx, idx] += self.h
        rows[1 + p + idx, idx] -= self.h
        sims = self.simulate(rows)
        scores = self._scores(sims)
        grad = (scores[1:p + 1] - scores[p + 1:]) / (2 * self.h)
        return float(scores[0]), grad


def metric_loss(metric, forcing, obs, method=LTM(), mask=None, offset=0,
                state=BucketState(), eps_b=DEFAULT_EPS_B, h=1e-5) -> MetricLoss:
    return MetricLoss(metric, forcing, obs, method, mask, offset, state, eps_b, h)


@dataclass
class CalibrationSetup:
    """Everything needed to calibrate on one catchment.

    ``forcing`` and ``obs`` cover the same dates; spin-up is prepended here.
    ``train_mask`` and ``eval_mask`` are boolean arrays over ``obs``.
    """

    metric: str
    forcing: Forcing
    obs: TimeSeries
    train_mask: np.ndarray
    eval_mask: np.ndarray
    method: BenchmarkMethod = field(default_factory=LTM)
    spinup_years: int = DEFAULT_SPINUP_YEARS
    eps_b: float = DEFAULT_EPS_B

    def __post_init__(self):
        if isinstance(self.method, str):
            self.method = parse_method(self.method)
        ext, self.offset = spinup_prepend(
            {"precip": self.forcing.precip, "pet": self.forcing.pet}, self.spinup_years)
        self.extended = Forcing(ext["precip"], ext["pet"])

    def loss(self, mask, metric=None) -> MetricLoss:
        return MetricLoss(metric or self.metric, self.extended, self.obs, self.method, mask,
                          self.offset, eps_b=self.eps_b)

    def simulate(self, theta) -> TimeSeries:
        q = run_batch(self.extended.precip.values, self.extended.pet.values, [theta])[0]
        return TimeSeries(self.obs.start_date, q[self.offset:], "mm_per_day")


def seed_init(seed: int, index: int, n_params: int = len(PARAM_NAMES)) -> np.ndarray:
    """Standard-normal initialization for run ``index`` under master ``seed``."""
    return np.random.default_rng([seed, index]).standard_normal(n_params)


def _metric_from_loss(metric, loss):
    return loss if metric == "mse" else 1.0 - loss


def multi_seed_calibrate(setup: CalibrationSetup, n_seeds: int = 10,
                         cfg: AdamConfig = AdamConfig()) -> CalibrationResult:
    """Run Adam from ``n_seeds`` random starts and keep the run with the
    lowest mean of training and evaluation loss."""
    if n_seeds < 1:
        raise ArgumentError("n_seeds must be >= 1")
    train_loss = setup.loss(setup.train_mask)
    eval_loss = setup.loss(setup.eval_mask)
    best, best_score, failures, summary = None, math.inf, [], []
    for i in range(n_seeds):
        try:
            res = adam_optimize(train_loss, seed_init(cfg.seed, i), cfg)
        except (CalibrationError, DegenerateInputError) as exc:
            failures.append(f"run {i}: {exc}")
            summary.append({"index": i, "error": str(exc)})
            continue
        lt = res.best_loss
        le = eval_loss.value(res.params)
        score = 0.5 * (lt + le)
        summary.append({"index": i, "train_loss": lt, "eval_loss": le, "score": score})
        if score < best_score:
            best, best_score = res, score
            res.train_value = _metric_from_loss(setup.metric, lt)
            res.eval_value = _metric_from_loss(setup.metric, le)
    if best is None:
        raise CalibrationError("all calibration runs failed: " + "; ".join(failures))
    best.metric, best.method, best.seed_summary = setup.metric, setup.method.label, summary
    return best
