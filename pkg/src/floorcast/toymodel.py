"""Numpy trainer for the tied-weight sparse-feature autoencoder.

The model encodes ``x`` (``n`` features) to ``h = W x`` (``d`` dims) and
decodes ``x_hat = ReLU(W^T h + b)``.  Training minimizes the importance
weighted reconstruction error with a hand-written Adam update; the loss it
converges to is the model's loss floor at width ``d``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError, DomainError
from .importance import ImportanceSpec

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ToyRunConfig:
    n_features: int
    d_hidden: int
    alpha: float
    importance: ImportanceSpec
    seed: int = 0
    steps: int = 2000
    batch_size: int = 1024
    learning_rate: float = 1e-3
    eval_fraction: float = 0.1
    eval_every: int = 20

    def __post_init__(self):
        if not 1 <= self.d_hidden <= self.n_features:
            raise DomainError(f"need 1 <= d_hidden <= n_features, got d={self.d_hidden}, n={self.n_features}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.importance.n_features != self.n_features:
            raise DomainError("importance length does not match n_features")
        if self.steps < 1 or self.batch_size < 1 or self.eval_every < 1:
            raise DomainError("steps, batch_size and eval_every must be positive")
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be positive")
        if not 0.0 < self.eval_fraction <= 1.0:
            raise DomainError("eval_fraction must be in (0, 1]")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    @property
    def config_id(self) -> str:
        imp = self.importance
        tag = imp.kind if imp.beta is None else f"{imp.kind}{imp.beta:g}"
        return f"n{self.n_features}-d{self.d_hidden}-a{self.alpha:g}-{tag}"


@dataclass
class ModelState:
    W: np.ndarray  # (d_hidden, n_features)
    b: np.ndarray  # (n_features,)

    def copy(self) -> "ModelState":
        return ModelState(self.W.copy(), self.b.copy())


@dataclass
class FloorMeasurement:
    config_id: str
    actual_floor: float
    floor_std: float = 0.0
    n_seeds: int = 1
    loss_history: list = field(default_factory=list)
    n_diverged: int = 0


def run_seed_sequence(seed: int, config_id: str) -> np.random.SeedSequence:
    """Independent RNG stream for one (seed, config) pair.

    Derived from a stable hash of ``config_id`` so results never depend on
    scheduling order or on Python's salted ``hash``.
    """
    digest = hashlib.sha256(config_id.encode()).digest()
    words = tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))
    return np.random.SeedSequence(entropy=int(seed), spawn_key=words)


def generate_batch(alpha: float, n_features: int, batch_size: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw ``batch_size`` sparse feature vectors.

    Each coordinate is 0 with probability ``alpha`` and uniform on [0, 1)
    otherwise.  One uniform draw per coordinate supplies both the gate and,
    rescaled, the active value.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    x = rng.random((batch_size, n_features))
    x -= alpha
    np.maximum(x, 0.0, out=x)
    x *= 1.0 / (1.0 - alpha)
    return x


def init_state(n_features: int, d_hidden: int, rng: np.random.Generator) -> ModelState:
    bound = 1.0 / math.sqrt(n_features)
    return ModelState(rng.uniform(-bound, bound, size=(d_hidden, n_features)),
                      np.zeros(n_features))


def forward(state: ModelState, x: np.ndarray):
    """Return ``(h, x_hat)`` for one vector or a batch (rows)."""
    x = np.asarray(x, dtype=np.float64)
    d, n = state.W.shape
    if x.shape[-1] != n or state.b.shape != (n,):
        raise DomainError(f"dimension mismatch: x has {x.shape[-1]} features, model has {n}")
    h = x @ state.W.T
    x_hat = np.maximum(h @ state.W + state.b, 0.0)
    return h, x_hat


def weighted_loss(x, x_hat, importance) -> float:
    """Batch mean of ``sum_i I_i (x_i - x_hat_i)^2``."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    imp = np.asarray(getattr(importance, "values", importance), dtype=np.float64)
    if x.shape != x_hat.shape or x.shape[-1] != imp.size:
        raise DomainError("x, x_hat and importance lengths must agree")
    sq = (x - x_hat) ** 2 @ imp
    return float(np.mean(sq))


def _grad_arrays(W, b, x, imp):
    h = x @ W.T
    z = h @ W
    z += b
    dz = np.maximum(z, 0.0)
    dz -= x
    # ReLU'(0) := 0
    dz *= z > 0.0
    dz *= (2.0 / x.shape[0]) * imp
    db = dz.sum(axis=0)
    # W appears twice: decoder (h @ W) and encoder (x @ W.T)
    dW = h.T @ dz
    dW += (dz @ W.T).T @ x
    return dW, db


def grad(state: ModelState, batch, importance) -> ModelState:
    """Exact gradient of :func:`weighted_loss` with respect to ``W`` and ``b``."""
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    imp = np.asarray(getattr(importance, "values", importance), dtype=np.float64)
    if x.shape[1] != state.W.shape[1] or imp.size != x.shape[1]:
        raise DomainError("batch, model and importance dimensions must agree")
    dW, db = _grad_arrays(state.W, state.b, x, imp)
    return ModelState(dW, db)


def train(config: ToyRunConfig, return_state: bool = False):
    """Train one seed and measure its loss floor.

    The floor is the mean evaluation loss over the last ``eval_fraction`` of
    evaluations, each on a fresh batch from a dedicated evaluation stream.
    Raises :class:`DivergenceError` on a non-finite loss.
    """
    init_ss, data_ss, eval_ss = run_seed_sequence(config.seed, config.config_id).spawn(3)
    data_rng = np.random.default_rng(data_ss)
    eval_rng = np.random.default_rng(eval_ss)
    state = init_state(config.n_features, config.d_hidden, np.random.default_rng(init_ss))
    imp = config.importance.values
    W, b = state.W, state.b
    mW, vW = np.zeros_like(W), np.zeros_like(W)
    mb, vb = np.zeros_like(b), np.zeros_like(b)
    lr = config.learning_rate
    history = []
    for t in range(1, config.steps + 1):
        x = generate_batch(config.alpha, config.n_features, config.batch_size, data_rng)
        dW, db = _grad_arrays(W, b, x, imp)
        c1 = 1.0 - ADAM_BETA1 ** t
        c2 = 1.0 - ADAM_BETA2 ** t
        for p, g, m, v in ((W, dW, mW, vW), (b, db, mb, vb)):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        if t % config.eval_every == 0 or t == config.steps:
            xe = generate_batch(config.alpha, config.n_features, config.batch_size, eval_rng)
            _, xe_hat = forward(state, xe)
            loss = weighted_loss(xe, xe_hat, imp)
            if not math.isfinite(loss):
                raise DivergenceError(f"{config.config_id} seed {config.seed}: non-finite loss at step {t}")
            history.append((t, loss))
    k = max(1, math.ceil(len(history) * config.eval_fraction))
    floor = float(np.mean([loss for _, loss in history[-k:]]))
    result = FloorMeasurement(config.config_id, floor, 0.0, 1, history)
    return (result, state) if return_state else result


def train_seeds(config: ToyRunConfig, seeds) -> FloorMeasurement:
    """Train ``config`` once per seed and aggregate the floors.

    Diverged seeds are excluded and counted in ``n_diverged``.  The std is
    the sample std (ddof=1) when at least two seeds survive.
    """
    floors, histories, diverged = [], [], 0
    for s in seeds:
        try:
            m = train(replace(config, seed=int(s)))
        except DivergenceError:
            diverged += 1
            continue
        floors.append(m.actual_floor)
        histories.append(m.loss_history)
    if not floors:
        return FloorMeasurement(config.config_id, float("nan"), float("nan"), 0, [], diverged)
    mean_hist = [(step, float(np.mean([h[i][1] for h in histories])))
                 for i, (step, _) in enumerate(histories[0])]
    std = float(np.std(floors, ddof=1)) if len(floors) > 1 else 0.0
    return FloorMeasurement(config.config_id, float(np.mean(floors)), std,
                            len(floors), mean_hist, diverged)
