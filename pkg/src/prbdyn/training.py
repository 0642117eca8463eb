"""Rollout training: regularized loss, window datasets, optimizer, metrics.

The loss is a weighted squared prediction error averaged over batch and
rollout steps plus a regularization term: an L2 penalty on the hidden state
(spring potential / kinetic energy of the chain through the PRB lens), an
anchor keeping the summed element lengths at the calibrated DLO length, and
priors tying the learnable geometry to its initial discretization.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import nn
from .kinematics import uniform_discretization
from .model import DivergenceError, ModelBundle, rollout
from .simulate import Trajectory

__all__ = [
    "LossConfig",
    "WindowDataset",
    "OptConfig",
    "EvalResult",
    "regularization",
    "rollout_loss",
    "make_windows",
    "windows_from_trajectories",
    "split",
    "minimize",
    "fit",
    "evaluate_rmse",
]


@dataclass
class LossConfig:
    """Weights of the rollout loss.

    ``w_y`` holds the diagonal of the 6x6 observation weight; position errors
    [m] get unit weight and velocity errors [m/s] are scaled down by default
    to balance magnitudes.  ``w_k`` is an optional per-step weight vector
    (uniform when None).
    """

    w_y: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 1.0, 0.1, 0.1, 0.1]))
    w_k: np.ndarray | None = None
    alpha_q: float = 1e-2
    alpha_qd: float = 1e-5
    alpha_len: float = 1.0
    alpha_el: float = 1.0
    alpha_eb: float = 1.0
    theta_el_prior: np.ndarray | None = None
    theta_eb_prior: np.ndarray | None = None
    total_length: float | None = None

    def __post_init__(self):
        self.w_y = np.asarray(self.w_y, dtype=float)
        if self.w_y.shape != (6,) or np.any(self.w_y < 0):
            raise ValueError("w_y must be 6 non-negative diagonal entries")
        for name in ("alpha_q", "alpha_qd", "alpha_len", "alpha_el", "alpha_eb"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.w_k is not None:
            self.w_k = np.asarray(self.w_k, dtype=float)
            if np.any(self.w_k < 0):
                raise ValueError("w_k must be non-negative")

    @classmethod
    def for_bundle(cls, bundle: ModelBundle, **overrides) -> "LossConfig":
        """Defaults for a model: physics-informed variants get the full
        regularization, black-box baselines a plain weighted L2 loss."""
        nominal = uniform_discretization(bundle.total_length, bundle.n_el)
        base = dict(
            theta_el_prior=nominal.theta_el,
            theta_eb_prior=nominal.theta_eb,
            total_length=bundle.total_length,
        )
        if not bundle.physics_informed:
            base.update(alpha_q=0.0, alpha_qd=0.0, alpha_len=0.0,
                        alpha_el=0.0, alpha_eb=0.0)
        base.update(overrides)
        return cls(**base)


def regularization(bundle: ModelBundle, params, hs, cfg: LossConfig):
    """Regularization term of the rollout loss.

    State terms are averaged over all rollout states like the data term;
    geometry terms act on the learnable element lengths and marker offset.
    """
    n = bundle.n_el
    shape = hs.value.shape if isinstance(hs, ad.Var) else np.shape(hs)
    count = float(np.prod(shape[:-1]))
    total = 0.0
    if cfg.alpha_q > 0.0:
        q = hs[..., : 2 * n]
        total = ad.add(total, ad.mul(cfg.alpha_q / count, ad.sum_(ad.mul(q, q))))
    if cfg.alpha_qd > 0.0:
        dq = hs[..., 2 * n :]
        total = ad.add(total, ad.mul(cfg.alpha_qd / count, ad.sum_(ad.mul(dq, dq))))
    if bundle.physics_informed and "chain.log_theta_el" in params:
        theta_el = ad.exp(params["chain.log_theta_el"])
        theta_eb = params["chain.theta_eb"]
        if cfg.alpha_len > 0.0:
            if cfg.total_length is None or cfg.theta_eb_prior is None:
                raise ValueError("length anchor needs total_length and theta_eb_prior")
            reach = ad.add(ad.sum_(theta_el), cfg.theta_eb_prior[0])
            gap = ad.sub(reach, cfg.total_length)
            total = ad.add(total, ad.mul(cfg.alpha_len, ad.mul(gap, gap)))
        if cfg.alpha_el > 0.0:
            if cfg.theta_el_prior is None:
                raise ValueError("element prior needs theta_el_prior")
            d = ad.sub(theta_el, cfg.theta_el_prior)
            total = ad.add(total, ad.mul(cfg.alpha_el, ad.sum_(ad.mul(d, d))))
        if cfg.alpha_eb > 0.0:
            if cfg.theta_eb_prior is None:
                raise ValueError("marker prior needs theta_eb_prior")
            d = ad.sub(theta_eb, cfg.theta_eb_prior)
            total = ad.add(total, ad.mul(cfg.alpha_eb, ad.sum_(ad.mul(d, d))))
    return total


def rollout_loss(bundle: ModelBundle, window, cfg: LossConfig, params=None):
    """Weighted squared prediction error plus regularization.

    ``window`` is a tuple ``(y0, xs, targets)`` with shapes (6,), (N+1, 18),
    (N, 6), or their batched forms (B, 6), (N+1, B, 18), (N, B, 6).
    """
    params = bundle.params if params is None else params
    y0, xs, targets = window
    targets = np.asarray(targets, dtype=float)
    ys, hs = rollout(bundle, y0, xs, params=params)
    n_steps = targets.shape[0]
    count = float(np.prod(targets.shape[:-1]))

    res = ad.sub(ys, targets)
    sq = ad.mul(res, res)
    weighted = ad.sum_(ad.mul(sq, cfg.w_y), axis=-1)
    if cfg.w_k is not None:
        if cfg.w_k.shape != (n_steps,):
            raise ValueError(f"w_k must have length {n_steps}")
        shape = (n_steps,) + (1,) * (len(targets.shape) - 2)
        weighted = ad.mul(weighted, cfg.w_k.reshape(shape))
    data_term = ad.mul(ad.sum_(weighted), 1.0 / count)
    loss = ad.add(data_term, regularization(bundle, params, hs, cfg))
    value = loss.value if isinstance(loss, ad.Var) else loss
    if not np.isfinite(value):
        raise DivergenceError(n_steps)
    return loss


# ----------------------------------------------------------------- windows

@dataclass
class WindowDataset:
    """Rolling-window views of one or more trajectories.

    y0      : (M, 6) first observations
    xs      : (M, N+1, 18) inputs x_k .. x_{k+N}
    targets : (M, N, 6) observations y_{k+1} .. y_{k+N}
    """

    y0: np.ndarray
    xs: np.ndarray
    targets: np.ndarray
    n_steps: int
    dt: float
    tag: str = ""

    def __post_init__(self):
        if self.xs.shape[1] != self.n_steps + 1 or self.targets.shape[1] != self.n_steps:
            raise ValueError("window arrays inconsistent with n_steps")
        if not (len(self.y0) == len(self.xs) == len(self.targets)):
            raise ValueError("window arrays must have equal counts")
        for arr in (self.y0, self.xs, self.targets):
            if not np.all(np.isfinite(arr)):
                raise ValueError("windows must contain finite values")

    def __len__(self):
        return len(self.y0)

    def subset(self, indices) -> "WindowDataset":
        indices = np.asarray(indices, dtype=int)
        return replace(self, y0=self.y0[indices], xs=self.xs[indices],
                       targets=self.targets[indices])

    def batch(self, indices):
        """Window tuple in rollout layout: (B, 6), (N+1, B, 18), (N, B, 6)."""
        sel = self.subset(indices)
        return sel.y0, sel.xs.transpose(1, 0, 2), sel.targets.transpose(1, 0, 2)

    @staticmethod
    def concatenate(datasets) -> "WindowDataset":
        datasets = list(datasets)
        first = datasets[0]
        if any(d.n_steps != first.n_steps or d.dt != first.dt for d in datasets):
            raise ValueError("datasets must share N and dt")
        return replace(
            first,
            y0=np.concatenate([d.y0 for d in datasets]),
            xs=np.concatenate([d.xs for d in datasets]),
            targets=np.concatenate([d.targets for d in datasets]),
        )


def make_windows(traj: Trajectory, n_steps: int, stride: int, tag="") -> WindowDataset:
    """Slice a trajectory into rollout windows.

    Window k covers samples k .. k+N; starts advance by ``stride`` while
    k + N <= len(traj) - 1.  Raises if the trajectory is too short for one
    window.
    """
    total = len(traj)
    if n_steps < 1 or stride < 1:
        raise ValueError("n_steps and stride must be >= 1")
    if total <= n_steps:
        raise ValueError(
            f"trajectory with {total} samples is too short for windows of {n_steps} steps"
        )
    starts = np.arange(0, total - n_steps, stride)
    y0 = traj.y[starts]
    xs = np.stack([traj.x[k : k + n_steps + 1] for k in starts])
    targets = np.stack([traj.y[k + 1 : k + n_steps + 1] for k in starts])
    return WindowDataset(y0=y0, xs=xs, targets=targets, n_steps=n_steps,
                         dt=traj.dt, tag=tag)


def windows_from_trajectories(trajs, n_steps, stride, tag="") -> WindowDataset:
    return WindowDataset.concatenate(
        [make_windows(t, n_steps, stride, tag=tag) for t in trajs]
    )


def split(dataset: WindowDataset, fraction: float, seed: int = 0):
    """Deterministic shuffled split into (train, val); disjoint, exhaustive."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    m = len(dataset)
    if m == 0:
        raise ValueError("cannot split an empty dataset")
    perm = np.random.default_rng(seed).permutation(m)
    n_train = max(1, int(fraction * m))
    if n_train >= m:
        warnings.warn("validation split is empty; using all windows for training")
        n_train = m
    train = replace(dataset.subset(perm[:n_train]), tag="train")
    val = replace(dataset.subset(perm[n_train:]), tag="val")
    return train, val


# --------------------------------------------------------------- optimizer

@dataclass
class OptConfig:
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    clip_norm: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    cosine_decay: bool = True


class _Adam:
    """Adaptive-moment update with bias correction and gradient clipping."""

    def __init__(self, size, cfg: OptConfig):
        self.cfg = cfg
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, data, grad, lr):
        cfg = self.cfg
        if cfg.clip_norm > 0.0:
            norm = float(np.linalg.norm(grad))
            if norm > cfg.clip_norm:
                grad = grad * (cfg.clip_norm / norm)
        self.t += 1
        self.m = cfg.beta1 * self.m + (1.0 - cfg.beta1) * grad
        self.v = cfg.beta2 * self.v + (1.0 - cfg.beta2) * grad**2
        m_hat = self.m / (1.0 - cfg.beta1**self.t)
        v_hat = self.v / (1.0 - cfg.beta2**self.t)
        return data - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def _lr_at(cfg: OptConfig, step, total_steps):
    if not cfg.cosine_decay or total_steps <= 1:
        return cfg.learning_rate
    frac = min(step / max(total_steps - 1, 1), 1.0)
    return cfg.learning_rate * 0.5 * (1.0 + np.cos(np.pi * frac))


def minimize(objective, params: nn.ParamVector, cfg: OptConfig, steps: int):
    """Run Adam on a scalar objective; returns (params, loss history)."""
    adam = _Adam(params.size, cfg)
    current = params.copy()
    history = []
    for step in range(steps):
        value, g = nn.value_and_grad(objective, current)
        history.append(value)
        lr = _lr_at(cfg, step, steps)
        current = nn.ParamVector(adam.step(current.data, g.data, lr), current.index)
    return current, history


# --------------------------------------------------------------------- fit

def fit(bundle: ModelBundle, train: WindowDataset, val: WindowDataset,
        opt: OptConfig, loss_cfg: LossConfig, log=None):
    """Optimize all parameters (networks and chain geometry) jointly.

    Returns ``(best_bundle, history)`` where the bundle carries the
    parameters with the lowest validation loss and history is a list of
    per-epoch records.  On divergence the last good parameters are kept and
    the final record is flagged.
    """
    if len(train) == 0:
        raise ValueError("training set is empty")
    params = bundle.params.copy()
    adam = _Adam(params.size, opt)
    rng = np.random.default_rng(opt.seed)
    n_batches = max(1, int(np.ceil(len(train) / opt.batch_size)))
    total_steps = max(opt.epochs * n_batches, 1)
    best_params = params.copy()
    best_val = np.inf
    history = []
    step = 0
    start = time.perf_counter()
    for epoch in range(opt.epochs):
        perm = rng.permutation(len(train))
        epoch_losses = []
        diverged = False
        for b in range(n_batches):
            idx = perm[b * opt.batch_size : (b + 1) * opt.batch_size]
            if idx.size == 0:
                continue
            window = train.batch(idx)

            def objective(p):
                return rollout_loss(bundle, window, loss_cfg, params=p)

            try:
                value, g = nn.value_and_grad(objective, params)
            except DivergenceError:
                diverged = True
                break
            if not np.all(np.isfinite(g.data)):
                diverged = True
                break
            epoch_losses.append(value)
            lr = _lr_at(opt, step, total_steps)
            params = nn.ParamVector(adam.step(params.data, g.data, lr), params.index)
            step += 1

        val_loss = _dataset_loss(bundle, val if len(val) else train, loss_cfg,
                                 params, opt.batch_size)
        record = {
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)) if epoch_losses else np.nan,
            "val_loss": val_loss,
            "wall_time_s": time.perf_counter() - start,
        }
        if diverged:
            record["diverged"] = True
        history.append(record)
        if log:
            log(record)
        if np.isfinite(val_loss) and val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
        if diverged:
            break
    return bundle.with_params(best_params), history


def _dataset_loss(bundle, dataset, loss_cfg, params, batch_size):
    if len(dataset) == 0:
        return np.nan
    total, count = 0.0, 0
    for start in range(0, len(dataset), batch_size):
        idx = np.arange(start, min(start + batch_size, len(dataset)))
        window = dataset.batch(idx)
        try:
            loss = rollout_loss(bundle, window, loss_cfg, params=params)
        except DivergenceError:
            return np.inf
        total += float(loss if not isinstance(loss, ad.Var) else loss.value) * idx.size
        count += idx.size
    return total / count


# ------------------------------------------------------------------ metrics

@dataclass
class EvalResult:
    pos_rmse: float
    vel_rmse: float
    n_windows: int


def evaluate_rmse(predictor, trajectories, n_steps, multiplier=1.0,
                  stride=None) -> EvalResult:
    """Open-loop RMSE over rolling windows of length ``multiplier * n_steps``.

    ``predictor`` is a ModelBundle (batched rollout) or a callable
    ``(y0, xs) -> ys`` evaluated per window.  Windows start every ``stride``
    samples (default: non-overlapping at the rollout length); trajectories
    too short for a single window are skipped and reported via ``n_windows``.
    """
    horizon = int(round(multiplier * n_steps))
    if horizon < 1:
        raise ValueError("horizon must cover at least one step")
    stride = horizon if stride is None else stride
    sq_pos, sq_vel, n_samples, n_windows = 0.0, 0.0, 0, 0
    datasets = []
    for traj in trajectories:
        if len(traj) <= horizon:
            continue
        datasets.append(make_windows(traj, horizon, stride))
    if not datasets:
        return EvalResult(np.nan, np.nan, 0)
    data = WindowDataset.concatenate(datasets)
    if isinstance(predictor, ModelBundle):
        window = data.batch(np.arange(len(data)))
        ys, _ = rollout(predictor, window[0], window[1])
        preds = np.asarray(ys).transpose(1, 0, 2)
    else:
        preds = np.stack([
            np.asarray(predictor(data.y0[i], data.xs[i])) for i in range(len(data))
        ])
    err = preds - data.targets
    sq_pos = np.sum(err[..., :3] ** 2)
    sq_vel = np.sum(err[..., 3:] ** 2)
    n_samples = err.shape[0] * err.shape[1]
    n_windows = len(data)
    return EvalResult(
        pos_rmse=float(np.sqrt(sq_pos / n_samples)),
        vel_rmse=float(np.sqrt(sq_vel / n_samples)),
        n_windows=n_windows,
    )
