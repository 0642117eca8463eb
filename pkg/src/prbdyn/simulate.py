"""Synthetic trajectory generation with the analytic chain simulator.

The floating base follows a smooth multisine excitation for the first half of
the horizon and then rests exactly (zero pose deviation, velocity, and
acceleration), while the chain keeps moving under its own elasticity.  The
observations are the endpoint position and velocity from forward kinematics
evaluated on the simulated hidden state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import GRAVITY, JointCoeffs, make_field
from .integrate import IntegrationError, step_irk3
from .kinematics import ChainConfig, endpoint_velocity, fk_endpoint

__all__ = [
    "PITCH_LIMIT",
    "Trajectory",
    "multisine_excitation",
    "simulate_trajectory",
    "save_trajectory",
    "load_trajectory",
]

PITCH_LIMIT = np.deg2rad(80.0)

CSV_COLUMNS = (
    ["t"]
    + [f"qb[{i}]" for i in range(6)]
    + [f"dqb[{i}]" for i in range(6)]
    + [f"ddqb[{i}]" for i in range(6)]
    + [f"pe[{i}]" for i in range(3)]
    + [f"dpe[{i}]" for i in range(3)]
)


@dataclass
class Trajectory:
    """Time-indexed samples of inputs x = [q_b, dq_b, ddq_b] and outputs
    y = [p_e, dp_e] at a fixed step ``dt``.  ``hidden`` optionally keeps the
    simulator's hidden states for diagnostics."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    dt: float
    meta: dict = field(default_factory=dict)
    hidden: np.ndarray | None = None

    def __len__(self):
        return self.t.size


def multisine_excitation(seed, amplitudes, harmonics, total_time, dt, rest_pose=None):
    """Smooth randomized base motion, active for the first half then at rest.

    The pose deviation per DOF is an enveloped sum of sinusoids whose
    coefficients are drawn from ``seed`` and normalized so the deviation never
    exceeds the per-DOF amplitude bound.  The envelope sin^4(pi t / T_a)
    vanishes together with its first two derivatives at both ends of the
    active phase, so velocity and acceleration are exactly zero during rest.

    Parameters
    ----------
    seed : int
    amplitudes : (6,) array-like
        Max pose deviation per base DOF: x, y, z [m], roll, pitch, yaw [rad].
        The pitch amplitude must stay within +-80 deg.
    harmonics : sequence of float
        Frequencies in Hz; must be non-empty.
    total_time, dt : float
        Horizon and sample step in seconds.  The active phase lasts
        ``total_time / 2`` rounded down to the sample grid.

    Returns
    -------
    callable ``t -> (q_b, dq_b, ddq_b)``, each a (6,) array.
    """
    amplitudes = np.asarray(amplitudes, dtype=float).ravel()
    if amplitudes.shape != (6,):
        raise ValueError("amplitudes must have 6 entries")
    harmonics = np.asarray(list(harmonics), dtype=float)
    if harmonics.size == 0:
        raise ValueError("harmonic set must not be empty")
    if np.any(harmonics <= 0.0):
        raise ValueError("harmonics must be positive frequencies")
    if amplitudes[4] > PITCH_LIMIT + 1e-12:
        raise ValueError(
            f"pitch amplitude {amplitudes[4]:.3f} rad exceeds the 80 degree bound"
        )
    rest = np.zeros(6) if rest_pose is None else np.asarray(rest_pose, dtype=float)

    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, (6, harmonics.size))
    b = rng.uniform(-1.0, 1.0, (6, harmonics.size))
    # |a sin + b (cos - 1)| <= |a| + 2 |b| summed over harmonics
    bound = (np.abs(a) + 2.0 * np.abs(b)).sum(axis=1)
    scale = np.where(bound > 0.0, amplitudes / np.maximum(bound, 1e-300), 0.0)
    a *= scale[:, None]
    b *= scale[:, None]
    w = 2.0 * np.pi * harmonics

    t_active = np.floor(0.5 * total_time / dt) * dt

    def base_motion(t):
        if t >= t_active or t_active <= 0.0:
            return rest.copy(), np.zeros(6), np.zeros(6)
        u = np.pi * t / t_active
        du = np.pi / t_active
        s, c = np.sin(u), np.cos(u)
        env = s**4
        denv = 4.0 * s**3 * c * du
        ddenv = (12.0 * s**2 * c**2 - 4.0 * s**4) * du**2
        sw, cw = np.sin(w * t), np.cos(w * t)
        m = a @ sw + b @ (cw - 1.0)
        dm = (a * w) @ cw - (b * w) @ sw
        ddm = -(a * w**2) @ sw - (b * w**2) @ cw
        q = rest + env * m
        dq = denv * m + env * dm
        ddq = ddenv * m + 2.0 * denv * dm + env * ddm
        return q, dq, ddq

    return base_motion


def simulate_trajectory(
    cfg: ChainConfig,
    coeffs: JointCoeffs,
    h0,
    base_motion,
    total_time,
    dt,
    gravity=GRAVITY,
    keep_hidden=True,
    meta=None,
) -> Trajectory:
    """Integrate the chain and record (x, y) samples every ``dt`` seconds.

    ``base_motion`` may be ``None`` for a base resting at the identity pose.
    Raises :class:`IntegrationError` (with the failure time attached) if a
    step does not converge.
    """
    if total_time <= 0.0 or dt <= 0.0:
        raise ValueError("total_time and dt must be positive")
    n_steps = int(np.floor(total_time / dt + 1e-9))
    n = cfg.n_el
    h = np.asarray(h0, dtype=float).ravel().copy()
    if h.shape != (4 * n,):
        raise ValueError(f"h0 must have {4 * n} entries")

    if base_motion is None:
        base_motion = lambda t: (np.zeros(6), np.zeros(6), np.zeros(6))

    field_fn, jac_fn = make_field(cfg, coeffs, gravity=gravity)

    def input_at(t):
        return np.concatenate(base_motion(t))

    ts = np.arange(n_steps + 1) * dt
    xs = np.empty((n_steps + 1, 18))
    ys = np.empty((n_steps + 1, 6))
    hidden = np.empty((n_steps + 1, 4 * n))

    def record(k, t, state):
        x = input_at(t)
        xs[k] = x
        q_b, dq_b = x[:6], x[6:12]
        ys[k, :3] = fk_endpoint(cfg, q_b, state[: 2 * n])
        ys[k, 3:] = endpoint_velocity(cfg, q_b, state[: 2 * n], dq_b, state[2 * n :])
        hidden[k] = state

    record(0, 0.0, h)
    for k in range(n_steps):
        t_k = k * dt
        try:
            h = step_irk3(field_fn, h, lambda tau: input_at(t_k + tau), dt, jac=jac_fn)
        except IntegrationError as err:
            err.time = t_k
            raise
        record(k + 1, t_k + dt, h)

    return Trajectory(
        t=ts, x=xs, y=ys, dt=float(dt), meta=dict(meta or {}),
        hidden=hidden if keep_hidden else None,
    )


def save_trajectory(traj: Trajectory, csv_path):
    """Write the 25-column CSV and a JSON sidecar next to it."""
    csv_path = Path(csv_path)
    table = np.column_stack([traj.t, traj.x, traj.y])
    header = ",".join(CSV_COLUMNS)
    np.savetxt(csv_path, table, delimiter=",", header=header, comments="", fmt="%.17g")
    sidecar = {"dt": traj.dt, "n_samples": len(traj), **traj.meta}
    csv_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))


def load_trajectory(csv_path) -> Trajectory:
    csv_path = Path(csv_path)
    with open(csv_path) as fh:
        header = fh.readline().strip().split(",")
    if header != CSV_COLUMNS:
        raise ValueError(f"{csv_path} does not have the expected trajectory columns")
    table = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    meta = {}
    sidecar = csv_path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    dt = float(meta.get("dt", table[1, 0] - table[0, 0] if table.shape[0] > 1 else 0.0))
    meta = {k: v for k, v in meta.items() if k not in ("dt", "n_samples")}
    return Trajectory(
        t=table[:, 0], x=table[:, 1:19], y=table[:, 19:25], dt=dt, meta=meta
    )
