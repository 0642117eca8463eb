"""Sequence model of the chain: encoder, latent dynamics, decoder, rollout.

Four variants share one rollout engine.  The physics-informed variants
(PRBN-RNN, PRBN-ResNet) use an inverse-kinematics encoder whose velocity
output is the exact forward-mode derivative of its position output, and a
forward-kinematics decoder with learnable element lengths, so the hidden
state stays physically interpretable.  The black-box variants (RNN, ResNet)
replace both with plain MLPs of matching hidden dimension.

All forward functions are written against :mod:`prbdyn.autodiff` primitives:
they run on plain arrays for fast prediction and on tape variables during
training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import nn
from .kinematics import ChainConfig, uniform_discretization

__all__ = [
    "VARIANTS",
    "DivergenceError",
    "ModelBundle",
    "make_bundle",
    "encode_features",
    "encode",
    "dynamics_step",
    "decode",
    "rollout",
    "chain_points",
    "save_bundle",
    "load_bundle",
]

VARIANTS = ("PRBN-RNN", "PRBN-ResNet", "RNN", "ResNet")
BUNDLE_FORMAT = "prbdyn-bundle-v1"

OBS_DIM = 6
INPUT_DIM = 18
FEATURE_DIM = 9


class DivergenceError(RuntimeError):
    """Rollout produced a non-finite state; ``step`` names the offender."""

    def __init__(self, step):
        super().__init__(f"non-finite state at rollout step {step}")
        self.step = step


@dataclass(frozen=True)
class ModelBundle:
    """A trained or initialized model: architecture tag plus parameters.

    For the physics-informed variants the chain geometry is part of the
    parameter vector (element lengths stored as logarithms so they remain
    positive); ``chain`` always reflects the current values.
    """

    variant: str
    n_el: int
    widths: tuple
    dt: float
    total_length: float
    params: nn.ParamVector
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    @property
    def hidden_dim(self):
        return 4 * self.n_el

    @property
    def physics_informed(self):
        return self.variant.startswith("PRBN")

    @property
    def chain(self) -> ChainConfig:
        if self.physics_informed:
            theta_el = np.exp(self.params["chain.log_theta_el"])
            theta_eb = self.params["chain.theta_eb"].copy()
        else:
            nominal = uniform_discretization(self.total_length, self.n_el)
            theta_el, theta_eb = nominal.theta_el, nominal.theta_eb
        return ChainConfig(
            n_el=self.n_el, theta_el=theta_el, theta_eb=theta_eb,
            total_length=self.total_length,
        )

    @property
    def encoder_spec(self) -> nn.MlpSpec:
        if self.physics_informed:
            return nn.MlpSpec(FEATURE_DIM, self.widths, 2 * self.n_el)
        return nn.MlpSpec(OBS_DIM + INPUT_DIM, self.widths, self.hidden_dim)

    @property
    def decoder_spec(self) -> nn.MlpSpec | None:
        if self.physics_informed:
            return None
        return nn.MlpSpec(self.hidden_dim + INPUT_DIM, self.widths, OBS_DIM)

    @property
    def dynamics_spec(self) -> nn.MlpSpec | None:
        if self.variant.endswith("ResNet"):
            return nn.MlpSpec(self.hidden_dim + INPUT_DIM, self.widths, self.hidden_dim)
        return None

    def with_params(self, params: nn.ParamVector) -> "ModelBundle":
        return replace(self, params=params)


def _param_shapes(variant, n_el, widths, total_length):
    bundle = ModelBundle(
        variant=variant, n_el=n_el, widths=tuple(widths), dt=0.004,
        total_length=total_length, params=nn.ParamVector(np.zeros(0), {}),
    )
    shapes = dict(nn.mlp_param_shapes(bundle.encoder_spec, prefix="enc."))
    if variant.endswith("ResNet"):
        shapes.update(nn.mlp_param_shapes(bundle.dynamics_spec, prefix="dyn."))
    else:
        shapes.update(
            nn.gru_param_shapes(bundle.hidden_dim + INPUT_DIM, bundle.hidden_dim,
                                prefix="dyn.")
        )
    if bundle.physics_informed:
        shapes["chain.log_theta_el"] = (n_el,)
        shapes["chain.theta_eb"] = (3,)
    else:
        shapes.update(nn.mlp_param_shapes(bundle.decoder_spec, prefix="dec."))
    return shapes


def make_bundle(variant, n_el, total_length, dt, seed, widths=(64, 64)) -> ModelBundle:
    """Initialize a model with seeded weights and uniform chain geometry."""
    shapes = _param_shapes(variant, n_el, tuple(widths), total_length)
    params = nn.init_params(shapes, seed)
    if variant.startswith("PRBN"):
        nominal = uniform_discretization(total_length, n_el)
        off, _ = params.index["chain.log_theta_el"]
        params.data[off : off + n_el] = np.log(nominal.theta_el)
        off, _ = params.index["chain.theta_eb"]
        params.data[off : off + 3] = nominal.theta_eb
    return ModelBundle(
        variant=variant, n_el=n_el, widths=tuple(widths), dt=float(dt),
        total_length=float(total_length), params=params, seed=int(seed),
    )


# ----------------------------------------------------------------- encoder

def encode_features(y, x):
    """Observation features: [p_e - p_b, sin(Psi_b), cos(Psi_b)].

    Subtracting the base position makes the features invariant to rigid
    translations; sine/cosine avoid wrap-around discontinuities in the base
    Euler angles.
    """
    p_rel = ad.sub(y[..., 0:3], x[..., 0:3])
    psi = x[..., 3:6]
    return ad.concat([p_rel, ad.sin(psi), ad.cos(psi)], axis=-1)


def _features_with_time_tangent(y, x):
    """Features plus their exact time derivative from (dp_e, dq_b)."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    feat = encode_features(y, x)
    psi = x[..., 3:6]
    dpsi = x[..., 9:12]
    dfeat = np.concatenate(
        [
            y[..., 3:6] - x[..., 6:9],
            np.cos(psi) * dpsi,
            -np.sin(psi) * dpsi,
        ],
        axis=-1,
    )
    return feat, dfeat


def encode(bundle: ModelBundle, params, y, x):
    """Map an observation/input pair to the hidden state h = [q, dq].

    The physics-informed encoder predicts the chain's inverse kinematics; its
    velocity half is the forward-mode derivative of the position half along
    the observed velocities, so dq is the true time derivative of q.  The
    black-box encoder predicts all of h directly.
    """
    if bundle.physics_informed:
        feat, dfeat = _features_with_time_tangent(y, x)
        dual = nn.mlp_forward(bundle.encoder_spec, params, ad.Dual(feat, dfeat),
                              prefix="enc.")
        q, dq = dual.primal, dual.tangent
        if dq is None:
            dq = np.zeros(_shape_of(q))
        return ad.concat([q, dq], axis=-1)
    stacked = ad.concat([y, x], axis=-1)
    return nn.mlp_forward(bundle.encoder_spec, params, stacked, prefix="enc.")


def _shape_of(v):
    return v.value.shape if isinstance(v, ad.Var) else np.shape(v)


# ---------------------------------------------------------------- dynamics

# Fixed unit scales that bring network inputs and the recurrent state to
# O(1).  Joint rates of the excited chain reach tens of rad/s, which a gated
# recurrent state (bounded candidates) could not represent in raw units, and
# base accelerations would saturate the gates.  The scaling is a constant
# diagonal map, so the hidden state stays physically interpretable; powers of
# two keep the scale/unscale roundtrip exact.
STATE_RATE_SCALE = 8.0    # rad/s per internal unit of dq_prb
INPUT_RATE_SCALE = 2.0    # m/s, rad/s per unit of dq_b
INPUT_ACC_SCALE = 16.0    # m/s^2, rad/s^2 per unit of ddq_b


def _state_scales(n_el):
    return np.concatenate(
        [np.ones(2 * n_el), np.full(2 * n_el, STATE_RATE_SCALE)]
    )


def _dynamics_features(x):
    """Translation-invariant, unit-scaled view of the base input.

    The chain dynamics depend on the base orientation (gravity direction in
    the base frame) and its rates, never on the absolute base position, so
    p_b is replaced by the sine/cosine of the base Euler angles.  Keeps the
    18-dim input layout.
    """
    x = np.asarray(x, dtype=float)
    psi = x[..., 3:6]
    return np.concatenate(
        [
            np.sin(psi),
            np.cos(psi),
            x[..., 6:12] / INPUT_RATE_SCALE,
            x[..., 12:18] / INPUT_ACC_SCALE,
        ],
        axis=-1,
    )


def dynamics_step(bundle: ModelBundle, params, h, x):
    """One discrete-time transition h_{k+1} = F(h_k, x_k).

    The network operates on the scaled state z = h / scales; the update is
    mapped back to physical units, so zero-weight networks keep their exact
    contracts (identity residual, state halving for the GRU).
    """
    scales = _state_scales(bundle.n_el)
    u_x = _dynamics_features(x)
    z = ad.mul(h, 1.0 / scales)
    if bundle.variant.endswith("ResNet"):
        z_next = nn.residual_step(bundle.dynamics_spec, params, z, u_x, prefix="dyn.")
    else:
        u = ad.concat([z, u_x], axis=-1)
        z_next = nn.gru_cell(params, z, u, prefix="dyn.")
    return ad.mul(z_next, scales)


# ----------------------------------------------------------------- decoder

def _rot_entries(entries, batch):
    """Assemble a (..., 3, 3) rotation from nine (..., 1) entries."""
    flat = ad.concat(entries, axis=-1)
    return ad.reshape(flat, batch + (3, 3))


def _rot_yz_ops(psi_y, psi_z, batch):
    cy, sy = ad.cos(psi_y), ad.sin(psi_y)
    cz, sz = ad.cos(psi_z), ad.sin(psi_z)
    zero = np.zeros(batch + (1,))
    return _rot_entries(
        [
            ad.mul(cy, cz), ad.neg(ad.mul(cy, sz)), sy,
            sz, cz, zero,
            ad.neg(ad.mul(sy, cz)), ad.mul(sy, sz), cy,
        ],
        batch,
    )


def _base_rot_ops(eul, batch):
    ex, ey, ez = eul[..., 0:1], eul[..., 1:2], eul[..., 2:3]
    one = np.ones(batch + (1,))
    zero = np.zeros(batch + (1,))
    cx, sx = ad.cos(ex), ad.sin(ex)
    cy, sy = ad.cos(ey), ad.sin(ey)
    cz, sz = ad.cos(ez), ad.sin(ez)
    rx = _rot_entries([one, zero, zero, zero, cx, ad.neg(sx), zero, sx, cx], batch)
    ry = _rot_entries([cy, zero, sy, zero, one, zero, ad.neg(sy), zero, cy], batch)
    rz = _rot_entries([cz, ad.neg(sz), zero, sz, cz, zero, zero, zero, one], batch)
    return ad.matmul(rx, ad.matmul(ry, rz))


def _axis_vec(theta_j):
    """(3, 1) translation [theta, 0, 0] from a scalar parameter slice."""
    t = ad.reshape(theta_j, (1, 1))
    return ad.concat([t, np.zeros((2, 1))], axis=0)


def _fk_ops(q_b, q_prb, theta_el, theta_eb, n_el, batch):
    """Endpoint of the chain; every argument may be Dual/Var/ndarray."""
    rot = _base_rot_ops(q_b[..., 3:6], batch)
    pos = ad.reshape(q_b[..., 0:3], batch + (3, 1))
    for j in range(n_el):
        pos = ad.add(pos, ad.matmul(rot, _axis_vec(theta_el[j : j + 1])))
        rot = ad.matmul(rot, _rot_yz_ops(q_prb[..., 2 * j : 2 * j + 1],
                                         q_prb[..., 2 * j + 1 : 2 * j + 2], batch))
    pos = ad.add(pos, ad.matmul(rot, ad.reshape(theta_eb, (3, 1))))
    return ad.reshape(pos, batch + (3,))


def decode(bundle: ModelBundle, params, h, x):
    """Map hidden state and input to the predicted observation.

    Physics-informed variants evaluate the chain's forward kinematics with
    the current (learnable) element lengths; the endpoint velocity is the
    forward-mode derivative of the endpoint position along (dq_b, dq_prb),
    i.e. the differential kinematics.  Black-box variants use an MLP.
    """
    if not bundle.physics_informed:
        stacked = ad.concat([h, x], axis=-1)
        return nn.mlp_forward(bundle.decoder_spec, params, stacked, prefix="dec.")

    n = bundle.n_el
    x = np.asarray(x, dtype=float)
    batch = _shape_of(h)[:-1]
    q_prb = h[..., : 2 * n]
    dq_prb = h[..., 2 * n :]
    q_b = x[..., 0:6]
    dq_b = x[..., 6:12]
    theta_el = ad.exp(params["chain.log_theta_el"])
    theta_eb = params["chain.theta_eb"]
    p_e = _fk_ops(
        ad.Dual(q_b, dq_b),
        ad.Dual(q_prb, dq_prb),
        theta_el,
        theta_eb,
        n,
        batch,
    )
    dp_e = p_e.tangent
    if dp_e is None:
        dp_e = np.zeros(batch + (3,))
    return ad.concat([p_e.primal, dp_e], axis=-1)


# ----------------------------------------------------------------- rollout

def _finite_or_raise(h, step):
    value = h.value if isinstance(h, ad.Var) else np.asarray(h)
    if not np.all(np.isfinite(value)):
        raise DivergenceError(step)


def rollout(bundle: ModelBundle, y0, xs, params=None):
    """Open-loop prediction: encode once, then unroll the dynamics.

    Parameters
    ----------
    y0 : (6,) or (B, 6) first observation y_k.
    xs : (N+1, 18) or (N+1, B, 18) inputs x_k .. x_{k+N}; the dynamics
        consume the first N, the decoder uses x_{k+1} .. x_{k+N}.
    params : optional parameter container overriding ``bundle.params``
        (used by the training loop to pass traced variables).

    Returns
    -------
    ys : (N, ...) predicted observations y_{k+1} .. y_{k+N}.
    hs : (N, ...) hidden states h_k .. h_{k+N-1}.
    """
    params = bundle.params if params is None else params
    y0 = np.asarray(y0, dtype=float)
    xs = np.asarray(xs, dtype=float)
    single = y0.ndim == 1
    if single:
        y0 = y0[None]
        xs = xs[:, None, :]
    n_steps = xs.shape[0] - 1
    if n_steps < 1:
        raise ValueError("need at least two input samples (N >= 1)")
    batch = y0.shape[0]
    hdim = bundle.hidden_dim

    h = encode(bundle, params, y0, xs[0])
    _finite_or_raise(h, 0)
    states = [h]
    for j in range(n_steps - 1):
        h = dynamics_step(bundle, params, h, xs[j])
        _finite_or_raise(h, j + 1)
        states.append(h)
    h_last = dynamics_step(bundle, params, states[-1], xs[n_steps - 1])
    _finite_or_raise(h_last, n_steps)

    decode_states = states[1:] + [h_last]
    stacked = ad.concat(
        [ad.reshape(s, (1, batch, hdim)) for s in decode_states], axis=0
    )
    flat_h = ad.reshape(stacked, (n_steps * batch, hdim))
    flat_x = xs[1:].reshape(n_steps * batch, INPUT_DIM)
    ys = decode(bundle, params, flat_h, flat_x)
    ys = ad.reshape(ys, (n_steps, batch, OBS_DIM))

    hs = ad.concat([ad.reshape(s, (1, batch, hdim)) for s in states], axis=0)
    if single:
        ys = ad.reshape(ys, (n_steps, OBS_DIM))
        hs = ad.reshape(hs, (n_steps, hdim))
    return ys, hs


def chain_points(cfg: ChainConfig, h, x):
    """World positions of the chain: base, body frames, end marker.

    Used for shape reconstruction plots; returns (n_el + 2, 3).
    """
    from .kinematics import base_rotation, chain_transforms

    h = np.asarray(h, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    q_prb = h[: 2 * cfg.n_el]
    p_b, eul = x[0:3], x[3:6]
    rot = base_rotation(eul)
    points = [p_b]
    for tr in chain_transforms(cfg, q_prb):
        points.append(rot @ tr.translation + p_b)
    return np.stack(points)


# ------------------------------------------------------------- checkpoints

def save_bundle(bundle: ModelBundle, path):
    """Write the parameter checkpoint with the bundle header attached."""
    extra = {
        "bundle_format": BUNDLE_FORMAT,
        "variant": bundle.variant,
        "n_el": bundle.n_el,
        "widths": list(bundle.widths),
        "dt": bundle.dt,
        "total_length": bundle.total_length,
        "seed": bundle.seed,
        "chain": json.loads(bundle.chain.to_json()),
        "meta": bundle.meta,
    }
    nn.save_params(bundle.params, path, extra=extra)


def load_bundle(path) -> ModelBundle:
    params, header = nn.load_params(path)
    if header.get("bundle_format") != BUNDLE_FORMAT:
        raise ValueError(f"{path} is not a model bundle checkpoint")
    return ModelBundle(
        variant=header["variant"],
        n_el=int(header["n_el"]),
        widths=tuple(header["widths"]),
        dt=float(header["dt"]),
        total_length=float(header["total_length"]),
        params=params,
        seed=int(header.get("seed", 0)),
        meta=dict(header.get("meta", {})),
    )
