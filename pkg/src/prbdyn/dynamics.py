"""Analytic dynamics of the elastic pseudo-rigid-body chain.

Joint stiffness and damping are lumped from beam properties (Young's modulus,
section moment, sample length); each two-DOF joint acts as an isotropic
torsional spring-damper.  The floating base contributes six prescribed degrees
of freedom (three prismatic, three revolute with intrinsic X-Y-Z Euler
angles), so the full system is a serial chain of ``6 + 2 n_el`` one-DOF
joints.  Hybrid dynamics solves the internal joint accelerations given the
base acceleration:

    M_ii qdd_prb = tau_spring - bias_i - M_ib qdd_b

Mass matrix and bias terms are evaluated with 6D spatial vectors resolved at
the world origin (composite-rigid-body and recursive Newton-Euler passes).
All entry points accept a leading batch axis, which the stiff integrator uses
to evaluate finite-difference Jacobians in one sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import ChainConfig

__all__ = [
    "GRAVITY",
    "MaterialParams",
    "JointCoeffs",
    "ALUMINUM_ROD",
    "FOAM_CYLINDER",
    "MATERIAL_PRESETS",
    "second_moment_of_area",
    "cross_section_area",
    "material_to_coeffs",
    "mass_matrix_full",
    "hybrid_accel",
    "make_field",
    "mechanical_energy",
]

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass(frozen=True)
class MaterialParams:
    """Physical parameters of a DLO sample (SI units).

    ``damping`` is the normal damping coefficient eta in N s/m; it is lumped
    into rotational joint damping the same way the Young's modulus is lumped
    into joint stiffness.
    """

    length: float
    d_in: float
    d_out: float
    density: float
    young_modulus: float
    damping: float

    def __post_init__(self):
        if not 0.0 <= self.d_in < self.d_out:
            raise ValueError("need 0 <= d_in < d_out")
        for name in ("length", "density", "young_modulus", "damping"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


ALUMINUM_ROD = MaterialParams(
    length=1.92, d_in=0.004, d_out=0.006, density=2710.0,
    young_modulus=5.15e10, damping=1.2e8,
)
FOAM_CYLINDER = MaterialParams(
    length=1.90, d_in=0.0, d_out=0.06, density=105.0,
    young_modulus=1.8e6, damping=3.5e5,
)
MATERIAL_PRESETS = {"aluminum_rod": ALUMINUM_ROD, "foam_cylinder": FOAM_CYLINDER}


def second_moment_of_area(mp: MaterialParams) -> float:
    """Area moment of an annular cross section, pi (d_out^4 - d_in^4) / 64."""
    return np.pi * (mp.d_out**4 - mp.d_in**4) / 64.0


def cross_section_area(mp: MaterialParams) -> float:
    return np.pi * (mp.d_out**2 - mp.d_in**2) / 4.0


@dataclass
class JointCoeffs:
    """Lumped joint and body parameters of the discretized chain.

    stiffness, damping : (n_el,) per-joint torsional coefficients
    body_mass          : (n_el + 1,) masses; the last entry is the marker body
    body_length        : (n_el + 1,) rod lengths
    body_dir           : (n_el + 1, 3) unit rod directions in the body frame
    body_inertia       : (n_el + 1, 3, 3) rod inertia about the body frame
    area_moment        : section moment I_a used for the lumping
    """

    stiffness: np.ndarray
    damping: np.ndarray
    body_mass: np.ndarray
    body_length: np.ndarray
    body_dir: np.ndarray
    body_inertia: np.ndarray
    area_moment: float


def material_to_coeffs(mp: MaterialParams, cfg: ChainConfig) -> JointCoeffs:
    """Lump beam material into per-joint spring-dampers and per-body rods.

    Joint j uses the proximal element length:  k_j = E I_a / theta_el[j] and
    c_j = eta I_a / theta_el[j].  Bodies are thin rods of mass rho A l with
    the last body spanning the marker offset theta_eb.
    """
    area_moment = second_moment_of_area(mp)
    area = cross_section_area(mp)
    eb_len = float(np.linalg.norm(cfg.theta_eb))
    lengths = np.concatenate([cfg.theta_el, [eb_len]])
    if np.any(lengths <= 0.0):
        raise ValueError("all element lengths (incl. the marker offset) must be positive")

    stiffness = mp.young_modulus * area_moment / cfg.theta_el
    damping = mp.damping * area_moment / cfg.theta_el
    masses = mp.density * area * lengths

    dirs = np.zeros((cfg.n_el + 1, 3))
    dirs[:-1, 0] = 1.0
    dirs[-1] = cfg.theta_eb / eb_len
    # thin rod about the frame at its proximal end: (m l^2 / 3)(1 - d d^T)
    inertia = np.empty((cfg.n_el + 1, 3, 3))
    for b in range(cfg.n_el + 1):
        proj = np.eye(3) - np.outer(dirs[b], dirs[b])
        inertia[b] = masses[b] * lengths[b] ** 2 / 3.0 * proj
    return JointCoeffs(
        stiffness=stiffness,
        damping=damping,
        body_mass=masses,
        body_length=lengths,
        body_dir=dirs,
        body_inertia=inertia,
        area_moment=area_moment,
    )


# --------------------------------------------------------------------------
# Spatial-vector machinery.  Convention: motion vectors are [omega; v] and
# force vectors [torque; force], both resolved at the world origin.
# --------------------------------------------------------------------------

_AXES = np.eye(3)


def _skew(v):
    """Batched skew-symmetric matrix, v: (..., 3) -> (..., 3, 3)."""
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _rot_about(axis_idx, angle):
    """Batched elementary rotation about a coordinate axis, angle: (B,)."""
    b = angle.shape[0]
    c, s = np.cos(angle), np.sin(angle)
    r = np.zeros((b, 3, 3))
    i, j, k = {0: (1, 2, 0), 1: (2, 0, 1), 2: (0, 1, 2)}[axis_idx]
    r[:, k, k] = 1.0
    r[:, i, i] = c
    r[:, j, j] = c
    r[:, i, j] = -s
    r[:, j, i] = s
    return r


def _cross3(a, b, out=None):
    """Batched 3-vector cross product without np.cross dispatch overhead."""
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    if out is None:
        out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def _cross_motion(a, b):
    """Spatial cross product of motion vectors, (..., 6) x (..., 6)."""
    w1, v1 = a[..., :3], a[..., 3:]
    w2, v2 = b[..., :3], b[..., 3:]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    _cross3(w1, w2, out[..., :3])
    out[..., 3:] = _cross3(w1, v2) + _cross3(v1, w2)
    return out


def _cross_force(a, f):
    """Spatial cross product of a motion vector with a force vector."""
    w, v = a[..., :3], a[..., 3:]
    n, fl = f[..., :3], f[..., 3:]
    out = np.empty(np.broadcast_shapes(a.shape, f.shape))
    out[..., :3] = _cross3(w, n) + _cross3(v, fl)
    _cross3(w, fl, out[..., 3:])
    return out


class _ChainModel:
    """Joint/body bookkeeping for the serial chain with floating base."""

    def __init__(self, cfg: ChainConfig, coeffs: JointCoeffs):
        self.cfg = cfg
        self.coeffs = coeffs
        self.n_el = cfg.n_el
        self.n_joints = 6 + 2 * cfg.n_el
        # joint k: (prismatic?, axis index, x-offset applied before the joint)
        self.joints = [(True, 0, 0.0), (True, 1, 0.0), (True, 2, 0.0),
                       (False, 0, 0.0), (False, 1, 0.0), (False, 2, 0.0)]
        for i in range(cfg.n_el):
            self.joints.append((False, 1, float(cfg.theta_el[i])))
            self.joints.append((False, 2, 0.0))
        # body b is rigid with the link after joint attach[b]
        self.attach = [5] + [5 + 2 * (i + 1) for i in range(cfg.n_el)]
        # rod inertia about the center of mass (frame-origin inertia shifted)
        m = coeffs.body_mass
        self.com_local = 0.5 * coeffs.body_length[:, None] * coeffs.body_dir
        shift = np.einsum(
            "b,bij->bij",
            m * (coeffs.body_length * 0.5) ** 2,
            np.eye(3) - np.einsum("bi,bj->bij", coeffs.body_dir, coeffs.body_dir),
        )
        self.inertia_com = coeffs.body_inertia - shift

    def frames(self, q):
        """World rotation/origin after each joint plus subspaces S (B, nj, 6)."""
        b = q.shape[0]
        rot = np.broadcast_to(np.eye(3), (b, 3, 3)).copy()
        pos = np.zeros((b, 3))
        s = np.empty((b, self.n_joints, 6))
        rots = np.empty((b, self.n_joints, 3, 3))
        origins = np.empty((b, self.n_joints, 3))
        for k, (prism, axis, offset) in enumerate(self.joints):
            if offset != 0.0:
                pos = pos + offset * rot[:, :, 0]
            axis_world = rot[:, :, axis]
            if prism:
                pos = pos + axis_world * q[:, k, None]
                s[:, k, :3] = 0.0
                s[:, k, 3:] = axis_world
            else:
                s[:, k, :3] = axis_world
                _cross3(pos, axis_world, s[:, k, 3:])
                rot = rot @ _rot_about(axis, q[:, k])
            rots[:, k] = rot
            origins[:, k] = pos
        return rots, origins, s

    def body_inertias(self, rots, origins):
        """Spatial inertia of each body about the world origin, (B, nb, 6, 6)."""
        b = rots.shape[0]
        nb = self.n_el + 1
        out = np.empty((b, nb, 6, 6))
        for i, k in enumerate(self.attach):
            r = rots[:, k]
            com = origins[:, k] + np.einsum("bij,j->bi", r, self.com_local[i])
            ic = r @ self.inertia_com[i] @ r.transpose(0, 2, 1)
            m = self.coeffs.body_mass[i]
            cx = _skew(com)
            out[:, i, :3, :3] = ic + m * cx @ cx.transpose(0, 2, 1)
            out[:, i, :3, 3:] = m * cx
            out[:, i, 3:, :3] = m * cx.transpose(0, 2, 1)
            out[:, i, 3:, 3:] = m * np.eye(3)
        return out

    def composite_per_joint(self, body_in):
        """Sum body inertias over the subtree distal to each joint."""
        b = body_in.shape[0]
        per_joint = np.zeros((b, self.n_joints, 6, 6))
        for i, k in enumerate(self.attach):
            per_joint[:, k] += body_in[:, i]
        return np.cumsum(per_joint[:, ::-1], axis=1)[:, ::-1]

    def _mass_from(self, body_in, s):
        comp = self.composite_per_joint(body_in)
        f = np.einsum("bjxy,bjy->bjx", comp, s)
        g = np.einsum("bix,bjx->bij", s, f)
        upper = np.triu(g)
        return upper + np.triu(g, 1).transpose(0, 2, 1)

    def _bias_from(self, body_in, s, qd, gravity):
        b = s.shape[0]
        vel = np.zeros((b, 6))
        acc = np.zeros((b, 6))
        acc[:, 3:] = -np.asarray(gravity)
        vels = np.empty((b, self.n_joints, 6))
        accs = np.empty((b, self.n_joints, 6))
        for k in range(self.n_joints):
            sq = s[:, k] * qd[:, k, None]
            vel = vel + sq
            acc = acc + _cross_motion(vel, sq)
            vels[:, k] = vel
            accs[:, k] = acc
        forces = np.zeros((b, self.n_joints, 6))
        for i, k in enumerate(self.attach):
            iv = np.einsum("bxy,by->bx", body_in[:, i], vels[:, k])
            ia = np.einsum("bxy,by->bx", body_in[:, i], accs[:, k])
            forces[:, k] += ia + _cross_force(vels[:, k], iv)
        f_comp = np.cumsum(forces[:, ::-1], axis=1)[:, ::-1]
        return np.einsum("bjx,bjx->bj", s, f_comp)

    def mass_matrix(self, q):
        rots, origins, s = self.frames(q)
        return self._mass_from(self.body_inertias(rots, origins), s)

    def bias(self, q, qd, gravity):
        """Generalized forces from Coriolis, centrifugal, and gravity terms."""
        rots, origins, s = self.frames(q)
        return self._bias_from(self.body_inertias(rots, origins), s, qd, gravity)

    def mass_and_bias(self, q, qd, gravity):
        """Both dynamics terms from one shared kinematics sweep."""
        rots, origins, s = self.frames(q)
        body_in = self.body_inertias(rots, origins)
        return self._mass_from(body_in, s), self._bias_from(body_in, s, qd, gravity)


def _model_cache(cfg, coeffs):
    # one model per (cfg, coeffs) pair; cheap to rebuild, so no weak refs
    key = id(cfg), id(coeffs)
    cached = _model_cache._store.get(key)
    if cached is None:
        cached = _ChainModel(cfg, coeffs)
        _model_cache._store[key] = cached
        if len(_model_cache._store) > 64:
            _model_cache._store.pop(next(iter(_model_cache._store)))
    return cached


_model_cache._store = {}


def _split_state(cfg, h, x):
    h = np.asarray(h, dtype=float)
    x = np.asarray(x, dtype=float)
    single = h.ndim == 1
    h = np.atleast_2d(h)
    x = np.atleast_2d(x)
    n = cfg.n_el
    if h.shape[-1] != 4 * n:
        raise ValueError(f"hidden state must have {4 * n} entries, got {h.shape[-1]}")
    if x.shape[-1] != 18:
        raise ValueError(f"input must have 18 entries, got {x.shape[-1]}")
    if x.shape[0] == 1 and h.shape[0] > 1:
        x = np.broadcast_to(x, (h.shape[0], 18))
    q = np.concatenate([x[:, :6], h[:, : 2 * n]], axis=1)
    qd = np.concatenate([x[:, 6:12], h[:, 2 * n :]], axis=1)
    return single, q, qd, x[:, 12:18]


def mass_matrix_full(cfg: ChainConfig, coeffs: JointCoeffs, q_b, q_prb) -> np.ndarray:
    """Joint-space mass matrix over all (base + internal) coordinates."""
    model = _model_cache(cfg, coeffs)
    q = np.concatenate([np.asarray(q_b, float).ravel(), np.asarray(q_prb, float).ravel()])
    return model.mass_matrix(q[None])[0]


def hybrid_accel(cfg: ChainConfig, coeffs: JointCoeffs, h, x, gravity=GRAVITY):
    """Internal joint accelerations with the base acceleration prescribed.

    Parameters
    ----------
    h : (4 n_el,) or (B, 4 n_el) hidden state [q_prb, dq_prb]
    x : (18,) or (B, 18) base input [q_b, dq_b, ddq_b]

    Returns
    -------
    (2 n_el,) or (B, 2 n_el) accelerations ddq_prb.
    """
    model = _model_cache(cfg, coeffs)
    single, q, qd, qdd_b = _split_state(cfg, h, x)
    n = cfg.n_el
    mass, bias = model.mass_and_bias(q, qd, gravity)
    k = np.repeat(coeffs.stiffness, 2)
    c = np.repeat(coeffs.damping, 2)
    tau = -k * q[:, 6:] - c * qd[:, 6:]
    rhs = tau - bias[:, 6:] - np.einsum("bij,bj->bi", mass[:, 6:, :6], qdd_b)
    try:
        qdd = np.linalg.solve(mass[:, 6:, 6:], rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:  # positive masses make this unreachable
        raise RuntimeError("internal mass matrix is singular") from exc
    return qdd[0] if single else qdd


def make_field(cfg: ChainConfig, coeffs: JointCoeffs, gravity=GRAVITY):
    """State-space vector field ``f(h, x) -> [dq_prb, ddq_prb]`` plus Jacobian.

    The returned ``field`` accepts batched states; ``jacobian`` assembles
    d f / d h at a single state with an exact velocity block and one batched
    finite-difference sweep for the acceleration rows.
    """
    n = cfg.n_el

    def field(h, x):
        h = np.asarray(h, dtype=float)
        qdd = hybrid_accel(cfg, coeffs, h, x, gravity=gravity)
        if h.ndim == 1:
            return np.concatenate([h[2 * n :], qdd])
        return np.concatenate([h[:, 2 * n :], qdd], axis=1)

    def jacobian(h, x, eps=1e-7):
        h = np.asarray(h, dtype=float).ravel()
        dim = 4 * n
        states = np.repeat(h[None], dim + 1, axis=0)
        states[1:] += np.diag(np.full(dim, eps))
        acc = hybrid_accel(cfg, coeffs, states, np.repeat(np.atleast_2d(x), dim + 1, 0), gravity=gravity)
        jac = np.zeros((dim, dim))
        jac[: 2 * n, 2 * n :] = np.eye(2 * n)
        jac[2 * n :, :] = (acc[1:] - acc[0]).T / eps
        return jac

    return field, jacobian


def mechanical_energy(cfg, coeffs, h, q_b=None, dq_b=None, gravity=GRAVITY):
    """Total mechanical energy (kinetic + spring + gravitational potential).

    Gravitational potential is measured relative to the world origin; pass
    ``gravity=np.zeros(3)`` to exclude it.
    """
    model = _model_cache(cfg, coeffs)
    h = np.asarray(h, dtype=float).ravel()
    n = cfg.n_el
    q_b = np.zeros(6) if q_b is None else np.asarray(q_b, float).ravel()
    dq_b = np.zeros(6) if dq_b is None else np.asarray(dq_b, float).ravel()
    q = np.concatenate([q_b, h[: 2 * n]])[None]
    qd = np.concatenate([dq_b, h[2 * n :]])[None]
    mass = model.mass_matrix(q)[0]
    kinetic = 0.5 * qd[0] @ mass @ qd[0]
    psi = h[: 2 * n].reshape(n, 2)
    spring = float(np.sum(0.5 * coeffs.stiffness * (psi**2).sum(axis=1)))
    rots, origins, _ = model.frames(q)
    grav = 0.0
    for i, k in enumerate(model.attach):
        com = origins[0, k] + rots[0, k] @ model.com_local[i]
        grav -= coeffs.body_mass[i] * float(np.dot(gravity, com))
    return float(kinetic + spring + grav)
