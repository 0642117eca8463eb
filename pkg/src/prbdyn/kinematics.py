"""Serial-chain kinematics of a pseudo-rigid-body (PRB) discretization.

A deformable linear object is approximated by a chain of ``n_el + 1`` rigid
bodies: body 0 is welded to the floating base frame {b}, bodies extend along
their local x-axis, and each joint provides two rotational degrees of freedom
parameterized as YZ Euler angles.  Joint ``j`` sits at the distal end of body
``j - 1``, so the transform from frame {j-1} to frame {j} is

    T_j(q_j) = Trans_x(theta_el[j-1]) * RotY(psi_y_j) * RotZ(psi_z_j)

with ``q_j = (psi_y_j, psi_z_j)``.  The end marker is offset by ``theta_eb``
in the last body frame.  All quantities are SI (meters, radians).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Transform",
    "ChainConfig",
    "rot_x",
    "rot_y",
    "rot_z",
    "euler_yz_rotation",
    "base_rotation",
    "chain_transforms",
    "fk_endpoint",
    "jacobian_linear",
    "endpoint_velocity",
    "element_error_bound",
    "uniform_discretization",
]


def rot_x(angle: float) -> np.ndarray:
    """Rotation matrix about the x-axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    """Rotation matrix about the y-axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    """Rotation matrix about the z-axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_yz_rotation(psi_y: float, psi_z: float) -> np.ndarray:
    """Joint rotation ``RotY(psi_y) @ RotZ(psi_z)`` of a two-DOF elastic joint.

    Parameters
    ----------
    psi_y, psi_z : float
        Joint angles in radians.  Total function: any finite input is valid.

    Returns
    -------
    (3, 3) ndarray, orthonormal with determinant +1.
    """
    return rot_y(psi_y) @ rot_z(psi_z)


def base_rotation(eul_xyz: np.ndarray) -> np.ndarray:
    """Base orientation from intrinsic X-Y-Z Euler angles ``Psi_b``."""
    ex, ey, ez = np.asarray(eul_xyz, dtype=float)
    return rot_x(ex) @ rot_y(ey) @ rot_z(ez)


@dataclass(frozen=True)
class Transform:
    """Rigid transform: rotation (3, 3) plus translation (3,) in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    @staticmethod
    def identity() -> "Transform":
        return Transform(np.eye(3), np.zeros(3))

    def compose(self, other: "Transform") -> "Transform":
        """Return ``self * other`` (apply ``other`` first in local frame)."""
        return Transform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, point: np.ndarray) -> np.ndarray:
        """Map a point (or stack of points, last axis 3) through the transform."""
        return np.asarray(point) @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 matrix representation."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass
class ChainConfig:
    """Geometry of the PRB chain.

    Attributes
    ----------
    n_el : int
        Number of elastic joints (equals the number of length parameters).
        The chain has ``n_el + 1`` rigid bodies.
    theta_el : (n_el,) ndarray
        Body lengths in meters, all positive.
    theta_eb : (3,) ndarray
        Offset of the end marker in the last body frame, meters.
    total_length : float
        Nominal length of the DLO, meters.
    """

    n_el: int
    theta_el: np.ndarray
    theta_eb: np.ndarray
    total_length: float = field(default=0.0)

    def __post_init__(self):
        self.theta_el = np.atleast_1d(np.asarray(self.theta_el, dtype=float))
        self.theta_eb = np.asarray(self.theta_eb, dtype=float)
        if self.n_el < 1:
            raise ValueError(f"n_el must be >= 1, got {self.n_el}")
        if self.theta_el.shape != (self.n_el,):
            raise ValueError(
                f"theta_el must have shape ({self.n_el},), got {self.theta_el.shape}"
            )
        if np.any(self.theta_el <= 0.0):
            raise ValueError("all element lengths must be positive")
        if self.theta_eb.shape != (3,):
            raise ValueError("theta_eb must be a 3-vector")
        if self.total_length == 0.0:
            self.total_length = float(self.theta_el.sum() + self.theta_eb[0])

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_el": int(self.n_el),
                "theta_el": self.theta_el.tolist(),
                "theta_eb": self.theta_eb.tolist(),
                "total_length": float(self.total_length),
            }
        )

    @staticmethod
    def from_json(text: str) -> "ChainConfig":
        raw = json.loads(text)
        return ChainConfig(
            n_el=int(raw["n_el"]),
            theta_el=np.asarray(raw["theta_el"], dtype=float),
            theta_eb=np.asarray(raw["theta_eb"], dtype=float),
            total_length=float(raw["total_length"]),
        )


def _check_q_prb(cfg: ChainConfig, q_prb: np.ndarray) -> np.ndarray:
    q_prb = np.asarray(q_prb, dtype=float).ravel()
    if q_prb.shape != (2 * cfg.n_el,):
        raise ValueError(
            f"q_prb must have {2 * cfg.n_el} entries for n_el={cfg.n_el}, "
            f"got shape {q_prb.shape}"
        )
    return q_prb


def chain_transforms(cfg: ChainConfig, q_prb: np.ndarray) -> list[Transform]:
    """Transforms from the base frame {b} to each body frame and the end marker.

    Returns a list of ``n_el + 1`` transforms: frames {1} .. {n_el} followed by
    the end-marker frame (same rotation as {n_el}, translated by ``theta_eb``).
    """
    q_prb = _check_q_prb(cfg, q_prb)
    out = []
    t = Transform.identity()
    for j in range(cfg.n_el):
        step = Transform(
            euler_yz_rotation(q_prb[2 * j], q_prb[2 * j + 1]),
            np.array([cfg.theta_el[j], 0.0, 0.0]),
        )
        t = t.compose(step)
        out.append(t)
    out.append(t.compose(Transform(np.eye(3), cfg.theta_eb.copy())))
    return out


def _split_base(q_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q_b = np.asarray(q_b, dtype=float).ravel()
    if q_b.shape != (6,):
        raise ValueError(f"q_b must be a 6-vector, got shape {q_b.shape}")
    return q_b[:3], q_b[3:]


def fk_endpoint(cfg: ChainConfig, q_b: np.ndarray, q_prb: np.ndarray) -> np.ndarray:
    """Endpoint position of the chain in the inertial frame.

    ``p_e = R_b(Psi_b) @ p_eb(q_prb) + p_b`` where ``p_eb`` is the marker
    position in the base frame obtained from the chain transforms.
    """
    p_b, eul = _split_base(q_b)
    p_eb = chain_transforms(cfg, q_prb)[-1].translation
    return base_rotation(eul) @ p_eb + p_b


def jacobian_linear(cfg: ChainConfig, q_b: np.ndarray, q_prb: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of ``fk_endpoint`` with respect to ``[q_b, q_prb]``.

    Columns 0..2 are the derivative w.r.t. base position (identity), columns
    3..5 w.r.t. the base Euler angles, and the remaining ``2 n_el`` columns
    w.r.t. the joint angles (geometric Jacobian: axis cross lever arm).
    Exact to machine precision; no finite differencing.
    """
    p_b, eul = _split_base(q_b)
    q_prb = _check_q_prb(cfg, q_prb)
    n = cfg.n_el
    jac = np.zeros((3, 6 + 2 * n))
    jac[:, :3] = np.eye(3)

    p_eb = chain_transforms(cfg, q_prb)[-1].translation

    # Base orientation block: d/d_psi of Rx(ex) Ry(ey) Rz(ez) applied to p_eb.
    ex, ey, ez = eul
    c, s = np.cos, np.sin
    dRx = np.array([[0, 0, 0], [0, -s(ex), -c(ex)], [0, c(ex), -s(ex)]])
    dRy = np.array([[-s(ey), 0, c(ey)], [0, 0, 0], [-c(ey), 0, -s(ey)]])
    dRz = np.array([[-s(ez), -c(ez), 0], [c(ez), -s(ez), 0], [0, 0, 0]])
    rx, ry, rz = rot_x(ex), rot_y(ey), rot_z(ez)
    jac[:, 3] = dRx @ ry @ rz @ p_eb
    jac[:, 4] = rx @ dRy @ rz @ p_eb
    jac[:, 5] = rx @ ry @ dRz @ p_eb

    # Joint block: walk the chain collecting world joint origins and axes.
    r_b = base_rotation(eul)
    p_e = r_b @ p_eb + p_b
    rot = r_b.copy()
    origin = p_b.copy()
    for j in range(n):
        origin = origin + rot @ np.array([cfg.theta_el[j], 0.0, 0.0])
        axis_y = rot @ np.array([0.0, 1.0, 0.0])
        rot = rot @ rot_y(q_prb[2 * j])
        axis_z = rot @ np.array([0.0, 0.0, 1.0])
        rot = rot @ rot_z(q_prb[2 * j + 1])
        jac[:, 6 + 2 * j] = np.cross(axis_y, p_e - origin)
        jac[:, 6 + 2 * j + 1] = np.cross(axis_z, p_e - origin)
    return jac


def endpoint_velocity(
    cfg: ChainConfig,
    q_b: np.ndarray,
    q_prb: np.ndarray,
    dq_b: np.ndarray,
    dq_prb: np.ndarray,
) -> np.ndarray:
    """Endpoint velocity ``J(q) @ [dq_b, dq_prb]`` in m/s."""
    dq_b = np.asarray(dq_b, dtype=float).ravel()
    dq_prb = np.asarray(dq_prb, dtype=float).ravel()
    if dq_b.shape != (6,):
        raise ValueError("dq_b must be a 6-vector")
    if dq_prb.shape != (2 * cfg.n_el,):
        raise ValueError("dq_prb dimension mismatch")
    return jacobian_linear(cfg, q_b, q_prb) @ np.concatenate([dq_b, dq_prb])


def element_error_bound(total_length: float, first_length: float, zeta: float) -> float:
    """Law-of-cosines bound on the endpoint error of a fixed first element.

    With the first body of length ``L1`` welded straight to the base and the
    rest of the chain (length ``L - L1``) free, the endpoint of a DLO deflected
    by angle ``zeta`` can be missed by at most

        sqrt(L^2 + L1^2 - 2 L L1 cos(zeta)) - (L - L1).

    Parameters
    ----------
    total_length : float
        DLO length L > 0, meters.
    first_length : float
        Length L1 of the welded first element, 0 < L1 < L.
    zeta : float
        Deflection angle in [0, pi] radians.
    """
    big_l, l1 = float(total_length), float(first_length)
    if not 0.0 < l1 < big_l:
        raise ValueError(f"need 0 < first_length < total_length, got {l1}, {big_l}")
    if not 0.0 <= zeta <= np.pi:
        raise ValueError(f"zeta must lie in [0, pi], got {zeta}")
    reach = np.sqrt(big_l**2 + l1**2 - 2.0 * big_l * l1 * np.cos(zeta))
    return float(reach - (big_l - l1))


def uniform_discretization(total_length: float, n_el: int) -> ChainConfig:
    """Initial chain geometry: equal division into ``n_el + 1`` segments.

    Each of the ``n_el`` length parameters and the x-offset of the end marker
    gets ``L / (n_el + 1)``, so the lengths sum exactly to ``L``.
    """
    if total_length <= 0.0:
        raise ValueError("total_length must be positive")
    if n_el < 1:
        raise ValueError("n_el must be >= 1")
    seg = total_length / (n_el + 1)
    return ChainConfig(
        n_el=n_el,
        theta_el=np.full(n_el, seg),
        theta_eb=np.array([seg, 0.0, 0.0]),
        total_length=float(total_length),
    )
