import numpy as np
import pytest

from prbdyn.kinematics import (
    ChainConfig,
    Transform,
    base_rotation,
    chain_transforms,
    element_error_bound,
    endpoint_velocity,
    euler_yz_rotation,
    fk_endpoint,
    jacobian_linear,
    rot_y,
    rot_z,
    uniform_discretization,
)

RNG = np.random.default_rng(20240813)


# ---------------------------------------------------------------- oracles

def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_mul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def homog(rotation, translation):
    m = np.eye(4)
    m[:3, :3] = rotation
    m[:3, 3] = translation
    return m


def fk_oracle(cfg, q_b, q_prb):
    """Endpoint via naive sequential 4x4 homogeneous matrix products."""
    q_b = np.asarray(q_b, dtype=float)
    m = homog(base_rotation(q_b[3:]), q_b[:3])
    for j in range(cfg.n_el):
        m = m @ homog(np.eye(3), [cfg.theta_el[j], 0, 0])
        m = m @ homog(rot_y(q_prb[2 * j]), np.zeros(3))
        m = m @ homog(rot_z(q_prb[2 * j + 1]), np.zeros(3))
    return (m @ np.append(cfg.theta_eb, 1.0))[:3]


def random_state(n_el, rng):
    q_b = np.concatenate([rng.uniform(-1, 1, 3), rng.uniform(-1.0, 1.0, 3)])
    q_prb = rng.uniform(-1.2, 1.2, 2 * n_el)
    return q_b, q_prb


def random_config(rng, n_el=None):
    n_el = n_el or int(rng.integers(1, 6))
    return ChainConfig(
        n_el=n_el,
        theta_el=rng.uniform(0.1, 0.6, n_el),
        theta_eb=rng.uniform(-0.2, 0.4, 3),
    )


# ------------------------------------------------------- euler_yz_rotation

def test_euler_yz_zero_is_identity():
    assert np.array_equal(euler_yz_rotation(0.0, 0.0), np.eye(3))


def test_euler_yz_quarter_turn_maps_x_down():
    r = euler_yz_rotation(np.pi / 2, 0.0)
    np.testing.assert_allclose(r @ [1, 0, 0], [0, 0, -1], atol=1e-15)


def test_euler_yz_matches_quaternion_oracle():
    psi_y, psi_z = 0.3, -0.4
    r = euler_yz_rotation(psi_y, psi_z)
    q = quat_mul(quat_from_axis_angle([0, 1, 0], psi_y), quat_from_axis_angle([0, 0, 1], psi_z))
    np.testing.assert_allclose(r, quat_to_matrix(q), atol=1e-14)
    assert np.linalg.norm(r.T @ r - np.eye(3)) < 1e-12
    assert abs(np.linalg.det(r) - 1.0) < 1e-12


def test_rotations_orthonormal_randomly():
    for _ in range(50):
        psi = RNG.uniform(-np.pi, np.pi, 2)
        r = euler_yz_rotation(*psi)
        assert np.linalg.norm(r.T @ r - np.eye(3), "fro") < 1e-12
        assert abs(np.linalg.det(r) - 1.0) < 1e-12


# --------------------------------------------------------------- Transform

def test_transform_identity_and_composition_associative():
    t1 = Transform(rot_y(0.3), np.array([1.0, 0, 0]))
    t2 = Transform(rot_z(-0.7), np.array([0, 2.0, 0]))
    t3 = Transform(rot_y(1.1), np.array([0, 0, -1.0]))
    left = t1.compose(t2).compose(t3)
    right = t1.compose(t2.compose(t3))
    np.testing.assert_allclose(left.matrix(), right.matrix(), atol=1e-14)
    p = np.array([0.2, -0.4, 0.9])
    np.testing.assert_allclose(Transform.identity().apply(p), p)


# --------------------------------------------------------- chain_transforms

def test_chain_transforms_straight_chain():
    cfg = ChainConfig(n_el=2, theta_el=[0.5, 0.5], theta_eb=[0.0, 0.0, 0.0])
    frames = chain_transforms(cfg, np.zeros(4))
    assert len(frames) == 3
    np.testing.assert_allclose(frames[1].translation, [1.0, 0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(frames[1].rotation, np.eye(3), atol=1e-15)


def test_chain_transforms_single_joint_quarter_turn():
    cfg = ChainConfig(n_el=1, theta_el=[0.5], theta_eb=[0.0, 0.0, 0.0])
    frames = chain_transforms(cfg, [-np.pi / 2, 0.0])
    # oracle: explicit homogeneous product
    m = homog(np.eye(3), [0.5, 0, 0]) @ homog(rot_y(-np.pi / 2), np.zeros(3))
    np.testing.assert_allclose(frames[0].matrix(), m, atol=1e-15)
    np.testing.assert_allclose(frames[0].translation, [0.5, 0, 0], atol=1e-15)
    np.testing.assert_allclose(frames[0].rotation @ [1, 0, 0], [0, 0, 1], atol=1e-15)


def test_chain_transforms_match_homogeneous_oracle():
    for _ in range(20):
        cfg = random_config(RNG)
        q = RNG.uniform(-np.pi, np.pi, 2 * cfg.n_el)
        frames = chain_transforms(cfg, q)
        m = np.eye(4)
        for j in range(cfg.n_el):
            m = m @ homog(np.eye(3), [cfg.theta_el[j], 0, 0])
            m = m @ homog(rot_y(q[2 * j]), np.zeros(3)) @ homog(rot_z(q[2 * j + 1]), np.zeros(3))
            np.testing.assert_allclose(frames[j].matrix(), m, atol=1e-12)
        np.testing.assert_allclose(
            frames[-1].translation, (m @ np.append(cfg.theta_eb, 1.0))[:3], atol=1e-12
        )


def test_chain_transforms_dimension_mismatch():
    cfg = ChainConfig(n_el=2, theta_el=[0.5, 0.5], theta_eb=[0.1, 0, 0])
    with pytest.raises(ValueError):
        chain_transforms(cfg, np.zeros(3))


# ------------------------------------------------------------- fk_endpoint

def test_fk_straight_reach():
    cfg = ChainConfig(n_el=1, theta_el=[0.5], theta_eb=[0.5, 0.0, 0.0])
    p = fk_endpoint(cfg, np.zeros(6), np.zeros(2))
    np.testing.assert_allclose(p, [1.0, 0.0, 0.0], atol=1e-15)


def test_fk_quarter_turn():
    cfg = ChainConfig(n_el=1, theta_el=[0.5], theta_eb=[0.5, 0.0, 0.0])
    p = fk_endpoint(cfg, np.zeros(6), [-np.pi / 2, 0.0])
    np.testing.assert_allclose(p, [0.5, 0.0, 0.5], atol=1e-15)


def test_fk_pure_base_translation():
    cfg = ChainConfig(n_el=3, theta_el=[0.4, 0.3, 0.2], theta_eb=[0.1, 0.0, 0.0])
    q_b = np.array([1.0, 2.0, 3.0, 0.0, 0.0, 0.0])
    p = fk_endpoint(cfg, q_b, np.zeros(6))
    np.testing.assert_allclose(p, [1.0 + 0.4 + 0.3 + 0.2 + 0.1, 2.0, 3.0], atol=1e-14)


def test_fk_translation_equivariance_exact():
    cfg = random_config(RNG, n_el=3)
    q_b, q_prb = random_state(3, RNG)
    shift = np.array([0.7, -1.3, 2.9])
    p0 = fk_endpoint(cfg, q_b, q_prb)
    q_b2 = q_b.copy()
    q_b2[:3] += shift
    p1 = fk_endpoint(cfg, q_b2, q_prb)
    assert np.array_equal(p1, p0 + shift)


def test_fk_matches_homogeneous_oracle():
    for _ in range(25):
        cfg = random_config(RNG)
        q_b, q_prb = random_state(cfg.n_el, RNG)
        np.testing.assert_allclose(
            fk_endpoint(cfg, q_b, q_prb), fk_oracle(cfg, q_b, q_prb), atol=1e-12
        )


def test_fk_reach_bound():
    for _ in range(50):
        cfg = random_config(RNG)
        q_b, q_prb = random_state(cfg.n_el, RNG)
        p = fk_endpoint(cfg, q_b, q_prb)
        reach = cfg.theta_el.sum() + np.linalg.norm(cfg.theta_eb)
        assert np.linalg.norm(p - q_b[:3]) <= reach + 1e-12


# --------------------------------------------------------- jacobian_linear

def test_jacobian_base_translation_block():
    cfg = ChainConfig(n_el=2, theta_el=[0.5, 0.5], theta_eb=[0.2, 0, 0])
    jac = jacobian_linear(cfg, np.zeros(6), np.zeros(4))
    np.testing.assert_allclose(jac[:, :3], np.eye(3), atol=1e-15)


def test_jacobian_single_joint_column():
    d = 0.37
    cfg = ChainConfig(n_el=1, theta_el=[0.6], theta_eb=[d, 0, 0])
    jac = jacobian_linear(cfg, np.zeros(6), np.zeros(2))
    # oracle: d/dpsi_y RotY(psi) @ (d,0,0) at psi=0 is (-d sin, 0, -d cos)|_0
    np.testing.assert_allclose(jac[:, 6], [0.0, 0.0, -d], atol=1e-15)


def test_jacobian_matches_central_differences():
    h = 1e-5
    worst = 0.0
    for _ in range(100):
        cfg = random_config(RNG)
        q_b, q_prb = random_state(cfg.n_el, RNG)
        jac = jacobian_linear(cfg, q_b, q_prb)
        delta = RNG.normal(size=6 + 2 * cfg.n_el)
        delta /= np.linalg.norm(delta)
        qp = np.concatenate([q_b, q_prb]) + h * delta
        qm = np.concatenate([q_b, q_prb]) - h * delta
        fd = (fk_oracle(cfg, qp[:6], qp[6:]) - fk_oracle(cfg, qm[:6], qm[6:])) / (2 * h)
        err = np.linalg.norm(jac @ delta - fd) / max(np.linalg.norm(fd), 1e-9)
        worst = max(worst, err)
    assert worst < 1e-6


def test_jacobian_dimension_mismatch():
    cfg = ChainConfig(n_el=2, theta_el=[0.5, 0.5], theta_eb=[0.1, 0, 0])
    with pytest.raises(ValueError):
        jacobian_linear(cfg, np.zeros(5), np.zeros(4))


# ------------------------------------------------------- endpoint_velocity

def test_endpoint_velocity_zero():
    cfg = random_config(RNG, n_el=2)
    q_b, q_prb = random_state(2, RNG)
    v = endpoint_velocity(cfg, q_b, q_prb, np.zeros(6), np.zeros(4))
    np.testing.assert_allclose(v, np.zeros(3), atol=1e-15)


def test_endpoint_velocity_rigid_translation():
    cfg = ChainConfig(n_el=2, theta_el=[0.4, 0.4], theta_eb=[0.2, 0, 0])
    dq_b = np.array([1.7, 0, 0, 0, 0, 0])
    v = endpoint_velocity(cfg, np.zeros(6), np.zeros(4), dq_b, np.zeros(4))
    np.testing.assert_allclose(v, [1.7, 0, 0], atol=1e-15)


def test_endpoint_velocity_matches_time_differences():
    for h in (1e-4, 5e-5):
        cfg = random_config(RNG, n_el=3)
        q_b, q_prb = random_state(3, RNG)
        dq_b = RNG.normal(size=6)
        dq_prb = RNG.normal(size=6)
        v = endpoint_velocity(cfg, q_b, q_prb, dq_b, dq_prb)
        fd = (
            fk_oracle(cfg, q_b + h * dq_b, q_prb + h * dq_prb)
            - fk_oracle(cfg, q_b - h * dq_b, q_prb - h * dq_prb)
        ) / (2 * h)
        np.testing.assert_allclose(v, fd, atol=5e-7)


# ---------------------------------------------------- element_error_bound

def planar_bound_oracle(total_length, first_length, zeta):
    """Triangle construction: distance from the welded element's tip to the
    deflected DLO endpoint minus the remaining chain length."""
    tip = np.array([first_length, 0.0])
    end = total_length * np.array([np.cos(zeta), np.sin(zeta)])
    return np.linalg.norm(end - tip) - (total_length - first_length)


def test_error_bound_zero_deflection():
    assert element_error_bound(1.92, 0.48, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_error_bound_reference_value():
    # L = 1.92 m rod, first element fixed at half the element length (0.48 m)
    val = element_error_bound(1.92, 0.48, np.pi / 2)
    assert val == pytest.approx(0.5390907002964771, abs=1e-12)
    assert val == pytest.approx(planar_bound_oracle(1.92, 0.48, np.pi / 2), abs=1e-12)


def test_error_bound_monotone_in_zeta():
    zs = np.linspace(0.0, np.pi, 500)
    vals = [element_error_bound(1.9, 0.38, z) for z in zs]
    assert vals[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.diff(vals) >= -1e-12)


def test_error_bound_domain_errors():
    with pytest.raises(ValueError):
        element_error_bound(1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        element_error_bound(1.0, -0.1, 0.5)
    with pytest.raises(ValueError):
        element_error_bound(1.0, 0.5, 4.0)


# ------------------------------------------------- uniform_discretization

def test_uniform_discretization_foam():
    cfg = uniform_discretization(1.9, 4)
    np.testing.assert_allclose(cfg.theta_el, np.full(4, 0.38), atol=1e-15)
    np.testing.assert_allclose(cfg.theta_eb, [0.38, 0, 0], atol=1e-15)


def test_uniform_discretization_rod_single_element():
    cfg = uniform_discretization(1.92, 1)
    np.testing.assert_allclose(cfg.theta_el, [0.96])
    np.testing.assert_allclose(cfg.theta_eb, [0.96, 0, 0])


def test_uniform_discretization_conserves_length():
    for _ in range(20):
        total = float(RNG.uniform(0.2, 4.0))
        n_el = int(RNG.integers(1, 12))
        cfg = uniform_discretization(total, n_el)
        assert abs(cfg.theta_el.sum() + cfg.theta_eb[0] - total) < 1e-12


def test_uniform_discretization_domain_errors():
    with pytest.raises(ValueError):
        uniform_discretization(-1.0, 3)
    with pytest.raises(ValueError):
        uniform_discretization(1.0, 0)


# ------------------------------------------------------------- ChainConfig

def test_chain_config_json_roundtrip():
    cfg = ChainConfig(n_el=3, theta_el=[0.2, 0.3, 0.4], theta_eb=[0.1, 0.0, -0.05])
    back = ChainConfig.from_json(cfg.to_json())
    assert back.n_el == cfg.n_el
    np.testing.assert_allclose(back.theta_el, cfg.theta_el)
    np.testing.assert_allclose(back.theta_eb, cfg.theta_eb)
    assert back.total_length == cfg.total_length


def test_chain_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(n_el=2, theta_el=[0.5, -0.5], theta_eb=[0, 0, 0])
    with pytest.raises(ValueError):
        ChainConfig(n_el=0, theta_el=[], theta_eb=[0, 0, 0])
