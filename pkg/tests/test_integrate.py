import numpy as np
import pytest

from prbdyn.dynamics import FOAM_CYLINDER, make_field, material_to_coeffs
from prbdyn.integrate import RADAU3_A, RADAU3_B, RADAU3_C, IntegrationError, step_irk3
from prbdyn.kinematics import uniform_discretization


def test_butcher_table_is_consistent():
    # stiffly accurate: b equals the last row of A; c sums match row sums
    np.testing.assert_allclose(RADAU3_B, RADAU3_A[-1])
    np.testing.assert_allclose(RADAU3_A.sum(axis=1), RADAU3_C)
    # order conditions up to 3
    assert RADAU3_B.sum() == pytest.approx(1.0)
    assert RADAU3_B @ RADAU3_C == pytest.approx(0.5)
    assert RADAU3_B @ RADAU3_C**2 == pytest.approx(1.0 / 3.0)
    assert RADAU3_B @ RADAU3_A @ RADAU3_C == pytest.approx(1.0 / 6.0)


def test_zero_field_keeps_state():
    f = lambda h, x: np.zeros_like(h)
    h0 = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(step_irk3(f, h0, None, 0.01), h0)


def test_scalar_exponential_one_step_error():
    lam, dt = -10.0, 0.01
    f = lambda h, x: lam * h
    h1 = step_irk3(f, np.array([1.0]), None, dt)
    err = abs(h1[0] - np.exp(lam * dt))
    assert err < 0.1 * abs(lam * dt) ** 4
    # fourth-order local error: shrinking dt by 2 cuts the error ~16x
    h1b = step_irk3(f, np.array([1.0]), None, dt / 2)
    err_b = abs(h1b[0] - np.exp(lam * dt / 2))
    assert err_b < err / 10.0


def test_stiff_decay_is_stable():
    lam = -1e6
    f = lambda h, x: lam * h
    h = np.array([1.0])
    for _ in range(5):
        h = step_irk3(f, h, None, 0.01)
    assert abs(h[0]) < 1e-8  # L-stability damps the stiff mode


def test_invalid_dt():
    with pytest.raises(ValueError):
        step_irk3(lambda h, x: h, np.array([1.0]), None, -0.1)


def test_newton_failure_raises_integration_error():
    # a wrong (zero) Jacobian turns Newton into a fixed-point iteration that
    # diverges on this stiff cubic field
    f = lambda h, x: -1e6 * h**3
    with pytest.raises(IntegrationError):
        step_irk3(f, np.array([1.0]), None, 1.0,
                  jac=lambda h, x: np.zeros((1, 1)), max_iter=10)


def rk4_reference(field, h0, x, total_time, dt):
    h = h0.copy()
    n = int(round(total_time / dt))
    for _ in range(n):
        k1 = field(h, x)
        k2 = field(h + 0.5 * dt * k1, x)
        k3 = field(h + 0.5 * dt * k2, x)
        k4 = field(h + dt * k3, x)
        h = h + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return h


def damped_chain_setup():
    cfg = uniform_discretization(FOAM_CYLINDER.length, 1)
    coeffs = material_to_coeffs(FOAM_CYLINDER, cfg)
    field, jac = make_field(cfg, coeffs, gravity=np.zeros(3))
    h0 = np.array([0.3, -0.2, 0.0, 0.0])
    return field, jac, h0


def radau_endpoint(field, jac, h0, total_time, dt):
    h = h0.copy()
    for _ in range(int(round(total_time / dt))):
        h = step_irk3(field, h, np.zeros(18), dt, jac=jac)
    return h


def test_third_order_convergence_on_damped_chain():
    field, jac, h0 = damped_chain_setup()
    total_time = 1.0
    ref = rk4_reference(field, h0, np.zeros(18), total_time, 5e-4)
    errors = []
    for dt in (4e-3, 2e-3, 1e-3):
        end = radau_endpoint(field, jac, h0, total_time, dt)
        errors.append(np.linalg.norm(end - ref))
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    for r in ratios:
        assert 5.5 <= r <= 10.5, f"halving ratio {r} outside order-3 range {errors}"
