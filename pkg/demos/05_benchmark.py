# Why learn discrete-time dynamics at all?  Prediction speed.  One second of
# motion costs the learned model a single pass per step, while the analytic
# chain needs an implicit stiff solve per step.  This demo times both.

import time

import numpy as np

from prbdyn import (
    ALUMINUM_ROD,
    make_bundle,
    material_to_coeffs,
    rollout,
    simulate_trajectory,
    uniform_discretization,
)

DT = 0.004
STEPS = int(round(1.0 / DT))  # one second ahead
REPS = 10

bundle = make_bundle("PRBN-RNN", n_el=3, total_length=ALUMINUM_ROD.length,
                     dt=DT, seed=0)
y0 = np.concatenate([[1.8, 0.0, -0.2], np.zeros(3)])
xs = np.zeros((STEPS + 1, 18))
xs[:, 3:6] = 0.05 * np.sin(np.linspace(0, 4 * np.pi, STEPS + 1))[:, None]


def median_time(fn, reps=REPS, warmup=2):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


t_model = median_time(lambda: rollout(bundle, y0, xs))
print(f"learned model, {STEPS} steps: {1e3 * t_model:8.2f} ms")

for n_el in (2, 5):
    cfg = uniform_discretization(ALUMINUM_ROD.length, n_el)
    coeffs = material_to_coeffs(ALUMINUM_ROD, cfg)
    h0 = np.zeros(4 * n_el)
    h0[0] = 0.05
    t_analytic = median_time(
        lambda: simulate_trajectory(cfg, coeffs, h0, None, total_time=1.0,
                                    dt=DT, keep_hidden=False),
        reps=3, warmup=1,
    )
    print(f"analytic PRB-{n_el}, {STEPS} steps: {1e3 * t_analytic:8.0f} ms   "
          f"-> learned model is {t_analytic / t_model:5.0f}x faster")
