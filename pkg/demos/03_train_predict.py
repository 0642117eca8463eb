# End-to-end at desk scale: simulate a few short foam-cylinder trajectories,
# fit a physics-informed model (PRBN-RNN), and report the endpoint RMSE over
# growing prediction horizons.  Runs in about a minute.

import numpy as np

from prbdyn import (
    FOAM_CYLINDER,
    LossConfig,
    OptConfig,
    evaluate_rmse,
    fit,
    make_bundle,
    material_to_coeffs,
    multisine_excitation,
    simulate_trajectory,
    split,
    uniform_discretization,
    windows_from_trajectories,
)

DT, N = 0.004, 25

gen_cfg = uniform_discretization(FOAM_CYLINDER.length, n_el=2)
coeffs = material_to_coeffs(FOAM_CYLINDER, gen_cfg)

print("simulating 4 trajectories (3 train, 1 test) ...")
trajs = []
for seed in range(4):
    bm = multisine_excitation(seed=seed, amplitudes=[0.25, 0.25, 0.15, 0.3, 0.3, 0.3],
                              harmonics=[0.3, 0.6, 1.1], total_time=6.0, dt=DT)
    trajs.append(simulate_trajectory(gen_cfg, coeffs, np.zeros(8), bm,
                                     total_time=6.0, dt=DT))

bundle = make_bundle("PRBN-RNN", n_el=1, total_length=FOAM_CYLINDER.length,
                     dt=DT, seed=0, widths=(32, 32))
data = windows_from_trajectories(trajs[:3], N, stride=3)
train, val = split(data, 0.85, seed=0)
print(f"{len(train)} training windows of {N} steps ({N * DT:.2f} s each)")

fitted, history = fit(
    bundle, train, val,
    OptConfig(learning_rate=3e-3, epochs=30, batch_size=64, seed=0),
    LossConfig.for_bundle(bundle),
    log=lambda r: print(f"  epoch {r['epoch']:2d}  val loss {r['val_loss']:.5f}")
    if r["epoch"] % 5 == 0 else None,
)

print("\nlearned element lengths:", fitted.chain.theta_el.round(4),
      "marker offset:", fitted.chain.theta_eb.round(4))
print("\nheld-out endpoint RMSE:")
for mult in (1, 2, 5, 10):
    res = evaluate_rmse(fitted, trajs[3:], N, mult)
    print(f"  horizon {mult:>2d}N ({mult * N * DT:4.1f} s): "
          f"pos {100 * res.pos_rmse:6.2f} cm   vel {100 * res.vel_rmse:6.1f} cm/s")
