"""Shared fixtures: a small synthetic dataset and a briefly trained model.

Session-scoped because the simulator runs and the short fit are the slowest
parts of the unit suite; several spec-level checks reuse them.
"""

import numpy as np
import pytest

from prbdyn.dynamics import FOAM_CYLINDER, material_to_coeffs
from prbdyn.kinematics import uniform_discretization
from prbdyn.model import make_bundle
from prbdyn.simulate import multisine_excitation, simulate_trajectory
from prbdyn.training import (
    LossConfig,
    OptConfig,
    fit,
    split,
    windows_from_trajectories,
)

TINY_DT = 0.004
TINY_N = 20


@pytest.fixture(scope="session")
def tiny_data():
    """Two short foam-cylinder trajectories (train) plus one held out."""
    cfg = uniform_discretization(FOAM_CYLINDER.length, 1)
    coeffs = material_to_coeffs(FOAM_CYLINDER, cfg)
    trajs = []
    for seed in (11, 12, 13):
        bm = multisine_excitation(
            seed=seed,
            amplitudes=[0.25, 0.25, 0.15, 0.3, 0.3, 0.3],
            harmonics=[0.3, 0.6, 1.1],
            total_time=4.0,
            dt=TINY_DT,
        )
        trajs.append(
            simulate_trajectory(cfg, coeffs, np.zeros(4), bm, total_time=4.0,
                                dt=TINY_DT, meta={"seed": seed})
        )
    return {"train": trajs[:2], "test": trajs[2:], "generator": cfg}


@pytest.fixture(scope="session")
def tiny_trained(tiny_data):
    """A PRBN-RNN fitted briefly on the tiny dataset."""
    bundle = make_bundle("PRBN-RNN", n_el=1, total_length=FOAM_CYLINDER.length,
                         dt=TINY_DT, seed=3, widths=(16, 16))
    data = windows_from_trajectories(tiny_data["train"], TINY_N, stride=2)
    train, val = split(data, 0.85, seed=0)
    loss_cfg = LossConfig.for_bundle(bundle)
    opt = OptConfig(learning_rate=5e-3, epochs=40, batch_size=64, seed=0)
    fitted, history = fit(bundle, train, val, opt, loss_cfg)
    return {"bundle": fitted, "history": history, "train": train, "val": val,
            "loss_cfg": loss_cfg}
