"""Command-line harness: data generation, training, evaluation, benchmarks.

Subcommands
-----------
gen-data   synthesize excitation trajectories with the analytic simulator
train      fit a model on trajectory files, write checkpoint + history
eval       RMSE table over prediction horizons (learned or analytic predictor)
bench      prediction-time benchmark: learned rollout vs analytic integration
shape      per-step chain shapes reconstructed from a rollout's hidden states

Every command takes ``--config`` (JSON), ``--seed``, ``--out`` and writes a
manifest that makes the outputs reproducible.  Exit codes: 0 on success, 2 on
user/configuration errors, 3 on numerical divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import GRAVITY, MATERIAL_PRESETS, material_to_coeffs
from .integrate import IntegrationError
from .kinematics import uniform_discretization
from .model import (
    DivergenceError,
    dynamics_step,
    encode,
    chain_points,
    load_bundle,
    make_bundle,
    rollout,
    save_bundle,
)
from .simulate import load_trajectory, multisine_excitation, save_trajectory, simulate_trajectory
from .training import (
    LossConfig,
    OptConfig,
    evaluate_rmse,
    fit,
    make_windows,
    split,
    windows_from_trajectories,
)

DEFAULT_EXCITATION = {
    "amplitudes": [0.25, 0.25, 0.15, 0.3, 0.3, 0.3],
    "harmonics": [0.25, 0.5, 1.0, 1.5],
}


class UserError(Exception):
    """Configuration or input problem; maps to exit code 2."""


def _load_config(path):
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise UserError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UserError(f"config file {path} is not valid JSON: {exc}") from exc


def _write_manifest(out_dir, command, config, seed, outputs):
    payload = {
        "command": command,
        "config": config,
        "config_sha256": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()
        ).hexdigest(),
        "seed": seed,
        "version": __version__,
        "outputs": sorted(str(p) for p in outputs),
        "created": datetime.now(timezone.utc).isoformat(),
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(payload, indent=2))
    return path


def _ensure_out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- gen-data

def _gen_config(config, seed):
    preset = config.get("preset", "aluminum_rod")
    if preset not in MATERIAL_PRESETS:
        raise UserError(
            f"unknown preset {preset!r}; choose from {sorted(MATERIAL_PRESETS)}"
        )
    return {
        "preset": preset,
        "n_el": int(config.get("n_el", 7)),
        "n_trajectories": int(config.get("n_trajectories", 8)),
        "total_time": float(config.get("total_time", 20.0)),
        "dt": float(config.get("dt", 0.004)),
        "gravity": bool(config.get("gravity", True)),
        "excitation": config.get("excitation", DEFAULT_EXCITATION),
        "seed": int(seed),
    }


def _simulate_from_sidecar(meta):
    """Re-run the generator for one trajectory described by its sidecar."""
    material = MATERIAL_PRESETS[meta["preset"]]
    cfg = uniform_discretization(material.length, int(meta["n_el"]))
    coeffs = material_to_coeffs(material, cfg)
    child = np.random.SeedSequence(int(meta["seed"])).spawn(int(meta["traj_index"]) + 1)[-1]
    bm = multisine_excitation(
        seed=child,
        amplitudes=meta["excitation"]["amplitudes"],
        harmonics=meta["excitation"]["harmonics"],
        total_time=float(meta["total_time"]),
        dt=float(meta["dt"]),
    )
    gravity = GRAVITY if meta.get("gravity", True) else np.zeros(3)
    return simulate_trajectory(
        cfg, coeffs, np.zeros(4 * cfg.n_el), bm,
        total_time=float(meta["total_time"]), dt=float(meta["dt"]),
        gravity=gravity,
    )


def cmd_gen_data(args):
    config = _gen_config(_load_config(args.config), args.seed)
    out = _ensure_out(args)
    material = MATERIAL_PRESETS[config["preset"]]
    outputs = []
    for i in range(config["n_trajectories"]):
        meta = {
            "preset": config["preset"],
            "material": {
                "length": material.length, "d_in": material.d_in,
                "d_out": material.d_out, "density": material.density,
                "young_modulus": material.young_modulus, "damping": material.damping,
            },
            "n_el": config["n_el"],
            "seed": config["seed"],
            "traj_index": i,
            "total_time": config["total_time"],
            "excitation": config["excitation"],
            "gravity": config["gravity"],
            "dt": config["dt"],
        }
        traj = _simulate_from_sidecar(meta)
        traj.meta = meta
        path = out / f"traj_{i:03d}.csv"
        save_trajectory(traj, path)
        outputs += [path, path.with_suffix(".json")]
        print(f"wrote {path} ({len(traj)} samples)")
    _write_manifest(out, "gen-data", config, config["seed"], outputs)
    return 0


# ------------------------------------------------------------------- train

def _load_trajectories(paths):
    files = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(p.glob("traj_*.csv")))
        elif p.exists():
            files.append(p)
        else:
            raise UserError(f"data path does not exist: {p}")
    if not files:
        raise UserError("no trajectory files found under the given data paths")
    return [load_trajectory(f) for f in files]


def cmd_train(args):
    config = _load_config(args.config)
    model_cfg = config.get("model", {})
    loss_cfg_raw = config.get("loss", {})
    opt_cfg_raw = config.get("opt", {})
    data_cfg = config.get("data", {})
    seed = args.seed if args.seed is not None else int(opt_cfg_raw.get("seed", 0))

    paths = data_cfg.get("paths")
    if not paths:
        raise UserError("config section data.paths is required")
    trajs = _load_trajectories(paths)

    dts = {t.dt for t in trajs}
    if len(dts) != 1:
        raise UserError(f"trajectories disagree on dt: {sorted(dts)}")
    dt = dts.pop()
    lengths = {t.meta.get("material", {}).get("length") for t in trajs}
    lengths.discard(None)
    total_length = model_cfg.get("total_length", lengths.pop() if lengths else None)
    if total_length is None:
        raise UserError("DLO length unknown: set model.total_length or use sidecars")

    variant = model_cfg.get("variant", "PRBN-RNN")
    n_el = int(model_cfg.get("n_el", 7))
    widths = tuple(model_cfg.get("widths", [64, 64]))
    bundle = make_bundle(variant, n_el, float(total_length), dt, seed, widths=widths)

    n_steps = int(data_cfg.get("N", 250))
    stride = int(data_cfg.get("stride", 1))
    fraction = float(data_cfg.get("split_fraction", 0.85))
    dataset = windows_from_trajectories(trajs, n_steps, stride)
    train_set, val_set = split(dataset, fraction, seed=seed)

    w_k_mode = loss_cfg_raw.get("w_k", "uniform")
    if w_k_mode != "uniform":
        raise UserError(f"unsupported w_k mode {w_k_mode!r}; only 'uniform' exists")
    beta = float(loss_cfg_raw.get("beta", 0.1))
    overrides = {
        k: float(loss_cfg_raw[k])
        for k in ("alpha_q", "alpha_qd", "alpha_len", "alpha_el", "alpha_eb")
        if k in loss_cfg_raw
    }
    loss_cfg = LossConfig.for_bundle(
        bundle, w_y=np.array([1.0, 1.0, 1.0, beta, beta, beta]), **overrides
    )
    opt = OptConfig(
        learning_rate=float(opt_cfg_raw.get("lr", 1e-3)),
        epochs=int(opt_cfg_raw.get("epochs", 50)),
        batch_size=int(opt_cfg_raw.get("batch", 32)),
        seed=seed,
    )

    out = _ensure_out(args)
    log = None
    if not args.quiet:
        log = lambda rec: print(
            f"epoch {rec['epoch']:3d}  train {rec['train_loss']:.6f}  "
            f"val {rec['val_loss']:.6f}  ({rec['wall_time_s']:.1f}s)"
        )
    fitted, history = fit(bundle, train_set, val_set, opt, loss_cfg, log=log)

    ckpt = out / "checkpoint.bin"
    save_bundle(fitted, ckpt)
    hist_path = out / "history.csv"
    with open(hist_path, "w") as fh:
        fh.write("epoch,train_loss,val_loss,wall_time_s\n")
        for rec in history:
            fh.write(
                f"{rec['epoch']},{rec['train_loss']:.17g},"
                f"{rec['val_loss']:.17g},{rec['wall_time_s']:.17g}\n"
            )
    _write_manifest(out, "train", config, seed, [ckpt, hist_path])
    if any(rec.get("diverged") for rec in history):
        print("training diverged; last good checkpoint retained", file=sys.stderr)
        return 3
    return 0


# -------------------------------------------------------------------- eval

def _analytic_rmse(trajs, horizon):
    """RMSE of the deterministic re-simulation against the recorded data."""
    sq_pos = sq_vel = 0.0
    count = windows = 0
    for traj in trajs:
        if len(traj) <= horizon:
            continue
        resim = _simulate_from_sidecar({**traj.meta, "dt": traj.dt})
        truth = make_windows(traj, horizon, horizon)
        pred = make_windows(resim, horizon, horizon)
        err = pred.targets - truth.targets
        sq_pos += np.sum(err[..., :3] ** 2)
        sq_vel += np.sum(err[..., 3:] ** 2)
        count += err.shape[0] * err.shape[1]
        windows += len(truth)
    if count == 0:
        return float("nan"), float("nan"), 0
    return float(np.sqrt(sq_pos / count)), float(np.sqrt(sq_vel / count)), windows


def cmd_eval(args):
    trajs = _load_trajectories(args.data)
    horizons = [float(h) for h in args.horizons.split(",")]
    n_steps = args.n
    rows = []
    if args.analytic:
        label = "analytic"
        for m in horizons:
            horizon = int(round(m * n_steps))
            pos, vel, count = _analytic_rmse(trajs, horizon)
            rows.append((label, m, horizon, pos, vel, count))
    else:
        if args.checkpoint is None:
            raise UserError("eval needs --checkpoint or --analytic")
        try:
            bundle = load_bundle(args.checkpoint)
        except (OSError, ValueError) as exc:
            raise UserError(f"cannot load checkpoint: {exc}") from exc
        for traj in trajs:
            if not np.isclose(traj.dt, bundle.dt):
                raise UserError(
                    f"data dt {traj.dt} does not match checkpoint dt {bundle.dt}"
                )
        label = bundle.variant
        for m in horizons:
            res = evaluate_rmse(bundle, trajs, n_steps, m)
            rows.append((label, m, int(round(m * n_steps)), res.pos_rmse,
                         res.vel_rmse, res.n_windows))

    out = _ensure_out(args)
    table = out / "rmse.csv"
    with open(table, "w") as fh:
        fh.write("model,horizon_multiplier,horizon_steps,pos_rmse,vel_rmse,n_windows\n")
        for row in rows:
            fh.write(f"{row[0]},{row[1]:g},{row[2]},{row[3]:.17g},{row[4]:.17g},{row[5]}\n")
    _write_manifest(out, "eval", {"horizons": horizons, "n": n_steps,
                                  "analytic": bool(args.analytic)},
                    args.seed or 0, [table])
    for row in rows:
        print(f"{row[0]:12s} horizon {row[2]:5d} steps  pos {row[3]:.4f} m  "
              f"vel {row[4]:.4f} m/s  ({row[5]} windows)")
    return 0


# ------------------------------------------------------------------- bench

def _median_time(fn, reps, warmup=3):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def cmd_bench(args):
    try:
        bundle = load_bundle(args.checkpoint)
    except (OSError, ValueError) as exc:
        raise UserError(f"cannot load checkpoint: {exc}") from exc
    dt = args.dt
    steps = int(round(args.horizon / dt))
    rng = np.random.default_rng(args.seed or 0)
    y0 = np.concatenate([[bundle.total_length * 0.9, 0.0, -0.1], np.zeros(3)])
    xs = np.zeros((2 * steps + 1, 18))
    xs[:, 3:6] = 0.05 * np.sin(np.linspace(0, 4 * np.pi, 2 * steps + 1))[:, None]

    rows = []
    t_model = _median_time(lambda: rollout(bundle, y0, xs[: steps + 1]), args.reps)
    rows.append(("model", bundle.variant, steps, t_model, 1.0))
    t_double = _median_time(lambda: rollout(bundle, y0, xs), max(3, args.reps // 2))
    rows.append(("model_2x", bundle.variant, 2 * steps, t_double, t_model / t_double))

    n_el_list = [int(v) for v in args.analytic_n_el.split(",")]
    for n_el in n_el_list:
        material = MATERIAL_PRESETS[args.preset]
        cfg = uniform_discretization(material.length, n_el)
        coeffs = material_to_coeffs(material, cfg)
        h0 = np.zeros(4 * n_el)
        h0[: 2 * n_el : 2] = 0.05 * rng.standard_normal(n_el)

        def run(cfg=cfg, coeffs=coeffs, h0=h0):
            simulate_trajectory(cfg, coeffs, h0, None, total_time=args.horizon,
                                dt=dt, keep_hidden=False)

        t_analytic = _median_time(run, args.reps)
        rows.append((f"analytic", f"PRB-{n_el}", steps, t_analytic,
                     t_analytic / t_model))

    out = _ensure_out(args)
    table = out / "timings.csv"
    with open(table, "w") as fh:
        fh.write("kind,label,steps,median_s,speedup_vs_model\n")
        for kind, label, st, med, ratio in rows:
            fh.write(f"{kind},{label},{st},{med:.17g},{ratio:.17g}\n")
    _write_manifest(out, "bench", {"dt": dt, "horizon": args.horizon,
                                   "reps": args.reps, "preset": args.preset,
                                   "analytic_n_el": n_el_list},
                    args.seed or 0, [table])
    for kind, label, st, med, ratio in rows:
        print(f"{kind:10s} {label:12s} {st:5d} steps  {med * 1e3:10.2f} ms  x{ratio:.1f}")
    speedups = [r[4] for r in rows if r[0] == "analytic"]
    if speedups and min(speedups) < 100.0:
        print(f"warning: smallest analytic/model speedup is {min(speedups):.1f}x "
              "(expected >= 100x)", file=sys.stderr)
    return 0


# ------------------------------------------------------------------- shape

def cmd_shape(args):
    try:
        bundle = load_bundle(args.checkpoint)
    except (OSError, ValueError) as exc:
        raise UserError(f"cannot load checkpoint: {exc}") from exc
    if not bundle.physics_informed:
        raise UserError(
            f"variant {bundle.variant} has no physically meaningful hidden state; "
            "shape reconstruction requires a PRBN checkpoint"
        )
    trajs = _load_trajectories(args.data)
    traj = trajs[0]
    start, n_steps = args.start, args.n
    if start + n_steps > len(traj) - 1:
        raise UserError(
            f"window [{start}, {start + n_steps}] exceeds trajectory length {len(traj)}"
        )
    cfg = bundle.chain
    params = bundle.params
    h = encode(bundle, params, traj.y[start], traj.x[start])
    points_per_step = []
    for j in range(n_steps):
        h = dynamics_step(bundle, params, h, traj.x[start + j])
        points_per_step.append(chain_points(cfg, np.asarray(h), traj.x[start + j + 1]))

    out = _ensure_out(args)
    table = out / "shape.csv"
    n_pts = cfg.n_el + 2
    with open(table, "w") as fh:
        header = ["step", "t"] + [f"{c}{i}" for i in range(n_pts) for c in ("x", "y", "z")]
        fh.write(",".join(header) + "\n")
        for j, pts in enumerate(points_per_step):
            t = traj.t[start + j + 1]
            vals = [f"{start + j + 1}", f"{t:.17g}"] + [f"{v:.17g}" for v in pts.ravel()]
            fh.write(",".join(vals) + "\n")
    _write_manifest(out, "shape", {"start": start, "n": n_steps},
                    args.seed or 0, [table])
    print(f"wrote {table} ({n_steps} steps, {n_pts} points per step)")
    return 0


# -------------------------------------------------------------------- main

def build_parser():
    parser = argparse.ArgumentParser(
        prog="prbdyn",
        description="Pseudo-rigid-body chain dynamics: simulate, learn, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic trajectories")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="fit a model on trajectory files")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="RMSE over prediction horizons")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--analytic", action="store_true",
                   help="re-simulate from sidecars instead of a checkpoint")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--horizons", default="1,2,5,10,20")
    p.add_argument("--n", type=int, default=250, help="base window length N")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="prediction-time benchmark")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dt", type=float, default=0.004)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--preset", default="aluminum_rod")
    p.add_argument("--analytic-n-el", default="2,5,7,10")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("shape", help="export reconstructed chain shapes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--n", type=int, default=250)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_shape)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, IntegrationError) as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
