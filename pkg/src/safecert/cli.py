"""Command-line pipeline over the library.

Subcommands mirror the experiment stages:

  gen-data    trajectories and one-step pairs per (alpha, T, seed)
  mc-oracle   Monte Carlo ground-truth grids
  certify     fit a method and write grid estimates (or a barrier report)
  calibrate   histogram-binning calibration of a method's scores
  evaluate    metrics of predictions against the MC grids
  sweep       all of the above for the full config grid

Exit codes: 0 on success, 1 on runtime or numeric failure (missing data
files included), 2 on usage or config errors.  Every output file embeds the
config hash and seed in a leading comment line, and file writes are atomic.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import abstraction as ab
from . import barrier as bar
from . import benchmark as bm
from . import calibration as cal
from . import metrics as mx
from .config import ConfigError, ExperimentConfig, load_config
from .direct import fit_direct, predict
from .dp import backward_value, evaluate_dp, fit_dp
from .io import atomic_write, header_comment, strip_comments
from .kernels import NumericError

__all__ = ["main"]

_CERTIFY_METHODS = ("direct", "dp", "imp", "ssr", "barrier")


def _system(cfg: ExperimentConfig, alpha: float) -> bm.SynthSystemParams:
    return bm.SynthSystemParams(
        alpha=alpha,
        sigma=cfg["system.sigma"],
        h=cfg["system.h"],
        beta_c=cfg["system.beta_c"],
        gamma_c=cfg["system.gamma_c"],
    )


def _grid(cfg: ExperimentConfig, region: bm.SafeRegion) -> np.ndarray:
    return bm.eval_grid(region, (cfg["grid.nx"], cfg["grid.ny"]))


def _cells(cfg: ExperimentConfig, seed_offset: int):
    for alpha in cfg["system.alphas"]:
        for T in cfg["horizons"]:
            for seed in cfg["seeds"]:
                yield alpha, T, seed + seed_offset


def _tag(alpha: float, T: int, seed: int) -> str:
    return f"a{alpha:g}_T{T}_s{seed}"


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    return Path(args.out) if args.out else Path(cfg["out_dir"])


def _write_grid_csv(path: Path, grid: np.ndarray, values: np.ndarray,
                    value_name: str, header: str) -> None:
    buf = _io.StringIO()
    buf.write(f"# {header}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["gx", "gy", value_name])
    for g, v in zip(grid, values):
        writer.writerow([f"{g[0]:.17g}", f"{g[1]:.17g}", f"{v:.17g}"])
    atomic_write(path, buf.getvalue())


def _read_grid_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    if not path.exists():
        raise FileNotFoundError(f"missing data file: {path}")
    rows = list(csv.reader(strip_comments(path.read_text()).splitlines()))[1:]
    arr = np.asarray([[float(v) for v in r] for r in rows if r])
    return arr[:, :2], arr[:, 2]


# ---------------------------------------------------------------- gen-data

def _gen_cell(cfg: ExperimentConfig, out: Path, alpha: float, T: int, seed: int) -> None:
    params = _system(cfg, alpha)
    region = bm.default_safe_region()
    ts = bm.gen_dataset(params, region, cfg["data.n_trajectories"], T, seed)
    head = header_comment(cfg.config_hash, seed, alpha=f"{alpha:g}", T=T, kind="trajectories")
    atomic_write(out / "data" / f"trajs_{_tag(alpha, T, seed)}.csv", ts.to_csv(head))

    mode = cfg["data.mode"]
    pairs = bm.extract_onestep_pairs(
        ts, cfg.n_pairs(T), mode, seed, params=params, region=region
    )
    head = header_comment(cfg.config_hash, seed, alpha=f"{alpha:g}", T=T, kind=f"pairs-{mode}")
    atomic_write(out / "data" / f"pairs_{_tag(alpha, T, seed)}.csv", pairs.to_csv(head))


def cmd_gen_data(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    _run_cells(_gen_cell, cfg, out, args)
    return 0


# ---------------------------------------------------------------- mc-oracle

def _mc_cell(cfg: ExperimentConfig, out: Path, alpha: float, T: int, seed: int) -> None:
    params = _system(cfg, alpha)
    region = bm.default_safe_region()
    grid = _grid(cfg, region)
    gt = bm.mc_ground_truth(params, region, grid, T, cfg["mc.rollouts"], seed)
    head = header_comment(cfg.config_hash, seed, alpha=f"{alpha:g}", T=T, kind="mc")
    atomic_write(out / "mc" / f"mc_{_tag(alpha, T, seed)}.csv", gt.to_csv(head))


def cmd_mc_oracle(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    _run_cells(_mc_cell, cfg, out, args)
    return 0


# ---------------------------------------------------------------- certify

def _load_pairs(cfg: ExperimentConfig, out: Path, alpha: float, T: int, seed: int) -> bm.OneStepPairs:
    path = out / "data" / f"pairs_{_tag(alpha, T, seed)}.csv"
    if not path.exists():
        raise FileNotFoundError(f"missing data file: {path}")
    return bm.OneStepPairs.from_csv(path.read_text(), params=_system(cfg, alpha), seed=seed)


def _load_trajs(cfg: ExperimentConfig, out: Path, alpha: float, T: int, seed: int) -> bm.TrajectorySet:
    path = out / "data" / f"trajs_{_tag(alpha, T, seed)}.csv"
    if not path.exists():
        raise FileNotFoundError(f"missing data file: {path}")
    return bm.TrajectorySet.from_csv(path.read_text(), params=_system(cfg, alpha), seed=seed)


def _certify_estimates(cfg: ExperimentConfig, out: Path, method: str,
                       alpha: float, T: int, seed: int) -> None:
    region = bm.default_safe_region()
    grid = _grid(cfg, region)
    if method == "direct":
        ts = _load_trajs(cfg, out, alpha, T, seed)
        model = fit_direct(cfg.kernel_spec("direct", T), ts, region)
        est = predict(model, grid)
    elif method == "dp":
        pairs = _load_pairs(cfg, out, alpha, T, seed)
        model = fit_dp(cfg.kernel_spec("dp", T), pairs, region, ambiguity=cfg["dp.ambiguity"])
        stack = backward_value(model, T)
        est = evaluate_dp(model, stack, grid)
    elif method in ("imp", "ssr"):
        pairs = _load_pairs(cfg, out, alpha, T, seed)
        model = fit_dp(cfg.kernel_spec("dp", T), pairs, region, ambiguity=cfg["dp.ambiguity"])
        part = ab.build_partition(region, (cfg["abstraction.nx"], cfg["abstraction.ny"]))
        if method == "imp":
            probs = ab.empirical_cell_probs(part, model)
            imodel = ab.IntervalModel.from_radii(probs, cfg["imp.radius"])
            v0 = ab.imp_value_iteration(imodel, part, T)
        else:
            v0 = ab.ssr_value_iteration(part, model, ab.SsrParams(delta=cfg["ssr.delta"]), T)
        est = ab.evaluate_abstraction(v0, part, grid)
    else:
        raise ValueError(f"unhandled method {method!r}")
    head = header_comment(cfg.config_hash, seed, alpha=f"{alpha:g}", T=T, method=method)
    _write_grid_csv(out / "pred" / f"{method}_{_tag(alpha, T, seed)}.csv",
                    grid, est, "estimate", head)


def _certify_barrier(cfg: ExperimentConfig, out: Path, alpha: float, T: int, seed: int) -> None:
    # demonstration candidate: ridge fit of the normalized squared distance
    # from the box center, checked against the fitted one-step model
    region = bm.default_safe_region()
    pairs = _load_pairs(cfg, out, alpha, T, seed)
    model = fit_dp(cfg.kernel_spec("dp", T), pairs, region, ambiguity=cfg["dp.ambiguity"])
    lo, hi = region.box_array()
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    centers = bar._mesh(lo, hi, (9,) * region.dim)
    targets = np.sum(((centers - center) / half) ** 2, axis=1) / region.dim + 0.05
    candidate = bar.fit_barrier_candidate(cfg.kernel_spec("dp", T), centers, targets)
    x0_box = (center - 0.1 * half, center + 0.1 * half)
    report = bar.check_barrier(candidate, model, region, x0_box, T, grids=21)
    head = header_comment(cfg.config_hash, seed, alpha=f"{alpha:g}", T=T, method="barrier")
    atomic_write(
        out / "pred" / f"barrier_{_tag(alpha, T, seed)}.json",
        f"// {head}\n" + report.to_json() + "\n",
    )


def _certify_cell(cfg: ExperimentConfig, out: Path, alpha: float, T: int, seed: int,
                  methods: tuple[str, ...] = ()) -> None:
    for method in methods:
        if method == "barrier":
            _certify_barrier(cfg, out, alpha, T, seed)
        else:
            _certify_estimates(cfg, out, method, alpha, T, seed)


def _certify_methods(cfg: ExperimentConfig, args) -> tuple[str, ...]:
    if getattr(args, "method", None):
        if args.method not in _CERTIFY_METHODS:
            raise ConfigError(f"unknown method {args.method!r}; valid: {_CERTIFY_METHODS}")
        return (args.method,)
    return tuple(m for m in cfg["methods"] if m in _CERTIFY_METHODS)


def cmd_certify(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    methods = _certify_methods(cfg, args)
    _run_cells(_certify_cell, cfg, out, args, methods=methods)
    return 0


# ---------------------------------------------------------------- calibrate

def _calibrate_cell(cfg: ExperimentConfig, out: Path, alpha: float, T: int, seed: int,
                    methods: tuple[str, ...] = ("direct",)) -> None:
    method = methods[0]
    region = bm.default_safe_region()
    params = _system(cfg, alpha)
    grid = _grid(cfg, region)

    if method == "direct":
        ts = _load_trajs(cfg, out, alpha, T, seed)
        model = fit_direct(cfg.kernel_spec("direct", T), ts, region)
        score_at = lambda pts: np.asarray(predict(model, pts), dtype=float)
    elif method == "dp":
        pairs = _load_pairs(cfg, out, alpha, T, seed)
        model = fit_dp(cfg.kernel_spec("dp", T), pairs, region, ambiguity=cfg["dp.ambiguity"])
        stack = backward_value(model, T)
        score_at = lambda pts: np.asarray(evaluate_dp(model, stack, pts), dtype=float)
    else:
        raise ConfigError(f"calibrate supports methods 'direct' and 'dp', got {method!r}")

    cal_ts = bm.gen_dataset(params, region, cfg["data.n_calibration"], T, seed, purpose="cal-traj")
    scores = score_at(cal_ts.initial_states)
    outcomes = bm.trajectory_safe(region, cal_ts.states)
    calibrator = cal.calibrate(
        scores, outcomes, n_bins=cfg["calibration.bins"], delta_conf=cfg["calibration.delta"]
    )
    head = header_comment(cfg.config_hash, seed, alpha=f"{alpha:g}", T=T, method=method)
    atomic_write(
        out / "cal" / f"calibrator_{method}_{_tag(alpha, T, seed)}.json",
        f"// {head}\n" + calibrator.to_json() + "\n",
    )
    bounds = cal.certified_lower_bound(calibrator, score_at(grid))
    _write_grid_csv(out / "cal" / f"bounds_{method}_{_tag(alpha, T, seed)}.csv",
                    grid, bounds, "lower_bound", head)


def cmd_calibrate(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    method = getattr(args, "method", None) or "direct"
    if method not in ("direct", "dp"):
        raise ConfigError(f"calibrate supports methods 'direct' and 'dp', got {method!r}")
    _run_cells(_calibrate_cell, cfg, out, args, methods=(method,))
    return 0


# ---------------------------------------------------------------- evaluate

_METRIC_COLS = ["rmse", "excess_rmse", "brier", "brier_binned", "rel", "res", "unc", "res_norm"]


def cmd_evaluate(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    methods = tuple(
        m for m in _certify_methods(cfg, args) if m != "barrier"
    )
    rows = []
    for alpha, T, seed in _cells(cfg, args.seed_offset):
        _, p_mc = _read_grid_csv(out / "mc" / f"mc_{_tag(alpha, T, seed)}.csv")
        for method in methods:
            _, est = _read_grid_csv(out / "pred" / f"{method}_{_tag(alpha, T, seed)}.csv")
            est = np.clip(est, 0.0, 1.0)
            rep = mx.brier_decomposition_mc(est, p_mc, n_bins=10)
            rows.append({
                "method": method, "alpha": f"{alpha:g}", "T": T, "seed": seed,
                "rmse": mx.rmse(est, p_mc),
                "excess_rmse": mx.excess_rmse(est, p_mc),
                "brier": rep.brier, "brier_binned": rep.brier_binned,
                "rel": rep.rel, "res": rep.res, "unc": rep.unc, "res_norm": rep.res_norm,
            })

    head = header_comment(cfg.config_hash, args.seed_offset, kind="metrics")
    buf = _io.StringIO()
    buf.write(f"# {head}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "alpha", "T", "seed"] + _METRIC_COLS)
    for r in rows:
        writer.writerow([r["method"], r["alpha"], r["T"], r["seed"]]
                        + [f"{r[c]:.17g}" for c in _METRIC_COLS])
    atomic_write(out / "metrics.csv", buf.getvalue())

    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["method"], r["alpha"], r["T"]), []).append(r)
    buf = _io.StringIO()
    buf.write(f"# {head}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["method", "alpha", "T", "n_seeds"]
        + [f"mean_{c}" for c in _METRIC_COLS]
        + [f"twosd_{c}" for c in _METRIC_COLS]
    )
    for (method, alpha, T), members in sorted(groups.items()):
        means = [float(np.mean([m[c] for m in members])) for c in _METRIC_COLS]
        twosd = [
            2.0 * float(np.std([m[c] for m in members], ddof=1)) if len(members) > 1 else 0.0
            for c in _METRIC_COLS
        ]
        writer.writerow([method, alpha, T, len(members)]
                        + [f"{v:.17g}" for v in means] + [f"{v:.17g}" for v in twosd])
    atomic_write(out / "metrics_aggregate.csv", buf.getvalue())
    return 0


# ---------------------------------------------------------------- sweep

def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    for step in (cmd_gen_data, cmd_mc_oracle, cmd_certify, cmd_calibrate, cmd_evaluate):
        code = step(cfg, args)
        if code != 0:
            return code
    return 0


# ---------------------------------------------------------------- plumbing

def _run_cells(fn, cfg: ExperimentConfig, out: Path, args, **kwargs) -> None:
    cells = list(_cells(cfg, args.seed_offset))
    threads = max(1, args.threads)
    if threads == 1:
        for alpha, T, seed in cells:
            fn(cfg, out, alpha, T, seed, **kwargs)
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(fn, cfg, out, alpha, T, seed, **kwargs) for alpha, T, seed in cells
        ]
        for fut in futures:
            fut.result()


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safecert",
        description="certified safety-probability bounds from sampled trajectories",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("gen-data", "generate trajectory and one-step pair datasets"),
        ("mc-oracle", "Monte Carlo ground-truth safety grids"),
        ("certify", "fit a method and write grid estimates"),
        ("calibrate", "histogram-binning calibration of a method's scores"),
        ("evaluate", "metrics of stored predictions against MC grids"),
        ("sweep", "run the full pipeline over the config grid"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", default=None, help="path to the experiment config file")
        p.add_argument("--method", default=None, help="restrict to one method")
        p.add_argument("--seed-offset", type=int, default=0, dest="seed_offset")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=1)
    return parser


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "mc-oracle": cmd_mc_oracle,
    "certify": cmd_certify,
    "calibrate": cmd_calibrate,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, NumericError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
