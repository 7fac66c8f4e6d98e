"""
Direct trajectory regression vs one-step dynamic programming
============================================================

The benchmark system carries a hidden feedback state whose influence is set
by the memory level alpha.  At alpha=0 the visible state is Markov and both
estimators work; at alpha=0.95 the one-step model is misspecified and the
backward recursion drifts, while the direct estimator, which regresses
whole-trajectory safety labels on initial states, does not care.

Run:  python3 demos/direct_vs_dp.py      (about half a minute)
"""

import numpy as np

from safecert import (
    SynthSystemParams,
    backward_value,
    brier_decomposition_mc,
    default_kernel_spec,
    default_safe_region,
    eval_grid,
    evaluate_dp,
    excess_rmse,
    extract_onestep_pairs,
    fit_direct,
    fit_dp,
    gen_dataset,
    mc_ground_truth,
    predict,
    rmse,
)

T = 15
N = 300
SEED = 1

region = default_safe_region()
grid = eval_grid(region, (20, 20))

print(f"horizon T={T}, N={N} trajectories, 20x20 evaluation grid, seed {SEED}")
print(f"{'alpha':>6} {'method':>7} {'rmse':>8} {'excess':>8} {'rel':>8}")

for alpha in (0.0, 0.5, 0.95):
    params = SynthSystemParams(alpha=alpha)

    # Monte Carlo reference: 300 rollouts per grid point
    truth = mc_ground_truth(params, region, grid, T, 300, SEED).p_mc

    # direct: label each trajectory by whole-horizon safety, ridge-regress
    # the labels on the initial states
    ts = gen_dataset(params, region, N, T, SEED)
    direct = fit_direct(default_kernel_spec("direct", T, "iid"), ts, region)
    est = np.clip(predict(direct, grid), 0.0, 1.0)
    print(
        f"{alpha:>6g} {'direct':>7} {rmse(est, truth):>8.4f} "
        f"{excess_rmse(est, truth):>8.4f} "
        f"{brier_decomposition_mc(est, truth).rel:>8.4f}"
    )

    # dp: fit a one-step conditional model on iid transition pairs and run
    # the clamped backward recursion over the same horizon
    pairs = extract_onestep_pairs(ts, N * T, "iid", SEED, params=params, region=region)
    dp = fit_dp(default_kernel_spec("dp", T, "iid"), pairs, region)
    est = np.clip(evaluate_dp(dp, backward_value(dp, T), grid), 0.0, 1.0)
    print(
        f"{alpha:>6g} {'dp':>7} {rmse(est, truth):>8.4f} "
        f"{excess_rmse(est, truth):>8.4f} "
        f"{brier_decomposition_mc(est, truth).rel:>8.4f}"
    )

print()
print("excess tracking rmse for dp at high alpha means its error is almost")
print("entirely overestimation of the true safety probability; the direct")
print("estimator keeps both small at every memory level.")
