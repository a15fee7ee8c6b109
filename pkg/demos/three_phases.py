"""Escape, transit, stabilize: the three-phase life of a saddle-started chain.

A chain started near e_2 spends most of its time in two places: drifting away
from the equator (driven by the unstable OU coordinate) and grinding down the
tail toward the stationary fluctuation level.  The transit between the two
delta-levels in the middle is comparatively instantaneous, and gets more so
as beta shrinks (the cutoff shape of the convergence curve).
"""

from oja_diffusion import (
    OjaConfig,
    PhaseThresholds,
    crossing_report,
    cutoff_ratios,
    make_spectrum,
    predict_crossings,
    run_chain,
)

spec = make_spectrum([2.0, 1.0])
beta = 1e-3
delta = 0.25

pred = predict_crossings(spec, beta, delta, k=2)
print(f"predictions at beta = {beta:g}, delta = {delta} "
      f"(start near e_2, spectrum {[float(x) for x in spec.lambdas]}):")
print(f"  escape   N1 median {pred.n1_median:7.0f}   "
      f"(10%..90% band {pred.n1_q10:.0f} .. {pred.n1_q90:.0f})")
print(f"  transit  N2 <= {pred.n2_high:7.0f}")
print(f"  settle   N3  = {pred.n3:7.0f}")

print("\nsingle chains against those predictions:")
th = PhaseThresholds(delta=delta)
for seed in (3, 14, 15, 92):
    cfg = OjaConfig(spec=spec, beta=beta, n_steps=12_000,
                    init="near_saddle:2:1e-4", seed=seed, sampler="gaussian",
                    record_stride=10)
    rep = crossing_report(run_chain(cfg), th, k=2)
    e = rep.empirical
    print(f"  seed {seed:3d}: N1 = {e.n1}, N2 = {e.n2} (further steps), "
          f"N3 = {e.n3} (further steps)")

print("\nthe transit shrinks relative to the escape as beta -> 0:")
print(f"{'beta':>8} {'N2/N1':>8} {'N3/N1':>8}")
for b in (1e-3, 1e-4, 1e-5, 1e-6):
    r21, r31 = cutoff_ratios(spec, b, delta, k=2)
    print(f"{b:8.0e} {r21:8.4f} {r31:8.4f}")
print("(N2/N1 -> 0 while N3/N1 -> 1: almost all the time is escape + settling)")
