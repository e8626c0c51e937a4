"""Sample average approximation on a small template, then the value of the
stochastic solution.

Each replication solves a freshly sampled instance to optimality; their mean
is the statistical lower bound.  The best replication's hub plan is priced
on a larger reference sample for the upper bound.  Sampled instances share
one scaling and one risk standardization so the numbers are comparable.

    python demos/03_saa_and_vss.py
"""
from prhr.instances import GeneratorParams
from prhr.saa import SaaConfig, compute_vss, run_saa

template = GeneratorParams(n_nodes=3, n_periods=2, n_scenarios=5, seed=4)
for size in (3, 6):
    cfg = SaaConfig(sample_size=size, replications=4, reference_size=60, seed=4)
    rep = run_saa(template, cfg)
    print(f"|S|={size}: lower={rep.mu_lb:.5f} (var {rep.var_lb:.2e})  upper={rep.ub:.5f}  "
          f"gap={rep.gap_percent:.3f}%  chosen replication {rep.chosen_index}")

v = compute_vss(template, SaaConfig(sample_size=6, replications=2, reference_size=60, seed=4))
print(f"RP={v.rp:.5f}  EEV={v.eev:.5f}  VSS={v.vss:.5f}")
