"""How many Benders iterations each cut strategy needs.

Every strategy solves the same relaxed problem: the multipliers come from a
few classical subgradient steps and are then held fixed.  Single-cut (SBD)
adds one aggregated cut per iteration, multi-cut (MBD) one per
scenario-period block, and the Pareto variants (PBD, MPBD) replace each
standard cut by a Magnanti-Wong cut chosen at a moving core point.

    python demos/02_cut_strategies.py
"""
from prhr.benders import BendersConfig
from prhr.instances import GeneratorParams
from prhr.report import compare_strategies, median_iterations

rows, _ = compare_strategies(GeneratorParams(n_nodes=4, n_periods=3, n_scenarios=4), seeds=[1, 2, 3],
                             benders=BendersConfig())
for r in rows:
    print(f"seed {r['seed']}  {r['strategy']:<5} iterations={r['iterations']:>2}  cuts={r['cuts']:>3}  "
          f"gap={100 * r['final_gap']:.3f}%")
print("medians:", median_iterations(rows))
