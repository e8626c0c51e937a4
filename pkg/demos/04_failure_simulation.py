"""Link failures against the risk-aware design and the risk-free design.

The risk-free model keeps only the cost objective.  Both designs are exposed
to the same simulated failures (riskier links fail more often) and the
demand left unserved is counted.

    python demos/04_failure_simulation.py
"""
from prhr.instances import FailureSimConfig, GeneratorParams, generate_instance
from prhr.report import failure_comparison

inst = generate_instance(GeneratorParams(n_nodes=5, n_periods=2, n_scenarios=3, seed=6))
rows = failure_comparison(inst, FailureSimConfig(n_scenarios=2000, failure_probability=0.1, seed=6))
for r in rows:
    print(f"{r['model']:<6} open hubs={r['open_hubs']}  mean unserved demand={r['unserved_mean']:.3f}  "
          f"hubs by period={r['hub_sets']}")
