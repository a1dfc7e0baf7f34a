"""
Convergence and the network-independence window
===============================================

On a logistic problem with a decreasing stepsize, the compressed
decentralized run eventually tracks the centralized minibatch rate
O(1/(nk)). How long "eventually" takes depends on the network: the
better-connected exponential graph reaches the centralized envelope
sooner than the grid. The transient_time metric measures that handover.
"""

import numpy as np

from cedas_sim import algo, metrics

problem = {"kind": "logistic", "n": 25, "p": 40, "samples_per_agent": 50,
           "heterogeneity": 0.5, "rho": 0.2, "noise": 0.0, "seed": 0}
base = {"problem": problem,
        "schedule": {"kind": "harmonic", "c0": 5.0, "c1": 100.0},
        "iters": 12_000, "batch": 1, "seed": 1, "reps": 1}

alpha = 1.0 / 12.0
gamma = float(np.sqrt(alpha) / 2.0)  # largest admissible at C = 1

cen = algo.run_single(algo.config_from_dict(dict(
    base, algorithm="centralized_sgd", name="cen")), rep=0)

for topo in ("exponential", "grid"):
    cfg = algo.config_from_dict(dict(
        base, algorithm="cedas", name=f"cedas_{topo}",
        topology={"kind": topo, "n": 25},
        compressor={"kind": "scaled_rand_k", "k": 20},
        alpha=alpha, gamma=gamma))
    tr = algo.run_single(cfg, rep=0)
    kt = metrics.transient_time(tr, cen, rho_tol=2.0)
    print(f"{topo:12s} final residual {tr.data['residual'][-1]:.3e}  "
          f"transient ends at k={kt}")

print(f"centralized  final residual {cen.data['residual'][-1]:.3e}")

# After its transient each decentralized curve sits within a constant
# factor of the centralized one; the grid needs more iterations, matching
# its smaller spectral gap. The full five-algorithm sweep with plots:
#   cedas-sim figures fig2 --scale 25 --reps 3
