"""
Exactness: why the correction variable earns its keep
=====================================================

With heterogeneous local objectives, plain decentralized gradient descent
(DSGD) cannot converge to the true optimizer under a constant stepsize: the
disagreement between local minimizers leaves a persistent bias floor. The
tracked correction d in CEDAS removes that floor. With zero gradient noise
the contrast is stark.
"""

import numpy as np

from cedas_sim import algo

problem = {"kind": "quadratic", "n": 48, "p": 20, "samples_per_agent": 30,
           "heterogeneity": 1.0, "rho": 0.2, "noise": 0.0, "seed": 0}
base = {"problem": problem,
        "schedule": {"kind": "constant", "eta": 0.03},
        "iters": 3000, "batch": "full", "seed": 1, "reps": 1,
        "topology": {"kind": "ring", "n": 48}}

# identity compression and alpha = 1 specialize the recursion to its
# uncompressed core, so the only difference from DSGD is the correction
cedas = algo.config_from_dict(dict(
    base, algorithm="cedas", name="exact",
    compressor={"kind": "identity"}, alpha=1.0, gamma=0.5))
dsgd = algo.config_from_dict(dict(base, algorithm="dsgd", name="stall"))

tr_c = algo.run_single(cedas, rep=0)
tr_d = algo.run_single(dsgd, rep=0)

for k in (0, 300, 1000, 3000):
    i = int(np.searchsorted(tr_c.data["k"], k))
    print(f"k={k:5d}  cedas residual {tr_c.data['residual'][i]:.3e}   "
          f"dsgd residual {tr_d.data['residual'][i]:.3e}")

# CEDAS drives the residual to numerical zero while DSGD flatlines at a
# bias floor set by the heterogeneity and the stepsize.
print(f"\nfinal: cedas {tr_c.data['residual'][-1]:.2e}, "
      f"dsgd stalls near {tr_d.data['residual'][-1]:.2e}")
