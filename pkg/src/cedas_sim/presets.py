"""Canned experiment suites mirroring the reference figure designs.

Each builder returns a list of config dicts (the JSON schema) sharing one
problem instance, so the curves are directly comparable. Desk-scale budget:
n <= 100, p <= 1000, iters <= 10^5.

Hyperparameter defaults: rho = 1/5, stepsize 5/(k+100), alpha = 0.1. The
consensus stepsize gamma is derived per compressor as the largest
admissible value for the variance factor C; gossip peers without a tuning
theory of their own (Choco-SGD) share the suite's derived gamma so the
consensus mechanisms run at equal strength. The coordinate budget is 50%
of p: an unbiased scaled mask at fraction q carries C = 1/q - 1, and for
q below roughly 1/3 the compression noise fed back through the gossip
loop exceeds what any admissible gamma can damp at this alpha, so the
iteration diverges in mean square. q = 1/2 gives C = 1 with a wide
stability margin on every test topology.
"""

from .algo import theory_gamma
from .compress import from_dict as compressor_from_dict
from .errors import BudgetExceeded, ConfigInvalid

MAX_N = 100
MAX_P = 1000
MAX_ITERS = 100_000

RHO = 0.2
SCHEDULE = {"kind": "harmonic", "c0": 5.0, "c1": 100.0}
ALPHA = 0.1
BUDGET_FRAC = 0.5
# uncompressed damped-mixing reference: alpha = 1, gamma = 1/2
EDAS_GAMMA = 0.5


def check_budget(n, p, iters):
    if n > MAX_N or p > MAX_P or iters > MAX_ITERS:
        raise BudgetExceeded(
            f"requested n={n}, p={p}, iters={iters}; desk budget is "
            f"n<={MAX_N}, p<={MAX_P}, iters<={MAX_ITERS}")


def _require_square(n):
    side = int(n ** 0.5)
    if side * side != n:
        raise ConfigInvalid(f"grid topologies need a perfect-square scale, got {n}")


def _problem(kind, n, p):
    return {"kind": kind, "n": n, "p": p, "samples_per_agent": 50,
            "heterogeneity": 0.5, "rho": RHO, "noise": 0.0, "seed": 0}


def _frac_k(p, frac=BUDGET_FRAC):
    return max(1, int(frac * p))


def _gamma_for(comp_dict, p):
    """Largest admissible consensus stepsize for an unbiased compressor."""
    c = compressor_from_dict(comp_dict, p).contract.unbiased_c
    return float(theory_gamma(ALPHA, c))


def fig2_suite(scale=25, iters=20_000, seed=1, reps=3, p=40):
    """Residual vs iterations: five algorithms on grid and exponential graphs."""
    check_budget(scale, p, iters)
    _require_square(scale)
    kc = _frac_k(p)
    compressors = {"cedas": {"kind": "scaled_rand_k", "k": kc},
                   "choco_sgd": {"kind": "top_k", "k": kc}}
    gamma = _gamma_for(compressors["cedas"], p)
    configs = []
    for topo in ("grid", "exponential"):
        for algorithm in ("cedas", "choco_sgd", "dsgd", "edas", "centralized_sgd"):
            d = {"name": f"fig2_{topo}_{algorithm}",
                 "algorithm": algorithm,
                 "problem": _problem("logistic", scale, p),
                 "topology": {"kind": topo, "n": scale},
                 "schedule": dict(SCHEDULE),
                 "iters": iters, "batch": 1, "seed": seed, "reps": reps}
            if algorithm in compressors:
                d["compressor"] = dict(compressors[algorithm])
            if algorithm == "cedas":
                d["alpha"] = ALPHA
            if algorithm in ("cedas", "choco_sgd"):
                d["gamma"] = gamma
            if algorithm == "edas":
                d["gamma"] = EDAS_GAMMA
            configs.append(d)
    return configs


def fig3_suite(scale=25, iters=20_000, seed=1, reps=3, p=40):
    """Residual vs communicated bits on a grid: compressed vs uncompressed."""
    check_budget(scale, p, iters)
    _require_square(scale)
    kc = _frac_k(p)
    mask = {"kind": "scaled_rand_k", "k": kc}
    quant = {"kind": "quantize_b", "b": 3}
    menu = [
        ("cedas_scaled_rand_k", "cedas", mask, _gamma_for(mask, p)),
        ("cedas_quantize3", "cedas", quant, _gamma_for(quant, p)),
        ("choco_top_k", "choco_sgd", {"kind": "top_k", "k": kc}, _gamma_for(mask, p)),
        ("choco_rand_k", "choco_sgd", {"kind": "rand_k", "k": kc}, _gamma_for(mask, p)),
        ("edas", "edas", None, EDAS_GAMMA),
        ("dsgd", "dsgd", None, None),
    ]
    configs = []
    for name, algorithm, comp, gamma in menu:
        d = {"name": f"fig3_{name}",
             "algorithm": algorithm,
             "problem": _problem("logistic", scale, p),
             "topology": {"kind": "grid", "n": scale},
             "schedule": dict(SCHEDULE),
             "iters": iters, "batch": 1, "seed": seed, "reps": reps}
        if comp is not None:
            d["compressor"] = dict(comp)
        if algorithm == "cedas":
            d["alpha"] = ALPHA
        if gamma is not None:
            d["gamma"] = gamma
        configs.append(d)
    return configs


def fig4_suite(scale=25, iters=20_000, seed=1, reps=3, p=40):
    """Nonconvex testbed: average gradient norm vs iterations and bits."""
    check_budget(scale, p, iters)
    _require_square(scale)
    kc = _frac_k(p)
    eta = round((scale / iters) ** 0.5, 6)
    schedule = {"kind": "constant", "eta": eta}
    compressors = {"cedas": {"kind": "scaled_rand_k", "k": kc},
                   "choco_sgd": {"kind": "top_k", "k": kc}}
    gamma = _gamma_for(compressors["cedas"], p)
    configs = []
    for algorithm in ("cedas", "choco_sgd", "dsgd", "edas", "centralized_sgd"):
        d = {"name": f"fig4_{algorithm}",
             "algorithm": algorithm,
             "problem": _problem("nonconvex_logistic", scale, p),
             "topology": {"kind": "grid", "n": scale},
             "schedule": dict(schedule),
             "iters": iters, "batch": 1, "seed": seed, "reps": reps}
        if algorithm in compressors:
            d["compressor"] = dict(compressors[algorithm])
        if algorithm == "cedas":
            d["alpha"] = ALPHA
        if algorithm in ("cedas", "choco_sgd"):
            d["gamma"] = gamma
        if algorithm == "edas":
            d["gamma"] = EDAS_GAMMA
        configs.append(d)
    return configs


SUITES = {"fig2": fig2_suite, "fig3": fig3_suite, "fig4": fig4_suite}
