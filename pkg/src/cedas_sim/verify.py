"""Built-in verification checks.

Each check returns a CheckResult; run_all drives the suite at two levels.
quick caps Monte-Carlo sample counts at 10^4 and shortens the long runs;
full uses 10^5 samples and the full iteration budgets. The granular check
functions are importable so tests can drive them directly (including with
deliberately corrupted inputs).
"""

import math
import time
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from . import algo, compress, metrics, objective, topology
from . import rng as rngmod

# Pinned spectral-gap targets for the Lazy-Metropolis mixing matrices; these
# calibrate the per-family degree convention in topology.lazy_metropolis.
EXPECTED_GAPS = {
    ("grid", 100): 0.013,
    ("exponential", 100): 0.133,
    ("grid", 25): 0.054,
    ("exponential", 25): 0.305,
}
GAP_TOL = 1e-3


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _result(name, started, passed, detail):
    return CheckResult(name=name, passed=bool(passed), detail=detail,
                       seconds=time.perf_counter() - started)


def check_spectral_gaps():
    t0 = time.perf_counter()
    worst = 0.0
    parts = []
    for (kind, n), expected in EXPECTED_GAPS.items():
        gap = topology.lazy_metropolis(topology.build_graph(kind, n)).spectral_gap
        err = abs(gap - expected)
        worst = max(worst, err)
        parts.append(f"{kind}({n})={gap:.4f}")
    return _result("spectral_gaps", t0, worst < GAP_TOL,
                   f"{', '.join(parts)}; worst |err|={worst:.2e}")


def check_mixing_invariants(m):
    """Invariant audit for one mixing matrix; reusable with corrupted input."""
    t0 = time.perf_counter()
    w = m.w
    sym = np.abs(w - w.T).max() if w.size else 0.0
    rows = np.abs(w.sum(axis=1) - 1.0).max()
    nonneg = float(-min(w.min(), 0.0))
    vals = m.eigenvalues
    lam1 = abs(vals[0] - 1.0)
    in_range = vals[-1] > -1.0 and vals[0] <= 1.0 + 1e-9
    passed = sym == 0.0 and rows <= 1e-12 and nonneg == 0.0 and lam1 <= 1e-9 and in_range
    return _result("mixing_invariants", t0, passed,
                   f"sym={sym:.1e} rowsum={rows:.1e} neg={nonneg:.1e} lam1err={lam1:.1e}")


def check_all_mixing_invariants():
    t0 = time.perf_counter()
    fails = []
    for kind, n in (("ring", 16), ("grid", 16), ("exponential", 16),
                    ("complete", 8), ("path", 9), ("grid", 25), ("exponential", 25)):
        r = check_mixing_invariants(topology.lazy_metropolis(topology.build_graph(kind, n)))
        if not r.passed:
            fails.append(f"{kind}({n}): {r.detail}")
    return _result("mixing_invariants_all", t0, not fails, "; ".join(fails) or "7 matrices clean")


def check_tilde_map():
    t0 = time.perf_counter()
    worst = 0.0
    min_eig = np.inf
    for kind, n in (("ring", 12), ("grid", 16), ("exponential", 16), ("complete", 8)):
        m = topology.lazy_metropolis(topology.build_graph(kind, n))
        for gamma in (0.1, 0.5, 0.9):
            wt = topology.tilde_matrix(m, gamma)
            mapped = 1.0 - (gamma / 2.0) * (1.0 - m.eigenvalues)
            worst = max(worst, np.abs(np.sort(wt.eigenvalues) - np.sort(mapped)).max())
            min_eig = min(min_eig, wt.eigenvalues[-1])
    return _result("tilde_eigenvalue_map", t0, worst < 1e-9 and min_eig > 0.0,
                   f"worst map dev={worst:.2e}, min eigenvalue={min_eig:.4f}")


def check_compressor_contracts(n_samples):
    t0 = time.perf_counter()
    msgs = []
    ok = True

    # scaled rand-K on p=2, K=1: both masks give ||C(x)-x||^2 = ||x||^2 exactly
    c = compress.scaled_rand_k(2, 1)
    _, snr = compress.estimate_contract(c, np.array([1.0, 1.0]), n_samples,
                                        rngmod.substream(11, 0))
    ok &= abs(snr - 1.0) <= 0.05
    msgs.append(f"scaled_rand_k snr={snr:.4f}")

    # top-K contraction holds per draw
    c = compress.top_k(4, 2)
    gen = rngmod.substream(12, 0)
    worst = 0.0
    for _ in range(10_000):
        x = gen.standard_normal(4)
        q = compress.apply(c, x)
        worst = max(worst, float((q - x) @ (q - x)) / float(x @ x))
    ok &= worst <= 0.5 + 1e-12
    msgs.append(f"top_k worst ratio={worst:.4f} (bound 0.5)")

    # dithered quantizer is exact when |x_i| 2^{b-1}/||x||_inf are integers
    c = compress.quantize_b(2, 2)
    exact = all(
        np.array_equal(compress.apply(c, x, rngmod.substream(13, i)), x)
        for i, x in enumerate([np.array([1.0, -0.5]), np.array([2.0, 1.0]), np.array([-4.0, 2.0])])
    )
    ok &= exact
    msgs.append(f"quantize_b integer-exact={exact}")

    # composed operator: unbiased within 4 SE, second moment within the bound
    c1 = compress.top_k(3, 1)
    c2 = compress.scaled_rand_k(3, 1)
    cc = compress.compose(c1, c2)
    x = np.array([3.0, -1.0, 2.0])
    gen = rngmod.substream(14, 0)
    samples = compress.sample_stack(cc, x, n_samples, gen)
    se = samples.std(axis=0, ddof=1) / np.sqrt(n_samples)
    dev = np.abs(samples.mean(axis=0) - x)
    unbiased = bool((dev <= 4.0 * np.maximum(se, 1e-15)).all())
    diff = samples - x
    second = float(np.einsum("ij,ij->", diff, diff) / n_samples)
    bound = cc.contract.unbiased_c * float(x @ x) * (1.0 + 4.0 / np.sqrt(n_samples))
    ok &= unbiased and second <= bound
    msgs.append(f"composed unbiased={unbiased}, E||C(x)-x||^2={second:.3f} <= {bound:.3f}")

    return _result("compressor_contracts", t0, ok, "; ".join(msgs))


def _small_config(algorithm, kind, n, compressor, alpha, gamma, iters, seed=3,
                  schedule=None, batch=1, problem_kind="quadratic"):
    return algo.config_from_dict({
        "algorithm": algorithm,
        "problem": {"kind": problem_kind, "n": n, "p": 6, "samples_per_agent": 12,
                    "heterogeneity": 0.7, "rho": 0.1, "seed": 5},
        "topology": {"kind": kind, "n": n},
        "compressor": compressor,
        "alpha": alpha, "gamma": gamma,
        "schedule": schedule or {"kind": "harmonic", "c0": 0.3, "c1": 10.0},
        "iters": iters, "batch": batch, "seed": seed,
    })


def check_oracle_equivalence(iters=200):
    """Agent-local stepping vs the dense matrix recursion, replayed draws."""
    t0 = time.perf_counter()
    worst = 0.0
    for kind, n in (("ring", 8), ("path", 2)):
        for comp in ({"kind": "identity"}, {"kind": "scaled_rand_k", "k": 2},
                     {"kind": "quantize_b", "b": 3}):
            config = _small_config("cedas", kind, n, comp, alpha=0.04, gamma=0.05, iters=0)
            state = algo.cedas_init(config, rep=0)
            x_m, d_m, h_m = state.X.copy(), state.D.copy(), state.H.copy()
            for k in range(iters):
                streams = algo.iteration_streams(config.seed, 0, k)
                eta = algo.stepsize(config.schedule, state.k)
                q_log = []
                algo.cedas_step(state, config, streams, q_out=q_log)
                idx = objective.sample_indices(config.problem,
                                               algo.iteration_streams(config.seed, 0, k).grad,
                                               config.batch)
                g = objective.grads_at(config.problem, x_m, idx)
                x_m, d_m, h_m = algo.cedas_matrix_step(
                    x_m, d_m, h_m, eta, config.mixing.w, config.gamma,
                    config.alpha, g, q_log[0])
                worst = max(worst, np.abs(state.X - x_m).max(),
                            np.abs(state.D - d_m).max(), np.abs(state.H - h_m).max())
    return _result("oracle_equivalence", t0, worst < 1e-10, f"max |local - matrix|={worst:.2e}")


def check_mean_dynamics(iters):
    """Mean-iterate identity, D column sums, and HW = W H each iteration."""
    t0 = time.perf_counter()
    # alpha <= 1/(12C) and gamma <= sqrt(alpha)/(2 sqrt(C)) for C = 2 keep the
    # compression feedback stable, so float drift stays near machine scale
    config = _small_config("cedas", "ring", 8, {"kind": "scaled_rand_k", "k": 2},
                           alpha=0.04, gamma=0.05, iters=0)
    state = algo.cedas_init(config, rep=0)
    n = config.n
    worst_mean, worst_col, worst_hw = 0.0, 0.0, 0.0
    for k in range(iters):
        x_before = state.X.copy()
        idx = objective.sample_indices(config.problem,
                                       algo.iteration_streams(config.seed, 0, k).grad,
                                       config.batch)
        g = objective.grads_at(config.problem, x_before, idx)
        eta = algo.stepsize(config.schedule, state.k)
        algo.cedas_step(state, config, algo.iteration_streams(config.seed, 0, k))
        predicted = x_before.mean(axis=0) - (eta / n) * g.sum(axis=0)
        worst_mean = max(worst_mean, np.abs(state.X.mean(axis=0) - predicted).max())
        worst_col = max(worst_col, np.abs(state.D.sum(axis=0)).max())
        worst_hw = max(worst_hw, np.abs(state.HW - config.mixing.w @ state.H).max())
    passed = worst_mean <= 1e-10 and worst_col <= 1e-10 * n and worst_hw <= 1e-10
    return _result("mean_dynamics", t0, passed,
                   f"mean id={worst_mean:.2e}, D colsum={worst_col:.2e}, HW-WH={worst_hw:.2e} over {iters} iters")


def check_decomposition(trials=1000):
    t0 = time.perf_counter()
    gen = rngmod.substream(15, 0)
    problem = objective.synth_problem("quadratic", 4, 5, 8, 0.5, 0.1, seed=2)
    xstar = objective.reference_optimum(problem)[0]
    worst = 0.0
    for _ in range(trials):
        x = gen.standard_normal((4, 5)) * gen.uniform(0.1, 10.0)
        rec = metrics.measure(SimpleNamespace(X=x), problem, xstar)
        err = abs(rec["residual"] - (rec["mean_err"] + rec["consensus_err"]))
        worst = max(worst, err / max(1.0, rec["residual"]))
    return _result("error_decomposition", t0, worst < 1e-10, f"worst rel dev={worst:.2e}")


def check_lead_equivalence(iters=100):
    t0 = time.perf_counter()
    eta = 0.05
    kwargs = dict(kind="ring", n=8, compressor={"kind": "scaled_rand_k", "k": 2},
                  alpha=0.04, gamma=0.05, iters=0,
                  schedule={"kind": "constant", "eta": eta})
    cedas_cfg = _small_config("cedas", **kwargs)
    lead_cfg = _small_config("lead", **kwargs)
    sc = algo.init_state(cedas_cfg)
    sl = algo.init_state(lead_cfg)
    worst = 0.0
    for k in range(iters):
        algo.cedas_step(sc, cedas_cfg, algo.iteration_streams(cedas_cfg.seed, 0, k))
        algo.lead_step(sl, lead_cfg, algo.iteration_streams(lead_cfg.seed, 0, k))
        worst = max(worst, np.abs(sc.X - sl.X).max(), np.abs(sc.D - eta * sl.D).max())
    return _result("lead_equivalence", t0, worst < 1e-10, f"max |cedas - lead|={worst:.2e}")


def run_all(level="quick"):
    if level not in ("quick", "full"):
        raise ValueError(f"level must be quick or full, got {level!r}")
    mc = 10_000 if level == "quick" else 100_000
    dyn_iters = 1000 if level == "quick" else 10_000
    results = [
        check_spectral_gaps(),
        check_all_mixing_invariants(),
        check_tilde_map(),
        check_compressor_contracts(mc),
        check_oracle_equivalence(),
        check_mean_dynamics(dyn_iters),
        check_decomposition(),
        check_lead_equivalence(),
    ]
    if level == "full":
        results.append(check_unbiased_sweep(100_000))
    return results


def check_unbiased_sweep(n_samples):
    """Componentwise unbiasedness over 20 random vectors per unbiased kind."""
    t0 = time.perf_counter()
    gen = rngmod.substream(16, 0)
    p = 6
    cases = [compress.identity(p), compress.scaled_rand_k(p, 2), compress.quantize_b(p, 3),
             compress.compose(compress.top_k(p, 2), compress.scaled_rand_k(p, 2))]
    fails = []
    for c in cases:
        for t in range(20):
            x = gen.standard_normal(p) * gen.uniform(0.1, 5.0)
            samples = compress.sample_stack(c, x, n_samples, gen)
            se = samples.std(axis=0, ddof=1) / np.sqrt(n_samples)
            # fsum keeps deterministic coordinates exact; naive axis-0 summation
            # drifts by ~n*eps, which would swamp their zero sample variance
            mean = np.array([math.fsum(samples[:, j]) for j in range(p)]) / n_samples
            dev = np.abs(mean - x)
            floor = np.finfo(float).eps * np.maximum(1.0, np.abs(x))
            if not (dev <= 4.0 * np.maximum(se, floor)).all():
                fails.append(f"{c.kind}#{t}")
    return _result("unbiased_sweep", t0, not fails, "; ".join(fails) or "80 cases within 4 SE")
