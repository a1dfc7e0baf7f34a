"""Synthetic per-agent objectives with exact and stochastic gradient oracles.

Three testbeds: ridge-regularized least squares (quadratic), regularized
logistic regression on a planted linear model, and the same logistic data
with a smooth nonconvex regularizer rho * sum x_d^2/(1+x_d^2). Data layout
is dense: features (n, m, p), targets (n, m), one row block per agent.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import expit

from . import rng as rngmod
from .errors import BadParams, NotStronglyConvex

KINDS = ("quadratic", "logistic", "nonconvex_logistic")

_GRAD_TOL = 1e-12  # reference-optimum solve target


@dataclass(frozen=True)
class Problem:
    """n local objectives f_i sharing one synthesis recipe."""

    kind: str
    n: int
    p: int
    samples_per_agent: int
    rho: float
    noise: float
    heterogeneity: float
    seed: int
    features: np.ndarray  # (n, m, p); A_i rows for quadratic, u_j for logistic
    targets: np.ndarray   # (n, m); b_i for quadratic, labels +-1 for logistic
    _optimum: tuple = field(default=None, init=False, repr=False, compare=False)

    @property
    def strongly_convex(self):
        return self.kind in ("quadratic", "logistic")


@dataclass(frozen=True)
class GradSample:
    agent: int
    gradient: np.ndarray
    batch_indices: np.ndarray  # None when the exact gradient was taken


def synth_problem(kind, n, p, samples_per_agent, heterogeneity, rho, seed, noise=0.0):
    """Generate per-agent datasets, deterministic given seed.

    Quadratic: A_i Gaussian with a per-agent mean shift scaled by
    heterogeneity, b_i = A_i x_nat + noise. Logistic: anisotropic Gaussian
    features rotated per agent by heterogeneity * (pi/2) * i/(n-1), labels
    sign(u . x_nat + noise * eps).
    """
    if kind not in KINDS:
        raise BadParams(f"unknown problem kind {kind!r}")
    n, p, m = int(n), int(p), int(samples_per_agent)
    if n < 1 or p < 1 or m < 1:
        raise BadParams(f"need n, p, samples_per_agent >= 1, got {n}, {p}, {m}")
    if not 0.0 <= heterogeneity <= 1.0:
        raise BadParams(f"heterogeneity must lie in [0, 1], got {heterogeneity}")
    if rho < 0.0 or noise < 0.0:
        raise BadParams(f"rho and noise must be nonnegative, got {rho}, {noise}")

    gen = rngmod.substream(int(seed), rngmod.DATA)
    x_nat = gen.standard_normal(p) / np.sqrt(p)
    if kind == "quadratic":
        base = gen.standard_normal((n, m, p))
        shift = gen.standard_normal((n, 1, p))
        features = base + heterogeneity * shift
        targets = np.einsum("imp,p->im", features, x_nat)
        targets += noise * gen.standard_normal((n, m))
    else:
        scales = gen.uniform(0.5, 1.5, size=p)
        z = gen.standard_normal((n, m, p)) * scales
        features = np.empty_like(z)
        for i in range(n):
            theta = heterogeneity * (np.pi / 2.0) * (i / max(n - 1, 1))
            cs, sn = np.cos(theta), np.sin(theta)
            u = z[i].copy()
            a, b = u[:, 0::2][:, : p // 2], u[:, 1::2]
            u[:, 0::2][:, : p // 2], u[:, 1::2] = cs * a - sn * b, sn * a + cs * b
            features[i] = u
        margin = np.einsum("imp,p->im", features, x_nat)
        margin += noise * gen.standard_normal((n, m))
        targets = np.where(margin >= 0.0, 1.0, -1.0)
    return Problem(kind=kind, n=n, p=p, samples_per_agent=m, rho=float(rho),
                   noise=float(noise), heterogeneity=float(heterogeneity),
                   seed=int(seed), features=features, targets=targets)


def _reg_grad(problem, x):
    if problem.kind == "nonconvex_logistic":
        return problem.rho * 2.0 * x / (1.0 + x * x) ** 2
    return problem.rho * x


def _reg_loss(problem, x):
    sq = np.sum(x * x, axis=-1)
    if problem.kind == "nonconvex_logistic":
        return problem.rho * np.sum(x * x / (1.0 + x * x), axis=-1)
    return 0.5 * problem.rho * sq


def grad(problem, agent, x):
    """Exact local gradient of f_agent at x."""
    x = np.asarray(x, dtype=float)
    a, b = problem.features[agent], problem.targets[agent]
    m = problem.samples_per_agent
    if problem.kind == "quadratic":
        data = a.T @ (a @ x - b) / m
    else:
        t = (a @ x) * b
        data = -(a.T @ (b * expit(-t))) / m
    return data + _reg_grad(problem, x)


def loss(problem, agent, x):
    """Local objective value f_agent(x)."""
    x = np.asarray(x, dtype=float)
    a, b = problem.features[agent], problem.targets[agent]
    m = problem.samples_per_agent
    if problem.kind == "quadratic":
        r = a @ x - b
        data = 0.5 * (r @ r) / m
    else:
        t = (a @ x) * b
        data = np.logaddexp(0.0, -t).mean()
    return float(data + _reg_loss(problem, x))


def stochastic_grad(problem, agent, x, batch_size, rng):
    """Minibatch gradient, sampled uniformly with replacement; "full" is exact."""
    x = np.asarray(x, dtype=float)
    if batch_size == "full":
        return GradSample(agent=agent, gradient=grad(problem, agent, x), batch_indices=None)
    if batch_size < 1:
        raise BadParams(f"batch_size must be >= 1, got {batch_size}")
    idx = rng.integers(0, problem.samples_per_agent, size=int(batch_size))
    a = problem.features[agent][idx]
    b = problem.targets[agent][idx]
    if problem.kind == "quadratic":
        data = a.T @ (a @ x - b) / len(idx)
    else:
        t = (a @ x) * b
        data = -(a.T @ (b * expit(-t))) / len(idx)
    return GradSample(agent=agent, gradient=data + _reg_grad(problem, x), batch_indices=idx)


# --- network-stack oracles used by the iteration engine ---

def sample_indices(problem, rng, batch_size):
    """(n, batch) with-replacement sample indices, one row per agent."""
    return rng.integers(0, problem.samples_per_agent, size=(problem.n, int(batch_size)))


def grads_at(problem, x_stack, idx=None):
    """Stacked local gradients: row i is grad f_i at x_stack[i].

    idx is an (n, batch) index array for minibatch gradients; None takes the
    exact per-agent gradient.
    """
    x_stack = np.asarray(x_stack, dtype=float)
    if idx is None:
        a, b, m = problem.features, problem.targets, problem.samples_per_agent
    else:
        rows = np.arange(problem.n)[:, None]
        a = problem.features[rows, idx]
        b = problem.targets[rows, idx]
        m = idx.shape[1]
    if problem.kind == "quadratic":
        r = np.einsum("imp,ip->im", a, x_stack) - b
        data = np.einsum("im,imp->ip", r, a) / m
    else:
        t = np.einsum("imp,ip->im", a, x_stack) * b
        data = -np.einsum("im,imp->ip", b * expit(-t), a) / m
    return data + _reg_grad(problem, x_stack)


def avg_grad(problem, x):
    """Gradient of the network-average objective f = (1/n) sum f_i at one point."""
    x = np.asarray(x, dtype=float)
    a = problem.features.reshape(-1, problem.p)
    b = problem.targets.ravel()
    if problem.kind == "quadratic":
        data = a.T @ (a @ x - b) / len(b)
    else:
        t = (a @ x) * b
        data = -(a.T @ (b * expit(-t))) / len(b)
    return data + _reg_grad(problem, x)


def avg_loss(problem, x):
    x = np.asarray(x, dtype=float)
    a = problem.features.reshape(-1, problem.p)
    b = problem.targets.ravel()
    if problem.kind == "quadratic":
        r = a @ x - b
        data = 0.5 * (r @ r) / len(b)
    else:
        t = (a @ x) * b
        data = np.logaddexp(0.0, -t).mean()
    return float(data + _reg_loss(problem, x))


def smoothness_bounds(problem):
    """(L, mu) for the average objective; mu = 0 when not strongly convex."""
    if problem.kind == "quadratic":
        hbar = _avg_hessian(problem)
        vals = scipy.linalg.eigvalsh(hbar)
        return float(vals[-1]), float(max(vals[0], 0.0))
    sq = np.einsum("imp,imp->im", problem.features, problem.features)
    l_data = float(sq.max()) / 4.0
    if problem.kind == "logistic":
        return l_data + problem.rho, float(problem.rho)
    return l_data + 2.0 * problem.rho, 0.0


def _avg_hessian(problem):
    a = problem.features.reshape(-1, problem.p)
    return a.T @ a / len(a) + problem.rho * np.eye(problem.p)


def reference_optimum(problem):
    """(x*, f*) of the average objective; cached on the problem.

    Quadratic kind solves the normal equations; logistic runs deterministic
    gradient descent with Armijo backtracking until the gradient norm falls
    below 1e-12.
    """
    if problem._optimum is not None:
        return problem._optimum
    if problem.kind == "nonconvex_logistic":
        raise NotStronglyConvex("no unique optimum for the nonconvex testbed")
    if problem.kind == "logistic" and problem.rho <= 0.0:
        raise NotStronglyConvex("logistic needs rho > 0 for a certified optimum")
    if problem.kind == "quadratic":
        hbar = _avg_hessian(problem)
        rhs = np.einsum("imp,im->p", problem.features, problem.targets) / (problem.n * problem.samples_per_agent)
        try:
            cho = scipy.linalg.cho_factor(hbar)
        except scipy.linalg.LinAlgError as e:
            raise NotStronglyConvex(f"average Hessian not positive definite: {e}") from e
        x = scipy.linalg.cho_solve(cho, rhs)
    else:
        x = _descend(problem)
    result = (x, avg_loss(problem, x))
    object.__setattr__(problem, "_optimum", result)
    return result


def _descend(problem, max_iters=200000):
    l_bound, mu = smoothness_bounds(problem)
    base = 1.0 / l_bound
    cap = 1.0 / mu if mu > 0 else base
    x = np.zeros(problem.p)
    f = avg_loss(problem, x)
    step = base
    for _ in range(max_iters):
        g = avg_grad(problem, x)
        gnorm2 = float(g @ g)
        if np.sqrt(gnorm2) <= _GRAD_TOL:
            return x
        # below the float resolution of f the sufficient-decrease test is
        # blind, so fall back to 1/L where descent is certified analytically
        if 0.5 * step * gnorm2 <= 8.0 * np.finfo(float).eps * max(1.0, abs(f)):
            step = base
        while True:
            cand = x - step * g
            f_cand = avg_loss(problem, cand)
            if f_cand <= f - 0.5 * step * gnorm2 or step <= base:
                break
            step *= 0.5
        x, f = cand, min(f, f_cand)
        step = min(step * 1.25, cap)
    raise RuntimeError(f"gradient descent did not reach {_GRAD_TOL} in {max_iters} iterations")


# --- serialization ---

def problem_to_json(problem):
    return json.dumps({
        "kind": problem.kind, "n": problem.n, "p": problem.p,
        "samples_per_agent": problem.samples_per_agent, "rho": problem.rho,
        "noise": problem.noise, "heterogeneity": problem.heterogeneity,
        "seed": problem.seed,
        "features": problem.features.tolist(), "targets": problem.targets.tolist(),
    })


def problem_from_json(s):
    d = json.loads(s)
    return Problem(kind=d["kind"], n=d["n"], p=d["p"],
                   samples_per_agent=d["samples_per_agent"], rho=d["rho"],
                   noise=d["noise"], heterogeneity=d["heterogeneity"], seed=d["seed"],
                   features=np.array(d["features"], dtype=float),
                   targets=np.array(d["targets"], dtype=float))
