"""Iteration engines for decentralized SGD with difference compression.

Implements the compressed exact-diffusion method (cedas) plus baselines:
lead (its constant-stepsize primal-dual twin), choco_sgd, dsgd, edas (cedas
with identity compression and alpha = 1), and centralized_sgd. All engines
advance the full network state, an (n, p) stack per quantity, one
barrier-synchronized round per call.

Randomness is drawn from counter-based streams keyed by (master seed, rep,
iteration, purpose); agents consume rows of block draws or per-agent draws
in ascending agent order, so traces are reproducible independent of worker
count.
"""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from . import compress, metrics, objective, topology
from . import rng as rngmod
from .errors import (ConfigInvalid, DivergenceDetected, MissingNeighborMessage,
                     RequiresConstantStep, ShapeMismatch)

ALGORITHMS = ("cedas", "edas", "lead", "choco_sgd", "dsgd", "centralized_sgd")
SCHEMA_VERSION = 1


# --- stepsize schedules ---

@dataclass(frozen=True)
class StepSchedule:
    """constant eta; theta/(mu (k+m)); or c0/(k+c1). Defined for k >= -1."""

    kind: str
    eta: float = None
    theta: float = None
    mu: float = None
    m: float = None
    c0: float = None
    c1: float = None

    @staticmethod
    def constant(eta):
        if eta <= 0.0:
            raise ConfigInvalid(f"constant stepsize must be positive, got {eta}")
        return StepSchedule(kind="constant", eta=float(eta))

    @staticmethod
    def paper_decreasing(theta, mu, m):
        if theta <= 0.0 or mu <= 0.0 or m <= 1.0:
            raise ConfigInvalid(f"need theta, mu > 0 and m > 1, got {theta}, {mu}, {m}")
        return StepSchedule(kind="paper_decreasing", theta=float(theta), mu=float(mu), m=float(m))

    @staticmethod
    def harmonic(c0, c1):
        if c0 <= 0.0 or c1 <= 1.0:
            raise ConfigInvalid(f"need c0 > 0 and c1 > 1, got {c0}, {c1}")
        return StepSchedule(kind="harmonic", c0=float(c0), c1=float(c1))

    @staticmethod
    def from_dict(d):
        kind = d["kind"]
        if kind == "constant":
            return StepSchedule.constant(d["eta"])
        if kind == "paper_decreasing":
            return StepSchedule.paper_decreasing(d["theta"], d["mu"], d["m"])
        if kind == "harmonic":
            return StepSchedule.harmonic(d["c0"], d["c1"])
        raise ConfigInvalid(f"unknown schedule kind {kind!r}")

    def to_dict(self):
        if self.kind == "constant":
            return {"kind": "constant", "eta": self.eta}
        if self.kind == "paper_decreasing":
            return {"kind": "paper_decreasing", "theta": self.theta, "mu": self.mu, "m": self.m}
        return {"kind": "harmonic", "c0": self.c0, "c1": self.c1}


def stepsize(schedule, k):
    """Stepsize at iteration k; k = -1 is the initialization step."""
    if k < -1:
        raise ValueError(f"schedule domain is k >= -1, got {k}")
    if schedule.kind == "constant":
        return schedule.eta
    if schedule.kind == "paper_decreasing":
        return schedule.theta / (schedule.mu * (k + schedule.m))
    return schedule.c0 / (k + schedule.c1)


def theory_gamma(alpha, unbiased_c):
    """Largest consensus stepsize admitted by the convergence hypotheses."""
    if unbiased_c <= 0.0:
        return 0.5
    return min(np.sqrt(alpha) / (2.0 * np.sqrt(unbiased_c)), 0.5)


# --- run configuration ---

_NEEDS_COMPRESSOR = ("cedas", "lead", "choco_sgd")
_NEEDS_GAMMA = ("cedas", "edas", "lead", "choco_sgd")


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved description of one experiment."""

    name: str
    algorithm: str
    problem: objective.Problem
    mixing: topology.MixingMatrix
    compressor: compress.Compressor
    alpha: float
    gamma: float
    schedule: StepSchedule
    iters: int
    batch: object  # int or "full"
    seed: int
    reps: int
    bit_convention: str
    raw: dict = field(repr=False)

    @property
    def n(self):
        return self.problem.n

    @property
    def p(self):
        return self.problem.p


def _canon(d):
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def config_hash(config):
    return hashlib.sha256(_canon(config.raw).encode()).hexdigest()[:12]


def family_hash(config):
    d = {k: v for k, v in config.raw.items() if k not in ("seed", "reps", "name")}
    return hashlib.sha256(_canon(d).encode()).hexdigest()[:12]


def config_from_dict(d):
    """Validate and resolve a config dict (the JSON file schema)."""
    if d.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigInvalid(f"unsupported schema version {d.get('schema')}")
    algorithm = d.get("algorithm")
    if algorithm not in ALGORITHMS:
        raise ConfigInvalid(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")

    pd = d.get("problem")
    if not isinstance(pd, dict):
        raise ConfigInvalid("config needs a problem section")
    try:
        problem = objective.synth_problem(
            kind=pd["kind"], n=pd["n"], p=pd["p"],
            samples_per_agent=pd.get("samples_per_agent", 50),
            heterogeneity=pd.get("heterogeneity", 0.5),
            rho=pd.get("rho", 0.2), seed=pd.get("seed", 0),
            noise=pd.get("noise", 0.0))
    except KeyError as e:
        raise ConfigInvalid(f"problem section missing field {e}") from e

    td = d.get("topology")
    mixing = None
    if td is not None:
        if "w" in td:
            mixing = topology.validate_mixing(np.array(td["w"], dtype=float),
                                              kind=td.get("kind", "custom"))
        else:
            g = topology.build_graph(td["kind"], td["n"], custom_edges=td.get("edges"))
            mixing = topology.lazy_metropolis(g)
        if mixing.w.shape[0] != problem.n:
            raise ConfigInvalid(f"topology has {mixing.w.shape[0]} nodes but problem has {problem.n} agents")
    elif algorithm != "centralized_sgd":
        raise ConfigInvalid(f"{algorithm} requires a topology section")

    cd = d.get("compressor")
    compressor = compress.from_dict(cd, problem.p) if cd is not None else None
    alpha = d.get("alpha")
    gamma = d.get("gamma")

    if algorithm == "edas":
        if compressor is not None and compressor.kind != "identity":
            raise ConfigInvalid("edas runs uncompressed; drop the compressor section")
        compressor = compress.identity(problem.p)
        if alpha is not None and alpha != 1.0:
            raise ConfigInvalid("edas requires alpha = 1")
        alpha = 1.0
    if algorithm in _NEEDS_COMPRESSOR and compressor is None:
        raise ConfigInvalid(f"{algorithm} requires a compressor section")
    if algorithm in ("cedas", "lead") and not compressor.contract.is_unbiased:
        raise ConfigInvalid(f"{algorithm} needs an unbiased-class compressor; "
                            f"wrap {compressor.kind} via composed")
    if algorithm in ("cedas", "lead"):
        if alpha is None:
            raise ConfigInvalid(f"{algorithm} requires alpha")
        if not 0.0 < alpha <= 1.0:
            raise ConfigInvalid(f"alpha must lie in (0, 1], got {alpha}")
    if algorithm in _NEEDS_GAMMA:
        if gamma is None:
            raise ConfigInvalid(f"{algorithm} requires gamma")
        if not 0.0 < gamma < 1.0:
            raise ConfigInvalid(f"gamma must lie in (0, 1), got {gamma}")

    sd = d.get("schedule")
    if not isinstance(sd, dict):
        raise ConfigInvalid("config needs a schedule section")
    schedule = StepSchedule.from_dict(sd)
    if algorithm == "lead" and schedule.kind != "constant":
        raise RequiresConstantStep("lead divides by eta in its dual update; use a constant schedule")

    iters = d.get("iters")
    if not isinstance(iters, int) or iters < 0:
        raise ConfigInvalid(f"iters must be a nonnegative integer, got {iters}")
    batch = d.get("batch", 1)
    if batch != "full" and (not isinstance(batch, int) or batch < 1):
        raise ConfigInvalid(f"batch must be a positive integer or \"full\", got {batch}")
    reps = d.get("reps", 1)
    if not isinstance(reps, int) or reps < 1:
        raise ConfigInvalid(f"reps must be a positive integer, got {reps}")
    bit_convention = d.get("bit_convention", "broadcast")
    if bit_convention not in ("broadcast", "per_edge"):
        raise ConfigInvalid(f"bit_convention must be broadcast or per_edge, got {bit_convention!r}")

    raw = {
        "schema": SCHEMA_VERSION,
        "name": d.get("name", f"{algorithm}_{problem.kind}_n{problem.n}"),
        "algorithm": algorithm,
        "problem": {"kind": problem.kind, "n": problem.n, "p": problem.p,
                    "samples_per_agent": problem.samples_per_agent,
                    "heterogeneity": problem.heterogeneity, "rho": problem.rho,
                    "noise": problem.noise, "seed": problem.seed},
        "topology": td,
        "compressor": compress.to_dict(compressor) if compressor is not None else None,
        "alpha": alpha, "gamma": gamma,
        "schedule": schedule.to_dict(),
        "iters": iters, "batch": batch,
        "seed": d.get("seed", 0), "reps": reps,
        "bit_convention": bit_convention,
    }
    return RunConfig(name=raw["name"], algorithm=algorithm, problem=problem,
                     mixing=mixing, compressor=compressor,
                     alpha=alpha if alpha is None else float(alpha),
                     gamma=gamma if gamma is None else float(gamma),
                     schedule=schedule, iters=iters, batch=batch,
                     seed=int(raw["seed"]), reps=reps,
                     bit_convention=bit_convention, raw=raw)


def config_to_dict(config):
    return dict(config.raw)


# --- state and streams ---

@dataclass
class AlgoState:
    """Network state: one row per agent in each (n, p) stack.

    D doubles as the dual stack a for lead and as the replica stack x_hat
    for choco_sgd. comp_err is ||Y - H||_F^2 of the step that produced X
    (difference-compression algorithms only).
    """

    X: np.ndarray
    H: np.ndarray
    HW: np.ndarray
    D: np.ndarray
    k: int = 0
    bits: float = 0.0
    eta_last: float = float("nan")
    comp_err: float = float("nan")


def iteration_streams(seed, rep, k):
    """Independent streams for one iteration; k = -1 is the init step."""
    return SimpleNamespace(
        grad=rngmod.substream(seed, rep, k, rngmod.GRAD),
        compress=rngmod.substream(seed, rep, k, rngmod.COMPRESS),
    )


def _batch_grads(config, x_stack, streams):
    if config.batch == "full":
        return objective.grads_at(config.problem, x_stack)
    idx = objective.sample_indices(config.problem, streams.grad, config.batch)
    return objective.grads_at(config.problem, x_stack, idx)


def _bits_per_iter(config):
    c = config.compressor if config.compressor is not None else compress.identity(config.p)
    cost = compress.bit_cost(c)
    if config.bit_convention == "per_edge" and config.mixing is not None:
        w = config.mixing.w
        deg = (np.count_nonzero(w, axis=1) - 1).mean()
        return cost * deg
    return float(cost)


def _apply_stack(c, diff, rng):
    """Per-agent compression of the stacked differences, ascending agent order."""
    return np.stack([compress.apply(c, diff[i], rng) for i in range(diff.shape[0])])


# --- the COMM procedure, single-agent view ---

@dataclass(frozen=True)
class CommResult:
    y_hat: np.ndarray
    yw_hat: np.ndarray
    h_next: np.ndarray
    hw_next: np.ndarray
    q: np.ndarray


def comm(y, h, hw, alpha, compressor, agent, w_row, messages, rng):
    """One difference-compression gossip round from one agent's perspective.

    messages maps neighbor id -> the compressed vector q_j received from j.
    Only q (the compressed difference) ever travels; the mixed estimate is
    reconstructed locally from the weighted received payloads.
    """
    y = np.asarray(y, dtype=float)
    q = compress.apply(compressor, y - h, rng)
    acc = w_row[agent] * q
    for j in np.flatnonzero(w_row):
        if j == agent:
            continue
        if j not in messages:
            raise MissingNeighborMessage(f"agent {agent} got no message from neighbor {j}")
        acc = acc + w_row[j] * messages[j]
    y_hat = h + q
    yw_hat = hw + acc
    return CommResult(y_hat=y_hat, yw_hat=yw_hat,
                      h_next=(1.0 - alpha) * h + alpha * y_hat,
                      hw_next=(1.0 - alpha) * hw + alpha * yw_hat, q=q)


def _comm_network(state, config, rng, y_stack):
    """Vectorized COMM round; algebra identical to per-agent comm()."""
    diff = y_stack - state.H
    q = _apply_stack(config.compressor, diff, rng)
    y_hat = state.H + q
    yw_hat = state.HW + config.mixing.w @ q
    state.H = (1.0 - config.alpha) * state.H + config.alpha * y_hat
    state.HW = (1.0 - config.alpha) * state.HW + config.alpha * yw_hat
    state.comp_err = float(np.einsum("ij,ij->", diff, diff))
    return y_hat, yw_hat, q


# --- initialization ---

def _zero_stacks(config):
    return np.zeros((config.n, config.p))


def cedas_init(config, rep=0):
    """Initial state: h_0 = x_{-1} = 0, hw_0 = W h_0, d_0 = 0, and one
    stochastic-gradient step x_0 = x_{-1} - eta_{-1} g(x_{-1})."""
    x_prev = _zero_stacks(config)
    h = x_prev.copy()
    hw = config.mixing.w @ h
    streams = iteration_streams(config.seed, rep, -1)
    g = _batch_grads(config, x_prev, streams)
    eta = stepsize(config.schedule, -1)
    return AlgoState(X=x_prev - eta * g, H=h, HW=hw, D=_zero_stacks(config),
                     k=0, eta_last=eta)


def _lead_init(config, rep=0):
    # z = x_{-1} = 0 gives a_0 = z - W z = 0
    state = cedas_init(config, rep)
    return state


def _plain_init(config):
    return AlgoState(X=_zero_stacks(config), H=_zero_stacks(config),
                     HW=_zero_stacks(config), D=_zero_stacks(config), k=0)


def init_state(config, rep=0):
    if config.algorithm in ("cedas", "edas"):
        return cedas_init(config, rep)
    if config.algorithm == "lead":
        return _lead_init(config, rep)
    return _plain_init(config)


# --- one-iteration engines ---

def cedas_step(state, config, streams, q_out=None):
    """One round: sample g, form y = x - eta g - d, COMM, update d then x.

    The same gradient sample is used in both x-updates. q_out, when given,
    collects the compressed stack for replay against the matrix oracle.
    """
    eta = stepsize(config.schedule, state.k)
    g = _batch_grads(config, state.X, streams)
    y = state.X - eta * g - state.D
    y_hat, yw_hat, q = _comm_network(state, config, streams.compress, y)
    if q_out is not None:
        q_out.append(q)
    state.D = state.D + (config.gamma / 2.0) * (y_hat - yw_hat)
    state.X = state.X - eta * g - state.D
    state.k += 1
    state.eta_last = eta
    state.bits += _bits_per_iter(config)
    return state


def edas_step(state, config, streams):
    """Uncompressed specialization: identity compressor, alpha = 1."""
    return cedas_step(state, config, streams)


def lead_step(state, config, streams):
    """Primal-dual twin of cedas_step with dual stack a = d / eta."""
    if config.schedule.kind != "constant":
        raise RequiresConstantStep("lead divides by eta in its dual update")
    eta = stepsize(config.schedule, state.k)
    g = _batch_grads(config, state.X, streams)
    y = state.X - eta * g - eta * state.D
    y_hat, yw_hat, _ = _comm_network(state, config, streams.compress, y)
    state.D = state.D + (config.gamma / (2.0 * eta)) * (y_hat - yw_hat)
    state.X = state.X - eta * g - eta * state.D
    state.k += 1
    state.eta_last = eta
    state.bits += _bits_per_iter(config)
    return state


def choco_sgd_step(state, config, streams):
    """Gossip with compressed replica tracking.

    All agents hold bitwise-identical copies of every x_hat_j, so one shared
    (n, p) stack (state.D) represents the replicas.
    """
    eta = stepsize(config.schedule, state.k)
    g = _batch_grads(config, state.X, streams)
    x_half = state.X - eta * g
    q = _apply_stack(config.compressor, x_half - state.D, streams.compress)
    state.D = state.D + q
    state.X = x_half + config.gamma * (config.mixing.w @ state.D - state.D)
    state.k += 1
    state.eta_last = eta
    state.bits += _bits_per_iter(config)
    return state


def dsgd_step(state, config, streams):
    """x+ = W (x - eta g)."""
    eta = stepsize(config.schedule, state.k)
    g = _batch_grads(config, state.X, streams)
    state.X = config.mixing.w @ (state.X - eta * g)
    state.k += 1
    state.eta_last = eta
    state.bits += _bits_per_iter(config)
    return state


def centralized_sgd_step(state, config, streams):
    """Single iterate moved by the n-agent minibatch average gradient."""
    eta = stepsize(config.schedule, state.k)
    g = _batch_grads(config, state.X, streams)
    x = state.X[0] - eta * g.mean(axis=0)
    state.X = np.tile(x, (config.n, 1))
    state.k += 1
    state.eta_last = eta
    state.bits += 32.0 * config.p
    return state


STEP_FNS = {
    "cedas": cedas_step,
    "edas": edas_step,
    "lead": lead_step,
    "choco_sgd": choco_sgd_step,
    "dsgd": dsgd_step,
    "centralized_sgd": centralized_sgd_step,
}


# --- dense matrix-form reference recursion (test oracle) ---

def cedas_matrix_step(xk, dk, hk, eta, w, gamma, alpha, g, e_draws):
    """Reference recursion: Y = X - eta G - D; D+ = D + (gamma/2)(I-W)(H+Q);
    X+ = X - eta G - D+; H+ = (1-alpha)H + alpha(H+Q), with Q = e_draws the
    replayed compressed values C(Y - H)."""
    stacks = {"xk": xk, "dk": dk, "hk": hk, "g": g, "e_draws": e_draws}
    shape = xk.shape
    for name, arr in stacks.items():
        if arr.shape != shape:
            raise ShapeMismatch(f"{name} has shape {arr.shape}, expected {shape}")
    if w.shape != (shape[0], shape[0]):
        raise ShapeMismatch(f"w has shape {w.shape}, expected ({shape[0]}, {shape[0]})")
    y_hat = hk + e_draws
    d_next = dk + (gamma / 2.0) * (y_hat - w @ y_hat)
    x_next = xk - eta * g - d_next
    h_next = (1.0 - alpha) * hk + alpha * y_hat
    return x_next, d_next, h_next


# --- full runs ---

def run_single(config, rep=0):
    """Execute init plus K iterations for one repetition; returns its Trace."""
    state = init_state(config, rep)
    problem = config.problem
    xstar = objective.reference_optimum(problem)[0] if problem.strongly_convex else None
    step_fn = STEP_FNS[config.algorithm]

    records = [metrics.measure(state, problem, xstar)]
    for k in range(config.iters):
        streams = iteration_streams(config.seed, rep, k)
        step_fn(state, config, streams)
        if not np.isfinite(state.X).all():
            raise DivergenceDetected(state.k)
        records.append(metrics.measure(state, problem, xstar))

    data = {col: np.array([r[col] for r in records]) for col in metrics.COLUMNS}
    meta = {"config_hash": config_hash(config), "family_hash": family_hash(config),
            "algorithm": config.algorithm, "n": config.n, "seed": config.seed,
            "rep": rep, "reps": 1}
    return metrics.Trace(data=data, meta=meta)


def run(config, threads=1):
    """All repetitions, averaged pointwise with per-point sample sd.

    Deterministic for a fixed master seed regardless of thread count: each
    repetition's randomness is keyed by its rep index and results are
    combined in rep order.
    """
    reps = config.reps
    if threads <= 1 or reps == 1:
        traces = [run_single(config, rep) for rep in range(reps)]
    else:
        with ThreadPoolExecutor(max_workers=min(threads, reps)) as pool:
            futures = [pool.submit(run_single, config, rep) for rep in range(reps)]
            outcomes = [(f.exception(), f) for f in futures]
            for err, _ in outcomes:
                if err is not None:
                    raise err
            traces = [f.result() for _, f in outcomes]
    agg = metrics.aggregate(traces)
    agg.meta["seed"] = config.seed
    return agg
