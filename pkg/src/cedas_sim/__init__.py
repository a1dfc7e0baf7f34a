"""Desk-scale simulator for decentralized stochastic optimization with
communication compression: difference-compression exact diffusion (cedas)
and its baselines over synthetic topologies and objectives."""

from . import algo, cli, compress, metrics, objective, presets, rng, topology, verify
from .algo import (AlgoState, RunConfig, StepSchedule, cedas_init,
                   cedas_matrix_step, cedas_step, centralized_sgd_step,
                   choco_sgd_step, comm, config_from_dict, dsgd_step,
                   edas_step, lead_step, run, run_single, stepsize,
                   theory_gamma)
from .compress import (CompressedMessage, Compressor, apply, bit_cost,
                       compose, decode, encode, estimate_contract, identity,
                       quantize_b, rand_k, scaled_rand_k, top_k)
from .metrics import Trace, aggregate, measure, read_trace, transient_time, write_trace
from .objective import (GradSample, Problem, grad, reference_optimum,
                        stochastic_grad, synth_problem)
from .topology import (Graph, MixingMatrix, TildeMatrix, build_graph,
                       lazy_metropolis, spectral_gap, tilde_matrix,
                       validate_mixing)

__version__ = "0.1.0"
