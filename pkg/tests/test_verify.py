"""Self-check battery: everything passes on healthy code, fails on corruption."""

import numpy as np
import pytest

from cedas_sim import topology, verify


def test_quick_battery_is_all_green():
    results = verify.run_all("quick")
    bad = [r.name for r in results if not r.passed]
    assert not bad, bad
    assert {r.name for r in results} >= {
        "spectral_gaps", "mixing_invariants_all", "tilde_eigenvalue_map",
        "compressor_contracts", "oracle_equivalence", "mean_dynamics",
        "error_decomposition", "lead_equivalence"}
    assert all(r.seconds < 60.0 for r in results)


def test_unknown_level_is_rejected():
    with pytest.raises(ValueError):
        verify.run_all("paranoid")


def corrupted(mutate):
    w = topology.lazy_metropolis(topology.build_graph("ring", 6)).w.copy()
    mutate(w)
    return topology.MixingMatrix(w=w)


def test_mixing_audit_catches_rowsum_drift():
    def bump(w):
        w[0, 0] += 0.01
    assert not verify.check_mixing_invariants(corrupted(bump)).passed


def test_mixing_audit_catches_asymmetry():
    def skew(w):
        w[0, 1], w[1, 0] = w[0, 1] + 0.02, w[1, 0] - 0.02
    assert not verify.check_mixing_invariants(corrupted(skew)).passed


def test_mixing_audit_catches_negative_weights():
    def flip(w):
        w[0, 0] += 2.0 * w[0, 1]
        w[0, 1] = -w[0, 1]
        w[1, 0] = -w[1, 0]
        w[1, 1] += 2.0 * w[1, 0].__abs__()
    assert not verify.check_mixing_invariants(corrupted(flip)).passed


def test_mixing_audit_passes_healthy_input():
    m = topology.lazy_metropolis(topology.build_graph("grid", 9))
    r = verify.check_mixing_invariants(m)
    assert r.passed and "rowsum" in r.detail


def test_results_carry_timing_and_detail():
    r = verify.check_tilde_map()
    assert r.passed and r.seconds >= 0.0 and "map dev" in r.detail
