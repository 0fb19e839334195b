import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_force_capacity, mutual_information, random_channel
from repemp.dsl import Library, parse_program
from repemp.empowerment import (
    CapacityError, Channel, EnumerationCapExceeded, Policy, capacity, channel_report,
    effective_outcomes, entropy_bits, enumerate_channel, mi_decomposition, rep_emp,
)
from repemp.ops import OperationTables
from repemp.scenario import data_path, load_scenario

S33 = load_scenario(data_path("s33.toml"))

# frozen from oracles.brute_force_capacity on rows (1, 0), (0.5, 0.5)
Z_CHANNEL_CAPACITY = 0.3219280948873623


def channels(max_in=8, max_out=8):
    @st.composite
    def build(draw):
        n = draw(st.integers(1, max_in))
        m = draw(st.integers(1, max_out))
        raw = draw(arrays(np.float64, (n, m), elements=st.floats(0, 1)))
        raw[raw < 0.2] = 0.0
        for row in raw:
            if row.sum() == 0:
                row[draw(st.integers(0, m - 1))] = 1.0
        return raw / raw.sum(axis=1, keepdims=True)
    return build()


def policies(n):
    return arrays(np.float64, (n,), elements=st.floats(0, 1)).filter(lambda w: w.sum() > 0).map(
        lambda w: w / w.sum())


class TestGoldenNumbers:
    @pytest.mark.parametrize("name,bits,n_inputs,n_eff", [
        ("Z_A", math.log2(6), 9, 6),
        ("Z_B", math.log2(18), 18, 18),
        ("empty", 0.0, 0, 0),
    ])
    def test_uniform(self, name, bits, n_inputs, n_eff):
        rep = rep_emp(S33.library(name), S33, equivalence=name)
        assert rep.mi_bits == pytest.approx(bits, abs=1e-12)
        assert (rep.n_inputs, rep.n_eff) == (n_inputs, n_eff)

    def test_z_c_decomposition(self):
        rep = rep_emp(S33.library("Z_C"), S33, equivalence="Z_C")
        assert rep.diversity_bits == pytest.approx(math.log2(21), abs=1e-12)
        assert rep.uncertainty_bits == 0.75
        assert rep.mi_bits == pytest.approx(math.log2(21) - 0.75, abs=1e-12)
        assert (rep.n_inputs, rep.n_eff) == (60, 21)

    def test_capacity_estimator(self):
        for name, bits in (("Z_A", math.log2(6)), ("Z_B", math.log2(18)), ("Z_C", math.log2(18))):
            rep = rep_emp(S33.library(name), S33, estimator="capacity", equivalence=name)
            assert rep.capacity_bits == pytest.approx(bits, abs=1e-9)
            assert rep.mi_bits == pytest.approx(rep.capacity_bits, abs=1e-9)

    def test_z_c_mi_under_uniform_below_capacity(self):
        ch = enumerate_channel(S33.library("Z_C"), S33.tables, 1, S33.fingerprinter("Z_C"))
        uni = mi_decomposition(ch, Policy.uniform(len(ch.inputs)))
        cap, _ = capacity(ch)
        assert uni.uncertainty_bits == pytest.approx(0.75, abs=1e-12)
        assert uni.mi_bits <= cap + 1e-9


class TestEnumerate:
    def test_z_a_shape(self):
        ch = enumerate_channel(S33.library("Z_A"), S33.tables, 1, S33.fingerprinter("Z_A"))
        assert ch.shape == (9, 6)
        assert effective_outcomes(ch) == 6

    def test_single_deterministic_op(self):
        p = parse_program("def up(n: pitch, steps: steps) = note(step(n, up, steps))")
        tables = OperationTables(fragments={"st": "scale_time(_, 1/2)"}, crossover={"up": ("st",)})
        ch = enumerate_channel(Library((p,)), tables, 1, S33.fingerprinter())
        assert ch.shape == (1, 1)
        assert capacity(ch)[0] == 0.0

    def test_cap(self):
        with pytest.raises(EnumerationCapExceeded) as err:
            enumerate_channel(S33.library("Z_C"), S33.tables, 2, S33.fingerprinter(), cap=1000)
        assert err.value.size == 60 ** 2

    def test_horizon_two_drops_inapplicable(self):
        # after a joint op the targeted programs may be renamed; later steps can fail
        ch = enumerate_channel(S33.library("Z_A"), S33.tables, 2, S33.fingerprinter("Z_A"))
        assert ch.dropped + len(ch.inputs) == 81
        assert np.allclose(ch.matrix.sum(axis=1), 1.0)


class TestCapacity:
    def test_z_channel_against_frozen_oracle(self):
        bits, pol = capacity(Channel.from_matrix([[1, 0], [0.5, 0.5]]))
        assert bits == pytest.approx(Z_CHANNEL_CAPACITY, abs=1e-4)
        assert pol.weights == pytest.approx([0.6, 0.4], abs=1e-4)

    def test_one_outcome(self):
        assert capacity(Channel.from_matrix(np.ones((3, 1))))[0] == 0.0

    def test_deterministic_18(self):
        ch = Channel.from_matrix(np.eye(18))
        assert capacity(ch)[0] == math.log2(18)

    def test_tol_must_be_positive(self):
        with pytest.raises(ValueError):
            capacity(Channel.from_matrix(np.eye(2)), tol=0)

    def test_non_convergence_reports_gap(self):
        P = np.array([[0.9, 0.1, 0.0], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]])
        with pytest.raises(CapacityError) as err:
            capacity(Channel.from_matrix(P), tol=1e-15, max_iter=3)
        assert err.value.gap > 0 and err.value.iterations == 3

    def test_matches_oracle_on_seeded_channels(self):
        rng = np.random.default_rng(1234)
        for _ in range(30):
            P = random_channel(rng, int(rng.integers(2, 5)), int(rng.integers(2, 6)))
            assert capacity(Channel.from_matrix(P))[0] == pytest.approx(brute_force_capacity(P)[0], abs=1e-3)

    @settings(max_examples=60, deadline=None)
    @given(channels(max_in=4, max_out=5))
    def test_matches_oracle(self, P):
        bits, pol = capacity(Channel.from_matrix(P))
        oracle, _ = brute_force_capacity(P)
        assert bits == pytest.approx(oracle, abs=1e-3)
        # the solver's value is achieved by its own policy
        assert mutual_information(P, pol.weights) == pytest.approx(bits, abs=1e-8)

    @settings(max_examples=80, deadline=None)
    @given(channels())
    def test_bounds_and_dominance(self, P):
        ch = Channel.from_matrix(P)
        bits, _ = capacity(ch)
        n, m = P.shape
        assert -1e-12 <= bits <= min(math.log2(n), math.log2(effective_outcomes(ch))) + 1e-9
        uni = mi_decomposition(ch, Policy.uniform(n))
        assert uni.mi_bits <= bits + 1e-8

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.randoms(use_true_random=False))
    def test_deterministic_channels_exact(self, n, m, rnd):
        P = np.zeros((n, m))
        for i in range(n):
            P[i, rnd.randrange(m)] = 1.0
        ch = Channel.from_matrix(P)
        k = effective_outcomes(ch)
        assert capacity(ch)[0] == (math.log2(k) if k > 1 else 0.0)

    @settings(max_examples=60, deadline=None)
    @given(channels(max_in=6, max_out=6), st.data())
    def test_merging_outcomes_never_increases(self, P, data):
        m = P.shape[1]
        if m < 2:
            return
        i, j = sorted(data.draw(st.lists(st.integers(0, m - 1), min_size=2, max_size=2, unique=True)))
        merged = np.delete(P, j, axis=1)
        merged[:, i] += P[:, j]
        assert capacity(Channel.from_matrix(merged))[0] <= capacity(Channel.from_matrix(P))[0] + 1e-8

    def test_duplicate_rows_share_mass(self):
        P = np.array([[1, 0], [1, 0], [1, 0], [0.5, 0.5]])
        bits, pol = capacity(Channel.from_matrix(P))
        assert bits == pytest.approx(Z_CHANNEL_CAPACITY, abs=1e-6)
        assert pol.weights[:3].sum() == pytest.approx(0.6, abs=1e-4)


class TestDecomposition:
    def test_point_policy(self):
        P = np.array([[0.5, 0.5, 0], [0, 0, 1]])
        rep = mi_decomposition(Channel.from_matrix(P), Policy.point(2, 0))
        assert rep.diversity_bits == pytest.approx(1.0)
        assert rep.mi_bits == pytest.approx(0.0, abs=1e-12)

    def test_noiseless_uniform(self):
        rep = mi_decomposition(Channel.from_matrix(np.eye(5)), Policy.uniform(5))
        assert rep.mi_bits == pytest.approx(math.log2(5))

    def test_policy_shape_checked(self):
        with pytest.raises(ValueError):
            mi_decomposition(Channel.from_matrix(np.eye(3)), Policy.uniform(2))

    @settings(max_examples=100, deadline=None)
    @given(channels(), st.data())
    def test_identity(self, P, data):
        w = data.draw(policies(P.shape[0]))
        rep = mi_decomposition(Channel.from_matrix(P), Policy(w))
        assert rep.diversity_bits - rep.uncertainty_bits == pytest.approx(rep.mi_bits, abs=1e-9)
        assert rep.mi_bits == pytest.approx(mutual_information(P, w), abs=1e-9)

    def test_entropy_zero_terms(self):
        assert entropy_bits([1.0, 0.0]) == 0.0
        assert entropy_bits([0.25] * 4) == 2.0


def test_channel_validation():
    with pytest.raises(ValueError):
        Channel.from_matrix([[0.5, 0.4]])
    with pytest.raises(ValueError):
        Channel.from_matrix([[1.5, -0.5]])
    with pytest.raises(ValueError):
        Policy(np.array([0.7, 0.7]))


def test_report_dict_and_empty():
    rep = channel_report(Channel([], [], np.zeros((0, 0))), "capacity")
    assert rep.value == 0.0
    assert set(rep.to_dict()) >= {"diversity_bits", "uncertainty_bits", "mi_bits", "capacity_bits",
                                  "achieving_policy", "n_eff", "estimator"}


def test_golden_runtime_under_one_second():
    for name in ("Z_A", "Z_B", "Z_C"):
        sc = load_scenario(data_path("s33.toml"))
        t0 = time.perf_counter()
        rep_emp(sc.library(name), sc, equivalence=name)
        assert time.perf_counter() - t0 < 1.0
