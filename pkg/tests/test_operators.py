import math

import numpy as np
import pytest

from lodisc.fock import FockVector, cat_pair, make_orthogonal_pair
from lodisc.operators import (DomainError, assoc_laguerre,
                              assoc_laguerre_direct,
                              binomial_concentration_holds, beamsplitter_tap,
                              displacement_matrix, displacement_column_deficit,
                              laguerre_bound, step_kraus, validate_pk_bound)


def series_expm_displacement(xi, M, pad=20):
    """Truncated power-series exponential of xi a^dag - xi* a (oracle)."""
    dim = M + 1 + pad
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    A = xi * a.conj().T - np.conjugate(xi) * a
    s = max(0, int(np.ceil(np.log2(max(np.linalg.norm(A, 1), 1e-30)))) + 2)
    B = A / 2**s
    T = np.eye(dim, dtype=complex)
    term = np.eye(dim, dtype=complex)
    for k in range(1, 80):
        term = term @ B / k
        T += term
        if np.linalg.norm(term) < 1e-30:
            break
    for _ in range(s):
        T = T @ T
    return T[: M + 1, : M + 1]


class TestLaguerre:
    def test_degree_zero_is_one(self):
        for a in (0, 3, 7):
            for x in (0.0, 0.3, 11.0):
                assert assoc_laguerre(0, a, x) == 1.0
        assert assoc_laguerre(2, -2, 1.5) == assoc_laguerre(2, -2, 1.5)  # a >= -n allowed

    def test_degree_one(self):
        for x in (0.0, 0.5, 2.0, 9.0):
            assert abs(assoc_laguerre(1, 0, x) - (1.0 - x)) < 1e-14

    @pytest.mark.parametrize("n", [2, 5, 9, 14, 18])
    def test_recurrence_matches_direct_sum(self, n):
        for a in (0, 1, 4):
            for x in (0.1, 1.0, 4.0, 12.0):
                ref = assoc_laguerre_direct(n, a, x)
                scale = laguerre_bound(n, a, x)
                assert abs(assoc_laguerre(n, a, x) - ref) < 1e-9 * scale

    def test_bound_grid(self):
        # coarse version of the full validator grid
        for n in range(0, 41, 4):
            for a in range(0, 11, 2):
                for x in np.arange(0.0, 25.1, 2.5):
                    assert abs(assoc_laguerre(n, a, float(x))) <= \
                        laguerre_bound(n, a, float(x)) * (1 + 1e-12)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            assoc_laguerre(-1, 0, 1.0)
        with pytest.raises(DomainError):
            assoc_laguerre(2, -3, 1.0)


class TestBinomialInequality:
    def test_holds_on_sample(self):
        for n in (2, 10, 57, 200):
            for nu in range(0, n, max(1, n // 7)):
                for y in (0.05, 0.35, 0.5, 0.95):
                    assert binomial_concentration_holds(n, nu, y)


class TestDisplacementMatrix:
    def test_zero_is_identity(self):
        D = displacement_matrix(0.0, 12)
        assert np.array_equal(D.entries, np.eye(13))

    def test_diagonal_laguerre_form(self):
        xi = 0.4 + 0.3j
        x = abs(xi) ** 2
        D = displacement_matrix(xi, 15)
        for n in (0, 3, 9, 15):
            expect = math.exp(-x / 2) * assoc_laguerre(n, 0, x)
            assert abs(D.entries[n, n] - expect) < 1e-12

    def test_matches_series_exponential_oracle(self):
        rng = np.random.default_rng(42)
        M = 20
        for _ in range(6):
            xi = (rng.random() * 1.6 - 0.8) + 1j * (rng.random() * 1.6 - 0.8)
            if abs(xi) > 0.8:
                xi *= 0.8 / abs(xi)
            D = displacement_matrix(xi, M).entries
            O = series_expm_displacement(xi, M, pad=20)
            assert np.max(np.abs(D - O)) < 1e-12

    def test_adjoint_is_negative_argument(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            xi = (rng.random() - 0.5) + 1j * (rng.random() - 0.5)
            D = displacement_matrix(xi, 18)
            Dm = displacement_matrix(-xi, 18)
            assert np.max(np.abs(Dm.entries - D.entries.conj().T)) < 1e-12

    def test_composition_phase(self):
        M = 24
        x1, x2 = 0.3 + 0.2j, -0.25 + 0.35j
        D1 = displacement_matrix(x1, M).entries
        D2 = displacement_matrix(x2, M).entries
        D12 = displacement_matrix(x1 + x2, M).entries
        phase = np.exp((x1 * np.conjugate(x2) - np.conjugate(x1) * x2) / 2)
        lhs = (D1 @ D2)[: M // 2 + 1, : M // 2 + 1]
        rhs = (phase * D12)[: M // 2 + 1, : M // 2 + 1]
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_column_norms_within_truncation(self):
        D = displacement_matrix(0.5, 24)
        cols = np.linalg.norm(D.entries, axis=0) ** 2
        assert np.all(cols <= 1.0 + 1e-12)
        # interior columns are essentially unitary; the deficit lives at the
        # cutoff corner and is what displacement_column_deficit reports
        assert np.all(1.0 - cols[:13] < 1e-9)
        assert displacement_column_deficit(D) > 1e-3


class TestBeamsplitterTap:
    def test_transparent_limit(self):
        state = FockVector(np.array([0.6, 0.0, 0.8], dtype=complex))
        branches = beamsplitter_tap(state, 1e-9, 2)
        assert np.allclose(branches[0].amps, state.amps, atol=1e-7)
        assert np.linalg.norm(branches[1].amps) < 1e-4

    def test_single_photon_quarter_tap(self):
        branches = beamsplitter_tap(FockVector.basis(1, 4), 0.25, 1)
        assert abs(branches[0].amps[1] - math.sqrt(3) / 2) < 1e-14
        assert abs(branches[1].amps[0] - 0.5) < 1e-14

    def test_branch_zero_matches_transmittance_form(self):
        # zero-count branch amplitudes are c_m (1 - 1/N)^{m/2}
        pair = cat_pair(1.0, 20)
        N = 11
        branch0 = beamsplitter_tap(pair.psi, 1.0 / N, 0)[0]
        m = np.arange(21)
        expect = pair.psi.amps * (1.0 - 1.0 / N) ** (0.5 * m)
        assert np.allclose(branch0.amps, expect, atol=1e-14)

    def test_branch_norms_sum_to_one(self):
        state = FockVector(np.exp(-0.4 * np.arange(13)) + 0j)
        state = FockVector(state.amps / np.linalg.norm(state.amps))
        branches = beamsplitter_tap(state, 0.3, 12)
        total = sum(np.linalg.norm(b.amps) ** 2 for b in branches)
        assert abs(total - 1.0) < 1e-12

    def test_reflectance_domain(self):
        with pytest.raises(DomainError):
            beamsplitter_tap(FockVector.basis(0, 3), 1.5, 1)


class TestStepKraus:
    def test_zero_displacement_reduces_to_tap(self):
        state = FockVector(np.exp(-0.3 * np.arange(11)) + 0j)
        fam = step_kraus(0.2, 0.0, 3, 10)
        branches = beamsplitter_tap(state, 0.2, 3)
        for k in range(4):
            assert np.allclose(fam.op(k).entries @ state.amps,
                               branches[k].amps, atol=1e-13)

    def test_completeness_random_draws(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            r = max(rng.random() / 8, 1e-3)
            beta = (rng.random() * 2 - 1) + 1j * (rng.random() * 2 - 1)
            if abs(beta) > 1:
                beta /= abs(beta)
            fam = step_kraus(r, beta, 4, 24)
            assert fam.completeness_deficit <= 1e-9

    def test_above_kmax_weight_reported_and_monotone(self):
        lo = step_kraus(1.0 / 8, 0.8, 2, 24)
        hi = step_kraus(1.0 / 8, 0.8, 4, 24)
        assert lo.above_kmax_weight > hi.above_kmax_weight > 0.0

    def test_leading_terms_match_conditional_structure(self):
        # ops[0], ops[1] applied to the input reproduce the
        # eta0/eta1 two-term forms up to O(1/N)
        from lodisc.receiver import orthogonal_decomposition
        pair = make_orthogonal_pair(
            FockVector(np.exp(-0.45 * np.arange(25)) + 0j),
            FockVector((np.arange(25) == 1).astype(complex)))
        N = 64
        d = orthogonal_decomposition(pair, N)
        beta1 = 0.11 - 0.07j
        xi = beta1 / math.sqrt(N)
        fam = step_kraus(1.0 / N, xi, 1, 24)
        out0 = fam.op(0).entries @ pair.psi.amps
        pred0 = d.eta0.amps - (np.conjugate(beta1) / N) * d.eta1.amps
        assert np.max(np.abs(out0 - pred0)) < 3.0 / N
        out1 = fam.op(1).entries @ pair.psi.amps
        pred1 = (beta1 * d.eta0.amps + d.eta1.amps) / math.sqrt(N)
        assert np.max(np.abs(out1 - pred1)) < 3.0 / N

    def test_kmax_over_cutoff_rejected(self):
        with pytest.raises(DomainError):
            step_kraus(0.1, 0.0, 8, 4)


class TestPkBound:
    def test_k0_dominant_branch(self):
        rep = validate_pk_bound(cat_pair(1.0, 24), 64, 1.0, 0)
        assert rep["p_exact"] > 0.9
        assert rep["pass"]

    def test_vacuum_no_photons(self):
        pair = make_orthogonal_pair(FockVector.basis(0, 24),
                                    FockVector.basis(1, 24))
        rep = validate_pk_bound(pair, 32, 1.0, 1)
        # psi is vacuum and the planned displacement is zero: P_1 = 0
        assert rep["p_exact"] < 1e-20
        assert rep["pass"]

    def test_p2_scales_as_inverse_square(self):
        vals = []
        ns = (16, 64, 256)
        for N in ns:
            rep = validate_pk_bound(cat_pair(1.0, 24), N, 1.0, 2)
            assert rep["pass"]
            vals.append(rep["p_exact"])
        slope = np.polyfit(np.log(ns), np.log(vals), 1)[0]
        assert abs(slope + 2.0) < 0.2
