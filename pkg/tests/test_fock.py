import json
import math

import numpy as np
import pytest

from lodisc.fock import (CutoffMismatchError, FockVector, ParallelInputsError,
                         StatePair, TruncationBudgetError, ZeroVectorError,
                         basis_pair, cat_pair, certify_tail,
                         coherent_amplitudes, inner_product, load_pair,
                         make_orthogonal_pair, mean_photon, norm, normalize,
                         pair_to_json, qubit_plus_minus_pair,
                         tail_envelope_points)


def rand_vector(seed, cutoff=24, rate=0.8):
    rng = np.random.default_rng(seed)
    m = np.arange(cutoff + 1)
    amps = (rng.normal(size=cutoff + 1) + 1j * rng.normal(size=cutoff + 1))
    return FockVector(amps * np.exp(-0.5 * rate * m))


class TestInnerProduct:
    def test_basis_orthonormal(self):
        e2 = FockVector.basis(2, 5)
        e1 = FockVector.basis(1, 5)
        e3 = FockVector.basis(3, 5)
        assert inner_product(e2, e2) == 1.0
        assert inner_product(e1, e3) == 0.0

    def test_matches_term_by_term_oracle(self):
        a = rand_vector(1)
        b = rand_vector(2)
        # independent summation oracle: plain python complex arithmetic
        oracle = sum(complex(x).conjugate() * complex(y)
                     for x, y in zip(a.amps, b.amps))
        assert abs(inner_product(a, b) - oracle) < 1e-14

    def test_conjugate_symmetry(self):
        for seed in range(5):
            a = rand_vector(seed)
            b = rand_vector(seed + 100)
            lhs = inner_product(a, b)
            rhs = inner_product(b, a).conjugate()
            assert abs(lhs - rhs) < 1e-14

    def test_cutoff_mismatch_raises(self):
        with pytest.raises(CutoffMismatchError):
            inner_product(FockVector.basis(0, 4), FockVector.basis(0, 5))


class TestNormalize:
    def test_scaling(self):
        v = FockVector.from_amplitudes([2.0], 4)
        out = normalize(v)
        assert out.amps[0] == 1.0
        assert np.all(out.amps[1:] == 0.0)

    def test_symmetric_two_level(self):
        out = normalize(FockVector.from_amplitudes([1.0, 1.0], 3))
        assert abs(out.amps[0] - 1 / math.sqrt(2)) < 1e-15
        assert abs(out.amps[1] - 1 / math.sqrt(2)) < 1e-15

    def test_unit_norm_random(self):
        out = normalize(rand_vector(3))
        assert abs(inner_product(out, out) - 1.0) < 1e-14

    def test_zero_vector_raises(self):
        with pytest.raises(ZeroVectorError):
            normalize(FockVector(np.zeros(5, dtype=complex)))

    def test_direction_preserved(self):
        v = rand_vector(4)
        out = normalize(v)
        ratio = inner_product(v, out) / (norm(v) * 1.0)
        assert abs(ratio - 1.0) < 1e-12  # positive real multiple


class TestOrthogonalPair:
    def test_already_orthonormal_unchanged(self):
        pair = make_orthogonal_pair(FockVector.basis(0, 6), FockVector.basis(1, 6))
        assert np.allclose(pair.psi.amps, FockVector.basis(0, 6).amps)
        assert np.allclose(pair.phi.amps, FockVector.basis(1, 6).amps)

    def test_hand_gram_schmidt(self):
        raw_phi = FockVector.from_amplitudes([1 / math.sqrt(2), 1 / math.sqrt(2)], 6)
        pair = make_orthogonal_pair(FockVector.basis(0, 6), raw_phi)
        assert np.allclose(pair.phi.amps, FockVector.basis(1, 6).amps, atol=1e-14)

    @pytest.mark.parametrize("seed", range(20))
    def test_random_pairs_orthogonal(self, seed):
        pair = make_orthogonal_pair(rand_vector(seed), rand_vector(seed + 999))
        assert abs(inner_product(pair.psi, pair.phi)) <= 1e-12

    def test_parallel_inputs_raise(self):
        v = rand_vector(10)
        with pytest.raises(ParallelInputsError):
            make_orthogonal_pair(v, FockVector(2.0 * v.amps))

    def test_state_pair_validates(self):
        with pytest.raises(ValueError):
            StatePair(normalize(rand_vector(1)), normalize(rand_vector(1)))


class TestCertifyTail:
    def test_vacuum_sentinel(self):
        prof = certify_tail(FockVector.basis(0, 10), x_max=50.0)
        assert prof.x == 50.0

    def test_pure_exponential_rate(self):
        m = np.arange(41)
        amps = math.sqrt(1 - math.exp(-1.0)) * np.exp(-0.5 * m)
        prof = certify_tail(FockVector(amps))
        assert abs(prof.x - 1.0) < 1e-6

    def test_poissonian_matches_ratio_scan_oracle(self):
        v = FockVector(coherent_amplitudes(0.7, 40))
        prof = certify_tail(v)
        # independent oracle: scan the envelope log-ratios in plain python
        mags = [abs(z) for z in v.amps]
        pts = tail_envelope_points(np.array(mags))
        rates = [-2.0 * (math.log(mags[b]) - math.log(mags[a])) / (b - a)
                 for a, b in zip(pts, pts[1:])]
        assert abs(prof.x - min(rates)) < 1e-12

    @pytest.mark.parametrize("seed", range(6))
    def test_pointwise_reconstruction(self, seed):
        v = normalize(rand_vector(seed, rate=1.1))
        prof = certify_tail(v)
        m = np.arange(v.cutoff + 1)
        assert np.all(np.abs(v.amps) <= prof.bound(m) * (1 + 1e-12))

    def test_qubit_pair_finite_support(self):
        pair = qubit_plus_minus_pair(24)
        assert certify_tail(pair.psi).x == 50.0


class TestPairIO:
    def test_round_trip(self, tmp_path):
        pair = cat_pair(1.0, 24)
        path = tmp_path / "pair.json"
        path.write_text(pair_to_json(pair))
        loaded, discarded = load_pair(path)
        assert discarded == 0.0
        assert np.allclose(loaded.psi.amps, pair.psi.amps, atol=1e-14)
        assert np.allclose(loaded.phi.amps, pair.phi.amps, atol=1e-14)

    def test_short_lists_zero_padded(self, tmp_path):
        path = tmp_path / "pair.json"
        path.write_text(json.dumps(
            {"cutoff": 8, "psi": [[1.0, 0.0]], "phi": [[0.0, 0.0], [1.0, 0.0]]}))
        pair, _ = load_pair(path)
        assert pair.cutoff == 8
        assert pair.psi.amps[0] == 1.0 and pair.phi.amps[1] == 1.0

    def test_truncation_budget_enforced(self, tmp_path):
        big = cat_pair(1.0, 40)
        path = tmp_path / "pair.json"
        path.write_text(pair_to_json(big))
        with pytest.raises(TruncationBudgetError):
            load_pair(path, cutoff=4, trunc_budget=1e-10)

    def test_invalid_file_raises(self, tmp_path):
        path = tmp_path / "pair.json"
        path.write_text('{"cutoff": 4, "psi": "oops"}')
        with pytest.raises(ValueError):
            load_pair(path)


def test_mean_photon():
    assert mean_photon(FockVector.basis(3, 8)) == 3.0
    assert abs(mean_photon(qubit_plus_minus_pair(8).psi) - 0.5) < 1e-14


def test_amps_are_read_only():
    v = FockVector.basis(1, 4)
    with pytest.raises(ValueError):
        v.amps[0] = 5.0


def test_basis_pair_and_cat_pair_orthonormal():
    for pair in (basis_pair(24), cat_pair(1.0, 24)):
        assert abs(norm(pair.psi) - 1) < 1e-12
        assert abs(norm(pair.phi) - 1) < 1e-12
        assert abs(inner_product(pair.psi, pair.phi)) < 1e-12
