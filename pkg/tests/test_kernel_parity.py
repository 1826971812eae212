"""Pin the compiled kernel against the pure-numpy reference."""

import os
import subprocess
import sys

import numpy as np
import pytest

from lodisc import _kernel as K
from lodisc._kernel import Tables, pure

compiled = pytest.mark.skipif(K.BACKEND != "compiled",
                              reason="compiled kernel not built")


def rand_state(rng, M=24, rate=0.8):
    m = np.arange(M + 1)
    v = (rng.normal(size=M + 1) + 1j * rng.normal(size=M + 1)) * np.exp(-0.4 * rate * m)
    v /= np.linalg.norm(v)
    v.setflags(write=False)
    return v


@compiled
class TestParity:
    def test_plan_step(self):
        rng = np.random.default_rng(0)
        for n_rem in (2, 7, 64, 500):
            p = rand_state(rng)
            q = rand_state(rng)
            a = K._impl.plan_step(p, q, n_rem, 1e-6, 1e-14)
            b = pure.plan_step(p, q, n_rem, 1e-6, 1e-14)
            assert abs(a[0] - b[0]) < 1e-12
            assert a[1] == b[1]
            assert abs(a[2] - b[2]) < 1e-12

    def test_apply_step(self):
        rng = np.random.default_rng(1)
        tab = Tables.for_cutoff(24)
        for _ in range(8):
            s = rand_state(rng)
            r = 0.01 + 0.3 * rng.random()
            xi = (rng.random() - 0.5) * 0.4 + 1j * (rng.random() - 0.5) * 0.4
            fa = K._impl.apply_step(s, r, xi, tab.sqb, tab.isf)
            fb = pure.apply_step(s, r, xi, tab.sqb, tab.isf)
            assert np.max(np.abs(fa[0] - fb[0])) < 1e-13
            assert np.max(np.abs(fa[1] - fb[1])) < 1e-13
            for i in (2, 3, 4):
                assert abs(fa[i] - fb[i]) < 1e-13

    def test_final_amps(self):
        rng = np.random.default_rng(2)
        tab = Tables.for_cutoff(24)
        for _ in range(8):
            s = rand_state(rng)
            xi = (rng.random() - 0.5) * 0.6 + 1j * (rng.random() - 0.5) * 0.6
            fa = K._impl.final_amps(s, xi, tab.isf)
            fb = pure.final_amps(s, xi, tab.isf)
            assert abs(fa[0] - fb[0]) < 1e-13
            assert abs(fa[1] - fb[1]) < 1e-13
            assert abs(fa[2] - fb[2]) < 1e-13

    def test_final_align_objective(self):
        rng = np.random.default_rng(3)
        tab = Tables.for_cutoff(24)
        for _ in range(8):
            a = rand_state(rng)
            b = rand_state(rng)
            xi = (rng.random() - 0.5) * 0.5 + 1j * (rng.random() - 0.5) * 0.5
            fa = K._impl.final_align_objective(a, b, xi, tab.isf)
            fb = pure.final_align_objective(a, b, xi, tab.isf)
            assert abs(fa - fb) < 1e-13

    def test_step_both_and_stepper(self):
        rng = np.random.default_rng(5)
        tab = Tables.for_cutoff(24)
        fast = K.make_stepper(24)
        slow = pure.Stepper(tab.sqb, tab.isf)
        for n_rem in (3, 17, 200):
            p = rand_state(rng)
            q = rand_state(rng)
            fa = fast.step_both(p, q, n_rem, 1e-6, 1e-14, 0.5)
            fb = slow.step_both(p, q, n_rem, 1e-6, 1e-14, 0.5)
            assert abs(fa[0] - fb[0]) < 1e-12      # xi
            assert fa[1] == fb[1] and fa[2] == fb[2]
            for i in (3, 4, 5, 6):
                assert np.max(np.abs(fa[i] - fb[i])) < 1e-11
            for i in (7, 8):
                assert max(abs(x - y) for x, y in zip(fa[i], fb[i])) < 1e-13
            ga = fast.apply_pair(p, q, 1.0 / n_rem, fa[0])
            gb = slow.apply_pair(p, q, 1.0 / n_rem, fa[0])
            for i in (0, 1, 2, 3):
                assert np.max(np.abs(ga[i] - gb[i])) < 1e-11


def test_probability_conservation_under_both_backends():
    rng = np.random.default_rng(4)
    tab = Tables.for_cutoff(24)
    for impl in {("pure", pure), (K.BACKEND, K._impl)}:
        s = rand_state(rng)
        _, _, p0, p1, pf = impl[1].apply_step(s, 0.125, 0.1 + 0.05j,
                                              tab.sqb, tab.isf)
        assert abs((p0 + p1 + pf) - 1.0) < 1e-12


def test_env_var_forces_pure_backend():
    env = dict(os.environ, LODISC_KERNEL="pure")
    out = subprocess.run(
        [sys.executable, "-c",
         "import lodisc; print(lodisc.backend_name())"],
        capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "pure"


def test_small_engine_run_matches_across_backends():
    # the sampled estimates must agree closely (not bitwise: float ordering
    # differs between the backends)
    code = (
        "from lodisc.fock import cat_pair\n"
        "from lodisc.engine import mc_error_probability\n"
        "est = mc_error_probability(cat_pair(1.0, 24), 6, 4000, seed=12)\n"
        "print(repr(est.p_err))\n"
    )
    vals = {}
    for backend in ("pure", ""):
        env = dict(os.environ, LODISC_KERNEL=backend)
        out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                             text=True, env=env, check=True)
        vals[backend] = float(out.stdout.strip())
    assert abs(vals["pure"] - vals[""]) < 0.02
