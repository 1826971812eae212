"""Pure-numpy step kernel: the hot per-step math of the receiver.

One measurement step taps the signal with power reflectance r = 1/n_rem,
displaces the tapped mode by xi, and counts photons.  Everything here works
on raw complex128 arrays; the object layer lives in the public modules.

The compiled backend in _fast.pyx mirrors these functions exactly; the test
suite pins the two against each other.
"""

from __future__ import annotations

import math

import numpy as np

GENERIC = 0
DEGENERATE = 1
ZERO_OVER_ZERO = 2


def plan_step(p: np.ndarray, q: np.ndarray, n_rem: int,
              deg_rel: float, deg_abs: float):
    """Feedforward displacement for the next tap step.

    p, q are the planner's conditional pair (normalized, slot order fixed),
    n_rem the number of measurements still to come, so the tap reflectance
    is 1/n_rem.  Solves the linearized orthogonality condition
    t*a + t b = g for the applied displacement t, written through
    X = 2(g b* - a g*)/(|a|^2 - |b|^2) and t = -X/(1 + sqrt(1 + |X|^2)).

    Returns (xi, status, den, scale, num_mag); den and scale follow the
    splitting-normalized overlap convention used by the degeneracy
    threshold.
    """
    M = len(p) - 1
    s2 = 1.0 - 1.0 / n_rem
    m = np.arange(M + 1)
    sm = np.power(s2, 0.5 * m)
    u = np.sqrt(np.maximum(1.0 - np.power(s2, m), 0.0))
    eta0 = p * sm
    nu0 = q * sm
    e1 = p[1:] * u[1:]
    n1 = q[1:] * u[1:]
    g = complex(np.vdot(eta0, nu0))
    a = complex(np.vdot(eta0[:M], n1))
    b = complex(np.vdot(e1, nu0[:M]))
    aa = abs(a) ** 2
    bb = abs(b) ** 2
    den_r = aa - bb
    num_x = 2.0 * (g * b.conjugate() - a * g.conjugate())
    den = n_rem * den_r
    scale = n_rem * (aa + bb)
    if abs(den) < deg_rel * scale + deg_abs:
        num_scale = 2.0 * (abs(g) * abs(b) + abs(a) * abs(g))
        if abs(num_x) <= deg_rel * num_scale + deg_abs:
            return 0j, ZERO_OVER_ZERO, den, scale, abs(num_x)
        return 0j, DEGENERATE, den, scale, abs(num_x)
    X = num_x / den_r
    xi = -X / (1.0 + math.sqrt(1.0 + abs(X) ** 2))
    return complex(xi), GENERIC, den, scale, abs(num_x)


def _count_rows(xi: complex, M: int, isf: np.ndarray):
    """Rows <0|D(xi)|j> and <1|D(xi)|j> of the displacement matrix.

    Closed forms: L_0^(a) = 1 and L_1^(a)(x) = 1 + a - x collapse the
    Laguerre kernels for the two counter outcomes that matter per step.
    """
    x = abs(xi) ** 2
    emh = math.exp(-0.5 * x)
    j = np.arange(M + 1)
    mxc = np.empty(M + 1, dtype=np.complex128)  # (-xi*)^j
    mxc[0] = 1.0
    if M >= 1:
        mxc[1:] = np.cumprod(np.full(M, -xi.conjugate()))
    d0 = emh * mxc * isf
    d1 = np.empty(M + 1, dtype=np.complex128)
    d1[0] = emh * xi
    if M >= 1:
        d1[1:] = emh * mxc[:-1] * (j[1:] - x) * isf[1:]
    return d0, d1


def apply_step(state: np.ndarray, r: float, xi: complex,
               sqb: np.ndarray, isf: np.ndarray):
    """Apply the k=0 and k=1 step branches to one conditional state.

    Returns (child0, child1, p0, p1, pfail): unnormalized conditional
    vectors, their squared norms, and the remaining outcome mass
    ||state||^2 - p0 - p1 (all k >= 2 counts, exact because the counter
    rows are exact infinite-dimensional matrix elements).
    """
    M = len(state) - 1
    d0, d1 = _count_rows(xi, M, isf)
    rj = np.power(r, 0.5 * np.arange(M + 1))
    u0 = d0 * rj
    u1 = d1 * rj
    child0 = np.zeros(M + 1, dtype=np.complex128)
    child1 = np.zeros(M + 1, dtype=np.complex128)
    for j in range(M + 1):
        w = sqb[: M + 1 - j, j] * state[j:]
        child0[: M + 1 - j] += u0[j] * w
        child1[: M + 1 - j] += u1[j] * w
    trans = np.power(1.0 - r, 0.5 * np.arange(M + 1))
    child0 *= trans
    child1 *= trans
    p0 = float(np.vdot(child0, child0).real)
    p1 = float(np.vdot(child1, child1).real)
    n2 = float(np.vdot(state, state).real)
    pfail = max(n2 - p0 - p1, 0.0)
    return child0, child1, p0, p1, pfail


def final_amps(state: np.ndarray, xi: complex, isf: np.ndarray):
    """Final displaced-count amplitudes a_k = <k|D(xi)|state> for k = 0, 1.

    Returns (a0, a1, n2) with n2 the squared norm of the input, so the
    failure mass of the last counter is n2 - |a0|^2 - |a1|^2.
    """
    M = len(state) - 1
    d0, d1 = _count_rows(xi, M, isf)
    a0 = complex(np.dot(d0, state))
    a1 = complex(np.dot(d1, state))
    n2 = float(np.vdot(state, state).real)
    return a0, a1, n2


def final_align_objective(a: np.ndarray, b: np.ndarray, xi: complex,
                          isf: np.ndarray) -> float:
    """Misalignment |<1|D(xi)|a>|^2 + |<0|D(xi)|b>|^2 of the final counter."""
    M = len(a) - 1
    d0, d1 = _count_rows(xi, M, isf)
    return abs(complex(np.dot(d1, a))) ** 2 + abs(complex(np.dot(d0, b))) ** 2


def _renormed(vec: np.ndarray, weight: float) -> np.ndarray:
    if weight > 1e-300:
        return vec / math.sqrt(weight)
    return np.zeros_like(vec)


def apply_pair(p: np.ndarray, q: np.ndarray, r: float, xi: complex,
               sqb: np.ndarray, isf: np.ndarray):
    """One tap step on both conditional states, children renormalized.

    Returns (c0p, c1p, c0q, c1q, probs_p, probs_q) with probs = (p0, p1,
    pfail) relative to each input's squared norm.
    """
    c0p, c1p, p0p, p1p, pfp = apply_step(p, r, xi, sqb, isf)
    c0q, c1q, p0q, p1q, pfq = apply_step(q, r, xi, sqb, isf)
    return (_renormed(c0p, p0p), _renormed(c1p, p1p),
            _renormed(c0q, p0q), _renormed(c1q, p1q),
            (p0p, p1p, pfp), (p0q, p1q, pfq))


def step_both(p: np.ndarray, q: np.ndarray, n_rem: int, deg_rel: float,
              deg_abs: float, t_cap: float, sqb: np.ndarray, isf: np.ndarray):
    """Fused plan-and-apply for one feedforward step on a state pair.

    The planned displacement is clamped into |xi| <= t_cap (the per-port
    power budget).  Returns (xi, status, capped, c0p, c1p, c0q, c1q,
    probs_p, probs_q).
    """
    xi, status, _, _, _ = plan_step(p, q, n_rem, deg_rel, deg_abs)
    capped = False
    if abs(xi) > t_cap:
        xi *= t_cap * (1.0 - 1e-12) / abs(xi)
        capped = True
    out = apply_pair(p, q, 1.0 / n_rem, xi, sqb, isf)
    return (xi, status, capped) + out


class Stepper:
    """Per-cutoff kernel handle; mirrors the compiled Stepper interface."""

    def __init__(self, sqb: np.ndarray, isf: np.ndarray):
        self.sqb = sqb
        self.isf = isf

    def step_both(self, p, q, n_rem, deg_rel, deg_abs, t_cap):
        return step_both(p, q, n_rem, deg_rel, deg_abs, t_cap,
                         self.sqb, self.isf)

    def apply_pair(self, p, q, r, xi):
        return apply_pair(p, q, r, xi, self.sqb, self.isf)

    def final_amps(self, state, xi):
        return final_amps(state, xi, self.isf)

    def final_align_objective(self, a, b, xi):
        return final_align_objective(a, b, xi, self.isf)
