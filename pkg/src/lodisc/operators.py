"""Physical-layer operators: Laguerre kernels, displacement matrices,
beamsplitter taps, and the per-step Kraus family, with the supporting
analytic bounds available as checked properties.

Sign conventions: tap branch amplitudes are all-positive (phases are absorbed
into the displacement), and the displacement matrix follows the number-basis
closed form <n|D(xi)|m> with associated Laguerre kernels.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .fock import FockVector, StatePair, certify_tail


class DomainError(ValueError):
    pass


def assoc_laguerre(n: int, a: int, x: float) -> float:
    """L_n^(a)(x) by the three-term recurrence in the degree.

    The alternating power-series definition cancels catastrophically for
    large degree; the recurrence is stable on the x >= 0 domain used here.
    """
    if n < 0 or a < -n or x < 0.0:
        raise DomainError(f"assoc_laguerre domain violation: n={n}, a={a}, x={x}")
    prev = 1.0
    if n == 0:
        return prev
    cur = 1.0 + a - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 + a - x) * cur - (k + a) * prev) / (k + 1)
    return cur


def assoc_laguerre_direct(n: int, a: int, x: float) -> float:
    """Small-degree oracle: the explicit binomial sum, exact binomials."""
    if n < 0 or a < -n:
        raise DomainError(f"assoc_laguerre domain violation: n={n}, a={a}")
    total = 0.0
    for k in range(n + 1):
        total += math.comb(n + a, n - k) * (-x) ** k / math.factorial(k)
    return total


def laguerre_bound(n: int, a: int, x: float) -> float:
    """|L_n^(a)(x)| <= binom(a+n, n) * exp(x/2) for x >= 0, integer a >= 0."""
    return math.comb(a + n, n) * math.exp(0.5 * x)


def binomial_concentration_holds(n: int, nu: int, y: float) -> bool:
    """binom(n,nu) y^nu (1-y)^(n-nu) <= exp(-2n(y - nu/n)^2), in log space."""
    if not (0 < y < 1) or not (0 <= nu < n):
        raise DomainError("binomial inequality needs 0<y<1 and 0<=nu<n")
    lhs = (math.lgamma(n + 1) - math.lgamma(nu + 1) - math.lgamma(n - nu + 1)
           + nu * math.log(y) + (n - nu) * math.log1p(-y))
    rhs = -2.0 * n * (y - nu / n) ** 2
    return lhs <= rhs + 1e-12


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense (M+1)x(M+1) complex operator on the truncated space."""

    entries: np.ndarray

    def __post_init__(self):
        ent = np.array(self.entries, dtype=np.complex128)
        ent.setflags(write=False)
        object.__setattr__(self, "entries", ent)

    @property
    def cutoff(self) -> int:
        return self.entries.shape[0] - 1

    def apply(self, state: FockVector) -> FockVector:
        return FockVector(self.entries @ state.amps)

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.entries.conj().T)


def displacement_matrix(xi: complex, M: int) -> OperatorMatrix:
    """Number-basis matrix elements of D(xi) on the truncated space.

    Entry (n, m) uses the n >= m closed form and its n <= m companion; the
    two agree on the diagonal (exp(-|xi|^2/2) L_n(|xi|^2)).  Prefactors are
    assembled in log space so the factorial ratios never overflow.
    """
    if M < 0:
        raise DomainError("cutoff must be >= 0")
    if xi == 0:
        return OperatorMatrix(np.eye(M + 1, dtype=np.complex128))
    x = abs(xi) ** 2
    lg = np.array([math.lgamma(k + 1) for k in range(M + 1)])
    ent = np.empty((M + 1, M + 1), dtype=np.complex128)
    for n in range(M + 1):
        for m in range(M + 1):
            d = n - m
            if d >= 0:
                lag = assoc_laguerre(m, d, x)
                pref = math.exp(0.5 * (lg[m] - lg[n]) + d * math.log(abs(xi)) - 0.5 * x)
                ent[n, m] = pref * (cmath.exp(1j * cmath.phase(xi)) ** d) * lag
            else:
                lag = assoc_laguerre(n, -d, x)
                pref = math.exp(0.5 * (lg[n] - lg[m]) - d * math.log(abs(xi)) - 0.5 * x)
                ent[n, m] = pref * ((-cmath.exp(-1j * cmath.phase(xi))) ** (-d)) * lag
    return OperatorMatrix(ent)


def displacement_column_deficit(op: OperatorMatrix) -> float:
    """Worst column-norm deficit: mass the truncation pushed past the cutoff."""
    cols = np.linalg.norm(op.entries, axis=0)
    return float(np.max(1.0 - cols**2))


def displace_state(state: FockVector, xi: complex) -> FockVector:
    return displacement_matrix(xi, state.cutoff).apply(state)


def sqrt_binom_table(M: int) -> np.ndarray:
    """sqb[n, j] = sqrt(binom(n+j, j)) for n+j <= M, zero elsewhere."""
    lg = np.array([math.lgamma(k + 1) for k in range(M + 2)])
    sqb = np.zeros((M + 1, M + 1))
    for n in range(M + 1):
        for j in range(M + 1 - n):
            sqb[n, j] = math.exp(0.5 * (lg[n + j] - lg[n] - lg[j]))
    return sqb


def tap_matrix(j: int, r: float, M: int) -> np.ndarray:
    """Branch-j map of a tap with power reflectance r: |m> -> w |m-j>.

    w = sqrt(binom(m, j)) r^(j/2) (1-r)^((m-j)/2), the all-positive branch
    convention.
    """
    T = np.zeros((M + 1, M + 1), dtype=np.complex128)
    for m in range(j, M + 1):
        n = m - j
        w = math.sqrt(math.comb(m, j)) * r ** (0.5 * j) * (1.0 - r) ** (0.5 * n)
        T[n, m] = w
    return T


def beamsplitter_tap(state: FockVector, r: float, k_max: int) -> list[FockVector]:
    """Unnormalized conditional vectors after tapping k = 0..k_max photons."""
    if not (0.0 < r < 1.0):
        raise DomainError("tap reflectance must lie in (0, 1)")
    M = state.cutoff
    if k_max > M:
        raise DomainError("k_max exceeds cutoff")
    return [FockVector(tap_matrix(k, r, M) @ state.amps) for k in range(k_max + 1)]


@dataclass(frozen=True)
class KrausFamily:
    """Per-step measurement operators: tap r, displace the tapped mode by
    beta, count k photons.

    ops holds the receiver-relevant branches k = 0..k_max.  Completeness is
    certified over the complete outcome set (all k the truncated tapped mode
    can produce); the weight sitting above k_max is reported separately, not
    silently dropped.
    """

    ops: list
    r: float
    beta: complex
    k_max: int
    completeness_deficit: float = 0.0
    above_kmax_weight: float = 0.0

    def op(self, k: int) -> OperatorMatrix:
        return self.ops[k]


def step_kraus(r: float, beta: complex, k_max: int, M: int,
               count_pad: int = 12) -> KrausFamily:
    """Build the step family M_k = sum_j <k|D(beta)|j> T_j for k = 0..k_max.

    beta is the displacement applied to the tapped mode (the per-port
    amplitude, already carrying any 1/sqrt(N) splitting convention).

    Detected counts live on the tapped mode and are not bounded by the
    signal cutoff, so the completeness accounting sums k = 0..M+count_pad;
    what remains is pure m > M truncation.
    """
    if not (0.0 < r < 1.0):
        raise DomainError("tap reflectance must lie in (0, 1)")
    if k_max > M:
        raise DomainError("k_max exceeds cutoff")
    D = displacement_matrix(beta, M + count_pad).entries
    taps = [tap_matrix(j, r, M) for j in range(M + 1)]
    full = []
    for k in range(M + count_pad + 1):
        Mk = np.zeros((M + 1, M + 1), dtype=np.complex128)
        for j in range(M + 1):
            if D[k, j] != 0:
                Mk += D[k, j] * taps[j]
        full.append(Mk)
    total = np.zeros((M + 1, M + 1), dtype=np.complex128)
    head = np.zeros_like(total)
    for k, Mk in enumerate(full):
        prod = Mk.conj().T @ Mk
        total += prod
        if k <= k_max:
            head += prod
    deficit = float(np.max(np.abs(total - np.eye(M + 1))))
    above = float(np.max(np.abs(total - head)))
    ops = [OperatorMatrix(full[k]) for k in range(k_max + 1)]
    return KrausFamily(ops=ops, r=r, beta=beta, k_max=k_max,
                       completeness_deficit=deficit, above_kmax_weight=above)


# ----------------------------------------------------------------------
# Average k-count bound: exact first-step P_k against the moment bound
# ----------------------------------------------------------------------

def pk_bound_constant(profile, k: int) -> float:
    """C_k from the displaced-state tail certificate (b_max, x):
    C_k = b_max^2 / (1 - e^-x) * (e^-x / (1 - e^-x))^k."""
    ex = math.exp(-profile.x)
    if ex >= 1.0:
        raise DomainError("tail certificate has no exponential decay")
    return profile.c_max**2 / (1.0 - ex) * (ex / (1.0 - ex)) ** k


def validate_pk_bound(pair: StatePair, N: int, beta_cap: float, k: int,
                      slack: float = 0.05, pad_cutoff: int = 64) -> dict:
    """Exact first-step P_k for psi against C_k / N^k.

    The exact side runs the explicit Kraus matrices at an enlarged cutoff;
    the bound side certifies the tail of the cap-displaced input.  The two
    routes share nothing but the input state.
    """
    from .receiver import plan_tap_displacement

    if k < 0:
        raise DomainError("k must be >= 0")
    M = max(pad_cutoff, pair.cutoff)
    psi = FockVector.from_amplitudes(pair.psi.amps, M)
    phi = FockVector.from_amplitudes(pair.phi.amps, M)
    plan = plan_tap_displacement(psi, phi, N)
    xi = plan.xi
    fam = step_kraus(1.0 / N, xi, max(k, 1), M)
    p_exact = float(np.linalg.norm(fam.op(k).entries @ psi.amps) ** 2)

    cap_phase = cmath.exp(1j * cmath.phase(xi)) if xi != 0 else 1.0
    displaced = displace_state(psi, beta_cap * cap_phase)
    profile = certify_tail(displaced)
    if profile.x <= 0.0:
        raise DomainError("displaced input failed tail certification")
    bound = pk_bound_constant(profile, k) / N**k
    return {
        "k": k,
        "N": N,
        "beta": [xi.real * math.sqrt(N), xi.imag * math.sqrt(N)],
        "p_exact": p_exact,
        "bound": bound,
        "slack": slack,
        "tail_x": profile.x,
        "tail_c_max": profile.c_max,
        "pass": p_exact <= bound * (1.0 + slack),
    }
