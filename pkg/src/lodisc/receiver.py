"""Feedforward planning: conditional-state decomposition, the displacement
choice that keeps the two branches orthogonal, degeneracy detection, and the
perturbed-basis strategy for pairs no displacement can handle.

Displacement conventions: the physically applied per-port amplitude is
xi = beta / sqrt(N) where N is the splitting count passed to the planner.
Functions returning "beta" use that convention; the engine rescales for its
photon-budget bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernel as K
from .fock import FockVector, StatePair, inner_product

_QUAD_DIRS = (1.0 + 0j, -1.0 + 0j, 1j, -1j)


class DegenerateDenominatorError(ValueError):
    """The Eq.-(5)-style denominator vanished: switch to the perturbed basis."""

    def __init__(self, report):
        super().__init__("degenerate pair: projection not reachable by a displacement")
        self.report = report


class BetaCapError(ValueError):
    pass


class TruncationFaultError(RuntimeError):
    pass


@dataclass(frozen=True)
class OrthoDecomposition:
    """Leading orthogonal/non-orthogonal split of a pair after one 1/N tap.

    eta1/nu1 carry the sqrt(N) normalization of the one-photon branch, so the
    branch vector itself is eta1/sqrt(N); eta_r/nu_r are the residuals whose
    branch prefactor is N**-1.5.
    """

    eta0: FockVector
    eta1: FockVector
    nu0: FockVector
    nu1: FockVector
    eta_r: FockVector
    nu_r: FockVector
    N: int


@dataclass(frozen=True)
class DegeneracyReport:
    denominator: float
    numerator_mag: float
    scale: float
    verdict: str  # "generic" | "degenerate"
    zero_over_zero: bool = False


@dataclass(frozen=True)
class PerturbationConfig:
    Delta: float = 1.0 / 3.0

    def delta_for(self, N: int) -> float:
        return float(N) ** (-self.Delta)


@dataclass(frozen=True)
class StepPlan:
    """One planned measurement step of an N-splitting run."""

    index: int
    n_rem: int
    r: float
    xi: complex              # applied displacement on the tapped mode
    beta: complex            # xi * sqrt(N) in the run's splitting convention
    beta_cap: float
    degenerate: bool = False
    source: str = "analytic"

    def cap_margin(self, N: int, cap_slack: float) -> float:
        return self.beta_cap**2 + cap_slack / N - abs(self.beta) ** 2


@dataclass(frozen=True)
class TapPlan:
    """Raw planner output for one tap step (engine-internal convention)."""

    xi: complex
    status: int  # K.GENERIC / K.DEGENERATE / K.ZERO_OVER_ZERO
    den: float
    scale: float
    num_mag: float


def _amps(v) -> np.ndarray:
    return v.amps if isinstance(v, FockVector) else np.asarray(v, dtype=np.complex128)


def plan_tap_displacement(psi, phi, n_rem: int,
                          deg_rel: float = 1e-6, deg_abs: float = 1e-14) -> TapPlan:
    """Kernel-backed one-step plan; accepts FockVectors or raw arrays."""
    xi, status, den, scale, num = K.plan_step(_amps(psi), _amps(phi), n_rem,
                                              deg_rel, deg_abs)
    return TapPlan(xi=xi, status=status, den=den, scale=scale, num_mag=num)


def orthogonal_decomposition(pair: StatePair, N: int) -> OrthoDecomposition:
    """Split both members into the exactly-orthogonal leading parts and the
    one-photon residual of a 1/N tap."""
    if N < 2:
        raise ValueError("decomposition needs N >= 2")
    M = pair.cutoff
    m = np.arange(M + 1, dtype=float)
    s2 = 1.0 - 1.0 / N
    sm = np.power(s2, 0.5 * m)
    u = np.sqrt(np.maximum(1.0 - np.power(s2, m), 0.0))
    sqrt_n = math.sqrt(N)

    def parts(c: np.ndarray):
        lead0 = c * sm
        # exact binomial one-photon branch (times sqrt(N)) and its leading part
        one_exact = np.zeros(M + 1, dtype=np.complex128)
        one_exact[:M] = c[1:] * np.sqrt(m[1:]) * np.power(s2, 0.5 * (m[1:] - 1.0))
        one_lead = np.zeros(M + 1, dtype=np.complex128)
        one_lead[:M] = c[1:] * u[1:] * sqrt_n
        resid = N * (one_exact - one_lead)
        return FockVector(lead0), FockVector(one_lead), FockVector(resid)

    eta0, eta1, eta_r = parts(pair.psi.amps)
    nu0, nu1, nu_r = parts(pair.phi.amps)
    d = OrthoDecomposition(eta0=eta0, eta1=eta1, nu0=nu0, nu1=nu1,
                           eta_r=eta_r, nu_r=nu_r, N=N)
    check = inner_product(eta0, nu0) + inner_product(eta1, nu1) / N
    if abs(check) > 1e-10 + 10.0 * pair.ortho_tol:
        raise AssertionError(f"orthogonality identity violated: {abs(check):.3e}")
    return d


def degeneracy_report(d: OrthoDecomposition,
                      deg_rel: float = 1e-6, deg_abs: float = 1e-14) -> DegeneracyReport:
    A = inner_product(d.eta0, d.nu1)
    B = inner_product(d.eta1, d.nu0)
    C = inner_product(d.eta1, d.nu1)
    den = abs(A) ** 2 - abs(B) ** 2
    num = 2.0 * (A * C.conjugate() - B.conjugate() * C)
    scale = abs(A) ** 2 + abs(B) ** 2
    degenerate = abs(den) < deg_rel * scale + deg_abs
    num_scale = 2.0 * (abs(A) * abs(C) + abs(B) * abs(C))
    zoz = abs(num) <= deg_rel * num_scale + deg_abs
    verdict = "degenerate" if (degenerate and not zoz) else "generic"
    return DegeneracyReport(denominator=den, numerator_mag=abs(num),
                            scale=scale, verdict=verdict,
                            zero_over_zero=degenerate and zoz)


def compute_X(d: OrthoDecomposition,
              deg_rel: float = 1e-6, deg_abs: float = 1e-14) -> complex:
    """The feedforward control parameter X of the decomposition.

    X = 2(<eta0|nu1><nu1|eta1> - <nu0|eta1><eta1|nu1>) / (sqrt(N) dnm) with
    dnm = |<eta0|nu1>|^2 - |<eta1|nu0>|^2, oriented so the working
    displacement is beta/sqrt(N) = -X/2 + O(X^3).  |X| falls as N**-0.5 for
    generic pairs.  Raises on a degenerate denominator; the 0/0 case is
    treated as generic with X = 0.
    """
    rep = degeneracy_report(d, deg_rel, deg_abs)
    if rep.verdict == "degenerate":
        raise DegenerateDenominatorError(rep)
    if rep.zero_over_zero:
        return 0j
    A = inner_product(d.eta0, d.nu1)
    B = inner_product(d.eta1, d.nu0)
    C = inner_product(d.eta1, d.nu1)
    num = 2.0 * (A * C.conjugate() - B.conjugate() * C)
    return num / (math.sqrt(d.N) * (abs(A) ** 2 - abs(B) ** 2))


def choose_beta(X: complex, N: int, cap: float | None = None,
                cap_slack: float = 1.0) -> complex:
    """Analytic displacement from X: beta/sqrt(N) = -X/(1 + sqrt(1+|X|^2)).

    Stable at X = 0 (no division) with the -X/2 small-X limit; the residual
    phase freedom is left to refine_beta.
    """
    xi = -X / (1.0 + math.sqrt(1.0 + abs(X) ** 2))
    beta = xi * math.sqrt(N)
    if cap is not None and abs(beta) ** 2 > cap**2 + cap_slack / N:
        raise BetaCapError(
            f"|beta|^2 = {abs(beta)**2:.4f} exceeds cap^2 = {cap**2:.4f} + {cap_slack}/N")
    return beta


def _step_overlap_objective(psi: np.ndarray, phi: np.ndarray, r: float,
                            xi: complex, tab) -> float:
    """max over k in {0,1} of the normalized conditional overlap after a step."""
    c0p, c1p, p0, p1, _ = K.apply_step(psi, r, xi, tab.sqb, tab.isf)
    c0q, c1q, q0, q1, _ = K.apply_step(phi, r, xi, tab.sqb, tab.isf)
    worst = 0.0
    for cp, cq, np_, nq_ in ((c0p, c0q, p0, q0), (c1p, c1q, p1, q1)):
        if np_ > 1e-300 and nq_ > 1e-300:
            worst = max(worst, abs(np.vdot(cp, cq)) / math.sqrt(np_ * nq_))
    return worst


def _refine_xi(psi: np.ndarray, phi: np.ndarray, r: float, xi0: complex,
               tab, cap_xi: float | None = None,
               max_rounds: int = 40) -> tuple[complex, float, float]:
    """Bounded 2-D pattern search on the per-step overlap objective.

    Candidates outside the |beta| cap region are never evaluated, so the
    search cannot leave it.
    """
    best = xi0
    f_best = _step_overlap_objective(psi, phi, r, xi0, tab)
    f0 = f_best
    h = max(0.25 * abs(xi0), 0.02)
    for _ in range(max_rounds):
        moved = False
        for d in _QUAD_DIRS:
            cand = best + h * d
            if cap_xi is not None and abs(cand) > cap_xi:
                continue
            f = _step_overlap_objective(psi, phi, r, cand, tab)
            if f < f_best - 1e-18:
                best, f_best, moved = cand, f, True
        if not moved:
            h *= 0.5
            if h < 1e-9:
                break
    return best, f_best, f0


def refine_beta(pair: StatePair, r: float, beta0: complex,
                refine_tol: float = 1e-9, cap: float | None = None) -> complex:
    """Numeric polish of beta around the analytic seed.

    Minimizes max(|<E0 psi|E0 phi>|, |<E1 psi|E1 phi>|) over complex beta;
    returns beta0 unless the objective improves by more than refine_tol.
    The tap convention ties beta to the applied displacement via
    xi = beta * sqrt(r).
    """
    tab = K.Tables.for_cutoff(pair.cutoff)
    sr = math.sqrt(r)
    if cap is not None and abs(beta0) > cap * (1.0 + 1e-9):
        raise BetaCapError("refinement seed already outside the |beta| cap region")
    cap_xi = None if cap is None else (cap * sr) * (1.0 + 1e-9) + 1e-12
    xi, f_new, f_old = _refine_xi(pair.psi.amps, pair.phi.amps, r,
                                  beta0 * sr, tab, cap_xi)
    if f_old - f_new <= refine_tol:
        return beta0
    return xi / sr


def perturbed_basis(pair: StatePair, delta: float) -> StatePair:
    """Exact rotation Pi0 = sqrt(1-d) psi - sqrt(d) phi, Pi1 = sqrt(1-d) phi + sqrt(d) psi."""
    if not (0.0 <= delta < 0.5):
        raise ValueError("delta must lie in [0, 1/2)")
    c, s = math.sqrt(1.0 - delta), math.sqrt(delta)
    pi0 = FockVector(c * pair.psi.amps - s * pair.phi.amps)
    pi1 = FockVector(c * pair.phi.amps + s * pair.psi.amps)
    return StatePair(pi0, pi1, pair.ortho_tol)


def _align_seed(a: np.ndarray, b: np.ndarray,
                t_cap: float | None = None) -> complex:
    """Least-squares solution of <1|D|a> = 0 and <0|D|b> = 0 restricted to
    the 0/1-photon amplitudes, clamped into the displacement budget."""
    den = abs(a[0]) ** 2 + abs(b[1]) ** 2
    seed = (b[0].conjugate() * b[1] - a[0].conjugate() * a[1]) / den \
        if den > 1e-300 else 0j
    if t_cap is not None and abs(seed) > t_cap:
        seed *= t_cap / abs(seed)
    return complex(seed)


def _align_final(a: np.ndarray, b: np.ndarray, stepper, rounds: int = 12,
                 t_cap: float | None = None) -> tuple[complex, float]:
    """Displacement aligning the counting basis with (a -> count 0, b -> count 1).

    Seeded by the least-squares 0/1-photon alignment, then pattern-refined on
    the exact objective |<1|D|a>|^2 + |<0|D|b>|^2.  The search never leaves
    the |beta| budget region, so a dead branch (where the objective can only
    fall as |t| grows without bound) stays inside the physical power cap.
    """
    best = _align_seed(a, b, t_cap)
    f_best = stepper.final_align_objective(a, b, best)
    h = max(0.25 * abs(best), 0.02)
    for _ in range(rounds):
        moved = False
        for d in _QUAD_DIRS:
            cand = best + h * d
            if t_cap is not None and abs(cand) > t_cap:
                continue
            f = stepper.final_align_objective(a, b, cand)
            if f < f_best - 1e-18:
                best, f_best, moved = cand, f, True
        if not moved:
            h *= 0.5
            if h < 1e-9:
                break
    return best, f_best


def plan_final_displacement(psi_f: FockVector, phi_f: FockVector, N: int,
                            rounds: int = 12, span_tol: float = 1e-3,
                            t_cap: float | None = None) -> complex:
    """beta_N aligning D^dagger(beta_N/sqrt(N))|0> with psi_f and |1> with phi_f.

    Raises when neither conditional state has meaningful weight in
    span{|0>,|1>}, which signals a truncation or bookkeeping fault upstream.
    """
    a, b = psi_f.amps, phi_f.amps
    wa = (abs(a[0]) ** 2 + abs(a[1]) ** 2) / max(float(np.vdot(a, a).real), 1e-300)
    wb = (abs(b[0]) ** 2 + abs(b[1]) ** 2) / max(float(np.vdot(b, b).real), 1e-300)
    if max(wa, wb) < span_tol:
        raise TruncationFaultError("final conditionals have no 0/1-photon support")
    stepper = K.make_stepper(psi_f.cutoff)
    t, _ = _align_final(a, b, stepper, rounds, t_cap)
    return t * math.sqrt(N)
