"""Truncated single-mode Fock-space vectors and their elementary algebra.

A state is a complex amplitude per photon number m = 0..M.  All values here
are immutable: the backing numpy arrays are marked read-only, so vectors can
be shared between branches and threads freely.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class CutoffMismatchError(ValueError):
    pass


class ZeroVectorError(ValueError):
    pass


class ParallelInputsError(ValueError):
    pass


class TruncationBudgetError(ValueError):
    pass


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.complex128)
    if out.ndim != 1:
        raise ValueError("amplitudes must be one-dimensional")
    if not np.all(np.isfinite(out.view(np.float64))):
        raise ValueError("amplitudes must be finite")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FockVector:
    """Amplitudes over number states |0..M>; not necessarily normalized."""

    amps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "amps", _freeze(self.amps))

    @property
    def cutoff(self) -> int:
        return len(self.amps) - 1

    @staticmethod
    def basis(m: int, cutoff: int) -> "FockVector":
        amps = np.zeros(cutoff + 1, dtype=np.complex128)
        amps[m] = 1.0
        return FockVector(amps)

    @staticmethod
    def from_amplitudes(values, cutoff: int) -> "FockVector":
        """Zero-pad or reject: values beyond the cutoff are the caller's problem."""
        amps = np.zeros(cutoff + 1, dtype=np.complex128)
        values = np.asarray(values, dtype=np.complex128)
        n = min(len(values), cutoff + 1)
        amps[:n] = values[:n]
        return FockVector(amps)


@dataclass(frozen=True)
class StatePair:
    """An orthonormal signal pair (psi, phi); checked at construction."""

    psi: FockVector
    phi: FockVector
    ortho_tol: float = 1e-12

    def __post_init__(self):
        _check_cutoffs(self.psi, self.phi)
        for v in (self.psi, self.phi):
            if abs(norm(v) - 1.0) > self.ortho_tol:
                raise ValueError("state pair members must be unit norm")
        if abs(inner_product(self.psi, self.phi)) > self.ortho_tol:
            raise ValueError("state pair members must be orthogonal")

    @property
    def cutoff(self) -> int:
        return self.psi.cutoff

    def swapped(self) -> "StatePair":
        return StatePair(self.phi, self.psi, self.ortho_tol)


@dataclass(frozen=True)
class TailProfile:
    """Certificate |amps[m]| <= c_max * exp(-m*x/2) on the whole grid."""

    x: float
    c_max: float

    def bound(self, m) -> np.ndarray:
        return self.c_max * np.exp(-0.5 * np.asarray(m, dtype=float) * self.x)


def _check_cutoffs(a: FockVector, b: FockVector):
    if a.cutoff != b.cutoff:
        raise CutoffMismatchError(f"cutoff mismatch: {a.cutoff} vs {b.cutoff}")


def inner_product(a: FockVector, b: FockVector) -> complex:
    """<a|b>, conjugate-linear in the first argument."""
    _check_cutoffs(a, b)
    return complex(np.vdot(a.amps, b.amps))


def norm(a: FockVector) -> float:
    return float(np.linalg.norm(a.amps))


def mean_photon(a: FockVector) -> float:
    w = np.abs(a.amps) ** 2
    total = w.sum()
    if total == 0.0:
        return 0.0
    return float(np.arange(len(w)) @ w / total)


def normalize(a: FockVector) -> FockVector:
    n = norm(a)
    if n == 0.0:
        raise ZeroVectorError("cannot normalize the zero vector")
    return FockVector(a.amps / n)


def make_orthogonal_pair(raw_psi: FockVector, raw_phi: FockVector,
                         ortho_tol: float = 1e-12) -> StatePair:
    """Gram-Schmidt at ingestion: psi kept, phi orthogonalized against it.

    Applied once when a pair enters the simulator; conditional states later
    in a run are deliberately left slightly non-orthogonal.
    """
    _check_cutoffs(raw_psi, raw_phi)
    psi = normalize(raw_psi)
    resid = raw_phi.amps - np.vdot(psi.amps, raw_phi.amps) * psi.amps
    # second projection pass keeps the overlap at rounding level
    resid = resid - np.vdot(psi.amps, resid) * psi.amps
    scale = np.linalg.norm(raw_phi.amps)
    if scale == 0.0 or np.linalg.norm(resid) < 1e-12 * scale:
        raise ParallelInputsError("raw states are (numerically) parallel")
    phi = normalize(FockVector(resid))
    return StatePair(psi, phi, ortho_tol)


def tail_envelope_points(mags: np.ndarray, support_eps: float = 1e-26):
    """Support points of the upper decay envelope past the amplitude peak.

    A grid point belongs to the envelope when its magnitude dominates every
    later one (a right-to-left running maximum), which steps over the
    interference dips displaced states produce.
    """
    peak = mags.max()
    support = np.flatnonzero(mags**2 > support_eps * peak**2)
    m_hat = int(support[np.argmax(mags[support])])
    tail = support[support >= m_hat]
    points = []
    best = -1.0
    for m in tail[::-1]:
        if mags[m] > best:
            points.append(int(m))
            best = mags[m]
    return points[::-1]


def certify_tail(a: FockVector, x_max: float = 50.0,
                 support_eps: float = 1e-26) -> TailProfile:
    """Binding exponential decay rate of the amplitude envelope.

    x is the slowest log-ratio between consecutive points of the upper
    envelope past the peak: the largest rate at which a pointwise-valid
    certificate can still decay, with c_max the smallest prefactor for that
    rate.  Fewer than three nonzero amplitudes counts as finite support and
    gets the x = x_max sentinel.  x = 0.0 means the grid does not certify
    exponential decay (warn-and-proceed territory for the receiver).
    """
    mags = np.abs(a.amps)
    peak = mags.max()
    if peak == 0.0:
        raise ZeroVectorError("cannot certify the zero vector")
    support = np.flatnonzero(mags**2 > support_eps * peak**2)
    if len(support) < 3:
        c_max = float(np.max(mags[support] * np.exp(0.5 * support * x_max)))
        return TailProfile(x=x_max, c_max=c_max)
    pts = tail_envelope_points(mags, support_eps)
    if len(pts) < 2:
        return TailProfile(x=0.0, c_max=float(peak))
    pts_arr = np.array(pts)
    logs = np.log(mags[pts_arr])
    rates = -2.0 * np.diff(logs) / np.diff(pts_arr)
    x = float(min(rates.min(), x_max))
    if x <= 0.0:
        return TailProfile(x=0.0, c_max=float(peak))
    c_max = float(np.max(mags[support] * np.exp(0.5 * support * x)))
    return TailProfile(x=x, c_max=c_max)


# ----------------------------------------------------------------------
# pair construction helpers and the ingestion file format
# ----------------------------------------------------------------------

def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    m = np.arange(cutoff + 1)
    logf = np.array([math.lgamma(k + 1) for k in m])
    mag = np.exp(-0.5 * abs(alpha) ** 2 + m * np.log(abs(alpha)) - 0.5 * logf) \
        if alpha != 0 else np.where(m == 0, 1.0, 0.0)
    phase = np.exp(1j * np.angle(alpha) * m) if alpha != 0 else np.ones_like(m, dtype=complex)
    return mag * phase


def cat_pair(alpha: float, cutoff: int, ortho_tol: float = 1e-12) -> StatePair:
    """Even/odd coherent superpositions: a generic orthogonal test pair."""
    c = coherent_amplitudes(alpha, cutoff)
    even = c.copy()
    even[1::2] = 0.0
    odd = c.copy()
    odd[0::2] = 0.0
    return make_orthogonal_pair(FockVector(even), FockVector(odd), ortho_tol)


def basis_pair(cutoff: int, ortho_tol: float = 1e-12) -> StatePair:
    return StatePair(FockVector.basis(0, cutoff), FockVector.basis(1, cutoff), ortho_tol)


def qubit_plus_minus_pair(cutoff: int, ortho_tol: float = 1e-12) -> StatePair:
    """(|0>+|1>)/sqrt2 vs (|0>-|1>)/sqrt2: the degenerate showcase pair."""
    s = 1.0 / math.sqrt(2.0)
    plus = FockVector.from_amplitudes([s, s], cutoff)
    minus = FockVector.from_amplitudes([s, -s], cutoff)
    return StatePair(plus, minus, ortho_tol)


def pair_to_json(pair: StatePair) -> str:
    def enc(v: FockVector):
        return [[float(z.real), float(z.imag)] for z in v.amps]
    return json.dumps({"cutoff": pair.cutoff, "psi": enc(pair.psi), "phi": enc(pair.phi)})


def load_pair(path: str | Path, cutoff: int | None = None,
              trunc_budget: float = 1e-10,
              ortho_tol: float = 1e-12) -> tuple[StatePair, float]:
    """Read {"cutoff": int, "psi": [[re,im],...], "phi": ...} and Gram-Schmidt it.

    Amplitudes beyond the list length are zero.  Returns the pair and the
    norm fraction discarded by re-truncating to `cutoff`; aborts when that
    exceeds the truncation budget.
    """
    raw = json.loads(Path(path).read_text())
    try:
        file_cutoff = int(raw["cutoff"])
        vecs = {}
        for name in ("psi", "phi"):
            z = np.array([complex(re, im) for re, im in raw[name]], dtype=np.complex128)
            if len(z) > file_cutoff + 1:
                raise ValueError(f"{name} longer than cutoff+1")
            vecs[name] = z
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"invalid pair file {path}: {exc}") from None
    cutoff = file_cutoff if cutoff is None else cutoff
    discarded = 0.0
    for name, z in vecs.items():
        total = float(np.sum(np.abs(z) ** 2))
        kept = float(np.sum(np.abs(z[: cutoff + 1]) ** 2))
        if total > 0:
            discarded = max(discarded, (total - kept) / total)
    if discarded > trunc_budget:
        raise TruncationBudgetError(
            f"ingestion discards {discarded:.3e} of norm, over budget {trunc_budget:.3e}")
    pair = make_orthogonal_pair(
        FockVector.from_amplitudes(vecs["psi"], cutoff),
        FockVector.from_amplitudes(vecs["phi"], cutoff),
        ortho_tol,
    )
    return pair, discarded
