"""Sweep orchestration, log-log scaling fits, and the validator grids for
every bound the construction relies on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .config import RunConfig
from .engine import exact_error_probability, mc_error_probability
from .fock import FockVector, StatePair, cat_pair, certify_tail
from .operators import (assoc_laguerre, laguerre_bound, step_kraus,
                        validate_pk_bound)


class InsufficientRowsError(ValueError):
    pass


GENERIC_N_GRID = (8, 16, 32, 64, 128)
# perfect cubes keep delta = N^(-1/3) exact for the degenerate strategy
DEGENERATE_N_GRID = (27, 125, 343, 729)


@dataclass(frozen=True)
class SweepRow:
    N: int
    p_err: float
    ci_low: float
    ci_high: float
    p_fail: float
    mode: str
    samples: int
    trunc_deficit: float
    beta_cap_margin: float

    def halfwidth(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r2: float
    expected_slope: float
    verdict: str                 # "pass" | "fail" | "exact-zero"
    slope_se: float = float("nan")
    n_used: int = 0
    excluded: tuple = ()

    def slope_ci(self, z: float = 1.959963984540054) -> tuple[float, float]:
        return self.slope - z * self.slope_se, self.slope + z * self.slope_se

    def to_json(self) -> str:
        d = {k: getattr(self, k) for k in
             ("slope", "intercept", "r2", "expected_slope", "verdict",
              "slope_se", "n_used")}
        d["excluded"] = list(self.excluded)
        return json.dumps(d, sort_keys=True)


@dataclass(frozen=True)
class SweepSpec:
    n_values: tuple
    samples: int | None = None     # None: max(1e4, 100 N) per point
    mode: str = "auto"             # exact | mc | auto
    seed: int = 1234
    delta_exp: float | None = None
    pair_path: str | None = None   # source file, when driven from disk
    out_path: str | None = None    # None: stdout

    def __post_init__(self):
        ns = tuple(int(n) for n in self.n_values)
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("N values must be strictly increasing")
        object.__setattr__(self, "n_values", ns)
        if self.mode not in ("exact", "mc", "auto"):
            raise ValueError(f"unknown mode {self.mode!r}")


def default_samples(N: int) -> int:
    # 100 expected errors at the p ~ 1/N target keeps the relative CI flat
    return max(10_000, 100 * N)


def run_sweep(pair: StatePair, spec: SweepSpec, cfg: RunConfig | None = None,
              trunc_discarded: float = 0.0) -> tuple[list[SweepRow], ScalingFit]:
    cfg = cfg or RunConfig()
    if spec.delta_exp is not None:
        cfg = cfg.with_overrides(delta_exp=spec.delta_exp)
    rows = []
    degenerate = False
    for N in spec.n_values:
        mode = spec.mode
        if mode == "auto":
            mode = "exact" if N <= cfg.n_exact_max else "mc"
        if mode == "exact":
            est = exact_error_probability(pair, N, cfg, trunc_discarded)
        else:
            samples = spec.samples if spec.samples is not None else default_samples(N)
            est = mc_error_probability(pair, N, samples, spec.seed, cfg,
                                       trunc_discarded)
        degenerate = degenerate or est.tolerances.get("delta", 0.0) > 0.0
        margin = est.beta_margin_min
        rows.append(SweepRow(
            N=N, p_err=est.p_err, ci_low=est.ci_low, ci_high=est.ci_high,
            p_fail=est.p_fail, mode=est.method, samples=est.samples,
            trunc_deficit=trunc_discarded,
            beta_cap_margin=0.0 if math.isinf(margin) else margin))
    if degenerate:
        expected = -cfg.delta_exp
        tol = cfg.slope_tol_degenerate
    else:
        expected = -1.0
        tol = cfg.slope_tol_generic
    try:
        fit = fit_power_law(rows, expected, tol, cfg)
    except InsufficientRowsError:
        # the sweep itself is still valid data: report the rows with an
        # inconclusive fit instead of discarding them
        fit = ScalingFit(slope=float("nan"), intercept=float("nan"),
                         r2=float("nan"), expected_slope=expected,
                         verdict="insufficient",
                         excluded=tuple(r.N for r in rows))
    return rows, fit


def fit_power_law(rows, expected_slope: float, tol: float,
                  cfg: RunConfig | None = None,
                  value=lambda r: r.p_err) -> ScalingFit:
    """Weighted least squares on log p vs log N.

    Rows whose value is CI-dominated (p <= usable_ci_factor * halfwidth) are
    excluded and listed; log-space sigmas are floored at fit_sigma_floor so
    near-exact points cannot erase the rest of the sweep.
    """
    cfg = cfg or RunConfig()
    if all(value(r) <= cfg.zero_floor for r in rows):
        return ScalingFit(slope=float("nan"), intercept=float("nan"),
                          r2=float("nan"), expected_slope=expected_slope,
                          verdict="exact-zero",
                          excluded=tuple(r.N for r in rows))
    usable = []
    excluded = []
    for r in rows:
        p = value(r)
        if p > 0 and p > cfg.usable_ci_factor * r.halfwidth():
            usable.append(r)
        else:
            excluded.append(r.N)
    if len(usable) < 3:
        raise InsufficientRowsError(
            f"only {len(usable)} usable rows (need >= 3)")
    x = np.log([r.N for r in usable])
    y = np.log([value(r) for r in usable])
    sig = np.array([max(r.halfwidth() / (1.959963984540054 * value(r)),
                        cfg.fit_sigma_floor) for r in usable])
    w = 1.0 / sig**2
    xm = float(np.sum(w * x) / np.sum(w))
    ym = float(np.sum(w * y) / np.sum(w))
    sxx = float(np.sum(w * (x - xm) ** 2))
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    se = math.sqrt(1.0 / sxx)
    resid = y - (intercept + slope * x)
    sstot = float(np.sum(w * (y - ym) ** 2))
    r2 = 1.0 - float(np.sum(w * resid**2)) / sstot if sstot > 0 else 1.0
    verdict = "pass" if abs(slope - expected_slope) <= tol else "fail"
    return ScalingFit(slope=slope, intercept=intercept, r2=r2,
                      expected_slope=expected_slope, verdict=verdict,
                      slope_se=se, n_used=len(usable),
                      excluded=tuple(excluded))


# ----------------------------------------------------------------------
# CSV round trip
# ----------------------------------------------------------------------

_CSV_HEADER = ("N,p_err,ci_low,ci_high,p_fail,mode,samples,"
               "trunc_deficit,beta_cap_margin")


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def rows_to_csv(rows, fit: ScalingFit | None = None) -> str:
    lines = [_CSV_HEADER]
    for r in rows:
        lines.append(",".join([
            str(r.N), _fmt(r.p_err), _fmt(r.ci_low), _fmt(r.ci_high),
            _fmt(r.p_fail), r.mode, str(r.samples), _fmt(r.trunc_deficit),
            _fmt(r.beta_cap_margin)]))
    if fit is not None:
        lines.append("# fit: " + fit.to_json())
    return "\n".join(lines) + "\n"


def rows_from_csv(text: str) -> tuple[list[SweepRow], str | None]:
    rows = []
    fit_json = None
    for line in text.splitlines():
        line = line.strip()
        if not line or line == _CSV_HEADER:
            continue
        if line.startswith("# fit:"):
            fit_json = line[len("# fit:"):].strip()
            continue
        if line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise ValueError(f"bad CSV row: {line!r}")
        rows.append(SweepRow(
            N=int(parts[0]), p_err=float(parts[1]), ci_low=float(parts[2]),
            ci_high=float(parts[3]), p_fail=float(parts[4]), mode=parts[5],
            samples=int(parts[6]), trunc_deficit=float(parts[7]),
            beta_cap_margin=float(parts[8])))
    if not rows:
        raise ValueError("CSV holds no data rows")
    return rows, fit_json


def rows_to_json(rows, fit: ScalingFit | None = None) -> str:
    payload = {"rows": [r.__dict__ for r in rows]}
    if fit is not None:
        payload["fit"] = json.loads(fit.to_json())
    return json.dumps(payload, sort_keys=True)


# ----------------------------------------------------------------------
# validator grids
# ----------------------------------------------------------------------

def _laguerre_grid() -> dict:
    violations = 0
    checked = 0
    worst = 0.0
    xs = [0.5 * i for i in range(51)]
    for n in range(41):
        for a in range(11):
            for x in xs:
                val = abs(assoc_laguerre(n, a, x))
                bnd = laguerre_bound(n, a, x)
                checked += 1
                worst = max(worst, val / bnd)
                if val > bnd * (1 + 1e-12):
                    violations += 1
    return {"checked": checked, "violations": violations, "worst_ratio": worst}


def _binomial_grid() -> dict:
    violations = 0
    checked = 0
    ys = np.arange(0.05, 0.951, 0.05)
    for n in range(1, 201):
        nu = np.arange(n)
        lb = np.array([math.lgamma(n + 1) - math.lgamma(v + 1)
                       - math.lgamma(n - v + 1) for v in nu])
        for y in ys:
            lhs = lb + nu * math.log(y) + (n - nu) * math.log1p(-y)
            rhs = -2.0 * n * (y - nu / n) ** 2
            checked += n
            violations += int(np.sum(lhs > rhs + 1e-12))
    return {"checked": checked, "violations": violations}


def _displaced_tail_grid(cfg: RunConfig) -> dict:
    M = cfg.pad_cutoff
    violations = 0
    cases = []
    m = np.arange(M + 1, dtype=float)
    for x0 in (0.5, 1.0, 2.0):
        base = np.exp(-0.5 * m * x0) * np.exp(1j * 0.37 * m)
        base /= np.linalg.norm(base)
        state = FockVector(base)
        for beta in (0.3, 0.7 + 0.2j, 1.0):
            displaced = ops.displace_state(state, beta)
            prof = certify_tail(displaced, cfg.tail_x_max, cfg.tail_support_eps)
            ok = prof.x > 0.0
            amps = np.abs(displaced.amps)
            pointwise = bool(np.all(amps <= prof.bound(np.arange(M + 1)) * (1 + 1e-9)))
            cases.append({"x0": x0, "beta": [complex(beta).real, complex(beta).imag],
                          "x": prof.x, "c_max": prof.c_max,
                          "pass": ok and pointwise})
            if not (ok and pointwise):
                violations += 1
    # coherent sanity: |<n|D(b)|0>|^2 is Poissonian with mean |b|^2
    b = 0.7
    col = ops.displacement_matrix(b, M).entries[:, 0]
    pois = np.exp(-b * b) * np.power(b * b, m) / np.array(
        [math.factorial(int(k)) for k in m])
    coh_err = float(np.max(np.abs(np.abs(col) ** 2 - pois)))
    if coh_err > 1e-12:
        violations += 1
    # zero displacement leaves tails untouched
    ident = ops.displacement_matrix(0.0, 16)
    if float(np.max(np.abs(ident.entries - np.eye(17)))) > 0.0:
        violations += 1
    return {"cases": cases, "coherent_err": coh_err, "violations": violations}


def _pk_grid(cfg: RunConfig) -> dict:
    pair = cat_pair(1.0, cfg.cutoff)
    results = []
    violations = 0
    for N in (32, 64, 256):
        for k in range(4):
            rep = validate_pk_bound(pair, N, beta_cap=1.0, k=k,
                                    slack=cfg.pk_slack,
                                    pad_cutoff=cfg.pad_cutoff)
            results.append(rep)
            if not rep["pass"]:
                violations += 1
    # the per-step bound holds on average over measurement patterns; check
    # it empirically over sampled records (informational, deterministic)
    from .engine import sample_trajectories
    N = 64
    samples = 4000
    trajs = sample_trajectories(pair, N, samples, seed=20240502, cfg=cfg)
    clicks = sum(t.one_clicks() for t in trajs)
    multi = sum(1 for t in trajs if t.decision == "failure")
    p1_bound = next(r["bound"] for r in results if r["N"] == N and r["k"] == 1)
    empirical = {
        "N": N,
        "samples": samples,
        "mean_one_clicks_per_step": clicks / (samples * N),
        "p1_bound": p1_bound,
        "multi_click_fraction": multi / samples,
        "within_bound": clicks / (samples * N) <= p1_bound * (1 + cfg.pk_slack),
    }
    return {"results": results, "empirical": empirical,
            "violations": violations}


def _convolution_grid() -> dict:
    violations = 0
    cases = []
    for x in (0.5, 1.0, 2.0):
        ce = 1.0 - math.exp(-x)  # normalized exponential prefactor
        for cp in (0.25, 0.5, 1.0):
            bound_pref = ce * math.exp(cp * (math.exp(x) - 1.0))
            worst = 0.0
            for n in range(61):
                ptot = sum(cp**mm / math.factorial(mm) * math.exp(-cp)
                           * ce * math.exp(-(n - mm) * x)
                           for mm in range(n + 1))
                bound = bound_pref * math.exp(-n * x)
                worst = max(worst, ptot / bound)
                if ptot > bound * (1 + 1e-12):
                    violations += 1
            cases.append({"x": x, "C_P": cp, "worst_ratio": worst})
    return {"cases": cases, "violations": violations}


def _kraus_grid(cfg: RunConfig) -> dict:
    rng = np.random.default_rng(20240501)
    worst = 0.0
    for _ in range(10):
        r = 0.02 + 0.105 * rng.random()
        beta = (rng.random() * 2 - 1) + 1j * (rng.random() * 2 - 1)
        beta *= 0.5
        fam = step_kraus(r, beta, cfg.kraus_k_max, cfg.cutoff)
        worst = max(worst, fam.completeness_deficit)
    # truncation deficit falls as the signal cutoff or the counted
    # outcome range grows; the above-k_max weight falls as k_max grows
    d_m16 = step_kraus(1.0 / 8, 0.8, 4, 16, count_pad=0).completeness_deficit
    d_m24 = step_kraus(1.0 / 8, 0.8, 4, cfg.cutoff, count_pad=0).completeness_deficit
    d_pad = step_kraus(1.0 / 8, 0.8, 4, cfg.cutoff).completeness_deficit
    mono_m = d_m24 <= d_m16
    mono_pad = d_pad <= d_m24
    mono_k = (step_kraus(1.0 / 8, 0.8, 4, cfg.cutoff).above_kmax_weight
              <= step_kraus(1.0 / 8, 0.8, 2, cfg.cutoff).above_kmax_weight)
    violations = (int(worst > cfg.kraus_tol) + int(not mono_m)
                  + int(not mono_pad) + int(not mono_k))
    return {"worst_deficit": worst, "monotone_cutoff": mono_m,
            "monotone_count_range": mono_pad, "monotone_kmax": mono_k,
            "violations": violations}


def run_validators(cfg: RunConfig | None = None) -> dict:
    """Every bound the construction relies on, as one deterministic grid."""
    cfg = cfg or RunConfig()
    sections = {
        "laguerre_bound": _laguerre_grid(),
        "binomial_inequality": _binomial_grid(),
        "displaced_tail": _displaced_tail_grid(cfg),
        "pk_bound": _pk_grid(cfg),
        "convolution_bound": _convolution_grid(),
        "kraus_completeness": _kraus_grid(cfg),
    }
    violations = sum(s["violations"] for s in sections.values())
    return {"config": cfg.to_dict(), "sections": sections,
            "violations": violations, "pass": violations == 0}
