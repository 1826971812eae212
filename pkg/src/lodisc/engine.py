"""Full N-step measurement runs.

Exact mode enumerates the detection tree depth-first with feedforward
replanning on every branch, pruning branches below a probability floor into
an explicit error interval.  Monte-Carlo mode samples trajectories from the
exact per-step conditionals with per-sample deterministic seeding, caching
node expansions by detection-record prefix (the plan is a function of the
record only, so trajectories share work).

A run keeps two conditional pairs per branch: the actual pair under the two
hypotheses, and the planner's pair.  They coincide except in the degenerate
strategy, where the planner works on the perturbed basis while probabilities
come from the true inputs.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernel as K
from .config import RunConfig
from .fock import FockVector, StatePair, certify_tail, mean_photon
from .receiver import (BetaCapError, DegeneracyReport, StepPlan, _align_final,
                       _align_seed, _refine_xi, perturbed_basis)

PSI = "psi"
PHI = "phi"
FAILURE = "failure"

_Z = 1.959963984540054  # two-sided 95%


class ExactSizeError(ValueError):
    pass


class PrunedMassError(ValueError):
    pass


class ImpossibleRecordError(ValueError):
    pass


def decide(final_k: int, policy: str = "error") -> str:
    """Decision map of the last counter: 0 -> psi, 1 -> phi, else failure.

    The failure policy only affects how the estimator weights the failure
    outcome (full error weight or a fair coin), not the label.
    """
    if final_k < 0:
        raise ValueError("count must be >= 0")
    if final_k == 0:
        return PSI
    if final_k == 1:
        return PHI
    return FAILURE


def failure_error_weight(policy: str) -> float:
    if policy == "error":
        return 1.0
    if policy == "coin":
        return 0.5
    raise ValueError(f"unknown failure policy {policy!r}")


@dataclass(frozen=True)
class BranchNode:
    """One node of the outcome tree: unnormalized conditionals plus the
    cumulative record probability under each hypothesis."""

    psi: FockVector
    phi: FockVector
    prob_psi: float
    prob_phi: float
    record: tuple = ()

    @staticmethod
    def root(pair: StatePair) -> "BranchNode":
        return BranchNode(pair.psi, pair.phi, 1.0, 1.0, ())


@dataclass(frozen=True)
class Trajectory:
    record: tuple
    betas: tuple
    hypothesis: str
    decision: str
    weight: float = 1.0

    def one_clicks(self) -> int:
        return sum(1 for k in self.record if k == 1)

    def to_json(self) -> str:
        return json.dumps({
            "record": list(self.record),
            "betas": [[b.real, b.imag] for b in self.betas],
            "hypothesis": self.hypothesis,
            "decision": self.decision,
        })


@dataclass(frozen=True)
class ErrorEstimate:
    p_err: float
    ci_low: float
    ci_high: float
    p_fail: float
    method: str
    pruned_mass: float = 0.0
    samples: int = 0
    seed: int | None = None
    trunc_discarded: float = 0.0
    beta_margin_min: float = math.inf
    tolerances: dict = field(default_factory=dict)

    def to_json(self) -> str:
        out = {k: getattr(self, k) for k in
               ("p_err", "ci_low", "ci_high", "p_fail", "method", "pruned_mass",
                "samples", "seed", "trunc_discarded")}
        out["beta_margin_min"] = (None if math.isinf(self.beta_margin_min)
                                  else self.beta_margin_min)
        out["tolerances"] = self.tolerances
        return json.dumps(out, sort_keys=True)


def run_step(node: BranchNode, plan: StepPlan, kraus) -> list[BranchNode]:
    """Spec-level step application through an explicit Kraus family.

    Children keep unnormalized conditional vectors; cumulative probabilities
    are multiplied by ||M_k v||^2 / ||v||^2 per hypothesis.  The fast engine
    path reproduces exactly these numbers (pinned by tests).
    """
    if len(node.record) + 1 != plan.index:
        raise ValueError("plan index inconsistent with the node record")
    if abs(plan.r - kraus.r) > 1e-12 or abs(plan.xi - kraus.beta) > 1e-12:
        raise ValueError("Kraus family does not match the step plan")
    np_2 = float(np.vdot(node.psi.amps, node.psi.amps).real)
    nq_2 = float(np.vdot(node.phi.amps, node.phi.amps).real)
    children = []
    for k in range(kraus.k_max + 1):
        mk = kraus.op(k).entries
        cp = mk @ node.psi.amps
        cq = mk @ node.phi.amps
        wp = float(np.vdot(cp, cp).real) / np_2 if np_2 > 0 else 0.0
        wq = float(np.vdot(cq, cq).real) / nq_2 if nq_2 > 0 else 0.0
        children.append(BranchNode(FockVector(cp), FockVector(cq),
                                   node.prob_psi * wp, node.prob_phi * wq,
                                   node.record + (k,)))
    return children


# ----------------------------------------------------------------------
# fast feedforward machinery
# ----------------------------------------------------------------------

class _States:
    """Normalized conditional arrays for one record prefix.

    planning rows alias the actual rows unless the degenerate strategy
    separated them.
    """

    __slots__ = ("psi", "phi", "ppsi", "pphi")

    def __init__(self, psi, phi, ppsi=None, pphi=None):
        self.psi = psi
        self.phi = phi
        self.ppsi = psi if ppsi is None else ppsi
        self.pphi = phi if pphi is None else pphi

    @property
    def split_planning(self) -> bool:
        return self.ppsi is not self.psi


class _StepData:
    __slots__ = ("xi", "status", "p_psi", "p_phi", "children", "source")

    def __init__(self, xi, status, p_psi, p_phi, children, source):
        self.xi = xi
        self.status = status
        self.p_psi = p_psi
        self.p_phi = p_phi
        self.children = children
        self.source = source


class _FinalData:
    __slots__ = ("xi", "swap", "p_psi", "p_phi")

    def __init__(self, xi, swap, p_psi, p_phi):
        self.xi = xi
        self.swap = swap
        self.p_psi = p_psi
        self.p_phi = p_phi


class _Trie:
    """Detection-record trie: one node per visited prefix.

    data holds the cached _StepData/_FinalData for the step taken FROM this
    prefix; kids maps the sampled count to the child prefix node.
    """

    __slots__ = ("data", "kids")

    def __init__(self):
        self.data = None
        self.kids = {}


class Engine:
    """One (pair, N) receiver run: planning, caching, and branch evolution."""

    def __init__(self, pair: StatePair, N: int, cfg: RunConfig | None = None,
                 trunc_discarded: float = 0.0):
        if N < 1:
            raise ValueError("N must be >= 1")
        self.cfg = cfg or RunConfig()
        self.pair = pair
        self.N = N
        self.trunc_discarded = trunc_discarded
        self.tab = K.Tables.for_cutoff(pair.cutoff)
        self.stepper = K.make_stepper(pair.cutoff)
        self.cap = self.cfg.beta_cap_factor * max(
            math.sqrt(mean_photon(pair.psi)), math.sqrt(mean_photon(pair.phi)))
        self.beta_margin_min = math.inf
        self.delta = 0.0
        self.degeneracy: DegeneracyReport | None = None
        for name, state in (("psi", pair.psi), ("phi", pair.phi)):
            prof = certify_tail(state, self.cfg.tail_x_max,
                                self.cfg.tail_support_eps)
            if prof.x <= 0.0:
                # the analysis assumes exponentially decaying inputs; run
                # anyway but flag the violation
                warnings.warn(f"input {name} failed exponential-tail "
                              "certification; scaling guarantees may not apply",
                              RuntimeWarning, stacklevel=3)

        planning = pair
        if N >= 2:
            _, status, den, scale, num = K.plan_step(
                pair.psi.amps, pair.phi.amps, N,
                self.cfg.deg_rel_tol, self.cfg.deg_abs_tol)
            if status == K.DEGENERATE:
                self.delta = float(N) ** (-self.cfg.delta_exp)
                planning = perturbed_basis(pair, self.delta)
                self.degeneracy = DegeneracyReport(
                    denominator=den, numerator_mag=num, scale=scale,
                    verdict="degenerate")
            elif status == K.ZERO_OVER_ZERO:
                self.degeneracy = DegeneracyReport(
                    denominator=den, numerator_mag=num, scale=scale,
                    verdict="generic", zero_over_zero=True)
        self.degenerate = self.delta > 0.0
        if self.degenerate:
            self.root = _States(pair.psi.amps, pair.phi.amps,
                                planning.psi.amps, planning.phi.amps)
        else:
            self.root = _States(pair.psi.amps, pair.phi.amps)
        self._trie = _Trie()
        self._trie_nodes = 1

    # -- step expansion -------------------------------------------------

    def _note_beta(self, xi: complex):
        margin = self.cap**2 + self.cfg.cap_slack / self.N - abs(xi) ** 2 * self.N
        if margin < self.beta_margin_min:
            self.beta_margin_min = margin
        if margin < -1e-9 and self.cfg.enforce_beta_cap:
            raise BetaCapError(
                f"|beta|^2 = {abs(xi)**2 * self.N:.4f} over cap^2 = {self.cap**2:.4f}")

    def _xi_cap(self) -> float:
        return math.sqrt(self.cap**2 + self.cfg.cap_slack / self.N) / math.sqrt(self.N)

    def _expand_tap(self, states: _States, n_rem: int) -> _StepData:
        cfg = self.cfg
        t_cap = self._xi_cap()
        if cfg.refine_steps:
            return self._expand_tap_refined(states, n_rem, t_cap)
        # rare branches asking for more power than the local-oscillator
        # budget get the capped amplitude (step_both clamps internally)
        if states.split_planning:
            xi, status, capped, e0p, e1p, e0q, e1q, _, _ = self.stepper.step_both(
                states.ppsi, states.pphi, n_rem, cfg.deg_rel_tol,
                cfg.deg_abs_tol, t_cap)
            c0p, c1p, c0q, c1q, pp, pq = self.stepper.apply_pair(
                states.psi, states.phi, 1.0 / n_rem, xi)
            kids = (_States(c0p, c0q, e0p, e0q), _States(c1p, c1q, e1p, e1q))
        else:
            xi, status, capped, c0p, c1p, c0q, c1q, pp, pq = self.stepper.step_both(
                states.psi, states.phi, n_rem, cfg.deg_rel_tol,
                cfg.deg_abs_tol, t_cap)
            kids = (_States(c0p, c0q), _States(c1p, c1q))
        self._note_beta(xi)
        return _StepData(xi, status, pp, pq, kids,
                         "analytic-capped" if capped else "analytic")

    def _expand_tap_refined(self, states: _States, n_rem: int,
                            t_cap: float) -> _StepData:
        cfg = self.cfg
        tab = self.tab
        xi, status, _, _, _ = K.plan_step(states.ppsi, states.pphi, n_rem,
                                          cfg.deg_rel_tol, cfg.deg_abs_tol)
        if abs(xi) > t_cap:
            xi *= t_cap * (1.0 - 1e-12) / abs(xi)
        if status == K.GENERIC:
            xi, _, _ = _refine_xi(states.ppsi, states.pphi, 1.0 / n_rem, xi,
                                  tab, cap_xi=t_cap)
        self._note_beta(xi)
        r = 1.0 / n_rem
        c0p, c1p, c0q, c1q, pp, pq = self.stepper.apply_pair(states.psi,
                                                             states.phi, r, xi)
        if states.split_planning:
            e0p, e1p, e0q, e1q, _, _ = self.stepper.apply_pair(states.ppsi,
                                                               states.pphi, r, xi)
            kids = (_States(c0p, c0q, e0p, e0q), _States(c1p, c1q, e1p, e1q))
        else:
            kids = (_States(c0p, c0q), _States(c1p, c1q))
        return _StepData(xi, status, pp, pq, kids, "refined")

    def _expand_final(self, states: _States) -> _FinalData:
        rounds = self.cfg.final_refine_rounds
        t_cap = self._xi_cap()
        # orientation (which hypothesis the zero-count outcome claims) is
        # itself feedforward: pick whichever alignment the record supports
        stp = self.stepper
        seed_keep = _align_seed(states.ppsi, states.pphi, t_cap)
        seed_swap = _align_seed(states.pphi, states.ppsi, t_cap)
        f_keep = stp.final_align_objective(states.ppsi, states.pphi, seed_keep)
        f_swap = stp.final_align_objective(states.pphi, states.ppsi, seed_swap)
        t_keep, t_swap = seed_keep, seed_swap
        if f_swap < f_keep:
            t_swap, f_swap = _align_final(states.pphi, states.ppsi, stp,
                                          rounds, t_cap)
            if f_keep < 10.0 * f_swap:
                t_keep, f_keep = _align_final(states.ppsi, states.pphi,
                                              stp, rounds, t_cap)
        else:
            t_keep, f_keep = _align_final(states.ppsi, states.pphi, stp,
                                          rounds, t_cap)
            if f_swap < 10.0 * f_keep:
                t_swap, f_swap = _align_final(states.pphi, states.ppsi,
                                              stp, rounds, t_cap)
        swap = f_swap < f_keep
        xi = t_swap if swap else t_keep
        self._note_beta(xi)
        a0p, a1p, n2p = stp.final_amps(states.psi, xi)
        a0q, a1q, n2q = stp.final_amps(states.phi, xi)
        p_psi = (abs(a0p) ** 2, abs(a1p) ** 2,
                 max(n2p - abs(a0p) ** 2 - abs(a1p) ** 2, 0.0))
        p_phi = (abs(a0q) ** 2, abs(a1q) ** 2,
                 max(n2q - abs(a0q) ** 2 - abs(a1q) ** 2, 0.0))
        return _FinalData(xi, swap, p_psi, p_phi)

    def _child(self, node: _Trie | None, k: int) -> _Trie | None:
        """Descend the record trie, growing it until the node budget is hit."""
        if node is None:
            return None
        kid = node.kids.get(k)
        if kid is None and self._trie_nodes < self.cfg.mc_cache_nodes:
            kid = _Trie()
            node.kids[k] = kid
            self._trie_nodes += 1
        return kid

    def _map_final(self, k: int, swap: bool) -> str:
        base = decide(k)
        if base == FAILURE or not swap:
            return base
        return PHI if base == PSI else PSI

    # -- Monte Carlo ----------------------------------------------------

    def sample_one(self, hypothesis: str, rng) -> Trajectory:
        states = self.root
        node: _Trie | None = self._trie
        record: list[int] = []
        xis: list[complex] = []
        sqrt_n = math.sqrt(self.N)
        use_psi = hypothesis == PSI
        for i in range(1, self.N):
            if node is not None and node.data is not None:
                data = node.data
            else:
                data = self._expand_tap(states, self.N - i + 1)
                if node is not None:
                    node.data = data
            probs = data.p_psi if use_psi else data.p_phi
            u = rng.random()
            if u < probs[0]:
                k = 0
            elif u < probs[0] + probs[1]:
                k = 1
            else:
                k = 2  # lumped >= 2 count: trajectory is already a failure
            record.append(k)
            xis.append(data.xi)
            if k >= 2:
                return Trajectory(tuple(record),
                                  tuple(x * sqrt_n for x in xis),
                                  hypothesis, FAILURE)
            states = data.children[k]
            node = self._child(node, k)
        if node is not None and node.data is not None:
            fdata = node.data
        else:
            fdata = self._expand_final(states)
            if node is not None:
                node.data = fdata
        probs = fdata.p_psi if use_psi else fdata.p_phi
        u = rng.random()
        if u < probs[0]:
            k = 0
        elif u < probs[0] + probs[1]:
            k = 1
        else:
            k = 2
        record.append(k)
        xis.append(fdata.xi)
        decision = self._map_final(k, fdata.swap)
        return Trajectory(tuple(record), tuple(x * sqrt_n for x in xis),
                          hypothesis, decision)

    # -- exact enumeration ----------------------------------------------

    def exact(self) -> ErrorEstimate:
        cfg = self.cfg
        if self.N > cfg.n_exact_max:
            raise ExactSizeError(
                f"N = {self.N} exceeds n_exact_max = {cfg.n_exact_max}")
        w_fail = failure_error_weight(cfg.failure_policy)
        err = 0.0
        fail = 0.0
        pruned = 0.0
        stack = [(self.root, 1.0, 1.0, 0)]
        while stack:
            states, pp, pq, i = stack.pop()
            if max(pp, pq) < cfg.prune_min:
                pruned += 0.5 * (pp + pq)
                continue
            if i == self.N - 1:
                fd = self._expand_final(states)
                fail += 0.5 * (pp * fd.p_psi[2] + pq * fd.p_phi[2])
                if fd.swap:
                    err += 0.5 * (pp * fd.p_psi[0] + pq * fd.p_phi[1])
                else:
                    err += 0.5 * (pp * fd.p_psi[1] + pq * fd.p_phi[0])
                continue
            data = self._expand_tap(states, self.N - i)
            fail += 0.5 * (pp * data.p_psi[2] + pq * data.p_phi[2])
            for k in (0, 1):
                stack.append((data.children[k], pp * data.p_psi[k],
                              pq * data.p_phi[k], i + 1))
        p_err = err + w_fail * fail
        if pruned > 0.05:
            raise PrunedMassError(f"pruned mass {pruned:.3e} dominates the estimate")
        return ErrorEstimate(
            p_err=p_err,
            ci_low=max(p_err - pruned, 0.0),
            ci_high=min(p_err + pruned, 1.0),
            p_fail=fail,
            method="exact",
            pruned_mass=pruned,
            trunc_discarded=self.trunc_discarded,
            beta_margin_min=self.beta_margin_min,
            tolerances={"prune_min": cfg.prune_min, "beta_cap": self.cap,
                        "failure_policy": cfg.failure_policy, "delta": self.delta},
        )

    def plan_for(self, record) -> StepPlan:
        """The receiver's plan for the step FOLLOWING the given record."""
        if len(record) >= self.N:
            raise ValueError("record already complete")
        states = self.root
        for idx, k in enumerate(record):
            if k > 1:
                raise ValueError("cannot plan past a failure count")
            data = self._expand_tap(states, self.N - idx)
            states = data.children[k]
        i = len(record) + 1
        if i == self.N:
            fd = self._expand_final(states)
            xi, degenerate, source = fd.xi, False, "analytic"
            r = 1.0
        else:
            sd = self._expand_tap(states, self.N - i + 1)
            xi, source = sd.xi, sd.source
            degenerate = sd.status == K.DEGENERATE
            r = 1.0 / (self.N - i + 1)
        return StepPlan(index=i, n_rem=self.N - i + 1, r=r, xi=xi,
                        beta=xi * math.sqrt(self.N), beta_cap=self.cap,
                        degenerate=degenerate, source=source)

    # -- record replay (oracle) ------------------------------------------

    def replay(self, record) -> list[dict]:
        """Walk one detection record, reporting the per-step plan and the
        conditional probabilities under both hypotheses."""
        states = self.root
        rows = []
        pp = pq = 1.0
        for idx, k in enumerate(record):
            i = idx + 1
            if i > self.N:
                raise ValueError("record longer than N")
            if i == self.N:
                fd = self._expand_final(states)
                data_p, data_q, xi = fd.p_psi, fd.p_phi, fd.xi
                extra = {"swap": fd.swap}
            else:
                sd = self._expand_tap(states, self.N - idx)
                data_p, data_q, xi = sd.p_psi, sd.p_phi, sd.xi
                extra = {"status": sd.status, "source": sd.source}
            k_idx = min(k, 2)
            prob_p = data_p[k_idx]
            prob_q = data_q[k_idx]
            if prob_p <= 0.0 and prob_q <= 0.0:
                raise ImpossibleRecordError(
                    f"record impossible under both hypotheses at step {i}")
            row = {"step": i, "n_rem": self.N - idx, "k": k,
                   "xi": [xi.real, xi.imag],
                   "beta": [xi.real * math.sqrt(self.N), xi.imag * math.sqrt(self.N)],
                   "p_psi": prob_p, "p_phi": prob_q}
            row.update(extra)
            if i < self.N and k <= 1:
                child = sd.children[k]
                row["overlap"] = abs(complex(np.vdot(child.psi, child.phi)))
                states = child
            pp *= prob_p
            pq *= prob_q
            row["cum_psi"] = pp
            row["cum_phi"] = pq
            rows.append(row)
            if k >= 2:
                break
        return rows


# ----------------------------------------------------------------------
# public estimators
# ----------------------------------------------------------------------

def wilson_interval(k: float, n: int, z: float = _Z) -> tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4 * n * n)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


def exact_error_probability(pair: StatePair, N: int,
                            cfg: RunConfig | None = None,
                            trunc_discarded: float = 0.0) -> ErrorEstimate:
    return Engine(pair, N, cfg, trunc_discarded).exact()


def mc_error_probability(pair: StatePair, N: int, samples: int, seed: int,
                         cfg: RunConfig | None = None,
                         trunc_discarded: float = 0.0,
                         trajectory_sink=None) -> ErrorEstimate:
    """Seeded Monte-Carlo estimate with a Wilson 95% interval.

    Every sample owns the generator derived from (seed, sample index), so
    the estimate is bit-reproducible and independent of any batching.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    cfg = cfg or RunConfig()
    eng = Engine(pair, N, cfg, trunc_discarded)
    w_fail = failure_error_weight(cfg.failure_policy)
    err = 0.0
    failures = 0
    for s in range(samples):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, s)))
        hyp = PSI if rng.random() < 0.5 else PHI
        traj = eng.sample_one(hyp, rng)
        if traj.decision == FAILURE:
            failures += 1
            err += w_fail
        elif traj.decision != hyp:
            err += 1.0
        if trajectory_sink is not None:
            trajectory_sink(traj)
    p_err = err / samples
    lo, hi = wilson_interval(err, samples)
    return ErrorEstimate(
        p_err=p_err, ci_low=lo, ci_high=hi, p_fail=failures / samples,
        method="monte_carlo", samples=samples, seed=seed,
        trunc_discarded=trunc_discarded,
        beta_margin_min=eng.beta_margin_min,
        tolerances={"beta_cap": eng.cap, "failure_policy": cfg.failure_policy,
                    "delta": eng.delta},
    )


def sample_trajectories(pair: StatePair, N: int, samples: int, seed: int,
                        cfg: RunConfig | None = None) -> list[Trajectory]:
    out: list[Trajectory] = []
    mc_error_probability(pair, N, samples, seed, cfg,
                         trajectory_sink=out.append)
    return out


def photon_budget(plan_lists, N: int | None = None) -> tuple[float, float]:
    """Average photon budget of the displacement ledger.

    For each trajectory's betas (splitting convention beta_i = xi_i sqrt(N)),
    beta0^2 = |sum beta_i / N|^2 and beta_aux^2 = sum |beta_i|^2 / N - beta0^2.
    Returns the means over trajectories.
    """
    b0s = []
    auxs = []
    for plans in plan_lists:
        betas = [p.beta if hasattr(p, "beta") else complex(p) for p in plans]
        n = N if N is not None else len(betas)
        if n == 0:
            raise ValueError("empty plan list")
        b0 = abs(sum(betas) / n) ** 2
        aux = sum(abs(b) ** 2 for b in betas) / n - b0
        if aux < -1e-9:
            raise AssertionError(f"negative auxiliary power {aux:.3e}")
        b0s.append(b0)
        auxs.append(max(aux, 0.0))
    return float(np.mean(b0s)), float(np.mean(auxs))


def write_trajectory_log(path, trajectories):
    """Stream trajectories as JSON-lines: one object per trajectory."""
    with open(path, "w") as fh:
        for t in trajectories:
            fh.write(t.to_json() + "\n")


def one_click_statistics(trajectories) -> dict:
    """Histogram of the one-click count J with an exponential tail fit."""
    if len(trajectories) < 1000:
        raise ValueError("need at least 1000 trajectories")
    counts = np.array([t.one_clicks() for t in trajectories])
    hist = np.bincount(counts)
    total = hist.sum()
    surv = 1.0 - np.cumsum(hist) / total  # P[J > j]
    js = []
    logs = []
    for j in range(len(hist) - 1):
        if surv[j] > 0:
            js.append(j + 1)  # P[J >= j+1]
            logs.append(math.log(surv[j]))
    slope = float("nan")
    if len(js) >= 2:
        slope = float(np.polyfit(js, logs, 1)[0])
    return {"histogram": hist.tolist(), "mean": float(counts.mean()),
            "tail_slope": slope, "n": int(total)}
