"""Run configuration: every tolerance and default in one frozen record.

Values can be overridden from a JSON config file and again from CLI flags.
The JSON keys for the receiver knobs are the externally documented ones
("Delta", "deg_tol", "beta_cap_factor"); everything else uses the field name.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path


@dataclass(frozen=True)
class RunConfig:
    # Fock-space truncation
    cutoff: int = 24
    pad_cutoff: int = 64          # enlarged cutoff for displaced-signal diagnostics
    trunc_budget: float = 1e-10   # abort if ingestion discards more norm than this
    ortho_tol: float = 1e-12

    # operators
    kraus_k_max: int = 4
    kraus_tol: float = 1e-9
    pk_slack: float = 0.05

    # receiver
    delta_exp: float = 1.0 / 3.0      # "Delta": perturbation delta = N**(-Delta)
    deg_rel_tol: float = 1e-6         # "deg_tol": relative degeneracy threshold
    deg_abs_tol: float = 1e-14
    beta_cap_factor: float = 4.0
    cap_slack: float = 1.0            # allowed |beta|^2 excess, divided by N
    refine_tol: float = 1e-9
    refine_steps: bool = False        # numerically refine beta_i at every step
    final_refine_rounds: int = 12
    tail_x_max: float = 50.0          # finite-support sentinel for tail certificates
    tail_support_eps: float = 1e-26   # |amp|^2 below this counts as structural zero

    # engine
    n_exact_max: int = 16
    prune_min: float = 1e-12
    failure_policy: str = "error"     # "error" (weight 1) or "coin" (weight 1/2)
    mc_cache_nodes: int = 200_000
    enforce_beta_cap: bool = True

    # analysis
    zero_floor: float = 1e-10
    slope_tol_generic: float = 0.3
    slope_tol_degenerate: float = 0.15
    fit_sigma_floor: float = 0.01     # model-error floor on log-space sigmas
    usable_ci_factor: float = 10.0    # row usable when p_err > factor * CI halfwidth

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    def to_dict(self) -> dict:
        return asdict(self)


# external JSON key -> field name
_JSON_KEYS = {
    "Delta": "delta_exp",
    "deg_tol": "deg_rel_tol",
    "beta_cap_factor": "beta_cap_factor",
}


def load_config(path: str | Path | None, base: RunConfig | None = None) -> RunConfig:
    """Merge a JSON config file over the defaults (or over ``base``)."""
    cfg = base if base is not None else RunConfig()
    if path is None:
        return cfg
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    fields = set(cfg.to_dict())
    updates = {}
    for key, value in raw.items():
        name = _JSON_KEYS.get(key, key)
        if name not in fields:
            raise ValueError(f"unknown config key {key!r}")
        updates[name] = value
    return replace(cfg, **updates)
