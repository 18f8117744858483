"""Seeded Monte Carlo campaigns over the FIPWC environment."""

from __future__ import annotations

import csv
import logging
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .dynamics import PHI, THETA
from .env import EnvConfig, FipwcEnv
from .stochastic import derive_seed

log = logging.getLogger(__name__)

RUN_CSV_HEADER = ["run_index", "seed", "return", "violated", "max_theta_deg", "max_phi_deg"]


@dataclass
class EpisodeResult:
    total_reward: float
    violated: bool
    steps: int
    max_theta_deg: float
    max_phi_deg: float
    theta_within_fraction: float


def run_episode(controller: Callable, env_config: EnvConfig, seed: int, angle_threshold_deg: float = 25.0, record: list | None = None) -> EpisodeResult:
    """Play one episode; ``controller(state) -> force``.

    ``theta_within_fraction`` is the share of steps with |theta| below
    ``angle_threshold_deg``.  If ``record`` is a list, per-step dicts are appended to it.
    """
    env = FipwcEnv(env_config)
    state = env.reset(seed)
    total = 0.0
    max_th = max_ph = 0.0
    within = 0
    limit = math.radians(angle_threshold_deg)
    while True:
        res = env.step(controller(state))
        state = res.next_state
        total += res.reward
        th, ph = abs(state[THETA]), abs(state[PHI])
        # NaN compares False, so a blown-up state never counts as within limits
        max_th = max(max_th, th) if th == th else math.inf
        max_ph = max(max_ph, ph) if ph == ph else math.inf
        within += th < limit
        if record is not None:
            record.append({"t": env.t * env_config.dt, "state": state, "reward": res.reward, **res.info})
        if res.done:
            break
    return EpisodeResult(total, res.info["violated"], env.t, math.degrees(max_th), math.degrees(max_ph), within / env.t)


@dataclass(frozen=True)
class CampaignSpec:
    name: str
    n_runs: int
    master_seed: int
    env_config: EnvConfig = field(default_factory=EnvConfig)
    angle_threshold_deg: float = 25.0

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")

    def run_seed(self, run_index: int) -> int:
        return derive_seed(self.master_seed, run_index)


@dataclass
class CampaignResult:
    name: str
    seeds: list[int]
    results: list[EpisodeResult | None]
    errors: dict[int, str]
    wall_clock: float

    @property
    def returns(self) -> np.ndarray:
        return np.array([r.total_reward for r in self.results if r is not None])

    @property
    def mean(self) -> float:
        return float(np.mean(self.returns))

    @property
    def std(self) -> float | None:
        """Sample standard deviation (n - 1); ``None`` for fewer than two runs."""
        r = self.returns
        return float(np.std(r, ddof=1)) if len(r) > 1 else None

    @property
    def violations(self) -> int:
        return sum(1 for r in self.results if r is not None and r.violated)

    def summary(self) -> dict:
        return {
            "name": self.name,
            "n_runs": len(self.results),
            "n_failed": len(self.errors),
            "mean": self.mean,
            "std": self.std,
            "violations": self.violations,
            "wall_clock_s": self.wall_clock,
        }

    def write_runs_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RUN_CSV_HEADER)
            for i, (seed, r) in enumerate(zip(self.seeds, self.results)):
                if r is None:
                    continue
                w.writerow([i, seed, repr(r.total_reward), int(r.violated), repr(r.max_theta_deg), repr(r.max_phi_deg)])

    def write_summary(self, path) -> None:
        lines = [f"{k} = {'' if v is None else v!r}" for k, v in self.summary().items()]
        lines += [f"error_run_{i} = {msg!r}" for i, msg in sorted(self.errors.items())]
        Path(path).write_text("\n".join(lines) + "\n")


def read_runs_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([float(row["return"]) for row in csv.DictReader(fh)])


def _run_chunk(args):
    controller, spec, indices = args
    out = []
    for i in indices:
        try:
            out.append((i, run_episode(controller, spec.env_config, spec.run_seed(i), spec.angle_threshold_deg), None))
        except Exception:  # noqa: BLE001 - recorded per run, campaign continues
            out.append((i, None, traceback.format_exc(limit=3)))
    return out


def run_campaign(spec: CampaignSpec, controller: Callable, workers: int = 1) -> CampaignResult:
    """Run ``spec.n_runs`` independent episodes.

    Run ``i`` always uses seed ``derive_seed(master_seed, i)``, so results do
    not depend on ``workers``.
    """
    t0 = time.perf_counter()
    indices = list(range(spec.n_runs))
    if workers > 1:
        chunks = [indices[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_chunk, [(controller, spec, c) for c in chunks]))
        rows = [row for part in parts for row in part]
    else:
        rows = _run_chunk((controller, spec, indices))
    rows.sort(key=lambda r: r[0])
    results = [r[1] for r in rows]
    errors = {i: err for i, _, err in rows if err is not None}
    for i, err in errors.items():
        log.warning("run %d failed: %s", i, err.strip().splitlines()[-1])
    return CampaignResult(spec.name, [spec.run_seed(i) for i in indices], results, errors, time.perf_counter() - t0)


def table_cells(base: EnvConfig) -> dict[str, tuple[str, EnvConfig]]:
    """The four controller/disturbance combinations, keyed by cell name."""
    no_dz = replace(base, enable_cart_disturbance=False)
    with_dz = replace(base, enable_cart_disturbance=True)
    return {
        "pd_no_dz": ("pd", no_dz),
        "drl_no_dz": ("drl", no_dz),
        "pd": ("pd", with_dz),
        "drl": ("drl", with_dz),
    }


TABLE_LABELS = {"pd_no_dz": "PD no d_zdot", "drl_no_dz": "DRL no d_zdot", "pd": "PD", "drl": "DRL"}


def format_table(results: dict[str, CampaignResult]) -> str:
    rows = [("Control System", "Average", "Standard Deviation")]
    for key in ("pd_no_dz", "drl_no_dz", "pd", "drl"):
        if key in results:
            r = results[key]
            std = "n/a" if r.std is None else f"{r.std:,.2f}"
            rows.append((TABLE_LABELS[key], f"{r.mean:,.2f}", std))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"
