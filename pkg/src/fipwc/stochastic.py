"""Ornstein-Uhlenbeck disturbances and folded-normal parameter uncertainty."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ModelParams

UNCERTAIN_PARAMS = ("k1", "k2", "b1", "b2", "b3")


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator; ``seed`` may be an int, a tuple of ints or a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    elif isinstance(seed, (tuple, list)):
        ss = np.random.SeedSequence([int(s) for s in seed])
    else:
        ss = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(master_seed: int, *path: int) -> int:
    """Stable 63-bit child seed bound to ``(master_seed, *path)``."""
    ss = np.random.SeedSequence([int(master_seed), *[int(p) for p in path]])
    return int(ss.generate_state(1, dtype=np.uint64)[0]) & ((1 << 63) - 1)


@dataclass(frozen=True)
class OuParams:
    kappa: float
    mu: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.kappa < 0 or self.sigma < 0:
            raise ValueError(f"kappa and sigma must be non-negative: {self}")

    @property
    def stationary_variance(self) -> float:
        return self.sigma**2 / (2 * self.kappa) if self.kappa > 0 else math.inf


class OuProcess:
    """Scalar OU process ``dy = kappa (mu - y) dt + sigma dW``, Euler-Maruyama stepped."""

    def __init__(self, params: OuParams, seed=0, y0: float = 0.0):
        self.params = params
        self.rng = make_rng(seed)
        self.value = float(y0)

    def step(self, dt: float) -> float:
        if not dt > 0:
            raise ValueError("dt must be positive")
        p = self.params
        noise = self.rng.standard_normal()
        self.value += p.kappa * (p.mu - self.value) * dt + p.sigma * math.sqrt(dt) * noise
        return self.value

    def path(self, n: int, dt: float) -> np.ndarray:
        """Advance ``n`` steps and return the visited values (vectorised draws, same stream)."""
        p = self.params
        noise = self.rng.standard_normal(n)
        out = np.empty(n)
        y = self.value
        a = 1.0 - p.kappa * dt
        drift = p.kappa * p.mu * dt
        scale = p.sigma * math.sqrt(dt)
        for i in range(n):
            y = a * y + drift + scale * noise[i]
            out[i] = y
        self.value = float(y)
        return out


def ou_step(process: OuProcess, dt: float) -> float:
    return process.step(dt)


@dataclass(frozen=True)
class DisturbanceConfig:
    """OU parameters for the three rate disturbances.

    Angular sigma is given in deg/s and converted to rad/s.
    """

    kappa_z: float = 0.01
    mu_z: float = 0.0
    sigma_z: float = 0.1
    kappa_ang: float = 10.0
    mu_ang_deg: float = 0.0
    sigma_ang_deg: float = 1.0

    def process_params(self) -> tuple[OuParams, OuParams, OuParams]:
        ang = OuParams(self.kappa_ang, math.radians(self.mu_ang_deg), math.radians(self.sigma_ang_deg))
        return OuParams(self.kappa_z, self.mu_z, self.sigma_z), ang, ang


def make_disturbances(config: DisturbanceConfig, seed) -> tuple[OuProcess, OuProcess, OuProcess]:
    """Independent processes for (z_dot, phi_dot, theta_dot), each starting at 0."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    children = ss.spawn(3)
    return tuple(OuProcess(p, s) for p, s in zip(config.process_params(), children))


@dataclass(frozen=True)
class UncertaintySpec:
    relative_spread: float = 0.5
    targets: tuple[str, ...] = field(default=UNCERTAIN_PARAMS)

    def __post_init__(self):
        if self.relative_spread < 0:
            raise ValueError("relative_spread must be non-negative")
        bad = set(self.targets) - set(UNCERTAIN_PARAMS)
        if bad:
            raise ValueError(f"unsupported uncertain parameters: {sorted(bad)}")


def sample_params(nominal: ModelParams, spec: UncertaintySpec, seed) -> ModelParams:
    """Draw each target as ``|N(nominal, (spread * nominal)^2)|``."""
    if spec.relative_spread == 0:
        return nominal
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    changes = {}
    for name in spec.targets:
        mean = getattr(nominal, name)
        value = abs(rng.normal(mean, spec.relative_spread * mean))
        # |N| is a.s. positive; guard the measure-zero case so the contract holds
        changes[name] = value if value > 0 else np.nextafter(0.0, 1.0)
    return nominal.with_(**changes)


def folded_normal_mean(mu: float, sigma: float) -> float:
    return sigma * math.sqrt(2 / math.pi) * math.exp(-(mu**2) / (2 * sigma**2)) + mu * math.erf(mu / math.sqrt(2 * sigma**2))
