"""Episode wrapper around the FIPWC model: reset/step, disturbances, reward."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import PHI_DOT, THETA_DOT, Z_DOT, ModelParams, SingularMassMatrixError, rk4_step
from .stochastic import DisturbanceConfig, UncertaintySpec, make_disturbances, sample_params

REWARD_WEIGHTS = (0.1, 0.5, 1.0, 1.0, 1.2, 1.0)


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 0.01
    episode_steps: int = 1000
    force_limit: float = 10.0
    enable_cart_disturbance: bool = True
    enable_angular_disturbance: bool = True
    obs_limit: float = 1e9
    violation_reward: float = -1e7
    reward_weights: tuple[float, ...] = REWARD_WEIGHTS
    control_effort_weight: float = 0.1
    desired_state: tuple[float, ...] = (0.0,) * 6
    nominal: ModelParams = field(default_factory=ModelParams)
    uncertainty: UncertaintySpec = field(default_factory=UncertaintySpec)
    disturbance: DisturbanceConfig = field(default_factory=DisturbanceConfig)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.episode_steps < 1:
            raise ValueError("episode_steps must be >= 1")
        if not self.force_limit > 0:
            raise ValueError("force_limit must be positive")
        if len(self.reward_weights) != 6 or len(self.desired_state) != 6:
            raise ValueError("reward_weights and desired_state must have 6 entries")
        if min(self.reward_weights) < 0 or self.control_effort_weight < 0:
            raise ValueError("reward weights must be non-negative")


def reward(state, force: float, config: EnvConfig) -> float:
    """``-dt * (sum_i w_i (x_i - x_des_i)^2 + c F^2)``."""
    err = np.asarray(state, dtype=float) - np.asarray(config.desired_state)
    w = np.asarray(config.reward_weights)
    return -config.dt * (float(np.dot(w, err * err)) + config.control_effort_weight * force * force)


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: float
    done: bool
    info: dict


class EpisodeFinishedError(RuntimeError):
    pass


class FipwcEnv:
    """Cart-pendulum environment.

    ``step`` clamps the force, advances one RK4 step, then adds the current
    OU disturbance values directly to ``z_dot``, ``phi_dot`` and ``theta_dot``.
    The reward is evaluated on the disturbed state.
    """

    def __init__(self, config: EnvConfig | None = None):
        self.config = config or EnvConfig()
        self.state = np.zeros(6)
        self.params = self.config.nominal
        self.disturbances = None
        self.t = 0
        self.done = True

    def reset(self, seed: int) -> np.ndarray:
        cfg = self.config
        params_ss, dist_ss = np.random.SeedSequence(int(seed)).spawn(2)
        self.params = sample_params(cfg.nominal, cfg.uncertainty, params_ss)
        self.disturbances = make_disturbances(cfg.disturbance, dist_ss)
        self.state = np.zeros(6)
        self.t = 0
        self.done = False
        return self.state.copy()

    def step(self, action: float) -> StepResult:
        if self.done:
            raise EpisodeFinishedError("episode is finished; call reset()")
        cfg = self.config
        force = float(np.clip(action, -cfg.force_limit, cfg.force_limit))
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                state = rk4_step(self.state, force, self.params, cfg.dt)
            except SingularMassMatrixError:
                state = np.full(6, np.nan)

        d_z, d_phi, d_theta = (p.step(cfg.dt) for p in self.disturbances)
        if not cfg.enable_cart_disturbance:
            d_z = 0.0
        if not cfg.enable_angular_disturbance:
            d_phi = d_theta = 0.0
        state[Z_DOT] += d_z
        state[PHI_DOT] += d_phi
        state[THETA_DOT] += d_theta
        self.t += 1

        violated = not bool(np.all(np.abs(state) <= cfg.obs_limit))
        if violated:
            r = cfg.violation_reward
        else:
            r = reward(state, force, cfg)
        self.state = state
        self.done = violated or self.t >= cfg.episode_steps
        info = {"force": force, "disturbance": (d_z, d_phi, d_theta), "violated": violated}
        return StepResult(state.copy(), r, self.done, info)
