"""Deep deterministic policy gradient agent built on :mod:`fipwc.nn`."""

from __future__ import annotations

import csv
import json
import logging
import math
import pickle
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .env import EnvConfig, FipwcEnv
from .montecarlo import run_episode
from .nn import AdamState, Mlp, MlpSpec, adam_step, soft_update
from .stochastic import OuParams, OuProcess, derive_seed, make_rng

log = logging.getLogger(__name__)

STATE_DIM = 6
LOG_HEADER = ["step", "episode", "return", "critic_loss", "actor_objective", "epsilon"]
EVAL_HEADER = ["step", "score", "mean_with_cart_disturbance", "mean_without_cart_disturbance"]


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    tau: float = 0.005
    batch_size: int = 512
    warmup_steps: int = 1000
    total_train_steps: int = 30_000
    buffer_capacity: int = 100_000
    actor_hidden: tuple[int, ...] = (64, 64)
    critic_hidden: tuple[int, ...] = (128, 128)
    # exploration noise in normalized action units, stepped once per env step
    noise_kappa: float = 0.15
    noise_sigma: float = 0.2
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_decay_fraction: float = 0.8
    reward_scale: float = 1.0
    obs_scale: tuple[float, ...] = (1.0, 1.0, 0.5, 5.0, 0.5, 5.0)
    obs_clip: float = 10.0
    checkpoint_every: int = 10_000
    # training episodes may be shorter than evaluation episodes (more sampled plants per step);
    # truncation is not terminal, so the critic still bootstraps
    train_episode_steps: int | None = None
    # greedy-policy validation on held-out seeds; the best-scoring actor is kept
    eval_every: int = 2_500
    eval_episodes: int = 10

    def __post_init__(self):
        object.__setattr__(self, "actor_hidden", tuple(self.actor_hidden))
        object.__setattr__(self, "critic_hidden", tuple(self.critic_hidden))
        object.__setattr__(self, "obs_scale", tuple(float(s) for s in self.obs_scale))
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.tau <= 1:
            raise ValueError("tau must lie in [0, 1]")
        if len(self.obs_scale) != STATE_DIM or min(self.obs_scale) <= 0:
            raise ValueError("obs_scale must have 6 positive entries")
        if self.buffer_capacity < self.batch_size:
            raise ValueError("buffer_capacity must be >= batch_size")
        if self.train_episode_steps is not None and self.train_episode_steps < 1:
            raise ValueError("train_episode_steps must be >= 1")

    def epsilon(self, t: int) -> float:
        """Linear decay from ``epsilon_start`` to ``epsilon_end`` over the decay window, constant after."""
        horizon = self.epsilon_decay_fraction * self.total_train_steps
        if horizon <= 0 or t >= horizon:
            return self.epsilon_end
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * (t / horizon)


@dataclass
class Transition:
    state: np.ndarray
    action: float
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform sampling."""

    def __init__(self, capacity: int, seed=0):
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, STATE_DIM))
        self.actions = np.zeros((capacity, 1))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, STATE_DIM))
        self.dones = np.zeros(capacity)
        self.size = 0
        self.head = 0
        self.rng = make_rng(seed)

    def __len__(self) -> int:
        return self.size

    def add(self, t: Transition) -> None:
        if not -1.0 <= t.action <= 1.0:
            raise ValueError(f"normalized action out of range: {t.action}")
        i = self.head
        self.states[i] = t.state
        self.actions[i, 0] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.dones[i] = float(t.done)
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int) -> dict[str, np.ndarray]:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = self.rng.integers(0, self.size, size=n)
        return {
            "state": self.states[idx],
            "action": self.actions[idx],
            "reward": self.rewards[idx],
            "next_state": self.next_states[idx],
            "done": self.dones[idx],
        }


def critic_target(batch, target_actor, target_critic, gamma: float, obs=lambda s: s) -> np.ndarray:
    """``y = r + gamma * (1 - done) * Q'(s', mu'(s'))``; terminal rows get ``y = r`` exactly."""
    s2 = obs(batch["next_state"])
    a2 = target_actor.forward(s2)
    q2 = target_critic.forward(np.hstack([s2, a2]))[:, 0]
    done = np.asarray(batch["done"], dtype=bool)
    r = np.asarray(batch["reward"], dtype=float)
    return np.where(done, r, r + gamma * q2)


class DdpgAgent:
    def __init__(self, config: AgentConfig, force_limit: float, seed: int = 0):
        self.config = config
        self.force_limit = float(force_limit)
        rng = make_rng((seed, 0))
        self.actor = Mlp(MlpSpec(STATE_DIM, config.actor_hidden, 1, "tanh"), rng, final_scale=3e-3)
        self.critic = Mlp(MlpSpec(STATE_DIM + 1, config.critic_hidden, 1, "linear"), rng, final_scale=3e-3)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = AdamState.for_net(self.actor, config.actor_lr)
        self.critic_opt = AdamState.for_net(self.critic, config.critic_lr)
        self.noise = OuProcess(OuParams(config.noise_kappa, 0.0, config.noise_sigma), (seed, 1))
        self._obs_scale = np.asarray(config.obs_scale)

    def observe(self, state) -> np.ndarray:
        s = np.asarray(state, dtype=float) / self._obs_scale
        return np.clip(s, -self.config.obs_clip, self.config.obs_clip)

    def policy(self, state) -> float:
        """Normalized action in [-1, 1]."""
        return float(self.actor.forward(self.observe(state))[0])

    def act(self, state) -> float:
        return self.force_limit * self.policy(state)

    __call__ = act

    def act_noisy(self, state, t: int) -> float:
        noise = self.noise.step(1.0)
        a = self.policy(state) + self.config.epsilon(t) * noise
        return self.force_limit * min(max(a, -1.0), 1.0)

    def train_step(self, buffer: ReplayBuffer) -> dict[str, float]:
        cfg = self.config
        if len(buffer) < cfg.batch_size:
            raise ValueError(f"buffer holds {len(buffer)} < batch_size {cfg.batch_size}")
        batch = buffer.sample(cfg.batch_size)
        batch["reward"] = batch["reward"] * cfg.reward_scale
        return self.update(batch)

    def update(self, batch) -> dict[str, float]:
        cfg = self.config
        n = len(batch["reward"])
        y = critic_target(batch, self.target_actor, self.target_critic, cfg.gamma, self.observe)

        s = self.observe(batch["state"])
        q = self.critic.forward(np.hstack([s, batch["action"]]))[:, 0]
        err = q - y
        critic_loss = float(np.mean(err * err))
        if not math.isfinite(critic_loss):
            raise FloatingPointError(f"non-finite critic loss (max |y| = {np.max(np.abs(y)):.3g})")
        self.critic.backward((2.0 / n) * err[:, None])
        adam_step(self.critic, self.critic_opt)

        # ascend Q(s, mu(s)): chain dQ/da through the actor
        a = self.actor.forward(s)
        q_pi = self.critic.forward(np.hstack([s, a]))
        dq_dinput = self.critic.backward(np.full((n, 1), 1.0 / n))
        self.actor.backward(-dq_dinput[:, STATE_DIM:])
        adam_step(self.actor, self.actor_opt)

        soft_update(self.target_critic, self.critic, cfg.tau)
        soft_update(self.target_actor, self.actor, cfg.tau)
        return {"critic_loss": critic_loss, "actor_objective": float(np.mean(q_pi))}

    def save(self, path, extra: dict | None = None) -> None:
        self.save_actor(self.actor, self, path, extra)

    @staticmethod
    def save_actor(actor: Mlp, agent: "DdpgAgent", path, extra: dict | None = None) -> None:
        echo = {"agent": asdict(agent.config), "force_limit": agent.force_limit, **(extra or {})}
        actor.save(path, extra=echo)

    @classmethod
    def load_policy(cls, path) -> "DdpgPolicy":
        actor, extra = Mlp.load(path)
        agent_cfg = extra.get("agent", {})
        return DdpgPolicy(actor, float(extra["force_limit"]), tuple(agent_cfg.get("obs_scale", AgentConfig.obs_scale)), float(agent_cfg.get("obs_clip", AgentConfig.obs_clip)))


class DdpgPolicy:
    """Frozen deterministic actor used for evaluation."""

    def __init__(self, actor: Mlp, force_limit: float, obs_scale, obs_clip: float):
        self.actor = actor
        self.force_limit = force_limit
        self._obs_scale = np.asarray(obs_scale, dtype=float)
        self.obs_clip = obs_clip

    def __call__(self, state) -> float:
        s = np.clip(np.asarray(state, dtype=float) / self._obs_scale, -self.obs_clip, self.obs_clip)
        return self.force_limit * float(self.actor.forward(s)[0])


@dataclass
class Trainer:
    """Sequential DDPG training loop; picklable so a run can resume mid-way."""

    agent: DdpgAgent
    env_config: EnvConfig
    seed: int
    buffer: ReplayBuffer = None
    step: int = 0
    episode: int = 0
    updates: int = 0
    log_rows: list = field(default_factory=list)
    eval_rows: list = field(default_factory=list)
    best_actor: Mlp | None = None
    best_score: float = -math.inf

    def __post_init__(self):
        if self.buffer is None:
            self.buffer = ReplayBuffer(self.agent.config.buffer_capacity, (self.seed, 2))
        self.env = FipwcEnv(self._train_env_config())
        self._state = None
        self._ret = 0.0
        self._last = {"critic_loss": float("nan"), "actor_objective": float("nan")}

    def _train_env_config(self) -> EnvConfig:
        steps = self.agent.config.train_episode_steps
        return self.env_config if steps is None else replace(self.env_config, episode_steps=steps)

    def _new_episode(self):
        self._state = self.env.reset(derive_seed(self.seed, 3, self.episode))
        self._ret = 0.0
        self.agent.noise.value = 0.0

    def run(self, until: int | None = None, checkpoint_dir=None) -> list[dict]:
        cfg = self.agent.config
        until = cfg.total_train_steps if until is None else min(until, cfg.total_train_steps)
        if self._state is None:
            self._new_episode()
        while self.step < until:
            s = self._state
            force = self.agent.act_noisy(s, self.step)
            res = self.env.step(force)
            a_norm = force / self.agent.force_limit
            self.buffer.add(Transition(s, a_norm, res.reward, res.next_state, res.info["violated"]))
            self._ret += res.reward
            self._state = res.next_state
            self.step += 1
            if self.step > cfg.warmup_steps and len(self.buffer) >= cfg.batch_size:
                self._last = self.agent.train_step(self.buffer)
                self.updates += 1
            if res.done:
                row = {
                    "step": self.step,
                    "episode": self.episode,
                    "return": self._ret,
                    **self._last,
                    "epsilon": cfg.epsilon(self.step),
                }
                self.log_rows.append(row)
                log.info("episode %d step %d return %.2f critic %.4g", self.episode, self.step, self._ret, row["critic_loss"])
                self.episode += 1
                self._new_episode()
            if cfg.eval_every and self.step % cfg.eval_every == 0:
                self.validate()
            if checkpoint_dir is not None and cfg.checkpoint_every and self.step % cfg.checkpoint_every == 0:
                self.save_state(Path(checkpoint_dir) / "trainer_state.pkl")
                self.agent.save(Path(checkpoint_dir) / f"actor_{self.step}.mlp")
        return self.log_rows

    def validate(self) -> float:
        """Score the greedy actor on held-out seeds, with and without the cart disturbance.

        The score is the mean of the two per-configuration mean returns.  Seeds
        come from a branch of the master seed that training never uses.
        """
        cfg = self.agent.config
        policy = DdpgPolicy(self.agent.actor.copy(), self.agent.force_limit, cfg.obs_scale, cfg.obs_clip)
        means = []
        for dz in (True, False):
            env_config = replace(self.env_config, enable_cart_disturbance=dz)
            rets = [run_episode(policy, env_config, derive_seed(self.seed, 4, k)).total_reward for k in range(cfg.eval_episodes)]
            means.append(float(np.mean(rets)))
        score = float(np.mean(means))
        self.eval_rows.append({"step": self.step, "score": score, "mean_with_cart_disturbance": means[0], "mean_without_cart_disturbance": means[1]})
        log.info("validation step %d score %.2f", self.step, score)
        if score > self.best_score:
            self.best_score = score
            self.best_actor = self.agent.actor.copy()
        return score

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, LOG_HEADER)
            w.writeheader()
            for row in self.log_rows:
                w.writerow({k: repr(float(row[k])) if k not in ("step", "episode") else row[k] for k in LOG_HEADER})

    def write_eval_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, EVAL_HEADER)
            w.writeheader()
            for row in self.eval_rows:
                w.writerow({k: row[k] if k == "step" else repr(row[k]) for k in EVAL_HEADER})

    def save_state(self, path) -> None:
        Path(path).write_bytes(pickle.dumps(self))

    @staticmethod
    def load_state(path) -> "Trainer":
        return pickle.loads(Path(path).read_bytes())

    def __getstate__(self):
        d = dict(self.__dict__)
        d["_env_snapshot"] = d.pop("env").__dict__
        return d

    def __setstate__(self, d):
        snap = d.pop("_env_snapshot")
        self.__dict__.update(d)
        self.env = FipwcEnv(self._train_env_config())
        self.env.__dict__.update(snap)


def train(agent_config: AgentConfig, env_config: EnvConfig, seed: int, out_dir=None) -> Trainer:
    agent = DdpgAgent(agent_config, env_config.force_limit, seed)
    trainer = Trainer(agent, env_config, seed)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    trainer.run(checkpoint_dir=out_dir)
    if out_dir is not None:
        out = Path(out_dir)
        agent.save(out / "actor_last.mlp", extra={"seed": seed, "steps": trainer.step})
        if trainer.best_actor is not None:
            best = trainer.eval_rows[[r["score"] for r in trainer.eval_rows].index(trainer.best_score)]["step"]
            DdpgAgent.save_actor(trainer.best_actor, agent, out / "actor.mlp", {"seed": seed, "steps": best, "validation_score": trainer.best_score})
        else:
            agent.save(out / "actor.mlp", extra={"seed": seed, "steps": trainer.step})
        trainer.write_log(out / "train_log.csv")
        trainer.write_eval_log(out / "eval_log.csv")
        (out / "agent_config.json").write_text(json.dumps(asdict(agent_config), indent=2))
    return trainer
