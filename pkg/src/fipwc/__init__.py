"""Flexible inverted pendulum on a cart: simulator, DDPG and PD controllers, Monte Carlo harness."""

__version__ = "0.1.0"
