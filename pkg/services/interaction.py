from typing import Tuple

from models.agent import Agent, NoiseKind


def interact(
    a: Agent,
    b: Agent,
    gamma: float,
    eta_a: float,
    eta_b: float,
    noise: NoiseKind,
) -> Tuple[float, float]:
    """
    Post-collision opinions of a binary encounter.

    Each agent moves toward its partner in proportion to its own q and the
    partner's p, plus a noise kick damped by q * D(|w|). No clamping: keeping
    the result in [-1, 1] is the caller's job.
    """
    w_a = a.w + gamma * a.q * b.p * (b.w - a.w) + eta_a * a.q * noise.diffusion(a.w)
    w_b = b.w + gamma * b.q * a.p * (a.w - b.w) + eta_b * b.q * noise.diffusion(b.w)
    return float(w_a), float(w_b)
