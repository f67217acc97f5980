"""Draft generation: the autoregressive proposal loop of the draft model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError
from .models import ModelSession
from .tokens import sample, sampling_distribution


@dataclass(frozen=True)
class DraftBundle:
    """A fixed-length draft: tokens plus the distribution each was drawn from.

    ``draft_forward_count`` is the number of incremental forward calls the
    draft session performed while producing this bundle (the first step reads
    cached state, so it is gamma - 1).
    """

    tokens: tuple[int, ...]
    q_dists: tuple[np.ndarray, ...]
    draft_forward_count: int

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.q_dists) or not self.tokens:
            raise InvalidConfigError("draft tokens and distributions must align and be non-empty")
        for tok, q in zip(self.tokens, self.q_dists):
            if q[tok] <= 0.0:
                raise InvalidConfigError(f"draft token {tok} has zero draft probability")

    @property
    def gamma(self) -> int:
        return len(self.tokens)


def generate_draft(
    session: ModelSession,
    gamma: int,
    temperature: float,
    rng: np.random.Generator,
) -> DraftBundle:
    """Sample ``gamma`` draft tokens autoregressively from ``session``'s model.

    The session must already hold the committed prefix with cached state.
    Each step converts the cached next-token logits to a distribution at
    ``temperature`` (0 means greedy via a one-hot), samples one token, and
    feeds it back. The session is rolled back to the committed prefix before
    returning; drafts are speculative state and never linger in the cache.
    """
    if gamma < 1:
        raise InvalidConfigError(f"gamma must be >= 1, got {gamma}")
    if temperature < 0:
        raise InvalidConfigError(f"temperature must be >= 0, got {temperature!r}")
    base_len = len(session)
    tokens: list[int] = []
    dists: list[np.ndarray] = []
    forwards = 0
    for i in range(gamma):
        q = sampling_distribution(session.last_logits, temperature)
        tok = sample(q, rng)
        tokens.append(tok)
        dists.append(q)
        if i < gamma - 1:
            session.forward([tok])
            forwards += 1
    session.truncate(base_len)
    return DraftBundle(tuple(tokens), tuple(dists), forwards)
