"""Language-model abstraction, cache sessions, and deterministic toy backends.

A model maps a token prefix to next-token logits; all backends here are pure
functions of (spec, prefix), so any claim about the decode pipeline can be
checked by from-scratch recomputation. ``ModelSession`` plays the KV-cache
role: it owns the committed token list plus memoized per-position logits,
supports append-forward and truncate, and makes truncation semantics (the
dropped tokens never existed) explicit.

Backends:

- ``TableModel``: logits are a seeded hash of the trailing ``order`` context
  tokens, drawn uniformly from a bounded range.
- ``NgramModel``: counts-based log-probabilities with additive smoothing,
  built from a tokenized corpus.
- ``BlendModel``: convex combination of two backends' logits; used to build
  draft models of controllable quality.
- ``ReflectionAwareModel``: wraps a base backend and, whenever the context
  contains a designated marker token, blends toward re-emitting the token
  that followed the matching pre-marker context (an induction-style copy).
  This is the toy stand-in for a model that regenerates its own draft after
  a reflection probe.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InvalidConfigError,
    InvalidTokenError,
    InternalConsistencyError,
    SessionRangeError,
)
from .tokens import derive_seed

TABLE_LOGIT_LOW = -4.0
TABLE_LOGIT_HIGH = 4.0

# Logit magnitude of the copy signal in ReflectionAwareModel. Chosen to
# dominate the table-model range at full blend while leaving finite spread.
COPY_LOGIT_BOOST = 8.0

MODEL_KINDS = ("table", "ngram", "divergence-pair-member", "reflection-aware")


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of a toy backend.

    ``order`` is the number of trailing context tokens the backend conditions
    on. ``beta`` (reflection blend), ``eta`` (divergence noise rate) and
    ``marker`` only apply to the wrapper kinds.
    """

    kind: str
    vocab_size: int
    seed: int = 0
    order: int = 2
    smoothing: float = 1.0
    beta: float = 0.0
    eta: float = 0.0
    marker: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise InvalidConfigError(f"unknown model kind {self.kind!r}")
        if self.vocab_size < 2:
            raise InvalidConfigError("vocab_size must be >= 2")
        if self.order < 1:
            raise InvalidConfigError("context order must be >= 1")
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidConfigError("beta must lie in [0, 1]")
        if not 0.0 <= self.eta <= 1.0:
            raise InvalidConfigError("eta must lie in [0, 1]")


class Model:
    """Next-token logits as a pure function of the token prefix."""

    vocab_size: int

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        """Logits predicting the token after ``context``. Must not mutate it."""
        raise NotImplementedError


class ModelSession:
    """A model's committed context plus per-position cached state.

    Appending is incremental: ``forward`` computes logits only for the new
    positions and memoizes them. ``truncate`` discards both tokens and cached
    state beyond the kept length, after which the session behaves exactly as
    if the dropped tokens were never fed.
    """

    def __init__(self, model: Model):
        self.model = model
        self._tokens: list[int] = []
        self._logit_cache: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._tokens)

    @property
    def tokens(self) -> list[int]:
        return list(self._tokens)

    @property
    def cached_length(self) -> int:
        return len(self._logit_cache)

    @property
    def last_logits(self) -> np.ndarray:
        """Cached logits predicting the token after the current context."""
        if not self._logit_cache:
            raise InternalConsistencyError("empty session has no cached logits")
        return self._logit_cache[-1]

    def forward(self, new_tokens: Iterable[int]) -> list[np.ndarray]:
        """Append tokens and return the logits at each appended position.

        The logits at appended position j predict the token at position j+1
        and depend only on tokens up to j (causality is inherited from the
        backend being a pure function of the prefix).
        """
        toks = [int(t) for t in new_tokens]
        if not toks:
            raise InvalidConfigError("forward requires at least one token")
        vocab = self.model.vocab_size
        for t in toks:
            if not 0 <= t < vocab:
                raise InvalidTokenError(f"token {t} outside vocabulary of size {vocab}")
        out: list[np.ndarray] = []
        for t in toks:
            self._tokens.append(t)
            logits = self.model.next_logits(self._tokens)
            self._logit_cache.append(logits)
            out.append(logits)
        return out

    def truncate(self, keep_length: int) -> None:
        """Shorten committed tokens and cached state to ``keep_length``."""
        if keep_length < 0 or keep_length > len(self._tokens):
            raise SessionRangeError(
                f"cannot truncate to {keep_length} (current length {len(self._tokens)})"
            )
        del self._tokens[keep_length:]
        del self._logit_cache[keep_length:]


class TableModel(Model):
    """Seeded hash-table backend: bounded logits per (seed, trailing context)."""

    def __init__(
        self,
        vocab_size: int,
        seed: int = 0,
        order: int = 2,
        low: float = TABLE_LOGIT_LOW,
        high: float = TABLE_LOGIT_HIGH,
    ):
        if vocab_size < 2:
            raise InvalidConfigError("vocab_size must be >= 2")
        if order < 1:
            raise InvalidConfigError("context order must be >= 1")
        if not low < high:
            raise InvalidConfigError("logit range must be non-degenerate")
        self.vocab_size = vocab_size
        self.seed = int(seed)
        self.order = order
        self.low = low
        self.high = high

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        window = context[-self.order :] if self.order <= len(context) else context
        h = hashlib.blake2b(digest_size=8)
        h.update(self.seed.to_bytes(8, "little", signed=True))
        for t in window:
            h.update(int(t).to_bytes(8, "little"))
        cell_seed = int.from_bytes(h.digest(), "little")
        gen = np.random.Generator(np.random.PCG64(cell_seed))
        return gen.uniform(self.low, self.high, size=self.vocab_size)


class NgramModel(Model):
    """Count-based backend with additive smoothing.

    ``order`` is the context length: predictions condition on up to ``order``
    trailing tokens, falling back to however many are available. Counts are
    gathered per document, for every context length from 0 to ``order``, so
    short queries near a sequence start still hit real statistics. The
    returned logits are exact log-probabilities:

        log((count(context, t) + smoothing) / (count(context) + smoothing * V))
    """

    def __init__(
        self,
        corpus: Sequence[int] | Sequence[Sequence[int]],
        vocab_size: int,
        order: int = 2,
        smoothing: float = 1.0,
    ):
        if smoothing <= 0:
            raise InvalidConfigError(f"smoothing must be > 0, got {smoothing!r}")
        if vocab_size < 2:
            raise InvalidConfigError("vocab_size must be >= 2")
        if order < 1:
            raise InvalidConfigError("context order must be >= 1")
        docs = _as_documents(corpus)
        if not docs:
            raise InvalidConfigError("corpus must be non-empty")
        self.vocab_size = vocab_size
        self.order = order
        self.smoothing = float(smoothing)
        self._pair_counts: dict[tuple[int, ...], dict[int, int]] = {}
        self._ctx_counts: dict[tuple[int, ...], int] = {}
        for doc in docs:
            for t in doc:
                if not 0 <= t < vocab_size:
                    raise InvalidTokenError(f"corpus token {t} outside vocabulary")
            for i, tok in enumerate(doc):
                for length in range(min(order, i) + 1):
                    ctx = tuple(doc[i - length : i])
                    self._pair_counts.setdefault(ctx, {})
                    self._pair_counts[ctx][tok] = self._pair_counts[ctx].get(tok, 0) + 1
                    self._ctx_counts[ctx] = self._ctx_counts.get(ctx, 0) + 1

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        length = min(self.order, len(context))
        ctx = tuple(int(t) for t in context[len(context) - length :])
        counts = np.zeros(self.vocab_size, dtype=np.float64)
        for tok, c in self._pair_counts.get(ctx, {}).items():
            counts[tok] = c
        total = self._ctx_counts.get(ctx, 0)
        return np.log(
            (counts + self.smoothing) / (total + self.smoothing * self.vocab_size)
        )


class BlendModel(Model):
    """Convex combination of two backends: (1-w)*primary + w*secondary."""

    def __init__(self, primary: Model, secondary: Model, weight: float):
        if primary.vocab_size != secondary.vocab_size:
            raise InvalidConfigError("blended models must share a vocabulary")
        if not 0.0 <= weight <= 1.0:
            raise InvalidConfigError("blend weight must lie in [0, 1]")
        self.vocab_size = primary.vocab_size
        self.primary = primary
        self.secondary = secondary
        self.weight = float(weight)

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        return (1.0 - self.weight) * self.primary.next_logits(context) + (
            self.weight * self.secondary.next_logits(context)
        )


class ReflectionAwareModel(Model):
    """Base backend plus an induction-style copy behavior after a marker.

    When the context contains the marker token, the model locates the token
    that followed the most recent pre-marker occurrence of the post-marker
    tail and blends ``blend`` of the way toward a logit spike on that token.
    With a draft copy replayed after the marker this re-emits the original
    draft, position by position. Matches whose continuation is the marker
    itself are skipped so the probe token never gets amplified.
    """

    def __init__(self, base: Model, marker: int, blend: float, boost: float = COPY_LOGIT_BOOST):
        if not 0 <= marker < base.vocab_size:
            raise InvalidConfigError(
                f"marker {marker} outside vocabulary of size {base.vocab_size}"
            )
        if not 0.0 <= blend <= 1.0:
            raise InvalidConfigError("blend must lie in [0, 1]")
        self.vocab_size = base.vocab_size
        self.base = base
        self.marker = int(marker)
        self.blend = float(blend)
        self.boost = float(boost)

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        base_logits = self.base.next_logits(context)
        if self.blend == 0.0:
            return base_logits
        copy_token = self._copy_target(context)
        if copy_token is None:
            return base_logits
        spike = np.zeros(self.vocab_size, dtype=np.float64)
        spike[copy_token] = self.boost
        return (1.0 - self.blend) * base_logits + self.blend * spike

    def _copy_target(self, context: Sequence[int]) -> int | None:
        ctx = list(context)
        marker_idx = -1
        for i in range(len(ctx) - 1, -1, -1):
            if ctx[i] == self.marker:
                marker_idx = i
                break
        if marker_idx < 0:
            return None
        tail = ctx[marker_idx + 1 :]
        if not tail:
            return None
        # Latest pre-marker occurrence of the tail whose continuation exists
        # and is not the marker itself.
        n = len(tail)
        for start in range(marker_idx - n - 1, -1, -1):
            if ctx[start : start + n] == tail:
                nxt = ctx[start + n]
                if nxt != self.marker:
                    return nxt
        return None


def _as_documents(corpus: Sequence[int] | Sequence[Sequence[int]]) -> list[list[int]]:
    items = list(corpus)
    if not items:
        return []
    if isinstance(items[0], (int, np.integer)):
        return [[int(t) for t in items]]
    return [[int(t) for t in doc] for doc in items if len(doc) > 0]


def make_table_model(spec: ModelSpec) -> TableModel:
    return TableModel(spec.vocab_size, seed=spec.seed, order=spec.order)


def make_ngram_model(
    corpus: Sequence[int] | Sequence[Sequence[int]],
    vocab_size: int,
    order: int,
    smoothing: float,
) -> NgramModel:
    return NgramModel(corpus, vocab_size, order=order, smoothing=smoothing)


def divergence_noise_model(base_spec: ModelSpec) -> TableModel:
    """The independent noise backend paired with a base model.

    Its seed is derived from the base seed with a fixed tag, so a pair is
    fully determined by the base spec.
    """
    return TableModel(
        base_spec.vocab_size,
        seed=derive_seed("divergence-noise", base_spec.seed),
        order=base_spec.order,
    )


def make_divergence_pair(
    base_spec: ModelSpec,
    eta: float,
    corpus: Sequence[Sequence[int]] | None = None,
) -> tuple[Model, Model]:
    """Build a (target, draft) pair whose divergence is controlled by ``eta``.

    The target is the base model. The draft blends the target's logits with
    an independent table model at rate ``eta``: eta=0 gives an identical
    draft, eta=1 a draft unrelated to the target.
    """
    if not 0.0 <= eta <= 1.0:
        raise InvalidConfigError("eta must lie in [0, 1]")
    target = build_model(base_spec, corpus=corpus)
    draft = BlendModel(target, divergence_noise_model(base_spec), eta)
    return target, draft


def make_reflection_aware(base: Model, marker: int, blend: float) -> ReflectionAwareModel:
    return ReflectionAwareModel(base, marker, blend)


def build_model(
    spec: ModelSpec, corpus: Sequence[int] | Sequence[Sequence[int]] | None = None
) -> Model:
    """Construct any declared backend from its spec.

    ``corpus`` is required for the ngram kind and ignored otherwise. The
    wrapper kinds resolve their own base: a table model with the same seed.
    """
    if spec.kind == "table":
        return make_table_model(spec)
    if spec.kind == "ngram":
        if corpus is None:
            raise InvalidConfigError("ngram models require a corpus")
        return make_ngram_model(corpus, spec.vocab_size, spec.order, spec.smoothing)
    if spec.kind == "divergence-pair-member":
        base = ModelSpec("table", spec.vocab_size, seed=spec.seed, order=spec.order)
        return make_divergence_pair(base, spec.eta)[1]
    if spec.kind == "reflection-aware":
        base = make_table_model(
            ModelSpec("table", spec.vocab_size, seed=spec.seed, order=spec.order)
        )
        marker = spec.marker if spec.marker is not None else spec.vocab_size - 1
        return make_reflection_aware(base, marker, spec.beta)
    raise InvalidConfigError(f"unknown model kind {spec.kind!r}")
