"""Frame-synchronous, lattice-free, multi-channel beam decoder.

Tokens carry accumulated cost and a backpointer into an append-only emission
arena; partial and final hypotheses come straight from token backtraces, so
no lattice is ever built. Per-channel biasing applies at arc-expansion time
via the context's discount: stored graph weights are never mutated.

Tie-breaking everywhere is by cost, then smaller state id, then smaller
global arc index, which makes decoding fully deterministic. A frame step is:
emitting expansion, bounded epsilon-input expansion, beam + max_active
pruning, trailing-silence update. At the start of an utterance the initial
token set is closed over epsilon-input arcs before the first emission.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .biasing import BiasingContext, ContextRegistry
from .fst import Cost, CsrFst, Label
from .scores import ScoreMatrix


class DecodeError(RuntimeError):
    """Decoding cannot proceed (dead channel, bad inputs, state misuse)."""


@dataclass(frozen=True)
class DecoderConfig:
    beam: Cost = 16.0
    max_active: int = 7000
    max_epsilon_expansion: int = 20  # epsilon rounds per frame; cycles terminate here
    partial_every: int = 10          # frames between partial hypotheses
    endpoint_silence_frames: int = 20
    silence_ilabel: Label = 0        # 0 disables silence-based endpointing

    def __post_init__(self) -> None:
        if self.beam <= 0:
            raise ValueError("beam must be positive")
        if self.max_active < 1:
            raise ValueError("max_active must be >= 1")
        if self.partial_every < 1:
            raise ValueError("partial_every must be >= 1")


class ChannelStatus(str, Enum):
    IDLE = "idle"
    DECODING = "decoding"
    ENDPOINTED = "endpointed"
    FINISHED = "finished"


@dataclass
class Token:
    state: int
    cost: Cost
    backpointer: int  # emission-arena record id; -1 is the utterance-start sentinel


@dataclass
class EmissionRecord:
    olabel: Label  # never epsilon; epsilon outputs are not recorded
    frame: int
    predecessor: int


class EmissionStore:
    """Append-only backtrace arena, reset at each finalize."""

    __slots__ = ("olabels", "frames", "prev")

    def __init__(self) -> None:
        self.olabels: list[int] = []
        self.frames: list[int] = []
        self.prev: list[int] = []

    def __len__(self) -> int:
        return len(self.olabels)

    def append_batch(self, olabels: np.ndarray, frame: int, prev: np.ndarray) -> np.ndarray:
        base = len(self.olabels)
        self.olabels.extend(int(o) for o in olabels)
        self.frames.extend([frame] * len(olabels))
        self.prev.extend(int(p) for p in prev)
        return np.arange(base, base + len(olabels), dtype=np.int64)

    def record(self, rec_id: int) -> EmissionRecord:
        return EmissionRecord(self.olabels[rec_id], self.frames[rec_id], self.prev[rec_id])

    def backtrace(self, rec_id: int) -> list[int]:
        words: list[int] = []
        i = rec_id
        while i >= 0:
            words.append(self.olabels[i])
            i = self.prev[i]
        words.reverse()
        return words

    def reset(self) -> None:
        self.olabels.clear()
        self.frames.clear()
        self.prev.clear()


@dataclass
class Hypothesis:
    words: list[Label]  # output labels, no epsilon
    cost: Cost
    frame: int          # cumulative frame index at which produced
    kind: str           # "partial" | "final"
    fallback: bool = False  # final selected without reaching a final state


@dataclass
class Channel:
    """One decoding stream. Owns its tokens and backtraces; shares the graph,
    registry and config read-only with every other channel."""

    id: str
    context_id: str | None = None
    status: ChannelStatus = ChannelStatus.IDLE
    frame_index: int = 0      # frames consumed in the current utterance
    total_frames: int = 0     # frames consumed over the channel's lifetime
    utterance_index: int = 0
    trailing_silence: int = 0
    eps_truncations: int = 0  # frames whose epsilon expansion hit the round cap
    store: EmissionStore = field(default_factory=EmissionStore)
    # Token table: parallel arrays sorted by state; empty until the start
    # token is materialized against a graph on first use.
    _states: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64), repr=False)
    _costs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.float64), repr=False)
    _bp: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64), repr=False)
    _last_il: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64), repr=False)
    _fresh: bool = True  # no frame consumed in the current utterance yet

    @property
    def num_active(self) -> int:
        return len(self._states)

    def active_tokens(self) -> list[Token]:
        return [
            Token(int(s), float(c), int(b))
            for s, c, b in zip(self._states, self._costs, self._bp)
        ]

    def _reset_utterance(self) -> None:
        self._states = np.empty(0, dtype=np.int64)
        self._costs = np.empty(0, dtype=np.float64)
        self._bp = np.empty(0, dtype=np.int64)
        self._last_il = np.empty(0, dtype=np.int64)
        self._fresh = True
        self.frame_index = 0
        self.trailing_silence = 0
        self.store.reset()


def init_channel(
    id: str,
    registry: ContextRegistry | None,
    context_id: str | None,
    cfg: DecoderConfig,
) -> Channel:
    """Create an idle channel; with a context id, that context must already
    be in the registry (contexts are pre-compiled, never built here)."""
    if context_id is not None:
        if registry is None:
            raise DecodeError("context requested but no registry given")
        registry.get(context_id)  # raises UnknownContextError
    return Channel(id=id, context_id=context_id)


def switch_context(
    ch: Channel, registry: ContextRegistry | None, context_id: str | None
) -> Channel:
    """Swap the channel's biasing context at an utterance boundary. Passing
    None disables biasing for subsequent utterances."""
    if ch.status not in (ChannelStatus.IDLE, ChannelStatus.FINISHED):
        raise DecodeError(
            f"channel {ch.id!r}: context switch mid-utterance (status {ch.status.value})"
        )
    if context_id is not None:
        if registry is None:
            raise DecodeError("context requested but no registry given")
        registry.get(context_id)
    ch.context_id = context_id
    if ch.status is ChannelStatus.FINISHED:
        ch.status = ChannelStatus.IDLE
    return ch


def _concat_ranges(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenation of arange(starts[i], starts[i] + counts[i]) slices."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    out = np.ones(total, dtype=np.int64)
    first = np.zeros(len(counts), dtype=np.int64)
    np.cumsum(counts[:-1], out=first[1:])
    keep = counts > 0
    fk = first[keep]
    sk = starts[keep]
    ck = counts[keep]
    out[fk[0]] = sk[0]
    out[fk[1:]] = sk[1:] - (sk[:-1] + ck[:-1] - 1)
    return np.cumsum(out)


def _recombine(states: np.ndarray, costs: np.ndarray, arc_ids: np.ndarray) -> np.ndarray:
    """Positions of the per-state winners, ordered by state. Winner is the
    candidate with minimal (cost, global arc index)."""
    order = np.lexsort((arc_ids, costs, states))
    ss = states[order]
    lead = np.ones(len(ss), dtype=bool)
    lead[1:] = ss[1:] != ss[:-1]
    return order[lead]


def _gather_arcs(
    csr: CsrFst, states: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """All outgoing arc ids of the given states plus the source row index."""
    starts = csr.row_offsets[states]
    counts = csr.row_offsets[states + 1] - starts
    arc_ids = _concat_ranges(starts, counts)
    src = np.repeat(np.arange(len(states), dtype=np.int64), counts)
    return arc_ids, src


def _effective_weights(csr: CsrFst, arc_ids: np.ndarray, ctx: BiasingContext | None) -> np.ndarray:
    w = csr.weights[arc_ids]
    if ctx is not None and len(ctx.arc_indices):
        mask = ctx.boosted_mask(arc_ids)
        if mask.any():
            w = w + ctx.discount * mask
    return w


def _materialize_start(ch: Channel, csr: CsrFst) -> None:
    ch._states = np.array([csr.start], dtype=np.int64)
    ch._costs = np.array([0.0], dtype=np.float64)
    ch._bp = np.array([-1], dtype=np.int64)
    ch._last_il = np.array([0], dtype=np.int64)


def _epsilon_rounds(ch: Channel, csr: CsrFst, ctx: BiasingContext | None, cfg: DecoderConfig) -> None:
    """Bounded relaxation over epsilon-input arcs. Synchronous rounds: each
    round expands the tokens changed in the previous round and applies the
    per-state winners that strictly improve the table."""
    f_states = ch._states
    f_costs = ch._costs
    f_bp = ch._bp
    f_last = ch._last_il
    rounds = 0
    while len(f_states) and rounds < cfg.max_epsilon_expansion:
        rounds += 1
        arc_ids, src = _gather_arcs(csr, f_states)
        eps = csr.ilabels[arc_ids] == 0
        if not eps.any():
            f_states = f_states[:0]
            break
        arc_ids = arc_ids[eps]
        src = src[eps]
        cand_costs = f_costs[src] + _effective_weights(csr, arc_ids, ctx)
        cand_states = csr.next_states[arc_ids]
        sel = _recombine(cand_states, cand_costs, arc_ids)
        cw_states = cand_states[sel]
        cw_costs = cand_costs[sel]
        cw_arcs = arc_ids[sel]
        cw_src_bp = f_bp[src[sel]]
        cw_last = f_last[src[sel]]

        pos = np.searchsorted(ch._states, cw_states)
        exists = pos < len(ch._states)
        safe = np.where(exists, pos, 0)
        exists &= ch._states[safe] == cw_states
        improving = np.zeros(len(cw_states), dtype=bool)
        if exists.any():
            improving[exists] = cw_costs[exists] < ch._costs[pos[exists]]
        applied = improving | ~exists
        if not applied.any():
            f_states = f_states[:0]
            break

        ol = csr.olabels[cw_arcs]
        cw_bp = cw_src_bp.copy()
        need_rec = applied & (ol != 0)
        if need_rec.any():
            cw_bp[need_rec] = ch.store.append_batch(
                ol[need_rec], ch.frame_index, cw_src_bp[need_rec]
            )

        if improving.any():
            p = pos[improving]
            ch._costs[p] = cw_costs[improving]
            ch._bp[p] = cw_bp[improving]
            ch._last_il[p] = cw_last[improving]
        new = ~exists
        if new.any():
            where = pos[new]
            ch._states = np.insert(ch._states, where, cw_states[new])
            ch._costs = np.insert(ch._costs, where, cw_costs[new])
            ch._bp = np.insert(ch._bp, where, cw_bp[new])
            ch._last_il = np.insert(ch._last_il, where, cw_last[new])

        f_states = cw_states[applied]
        f_costs = cw_costs[applied]
        f_bp = cw_bp[applied]
        f_last = cw_last[applied]
    else:
        if len(f_states):
            ch.eps_truncations += 1  # cap hit with relaxation still in flight


def _prune(ch: Channel, cfg: DecoderConfig) -> None:
    if not len(ch._states):
        return
    best = ch._costs.min()
    keep = ch._costs <= best + cfg.beam
    n_keep = int(keep.sum())
    if n_keep > cfg.max_active:
        idx = np.flatnonzero(keep)
        order = np.lexsort((ch._states[idx], ch._costs[idx]))
        chosen = np.sort(idx[order[: cfg.max_active]])
    else:
        chosen = np.flatnonzero(keep)
    ch._states = ch._states[chosen]
    ch._costs = ch._costs[chosen]
    ch._bp = ch._bp[chosen]
    ch._last_il = ch._last_il[chosen]


def _best_token_pos(ch: Channel) -> int:
    return int(np.lexsort((ch._states, ch._costs))[0])


def advance_frame(
    ch: Channel,
    frame: np.ndarray | Sequence[float],
    csr: CsrFst,
    ctx: BiasingContext | None,
    cfg: DecoderConfig,
) -> Channel:
    """Consume one acoustic cost row: expand emitting arcs (graph weight plus
    context discount plus acoustic cost), close over epsilon-input arcs, then
    prune to the beam and max_active. Identical inputs yield identical
    surviving token sets."""
    if ch.status not in (ChannelStatus.IDLE, ChannelStatus.DECODING):
        raise DecodeError(f"channel {ch.id!r}: cannot advance in status {ch.status.value}")
    row = np.asarray(frame, dtype=np.float64)
    if row.ndim != 1 or len(row) != csr.num_emitting_labels:
        raise DecodeError(
            f"frame width {row.shape} does not match the graph's emitting-label "
            f"count {csr.num_emitting_labels}"
        )

    if ch._fresh:
        _materialize_start(ch, csr)
        _epsilon_rounds(ch, csr, ctx, cfg)  # utterance-start closure
        ch._fresh = False
    ch.status = ChannelStatus.DECODING

    if len(ch._states):
        arc_ids, src = _gather_arcs(csr, ch._states)
        il = csr.ilabels[arc_ids]
        emit = il != 0
        arc_ids = arc_ids[emit]
        src = src[emit]
        il = il[emit]
    else:
        arc_ids = src = il = np.empty(0, dtype=np.int64)

    if len(arc_ids):
        cand_costs = ch._costs[src] + _effective_weights(csr, arc_ids, ctx) + row[il - 1]
        cand_states = csr.next_states[arc_ids]
        sel = _recombine(cand_states, cand_costs, arc_ids)
        win_arcs = arc_ids[sel]
        prev_bp = ch._bp[src[sel]]
        ol = csr.olabels[win_arcs]
        new_bp = prev_bp.copy()
        has_out = ol != 0
        if has_out.any():
            new_bp[has_out] = ch.store.append_batch(
                ol[has_out], ch.frame_index, prev_bp[has_out]
            )
        ch._states = cand_states[sel]
        ch._costs = cand_costs[sel]
        ch._bp = new_bp
        ch._last_il = il[sel]
    else:
        ch._states = ch._states[:0]
        ch._costs = ch._costs[:0]
        ch._bp = ch._bp[:0]
        ch._last_il = ch._last_il[:0]

    if len(ch._states):
        _epsilon_rounds(ch, csr, ctx, cfg)
        _prune(ch, cfg)
        b = _best_token_pos(ch)
        if cfg.silence_ilabel > 0 and ch._last_il[b] == cfg.silence_ilabel:
            ch.trailing_silence += 1
        else:
            ch.trailing_silence = 0

    ch.frame_index += 1
    ch.total_frames += 1
    return ch


def partial_hypothesis(ch: Channel) -> Hypothesis:
    """Best current word sequence from the min-cost token's backtrace; final
    weights are ignored because the utterance is still open."""
    if ch._fresh:
        return Hypothesis(words=[], cost=0.0, frame=ch.total_frames, kind="partial")
    if not len(ch._states):
        raise DecodeError(f"channel {ch.id!r}: decode failure, no active tokens")
    b = _best_token_pos(ch)
    words = ch.store.backtrace(int(ch._bp[b]))
    return Hypothesis(words=words, cost=float(ch._costs[b]), frame=ch.total_frames, kind="partial")


def finalize(ch: Channel, csr: CsrFst) -> Hypothesis:
    """Close the utterance: best token in a final state (token cost plus
    final cost), falling back to the best token overall when no final state
    was reached. Resets the channel to idle for the next utterance."""
    if ch.status not in (ChannelStatus.DECODING, ChannelStatus.ENDPOINTED) and not (
        ch.status is ChannelStatus.IDLE and ch._fresh
    ):
        raise DecodeError(f"channel {ch.id!r}: cannot finalize in status {ch.status.value}")
    if ch._fresh:
        # Zero-frame utterance: only the bare start token is considered.
        _materialize_start(ch, csr)
        ch._fresh = False
    if not len(ch._states):
        raise DecodeError(f"channel {ch.id!r}: decode failure, no active tokens")

    final_mask = np.array([int(s) in csr.finals for s in ch._states], dtype=bool)
    if final_mask.any():
        idx = np.flatnonzero(final_mask)
        totals = ch._costs[idx] + np.array(
            [csr.finals[int(s)] for s in ch._states[idx]], dtype=np.float64
        )
        b = int(idx[np.lexsort((ch._states[idx], totals))[0]])
        cost = float(ch._costs[b] + csr.finals[int(ch._states[b])])
        fallback = False
    else:
        b = _best_token_pos(ch)
        cost = float(ch._costs[b])
        fallback = True
    words = ch.store.backtrace(int(ch._bp[b]))
    hyp = Hypothesis(words=words, cost=cost, frame=ch.total_frames, kind="final", fallback=fallback)

    ch._reset_utterance()
    ch.utterance_index += 1
    ch.status = ChannelStatus.IDLE
    return hyp


def detect_endpoint(ch: Channel, cfg: DecoderConfig) -> bool:
    return ch.trailing_silence >= cfg.endpoint_silence_frames


@dataclass
class ChannelResult:
    channel_id: str
    hypotheses: list[Hypothesis]
    error: str | None = None


def _decode_one(
    ch: Channel,
    scores: ScoreMatrix,
    csr: CsrFst,
    registry: ContextRegistry | None,
    cfg: DecoderConfig,
) -> list[Hypothesis]:
    ctx = registry.resolve(ch.context_id) if registry is not None else None
    if ch.context_id is not None and registry is None:
        raise DecodeError(f"channel {ch.id!r} has a context but no registry was given")
    if ctx is not None and registry.graph_fingerprint and registry.graph_fingerprint != csr.fingerprint:
        raise DecodeError(
            f"channel {ch.id!r}: context registry was compiled against a different graph"
        )
    if ch.status is ChannelStatus.FINISHED:
        ch.status = ChannelStatus.IDLE
    hyps: list[Hypothesis] = []
    for t in range(scores.num_frames):
        advance_frame(ch, scores.row(t), csr, ctx, cfg)
        if ch.frame_index % cfg.partial_every == 0:
            hyps.append(partial_hypothesis(ch))
        if detect_endpoint(ch, cfg):
            ch.status = ChannelStatus.ENDPOINTED
            hyps.append(finalize(ch, csr))
    if ch.frame_index > 0 or scores.num_frames == 0:
        hyps.append(finalize(ch, csr))
    ch.status = ChannelStatus.FINISHED
    return hyps


def decode_batch(
    channels: Sequence[tuple[Channel, ScoreMatrix]],
    csr: CsrFst,
    registry: ContextRegistry | None,
    cfg: DecoderConfig,
    num_workers: int = 1,
) -> list[ChannelResult]:
    """Decode each channel's score stream independently: partials every
    partial_every frames, finals at endpoints and at stream end. Results are
    identical to single-channel runs and invariant under batch order; errors
    are recorded per channel without aborting the batch."""

    def run(pair: tuple[Channel, ScoreMatrix]) -> ChannelResult:
        ch, scores = pair
        try:
            return ChannelResult(ch.id, _decode_one(ch, scores, csr, registry, cfg))
        except Exception as exc:  # per-channel isolation
            return ChannelResult(ch.id, [], error=f"{type(exc).__name__}: {exc}")

    if num_workers > 1 and len(channels) > 1:
        with ThreadPoolExecutor(max_workers=num_workers) as pool:
            return list(pool.map(run, channels))
    return [run(pair) for pair in channels]
