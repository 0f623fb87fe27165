"""Independent reference implementations used for testing only.

These deliberately share no machinery with the modules they check beyond the
core graph types: boosted-arc sets are found by enumerating word chains,
biased decoding is checked against a statically re-weighted graph, and the
beam decoder is checked against a pruning-free Viterbi sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .biasing import BiasingContext
from .decoder import Hypothesis
from .fst import CsrFst, Fst, Label, _fingerprint
from .scores import ScoreMatrix


class NoCompletePathError(RuntimeError):
    """No path consumes every frame and ends in a final state."""


@dataclass(frozen=True)
class ChainBound:
    max_chain_eps: int = 10  # epsilon-output arcs allowed between consecutive emissions

    def __post_init__(self) -> None:
        if self.max_chain_eps < 0:
            raise ValueError("max_chain_eps must be >= 0")


def _eps_output_reach(fst: Fst, state: int, max_eps: int) -> set[int]:
    # Depth-relaxing DFS, written independently of the production closure.
    best_depth = {state: 0}
    stack = [(state, 0)]
    while stack:
        s, d = stack.pop()
        if d >= max_eps:
            continue
        for arc in fst.arcs[s]:
            if arc.olabel != 0:
                continue
            nd = d + 1
            if arc.next_state not in best_depth or best_depth[arc.next_state] > nd:
                best_depth[arc.next_state] = nd
                stack.append((arc.next_state, nd))
    return set(best_depth)


def brute_force_boost_arcs(fst: Fst, words: list[Label], bound: ChainBound) -> list[int]:
    """Boosted arc set by chain enumeration.

    A chain of length t is a sequence of emitting arcs outputting the first t
    words, each arc's destination reaching the next arc's source over at most
    max_chain_eps epsilon-output arcs. The result contains every arc that is
    the (t-1)-th element of some length-t chain plus every arc ending a
    full-length chain.
    """
    if not words:
        raise ValueError("empty word sequence")
    all_arcs = [(g, src, arc) for g, src, arc in fst.iter_arcs()]
    reach = {s: _eps_output_reach(fst, s, bound.max_chain_eps) for s in range(fst.num_states)}

    boosted: set[int] = set()
    ends = {(g, arc.next_state) for g, _, arc in all_arcs if arc.olabel == words[0]}
    for w in words[1:]:
        word_arcs = [(g, src, arc.next_state) for g, src, arc in all_arcs if arc.olabel == w]
        new_ends: set[tuple[int, int]] = set()
        for g_prev, dst_prev in ends:
            extended = False
            for g, src, dst in word_arcs:
                if src in reach[dst_prev]:
                    new_ends.add((g, dst))
                    extended = True
            if extended:
                boosted.add(g_prev)
        ends = new_ends
        if not ends:
            break
    boosted.update(g for g, _ in ends)
    return sorted(boosted)


def preboost_graph(csr: CsrFst, ctx: BiasingContext) -> CsrFst:
    """Static reference for dynamic biasing: a copy of the graph with the
    discount folded into every boosted arc's stored weight."""
    idx = ctx.arc_indices
    if len(idx) and (int(idx[0]) < 0 or int(idx[-1]) >= csr.num_arcs):
        raise ValueError(
            f"context {ctx.id!r} indexes arcs outside the graph "
            f"({csr.num_arcs} arcs): fingerprint mismatch?"
        )
    weights = csr.weights.copy()
    weights[idx] = weights[idx] + ctx.discount
    fingerprint = _fingerprint(
        csr.start,
        csr.num_states,
        zip(csr.ilabels.tolist(), csr.olabels.tolist(), csr.next_states.tolist(), weights.tolist()),
        csr.finals,
    )
    return CsrFst(
        start=csr.start,
        row_offsets=csr.row_offsets,
        ilabels=csr.ilabels,
        olabels=csr.olabels,
        next_states=csr.next_states,
        weights=weights,
        finals=dict(csr.finals),
        fingerprint=fingerprint,
    )


def exhaustive_best_path(
    csr: CsrFst,
    scores: ScoreMatrix,
    ctx: BiasingContext | None = None,
    *,
    max_eps_rounds: int = 20,
) -> Hypothesis:
    """Pruning-free Viterbi over the full state space.

    Uses the same effective weights, epsilon-round bound and tie-breaking
    (cost, then state id, then global arc index) as the beam decoder, so the
    two agree exactly when the beam never prunes. A zero-frame matrix accepts
    only at the start state.
    """
    if csr.num_states > 1000 or scores.num_frames > 100:
        raise ValueError("instance too large for exhaustive search (<=1000 states, <=100 frames)")

    def eff(g: int) -> float:
        w = float(csr.weights[g])
        if ctx is not None and ctx.is_boosted(g):
            w = w + ctx.discount
        return w

    # table: state -> (cost, words tuple)
    table: dict[int, tuple[float, tuple[int, ...]]] = {csr.start: (0.0, ())}

    def relax_epsilon() -> None:
        nonlocal table
        for _ in range(max_eps_rounds):
            best_cand: dict[int, tuple[tuple[float, int], tuple[int, ...]]] = {}
            for s, (c, ws) in table.items():
                lo, hi = csr.arc_range(s)
                for g in range(lo, hi):
                    if csr.ilabels[g] != 0:
                        continue
                    cand = c + eff(g)
                    ol = int(csr.olabels[g])
                    nws = ws + (ol,) if ol else ws
                    key = (cand, g)
                    cur = best_cand.get(int(csr.next_states[g]))
                    if cur is None or key < cur[0]:
                        best_cand[int(csr.next_states[g])] = (key, nws)
            changed = False
            for dst, ((cand, _g), nws) in best_cand.items():
                if dst not in table or cand < table[dst][0]:
                    table[dst] = (cand, nws)
                    changed = True
            if not changed:
                break

    if scores.num_frames > 0:
        relax_epsilon()
        for t in range(scores.num_frames):
            row = scores.row(t)
            best_cand = {}
            for s, (c, ws) in table.items():
                lo, hi = csr.arc_range(s)
                for g in range(lo, hi):
                    il = int(csr.ilabels[g])
                    if il == 0:
                        continue
                    cand = c + eff(g) + float(row[il - 1])
                    ol = int(csr.olabels[g])
                    nws = ws + (ol,) if ol else ws
                    key = (cand, g)
                    cur = best_cand.get(int(csr.next_states[g]))
                    if cur is None or key < cur[0]:
                        best_cand[int(csr.next_states[g])] = (key, nws)
            table = {dst: (key[0], nws) for dst, (key, nws) in best_cand.items()}
            if not table:
                raise NoCompletePathError(f"all paths die at frame {t}")
            relax_epsilon()

    finals = [
        (c + csr.finals[s], s, ws) for s, (c, ws) in table.items() if s in csr.finals
    ]
    if not finals:
        raise NoCompletePathError("no surviving path ends in a final state")
    total, _state, ws = min(finals, key=lambda item: (item[0], item[1]))
    return Hypothesis(words=list(ws), cost=float(total), frame=scores.num_frames, kind="final")
