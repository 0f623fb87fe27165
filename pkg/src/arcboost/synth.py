"""Synthetic graphs and score streams for experiments and tests.

Real acoustic models are out of scope; these generators produce decoding
graphs, realizable transcripts, and score matrices with controlled decision
margins so that biasing effects can be measured deterministically.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field

import numpy as np

from .biasing import EntityList
from .fst import Arc, Cost, Fst, SymbolTable
from .scores import ScoreMatrix


class TranscriptRealizationError(ValueError):
    """Transcript has no realization as a path on the decoding graph."""


def random_fst(
    rng: random.Random,
    *,
    max_states: int = 30,
    max_arcs: int = 120,
    num_labels: int = 6,
    eps_output_prob: float = 0.25,
    eps_input_prob: float = 0.15,
    ensure_emitting: bool = False,
    all_final: bool = False,
    final_prob: float = 0.5,
    weight_range: tuple[float, float] = (0.0, 3.0),
) -> Fst:
    """Random graph with cycles and epsilon arcs allowed on both tapes.

    With ensure_emitting every state gets at least one emitting out-arc, so
    frame-synchronous paths of any length exist; with all_final every state
    is final, so every such path is complete.
    """
    num_states = rng.randint(2, max(2, max_states))
    num_arcs = rng.randint(1, max(1, max_arcs))
    arcs: list[list[Arc]] = [[] for _ in range(num_states)]

    def rand_arc(force_emitting: bool = False) -> Arc:
        ilabel = 0 if not force_emitting and rng.random() < eps_input_prob else rng.randint(1, num_labels)
        olabel = 0 if rng.random() < eps_output_prob else rng.randint(1, num_labels)
        return Arc(ilabel, olabel, rng.randrange(num_states), rng.uniform(*weight_range))

    for _ in range(num_arcs):
        arcs[rng.randrange(num_states)].append(rand_arc())
    if ensure_emitting:
        for state in range(num_states):
            if not any(a.ilabel != 0 for a in arcs[state]):
                arcs[state].append(rand_arc(force_emitting=True))

    finals: dict[int, Cost] = {}
    for state in range(num_states):
        if all_final or rng.random() < final_prob:
            finals[state] = rng.uniform(0.0, 1.0)
    if not finals:
        finals[rng.randrange(num_states)] = rng.uniform(0.0, 1.0)
    return Fst(start=rng.randrange(num_states), num_states=num_states, arcs=arcs, finals=finals)


def random_scores(
    rng: random.Random, num_frames: int, num_ilabels: int, cost_range: tuple[float, float] = (0.0, 6.0)
) -> ScoreMatrix:
    costs = np.array(
        [[rng.uniform(*cost_range) for _ in range(num_ilabels)] for _ in range(num_frames)]
    )
    return ScoreMatrix(costs=costs.reshape(num_frames, num_ilabels))


@dataclass
class Realization:
    """An emitting input-label sequence that produces a transcript on a graph."""

    ilabels: list[int]           # one per frame
    graph_cost: float            # path weight including the final-state cost

    @property
    def num_frames(self) -> int:
        return len(self.ilabels)


def realize_transcript(fst: Fst, symtab: SymbolTable, words: list[str]) -> Realization:
    """Cheapest start-to-final path whose output labels spell the transcript.

    Epsilon-output arcs may be interleaved anywhere; each emitting arc on the
    path consumes one frame. Raises naming the first word that cannot be
    matched when no realization exists.
    """
    labels = []
    for w in words:
        label = symtab.get_id(w)
        if label is None or label == 0:
            raise TranscriptRealizationError(f"word {w!r} is not realizable: not in symbol table")
        labels.append(label)
    k = len(labels)

    # Dijkstra over (state, words matched); parents reconstruct the ilabels.
    dist: dict[tuple[int, int], float] = {(fst.start, 0): 0.0}
    parent: dict[tuple[int, int], tuple[tuple[int, int], int]] = {}
    heap: list[tuple[float, int, int, int]] = [(0.0, 0, fst.start, 0)]
    counter = 1
    settled: set[tuple[int, int]] = set()
    best_matched = 0
    while heap:
        cost, _, state, matched = heapq.heappop(heap)
        key = (state, matched)
        if key in settled:
            continue
        settled.add(key)
        best_matched = max(best_matched, matched)
        for arc in fst.arcs[state]:
            if arc.olabel == 0:
                nxt = (arc.next_state, matched)
            elif matched < k and arc.olabel == labels[matched]:
                nxt = (arc.next_state, matched + 1)
            else:
                continue
            ncost = cost + arc.weight
            if nxt not in dist or ncost < dist[nxt]:
                dist[nxt] = ncost
                parent[nxt] = (key, arc.ilabel)
                heapq.heappush(heap, (ncost, counter, nxt[0], nxt[1]))
                counter += 1

    goals = [
        (dist[(s, k)] + fst.finals[s], s)
        for s in fst.finals
        if (s, k) in dist
    ]
    if not goals:
        if best_matched < k:
            raise TranscriptRealizationError(
                f"word {words[best_matched]!r} is not realizable on the graph"
            )
        raise TranscriptRealizationError("no final state reachable after the transcript")
    total, goal_state = min(goals)

    ilabels: list[int] = []
    key = (goal_state, k)
    while key in parent:
        key, ilabel = parent[key]
        if ilabel != 0:
            ilabels.append(ilabel)
    ilabels.reverse()
    return Realization(ilabels=ilabels, graph_cost=float(total))


def synth_score_matrix(
    num_ilabels: int,
    truth: Realization,
    *,
    noise: float = 5.0,
    rng: np.random.Generator,
    distractor: Realization | None = None,
    margin: float | None = None,
    frame_duration: float = 0.03,
) -> ScoreMatrix:
    """Score matrix whose cheapest decode follows ``truth``.

    The true ilabel costs 0 per frame; every other label costs noise plus
    jitter in [0, 0.1). With a distractor realization of equal length and a
    margin m, costs are shifted at the first frame where the two diverge so
    that decode cost(truth) - decode cost(distractor) = m exactly.
    """
    frames = truth.num_frames
    costs = noise + rng.uniform(0.0, 0.1, size=(frames, num_ilabels))
    for t, il in enumerate(truth.ilabels):
        costs[t, il - 1] = 0.0
    if distractor is not None:
        if distractor.num_frames != frames:
            raise TranscriptRealizationError(
                "distractor realization must consume the same number of frames"
            )
        for t, il in enumerate(distractor.ilabels):
            costs[t, il - 1] = 0.0
        if margin is not None:
            diverge = next(
                (t for t in range(frames) if truth.ilabels[t] != distractor.ilabels[t]), None
            )
            if diverge is None:
                raise TranscriptRealizationError(
                    "transcript and distractor share one realization; no margin possible"
                )
            costs[diverge, truth.ilabels[diverge] - 1] = margin + (
                distractor.graph_cost - truth.graph_cost
            )
    return ScoreMatrix(costs=costs, frame_duration=frame_duration)


@dataclass
class MarginUtterance:
    utt_id: str
    transcript: list[str]   # the entity the reference contains
    distractor: list[str]
    margin: float
    scores: ScoreMatrix


@dataclass
class MarginSuite:
    """Entity-vs-distractor suite: unbiased decoding loses every entity by a
    controlled margin; boosting the entities flips every decision."""

    fst: Fst
    symtab: SymbolTable
    entities: EntityList
    utterances: list[MarginUtterance] = field(default_factory=list)


def build_margin_suite(
    num_utts: int = 50,
    *,
    margin_span: tuple[float, float] = (0.0, 2.0),
    arc_weight: float = 0.5,
    noise: float = 5.0,
    seed: int = 7,
) -> MarginSuite:
    """Star graph of two-word entities and equally long distractor branches.

    Utterance i carries margin margin_span interpolated strictly inside the
    open interval, so the unbiased decode always prefers the distractor and a
    -2.0 discount on the two entity arcs always flips it back.
    """
    words: dict[str, int] = {"<eps>": 0}

    def add_word(w: str) -> int:
        words[w] = len(words)
        return words[w]

    arcs: list[list[Arc]] = [[]]
    finals: dict[int, Cost] = {}

    def add_branch(first: str, second: str) -> None:
        a = add_word(first)
        b = add_word(second)
        mid = len(arcs)
        arcs.append([])
        end = len(arcs)
        arcs.append([])
        arcs[0].append(Arc(a, a, mid, arc_weight))
        arcs[mid].append(Arc(b, b, end, arc_weight))
        finals[end] = 0.0

    entity_entries: list[list[str]] = []
    pairs: list[tuple[list[str], list[str]]] = []
    for i in range(num_utts):
        ent = [f"ent{i}a", f"ent{i}b"]
        dis = [f"dis{i}a", f"dis{i}b"]
        add_branch(*ent)
        add_branch(*dis)
        entity_entries.append(ent)
        pairs.append((ent, dis))

    fst = Fst(start=0, num_states=len(arcs), arcs=arcs, finals=finals)
    symtab = SymbolTable(words)
    suite = MarginSuite(
        fst=fst,
        symtab=symtab,
        entities=EntityList(entries=entity_entries, source="margin-suite"),
    )
    lo, hi = margin_span
    for i, (ent, dis) in enumerate(pairs):
        margin = lo + (hi - lo) * (i + 1) / (num_utts + 1)
        truth = realize_transcript(fst, symtab, ent)
        distract = realize_transcript(fst, symtab, dis)
        scores = synth_score_matrix(
            len(words) - 1,
            truth,
            noise=noise,
            rng=np.random.default_rng([seed, i]),
            distractor=distract,
            margin=margin,
        )
        suite.utterances.append(
            MarginUtterance(
                utt_id=f"utt{i:04d}",
                transcript=ent,
                distractor=dis,
                margin=margin,
                scores=scores,
            )
        )
    return suite


def build_benchmark_graph(
    num_states: int = 12500,
    arcs_per_state: int = 8,
    num_labels: int = 200,
    *,
    eps_input_frac: float = 0.1,
    seed: int = 421,
) -> Fst:
    """Large random graph for throughput measurements (defaults give 1e5 arcs)."""
    rng = np.random.default_rng(seed)
    n = num_states * arcs_per_state
    dsts = rng.integers(0, num_states, size=n)
    ilabels = rng.integers(1, num_labels + 1, size=n)
    eps_in = rng.random(n) < eps_input_frac
    ilabels[eps_in] = 0
    olabels = rng.integers(0, num_labels + 1, size=n)
    weights = rng.uniform(0.0, 3.0, size=n)
    # every label id must occur as an emitting ilabel so the matrix width
    # equals num_labels regardless of the draw
    ilabels[:num_labels] = np.arange(1, num_labels + 1)
    arcs = [
        [
            Arc(int(ilabels[i]), int(olabels[i]), int(dsts[i]), float(weights[i]))
            for i in range(s * arcs_per_state, (s + 1) * arcs_per_state)
        ]
        for s in range(num_states)
    ]
    finals = {s: 0.0 for s in range(num_states)}
    return Fst(start=0, num_states=num_states, arcs=arcs, finals=finals)
