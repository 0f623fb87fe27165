"""Contextual biasing: compile entity word sequences into sets of global arc
indices and apply a per-context discount to those arcs at decode time.

A biasing context is independent of the decoding graph it was compiled
against: it stores only a sorted list of arc indices plus one discount cost,
so switching contexts per channel is a pointer swap, and membership of an arc
in the boosted set is a binary search.
"""

from __future__ import annotations

import graphlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .fst import EPSILON, Cost, Fst, Label, SymbolTable, epsilon_output_closure


class BiasingCompileError(ValueError):
    """Entity list cannot be compiled against the given graph/symbol table."""


class UnknownContextError(KeyError):
    """Lookup of a context id that is not in the registry."""


@dataclass
class EntityList:
    """Ordered word sequences to boost, e.g. callsigns from radar data."""

    entries: list[list[str]]
    source: str = ""

    def __post_init__(self) -> None:
        for entry in self.entries:
            if not entry:
                raise BiasingCompileError(f"empty entity in {self.source or 'entity list'}")

    @classmethod
    def parse_text(cls, text: str, source: str = "") -> "EntityList":
        """One entity per line, words space-separated; '#' lines are comments."""
        entries = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            entries.append(line.split())
        return cls(entries=entries, source=source)

    @classmethod
    def from_file(cls, path: str | Path) -> "EntityList":
        path = Path(path)
        return cls.parse_text(path.read_text(encoding="utf-8"), source=str(path))


@dataclass(frozen=True)
class BoostCompileConfig:
    discount: Cost = -2.0
    lm_order: int = 3  # recorded for provenance; traversal depth is bounded separately
    max_epsilon_depth: int = 10
    skip_oov: bool = True
    allow_positive_discount: bool = False

    def __post_init__(self) -> None:
        if self.discount > 0 and not self.allow_positive_discount:
            raise BiasingCompileError(
                f"discount {self.discount} would penalize, not boost; "
                "set allow_positive_discount to override"
            )
        if self.max_epsilon_depth < 0:
            raise BiasingCompileError("max_epsilon_depth must be >= 0")


@dataclass
class ContextStats:
    compiled: int = 0
    skipped_oov: int = 0
    unmatched: int = 0
    empty: bool = False  # warning flag: nothing to boost


@dataclass
class BiasingContext:
    """A context id, its sorted boosted arc indices, and the discount cost."""

    id: str
    arc_indices: np.ndarray
    discount: Cost
    stats: ContextStats = field(default_factory=ContextStats)

    def __post_init__(self) -> None:
        idx = np.asarray(self.arc_indices, dtype=np.int64)
        if idx.ndim != 1:
            raise BiasingCompileError("arc_indices must be one-dimensional")
        if len(idx) and not np.all(idx[1:] > idx[:-1]):
            raise BiasingCompileError("arc_indices must be strictly increasing")
        if len(idx) and idx[0] < 0:
            raise BiasingCompileError("negative arc index")
        self.arc_indices = idx

    def is_boosted(self, g: int, tally: list[int] | None = None) -> bool:
        return sorted_contains(self.arc_indices, g, tally)

    def boosted_mask(self, arc_ids: np.ndarray) -> np.ndarray:
        """Vectorized binary-search membership for a batch of arc indices."""
        idx = self.arc_indices
        if not len(idx):
            return np.zeros(len(arc_ids), dtype=bool)
        pos = np.searchsorted(idx, arc_ids)
        in_range = pos < len(idx)
        mask = np.zeros(len(arc_ids), dtype=bool)
        mask[in_range] = idx[pos[in_range]] == arc_ids[in_range]
        return mask

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "discount": self.discount,
            "arc_indices": [int(g) for g in self.arc_indices],
            "stats": asdict(self.stats),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def from_json_dict(cls, d: dict) -> "BiasingContext":
        return cls(
            id=d["id"],
            arc_indices=np.asarray(d["arc_indices"], dtype=np.int64),
            discount=float(d["discount"]),
            stats=ContextStats(**d.get("stats", {})),
        )


def sorted_contains(indices: Sequence[int] | np.ndarray, g: int, tally: list[int] | None = None) -> bool:
    """Binary-search membership in a sorted unique integer sequence.

    Probes at most ceil(log2 k) + 1 elements for k indices (one three-way
    comparison each); pass ``tally`` (a list the probe count is appended to)
    to instrument.
    """
    lo, hi = 0, len(indices)
    comparisons = 0
    found = False
    while lo < hi:
        mid = (lo + hi) // 2
        comparisons += 1
        v = indices[mid]
        if v == g:
            found = True
            break
        if v < g:
            lo = mid + 1
        else:
            hi = mid
    if tally is not None:
        tally.append(comparisons)
    return found


def effective_weight(ctx: BiasingContext | None, g: int, w: Cost) -> Cost:
    """Arc weight as seen by the decoder: original plus the context discount
    when arc g is in the boosted set, unchanged otherwise."""
    if ctx is not None and ctx.is_boosted(g):
        return w + ctx.discount
    return w


def states_that_output_token(fst: Fst, w: Label) -> set[tuple[int, int]]:
    """All (destination state, global arc index) pairs of arcs outputting w.

    Every arc in the graph is considered, not only those reachable from the
    start state: the first word of an entity may occur mid-utterance.
    """
    if w == EPSILON:
        raise BiasingCompileError("epsilon is not a boostable token")
    return {
        (arc.next_state, g) for g, _, arc in fst.iter_arcs() if arc.olabel == w
    }


def dfs_special(fst: Fst, state: int, w: Label, max_depth: int) -> set[tuple[int, int]]:
    """From ``state``, cross only epsilon-output arcs (up to ``max_depth``),
    then take arcs that output w; returns (destination, global arc index)
    pairs for those emitting arcs."""
    if w == EPSILON:
        raise BiasingCompileError("epsilon is not a boostable token")
    found: set[tuple[int, int]] = set()
    offsets = fst.arc_offsets()
    for s in epsilon_output_closure(fst, state, max_depth):
        base = int(offsets[s])
        for pos, arc in enumerate(fst.arcs[s]):
            if arc.olabel == w:
                found.add((arc.next_state, base + pos))
    return found


def find_boost_arcs(fst: Fst, words: Sequence[Label], cfg: BoostCompileConfig) -> list[int]:
    """Global indices of the arcs to boost for one word sequence.

    The frontier starts at every arc in the graph that outputs the first
    word. For each following word, a frontier element survives iff that word
    is emittable from it through epsilon-output arcs; the arc through which
    the element was reached is boosted exactly when it survives. Arcs
    emitting the last word are boosted whenever a full chain reaches them.
    Unmatchable sequences yield an empty result: only paths already in the
    graph can be boosted.
    """
    if not words:
        raise BiasingCompileError("empty word sequence")
    if any(w == EPSILON for w in words):
        raise BiasingCompileError("epsilon is not a boostable token")

    boosted: set[int] = set()
    frontier = states_that_output_token(fst, words[0])
    for w in words[1:]:
        nxt: set[tuple[int, int]] = set()
        closure_cache: dict[int, set[tuple[int, int]]] = {}
        for state, prev_arc in frontier:
            reached = closure_cache.get(state)
            if reached is None:
                reached = dfs_special(fst, state, w, cfg.max_epsilon_depth)
                closure_cache[state] = reached
            if reached:
                boosted.add(prev_arc)
                nxt |= reached
        frontier = nxt
        if not frontier:
            break
    boosted.update(g for _, g in frontier)
    return sorted(boosted)


def compile_context(
    fst: Fst,
    symtab: SymbolTable,
    entities: EntityList,
    cfg: BoostCompileConfig,
    id: str,
) -> BiasingContext:
    """Union of find_boost_arcs over all in-vocabulary entities.

    Entities containing an out-of-vocabulary word are skipped whole (a
    partial boost would silently change what gets favored) and counted in the
    stats; with skip_oov disabled the first OOV word raises instead.
    """
    indices: set[int] = set()
    stats = ContextStats()
    seen: set[tuple[str, ...]] = set()
    for entry in entities.entries:
        key = tuple(entry)
        if key in seen:
            continue
        seen.add(key)
        labels: list[Label] = []
        oov_word: str | None = None
        for word in entry:
            label = symtab.get_id(word)
            if label is None or label == EPSILON:
                oov_word = word
                break
            labels.append(label)
        if oov_word is not None:
            if not cfg.skip_oov:
                raise BiasingCompileError(
                    f"out-of-vocabulary word {oov_word!r} in entity {' '.join(entry)!r}"
                )
            stats.skipped_oov += 1
            continue
        arcs = find_boost_arcs(fst, labels, cfg)
        if arcs:
            stats.compiled += 1
            indices.update(arcs)
        else:
            stats.unmatched += 1
    stats.empty = not indices
    arr = np.asarray(sorted(indices), dtype=np.int64)
    if len(arr) and int(arr[-1]) >= fst.num_arcs:
        raise BiasingCompileError("arc index out of range for graph")  # unreachable by construction
    return BiasingContext(id=id, arc_indices=arr, discount=cfg.discount, stats=stats)


def biasing_fst_to_entities(bfst: Fst, symtab: SymbolTable, max_paths: int) -> EntityList:
    """Expand an acyclic biasing FST into its accepted output strings.

    Path weights are ignored; boosting strength comes from the context
    discount, not from the biasing FST's own costs.
    """
    # Cycle check up front so enumeration below cannot run away.
    deps = {s: {a.next_state for a in bfst.arcs[s]} for s in range(bfst.num_states)}
    try:
        list(graphlib.TopologicalSorter(deps).static_order())
    except graphlib.CycleError as exc:
        raise BiasingCompileError(f"biasing FST is cyclic: {exc.args[1]}") from None

    entries: list[list[str]] = []
    stack: list[tuple[int, list[Label]]] = [(bfst.start, [])] if bfst.num_states else []
    count = 0
    while stack:
        state, labels = stack.pop()
        if state in bfst.finals:
            count += 1
            if count > max_paths:
                raise BiasingCompileError(
                    f"biasing FST accepts more than max_paths={max_paths} paths"
                )
            entries.append([symtab.word_of(l) for l in labels])
        for arc in reversed(bfst.arcs[state]):
            nxt = labels if arc.olabel == EPSILON else labels + [arc.olabel]
            stack.append((arc.next_state, nxt))
    entries.reverse()
    return EntityList(entries=entries, source="biasing-fst")


@dataclass
class ContextRegistry:
    """Immutable collection of pre-compiled contexts shared by all channels."""

    contexts: dict[str, BiasingContext]
    graph_fingerprint: str

    def get(self, context_id: str) -> BiasingContext:
        try:
            return self.contexts[context_id]
        except KeyError:
            raise UnknownContextError(
                f"unknown biasing context {context_id!r}; known: {sorted(self.contexts)}"
            ) from None

    def resolve(self, context_id: str | None) -> BiasingContext | None:
        return None if context_id is None else self.get(context_id)

    def __contains__(self, context_id: str) -> bool:
        return context_id in self.contexts

    def __len__(self) -> int:
        return len(self.contexts)

    def ids(self) -> list[str]:
        return sorted(self.contexts)

    @classmethod
    def empty(cls, fingerprint: str = "") -> "ContextRegistry":
        return cls(contexts={}, graph_fingerprint=fingerprint)


def load_registry(
    fst: Fst,
    symtab: SymbolTable,
    manifest: Iterable[tuple[str, str | Path]],
    cfg: BoostCompileConfig,
) -> ContextRegistry:
    """Compile every manifest entry before decoding starts.

    All contexts are available up front; decode-time context switching never
    compiles anything.
    """
    contexts: dict[str, BiasingContext] = {}
    for context_id, path in manifest:
        if context_id in contexts:
            raise BiasingCompileError(f"duplicate context id {context_id!r} in manifest")
        try:
            entities = EntityList.from_file(path)
        except OSError as exc:
            raise BiasingCompileError(f"cannot read entity file {path}: {exc}") from None
        contexts[context_id] = compile_context(fst, symtab, entities, cfg, id=context_id)
    return ContextRegistry(contexts=contexts, graph_fingerprint=fst.fingerprint())


def read_context_manifest(text: str) -> list[tuple[str, str]]:
    """Parse the context manifest: TSV lines ``id<TAB>entity-file-path``."""
    rows: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise BiasingCompileError(
                f"manifest line {lineno}: expected 'id<TAB>path', got {raw!r}"
            )
        rows.append((parts[0], parts[1]))
    return rows
