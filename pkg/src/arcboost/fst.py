"""Decoding-graph data model: tropical-semiring WFSTs, text parsing, CSR layout.

Weights are costs (add along a path, min over paths). Label id 0 is reserved
for epsilon on both tapes; emitting arcs have a nonzero input label. A graph
is immutable once constructed and may be shared freely across decoding
channels.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

EPSILON = 0  # reserved label id on both tapes

Label = int
Cost = float


class FstParseError(ValueError):
    """Malformed graph or symbol-table text."""


class FstStructureError(ValueError):
    """Structurally invalid graph (e.g. arc to a nonexistent state)."""


class SymbolTableError(ValueError):
    """Invalid symbol table (duplicates, missing epsilon entry)."""


@dataclass(frozen=True)
class Arc:
    ilabel: Label
    olabel: Label
    next_state: int
    weight: Cost


@dataclass
class Fst:
    """Adjacency-list WFST. Arc order within a state is significant: it fixes
    the global arc index (state-major position, see :func:`build_csr`)."""

    start: int
    num_states: int
    arcs: list[list[Arc]]
    finals: dict[int, Cost]
    _offsets: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.num_states < 0:
            raise FstStructureError("negative state count")
        if self.num_states and not 0 <= self.start < self.num_states:
            raise FstStructureError(
                f"start state {self.start} out of range for {self.num_states} states"
            )
        if len(self.arcs) != self.num_states:
            raise FstStructureError("arc table length != num_states")
        for state, out in enumerate(self.arcs):
            for arc in out:
                if not 0 <= arc.next_state < self.num_states:
                    raise FstStructureError(
                        f"arc from state {state} to nonexistent state {arc.next_state}"
                    )
                if arc.ilabel < 0 or arc.olabel < 0:
                    raise FstStructureError(f"negative label on arc from state {state}")
                if not math.isfinite(arc.weight):
                    raise FstStructureError(f"non-finite weight on arc from state {state}")
        for state, w in self.finals.items():
            if not 0 <= state < self.num_states:
                raise FstStructureError(f"final state {state} out of range")
            if not math.isfinite(w):
                raise FstStructureError(f"non-finite final weight at state {state}")

    @property
    def num_arcs(self) -> int:
        return sum(len(out) for out in self.arcs)

    def arc_offsets(self) -> np.ndarray:
        """Prefix sums of per-state arc counts; offset[s] is the global index
        of the first arc of state s."""
        if self._offsets is None:
            counts = np.fromiter(
                (len(out) for out in self.arcs), dtype=np.int64, count=self.num_states
            )
            offsets = np.zeros(self.num_states + 1, dtype=np.int64)
            np.cumsum(counts, out=offsets[1:])
            self._offsets = offsets
        return self._offsets

    def global_arc_index(self, state: int, pos: int) -> int:
        return int(self.arc_offsets()[state]) + pos

    def iter_arcs(self) -> Iterator[tuple[int, int, Arc]]:
        """Yield (global_index, src_state, arc) in state-major order."""
        g = 0
        for state, out in enumerate(self.arcs):
            for arc in out:
                yield g, state, arc
                g += 1

    def fingerprint(self) -> str:
        return _fingerprint(
            self.start,
            self.num_states,
            ((a.ilabel, a.olabel, a.next_state, a.weight) for _, _, a in self.iter_arcs()),
            self.finals,
        )


@dataclass
class CsrFst:
    """Compressed-sparse-row view of an Fst.

    The arc at global index g belongs to state s iff
    row_offsets[s] <= g < row_offsets[s+1]; enumerating every state's slice
    reproduces the source graph arc-for-arc.
    """

    start: int
    row_offsets: np.ndarray  # int64, len num_states + 1
    ilabels: np.ndarray      # int64, len num_arcs
    olabels: np.ndarray      # int64, len num_arcs
    next_states: np.ndarray  # int64, len num_arcs
    weights: np.ndarray      # float64, len num_arcs
    finals: dict[int, Cost]
    fingerprint: str

    @property
    def num_states(self) -> int:
        return len(self.row_offsets) - 1

    @property
    def num_arcs(self) -> int:
        return int(self.row_offsets[-1])

    @property
    def num_emitting_labels(self) -> int:
        """Highest emitting input label id; score rows must have this width."""
        return int(self.ilabels.max()) if len(self.ilabels) else 0

    def arc_range(self, state: int) -> tuple[int, int]:
        return int(self.row_offsets[state]), int(self.row_offsets[state + 1])

    def state_arcs(self, state: int) -> Iterator[tuple[int, Arc]]:
        """Yield (global_index, arc) for one state, in stored order."""
        lo, hi = self.arc_range(state)
        for g in range(lo, hi):
            yield g, Arc(
                int(self.ilabels[g]),
                int(self.olabels[g]),
                int(self.next_states[g]),
                float(self.weights[g]),
            )

    def final_cost(self, state: int) -> Cost | None:
        return self.finals.get(state)


def build_csr(fst: Fst) -> CsrFst:
    """Lay the graph out state-major with source arc order preserved.

    The global index of the j-th arc of state s is row_offsets[s] + j; this
    index space is what biasing contexts refer to.
    """
    n = fst.num_arcs
    row_offsets = fst.arc_offsets().copy()
    ilabels = np.empty(n, dtype=np.int64)
    olabels = np.empty(n, dtype=np.int64)
    next_states = np.empty(n, dtype=np.int64)
    weights = np.empty(n, dtype=np.float64)
    for g, _, arc in fst.iter_arcs():
        ilabels[g] = arc.ilabel
        olabels[g] = arc.olabel
        next_states[g] = arc.next_state
        weights[g] = arc.weight
    return CsrFst(
        start=fst.start,
        row_offsets=row_offsets,
        ilabels=ilabels,
        olabels=olabels,
        next_states=next_states,
        weights=weights,
        finals=dict(fst.finals),
        fingerprint=fst.fingerprint(),
    )


def _fingerprint(start, num_states, arc_tuples, finals) -> str:
    h = hashlib.sha256()
    h.update(f"{start} {num_states}\n".encode())
    for il, ol, dst, w in arc_tuples:
        h.update(f"{il} {ol} {dst} {w!r}\n".encode())
    for state in sorted(finals):
        h.update(f"f {state} {finals[state]!r}\n".encode())
    return h.hexdigest()


def parse_text_fst(text: str | Iterable[str], num_states_hint: int | None = None) -> Fst:
    """Parse the conventional FST text format.

    Arc lines are ``src dst ilabel olabel [weight]`` and final lines are
    ``state [weight]``, whitespace-separated; a missing weight reads as 0.
    The first line's first field names the start state. State count is
    inferred as max mentioned id + 1 unless ``num_states_hint`` enlarges it.
    """
    if hasattr(text, "read"):
        text = text.read()  # type: ignore[union-attr]
    if isinstance(text, str):
        lines = text.splitlines()
    else:
        lines = [ln.rstrip("\r\n") for ln in text]

    start: int | None = None
    arc_rows: list[tuple[int, int, int, int, float, int]] = []  # + line number
    final_rows: list[tuple[int, float, int]] = []
    max_state = -1

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        try:
            if len(fields) in (4, 5):
                src, dst, il, ol = (int(f) for f in fields[:4])
                w = float(fields[4]) if len(fields) == 5 else 0.0
                if min(src, dst, il, ol) < 0:
                    raise ValueError("negative field")
                if not math.isfinite(w):
                    raise ValueError("non-finite weight")
                arc_rows.append((src, dst, il, ol, w, lineno))
                max_state = max(max_state, src, dst)
            elif len(fields) in (1, 2):
                state = int(fields[0])
                w = float(fields[1]) if len(fields) == 2 else 0.0
                if state < 0:
                    raise ValueError("negative state")
                if not math.isfinite(w):
                    raise ValueError("non-finite weight")
                final_rows.append((state, w, lineno))
                max_state = max(max_state, state)
            else:
                raise ValueError(f"expected 1, 2, 4 or 5 fields, got {len(fields)}")
        except ValueError as exc:
            raise FstParseError(f"line {lineno}: {exc}: {raw!r}") from None
        if start is None:
            start = int(fields[0])

    if start is None:
        raise FstParseError("no start state: input contains no arc or final lines")

    num_states = max_state + 1
    if num_states_hint is not None:
        if num_states_hint < num_states:
            raise FstStructureError(
                f"num_states_hint {num_states_hint} smaller than highest "
                f"referenced state {max_state}"
            )
        num_states = num_states_hint

    arcs: list[list[Arc]] = [[] for _ in range(num_states)]
    for src, dst, il, ol, w, lineno in arc_rows:
        arcs[src].append(Arc(il, ol, dst, w))
    finals: dict[int, Cost] = {}
    for state, w, lineno in final_rows:
        if state in finals:
            raise FstParseError(f"line {lineno}: duplicate final line for state {state}")
        finals[state] = w
    return Fst(start=start, num_states=num_states, arcs=arcs, finals=finals)


def serialize_text_fst(fst: Fst) -> str:
    """Inverse of :func:`parse_text_fst`.

    The start state's lines are written first so re-parsing recovers the
    start; re-parse with ``num_states_hint=fst.num_states`` to preserve
    trailing states that no line mentions.
    """
    out: list[str] = []

    def emit_arcs(state: int) -> None:
        for arc in fst.arcs[state]:
            out.append(f"{state} {arc.next_state} {arc.ilabel} {arc.olabel} {arc.weight!r}")

    if fst.num_states and not fst.arcs[fst.start] and fst.start not in fst.finals:
        # The first line's first field names the start state on re-parse.
        raise FstStructureError(
            f"start state {fst.start} has no arcs and no final weight; "
            "the text format cannot express it"
        )
    if fst.num_states:
        if not fst.arcs[fst.start] and fst.start in fst.finals:
            out.append(f"{fst.start} {fst.finals[fst.start]!r}")
        emit_arcs(fst.start)
        for state in range(fst.num_states):
            if state != fst.start:
                emit_arcs(state)
        for state in sorted(fst.finals):
            if state == fst.start and not fst.arcs[fst.start]:
                continue  # already written as the leading line
            out.append(f"{state} {fst.finals[state]!r}")
    return "\n".join(out) + ("\n" if out else "")


def epsilon_output_closure(fst: Fst, state: int, max_depth: int) -> set[int]:
    """States reachable from ``state`` over arcs whose output label is epsilon,
    following at most ``max_depth`` such arcs on any path. Input labels are not
    constrained; the seed state is always included."""
    if not 0 <= state < fst.num_states:
        raise FstStructureError(f"state {state} out of range")
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    visited = {state}
    frontier = [state]
    for _ in range(max_depth):
        if not frontier:
            break
        nxt: list[int] = []
        for s in frontier:
            for arc in fst.arcs[s]:
                if arc.olabel == EPSILON and arc.next_state not in visited:
                    visited.add(arc.next_state)
                    nxt.append(arc.next_state)
        frontier = nxt
    return visited


class SymbolTable:
    """Bijective word <-> label-id map; id 0 is the epsilon symbol."""

    def __init__(self, word_to_id: dict[str, int]):
        if 0 not in word_to_id.values():
            raise SymbolTableError("missing epsilon entry at id 0")
        self._word_to_id = dict(word_to_id)
        self._id_to_word: dict[int, str] = {}
        for word, label in self._word_to_id.items():
            if label in self._id_to_word:
                raise SymbolTableError(f"duplicate id {label} ({self._id_to_word[label]!r} vs {word!r})")
            self._id_to_word[label] = word

    def __len__(self) -> int:
        return len(self._word_to_id)

    def __contains__(self, word: str) -> bool:
        return word in self._word_to_id

    def id_of(self, word: str) -> Label:
        try:
            return self._word_to_id[word]
        except KeyError:
            raise SymbolTableError(f"unknown word {word!r}") from None

    def get_id(self, word: str) -> Label | None:
        return self._word_to_id.get(word)

    def word_of(self, label: Label) -> str:
        try:
            return self._id_to_word[label]
        except KeyError:
            raise SymbolTableError(f"unknown label id {label}") from None

    def words(self) -> Iterator[str]:
        return iter(self._word_to_id)

    @property
    def epsilon_word(self) -> str:
        return self._id_to_word[EPSILON]


def parse_symbol_table(text: str | Iterable[str]) -> SymbolTable:
    """Parse ``word id`` lines into a SymbolTable; duplicates are rejected."""
    if hasattr(text, "read"):
        text = text.read()  # type: ignore[union-attr]
    lines = text.splitlines() if isinstance(text, str) else list(text)
    word_to_id: dict[str, int] = {}
    seen_ids: dict[int, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 2:
            raise FstParseError(f"line {lineno}: expected 'word id', got {raw!r}")
        word = fields[0]
        try:
            label = int(fields[1])
        except ValueError:
            raise FstParseError(f"line {lineno}: bad id {fields[1]!r}") from None
        if label < 0:
            raise FstParseError(f"line {lineno}: negative id {label}")
        if word in word_to_id:
            raise SymbolTableError(f"duplicate word {word!r}")
        if label in seen_ids:
            raise SymbolTableError(f"duplicate id {label} ({seen_ids[label]!r} vs {word!r})")
        word_to_id[word] = label
        seen_ids[label] = word
    return SymbolTable(word_to_id)
