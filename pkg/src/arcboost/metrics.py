"""Scoring: Levenshtein alignment, WER, entity-restricted WER, and RTFX."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


class ScoringError(ValueError):
    pass


MATCH = "match"
SUBSTITUTION = "substitution"
DELETION = "deletion"
INSERTION = "insertion"


@dataclass(frozen=True)
class AlignmentOp:
    kind: str
    ref_pos: int | None
    hyp_pos: int | None


def align(ref: Sequence[str], hyp: Sequence[str]) -> list[AlignmentOp]:
    """Minimum-edit-distance alignment with unit costs.

    Backtrace ties prefer match over substitution over deletion over
    insertion, so the alignment is deterministic.
    """
    nr, nh = len(ref), len(hyp)
    dist = [[0] * (nh + 1) for _ in range(nr + 1)]
    for i in range(1, nr + 1):
        dist[i][0] = i
    for j in range(1, nh + 1):
        dist[0][j] = j
    for i in range(1, nr + 1):
        row = dist[i]
        prev = dist[i - 1]
        for j in range(1, nh + 1):
            sub = prev[j - 1] + (ref[i - 1] != hyp[j - 1])
            row[j] = min(sub, prev[j] + 1, row[j - 1] + 1)

    ops: list[AlignmentOp] = []
    i, j = nr, nh
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and dist[i][j] == dist[i - 1][j - 1]:
            ops.append(AlignmentOp(MATCH, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + 1:
            ops.append(AlignmentOp(SUBSTITUTION, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            ops.append(AlignmentOp(DELETION, i - 1, None))
            i -= 1
        else:
            ops.append(AlignmentOp(INSERTION, None, j - 1))
            j -= 1
    ops.reverse()
    return ops


def edit_counts(ops: Sequence[AlignmentOp]) -> tuple[int, int, int]:
    """(substitutions, deletions, insertions)."""
    s = sum(op.kind == SUBSTITUTION for op in ops)
    d = sum(op.kind == DELETION for op in ops)
    i = sum(op.kind == INSERTION for op in ops)
    return s, d, i


def compute_wer(pairs: Sequence[tuple[Sequence[str], Sequence[str]]]) -> float:
    """100 * (S + D + I) / total reference words, aggregated over all pairs."""
    errors = 0
    ref_words = 0
    for ref, hyp in pairs:
        s, d, i = edit_counts(align(ref, hyp))
        errors += s + d + i
        ref_words += len(ref)
    if ref_words == 0:
        raise ScoringError("no reference words to score against")
    return 100.0 * errors / ref_words


def locate_entity_spans(
    ref: Sequence[str], entities: Sequence[Sequence[str]]
) -> list[tuple[int, int]]:
    """Claim each entity's leftmost occurrence in the reference that does not
    overlap an already-claimed span; entities that never occur claim nothing.
    Returns half-open (start, end) ref-position intervals."""
    claimed: list[tuple[int, int]] = []

    def overlaps(a: int, b: int) -> bool:
        return any(a < e and s < b for s, e in claimed)

    for ent in entities:
        k = len(ent)
        if k == 0:
            continue
        for start in range(len(ref) - k + 1):
            if list(ref[start : start + k]) == list(ent) and not overlaps(start, start + k):
                claimed.append((start, start + k))
                break
    return claimed


def restricted_error_counts(
    ops: Sequence[AlignmentOp], spans: Sequence[tuple[int, int]]
) -> int:
    """Errors attributable to entity spans: substitutions and deletions whose
    ref position lies in a span, plus insertions whose nearest ref-positioned
    neighbors on both sides fall inside the same span."""

    def span_of(pos: int | None) -> int | None:
        if pos is None:
            return None
        for k, (s, e) in enumerate(spans):
            if s <= pos < e:
                return k
        return None

    errors = 0
    for idx, op in enumerate(ops):
        if op.kind in (SUBSTITUTION, DELETION):
            if span_of(op.ref_pos) is not None:
                errors += 1
        elif op.kind == INSERTION:
            left = next(
                (span_of(o.ref_pos) for o in reversed(ops[:idx]) if o.ref_pos is not None),
                None,
            )
            right = next(
                (span_of(o.ref_pos) for o in ops[idx + 1 :] if o.ref_pos is not None),
                None,
            )
            if left is not None and left == right:
                errors += 1
    return errors


def compute_ent_wer(
    refs: Sequence[Sequence[str]],
    hyps: Sequence[Sequence[str]],
    entity_spans: Sequence[Sequence[Sequence[str]]],
) -> float:
    """WER restricted to biased entities: alignment errors inside claimed
    entity spans over total claimed entity words."""
    if not (len(refs) == len(hyps) == len(entity_spans)):
        raise ScoringError("refs, hyps and entity_spans must be parallel")
    errors = 0
    entity_words = 0
    for ref, hyp, entities in zip(refs, hyps, entity_spans):
        spans = locate_entity_spans(ref, entities)
        if not spans:
            continue
        entity_words += sum(e - s for s, e in spans)
        errors += restricted_error_counts(align(ref, hyp), spans)
    if entity_words == 0:
        raise ScoringError("no entity words found in any reference")
    return 100.0 * errors / entity_words


def compute_rtfx(audio_seconds: float, wall_seconds: float) -> float:
    """Inverse real-time factor: processed audio duration over decoding time."""
    if wall_seconds <= 0:
        raise ScoringError("wall time must be positive to compute RTFX")
    return audio_seconds / wall_seconds
