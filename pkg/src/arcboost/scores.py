"""Synthetic acoustic score streams: one cost per emitting input label per frame.

Stands in for the neural acoustic model; the decoder only ever sees these
per-frame cost rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ScoreFormatError(ValueError):
    """Malformed score-matrix text."""


@dataclass
class ScoreMatrix:
    """costs[t, j] is the cost of emitting input label j+1 at frame t."""

    costs: np.ndarray  # (num_frames, num_ilabels) float64
    frame_duration: float = 0.03  # seconds per frame

    def __post_init__(self) -> None:
        costs = np.asarray(self.costs, dtype=np.float64)
        if costs.ndim != 2:
            raise ScoreFormatError("score matrix must be 2-dimensional")
        if not np.all(np.isfinite(costs)):
            raise ScoreFormatError("score matrix contains non-finite costs")
        if self.frame_duration <= 0:
            raise ScoreFormatError("frame_duration must be positive")
        self.costs = costs

    @property
    def num_frames(self) -> int:
        return self.costs.shape[0]

    @property
    def num_ilabels(self) -> int:
        return self.costs.shape[1]

    @property
    def audio_seconds(self) -> float:
        return self.num_frames * self.frame_duration

    def row(self, frame: int) -> np.ndarray:
        return self.costs[frame]


def parse_score_matrix(text: str) -> ScoreMatrix:
    """Parse the text format: header ``num_frames num_ilabels frame_duration``
    followed by one space-separated cost row per frame."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ScoreFormatError("empty score matrix")
    header = lines[0].split()
    if len(header) != 3:
        raise ScoreFormatError(f"bad header {lines[0]!r}")
    try:
        num_frames, num_ilabels = int(header[0]), int(header[1])
        frame_duration = float(header[2])
    except ValueError:
        raise ScoreFormatError(f"bad header {lines[0]!r}") from None
    if len(lines) - 1 != num_frames:
        raise ScoreFormatError(
            f"header declares {num_frames} frames but {len(lines) - 1} rows follow"
        )
    costs = np.empty((num_frames, num_ilabels), dtype=np.float64)
    for t, row_text in enumerate(lines[1:]):
        fields = row_text.split()
        if len(fields) != num_ilabels:
            raise ScoreFormatError(
                f"frame {t}: expected {num_ilabels} costs, got {len(fields)}"
            )
        try:
            costs[t] = [float(f) for f in fields]
        except ValueError:
            raise ScoreFormatError(f"frame {t}: non-numeric cost") from None
    return ScoreMatrix(costs=costs, frame_duration=frame_duration)


def format_score_matrix(matrix: ScoreMatrix) -> str:
    out = [f"{matrix.num_frames} {matrix.num_ilabels} {matrix.frame_duration!r}"]
    for t in range(matrix.num_frames):
        out.append(" ".join(repr(float(c)) for c in matrix.costs[t]))
    return "\n".join(out) + "\n"


def load_score_matrix(path: str | Path) -> ScoreMatrix:
    return parse_score_matrix(Path(path).read_text(encoding="utf-8"))


def save_score_matrix(matrix: ScoreMatrix, path: str | Path) -> None:
    Path(path).write_text(format_score_matrix(matrix), encoding="utf-8")
