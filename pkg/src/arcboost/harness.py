"""Run orchestration: utterance manifests, batched decoding waves, scoring,
and machine-readable reports.

Input manifests are TSV (diffable); reports are a single JSON document plus a
JSON-lines hypothesis stream.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .biasing import ContextRegistry
from .decoder import (
    Channel,
    ChannelStatus,
    CsrFst,
    DecoderConfig,
    Hypothesis,
    decode_batch,
    init_channel,
    switch_context,
)
from .fst import Fst, SymbolTable
from .metrics import ScoringError, compute_ent_wer, compute_rtfx, compute_wer
from .scores import ScoreMatrix, load_score_matrix, save_score_matrix
from .synth import Realization, realize_transcript, synth_score_matrix


class ManifestError(ValueError):
    pass


@dataclass
class UtteranceSpec:
    """One row of the utterance manifest: a score stream bound to a channel,
    an optional biasing context, and optional scoring references."""

    utt_id: str
    channel_id: str
    score_path: str
    context_id: str | None = None
    reference: list[str] | None = None
    entities: list[list[str]] | None = None


def _opt(field_text: str) -> str | None:
    text = field_text.strip()
    return None if text in ("", "-") else text


def read_utterance_specs(text: str) -> list[UtteranceSpec]:
    """TSV columns: utt_id, channel_id, score_path, [context_id], [reference],
    [entities]. Entities are '|'-separated word sequences; '-' or an empty
    cell means absent."""
    specs: list[UtteranceSpec] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) < 3:
            raise ManifestError(
                f"utterance manifest line {lineno}: expected at least "
                f"utt_id, channel_id, score_path; got {raw!r}"
            )
        utt_id = cols[0].strip()
        if utt_id in seen:
            raise ManifestError(f"utterance manifest line {lineno}: duplicate utt_id {utt_id!r}")
        seen.add(utt_id)
        context_id = _opt(cols[3]) if len(cols) > 3 else None
        ref_text = _opt(cols[4]) if len(cols) > 4 else None
        ent_text = _opt(cols[5]) if len(cols) > 5 else None
        specs.append(
            UtteranceSpec(
                utt_id=utt_id,
                channel_id=cols[1].strip(),
                score_path=cols[2].strip(),
                context_id=context_id,
                reference=ref_text.split() if ref_text else None,
                entities=[e.split() for e in ent_text.split("|")] if ent_text else None,
            )
        )
    return specs


def format_utterance_specs(specs: list[UtteranceSpec]) -> str:
    rows = []
    for s in specs:
        rows.append(
            "\t".join(
                [
                    s.utt_id,
                    s.channel_id,
                    s.score_path,
                    s.context_id or "-",
                    " ".join(s.reference) if s.reference else "-",
                    "|".join(" ".join(e) for e in s.entities) if s.entities else "-",
                ]
            )
        )
    return "\n".join(rows) + ("\n" if rows else "")


@dataclass
class UtteranceResult:
    spec: UtteranceSpec
    hypotheses: list[Hypothesis] = field(default_factory=list)
    audio_seconds: float = 0.0
    error: str | None = None

    @property
    def final_words(self) -> list[int]:
        words: list[int] = []
        for h in self.hypotheses:
            if h.kind == "final":
                words.extend(h.words)
        return words


@dataclass
class RunReport:
    utterances: list[dict]
    biasing: str
    wer: float | None
    ent_wer: float | None
    rtfx: float | None
    boosted_arc_counts: dict[str, int]
    timing: dict[str, float]
    audio_seconds: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "biasing": self.biasing,
                "wer": self.wer,
                "ent_wer": self.ent_wer,
                "rtfx": self.rtfx,
                "audio_seconds": self.audio_seconds,
                "boosted_arc_counts": self.boosted_arc_counts,
                "timing": self.timing,
                "utterances": self.utterances,
            },
            indent=2,
        )


def hypothesis_json_line(
    channel_id: str, utt_id: str, hyp: Hypothesis, symtab: SymbolTable
) -> str:
    return json.dumps(
        {
            "channel": channel_id,
            "utterance": utt_id,
            "kind": hyp.kind,
            "frame": hyp.frame,
            "cost": hyp.cost,
            "words": [symtab.word_of(w) for w in hyp.words],
            **({"fallback": True} if hyp.fallback else {}),
        },
        separators=(", ", ": "),
    )


def run_decode(
    csr: CsrFst,
    symtab: SymbolTable,
    registry: ContextRegistry | None,
    specs: list[UtteranceSpec],
    cfg: DecoderConfig,
    *,
    score_loader=load_score_matrix,
    num_workers: int = 1,
) -> tuple[RunReport, list[str]]:
    """Decode every utterance, channel by channel in waves.

    Utterances sharing a channel run sequentially on it with a context switch
    at each utterance boundary; distinct channels within a wave are decoded
    as one batch. Returns the report and the JSONL hypothesis lines.
    """
    t0 = time.perf_counter()
    by_channel: dict[str, list[UtteranceSpec]] = {}
    for spec in specs:
        by_channel.setdefault(spec.channel_id, []).append(spec)

    channels: dict[str, Channel] = {
        cid: init_channel(cid, registry, None, cfg) for cid in by_channel
    }
    matrices: dict[str, ScoreMatrix] = {}
    load_errors: dict[str, str] = {}
    for spec in specs:
        try:
            matrices[spec.utt_id] = score_loader(spec.score_path)
        except Exception as exc:
            load_errors[spec.utt_id] = f"{type(exc).__name__}: {exc}"
    load_s = time.perf_counter() - t0

    results: dict[str, UtteranceResult] = {
        s.utt_id: UtteranceResult(spec=s) for s in specs
    }
    jsonl: list[str] = []
    decode_s = 0.0
    max_wave = max((len(v) for v in by_channel.values()), default=0)
    for wave in range(max_wave):
        batch: list[tuple[Channel, ScoreMatrix]] = []
        wave_specs: list[UtteranceSpec] = []
        for cid, chan_specs in by_channel.items():
            if wave >= len(chan_specs):
                continue
            spec = chan_specs[wave]
            res = results[spec.utt_id]
            if spec.utt_id in load_errors:
                res.error = load_errors[spec.utt_id]
                continue
            ch = channels[cid]
            # without a registry the run is globally unbiased: context
            # bindings in the manifest are ignored, not errors
            context_id = spec.context_id if registry is not None else None
            try:
                switch_context(ch, registry, context_id)
            except Exception as exc:
                res.error = f"{type(exc).__name__}: {exc}"
                continue
            batch.append((ch, matrices[spec.utt_id]))
            wave_specs.append(spec)
        if not batch:
            continue
        t1 = time.perf_counter()
        channel_results = decode_batch(batch, csr, registry, cfg, num_workers=num_workers)
        decode_s += time.perf_counter() - t1
        for spec, cres in zip(wave_specs, channel_results):
            res = results[spec.utt_id]
            res.hypotheses = cres.hypotheses
            res.error = cres.error
            res.audio_seconds = matrices[spec.utt_id].audio_seconds
            for hyp in cres.hypotheses:
                jsonl.append(hypothesis_json_line(spec.channel_id, spec.utt_id, hyp, symtab))

    t2 = time.perf_counter()
    scored = [
        r for r in results.values() if r.error is None and r.spec.reference is not None
    ]
    wer = ent_wer = None
    if scored:
        pairs = [
            (r.spec.reference, [symtab.word_of(w) for w in r.final_words]) for r in scored
        ]
        wer = compute_wer(pairs)
        with_entities = [r for r in scored if r.spec.entities]
        if with_entities:
            try:
                ent_wer = compute_ent_wer(
                    [r.spec.reference for r in with_entities],
                    [[symtab.word_of(w) for w in r.final_words] for r in with_entities],
                    [r.spec.entities for r in with_entities],
                )
            except ScoringError:
                ent_wer = None
    score_s = time.perf_counter() - t2

    audio_seconds = sum(r.audio_seconds for r in results.values())
    rtfx = compute_rtfx(audio_seconds, decode_s) if decode_s > 0 and audio_seconds > 0 else None

    utt_rows = []
    for spec in specs:
        r = results[spec.utt_id]
        finals = [h for h in r.hypotheses if h.kind == "final"]
        utt_rows.append(
            {
                "utt_id": spec.utt_id,
                "channel": spec.channel_id,
                "context": spec.context_id,
                "audio_seconds": r.audio_seconds,
                "words": [symtab.word_of(w) for w in r.final_words],
                "final_cost": finals[-1].cost if finals else None,
                "num_partials": sum(h.kind == "partial" for h in r.hypotheses),
                "num_finals": len(finals),
                "fallback": any(h.fallback for h in finals),
                "error": r.error,
            }
        )
    report = RunReport(
        utterances=utt_rows,
        biasing=(
            "none"
            if registry is None or len(registry) == 0
            else f"{len(registry)} pre-loaded contexts"
        ),
        wer=wer,
        ent_wer=ent_wer,
        rtfx=rtfx,
        boosted_arc_counts=(
            {cid: len(registry.get(cid).arc_indices) for cid in registry.ids()}
            if registry is not None
            else {}
        ),
        timing={
            "load_s": load_s,
            "decode_s": decode_s,
            "score_s": score_s,
            "wall_s": time.perf_counter() - t0,
        },
        audio_seconds=audio_seconds,
    )
    return report, jsonl


@dataclass
class TranscriptSpec:
    utt_id: str
    words: list[str]
    distractor: list[str] | None = None
    margin: float | None = None


def read_transcripts(text: str) -> list[TranscriptSpec]:
    """TSV columns: utt_id, transcript, [distractor], [margin]."""
    rows: list[TranscriptSpec] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        cols = raw.split("\t")
        if len(cols) < 2 or not cols[1].split():
            raise ManifestError(
                f"transcript line {lineno}: expected 'utt_id<TAB>words...', got {raw!r}"
            )
        distractor = _opt(cols[2]) if len(cols) > 2 else None
        margin_text = _opt(cols[3]) if len(cols) > 3 else None
        rows.append(
            TranscriptSpec(
                utt_id=cols[0].strip(),
                words=cols[1].split(),
                distractor=distractor.split() if distractor else None,
                margin=float(margin_text) if margin_text else None,
            )
        )
    return rows


def generate_score_files(
    fst: Fst,
    symtab: SymbolTable,
    transcripts: list[TranscriptSpec],
    out_dir: str | Path,
    *,
    noise: float = 5.0,
    default_margin: float | None = None,
    seed: int = 0,
    frame_duration: float = 0.03,
) -> dict[str, Path]:
    """Write one score-matrix file per transcript; reproducible from the seed.

    Each utterance draws its jitter from a stream keyed by (seed, row index),
    so regenerating any subset is byte-stable.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    for i, row in enumerate(transcripts):
        truth = realize_transcript(fst, symtab, row.words)
        distractor: Realization | None = None
        margin = row.margin if row.margin is not None else default_margin
        if row.distractor:
            distractor = realize_transcript(fst, symtab, row.distractor)
        matrix = synth_score_matrix(
            _emitting_label_count(fst),
            truth,
            noise=noise,
            rng=np.random.default_rng([seed, i]),
            distractor=distractor,
            margin=margin if distractor is not None else None,
            frame_duration=frame_duration,
        )
        path = out_dir / f"{row.utt_id}.scores"
        save_score_matrix(matrix, path)
        paths[row.utt_id] = path
    return paths


def _emitting_label_count(fst: Fst) -> int:
    return max((a.ilabel for _, _, a in fst.iter_arcs()), default=0)
