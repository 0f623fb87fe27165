"""Command-line front end: decode, gen-scores, compile-context, score."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .biasing import (
    BoostCompileConfig,
    ContextRegistry,
    EntityList,
    compile_context,
    load_registry,
    read_context_manifest,
)
from .decoder import DecoderConfig
from .fst import build_csr, parse_symbol_table, parse_text_fst
from .harness import (
    generate_score_files,
    read_transcripts,
    read_utterance_specs,
    run_decode,
)
from .metrics import compute_ent_wer, compute_wer


def _read(path: str, what: str) -> str:
    p = Path(path)
    try:
        return p.read_text(encoding="utf-8")
    except OSError as exc:
        raise SystemExit(f"error: cannot read {what} {path!r}: {exc}")


def _load_graph_and_symtab(args):
    fst = parse_text_fst(_read(args.graph, "graph"))
    symtab = parse_symbol_table(_read(args.symtab, "symbol table"))
    return fst, symtab


def _cmd_decode(args) -> int:
    fst, symtab = _load_graph_and_symtab(args)
    csr = build_csr(fst)
    registry: ContextRegistry | None = None
    if args.contexts:
        manifest = read_context_manifest(_read(args.contexts, "context manifest"))
        cfg = BoostCompileConfig(discount=args.discount)
        registry = load_registry(fst, symtab, manifest, cfg)
    specs = read_utterance_specs(_read(args.utts, "utterance manifest"))
    dec_cfg = DecoderConfig(
        beam=args.beam,
        max_active=args.max_active,
        partial_every=args.partial_every,
    )
    report, jsonl = run_decode(
        csr, symtab, registry, specs, dec_cfg, num_workers=args.workers
    )
    report_path = Path(args.report)
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")
    hyps_path = Path(args.hyps) if args.hyps else report_path.with_suffix(".jsonl")
    hyps_path.write_text("\n".join(jsonl) + ("\n" if jsonl else ""), encoding="utf-8")

    failed = [u["utt_id"] for u in report.utterances if u["error"]]
    print(
        f"decoded {len(report.utterances)} utterances "
        f"({len(failed)} failed), biasing: {report.biasing}"
    )
    if report.wer is not None:
        print(f"WER {report.wer:.2f}%" + (f"  EntWER {report.ent_wer:.2f}%" if report.ent_wer is not None else ""))
    if report.rtfx is not None:
        print(f"RTFX {report.rtfx:.2f}")
    print(f"report: {report_path}  hypotheses: {hyps_path}")
    for utt in failed:
        print(f"warning: utterance {utt} failed", file=sys.stderr)
    return 0


def _cmd_gen_scores(args) -> int:
    fst, symtab = _load_graph_and_symtab(args)
    transcripts = read_transcripts(_read(args.transcript, "transcript file"))
    paths = generate_score_files(
        fst,
        symtab,
        transcripts,
        args.out_dir,
        noise=args.noise,
        default_margin=args.margin,
        seed=args.seed,
        frame_duration=args.frame_duration,
    )
    print(f"wrote {len(paths)} score files to {args.out_dir}")
    return 0


def _cmd_compile_context(args) -> int:
    fst, symtab = _load_graph_and_symtab(args)
    entities = EntityList.parse_text(_read(args.entities, "entity list"), source=args.entities)
    cfg = BoostCompileConfig(discount=args.discount)
    ctx = compile_context(fst, symtab, entities, cfg, id=args.id)
    out = Path(args.out) if args.out else None
    text = ctx.to_json()
    if out:
        out.write_text(text + "\n", encoding="utf-8")
        print(f"context {ctx.id!r}: {len(ctx.arc_indices)} boosted arcs -> {out}")
    else:
        print(text)
    return 0


def _cmd_score(args) -> int:
    specs = read_utterance_specs(_read(args.utts, "utterance manifest"))
    finals: dict[str, list[str]] = {}
    for line in _read(args.hyps, "hypothesis stream").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("kind") == "final":
            finals.setdefault(rec["utterance"], []).extend(rec["words"])
    refs, hyps, ents = [], [], []
    for spec in specs:
        if spec.reference is None:
            continue
        refs.append(spec.reference)
        hyps.append(finals.get(spec.utt_id, []))
        ents.append(spec.entities or [])
    if not refs:
        raise SystemExit("error: no utterances with references to score")
    wer = compute_wer(list(zip(refs, hyps)))
    result = {"wer": wer, "ent_wer": None, "utterances_scored": len(refs)}
    if any(ents):
        result["ent_wer"] = compute_ent_wer(refs, hyps, ents)
    text = json.dumps(result, indent=2)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arcboost",
        description="Streaming WFST decoding with dynamic contextual biasing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    dec = sub.add_parser("decode", help="decode an utterance manifest and write a report")
    dec.add_argument("--graph", required=True, help="decoding graph, FST text format")
    dec.add_argument("--symtab", required=True, help="word symbol table")
    dec.add_argument("--contexts", help="context manifest TSV: id<TAB>entity-file")
    dec.add_argument("--utts", required=True, help="utterance manifest TSV")
    dec.add_argument("--beam", type=float, default=16.0)
    dec.add_argument("--max-active", type=int, default=7000)
    dec.add_argument("--discount", type=float, default=-2.0)
    dec.add_argument("--partial-every", type=int, default=10)
    dec.add_argument("--report", required=True, help="JSON report output path")
    dec.add_argument("--hyps", help="JSONL hypothesis stream path (default: report with .jsonl)")
    dec.add_argument("--workers", type=int, default=1, help="decode worker threads")
    dec.set_defaults(func=_cmd_decode)

    gen = sub.add_parser("gen-scores", help="synthesize score matrices for transcripts")
    gen.add_argument("--graph", required=True)
    gen.add_argument("--symtab", required=True)
    gen.add_argument("--transcript", required=True, help="TSV: utt_id, words, [distractor], [margin]")
    gen.add_argument("--out-dir", required=True)
    gen.add_argument("--noise", type=float, default=5.0, help="cost offset for non-target labels")
    gen.add_argument("--margin", type=float, default=None,
                     help="decision margin toward the distractor for rows that name one")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--frame-duration", type=float, default=0.03)
    gen.set_defaults(func=_cmd_gen_scores)

    comp = sub.add_parser("compile-context", help="compile an entity list and dump the context JSON")
    comp.add_argument("--graph", required=True)
    comp.add_argument("--symtab", required=True)
    comp.add_argument("--entities", required=True, help="entity list, one per line")
    comp.add_argument("--id", required=True)
    comp.add_argument("--discount", type=float, default=-2.0)
    comp.add_argument("--out", help="output JSON path (default: stdout)")
    comp.set_defaults(func=_cmd_compile_context)

    sco = sub.add_parser("score", help="score a hypothesis stream against references")
    sco.add_argument("--hyps", required=True, help="JSONL hypothesis stream")
    sco.add_argument("--utts", required=True, help="utterance manifest with references")
    sco.add_argument("--report", help="optional JSON output path")
    sco.set_defaults(func=_cmd_score)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
