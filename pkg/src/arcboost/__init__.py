"""Streaming WFST decoding with dynamic contextual biasing.

Entity word sequences are compiled into sorted sets of global arc indices;
during frame-synchronous beam search a per-channel discount is added to those
arcs at expansion time, leaving the shared decoding graph untouched.
"""

from .biasing import (
    BiasingContext,
    BoostCompileConfig,
    ContextRegistry,
    EntityList,
    biasing_fst_to_entities,
    compile_context,
    dfs_special,
    effective_weight,
    find_boost_arcs,
    load_registry,
    states_that_output_token,
)
from .decoder import (
    Channel,
    ChannelResult,
    ChannelStatus,
    DecodeError,
    DecoderConfig,
    Hypothesis,
    advance_frame,
    decode_batch,
    detect_endpoint,
    finalize,
    init_channel,
    partial_hypothesis,
    switch_context,
)
from .fst import (
    EPSILON,
    Arc,
    CsrFst,
    Fst,
    SymbolTable,
    build_csr,
    epsilon_output_closure,
    parse_symbol_table,
    parse_text_fst,
    serialize_text_fst,
)
from .metrics import align, compute_ent_wer, compute_rtfx, compute_wer
from .oracle import ChainBound, brute_force_boost_arcs, exhaustive_best_path, preboost_graph
from .scores import ScoreMatrix, load_score_matrix, parse_score_matrix, save_score_matrix

__all__ = [
    "EPSILON",
    "Arc",
    "BiasingContext",
    "BoostCompileConfig",
    "ChainBound",
    "Channel",
    "ChannelResult",
    "ChannelStatus",
    "ContextRegistry",
    "CsrFst",
    "DecodeError",
    "DecoderConfig",
    "EntityList",
    "Fst",
    "Hypothesis",
    "ScoreMatrix",
    "SymbolTable",
    "advance_frame",
    "align",
    "biasing_fst_to_entities",
    "brute_force_boost_arcs",
    "build_csr",
    "compile_context",
    "compute_ent_wer",
    "compute_rtfx",
    "compute_wer",
    "decode_batch",
    "detect_endpoint",
    "dfs_special",
    "effective_weight",
    "epsilon_output_closure",
    "exhaustive_best_path",
    "finalize",
    "find_boost_arcs",
    "init_channel",
    "load_registry",
    "load_score_matrix",
    "parse_score_matrix",
    "parse_symbol_table",
    "parse_text_fst",
    "partial_hypothesis",
    "preboost_graph",
    "save_score_matrix",
    "serialize_text_fst",
    "states_that_output_token",
    "switch_context",
]
