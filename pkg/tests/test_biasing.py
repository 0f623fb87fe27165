import json
import random

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from arcboost.biasing import (
    BiasingCompileError,
    BiasingContext,
    BoostCompileConfig,
    ContextStats,
    EntityList,
    UnknownContextError,
    biasing_fst_to_entities,
    compile_context,
    dfs_special,
    effective_weight,
    find_boost_arcs,
    load_registry,
    read_context_manifest,
    sorted_contains,
    states_that_output_token,
)
from arcboost.fst import Arc, Fst, parse_symbol_table, parse_text_fst
from arcboost.oracle import ChainBound, brute_force_boost_arcs

ALPHA, BRAVO, CHARLIE = 1, 2, 3
CFG = BoostCompileConfig()


@st.composite
def graph_and_words(draw):
    num_states = draw(st.integers(2, 8))
    num_labels = draw(st.integers(1, 4))
    rows = draw(
        st.lists(
            st.tuples(
                st.integers(0, num_states - 1),  # src
                st.integers(0, num_states - 1),  # dst
                st.integers(0, num_labels),      # olabel, 0 = epsilon
            ),
            min_size=1,
            max_size=24,
        )
    )
    arcs = [[] for _ in range(num_states)]
    for src, dst, ol in rows:
        arcs[src].append(Arc(ilabel=ol, olabel=ol, next_state=dst, weight=0.0))
    fst = Fst(start=0, num_states=num_states, arcs=arcs, finals={num_states - 1: 0.0})
    words = draw(st.lists(st.integers(1, num_labels), min_size=1, max_size=4))
    return fst, words


class TestAlgorithmPieces:
    def test_states_that_output_token(self, f1):
        assert states_that_output_token(f1, ALPHA) == {(1, 0)}
        assert states_that_output_token(f1, BRAVO) == {(2, 2), (2, 4)}
        assert states_that_output_token(f1, 99) == set()

    def test_states_that_output_token_rejects_epsilon(self, f1):
        with pytest.raises(BiasingCompileError):
            states_that_output_token(f1, 0)

    def test_dfs_special(self, f1):
        assert dfs_special(f1, 1, BRAVO, 8) == {(2, 2), (2, 4)}
        assert dfs_special(f1, 3, ALPHA, 8) == set()
        assert dfs_special(f1, 0, CHARLIE, 8) == {(3, 1)}

    def test_dfs_special_depth_zero_sees_only_direct_arcs(self, f1):
        assert dfs_special(f1, 1, BRAVO, 0) == {(2, 2)}


class TestFindBoostArcs:
    def test_single_word(self, f1):
        assert find_boost_arcs(f1, [ALPHA], CFG) == [0]

    def test_two_word_entity(self, f1):
        assert find_boost_arcs(f1, [ALPHA, BRAVO], CFG) == [0, 2, 4]

    def test_unmatchable_continuation(self, f1):
        assert find_boost_arcs(f1, [CHARLIE, ALPHA], CFG) == []

    def test_rejects_empty_and_epsilon(self, f1):
        with pytest.raises(BiasingCompileError):
            find_boost_arcs(f1, [], CFG)
        with pytest.raises(BiasingCompileError):
            find_boost_arcs(f1, [ALPHA, 0], CFG)

    def test_single_word_completeness(self, f1):
        # k = 1 boosts exactly the arcs outputting that word
        for w in (ALPHA, BRAVO, CHARLIE):
            expect = sorted(g for g, _, a in f1.iter_arcs() if a.olabel == w)
            assert find_boost_arcs(f1, [w], CFG) == expect

    @settings(max_examples=300, deadline=None)
    @given(graph_and_words())
    def test_matches_brute_force_oracle(self, case):
        fst, words = case
        got = find_boost_arcs(fst, words, CFG)
        want = brute_force_boost_arcs(fst, words, ChainBound(CFG.max_epsilon_depth))
        assert got == want


class TestCompileContext:
    def test_two_word_entity(self, f1, f1_symtab):
        ctx = compile_context(
            f1, f1_symtab, EntityList([["alpha", "bravo"]]), CFG, id="c1"
        )
        assert ctx.arc_indices.tolist() == [0, 2, 4]
        assert ctx.discount == -2.0
        assert ctx.stats == ContextStats(compiled=1)

    def test_oov_entity_skipped_and_counted(self, f1, f1_symtab):
        ctx = compile_context(
            f1, f1_symtab, EntityList([["alpha", "zulu"]]), CFG, id="c"
        )
        assert ctx.arc_indices.tolist() == []
        assert ctx.stats.skipped_oov == 1
        assert ctx.stats.empty

    def test_oov_strict_mode_raises(self, f1, f1_symtab):
        cfg = BoostCompileConfig(skip_oov=False)
        with pytest.raises(BiasingCompileError, match="zulu"):
            compile_context(f1, f1_symtab, EntityList([["alpha", "zulu"]]), cfg, id="c")

    def test_union_of_entities(self, f1, f1_symtab):
        ctx = compile_context(
            f1, f1_symtab, EntityList([["alpha", "bravo"], ["charlie"]]), CFG, id="c"
        )
        assert ctx.arc_indices.tolist() == [0, 1, 2, 4]
        assert ctx.stats.compiled == 2

    def test_unmatched_entity_counted(self, f1, f1_symtab):
        ctx = compile_context(
            f1, f1_symtab, EntityList([["charlie", "alpha"]]), CFG, id="c"
        )
        assert ctx.arc_indices.tolist() == []
        assert ctx.stats.unmatched == 1

    def test_permutation_invariance(self, f1, f1_symtab):
        entries = [["alpha", "bravo"], ["charlie"], ["bravo"]]
        a = compile_context(f1, f1_symtab, EntityList(entries), CFG, id="c")
        b = compile_context(f1, f1_symtab, EntityList(entries[::-1]), CFG, id="c")
        assert a.arc_indices.tolist() == b.arc_indices.tolist()

    def test_duplicate_entities_deduplicated(self, f1, f1_symtab):
        twice = compile_context(
            f1, f1_symtab, EntityList([["alpha"], ["alpha"]]), CFG, id="c"
        )
        assert twice.stats.compiled == 1

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_union_equals_separate_compiles(self, seed):
        rng = random.Random(seed)
        from arcboost.synth import random_fst

        fst = random_fst(rng, max_states=12, max_arcs=40, num_labels=4)
        symtab = parse_symbol_table("<eps> 0\nw1 1\nw2 2\nw3 3\nw4 4\n")
        word = lambda: f"w{rng.randint(1, 4)}"
        group_a = [[word() for _ in range(rng.randint(1, 3))] for _ in range(rng.randint(1, 3))]
        group_b = [[word() for _ in range(rng.randint(1, 3))] for _ in range(rng.randint(1, 3))]
        both = compile_context(fst, symtab, EntityList(group_a + group_b), CFG, id="ab")
        a = compile_context(fst, symtab, EntityList(group_a), CFG, id="a")
        b = compile_context(fst, symtab, EntityList(group_b), CFG, id="b")
        assert both.arc_indices.tolist() == sorted(
            set(a.arc_indices.tolist()) | set(b.arc_indices.tolist())
        )


class TestContextLookup:
    def test_is_boosted_examples(self):
        ctx = BiasingContext(id="c", arc_indices=np.array([3, 17, 42]), discount=-2.0)
        assert ctx.is_boosted(17)
        assert not ctx.is_boosted(5)
        empty = BiasingContext(id="e", arc_indices=np.array([], dtype=np.int64), discount=-2.0)
        assert not empty.is_boosted(0)

    def test_is_boosted_agrees_with_linear_scan(self):
        rng = random.Random(3)
        for _ in range(200):
            k = rng.randint(0, 60)
            idx = sorted(rng.sample(range(500), k))
            ctx = BiasingContext(id="c", arc_indices=np.array(idx, dtype=np.int64), discount=-1.0)
            for _ in range(50):
                g = rng.randrange(520)
                assert ctx.is_boosted(g) == (g in set(idx))

    def test_sorted_contains_comparison_bound(self):
        rng = random.Random(4)
        for k in (1, 2, 3, 4, 10, 64, 1013):
            idx = np.array(sorted(rng.sample(range(10 * k + 5), k)), dtype=np.int64)
            bound = int(np.ceil(np.log2(k))) + 1 if k > 1 else 1
            for _ in range(200):
                tally = []
                sorted_contains(idx, rng.randrange(10 * k + 5), tally)
                assert tally[0] <= bound

    def test_boosted_mask_matches_scalar_lookup(self):
        rng = random.Random(9)
        idx = np.array(sorted(rng.sample(range(1000), 37)), dtype=np.int64)
        ctx = BiasingContext(id="c", arc_indices=idx, discount=-2.0)
        queries = np.array([rng.randrange(1010) for _ in range(300)], dtype=np.int64)
        mask = ctx.boosted_mask(queries)
        assert mask.tolist() == [ctx.is_boosted(int(g)) for g in queries]

    def test_effective_weight(self):
        ctx = BiasingContext(id="c", arc_indices=np.array([7]), discount=-2.0)
        assert effective_weight(ctx, 7, 0.5) == -1.5
        assert effective_weight(ctx, 8, 0.5) == 0.5
        assert effective_weight(None, 7, 0.5) == 0.5

    def test_zero_discount_neutrality(self, f1_csr):
        ctx = BiasingContext(id="c", arc_indices=np.arange(5), discount=0.0)
        for g in range(5):
            assert effective_weight(ctx, g, float(f1_csr.weights[g])) == f1_csr.weights[g]

    def test_arc_indices_must_increase(self):
        with pytest.raises(BiasingCompileError):
            BiasingContext(id="c", arc_indices=np.array([3, 3]), discount=-2.0)
        with pytest.raises(BiasingCompileError):
            BiasingContext(id="c", arc_indices=np.array([5, 2]), discount=-2.0)

    def test_positive_discount_needs_override(self):
        with pytest.raises(BiasingCompileError):
            BoostCompileConfig(discount=1.0)
        cfg = BoostCompileConfig(discount=1.0, allow_positive_discount=True)
        assert cfg.discount == 1.0

    def test_context_json_round_trip(self):
        ctx = BiasingContext(
            id="c", arc_indices=np.array([1, 4]), discount=-2.0, stats=ContextStats(compiled=2)
        )
        again = BiasingContext.from_json_dict(json.loads(ctx.to_json()))
        assert again.id == ctx.id
        assert again.arc_indices.tolist() == [1, 4]
        assert again.stats == ctx.stats


class TestBiasingFstToEntities:
    def test_linear_acceptor(self, f1_symtab):
        bfst = parse_text_fst("0 1 1 1 0.0\n1 2 2 2 0.0\n2 0.0\n")
        ents = biasing_fst_to_entities(bfst, f1_symtab, max_paths=10)
        assert ents.entries == [["alpha", "bravo"]]

    def test_branching_acceptor(self, f1_symtab):
        bfst = parse_text_fst("0 1 1 1 0.0\n0 1 3 3 0.0\n1 0.0\n")
        ents = biasing_fst_to_entities(bfst, f1_symtab, max_paths=10)
        assert sorted(ents.entries) == [["alpha"], ["charlie"]]

    def test_epsilon_arcs_do_not_emit(self, f1_symtab):
        bfst = parse_text_fst("0 1 0 0 0.0\n1 2 2 2 0.0\n2 0.0\n")
        ents = biasing_fst_to_entities(bfst, f1_symtab, max_paths=10)
        assert ents.entries == [["bravo"]]

    def test_cycle_rejected(self, f1_symtab):
        bfst = parse_text_fst("0 1 1 1 0.0\n1 0 2 2 0.0\n1 0.0\n")
        with pytest.raises(BiasingCompileError, match="cyclic"):
            biasing_fst_to_entities(bfst, f1_symtab, max_paths=10)

    def test_max_paths_exceeded(self, f1_symtab):
        bfst = parse_text_fst("0 1 1 1 0.0\n0 1 2 2 0.0\n0 1 3 3 0.0\n1 0.0\n")
        with pytest.raises(BiasingCompileError, match="max_paths"):
            biasing_fst_to_entities(bfst, f1_symtab, max_paths=2)


class TestRegistry:
    def _write_entities(self, tmp_path, name, lines):
        p = tmp_path / name
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return p

    def test_load_registry(self, f1, f1_symtab, tmp_path):
        m = [
            ("radar-t0", self._write_entities(tmp_path, "a.txt", ["alpha bravo"])),
            ("radar-t1", self._write_entities(tmp_path, "b.txt", ["charlie"])),
            ("radar-t2", self._write_entities(tmp_path, "c.txt", ["# comment", "bravo"])),
        ]
        reg = load_registry(f1, f1_symtab, m, CFG)
        assert len(reg) == 3
        assert reg.get("radar-t0").arc_indices.tolist() == [0, 2, 4]
        assert reg.get("radar-t2").arc_indices.tolist() == [2, 4]
        assert reg.graph_fingerprint == f1.fingerprint()
        assert "radar-t1" in reg and "nope" not in reg

    def test_duplicate_id_rejected(self, f1, f1_symtab, tmp_path):
        p = self._write_entities(tmp_path, "a.txt", ["alpha"])
        with pytest.raises(BiasingCompileError, match="radar-t0"):
            load_registry(f1, f1_symtab, [("radar-t0", p), ("radar-t0", p)], CFG)

    def test_unreadable_file_names_path(self, f1, f1_symtab, tmp_path):
        missing = tmp_path / "missing.txt"
        with pytest.raises(BiasingCompileError, match="missing.txt"):
            load_registry(f1, f1_symtab, [("c", missing)], CFG)

    def test_unknown_context_lookup(self, f1, f1_symtab, tmp_path):
        reg = load_registry(f1, f1_symtab, [], CFG)
        with pytest.raises(UnknownContextError):
            reg.get("ghost")
        assert reg.resolve(None) is None

    def test_manifest_parsing(self):
        rows = read_context_manifest("c1\tents/a.txt\n# note\nc2\tents/b.txt\n")
        assert rows == [("c1", "ents/a.txt"), ("c2", "ents/b.txt")]
        with pytest.raises(BiasingCompileError, match="line 1"):
            read_context_manifest("just-one-column\n")


class TestEntityList:
    def test_parse_text(self):
        ents = EntityList.parse_text("alpha bravo\n# comment\n\ncharlie\n", source="s")
        assert ents.entries == [["alpha", "bravo"], ["charlie"]]

    def test_empty_entry_rejected(self):
        with pytest.raises(BiasingCompileError):
            EntityList([["alpha"], []])
