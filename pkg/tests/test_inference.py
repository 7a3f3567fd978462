import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbgen.data import Query
from mbgen.inference import (
    CodeTrie, Predictor, allocate_slots, beam_search, exhaustive_ranking, predictions_csv,
)
from mbgen.numerics import ops, Tensor
from mbgen.seqmodel import ModelConfig, Seq2SeqModel
from mbgen.tokenizer.vocab import BOS, TokenError, Vocabulary


class TableScorer:
    """Arbitrary but reproducible next-token laws: logits seeded by (row, prefix)."""

    def __init__(self, vocab: Vocabulary, seed: int = 0, flat: bool = False):
        self.vocab, self.seed, self.flat = vocab, seed, flat

    def encode(self, enc_tokens):
        return np.asarray(enc_tokens)

    def next_log_probs(self, state, dec_tokens, rows):
        out = np.zeros((len(dec_tokens), self.vocab.size))
        for i, (prefix, r) in enumerate(zip(np.asarray(dec_tokens), rows)):
            if not self.flat:
                rng = np.random.default_rng([self.seed, int(r), *map(int, prefix)])
                out[i] = rng.normal(scale=2.0, size=self.vocab.size)
        return ops.log_softmax(Tensor(out), axis=-1).data


def tiny_model(n_behaviors=2, K=4, seed=0):
    cfg = ModelConfig(d_model=8, d_inner=16, heads=2, head_dim=4, enc_layers=1, dec_layers=1, experts=5, n_bi=1,
                      d_beh=4, dropout=0.0, max_items=3, n_users=4, n_behaviors=n_behaviors, codebook_size=K,
                      dtype="float64", init_scale=1.0, seed=seed)
    return Seq2SeqModel(cfg)


def history(vocab, codes, items=(0, 1), behs=(0, 0)):
    toks = [vocab.user_token(1)]
    for it, b in zip(items, behs):
        toks += [vocab.behavior_token(b)] + [vocab.digit_token(j, int(c)) for j, c in enumerate(codes[it])]
    return np.array([toks + [2]])


def queries_for(codes, n, n_behaviors, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for u in range(n):
        L = int(rng.integers(1, 4))
        out.append(Query(u, f"u{u}", rng.integers(0, len(codes), L), rng.integers(0, n_behaviors, L),
                         int(rng.integers(len(codes))), int(rng.integers(n_behaviors))))
    return out


def as_tuples(pred):
    return [(int(b), tuple(int(x) for x in c)) for b, c in zip(pred.behaviors, pred.codes)]


class TestTrie:
    def test_paths_are_the_codes(self):
        codes = np.array([[1, 0, 2], [0, 3, 3], [1, 0, 0]])
        trie = CodeTrie(codes, 4)
        assert sorted(map(tuple, trie.paths().tolist())) == sorted(map(tuple, codes.tolist()))
        np.testing.assert_array_equal(trie.children([]), [0, 1])
        np.testing.assert_array_equal(trie.children([1, 0]), [0, 2])
        keys = [1 * 16 + 0 * 4 + 2, 0 * 16 + 3 * 4 + 3, 5]
        np.testing.assert_array_equal(trie.items_of_keys(keys), [0, 1, -1])

    def test_rejects_empty_and_duplicate_codes(self):
        with pytest.raises(ValueError):
            CodeTrie(np.zeros((0, 3), dtype=int), 4)
        with pytest.raises(ValueError, match="unique"):
            CodeTrie(np.array([[0, 1, 2], [0, 1, 2]]), 4)


class TestBeamSearch:
    def test_two_items_one_behavior_matches_exhaustive(self):
        model = tiny_model(n_behaviors=1)
        codes = np.array([[0, 1, 2], [3, 1, 0]])
        trie, v = CodeTrie(codes, 4), model.vocab
        state = model.encode(history(v, codes))
        pred = beam_search(model, state, np.array([[BOS]]), 4, trie, v, N=2)[0]
        ref = exhaustive_ranking(model, state, [BOS], trie, v)
        assert as_tuples(pred) == [(b, tuple(c)) for _, _, b, c in ref]
        np.testing.assert_allclose(pred.scores, [s for s, *_ in ref], atol=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 3), st.integers(2, 4), st.integers(1, 16), st.integers(0, 10_000))
    def test_full_width_equals_exhaustive_for_any_scorer(self, B, K, n_items, seed):
        rng = np.random.default_rng(seed)
        n_items = min(n_items, K ** 3, 64 // B)
        keys = rng.choice(K ** 3, size=n_items, replace=False)
        codes = np.stack([keys // K ** 2, keys // K % K, keys % K], axis=1)
        v = Vocabulary(4, B, K)
        scorer = TableScorer(v, seed)
        trie = CodeTrie(codes, K)
        total = B * n_items
        pred = beam_search(scorer, None, np.array([[BOS]]), total, trie, v, N=total)[0]
        ref = exhaustive_ranking(scorer, None, [BOS], trie, v)
        assert as_tuples(pred) == [(b, tuple(c)) for _, _, b, c in ref]
        np.testing.assert_allclose(pred.scores, [s for s, *_ in ref], atol=1e-9)
        # exhaustive width returns exactly the valid completion set
        assert set(as_tuples(pred)) == {(b, tuple(c)) for b in range(B) for c in codes.tolist()}

    def test_ties_follow_token_order(self):
        v = Vocabulary(4, 2, 3)
        codes = np.array([[2, 0, 1], [0, 2, 2], [0, 2, 0], [1, 1, 1]])
        trie = CodeTrie(codes, 3)
        pred = beam_search(TableScorer(v, flat=True), None, np.array([[BOS]]), 8, trie, v, N=8)[0]
        expect = [(b, tuple(c)) for b in range(2) for c in sorted(codes.tolist())]
        assert as_tuples(pred) == expect

    def test_prompted_behavior_is_kept(self):
        model = tiny_model(n_behaviors=3)
        codes = np.array([[0, 1, 2], [3, 1, 0], [2, 2, 2], [1, 0, 3]])
        trie, v = CodeTrie(codes, 4), model.vocab
        state = model.encode(np.repeat(history(v, codes), 2, axis=0))
        prompts = np.array([[BOS, v.behavior_token(2)], [BOS, v.behavior_token(0)]])
        preds = beam_search(model, state, prompts, 4, trie, v, N=4)
        assert set(preds[0].behaviors.tolist()) == {2} and set(preds[1].behaviors.tolist()) == {0}

    def test_grammar_and_ordering_contract(self):
        model = tiny_model(n_behaviors=3, K=4, seed=5)
        rng = np.random.default_rng(1)
        keys = rng.choice(64, size=20, replace=False)
        codes = np.stack([keys // 16, keys // 4 % 4, keys % 4], axis=1)
        trie, v = CodeTrie(codes, 4), model.vocab
        state = model.encode(np.repeat(history(v, codes), 3, axis=0))
        for pred in beam_search(model, state, np.full((3, 1), BOS), 12, trie, v, N=10):
            assert len(pred) == 10
            assert np.all(np.diff(pred.scores) <= 0)
            assert len(set(pred.pairs())) == len(pred)
            assert set(pred.behaviors.tolist()) <= {0, 1, 2}
            np.testing.assert_array_equal(codes[pred.items], pred.codes)

    def test_errors(self):
        v = Vocabulary(4, 2, 4)
        trie = CodeTrie(np.array([[0, 1, 2]]), 4)
        with pytest.raises(ValueError, match="n_beams"):
            beam_search(TableScorer(v), None, np.array([[BOS]]), 5, trie, v, N=10)
        with pytest.raises(ValueError, match="prompts"):
            beam_search(TableScorer(v), None, np.array([[BOS, 5, 6]]), 10, trie, v, N=1)

    def test_top1_stable_across_widths_on_seeded_models(self):
        model = tiny_model(n_behaviors=2, seed=3)
        rng = np.random.default_rng(4)
        keys = rng.choice(64, size=24, replace=False)
        codes = np.stack([keys // 16, keys // 4 % 4, keys % 4], axis=1)
        trie, v = CodeTrie(codes, 4), model.vocab
        state = model.encode(history(v, codes))
        best = exhaustive_ranking(model, state, [BOS], trie, v)[0]
        tops = [beam_search(model, state, np.array([[BOS]]), nb, trie, v, N=1)[0] for nb in (4, 8, 16, 48)]
        for p in tops:
            assert as_tuples(p)[0] == (best[2], tuple(best[3]))


class TestAllocation:
    def test_worked_example(self):
        np.testing.assert_array_equal(allocate_slots([0.3, 0.42, 0.18, 0.1], 10), [3, 4, 2, 1])

    def test_uniform(self):
        np.testing.assert_array_equal(allocate_slots([0.25] * 4, 8), [2, 2, 2, 2])

    def test_tie_prefers_larger_p_then_lower_index(self):
        np.testing.assert_array_equal(allocate_slots([0.5, 0.5], 1), [1, 0])
        np.testing.assert_array_equal(allocate_slots([0.15, 0.35, 0.15, 0.35], 1), [0, 1, 0, 0])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8), st.integers(0, 60))
    def test_largest_remainder_properties(self, p, N):
        p = np.array(p)
        if p.sum() <= 0:
            with pytest.raises(ValueError):
                allocate_slots(p, N)
            return
        a = allocate_slots(p, N)
        share = p / p.sum() * N
        assert a.sum() == N and np.all(a >= 0)
        assert np.all(a >= np.floor(share - 1e-9)) and np.all(a <= np.ceil(share + 1e-9))

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            allocate_slots([-0.1, 1.1], 3)
        with pytest.raises(ValueError):
            allocate_slots([0.5, 0.5], -1)


class TestTasks:
    @pytest.fixture
    def setup(self):
        model = tiny_model(n_behaviors=3, seed=2)
        rng = np.random.default_rng(7)
        keys = rng.choice(64, size=30, replace=False)
        codes = np.stack([keys // 16, keys // 4 % 4, keys % 4], axis=1)
        pred = Predictor(model, codes, model.vocab, max_items=3, chunk=4)
        return pred, codes, queries_for(codes, 9, 3)

    def test_target_task_and_determinism(self, setup):
        pred, codes, qs = setup
        a = pred.predict(qs, "target", n_beams=20, N=10, target_behavior=1)
        b = pred.predict(qs, "target", n_beams=20, N=10, target_behavior=1)
        for x, y in zip(a, b):
            assert set(x.behaviors.tolist()) == {1}
            assert len(set(x.items.tolist())) == 10
            np.testing.assert_array_equal(x.items, y.items)
            np.testing.assert_array_equal(x.scores, y.scores)

    def test_behavior_specific_uses_each_query_behavior(self, setup):
        pred, _, qs = setup
        for q, r in zip(qs, pred.predict(qs, "behavior-specific", n_beams=10, N=5)):
            assert set(r.behaviors.tolist()) == {q.target_behavior}

    def test_invalid_behavior_is_a_vocabulary_error(self, setup):
        pred, _, qs = setup
        with pytest.raises(TokenError):
            pred.predict(qs[:1], "target", target_behavior=7)

    def test_joint_is_covered_by_wide_conditional_beams(self, setup):
        pred, codes, qs = setup
        joint = pred.predict(qs, "behavior-item", n_beams=10, N=10)
        # the joint beam scores the behavior token with the full-vocabulary softmax
        logpb = pred.first_step_log_probs(qs)
        wide = {b: pred.conditional(qs, b, n_beams=len(codes), N=len(codes)) for b in range(3)}
        for qi, r in enumerate(joint):
            for b, item, s in zip(r.behaviors.tolist(), r.items.tolist(), r.scores.tolist()):
                cond = wide[b][qi]
                k = cond.items.tolist().index(item)
                assert s == pytest.approx(logpb[qi, b] + cond.scores[k], abs=1e-9)

    def test_behavior_aware_allocation_and_scores(self, setup):
        pred, _, qs = setup
        logpb = pred.first_step_log_probs(qs)
        out = pred.predict(qs, "behavior-aware", n_beams=10, N=10)
        for qi, r in enumerate(out):
            alloc = allocate_slots(np.exp(pred.behavior_log_probs(qs)[qi]), 10)
            np.testing.assert_array_equal(np.bincount(r.behaviors, minlength=3), alloc)
            assert np.all(np.diff(r.scores) <= 0)
            cond = {b: pred.conditional([qs[qi]], b, n_beams=10, N=10)[0] for b in range(3)}
            for b, item, s in zip(r.behaviors.tolist(), r.items.tolist(), r.scores.tolist()):
                k = cond[b].items.tolist().index(item)
                assert s == pytest.approx(logpb[qi, b] + cond[b].scores[k], abs=1e-9)

    def test_behavior_aware_with_fixed_distribution(self, setup):
        pred, _, qs = setup
        out = pred.predict(qs, "behavior-aware", n_beams=10, N=10, behavior_probs=[0.3, 0.5, 0.2])
        for r in out:
            np.testing.assert_array_equal(np.bincount(r.behaviors, minlength=3), [3, 5, 2])

    def test_unknown_task(self, setup):
        pred, _, qs = setup
        with pytest.raises(ValueError, match="unknown task"):
            pred.predict(qs, "next-basket")

    def test_predictions_csv(self, setup):
        pred, _, qs = setup
        text = predictions_csv(qs[:2], pred.predict(qs[:2], "behavior-item", n_beams=5, N=3))
        lines = text.strip().split("\n")
        assert lines[0] == "query,user,rank,behavior,item,score"
        assert len(lines) == 1 + 2 * 3


def test_desk_model_returns_ten_distinct_items():
    cfg = ModelConfig(n_users=16, seed=0)
    model = Seq2SeqModel(cfg)
    codes = np.stack(np.unravel_index(np.random.default_rng(0).choice(16 ** 3, 512, replace=False),
                                      (16, 16, 16)), axis=1)
    pred = Predictor(model, codes, model.vocab)
    for r in pred.predict(queries_for(codes, 4, 4), "target", n_beams=50, N=10, target_behavior=0):
        assert len(set(r.items.tolist())) == 10
