"""Acceptance criteria, one test per criterion.

Each test is self-contained and pins its own tolerances. The terminal
summary (see conftest) prints one PASS/FAIL line per criterion. The
end-to-end run is marked e2e so `-m "not e2e"` gives the fast suite.
"""

import time

import numpy as np
import pytest

import reference
import synth
from conftest import corpus_of, sent
from leniency_cases import CASES
from nerprune.analysis import GroupDimension, group_stats, kendall_tau
from nerprune.corpus import (
    TAGSET,
    VALID_TAGS,
    Sentence,
    decode_spans,
    encode_tags,
    serialize_iob2,
)
from nerprune.evaluation import score_corpus
from nerprune.perturb import EntityPool, Scope, build_pool, perturb_corpus
from nerprune.pruning import (
    ParamTensor,
    PruneSchedule,
    PruneStrategy,
    Role,
    compute_masks,
    load_checkpoint,
    save_checkpoint,
)
from nerprune.tagger import (
    TaggerConfig,
    build_vocab,
    grad_check,
    init_model,
    predict,
    train,
)
from oracles import oracle_counts, oracle_tau

# Half-decimal midpoints sit exactly at the tolerance edge; the extra
# 1e-9 absorbs float representation error, nothing more.
TABLE_TOLERANCE = 5e-5 + 1e-9
GAIN_TOLERANCE = 5e-4
TAU_CENTER = 0.39
TAU_WINDOW = 0.15
GRAD_TOLERANCE = 1e-4
GRAD_EPSILON = 1e-5
LEVELS = (50, 70, 80, 90, 95, 98)


def test_c01_group_stats_reproduce_reference_aggregates():
    meta = reference.load_metadata()
    started = time.perf_counter()
    records = []
    expected = {}
    for name in reference.MULTILINGUAL_TABLES:
        split, strategy = reference.TABLE_SEMANTICS[name]
        _, means, medians = reference.load_table(name)
        records.extend(reference.records_from_table(name))
        for sparsity in means:
            expected[(sparsity, strategy, split)] = (
                means[sparsity], medians[sparsity]
            )
    mean_cells = group_stats(records, meta, GroupDimension.SIZE, "mean")
    median_cells = group_stats(records, meta, GroupDimension.SIZE, "median")
    elapsed = time.perf_counter() - started
    assert len(expected) == 4 * 7
    for cell, (mean, median) in expected.items():
        assert mean_cells[cell]["all"] == pytest.approx(mean, abs=TABLE_TOLERANCE)
        assert median_cells[cell]["all"] == pytest.approx(median, abs=TABLE_TOLERANCE)
    spot = (0, "partial", "regular")
    assert mean_cells[spot]["all"] == pytest.approx(0.8795, abs=TABLE_TOLERANCE)
    assert median_cells[spot]["all"] == pytest.approx(0.9017, abs=TABLE_TOLERANCE)
    assert elapsed < 1.0


def _gain_table():
    gains = {}
    for strategy, multi_name, mono_name in (
        ("partial", "multilingual_regular_partial", "monolingual_regular_partial"),
        ("incl_embeddings", "multilingual_regular_incl_embeddings",
         "monolingual_regular_incl_embeddings"),
    ):
        multi, _, _ = reference.load_table(multi_name)
        mono, _, _ = reference.load_table(mono_name)
        for lang in mono:
            for sparsity in mono[lang]:
                gains[(lang, sparsity, strategy)] = (
                    multi[lang][sparsity] - mono[lang][sparsity]
                )
    return gains


def test_c02_negative_gains_are_exactly_the_known_exceptions():
    gains = _gain_table()
    assert len(gains) == 10 * 7 * 2
    negatives = {key for key, gain in gains.items() if gain < 0}
    assert negatives == {
        ("af", 0, "partial"),
        ("af", 0, "incl_embeddings"),
        ("hi", 50, "partial"),
        ("yo", 98, "incl_embeddings"),
    }
    assert gains[("af", 0, "partial")] == pytest.approx(-0.0030, abs=GAIN_TOLERANCE)
    assert gains[("af", 0, "incl_embeddings")] == pytest.approx(
        -0.0030, abs=GAIN_TOLERANCE
    )


def test_c03_rank_correlation_oracle_and_reference_value():
    rng = np.random.default_rng(303)
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        xs = rng.integers(0, 5, size=n).tolist()
        ys = rng.integers(0, 5, size=n).tolist()
        assert kendall_tau(xs, ys, tie_correction=True) == oracle_tau(
            xs, ys, tie_correction=True
        )
        assert kendall_tau(xs, ys, tie_correction=False) == oracle_tau(
            xs, ys, tie_correction=False
        )

    meta = reference.load_metadata()
    gains = _gain_table()
    mono, _, _ = reference.load_table("monolingual_regular_partial")
    languages = sorted(mono)
    assert len(languages) == 10
    scarcity = [-meta[lang].train_size for lang in languages]
    dense_gains = [gains[(lang, 0, "partial")] for lang in languages]
    tau = kendall_tau(scarcity, dense_gains, tie_correction=False)
    assert tau is not None and tau > 0
    assert abs(tau - TAU_CENTER) <= TAU_WINDOW


def _random_tensor_set(rng):
    tensors = [
        ParamTensor(
            "embed",
            rng.normal(size=(int(rng.integers(3, 9)), int(rng.integers(2, 6)))),
            Role.EMBEDDING,
        ),
        ParamTensor(
            "dense.a",
            rng.normal(size=(int(rng.integers(4, 10)), int(rng.integers(3, 8)))),
            Role.DENSE,
        ),
    ]
    if rng.integers(2):
        tensors.append(
            ParamTensor("dense.b", rng.normal(size=int(rng.integers(5, 40))), Role.DENSE)
        )
    if rng.integers(2):
        tensors.append(
            ParamTensor("bias", rng.normal(size=int(rng.integers(2, 8))), Role.EXCLUDED)
        )
    return tensors


def test_c04_masked_counts_exact_and_monotone():
    started = time.perf_counter()
    for i in range(500):
        rng = np.random.default_rng([404, i])
        tensors = _random_tensor_set(rng)
        strategy = PruneStrategy.PARTIAL if i % 2 else PruneStrategy.INCL_EMBEDDINGS
        roles = strategy.prunable_roles
        n = sum(t.size for t in tensors if t.role in roles)
        previous = {t.name: t.mask.copy() for t in tensors}
        for pct in LEVELS:
            compute_masks(tensors, pct / 100, strategy)
            masked = sum(
                int((t.mask == 0).sum()) for t in tensors if t.role in roles
            )
            assert masked == (pct * n) // 100
            for t in tensors:
                assert (t.mask <= previous[t.name]).all()
                previous[t.name] = t.mask.copy()
            if strategy is PruneStrategy.PARTIAL:
                embed = next(t for t in tensors if t.role is Role.EMBEDDING)
                assert (embed.mask == 1).all()
            excluded = [t for t in tensors if t.role is Role.EXCLUDED]
            assert all((t.mask == 1).all() for t in excluded)
    assert time.perf_counter() - started < 10.0


def _memorization_corpus():
    rows = [
        (["ada", "went", "to", "oslo"], ["B-PER", "O", "O", "B-LOC"]),
        (["bo", "visited", "acme", "corp"], ["B-PER", "O", "B-ORG", "I-ORG"]),
        (["oslo", "likes", "ada"], ["B-LOC", "O", "B-PER"]),
        (["acme", "corp", "hired", "bo"], ["B-ORG", "I-ORG", "O", "B-PER"]),
        (["nothing", "happened"], ["O", "O"]),
    ]
    return corpus_of([sent(t, g) for t, g in rows], split="train")


def test_c05_masked_weights_stay_zero_everywhere(tmp_path):
    corpus = _memorization_corpus()
    config = TaggerConfig(
        embed_dim=8, window=1, hidden_dim=16, learning_rate=0.5,
        epochs=30, batch_size=4, seed=3,
    )
    cases = [
        (PruneSchedule(5, 45, 5, 0.7), PruneStrategy.PARTIAL, "cubic"),
        (PruneSchedule(0, 60, 10, 0.9), PruneStrategy.PARTIAL, "linear"),
        (PruneSchedule(10, 40, 15, 0.5), PruneStrategy.INCL_EMBEDDINGS, "cubic"),
        (PruneSchedule(30, 30, 1, 0.98), PruneStrategy.INCL_EMBEDDINGS, "linear"),
    ]
    for idx, (schedule, strategy, ramp) in enumerate(cases):
        model = init_model(config, build_vocab(corpus))
        model, history = train(
            model, corpus, schedule=schedule, strategy=strategy, ramp=ramp
        )
        assert all(step.max_abs_masked == 0.0 for step in history)
        assert history[-1].sparsity == pytest.approx(
            schedule.target_sparsity, abs=1e-2
        )
        ckpt = tmp_path / f"run{idx}"
        save_checkpoint(ckpt, model.param_list)
        loaded, _ = load_checkpoint(ckpt)
        for tensor in loaded:
            assert (tensor.values[tensor.mask == 0] == 0.0).all()
            assert (tensor.mask == model.params[tensor.name].mask).all()


def test_c06_gradients_match_central_differences():
    worst = 0.0
    for i in range(20):
        rng = np.random.default_rng([606, i])
        config = TaggerConfig(
            embed_dim=int(rng.integers(3, 9)),
            window=int(rng.integers(0, 3)),
            hidden_dim=int(rng.integers(4, 13)),
            learning_rate=0.1,
            epochs=1,
            batch_size=4,
            seed=i,
        )
        tokens = [f"t{k}" for k in range(int(rng.integers(3, 9)))]
        vocab = {"<unk>": 0, "<pad>": 1}
        for token in tokens:
            vocab[token] = len(vocab)
        model = init_model(config, vocab)
        length = int(rng.integers(1, 7))
        words = [
            tokens[int(rng.integers(len(tokens)))] if rng.integers(4) else "oov"
            for _ in range(length)
        ]
        tags = [TAGSET[int(rng.integers(len(TAGSET)))] for _ in range(length)]
        sentence = Sentence(tuple(words), tuple(tags), "xx")
        err = grad_check(
            model, sentence, epsilon=GRAD_EPSILON, samples_per_tensor=25, seed=i
        )
        assert err is not None
        worst = max(worst, err)
    assert worst < GRAD_TOLERANCE


def test_c07_scores_match_mention_set_oracle():
    for tags, expected in CASES:
        assert decode_spans(tags) == expected
    assert len(CASES) >= 20

    rng = np.random.default_rng(707)
    for _ in range(1000):
        n_sentences = int(rng.integers(1, 5))
        gold_rows = []
        pred_rows = []
        for _ in range(n_sentences):
            length = int(rng.integers(1, 9))
            gold_rows.append(
                [TAGSET[int(k)] for k in rng.integers(0, len(TAGSET), size=length)]
            )
            pred_rows.append(
                [TAGSET[int(k)] for k in rng.integers(0, len(TAGSET), size=length)]
            )
        gold = corpus_of(
            [sent([f"w{j}" for j in range(len(row))], row) for row in gold_rows]
        )
        report = score_corpus(gold, pred_rows)
        assert (report.tp, report.fp, report.fn) == oracle_counts(gold_rows, pred_rows)


def _random_pool(rng):
    alphabet = ["pa", "lo", "or", "xe", "mu", "ki", "ra", "ze"]
    by_type = {}
    for etype in ("PER", "LOC", "ORG"):
        count = int(rng.integers(1, 6))
        surfaces = {}
        for k in range(count):
            length = int(rng.integers(1, 4))
            surface = tuple(
                f"{alphabet[int(rng.integers(len(alphabet)))]}{etype[0]}{k}{j}"
                for j in range(length)
            )
            surfaces.setdefault(surface)
        by_type[etype] = tuple(surfaces)
    return EntityPool(scope=Scope.IN_LANGUAGE, group_key="xx", by_type=by_type)


def test_c08_perturbation_validity_and_determinism():
    rng = np.random.default_rng(808)
    for i in range(200):
        pool = _random_pool(rng)
        sentences = []
        for _ in range(int(rng.integers(1, 6))):
            length = int(rng.integers(1, 9))
            tags = [TAGSET[int(k)] for k in rng.integers(0, len(TAGSET), size=length)]
            sentences.append(sent([f"w{j}" for j in range(length)], tags))
        corpus = corpus_of(sentences)
        out1, log1 = perturb_corpus(corpus, pool, seed=i)
        out2, log2 = perturb_corpus(corpus, pool, seed=i)
        assert out1 == out2
        assert serialize_iob2(out1) == serialize_iob2(out2)
        assert log1 == log2
        for original, perturbed in zip(corpus, out1):
            assert all(tag in VALID_TAGS for tag in perturbed.tags)
            spans_before = decode_spans(original.tags)
            spans_after = decode_spans(perturbed.tags)
            assert [s[2] for s in spans_after] == [s[2] for s in spans_before]
            assert encode_tags(len(perturbed), spans_after) == perturbed.tags
            o_before = [
                t for t, g in zip(original.tokens, original.tags) if g == "O"
            ]
            o_after = [
                t for t, g in zip(perturbed.tokens, perturbed.tags) if g == "O"
            ]
            assert o_before == o_after

    pool = EntityPool(
        scope=Scope.IN_LANGUAGE,
        group_key="en",
        by_type={"LOC": (("Peru",), ("Carbon", "Cliff", ",", "Illinois"))},
    )
    original = sent(["I", "left", "Peru", "yesterday"], ["O", "O", "B-LOC", "O"], "en")
    out, log = perturb_corpus(corpus_of([original], "en"), pool, seed=0)
    assert out.sentences[0].tokens == (
        "I", "left", "Carbon", "Cliff", ",", "Illinois", "yesterday"
    )
    assert out.sentences[0].tags == (
        "O", "O", "B-LOC", "I-LOC", "I-LOC", "I-LOC", "O"
    )
    assert log[0].replaced and log[0].original == ("Peru",)


@pytest.mark.e2e
def test_c09_end_to_end_directions_on_synthetic_languages():
    started = time.perf_counter()
    trains, tests, donors = synth.build_world()
    train_list = [trains[lang] for lang in synth.LANGUAGES]
    config = TaggerConfig(
        embed_dim=20, window=1, hidden_dim=10, learning_rate=0.4,
        epochs=25, batch_size=16, seed=11,
    )
    vocab = build_vocab(train_list)
    perturbed = {}
    for lang in synth.LANGUAGES:
        pool = build_pool([donors[lang]], synth.META, Scope.IN_LANGUAGE, lang)
        perturbed[lang], _ = perturb_corpus(tests[lang], pool, 777)

    def fit(sparsity):
        model = init_model(config, vocab)
        schedule = (
            None if sparsity == 0
            else PruneSchedule(200, 1000, 100, sparsity / 100)
        )
        model, history = train(
            model, train_list, schedule=schedule, strategy=PruneStrategy.PARTIAL
        )
        assert all(step.max_abs_masked == 0.0 for step in history)
        clean = {
            lang: score_corpus(tests[lang], predict(model, tests[lang])).f1
            for lang in synth.LANGUAGES
        }
        pert = {
            lang: score_corpus(perturbed[lang], predict(model, perturbed[lang])).f1
            for lang in synth.LANGUAGES
        }
        return clean, pert

    dense_clean, dense_pert = fit(0)
    clean_50, _ = fit(50)
    clean_98, _ = fit(98)

    mean = lambda d: sum(d.values()) / len(d)
    assert min(dense_clean.values()) >= 0.90
    assert mean(dense_clean) - mean(dense_pert) >= 0.20
    assert abs(mean(clean_50) - mean(dense_clean)) <= 0.05
    assert mean(clean_98) < mean(clean_50)
    assert time.perf_counter() - started < 600.0


def test_c10_fast_suite_fits_the_time_budget(suite_clock):
    assert suite_clock() < 180.0
