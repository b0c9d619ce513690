"""Synthetic three-language world for the end-to-end property run.

The languages share sentence templates but own disjoint token
inventories. Each language has a training entity lexicon (surfaces the
model sees during training; clean test sentences reuse them) and a
held-out lexicon of longer, never-trained surfaces used to build the
perturbed condition. A tagger that keys on entity identity rather than
context aces the clean sets and degrades hard on the held-out ones.
"""

import numpy as np

from nerprune.corpus import Corpus, LanguageMeta, Sentence, encode_tags

LANGUAGES = ("l1", "l2", "l3")
ENTITY_TYPES = ("PER", "LOC", "ORG")
TRAIN_SENTENCES = 500
TEST_SENTENCES = 150
TRAIN_SURFACES = 40
HELD_OUT_SURFACES = 25
N_FILLERS = 12

META = {
    lang: LanguageMeta(lang, "Synth", "Synthetic", TRAIN_SENTENCES, 0.0)
    for lang in LANGUAGES
}

# F: filler token, E: entity slot
TEMPLATES = (
    ("F", "F", "E", "F"),
    ("F", "E", "F", "E", "F"),
    ("E", "F", "F"),
    ("F", "F", "F"),
    ("F", "E", "E", "F"),
)


def _surfaces(lang, etype, mark, count, lengths, rng):
    # every surface gets fresh tokens, so lexicons are disjoint by
    # construction, across languages and between train and held-out
    surfaces = []
    counter = 0
    for _ in range(count):
        length = int(rng.choice(lengths))
        surface = tuple(
            f"{lang}.{etype.lower()}.{mark}{counter + i}" for i in range(length)
        )
        counter += length
        surfaces.append(surface)
    return tuple(surfaces)


def build_lexicons(seed=0):
    rng = np.random.default_rng([seed, 97])
    train = {}
    held_out = {}
    for lang in LANGUAGES:
        train[lang] = {
            etype: _surfaces(lang, etype, "t", TRAIN_SURFACES, (1, 2), rng)
            for etype in ENTITY_TYPES
        }
        held_out[lang] = {
            etype: _surfaces(lang, etype, "h", HELD_OUT_SURFACES, (2, 3), rng)
            for etype in ENTITY_TYPES
        }
    return train, held_out


def _sentence(lang, lexicon, rng):
    template = TEMPLATES[int(rng.integers(len(TEMPLATES)))]
    tokens = []
    spans = []
    for slot in template:
        if slot == "F":
            tokens.append(f"{lang}.w{int(rng.integers(N_FILLERS))}")
        else:
            etype = ENTITY_TYPES[int(rng.integers(len(ENTITY_TYPES)))]
            surfaces = lexicon[etype]
            surface = surfaces[int(rng.integers(len(surfaces)))]
            start = len(tokens)
            tokens.extend(surface)
            spans.append((start, len(tokens), etype))
    return Sentence(tuple(tokens), encode_tags(len(tokens), spans), lang)


def _corpus(lang, lexicon, count, split, stream):
    rng = np.random.default_rng(stream)
    sentences = tuple(_sentence(lang, lexicon, rng) for _ in range(count))
    return Corpus(sentences, lang, split)


def _donor(lang, lexicon):
    """One sentence per held-out surface; feeds the replacement pool."""
    sentences = []
    for etype in ENTITY_TYPES:
        for surface in lexicon[etype]:
            tags = encode_tags(len(surface), [(0, len(surface), etype)])
            sentences.append(Sentence(surface, tags, lang))
    return Corpus(tuple(sentences), lang, "test")


def build_world(seed=0):
    """(trains, tests, donors) dicts keyed by language."""
    train_lex, held_lex = build_lexicons(seed)
    trains = {}
    tests = {}
    donors = {}
    for idx, lang in enumerate(LANGUAGES):
        trains[lang] = _corpus(
            lang, train_lex[lang], TRAIN_SENTENCES, "train", [seed, 11, idx]
        )
        tests[lang] = _corpus(
            lang, train_lex[lang], TEST_SENTENCES, "test", [seed, 23, idx]
        )
        donors[lang] = _donor(lang, held_lex[lang])
    return trains, tests, donors
