"""Entity-level scoring and per-run result records.

Scores are micro-averaged over exact-match mentions: a predicted mention
counts as a true positive only when its span boundaries and type both
match a gold mention of the same sentence. Precision, recall and F1 fall
back to 0 whenever their denominator is 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import ENTITY_TYPES, VALID_TAGS, Corpus, decode_spans
from .errors import AlignmentError, TagError

STRATEGY_NAMES = ("partial", "incl_embeddings")
SPLIT_NAMES = (
    "regular",
    "perturbed-in-language",
    "perturbed-in-script",
    "perturbed-in-family",
)
SPARSITY_LEVELS = (0, 50, 70, 80, 90, 95, 98)


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class ScoreReport:
    """Micro-averaged counts and scores, optionally broken down by type.

    per_type is None for reports read back from the wire format, which
    only carries the totals.
    """

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    per_type: Mapping[str, tuple[int, int, int]] | None = None

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("negative counts")
        if self.per_type is not None:
            sums = [0, 0, 0]
            for counts in self.per_type.values():
                for i in range(3):
                    sums[i] += counts[i]
            if (self.tp, self.fp, self.fn) != tuple(sums):
                raise ValueError("totals do not match per_type sums")

    @classmethod
    def from_counts(cls, per_type: Mapping[str, tuple[int, int, int]]) -> "ScoreReport":
        tp = sum(c[0] for c in per_type.values())
        fp = sum(c[1] for c in per_type.values())
        fn = sum(c[2] for c in per_type.values())
        precision, recall, f1 = _prf(tp, fp, fn)
        return cls(tp, fp, fn, precision, recall, f1, dict(per_type))


def score_corpus(gold: Corpus, predicted: Sequence[Sequence[str]]) -> ScoreReport:
    """Score predicted tag sequences against a gold corpus.

    predicted holds one tag sequence per gold sentence, aligned by index
    and by token count. Ill-formed IOB2 is accepted on both sides and
    decoded leniently. Misaligned predictions raise AlignmentError.
    """
    if len(predicted) != len(gold.sentences):
        raise AlignmentError(
            f"{len(predicted)} predictions for {len(gold.sentences)} sentences"
        )
    per_type = {etype: [0, 0, 0] for etype in ENTITY_TYPES}
    for idx, (sent, tags) in enumerate(zip(gold.sentences, predicted)):
        if len(tags) != len(sent):
            raise AlignmentError(
                f"sentence {idx}: {len(tags)} predicted tags "
                f"for {len(sent)} tokens"
            )
        for tag in tags:
            if tag not in VALID_TAGS:
                raise TagError(f"sentence {idx}: unknown predicted tag {tag!r}")
        gold_spans = set(decode_spans(sent.tags))
        pred_spans = set(decode_spans(tags))
        for span in pred_spans:
            bucket = per_type[span[2]]
            if span in gold_spans:
                bucket[0] += 1
            else:
                bucket[1] += 1
        for span in gold_spans - pred_spans:
            per_type[span[2]][2] += 1
    return ScoreReport.from_counts(
        {etype: tuple(counts) for etype, counts in per_type.items()}
    )


@dataclass(frozen=True)
class RunRecord:
    """One (language, sparsity, strategy, seed, split) evaluation result."""

    language: str
    sparsity: int
    strategy: str
    seed: int
    split: str
    report: ScoreReport

    def __post_init__(self):
        if self.sparsity not in SPARSITY_LEVELS:
            raise ValueError(
                f"sparsity must be one of {SPARSITY_LEVELS}, got {self.sparsity}"
            )
        if self.strategy not in STRATEGY_NAMES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.split not in SPLIT_NAMES:
            raise ValueError(f"unknown split {self.split!r}")

    def to_json_dict(self) -> dict:
        r = self.report
        return {
            "language": self.language,
            "sparsity": self.sparsity,
            "strategy": self.strategy,
            "seed": self.seed,
            "split": self.split,
            "tp": r.tp,
            "fp": r.fp,
            "fn": r.fn,
            "precision": r.precision,
            "recall": r.recall,
            "f1": r.f1,
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "RunRecord":
        report = ScoreReport(
            tp=int(data["tp"]),
            fp=int(data["fp"]),
            fn=int(data["fn"]),
            precision=float(data["precision"]),
            recall=float(data["recall"]),
            f1=float(data["f1"]),
        )
        return cls(
            language=str(data["language"]),
            sparsity=int(data["sparsity"]),
            strategy=str(data["strategy"]),
            seed=int(data["seed"]),
            split=str(data["split"]),
            report=report,
        )


def write_run_records(records: Iterable[RunRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")


def read_run_records(path: str | Path) -> list[RunRecord]:
    """Read a JSON-lines result file, ignoring unknown extra keys."""
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(RunRecord.from_json_dict(json.loads(line)))
    return records


@dataclass(frozen=True)
class SeedStats:
    """F1 aggregate across seeds: mean, population std, sample count."""

    mean: float
    std: float
    n: int


GroupKey = tuple[str, int, str, str]


def aggregate_seeds(records: Iterable[RunRecord]) -> dict[GroupKey, SeedStats]:
    """Aggregate F1 across seeds per (language, sparsity, strategy, split)."""
    groups: dict[GroupKey, list[float]] = {}
    for record in records:
        key = (record.language, record.sparsity, record.strategy, record.split)
        groups.setdefault(key, []).append(record.report.f1)
    result = {}
    for key, values in groups.items():
        n = len(values)
        mean = sum(values) / n
        var = sum((v - mean) ** 2 for v in values) / n
        result[key] = SeedStats(mean=mean, std=math.sqrt(var), n=n)
    return result
