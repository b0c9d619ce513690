"""Grid runner: trains and evaluates every cell of an experiment config.

A config pins the mode (one model per language, or one joint model over
all languages), the sparsity levels, pruning strategies, seeds and
perturbation scopes. Results land under
<output>/<config-hash>/results.jsonl, one JSON record per (run,
language, split), plus per-run checkpoints and the perturbed test sets
with their replacement logs. Completed run ids are skipped on rerun, so
the command is safe to restart.

Perturbed test sets are generated once per (language, scope) from the
single perturbation seed and shared by every run, mirroring a fixed
benchmark that all models face identically.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import (
    Corpus,
    LanguageMeta,
    entity_overlap,
    load_language_metadata,
    parse_iob2,
    serialize_iob2,
)
from .errors import ConfigError, MissingMetadataError, NerpruneError, PruningError
from .evaluation import (
    SPARSITY_LEVELS,
    STRATEGY_NAMES,
    RunRecord,
    score_corpus,
)
from .perturb import Scope, build_pool, perturb_corpus, write_replacement_log
from .pruning import PruneSchedule, PruneStrategy, measure_sparsity
from .tagger import TaggerConfig, build_vocab, init_model, predict, save_model, train

# start step, end step, event frequency per training set size
DEFAULT_SCHEDULE_TABLE = (
    (100, (10, 60, 10)),
    (1000, (100, 300, 50)),
    (5000, (500, 1200, 100)),
    (10000, (500, 1200, 100)),
    (15000, (700, 1800, 100)),
    (20000, (1000, 2400, 200)),
)

MODES = ("monolingual", "multilingual")
HASH_PREFIX_LEN = 12


@dataclass(frozen=True)
class ExperimentConfig:
    """Full experiment description; hashable and JSON-round-trippable.

    Paths are kept as written and resolved against base_dir, normally
    the directory of the config file. The config hash covers everything
    except base_dir, so a config file moved together with its data keeps
    its hash and its result directory.
    """

    mode: str
    languages: tuple[str, ...]
    sparsity_levels: tuple[int, ...]
    seeds: tuple[int, ...]
    perturbation_seed: int
    corpus_root: str
    metadata_path: str
    output_dir: str
    strategies: tuple[str, ...] = STRATEGY_NAMES
    scopes: tuple[str, ...] = tuple(s.value for s in Scope)
    tagger: TaggerConfig = TaggerConfig()
    schedule_table: tuple[tuple[int, tuple[int, int, int]], ...] = (
        DEFAULT_SCHEDULE_TABLE
    )
    base_dir: str = "."

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.languages:
            raise ConfigError("languages must be non-empty")
        if len(set(self.languages)) != len(self.languages):
            raise ConfigError("duplicate languages")
        if not self.sparsity_levels:
            raise ConfigError("sparsity_levels must be non-empty")
        if list(self.sparsity_levels) != sorted(set(self.sparsity_levels)):
            raise ConfigError("sparsity_levels must be strictly ascending")
        for level in self.sparsity_levels:
            if level not in SPARSITY_LEVELS:
                raise ConfigError(
                    f"sparsity level {level} not in supported {SPARSITY_LEVELS}"
                )
        if not self.strategies:
            raise ConfigError("strategies must be non-empty")
        for strategy in self.strategies:
            if strategy not in STRATEGY_NAMES:
                raise ConfigError(f"unknown strategy {strategy!r}")
        if len(set(self.strategies)) != len(self.strategies):
            raise ConfigError("duplicate strategies")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("duplicate seeds")
        for seed in self.seeds:
            if seed < 0:
                raise ConfigError("seeds must be non-negative")
        if self.perturbation_seed < 0:
            raise ConfigError("perturbation_seed must be non-negative")
        for scope in self.scopes:
            try:
                Scope.parse(scope)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if len(set(self.scopes)) != len(self.scopes):
            raise ConfigError("duplicate scopes")
        if not self.schedule_table:
            raise ConfigError("schedule_table must be non-empty")
        sizes = [size for size, _ in self.schedule_table]
        if sizes != sorted(set(sizes)) or any(size <= 0 for size in sizes):
            raise ConfigError("schedule_table sizes must be unique, positive, ascending")
        for size, (start, end, freq) in self.schedule_table:
            if start < 0 or end < start:
                raise ConfigError(
                    f"schedule for size {size}: need 0 <= start <= end"
                )
            if freq < 1 or (end - start) % freq != 0:
                raise ConfigError(
                    f"schedule for size {size}: end - start must be a "
                    f"multiple of the frequency"
                )

    def canonical_dict(self) -> dict:
        return {
            "mode": self.mode,
            "languages": list(self.languages),
            "sparsity_levels": list(self.sparsity_levels),
            "strategies": list(self.strategies),
            "seeds": list(self.seeds),
            "scopes": list(self.scopes),
            "perturbation_seed": self.perturbation_seed,
            "tagger": {
                "embed_dim": self.tagger.embed_dim,
                "window": self.tagger.window,
                "hidden_dim": self.tagger.hidden_dim,
                "learning_rate": self.tagger.learning_rate,
                "epochs": self.tagger.epochs,
                "batch_size": self.tagger.batch_size,
                "seed": self.tagger.seed,
                "vocab_min_count": self.tagger.vocab_min_count,
            },
            "schedule_table": {
                str(size): list(row) for size, row in self.schedule_table
            },
            "paths": {
                "corpus_root": self.corpus_root,
                "metadata": self.metadata_path,
                "output": self.output_dir,
            },
        }

    @property
    def config_hash(self) -> str:
        payload = json.dumps(
            self.canonical_dict(), sort_keys=True, separators=(",", ":")
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def _resolve(self, raw: str) -> Path:
        return (Path(self.base_dir) / Path(raw)).resolve()

    @property
    def corpus_root_path(self) -> Path:
        return self._resolve(self.corpus_root)

    @property
    def metadata_file(self) -> Path:
        return self._resolve(self.metadata_path)

    @property
    def output_path(self) -> Path:
        return self._resolve(self.output_dir)

    def schedule_for(self, train_size: int) -> tuple[int, int, int]:
        """Schedule row for a training set size: exact match, otherwise
        the largest size not above it, otherwise the smallest row."""
        best = None
        for size, row in self.schedule_table:
            if size == train_size:
                return row
            if size < train_size:
                best = row
        return best if best is not None else self.schedule_table[0][1]


_TOP_KEYS = {
    "mode", "languages", "sparsity_levels", "strategies", "seeds", "scopes",
    "perturbation_seed", "tagger", "schedule_table", "paths",
}
_PATH_KEYS = {"corpus_root", "metadata", "output"}


def config_from_dict(data: Mapping, base_dir: str | Path = ".") -> ExperimentConfig:
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    required = {"mode", "languages", "sparsity_levels", "seeds",
                "perturbation_seed", "paths"}
    missing = required - set(data)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    paths = data["paths"]
    if not isinstance(paths, Mapping):
        raise ConfigError("paths must be an object")
    unknown = set(paths) - _PATH_KEYS
    if unknown:
        raise ConfigError(f"unknown path keys: {sorted(unknown)}")
    missing = _PATH_KEYS - set(paths)
    if missing:
        raise ConfigError(f"missing path keys: {sorted(missing)}")
    try:
        tagger = TaggerConfig(**data.get("tagger", {}))
    except TypeError as exc:
        raise ConfigError(f"tagger: {exc}") from None
    schedule_raw = data.get("schedule_table")
    if schedule_raw is None:
        schedule_table = DEFAULT_SCHEDULE_TABLE
    else:
        try:
            schedule_table = tuple(sorted(
                (int(size), (int(row[0]), int(row[1]), int(row[2])))
                for size, row in schedule_raw.items()
            ))
        except (TypeError, ValueError, IndexError, AttributeError) as exc:
            raise ConfigError(f"schedule_table: {exc}") from None
    try:
        return ExperimentConfig(
            mode=str(data["mode"]),
            languages=tuple(str(l) for l in data["languages"]),
            sparsity_levels=tuple(int(s) for s in data["sparsity_levels"]),
            seeds=tuple(int(s) for s in data["seeds"]),
            perturbation_seed=int(data["perturbation_seed"]),
            corpus_root=str(paths["corpus_root"]),
            metadata_path=str(paths["metadata"]),
            output_dir=str(paths["output"]),
            strategies=tuple(str(s) for s in data.get("strategies", STRATEGY_NAMES)),
            scopes=tuple(str(s) for s in
                         data.get("scopes", [s.value for s in Scope])),
            tagger=tagger,
            schedule_table=schedule_table,
            base_dir=str(base_dir),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def config_from_file(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(data, base_dir=path.parent)


@dataclass(frozen=True)
class RunSpec:
    """One training run of the grid. language is None in multilingual
    mode, where a single joint model serves every language."""

    mode: str
    language: str | None
    sparsity: int
    strategy: str
    seed: int

    @property
    def run_id(self) -> str:
        if self.mode == "monolingual":
            return (f"mono-{self.language}-s{self.sparsity}"
                    f"-{self.strategy}-seed{self.seed}")
        return f"multi-s{self.sparsity}-{self.strategy}-seed{self.seed}"


def plan(config: ExperimentConfig) -> list[RunSpec]:
    """Cartesian product of the grid. Sparsity 0 cells train dense and
    skip pruning; they are kept per strategy so every strategy column
    has its own dense baseline row."""
    specs = []
    if config.mode == "monolingual":
        for language in config.languages:
            for sparsity in config.sparsity_levels:
                for strategy in config.strategies:
                    for seed in config.seeds:
                        specs.append(RunSpec(
                            config.mode, language, sparsity, strategy, seed
                        ))
    else:
        for sparsity in config.sparsity_levels:
            for strategy in config.strategies:
                for seed in config.seeds:
                    specs.append(RunSpec(
                        config.mode, None, sparsity, strategy, seed
                    ))
    return specs


def load_metadata(config: ExperimentConfig) -> dict[str, LanguageMeta]:
    path = config.metadata_file
    try:
        with open(path, encoding="utf-8") as f:
            meta = load_language_metadata(f, name=str(path))
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    missing = [l for l in config.languages if l not in meta]
    if missing:
        raise MissingMetadataError(missing)
    return meta


def load_split(config: ExperimentConfig, language: str, split: str) -> Corpus:
    path = config.corpus_root_path / language / f"{split}.iob2"
    try:
        with open(path, encoding="utf-8") as f:
            return parse_iob2(f, language, split, name=str(path))
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_corpora(
    config: ExperimentConfig,
) -> tuple[dict[str, Corpus], dict[str, Corpus]]:
    trains = {l: load_split(config, l, "train") for l in config.languages}
    tests = {l: load_split(config, l, "test") for l in config.languages}
    return trains, tests


def build_perturbed(
    config: ExperimentConfig,
    meta: Mapping[str, LanguageMeta],
    tests: Mapping[str, Corpus],
) -> dict[tuple[str, str], tuple[Corpus, list]]:
    """Perturbed test set and replacement log per (language, scope)."""
    corpora = list(tests.values())
    result = {}
    pools: dict[tuple[str, str], object] = {}
    for scope_name in config.scopes:
        scope = Scope.parse(scope_name)
        for language in config.languages:
            group_key = scope.group_key(meta[language])
            cache_key = (scope_name, group_key)
            if cache_key not in pools:
                pools[cache_key] = build_pool(corpora, meta, scope, group_key)
            result[(language, scope_name)] = perturb_corpus(
                tests[language], pools[cache_key], config.perturbation_seed
            )
    return result


def train_test_overlaps(
    trains: Mapping[str, Corpus], tests: Mapping[str, Corpus]
) -> dict[str, float]:
    """Train/test entity overlap per language, skipping languages whose
    test split has no mentions."""
    overlaps = {}
    for language, test in tests.items():
        value = entity_overlap(trains[language], test)
        if value is not None:
            overlaps[language] = value
    return overlaps


def execute_run(
    spec: RunSpec,
    config: ExperimentConfig,
    trains: Mapping[str, Corpus],
    tests: Mapping[str, Corpus],
    perturbed: Mapping[tuple[str, str], tuple[Corpus, list]],
    checkpoint_dir: Path | None = None,
):
    """Train one grid cell and score it on every split it owes.

    Returns (result line dicts, trained model). The nominal sparsity
    must be achieved within 1/N of the prunable weight count or the run
    fails.
    """
    languages = [spec.language] if spec.mode == "monolingual" else list(config.languages)
    train_corpora = [trains[l] for l in languages]
    vocab = build_vocab(train_corpora, config.tagger.vocab_min_count)
    model = init_model(replace(config.tagger, seed=spec.seed), vocab)
    strategy = PruneStrategy(spec.strategy)
    if spec.sparsity == 0:
        schedule = None
        schedule_row = None
    else:
        total_size = sum(len(trains[l]) for l in languages)
        schedule_row = config.schedule_for(total_size)
        start, end, freq = schedule_row
        schedule = PruneSchedule(start, end, freq, spec.sparsity / 100)
    started = time.perf_counter()
    train(model, train_corpora, schedule=schedule, strategy=strategy)
    elapsed = time.perf_counter() - started
    achieved = measure_sparsity(model.param_list, strategy)
    n_prunable = sum(
        p.size for p in model.param_list if p.role in strategy.prunable_roles
    )
    if abs(achieved - spec.sparsity / 100) > 1 / n_prunable + 1e-12:
        raise PruningError(
            f"{spec.run_id}: achieved sparsity {achieved:.6f} misses "
            f"nominal {spec.sparsity / 100:.2f}"
        )
    if checkpoint_dir is not None:
        save_model(checkpoint_dir, model)
    lines = []
    for language in languages:
        splits = [("regular", tests[language])]
        for scope_name in config.scopes:
            splits.append(
                (f"perturbed-{scope_name}", perturbed[(language, scope_name)][0])
            )
        for split_name, corpus in splits:
            report = score_corpus(corpus, predict(model, corpus))
            record = RunRecord(
                language=language,
                sparsity=spec.sparsity,
                strategy=spec.strategy,
                seed=spec.seed,
                split=split_name,
                report=report,
            )
            line = record.to_json_dict()
            line.update({
                "run_id": spec.run_id,
                "config_hash": config.config_hash,
                "schedule": list(schedule_row) if schedule_row else None,
                "train_seconds": round(elapsed, 3),
                "achieved_sparsity": achieved,
            })
            lines.append(line)
    return lines, model


def _existing_run_ids(results_path: Path) -> set[str]:
    done = set()
    if results_path.is_file():
        with open(results_path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    done.add(json.loads(line).get("run_id"))
    return done


def run(config: ExperimentConfig, workers: int = 1) -> Path:
    """Execute every pending grid cell; returns the results.jsonl path.

    Completed run ids found in an existing results file are skipped, so
    rerunning a finished experiment writes nothing new. Failures are
    recorded per run in failures.jsonl and do not stop the rest of the
    grid. With workers > 1 runs execute on a thread pool; the set of
    result lines is unchanged, only their order can vary.
    """
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    out_dir = config.output_path / config.config_hash[:HASH_PREFIX_LEN]
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot_path = out_dir / "config_snapshot.json"
    snapshot = {"config_hash": config.config_hash, "config": config.canonical_dict()}
    if snapshot_path.is_file():
        existing = json.loads(snapshot_path.read_text(encoding="utf-8"))
        if existing.get("config_hash") != config.config_hash:
            raise ConfigError(
                f"{snapshot_path}: directory belongs to a different config"
            )
    else:
        snapshot_path.write_text(
            json.dumps(snapshot, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    meta = load_metadata(config)
    trains, tests = load_corpora(config)
    perturbed = build_perturbed(config, meta, tests)

    perturbed_dir = out_dir / "perturbed"
    perturbed_dir.mkdir(exist_ok=True)
    for (language, scope_name), (corpus, records) in sorted(perturbed.items()):
        stem = f"{language}.{scope_name}"
        (perturbed_dir / f"{stem}.iob2").write_text(
            serialize_iob2(corpus), encoding="utf-8"
        )
        write_replacement_log(records, perturbed_dir / f"{stem}.log.jsonl")

    results_path = out_dir / "results.jsonl"
    failures_path = out_dir / "failures.jsonl"
    failures_path.write_text("", encoding="utf-8")
    done = _existing_run_ids(results_path)
    pending = [spec for spec in plan(config) if spec.run_id not in done]

    lock = threading.Lock()

    def handle(spec: RunSpec) -> None:
        try:
            lines, _ = execute_run(
                spec, config, trains, tests, perturbed,
                checkpoint_dir=out_dir / "checkpoints" / spec.run_id,
            )
            blob = "".join(
                json.dumps(line, sort_keys=True) + "\n" for line in lines
            )
            with lock:
                with open(results_path, "a", encoding="utf-8") as f:
                    f.write(blob)
        except NerpruneError as exc:
            failure = json.dumps({
                "run_id": spec.run_id,
                "error": type(exc).__name__,
                "message": str(exc),
            }, sort_keys=True)
            with lock:
                with open(failures_path, "a", encoding="utf-8") as f:
                    f.write(failure + "\n")

    if workers == 1:
        for spec in pending:
            handle(spec)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(handle, pending))
    if not results_path.is_file():
        results_path.write_text("", encoding="utf-8")
    return results_path
