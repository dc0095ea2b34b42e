"""End-to-end run: events -> cohort -> split -> datasets -> searches -> models -> reports.

Every stage writes plain CSV/JSON under the output directory so it can be
inspected or rerun on its own.  The artifact tree is a function of the input
files, the config and the seed only; the thread count never changes a byte.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .cohort import Cohort, Phase, ingest_cohort, save_cohort, write_events
from .datasets import (
    TEST,
    TRAIN,
    build_day_datasets,
    dataset_filename,
    save_dataset,
    save_split,
    split_cohort,
)
from .ensemble import ET, RF, save_model
from .evaluation import EvalReport, emit_report, evaluate
from .provenance import config_hash, provenance
from .registry import default_registry, load_registry
from .selection import (
    LogEntry,
    SearchSpace,
    SearchSpec,
    best_entry,
    random_search,
    refit_with_threshold,
    write_search_log,
)
from .snapshot import DAY_NAMES, DEFAULT_TREND_THRESHOLD, FeatureForm
from .synth import GeneratorSpec, generate

log = logging.getLogger(__name__)

FORMS = ("num", "cat")
FORM_TAG = {"num": "N", "cat": "C"}
SUMMARY_COLUMNS = ("phase", "day", "model", "cv_score", "f2", "roc", "f2_u", "roc_u", "unc_pct", "threshold")


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    seed: int
    registry: str | None = None  # None: built-in test registry
    input: str | None = None  # event CSV; None: synthesize a cohort
    generator: dict = field(default_factory=dict)
    boundary: str = "2020-03-21"
    test_fraction: float = 0.2
    trend_threshold: float = DEFAULT_TREND_THRESHOLD
    days: tuple[str, ...] = DAY_NAMES
    forms: tuple[str, ...] = FORMS
    n_configs: int = 64
    k_folds: int | str = "auto"
    fold_cutoff: int = 600
    max_u: float = 0.25
    n_thresholds: int = 100
    space: dict | None = None  # SearchSpace fields; None: defaults
    out_dir: str = "run"

    def __post_init__(self):
        if self.seed is None:
            raise ConfigError("a seed is mandatory")
        self.seed = int(self.seed)
        self.days = tuple(str(d) for d in self.days)
        self.forms = tuple(self.forms)
        unknown = [d for d in self.days if d not in DAY_NAMES]
        if unknown:
            raise ConfigError(f"unknown day configs {unknown}")
        if not self.forms or any(f not in FORMS for f in self.forms):
            raise ConfigError(f"forms must be a non-empty subset of {FORMS}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        try:
            dt.date.fromisoformat(self.boundary)
        except ValueError:
            raise ConfigError(f"bad boundary date {self.boundary!r}") from None
        try:
            self.search_spec()
            GeneratorSpec.from_dict({**self.generator, "seed": self.seed})
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        if "seed" not in d:
            raise ConfigError("a seed is mandatory")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path, **overrides) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        base = path.parent
        for key in ("registry", "input"):
            if data.get(key):
                p = Path(data[key])
                data[key] = str(p if p.is_absolute() else base / p)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["days"] = list(self.days)
        d["forms"] = list(self.forms)
        return d

    def search_spec(self, seed: int | None = None) -> SearchSpec:
        space = SearchSpace.from_dict(self.space) if self.space else SearchSpace()
        return SearchSpec(
            n_configs=self.n_configs,
            k_folds=self.k_folds,
            max_u=self.max_u,
            n_thresholds=self.n_thresholds,
            seed=self.seed if seed is None else seed,
            space=space,
            fold_cutoff=self.fold_cutoff,
        )

    def check_paths(self) -> None:
        for key in ("registry", "input"):
            p = getattr(self, key)
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"{key} file not found: {p}")

    def hashed_view(self) -> dict:
        """What the config hash covers: every setting except where outputs go,
        with referenced files replaced by digests of their contents."""
        self.check_paths()
        d = self.to_dict()
        d.pop("out_dir")
        for key in ("registry", "input"):
            if d[key] is not None:
                d[key] = {"sha256": _file_digest(d[key])}
        return d

    def hash(self) -> str:
        return config_hash(self.hashed_view())


def _file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def derived_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


def model_tag(kind: str, form: str) -> str:
    return f"{kind}-{FORM_TAG[form]}"


@dataclass
class Candidate:
    kind: str
    form: str
    entry: LogEntry


def select_candidate(candidates: list[Candidate]) -> Candidate:
    """Highest CV score; ties go to RF over ET, then numerical over categorical."""
    order = {(RF, "num"): 0, (RF, "cat"): 1, (ET, "num"): 2, (ET, "cat"): 3}
    ranked = sorted(candidates, key=lambda c: order[(c.kind, c.form)])
    best = None
    for c in ranked:
        if best is None or c.entry.cv.mean_score > best.entry.cv.mean_score:
            best = c
    if best is None:
        raise ValueError("no candidate models")
    return best


@dataclass
class SummaryRow:
    phase: str
    day: str
    model: str
    cv_score: float
    report: EvalReport

    def values(self) -> dict:
        r = self.report
        return {
            "phase": self.phase,
            "day": self.day,
            "model": self.model,
            "cv_score": self.cv_score,
            "f2": r.complete.macro_f2,
            "roc": r.complete.roc_auc,
            "f2_u": r.no_uncertain.macro_f2,
            "roc_u": r.no_uncertain.roc_auc,
            "unc_pct": 100 * r.uncertain_fraction,
            "threshold": r.threshold,
        }


def _cell(value) -> str:
    if value is None:
        return ""
    return repr(float(value)) if isinstance(value, float) else str(value)


def write_summary(rows: list[SummaryRow], out_dir: Path) -> None:
    with open(out_dir / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            v = row.values()
            w.writerow([_cell(v[c]) for c in SUMMARY_COLUMNS])

    def pct(x):
        return "n/a" if x is None else f"{100 * x:.1f}"

    lines = [
        "| Phase | Day | F2 | ROC | F2-U | ROC-U | %Unc | Model |",
        "|---|---|---|---|---|---|---|---|",
    ]
    for row in rows:
        v = row.values()
        lines.append(
            f"| {row.phase.upper()} | {row.day} | {pct(v['f2'])} | {pct(v['roc'])} | "
            f"{pct(v['f2_u'])} | {pct(v['roc_u'])} | {v['unc_pct']:.1f} | {row.model} |"
        )
    (out_dir / "summary.md").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class _Stage:
    """Context manager turning any failure into a PipelineError naming the stage."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None:
            log.info("stage %s done in %.1fs", self.name, time.perf_counter() - self.t0)
            return False
        if isinstance(exc, (PipelineError, ConfigError)):
            return False
        raise PipelineError(self.name, f"{exc_type.__name__}: {exc}") from exc


def run_pipeline(config: PipelineConfig, threads: int = 1) -> list[SummaryRow]:
    """Run every stage; returns the summary rows (also written to disk)."""
    # validation first: nothing is written if the config points nowhere
    with _Stage("config"):
        config.check_paths()
        registry = load_registry(config.registry) if config.registry else default_registry()
        view = config.hashed_view()
    prov = provenance(view, config.seed)
    out = Path(config.out_dir)
    for sub in ("datasets", "searches", "models", "reports"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    _write_json({"config": view, "provenance": prov}, out / "config.json")

    with _Stage("ingest"):
        if config.input is None:
            gen = GeneratorSpec.from_dict({**config.generator, "seed": config.seed})
            write_events(generate(gen), out / "events.csv")
        else:
            (out / "events.csv").write_bytes(Path(config.input).read_bytes())
        result = ingest_cohort(out / "events.csv", registry)
        if result.rejected:
            log.warning("%d event rows rejected", len(result.rejected))
        cohort = Cohort(result.records, dt.date.fromisoformat(config.boundary), dict(prov))
        save_cohort(cohort, out / "cohort.json")

    with _Stage("split"):
        split = split_cohort(cohort, config.test_fraction, derived_seed(config.seed, 3))
        save_split(split, out / "split.csv")

    datasets = {}
    with _Stage("build-datasets"):
        for phase in Phase:
            members = cohort.phase_records(phase)
            for form in config.forms:
                pairs = build_day_datasets(
                    members, split, phase, FeatureForm(form), config.days,
                    config.trend_threshold, registry,
                )
                for day, (train, test) in pairs.items():
                    datasets[phase.value, day, form] = (train, test)
                    for ds, side in ((train, TRAIN), (test, TEST)):
                        save_dataset(ds, out / "datasets" / dataset_filename(phase.value, form, day, side))

    rows = []
    for pi, phase in enumerate(Phase):
        for di, day in enumerate(config.days):
            with _Stage(f"train {phase.value} day {day}"):
                candidates = []
                for fi, form in enumerate(config.forms):
                    train, _ = datasets[phase.value, day, form]
                    spec = config.search_spec(derived_seed(config.seed, 2, pi, di, fi))
                    res = random_search(train, spec, threads=threads, refit=False)
                    write_search_log(res, out / "searches" / f"{phase.value}_{form}_day{day}.csv")
                    for kind in (RF, ET):
                        entry = best_entry(res.log, kind)
                        if entry is not None:
                            candidates.append(Candidate(kind, form, entry))
                chosen = select_candidate(candidates)
                train, test = datasets[phase.value, day, chosen.form]
                forest = refit_with_threshold(train, chosen.entry)
                forest = replace(forest, provenance=dict(prov))
                save_model(forest, out / "models" / f"{phase.value}_day{day}.json")
            with _Stage(f"evaluate {phase.value} day {day}"):
                report = evaluate(forest, test, prov)
                stem = out / "reports" / f"{phase.value}_day{day}"
                emit_report(report, stem.with_suffix(".json"))
                emit_report(report, stem.with_suffix(".md"), format="md")
            rows.append(
                SummaryRow(phase.value, day, model_tag(chosen.kind, chosen.form), chosen.entry.cv.mean_score, report)
            )
    with _Stage("summary"):
        write_summary(rows, out)
    return rows


def verify_run(config: PipelineConfig, out_dir: str | Path) -> list[str]:
    """Problems found when checking a run directory against ``config``.

    Every model and report must carry the config's hash and every report must
    pass schema validation.
    """
    from .evaluation import ReportSchemaError, validate_report
    from .provenance import check_provenance

    out = Path(out_dir)
    expected = config.hash()
    problems = []
    files = sorted((out / "models").glob("*.json")) + sorted((out / "reports").glob("*.json"))
    if not files:
        problems.append(f"no models or reports under {out}")
    for path in files:
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            problems.append(f"{path.name}: unreadable ({exc})")
            continue
        if path.parent.name == "reports":
            try:
                validate_report(record)
            except ReportSchemaError as exc:
                problems.append(f"{path.name}: {exc}")
                continue
        problems += [f"{path.name}: {p}" for p in check_provenance(record, expected)]
    return problems
