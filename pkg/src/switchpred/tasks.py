"""Training and prediction for the binary and one-vs-rest task variants."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence

from .adpredictor import FeatureVector, ModelConfig, ModelState, load_model, save_model
from .errors import ConfigError, FormatError, SwitchPredError
from .evaluation import auc
from .features import ALL_FAMILIES, BucketingConfig, FeatureExtractor, encode
from .logs import Session, SwitchType, session_label, switch_label

log = logging.getLogger(__name__)

AUC_IMPROVEMENT_THRESHOLD = 0.0005


class TaskKind(str, Enum):
    BINARY = "binary"
    THREE_CATEGORY = "three_category"
    FOUR_CATEGORY = "four_category"


_TARGETS = {
    TaskKind.BINARY: (None,),
    TaskKind.THREE_CATEGORY: (SwitchType.B, SwitchType.P),
    TaskKind.FOUR_CATEGORY: (SwitchType.B, SwitchType.P, SwitchType.H),
}


def model_key(target: Optional[SwitchType]) -> str:
    return "binary" if target is None else target.value


@dataclass(frozen=True)
class TaskSpec:
    kind: TaskKind = TaskKind.BINARY
    config: ModelConfig = field(default_factory=ModelConfig)
    families: frozenset = ALL_FAMILIES
    bucketing: BucketingConfig = field(default_factory=BucketingConfig)
    epochs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        object.__setattr__(self, "families", frozenset(self.families))
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")

    @property
    def targets(self) -> tuple:
        return _TARGETS[self.kind]

    def extractor(self, stats) -> FeatureExtractor:
        return FeatureExtractor(stats, self.bucketing, self.families)


class Example(NamedTuple):
    session_id: int
    x: FeatureVector
    switch_type: Optional[SwitchType]


def examples(extractor: FeatureExtractor, sessions: Iterable[Session], in_stats: bool = False) -> Iterator[Example]:
    """Encode sessions once so several models can share the work."""
    for s in sessions:
        try:
            x = extractor.vector(s, in_stats)
        except SwitchPredError as exc:
            exc.args = (f"session {s.session_id}: {exc}",)
            raise
        yield Example(s.session_id, x, s.switch_type)


def fit(spec: TaskSpec, data: Iterable[Example], models: Optional[dict] = None) -> dict[str, ModelState]:
    """One online pass per epoch over ``data`` in order, updating every
    constituent model on each example."""
    models = models if models is not None else {model_key(t): ModelState(spec.config) for t in spec.targets}
    targets = [(models[model_key(t)], t) for t in spec.targets]
    data = data if spec.epochs == 1 else list(data)
    for _ in range(spec.epochs):
        for ex in data:
            if not ex.x:
                log.warning("session %d has no features; skipped", ex.session_id)
                continue
            for model, target in targets:
                model.update(ex.x, switch_label(ex.switch_type, target))
    return models


def train(spec: TaskSpec, sessions: Iterable[Session], stats, in_stats: bool = True) -> dict[str, ModelState]:
    """Train on labelled sessions.  ``in_stats`` says the sessions were
    counted into ``stats`` and gets them leave-one-out treatment."""
    return fit(spec, examples(spec.extractor(stats), sessions, in_stats))


@dataclass
class SessionPrediction:
    session_id: int
    probability: float
    per_type: Optional[dict] = None


def predict_examples(spec: TaskSpec, models: dict[str, ModelState], data: Iterable[Example]) -> list[SessionPrediction]:
    out = []
    for ex in data:
        if spec.kind is TaskKind.BINARY:
            out.append(SessionPrediction(ex.session_id, models["binary"].predict(ex.x)))
        else:
            per_type = {t: models[t.value].predict(ex.x) for t in spec.targets}
            out.append(SessionPrediction(ex.session_id, max(per_type.values()), per_type))
    return out


def predict_task(spec: TaskSpec, models: dict[str, ModelState], sessions: Iterable[Session], stats) -> list[SessionPrediction]:
    return predict_examples(spec, models, examples(spec.extractor(stats), sessions))


def write_predictions(fh, spec: TaskSpec, predictions: Iterable[SessionPrediction]) -> None:
    """TSV with header ``session_id probability [B P [H]]``."""
    types = [t for t in spec.targets if t is not None]
    fh.write("\t".join(["session_id", "probability"] + [t.value for t in types]) + "\n")
    for p in predictions:
        cols = [str(p.session_id), repr(p.probability)]
        cols += [repr(p.per_type[t]) for t in types]
        fh.write("\t".join(cols) + "\n")


# -- model directory -----------------------------------------------------------

MANIFEST = "manifest.json"
MANIFEST_VERSION = 1


def save_task(directory, spec: TaskSpec, models: dict[str, ModelState]) -> None:
    os.makedirs(directory, exist_ok=True)
    files = {}
    for key, model in sorted(models.items()):
        files[key] = f"{key}.model"
        save_model(model, os.path.join(directory, files[key]))
    manifest = {
        "version": MANIFEST_VERSION,
        "task": spec.kind.value,
        "families": sorted(spec.families),
        "bucketing": spec.bucketing.to_dict(),
        "model_config": {
            "beta": spec.config.beta,
            "prior_mean": spec.config.prior_mean,
            "prior_variance": spec.config.prior_variance,
        },
        "epochs": spec.epochs,
        "models": files,
    }
    with open(os.path.join(directory, MANIFEST), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_task(directory) -> tuple[TaskSpec, dict[str, ModelState]]:
    path = os.path.join(directory, MANIFEST)
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if manifest.get("version") != MANIFEST_VERSION:
        raise FormatError(f"{path}: unsupported manifest version {manifest.get('version')!r}")
    try:
        spec = TaskSpec(
            kind=TaskKind(manifest["task"]),
            config=ModelConfig(**manifest["model_config"]),
            families=frozenset(manifest["families"]),
            bucketing=BucketingConfig.from_dict(manifest["bucketing"]),
            epochs=manifest.get("epochs", 1),
        )
        files = manifest["models"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    models = {key: load_model(os.path.join(directory, name)) for key, name in files.items()}
    missing = {model_key(t) for t in spec.targets} - set(models)
    if missing:
        raise FormatError(f"{path}: missing models {sorted(missing)}")
    return spec, models


# -- feature ablation ----------------------------------------------------------

def keep_candidate(delta: float, threshold: float = AUC_IMPROVEMENT_THRESHOLD) -> bool:
    """An added family is kept unless it improves AUC by less than ``threshold``."""
    return delta >= threshold


@dataclass
class AblationReport:
    candidate: frozenset
    base_auc: float
    candidate_auc: float
    delta: float
    keep: bool


def feature_ablation_report(
    base: Iterable[str],
    candidate: Iterable[str],
    train_sessions: Sequence[Session],
    valid_sessions: Sequence[Session],
    stats,
    spec: Optional[TaskSpec] = None,
    threshold: float = AUC_IMPROVEMENT_THRESHOLD,
) -> AblationReport:
    """Validation AUC of the binary task with and without ``candidate``
    families on top of ``base``.  ``stats`` must be built from
    ``train_sessions``."""
    spec = spec or TaskSpec()
    base = frozenset(base)
    candidate = frozenset(candidate)
    full = FeatureExtractor(stats, spec.bucketing, base | candidate)
    train_feats = [(s, full.features(s, in_stats=True)) for s in train_sessions]
    valid_feats = [(s, full.features(s)) for s in valid_sessions]
    labels = {s.session_id: session_label(s) for s in valid_sessions}

    def run(families):
        binary = TaskSpec(TaskKind.BINARY, spec.config, families, spec.bucketing, spec.epochs)
        def enc(pairs):
            return [
                Example(s.session_id, encode(f for f in feats if f[0] in families), s.switch_type)
                for s, feats in pairs
            ]
        models = fit(binary, enc(train_feats))
        preds = predict_examples(binary, models, enc(valid_feats))
        return auc([(p.session_id, p.probability) for p in preds], labels)

    base_auc = run(base)
    cand_auc = run(base | candidate)
    delta = cand_auc - base_auc
    return AblationReport(candidate, base_auc, cand_auc, delta, keep_candidate(delta, threshold))
