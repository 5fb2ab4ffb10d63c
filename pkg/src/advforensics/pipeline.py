"""The attack-and-detect experiment.

Build a synthetic dataset and a zoo of classifiers, attack every model with
every attack family, keep one :class:`PredictionRecord` per attempt, then ask
four questions of the records:

* q1 - how much does each attack hurt each model's accuracy?
* q2 - from an output vector alone, was the input adversarial?
* q3 - from an adversarial output vector, which model produced it?
* q4 - from an adversarial output vector, which attack family was used?

All randomness is derived from one master seed through fixed child keys, so a
run is reproducible stage by stage.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import serialize
from .attacks import FAMILIES, AttackConfig, default_configs, run_attack
from .forest import ForestParams, _thread_count, fit_forest, predict_forest_batch
from .metrics import compute_metrics
from .nn import NeuralModel, Sample, accuracy, forward, train
from .numcore import Rng

# child keys of the master Rng, one per stage
STAGE_DATASET = 1
STAGE_ZOO = 2
STAGE_CAMPAIGN = 3
STAGE_DETECT = 4
QUESTIONS = ("q1", "q2", "q3", "q4")
CLEAN, ADVERSARIAL = "clean", "adversarial"
Q2_POPULATIONS = ("paired", "natural")


class ConfigError(ValueError):
    """Invalid campaign configuration; the message names the offending field."""


class CampaignError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "gaussian_clusters"
    dimension: int = 32
    class_count: int = 10
    train_size: int = 500
    test_size: int = 200
    spread: float = 0.2
    mean_range: tuple = (0.2, 0.8)

    def __post_init__(self):
        lo, hi = (float(v) for v in self.mean_range)
        object.__setattr__(self, "mean_range", (lo, hi))
        if not 0.2 <= lo < hi <= 0.8:
            raise ConfigError("dataset.mean_range: need 0.2 <= low < high <= 0.8")
        if self.kind != "gaussian_clusters":
            raise ConfigError(f"dataset.kind: unknown dataset kind {self.kind!r}")
        if self.class_count < 2:
            raise ConfigError("dataset.class_count: need at least 2 classes")
        if self.dimension < 2:
            raise ConfigError("dataset.dimension: need at least 2 features")
        if self.train_size < 1 or self.test_size < 1:
            raise ConfigError("dataset: train_size and test_size must be positive")
        if not self.spread > 0:
            raise ConfigError("dataset.spread: must be > 0")


@dataclass(frozen=True)
class ZooSpec:
    architectures: tuple = ((32,), (64,), (32, 32), (64, 32))
    epochs: int = 50
    learning_rate: float = 0.05
    batch_size: int = 32

    def __post_init__(self):
        archs = tuple(tuple(int(w) for w in a) for a in self.architectures)
        object.__setattr__(self, "architectures", archs)
        if len(archs) < 2:
            raise ConfigError("zoo.architectures: need at least 2 architectures")
        if any(w < 1 for a in archs for w in a):
            raise ConfigError("zoo.architectures: layer widths must be positive")
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ConfigError("zoo: epochs, batch_size and learning_rate must be positive")


@dataclass(frozen=True)
class DetectorSpec:
    forest: ForestParams = field(default_factory=ForestParams)
    test_fraction: float = 0.3
    include_failed: bool = False
    q2_population: str = "paired"

    def __post_init__(self):
        if self.q2_population not in Q2_POPULATIONS:
            raise ConfigError(f"detector.q2_population: expected one of {Q2_POPULATIONS}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("detector.test_fraction: must lie in (0, 1)")


@dataclass(frozen=True)
class CampaignConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    zoo: ZooSpec = field(default_factory=ZooSpec)
    attacks: tuple = field(default_factory=lambda: tuple(default_configs()))
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    seed: int = 0
    samples_per_attack: int = 100

    def __post_init__(self):
        if self.samples_per_attack < 1:
            raise ConfigError("run.samples_per_attack: must be >= 1")
        if self.samples_per_attack > self.dataset.test_size:
            raise ConfigError("run.samples_per_attack: exceeds dataset.test_size")
        if not self.attacks:
            raise ConfigError("attacks: need at least one attack")
        fams = [a.family for a in self.attacks]
        if len(set(fams)) != len(fams):
            raise ConfigError("attacks: each family may appear only once")

    def to_dict(self) -> dict:
        return {
            "dataset": {f.name: (list(v) if isinstance(v := getattr(self.dataset, f.name), tuple) else v)
                        for f in fields(DatasetSpec)},
            "zoo": {
                "architectures": [list(a) for a in self.zoo.architectures],
                "epochs": self.zoo.epochs,
                "learning_rate": self.zoo.learning_rate,
                "batch_size": self.zoo.batch_size,
            },
            "attacks": [
                {k: v for k, v in a.to_dict().items()} for a in self.attacks
            ],
            "detector": {
                **self.detector.forest.to_dict(),
                "test_fraction": self.detector.test_fraction,
                "include_failed": self.detector.include_failed,
                "q2_population": self.detector.q2_population,
            },
            "run": {"seed": self.seed, "samples_per_attack": self.samples_per_attack},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        """Parse the JSON config layout; unknown or mistyped keys raise :class:`ConfigError`."""
        _expect_keys(d, {"dataset", "zoo", "attacks", "detector", "run"}, "")
        try:
            dataset = DatasetSpec(**_section(d, "dataset", {f.name for f in fields(DatasetSpec)}))
            zoo = ZooSpec(**_section(d, "zoo", {f.name for f in fields(ZooSpec)}))
            attacks = tuple(default_configs())
            if "attacks" in d:
                if not isinstance(d["attacks"], list):
                    raise ConfigError("attacks: expected a list of attack objects")
                attacks = tuple(_attack(a, i) for i, a in enumerate(d["attacks"]))
            det = _section(d, "detector", {
                "tree_count", "max_features", "min_samples_split", "max_depth", "bootstrap",
                "class_weight", "test_fraction", "include_failed", "q2_population"})
            forest_keys = {"tree_count", "max_features", "min_samples_split", "max_depth", "bootstrap",
                           "class_weight"}
            try:
                forest = ForestParams(**{k: v for k, v in det.items() if k in forest_keys})
            except ValueError as exc:
                raise ConfigError(f"detector: {exc}") from None
            detector = DetectorSpec(forest, **{k: v for k, v in det.items() if k not in forest_keys})
            run = _section(d, "run", {"seed", "samples_per_attack"})
            return cls(dataset, zoo, attacks, detector, **run)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "CampaignConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        if not isinstance(d, dict):
            raise ConfigError("top level: expected a JSON object")
        return cls.from_dict(d)


def _expect_keys(d, allowed, where):
    unknown = sorted(set(d) - allowed)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown key(s): {', '.join(prefix + k for k in unknown)}")


def _section(d, name, allowed):
    sec = d.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected an object")
    _expect_keys(sec, allowed, name)
    return dict(sec)


_ATTACK_KEYS = {"family", "epsilon", "steps", "step_size", "overshoot", "norm", "minimal", "random_start"}


def _attack(a, i) -> AttackConfig:
    if not isinstance(a, dict) or "family" not in a:
        raise ConfigError(f"attacks[{i}]: expected an object with a 'family' field")
    _expect_keys(a, _ATTACK_KEYS, f"attacks[{i}]")
    try:
        params = {k: v for k, v in a.items() if k != "family"}
        return AttackConfig.default(a["family"], **params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"attacks[{i}]: {exc}") from None


# --------------------------------------------------------------------------
# dataset and zoo

def generate_dataset(spec: DatasetSpec, rng: Rng) -> tuple[list[Sample], list[Sample]]:
    """Gaussian class clusters, clamped to ``[0, 1]``.

    Class means are drawn uniformly in ``mean_range^d`` (inside ``[0.2, 0.8]``).

    Labels cycle through the classes so each split is balanced to within one
    sample per class.
    """
    means = rng.child(0).uniform(*spec.mean_range, size=(spec.class_count, spec.dimension))

    def split(n, r):
        y = np.arange(n) % spec.class_count
        y = y[r.permutation(n)]
        X = np.clip(means[y] + r.normal(0.0, spec.spread, size=(n, spec.dimension)), 0.0, 1.0)
        return [Sample(x, int(label)) for x, label in zip(X, y)]

    return split(spec.train_size, rng.child(1)), split(spec.test_size, rng.child(2))


def model_id_for(arch) -> str:
    return "mlp-" + "x".join(str(w) for w in arch)


def build_zoo(cfg: CampaignConfig, train_data: list[Sample], rng: Rng) -> list[NeuralModel]:
    """One trained model per architecture; model ``i`` trains from ``rng.child(i)``."""
    archs = cfg.zoo.architectures
    if len(archs) < 2:
        raise ConfigError("zoo.architectures: need at least 2 architectures")
    ids = []
    for arch in archs:
        mid = model_id_for(arch)
        n = sum(1 for i in ids if i == mid or i.startswith(mid + "#"))
        ids.append(mid if n == 0 else f"{mid}#{n}")
    zoo = []
    for i, (arch, mid) in enumerate(zip(archs, ids)):
        try:
            zoo.append(train(
                list(arch), train_data, cfg.zoo.epochs, cfg.zoo.learning_rate, rng.child(i),
                batch_size=cfg.zoo.batch_size, class_count=cfg.dataset.class_count, model_id=mid,
            ))
        except FloatingPointError as exc:
            raise CampaignError(f"training failed for architecture {list(arch)}: {exc}") from exc
    return zoo


# --------------------------------------------------------------------------
# records

@dataclass
class PredictionRecord:
    sample_id: int
    clean_input: np.ndarray
    adv_input: np.ndarray
    clean_output: np.ndarray
    adv_output: np.ndarray
    truth: int
    attack_success: bool
    model_id: str
    attack_id: str

    def to_dict(self, with_inputs: bool = True) -> dict:
        d = {"sample_id": self.sample_id}
        if with_inputs:
            d["clean_input"] = self.clean_input
            d["adv_input"] = self.adv_input
        d.update(
            clean_output=self.clean_output,
            adv_output=self.adv_output,
            truth=self.truth,
            attack_success=self.attack_success,
            model_id=self.model_id,
            attack_id=self.attack_id,
        )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionRecord":
        names = {f.name for f in fields(cls)}
        missing = names - set(d)
        if missing:
            raise ValueError(f"record is missing field(s) {sorted(missing)}")
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"record has unknown field(s) {sorted(unknown)}")
        vec = {k: np.asarray(d[k], dtype=np.float64) for k in
               ("clean_input", "adv_input", "clean_output", "adv_output")}
        return cls(
            sample_id=int(d["sample_id"]), truth=int(d["truth"]),
            attack_success=bool(d["attack_success"]), model_id=str(d["model_id"]),
            attack_id=str(d["attack_id"]), **vec,
        )


def _record_key(r: PredictionRecord):
    return (r.model_id, r.attack_id, r.sample_id)


def run_campaign(cfg: CampaignConfig, zoo: list[NeuralModel], test_data: list[Sample],
                 rng: Rng) -> list[PredictionRecord]:
    """Attack ``samples_per_attack`` test samples with every (model, attack) pair.

    The samples are drawn once (``rng.child(0)``) and shared by all pairs; an
    attack needing randomness gets ``rng.child(1, model, attack, sample)``.
    Records come back sorted by ``(model_id, attack_id, sample_id)``.
    """
    if not zoo or not test_data:
        raise CampaignError("run_campaign needs a non-empty zoo and test set")
    if cfg.samples_per_attack > len(test_data):
        raise CampaignError("samples_per_attack exceeds the test set size")
    picked = np.sort(rng.child(0).choice(len(test_data), cfg.samples_per_attack, replace=False))
    samples = [(int(i), test_data[i]) for i in picked]

    def per_model(mi):
        model = zoo[mi]
        X = np.stack([s.x0 for _, s in samples])
        clean_out = forward(model, X)
        out = []
        for ai, acfg in enumerate(cfg.attacks):
            for (sid, s), p_clean in zip(samples, clean_out):
                try:
                    res = run_attack(acfg, model, s, rng.child(1, mi, ai, sid))
                except Exception as exc:
                    raise CampaignError(
                        f"attack failed (model_id={model.model_id}, attack_id={acfg.family}, "
                        f"sample_id={sid}): {exc}"
                    ) from exc
                p_adv = forward(model, res.x_adv)
                out.append(PredictionRecord(
                    sample_id=sid, clean_input=s.x0, adv_input=res.x_adv,
                    clean_output=p_clean, adv_output=p_adv, truth=s.label,
                    attack_success=bool(np.argmax(p_adv) != s.label),
                    model_id=model.model_id, attack_id=acfg.family,
                ))
        return out

    threads = _thread_count()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            chunks = list(pool.map(per_model, range(len(zoo))))
    else:
        chunks = [per_model(i) for i in range(len(zoo))]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=_record_key)
    return records


def records_to_jsonl(records) -> str:
    return "".join(serialize.dumps(r.to_dict()) + "\n" for r in records)


def write_records(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(records_to_jsonl(records))


class RecordFormatError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


def read_records(path) -> list[PredictionRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(PredictionRecord.from_dict(json.loads(line)))
            except (ValueError, TypeError, KeyError) as exc:
                raise RecordFormatError(lineno, str(exc)) from None
    return records


def records_to_csv(records) -> str:
    """Flat CSV of the records without the raw input vectors."""
    if not records:
        return ""
    C = len(records[0].clean_output)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "model_id", "attack_id", "truth", "attack_success"]
               + [f"clean_p{k}" for k in range(C)] + [f"adv_p{k}" for k in range(C)])
    for r in records:
        w.writerow([r.sample_id, r.model_id, r.attack_id, r.truth, int(r.attack_success)]
                   + [serialize.format_float(v) for v in r.clean_output]
                   + [serialize.format_float(v) for v in r.adv_output])
    return buf.getvalue()


# --------------------------------------------------------------------------
# questions

@dataclass
class QuestionReport:
    """Answer to one question.

    ``per_label`` maps each label to its metrics (q2-q4: precision, recall,
    f1, support; q1: accuracy summary). ``baseline`` is the random-guess rate.
    """

    question: str
    labels: list[str]
    per_label: dict
    macro: dict
    baseline: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "labels": list(self.labels),
            "per_label": self.per_label,
            "macro": self.macro,
            "baseline": self.baseline,
            **self.details,
        }

    def to_json(self) -> str:
        return serialize.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["question", "label", "metric", "value"])
        for label in self.labels:
            for metric, value in self.per_label[label].items():
                if isinstance(value, dict):
                    continue
                w.writerow([self.question, label, metric, _csv_num(value)])
        for metric, value in self.macro.items():
            w.writerow([self.question, "macro", metric, _csv_num(value)])
        w.writerow([self.question, "baseline", "baseline", _csv_num(self.baseline)])
        return buf.getvalue()


def _csv_num(v):
    return serialize.format_float(v) if isinstance(v, float) else str(v)


def q1_attack_accuracy(records, clean_eval: dict | None = None) -> QuestionReport:
    """Clean and adversarial accuracy per (model, attack), summarised per model.

    Accuracy is measured against the truth label on the attacked samples. The
    per-model averages and (population) standard deviations run over attacks.
    ``clean_eval`` may map model ids to a clean accuracy measured elsewhere,
    e.g. on the full test set; it is reported alongside.
    """
    if not records:
        raise ValueError("q1 needs at least one record")
    models = sorted({r.model_id for r in records})
    attacks = sorted({r.attack_id for r in records})
    per_label = {}
    for m in models:
        per_attack = {}
        for a in attacks:
            rs = [r for r in records if r.model_id == m and r.attack_id == a]
            if not rs:
                continue
            clean = float(np.mean([np.argmax(r.clean_output) == r.truth for r in rs]))
            adv = float(np.mean([np.argmax(r.adv_output) == r.truth for r in rs]))
            per_attack[a] = {"clean_accuracy": clean, "adversarial_accuracy": adv, "count": len(rs)}
        cl = [v["clean_accuracy"] for v in per_attack.values()]
        ad = [v["adversarial_accuracy"] for v in per_attack.values()]
        entry = {
            "clean_avg": float(np.mean(cl)),
            "adv_avg": float(np.mean(ad)),
            "clean_std": float(np.std(cl)),
            "adv_std": float(np.std(ad)),
        }
        if clean_eval and m in clean_eval:
            entry["clean_test_accuracy"] = float(clean_eval[m])
        entry["per_attack"] = per_attack
        per_label[m] = entry
    macro = {k: float(np.mean([per_label[m][k] for m in models]))
             for k in ("clean_avg", "adv_avg", "clean_std", "adv_std")}
    C = len(records[0].clean_output)
    return QuestionReport("q1", models, per_label, macro, 1.0 / C, {"attacks": attacks})


@dataclass
class DetectionTable:
    features: np.ndarray
    targets: np.ndarray
    groups: np.ndarray
    labels: list[str]


def q2_table(records, population: str = "paired", rng: Rng | None = None) -> DetectionTable:
    """Clean vs adversarial output rows.

    Every (model, sample) pair contributes its clean output once. With the
    ``"natural"`` population every record also contributes its adversarial
    output. With ``"paired"`` each (model, sample) contributes exactly one
    adversarial output, so the two classes are the same size; per model, the
    attack used for each sample comes from a seeded shuffle of the attack list
    repeated over the samples, which keeps the attack mix even.
    """
    if population not in Q2_POPULATIONS:
        raise ValueError(f"unknown q2 population {population!r}")
    by_pair: dict[tuple, list[PredictionRecord]] = {}
    for r in records:
        by_pair.setdefault((r.model_id, r.sample_id), []).append(r)
    chosen = {}
    if population == "paired":
        rng = rng or Rng(0)
        models = sorted({m for m, _ in by_pair})
        for mi, m in enumerate(models):
            keys = sorted(k for k in by_pair if k[0] == m)
            attacks = sorted({r.attack_id for k in keys for r in by_pair[k]})
            reps = -(-len(keys) // len(attacks))
            plan = (attacks * reps)[:len(keys)]
            plan = [plan[i] for i in rng.child(mi).permutation(len(plan))]
            for k, a in zip(keys, plan):
                match = [r for r in by_pair[k] if r.attack_id == a] or by_pair[k]
                chosen[k] = [match[0]]
    rows, targets, groups = [], [], []
    for key in sorted(by_pair):
        rs = by_pair[key]
        rows.append(rs[0].clean_output)
        targets.append(0)
        groups.append(key[1])
        for r in chosen.get(key, rs):
            rows.append(r.adv_output)
            targets.append(1)
            groups.append(key[1])
    return _table(rows, targets, groups, [CLEAN, ADVERSARIAL])


def _attribution_table(records, attr, include_failed) -> DetectionTable:
    rs = [r for r in records if include_failed or r.attack_success]
    labels = sorted({getattr(r, attr) for r in rs})
    index = {lab: i for i, lab in enumerate(labels)}
    return _table([r.adv_output for r in rs], [index[getattr(r, attr)] for r in rs],
                  [r.sample_id for r in rs], labels)


def _table(rows, targets, groups, labels):
    if not rows:
        return DetectionTable(np.zeros((0, 0)), np.zeros(0, dtype=np.int64),
                              np.zeros(0, dtype=np.int64), labels)
    return DetectionTable(np.stack(rows), np.asarray(targets, dtype=np.int64),
                          np.asarray(groups, dtype=np.int64), labels)


def group_split(groups, test_fraction: float, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Boolean train/test masks that never put one group on both sides."""
    unique = np.unique(groups)
    if len(unique) < 2:
        raise ValueError("need at least two distinct samples to split")
    order = unique[rng.permutation(len(unique))]
    n_test = min(max(1, int(round(test_fraction * len(unique)))), len(unique) - 1)
    test_mask = np.isin(groups, order[:n_test])
    return ~test_mask, test_mask


def detect(question: str, table: DetectionTable, spec: DetectorSpec, rng: Rng) -> QuestionReport:
    """Fit a forest on the train split of ``table`` and score the held-out split."""
    present = np.unique(table.targets)
    if len(present) < 2:
        raise ValueError(f"{question}: need at least 2 distinct labels in the records, found {len(present)}")
    train_mask, test_mask = group_split(table.groups, spec.test_fraction, rng.child(0))
    C = len(table.labels)
    forest = fit_forest(table.features[train_mask], table.targets[train_mask], spec.forest,
                        rng.child(1), class_count=C)
    pred = predict_forest_batch(forest, table.features[test_mask])
    rep = compute_metrics(pred, table.targets[test_mask], C)
    per_label = {
        lab: {"precision": float(rep.precision[i]), "recall": float(rep.recall[i]),
              "f1": float(rep.f1[i]), "support": int(rep.support[i])}
        for i, lab in enumerate(table.labels)
    }
    macro = {"precision": rep.macro_precision, "recall": rep.macro_recall, "f1": rep.macro_f1,
             "accuracy": rep.accuracy}
    train_counts = np.bincount(table.targets[train_mask], minlength=C)
    details = {
        "rows": {
            "train": int(train_mask.sum()),
            "test": int(test_mask.sum()),
            "train_per_label": {lab: int(train_counts[i]) for i, lab in enumerate(table.labels)},
            "test_per_label": {lab: int(rep.support[i]) for i, lab in enumerate(table.labels)},
        },
        "train_sample_ids": np.unique(table.groups[train_mask]).tolist(),
        "test_sample_ids": np.unique(table.groups[test_mask]).tolist(),
        "confusion": rep.confusion.tolist(),
    }
    return QuestionReport(question, list(table.labels), per_label, macro, 1.0 / C, details)


def _detector_rng(rng: Rng, question: str) -> Rng:
    return rng.child(QUESTIONS.index(question))


def q2_detect_adversarial(records, spec: DetectorSpec, rng: Rng) -> QuestionReport:
    r = _detector_rng(rng, "q2")
    table = q2_table(records, spec.q2_population, r.child(2))
    rep = detect("q2", table, spec, r)
    rep.details["population"] = spec.q2_population
    return rep


def q3_model_attribution(records, spec: DetectorSpec, rng: Rng) -> QuestionReport:
    if len({r.model_id for r in records}) < 2:
        raise ValueError("q3: records come from a single model; nothing to attribute")
    dims = {len(r.adv_output) for r in records}
    if len(dims) > 1:
        raise ValueError("q3: models disagree on class_count; output vectors do not align")
    return detect("q3", _attribution_table(records, "model_id", spec.include_failed), spec,
                  _detector_rng(rng, "q3"))


def q4_attack_attribution(records, spec: DetectorSpec, rng: Rng) -> QuestionReport:
    if len({r.attack_id for r in records}) < 2:
        raise ValueError("q4: records hold a single attack family; nothing to attribute")
    return detect("q4", _attribution_table(records, "attack_id", spec.include_failed), spec,
                  _detector_rng(rng, "q4"))


DETECTORS = {
    "q2": q2_detect_adversarial,
    "q3": q3_model_attribution,
    "q4": q4_attack_attribution,
}


def run_detector(question: str, records, spec: DetectorSpec, seed: int) -> QuestionReport:
    """Answer q2, q3 or q4 with the randomness a full run would use for ``seed``."""
    return DETECTORS[question](records, spec, Rng(seed).child(STAGE_DETECT))


# --------------------------------------------------------------------------
# plot-ready exports

FIGURES = {"q1": "fig2_attack_accuracy", "q2": "fig3_adversarial_input",
           "q3": "fig4_model_attacked", "q4": "fig5_attack_type"}


def figure_rows(report: dict) -> list[list]:
    """Rows ``[label, metric, value, baseline]`` for one question's bar chart."""
    rows = []
    base = report["baseline"]
    if report["question"] == "q1":
        for m in report["labels"]:
            for a, v in report["per_label"][m]["per_attack"].items():
                rows.append([f"{m}/{a}", "clean_accuracy", v["clean_accuracy"], base])
                rows.append([f"{m}/{a}", "adversarial_accuracy", v["adversarial_accuracy"], base])
        return rows
    for lab in report["labels"]:
        for metric in ("precision", "recall", "f1"):
            rows.append([lab, metric, report["per_label"][lab][metric], base])
    return rows


def figure_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "metric", "value", "baseline"])
    for lab, metric, value, base in figure_rows(report):
        w.writerow([lab, metric, serialize.format_float(value), serialize.format_float(base)])
    return buf.getvalue()


def evaluate_zoo(zoo, data) -> dict:
    return {m.model_id: accuracy(m, data) for m in zoo}


def is_close_to_one(p) -> bool:
    return math.isclose(float(np.sum(p)), 1.0, abs_tol=1e-9)


__all__ = [
    "FAMILIES", "CampaignConfig", "DatasetSpec", "ZooSpec", "DetectorSpec", "PredictionRecord",
    "QuestionReport", "generate_dataset", "build_zoo", "run_campaign", "q1_attack_accuracy",
    "q2_detect_adversarial", "q3_model_attribution", "q4_attack_attribution",
]
