import dataclasses
import json

import numpy as np
import pytest

from advforensics import pipeline
from advforensics.attacks import AttackConfig, default_configs
from advforensics.forest import ForestParams
from advforensics.numcore import Rng
from advforensics.pipeline import (
    CampaignConfig, CampaignError, ConfigError, DatasetSpec, DetectorSpec, PredictionRecord,
    ZooSpec, build_zoo, generate_dataset, q1_attack_accuracy, q2_detect_adversarial, q2_table,
    q3_model_attribution, q4_attack_attribution, read_records, records_to_csv, records_to_jsonl,
    run_campaign, run_detector, write_records,
)


def tiny_config(**kw):
    base = dict(
        dataset=DatasetSpec(dimension=8, class_count=4, train_size=200, test_size=60, spread=0.12),
        zoo=ZooSpec(architectures=((8,), (16,), (8, 8)), epochs=20),
        detector=DetectorSpec(ForestParams(tree_count=10)),
        samples_per_attack=20,
        seed=3,
    )
    base.update(kw)
    return CampaignConfig(**base)


def campaign(cfg):
    rng = Rng(cfg.seed)
    train_data, test_data = generate_dataset(cfg.dataset, rng.child(pipeline.STAGE_DATASET))
    zoo = build_zoo(cfg, train_data, rng.child(pipeline.STAGE_ZOO))
    return zoo, test_data, run_campaign(cfg, zoo, test_data, rng.child(pipeline.STAGE_CAMPAIGN))


@pytest.fixture(scope="module")
def tiny():
    cfg = tiny_config()
    zoo, test_data, records = campaign(cfg)
    return cfg, zoo, test_data, records


# -- dataset ---------------------------------------------------------------

def test_dataset_construction():
    spec = DatasetSpec(dimension=16, class_count=10, train_size=500, test_size=200)
    tr, te = generate_dataset(spec, Rng(0))
    assert len(tr) == 500 and len(te) == 200
    for split in (tr, te):
        counts = np.bincount([s.label for s in split], minlength=10)
        assert counts.max() - counts.min() <= 1
        X = np.stack([s.x0 for s in split])
        assert X.shape[1] == 16 and X.min() >= 0 and X.max() <= 1


def test_dataset_deterministic():
    a, _ = generate_dataset(DatasetSpec(), Rng(4))
    b, _ = generate_dataset(DatasetSpec(), Rng(4))
    assert all(x.x0.tobytes() == y.x0.tobytes() and x.label == y.label for x, y in zip(a, b))


@pytest.mark.parametrize("kw", [
    dict(class_count=1), dict(dimension=1), dict(spread=0.0), dict(kind="images"),
    dict(mean_range=(0.1, 0.9)), dict(train_size=0),
])
def test_dataset_invalid(kw):
    with pytest.raises(ConfigError):
        DatasetSpec(**kw)


# -- zoo -------------------------------------------------------------------

def test_zoo_ids_and_accuracy(tiny):
    cfg, zoo, test_data, _ = tiny
    assert [m.model_id for m in zoo] == ["mlp-8", "mlp-16", "mlp-8x8"]
    for acc in pipeline.evaluate_zoo(zoo, test_data).values():
        assert acc > 1 / cfg.dataset.class_count


def test_zoo_duplicate_architectures_get_distinct_ids():
    cfg = tiny_config(zoo=ZooSpec(architectures=((8,), (8,)), epochs=2))
    tr, _ = generate_dataset(cfg.dataset, Rng(0))
    ids = [m.model_id for m in build_zoo(cfg, tr, Rng(1))]
    assert len(set(ids)) == 2


def test_zoo_deterministic(tiny):
    cfg, zoo, _, _ = tiny
    tr, _ = generate_dataset(cfg.dataset, Rng(cfg.seed).child(pipeline.STAGE_DATASET))
    again = build_zoo(cfg, tr, Rng(cfg.seed).child(pipeline.STAGE_ZOO))
    assert [m.to_json() for m in zoo] == [m.to_json() for m in again]


def test_zoo_divergence_names_architecture():
    cfg = tiny_config(zoo=ZooSpec(architectures=((8,), (4, 4)), epochs=3, learning_rate=1e300))
    tr, _ = generate_dataset(cfg.dataset, Rng(0))
    with pytest.raises(CampaignError, match=r"\[8\]"):
        build_zoo(cfg, tr, Rng(0))


# -- campaign --------------------------------------------------------------

def test_record_count_identity(tiny):
    cfg, zoo, _, records = tiny
    assert len(records) == len(zoo) * len(cfg.attacks) * cfg.samples_per_attack


def test_record_invariants(tiny):
    _, _, _, records = tiny
    for r in records:
        assert abs(r.clean_output.sum() - 1) <= 1e-9 and abs(r.adv_output.sum() - 1) <= 1e-9
        assert r.attack_success == (int(np.argmax(r.adv_output)) != r.truth)
        assert np.all((r.adv_input >= 0) & (r.adv_input <= 1))
    keys = [(r.model_id, r.attack_id, r.sample_id) for r in records]
    assert keys == sorted(keys)


def test_clean_outputs_shared_across_attacks(tiny):
    _, _, _, records = tiny
    by_pair = {}
    for r in records:
        by_pair.setdefault((r.model_id, r.sample_id), set()).add(r.clean_output.tobytes())
    assert all(len(v) == 1 for v in by_pair.values())


def test_campaign_bytes_reproducible(tiny):
    cfg, _, _, records = tiny
    _, _, again = campaign(cfg)
    assert records_to_jsonl(records) == records_to_jsonl(again)


def test_campaign_error_carries_context(tiny, monkeypatch):
    cfg, zoo, test_data, _ = tiny

    def boom(*a, **k):
        raise RuntimeError("bad gradient")

    monkeypatch.setattr(pipeline, "run_attack", boom)
    with pytest.raises(CampaignError, match="model_id=mlp-8, attack_id=FGSM, sample_id="):
        run_campaign(cfg, zoo, test_data, Rng(0))


def test_campaign_threads_do_not_change_records(tiny, monkeypatch):
    cfg, zoo, test_data, records = tiny
    monkeypatch.setenv("ADVFORENSICS_THREADS", "2")
    again = run_campaign(cfg, zoo, test_data, Rng(cfg.seed).child(pipeline.STAGE_CAMPAIGN))
    assert records_to_jsonl(again) == records_to_jsonl(records)


# -- record store ----------------------------------------------------------

def test_jsonl_round_trip_exact(tiny, tmp_path):
    _, _, _, records = tiny
    path = tmp_path / "records.jsonl"
    write_records(records, path)
    back = read_records(path)
    assert records_to_jsonl(back) == path.read_text()
    for a, b in zip(records, back):
        assert a.adv_output.tobytes() == b.adv_output.tobytes()
        assert a.clean_input.tobytes() == b.clean_input.tobytes()
    first = json.loads(path.read_text().splitlines()[0])
    assert list(first) == [f.name for f in dataclasses.fields(PredictionRecord)]


def test_jsonl_floats_have_17_significant_digits(tiny):
    _, _, _, records = tiny
    line = records_to_jsonl(records[:1])
    v = records[0].adv_output[0]
    assert ("%.17g" % v) in line


def test_malformed_line_reports_line_number(tiny, tmp_path):
    _, _, _, records = tiny
    path = tmp_path / "records.jsonl"
    path.write_text(records_to_jsonl(records[:3]) + "{not json\n")
    with pytest.raises(pipeline.RecordFormatError, match="line 4"):
        read_records(path)


def test_csv_export_omits_inputs(tiny):
    _, _, _, records = tiny
    text = records_to_csv(records)
    header = text.splitlines()[0].split(",")
    assert "clean_input" not in header and "adv_input" not in header
    assert len(text.splitlines()) == len(records) + 1
    assert header[:5] == ["sample_id", "model_id", "attack_id", "truth", "attack_success"]


# -- q1 --------------------------------------------------------------------

def test_q1_matches_brute_force_recount(tiny):
    _, _, _, records = tiny
    rep = q1_attack_accuracy(records)
    for m in rep.labels:
        for a, v in rep.per_label[m]["per_attack"].items():
            rs = [r for r in records if r.model_id == m and r.attack_id == a]
            n_adv = 0
            n_clean = 0
            for r in rs:
                n_adv += int(np.argmax(r.adv_output)) == r.truth
                n_clean += int(np.argmax(r.clean_output)) == r.truth
            assert v["adversarial_accuracy"] == n_adv / len(rs)
            assert v["clean_accuracy"] == n_clean / len(rs)
            # consistency with the success flags
            assert v["adversarial_accuracy"] == pytest.approx(1 - np.mean([r.attack_success for r in rs]))
        accs = [v["adversarial_accuracy"] for v in rep.per_label[m]["per_attack"].values()]
        assert rep.per_label[m]["adv_avg"] == pytest.approx(np.mean(accs))
        assert rep.per_label[m]["adv_std"] == pytest.approx(np.std(accs))


def test_q1_failed_attacks_keep_clean_accuracy(tiny):
    _, _, _, records = tiny
    failed = [dataclasses.replace(r, adv_output=r.clean_output, adv_input=r.clean_input,
                                  attack_success=int(np.argmax(r.clean_output)) != r.truth)
              for r in records]
    rep = q1_attack_accuracy(failed)
    for m in rep.labels:
        assert rep.per_label[m]["adv_avg"] == rep.per_label[m]["clean_avg"]


def test_q1_empty():
    with pytest.raises(ValueError):
        q1_attack_accuracy([])


# -- q2 --------------------------------------------------------------------

def test_q2_paired_table_is_balanced(tiny):
    cfg, zoo, _, records = tiny
    t = q2_table(records, "paired", Rng(0))
    counts = np.bincount(t.targets)
    assert counts.tolist() == [len(zoo) * cfg.samples_per_attack] * 2
    # tag each adversarial output with its attack so the chosen rows can be traced back
    attacks = sorted({r.attack_id for r in records})
    tagged = [dataclasses.replace(r, adv_output=np.full(len(r.adv_output), 10.0 + attacks.index(r.attack_id)))
              for r in records]
    t = q2_table(tagged, "paired", Rng(0))
    adv_rows = t.features[t.targets == 1]
    models = sorted(m.model_id for m in zoo)
    for mi in range(len(models)):
        block = adv_rows[mi * cfg.samples_per_attack:(mi + 1) * cfg.samples_per_attack, 0]
        mix = np.bincount((block - 10).astype(int), minlength=len(attacks))
        assert mix.max() - mix.min() <= 1


def test_q2_natural_table_counts(tiny):
    cfg, zoo, _, records = tiny
    t = q2_table(records, "natural")
    n_pairs = len(zoo) * cfg.samples_per_attack
    assert np.bincount(t.targets).tolist() == [n_pairs, len(records)]


def test_q2_disjoint_sample_ids_and_support(tiny):
    cfg, _, _, records = tiny
    rep = q2_detect_adversarial(records, cfg.detector, Rng(1))
    assert not set(rep.details["train_sample_ids"]) & set(rep.details["test_sample_ids"])
    assert rep.details["rows"]["test"] == sum(v["support"] for v in rep.per_label.values())
    assert rep.baseline == 0.5
    assert rep.labels == ["clean", "adversarial"]


def test_q2_single_pattern_is_perfect(tiny):
    _, _, _, records = tiny
    C = len(records[0].clean_output)
    e0, e1 = np.eye(C)[0] * 0.9 + 0.1 / C, np.eye(C)[1] * 0.9 + 0.1 / C
    fake = [dataclasses.replace(r, clean_output=e0, adv_output=e1) for r in records]
    rep = q2_detect_adversarial(fake, DetectorSpec(ForestParams(tree_count=5)), Rng(0))
    assert rep.macro["precision"] == rep.macro["recall"] == rep.macro["f1"] == 1.0


def test_q2_needs_two_classes():
    with pytest.raises(ValueError):
        pipeline.detect("q2", pipeline._table([np.ones(3)] * 4, [0] * 4, [0, 1, 2, 3], ["clean", "adversarial"]),
                        DetectorSpec(), Rng(0))


# -- q3 / q4 ---------------------------------------------------------------

def test_q3_report_shape(tiny):
    cfg, zoo, _, records = tiny
    rep = q3_model_attribution(records, cfg.detector, Rng(2))
    assert rep.labels == sorted(m.model_id for m in zoo)
    assert rep.baseline == pytest.approx(1 / len(zoo))
    assert rep.details["rows"]["train"] + rep.details["rows"]["test"] == sum(r.attack_success for r in records)


def test_q3_identical_models_are_at_chance(tiny):
    _, _, _, records = tiny
    one = [r for r in records if r.model_id == "mlp-8"]
    twin = [dataclasses.replace(r, model_id="twin") for r in one]
    rep = q3_model_attribution(one + twin, DetectorSpec(ForestParams(tree_count=25)), Rng(0))
    assert abs(rep.macro["accuracy"] - 0.5) <= 0.1


def test_q3_single_model_is_an_error(tiny):
    _, _, _, records = tiny
    with pytest.raises(ValueError, match="single model"):
        q3_model_attribution([r for r in records if r.model_id == "mlp-8"], DetectorSpec(), Rng(0))


def test_q3_include_failed_uses_every_record(tiny):
    cfg, _, _, records = tiny
    spec = dataclasses.replace(cfg.detector, include_failed=True)
    rep = q3_model_attribution(records, spec, Rng(0))
    assert rep.details["rows"]["train"] + rep.details["rows"]["test"] == len(records)


def test_q4_no_signal_is_at_chance(tiny):
    _, _, _, records = tiny
    failed = [dataclasses.replace(r, adv_output=r.clean_output, attack_success=False) for r in records]
    spec = DetectorSpec(ForestParams(tree_count=25), include_failed=True)
    rep = q4_attack_attribution(failed, spec, Rng(0))
    assert rep.baseline == pytest.approx(1 / 6)
    assert rep.macro["accuracy"] <= 1 / 6 + 0.1


def test_q4_single_family_is_an_error(tiny):
    _, _, _, records = tiny
    with pytest.raises(ValueError, match="single attack family"):
        q4_attack_attribution([r for r in records if r.attack_id == "FGM"], DetectorSpec(), Rng(0))


def test_questions_reproducible(tiny):
    cfg, _, _, records = tiny
    for q in ("q2", "q3", "q4"):
        a = run_detector(q, records, cfg.detector, 7).to_json()
        assert a == run_detector(q, records, cfg.detector, 7).to_json()


def test_report_csv_rows(tiny):
    cfg, _, _, records = tiny
    rep = run_detector("q4", records, cfg.detector, 0)
    rows = rep.to_csv().splitlines()
    assert rows[0] == "question,label,metric,value"
    assert len(rows) == 1 + 4 * len(rep.labels) + len(rep.macro) + 1


def test_figure_rows(tiny):
    cfg, _, _, records = tiny
    q1 = json.loads(q1_attack_accuracy(records).to_json())
    rows = pipeline.figure_rows(q1)
    assert len(rows) == len(q1["labels"]) * len(cfg.attacks) * 2
    q2 = json.loads(run_detector("q2", records, cfg.detector, 0).to_json())
    rows = pipeline.figure_rows(q2)
    assert len(rows) == 2 * 3 and all(r[3] == 0.5 for r in rows)


# -- config ----------------------------------------------------------------

def test_config_round_trip():
    cfg = tiny_config()
    again = CampaignConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_default_config_attacks():
    cfg = CampaignConfig()
    assert cfg.attacks == tuple(default_configs())
    assert cfg.samples_per_attack == 100
    assert cfg.detector.test_fraction == 0.3


@pytest.mark.parametrize("doc, where", [
    ({"dataset": {"dimenson": 3}}, "dataset.dimenson"),
    ({"attacks": [{"family": "FGSM", "epsilom": 0.1}]}, "attacks[0].epsilom"),
    ({"extra": {}}, "extra"),
    ({"detector": {"trees": 3}}, "detector.trees"),
    ({"attacks": [{"family": "FGSM", "epsilon": -1}]}, "attacks[0]"),
    ({"run": {"samples_per_attack": 0}}, "run.samples_per_attack"),
])
def test_config_errors_name_the_field(doc, where):
    with pytest.raises(ConfigError, match=__import__("re").escape(where)):
        CampaignConfig.from_dict(doc)


def test_config_json_error_has_line():
    with pytest.raises(ConfigError, match="line 2"):
        CampaignConfig.from_json('{\n  "dataset": {,}\n}')


def test_attack_override_from_config():
    cfg = CampaignConfig.from_dict({"attacks": [{"family": "L2PGD", "epsilon": 1.5}, {"family": "FGSM"}]})
    assert cfg.attacks[0] == AttackConfig.default("L2PGD", epsilon=1.5)
    assert cfg.attacks[1] == AttackConfig.default("FGSM")
