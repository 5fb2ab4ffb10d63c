"""Train a small zoo, attack it, and look at what the attacks did.

This is a scaled-down version of ``advforensics run``: a 4-class dataset,
three MLPs and all six attack families on 30 test samples per attack. It
prints clean vs attacked accuracy per model and attack (the data behind the
accuracy figure) and one record as it is stored in ``records.jsonl``.
"""

from advforensics import pipeline
from advforensics.forest import ForestParams
from advforensics.numcore import Rng
from advforensics.pipeline import CampaignConfig, DatasetSpec, DetectorSpec, ZooSpec

cfg = CampaignConfig(
    dataset=DatasetSpec(dimension=16, class_count=4, train_size=300, test_size=100),
    zoo=ZooSpec(architectures=((16,), (32,), (16, 16)), epochs=30),
    detector=DetectorSpec(ForestParams(tree_count=20)),
    samples_per_attack=30,
    seed=7,
)
rng = Rng(cfg.seed)
train_data, test_data = pipeline.generate_dataset(cfg.dataset, rng.child(pipeline.STAGE_DATASET))
zoo = pipeline.build_zoo(cfg, train_data, rng.child(pipeline.STAGE_ZOO))
for model_id, acc in pipeline.evaluate_zoo(zoo, test_data).items():
    print(f"{model_id:10s} clean test accuracy {acc:.3f}")

records = pipeline.run_campaign(cfg, zoo, test_data, rng.child(pipeline.STAGE_CAMPAIGN))
print(f"\n{len(records)} records = {len(zoo)} models x {len(cfg.attacks)} attacks x {cfg.samples_per_attack} samples")

q1 = pipeline.q1_attack_accuracy(records)
print("\nadversarial accuracy (clean accuracy on the same samples in brackets)")
print("model      " + " ".join(f"{a.family:>10s}" for a in cfg.attacks))
for m in q1.labels:
    per = q1.per_label[m]["per_attack"]
    cells = [f"{per[a.family]['adversarial_accuracy']:.2f}({per[a.family]['clean_accuracy']:.2f})"
             for a in cfg.attacks]
    print(f"{m:10s} " + " ".join(f"{c:>10s}" for c in cells))

r = records[0]
print("\nfirst record:", r.model_id, r.attack_id, "sample", r.sample_id, "truth", r.truth,
      "success", r.attack_success)
print("  clean output", r.clean_output.round(3))
print("  adv output  ", r.adv_output.round(3))
