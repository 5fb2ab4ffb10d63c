"""What a random forest can tell from output vectors alone.

Reuses the scaled-down campaign from ``02_zoo_and_campaign.py`` and asks the
three detection questions:

* q2: was this output produced by an attacked input?
* q3: which model in the zoo produced it?
* q4: which attack family produced it?

Each answer is a held-out macro score against the chance baseline. Splits are
by sample id, so no test sample was seen by the forest in any form.
"""

from advforensics import pipeline
from advforensics.forest import ForestParams, fit_forest, latency_probe
from advforensics.numcore import Rng
from advforensics.pipeline import CampaignConfig, DatasetSpec, DetectorSpec, ZooSpec

cfg = CampaignConfig(
    dataset=DatasetSpec(dimension=16, class_count=4, train_size=300, test_size=100),
    zoo=ZooSpec(architectures=((16,), (32,), (16, 16)), epochs=30),
    detector=DetectorSpec(ForestParams(tree_count=50)),
    samples_per_attack=30,
    seed=7,
)
rng = Rng(cfg.seed)
train_data, test_data = pipeline.generate_dataset(cfg.dataset, rng.child(pipeline.STAGE_DATASET))
zoo = pipeline.build_zoo(cfg, train_data, rng.child(pipeline.STAGE_ZOO))
records = pipeline.run_campaign(cfg, zoo, test_data, rng.child(pipeline.STAGE_CAMPAIGN))

for q in ("q2", "q3", "q4"):
    rep = pipeline.run_detector(q, records, cfg.detector, cfg.seed)
    print(f"\n{q}: macro precision {rep.macro['precision']:.3f}, macro F1 {rep.macro['f1']:.3f}, "
          f"chance {rep.baseline:.3f} ({rep.details['rows']['test']} held-out rows)")
    for label, v in rep.per_label.items():
        print(f"    {label:12s} precision {v['precision']:.2f}  recall {v['recall']:.2f}  n={v['support']}")

table = pipeline.q2_table(records, "paired", Rng(0))
forest = fit_forest(table.features, table.targets, cfg.detector.forest, Rng(1), class_count=2)
print(f"\nsingle-output detection latency: {latency_probe(forest, table.features, 2000) * 1e3:.3f} ms")
