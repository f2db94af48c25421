"""How well does p0 separate meaningful pairs from the rest?

Trains a +rsnet model, scores every candidate subject-object pair of the test
videos and prints a text histogram of p0 for positive and negative pairs.
Excluded negatives (boxes overlapping a positive pair) are left out, as in
training.

    python3 demos/02_relation_scores.py
"""

import numpy as np

from rsnet.benchmark import p0_separation, relation_score_records
from rsnet.dsgg import DSGGModel
from rsnet.network import ModelConfig
from rsnet.scenegraph import GeneratorConfig, generate_dataset
from rsnet.training import TrainConfig, train

gen = GeneratorConfig()
train_set = generate_dataset(gen, 40, master_seed=3, prefix="train")
test_set = generate_dataset(gen, 10, master_seed=4, prefix="test")
model = DSGGModel(gen.feature_dim, gen.union_dim, train_set[0].vocab, ModelConfig(d_model=64, temporal_blocks=2),
                  "+rsnet", seed=0)


def report(title):
    rows = relation_score_records(test_set, model)
    pos, neg = p0_separation(rows)
    print(f"{title}: mean p0 positive {pos:.3f}, negative {neg:.3f}, gap {pos - neg:+.3f}")
    bins = np.linspace(0, 1, 11)
    for label in ("positive", "negative"):
        vals = np.array([r["p0"] for r in rows if r["label"] == label])
        counts, _ = np.histogram(vals, bins)
        print(f"  {label} ({len(vals)} pairs)")
        for lo, c in zip(bins[:-1], counts):
            bar = "#" * int(round(50 * c / max(len(vals), 1)))
            print(f"    {lo:.1f}-{lo + 0.1:.1f} {bar}")


report("untrained")
train(train_set, model, TrainConfig(epochs=5, variant="+rsnet", seed=0))
print()
report("after 5 epochs")
