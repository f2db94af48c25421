"""Train one relation-scoring model on synthetic videos and compare rankings.

The same trained network is evaluated twice: once ranking triplets by
``s_sub * s_obj * s_rel`` alone (p0 forced to 1, the baseline ranking) and once
with the learned relation score p0 multiplied in.

    python3 demos/01_quickstart.py
"""

import time

from rsnet.dsgg import DSGGModel
from rsnet.metrics import EvalConfig, evaluate, format_table
from rsnet.network import ModelConfig
from rsnet.scenegraph import GeneratorConfig, generate_dataset
from rsnet.training import TrainConfig, train

gen = GeneratorConfig()
train_set = generate_dataset(gen, 40, master_seed=1, prefix="train")
test_set = generate_dataset(gen, 10, master_seed=2, prefix="test")
vocab = train_set[0].vocab
print(f"{len(train_set)} train / {len(test_set)} test videos, {gen.n_frames} frames each")
print(f"{vocab.num_classes} object classes, {vocab.num_predicates} predicates")

# a smaller network than the default keeps this to seconds
model = DSGGModel(gen.feature_dim, gen.union_dim, vocab, ModelConfig(d_model=64, temporal_blocks=2),
                  "+rsnet+fusion", seed=0)
t0 = time.perf_counter()
result = train(train_set, model, TrainConfig(epochs=5, variant="+rsnet+fusion", seed=0))
print(f"trained in {time.perf_counter() - t0:.0f}s")
for epoch, loss in enumerate(result.epoch_losses, 1):
    print(f"  epoch {epoch}: mean loss {loss:8.3f}")

cfg = EvalConfig()
with_p0 = evaluate(test_set, model, cfg)
without_p0 = evaluate(test_set, model, cfg, p0_override=1.0, variant="p0 = 1")
print()
print(format_table([without_p0, with_p0]))
