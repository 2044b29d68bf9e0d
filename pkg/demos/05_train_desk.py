"""A short desk-scale training run against the mlp baseline.

Generates a small dataset (N=8), trains the full model and the mlp variant
for a few epochs, and prints validation curves next to the
random-deployment matched-beam baseline.
"""

import torch

from swanisac.config import RunConfig
from swanisac.data import generate_dataset
from swanisac.train import build_model, random_deployment_baseline, train

torch.set_num_threads(1)
cfg = RunConfig().replace(geometry={"N": 8}, data={"num_samples": 120}, train={"epochs": 5})
ds = generate_dataset(cfg)
tr, va, _ = ds.splits()
print(f"dataset: {len(ds)} samples, split {ds.split_sizes}")

for variant in ("full", "mlp"):
    c = cfg.replace(model={"variant": variant})
    res = train(build_model(c), tr, va, c)
    print(f"\n{variant}: best epoch {res.best_epoch}")
    print(" epoch  train_loss  val_rate  depMSE    CRLB_mean")
    for r in res.history:
        print(f" {r.epoch:>5}  {r.train_loss:10.4f}  {r.rate:8.4f}  {r.dep_mse:.5f}  {r.crlb_mean:.3e}")

base = random_deployment_baseline(va, cfg, seed=0).mean().item()
print(f"\nrandom deployment + matched beams: {base:.4f} bits/s/Hz")
