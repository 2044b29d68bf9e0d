"""Beam-head-only transfer when the number of users changes.

Trains on K_c=2 users, then adapts only a fresh beam head to K_c=3 users.
The deployment path is frozen, so deployments do not move at all.
"""

import torch

from swanisac.config import RunConfig
from swanisac.data import generate_dataset
from swanisac.train import build_model, train, transfer_beam_head

torch.set_num_threads(1)
cfg = RunConfig().replace(geometry={"N": 8}, data={"num_samples": 120}, train={"epochs": 4})
cfg3 = cfg.replace(data={"K_c": 3})
tr, va, _ = generate_dataset(cfg).splits()
tr3, va3, _ = generate_dataset(cfg3).splits()

src = train(build_model(cfg), tr, va, cfg)
src.model.load_state_dict(src.best_state)
adapted, rep = transfer_beam_head(src.model, tr3, va3, cfg3)

print(f"deployment drift           : {rep.drift}")
print(f"frozen parameters unchanged: {rep.frozen_bytes_equal}")
print(f"trainable parameters       : {rep.beam_head_params} of {rep.full_model_trainable} "
      f"({rep.beam_head_params / rep.full_model_trainable:.1%})")
print(f"rate before / after        : {rep.unadapted_rate:.4f} / {rep.rate:.4f} bits/s/Hz")
print(f"best epoch                 : {rep.best_epoch}")
print("adapted beam shapes        :", tuple(adapted.beam_head.out.weight.shape))
