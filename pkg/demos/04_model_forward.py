"""One forward pass of the joint deployment and beamforming model.

Shows the self-graph, the per-antenna tokens, and the structural
guarantees of the outputs: feasible deployments, a valid partition and
beams within the power budget.
"""

import numpy as np
import torch

from swanisac.config import RunConfig
from swanisac.geometry import is_feasible
from swanisac.model import SwanModel, adjacency, node_features, tokenize
from swanisac.physics import complex_to_csi, power_used

cfg = RunConfig().replace(geometry={"N": 8})
rng = np.random.default_rng(0)
h = rng.standard_normal((4, 3, 8)) + 1j * rng.standard_normal((4, 3, 8))
H = complex_to_csi(torch.from_numpy(h)).float()

print("node features of sample 0 [norm, phase, role]:\n", node_features(H[0], 2).numpy().round(3))
print("adjacency of sample 0 (rows sum to 1):\n", adjacency(H[0], 1e-8).numpy().round(3))
print("token tensor shape:", tuple(tokenize(H, 2).shape))

torch.manual_seed(0)
model = SwanModel(cfg.model, cfg.geometry, cfg.power, K_c=2, K_s=1).eval()
with torch.no_grad():
    pred = model(H)
print("\ndeployments:\n", pred.y.numpy().round(2))
print("feasible:", is_feasible(pred.y, cfg.geometry).tolist())
print("partitions:", pred.chi.int().tolist())
print("W shape", tuple(pred.beams.W.shape), "F shape", tuple(pred.beams.F.shape))
print("power used:", power_used(pred.beams, cfg.power).numpy().round(3).tolist(),
      "budget", cfg.power.P_max)
for g, ps in model.blocks().items():
    print(f"  {g:<14} {sum(p.numel() for _, p in ps):>8} parameters")
