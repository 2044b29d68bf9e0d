"""Segmented waveguide geometry and the communication rate it supports.

Walks through projecting a raw deployment onto the feasible set, picking a
transmit/receive partition, building near-field channels and scoring
matched beams.
"""

import torch

from swanisac.geometry import GeometryConfig, antenna_masks, enumerate_partitions, is_feasible, \
    project_deployment
from swanisac.physics import ChannelConfig, PowerConfig, matched_beams, near_field_channel, \
    power_used, sum_rate

geo = GeometryConfig(N=8)
raw = torch.tensor([3.0, 3.01, -2.0, 70.0, 20.0, 20.0, 33.0, 49.99], dtype=torch.float64)
y = project_deployment(raw, geo)
print("raw deployment      ", raw.tolist())
print("projected deployment", [round(v, 4) for v in y.tolist()])
print("feasible:", bool(is_feasible(y, geo)), "| projecting again changes nothing:",
      torch.equal(project_deployment(y, geo), y))

parts = enumerate_partitions(K_c=2, K_s=1, M=geo.M)
print(f"\n{len(parts)} valid partitions for K_c=2, K_s=1, M=4:")
for chi in parts:
    print("  ", chi.int().tolist())

users = torch.tensor([[6.0, 12.0, 0.0], [15.0, 40.0, 0.0]], dtype=torch.float64)
h = near_field_channel(users, y, ChannelConfig(), geo)
pw = PowerConfig()
print("\nchannel magnitudes |h| (users x antennas):")
print(h.abs().numpy().round(4))
for chi in parts:
    masks = antenna_masks(y, chi, geo)
    beams = matched_beams(h, 2, masks, pw)
    print(f"partition {chi.int().tolist()}: sum rate {sum_rate(h, beams, masks, pw, ChannelConfig()).item():.4f} "
          f"bits/s/Hz, power used {power_used(beams, pw).item():.2f} of {pw.P_max}")
