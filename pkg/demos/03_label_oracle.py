"""Reference deployment labels.

Samples one scenario, runs the label oracle (best of random candidates, then
coordinate descent) and compares the label with the uniform grid.
"""

from swanisac.config import RunConfig
from swanisac.data import label_oracle, sample_scenario

cfg = RunConfig().replace(geometry={"N": 8})
sc = sample_scenario(cfg.data.region, K_c=2, K_s=1, seed=42)
print("users  :", sc.user_positions.round(2).tolist())
print("target :", sc.target_positions.round(2).tolist())

res = label_oracle(sc, cfg)
print("\nuniform-grid score:", round(res.baseline_score, 4))
print("oracle score      :", round(res.score, 4))
print("accepted improvements during coordinate descent:",
      [round(t, 4) for t in res.trace])
print("label deployment  :", [round(v, 3) for v in res.y_star.tolist()])
print("label partition   :", res.chi_star.int().tolist())
print("uniform grid      :", [round(v, 3) for v in cfg.geometry.reference_grid().tolist()])
