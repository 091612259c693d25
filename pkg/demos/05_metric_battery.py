"""The seven counting metrics on hand-picked count sequences.

Run: python demos/05_metric_battery.py
"""

import numpy as np

from podcount import metrics

print("== perfect prediction ==")
g = [120, 250, 80, 400]
print(metrics(g, g).to_json())

print("\n== constant relative overcount (+10%) ==")
p = [int(round(x * 1.1)) for x in g]
rep = metrics(p, g)
print(rep.to_json())
print(f"acc = 1 - rmae: {rep.acc:.4f} = 1 - {rep.rmae:.4f}")

print("\n== the worked two-image example ==")
rep = metrics([10, 20], [10, 25])
print(rep.to_json())

print("\n== noisy but correlated counts ==")
rng = np.random.default_rng(0)
g = rng.integers(50, 500, size=20)
p = np.maximum(0, g + rng.normal(0, 40, size=20)).round()
rep = metrics(p, g)
print(rep.to_json())
print(f"pearson r {rep.pearson_r:.3f}, r2 {rep.r2:.3f}")

print("\n== degenerate cases ==")
print("single sample (correlation undefined):", metrics([5], [7]).to_json())
