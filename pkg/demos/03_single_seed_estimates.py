"""Run all five estimators on one seed and inspect the error anatomy.

The two pipelines with a graph-blind final stage cannot represent a
network-driven effect no matter how good their nuisance models are; the
graph-aware final stages can.  The per-group decomposition shows where on
the graph each pipeline earns its error.
"""

import time

import numpy as np

from netcate import (ALL_KINDS, DgpConfig, GraphSpec, TrainConfig, cate_mse,
                     estimate, generate_dataset, hub_periphery_errors)

spec = GraphSpec(kind="ba", n=1000)
cfg = DgpConfig(d=10, cate_kind="simple_h", noise_level=0.5)
g, ds = generate_dataset(spec, cfg, seed=0)
train_cfg = TrainConfig()

print(f"{'estimator':<16} {'mse':>8} {'hub mse':>9} {'peri mse':>9} {'seconds':>8}")
for kind in ALL_KINDS:
    start = time.perf_counter()
    est = estimate(kind, ds, g, train_cfg, seed=0)
    elapsed = time.perf_counter() - start
    mse = cate_mse(est.tau_hat, ds.tau)
    hub_mse, peri_mse = hub_periphery_errors(est.tau_hat, ds.tau, g)
    print(f"{kind.value:<16} {mse:>8.3f} {hub_mse:>9.3f} {peri_mse:>9.3f} "
          f"{elapsed:>8.2f}")

print()
print("Both graph-blind final stages sit near the variance of the effect")
print("itself: they are fitting the wrong function class.  The residuals")
print("of the graph-aware learner also expose its internal representation:")
est = estimate(ALL_KINDS[3], ds, g, train_cfg, seed=0)
print(f"final-layer embeddings: {est.embeddings.shape[0]} nodes x "
      f"{est.embeddings.shape[1]} dims, per-dim std in "
      f"[{est.embeddings.std(axis=0).min():.3f}, {est.embeddings.std(axis=0).max():.3f}]")
