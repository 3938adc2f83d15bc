"""The analytic five-node star: why feature-only effect models fail.

A hub with feature 10 sits between four periphery nodes with features
1, 1, 1, 2.  Each node's structural embedding is its neighborhood's mean
feature, and the true effect is the sine of that embedding, so the effect
is determined by structural role, not by the node's own feature.
"""

from netcate import star_example

star = star_example()

print(f"{'node':>4} {'feature':>8} {'embedding':>10} {'effect':>10}")
for label, x, h, tau in zip(star.labels, star.x, star.h, star.tau):
    print(f"{label:>4} {x:>8.2f} {h:>10.4f} {tau:>10.4f}")

print()
print("constraints a feature-only predictor f must satisfy:")
for xv, tv in sorted(star.constraint_table.items()):
    print(f"  f({xv:g}) = {tv:+.6f}")

print()
print(f"embedding-keyed table MSE:         {star.aware_mse:.12f}")
print(f"per-feature-value lookup MSE:      {star.blind_lookup_mse:.12f}")
print(f"best affine feature-only fit MSE:  {star.blind_linear_mse:.12f}")
print()
print("On this instance every feature value happens to map to a single")
print("effect value, so an unrestricted lookup gets lucky and is exact;")
print("the affine class (the benchmark's graph-blind final stage) cannot")
print("satisfy the three constraints and keeps a positive floor.  The")
print("deeper point is that the feature is simply the wrong input: the")
print("effect is a function of structural role, which only a graph-aware")
print("model can compute.")
