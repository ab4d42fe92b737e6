# Lattices, contiguity weights and blocked cross-validation folds.
#
# Builds the 24x24 grid used throughout the experiments, inspects rook and
# queen neighborhoods, row-standardizes the weights, and renders one fold of
# a blocked design: an s x s test block (T) wrapped in a contiguity halo (B)
# that is withheld from training.

import numpy as np

from spatialcv import build_grid, contiguity, row_standardize, distances
from spatialcv.cvdesign import ascii_fold_map, blocked_folds, clustered_folds

lat = build_grid(24, 24)
print(f"lattice: {lat.rows}x{lat.cols}, n = {lat.n}")

rook = contiguity(lat, "rook", 1)
queen = contiguity(lat, "queen", 1)
interior = lat.index_at(10, 10)
print(f"interior neighbors: rook {rook.neighbor_counts()[interior]}, "
      f"queen {queen.neighbor_counts()[interior]}, corner rook {rook.neighbor_counts()[0]}")

w = row_standardize(rook)
print(f"row-standardized: rows sum to {w.row_sums().min():.0f}..{w.row_sums().max():.0f}, "
      f"spectrum in [{w.eigenvalues().min():.3f}, {w.eigenvalues().max():.3f}]")

d = distances(lat)
print(f"centroid distances: neighbors {d[interior, interior + 1]:.0f}, "
      f"diagonal {d[interior, interior + lat.cols + 1]:.4f}")

print("\nblocked fold plans (test sets tile the lattice):")
for s in (1, 2, 3, 4, 6, 8):
    plan = blocked_folds(lat, s, halo_order=1, scheme="rook")
    f0 = plan.folds[plan.k // 2]  # an interior fold
    print(f"  s={s}: K={plan.k:4d} folds, fold sizes "
          f"test={f0.test.size:3d} buffer={f0.buffer.size:3d} train={f0.train.size:3d}")

small = build_grid(8, 8)
plan = blocked_folds(small, 2, halo_order=1, scheme="queen")
print(f"\none fold of an 8x8 / s=2 / queen-halo design "
      f"(fold 9 of {plan.k}; T test, B buffer, . train):")
print(ascii_fold_map(plan, 9))

rng = np.random.default_rng(7)
clustered = clustered_folds(build_grid(12, 12), 12, buffer_order=1, scheme="queen", rng=rng)
sizes = sorted(f.test.size for f in clustered.folds)
print(f"\nclustered design: k={clustered.k} spatial clusters, test sizes {sizes}")
