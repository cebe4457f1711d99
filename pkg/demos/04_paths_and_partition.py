"""Irreducible paths, their cell labels, and an exhaustive partition audit.

A path x_0..x_n is irreducible when no split point separates the sites before
it from the sites after it. Every irreducible path gets exactly one cell label;
chains of coincidences are found by a deterministic procedure.
"""

import numpy as np

from avgreen import Path, partition_audit, partition_label
from avgreen.paths import cell_count, procedure_pairs

p = Path(np.array([0, 1, 0, 2, 1, 2])[:, None])
cell = partition_label(p)
print(f"path {p.sites[:, 0].tolist()} -> cell {cell}")
print(f"  procedure pairs {procedure_pairs(p, cell.i, cell.j).pairs}")

print("\ncells per length:", {n: cell_count(n) for n in range(3, 9)})

for n in (3, 4, 5):
    rep = partition_audit(n, 3, 2)
    c = rep.empirical_constants
    print(f"n={n}: {'passed' if rep.passed else 'FAILED'}, {c['cells']} cells, "
          f"{c['occupied_cells']} occupied, {rep.wall_time:.1f}s")
