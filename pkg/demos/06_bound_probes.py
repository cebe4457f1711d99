"""Empirical constants in deterministic bounds on kernel compositions.

For T^n = K^1 b_1 ... K^n b_n with |b_j| <= 1 the smallest C with
|T^n(x, 0)| <= eps (C/eps)^n <x>^{-d+eps} is computed at each offset. If C
does not grow across the radius window, the bound holds with a finite constant.
"""

from avgreen import TorusGrid, bound_probe_sweep

for p in bound_probe_sweep(TorusGrid(2, 256), (1, 2, 3, 4), (0.25, 0.5, 1.0), seed=0):
    print(f"n={p.n} eps={p.eps:<4} constant {p.constant:.3f}  inner {p.inner:.3f}  outer {p.outer:.3f}  "
          f"growth {p.growth:.3f}  {'stable' if p.stable() else 'GROWS'}")
