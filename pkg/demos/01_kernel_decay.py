"""Decay of singular integral kernels and of the third-order series term.

A single kernel ∇(-Δ)^{-1}∇* decays like |x|^{-d}. The third-order
term of the averaged-operator series behaves like a product of three
such kernels that cannot be resolved by convolution, and decays like |x|^{-3d}.
The first- and second-order terms vanish off the diagonal.
"""

import numpy as np

from avgreen import TorusGrid, fit_decay_exponent, n3_offdiagonal_field, rademacher, sio_kernel
from avgreen.environment import moments
from avgreen.kernels import ConvolutionKernel
from avgreen.series import series_term_torus

grid = TorusGrid(2, 512)
K = sio_kernel(grid, 0, 0)
fit = fit_decay_exponent(K)
print(f"single kernel K_00 on a {grid.N}^{grid.d} torus: slope {fit.slope:.3f} (expected -{grid.d})")

law = rademacher()
F = n3_offdiagonal_field([K, K, K], law)
F[0, 0] = 0.0
fit3 = fit_decay_exponent(ConvolutionKernel(grid, F, {}), (2.0, 32.0))
print(f"third-order term, off the diagonal: slope {fit3.slope:.3f} (expected -{3 * grid.d})")

mom = moments(law, 3)
off = grid.radius() > 0
for n in (1, 2):
    T = series_term_torus([K] * n, mom)
    print(f"order {n} term, largest off-diagonal entry: {np.max(np.abs(T[off])):.1e}")

print("\nradial profile of the third-order term (max |value| per log bin):")
for r, m in zip(fit3.radii, fit3.maxima):
    print(f"  r ~ {r:6.2f}   {m:.3e}")
