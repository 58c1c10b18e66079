"""Tour of the spline building blocks.

Shows how knots follow the data, what the centred basis looks like, and how
the difference penalty prices curvature.  Run from the repository root:

    python3 demos/01_basis_and_penalty.py
"""

import numpy as np

from gplsiam.basis import eval_basis, eval_deriv_basis, make_knots
from gplsiam.penalty import difference_penalty

rng = np.random.default_rng(0)
u = rng.uniform(-1.0, 2.0, size=500)

q, d = 8, 4
kv = make_knots(u, q, d)
print(f"{kv.knots.size} knots for q={q}, d={d}; inner span "
      f"[{kv.knots[d - 1]:.4f}, {kv.knots[q + 1]:.4f}] "
      f"around data range [{u.min():.4f}, {u.max():.4f}]")
print("knot spacing:", np.round(np.diff(kv.knots), 6)[0])

raw = eval_basis(kv, u)
print(f"\nraw basis: {raw.shape[1]} columns, row sums all "
      f"{raw.sum(axis=1).min():.12f}..{raw.sum(axis=1).max():.12f}")

# identifiability: column-centre against the sample, drop the last column
ntil = (raw - raw.mean(axis=0))[:, :-1]
print(f"centred basis: {ntil.shape[1]} columns, max |column sum| = "
      f"{np.abs(ntil.sum(axis=0)).max():.2e}")

deriv = eval_deriv_basis(kv, u)
step = 1e-6
fd = (eval_basis(kv, u + step) - eval_basis(kv, u - step)) / (2 * step)
print(f"derivative vs finite differences: max gap {np.abs(deriv - fd).max():.2e}")

# the penalty prices squared second differences of the coefficient vector
# extended by the fixed trailing zero, so even a flat vector pays a small
# boundary charge while a wiggly one pays much more
tp = difference_penalty(q, 2)
flat = np.ones(q)
wiggly = np.cos(np.arange(q) * 2.3)
print(f"\npenalty quad form: flat coefficients {flat @ tp.pmat @ flat:.2f} "
      f"(one boundary row against the implicit zero), "
      f"wiggly coefficients {wiggly @ tp.pmat @ wiggly:.2f}")
