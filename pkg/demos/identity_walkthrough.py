"""Walkthrough: the identity transport problem end to end.

Uniform source and target on the same square with the bilinear cost
c(x, y) = -x.y. The optimal map is the identity, so the potential is
|x|^2/2 up to a constant and every quantity below has a closed form to
compare against.

Run with ``python demos/identity_walkthrough.py``.
"""

import numpy as np

from otlab.cost import CostModel
from otlab.geometry import john_normalize
from otlab.grid import Grid
from otlab.regularity.engulfing import engulfing_estimate
from otlab.regularity.hessian import hessian_field
from otlab.regularity.sections import SectionMaker
from otlab.regularity.w2p import w2p_norm
from otlab.transport import reconstruct_potential, sample_density, solve_discrete

box = [[-1.25, -1.25], [1.25, 1.25]]
cost = CostModel("quadratic-bilinear", box, box)

# %% 32 x 32 lattice of atoms on each side; the network simplex finds the identity
atoms = sample_density({"kind": "uniform-box", "box": box}, 1024)
plan = solve_discrete(cost, atoms, atoms)
print(f"objective {plan.objective:.6f}  duality gap {plan.gap:.1e}")
print("every atom maps to itself:", bool(np.all(plan.assigned_target() == np.arange(len(atoms)))))

# %% potential on a 128^2 grid, four cells per atom
grid = Grid.from_box(box, 128)
u = reconstruct_potential(plan, cost, atoms, grid)
dev = u.values - 0.5 * (grid.centers ** 2).sum(-1)
print(f"u - |x|^2/2 varies by {np.ptp(dev):.2e} (2 dx^2 = {2 * grid.spacing ** 2:.2e})")

# %% sections are discs of radius sqrt(2h)
maker = SectionMaker(u, cost, multiplier=4)  # Hessian step = atom spacing
center = grid.index_of(np.array([0.1, -0.2]))
for h in (0.01, 0.05, 0.1):
    s = maker.section(center, h)
    _, rep = john_normalize(s, h)
    print(f"h={h:<5} cells={s.count:5d}  r_out={rep.r_out:.3f}  r_in={rep.r_in:.3f}  "
          f"sqrt(2h)={np.sqrt(2 * h):.3f}")

# %% engulfing: for discs the worst pair gives C = 4
tab = engulfing_estimate(u, cost, 50, [0.01, 0.05], seed=0, multiplier=4)
print("engulfing max C per height:", [round(r["max"], 3) for r in tab.rows])

# %% D^2u = I, so the W^{2,p} integral over B_1 is pi for every p
H = hessian_field(u, 4)
X = grid.ball_mask([0.0, 0.0], 1.0)
for p in (1, 2, 4):
    r = w2p_norm(H, X, p)
    print(f"p={p}  integral={r.direct:.4f}  (pi={np.pi:.4f})  layer-cake bound={r.bound:.2f}")
