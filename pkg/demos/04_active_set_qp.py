"""
The per-step QP, solved exactly
===============================

Two rows (soft CLF with slack delta, hard CBF) in z = (u, delta).  The
active-set solver enumerates subsets of rows and keeps the one that passes
primal and dual checks; a dense grid is the independent check.
"""

import numpy as np

from arcbf.certificates import lie_derivatives, scalar_cbf, scalar_clf
from arcbf.dynamics import scalar_system
from arcbf.qp import QpWeights, assemble_ar_qp, brute_force_qp, kkt_residuals, solve_active_set
from arcbf.resilience import phi, psi_cbf, psi_clf, RegularizerSchedule

model, V, h = scalar_system(), scalar_clf(1.0), scalar_cbf(1.0)
x = np.array([0.5])
lv = lie_derivatives(V.gradient, V.value, model, x)
lh = lie_derivatives(h.gradient, h.value, model, x)
ph = phi(RegularizerSchedule(1.0), 0.0)

qp = assemble_ar_qp(lv, lh, psi_clf(lv.lg, 0.0, ph), psi_cbf(lh.lg, 0.0, ph), V, h, QpWeights(sigma=5.0), x)
print("A =\n", qp.A)
print("b =", qp.b)

sol = solve_active_set(qp)
print(f"u* = {sol.u[0]:.10f}  (-55/42 = {-55 / 42:.10f})")
print(f"delta* = {sol.delta:.10f}  (55/210 = {55 / 210:.10f})")
print("active rows:", sol.active_set)
print("KKT residuals:", {k: f"{v:.1e}" for k, v in kkt_residuals(qp, sol).items()})

grid = brute_force_qp(qp, 3.0, 1201)
print(f"grid optimum {grid.objective:.6f} vs exact {sol.objective:.6f}")
