"""Combinatorial parameter counts next to the numerical Jacobian rank for the builtin truths."""
from latentscore import dof_hierarchical, dof_numeric, dof_one_factor, satisfies_one_factor
from latentscore.evaluation import GROUND_TRUTHS, ground_truth

print(f"{'truth':<16}{'m':>4}{'n':>4}{'|G|':>5}{'count':>7}{'rank':>6}")
for name in (k for table in GROUND_TRUTHS.values() for k in table):
    g = ground_truth(name)[1]
    count = dof_one_factor(g) if satisfies_one_factor(g) else dof_hierarchical(g).combinatorial
    print(f"{name:<16}{g.m:>4}{g.n:>4}{g.n_edges:>5}{count:>7}{dof_numeric(g):>6}")
