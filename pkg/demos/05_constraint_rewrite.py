"""Rewriting disjointness constraints from quadratic to n log n size.

A chain j_0 < j_1 < ... defines constraints "sites in (j_{l-2}, j_{l-1}) avoid
sites in (j_l, n)". Written out, the total size grows like n^2; the recursive
rewrite defines the same path set with size of order n log n.
"""


from avgreen import ConstraintSystem, constraint_rewrite, worst_case_sequence
from avgreen.constraints import size_bound

print(f"{'n':>6} {'input':>9} {'rewritten':>10} {'bound':>9} {'same set':>9}")
for n in (16, 64, 256, 1024, 4096):
    js = worst_case_sequence(n)
    a = ConstraintSystem.from_j_sequence(js, n)
    b = constraint_rewrite(js, n)
    print(f"{n:>6} {a.size:>9} {b.size:>10} {size_bound(n):>9.0f} {str(a.equivalent(b)):>9}")

js = worst_case_sequence(12)
print("\nrewritten system for n=12:")
for E, F in constraint_rewrite(js, 12).pairs:
    print(f"  {list(E)} avoids {list(F)}")
