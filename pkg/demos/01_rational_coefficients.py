"""Rational approximations of x^phi on [lb, 1].

The fractional part of the smoothness enters every scheme through a rational
approximation of a power function.  Three coefficient methods are available;
this script compares their sup-norm errors and shows the partial-fraction
form that the sparse constructions consume.
"""
import numpy as np

from fracmatern.rational import eval_partial_fractions, eval_rational, rational_approx, sup_error

phi, lb = 0.3, 1e-3

print(f"sup |x^{phi} - R(x)| on [{lb}, 1]")
print(f"{'m':>3} {'chebfun':>12} {'chebfunLB':>12} {'brasil':>12}")
for m in range(1, 6):
    errs = [sup_error(rational_approx(phi, m, method=meth, lb=lb)) for meth in ("chebfun", "chebfunLB", "brasil")]
    print(f"{m:>3} " + " ".join(f"{e:12.3e}" for e in errs))

# chebfun works on [0, 1] and pays for it near lb; the BRASIL iteration
# equioscillates and is the best of the three on the interval itself.

ra = rational_approx(phi, 3, method="brasil", lb=lb)
print("\npartial fractions in t = 1/x:  R = k + sum r_i / (t - p_i)")
print(f"  k = {ra.k:.6g}")
for r, p in zip(ra.residues, ra.poles):
    print(f"  r = {r:.6g}   p = {p:.6g}")

x = np.geomspace(lb, 1, 64)
gap = np.max(np.abs(eval_rational(ra, x) - eval_partial_fractions(ra, x)))
print(f"max |ratio form - partial fractions| on 64 points: {gap:.1e}")
