"""Reference numbers for the flooding acceptance gate, computed at 60
decimal digits so the gate's assertions rest on something other than the
library's own arithmetic.

Scenario: 4 uniform detectors at efficiency 0.025, a mean-0.3 Poissonian
source, and an adversarial admixture of weight eps = eta^4 consisting of
10^4-photon pulses that click every detector.  Printed: the fold shifts,
the one-photon bounds of both reciprocal families before and after, and
the proportional allowance (2x the relative c_1 shift scaled by the
nominal bound) that the gate compares the shifts against.

Run: python3 tools/oracles/flooding_reference.py
"""

from mpmath import mp, mpf, matrix, binomial, exp

mp.dps = 60

D = 4
eta = mpf("0.025")
mu = mpf("0.3")
eps = eta**4


def fold_vec(pgf):
    # fold r: subset-averaged click probability via inclusion-exclusion
    out = []
    for r in range(D + 1):
        acc = mpf(0)
        for j in range(r + 1):
            w = binomial(D - j, r - j) * binomial(D, j) * pgf(1 - j * eta)
            acc += w if j % 2 == 0 else -w
        out.append(acc / binomial(D, r))
    return out


def response(n):
    return fold_vec(lambda x: x**n)


# truncated family: columns are the responses to 0..D photons
# saturating family: the last column replaced by all ones
M = matrix(D + 1, D + 1)
for n in range(D + 1):
    col = response(n)
    for r in range(D + 1):
        M[r, n] = col[r]
Ms = matrix(M)
for r in range(D + 1):
    Ms[r, D] = mpf(1)

Minv = M**-1
Msinv = Ms**-1

print("truncated-family row sums (pairing with an all-ones response):")
for n in range(D + 1):
    s = sum(Minv[n, r] for r in range(D + 1))
    print(f"  n={n}: {float(s):.6e}")

base = fold_vec(lambda x: exp(mu * (x - 1)))
flood = response(10**4)
flooded = [(1 - eps) * b + eps * f for b, f in zip(base, flood)]

print("\nbase folds:     ", [f"{float(x):.12e}" for x in base])
print("flood response: ", [float(x) for x in flood])
print("fold shifts:    ", [f"{float(f - b):.6e}" for f, b in zip(flooded, base)])
print(f"top fold shift / eps: {float((flooded[4] - base[4]) / eps):.12f}")


def p1_bounds(c):
    fin = [sum(Minv[n, r] * c[r] for r in range(D + 1)) for n in range(D + 1)]
    sat = [sum(Msinv[n, r] * c[r] for r in range(D + 1)) for n in range(D + 1)]
    # D - 1 is odd, so the truncated family gives the floor and the
    # saturating family the ceiling for one photon
    return fin[1], sat[1]


floor0, ceil0 = p1_bounds(base)
floor1, ceil1 = p1_bounds(flooded)
print(f"\np_1 floor (truncated):  {float(floor0):.12e} -> {float(floor1):.12e}"
      f"  shift {float(floor1 - floor0):.6e}")
print(f"p_1 ceiling (saturating): {float(ceil0):.12e} -> {float(ceil1):.12e}"
      f"  shift {float(ceil1 - ceil0):.6e}")

rel = abs(flooded[1] - base[1]) / base[1]
print(f"\nrelative c_1 shift: {float(rel):.6e}")
print(f"allowance, floor side:   {float(2 * rel * abs(floor0)):.6e}")
print(f"allowance, ceiling side: {float(2 * rel * abs(ceil0)):.6e}")
