"""Reference exponents for the gap-halving acceptance gate, computed at
60 decimal digits independently of the library.

For a mean-0.2 Poissonian on 4 detectors the gate compares, per photon
number, the truncated-family estimate of a 3-detector setup against the
saturating-family estimate of the 4-detector setup at a uniform
efficiency eta and at eta/2.  The gap between the two ladders shrinks
linearly in eta to first order, so the fitted log-log slope should land
near 1.

Run: python3 tools/oracles/gap_scaling_reference.py
"""

from mpmath import mp, mpf, matrix, binomial, exp, log

mp.dps = 60

MU = mpf("0.2")


def fold_vec(d, eta, pgf):
    out = []
    for r in range(d + 1):
        acc = mpf(0)
        for j in range(r + 1):
            w = binomial(d - j, r - j) * binomial(d, j) * pgf(1 - j * eta)
            acc += w if j % 2 == 0 else -w
        out.append(acc / binomial(d, r))
    return out


def family_values(d, eta, saturating):
    M = matrix(d + 1, d + 1)
    for n in range(d + 1):
        col = fold_vec(d, eta, lambda x: x**n)
        for r in range(d + 1):
            M[r, n] = col[r]
    if saturating:
        for r in range(d + 1):
            M[r, d] = mpf(1)
    c = fold_vec(d, eta, lambda x: exp(MU * (x - 1)))
    Minv = M**-1
    return [sum(Minv[n, r] * c[r] for r in range(d + 1)) for n in range(d + 1)]


def gaps(d, eta):
    truncated = family_values(d - 1, eta, saturating=False)
    saturated = family_values(d, eta, saturating=True)
    return [truncated[n] - saturated[n] for n in range(d)]


def exponents(d, eta_hi, eta_lo):
    g_hi = gaps(d, eta_hi)
    g_lo = gaps(d, eta_lo)
    return [
        float(log(abs(g_hi[n]) / abs(g_lo[n])) / log(eta_hi / eta_lo))
        for n in range(d)
    ]


for pair in [(mpf("0.0125"), mpf("0.00625")), (mpf("0.025"), mpf("0.0125"))]:
    exps = exponents(4, *pair)
    print(f"eta pair ({float(pair[0])}, {float(pair[1])}):")
    for n, e in enumerate(exps):
        print(f"  p_{n} gap exponent: {e:.6f}")
