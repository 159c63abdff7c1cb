"""Exact-rational verification of the overflow sign structure that the
interval directions rest on.

For any admissible setup, pairing the reciprocal rows of either family
with the response to m > D photons must give constant parity-determined
signs: the truncated family alternates as (-1)^(D-n), the saturating
family the opposite way one order down, the truncated top entry is >= 1
and the saturating top entry stays in (0, 1].  Everything here runs in
Fractions, so a failed assertion would be a disproof, not rounding.

Run: python3 tools/oracles/pairing_signs_reference.py
"""

from fractions import Fraction
from itertools import combinations
from math import comb


def response(etas, m):
    # fold r: average over size-r subsets of P(all r click | m photons)
    d = len(etas)
    out = []
    for r in range(d + 1):
        tot = Fraction(0)
        for w in combinations(range(d), r):
            s = Fraction(0)
            for k in range(len(w) + 1):
                for u in combinations(w, k):
                    s += (-1) ** k * (1 - sum(etas[i] for i in u)) ** m
            tot += s
        out.append(tot / comb(d, r))
    return out


def invert_upper(m):
    n = len(m)
    inv = [[Fraction(0)] * n for _ in range(n)]
    for col in range(n):
        e = [Fraction(int(i == col)) for i in range(n)]
        x = [Fraction(0)] * n
        for i in reversed(range(n)):
            s = e[i] - sum(m[i][j] * x[j] for j in range(i + 1, n))
            x[i] = s / m[i][i]
        for i in range(n):
            inv[i][col] = x[i]
    return inv


def check(etas, mmax=40):
    d = len(etas)
    cols = [response(etas, n) for n in range(d + 1)]
    trunc = [[cols[n][r] for n in range(d + 1)] for r in range(d + 1)]
    sat = [row[:] for row in trunc]
    for row in sat:
        row[d] = Fraction(1)
    rows_t = invert_upper(trunc)
    rows_s = invert_upper(sat)
    for m in range(d, mmax + 1):
        col = response(etas, m)
        fin = [sum(rows_t[n][r] * col[r] for r in range(d + 1)) for n in range(d + 1)]
        ovf = [sum(rows_s[n][r] * col[r] for r in range(d + 1)) for n in range(d + 1)]
        if m == d:
            assert fin[d] == 1
            assert 0 < ovf[d] <= 1, (etas, m, float(ovf[d]))
            continue
        for n in range(d + 1):
            want = 1 if (d - n) % 2 == 0 else -1
            assert fin[n] * want > 0, ("truncated", etas, m, n, float(fin[n]))
        for n in range(d):
            want = -1 if (d - n) % 2 == 0 else 1
            assert ovf[n] * want > 0, ("saturating", etas, m, n, float(ovf[n]))
        assert fin[d] >= 1, (etas, m, float(fin[d]))
        assert 0 < ovf[d] <= 1, (etas, m, float(ovf[d]))
    print("ok", [str(e) for e in etas])


if __name__ == "__main__":
    for d in range(2, 6):
        check([Fraction(1, 40)] * d)
    check([Fraction(2, 100), Fraction(25, 1000), Fraction(3, 100), Fraction(22, 1000)])
    check([Fraction(9, 100), Fraction(6, 100), Fraction(5, 100)])
    check([Fraction(3, 10), Fraction(1, 1000000), Fraction(3, 10)])
    check([Fraction(15, 100), Fraction(12, 100)])
    print("all sign patterns hold")
