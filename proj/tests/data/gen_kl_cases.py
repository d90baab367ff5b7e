"""High-precision oracle for KL(q || p) on 4-token distributions.

Writes kl_cases.inc: {q0..q3, p0..p3, kl} rows; probabilities are exact
binary fractions so the C++ side sees identical inputs.
"""
import random
from mpmath import mp, mpf, log

mp.dps = 50


def dist(rng, zero_prob):
    w = [0 if rng.random() < zero_prob else rng.randint(1, 1000) for _ in range(4)]
    if sum(w) == 0:
        w[rng.randrange(4)] = 1
    total = sum(w)
    # Round to multiples of 2^-40, then fix the last entry so the sum is exact.
    q = [round(x / total * 2**40) / 2**40 for x in w]
    q[-1] = 1.0 - sum(q[:-1])
    if q[-1] < 0:
        return dist(rng, zero_prob)
    return q


def kl(q, p):
    s = mpf(0)
    for a, b in zip(q, p):
        if a > 0:
            s += mpf(a) * (log(mpf(a)) - log(mpf(b)))
    return s


def main():
    rng = random.Random(7)
    rows = []
    while len(rows) < 200:
        q = dist(rng, 0.25)
        p = dist(rng, 0.0)
        if any(x <= 0 for x in p):
            continue
        rows.append((q, p, kl(q, p)))
    with open(__file__.replace("gen_kl_cases.py", "kl_cases.inc"), "w") as f:
        f.write("// Generated by gen_kl_cases.py; do not edit.\n")
        for q, p, v in rows:
            f.write("{{%s}, {%s}, %s},\n" % (", ".join(repr(x) for x in q), ", ".join(repr(x) for x in p), mp.nstr(v, 25)))


if __name__ == "__main__":
    main()
