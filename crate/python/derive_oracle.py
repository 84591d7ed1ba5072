"""Symbolic oracle for the diagonal Hopf family.

Derives J(p, a, b) from its (1,0)-coframe, the Lee form theta_I of
omega_I = g(I., .) and det(I +- J), then evaluates them at seeded random
samples. The JSON written here is what the Rust parity test reads.

    python python/derive_oracle.py [--out PATH] [--samples N] [--seed S]
"""

import argparse
import itertools
import json
import sys

import numpy as np
import sympy as sp

P, DP = sp.symbols("p dp", real=True)
a, b = sp.symbols("a b", negative=True)
r = b / a
I4 = sp.Matrix([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]])
# d t / d x for t = 2(r x1 - x2).
C = [2 * r, 0, -2, 0]


def j_from_coframe():
    """J whose (0,1)-forms are spanned by eta1, eta2: eta(J X) = -i eta(X)."""
    i = sp.I
    dw1 = sp.Matrix([[1, i, 0, 0]])
    dw2 = sp.Matrix([[0, 0, 1, i]])
    dwb1 = sp.Matrix([[1, -i, 0, 0]])
    dwb2 = sp.Matrix([[0, 0, 1, -i]])
    eta1 = dw1 - (a / b) * dwb2
    eta2 = (b * (1 + P) / (2 * a)) * dwb1 + ((1 - P) / 2) * dw2
    E = sp.Matrix.vstack(eta1, eta2, eta1.conjugate(), eta2.conjugate())
    D = sp.diag(-i, -i, i, i)
    return sp.simplify(E.inv() * D * E)


def metric():
    A = r * (1 + P) / 2
    B = (1 - P) / (2 * r)
    return sp.diag(A, A, B, B)


def d_of(e, k):
    return sp.diff(e, P) * DP * C[k]


def exterior_d2(w):
    return {
        (i, j, k): sp.simplify(d_of(w[j, k], i) - d_of(w[i, k], j) + d_of(w[i, j], k))
        for i, j, k in itertools.combinations(range(4), 3)
    }


def lee_form(w):
    th = sp.symbols("th0:4")
    dw = exterior_d2(w)
    eqs = [th[i] * w[j, k] - th[j] * w[i, k] + th[k] * w[i, j] - dw[(i, j, k)] for (i, j, k) in dw]
    sol = sp.solve(eqs, th, dict=True)[0]
    return [sp.simplify(sol[s]) for s in th]


def derive():
    J = j_from_coframe()
    g = metric()
    assert sp.simplify(J * J + sp.eye(4)) == sp.zeros(4), "J^2 != -1"
    assert sp.simplify(J.T * g * J - g) == sp.zeros(4), "g not J-invariant"
    omega_i = sp.simplify((I4.T * g).T)
    theta_i = lee_form(omega_i)
    det_plus = sp.factor(sp.simplify((I4 + J).det()))
    det_minus = sp.factor(sp.simplify((I4 - J).det()))
    return J, theta_i, det_plus, det_minus


def main(argv):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="crates/gklab/tests/data/hopf_oracle.json")
    ap.add_argument("--samples", type=int, default=100)
    ap.add_argument("--seed", type=int, default=20240611)
    args = ap.parse_args(argv)

    J, theta_i, det_plus, det_minus = derive()
    print("J =", J)
    print("theta_I =", theta_i)
    print("det(I+J) =", det_plus, " det(I-J) =", det_minus)

    fj = sp.lambdify((P, a, b), J, "mpmath")
    ft = sp.lambdify((P, DP, a, b), theta_i, "mpmath")
    fp = sp.lambdify((P, a, b), det_plus, "mpmath")
    fm = sp.lambdify((P, a, b), det_minus, "mpmath")

    import mpmath

    mpmath.mp.dps = 40
    rng = np.random.default_rng(args.seed)
    rows = []
    for _ in range(args.samples):
        p = float(rng.uniform(-0.98, 0.98))
        dp = float(rng.uniform(-0.5, 0.5))
        av = float(rng.uniform(-3.0, -0.05))
        bv = float(rng.uniform(av, -0.01))
        ctx = [mpmath.mpf(p), mpmath.mpf(av), mpmath.mpf(bv)]
        jm = fj(*ctx)
        rows.append(
            {
                "p": p,
                "dp": dp,
                "a": av,
                "b": bv,
                "j": [[float(jm[i, k]) for k in range(4)] for i in range(4)],
                "theta_i": [float(v) for v in ft(ctx[0], mpmath.mpf(dp), ctx[1], ctx[2])],
                "det_plus": float(fp(*ctx)),
                "det_minus": float(fm(*ctx)),
            }
        )
    doc = {
        "coordinates": ["x1", "y1", "x2", "y2"],
        "t": "2 (b/a) x1 - 2 x2",
        "j": str(J),
        "theta_i": [str(e) for e in theta_i],
        "det_plus": str(det_plus),
        "det_minus": str(det_minus),
        "seed": args.seed,
        "samples": rows,
    }
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    print(f"wrote {len(rows)} samples to {args.out}")


if __name__ == "__main__":
    main(sys.argv[1:])
