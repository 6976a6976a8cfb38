"""High-precision reference values for the double-integrator problem.

Run as a script to print the numbers frozen into the test-suite.  The
solution is built from the decaying-mode form v'' - v = lambda1, i.e.
v(t) = -lambda1 + a*exp(-(T-t)) + b*exp(-t), solved with mpmath at 50
digits.  Nothing here imports the package under test.
"""

import mpmath as mp

mp.mp.dps = 50


def modes(q0, v0, qT, vT, T):
    T = mp.mpf(T)
    E = mp.e ** (-T)
    A = mp.matrix([[-1, E, 1], [-1, 1, E], [-T, 1 - E, 1 - E]])
    rhs = mp.matrix([v0, vT, qT - q0])
    lam1, a, b = mp.lu_solve(A, rhs)
    return lam1, a, b


def solution(q0, v0, qT, vT, T):
    lam1, a, b = modes(q0, v0, qT, vT, T)
    T = mp.mpf(T)

    def v(t):
        return -lam1 + a * mp.e ** (-(T - t)) + b * mp.e ** (-t)

    def u(t):
        return a * mp.e ** (-(T - t)) - b * mp.e ** (-t)

    def q(t):
        return q0 - lam1 * t + a * (mp.e ** (-(T - t)) - mp.e ** (-T)) + b * (1 - mp.e ** (-t))

    return lam1, q, v, u


def main():
    lam1, q, v, u = solution(0, 0, 5, 0, 20)
    print("lambda1(0) q~=5 T=20:", mp.nstr(lam1, 17))
    print("lambda2(0) = -u(0):", mp.nstr(-u(0), 17))
    print("v*(10):", mp.nstr(v(10), 17))
    print("T*v(T/2)/q~ at T=20:", mp.nstr(20 * v(10) / 5, 17))
    cost = mp.quad(lambda t: (v(t) ** 2 + u(t) ** 2) / 2, [0, 10, 20])
    print("optimal cost q~=5 T=20:", mp.nstr(cost, 17))
    # crossing times of sqrt(v^2+u^2) = 0.2
    d = lambda t: mp.sqrt(v(t) ** 2 + u(t) ** 2) - mp.mpf("0.2")
    grid = [mp.mpf(k) / 10 for k in range(201)]
    roots = []
    for a_, b_ in zip(grid[:-1], grid[1:]):
        if d(a_) * d(b_) < 0:
            roots.append(mp.findroot(d, (a_, b_), solver="anderson"))
    print("crossings eps=0.2:", [mp.nstr(r, 17) for r in roots])
    print("d(0), d(10):", mp.nstr(d(0) + 0.2, 17), mp.nstr(d(10) + 0.2, 17))
    # measure of {d > 0.2}
    meas = 0
    pts = [mp.mpf(0)] + roots + [mp.mpf(20)]
    for a_, b_ in zip(pts[:-1], pts[1:]):
        if d((a_ + b_) / 2) > 0:
            meas += b_ - a_
    print("mu[Theta_20(0.2)]:", mp.nstr(meas, 17))
    for T in [0.5, 1, 2, 5, 10, 20, 40, 80]:
        lam1, q, v, u = solution(0, 0, 1, 0, T)
        print("T", T, "ratio_v", mp.nstr(T * v(mp.mpf(T) / 2), 17),
              "ratio_u", mp.nstr(T * abs(u(0)), 17), "1/(T-2)", (1 / (T - 2) if T != 2 else None),
              "v(T/2)", mp.nstr(v(mp.mpf(T) / 2), 17))
    lam1, q, v, u = solution(0, 3, 5, 6, 20)
    print("v0=3,vT=6: lambda1", mp.nstr(lam1, 17), "v(10)", mp.nstr(v(10), 17), "u(0)", mp.nstr(u(0), 17))
    lam1, q, v, u = solution(0, 0, 5, 0, 0.1)
    print("T=0.1 ratio_v", mp.nstr(mp.mpf("0.1") * v(mp.mpf("0.05")) / 5, 17))


if __name__ == "__main__":
    main()
