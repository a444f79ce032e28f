"""Reference solve of the estimation program with a general-purpose NLP solver.

Usage: reference_nlp.py CASE.m MEASUREMENTS.json OUT.json

The program is built from scratch here: Ybus from PYPOWER's makeYbus, KCL
with RTU admittances and PMU sources, and the box constraints of the
measurement document. SLSQP finds the optimum and its active set; a Newton
solve of the equality-constrained KKT system on that active set then polishes
the point to machine precision. Multiplier signs of the active bounds are
checked, and a bound whose multiplier has the wrong sign is released.
"""
import json
import re
import sys

import numpy as np
from pypower.ext2int import ext2int
from pypower.makeYbus import makeYbus
from scipy.optimize import minimize


def parse_m(path):
    text = open(path).read()
    text = re.sub(r"%[^\n]*", "", text)
    base = float(re.search(r"mpc\.baseMVA\s*=\s*([^;]+);", text).group(1))

    def matrix(name):
        body = re.search(r"mpc\." + name + r"\s*=\s*\[(.*?)\];", text, re.S).group(1)
        rows = [r.split() for r in re.split(r"[;\n]", body) if r.strip()]
        return np.array([[float(v) for v in r] for r in rows])

    return {"version": "2", "baseMVA": base, "bus": matrix("bus"), "branch": matrix("branch"), "gen": matrix("gen")}


class Program:
    def __init__(self, case_path, meas):
        ppc = ext2int(parse_m(case_path))
        ybus, _, _ = makeYbus(ppc["baseMVA"], ppc["bus"], ppc["branch"])
        ybus = ybus.toarray()
        self.G, self.B = ybus.real, ybus.imag
        ids = [int(b) for b in parse_m(case_path)["bus"][:, 0]]
        index = {b: k for k, b in enumerate(ids)}
        self.n = n = len(ids)
        self.rtu = meas["rtu"]
        self.pmu = meas["pmu"]
        self.rtu_bus = [index[r["bus"]] for r in self.rtu]
        self.pmu_bus = [index[p["bus"]] for p in self.pmu]
        self.nr, self.np_ = len(self.rtu), len(self.pmu)
        self.nx = 2 * n + 2 * self.nr + 4 * self.np_
        lo = np.full(self.nx, -np.inf)
        hi = np.full(self.nx, np.inf)
        for r, m in enumerate(self.rtu):
            lo[self.g(r)], hi[self.g(r)] = m["g_lo"], m["g_hi"]
            lo[self.g(r) + 1], hi[self.g(r) + 1] = m["b_lo"], m["b_hi"]
        for p, m in enumerate(self.pmu):
            j = self.p(p)
            lo[j : j + 2], hi[j : j + 2] = m["v_lo"], m["v_hi"]
            lo[j + 2 : j + 4], hi[j + 2 : j + 4] = m["i_lo"], m["i_hi"]
        self.lo, self.hi = lo, hi

    def g(self, r):
        return 2 * self.n + 2 * r

    def p(self, p):
        return 2 * self.n + 2 * self.nr + 4 * p

    def objective(self, x):
        f = 0.0
        for r, m in enumerate(self.rtu):
            f += (x[self.g(r)] - m["g_m"]) ** 2 + (x[self.g(r) + 1] - m["b_m"]) ** 2
        for p, m in enumerate(self.pmu):
            k, j = self.pmu_bus[p], self.p(p)
            f += m["g_pmu"] ** 2 * ((x[j] - x[k]) ** 2 + (x[j + 1] - x[self.n + k]) ** 2)
        return f

    def gradient(self, x):
        d = np.zeros(self.nx)
        for r, m in enumerate(self.rtu):
            d[self.g(r)] = 2 * (x[self.g(r)] - m["g_m"])
            d[self.g(r) + 1] = 2 * (x[self.g(r) + 1] - m["b_m"])
        for p, m in enumerate(self.pmu):
            k, j, w = self.pmu_bus[p], self.p(p), 2 * m["g_pmu"] ** 2
            for c, v in ((0, k), (1, self.n + k)):
                d[j + c] += w * (x[j + c] - x[v])
                d[v] -= w * (x[j + c] - x[v])
        return d

    def constraints(self, x):
        n = self.n
        vr, vi = x[:n], x[n : 2 * n]
        cr = self.G @ vr - self.B @ vi
        ci = self.G @ vi + self.B @ vr
        for r, k in enumerate(self.rtu_bus):
            g, b = x[self.g(r)], x[self.g(r) + 1]
            cr[k] += g * vr[k] + b * vi[k]
            ci[k] += g * vi[k] - b * vr[k]
        for p, k in enumerate(self.pmu_bus):
            j, gp = self.p(p), self.pmu[p]["g_pmu"]
            cr[k] += -x[j + 2] - gp * (x[j] - vr[k])
            ci[k] += -x[j + 3] - gp * (x[j + 1] - vi[k])
        return np.concatenate([cr, ci])

    def jacobian(self, x):
        n = self.n
        J = np.zeros((2 * n, self.nx))
        J[:n, :n], J[:n, n : 2 * n] = self.G, -self.B
        J[n:, :n], J[n:, n : 2 * n] = self.B, self.G
        for r, k in enumerate(self.rtu_bus):
            g, b, j = x[self.g(r)], x[self.g(r) + 1], self.g(r)
            vr, vi = x[k], x[n + k]
            J[k, [k, n + k, j, j + 1]] += [g, b, vr, vi]
            J[n + k, [k, n + k, j, j + 1]] += [-b, g, vi, -vr]
        for p, k in enumerate(self.pmu_bus):
            j, gp = self.p(p), self.pmu[p]["g_pmu"]
            J[k, [k, j, j + 2]] += [gp, -gp, -1]
            J[n + k, [n + k, j + 1, j + 3]] += [gp, -gp, -1]
        return J

    def lagrangian_hessian(self, lam):
        n = self.n
        H = np.zeros((self.nx, self.nx))
        for r, k in enumerate(self.rtu_bus):
            j = self.g(r)
            H[j, j] = H[j + 1, j + 1] = 2.0
            lr, li = lam[k], lam[n + k]
            for a, b, v in ((k, j, lr), (k, j + 1, -li), (n + k, j, li), (n + k, j + 1, lr)):
                H[a, b] += v
                H[b, a] += v
        for p, k in enumerate(self.pmu_bus):
            j, w = self.p(p), 2 * self.pmu[p]["g_pmu"] ** 2
            for c, v in ((0, k), (1, n + k)):
                H[j + c, j + c] += w
                H[v, v] += w
                H[j + c, v] -= w
                H[v, j + c] -= w
        return H


def start_point(prog):
    x = np.zeros(prog.nx)
    x[: prog.n] = 1.0
    for p, m in enumerate(prog.pmu):
        j, k = prog.p(p), prog.pmu_bus[p]
        x[j : j + 4] = [m["v_re"], m["v_im"], m["i_re"], m["i_im"]]
        x[k], x[prog.n + k] = m["v_re"], m["v_im"]
    for r, m in enumerate(prog.rtu):
        x[prog.g(r)], x[prog.g(r) + 1] = m["g_m"], m["b_m"]
    return np.clip(x, prog.lo, prog.hi)


def polish(prog, x, tol=1e-9):
    """Newton on the KKT system with the active bounds held, releasing any
    bound whose multiplier has the wrong sign."""
    width = prog.hi - prog.lo
    held = {}
    for j in range(prog.nx):
        if width[j] <= 1e-10:
            held[j] = prog.lo[j]
        elif x[j] >= prog.hi[j] - tol:
            held[j] = prog.hi[j]
        elif x[j] <= prog.lo[j] + tol:
            held[j] = prog.lo[j]
    m = 2 * prog.n
    lam = np.zeros(m)
    for _ in range(20):
        free = np.array([j for j in range(prog.nx) if j not in held])
        for j, v in held.items():
            x[j] = v
        for _ in range(50):
            J = prog.jacobian(x)
            grad_l = prog.gradient(x) + J.T @ lam
            res = np.concatenate([grad_l[free], prog.constraints(x)])
            if np.max(np.abs(res)) < 1e-14:
                break
            H = prog.lagrangian_hessian(lam)
            K = np.block([[H[np.ix_(free, free)], J[:, free].T], [J[:, free], np.zeros((m, m))]])
            step = np.linalg.solve(K, -res)
            x[free] += step[: len(free)]
            lam += step[len(free) :]
        grad_l = prog.gradient(x) + prog.jacobian(x).T @ lam
        released = False
        for j, v in list(held.items()):
            if width[j] <= 1e-10:
                continue
            at_hi = v == prog.hi[j]
            if (at_hi and grad_l[j] > tol) or (not at_hi and grad_l[j] < -tol):
                del held[j]
                released = True
        outside = [j for j in free if x[j] > prog.hi[j] or x[j] < prog.lo[j]]
        for j in outside:
            held[j] = min(max(x[j], prog.lo[j]), prog.hi[j])
        if not released and not outside:
            return x, lam, np.max(np.abs(res)), len(held)
    raise RuntimeError("active-set polish did not settle")


def main():
    case_path, meas_path, out_path = sys.argv[1:4]
    meas = json.load(open(meas_path))
    prog = Program(case_path, meas)
    sol = minimize(
        prog.objective,
        start_point(prog),
        jac=prog.gradient,
        method="SLSQP",
        bounds=list(zip(prog.lo, prog.hi)),
        constraints=[{"type": "eq", "fun": prog.constraints, "jac": prog.jacobian}],
        options={"ftol": 1e-15, "maxiter": 2000},
    )
    x, lam, res, held = polish(prog, sol.x.copy())
    n, nr = prog.n, prog.nr
    pm = x[2 * n + 2 * nr :].reshape(-1, 4)
    out = {
        "case": case_path.split("/")[-1],
        "solver": "scipy SLSQP + active-set Newton polish",
        "slsqp_status": int(sol.status),
        "kkt_residual_inf": float(res),
        "held_bounds": held,
        "objective": float(prog.objective(x)),
        "v_re": x[:n].tolist(),
        "v_im": x[n : 2 * n].tolist(),
        "g_rtu": x[2 * n : 2 * n + 2 * nr : 2].tolist(),
        "b_rtu": x[2 * n + 1 : 2 * n + 2 * nr : 2].tolist(),
        "v_pmu_re": pm[:, 0].tolist(),
        "v_pmu_im": pm[:, 1].tolist(),
        "i_pmu_re": pm[:, 2].tolist(),
        "i_pmu_im": pm[:, 3].tolist(),
    }
    json.dump(out, open(out_path, "w"), indent=1)
    print(f"objective {out['objective']:.12e}, KKT residual {res:.2e}, {held} bounds held")


if __name__ == "__main__":
    main()
