#!/usr/bin/env python3
"""Independent AC-OPF reference solve for a MATPOWER-style case file.

Parses the case, builds the polar-coordinate NLP and solves it with
scipy's trust-constr. Used once to record reference objectives for the
solver cross-check fixtures; deliberately shares no code with the crate.
"""
import re
import sys

import numpy as np
from scipy.optimize import NonlinearConstraint, LinearConstraint, minimize


def parse_case(path):
    text = open(path).read()
    text = "\n".join(l.split("%")[0] for l in text.splitlines())
    base = float(re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)", text).group(1))
    tables = {}
    for name in ["bus", "gen", "branch", "gencost"]:
        m = re.search(r"mpc\." + name + r"\s*=\s*\[(.*?)\];", text, re.S)
        rows = []
        for line in re.split(r"[;\n]", m.group(1)):
            line = line.strip()
            if line:
                rows.append([float(t) for t in line.split()])
        tables[name] = np.array(rows)
    return base, tables


def main(path):
    base, t = parse_case(path)
    bus, gen, branch, gencost = t["bus"], t["gen"], t["branch"], t["gencost"]
    n = len(bus)
    m = len(gen)
    id2i = {int(b[0]): i for i, b in enumerate(bus)}
    slack = [i for i, b in enumerate(bus) if int(b[1]) == 3][0]

    pd, qd = bus[:, 2] / base, bus[:, 3] / base
    gs, bs = bus[:, 4] / base, bus[:, 5] / base
    vmin, vmax = bus[:, 12], bus[:, 11]
    gbus = np.array([id2i[int(g[0])] for g in gen])
    pmin, pmax = gen[:, 9] / base, gen[:, 8] / base
    qmin, qmax = gen[:, 4] / base, gen[:, 3] / base
    c2, c1, c0 = gencost[:, 4] * base * base, gencost[:, 5] * base, gencost[:, 6]

    arcs = []  # (tail, head, A, B) with S = conj(A)|Vt|^2 + conj(B) Vt Vh*
    lims = []
    for row in branch:
        if row[10] == 0:
            continue
        f, to = id2i[int(row[0])], id2i[int(row[1])]
        ys = 1.0 / (row[2] + 1j * row[3])
        bc = 1j * row[4] / 2.0
        tap = row[8] if row[8] != 0 else 1.0
        tsh = tap * np.exp(1j * np.deg2rad(row[9]))
        yff = (ys + bc) / (tsh * np.conj(tsh))
        yft = -ys / np.conj(tsh)
        ytf = -ys / tsh
        ytt = ys + bc
        su = row[5] / base if row[5] > 0 else None
        arcs.append((f, to, yff, yft))
        arcs.append((to, f, ytt, ytf))
        lims.append(su)
        lims.append(su)

    nv = 2 * n + 2 * m
    ov, oa, op, oq = 0, n, 2 * n, 2 * n + m

    def unpack(x):
        return x[ov:ov + n], x[oa:oa + n], x[op:op + m], x[oq:oq + m]

    def cost(x):
        pg = x[op:op + m]
        return float(np.sum(c2 * pg ** 2 + c1 * pg + c0))

    def cost_grad(x):
        g = np.zeros(nv)
        pg = x[op:op + m]
        g[op:op + m] = 2 * c2 * pg + c1
        return g

    def arc_flows(v, th):
        s = np.zeros(len(arcs), dtype=complex)
        for k, (a, b, A, B) in enumerate(arcs):
            s[k] = np.conj(A) * v[a] ** 2 + np.conj(B) * v[a] * v[b] * np.exp(1j * (th[a] - th[b]))
        return s

    def kcl(x):
        v, th, pg, qg = unpack(x)
        inj = np.zeros(n, dtype=complex)
        np.add.at(inj, gbus, pg + 1j * qg)
        inj -= pd + 1j * qd
        inj -= v ** 2 * (gs - 1j * bs)
        s = arc_flows(v, th)
        for k, (a, _, _, _) in enumerate(arcs):
            inj[a] -= s[k]
        return np.concatenate([inj.real, inj.imag])

    thermal_idx = [k for k, su in enumerate(lims) if su is not None]

    def thermal(x):
        v, th, _, _ = unpack(x)
        s = arc_flows(v, th)
        return np.array([abs(s[k]) ** 2 for k in thermal_idx])

    lb = np.concatenate([vmin, np.full(n, -np.pi / 2), pmin, qmin])
    ub = np.concatenate([vmax, np.full(n, np.pi / 2), pmax, qmax])
    lb[oa + slack] = ub[oa + slack] = 0.0

    x0 = np.concatenate([(vmin + vmax) / 2, np.zeros(n), (pmin + pmax) / 2, (qmin + qmax) / 2])

    cons = [NonlinearConstraint(kcl, 0.0, 0.0)]
    if thermal_idx:
        su2 = np.array([lims[k] ** 2 for k in thermal_idx])
        cons.append(NonlinearConstraint(thermal, -np.inf, su2))
    cons.append(LinearConstraint(np.eye(nv), lb, ub))

    res = minimize(
        cost, x0, jac=cost_grad, method="trust-constr", constraints=cons,
        options={"maxiter": 3000, "gtol": 1e-10, "xtol": 1e-12, "verbose": 0},
    )
    v, th, pg, qg = unpack(res.x)
    print(f"status={res.status} ({res.message})")
    print(f"objective = {cost(res.x):.6f} $/h")
    print(f"max |kcl| = {np.max(np.abs(kcl(res.x))):.3e} pu")
    print(f"pg (MW)   = {np.array2string(pg * base, precision=3)}")
    print(f"vm range  = [{v.min():.4f}, {v.max():.4f}]")
    if thermal_idx:
        s = thermal(res.x)
        su2 = np.array([lims[k] ** 2 for k in thermal_idx])
        print(f"max |S|/su = {np.max(np.sqrt(s / su2)):.4f}")


if __name__ == "__main__":
    main(sys.argv[1])
