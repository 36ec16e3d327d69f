//! AC-OPF cast as a smooth NLP in polar coordinates.
//!
//! Variable layout: x = [vm (n) | va (n) | pg (m) | qg (m)].
//! Equalities: real/reactive KCL per bus plus the slack angle.
//! Inequalities: voltage boxes, dispatch boxes, angle windows per branch,
//! and scaled apparent-power limits per directed arc.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::ipm::NlpProblem;
use crate::network::{arc_flow_grad, arc_flow_hess, OperatingPoint, PowerNetwork};

/// What the solver minimizes.
#[derive(Debug, Clone)]
pub enum SolveObjective {
    /// Generation cost (the OPF objective).
    DispatchCost,
    /// Squared distance of (pg, v at generator buses) to a reference,
    /// the load-flow projection objective.
    SetpointDistance { pg_ref: Vec<f64>, vg_ref: Vec<f64> },
}

pub struct AcopfNlp<'a> {
    net: &'a PowerNetwork,
    demand: Vec<Complex64>,
    objective: SolveObjective,
    n: usize,
    m: usize,
    /// Directed arcs grouped by tail bus: (tail, head, A, B).
    arcs_by_tail: Vec<Vec<(usize, usize, Complex64, Complex64)>>,
    /// Thermal-limited arcs: (tail, head, A, B, s_max).
    thermal_arcs: Vec<(usize, usize, Complex64, Complex64, f64)>,
    // Offsets into the variable vector.
    ov: usize,
    oa: usize,
    op: usize,
    oq: usize,
    // Offsets into the inequality vector.
    i_vhi: usize,
    i_vlo: usize,
    i_phi: usize,
    i_plo: usize,
    i_qhi: usize,
    i_qlo: usize,
    i_ang: usize,
    i_thermal: usize,
    n_ineq: usize,
}

impl<'a> AcopfNlp<'a> {
    pub fn new(net: &'a PowerNetwork, demand: Vec<Complex64>, objective: SolveObjective) -> Self {
        let n = net.n_buses();
        let m = net.n_gens();
        let mut arcs_by_tail = vec![Vec::new(); n];
        let mut thermal_arcs = Vec::new();
        for (k, dir) in net.arcs() {
            let br = &net.branches[k];
            let (tail, head) = br.ends(dir);
            let (a, b) = br.stamp(dir);
            arcs_by_tail[tail].push((tail, head, a, b));
            if let Some(su) = br.s_max {
                thermal_arcs.push((tail, head, a, b, su));
            }
        }
        let n_br = net.n_branches();
        let i_vhi = 0;
        let i_vlo = i_vhi + n;
        let i_phi = i_vlo + n;
        let i_plo = i_phi + m;
        let i_qhi = i_plo + m;
        let i_qlo = i_qhi + m;
        let i_ang = i_qlo + m;
        let i_thermal = i_ang + 2 * n_br;
        let n_ineq = i_thermal + thermal_arcs.len();
        AcopfNlp {
            net,
            demand,
            objective,
            n,
            m,
            arcs_by_tail,
            thermal_arcs,
            ov: 0,
            oa: n,
            op: 2 * n,
            oq: 2 * n + m,
            i_vhi,
            i_vlo,
            i_phi,
            i_plo,
            i_qhi,
            i_qlo,
            i_ang,
            i_thermal,
            n_ineq,
        }
    }

    pub fn unpack(&self, x: &DVector<f64>) -> OperatingPoint {
        OperatingPoint {
            vm: x.as_slice()[self.ov..self.ov + self.n].to_vec(),
            va: x.as_slice()[self.oa..self.oa + self.n].to_vec(),
            pg: x.as_slice()[self.op..self.op + self.m].to_vec(),
            qg: x.as_slice()[self.oq..self.oq + self.m].to_vec(),
        }
    }
}

impl NlpProblem for AcopfNlp<'_> {
    fn n_vars(&self) -> usize {
        2 * self.n + 2 * self.m
    }

    fn n_eq(&self) -> usize {
        2 * self.n + 1
    }

    fn n_ineq(&self) -> usize {
        self.n_ineq
    }

    fn initial(&self) -> DVector<f64> {
        let fs = OperatingPoint::flat_start(self.net);
        let mut x = DVector::zeros(self.n_vars());
        for i in 0..self.n {
            x[self.ov + i] = fs.vm[i];
            x[self.oa + i] = fs.va[i];
        }
        for g in 0..self.m {
            x[self.op + g] = fs.pg[g];
            x[self.oq + g] = fs.qg[g];
        }
        x
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        match &self.objective {
            SolveObjective::DispatchCost => self
                .net
                .generators
                .iter()
                .enumerate()
                .map(|(g, gen)| gen.cost.eval(x[self.op + g]))
                .sum(),
            SolveObjective::SetpointDistance { pg_ref, vg_ref } => self
                .net
                .generators
                .iter()
                .enumerate()
                .map(|(g, gen)| {
                    (x[self.op + g] - pg_ref[g]).powi(2)
                        + (x[self.ov + gen.bus] - vg_ref[g]).powi(2)
                })
                .sum(),
        }
    }

    fn gradient(&self, x: &DVector<f64>, grad: &mut DVector<f64>) {
        grad.fill(0.0);
        match &self.objective {
            SolveObjective::DispatchCost => {
                for (g, gen) in self.net.generators.iter().enumerate() {
                    grad[self.op + g] = gen.cost.marginal(x[self.op + g]);
                }
            }
            SolveObjective::SetpointDistance { pg_ref, vg_ref } => {
                for (g, gen) in self.net.generators.iter().enumerate() {
                    grad[self.op + g] = 2.0 * (x[self.op + g] - pg_ref[g]);
                    grad[self.ov + gen.bus] += 2.0 * (x[self.ov + gen.bus] - vg_ref[g]);
                }
            }
        }
    }

    fn eq_constraints(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for i in 0..self.n {
            let v = x[self.ov + i];
            let sh = self.net.buses[i].shunt;
            out[i] = -self.demand[i].re - sh.re * v * v;
            out[self.n + i] = -self.demand[i].im + sh.im * v * v;
        }
        for (g, gen) in self.net.generators.iter().enumerate() {
            out[gen.bus] += x[self.op + g];
            out[self.n + gen.bus] += x[self.oq + g];
        }
        for arcs in &self.arcs_by_tail {
            for &(tail, head, a, b) in arcs {
                let s = crate::network::arc_flow_value(
                    a,
                    b,
                    x[self.ov + tail],
                    x[self.ov + head],
                    x[self.oa + tail],
                    x[self.oa + head],
                );
                out[tail] -= s.re;
                out[self.n + tail] -= s.im;
            }
        }
        out[2 * self.n] = x[self.oa + self.net.slack];
    }

    fn ineq_constraints(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for (i, bus) in self.net.buses.iter().enumerate() {
            out[self.i_vhi + i] = x[self.ov + i] - bus.v_max;
            out[self.i_vlo + i] = bus.v_min - x[self.ov + i];
        }
        for (g, gen) in self.net.generators.iter().enumerate() {
            out[self.i_phi + g] = x[self.op + g] - gen.s_max.re;
            out[self.i_plo + g] = gen.s_min.re - x[self.op + g];
            out[self.i_qhi + g] = x[self.oq + g] - gen.s_max.im;
            out[self.i_qlo + g] = gen.s_min.im - x[self.oq + g];
        }
        for (k, br) in self.net.branches.iter().enumerate() {
            let d = x[self.oa + br.from] - x[self.oa + br.to];
            out[self.i_ang + 2 * k] = d - br.angle_max;
            out[self.i_ang + 2 * k + 1] = -d - br.angle_max;
        }
        for (t, &(tail, head, a, b, su)) in self.thermal_arcs.iter().enumerate() {
            let s = crate::network::arc_flow_value(
                a,
                b,
                x[self.ov + tail],
                x[self.ov + head],
                x[self.oa + tail],
                x[self.oa + head],
            );
            // Scaled so a unit violation is roughly |S| − s_max near the limit.
            out[self.i_thermal + t] = (s.norm_sqr() - su * su) / (2.0 * su);
        }
    }

    fn eq_jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for i in 0..self.n {
            let v = x[self.ov + i];
            let sh = self.net.buses[i].shunt;
            out[(i, self.ov + i)] = -2.0 * sh.re * v;
            out[(self.n + i, self.ov + i)] = 2.0 * sh.im * v;
        }
        for (g, gen) in self.net.generators.iter().enumerate() {
            out[(gen.bus, self.op + g)] = 1.0;
            out[(self.n + gen.bus, self.oq + g)] = 1.0;
        }
        for arcs in &self.arcs_by_tail {
            for &(tail, head, a, b) in arcs {
                let f = arc_flow_grad(
                    a,
                    b,
                    x[self.ov + tail],
                    x[self.ov + head],
                    x[self.oa + tail],
                    x[self.oa + head],
                );
                let cols = [
                    self.ov + tail,
                    self.ov + head,
                    self.oa + tail,
                    self.oa + head,
                ];
                for (j, &c) in cols.iter().enumerate() {
                    out[(tail, c)] -= f.dp[j];
                    out[(self.n + tail, c)] -= f.dq[j];
                }
            }
        }
        out[(2 * self.n, self.oa + self.net.slack)] = 1.0;
    }

    fn ineq_jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for i in 0..self.n {
            out[(self.i_vhi + i, self.ov + i)] = 1.0;
            out[(self.i_vlo + i, self.ov + i)] = -1.0;
        }
        for g in 0..self.m {
            out[(self.i_phi + g, self.op + g)] = 1.0;
            out[(self.i_plo + g, self.op + g)] = -1.0;
            out[(self.i_qhi + g, self.oq + g)] = 1.0;
            out[(self.i_qlo + g, self.oq + g)] = -1.0;
        }
        for (k, br) in self.net.branches.iter().enumerate() {
            out[(self.i_ang + 2 * k, self.oa + br.from)] = 1.0;
            out[(self.i_ang + 2 * k, self.oa + br.to)] = -1.0;
            out[(self.i_ang + 2 * k + 1, self.oa + br.from)] = -1.0;
            out[(self.i_ang + 2 * k + 1, self.oa + br.to)] = 1.0;
        }
        for (t, &(tail, head, a, b, su)) in self.thermal_arcs.iter().enumerate() {
            let f = arc_flow_grad(
                a,
                b,
                x[self.ov + tail],
                x[self.ov + head],
                x[self.oa + tail],
                x[self.oa + head],
            );
            let cols = [
                self.ov + tail,
                self.ov + head,
                self.oa + tail,
                self.oa + head,
            ];
            let row = self.i_thermal + t;
            for (j, &c) in cols.iter().enumerate() {
                out[(row, c)] += (f.p * f.dp[j] + f.q * f.dq[j]) / su;
            }
        }
    }

    fn lagrangian_hessian(
        &self,
        x: &DVector<f64>,
        sigma: f64,
        lam: &DVector<f64>,
        z: &DVector<f64>,
        out: &mut DMatrix<f64>,
    ) {
        out.fill(0.0);
        match &self.objective {
            SolveObjective::DispatchCost => {
                for (g, gen) in self.net.generators.iter().enumerate() {
                    out[(self.op + g, self.op + g)] += sigma * 2.0 * gen.cost.c2;
                }
            }
            SolveObjective::SetpointDistance { .. } => {
                for (g, gen) in self.net.generators.iter().enumerate() {
                    out[(self.op + g, self.op + g)] += sigma * 2.0;
                    out[(self.ov + gen.bus, self.ov + gen.bus)] += sigma * 2.0;
                }
            }
        }
        // Shunt curvature from the KCL rows.
        for i in 0..self.n {
            let sh = self.net.buses[i].shunt;
            out[(self.ov + i, self.ov + i)] +=
                lam[i] * (-2.0 * sh.re) + lam[self.n + i] * (2.0 * sh.im);
        }
        // Arc curvature: KCL rows carry −S, thermal rows carry |S|²/(2s_u).
        for arcs in &self.arcs_by_tail {
            for &(tail, head, a, b) in arcs {
                let h = arc_flow_hess(
                    a,
                    b,
                    x[self.ov + tail],
                    x[self.ov + head],
                    x[self.oa + tail],
                    x[self.oa + head],
                );
                let cols = [
                    self.ov + tail,
                    self.ov + head,
                    self.oa + tail,
                    self.oa + head,
                ];
                let (wp, wq) = (-lam[tail], -lam[self.n + tail]);
                for r in 0..4 {
                    for c in 0..4 {
                        out[(cols[r], cols[c])] += wp * h.hp[r][c] + wq * h.hq[r][c];
                    }
                }
            }
        }
        for (t, &(tail, head, a, b, su)) in self.thermal_arcs.iter().enumerate() {
            let w = z[self.i_thermal + t];
            if w == 0.0 {
                continue;
            }
            let f = arc_flow_grad(
                a,
                b,
                x[self.ov + tail],
                x[self.ov + head],
                x[self.oa + tail],
                x[self.oa + head],
            );
            let h = arc_flow_hess(
                a,
                b,
                x[self.ov + tail],
                x[self.ov + head],
                x[self.oa + tail],
                x[self.oa + head],
            );
            let cols = [
                self.ov + tail,
                self.ov + head,
                self.oa + tail,
                self.oa + head,
            ];
            for r in 0..4 {
                for c in 0..4 {
                    let hh = (f.dp[r] * f.dp[c]
                        + f.p * h.hp[r][c]
                        + f.dq[r] * f.dq[c]
                        + f.q * h.hq[r][c])
                        / su;
                    out[(cols[r], cols[c])] += w * hh;
                }
            }
        }
    }
}
