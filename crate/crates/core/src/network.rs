//! Network data model and AC power-flow physics.
//!
//! All quantities are in the per-unit system: powers divided by the MVA
//! base, voltages by the nominal bus voltage, admittances derived from
//! per-unit impedances. Voltages are polar (magnitude, angle).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Quadratic dispatch cost c2·p² + c1·p + c0, coefficients in $/pu², $/pu, $.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CostCurve {
    pub fn eval(&self, p: f64) -> f64 {
        self.c2 * p * p + self.c1 * p + self.c0
    }

    pub fn marginal(&self, p: f64) -> f64 {
        2.0 * self.c2 * p + self.c1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// Bus number as it appeared in the source file.
    pub original_id: usize,
    pub v_min: f64,
    pub v_max: f64,
    /// Shunt admittance Gs + jBs in pu.
    pub shunt: Complex64,
    /// Nominal complex demand in pu.
    pub demand: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// Dense index of the bus this unit injects at.
    pub bus: usize,
    /// Componentwise lower bound on S^g (Re = Pmin, Im = Qmin).
    pub s_min: Complex64,
    /// Componentwise upper bound on S^g.
    pub s_max: Complex64,
    pub cost: CostCurve,
}

/// A branch between two buses with the standard tap/charging model.
///
/// The directed-arc power flow is S = conj(A)·|V_tail|² + conj(B)·V_tail·conj(V_head)
/// where (A, B) is (y_ff, y_ft) on the forward arc and (y_tt, y_tf) on the
/// reverse arc. Taps and line charging are folded into these four stamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub resistance: f64,
    pub reactance: f64,
    /// Total line-charging susceptance (split half per end).
    pub charging: f64,
    /// Tap magnitude on the from side; 1.0 for plain lines.
    pub tap: f64,
    /// Phase shift on the from side, degrees as given in the source file.
    pub shift_deg: f64,
    /// Raw angle-difference window in degrees; 0/±360 means unconstrained.
    pub ang_min_deg: f64,
    pub ang_max_deg: f64,
    pub y_ff: Complex64,
    pub y_ft: Complex64,
    pub y_tf: Complex64,
    pub y_tt: Complex64,
    /// Apparent-power limit in pu; None = unlimited.
    pub s_max: Option<f64>,
    /// Symmetric angle-difference limit in radians, in (0, π/2].
    pub angle_max: f64,
}

impl Branch {
    /// Arc stamp (A, B) for the given direction.
    pub fn stamp(&self, dir: Direction) -> (Complex64, Complex64) {
        match dir {
            Direction::Forward => (self.y_ff, self.y_ft),
            Direction::Reverse => (self.y_tt, self.y_tf),
        }
    }

    /// (tail, head) bus indices for the given direction.
    pub fn ends(&self, dir: Direction) -> (usize, usize) {
        match dir {
            Direction::Forward => (self.from, self.to),
            Direction::Reverse => (self.to, self.from),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

/// Immutable per-unit description of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerNetwork {
    pub id: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    /// Dense index of the reference bus (angle fixed to zero).
    pub slack: usize,
}

impl PowerNetwork {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_gens(&self) -> usize {
        self.generators.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    /// Indices of generators attached to `bus`.
    pub fn gens_at(&self, bus: usize) -> impl Iterator<Item = usize> + '_ {
        self.generators
            .iter()
            .enumerate()
            .filter(move |(_, g)| g.bus == bus)
            .map(|(i, _)| i)
    }

    /// Dense bus indices hosting at least one generator, in generator order.
    pub fn gen_buses(&self) -> Vec<usize> {
        self.generators.iter().map(|g| g.bus).collect()
    }

    /// All directed arcs as (branch index, direction).
    pub fn arcs(&self) -> impl Iterator<Item = (usize, Direction)> + '_ {
        (0..self.branches.len())
            .flat_map(|k| [(k, Direction::Forward), (k, Direction::Reverse)])
    }

    /// Total nominal complex demand.
    pub fn total_demand(&self) -> Complex64 {
        self.buses.iter().map(|b| b.demand).sum()
    }
}

/// Full AC state: voltage magnitude/angle per bus, dispatch per generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
}

impl OperatingPoint {
    /// Flat start: voltages and dispatch at bound midpoints, angles zero.
    pub fn flat_start(net: &PowerNetwork) -> Self {
        OperatingPoint {
            vm: net.buses.iter().map(|b| 0.5 * (b.v_min + b.v_max)).collect(),
            va: vec![0.0; net.n_buses()],
            pg: net
                .generators
                .iter()
                .map(|g| 0.5 * (g.s_min.re + g.s_max.re))
                .collect(),
            qg: net
                .generators
                .iter()
                .map(|g| 0.5 * (g.s_min.im + g.s_max.im))
                .collect(),
        }
    }

    /// Layout [pg | qg | vm | va], the full-state vector used by learned models.
    pub fn to_full_state(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(2 * self.pg.len() + 2 * self.vm.len());
        x.extend_from_slice(&self.pg);
        x.extend_from_slice(&self.qg);
        x.extend_from_slice(&self.vm);
        x.extend_from_slice(&self.va);
        x
    }

    pub fn from_full_state(net: &PowerNetwork, state: &[f64]) -> Self {
        let m = net.n_gens();
        let n = net.n_buses();
        assert_eq!(state.len(), 2 * m + 2 * n, "full-state length mismatch");
        OperatingPoint {
            pg: state[..m].to_vec(),
            qg: state[m..2 * m].to_vec(),
            vm: state[2 * m..2 * m + n].to_vec(),
            va: state[2 * m + n..].to_vec(),
        }
    }

    /// Set-points (pg per generator, voltage magnitude at generator buses).
    pub fn setpoints(&self, net: &PowerNetwork) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * net.n_gens());
        y.extend_from_slice(&self.pg);
        y.extend(net.generators.iter().map(|g| self.vm[g.bus]));
        y
    }

    pub fn setpoints_struct(&self, net: &PowerNetwork) -> SetPoints {
        SetPoints {
            pg: self.pg.clone(),
            vg: net.generators.iter().map(|g| self.vm[g.bus]).collect(),
        }
    }
}

/// The quantities a proxy model predicts: active dispatch per generator and
/// voltage magnitude at generator buses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetPoints {
    pub pg: Vec<f64>,
    pub vg: Vec<f64>,
}

impl SetPoints {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.pg.clone();
        v.extend_from_slice(&self.vg);
        v
    }

    pub fn from_vec(v: &[f64]) -> Self {
        assert!(v.len() % 2 == 0, "set-point vector must have even length");
        let m = v.len() / 2;
        SetPoints {
            pg: v[..m].to_vec(),
            vg: v[m..].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.pg.len() + self.vg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pg.is_empty() && self.vg.is_empty()
    }

    pub fn distance_squared(&self, other: &SetPoints) -> f64 {
        self.pg
            .iter()
            .zip(&other.pg)
            .chain(self.vg.iter().zip(&other.vg))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Per-bus complex demand, the model input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadVector {
    pub sd: Vec<Complex64>,
}

impl LoadVector {
    pub fn nominal(net: &PowerNetwork) -> Self {
        LoadVector {
            sd: net.buses.iter().map(|b| b.demand).collect(),
        }
    }

    pub fn zeros(n: usize) -> Self {
        LoadVector {
            sd: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn total(&self) -> Complex64 {
        self.sd.iter().sum()
    }

    /// Flattened [Pd | Qd] vector fed to the learned models.
    pub fn to_input(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self.sd.iter().map(|s| s.re).collect();
        x.extend(self.sd.iter().map(|s| s.im));
        x
    }
}

// ---------------------------------------------------------------------------
// Directed-arc flow evaluation
// ---------------------------------------------------------------------------

/// P and Q of one directed arc plus first derivatives w.r.t. [v_tail, v_head,
/// θ_tail, θ_head].
#[derive(Debug, Clone, Copy)]
pub struct ArcFlow {
    pub p: f64,
    pub q: f64,
    pub dp: [f64; 4],
    pub dq: [f64; 4],
}

/// Second derivatives of one arc's P and Q over the same four variables.
#[derive(Debug, Clone, Copy)]
pub struct ArcHessian {
    pub hp: [[f64; 4]; 4],
    pub hq: [[f64; 4]; 4],
}

/// Evaluate S = conj(A)·v1² + conj(B)·v1·v2·e^{j(θ1−θ2)} in real form.
pub fn arc_flow_value(a: Complex64, b: Complex64, v1: f64, v2: f64, t1: f64, t2: f64) -> Complex64 {
    let d = t1 - t2;
    let (sd, cd) = d.sin_cos();
    let p = a.re * v1 * v1 + v1 * v2 * (b.re * cd + b.im * sd);
    let q = -a.im * v1 * v1 + v1 * v2 * (b.re * sd - b.im * cd);
    Complex64::new(p, q)
}

pub fn arc_flow_grad(a: Complex64, b: Complex64, v1: f64, v2: f64, t1: f64, t2: f64) -> ArcFlow {
    let d = t1 - t2;
    let (sd, cd) = d.sin_cos();
    // k = g_B cosδ + b_B sinδ, l = g_B sinδ − b_B cosδ; note dk/dδ = −l·sign… kept explicit.
    let k = b.re * cd + b.im * sd;
    let l = b.re * sd - b.im * cd;
    let p = a.re * v1 * v1 + v1 * v2 * k;
    let q = -a.im * v1 * v1 + v1 * v2 * l;
    // ∂/∂δ: dk = −g_B sinδ + b_B cosδ = −l, dl = g_B cosδ + b_B sinδ = k
    let dp_dd = v1 * v2 * (-l);
    let dq_dd = v1 * v2 * k;
    ArcFlow {
        p,
        q,
        dp: [2.0 * a.re * v1 + v2 * k, v1 * k, dp_dd, -dp_dd],
        dq: [-2.0 * a.im * v1 + v2 * l, v1 * l, dq_dd, -dq_dd],
    }
}

pub fn arc_flow_hess(a: Complex64, b: Complex64, v1: f64, v2: f64, t1: f64, t2: f64) -> ArcHessian {
    let d = t1 - t2;
    let (sd, cd) = d.sin_cos();
    let k = b.re * cd + b.im * sd;
    let l = b.re * sd - b.im * cd;
    // Base second derivatives over (v1, v2, δ); then chain δ = θ1 − θ2.
    let p_v1v1 = 2.0 * a.re;
    let p_v1v2 = k;
    let p_v1d = -v2 * l;
    let p_v2d = -v1 * l;
    let p_dd = -v1 * v2 * k;
    let q_v1v1 = -2.0 * a.im;
    let q_v1v2 = l;
    let q_v1d = v2 * k;
    let q_v2d = v1 * k;
    let q_dd = -v1 * v2 * l;
    let expand = |vv11: f64, vv12: f64, v1d: f64, v2d: f64, dd: f64| -> [[f64; 4]; 4] {
        [
            [vv11, vv12, v1d, -v1d],
            [vv12, 0.0, v2d, -v2d],
            [v1d, v2d, dd, -dd],
            [-v1d, -v2d, -dd, dd],
        ]
    };
    ArcHessian {
        hp: expand(p_v1v1, p_v1v2, p_v1d, p_v2d, p_dd),
        hq: expand(q_v1v1, q_v1v2, q_v1d, q_v2d, q_dd),
    }
}

// ---------------------------------------------------------------------------
// Physics over operating points
// ---------------------------------------------------------------------------

/// Complex power entering a branch at the tail of the chosen direction.
pub fn branch_flow(
    net: &PowerNetwork,
    op: &OperatingPoint,
    branch: usize,
    dir: Direction,
) -> Complex64 {
    let br = &net.branches[branch];
    let (a, b) = br.stamp(dir);
    let (i, j) = br.ends(dir);
    arc_flow_value(a, b, op.vm[i], op.vm[j], op.va[i], op.va[j])
}

/// Power drawn by the bus shunt at the given voltage: |V|²·conj(Y_sh).
pub fn shunt_power(bus: &Bus, vm: f64) -> Complex64 {
    vm * vm * bus.shunt.conj()
}

/// Per-bus power balance residual: generation − demand − shunt − outgoing flows.
/// Zero (to solver tolerance) at any feasible point.
pub fn kcl_residual(net: &PowerNetwork, op: &OperatingPoint, loads: &LoadVector) -> Vec<Complex64> {
    let mut res: Vec<Complex64> = (0..net.n_buses())
        .map(|i| -loads.sd[i] - shunt_power(&net.buses[i], op.vm[i]))
        .collect();
    for (g, gen) in net.generators.iter().enumerate() {
        res[gen.bus] += Complex64::new(op.pg[g], op.qg[g]);
    }
    for (k, dir) in net.arcs() {
        let (tail, _) = net.branches[k].ends(dir);
        res[tail] -= branch_flow(net, op, k, dir);
    }
    res
}

/// Total generation cost of a dispatch vector.
pub fn dispatch_cost(net: &PowerNetwork, pg: &[f64]) -> f64 {
    assert_eq!(pg.len(), net.n_gens(), "dispatch length mismatch");
    net.generators
        .iter()
        .zip(pg)
        .map(|(g, &p)| g.cost.eval(p))
        .sum()
}

fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

/// Raw per-member violation magnitudes for each constraint family.
///
/// Shared by the violation report and the constraint-aware training loss so
/// both sides agree on what a violation is.
#[derive(Debug, Clone)]
pub struct FamilyViolations {
    /// Per bus: distance outside [v_min, v_max].
    pub voltage: Vec<f64>,
    /// Per branch: excess of |θ_i − θ_j| over the angle limit.
    pub angle: Vec<f64>,
    /// Per generator: summed distance outside the P and Q boxes.
    pub generator: Vec<f64>,
    /// Per directed arc with a limit: excess of |S| over s_max.
    pub thermal: Vec<f64>,
    /// Per bus: |KCL residual|.
    pub kcl: Vec<f64>,
}

pub fn family_violations(
    net: &PowerNetwork,
    op: &OperatingPoint,
    loads: &LoadVector,
) -> FamilyViolations {
    let voltage = net
        .buses
        .iter()
        .zip(&op.vm)
        .map(|(b, &v)| hinge(v - b.v_max) + hinge(b.v_min - v))
        .collect();
    let angle = net
        .branches
        .iter()
        .map(|br| hinge((op.va[br.from] - op.va[br.to]).abs() - br.angle_max))
        .collect();
    let generator = net
        .generators
        .iter()
        .enumerate()
        .map(|(g, gen)| {
            hinge(op.pg[g] - gen.s_max.re)
                + hinge(gen.s_min.re - op.pg[g])
                + hinge(op.qg[g] - gen.s_max.im)
                + hinge(gen.s_min.im - op.qg[g])
        })
        .collect();
    let thermal = net
        .arcs()
        .filter_map(|(k, dir)| {
            net.branches[k]
                .s_max
                .map(|su| hinge(branch_flow(net, op, k, dir).norm() - su))
        })
        .collect();
    let kcl = kcl_residual(net, op, loads)
        .iter()
        .map(|r| r.norm())
        .collect();
    FamilyViolations {
        voltage,
        angle,
        generator,
        thermal,
        kcl,
    }
}

/// Max and mean of one constraint family's violation magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyStats {
    pub max: f64,
    pub mean: f64,
}

impl FamilyStats {
    fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return FamilyStats { max: 0.0, mean: 0.0 };
        }
        FamilyStats {
            max: values.iter().cloned().fold(0.0, f64::max),
            mean: values.iter().sum::<f64>() / values.len() as f64,
        }
    }
}

/// Absolute violation magnitudes per constraint family, in pu.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViolationReport {
    pub voltage: FamilyStats,
    pub angle: FamilyStats,
    pub generator: FamilyStats,
    pub thermal: FamilyStats,
    pub kcl: FamilyStats,
}

impl ViolationReport {
    pub fn max_violation(&self) -> f64 {
        [
            self.voltage.max,
            self.angle.max,
            self.generator.max,
            self.thermal.max,
            self.kcl.max,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }

    /// Mean violation of the set-point bound families (voltage + generator),
    /// the "Bound Vio" column of the comparison tables.
    pub fn bound_mean(&self) -> f64 {
        0.5 * (self.voltage.mean + self.generator.mean)
    }
}

pub fn constraint_violations(
    net: &PowerNetwork,
    op: &OperatingPoint,
    loads: &LoadVector,
) -> ViolationReport {
    let fv = family_violations(net, op, loads);
    ViolationReport {
        voltage: FamilyStats::from_values(&fv.voltage),
        angle: FamilyStats::from_values(&fv.angle),
        generator: FamilyStats::from_values(&fv.generator),
        thermal: FamilyStats::from_values(&fv.thermal),
        kcl: FamilyStats::from_values(&fv.kcl),
    }
}

/// Real power lost in the network (lines + shunts) at an operating point.
pub fn total_losses(net: &PowerNetwork, op: &OperatingPoint) -> f64 {
    let line: f64 = (0..net.n_branches())
        .map(|k| {
            branch_flow(net, op, k, Direction::Forward).re
                + branch_flow(net, op, k, Direction::Reverse).re
        })
        .sum();
    let shunt: f64 = net
        .buses
        .iter()
        .zip(&op.vm)
        .map(|(b, &v)| shunt_power(b, v).re)
        .sum();
    line + shunt
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line_stamps(r: f64, x: f64, charging: f64) -> (Complex64, Complex64, Complex64, Complex64) {
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(r, x);
        let half = Complex64::new(0.0, charging / 2.0);
        (ys + half, -ys, -ys, ys + half)
    }

    fn two_bus_net(r: f64, x: f64, charging: f64) -> PowerNetwork {
        let (y_ff, y_ft, y_tf, y_tt) = line_stamps(r, x, charging);
        PowerNetwork {
            id: "two-bus".into(),
            base_mva: 100.0,
            buses: vec![
                Bus {
                    original_id: 1,
                    v_min: 0.9,
                    v_max: 1.1,
                    shunt: Complex64::new(0.0, 0.0),
                    demand: Complex64::new(0.0, 0.0),
                },
                Bus {
                    original_id: 2,
                    v_min: 0.9,
                    v_max: 1.1,
                    shunt: Complex64::new(0.0, 0.0),
                    demand: Complex64::new(0.5, 0.0),
                },
            ],
            generators: vec![Generator {
                bus: 0,
                s_min: Complex64::new(0.0, -1.0),
                s_max: Complex64::new(2.0, 1.0),
                cost: CostCurve { c2: 0.0, c1: 1.0, c0: 0.0 },
            }],
            branches: vec![Branch {
                from: 0,
                to: 1,
                resistance: r,
                reactance: x,
                charging,
                tap: 1.0,
                shift_deg: 0.0,
                ang_min_deg: -360.0,
                ang_max_deg: 360.0,
                y_ff,
                y_ft,
                y_tf,
                y_tt,
                s_max: Some(2.0),
                angle_max: std::f64::consts::FRAC_PI_2,
            }],
            slack: 0,
        }
    }

    #[test]
    fn flow_zero_for_equal_voltages() {
        let net = two_bus_net(0.01, 0.1, 0.0);
        let op = OperatingPoint {
            vm: vec![1.02, 1.02],
            va: vec![0.3, 0.3],
            pg: vec![0.0],
            qg: vec![0.0],
        };
        let s = branch_flow(&net, &op, 0, Direction::Forward);
        assert_relative_eq!(s.re, 0.0, epsilon = 1e-14);
        assert_relative_eq!(s.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn flow_matches_hand_complex_arithmetic() {
        // |V| = 1 on both ends, θ1 − θ2 = 0.1, Y = 1/(0.01 + j0.1):
        // S = Y* (1 − e^{j0.1}) evaluated by hand with complex ops.
        let net = two_bus_net(0.01, 0.1, 0.0);
        let op = OperatingPoint {
            vm: vec![1.0, 1.0],
            va: vec![0.1, 0.0],
            pg: vec![0.0],
            qg: vec![0.0],
        };
        let y = Complex64::new(1.0, 0.0) / Complex64::new(0.01, 0.1);
        let expected = y.conj() * (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, 0.1));
        let s = branch_flow(&net, &op, 0, Direction::Forward);
        assert_relative_eq!(s.re, expected.re, epsilon = 1e-12);
        assert_relative_eq!(s.im, expected.im, epsilon = 1e-12);
    }

    #[test]
    fn flow_linear_in_admittance() {
        let mut net = two_bus_net(0.01, 0.1, 0.0);
        let op = OperatingPoint {
            vm: vec![1.05, 0.98],
            va: vec![0.07, -0.02],
            pg: vec![0.0],
            qg: vec![0.0],
        };
        let s1 = branch_flow(&net, &op, 0, Direction::Forward);
        let br = &mut net.branches[0];
        br.y_ff *= 2.0;
        br.y_ft *= 2.0;
        br.y_tf *= 2.0;
        br.y_tt *= 2.0;
        let s2 = branch_flow(&net, &op, 0, Direction::Forward);
        assert_relative_eq!(s2.re, 2.0 * s1.re, epsilon = 1e-12);
        assert_relative_eq!(s2.im, 2.0 * s1.im, epsilon = 1e-12);
    }

    #[test]
    fn arc_gradients_match_finite_differences() {
        let a = Complex64::new(1.3, -4.2);
        let b = Complex64::new(-1.1, 4.0);
        let x0 = [1.03, 0.97, 0.12, -0.05];
        let f = arc_flow_grad(a, b, x0[0], x0[1], x0[2], x0[3]);
        let h = arc_flow_hess(a, b, x0[0], x0[1], x0[2], x0[3]);
        let eps = 1e-6;
        for i in 0..4 {
            let mut up = x0;
            let mut dn = x0;
            up[i] += eps;
            dn[i] -= eps;
            let su = arc_flow_value(a, b, up[0], up[1], up[2], up[3]);
            let sd = arc_flow_value(a, b, dn[0], dn[1], dn[2], dn[3]);
            assert_relative_eq!(f.dp[i], (su.re - sd.re) / (2.0 * eps), epsilon = 1e-6);
            assert_relative_eq!(f.dq[i], (su.im - sd.im) / (2.0 * eps), epsilon = 1e-6);
            let gu = arc_flow_grad(a, b, up[0], up[1], up[2], up[3]);
            let gd = arc_flow_grad(a, b, dn[0], dn[1], dn[2], dn[3]);
            for j in 0..4 {
                assert_relative_eq!(
                    h.hp[i][j],
                    (gu.dp[j] - gd.dp[j]) / (2.0 * eps),
                    epsilon = 1e-5
                );
                assert_relative_eq!(
                    h.hq[i][j],
                    (gu.dq[j] - gd.dq[j]) / (2.0 * eps),
                    epsilon = 1e-5
                );
            }
        }
    }

    #[test]
    fn kcl_residual_isolated_bus_zero() {
        let mut net = two_bus_net(0.01, 0.1, 0.0);
        net.buses.push(Bus {
            original_id: 3,
            v_min: 0.9,
            v_max: 1.1,
            shunt: Complex64::new(0.0, 0.0),
            demand: Complex64::new(0.0, 0.0),
        });
        let op = OperatingPoint {
            vm: vec![1.0, 1.0, 1.0],
            va: vec![0.0, 0.0, 0.0],
            pg: vec![0.0],
            qg: vec![0.0],
        };
        let loads = LoadVector::zeros(3);
        let res = kcl_residual(&net, &op, &loads);
        assert_eq!(res[2], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn kcl_residual_additive_in_dispatch() {
        let net = two_bus_net(0.01, 0.1, 0.02);
        let loads = LoadVector::nominal(&net);
        let mut op = OperatingPoint {
            vm: vec![1.04, 0.99],
            va: vec![0.0, -0.06],
            pg: vec![0.5],
            qg: vec![0.1],
        };
        let base = kcl_residual(&net, &op, &loads);
        op.pg[0] += 1e-3;
        let bumped = kcl_residual(&net, &op, &loads);
        assert_relative_eq!(bumped[0].re - base[0].re, 1e-3, epsilon = 1e-12);
        assert_relative_eq!(bumped[0].im, base[0].im, epsilon = 1e-15);
    }

    #[test]
    fn dispatch_cost_hand_values() {
        let mut net = two_bus_net(0.01, 0.1, 0.0);
        net.generators[0].cost = CostCurve { c2: 1.0, c1: 2.0, c0: 3.0 };
        assert_relative_eq!(dispatch_cost(&net, &[2.0]), 11.0);
        assert_relative_eq!(dispatch_cost(&net, &[0.0]), 3.0);
    }

    #[test]
    fn voltage_violation_mean_scales_with_bus_count() {
        let net = two_bus_net(0.01, 0.1, 0.0);
        let loads = LoadVector::nominal(&net);
        let op = OperatingPoint {
            vm: vec![net.buses[0].v_max + 0.01, 1.0],
            va: vec![0.0, 0.0],
            pg: vec![0.5],
            qg: vec![0.0],
        };
        let report = constraint_violations(&net, &op, &loads);
        assert_relative_eq!(report.voltage.mean, 0.01 / 2.0, epsilon = 1e-14);
        assert_relative_eq!(report.voltage.max, 0.01, epsilon = 1e-14);
    }

    #[test]
    fn energy_bookkeeping_identity() {
        // Σ Re(residual) = Σ pg − Σ Re(S^d) − losses for arbitrary states.
        use rand::{Rng, SeedableRng};
        let net = two_bus_net(0.03, 0.2, 0.04);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let op = OperatingPoint {
                vm: vec![rng.gen_range(0.9..1.1), rng.gen_range(0.9..1.1)],
                va: vec![0.0, rng.gen_range(-0.3..0.3)],
                pg: vec![rng.gen_range(0.0..2.0)],
                qg: vec![rng.gen_range(-1.0..1.0)],
            };
            let loads = LoadVector::nominal(&net);
            let lhs: f64 = kcl_residual(&net, &op, &loads).iter().map(|r| r.re).sum();
            let rhs = op.pg.iter().sum::<f64>()
                - loads.sd.iter().map(|s| s.re).sum::<f64>()
                - total_losses(&net, &op);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn flow_magnitude_invariant_under_global_angle_shift() {
        let net = two_bus_net(0.01, 0.1, 0.02);
        let op = OperatingPoint {
            vm: vec![1.03, 0.97],
            va: vec![0.05, -0.03],
            pg: vec![0.0],
            qg: vec![0.0],
        };
        let shifted = OperatingPoint {
            va: op.va.iter().map(|t| t + 0.7).collect(),
            ..op.clone()
        };
        for dir in [Direction::Forward, Direction::Reverse] {
            let s0 = branch_flow(&net, &op, 0, dir).norm();
            let s1 = branch_flow(&net, &shifted, 0, dir).norm();
            assert_relative_eq!(s0, s1, epsilon = 1e-12);
        }
    }
}
