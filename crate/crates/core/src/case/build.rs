use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use super::{CaseError, RawCase};
use crate::network::{Branch, Bus, CostCurve, Generator, PowerNetwork};

// MATPOWER version-2 column indices.
const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const PD: usize = 2;
const QD: usize = 3;
const GS: usize = 4;
const BS: usize = 5;
const VMAX: usize = 11;
const VMIN: usize = 12;
const BUS_COLS: usize = 13;

const GEN_BUS: usize = 0;
const QMAX: usize = 3;
const QMIN: usize = 4;
const GEN_STATUS: usize = 7;
const PMAX: usize = 8;
const PMIN: usize = 9;
const GEN_COLS: usize = 10;

const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_R: usize = 2;
const BR_X: usize = 3;
const BR_B: usize = 4;
const RATE_A: usize = 5;
const TAP: usize = 8;
const SHIFT: usize = 9;
const BR_STATUS: usize = 10;
const ANGMIN: usize = 11;
const ANGMAX: usize = 12;
const BRANCH_COLS: usize = 11;

const COST_MODEL: usize = 0;
const NCOST: usize = 3;
const COST_COLS: usize = 4;

/// Normalize a validated raw case into a per-unit [`PowerNetwork`].
///
/// Bus ids are remapped to dense indices in file order; the original ids are
/// kept on each bus. All power quantities are divided by `baseMVA` and cost
/// coefficients rescaled to $/pu^k.
pub fn build_network(raw: &RawCase) -> Result<PowerNetwork, CaseError> {
    if !(raw.base_mva > 0.0) {
        return Err(CaseError::NonPositiveBase(raw.base_mva));
    }
    let base = raw.base_mva;

    check_arity("bus", &raw.bus_rows, BUS_COLS)?;
    check_arity("gen", &raw.gen_rows, GEN_COLS)?;
    check_arity("branch", &raw.branch_rows, BRANCH_COLS)?;
    check_arity("gencost", &raw.gencost_rows, COST_COLS)?;
    warn_extra_columns("bus", &raw.bus_rows, BUS_COLS);
    warn_extra_columns("branch", &raw.branch_rows, ANGMAX + 1);

    let mut index_of: HashMap<usize, usize> = HashMap::new();
    let mut buses = Vec::with_capacity(raw.bus_rows.len());
    let mut slack_ids = Vec::new();
    for row in &raw.bus_rows {
        let id = row[BUS_I] as usize;
        let idx = buses.len();
        if index_of.insert(id, idx).is_some() {
            return Err(CaseError::DuplicateBusId(id));
        }
        let (v_min, v_max) = (row[VMIN], row[VMAX]);
        if v_min > v_max {
            return Err(CaseError::InvalidVoltageBounds { bus: id, v_min, v_max });
        }
        if row[BUS_TYPE] as usize == 3 {
            slack_ids.push(id);
        }
        buses.push(Bus {
            original_id: id,
            v_min,
            v_max,
            shunt: Complex64::new(row[GS] / base, row[BS] / base),
            demand: Complex64::new(row[PD] / base, row[QD] / base),
        });
    }
    let slack = match slack_ids.as_slice() {
        [] => return Err(CaseError::NoSlackBus),
        [one] => index_of[one],
        _ => return Err(CaseError::MultipleSlackBuses(slack_ids)),
    };

    if raw.gencost_rows.len() < raw.gen_rows.len() {
        return Err(CaseError::MalformedMatrix {
            section: "gencost".into(),
            row: raw.gencost_rows.len(),
            got: raw.gencost_rows.len(),
            expected: raw.gen_rows.len(),
        });
    }
    if raw.gencost_rows.len() > raw.gen_rows.len() {
        // MATPOWER allows a second block of reactive-power costs.
        log::warn!(
            "gencost has {} rows for {} generators; extra rows ignored",
            raw.gencost_rows.len(),
            raw.gen_rows.len()
        );
    }

    let mut generators = Vec::new();
    for (g, row) in raw.gen_rows.iter().enumerate() {
        if row[GEN_STATUS] <= 0.0 {
            continue;
        }
        let bus_id = row[GEN_BUS] as usize;
        let bus = *index_of.get(&bus_id).ok_or(CaseError::UnknownBusId {
            section: "gen".into(),
            row: g,
            bus: bus_id,
        })?;
        let s_min = Complex64::new(row[PMIN] / base, row[QMIN] / base);
        let s_max = Complex64::new(row[PMAX] / base, row[QMAX] / base);
        if s_min.re > s_max.re {
            return Err(CaseError::InvalidGenBounds {
                gen: g,
                which: "P",
                min: s_min.re,
                max: s_max.re,
            });
        }
        if s_min.im > s_max.im {
            return Err(CaseError::InvalidGenBounds {
                gen: g,
                which: "Q",
                min: s_min.im,
                max: s_max.im,
            });
        }
        let cost = parse_cost(g, &raw.gencost_rows[g], base)?;
        generators.push(Generator { bus, s_min, s_max, cost });
    }

    let mut branches = Vec::new();
    for (k, row) in raw.branch_rows.iter().enumerate() {
        if row[BR_STATUS] == 0.0 {
            continue;
        }
        let from_id = row[F_BUS] as usize;
        let to_id = row[T_BUS] as usize;
        let from = *index_of.get(&from_id).ok_or(CaseError::UnknownBusId {
            section: "branch".into(),
            row: k,
            bus: from_id,
        })?;
        let to = *index_of.get(&to_id).ok_or(CaseError::UnknownBusId {
            section: "branch".into(),
            row: k,
            bus: to_id,
        })?;
        let (r, x) = (row[BR_R], row[BR_X]);
        if r == 0.0 && x == 0.0 {
            return Err(CaseError::ZeroImpedanceBranch {
                row: k,
                from: from_id,
                to: to_id,
            });
        }
        let charging = row[BR_B];
        let tap = if row[TAP] == 0.0 { 1.0 } else { row[TAP] };
        let shift_deg = row[SHIFT];
        let (ang_min_deg, ang_max_deg) = if row.len() > ANGMAX {
            (row[ANGMIN], row[ANGMAX])
        } else {
            (-360.0, 360.0)
        };
        let s_max = if row[RATE_A] > 0.0 {
            Some(row[RATE_A] / base)
        } else {
            None
        };
        let mut br = Branch {
            from,
            to,
            resistance: r,
            reactance: x,
            charging,
            tap,
            shift_deg,
            ang_min_deg,
            ang_max_deg,
            y_ff: Complex64::new(0.0, 0.0),
            y_ft: Complex64::new(0.0, 0.0),
            y_tf: Complex64::new(0.0, 0.0),
            y_tt: Complex64::new(0.0, 0.0),
            s_max,
            angle_max: 0.0,
        };
        compute_branch_derived(&mut br);
        branches.push(br);
    }

    Ok(PowerNetwork {
        id: raw.name.clone(),
        base_mva: base,
        buses,
        generators,
        branches,
        slack,
    })
}

/// Fill in the admittance stamps and the symmetric angle window from the raw
/// branch parameters. Deterministic, so parse→write→parse reproduces them.
fn compute_branch_derived(br: &mut Branch) {
    let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.resistance, br.reactance);
    let half_charge = Complex64::new(0.0, br.charging / 2.0);
    let t = Complex64::from_polar(br.tap, br.shift_deg.to_radians());
    br.y_ff = (ys + half_charge) / (t * t.conj());
    br.y_ft = -ys / t.conj();
    br.y_tf = -ys / t;
    br.y_tt = ys + half_charge;
    br.angle_max = symmetric_angle_limit(br.ang_min_deg, br.ang_max_deg);
}

/// MATPOWER marks an unconstrained window with zeros or ±360. Otherwise use
/// the tighter side, clamped into (0, π/2].
fn symmetric_angle_limit(ang_min_deg: f64, ang_max_deg: f64) -> f64 {
    let unconstrained = (ang_min_deg == 0.0 && ang_max_deg == 0.0)
        || ang_min_deg <= -360.0
        || ang_max_deg >= 360.0;
    if unconstrained {
        return FRAC_PI_2;
    }
    let tighter = (-ang_min_deg).min(ang_max_deg).to_radians();
    if tighter <= 0.0 {
        log::warn!("degenerate angle window [{ang_min_deg}, {ang_max_deg}] treated as unconstrained");
        FRAC_PI_2
    } else {
        tighter.min(FRAC_PI_2)
    }
}

fn parse_cost(gen: usize, row: &[f64], base: f64) -> Result<CostCurve, CaseError> {
    let model = row[COST_MODEL] as usize;
    if model != 2 {
        return Err(CaseError::UnsupportedCost {
            gen,
            reason: format!("cost model {model}; only polynomial (2) is supported"),
        });
    }
    let ncost = row[NCOST] as usize;
    let coeffs = &row[COST_COLS..];
    if coeffs.len() < ncost {
        return Err(CaseError::MalformedMatrix {
            section: "gencost".into(),
            row: gen,
            got: row.len(),
            expected: COST_COLS + ncost,
        });
    }
    // Coefficients are ordered highest degree first.
    if ncost > 3 {
        let high = &coeffs[..ncost - 3];
        if high.iter().any(|&c| c != 0.0) {
            return Err(CaseError::UnsupportedCost {
                gen,
                reason: format!("polynomial degree {} > 2 with nonzero coefficients", ncost - 1),
            });
        }
        log::warn!("generator {gen}: zero high-order cost coefficients ignored");
    }
    let tail = &coeffs[ncost.saturating_sub(3)..ncost];
    let (c2, c1, c0) = match tail {
        [c2, c1, c0] => (*c2, *c1, *c0),
        [c1, c0] => (0.0, *c1, *c0),
        [c0] => (0.0, 0.0, *c0),
        _ => (0.0, 0.0, 0.0),
    };
    Ok(CostCurve {
        c2: c2 * base * base,
        c1: c1 * base,
        c0,
    })
}

fn check_arity(section: &str, rows: &[Vec<f64>], min_cols: usize) -> Result<(), CaseError> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() < min_cols {
            return Err(CaseError::MalformedMatrix {
                section: section.into(),
                row: i,
                got: row.len(),
                expected: min_cols,
            });
        }
    }
    Ok(())
}

fn warn_extra_columns(section: &str, rows: &[Vec<f64>], known: usize) {
    if let Some(row) = rows.first() {
        if row.len() > known {
            log::warn!(
                "section `{section}` has {} columns, only the first {known} are used",
                row.len()
            );
        }
    }
}
