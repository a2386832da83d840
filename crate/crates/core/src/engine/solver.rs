//! Max-Min fair rate allocation by progressive filling.
//!
//! All unfrozen activities share a common fill level. An activity with
//! weight `w` on resource `r` and scaling factor `s` consumes `w * rate / s`
//! of that resource. The level rises until a resource saturates or an
//! activity reaches its private rate bound; the affected activities freeze
//! and filling resumes on the residual capacities.

use super::{EngineError, Resource, ResourceId};

/// Relative slack used to decide which constraints are tight at a level.
const TIE_EPS: f64 = 1e-12;

/// Solver-facing view of an activity.
#[derive(Clone, Debug)]
pub struct Demand<'a> {
    pub footprint: &'a [(ResourceId, f64)],
    pub scaling_factor: f64,
    /// Private rate ceiling (a virtual resource owned by this activity).
    pub bound: Option<f64>,
}

/// Computes the lexicographic Max-Min fair allocation.
///
/// Returns one rate per demand, in input order.
pub fn solve_maxmin(resources: &[Resource], demands: &[Demand<'_>]) -> Result<Vec<f64>, EngineError> {
    let n_res = resources.len();
    let mut residual: Vec<f64> = resources.iter().map(|r| r.capacity).collect();
    let mut load = vec![0.0_f64; n_res];
    let mut users: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_res];

    for (i, d) in demands.iter().enumerate() {
        if d.footprint.is_empty() {
            return Err(EngineError::EmptyFootprint(i));
        }
        if !(d.scaling_factor > 0.0) {
            return Err(EngineError::InvalidActivity(format!(
                "scaling factor must be positive, got {}",
                d.scaling_factor
            )));
        }
        for &(rid, w) in d.footprint {
            if rid.0 >= n_res {
                return Err(EngineError::UnknownResource(rid));
            }
            if !(w > 0.0) {
                return Err(EngineError::InvalidActivity(format!(
                    "footprint weight must be positive, got {w}"
                )));
            }
            let coeff = w / d.scaling_factor;
            load[rid.0] += coeff;
            users[rid.0].push((i, coeff));
        }
    }

    let mut rates = vec![0.0_f64; demands.len()];
    let mut frozen = vec![false; demands.len()];
    let mut remaining = demands.len();

    // Bounded activities in ascending bound order; consumed with a cursor.
    let mut bounded: Vec<(f64, usize)> = demands
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.bound.map(|b| (b, i)))
        .collect();
    bounded.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut cursor = 0;

    let mut saturated = vec![false; n_res];
    let mut to_freeze: Vec<usize> = Vec::new();

    while remaining > 0 {
        let mut level = f64::INFINITY;
        for r in 0..n_res {
            if !saturated[r] && load[r] > 0.0 {
                level = level.min(residual[r].max(0.0) / load[r]);
            }
        }
        while cursor < bounded.len() && frozen[bounded[cursor].1] {
            cursor += 1;
        }
        if cursor < bounded.len() {
            level = level.min(bounded[cursor].0);
        }
        debug_assert!(level.is_finite());

        let cutoff = level * (1.0 + TIE_EPS);
        to_freeze.clear();
        for r in 0..n_res {
            if !saturated[r] && load[r] > 0.0 && residual[r].max(0.0) / load[r] <= cutoff {
                saturated[r] = true;
                to_freeze.extend(users[r].iter().map(|&(i, _)| i).filter(|&i| !frozen[i]));
            }
        }
        let mut bound_frozen = Vec::new();
        while cursor < bounded.len() {
            let (b, i) = bounded[cursor];
            if frozen[i] {
                cursor += 1;
                continue;
            }
            if b > cutoff {
                break;
            }
            bound_frozen.push((i, b));
            cursor += 1;
        }

        for &i in &to_freeze {
            if frozen[i] {
                continue;
            }
            let rate = match demands[i].bound {
                Some(b) => level.min(b),
                None => level,
            };
            freeze(i, rate, demands, &mut rates, &mut frozen, &mut residual, &mut load);
            remaining -= 1;
        }
        for (i, b) in bound_frozen {
            if frozen[i] {
                continue;
            }
            freeze(i, b, demands, &mut rates, &mut frozen, &mut residual, &mut load);
            remaining -= 1;
        }
    }
    Ok(rates)
}

fn freeze(
    i: usize,
    rate: f64,
    demands: &[Demand<'_>],
    rates: &mut [f64],
    frozen: &mut [bool],
    residual: &mut [f64],
    load: &mut [f64],
) {
    rates[i] = rate;
    frozen[i] = true;
    let d = &demands[i];
    for &(rid, w) in d.footprint {
        let coeff = w / d.scaling_factor;
        residual[rid.0] -= coeff * rate;
        load[rid.0] -= coeff;
        if load[rid.0] < 1e-15 {
            load[rid.0] = 0.0;
        }
    }
}

/// Per-resource consumption `Σ weight * rate / scaling_factor` for an allocation.
pub fn consumption(n_resources: usize, demands: &[Demand<'_>], rates: &[f64]) -> Vec<f64> {
    let mut used = vec![0.0; n_resources];
    for (d, &rate) in demands.iter().zip(rates) {
        for &(rid, w) in d.footprint {
            used[rid.0] += w * rate / d.scaling_factor;
        }
    }
    used
}
