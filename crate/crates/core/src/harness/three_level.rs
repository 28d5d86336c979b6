//! Closed-form versus propagated survival in the three-level model.

use std::path::Path;

use super::experiment::{io_err, HarnessError};
use super::output::write_table;
use crate::linalg::{hermitian_eig, StateVector};
use crate::numfmt::g15;
use crate::theory::{three_level_hamiltonian, three_level_survival};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeLevelRow {
    pub g: f64,
    pub t: f64,
    pub p_formula: f64,
    pub p_numeric: f64,
    pub abs_diff: f64,
}

/// Level-1 survival on `t = 0, dt, ..., t_max` for each coupling in `g_list`.
pub fn run_three_level(omega: f64, g_list: &[f64], t_max: f64, dt: f64) -> Result<Vec<ThreeLevelRow>, HarnessError> {
    let steps = (t_max / dt).round() as usize;
    let start = StateVector::basis(3, 0);
    let mut rows = Vec::with_capacity(g_list.len() * (steps + 1));
    for &g in g_list {
        let eig = hermitian_eig(&three_level_hamiltonian(omega, g)).map_err(|e| HarnessError::Protocol(e.into()))?;
        let coeffs = eig.eigenbasis_coefficients(&start);
        for k in 0..=steps {
            let t = k as f64 * dt;
            let p_numeric = eig.evolve_coefficients(&coeffs, t)[0].norm_sqr();
            let p_formula = three_level_survival(omega, g, t);
            rows.push(ThreeLevelRow { g, t, p_formula, p_numeric, abs_diff: (p_formula - p_numeric).abs() });
        }
    }
    Ok(rows)
}

pub const THREE_LEVEL_HEADER: [&str; 5] = ["g", "t", "P_formula", "P_numeric", "abs_diff"];

pub fn write_three_level(path: &Path, reproducible: bool, rows: &[ThreeLevelRow]) -> Result<(), HarnessError> {
    let table = rows.iter().map(|r| vec![g15(r.g), g15(r.t), g15(r.p_formula), g15(r.p_numeric), g15(r.abs_diff)]);
    write_table(path, reproducible, &THREE_LEVEL_HEADER, table).map_err(io_err(path))
}
