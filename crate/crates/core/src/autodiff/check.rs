use serde::Serialize;

use super::tape::{Tape, Var};
use crate::error::Result;

/// Absolute error below which a coordinate always passes.
pub const GRAD_CHECK_ATOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct CoordinateCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub rtol: f64,
    pub atol: f64,
    pub loss: f64,
    pub max_rel_error: f64,
    pub passed: bool,
    /// Indices of the coordinates that failed.
    pub failures: Vec<usize>,
    pub coordinates: Vec<CoordinateCheck>,
}

/// Compare the tape gradient of `loss_fn` with central differences on every
/// coordinate.
pub fn grad_check<F>(loss_fn: F, params: &[f64], step: f64, rtol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let all: Vec<usize> = (0..params.len()).collect();
    grad_check_subset(loss_fn, params, &all, step, rtol)
}

/// As [`grad_check`], restricted to the listed coordinates.
pub fn grad_check_subset<F>(
    loss_fn: F,
    params: &[f64],
    coords: &[usize],
    step: f64,
    rtol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let (_, analytic) = super::value_and_grad(params, &loss_fn)?;
    grad_check_against(
        &analytic,
        |p| super::value(p, &loss_fn),
        params,
        coords,
        step,
        rtol,
    )
}

/// Check a supplied analytic gradient against central differences of `loss`.
pub fn grad_check_against<L>(
    analytic: &[f64],
    loss: L,
    params: &[f64],
    coords: &[usize],
    step: f64,
    rtol: f64,
) -> Result<GradCheckReport>
where
    L: Fn(&[f64]) -> Result<f64>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let base = loss(params)?;
    let mut work = params.to_vec();
    let mut coordinates = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = work[i];
        work[i] = orig + step;
        let up = loss(&work)?;
        work[i] = orig - step;
        let down = loss(&work)?;
        work[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[i];
        let abs_error = (a - numeric).abs();
        let scale = a.abs().max(numeric.abs()).max(GRAD_CHECK_ATOL / rtol);
        let rel_error = abs_error / scale;
        coordinates.push(CoordinateCheck {
            index: i,
            analytic: a,
            numeric,
            abs_error,
            rel_error,
            passed: rel_error <= rtol,
        });
    }
    let failures: Vec<usize> = coordinates
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.index)
        .collect();
    Ok(GradCheckReport {
        step,
        rtol,
        atol: GRAD_CHECK_ATOL,
        loss: base,
        max_rel_error: coordinates.iter().map(|c| c.rel_error).fold(0.0, f64::max),
        passed: failures.is_empty(),
        failures,
        coordinates,
    })
}
