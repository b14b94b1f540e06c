//! Central-difference verification of tape gradients.
//!
//! The checked quantity is the f32 backward pass; the reference is a central
//! difference of the same recorded graph re-executed in f64 (`Tape::eval_f64`),
//! so the comparison is not polluted by f32 forward rounding. Each coordinate
//! is probed at +-h/2 and +-h/4; the reported quotient uses step h/4.
//!
//! Kink handling. A kink (relu) inside the probe window biases the quotient,
//! which says nothing about the gradient under test, so such coordinates are
//! flagged and excluded from pass/fail (but kept in the report). Two
//! detectors cover the window:
//!   - slope-jump ratio: smooth curvature halves the one-sided slope jump
//!     when the step halves; a kink near the point does not;
//!   - quotient consistency: the h/2 and h/4 quotients agree to O(h^2) for
//!     smooth functions, while a kink inside the window shifts them against
//!     each other.
//! A kink farther than h/2 from the point cannot touch either quotient and
//! needs no flag.

use crate::error::{Error, Result};
use crate::tape::{Tape, VarId};
use crate::tensor::Tensor;

/// Outcome for a single input coordinate.
#[derive(Debug, Clone, Copy)]
pub struct CoordCheck {
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
    /// Slope-jump analysis marked this coordinate as non-smooth; it is
    /// excluded from pass/fail.
    pub flagged: bool,
}

/// Full report of one finite-difference check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub coords: Vec<CoordCheck>,
    /// Largest relative error over unflagged coordinates.
    pub max_rel_err: f64,
    /// Coordinate achieving `max_rel_err`, if any coordinate was unflagged.
    pub worst_coord: Option<usize>,
    pub flagged: Vec<usize>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Relative error with the guarded denominator max(|a|, |b|, 1e-8).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Checks the tape gradient of a scalar function against central differences.
///
/// `build` records the function on a fresh tape from the leaf holding `point`.
/// Gradients come from the f32 backward pass; difference quotients from f64
/// re-execution at `point +- h/2` (with `point +- h` probes for the kink
/// analysis).
pub fn finite_diff_check<F>(build: F, point: &Tensor, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: FnOnce(&mut Tape, VarId) -> Result<VarId>,
{
    point.check_finite("finite_diff_check point")?;
    if !(h > 0.0) {
        return Err(Error::parameter(format!("step h must be > 0, got {h}")));
    }
    let mut tape = Tape::new();
    let leaf = tape.leaf(point.clone().with_grad());
    let loss = build(&mut tape, leaf)?;
    if !tape.value(loss).is_scalar() {
        return Err(Error::dimension(format!(
            "finite_diff_check: function output must be scalar, got {:?}",
            tape.value(loss).shape()
        )));
    }
    tape.backward(loss)?;
    let analytic: Vec<f64> = tape
        .grad(leaf)
        .expect("leaf requires grad")
        .iter()
        .map(|&v| f64::from(v))
        .collect();

    let base: Vec<f64> = point.data().iter().map(|&v| f64::from(v)).collect();
    let f_mid = tape.eval_f64(loss, leaf, &base)?;

    let mut coords = Vec::with_capacity(base.len());
    let mut flagged = Vec::new();
    let mut max_rel = 0.0f64;
    let mut worst = None;
    let mut probe = base.clone();
    for i in 0..base.len() {
        let eval_at = |x: f64, probe: &mut Vec<f64>| -> Result<f64> {
            probe[i] = x;
            let v = tape.eval_f64(loss, leaf, probe)?;
            probe[i] = base[i];
            Ok(v)
        };
        let f_p2 = eval_at(base[i] + h / 2.0, &mut probe)?;
        let f_m2 = eval_at(base[i] - h / 2.0, &mut probe)?;
        let f_p4 = eval_at(base[i] + h / 4.0, &mut probe)?;
        let f_m4 = eval_at(base[i] - h / 4.0, &mut probe)?;

        let central_half = (f_p2 - f_m2) / h;
        let central_quarter = (f_p4 - f_m4) / (h / 2.0);
        let numeric = central_quarter;
        let jump_half = ((f_p2 - f_mid) / (h / 2.0) - (f_mid - f_m2) / (h / 2.0)).abs();
        let jump_quarter = ((f_p4 - f_mid) / (h / 4.0) - (f_mid - f_m4) / (h / 4.0)).abs();
        let non_finite =
            !f_p2.is_finite() || !f_m2.is_finite() || !f_p4.is_finite() || !f_m4.is_finite() || !f_mid.is_finite();
        // Smooth curvature halves the jump with the step; a kink does not.
        let kink_ratio = jump_quarter > 1e-9 && jump_quarter > 0.6 * jump_half;
        // The two quotients must agree to O(h^2) when the window is smooth.
        let scale = central_half.abs().max(central_quarter.abs()).max(1e-3);
        let kink_shift = (central_half - central_quarter).abs() > 1e-9 + 5e-5 * scale;
        let is_flagged = non_finite || kink_ratio || kink_shift;

        let re = rel_err(analytic[i], numeric);
        coords.push(CoordCheck { analytic: analytic[i], numeric, rel_err: re, flagged: is_flagged });
        if is_flagged {
            flagged.push(i);
        } else if worst.is_none() || re > max_rel {
            max_rel = re;
            worst = Some(i);
        }
    }

    let pass = max_rel <= tol;
    Ok(GradCheckReport { coords, max_rel_err: max_rel, worst_coord: worst, flagged, tolerance: tol, pass })
}
