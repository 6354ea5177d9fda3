//! Seeded numerical experiments on the OS-loss: a finite-difference gradient
//! check and box-fitting trials from perturbed starts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{rbox_iou, RBox};
use crate::losses::{fit_rbox, os_loss, os_loss_grad, OsLossParams};

/// Absolute floor and relative tolerance of the gradient check.
pub const GRAD_ABS_TOL: f64 = 1e-4;
pub const GRAD_REL_TOL: f64 = 0.02;
/// Reference difference step, relative to each parameter's scale.
const REFERENCE_STEP: f64 = 1e-5;

/// Full central differences of [`os_loss`] over `(cx, cy, w, h, theta)`.
pub fn reference_gradient(pred: &RBox, gt: &RBox, params: &OsLossParams) -> [f64; 5] {
    let base = pred.to_array();
    let scale = [1.0, 1.0, pred.w.max(1.0), pred.h.max(1.0), 1.0];
    let mut g = [0.0; 5];
    for i in 0..5 {
        let h = REFERENCE_STEP * scale[i];
        let at = |delta: f64| {
            let mut a = base;
            a[i] += delta;
            let b = RBox::new(a[0], a[1], a[2], a[3], a[4]).unwrap_or(*pred);
            os_loss(&b, gt, params)
        };
        g[i] = (at(h) - at(-h)) / (2.0 * h);
    }
    g
}

/// A random `(pred, gt)` pair away from the loss's non-smooth points:
/// centers apart, angles apart, boxes overlapping.
pub fn smooth_pair(rng: &mut ChaCha8Rng) -> (RBox, RBox) {
    loop {
        let gt = RBox::new(
            rng.random_range(90.0..110.0),
            rng.random_range(90.0..110.0),
            rng.random_range(5.0..60.0),
            rng.random_range(5.0..60.0),
            rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2),
        );
        let Ok(gt) = gt else { continue };
        let pred = RBox::new(
            gt.cx + rng.random_range(-15.0..15.0),
            gt.cy + rng.random_range(-15.0..15.0),
            gt.w * rng.random_range(0.6..1.4),
            gt.h * rng.random_range(0.6..1.4),
            gt.theta + rng.random_range(-1.2..1.2),
        );
        let Ok(pred) = pred else { continue };
        let sin = (pred.theta - gt.theta).sin().abs();
        let d = (pred.cx - gt.cx).hypot(pred.cy - gt.cy);
        if sin > 0.05 && d > 0.5 && rbox_iou(&pred, &gt) > 0.05 {
            return (pred, gt);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckCase {
    pub index: usize,
    pub pred: RBox,
    pub gt: RBox,
    pub analytic: [f64; 5],
    pub reference: [f64; 5],
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub tuples: usize,
    pub passed: usize,
    /// Per component: largest `|analytic - reference|`.
    pub max_abs_err: [f64; 5],
    /// Per component: largest `|analytic - reference| / |reference|` over
    /// entries with `|reference| > abs_tol`.
    pub max_rel_err: [f64; 5],
    pub failures: Vec<GradcheckCase>,
}

fn within(a: f64, r: f64) -> bool {
    (a - r).abs() <= GRAD_ABS_TOL.max(GRAD_REL_TOL * r.abs())
}

pub fn gradcheck(count: usize, seed: u64, params: &OsLossParams) -> Result<GradcheckReport> {
    if count == 0 {
        return Err(invalid("gradient check needs at least one tuple"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report =
        GradcheckReport { tuples: count, passed: 0, max_abs_err: [0.0; 5], max_rel_err: [0.0; 5], failures: Vec::new() };
    for index in 0..count {
        let (pred, gt) = smooth_pair(&mut rng);
        let analytic = os_loss_grad(&pred, &gt, params).grad;
        let reference = reference_gradient(&pred, &gt, params);
        let mut ok = true;
        for i in 0..5 {
            let err = (analytic[i] - reference[i]).abs();
            report.max_abs_err[i] = report.max_abs_err[i].max(err);
            if reference[i].abs() > GRAD_ABS_TOL {
                report.max_rel_err[i] = report.max_rel_err[i].max(err / reference[i].abs());
            }
            ok &= within(analytic[i], reference[i]);
        }
        if ok {
            report.passed += 1;
        } else {
            report.failures.push(GradcheckCase { index, pred, gt, analytic, reference, ok });
        }
    }
    Ok(report)
}

/// A start near `gt`: center moved up to `max_shift` px, angle turned up to
/// `max_turn_deg`, sides scaled by up to 25%, redrawn until IoU > `min_iou`.
pub fn perturbed_start(
    rng: &mut ChaCha8Rng,
    gt: &RBox,
    max_shift: f64,
    max_turn_deg: f64,
    min_iou: f64,
) -> Result<RBox> {
    for _ in 0..10_000 {
        let rho = rng.random_range(0.0..=max_shift);
        let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let turn = rng.random_range(-max_turn_deg..=max_turn_deg).to_radians();
        let b = RBox::new(
            gt.cx + rho * phi.cos(),
            gt.cy + rho * phi.sin(),
            gt.w * rng.random_range(0.8..1.25),
            gt.h * rng.random_range(0.8..1.25),
            gt.theta + turn,
        )?;
        if rbox_iou(&b, gt) > min_iou {
            return Ok(b);
        }
    }
    Err(invalid(format!("no start with IoU > {min_iou} found near {gt:?}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub init: RBox,
    pub gt: RBox,
    pub fitted: RBox,
    pub steps: usize,
    pub center_error: f64,
    pub sin_angle_error: f64,
    pub converged: bool,
}

/// Center error below 1 px and `|sin(dtheta)|` below 0.02.
pub fn fit_trial(init: &RBox, gt: &RBox, params: &OsLossParams, lr: f64, steps: usize) -> Result<FitOutcome> {
    let t = fit_rbox(init, gt, params, lr, steps)?;
    let fitted = t.last().rbox;
    let center_error = (fitted.cx - gt.cx).hypot(fitted.cy - gt.cy);
    let sin_angle_error = (fitted.theta - gt.theta).sin().abs();
    Ok(FitOutcome {
        init: *init,
        gt: *gt,
        fitted,
        steps: t.steps.len() - 1,
        center_error,
        sin_angle_error,
        converged: t.diverged.is_none() && center_error < 1.0 && sin_angle_error < 0.02,
    })
}
