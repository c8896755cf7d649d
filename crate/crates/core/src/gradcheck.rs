//! Finite-difference verification of law gradients.
//!
//! The oracle is deliberately independent of the reverse-mode path: it
//! probes `eval_forward` with central differences of the scalar objective
//! ⟨cotangent, output⟩ entry by entry and compares against `eval_vjp`.
//!
//! Step sizes scale with the entry magnitude (h = 1e-6·(|x|+1)). The
//! comparison uses the spec'd relative tolerance plus an absolute floor
//! proportional to the objective magnitude, which bounds the cancellation
//! noise inherent to central differences in 64-bit.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dsl::{eval_forward, eval_vjp, LawProgram};
use crate::linalg::Mat;

pub const DEFAULT_RTOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug)]
pub struct PointReport {
    pub max_rel_err: f64,
    pub checked_components: usize,
}

#[derive(Clone, Debug)]
pub enum CheckOutcome {
    /// All sampled points passed; carries the worst observed error.
    Pass { max_rel_err: f64, points: usize },
    /// A component disagreed with finite differences.
    Mismatch { point: usize, component: String, ad: f64, fd: f64, rel_err: f64 },
    /// No evaluable point was found (the law has no finite region near I).
    Unevaluable,
}

/// Central-difference objective: φ = ⟨cotangent, law(F, θ)⟩.
fn objective(law: &LawProgram, f: &Mat, theta: &[f64], cot: &Mat) -> Option<f64> {
    eval_forward(law, f, theta).ok().map(|out| cot.inner(&out))
}

fn rel_err(ad: f64, fd: f64, atol: f64) -> f64 {
    let diff = (ad - fd).abs();
    let scale = ad.abs().max(fd.abs());
    if diff <= atol {
        0.0
    } else {
        diff / scale.max(1e-300)
    }
}

/// Checks one law at `n_points` sampled evaluation points near F = I.
///
/// Points where the forward pass (or any probe of it) leaves the law's
/// domain are resampled; a law with no evaluable points is reported as
/// `Unevaluable` rather than passed.
pub fn check_law(law: &LawProgram, dim: usize, n_points: usize, seed: u64, rtol: f64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let defaults = law.param_defaults();
    let mut max_rel = 0.0f64;
    let mut done = 0usize;
    let mut attempts = 0usize;

    while done < n_points {
        attempts += 1;
        if attempts > 60 * n_points {
            return if done == 0 { CheckOutcome::Unevaluable } else { CheckOutcome::Pass { max_rel_err: max_rel, points: done } };
        }
        let mut f = Mat::identity(dim);
        for i in 0..dim {
            for j in 0..dim {
                f.set(i, j, f.get(i, j) + rng.gen_range(-0.35..0.35));
            }
        }
        let theta: Vec<f64> = defaults.iter().map(|d| d + rng.gen_range(-0.25..0.25)).collect();
        let mut cot = Mat::zero(dim);
        for k in 0..dim * dim {
            cot.m[k] = rng.gen_range(-1.0..1.0);
        }

        let phi = match objective(law, &f, &theta, &cot) {
            Some(v) if v.is_finite() => v,
            _ => continue,
        };
        let Ok((df, dtheta)) = eval_vjp(law, &f, &theta, &cot) else {
            continue;
        };
        // Noise floor for the central differences: cancellation leaves
        // roughly eps·|φ|/h of absolute error on each probe.
        let atol = 1e-9 + 1e-9 * phi.abs();

        let mut probe_failed = false;
        let mut worst = 0.0f64;
        let mut mismatch: Option<(String, f64, f64, f64)> = None;

        'components: for i in 0..dim {
            for j in 0..dim {
                let h = 1e-6 * (f.get(i, j).abs() + 1.0);
                let mut fp = f;
                let mut fm = f;
                fp.set(i, j, f.get(i, j) + h);
                fm.set(i, j, f.get(i, j) - h);
                let (Some(pp), Some(pm)) = (objective(law, &fp, &theta, &cot), objective(law, &fm, &theta, &cot)) else {
                    probe_failed = true;
                    break 'components;
                };
                let fd = (pp - pm) / (2.0 * h);
                let e = rel_err(df.get(i, j), fd, atol);
                worst = worst.max(e);
                if e >= rtol && mismatch.is_none() {
                    mismatch = Some((format!("dF[{i}][{j}]"), df.get(i, j), fd, e));
                }
            }
        }
        if !probe_failed {
            for (pi, d) in dtheta.iter().enumerate() {
                let h = 1e-6 * (theta[pi].abs() + 1.0);
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[pi] += h;
                tm[pi] -= h;
                let (Some(pp), Some(pm)) = (objective(law, &f, &tp, &cot), objective(law, &f, &tm, &cot)) else {
                    probe_failed = true;
                    break;
                };
                let fd = (pp - pm) / (2.0 * h);
                let e = rel_err(*d, fd, atol);
                worst = worst.max(e);
                if e >= rtol && mismatch.is_none() {
                    mismatch = Some((format!("dtheta[{pi}]"), *d, fd, e));
                }
            }
        }
        // Points where a probe left the law's domain carry no information;
        // resample. A clean point that disagrees is a failure.
        if probe_failed {
            continue;
        }
        if let Some((component, ad, fd, e)) = mismatch {
            return CheckOutcome::Mismatch { point: done, component, ad, fd, rel_err: e };
        }

        max_rel = max_rel.max(worst);
        done += 1;
    }
    CheckOutcome::Pass { max_rel_err: max_rel, points: done }
}
