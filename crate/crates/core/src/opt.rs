//! Inner-loop continuous optimization: Adam over simulate + backprop.

use crate::mpm::{simulate, LawPair, ParticleState, SimConfig, ThetaPair, Trajectory, Validity};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptConfig {
    pub n_steps: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_clip_norm: Option<f64>,
    pub curve_checkpoints: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            n_steps: 100,
            learning_rate: 0.05,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip_norm: Some(10.0),
            curve_checkpoints: 10,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_steps == 0 {
            return Err("n_steps must be >= 1".into());
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0 < b && b < 1.0) {
                return Err(format!("{name} must be in (0, 1), got {b}"));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err("learning_rate must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, thiserror::Error)]
#[error("trajectory shape mismatch: {0}")]
pub struct ShapeMismatch(pub String);

/// Mean squared error over frames × particles × axes, m².
pub fn mse_loss(a: &Trajectory, b: &Trajectory) -> Result<f64, ShapeMismatch> {
    crate::mpm::trajectory_mse(a, b).ok_or_else(|| {
        ShapeMismatch(format!(
            "({} frames, {} particles, dim {}) vs ({} frames, {} particles, dim {})",
            a.n_frames(),
            a.n_particles,
            a.dim,
            b.n_frames(),
            b.n_particles,
            b.dim
        ))
    })
}

/// Which law slot the optimizer is fitting; the other slot stays at its
/// declared defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreeSlot {
    Elastic,
    Plastic,
}

#[derive(Clone, Debug)]
pub struct OptResult {
    /// Best-seen parameters of the free slot (not necessarily the last).
    pub theta_hat: Vec<f64>,
    pub final_loss: f64,
    /// (step, loss) at evenly spaced checkpoints plus the last evaluated step.
    pub loss_curve: Vec<(usize, f64)>,
    pub validity: Validity,
    pub best_step: usize,
}

/// Standard Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
}

impl Adam {
    pub fn new(n: usize, cfg: &OptConfig) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            lr: cfg.learning_rate,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn clip_by_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
}

/// Fits the free slot's parameters by Adam, starting from the slot law's
/// declared defaults. Failures never throw: an invalid first simulation
/// invalidates the whole result; a later invalid simulation or non-finite
/// gradient ends the run early (every subsequent step would repeat it),
/// keeping the best iterate seen so far.
pub fn optimize(
    laws: &LawPair,
    free: FreeSlot,
    sim: &SimConfig,
    opt: &OptConfig,
    initial: &ParticleState,
    target: &Trajectory,
) -> OptResult {
    assert!(opt.validate().is_ok(), "invalid OptConfig: {:?}", opt.validate());
    let mut theta = ThetaPair::defaults_of(laws);
    let free_len = match free {
        FreeSlot::Elastic => theta.elastic.len(),
        FreeSlot::Plastic => theta.plastic.len(),
    };
    let init_free = match free {
        FreeSlot::Elastic => theta.elastic.clone(),
        FreeSlot::Plastic => theta.plastic.clone(),
    };

    let mut adam = Adam::new(free_len, opt);
    let stride = (opt.n_steps / opt.curve_checkpoints.max(1)).max(1);

    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut curve: Vec<(usize, f64)> = Vec::new();

    for step in 0..opt.n_steps {
        let (traj, tape, validity) = simulate(sim, laws, &theta, initial);
        if !validity.is_valid() {
            if step == 0 {
                return OptResult {
                    theta_hat: init_free,
                    final_loss: f64::INFINITY,
                    loss_curve: Vec::new(),
                    validity: Validity::Invalid,
                    best_step: 0,
                };
            }
            break;
        }
        let Ok(res) = crate::mpm::backprop(sim, laws, &theta, &tape, &traj, target) else {
            break;
        };
        let loss = res.loss;
        if step % stride == 0 || step == opt.n_steps - 1 {
            curve.push((step, loss));
        }
        let free_theta = match free {
            FreeSlot::Elastic => &theta.elastic,
            FreeSlot::Plastic => &theta.plastic,
        };
        if best.as_ref().map_or(true, |(b, _, _)| loss < *b) {
            best = Some((loss, free_theta.clone(), step));
        }
        // With nothing to fit, one evaluation defines the result.
        if free_len == 0 {
            break;
        }
        if !res.grad_validity.is_valid() {
            break;
        }
        let mut grad = match free {
            FreeSlot::Elastic => res.grad.elastic,
            FreeSlot::Plastic => res.grad.plastic,
        };
        if let Some(max_norm) = opt.grad_clip_norm {
            clip_by_norm(&mut grad, max_norm);
        }
        match free {
            FreeSlot::Elastic => adam.step(&mut theta.elastic, &grad),
            FreeSlot::Plastic => adam.step(&mut theta.plastic, &grad),
        }
    }

    let (final_loss, theta_hat, best_step) = best.expect("at least step 0 was valid");
    OptResult { theta_hat, final_loss, loss_curve: curve, validity: Validity::Valid, best_step }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::fixtures;
    use crate::linalg::Vect;
    use crate::mpm::{init_scene, Boundary, Geometry};

    #[test]
    fn adam_matches_hand_computed_two_step_example() {
        let cfg = OptConfig { learning_rate: 0.1, ..OptConfig::default() };
        let mut adam = Adam::new(1, &cfg);
        let mut theta = [1.0f64];

        // Step 1, g = 3: m = 0.3, v = 0.009, m̂ = 3, v̂ = 9.
        adam.step(&mut theta, &[3.0]);
        let expected1 = 1.0 - 0.1 * 3.0 / (3.0f64 + 1e-8);
        assert!((theta[0] - expected1).abs() < 1e-15, "{} vs {expected1}", theta[0]);

        // Step 2, g = -1: m = 0.9·0.3 − 0.1 = 0.17, v = 0.999·0.009 + 0.001.
        adam.step(&mut theta, &[-1.0]);
        let m2 = 0.9f64 * 0.3 + 0.1 * (-1.0);
        let v2 = 0.999f64 * 0.009 + 0.001;
        let m_hat = m2 / (1.0 - 0.9f64.powi(2));
        let v_hat = v2 / (1.0 - 0.999f64.powi(2));
        let expected2 = expected1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((theta[0] - expected2).abs() < 1e-15, "{} vs {expected2}", theta[0]);
    }

    #[test]
    fn mse_matches_brute_force() {
        // N=3, T=2, D=2 against an independently accumulated sum.
        let mk = |vals: &[[f64; 2]]| -> Vec<Vect> { vals.iter().map(|v| Vect::from_slice(2, v)).collect() };
        let a = Trajectory {
            dim: 2,
            n_particles: 3,
            frame_dt: 0.1,
            frames: vec![
                mk(&[[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]),
                mk(&[[0.15, 0.2], [0.3, 0.45], [0.55, 0.6]]),
            ],
        };
        let b = Trajectory {
            dim: 2,
            n_particles: 3,
            frame_dt: 0.1,
            frames: vec![
                mk(&[[0.12, 0.18], [0.31, 0.4], [0.5, 0.64]]),
                mk(&[[0.15, 0.25], [0.28, 0.45], [0.51, 0.6]]),
            ],
        };
        let mut acc = 0.0;
        let mut count = 0;
        for t in 0..2 {
            for p in 0..3 {
                for d in 0..2 {
                    let e = a.frames[t][p].v[d] - b.frames[t][p].v[d];
                    acc += e * e;
                    count += 1;
                }
            }
        }
        let expected = acc / count as f64;
        assert_eq!(mse_loss(&a, &b).unwrap(), expected);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);

        // Constant +0.1 m offset on every coordinate → exactly 0.01 m².
        let mut shifted = a.clone();
        for f in shifted.frames.iter_mut() {
            for p in f.iter_mut() {
                for d in 0..2 {
                    p.v[d] += 0.1;
                }
            }
        }
        assert!((mse_loss(&a, &shifted).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn mse_shape_mismatch() {
        let a = Trajectory { dim: 2, n_particles: 1, frame_dt: 0.1, frames: vec![vec![Vect::zero(2)]] };
        let b = Trajectory { dim: 2, n_particles: 2, frame_dt: 0.1, frames: vec![vec![Vect::zero(2); 2]] };
        assert!(mse_loss(&a, &b).is_err());
    }

    #[test]
    fn fixed_point_when_started_at_target() {
        let sim = SimConfig {
            dim: 2,
            grid_res: 16,
            dt: 2e-4,
            n_steps: 2,
            substeps_per_frame: 2,
            gravity: Vect::from_slice(2, &[0.0, -9.8]),
            particle_mass: 1.0,
            particle_volume: (1.0 / 32.0) * (1.0 / 32.0),
            boundary: Boundary::SlipBox,
            seed: 3,
        };
        let geometry = Geometry::Box {
            center: Vect::from_slice(2, &[0.5, 0.25]),
            half_extents: Vect::from_slice(2, &[0.1, 0.11]),
        };
        let initial = init_scene(&sim, &geometry).unwrap();
        let laws = LawPair::elastic_only(fixtures::linear_simple());
        let theta = ThetaPair::defaults_of(&laws);
        let (target, _, v) = simulate(&sim, &laws, &theta, &initial);
        assert!(v.is_valid());

        let opt = OptConfig { n_steps: 5, ..OptConfig::default() };
        let res = optimize(&laws, FreeSlot::Elastic, &sim, &opt, &initial, &target);
        assert!(res.validity.is_valid());
        assert_eq!(res.final_loss, 0.0);
        assert_eq!(res.best_step, 0);
        assert_eq!(res.theta_hat, theta.elastic);
    }

    #[test]
    fn exploding_law_invalidates_result() {
        let sim = SimConfig {
            dim: 2,
            grid_res: 16,
            dt: 2e-4,
            n_steps: 1,
            substeps_per_frame: 2,
            gravity: Vect::from_slice(2, &[0.0, -9.8]),
            particle_mass: 1.0,
            particle_volume: (1.0 / 32.0) * (1.0 / 32.0),
            boundary: Boundary::SlipBox,
            seed: 3,
        };
        let geometry = Geometry::Box {
            center: Vect::from_slice(2, &[0.5, 0.25]),
            half_extents: Vect::from_slice(2, &[0.1, 0.1]),
        };
        let initial = init_scene(&sim, &geometry).unwrap();
        let good = LawPair::elastic_only(fixtures::linear_simple());
        let theta = ThetaPair::defaults_of(&good);
        let (target, _, _) = simulate(&sim, &good, &theta, &initial);

        let boom = LawPair::elastic_only(
            crate::dsl::parse_law(
                r#"law elastic "boom" { params { a = 1000.0; } forward(F: mat) -> mat { return exp(a * trace(F)) * F; } }"#,
            )
            .unwrap(),
        );
        let res = optimize(&boom, FreeSlot::Elastic, &sim, &OptConfig::default(), &initial, &target);
        assert_eq!(res.validity, Validity::Invalid);
        assert!(res.loss_curve.is_empty());
    }
}

#[doc(hidden)]
pub fn mse_loss_probe(a: &Trajectory, b: &Trajectory) -> f64 {
    mse_loss(a, b).unwrap()
}
