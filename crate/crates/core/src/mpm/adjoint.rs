//! Reverse sweep through the recorded substeps.
//!
//! Each substep is replayed forward from its tape snapshot to rebuild the
//! grid state and the per-particle intermediates, then its adjoint runs in
//! reverse order: plastic correction, F update, G2P, boundary/grid update,
//! P2G, elastic stress. Weight gradients (the dependence of the B-spline
//! stencil on particle positions) are carried through both transfer
//! directions; the boundary projection is the same fixed node mask the
//! forward pass used.

use crate::dsl::eval_vjp;
use crate::linalg::{Mat, Vect};

use super::sim::{boundary_mask, decode_coords, p2g_scatter, GridScratch, Stencil};
use super::{LawPair, SimConfig, Tape, ThetaPair, Trajectory, Validity};
#[cfg(test)]
use super::ParticleState;

#[derive(Clone, Debug, thiserror::Error)]
#[error("tape mismatch: {0}")]
pub struct TapeMismatch(pub String);

#[derive(Clone, Debug)]
pub struct BackpropResult {
    /// MSE between the produced and target trajectories, m².
    pub loss: f64,
    pub grad: ThetaPair,
    /// Invalid when any adjoint quantity went non-finite or a law VJP
    /// left its domain; the gradient must then be discarded.
    pub grad_validity: Validity,
}

/// Mean squared error over frames × particles × axes.
pub(crate) fn trajectory_mse(a: &Trajectory, b: &Trajectory) -> Option<f64> {
    if a.dim != b.dim || a.n_particles != b.n_particles || a.n_frames() != b.n_frames() {
        return None;
    }
    let mut acc = 0.0;
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        for (pa, pb) in fa.iter().zip(fb) {
            for d in 0..a.dim {
                let e = pa.v[d] - pb.v[d];
                acc += e * e;
            }
        }
    }
    Some(acc / (a.n_frames() * a.n_particles * a.dim) as f64)
}

/// Reverse-mode gradient of the trajectory MSE with respect to the law
/// parameters, via backpropagation through every substep on the tape.
pub fn backprop(
    config: &SimConfig,
    laws: &LawPair,
    theta: &ThetaPair,
    tape: &Tape,
    trajectory: &Trajectory,
    target: &Trajectory,
) -> Result<BackpropResult, TapeMismatch> {
    if tape.config != *config {
        return Err(TapeMismatch("config differs from the one the tape was recorded with".into()));
    }
    if tape.law_fingerprint != laws.fingerprint() {
        return Err(TapeMismatch("laws differ from the ones the tape was recorded with".into()));
    }
    if tape.theta != *theta {
        return Err(TapeMismatch("theta differs from the one the tape was recorded with".into()));
    }
    if tape.n_substeps() != config.total_substeps() {
        return Err(TapeMismatch(format!(
            "tape covers {} substeps, config expects {} (invalid or truncated run?)",
            tape.n_substeps(),
            config.total_substeps()
        )));
    }
    if trajectory.n_frames() != target.n_frames()
        || trajectory.n_particles != target.n_particles
        || trajectory.dim != target.dim
    {
        return Err(TapeMismatch("trajectory and target shapes differ".into()));
    }

    let loss = trajectory_mse(trajectory, target).expect("shapes checked above");
    let dim = config.dim;
    let n = trajectory.n_particles;
    let mut grad = ThetaPair {
        elastic: vec![0.0; theta.elastic.len()],
        plastic: vec![0.0; theta.plastic.len()],
    };

    if config.n_steps == 0 {
        return Ok(BackpropResult { loss, grad, grad_validity: Validity::Valid });
    }

    let dx = config.dx();
    let npa = config.nodes_per_axis();
    let d_inv = 4.0 / (dx * dx);
    let kappa = -4.0 * config.dt * config.particle_volume / (dx * dx);
    let mass = config.particle_mass;
    let dt = config.dt;
    let spf = config.substeps_per_frame;
    let loss_scale = 2.0 / (trajectory.n_frames() * n * dim) as f64;

    // Adjoints of the state *after* the substep being processed.
    let mut xb = vec![Vect::zero(dim); n];
    let mut vb = vec![Vect::zero(dim); n];
    let mut fb = vec![Mat::zero(dim); n];
    let mut cb = vec![Mat::zero(dim); n];

    let mut grid = GridScratch::new(config);
    let mut u_post = vec![Vect::zero(dim); config.n_nodes()];
    let mut u_raw = vec![Vect::zero(dim); config.n_nodes()];
    let mut u_bar = vec![Vect::zero(dim); config.n_nodes()];
    let mut p_bar = vec![Vect::zero(dim); config.n_nodes()];
    let mut m_bar = vec![0.0; config.n_nodes()];

    for s in (0..tape.n_substeps()).rev() {
        // Frame boundaries inject the loss cotangent for the frame that
        // this substep completed.
        if (s + 1) % spf == 0 {
            let frame = (s + 1) / spf - 1;
            for p in 0..n {
                let residual = trajectory.frames[frame][p].sub(&target.frames[frame][p]);
                xb[p] = xb[p].add(&residual.scale(loss_scale));
            }
        }

        let state = &tape.snapshots[s];

        // --- Forward replay: grid state of this substep.
        if p2g_scatter(config, laws, theta, state, &mut grid).is_err() {
            return Ok(BackpropResult { loss, grad, grad_validity: Validity::Invalid });
        }
        for idx in 0..config.n_nodes() {
            if grid.mass[idx] > 0.0 {
                let raw = grid.mom[idx].scale(1.0 / grid.mass[idx]);
                let mut v = raw.add(&config.gravity.scale(dt));
                let mask = boundary_mask(config, &decode_coords(idx, npa, dim));
                for d in 0..dim {
                    if mask[d] {
                        v.v[d] = 0.0;
                    }
                }
                u_raw[idx] = raw;
                u_post[idx] = v;
            } else {
                u_raw[idx] = Vect::zero(dim);
                u_post[idx] = Vect::zero(dim);
            }
            u_bar[idx] = Vect::zero(dim);
        }

        let mut x0b = vec![Vect::zero(dim); n];
        let mut v0b = vec![Vect::zero(dim); n];
        let mut f0b = vec![Mat::zero(dim); n];
        let mut c0b = vec![Mat::zero(dim); n];

        // --- Phase A: adjoint of G2P, advection, F update, plasticity.
        for p in 0..n {
            let st = Stencil::at(&state.positions[p], dx, dim);

            // Replay the gather for this particle.
            let mut v_new = Vect::zero(dim);
            let mut c_new = Mat::zero(dim);
            for off in st.offsets() {
                let w = st.weight(&off);
                let u = u_post[st.node_index(&off, npa)];
                v_new = v_new.add(&u.scale(w));
                c_new = c_new.add(&Mat::outer(&u, &st.dpos(&off, dx)).scale(w * d_inv));
            }
            let f0 = state.deformation_gradients[p];
            let elastic_update = Mat::identity(dim).add(&c_new.scale(dt));
            let f_trial = elastic_update.matmul(&f0);

            // Plastic correction adjoint.
            let ft_bar = match &laws.plastic {
                Some(plastic) => match eval_vjp(plastic, &f_trial, &theta.plastic, &fb[p]) {
                    Ok((dftrial, dtheta)) => {
                        for (g, d) in grad.plastic.iter_mut().zip(&dtheta) {
                            *g += d;
                        }
                        dftrial
                    }
                    Err(_) => {
                        return Ok(BackpropResult { loss, grad, grad_validity: Validity::Invalid });
                    }
                },
                None => fb[p],
            };

            // F_trial = (I + dt C') F0.
            f0b[p] = f0b[p].add(&elastic_update.transpose().matmul(&ft_bar));
            let mut cprime_bar = cb[p].add(&ft_bar.matmul(&f0.transpose()).scale(dt));

            // x' = x + dt v'.
            let vprime_bar = vb[p].add(&xb[p].scale(dt));
            x0b[p] = x0b[p].add(&xb[p]);

            // Gather adjoints: v' = Σ w u, C' = d_inv Σ w u dᵀ.
            for off in st.offsets() {
                let w = st.weight(&off);
                let idx = st.node_index(&off, npa);
                let u = u_post[idx];
                let dpos = st.dpos(&off, dx);

                u_bar[idx] = u_bar[idx]
                    .add(&vprime_bar.scale(w))
                    .add(&cprime_bar.matvec(&dpos).scale(w * d_inv));

                let w_bar = u.dot(&vprime_bar) + d_inv * u.dot(&cprime_bar.matvec(&dpos));
                let d_bar = cprime_bar.transpose().matvec(&u).scale(w * d_inv);
                x0b[p] = x0b[p].add(&st.weight_grad(&off, dx).scale(w_bar)).sub(&d_bar);
            }
            let _ = &mut cprime_bar;
        }

        // --- Phase B: grid update adjoint. u = mask(P/m + dt g).
        for idx in 0..config.n_nodes() {
            if grid.mass[idx] > 0.0 {
                let mut ub = u_bar[idx];
                let mask = boundary_mask(config, &decode_coords(idx, npa, dim));
                for d in 0..dim {
                    if mask[d] {
                        ub.v[d] = 0.0;
                    }
                }
                p_bar[idx] = ub.scale(1.0 / grid.mass[idx]);
                m_bar[idx] = -ub.dot(&u_raw[idx]) / grid.mass[idx];
            } else {
                p_bar[idx] = Vect::zero(dim);
                m_bar[idx] = 0.0;
            }
        }

        // --- Phase C: P2G adjoint. P_i = Σ w (m v + A d), m_i = Σ w m,
        // A = m C + κ τ(F).
        for p in 0..n {
            let st = Stencil::at(&state.positions[p], dx, dim);
            let f0 = state.deformation_gradients[p];
            let tau = match crate::dsl::eval_forward(&laws.elastic, &f0, &theta.elastic) {
                Ok(t) => t,
                Err(_) => {
                    return Ok(BackpropResult { loss, grad, grad_validity: Validity::Invalid });
                }
            };
            let affine = state.affine_velocities[p].scale(mass).add(&tau.scale(kappa));
            let mv = state.velocities[p].scale(mass);

            let mut a_bar = Mat::zero(dim);
            for off in st.offsets() {
                let w = st.weight(&off);
                let idx = st.node_index(&off, npa);
                let dpos = st.dpos(&off, dx);
                let pb = p_bar[idx];

                a_bar = a_bar.add(&Mat::outer(&pb, &dpos).scale(w));
                v0b[p] = v0b[p].add(&pb.scale(w * mass));

                let w_bar = mv.add(&affine.matvec(&dpos)).dot(&pb) + mass * m_bar[idx];
                let d_bar = affine.transpose().matvec(&pb).scale(w);
                x0b[p] = x0b[p].add(&st.weight_grad(&off, dx).scale(w_bar)).sub(&d_bar);
            }

            c0b[p] = c0b[p].add(&a_bar.scale(mass));
            let tau_bar = a_bar.scale(kappa);
            match eval_vjp(&laws.elastic, &f0, &theta.elastic, &tau_bar) {
                Ok((df, dtheta)) => {
                    f0b[p] = f0b[p].add(&df);
                    for (g, d) in grad.elastic.iter_mut().zip(&dtheta) {
                        *g += d;
                    }
                }
                Err(_) => {
                    return Ok(BackpropResult { loss, grad, grad_validity: Validity::Invalid });
                }
            }
        }

        xb = x0b;
        vb = v0b;
        fb = f0b;
        cb = c0b;
    }

    let finite = grad.elastic.iter().chain(&grad.plastic).all(|g| g.is_finite())
        && xb.iter().all(Vect::is_finite)
        && fb.iter().all(Mat::is_finite);
    let grad_validity = if finite { Validity::Valid } else { Validity::Invalid };
    Ok(BackpropResult { loss, grad, grad_validity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::fixtures;
    use crate::mpm::{init_scene, simulate, Boundary, Geometry};

    fn small_config(n_steps: usize) -> SimConfig {
        SimConfig {
            dim: 2,
            grid_res: 16,
            dt: 2e-4,
            n_steps,
            substeps_per_frame: 2,
            gravity: Vect::from_slice(2, &[0.0, -9.8]),
            particle_mass: 1.0,
            particle_volume: (1.0 / 32.0) * (1.0 / 32.0),
            boundary: Boundary::SlipBox,
            seed: 12,
        }
    }

    fn small_scene(config: &SimConfig) -> ParticleState {
        let geometry = Geometry::Box {
            center: Vect::from_slice(2, &[0.5, 0.35]),
            half_extents: Vect::from_slice(2, &[0.08, 0.08]),
        };
        init_scene(config, &geometry).unwrap()
    }

    #[test]
    fn zero_residual_gives_zero_loss() {
        let config = small_config(3);
        let laws = LawPair::elastic_only(fixtures::linear_simple());
        let theta = ThetaPair { elastic: vec![80.0], plastic: vec![] };
        let initial = small_scene(&config);
        let (traj, tape, validity) = simulate(&config, &laws, &theta, &initial);
        assert!(validity.is_valid());
        let res = backprop(&config, &laws, &theta, &tape, &traj, &traj).unwrap();
        assert_eq!(res.loss, 0.0);
        assert!(res.grad_validity.is_valid());
        assert!(res.grad.elastic.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn tape_mismatch_detected() {
        let config = small_config(2);
        let laws = LawPair::elastic_only(fixtures::linear_simple());
        let theta = ThetaPair { elastic: vec![80.0], plastic: vec![] };
        let initial = small_scene(&config);
        let (traj, tape, _) = simulate(&config, &laws, &theta, &initial);
        let other_theta = ThetaPair { elastic: vec![81.0], plastic: vec![] };
        assert!(backprop(&config, &laws, &other_theta, &tape, &traj, &traj).is_err());
        let mut other_config = config;
        other_config.dt = 1e-4;
        assert!(backprop(&other_config, &laws, &theta, &tape, &traj, &traj).is_err());
    }

    /// Full-simulator finite differences: perturb one parameter, rerun the
    /// whole simulation, difference the losses.
    fn fd_loss_grad(
        config: &SimConfig,
        laws: &LawPair,
        theta: &ThetaPair,
        initial: &ParticleState,
        target: &Trajectory,
        which: usize,
        h: f64,
    ) -> f64 {
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        if which < theta.elastic.len() {
            tp.elastic[which] += h;
            tm.elastic[which] -= h;
        } else {
            tp.plastic[which - theta.elastic.len()] += h;
            tm.plastic[which - theta.elastic.len()] -= h;
        }
        let (trj_p, _, v1) = simulate(config, laws, &tp, initial);
        let (trj_m, _, v2) = simulate(config, laws, &tm, initial);
        assert!(v1.is_valid() && v2.is_valid());
        let lp = trajectory_mse(&trj_p, target).unwrap();
        let lm = trajectory_mse(&trj_m, target).unwrap();
        (lp - lm) / (2.0 * h)
    }

    #[test]
    fn linear_law_gradient_matches_fd() {
        let config = small_config(1);
        let laws = LawPair::elastic_only(fixtures::linear_simple());
        let theta = ThetaPair { elastic: vec![100.0], plastic: vec![] };
        let initial = small_scene(&config);

        // Target from a slightly different stiffness so the residual is
        // non-zero.
        let target_theta = ThetaPair { elastic: vec![140.0], plastic: vec![] };
        let (target, _, tv) = simulate(&config, &laws, &target_theta, &initial);
        assert!(tv.is_valid());

        let (traj, tape, v) = simulate(&config, &laws, &theta, &initial);
        assert!(v.is_valid());
        let res = backprop(&config, &laws, &theta, &tape, &traj, &target).unwrap();
        assert!(res.grad_validity.is_valid());

        let h = 1e-4 * (theta.elastic[0].abs() + 1.0) * 1e-2;
        let fd = fd_loss_grad(&config, &laws, &theta, &initial, &target, 0, h);
        let ad = res.grad.elastic[0];
        let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-300);
        assert!(rel < 1e-3, "ad {ad} vs fd {fd}, rel {rel}");
    }
}
