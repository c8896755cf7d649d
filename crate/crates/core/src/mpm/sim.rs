//! Forward MLS-MPM time stepping.
//!
//! One substep is: P2G scatter (mass, APIC momentum, fused stress force),
//! grid momentum update (gravity, boundary projection), G2P gather
//! (velocity, affine matrix), advection, elastic F update, optional
//! plastic correction. Quadratic B-spline weights throughout.

use crate::dsl::{eval_forward, EvalError};
use crate::linalg::{Mat, Vect};

use super::{
    Boundary, LawPair, ParticleState, SimConfig, Tape, ThetaPair, Trajectory, Validity,
    BOUNDARY_BAND,
};

/// Per-axis quadratic B-spline weights for the three stencil nodes around
/// a particle, and the fractional offset fx ∈ [0.5, 1.5).
#[derive(Clone, Copy, Debug)]
pub struct AxisWeights {
    pub base: i64,
    pub fx: f64,
    pub w: [f64; 3],
    /// dw/dfx (multiply by 1/dx for dw/dx).
    pub dw: [f64; 3],
}

/// Quadratic B-spline weights along one axis at position `x` (meters).
pub fn spline_weights(x: f64, dx: f64) -> AxisWeights {
    let xg = x / dx;
    let base = (xg - 0.5).floor();
    let fx = xg - base;
    AxisWeights {
        base: base as i64,
        fx,
        w: [
            0.5 * (1.5 - fx) * (1.5 - fx),
            0.75 - (fx - 1.0) * (fx - 1.0),
            0.5 * (fx - 0.5) * (fx - 0.5),
        ],
        dw: [fx - 1.5, -2.0 * (fx - 1.0), fx - 0.5],
    }
}

/// Background grid storage for one substep.
#[derive(Clone, Debug)]
pub struct GridScratch {
    pub mass: Vec<f64>,
    /// Momentum after P2G; velocity after the grid update.
    pub mom: Vec<Vect>,
}

impl GridScratch {
    pub fn new(config: &SimConfig) -> Self {
        GridScratch {
            mass: vec![0.0; config.n_nodes()],
            mom: vec![Vect::zero(config.dim); config.n_nodes()],
        }
    }

    fn clear(&mut self, dim: usize) {
        self.mass.fill(0.0);
        self.mom.fill(Vect::zero(dim));
    }
}

pub(super) struct Stencil {
    pub axes: [AxisWeights; 3],
    pub dim: usize,
}

impl Stencil {
    pub fn at(x: &Vect, dx: f64, dim: usize) -> Self {
        let mut axes = [spline_weights(0.0, 1.0); 3];
        for d in 0..dim {
            axes[d] = spline_weights(x.v[d], dx);
        }
        Stencil { axes, dim }
    }

    pub fn in_grid(&self, nodes_per_axis: usize) -> bool {
        (0..self.dim).all(|d| {
            let b = self.axes[d].base;
            b >= 0 && (b as usize) + 2 < nodes_per_axis
        })
    }

    pub fn offsets(&self) -> impl Iterator<Item = [usize; 3]> {
        let dim = self.dim;
        let kmax = if dim == 3 { 3 } else { 1 };
        (0..3usize).flat_map(move |i| (0..3usize).flat_map(move |j| (0..kmax).map(move |k| [i, j, k])))
    }

    pub fn weight(&self, off: &[usize; 3]) -> f64 {
        let mut w = self.axes[0].w[off[0]] * self.axes[1].w[off[1]];
        if self.dim == 3 {
            w *= self.axes[2].w[off[2]];
        }
        w
    }

    /// ∇w with respect to the particle position, 1/m.
    pub fn weight_grad(&self, off: &[usize; 3], dx: f64) -> Vect {
        let mut g = Vect::zero(self.dim);
        for d in 0..self.dim {
            let mut v = self.axes[d].dw[off[d]] / dx;
            for e in 0..self.dim {
                if e != d {
                    v *= self.axes[e].w[off[e]];
                }
            }
            g.v[d] = v;
        }
        g
    }

    /// Node position minus particle position, meters.
    pub fn dpos(&self, off: &[usize; 3], dx: f64) -> Vect {
        let mut o = Vect::zero(self.dim);
        for d in 0..self.dim {
            o.v[d] = (off[d] as f64 - self.axes[d].fx) * dx;
        }
        o
    }

    pub fn node_index(&self, off: &[usize; 3], nodes_per_axis: usize) -> usize {
        let mut idx = 0usize;
        for d in 0..self.dim {
            idx = idx * nodes_per_axis + (self.axes[d].base as usize + off[d]);
        }
        idx
    }

}

/// Which velocity components the boundary projection zeroes at a node.
pub(super) fn boundary_mask(config: &SimConfig, coords: &[usize; 3]) -> [bool; 3] {
    let n = config.grid_res;
    let mut mask = [false; 3];
    let mut any = false;
    for d in 0..config.dim {
        let in_band = coords[d] <= BOUNDARY_BAND || coords[d] >= n - BOUNDARY_BAND;
        mask[d] = in_band;
        any |= in_band;
    }
    if config.boundary == Boundary::Sticky && any {
        for m in mask.iter_mut().take(config.dim) {
            *m = true;
        }
    }
    mask
}

#[allow(dead_code)] // the law error is kept for debugging even though validity folding discards it
pub(super) enum SubstepError {
    Law(EvalError),
    OutOfGrid,
    NonFinite,
    TooFast,
}

/// Scatter pass only: mass and momentum onto a cleared grid. Exposed so the
/// conservation check can interrogate the grid state directly.
pub fn p2g_scatter(
    config: &SimConfig,
    laws: &LawPair,
    theta: &ThetaPair,
    state: &ParticleState,
    grid: &mut GridScratch,
) -> Result<(), EvalError> {
    let dim = config.dim;
    let dx = config.dx();
    let npa = config.nodes_per_axis();
    let mass = config.particle_mass;
    // Fused MLS-MPM force coefficient for quadratic splines.
    let kappa = -4.0 * config.dt * config.particle_volume / (dx * dx);

    grid.clear(dim);
    for p in 0..state.n_particles() {
        let tau = eval_forward(&laws.elastic, &state.deformation_gradients[p], &theta.elastic)?;
        let affine = state.affine_velocities[p].scale(mass).add(&tau.scale(kappa));
        let st = Stencil::at(&state.positions[p], dx, dim);
        let mv = state.velocities[p].scale(mass);
        for off in st.offsets() {
            let w = st.weight(&off);
            let dpos = st.dpos(&off, dx);
            let idx = st.node_index(&off, npa);
            grid.mass[idx] += w * mass;
            grid.mom[idx] = grid.mom[idx].add(&mv.add(&affine.matvec(&dpos)).scale(w));
        }
    }
    Ok(())
}

/// Sums particle and grid momentum after a P2G scatter, in fixed order.
pub fn conservation_report(state: &ParticleState, grid: &GridScratch, config: &SimConfig) -> (Vect, Vect) {
    let dim = config.dim;
    let mut particles = Vect::zero(dim);
    for v in &state.velocities {
        particles = particles.add(&v.scale(config.particle_mass));
    }
    let mut nodes = Vect::zero(dim);
    for m in &grid.mom {
        nodes = nodes.add(m);
    }
    (particles, nodes)
}

pub(super) fn substep(
    config: &SimConfig,
    laws: &LawPair,
    theta: &ThetaPair,
    state: &mut ParticleState,
    grid: &mut GridScratch,
) -> Result<(), SubstepError> {
    let dim = config.dim;
    let dx = config.dx();
    let npa = config.nodes_per_axis();

    for p in 0..state.n_particles() {
        if !Stencil::at(&state.positions[p], dx, dim).in_grid(npa) {
            return Err(SubstepError::OutOfGrid);
        }
    }

    p2g_scatter(config, laws, theta, state, grid).map_err(SubstepError::Law)?;

    // Grid momentum -> velocity, gravity, boundary projection.
    let npa_u = npa;
    for idx in 0..grid.mass.len() {
        if grid.mass[idx] > 0.0 {
            let mut v = grid.mom[idx].scale(1.0 / grid.mass[idx]).add(&config.gravity.scale(config.dt));
            let coords = decode_coords(idx, npa_u, dim);
            let mask = boundary_mask(config, &coords);
            for d in 0..dim {
                if mask[d] {
                    v.v[d] = 0.0;
                }
            }
            grid.mom[idx] = v;
        } else {
            grid.mom[idx] = Vect::zero(dim);
        }
    }

    // G2P gather, advection, F update, plastic correction.
    let d_inv = 4.0 / (dx * dx);
    let max_move = 0.5 * dx;
    for p in 0..state.n_particles() {
        let st = Stencil::at(&state.positions[p], dx, dim);
        let mut v_new = Vect::zero(dim);
        let mut c_new = Mat::zero(dim);
        for off in st.offsets() {
            let w = st.weight(&off);
            let u = grid.mom[st.node_index(&off, npa)];
            let dpos = st.dpos(&off, dx);
            v_new = v_new.add(&u.scale(w));
            c_new = c_new.add(&Mat::outer(&u, &dpos).scale(w * d_inv));
        }
        let step = v_new.scale(config.dt);
        if !step.is_finite() || !v_new.is_finite() || !c_new.is_finite() {
            return Err(SubstepError::NonFinite);
        }
        if step.norm() > max_move {
            return Err(SubstepError::TooFast);
        }
        let f_trial = Mat::identity(dim)
            .add(&c_new.scale(config.dt))
            .matmul(&state.deformation_gradients[p]);
        let f_new = match &laws.plastic {
            Some(plastic) => eval_forward(plastic, &f_trial, &theta.plastic).map_err(SubstepError::Law)?,
            None => f_trial,
        };
        state.positions[p] = state.positions[p].add(&step);
        state.velocities[p] = v_new;
        state.affine_velocities[p] = c_new;
        state.deformation_gradients[p] = f_new;
    }

    if !state.is_finite() {
        return Err(SubstepError::NonFinite);
    }
    Ok(())
}

pub(super) fn decode_coords(idx: usize, nodes_per_axis: usize, dim: usize) -> [usize; 3] {
    let mut c = [0usize; 3];
    let mut rem = idx;
    for d in (0..dim).rev() {
        c[d] = rem % nodes_per_axis;
        rem /= nodes_per_axis;
    }
    c
}

/// Runs `n_steps` frames of `substeps_per_frame` substeps each. All failures
/// fold into the returned validity: the run halts at the first non-finite
/// state, law-domain error, out-of-grid particle, or CFL violation, keeping
/// the frames recorded so far.
pub fn simulate(
    config: &SimConfig,
    laws: &LawPair,
    theta: &ThetaPair,
    initial: &ParticleState,
) -> (Trajectory, Tape, Validity) {
    assert!(config.validate().is_ok(), "invalid SimConfig: {:?}", config.validate());
    assert_eq!(theta.elastic.len(), laws.elastic.params.len());
    if let Some(p) = &laws.plastic {
        assert_eq!(theta.plastic.len(), p.params.len());
    }

    let mut state = initial.clone();
    let mut grid = GridScratch::new(config);
    let mut tape = Tape {
        config: *config,
        law_fingerprint: laws.fingerprint(),
        theta: theta.clone(),
        snapshots: Vec::with_capacity(config.total_substeps()),
    };
    let mut frames: Vec<Vec<Vect>> = Vec::with_capacity(config.n_steps.max(1));
    let mut validity = Validity::Valid;

    'frames: for _ in 0..config.n_steps {
        for _ in 0..config.substeps_per_frame {
            tape.snapshots.push(state.clone());
            if substep(config, laws, theta, &mut state, &mut grid).is_err() {
                // The failed substep never completed; drop its snapshot so
                // the tape covers exactly the executed substeps.
                tape.snapshots.pop();
                validity = Validity::Invalid;
                break 'frames;
            }
        }
        frames.push(state.positions.clone());
    }

    if config.n_steps == 0 {
        frames.push(initial.positions.clone());
    }

    let trajectory = Trajectory {
        dim: config.dim,
        n_particles: initial.n_particles(),
        frame_dt: config.dt * config.substeps_per_frame as f64,
        frames,
    };
    (trajectory, tape, validity)
}
