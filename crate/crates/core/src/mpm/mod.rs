//! Differentiable MLS-MPM: explicit particle-grid-particle time stepping
//! with hand-written adjoint kernels.
//!
//! The forward pass calls an elastic law for Kirchhoff stress each substep
//! and optionally a plastic law to correct the deformation gradient after
//! the elastic update. The backward pass replays each substep from a tape
//! snapshot and runs the adjoint kernels in reverse, routing law cotangents
//! through `eval_vjp`. Everything is 64-bit and single-threaded per
//! simulation instance, so identical inputs give bit-identical outputs.

mod adjoint;
mod scene;
mod sim;

pub use adjoint::{backprop, BackpropResult, TapeMismatch};
pub(crate) use adjoint::trajectory_mse;
pub use scene::{init_scene, Geometry, GeometryError};
pub use sim::{conservation_report, p2g_scatter, simulate, spline_weights, GridScratch};

use crate::dsl::LawProgram;
use crate::linalg::{Mat, Vect};

/// Whether a run (or a gradient) can be trusted. Failures fold into this
/// flag instead of being thrown, mirroring the search's validity constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Valid,
    Invalid,
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Zero all velocity components on nodes within the wall band.
    Sticky,
    /// Zero the wall-normal velocity component within the band.
    SlipBox,
}

/// Estimated speed bound used by the dt stability check, m/s.
pub const V_MAX_EST: f64 = 10.0;

/// Grid nodes within this many cells of a domain wall carry the boundary
/// projection.
pub const BOUNDARY_BAND: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    /// Spatial dimension, 2 or 3.
    pub dim: usize,
    /// Cells per axis; the domain is the unit box, so dx = 1 / grid_res.
    pub grid_res: usize,
    pub dt: f64,
    /// Number of recorded frames T.
    pub n_steps: usize,
    pub substeps_per_frame: usize,
    pub gravity: Vect,
    pub particle_mass: f64,
    pub particle_volume: f64,
    pub boundary: Boundary,
    pub seed: u64,
}

impl SimConfig {
    pub fn dx(&self) -> f64 {
        1.0 / self.grid_res as f64
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.grid_res + 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    pub fn total_substeps(&self) -> usize {
        self.n_steps * self.substeps_per_frame
    }

    /// Explict-integration guard: dt ≤ 0.5·dx / v_max_est, plus basic
    /// well-formedness.
    pub fn validate(&self) -> Result<(), String> {
        if self.dim != 2 && self.dim != 3 {
            return Err(format!("dim must be 2 or 3, got {}", self.dim));
        }
        if self.grid_res < 8 {
            return Err(format!("grid_res must be >= 8, got {}", self.grid_res));
        }
        if !(self.dt > 0.0) {
            return Err(format!("dt must be positive, got {}", self.dt));
        }
        let bound = 0.5 * self.dx() / V_MAX_EST;
        if self.dt > bound {
            return Err(format!("dt {} exceeds stability bound {bound}", self.dt));
        }
        if self.substeps_per_frame == 0 {
            return Err("substeps_per_frame must be >= 1".to_string());
        }
        if self.gravity.dim != self.dim {
            return Err("gravity dimension mismatch".to_string());
        }
        if !(self.particle_mass > 0.0) || !(self.particle_volume > 0.0) {
            return Err("particle mass and volume must be positive".to_string());
        }
        Ok(())
    }
}

/// Full per-particle simulation state.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleState {
    pub dim: usize,
    pub positions: Vec<Vect>,
    pub velocities: Vec<Vect>,
    pub deformation_gradients: Vec<Mat>,
    /// APIC affine velocity matrices, 1/s.
    pub affine_velocities: Vec<Mat>,
}

impl ParticleState {
    pub fn n_particles(&self) -> usize {
        self.positions.len()
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().all(Vect::is_finite)
            && self.velocities.iter().all(Vect::is_finite)
            && self.deformation_gradients.iter().all(Mat::is_finite)
            && self.affine_velocities.iter().all(Mat::is_finite)
    }
}

/// Recorded particle positions, one entry per frame (the initial state is
/// not a frame; a zero-step run records it as the only entry).
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub n_particles: usize,
    /// Wall-clock spacing between recorded frames, seconds.
    pub frame_dt: f64,
    pub frames: Vec<Vec<Vect>>,
}

impl Trajectory {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

/// An elastic law plus an optional plastic correction applied after the
/// elastic deformation-gradient update.
#[derive(Clone, Debug)]
pub struct LawPair {
    pub elastic: LawProgram,
    pub plastic: Option<LawProgram>,
}

impl LawPair {
    pub fn elastic_only(elastic: LawProgram) -> Self {
        LawPair { elastic, plastic: None }
    }

    fn fingerprint(&self) -> String {
        let mut s = crate::dsl::pretty_print(&self.elastic);
        if let Some(p) = &self.plastic {
            s.push('\u{0}');
            s.push_str(&crate::dsl::pretty_print(p));
        }
        s
    }
}

/// Parameter vectors for the two law slots. Slots without a law carry an
/// empty vector.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ThetaPair {
    pub elastic: Vec<f64>,
    pub plastic: Vec<f64>,
}

impl ThetaPair {
    pub fn defaults_of(laws: &LawPair) -> Self {
        ThetaPair {
            elastic: laws.elastic.param_defaults(),
            plastic: laws.plastic.as_ref().map(|p| p.param_defaults()).unwrap_or_default(),
        }
    }
}

/// Per-substep snapshots plus the identifying context, so the adjoint pass
/// can replay each substep bit-identically and refuse mismatched inputs.
#[derive(Clone, Debug)]
pub struct Tape {
    pub config: SimConfig,
    pub law_fingerprint: String,
    pub theta: ThetaPair,
    /// State before each executed substep.
    pub snapshots: Vec<ParticleState>,
}

impl Tape {
    pub fn n_substeps(&self) -> usize {
        self.snapshots.len()
    }
}
