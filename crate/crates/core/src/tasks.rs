//! The benchmark catalog: ground-truth laws, initial guesses, scenes, and
//! trajectory generation.
//!
//! Every task shares the same desk-scale scene — a soft block resting on
//! the floor band of the unit box, squashing under gravity — which keeps a
//! full scripted search run fast while still exercising contact, finite
//! strains, and (for the plastic tasks) the correction path every substep.
//! Scene parameters and recovery thresholds are artifact choices fixed by
//! calibration runs, not quantities taken from elsewhere.

use crate::dsl::{fixtures, LawKind, LawProgram};
use crate::linalg::Vect;
use crate::mpm::{
    init_scene, simulate, Boundary, Geometry, LawPair, ParticleState, SimConfig, ThetaPair,
    Trajectory,
};
use crate::opt::FreeSlot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskId {
    /// (a) Fit a nonlinear elastic material starting from linear elasticity.
    NonlinearElastic,
    /// (b) Fit a yield-style plastic correction starting from pure elasticity.
    VonMises,
    /// (c) Fit a granular principal-stretch clamp starting from pure elasticity.
    Granular,
    /// (d) Fit a volume-resetting fluid correction starting from pure elasticity.
    Fluid,
    /// (x) Fit an invented blend of the three plastic corrections.
    Imaginary,
}

impl TaskId {
    pub fn all() -> [TaskId; 5] {
        [TaskId::NonlinearElastic, TaskId::VonMises, TaskId::Granular, TaskId::Fluid, TaskId::Imaginary]
    }

    pub fn letter(&self) -> char {
        match self {
            TaskId::NonlinearElastic => 'a',
            TaskId::VonMises => 'b',
            TaskId::Granular => 'c',
            TaskId::Fluid => 'd',
            TaskId::Imaginary => 'x',
        }
    }

    pub fn from_letter(c: char) -> Option<TaskId> {
        match c.to_ascii_lowercase() {
            'a' => Some(TaskId::NonlinearElastic),
            'b' => Some(TaskId::VonMises),
            'c' => Some(TaskId::Granular),
            'd' => Some(TaskId::Fluid),
            'x' => Some(TaskId::Imaginary),
            _ => None,
        }
    }
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Clone, Debug)]
pub struct TaskSpec {
    pub id: TaskId,
    /// Kind of law the search proposes (the free slot of the pair).
    pub kind: LawKind,
    /// Ground truth with θ* baked into the parameter defaults.
    pub ground_truth: LawPair,
    pub initial_guess: LawPair,
    pub sim: SimConfig,
    pub scene: Geometry,
    /// Uniform initial velocity imposed on the sampled particles, m/s. The
    /// block impacts the floor at t = 0, which drives the deformation
    /// gradients far enough from the identity that the laws separate
    /// within the short horizon.
    pub impact_velocity: Vect,
    /// MSE (m²) below which a fit counts as having recovered the material.
    pub recovery_threshold: f64,
}

#[derive(Clone, Debug, thiserror::Error)]
#[error("ground truth for task {task} is unstable: {detail}")]
pub struct GroundTruthUnstable {
    pub task: TaskId,
    pub detail: String,
}

impl TaskSpec {
    pub fn free_slot(&self) -> FreeSlot {
        match self.kind {
            LawKind::Elastic => FreeSlot::Elastic,
            LawKind::Plastic => FreeSlot::Plastic,
        }
    }

    /// The law program the search starts from (and that seeds the prompt
    /// history).
    pub fn guess_program(&self) -> &LawProgram {
        match self.kind {
            LawKind::Elastic => &self.initial_guess.elastic,
            LawKind::Plastic => self.initial_guess.plastic.as_ref().expect("plastic task has a guess"),
        }
    }

    /// Installs a proposed program into the searched slot. `None` when the
    /// proposal's kind does not match the task.
    pub fn assemble(&self, program: LawProgram) -> Option<LawPair> {
        if program.kind != self.kind {
            return None;
        }
        Some(match self.kind {
            LawKind::Elastic => LawPair { elastic: program, plastic: None },
            LawKind::Plastic => LawPair {
                elastic: self.initial_guess.elastic.clone(),
                plastic: Some(program),
            },
        })
    }

    pub fn initial_state(&self) -> ParticleState {
        let mut state = init_scene(&self.sim, &self.scene).expect("catalog geometry fits the domain");
        for v in state.velocities.iter_mut() {
            *v = self.impact_velocity;
        }
        state
    }
}

/// The shared desk-scale scene: D=2, 32² grid, dt 2e-4 s, 25 frames of 4
/// substeps, a block hitting the floor band of the unit box.
fn desk_sim(seed: u64) -> SimConfig {
    SimConfig {
        dim: 2,
        grid_res: 32,
        dt: 2e-4,
        n_steps: 25,
        substeps_per_frame: 4,
        gravity: Vect::from_slice(2, &[0.0, -9.8]),
        particle_mass: 1.0,
        particle_volume: (1.0 / 64.0) * (1.0 / 64.0),
        boundary: Boundary::SlipBox,
        seed,
    }
}

/// Task (a) runs longer, with a sticky floor and an oblique impact: the
/// pinned base shears the block through large rotations, where small-strain
/// linear elasticity develops spurious stress and the nonlinear family does
/// not. This is what separates the two families on trajectories.
fn elastic_task_sim(seed: u64) -> SimConfig {
    SimConfig { n_steps: 50, boundary: Boundary::Sticky, ..desk_sim(seed) }
}

fn desk_scene() -> Geometry {
    Geometry::Box {
        center: Vect::from_slice(2, &[0.5, 0.2]),
        half_extents: Vect::from_slice(2, &[0.12, 0.1375]),
    }
}

/// Elastic base used by the plastic tasks: the nonlinear elastic law at a
/// soft stiffness so strains are large enough for the corrections to act.
fn soft_base() -> LawProgram {
    fixtures::neo_hookean().with_defaults(&[11.0, -1.99])
}

/// Invented material: convex blend of the three plastic corrections with
/// weights 0.5 / 0.3 / 0.2 on the corrected deformation gradients.
pub const BLENDED_IMAGINARY: &str = r#"law plastic "blended_imaginary" {
  params {
    gamma = -0.07;
    elastic_limit = 0.92;
    hardening_factor = 0.1;
    blend = 0.0;
  }
  forward(F: mat) -> mat {
    let J = det(F);
    # determinant-driven softening
    let Fy = F - (gamma * tanh(J - 1.0)) * (F - identity());
    # principal-stretch clamp with volume restore
    let R = polar_r(F);
    let S = polar_s(F);
    let sig = sym_eigvals(S);
    let strain = relu(sig - elastic_limit * identity());
    let limit = elastic_limit * (identity() + hardening_factor * strain);
    let Fc = R * sym_reconstruct(S, min(sig, limit));
    let Fg = pow(J / det(Fc), 1.0 / 3.0) * Fc;
    # isotropic volume reset
    let Jc = pow(J, 1.0 / 3.0);
    let Ff = Jc * identity() + blend * (identity() - (1.0 / Jc) * F);
    return 0.5 * Fy + 0.3 * Fg + 0.2 * Ff;
  }
}
"#;

/// Fixed catalog entry for `id`. Deterministic; θ* and thresholds are the
/// calibrated values recorded below.
pub fn make_task(id: TaskId) -> TaskSpec {
    let sim = desk_sim(42);
    let scene = desk_scene();
    match id {
        TaskId::NonlinearElastic => TaskSpec {
            id,
            kind: LawKind::Elastic,
            ground_truth: LawPair::elastic_only(fixtures::neo_hookean()),
            initial_guess: LawPair::elastic_only(fixtures::linear_elastic().with_defaults(&[12.0, 10.0])),
            sim: elastic_task_sim(42),
            scene,
            impact_velocity: Vect::from_slice(2, &[1.5, -1.0]),
            recovery_threshold: RECOVERY_THRESHOLDS[0],
        },
        TaskId::VonMises => plastic_task(id, fixtures::det_tanh_correction(), RECOVERY_THRESHOLDS[1], sim, scene),
        TaskId::Granular => plastic_task(id, fixtures::principal_clamp(), RECOVERY_THRESHOLDS[2], sim, scene),
        TaskId::Fluid => plastic_task(id, fixtures::volume_reset(), RECOVERY_THRESHOLDS[3], sim, scene),
        TaskId::Imaginary => plastic_task(
            id,
            crate::dsl::parse_law(BLENDED_IMAGINARY).expect("catalog law parses"),
            RECOVERY_THRESHOLDS[4],
            sim,
            scene,
        ),
    }
}

/// Per-task recovery thresholds (MSE, m²), fixed by calibration runs: for
/// each task the optimized initial guess stays above its threshold (by 3x
/// or more) and a ground-truth-family refit from perturbed θ* lands below
/// it (by 3x or more). Calibrated values (150 Adam steps, lr 0.05):
///   a: guess floor 5.0e-7, refit 3.7e-8
///   b: guess floor 3.2e-9, refit < 1e-15
///   c: guess floor 7.3e-6, refit 8.7e-11
///   d: guess floor 2.5e-7, refit < 1e-13
///   x: guess floor 1.9e-6, refit 5.1e-11
const RECOVERY_THRESHOLDS: [f64; 5] = [1e-7, 1e-10, 1e-8, 1e-9, 1e-9];

fn plastic_task(id: TaskId, gt_plastic: LawProgram, recovery_threshold: f64, sim: SimConfig, scene: Geometry) -> TaskSpec {
    TaskSpec {
        id,
        kind: LawKind::Plastic,
        ground_truth: LawPair { elastic: soft_base(), plastic: Some(gt_plastic) },
        initial_guess: LawPair { elastic: soft_base(), plastic: Some(fixtures::no_correction()) },
        sim,
        scene,
        impact_velocity: impact(),
        recovery_threshold,
    }
}

/// Shared impact condition: the block hits the floor at 0.8 m/s.
fn impact() -> Vect {
    Vect::from_slice(2, &[0.0, -0.8])
}

/// Simulates the ground-truth law pair at its catalog θ*. An invalid run
/// here is a catalog bug, not a runtime condition.
pub fn generate_ground_truth(task: &TaskSpec) -> Result<Trajectory, GroundTruthUnstable> {
    let initial = task.initial_state();
    let theta = ThetaPair::defaults_of(&task.ground_truth);
    let (trajectory, _, validity) = simulate(&task.sim, &task.ground_truth, &theta, &initial);
    if !validity.is_valid() {
        return Err(GroundTruthUnstable {
            task: task.id,
            detail: format!("simulation went invalid after {} frames", trajectory.n_frames()),
        });
    }
    Ok(trajectory)
}
