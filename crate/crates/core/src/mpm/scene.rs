//! Scene construction: jittered-lattice particle sampling inside simple
//! geometry, deterministic in the config seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{Mat, Vect};

use super::{ParticleState, SimConfig};

#[derive(Clone, Copy, Debug)]
pub enum Geometry {
    /// Axis-aligned box given by center and half-extents.
    Box { center: Vect, half_extents: Vect },
    Ball { center: Vect, radius: f64 },
}

#[derive(Clone, Debug, thiserror::Error)]
#[error("geometry out of bounds: {0}")]
pub struct GeometryError(pub String);

/// Particles per cell per axis on the sampling lattice.
const LATTICE_PER_CELL: usize = 2;

/// Samples particles on a jittered lattice inside `geometry`. F starts at
/// the identity, velocities at zero. The same seed always produces the
/// same particle set.
pub fn init_scene(config: &SimConfig, geometry: &Geometry) -> Result<ParticleState, GeometryError> {
    config.validate().map_err(GeometryError)?;
    let dim = config.dim;
    let dx = config.dx();
    let margin = 2.0 * dx;

    let (lo, hi) = bounds(geometry, dim);
    for d in 0..dim {
        if lo.v[d] < margin || hi.v[d] > 1.0 - margin {
            return Err(GeometryError(format!(
                "axis {d}: [{}, {}] must keep a {margin} margin inside the unit box",
                lo.v[d], hi.v[d]
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let spacing = dx / LATTICE_PER_CELL as f64;
    let jitter = 0.25 * spacing;

    let mut positions = Vec::new();
    let mut counts = [1usize; 3];
    for d in 0..dim {
        counts[d] = (((hi.v[d] - lo.v[d]) / spacing).floor() as usize).max(1);
    }
    let total: usize = counts[..dim].iter().product();
    for linear in 0..total {
        let mut rem = linear;
        let mut x = Vect::zero(dim);
        for d in (0..dim).rev() {
            let i = rem % counts[d];
            rem /= counts[d];
            x.v[d] = lo.v[d] + (i as f64 + 0.5) * spacing;
        }
        for d in 0..dim {
            x.v[d] += rng.gen_range(-jitter..jitter);
        }
        if contains(geometry, &x, dim) {
            positions.push(x);
        }
    }

    let n = positions.len();
    Ok(ParticleState {
        dim,
        positions,
        velocities: vec![Vect::zero(dim); n],
        deformation_gradients: vec![Mat::identity(dim); n],
        affine_velocities: vec![Mat::zero(dim); n],
    })
}

fn bounds(geometry: &Geometry, dim: usize) -> (Vect, Vect) {
    match geometry {
        Geometry::Box { center, half_extents } => (center.sub(half_extents), center.add(half_extents)),
        Geometry::Ball { center, radius } => {
            let mut r = Vect::zero(dim);
            for d in 0..dim {
                r.v[d] = *radius;
            }
            (center.sub(&r), center.add(&r))
        }
    }
}

fn contains(geometry: &Geometry, x: &Vect, dim: usize) -> bool {
    match geometry {
        Geometry::Box { center, half_extents } => {
            (0..dim).all(|d| (x.v[d] - center.v[d]).abs() <= half_extents.v[d])
        }
        Geometry::Ball { center, radius } => x.sub(center).norm() <= *radius,
    }
}
