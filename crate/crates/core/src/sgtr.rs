//! SGTR trajectory files.
//!
//! Layout (all little-endian): magic `SGTR`, u32 version = 1, u32 dim,
//! u32 n_particles, u32 n_frames, f64 frame dt (seconds), then frame-major
//! f64 positions (frame, then particle, then axis). Bit-exact: writing and
//! re-reading reproduces the trajectory exactly.

use std::io::Read;
use std::path::Path;

use crate::linalg::Vect;
use crate::mpm::Trajectory;

pub const MAGIC: &[u8; 4] = b"SGTR";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SgtrError {
    #[error("bad magic: not an SGTR file")]
    BadMagic,
    #[error("version mismatch: found {found}, expected {VERSION}")]
    VersionMismatch { found: u32 },
    #[error("truncated file: expected {expected} more bytes")]
    TruncatedFile { expected: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn save_trajectory(path: &Path, t: &Trajectory) -> Result<(), SgtrError> {
    std::fs::write(path, to_bytes(t))?;
    Ok(())
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory, SgtrError> {
    let mut f = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    let mut cur = 0usize;

    let take = |cur: &mut usize, n: usize| -> Result<&[u8], SgtrError> {
        if *cur + n > bytes.len() {
            return Err(SgtrError::TruncatedFile { expected: *cur + n - bytes.len() });
        }
        let s = &bytes[*cur..*cur + n];
        *cur += n;
        Ok(s)
    };

    if take(&mut cur, 4)? != MAGIC {
        return Err(SgtrError::BadMagic);
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let version = u32_at(take(&mut cur, 4)?);
    if version != VERSION {
        return Err(SgtrError::VersionMismatch { found: version });
    }
    let dim = u32_at(take(&mut cur, 4)?) as usize;
    if dim != 2 && dim != 3 {
        return Err(SgtrError::MalformedHeader(format!("dim {dim}")));
    }
    let n_particles = u32_at(take(&mut cur, 4)?) as usize;
    let n_frames = u32_at(take(&mut cur, 4)?) as usize;
    let frame_dt = f64::from_le_bytes(take(&mut cur, 8)?.try_into().unwrap());

    let mut frames = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        let mut frame = Vec::with_capacity(n_particles);
        for _ in 0..n_particles {
            let mut p = Vect::zero(dim);
            for d in 0..dim {
                p.v[d] = f64::from_le_bytes(take(&mut cur, 8)?.try_into().unwrap());
            }
            frame.push(p);
        }
        frames.push(frame);
    }
    if cur != bytes.len() {
        return Err(SgtrError::MalformedHeader(format!("{} trailing bytes", bytes.len() - cur)));
    }
    Ok(Trajectory { dim, n_particles, frame_dt, frames })
}

/// Exact serialized bytes of a trajectory.
pub fn to_bytes(t: &Trajectory) -> Vec<u8> {
    let mut buf = Vec::with_capacity(28 + t.n_frames() * t.n_particles * t.dim * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(t.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(t.n_particles as u32).to_le_bytes());
    buf.extend_from_slice(&(t.n_frames() as u32).to_le_bytes());
    buf.extend_from_slice(&t.frame_dt.to_le_bytes());
    for frame in &t.frames {
        for p in frame {
            for d in 0..t.dim {
                buf.extend_from_slice(&p.v[d].to_le_bytes());
            }
        }
    }
    buf
}
