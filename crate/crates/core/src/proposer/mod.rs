//! The LLM side of the outer loop: prompt assembly from top-K history,
//! completion backends (HTTP chat or a deterministic scripted queue), and
//! proposal parsing.

mod backend;
mod parse;
mod prompt;

pub use backend::{propose, HttpChatBackend, ProposerBackend, ScriptedBackend, ScriptedCall};
pub use parse::{parse_proposal, ProposalError};
pub use prompt::{build_prompt, render_feedback, EmptyHistory, PromptBundle};

use crate::mpm::Validity;

/// What a candidate's inner optimization looked like, rendered into the
/// prompt history for the next round of proposals.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackSummary {
    pub final_loss: f64,
    pub loss_curve: Vec<(usize, f64)>,
    /// Optimized parameter values, by declared name.
    pub theta_hat_named: Vec<(String, f64)>,
    /// Mean particle position error per frame, meters; subsampled to at
    /// most [`MAX_FRAME_ROWS`] rows.
    pub per_frame_error: Vec<(usize, f64)>,
    pub validity: Validity,
    pub error_message: Option<String>,
}

pub const MAX_FRAME_ROWS: usize = 10;

impl FeedbackSummary {
    pub fn invalid(message: impl Into<String>) -> Self {
        FeedbackSummary {
            final_loss: f64::INFINITY,
            loss_curve: Vec::new(),
            theta_hat_named: Vec::new(),
            per_frame_error: Vec::new(),
            validity: Validity::Invalid,
            error_message: Some(message.into()),
        }
    }

    /// Subsamples a per-frame error series to at most MAX_FRAME_ROWS rows.
    pub fn subsample_frames(errors: &[f64]) -> Vec<(usize, f64)> {
        if errors.is_empty() {
            return Vec::new();
        }
        let stride = errors.len().div_ceil(MAX_FRAME_ROWS);
        errors
            .iter()
            .enumerate()
            .filter(|(i, _)| i % stride == 0)
            .map(|(i, e)| (i, *e))
            .collect()
    }
}

/// Stable 64-bit FNV-1a, used wherever the logs need a reproducible hash
/// (prompt hashes, config hashes) independent of Rust's hasher seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
