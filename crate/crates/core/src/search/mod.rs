//! The bilevel outer loop: seed the heap with the optimized initial guess,
//! then iterate propose → parse → inner-optimize → push, and return the
//! best candidate.

mod heap;
mod run;

pub use heap::SolutionHeap;
pub use run::{candidate_seed, run_search, SearchError, SearchOutcome};

use serde::{Deserialize, Serialize};

use crate::dsl::LawProgram;
use crate::mpm::Validity;
use crate::opt::OptResult;
use crate::proposer::FeedbackSummary;

/// Algorithm knobs. Defaults: 5 iterations over a top-5 history with 4
/// exploit offspring at temperature 0.5 and 12 explore offspring at 1.0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchConfig {
    pub n_iterations: u32,
    pub history_k: usize,
    pub n_exploit: usize,
    pub n_explore: usize,
    pub temp_exploit: f64,
    pub temp_explore: f64,
    pub heap_capacity: usize,
    pub root_seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_iterations: 5,
            history_k: 5,
            n_exploit: 4,
            n_explore: 12,
            temp_exploit: 0.5,
            temp_explore: 1.0,
            heap_capacity: 64,
            root_seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_iterations < 1 {
            return Err("n_iterations must be >= 1".into());
        }
        if self.history_k < 1 {
            return Err("history_k must be >= 1".into());
        }
        if self.n_exploit + self.n_explore < 1 {
            return Err("need at least one offspring per iteration".into());
        }
        if !(0.0 <= self.temp_exploit && self.temp_exploit <= self.temp_explore && self.temp_explore <= 2.0) {
            return Err("temperatures must satisfy 0 <= T_exploit <= T_explore <= 2".into());
        }
        if self.heap_capacity < 1 {
            return Err("heap_capacity must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Seed,
    Exploit,
    Explore,
}

/// One outer-loop solution: a parsed program with its inner-optimization
/// outcome and the feedback that will represent it in future prompts.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub id: u64,
    pub iteration: u32,
    pub group: Group,
    pub program: LawProgram,
    pub opt: OptResult,
    pub feedback: FeedbackSummary,
    pub validity: Validity,
}
