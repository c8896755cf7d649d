//! The outer search loop.
//!
//! Offspring for one iteration are requested sequentially (one completion
//! per slot, so scripted queues map to slots by index), then inner-optimized
//! in parallel, then merged into the heap and the log in candidate-id order
//! regardless of completion order.

use rayon::prelude::*;

use crate::dsl::LawProgram;
use crate::mpm::{simulate, ParticleState, ThetaPair, Trajectory, Validity};
use crate::opt::{optimize, OptConfig, OptResult};
use crate::proposer::{
    build_prompt, fnv1a, parse_proposal, propose, FeedbackSummary, ProposerBackend,
};
use crate::runlog::{Event, ParseStatus, RunLog};
use crate::tasks::{generate_ground_truth, TaskSpec};

use super::{Candidate, Group, SearchConfig, SolutionHeap};

#[derive(Clone, Debug, thiserror::Error)]
pub enum SearchError {
    #[error("no valid candidate: the initial guess failed to simulate ({0})")]
    NoValidCandidate(String),
    #[error("invalid search config: {0}")]
    BadConfig(String),
}

#[derive(Debug)]
pub struct SearchOutcome {
    pub best: Candidate,
    pub log: RunLog,
}

/// Deterministic per-candidate seed (splitmix64 over the packed inputs).
pub fn candidate_seed(root_seed: u64, iteration: u32, offspring_index: usize) -> u64 {
    let mut z = root_seed
        .wrapping_add((iteration as u64).wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add((offspring_index as u64 + 1).wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn config_fingerprint(task: &TaskSpec, cfg: &SearchConfig, opt: &OptConfig) -> u64 {
    let text = format!("{}|{:?}|{:?}|{:?}", task.id, task.sim, cfg, opt);
    fnv1a(text.as_bytes())
}

/// Inner-optimizes one parsed program against the task target and wraps the
/// outcome as a candidate, including the feedback rendering inputs.
fn evaluate_candidate(
    task: &TaskSpec,
    opt_cfg: &OptConfig,
    initial: &ParticleState,
    target: &Trajectory,
    id: u64,
    iteration: u32,
    group: Group,
    program: LawProgram,
) -> Candidate {
    let laws = task.assemble(program.clone()).expect("kind checked before evaluation");
    let opt_res = optimize(&laws, task.free_slot(), &task.sim, opt_cfg, initial, target);
    let feedback = build_feedback(task, &laws, &opt_res, initial, target);
    let validity = opt_res.validity;
    Candidate { id, iteration, group, program, opt: opt_res, feedback, validity }
}

fn build_feedback(
    task: &TaskSpec,
    laws: &crate::mpm::LawPair,
    opt_res: &OptResult,
    initial: &ParticleState,
    target: &Trajectory,
) -> FeedbackSummary {
    if opt_res.validity != Validity::Valid {
        return FeedbackSummary::invalid("simulation invalid: non-finite state or law evaluation error");
    }
    // Re-simulate at the best iterate for the per-frame error table.
    let free_law = match task.free_slot() {
        crate::opt::FreeSlot::Elastic => &laws.elastic,
        crate::opt::FreeSlot::Plastic => laws.plastic.as_ref().expect("plastic slot"),
    };
    let mut theta = ThetaPair::defaults_of(laws);
    match task.free_slot() {
        crate::opt::FreeSlot::Elastic => theta.elastic = opt_res.theta_hat.clone(),
        crate::opt::FreeSlot::Plastic => theta.plastic = opt_res.theta_hat.clone(),
    }
    let (traj, _, validity) = simulate(&task.sim, laws, &theta, initial);
    let per_frame: Vec<f64> = if validity == Validity::Valid {
        traj.frames
            .iter()
            .zip(&target.frames)
            .map(|(a, b)| {
                let mut acc = 0.0;
                for (pa, pb) in a.iter().zip(b) {
                    acc += pa.sub(pb).norm();
                }
                acc / a.len() as f64
            })
            .collect()
    } else {
        Vec::new()
    };
    FeedbackSummary {
        final_loss: opt_res.final_loss,
        loss_curve: opt_res.loss_curve.clone(),
        theta_hat_named: free_law
            .params
            .iter()
            .zip(&opt_res.theta_hat)
            .map(|(p, v)| (p.name.clone(), *v))
            .collect(),
        per_frame_error: FeedbackSummary::subsample_frames(&per_frame),
        validity: Validity::Valid,
        error_message: None,
    }
}

/// Runs the full bilevel search and returns the best candidate plus the
/// structured log of everything that happened.
pub fn run_search(
    task: &TaskSpec,
    cfg: &SearchConfig,
    backend: &ProposerBackend,
    opt_cfg: &OptConfig,
) -> Result<SearchOutcome, SearchError> {
    cfg.validate().map_err(SearchError::BadConfig)?;
    let mut log = RunLog::new();
    log.push(Event::RunStarted {
        config_hash: config_fingerprint(task, cfg, opt_cfg),
        heap_capacity: cfg.heap_capacity,
    });

    let initial = task.initial_state();
    let target =
        generate_ground_truth(task).map_err(|e| SearchError::NoValidCandidate(e.to_string()))?;
    let mut heap = SolutionHeap::new(cfg.heap_capacity);
    let mut next_id: u64 = 0;

    // Seed: optimize the task's initial guess and require it to be valid.
    let seed_id = next_id;
    next_id += 1;
    log.push(Event::CandidateProposed {
        id: seed_id,
        iteration: 0,
        group: Group::Seed,
        temperature: 0.0,
        prompt_hash: 0,
    });
    log.push(Event::CandidateParsed { id: seed_id, status: ParseStatus::Ok, message: None });
    let seed = evaluate_candidate(
        task,
        opt_cfg,
        &initial,
        &target,
        seed_id,
        0,
        Group::Seed,
        task.guess_program().clone(),
    );
    log.push(Event::InnerOptDone {
        id: seed.id,
        final_loss: seed.opt.final_loss.is_finite().then_some(seed.opt.final_loss),
        steps: seed.opt.loss_curve.len(),
        validity: seed.validity,
    });
    if seed.validity != Validity::Valid {
        return Err(SearchError::NoValidCandidate(
            "seed optimization produced an invalid result".into(),
        ));
    }
    heap.push(seed);
    log.push(Event::HeapUpdated { best_loss: heap.best().unwrap().opt.final_loss });

    for iteration in 1..=cfg.n_iterations {
        let prompt = build_prompt(heap.topk(cfg.history_k), task.kind)
            .expect("heap holds at least the seed");
        let prompt_hash = prompt.hash();

        // Request one completion per offspring slot: exploit group first,
        // then explore. Sequential on purpose — scripted queues assign
        // responses to slots by index.
        let mut pending: Vec<(u64, Group, LawProgram)> = Vec::new();
        for slot in 0..cfg.n_exploit + cfg.n_explore {
            let (group, temperature) = if slot < cfg.n_exploit {
                (Group::Exploit, cfg.temp_exploit)
            } else {
                (Group::Explore, cfg.temp_explore)
            };
            let id = next_id;
            next_id += 1;
            log.push(Event::CandidateProposed { id, iteration, group, temperature, prompt_hash });
            let seed_hint = candidate_seed(cfg.root_seed, iteration, slot);
            let texts = propose(backend, &prompt, temperature, 1, Some(seed_hint));
            match texts.into_iter().next() {
                None => {
                    log.push(Event::CandidateParsed { id, status: ParseStatus::Missing, message: None });
                }
                Some(text) => match parse_proposal(&text) {
                    Ok((program, _analysis)) => {
                        if program.kind != task.kind {
                            log.push(Event::CandidateParsed {
                                id,
                                status: ParseStatus::Error,
                                message: Some(format!(
                                    "law kind {} does not fit this task",
                                    program.kind.keyword()
                                )),
                            });
                        } else {
                            log.push(Event::CandidateParsed { id, status: ParseStatus::Ok, message: None });
                            pending.push((id, group, program));
                        }
                    }
                    Err(err) => {
                        log.push(Event::CandidateParsed {
                            id,
                            status: ParseStatus::Error,
                            message: Some(err.to_string()),
                        });
                    }
                },
            }
        }

        // Fan out the expensive inner optimizations; results come back in
        // slot order because collect preserves input order.
        let evaluated: Vec<Candidate> = pending
            .into_par_iter()
            .map(|(id, group, program)| {
                evaluate_candidate(task, opt_cfg, &initial, &target, id, iteration, group, program)
            })
            .collect();

        for candidate in evaluated {
            log.push(Event::InnerOptDone {
                id: candidate.id,
                final_loss: candidate.opt.final_loss.is_finite().then_some(candidate.opt.final_loss),
                steps: candidate.opt.loss_curve.len(),
                validity: candidate.validity,
            });
            if heap.push(candidate) {
                log.push(Event::HeapUpdated { best_loss: heap.best().unwrap().opt.final_loss });
            }
        }
    }

    let best = heap.best().expect("heap holds at least the seed").clone();
    log.push(Event::RunFinished { best_id: best.id });
    Ok(SearchOutcome { best, log })
}
