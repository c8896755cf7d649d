//! Append-only structured run log: one JSON object per line, strictly
//! ordered by sequence number, with no wall-clock content so identical
//! runs serialize to identical bytes. The final heap state and best
//! candidate are reconstructible from the log alone.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mpm::Validity;
use crate::search::Group;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Error,
    /// The backend returned nothing for this slot (transport failure or an
    /// exhausted scripted queue) — distinct from an invalid parse.
    Missing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    RunStarted {
        config_hash: u64,
        heap_capacity: usize,
    },
    CandidateProposed {
        id: u64,
        iteration: u32,
        group: Group,
        temperature: f64,
        prompt_hash: u64,
    },
    CandidateParsed {
        id: u64,
        status: ParseStatus,
        #[serde(skip_serializing_if = "Option::is_none")]
        message: Option<String>,
    },
    InnerOptDone {
        id: u64,
        /// None when the result was invalid (no finite loss exists).
        final_loss: Option<f64>,
        steps: usize,
        validity: Validity,
    },
    HeapUpdated {
        best_loss: f64,
    },
    RunFinished {
        best_id: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    lines: Vec<Line>,
}

impl RunLog {
    pub fn new() -> Self {
        RunLog::default()
    }

    pub fn push(&mut self, event: Event) {
        let seq = self.lines.len() as u64;
        self.lines.push(Line { seq, event });
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.lines.iter().map(|l| &l.event)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(&serde_json::to_string(line).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())
    }

    pub fn read_from(path: &Path) -> std::io::Result<RunLog> {
        let f = std::fs::File::open(path)?;
        let mut lines = Vec::new();
        for line in std::io::BufReader::new(f).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            lines.push(parsed);
        }
        Ok(RunLog { lines })
    }

    /// Rebuilds the final heap (id, loss), ascending, from the log alone:
    /// valid inner-opt results ordered by (loss, id) and truncated to the
    /// logged capacity.
    pub fn replay_heap(&self) -> Vec<(u64, f64)> {
        let capacity = self
            .events()
            .find_map(|e| match e {
                Event::RunStarted { heap_capacity, .. } => Some(*heap_capacity),
                _ => None,
            })
            .unwrap_or(usize::MAX);
        let mut entries: Vec<(u64, f64)> = self
            .events()
            .filter_map(|e| match e {
                Event::InnerOptDone { id, final_loss: Some(loss), validity: Validity::Valid, .. } => {
                    Some((*id, *loss))
                }
                _ => None,
            })
            .collect();
        entries.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        entries.truncate(capacity);
        entries
    }

    pub fn replay_best(&self) -> Option<(u64, f64)> {
        self.replay_heap().into_iter().next()
    }

    /// Iteration of each candidate id, from the proposal events.
    fn iteration_of(&self) -> std::collections::HashMap<u64, u32> {
        self.events()
            .filter_map(|e| match e {
                Event::CandidateProposed { id, iteration, .. } => Some((*id, *iteration)),
                _ => None,
            })
            .collect()
    }

    /// Per-iteration tallies (iteration, n_valid, n_invalid, n_missing).
    /// Parse failures and invalid inner-opt results both count as invalid.
    pub fn validity_histogram(&self) -> Vec<(u32, usize, usize, usize)> {
        let iter_of = self.iteration_of();
        let max_iter = iter_of.values().copied().max().unwrap_or(0);
        let mut rows = vec![(0u32, 0usize, 0usize, 0usize); max_iter as usize + 1];
        for (i, row) in rows.iter_mut().enumerate() {
            row.0 = i as u32;
        }
        for e in self.events() {
            match e {
                Event::CandidateParsed { id, status: ParseStatus::Missing, .. } => {
                    if let Some(&it) = iter_of.get(id) {
                        rows[it as usize].3 += 1;
                    }
                }
                Event::CandidateParsed { id, status: ParseStatus::Error, .. } => {
                    if let Some(&it) = iter_of.get(id) {
                        rows[it as usize].2 += 1;
                    }
                }
                Event::InnerOptDone { id, validity, .. } => {
                    if let Some(&it) = iter_of.get(id) {
                        match validity {
                            Validity::Valid => rows[it as usize].1 += 1,
                            Validity::Invalid => rows[it as usize].2 += 1,
                        }
                    }
                }
                _ => {}
            }
        }
        rows
    }

    /// Running best loss per iteration (iteration, best_loss_so_far).
    pub fn loss_trend(&self) -> Vec<(u32, f64)> {
        let iter_of = self.iteration_of();
        let max_iter = iter_of.values().copied().max().unwrap_or(0);
        let mut best_at = vec![f64::INFINITY; max_iter as usize + 1];
        for e in self.events() {
            if let Event::InnerOptDone { id, final_loss: Some(loss), validity: Validity::Valid, .. } = e {
                if let Some(&it) = iter_of.get(id) {
                    if *loss < best_at[it as usize] {
                        best_at[it as usize] = *loss;
                    }
                }
            }
        }
        let mut rows = Vec::with_capacity(best_at.len());
        let mut running = f64::INFINITY;
        for (i, loss) in best_at.iter().enumerate() {
            running = running.min(*loss);
            rows.push((i as u32, running));
        }
        rows
    }
}

/// Writes `loss_trend.csv` and `validity_hist.csv` into `outdir`.
pub fn emit_plot_data(log: &RunLog, outdir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(outdir)?;
    let mut trend = String::from("iteration,best_loss_so_far\n");
    for (iter, loss) in log.loss_trend() {
        trend.push_str(&format!("{iter},{loss:.9e}\n"));
    }
    std::fs::write(outdir.join("loss_trend.csv"), trend)?;

    let mut hist = String::from("iteration,n_valid,n_invalid,n_missing\n");
    for (iter, valid, invalid, missing) in log.validity_histogram() {
        hist.push_str(&format!("{iter},{valid},{invalid},{missing}\n"));
    }
    std::fs::write(outdir.join("validity_hist.csv"), hist)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_log() -> RunLog {
        let mut log = RunLog::new();
        log.push(Event::RunStarted { config_hash: 42, heap_capacity: 8 });
        log.push(Event::CandidateProposed { id: 0, iteration: 0, group: Group::Seed, temperature: 0.0, prompt_hash: 0 });
        log.push(Event::CandidateParsed { id: 0, status: ParseStatus::Ok, message: None });
        log.push(Event::InnerOptDone { id: 0, final_loss: Some(2.0), steps: 10, validity: Validity::Valid });
        log.push(Event::HeapUpdated { best_loss: 2.0 });
        log.push(Event::CandidateProposed { id: 1, iteration: 1, group: Group::Exploit, temperature: 0.5, prompt_hash: 7 });
        log.push(Event::CandidateParsed { id: 1, status: ParseStatus::Ok, message: None });
        log.push(Event::InnerOptDone { id: 1, final_loss: Some(0.5), steps: 10, validity: Validity::Valid });
        log.push(Event::HeapUpdated { best_loss: 0.5 });
        log.push(Event::CandidateProposed { id: 2, iteration: 1, group: Group::Explore, temperature: 1.0, prompt_hash: 7 });
        log.push(Event::CandidateParsed { id: 2, status: ParseStatus::Missing, message: None });
        log.push(Event::RunFinished { best_id: 1 });
        log
    }

    #[test]
    fn jsonl_round_trip() {
        let log = sample_log();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.log");
        log.write_to(&path).unwrap();
        let back = RunLog::read_from(&path).unwrap();
        assert_eq!(log, back);
    }

    #[test]
    fn replay_reconstructs_best_and_heap() {
        let log = sample_log();
        assert_eq!(log.replay_best(), Some((1, 0.5)));
        assert_eq!(log.replay_heap(), vec![(1, 0.5), (0, 2.0)]);
    }

    #[test]
    fn histogram_counts_missing_separately() {
        let log = sample_log();
        let rows = log.validity_histogram();
        assert_eq!(rows[0], (0, 1, 0, 0));
        assert_eq!(rows[1], (1, 1, 0, 1));
    }

    #[test]
    fn loss_trend_is_running_min() {
        let log = sample_log();
        assert_eq!(log.loss_trend(), vec![(0, 2.0), (1, 0.5)]);
    }
}
