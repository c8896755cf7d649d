//! Loss-ordered bounded candidate store.

use crate::mpm::Validity;

use super::Candidate;

/// Valid candidates in ascending (final_loss, id) order, truncated to a
/// fixed capacity. Invalid candidates never enter.
#[derive(Clone, Debug)]
pub struct SolutionHeap {
    entries: Vec<Candidate>,
    capacity: usize,
}

impl SolutionHeap {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        SolutionHeap { entries: Vec::new(), capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts a valid candidate in order, evicting the worst entry on
    /// overflow. Returns false when the candidate was dropped (invalid).
    pub fn push(&mut self, candidate: Candidate) -> bool {
        if candidate.validity != Validity::Valid || !candidate.opt.final_loss.is_finite() {
            return false;
        }
        let key = (candidate.opt.final_loss, candidate.id);
        let pos = self
            .entries
            .partition_point(|c| (c.opt.final_loss, c.id) <= key);
        self.entries.insert(pos, candidate);
        self.entries.truncate(self.capacity);
        true
    }

    /// The first min(k, len) entries, best first.
    pub fn topk(&self, k: usize) -> &[Candidate] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.entries.first()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::fixtures;
    use crate::opt::OptResult;
    use crate::proposer::FeedbackSummary;
    use crate::search::Group;

    fn candidate(id: u64, loss: f64, validity: Validity) -> Candidate {
        Candidate {
            id,
            iteration: 0,
            group: Group::Explore,
            program: fixtures::zero_stress(),
            opt: OptResult {
                theta_hat: vec![],
                final_loss: loss,
                loss_curve: vec![(0, loss)],
                validity,
                best_step: 0,
            },
            feedback: FeedbackSummary::invalid("test"),
            validity,
        }
    }

    #[test]
    fn orders_ascending_by_loss() {
        let mut heap = SolutionHeap::new(8);
        for (id, loss) in [(0u64, 5.0), (1, 1.0), (2, 3.0)] {
            assert!(heap.push(candidate(id, loss, Validity::Valid)));
        }
        let losses: Vec<f64> = heap.topk(3).iter().map(|c| c.opt.final_loss).collect();
        assert_eq!(losses, vec![1.0, 3.0, 5.0]);
    }

    #[test]
    fn invalid_candidates_are_dropped() {
        let mut heap = SolutionHeap::new(8);
        assert!(!heap.push(candidate(0, f64::INFINITY, Validity::Invalid)));
        assert!(heap.is_empty());
    }

    #[test]
    fn equal_losses_tie_break_on_earlier_id() {
        let mut heap = SolutionHeap::new(8);
        heap.push(candidate(9, 2.0, Validity::Valid));
        heap.push(candidate(4, 2.0, Validity::Valid));
        let ids: Vec<u64> = heap.topk(2).iter().map(|c| c.id).collect();
        assert_eq!(ids, vec![4, 9]);
    }

    #[test]
    fn overflow_evicts_worst() {
        let mut heap = SolutionHeap::new(2);
        heap.push(candidate(0, 5.0, Validity::Valid));
        heap.push(candidate(1, 1.0, Validity::Valid));
        heap.push(candidate(2, 3.0, Validity::Valid));
        let losses: Vec<f64> = heap.topk(5).iter().map(|c| c.opt.final_loss).collect();
        assert_eq!(losses, vec![1.0, 3.0]);
    }

    #[test]
    fn topk_clamps_to_len() {
        let mut heap = SolutionHeap::new(4);
        heap.push(candidate(0, 1.0, Validity::Valid));
        assert_eq!(heap.topk(10).len(), 1);
    }
}
