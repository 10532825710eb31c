//! Step labels copied from the outcome label.

use crate::types::{Label, WeakView};

/// One label per step, all equal to the trajectory outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabels {
    pub labels: Vec<Label>,
}

impl PseudoLabels {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Every step inherits the outcome: all right if the answer is right, all
/// wrong otherwise.
pub fn assign_pseudo_labels(view: WeakView<'_>) -> PseudoLabels {
    PseudoLabels {
        labels: vec![view.outcome; view.steps.len()],
    }
}
