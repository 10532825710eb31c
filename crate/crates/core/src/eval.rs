//! First-error detection and best-of-N reranking.
//!
//! A step is flagged when its right-score falls below a threshold; the first
//! flagged step is the predicted first error. Erroneous trajectories count as
//! solved only when the prediction equals the gold index exactly, clean ones
//! only when nothing is flagged. The headline number is the harmonic mean of
//! the two accuracies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::StepScorer;
use crate::types::{StepContent, StepProbabilities, Trajectory};

pub const DEFAULT_THRESHOLD: f64 = 0.9;

/// `0.05, 0.10, ..., 0.95`.
pub fn default_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

/// `2ab / (a + b)`, or 0 when `a + b = 0`.
pub fn harmonic_f1(a: f64, b: f64) -> f64 {
    if a + b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )))
    }
}

/// Smallest 1-based `t` with `right_scores[t] < threshold`.
pub fn first_below(right_scores: &[f64], threshold: f64) -> Option<usize> {
    right_scores
        .iter()
        .position(|&r| r < threshold)
        .map(|i| i + 1)
}

pub fn predict_first_error(probs: &[StepProbabilities], threshold: f64) -> Option<usize> {
    probs
        .iter()
        .position(|p| p.p_right < threshold)
        .map(|i| i + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    /// `None` when the dataset has no erroneous trajectories.
    pub error_accuracy: Option<f64>,
    /// `None` when the dataset has no clean trajectories.
    pub correct_accuracy: Option<f64>,
    pub f1: f64,
    pub n_error: usize,
    pub n_correct: usize,
    pub n_error_hit: usize,
    pub n_correct_hit: usize,
}

impl EvalReport {
    /// Builds the report from raw hit counts.
    pub fn from_counts(
        threshold: f64,
        n_error: usize,
        n_error_hit: usize,
        n_correct: usize,
        n_correct_hit: usize,
    ) -> Self {
        let ratio = |hit: usize, n: usize| (n > 0).then(|| hit as f64 / n as f64);
        let error_accuracy = ratio(n_error_hit, n_error);
        let correct_accuracy = ratio(n_correct_hit, n_correct);
        let f1 = match (error_accuracy, correct_accuracy) {
            (Some(a), Some(b)) => harmonic_f1(a, b),
            _ => 0.0,
        };
        EvalReport {
            threshold,
            error_accuracy,
            correct_accuracy,
            f1,
            n_error,
            n_correct,
            n_error_hit,
            n_correct_hit,
        }
    }
}

/// One line of the prediction log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub predicted: Option<usize>,
    pub gold: Option<usize>,
    pub last_step_right_score: f64,
}

/// Right-scores of one trajectory, kept so several thresholds can reuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrajectory {
    pub id: String,
    pub gold: Option<usize>,
    pub right_scores: Vec<f64>,
}

/// Scores every trajectory; output order matches input order.
pub fn score_dataset<S: StepScorer + ?Sized>(
    dataset: &[Trajectory],
    scorer: &S,
) -> Vec<ScoredTrajectory> {
    dataset
        .par_iter()
        .map(|t| ScoredTrajectory {
            id: t.id.clone(),
            gold: t.gold_first_error,
            right_scores: scorer
                .score_steps(&t.steps)
                .iter()
                .map(|p| p.p_right)
                .collect(),
        })
        .collect()
}

/// Prediction log for one threshold.
pub fn predict_scored(scored: &[ScoredTrajectory], threshold: f64) -> Vec<PredictionRecord> {
    scored
        .iter()
        .map(|s| PredictionRecord {
            id: s.id.clone(),
            predicted: first_below(&s.right_scores, threshold),
            gold: s.gold,
            last_step_right_score: *s.right_scores.last().unwrap_or(&f64::NAN),
        })
        .collect()
}

/// Tallies a prediction log into a report.
pub fn report_from_predictions(log: &[PredictionRecord], threshold: f64) -> EvalReport {
    let (mut n_error, mut n_error_hit, mut n_correct, mut n_correct_hit) = (0, 0, 0, 0);
    for rec in log {
        match rec.gold {
            Some(g) => {
                n_error += 1;
                if rec.predicted == Some(g) {
                    n_error_hit += 1;
                }
            }
            None => {
                n_correct += 1;
                if rec.predicted.is_none() {
                    n_correct_hit += 1;
                }
            }
        }
    }
    EvalReport::from_counts(threshold, n_error, n_error_hit, n_correct, n_correct_hit)
}

/// First-error F1 of `scorer` on `dataset` at `threshold`, with the
/// per-trajectory prediction log it was computed from.
pub fn first_error_f1<S: StepScorer + ?Sized>(
    dataset: &[Trajectory],
    scorer: &S,
    threshold: f64,
) -> Result<(EvalReport, Vec<PredictionRecord>)> {
    check_threshold(threshold)?;
    let scored = score_dataset(dataset, scorer);
    let log = predict_scored(&scored, threshold);
    Ok((report_from_predictions(&log, threshold), log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<EvalReport>,
    /// Threshold with the highest F1; ties go to the smaller threshold.
    pub best_threshold: f64,
    pub best_f1: f64,
}

/// Evaluates pre-scored trajectories at each threshold.
pub fn sweep_scored(scored: &[ScoredTrajectory], thresholds: &[f64]) -> Result<SweepTable> {
    if thresholds.is_empty() {
        return Err(Error::InvalidInput("empty threshold grid".into()));
    }
    for &t in thresholds {
        check_threshold(t)?;
    }
    let rows: Vec<EvalReport> = thresholds
        .iter()
        .map(|&t| report_from_predictions(&predict_scored(scored, t), t))
        .collect();
    let best = rows
        .iter()
        .reduce(|best, r| {
            if r.f1 > best.f1 || (r.f1 == best.f1 && r.threshold < best.threshold) {
                r
            } else {
                best
            }
        })
        .expect("non-empty grid");
    Ok(SweepTable {
        best_threshold: best.threshold,
        best_f1: best.f1,
        rows,
    })
}

pub fn sweep_threshold<S: StepScorer + ?Sized>(
    dataset: &[Trajectory],
    scorer: &S,
    thresholds: &[f64],
) -> Result<SweepTable> {
    sweep_scored(&score_dataset(dataset, scorer), thresholds)
}

/// Picks the candidate whose last step has the highest right-score. Returns a
/// 1-based index; ties go to the lowest index.
pub fn bon_select(candidates: &[Vec<f64>]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let score = *c
            .last()
            .ok_or_else(|| Error::InvalidInput(format!("candidate {} has no steps", i + 1)))?;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((i + 1, score));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidInput("no candidates".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BonCandidate {
    pub right_scores: Vec<f64>,
    pub is_correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BonProblem {
    pub id: String,
    pub candidates: Vec<BonCandidate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BonRow {
    pub n: usize,
    pub accuracy: f64,
}

/// Best-of-n accuracy for each `n`: the fraction of problems whose selected
/// candidate among the first `n` is correct.
pub fn bon_accuracy(problems: &[BonProblem], n_values: &[usize]) -> Result<Vec<BonRow>> {
    if problems.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let required = n_values.iter().copied().max().unwrap_or(0);
    if n_values.contains(&0) {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    if let Some(p) = problems.iter().find(|p| p.candidates.len() < required) {
        return Err(Error::InsufficientCandidates {
            problem_id: p.id.clone(),
            available: p.candidates.len(),
            required,
        });
    }
    n_values
        .iter()
        .map(|&n| {
            let mut hits = 0usize;
            for p in problems {
                let scores: Vec<Vec<f64>> = p.candidates[..n]
                    .iter()
                    .map(|c| c.right_scores.clone())
                    .collect();
                if p.candidates[bon_select(&scores)? - 1].is_correct {
                    hits += 1;
                }
            }
            Ok(BonRow {
                n,
                accuracy: hits as f64 / problems.len() as f64,
            })
        })
        .collect()
}

/// Scores every step with the same probabilities. `always_clean` and
/// `always_first_step` are the trivial first-error baselines.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub StepProbabilities);

impl ConstantScorer {
    pub fn always_clean() -> Self {
        ConstantScorer(StepProbabilities::new(1.0, 0.0, 0.0).expect("valid simplex point"))
    }

    pub fn always_first_step() -> Self {
        ConstantScorer(StepProbabilities::new(0.0, 1.0, 0.0).expect("valid simplex point"))
    }
}

impl StepScorer for ConstantScorer {
    fn score_steps(&self, steps: &[StepContent]) -> Vec<StepProbabilities> {
        vec![self.0; steps.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn probs(right: &[f64]) -> Vec<StepProbabilities> {
        right
            .iter()
            .map(|&r| StepProbabilities::new(r, (1.0 - r) / 2.0, (1.0 - r) / 2.0).unwrap())
            .collect()
    }

    #[test]
    fn first_error_prediction() {
        assert_eq!(
            predict_first_error(&probs(&[0.97, 0.99, 0.11, 0.19]), 0.9),
            Some(3)
        );
        assert_eq!(predict_first_error(&probs(&[0.95, 0.91]), 0.9), None);
        assert_eq!(predict_first_error(&probs(&[0.5, 0.95]), 0.9), Some(1));
    }

    #[test]
    fn f1_values() {
        assert!((harmonic_f1(0.638, 0.886) - 0.742).abs() < 5e-4);
        assert_eq!(harmonic_f1(1.0, 1.0), 1.0);
        assert_eq!(harmonic_f1(0.0, 1.0), 0.0);
        assert_eq!(harmonic_f1(0.0, 0.0), 0.0);
    }

    #[test]
    fn undefined_accuracy_is_flagged() {
        let r = EvalReport::from_counts(0.9, 0, 0, 4, 3);
        assert_eq!(r.error_accuracy, None);
        assert_eq!(r.correct_accuracy, Some(0.75));
        assert_eq!(r.f1, 0.0);
    }

    fn scored(right: &[f64], gold: Option<usize>) -> ScoredTrajectory {
        ScoredTrajectory {
            id: "x".into(),
            gold,
            right_scores: right.to_vec(),
        }
    }

    #[test]
    fn exact_index_matching() {
        let data = vec![
            scored(&[0.95, 0.2, 0.1], Some(2)),
            scored(&[0.95, 0.2, 0.1], Some(3)),
            scored(&[0.95, 0.96], None),
            scored(&[0.95, 0.5], None),
        ];
        let log = predict_scored(&data, 0.9);
        let r = report_from_predictions(&log, 0.9);
        assert_eq!(
            (r.n_error, r.n_error_hit, r.n_correct, r.n_correct_hit),
            (2, 1, 2, 1)
        );
        assert!((r.f1 - 0.5).abs() < 1e-15);
        assert_eq!(log[0].last_step_right_score, 0.1);
    }

    #[test]
    fn sweep_grid_and_ties() {
        let grid = default_grid();
        assert_eq!(grid.len(), 19);
        assert_eq!(grid[0], 0.05);
        assert_eq!(grid[18], 0.95);
        let data = vec![scored(&[0.99, 0.99], None), scored(&[0.99, 0.01], Some(2))];
        let table = sweep_scored(&data, &grid).unwrap();
        assert_eq!(table.rows.len(), 19);
        // every threshold in (0.01, 0.99] gives f1 = 1; the smallest wins
        assert_eq!(table.best_threshold, 0.05);
        assert_eq!(table.best_f1, 1.0);
        assert!(sweep_scored(&data, &[]).is_err());
        assert!(sweep_scored(&data, &[1.0]).is_err());
    }

    #[test]
    fn bon_select_rules() {
        assert_eq!(
            bon_select(&[vec![0.1, 0.2], vec![0.3, 0.9], vec![0.5]]).unwrap(),
            2
        );
        assert_eq!(bon_select(&[vec![0.4]]).unwrap(), 1);
        assert_eq!(bon_select(&[vec![0.4], vec![0.4], vec![0.4]]).unwrap(), 1);
        assert!(bon_select(&[]).is_err());
        assert!(bon_select(&[vec![]]).is_err());
    }

    fn problem(id: &str, cands: &[(f64, bool)]) -> BonProblem {
        BonProblem {
            id: id.into(),
            candidates: cands
                .iter()
                .map(|&(s, ok)| BonCandidate {
                    right_scores: vec![0.5, s],
                    is_correct: ok,
                })
                .collect(),
        }
    }

    #[test]
    fn bon_accuracy_cases() {
        let ps = vec![
            problem("a", &[(0.2, true), (0.9, false), (0.1, true)]),
            problem("b", &[(0.2, false), (0.3, true), (0.9, true)]),
        ];
        let rows = bon_accuracy(&ps, &[1, 2, 3]).unwrap();
        assert_eq!(rows[0].accuracy, 0.5);
        assert_eq!(rows[1].accuracy, 0.5);
        assert_eq!(rows[2].accuracy, 0.5);
        let err = bon_accuracy(&ps, &[4]).unwrap_err();
        assert!(err.to_string().contains("problem a"));
    }

    proptest! {
        #[test]
        fn prediction_moves_earlier_as_threshold_rises(
            right in prop::collection::vec(0.0f64..1.0, 1..12),
            lo in 0.01f64..0.99,
            delta in 0.0f64..0.5,
        ) {
            let hi = (lo + delta).min(0.99);
            let a = first_below(&right, lo);
            let b = first_below(&right, hi);
            match (a, b) {
                (Some(x), Some(y)) => prop_assert!(y <= x),
                (Some(_), None) => prop_assert!(false, "prediction vanished"),
                _ => {}
            }
        }

        #[test]
        fn bon_select_is_monotone_invariant(
            last in prop::collection::vec(0.0f64..1.0, 1..10),
        ) {
            let cands: Vec<Vec<f64>> = last.iter().map(|&s| vec![0.3, s]).collect();
            let warped: Vec<Vec<f64>> = last.iter().map(|&s| vec![0.3, (3.0 * s).exp() - 7.0]).collect();
            prop_assert_eq!(bon_select(&cands).unwrap(), bon_select(&warped).unwrap());
        }

        #[test]
        fn f1_between_accuracies(a in 0.001f64..1.0, b in 0.001f64..1.0) {
            let f = harmonic_f1(a, b);
            prop_assert!(f >= a.min(b) - 1e-15 && f <= a.max(b) + 1e-15);
        }
    }
}
