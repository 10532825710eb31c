//! Numerical checks of the objective's gradient identities.
//!
//! Everything here works directly in probability space, except
//! [`gradcheck_model`], which differentiates the full scorer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    backward_step, featurize_step, forward, mix64, FeaturizerConfig, ScorerParameters,
    SparseFeatures,
};
use crate::objective::{
    ce_grad, closed_form, expected_grad, expected_step_loss, grad_gap, step_loss_realized,
};
use crate::types::{Label, StepContent, StepProbabilities};

/// Central-difference step used by every check.
pub const FD_STEP: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(index as u64 ^ 0x5bd1_e995)))
}

/// Uniform point on the simplex with every component at least `margin`.
pub fn random_interior_point<R: Rng + ?Sized>(rng: &mut R, margin: f64) -> StepProbabilities {
    loop {
        let mut u = [rng.gen::<f64>(), rng.gen::<f64>()];
        u.sort_by(f64::total_cmp);
        let parts = [u[0], u[1] - u[0], 1.0 - u[1]];
        if parts.iter().all(|p| *p >= margin) {
            return StepProbabilities::new(parts[0], parts[1], parts[2]).expect("simplex point");
        }
    }
}

fn other_label(label: Label) -> Label {
    match label {
        Label::Right => Label::Wrong,
        Label::Wrong => Label::Right,
    }
}

/// Moves `delta` of mass into component `to` from component `from`
/// (indices in right, wrong, buffer order).
fn shift(p: &StepProbabilities, to: usize, from: usize, delta: f64) -> StepProbabilities {
    let mut a = p.as_array();
    a[to] += delta;
    a[from] -= delta;
    let s: f64 = a.iter().sum();
    StepProbabilities::new(a[0] / s, a[1] / s, a[2] / s)
        .expect("shifted point stays on the simplex")
}

fn index_of(label: Label) -> usize {
    match label {
        Label::Right => 0,
        Label::Wrong => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradIdentityReport {
    pub checks: usize,
    pub max_relative_error: f64,
    pub worst_point: Option<[f64; 3]>,
    pub passed: bool,
}

/// Compares the closed-form partials of the expected step loss with central
/// differences at random interior points, for both labels.
///
/// The target partial moves mass between the target component and the
/// opposite one; the buffer partial moves mass between the buffer and the
/// opposite component. The expected loss does not depend on the opposite
/// component, so these are the partials the closed forms describe.
pub fn verify_expected_grad(points: usize, seed: u64, tolerance: f64) -> GradIdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut worst_point = None;
    let h = FD_STEP;
    for _ in 0..points {
        let p = random_interior_point(&mut rng, 1e-2);
        for label in [Label::Right, Label::Wrong] {
            let tgt = index_of(label);
            let opp = index_of(other_label(label));
            let g = expected_grad(&p, label);
            let f = |q: StepProbabilities| expected_step_loss(&q, label);
            let d_target = (f(shift(&p, tgt, opp, h)) - f(shift(&p, tgt, opp, -h))) / (2.0 * h);
            let d_buffer = (f(shift(&p, 2, opp, h)) - f(shift(&p, 2, opp, -h))) / (2.0 * h);
            for err in [
                relative_error(g.d_target, d_target),
                relative_error(g.d_buffer, d_buffer),
            ] {
                if err > worst {
                    worst = err;
                    worst_point = Some(p.as_array());
                }
            }
        }
    }
    GradIdentityReport {
        checks: 2 * points,
        max_relative_error: worst,
        worst_point,
        passed: worst <= tolerance,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormGapReport {
    pub points: usize,
    pub margin: f64,
    pub max_identity_error: f64,
    pub violations: usize,
    /// `(p_right, p_buffer)` of the first inequality violation, if any.
    pub offending_point: Option<[f64; 2]>,
    pub passed: bool,
}

/// Sweeps a uniform `(p_right, p_buffer)` grid over the simplex interior
/// (label 1) and checks
/// `|ce_grad| - |d_target| = b^2 / (r (r + b))` within `1e-9` and that this
/// gap is at least `b^2`.
pub fn verify_norm_gap(grid_resolution: usize, margin: f64) -> NormGapReport {
    let n = grid_resolution.max(2);
    let span = 1.0 - 3.0 * margin;
    let coord = |i: usize| margin + span * i as f64 / (n - 1) as f64;
    let mut points = 0;
    let mut max_err = 0.0f64;
    let mut violations = 0;
    let mut offending = None;
    for i in 0..n {
        for j in 0..n {
            let (r, b) = (coord(i), coord(j));
            let w = 1.0 - r - b;
            if w < margin - 1e-15 {
                continue;
            }
            let p = StepProbabilities::new(r, w.max(0.0), b).expect("grid point on simplex");
            points += 1;
            let gap = grad_gap(&p);
            let lhs =
                ce_grad(&p, Label::Right).abs() - expected_grad(&p, Label::Right).d_target.abs();
            max_err = max_err.max((lhs - gap).abs());
            if gap.is_nan() || gap < p.p_buffer * p.p_buffer {
                violations += 1;
                offending.get_or_insert([p.p_right, p.p_buffer]);
            }
        }
    }
    NormGapReport {
        points,
        margin,
        max_identity_error: max_err,
        violations,
        offending_point: offending,
        passed: violations == 0 && max_err <= 1e-9,
    }
}

pub const DEFAULT_EPSILONS: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseRow {
    pub epsilon: f64,
    pub gradient: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub rows: Vec<CollapseRow>,
    /// Gradients strictly decrease as epsilon shrinks.
    pub monotone: bool,
    pub passed: bool,
}

/// Buffer partial of the expected loss near the all-buffer corner
/// `p_right = eps, p_buffer = 1 - eps, p_wrong = 0`, evaluated on the raw
/// closed form (no clamp).
pub fn verify_buffer_collapse(epsilons: &[f64]) -> CollapseReport {
    let rows: Vec<CollapseRow> = epsilons
        .iter()
        .map(|&eps| {
            let gradient = closed_form::d_buffer(eps, 1.0 - eps);
            let bound = -(1.0 / eps).ln();
            CollapseRow {
                epsilon: eps,
                gradient,
                bound,
                pass: eps > 0.0 && eps < 0.5 && gradient <= bound,
            }
        })
        .collect();
    let mut by_eps: Vec<&CollapseRow> = rows.iter().collect();
    by_eps.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let monotone = by_eps.windows(2).all(|w| w[1].gradient < w[0].gradient);
    CollapseReport {
        passed: monotone && rows.iter().all(|r| r.pass),
        rows,
        monotone,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub checks: usize,
    pub samples: usize,
    pub max_normalized_deviation: f64,
    /// Checks whose sample mean left the `band`-sigma interval.
    pub band_violations: usize,
    pub band: f64,
    pub worst_point: Option<[f64; 3]>,
}

/// Mean realized loss over `samples` buffer draws at one point, with its
/// sample standard deviation.
pub fn sample_realized_loss<R: Rng + ?Sized>(
    p: &StepProbabilities,
    label: Label,
    samples: usize,
    rng: &mut R,
) -> (f64, f64) {
    // Welford: exact zero variance for a constant sample
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 1..=samples {
        let beta = rng.gen::<f64>() < p.p_buffer;
        let l = step_loss_realized(p, label, beta, 1.0);
        let delta = l - mean;
        mean += delta / k as f64;
        m2 += delta * (l - mean);
    }
    let var = (m2 / (samples as f64 - 1.0)).max(0.0);
    (mean, var.sqrt())
}

/// `|mean - expected| / (std / sqrt(samples))`, or 0 when the sample is
/// constant and matches.
pub fn normalized_deviation(mean: f64, std: f64, expected: f64, samples: usize) -> f64 {
    let diff = (mean - expected).abs();
    let se = std / (samples as f64).sqrt();
    if se > 0.0 {
        diff / se
    } else if diff <= 1e-12 * expected.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Checks the closed-form expected loss against Monte-Carlo means at random
/// interior points, both labels, with the buffer drawn on every sample.
pub fn verify_mc_consistency(points: usize, samples: usize, seed: u64) -> McReport {
    let band = 4.0;
    let results: Vec<(f64, [f64; 3])> = (0..points)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = point_rng(seed, i);
            let p = random_interior_point(&mut rng, 1e-3);
            [Label::Right, Label::Wrong].map(|label| {
                let (mean, std) = sample_realized_loss(&p, label, samples, &mut rng);
                let dev = normalized_deviation(mean, std, expected_step_loss(&p, label), samples);
                (dev, p.as_array())
            })
        })
        .collect();
    let mut report = McReport {
        checks: results.len(),
        samples,
        max_normalized_deviation: 0.0,
        band_violations: 0,
        band,
        worst_point: None,
    };
    for (dev, point) in results {
        if dev > band {
            report.band_violations += 1;
        }
        if dev > report.max_normalized_deviation {
            report.max_normalized_deviation = dev;
            report.worst_point = Some(point);
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub trials: usize,
    pub parameters_checked: usize,
    pub max_relative_error: f64,
    pub passed: bool,
}

/// One random tiny model with a random step, label, buffer factor and weight.
pub struct GradcheckCase {
    pub params: ScorerParameters,
    pub features: SparseFeatures,
    pub label: Label,
    pub beta: bool,
    pub alpha: f64,
}

/// Builds the `trial`-th gradcheck case. Hidden width alternates between 0
/// and 4; pre-activations are kept away from the rectifier kink.
pub fn gradcheck_case(seed: u64, trial: usize) -> GradcheckCase {
    let mut rng = point_rng(seed, trial);
    let hidden = if trial.is_multiple_of(2) { 0 } else { 4 };
    let feat = FeaturizerConfig {
        dim: 8,
        hash_seed: rng.gen(),
        use_position: rng.gen_bool(0.5),
    };
    loop {
        let mut params =
            ScorerParameters::init(feat.clone(), hidden, rng.gen()).expect("valid config");
        let layout = params.layout();
        for i in layout.bias_in().chain(layout.bias_out()) {
            params.values[i] = rng.gen_range(-0.5..0.5);
        }
        for i in layout.weights_out() {
            params.values[i] = rng.gen_range(-1.5..1.5);
        }
        let total = rng.gen_range(1..=6);
        let position = rng.gen_range(1..=total);
        let step = StepContent {
            tokens: (0..rng.gen_range(1..=10))
                .map(|_| format!("w{}", rng.gen_range(0..50)))
                .collect(),
            position,
            is_last: position == total,
        };
        let features = featurize_step(&step, total, &feat);
        let fwd = forward(&features, &params).expect("dims agree");
        if fwd.hidden_pre.iter().any(|v| v.abs() < 1e-3) {
            continue;
        }
        return GradcheckCase {
            params,
            features,
            label: if rng.gen_bool(0.5) {
                Label::Right
            } else {
                Label::Wrong
            },
            beta: rng.gen_bool(0.5),
            alpha: if rng.gen_bool(0.5) { 1.0 } else { 3.0 },
        };
    }
}

/// Analytic parameter gradients of the realized step loss (buffer factor
/// fixed) against central differences on every parameter.
pub fn gradcheck_model(trials: usize, seed: u64, tolerance: f64) -> GradcheckReport {
    let per_trial: Vec<(usize, f64)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let case = gradcheck_case(seed, trial);
            let GradcheckCase {
                mut params,
                features,
                label,
                beta,
                alpha,
            } = case;
            let fwd = forward(&features, &params).expect("dims agree");
            let mut analytic = vec![0.0; params.values.len()];
            backward_step(
                &features,
                &fwd,
                label,
                beta,
                alpha,
                1.0,
                &params,
                &mut analytic,
            );
            let mut worst = 0.0f64;
            for (i, &a) in analytic.iter().enumerate() {
                let orig = params.values[i];
                params.values[i] = orig + FD_STEP;
                let up = step_loss_realized(
                    &forward(&features, &params).unwrap().probs,
                    label,
                    beta,
                    alpha,
                );
                params.values[i] = orig - FD_STEP;
                let down = step_loss_realized(
                    &forward(&features, &params).unwrap().probs,
                    label,
                    beta,
                    alpha,
                );
                params.values[i] = orig;
                let numeric = (up - down) / (2.0 * FD_STEP);
                worst = worst.max(relative_error(a, numeric));
            }
            (params.values.len(), worst)
        })
        .collect();
    let max_relative_error = per_trial.iter().map(|r| r.1).fold(0.0, f64::max);
    GradcheckReport {
        trials,
        parameters_checked: per_trial.iter().map(|r| r.0).sum(),
        max_relative_error,
        passed: max_relative_error <= tolerance,
    }
}
