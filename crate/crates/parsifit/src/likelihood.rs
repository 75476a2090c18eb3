//! Likelihood evaluation: softmax with max subtraction, power scores, the
//! capped mean negative log likelihood, and its analytic gradient.
//!
//! Row sums are reduced over fixed-size chunks in index order, so results are
//! identical run to run and independent of worker count.

use crate::model::{ItemModel, ObservationGrid, RegressorKind, RegressorMeta};
use ndarray::Array2;
use rayon::prelude::*;
use smallvec::SmallVec;
use thiserror::Error;

/// Fixed chunk size for deterministic row-sum reduction.
pub(crate) const CHUNK: usize = 4096;

type ScoreBuf = SmallVec<[f64; 8]>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LikelihoodError {
    #[error("probability vector entries must be strictly positive")]
    ZeroProbability,
    #[error("reference index {0} out of range for {1} probabilities")]
    ReferenceOutOfRange(usize, usize),
}

// ---------------------------------------------------------------------------
// Softmax and its inverse
// ---------------------------------------------------------------------------

/// Writes softmax(scores) into `out`. The max score is subtracted before
/// exponentiation, so arbitrarily large scores stay finite.
pub fn softmax_into(scores: &[f64], out: &mut [f64]) {
    debug_assert_eq!(scores.len(), out.len());
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        let e = (s - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; scores.len()];
    softmax_into(scores, &mut out);
    out
}

/// log(sum(exp(scores))) with max subtraction.
pub(crate) fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scores.iter().map(|&s| (s - max).exp()).sum();
    max + sum.ln()
}

/// Recovers power scores from a probability vector, pinning the reference
/// entry at exactly zero. Every entry must be strictly positive.
pub fn inverse_logit(probs: &[f64], reference: usize) -> Result<Vec<f64>, LikelihoodError> {
    if reference >= probs.len() {
        return Err(LikelihoodError::ReferenceOutOfRange(reference, probs.len()));
    }
    if probs.iter().any(|&p| p <= 0.0) {
        return Err(LikelihoodError::ZeroProbability);
    }
    let ln_ref = probs[reference].ln();
    Ok(probs.iter().map(|&p| p.ln() - ln_ref).collect())
}

// ---------------------------------------------------------------------------
// Power scores
// ---------------------------------------------------------------------------

/// Power scores over the reachable end statuses of a model's start status.
/// `values[j]` belongs to global state `states[j]`; the reference entry is
/// exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerScores {
    pub states: Vec<usize>,
    pub values: Vec<f64>,
    pub reference_pos: usize,
}

/// Precomputed index mapping from a model into reachable-order score slots.
pub(crate) struct ScoreLayout {
    pub reachable: Vec<usize>,
    pub ref_pos: usize,
    /// Score slot for each parameter state, in `param_states` order.
    pub param_pos: Vec<usize>,
    /// Score slot for each curve's target state.
    pub curve_pos: Vec<usize>,
    /// Regressor columns carrying flag betas.
    pub flag_cols: Vec<usize>,
}

impl ScoreLayout {
    pub fn new(model: &ItemModel) -> Self {
        let reachable = model.reachable().to_vec();
        let pos = |state: usize| reachable.iter().position(|&s| s == state).unwrap();
        let ref_pos = pos(model.reference_state);
        let param_pos = model.param_states().iter().map(|&s| pos(s)).collect();
        let curve_pos = model.curves.iter().map(|c| pos(c.to_state)).collect();
        let flag_cols = model
            .meta
            .iter()
            .enumerate()
            .filter(|(_, m)| m.kind.is_flag())
            .map(|(j, _)| j)
            .collect();
        ScoreLayout { reachable, ref_pos, param_pos, curve_pos, flag_cols }
    }

    pub fn width(&self) -> usize {
        self.reachable.len()
    }
}

/// Writes the model's power scores for one regressor row into `out`, which
/// must have one slot per reachable state.
pub(crate) fn scores_into(
    model: &ItemModel,
    layout: &ScoreLayout,
    x_row: impl Fn(usize) -> f64,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), layout.width());
    out.fill(0.0);
    for (j, &p) in layout.param_pos.iter().enumerate() {
        let mut v = model.intercepts[j];
        for &col in &layout.flag_cols {
            let beta = model.flag_betas[(j, col)];
            if beta != 0.0 {
                v += beta * x_row(col);
            }
        }
        out[p] = v;
    }
    for (c, curve) in model.curves.iter().enumerate() {
        if curve.beta != 0.0 {
            out[layout.curve_pos[c]] += curve.beta * curve.eval(x_row(curve.regressor));
        }
    }
}

/// Power scores for one observation row.
pub fn power_scores(model: &ItemModel, x_row: &[f64]) -> PowerScores {
    assert_eq!(x_row.len(), model.meta.len(), "regressor row width mismatch");
    let layout = ScoreLayout::new(model);
    let mut values = vec![0.0; layout.width()];
    scores_into(model, &layout, |j| x_row[j], &mut values);
    PowerScores { states: layout.reachable.clone(), values, reference_pos: layout.ref_pos }
}

// ---------------------------------------------------------------------------
// Mean negative log likelihood
// ---------------------------------------------------------------------------

/// Per-row capped negative log likelihood term. `scores` holds the power
/// scores in reachable order; `y` is indexed by global state id.
#[inline]
pub(crate) fn row_term(scores: &[f64], states: &[usize], y_row: impl Fn(usize) -> f64, cap: f64) -> f64 {
    let lse = log_sum_exp(scores);
    let mut dot = 0.0;
    for (j, &s) in states.iter().enumerate() {
        let y = y_row(s);
        if y != 0.0 {
            dot += y * scores[j];
        }
    }
    (lse - dot).min(cap)
}

/// Mean capped negative log likelihood of `model` on `grid`.
///
/// Terms are accumulated over fixed chunks reduced in index order; the result
/// is bitwise reproducible for a given chunk size regardless of thread count.
pub fn mean_neg_ll(grid: &ObservationGrid, model: &ItemModel, cap: f64) -> f64 {
    let n = grid.rows();
    assert!(n > 0, "empty grid");
    model.check_grid(grid).expect("model/grid mismatch");
    let layout = ScoreLayout::new(model);
    let x = grid.x();
    let y = grid.y();
    let n_chunks = n.div_ceil(CHUNK);
    let partials: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * CHUNK;
            let hi = ((ci + 1) * CHUNK).min(n);
            let mut buf: ScoreBuf = SmallVec::from_elem(0.0, layout.width());
            let mut sum = 0.0;
            for i in lo..hi {
                scores_into(model, &layout, |j| x[(i, j)], &mut buf);
                sum += row_term(&buf, &layout.reachable, |s| y[(i, s)], cap);
            }
            sum
        })
        .collect();
    partials.iter().sum::<f64>() / n as f64
}

// ---------------------------------------------------------------------------
// Gradient
// ---------------------------------------------------------------------------

/// Gradient of the mean capped negative log likelihood with respect to every
/// model parameter. Entries of `flag_betas` on non-flag columns are
/// structurally zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradient {
    pub intercepts: Vec<f64>,
    pub flag_betas: Array2<f64>,
    pub curve_beta: Vec<f64>,
    pub curve_a: Vec<f64>,
    pub curve_b: Vec<f64>,
}

impl ModelGradient {
    fn zeros(model: &ItemModel) -> Self {
        let s = model.intercepts.len();
        let k = model.meta.len();
        let c = model.curves.len();
        ModelGradient {
            intercepts: vec![0.0; s],
            flag_betas: Array2::zeros((s, k)),
            curve_beta: vec![0.0; c],
            curve_a: vec![0.0; c],
            curve_b: vec![0.0; c],
        }
    }

    fn add(&mut self, other: &Self) {
        for (a, b) in self.intercepts.iter_mut().zip(&other.intercepts) {
            *a += b;
        }
        self.flag_betas += &other.flag_betas;
        for (a, b) in self.curve_beta.iter_mut().zip(&other.curve_beta) {
            *a += b;
        }
        for (a, b) in self.curve_a.iter_mut().zip(&other.curve_a) {
            *a += b;
        }
        for (a, b) in self.curve_b.iter_mut().zip(&other.curve_b) {
            *a += b;
        }
    }

    fn scale(&mut self, f: f64) {
        for v in self.intercepts.iter_mut() {
            *v *= f;
        }
        self.flag_betas.mapv_inplace(|v| v * f);
        for v in self
            .curve_beta
            .iter_mut()
            .chain(self.curve_a.iter_mut())
            .chain(self.curve_b.iter_mut())
        {
            *v *= f;
        }
    }

    /// Flattens the gradient into the canonical parameter order: intercepts,
    /// then flag betas on flag columns (state-major), then per curve
    /// (beta, a, b). Structural zeros are skipped.
    pub fn flatten(&self, meta: &[RegressorMeta]) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.intercepts);
        for s in 0..self.flag_betas.nrows() {
            for (j, m) in meta.iter().enumerate() {
                if matches!(m.kind, RegressorKind::Flag) {
                    out.push(self.flag_betas[(s, j)]);
                }
            }
        }
        for c in 0..self.curve_beta.len() {
            out.push(self.curve_beta[c]);
            out.push(self.curve_a[c]);
            out.push(self.curve_b[c]);
        }
        out
    }
}

/// Analytic gradient of `mean_neg_ll`. Rows whose raw term exceeds the cap
/// contribute zero gradient; the mean is still taken over all rows.
pub fn neg_ll_gradient(grid: &ObservationGrid, model: &ItemModel, cap: f64) -> ModelGradient {
    let n = grid.rows();
    assert!(n > 0, "empty grid");
    model.check_grid(grid).expect("model/grid mismatch");
    let layout = ScoreLayout::new(model);
    let x = grid.x();
    let y = grid.y();
    let n_chunks = n.div_ceil(CHUNK);
    let partials: Vec<ModelGradient> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * CHUNK;
            let hi = ((ci + 1) * CHUNK).min(n);
            let mut g = ModelGradient::zeros(model);
            let mut scores: ScoreBuf = SmallVec::from_elem(0.0, layout.width());
            let mut probs: ScoreBuf = SmallVec::from_elem(0.0, layout.width());
            for i in lo..hi {
                scores_into(model, &layout, |j| x[(i, j)], &mut scores);
                let raw = {
                    let lse = log_sum_exp(&scores);
                    let mut dot = 0.0;
                    for (j, &s) in layout.reachable.iter().enumerate() {
                        let yv = y[(i, s)];
                        if yv != 0.0 {
                            dot += yv * scores[j];
                        }
                    }
                    lse - dot
                };
                if raw > cap {
                    continue;
                }
                softmax_into(&scores, &mut probs);
                for (j, &p) in layout.param_pos.iter().enumerate() {
                    let d = probs[p] - y[(i, layout.reachable[p])];
                    g.intercepts[j] += d;
                    for &col in &layout.flag_cols {
                        g.flag_betas[(j, col)] += d * x[(i, col)];
                    }
                }
                for (c, curve) in model.curves.iter().enumerate() {
                    let p = layout.curve_pos[c];
                    let d = probs[p] - y[(i, layout.reachable[p])];
                    let xv = x[(i, curve.regressor)];
                    let f = curve.eval(xv);
                    let (da, db) = curve.grad(xv);
                    g.curve_beta[c] += d * f;
                    g.curve_a[c] += d * curve.beta * da;
                    g.curve_b[c] += d * curve.beta * db;
                }
            }
            g
        })
        .collect();
    let mut total = ModelGradient::zeros(model);
    for p in &partials {
        total.add(p);
    }
    total.scale(1.0 / n as f64);
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        CurveFamily, CurveSpec, ItemModel, ObservationGrid, RegressorMeta, StatusSpace,
    };
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cp3() -> StatusSpace {
        StatusSpace::new(
            &["C", "P", "3"],
            &[("C", &["C", "P", "3"]), ("P", &["P"]), ("3", &["3"])],
            &["P", "3"],
        )
        .unwrap()
    }

    #[test]
    fn softmax_uniform_and_known_values() {
        let p = softmax(&[0.0, 0.0, 0.0]);
        assert_eq!(p, vec![p[0]; 3]);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);

        let p = softmax(&[0.0, 2.0f64.ln(), 3.0f64.ln()]);
        assert!((p[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_survives_huge_scores() {
        let p = softmax(&[1000.0, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert_eq!(p[0], 1.0);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-50.0..50.0)).collect();
            let c: f64 = rng.random_range(-1e3..1e3);
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let p = softmax(&v);
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_logit_round_trip_and_errors() {
        let y = vec![0.5, 0.25, 0.25];
        let v = inverse_logit(&y, 0).unwrap();
        assert_eq!(v[0], 0.0);
        assert!((v[1] + 2.0f64.ln()).abs() < 1e-15);
        assert!((v[2] + 2.0f64.ln()).abs() < 1e-15);
        let back = softmax(&v);
        for (a, b) in back.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(inverse_logit(&[1.0, 0.0], 0), Err(LikelihoodError::ZeroProbability));
        assert!(matches!(
            inverse_logit(&[0.5, 0.5], 7),
            Err(LikelihoodError::ReferenceOutOfRange(7, 2))
        ));
    }

    fn simple_grid(n: usize, seed: u64) -> ObservationGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let meta = vec![RegressorMeta::real("x"), RegressorMeta::flag("f")];
        let mut xs = Vec::with_capacity(2 * n);
        for _ in 0..n {
            xs.push(rng.random_range(-2.0..2.0));
            xs.push(if rng.random::<bool>() { 1.0 } else { 0.0 });
        }
        let x = Array2::from_shape_vec((n, 2), xs).unwrap();
        let ends: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        ObservationGrid::new(cp3(), meta, x, vec![0; n], ends).unwrap()
    }

    #[test]
    fn power_scores_zero_model_and_reference_pin() {
        let grid = simple_grid(5, 1);
        let model =
            ItemModel::new(grid.space().clone(), grid.meta().to_vec(), 0).unwrap();
        let ps = power_scores(&model, &[1.0, 0.0]);
        assert_eq!(ps.states, vec![0, 1, 2]);
        assert_eq!(ps.values, vec![0.0, 0.0, 0.0]);
        assert_eq!(ps.reference_pos, 0);
    }

    #[test]
    fn power_scores_with_curve_contribution() {
        let grid = simple_grid(5, 2);
        let mut model =
            ItemModel::new(grid.space().clone(), grid.meta().to_vec(), 0).unwrap();
        model.intercepts = vec![-1.0, -2.0];
        model.curves.push(CurveSpec {
            family: CurveFamily::Logistic,
            a: 1.0,
            b: 0.0,
            regressor: 0,
            to_state: 1,
            beta: 2.0,
        });
        // At a^2 (x-b) = ln 3 the curve value is 0.75, so the P score gains 1.5.
        let x = 3.0f64.ln();
        let ps = power_scores(&model, &[x, 0.0]);
        assert_eq!(ps.values[0], 0.0);
        assert!((ps.values[1] - (-1.0 + 1.5)).abs() < 1e-12);
        assert_eq!(ps.values[2], -2.0);

        // Zero beta leaves scores unchanged.
        model.curves[0].beta = 0.0;
        let ps = power_scores(&model, &[x, 0.0]);
        assert_eq!(ps.values[1], -1.0);
    }

    #[test]
    fn mean_neg_ll_known_values() {
        // Single reachable end status: probability 1, so the negLL is 0.
        let space = StatusSpace::new(&["P"], &[("P", &["P"])], &["P"]).unwrap();
        let meta = vec![RegressorMeta::real("x")];
        let x = Array2::from_shape_vec((4, 1), vec![0.0; 4]).unwrap();
        let grid = ObservationGrid::new(space.clone(), meta.clone(), x, vec![0; 4], vec![0; 4]).unwrap();
        let model = ItemModel::new(space, meta, 0).unwrap();
        assert_eq!(mean_neg_ll(&grid, &model, 20.0), 0.0);

        // Zero-parameter three-state model: every row costs ln 3.
        let grid = simple_grid(50, 3);
        let model = ItemModel::new(grid.space().clone(), grid.meta().to_vec(), 0).unwrap();
        assert!((mean_neg_ll(&grid, &model, 20.0) - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mean_neg_ll_caps_expensive_rows() {
        let grid = simple_grid(1, 4);
        let mut model = ItemModel::new(grid.space().clone(), grid.meta().to_vec(), 0).unwrap();
        // Make the realized state extremely unlikely: raw term is about 25.
        let end = grid.end_status()[0];
        match end {
            0 => {
                model.intercepts = vec![25.0, 25.0];
            }
            1 => {
                model.intercepts = vec![-25.0, 0.0];
            }
            _ => {
                model.intercepts = vec![0.0, -25.0];
            }
        }
        let v = mean_neg_ll(&grid, &model, 20.0);
        assert_eq!(v, 20.0);
        // With a generous cap the raw value comes through: the two likely
        // states tie, so the term is 25 + ln 2.
        let raw = mean_neg_ll(&grid, &model, 1e9);
        assert!((raw - 25.0 - 2.0f64.ln()).abs() < 1e-6, "raw term {raw}");
    }

    fn random_model(grid: &ObservationGrid, seed: u64) -> ItemModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = ItemModel::new(grid.space().clone(), grid.meta().to_vec(), 0).unwrap();
        for v in model.intercepts.iter_mut() {
            *v = rng.random_range(-1.5..1.5);
        }
        for (j, m) in grid.meta().to_vec().iter().enumerate() {
            if m.kind.is_flag() {
                for s in 0..model.intercepts.len() {
                    model.flag_betas[(s, j)] = rng.random_range(-1.0..1.0);
                }
            }
        }
        for _ in 0..rng.random_range(1..3usize) {
            let family = if rng.random::<bool>() { CurveFamily::Logistic } else { CurveFamily::Gaussian };
            let b = if family == CurveFamily::Gaussian {
                rng.random_range(0.3..2.0)
            } else {
                rng.random_range(-1.0..1.0)
            };
            model.curves.push(CurveSpec {
                family,
                a: rng.random_range(-1.5..1.5),
                b,
                regressor: 0,
                to_state: if rng.random::<bool>() { 1 } else { 2 },
                beta: rng.random_range(-1.5..1.5),
            });
        }
        model.validate().unwrap();
        model
    }

    fn flatten_params(model: &ItemModel) -> Vec<f64> {
        let mut out = model.intercepts.clone();
        for s in 0..model.intercepts.len() {
            for (j, m) in model.meta.iter().enumerate() {
                if m.kind.is_flag() {
                    out.push(model.flag_betas[(s, j)]);
                }
            }
        }
        for c in &model.curves {
            out.push(c.beta);
            out.push(c.a);
            out.push(c.b);
        }
        out
    }

    fn set_params(model: &mut ItemModel, theta: &[f64]) {
        let mut it = theta.iter().copied();
        for v in model.intercepts.iter_mut() {
            *v = it.next().unwrap();
        }
        let meta = model.meta.clone();
        for s in 0..model.intercepts.len() {
            for (j, m) in meta.iter().enumerate() {
                if m.kind.is_flag() {
                    model.flag_betas[(s, j)] = it.next().unwrap();
                }
            }
        }
        for c in model.curves.iter_mut() {
            c.beta = it.next().unwrap();
            c.a = it.next().unwrap();
            c.b = it.next().unwrap();
        }
        assert!(it.next().is_none());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cap = 1e6;
        for seed in 0..25u64 {
            let grid = simple_grid(20, 100 + seed);
            let model = random_model(&grid, 200 + seed);
            let analytic = neg_ll_gradient(&grid, &model, cap).flatten(&model.meta);
            let theta = flatten_params(&model);
            let h = 1e-6;
            for (k, g) in analytic.iter().enumerate() {
                let mut plus = theta.clone();
                plus[k] += h;
                let mut minus = theta.clone();
                minus[k] -= h;
                let mut mp = model.clone();
                set_params(&mut mp, &plus);
                let mut mm = model.clone();
                set_params(&mut mm, &minus);
                let fd = (mean_neg_ll(&grid, &mp, cap) - mean_neg_ll(&grid, &mm, cap)) / (2.0 * h);
                let err = (g - fd).abs();
                let scale = g.abs().max(fd.abs());
                assert!(
                    err <= 1e-5 * scale + 1e-7,
                    "seed {seed} param {k}: analytic {g} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn capped_rows_contribute_zero_gradient() {
        let space = cp3();
        let meta = vec![RegressorMeta::real("x")];
        let x = Array2::from_shape_vec((2, 1), vec![0.0, 0.0]).unwrap();
        let grid = ObservationGrid::new(space.clone(), meta.clone(), x, vec![0, 0], vec![1, 2]).unwrap();
        let mut model = ItemModel::new(space, meta, 0).unwrap();
        // Row 1 (end status 3) is capped: its probability is about e^-30.
        model.intercepts = vec![0.0, -30.0];
        let g = neg_ll_gradient(&grid, &model, 20.0);
        // Only row 0 contributes. Its gradient for the P intercept is
        // (p_P - 1)/2; for the 3 intercept it is p_3/2 with p_3 ~ 0.
        let p = softmax(&[0.0, 0.0, -30.0]);
        assert!((g.intercepts[0] - (p[1] - 1.0) / 2.0).abs() < 1e-12);
        assert!((g.intercepts[1] - p[2] / 2.0).abs() < 1e-12);
    }

    #[test]
    fn observed_transition_gradient_is_negative() {
        // Raising the power score of the realized state lowers the negLL.
        let grid = simple_grid(30, 7);
        let model = random_model(&grid, 8);
        let g = neg_ll_gradient(&grid, &model, 1e6);
        // Aggregate check via a direct directional derivative on one row
        // grid: perturbing the realized state's intercept by +h on a
        // single-row grid must decrease the objective.
        let one = grid.select_rows(&[0]);
        let end = one.end_status()[0];
        if let Some(j) = model.param_index(end) {
            let g1 = neg_ll_gradient(&one, &model, 1e6);
            assert!(g1.intercepts[j] < 0.0);
        }
        // And the full-grid gradient is finite everywhere.
        assert!(g.flatten(&model.meta).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn chunked_reduction_is_thread_invariant() {
        let grid = simple_grid(10_000, 9);
        let model = random_model(&grid, 10);
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let v1 = pool1.install(|| mean_neg_ll(&grid, &model, 20.0));
        let v4 = pool4.install(|| mean_neg_ll(&grid, &model, 20.0));
        assert_eq!(v1.to_bits(), v4.to_bits());
        let g1 = pool1.install(|| neg_ll_gradient(&grid, &model, 20.0));
        let g4 = pool4.install(|| neg_ll_gradient(&grid, &model, 20.0));
        assert_eq!(g1, g4);
    }
}
