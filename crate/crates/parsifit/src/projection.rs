//! Forward projection of fitted transition models: dense matrix recursion,
//! seeded path simulation, and a hybrid scheme that treats the common
//! current/prepaid flow deterministically and simulates only the rare
//! delinquency branch.

use crate::likelihood::softmax_into;
use crate::model::{ItemModel, ModelError, StatusSpace};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Tolerance for "probabilities sum to one" checks on transition rows and
/// start distributions.
const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProjError {
    #[error("matrix projection requires a model without path-dependent regressors")]
    NonMarkovianRegressor,
    #[error("path allocation weights are all zero")]
    AllZeroWeights,
    #[error("path allocation weight {0} is negative or non-finite")]
    BadWeight(f64),
    #[error("invalid start distribution: {0}")]
    BadStart(String),
    #[error("transition row from {state:?} at time {time} is invalid: {reason}")]
    BadTransitionRow { state: String, time: usize, reason: String },
    #[error("no covariate row for time {0}")]
    CovariateRange(usize),
    #[error("covariate {0:?} required by a model is missing")]
    MissingCovariate(String),
    #[error("non-absorbing status {0:?} has no model")]
    MissingModel(String),
    #[error("hybrid projection needs distinct current, prepaid, and delinquent states with an absorbing prepaid state")]
    BadHybridStates,
    #[error(transparent)]
    Model(#[from] ModelError),
}

// ---------------------------------------------------------------------------
// Transition models
// ---------------------------------------------------------------------------

/// A time-indexed transition law over a status space. `transition_row` gives
/// the distribution of the next state for a loan in `state` during the step
/// from `time` to `time + 1`; `history` lists previously visited states,
/// oldest first, and is empty unless the caller tracks paths.
pub trait TransitionModel: Sync {
    fn space(&self) -> &StatusSpace;

    /// True when transition probabilities depend on the visited path, which
    /// rules out the matrix and hybrid recursions.
    fn path_dependent(&self) -> bool {
        false
    }

    fn transition_row(
        &self,
        state: usize,
        time: usize,
        history: &[usize],
    ) -> Result<Vec<f64>, ProjError>;
}

/// A transition model with one fixed row per state, constant over time.
pub struct ConstantMatrixModel {
    space: StatusSpace,
    rows: Array2<f64>,
}

impl ConstantMatrixModel {
    /// `rows[(from, to)]` is the one-step probability. Absorbing states may
    /// use any row; projectors never consult them.
    pub fn new(space: StatusSpace, rows: Array2<f64>) -> Result<Self, ProjError> {
        let s = space.len();
        if rows.dim() != (s, s) {
            return Err(ProjError::Model(ModelError::Shape(format!(
                "transition matrix is {:?}, expected {s}x{s}",
                rows.dim()
            ))));
        }
        for from in 0..s {
            if space.is_absorbing(from) {
                continue;
            }
            let row: Vec<f64> = (0..s).map(|to| rows[(from, to)]).collect();
            check_row(&row, &space, from, 0)?;
        }
        Ok(ConstantMatrixModel { space, rows })
    }
}

impl TransitionModel for ConstantMatrixModel {
    fn space(&self) -> &StatusSpace {
        &self.space
    }

    fn transition_row(
        &self,
        state: usize,
        _time: usize,
        _history: &[usize],
    ) -> Result<Vec<f64>, ProjError> {
        Ok(self.rows.row(state).to_vec())
    }
}

/// A transition law assembled from fitted models, one per non-absorbing
/// start status, driven by a shared panel of time-indexed covariates.
pub struct ItemTransitionModel {
    space: StatusSpace,
    models: Vec<Option<ItemModel>>,
    covariates: Array2<f64>,
    /// For each state with a model: model regressor index -> covariate column.
    col_map: Vec<Vec<usize>>,
}

impl ItemTransitionModel {
    /// `models` is indexed by start status; a status without a model must be
    /// absorbing. `covariates` holds one row per projected time step with
    /// columns named by `covariate_names`; every model regressor must match
    /// a column by name.
    pub fn new(
        space: StatusSpace,
        models: Vec<Option<ItemModel>>,
        covariate_names: &[String],
        covariates: Array2<f64>,
    ) -> Result<Self, ProjError> {
        if models.len() != space.len() {
            return Err(ProjError::Model(ModelError::Shape(format!(
                "{} models for {} statuses",
                models.len(),
                space.len()
            ))));
        }
        if covariates.ncols() != covariate_names.len() {
            return Err(ProjError::Model(ModelError::Shape(format!(
                "covariate panel has {} columns but {} names",
                covariates.ncols(),
                covariate_names.len()
            ))));
        }
        let mut col_map = Vec::with_capacity(models.len());
        for (state, slot) in models.iter().enumerate() {
            let Some(model) = slot else {
                if !space.is_absorbing(state) {
                    return Err(ProjError::MissingModel(space.name(state).to_string()));
                }
                col_map.push(Vec::new());
                continue;
            };
            model.validate()?;
            if model.space != space {
                return Err(ProjError::Model(ModelError::Shape(
                    "model status space differs from the projection space".to_string(),
                )));
            }
            if model.start_status != state {
                return Err(ProjError::Model(ModelError::Shape(format!(
                    "model for slot {state} was fitted for start status {}",
                    model.start_status
                ))));
            }
            let mut map = Vec::with_capacity(model.meta.len());
            for meta in &model.meta {
                let col = covariate_names
                    .iter()
                    .position(|n| *n == meta.name)
                    .ok_or_else(|| ProjError::MissingCovariate(meta.name.clone()))?;
                map.push(col);
            }
            col_map.push(map);
        }
        Ok(ItemTransitionModel { space, models, covariates, col_map })
    }
}

impl TransitionModel for ItemTransitionModel {
    fn space(&self) -> &StatusSpace {
        &self.space
    }

    fn transition_row(
        &self,
        state: usize,
        time: usize,
        _history: &[usize],
    ) -> Result<Vec<f64>, ProjError> {
        let s = self.space.len();
        let Some(model) = &self.models[state] else {
            let mut row = vec![0.0; s];
            row[state] = 1.0;
            return Ok(row);
        };
        if time >= self.covariates.nrows() {
            return Err(ProjError::CovariateRange(time));
        }
        let map = &self.col_map[state];
        let layout = crate::likelihood::ScoreLayout::new(model);
        let mut scores = vec![0.0; layout.width()];
        crate::likelihood::scores_into(
            model,
            &layout,
            |j| self.covariates[(time, map[j])],
            &mut scores,
        );
        let mut probs = vec![0.0; scores.len()];
        softmax_into(&scores, &mut probs);
        let mut row = vec![0.0; s];
        for (j, &st) in layout.reachable.iter().enumerate() {
            row[st] = probs[j];
        }
        Ok(row)
    }
}

fn check_row(
    row: &[f64],
    space: &StatusSpace,
    state: usize,
    time: usize,
) -> Result<(), ProjError> {
    let bad = |reason: String| ProjError::BadTransitionRow {
        state: space.name(state).to_string(),
        time,
        reason,
    };
    if row.len() != space.len() {
        return Err(bad(format!("{} entries for {} states", row.len(), space.len())));
    }
    let mut sum = 0.0;
    for &p in row {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(bad(format!("entry {p} is negative or non-finite")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(bad(format!("row sums to {sum}")));
    }
    Ok(())
}

fn check_start(start: &[f64], space: &StatusSpace) -> Result<(), ProjError> {
    if start.len() != space.len() {
        return Err(ProjError::BadStart(format!(
            "{} entries for {} states",
            start.len(),
            space.len()
        )));
    }
    let mut sum = 0.0;
    for &p in start {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(ProjError::BadStart(format!("entry {p} is negative or non-finite")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(ProjError::BadStart(format!("mass sums to {sum}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Projection output
// ---------------------------------------------------------------------------

/// State occupancy probabilities for times 0 through the horizon, with one
/// standard error per cell (zero for deterministic methods or entries).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub state_names: Vec<String>,
    /// `(horizon + 1) x states`; row t is the distribution at time t.
    pub probabilities: Array2<f64>,
    pub std_errors: Array2<f64>,
    /// Transition rows evaluated while producing this result.
    pub rows_evaluated: u64,
    /// Simulated paths behind the estimates; zero for purely deterministic
    /// output.
    pub paths: usize,
}

impl ProjectionResult {
    pub const CSV_HEADER: &'static str = "time,state,probability,std_error";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for t in 0..self.probabilities.nrows() {
            for (s, name) in self.state_names.iter().enumerate() {
                out.push_str(&format!(
                    "{t},{name},{},{}\n",
                    self.probabilities[(t, s)],
                    self.std_errors[(t, s)]
                ));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Matrix projection
// ---------------------------------------------------------------------------

/// Projects a start distribution forward by repeated application of the
/// one-step transition law. Exact, deterministic, and linear in the horizon;
/// requires a model without path-dependent regressors.
pub fn project_matrix(
    model: &dyn TransitionModel,
    start: &[f64],
    horizon: usize,
) -> Result<ProjectionResult, ProjError> {
    if model.path_dependent() {
        return Err(ProjError::NonMarkovianRegressor);
    }
    let space = model.space();
    check_start(start, space)?;
    let s = space.len();
    let mut probabilities = Array2::zeros((horizon + 1, s));
    let mut cur = start.to_vec();
    for (st, &p) in cur.iter().enumerate() {
        probabilities[(0, st)] = p;
    }
    let mut rows_evaluated = 0u64;
    for t in 0..horizon {
        let mut next = vec![0.0; s];
        for from in 0..s {
            let mass = cur[from];
            if mass == 0.0 {
                continue;
            }
            if space.is_absorbing(from) {
                next[from] += mass;
                continue;
            }
            let row = model.transition_row(from, t, &[])?;
            check_row(&row, space, from, t)?;
            rows_evaluated += 1;
            for (to, &p) in row.iter().enumerate() {
                next[to] += mass * p;
            }
        }
        for (st, &p) in next.iter().enumerate() {
            probabilities[(t + 1, st)] = p;
        }
        cur = next;
    }
    Ok(ProjectionResult {
        state_names: space.names().to_vec(),
        probabilities,
        std_errors: Array2::zeros((horizon + 1, s)),
        rows_evaluated,
        paths: 0,
    })
}

// ---------------------------------------------------------------------------
// Path simulation
// ---------------------------------------------------------------------------

struct SimTally {
    counts: Array2<u64>,
    rows: u64,
}

fn simulate_block(
    model: &dyn TransitionModel,
    start: &[f64],
    horizon: usize,
    seed: u64,
    paths: std::ops::Range<usize>,
) -> Result<SimTally, ProjError> {
    let space = model.space();
    let s = space.len();
    let mut counts = Array2::zeros((horizon + 1, s));
    let mut rows = 0u64;
    let track_history = model.path_dependent();
    let mut history: Vec<usize> = Vec::new();
    for path in paths {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        let mut state = sample_index(&mut rng, start);
        counts[(0, state)] += 1;
        history.clear();
        for t in 0..horizon {
            if space.is_absorbing(state) {
                for rest in t..horizon {
                    counts[(rest + 1, state)] += 1;
                }
                break;
            }
            let row = model.transition_row(state, t, &history)?;
            check_row(&row, space, state, t)?;
            rows += 1;
            if track_history {
                history.push(state);
            }
            state = sample_index(&mut rng, &row);
            counts[(t + 1, state)] += 1;
        }
    }
    Ok(SimTally { counts, rows })
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

const SIM_BLOCK: usize = 1024;

/// Simulates `n_paths` independent paths from the start distribution. Each
/// path owns one counter-mode RNG stream derived from `seed`, so results are
/// identical for a given seed regardless of thread count. Standard errors
/// are the binomial `sqrt(p(1-p)/n)` per cell.
pub fn simulate_paths(
    model: &dyn TransitionModel,
    start: &[f64],
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<ProjectionResult, ProjError> {
    let space = model.space();
    check_start(start, space)?;
    if n_paths == 0 {
        return Err(ProjError::BadStart("at least one path is required".to_string()));
    }
    let s = space.len();
    let blocks = n_paths.div_ceil(SIM_BLOCK);
    let tallies: Vec<Result<SimTally, ProjError>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * SIM_BLOCK;
            let hi = ((b + 1) * SIM_BLOCK).min(n_paths);
            simulate_block(model, start, horizon, seed, lo..hi)
        })
        .collect();
    let mut counts = Array2::<u64>::zeros((horizon + 1, s));
    let mut rows_evaluated = 0u64;
    for tally in tallies {
        let tally = tally?;
        counts += &tally.counts;
        rows_evaluated += tally.rows;
    }
    let n = n_paths as f64;
    let mut probabilities = Array2::zeros((horizon + 1, s));
    let mut std_errors = Array2::zeros((horizon + 1, s));
    for t in 0..=horizon {
        for st in 0..s {
            let p = counts[(t, st)] as f64 / n;
            probabilities[(t, st)] = p;
            std_errors[(t, st)] = (p * (1.0 - p) / n).sqrt();
        }
    }
    Ok(ProjectionResult {
        state_names: space.names().to_vec(),
        probabilities,
        std_errors,
        rows_evaluated,
        paths: n_paths,
    })
}

// ---------------------------------------------------------------------------
// Hybrid projection
// ---------------------------------------------------------------------------

/// The three roles the hybrid scheme tracks: the transient current state the
/// cohort starts in, the absorbing prepaid state, and the delinquency entry
/// state whose branch gets simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HybridStates {
    pub current: usize,
    pub prepaid: usize,
    pub delinquent: usize,
}

impl HybridStates {
    /// Looks up the conventional state names C, P, and 3.
    pub fn conventional(space: &StatusSpace) -> Option<Self> {
        Some(HybridStates {
            current: space.index("C")?,
            prepaid: space.index("P")?,
            delinquent: space.index("3")?,
        })
    }

    fn validate(&self, space: &StatusSpace) -> Result<(), ProjError> {
        let distinct = self.current != self.prepaid
            && self.current != self.delinquent
            && self.prepaid != self.delinquent;
        let in_range = self.current < space.len()
            && self.prepaid < space.len()
            && self.delinquent < space.len();
        if !distinct || !in_range || !space.is_absorbing(self.prepaid) {
            return Err(ProjError::BadHybridStates);
        }
        Ok(())
    }
}

/// Deterministic skeleton of the hybrid scheme for a cohort starting in the
/// current state: the probability of still being current (never delinquent)
/// at each time, the accumulated prepaid mass along that chain, and the
/// distribution of first delinquency entry times.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrace {
    /// `p_current[t]`: in the current state at t with no delinquency so far.
    pub p_current: Vec<f64>,
    /// `p_prepaid[t]`: prepaid by t without ever entering delinquency.
    pub p_prepaid: Vec<f64>,
    /// `enter_delinq[t]`: first entry into delinquency at exactly t.
    pub enter_delinq: Vec<f64>,
    /// Total mass that enters delinquency by the horizon.
    pub p_delinq_total: f64,
    pub rows_evaluated: u64,
}

impl HybridTrace {
    /// Entry-time distribution conditional on entering delinquency; all
    /// zeros when nothing enters.
    pub fn entry_distribution(&self) -> Vec<f64> {
        if self.p_delinq_total <= 0.0 {
            return vec![0.0; self.enter_delinq.len()];
        }
        self.enter_delinq.iter().map(|&e| e / self.p_delinq_total).collect()
    }
}

/// Runs the deterministic hybrid recursion up to `horizon`. Transitions out
/// of the current state must stay within the three tracked states.
pub fn hybrid_trace(
    model: &dyn TransitionModel,
    states: HybridStates,
    horizon: usize,
) -> Result<HybridTrace, ProjError> {
    if model.path_dependent() {
        return Err(ProjError::NonMarkovianRegressor);
    }
    let space = model.space();
    states.validate(space)?;
    let mut p_current = vec![0.0; horizon + 1];
    let mut p_prepaid = vec![0.0; horizon + 1];
    let mut enter_delinq = vec![0.0; horizon + 1];
    p_current[0] = 1.0;
    let mut rows_evaluated = 0u64;
    for t in 0..horizon {
        if p_current[t] == 0.0 && space.is_absorbing(states.current) {
            p_prepaid[t + 1] = p_prepaid[t];
            continue;
        }
        let row = model.transition_row(states.current, t, &[])?;
        check_row(&row, space, states.current, t)?;
        rows_evaluated += 1;
        let tracked = row[states.current] + row[states.prepaid] + row[states.delinquent];
        if (tracked - 1.0).abs() > ROW_SUM_TOL {
            return Err(ProjError::BadTransitionRow {
                state: space.name(states.current).to_string(),
                time: t,
                reason: format!(
                    "mass {:.3e} leaks outside the current, prepaid, and delinquent states",
                    1.0 - tracked
                ),
            });
        }
        p_current[t + 1] = p_current[t] * row[states.current];
        p_prepaid[t + 1] = p_prepaid[t] + p_current[t] * row[states.prepaid];
        enter_delinq[t + 1] = p_current[t] * row[states.delinquent];
    }
    let p_delinq_total = enter_delinq.iter().sum();
    Ok(HybridTrace { p_current, p_prepaid, enter_delinq, p_delinq_total, rows_evaluated })
}

/// Hybrid projection for a cohort starting in the current state: the
/// never-delinquent flow is carried exactly by the trace, while the mass
/// that enters delinquency is simulated path by path from its entry time.
/// Estimates combine as `p = p_delinq_total * simulated + deterministic`;
/// standard errors scale the binomial error by the simulated branch weight.
/// When nothing reaches delinquency the output is exact and no paths run.
pub fn project_hybrid(
    model: &dyn TransitionModel,
    states: HybridStates,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<ProjectionResult, ProjError> {
    let trace = hybrid_trace(model, states, horizon)?;
    let space = model.space();
    let s = space.len();
    // Mass still current at t that enters delinquency after t; subtracting
    // it from the deterministic current share avoids double counting with
    // simulated paths that have not entered yet.
    let mut future_entry = vec![0.0; horizon + 2];
    for t in (0..=horizon).rev() {
        future_entry[t] = future_entry[t + 1] + trace.enter_delinq[t];
    }
    let mut deterministic = Array2::zeros((horizon + 1, s));
    for t in 0..=horizon {
        deterministic[(t, states.current)] = trace.p_current[t] - future_entry[t + 1];
        deterministic[(t, states.prepaid)] = trace.p_prepaid[t];
    }
    let p3 = trace.p_delinq_total;
    if p3 <= 0.0 {
        return Ok(ProjectionResult {
            state_names: space.names().to_vec(),
            probabilities: deterministic,
            std_errors: Array2::zeros((horizon + 1, s)),
            rows_evaluated: trace.rows_evaluated,
            paths: 0,
        });
    }
    if n_paths == 0 {
        return Err(ProjError::BadStart(
            "delinquency mass is positive, so at least one path is required".to_string(),
        ));
    }

    let entry = &trace.enter_delinq;
    let blocks = n_paths.div_ceil(SIM_BLOCK);
    let tallies: Vec<Result<SimTally, ProjError>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * SIM_BLOCK;
            let hi = ((b + 1) * SIM_BLOCK).min(n_paths);
            let mut counts = Array2::zeros((horizon + 1, s));
            let mut rows = 0u64;
            for path in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(path as u64);
                // First delinquency time, drawn from the entry distribution.
                let v: f64 = rng.random::<f64>() * p3;
                let mut acc = 0.0;
                let mut u = horizon;
                for (t, &e) in entry.iter().enumerate() {
                    acc += e;
                    if v < acc {
                        u = t;
                        break;
                    }
                }
                for t in 0..u {
                    counts[(t, states.current)] += 1;
                }
                let mut state = states.delinquent;
                counts[(u, state)] += 1;
                for t in u..horizon {
                    if space.is_absorbing(state) {
                        for rest in t..horizon {
                            counts[(rest + 1, state)] += 1;
                        }
                        break;
                    }
                    let row = model.transition_row(state, t, &[])?;
                    check_row(&row, space, state, t)?;
                    rows += 1;
                    state = sample_index(&mut rng, &row);
                    counts[(t + 1, state)] += 1;
                }
            }
            Ok(SimTally { counts, rows })
        })
        .collect();
    let mut counts = Array2::<u64>::zeros((horizon + 1, s));
    let mut sim_rows = 0u64;
    for tally in tallies {
        let tally = tally?;
        counts += &tally.counts;
        sim_rows += tally.rows;
    }
    let n = n_paths as f64;
    let mut probabilities = deterministic;
    let mut std_errors = Array2::zeros((horizon + 1, s));
    for t in 0..=horizon {
        for st in 0..s {
            let q = counts[(t, st)] as f64 / n;
            probabilities[(t, st)] += p3 * q;
            std_errors[(t, st)] = p3 * (q * (1.0 - q) / n).sqrt();
        }
    }
    Ok(ProjectionResult {
        state_names: space.names().to_vec(),
        probabilities,
        std_errors,
        rows_evaluated: trace.rows_evaluated + sim_rows,
        paths: n_paths,
    })
}

// ---------------------------------------------------------------------------
// Path allocation
// ---------------------------------------------------------------------------

/// Integer path counts assigned to weighted strata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathAllocation {
    pub counts: Vec<usize>,
    /// Total paths assigned; the randomized allocator can fall short of the
    /// request when weights are exhausted.
    pub assigned: usize,
}

fn check_weights(weights: &[f64]) -> Result<f64, ProjError> {
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(ProjError::BadWeight(w));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(ProjError::AllZeroWeights);
    }
    Ok(total)
}

/// Randomized proportional allocation of `total` paths over `weights`. Each
/// stratum is visited in turn with acceptance probability `min(1, w/eps)`
/// where `eps` is the weight quantum `sum(w)/total`; an accepted visit
/// assigns one path and spends `eps` of the stratum's weight. Allocation
/// stops when `total` paths are assigned or every remaining weight is at
/// most `eps/2`. Expected counts are proportional to the weights.
pub fn allocate_paths(
    weights: &[f64],
    total: usize,
    seed: u64,
) -> Result<PathAllocation, ProjError> {
    let gamma = check_weights(weights)?;
    let mut counts = vec![0usize; weights.len()];
    if total == 0 {
        return Ok(PathAllocation { counts, assigned: 0 });
    }
    let eps = gamma / total as f64;
    let mut w = weights.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assigned = 0usize;
    while assigned < total && w.iter().any(|&wi| wi > eps / 2.0) {
        for i in 0..w.len() {
            if assigned >= total {
                break;
            }
            let alpha = (w[i] / eps).min(1.0);
            let nu: f64 = rng.random();
            // The half-quantum floor only ends the outer loop; a stratum
            // below it keeps its diminished acceptance odds while other
            // strata hold the loop open.
            if alpha <= 0.0 || nu > alpha {
                continue;
            }
            counts[i] += 1;
            assigned += 1;
            w[i] -= eps;
        }
    }
    Ok(PathAllocation { counts, assigned })
}

/// Deterministic allocation: each stratum gets `ceil(w/eps)` paths with the
/// same quantum as the randomized allocator, so every positive weight gets
/// at least one path and totals can exceed the request slightly.
pub fn allocate_paths_deterministic(
    weights: &[f64],
    total: usize,
) -> Result<PathAllocation, ProjError> {
    let gamma = check_weights(weights)?;
    if total == 0 {
        return Ok(PathAllocation { counts: vec![0; weights.len()], assigned: 0 });
    }
    let eps = gamma / total as f64;
    let counts: Vec<usize> =
        weights.iter().map(|&w| if w > 0.0 { (w / eps).ceil() as usize } else { 0 }).collect();
    let assigned = counts.iter().sum();
    Ok(PathAllocation { counts, assigned })
}
