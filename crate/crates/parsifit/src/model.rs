//! Core model structure: status spaces, observation grids, curve specs,
//! fitted models, fit configuration, and fit reports.
//!
//! Types here are deliberately dumb containers with validated constructors.
//! All numeric behavior lives in the sibling modules.

use ndarray::{Array2, ShapeBuilder};
use std::fmt;
use thiserror::Error;

/// Tolerance for "each y row sums to 1" style checks on observation grids.
pub const Y_ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("status space must contain at least one status")]
    EmptyStatusSpace,
    #[error("duplicate status name {0:?}")]
    DuplicateStatus(String),
    #[error("unknown status name {0:?}")]
    UnknownStatus(String),
    #[error("status {0:?} has no reachable end statuses")]
    NoReachableStatus(String),
    #[error("absorbing status {0:?} must reach exactly itself")]
    BadAbsorbing(String),
    #[error("duplicate regressor name {0:?}")]
    DuplicateRegressor(String),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("status index {0} out of range")]
    StatusOutOfRange(usize),
    #[error("regressor index {0} out of range")]
    RegressorOutOfRange(usize),
    #[error("reference state must be reachable from the start status")]
    BadReference,
    #[error("curve {0} is invalid: {1}")]
    BadCurve(usize, String),
    #[error("non-finite parameter: {0}")]
    NonFinite(String),
    #[error("flag beta on non-flag column {0}")]
    BetaOnNonFlag(usize),
    #[error("invalid fit config: {0}")]
    BadConfig(String),
    #[error("model document version {0} is not supported")]
    UnsupportedVersion(u64),
    #[error("malformed model document: {0}")]
    Document(String),
}

// ---------------------------------------------------------------------------
// Status space
// ---------------------------------------------------------------------------

/// The set of loan statuses, the reachability relation between them, and the
/// absorbing subset. Absorbing statuses reach exactly themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct StatusSpace {
    names: Vec<String>,
    reachable: Vec<Vec<usize>>,
    absorbing: Vec<bool>,
}

impl StatusSpace {
    /// Builds a status space from names, a reachability list per status, and
    /// the absorbing subset. Every status must appear in `reachable` with at
    /// least one end status; absorbing statuses must reach exactly themselves.
    pub fn new(
        names: &[&str],
        reachable: &[(&str, &[&str])],
        absorbing: &[&str],
    ) -> Result<Self, ModelError> {
        if names.is_empty() {
            return Err(ModelError::EmptyStatusSpace);
        }
        let owned: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        for (i, n) in owned.iter().enumerate() {
            if owned[..i].contains(n) {
                return Err(ModelError::DuplicateStatus(n.clone()));
            }
        }
        let index = |name: &str| -> Result<usize, ModelError> {
            owned
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| ModelError::UnknownStatus(name.to_string()))
        };
        let mut reach: Vec<Option<Vec<usize>>> = vec![None; owned.len()];
        for (from, tos) in reachable {
            let f = index(from)?;
            let mut list = Vec::with_capacity(tos.len());
            for t in tos.iter() {
                let ti = index(t)?;
                if !list.contains(&ti) {
                    list.push(ti);
                }
            }
            if list.is_empty() {
                return Err(ModelError::NoReachableStatus(from.to_string()));
            }
            reach[f] = Some(list);
        }
        let mut abs = vec![false; owned.len()];
        for a in absorbing {
            abs[index(a)?] = true;
        }
        let mut filled = Vec::with_capacity(owned.len());
        for (i, r) in reach.into_iter().enumerate() {
            match r {
                Some(list) => {
                    if abs[i] && list != [i] {
                        return Err(ModelError::BadAbsorbing(owned[i].clone()));
                    }
                    filled.push(list);
                }
                None => {
                    if abs[i] {
                        // Absorbing statuses may omit their reachability entry.
                        filled.push(vec![i]);
                    } else {
                        return Err(ModelError::NoReachableStatus(owned[i].clone()));
                    }
                }
            }
        }
        Ok(StatusSpace { names: owned, reachable: filled, absorbing: abs })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Reachable end statuses for transitions out of `from`, in declaration
    /// order. Always non-empty.
    pub fn reachable(&self, from: usize) -> &[usize] {
        &self.reachable[from]
    }

    pub fn is_absorbing(&self, idx: usize) -> bool {
        self.absorbing[idx]
    }

    pub fn absorbing_names(&self) -> Vec<String> {
        (0..self.len())
            .filter(|&i| self.absorbing[i])
            .map(|i| self.names[i].clone())
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Regressors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum RegressorKind {
    /// Real-valued column; the only kind curves can be built on.
    Real,
    /// Binary 0/1 column entering the power score linearly.
    Flag,
    /// String-leveled column stored as a level index; must be expanded to
    /// flags before fitting. Levels are kept in first-appearance order.
    Categorical(Vec<String>),
}

impl RegressorKind {
    pub fn is_real(&self) -> bool {
        matches!(self, RegressorKind::Real)
    }

    pub fn is_flag(&self) -> bool {
        matches!(self, RegressorKind::Flag)
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, RegressorKind::Categorical(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorMeta {
    pub name: String,
    pub kind: RegressorKind,
    /// Whether the candidate search may build curves on this column. Only
    /// meaningful for real columns.
    pub curve_eligible: bool,
}

impl RegressorMeta {
    pub fn real(name: &str) -> Self {
        RegressorMeta { name: name.to_string(), kind: RegressorKind::Real, curve_eligible: true }
    }

    pub fn real_no_curve(name: &str) -> Self {
        RegressorMeta { name: name.to_string(), kind: RegressorKind::Real, curve_eligible: false }
    }

    pub fn flag(name: &str) -> Self {
        RegressorMeta { name: name.to_string(), kind: RegressorKind::Flag, curve_eligible: false }
    }

    pub fn categorical(name: &str, levels: Vec<String>) -> Self {
        RegressorMeta {
            name: name.to_string(),
            kind: RegressorKind::Categorical(levels),
            curve_eligible: false,
        }
    }
}

// ---------------------------------------------------------------------------
// Observation grid
// ---------------------------------------------------------------------------

/// Column-resident panel of observed transitions. `x` is the N x K regressor
/// matrix, `y` the N x W target probability matrix over all statuses. For
/// loaded data `y` is the one-hot encoding of the end status; noise injection
/// produces soft rows that still sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationGrid {
    space: StatusSpace,
    meta: Vec<RegressorMeta>,
    x: Array2<f64>,
    start_status: Vec<usize>,
    end_status: Vec<usize>,
    y: Array2<f64>,
    loan_ids: Option<Vec<String>>,
    months: Option<Vec<String>>,
}

impl ObservationGrid {
    /// Builds a grid with one-hot targets derived from `end_status`.
    pub fn new(
        space: StatusSpace,
        meta: Vec<RegressorMeta>,
        x: Array2<f64>,
        start_status: Vec<usize>,
        end_status: Vec<usize>,
    ) -> Result<Self, ModelError> {
        let n = x.nrows();
        let w = space.len();
        let mut y = Array2::zeros((n, w));
        for (i, &e) in end_status.iter().enumerate() {
            if e >= w {
                return Err(ModelError::StatusOutOfRange(e));
            }
            y[(i, e)] = 1.0;
        }
        Self::with_targets(space, meta, x, start_status, end_status, y)
    }

    /// Builds a grid with explicit (possibly soft) targets.
    pub fn with_targets(
        space: StatusSpace,
        meta: Vec<RegressorMeta>,
        x: Array2<f64>,
        start_status: Vec<usize>,
        end_status: Vec<usize>,
        y: Array2<f64>,
    ) -> Result<Self, ModelError> {
        let n = x.nrows();
        if x.ncols() != meta.len() {
            return Err(ModelError::Shape(format!(
                "x has {} columns but {} regressors are declared",
                x.ncols(),
                meta.len()
            )));
        }
        for (i, m) in meta.iter().enumerate() {
            if meta[..i].iter().any(|o| o.name == m.name) {
                return Err(ModelError::DuplicateRegressor(m.name.clone()));
            }
        }
        if start_status.len() != n || end_status.len() != n {
            return Err(ModelError::Shape(format!(
                "x has {} rows but statuses have {}/{}",
                n,
                start_status.len(),
                end_status.len()
            )));
        }
        if y.nrows() != n || y.ncols() != space.len() {
            return Err(ModelError::Shape(format!(
                "y is {}x{} but expected {}x{}",
                y.nrows(),
                y.ncols(),
                n,
                space.len()
            )));
        }
        for &s in start_status.iter().chain(end_status.iter()) {
            if s >= space.len() {
                return Err(ModelError::StatusOutOfRange(s));
            }
        }
        Ok(ObservationGrid {
            space,
            meta,
            x,
            start_status,
            end_status,
            y,
            loan_ids: None,
            months: None,
        })
    }

    pub fn with_loan_ids(mut self, ids: Vec<String>) -> Result<Self, ModelError> {
        if ids.len() != self.rows() {
            return Err(ModelError::Shape(format!(
                "{} loan ids for {} rows",
                ids.len(),
                self.rows()
            )));
        }
        self.loan_ids = Some(ids);
        Ok(self)
    }

    pub fn with_months(mut self, months: Vec<String>) -> Result<Self, ModelError> {
        if months.len() != self.rows() {
            return Err(ModelError::Shape(format!(
                "{} months for {} rows",
                months.len(),
                self.rows()
            )));
        }
        self.months = Some(months);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn regressor_count(&self) -> usize {
        self.meta.len()
    }

    pub fn space(&self) -> &StatusSpace {
        &self.space
    }

    pub fn meta(&self) -> &[RegressorMeta] {
        &self.meta
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn start_status(&self) -> &[usize] {
        &self.start_status
    }

    pub fn end_status(&self) -> &[usize] {
        &self.end_status
    }

    pub fn loan_ids(&self) -> Option<&[String]> {
        self.loan_ids.as_deref()
    }

    pub fn months(&self) -> Option<&[String]> {
        self.months.as_deref()
    }

    /// Replaces the target matrix, keeping everything else. Used by noise
    /// injection; shape is preserved by construction.
    pub(crate) fn replace_targets(&self, y: Array2<f64>) -> Self {
        let mut g = self.clone();
        assert_eq!(y.dim(), g.y.dim());
        g.y = y;
        g
    }

    /// Returns the grid restricted to `rows`, in the order given.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let k = self.regressor_count();
        let w = self.space.len();
        let mut x = Array2::zeros(((rows.len()), k).f());
        let mut y = Array2::zeros((rows.len(), w));
        for (new_i, &old_i) in rows.iter().enumerate() {
            for c in 0..k {
                x[(new_i, c)] = self.x[(old_i, c)];
            }
            for c in 0..w {
                y[(new_i, c)] = self.y[(old_i, c)];
            }
        }
        ObservationGrid {
            space: self.space.clone(),
            meta: self.meta.clone(),
            x,
            start_status: rows.iter().map(|&i| self.start_status[i]).collect(),
            end_status: rows.iter().map(|&i| self.end_status[i]).collect(),
            y,
            loan_ids: self
                .loan_ids
                .as_ref()
                .map(|ids| rows.iter().map(|&i| ids[i].clone()).collect()),
            months: self
                .months
                .as_ref()
                .map(|ms| rows.iter().map(|&i| ms[i].clone()).collect()),
        }
    }

    /// Approximate heap footprint of the resident numeric arrays in bytes.
    pub fn heap_bytes(&self) -> usize {
        let f64s = self.x.len() + self.y.len();
        let idx = self.start_status.len() + self.end_status.len();
        f64s * std::mem::size_of::<f64>() + idx * std::mem::size_of::<usize>()
    }
}

// ---------------------------------------------------------------------------
// Grid validation
// ---------------------------------------------------------------------------

/// A single validation failure, naming the offending row where applicable.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFiniteRegressor { row: usize, column: usize },
    FlagNotBinary { row: usize, column: usize, value: f64 },
    CategoricalOutOfRange { row: usize, column: usize, value: f64 },
    NegativeTarget { row: usize, state: usize, value: f64 },
    TargetRowSum { row: usize, sum: f64 },
    UnreachableTransition { row: usize, from: usize, to: usize },
    TargetMassOutsideReachable { row: usize, state: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFiniteRegressor { row, column } => {
                write!(f, "row {row}: non-finite value in regressor column {column}")
            }
            Violation::FlagNotBinary { row, column, value } => {
                write!(f, "row {row}: flag column {column} holds {value}, expected 0 or 1")
            }
            Violation::CategoricalOutOfRange { row, column, value } => {
                write!(f, "row {row}: categorical column {column} holds invalid level {value}")
            }
            Violation::NegativeTarget { row, state, value } => {
                write!(f, "row {row}: negative target {value} for state {state}")
            }
            Violation::TargetRowSum { row, sum } => {
                write!(f, "row {row}: target row sums to {sum}, expected 1")
            }
            Violation::UnreachableTransition { row, from, to } => {
                write!(f, "row {row}: transition {from} -> {to} is not reachable")
            }
            Violation::TargetMassOutsideReachable { row, state, value } => {
                write!(f, "row {row}: target mass {value} on unreachable state {state}")
            }
        }
    }
}

/// Checks value-level grid invariants and returns every violation found.
/// Shape-level problems are impossible by construction.
pub fn validate_grid(grid: &ObservationGrid) -> Vec<Violation> {
    let mut out = Vec::new();
    let space = grid.space();
    for i in 0..grid.rows() {
        for (c, m) in grid.meta().iter().enumerate() {
            let v = grid.x()[(i, c)];
            if !v.is_finite() {
                out.push(Violation::NonFiniteRegressor { row: i, column: c });
                continue;
            }
            match &m.kind {
                RegressorKind::Flag => {
                    if v != 0.0 && v != 1.0 {
                        out.push(Violation::FlagNotBinary { row: i, column: c, value: v });
                    }
                }
                RegressorKind::Categorical(levels) => {
                    if v.fract() != 0.0 || v < 0.0 || v >= levels.len() as f64 {
                        out.push(Violation::CategoricalOutOfRange { row: i, column: c, value: v });
                    }
                }
                RegressorKind::Real => {}
            }
        }
        let from = grid.start_status()[i];
        let to = grid.end_status()[i];
        let reach = space.reachable(from);
        if !reach.contains(&to) {
            out.push(Violation::UnreachableTransition { row: i, from, to });
        }
        let mut sum = 0.0;
        for s in 0..space.len() {
            let v = grid.y()[(i, s)];
            if v < 0.0 {
                out.push(Violation::NegativeTarget { row: i, state: s, value: v });
            }
            if v > 0.0 && !reach.contains(&s) {
                out.push(Violation::TargetMassOutsideReachable { row: i, state: s, value: v });
            }
            sum += v;
        }
        if (sum - 1.0).abs() > Y_ROW_SUM_TOL {
            out.push(Violation::TargetRowSum { row: i, sum });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CurveFamily {
    Logistic,
    Gaussian,
}

impl CurveFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            CurveFamily::Logistic => "logistic",
            CurveFamily::Gaussian => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "logistic" => Some(CurveFamily::Logistic),
            "gaussian" => Some(CurveFamily::Gaussian),
            _ => None,
        }
    }
}

impl fmt::Display for CurveFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One fitted curve: a transform of a single real regressor whose output,
/// scaled by `beta`, feeds the power score of `to_state`.
///
/// Parameter roles differ by family. Logistic: `b` is the center and `a*a`
/// the slope, so the curve always rises with x. Gaussian: `a` is the center
/// and `b` the width, stored as its magnitude and never zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    pub family: CurveFamily,
    pub a: f64,
    pub b: f64,
    pub regressor: usize,
    pub to_state: usize,
    pub beta: f64,
}

impl CurveSpec {
    /// Location parameter, as reported in fit reports.
    pub fn center(&self) -> f64 {
        match self.family {
            CurveFamily::Logistic => self.b,
            CurveFamily::Gaussian => self.a,
        }
    }

    /// Scale parameter, as reported in fit reports: the squared logistic
    /// slope or the gaussian width.
    pub fn slope(&self) -> f64 {
        match self.family {
            CurveFamily::Logistic => self.a * self.a,
            CurveFamily::Gaussian => self.b,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.a.is_finite() && self.b.is_finite() && self.beta.is_finite()) {
            return Err("non-finite curve parameter".to_string());
        }
        if self.family == CurveFamily::Gaussian && self.b == 0.0 {
            return Err("gaussian width must be nonzero".to_string());
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Fitted model
// ---------------------------------------------------------------------------

/// Returns the conventional reference state for `start`: the self-transition
/// when reachable, otherwise the first reachable end status.
pub fn default_reference_state(space: &StatusSpace, start: usize) -> usize {
    let reach = space.reachable(start);
    if reach.contains(&start) {
        start
    } else {
        reach[0]
    }
}

/// A fitted model for one start status. Power scores are defined over the
/// reachable end statuses with the reference state pinned at zero; the other
/// reachable states (the "parameter states") each carry an intercept, one
/// beta per flag column, and the curve contributions targeting them.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemModel {
    pub space: StatusSpace,
    pub meta: Vec<RegressorMeta>,
    pub start_status: usize,
    pub reference_state: usize,
    /// One intercept per parameter state, in `param_states` order.
    pub intercepts: Vec<f64>,
    /// Parameter-state by regressor matrix; entries on non-flag columns must
    /// be zero.
    pub flag_betas: Array2<f64>,
    pub curves: Vec<CurveSpec>,
}

impl ItemModel {
    /// A zero-parameter model with the conventional reference state.
    pub fn new(
        space: StatusSpace,
        meta: Vec<RegressorMeta>,
        start_status: usize,
    ) -> Result<Self, ModelError> {
        if start_status >= space.len() {
            return Err(ModelError::StatusOutOfRange(start_status));
        }
        let reference = default_reference_state(&space, start_status);
        Self::with_reference(space, meta, start_status, reference)
    }

    /// A zero-parameter model with an explicit reference state.
    pub fn with_reference(
        space: StatusSpace,
        meta: Vec<RegressorMeta>,
        start_status: usize,
        reference_state: usize,
    ) -> Result<Self, ModelError> {
        if start_status >= space.len() {
            return Err(ModelError::StatusOutOfRange(start_status));
        }
        if !space.reachable(start_status).contains(&reference_state) {
            return Err(ModelError::BadReference);
        }
        let n_param = space.reachable(start_status).len() - 1;
        let k = meta.len();
        let model = ItemModel {
            space,
            meta,
            start_status,
            reference_state,
            intercepts: vec![0.0; n_param],
            flag_betas: Array2::zeros((n_param, k)),
            curves: Vec::new(),
        };
        Ok(model)
    }

    /// Reachable end statuses for the start status, in declaration order.
    pub fn reachable(&self) -> &[usize] {
        self.space.reachable(self.start_status)
    }

    /// The non-reference reachable end statuses, in reachable order. Position
    /// j in this list owns `intercepts[j]` and `flag_betas` row j.
    pub fn param_states(&self) -> Vec<usize> {
        self.reachable()
            .iter()
            .copied()
            .filter(|&s| s != self.reference_state)
            .collect()
    }

    /// Index into `param_states` for a global state id.
    pub fn param_index(&self, state: usize) -> Option<usize> {
        self.param_states().iter().position(|&s| s == state)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.start_status >= self.space.len() {
            return Err(ModelError::StatusOutOfRange(self.start_status));
        }
        if !self.reachable().contains(&self.reference_state) {
            return Err(ModelError::BadReference);
        }
        let n_param = self.reachable().len() - 1;
        let k = self.meta.len();
        if self.intercepts.len() != n_param {
            return Err(ModelError::Shape(format!(
                "{} intercepts for {} parameter states",
                self.intercepts.len(),
                n_param
            )));
        }
        if self.flag_betas.dim() != (n_param, k) {
            return Err(ModelError::Shape(format!(
                "flag beta matrix is {:?}, expected {:?}",
                self.flag_betas.dim(),
                (n_param, k)
            )));
        }
        for v in self.intercepts.iter().chain(self.flag_betas.iter()) {
            if !v.is_finite() {
                return Err(ModelError::NonFinite("intercept or flag beta".to_string()));
            }
        }
        for (j, m) in self.meta.iter().enumerate() {
            if !m.kind.is_flag() {
                for s in 0..n_param {
                    if self.flag_betas[(s, j)] != 0.0 {
                        return Err(ModelError::BetaOnNonFlag(j));
                    }
                }
            }
        }
        let param = self.param_states();
        for (i, c) in self.curves.iter().enumerate() {
            c.validate().map_err(|e| ModelError::BadCurve(i, e))?;
            if c.regressor >= k {
                return Err(ModelError::RegressorOutOfRange(c.regressor));
            }
            if !self.meta[c.regressor].kind.is_real() {
                return Err(ModelError::BadCurve(i, "curve on non-real regressor".to_string()));
            }
            if !param.contains(&c.to_state) {
                return Err(ModelError::BadCurve(
                    i,
                    "curve target must be a non-reference reachable state".to_string(),
                ));
            }
        }
        Ok(())
    }

    /// Checks that `grid` provides exactly the columns and status space this
    /// model was built against.
    pub fn check_grid(&self, grid: &ObservationGrid) -> Result<(), ModelError> {
        if self.space != *grid.space() {
            return Err(ModelError::Shape("status space mismatch".to_string()));
        }
        if self.meta != grid.meta() {
            return Err(ModelError::Shape("regressor metadata mismatch".to_string()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Fit configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Aic,
    Bic,
}

impl Criterion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Some(Criterion::Aic),
            "bic" => Some(Criterion::Bic),
            _ => None,
        }
    }
}

/// Knobs for the fitting loop and the subsampled comparator.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub criterion: Criterion,
    /// Hard cap on the number of curves added by the greedy loop.
    pub max_curves: usize,
    /// Significance multiple for the adaptive comparator.
    pub comparator_c: f64,
    /// Initial comparison block size; `None` selects min(10^4, ceil(N/100)).
    pub m0: Option<usize>,
    /// Per-observation cap on the negative log likelihood.
    pub ll_cap: f64,
    /// Standard deviation of the target noise injected before fitting; 0
    /// disables injection. Must stay in [0, 1e-3].
    pub noise_sd: f64,
    /// Number of annealing passes requested from `anneal`.
    pub anneal_loops: usize,
    pub seed: u64,
    /// When true, full-dataset comparisons stop once the two points are
    /// within one standard deviation; when false they fall back to the raw
    /// full-data ordering.
    pub sigma_stop: bool,
    /// Parameters charged per accepted curve by the information criterion.
    /// The default of 3 charges the curve shape and beta, treating the
    /// intercept adjustment as free; 4 charges all four optimized scalars.
    pub curve_param_cost: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            criterion: Criterion::Aic,
            max_curves: 20,
            comparator_c: 5.0,
            m0: None,
            ll_cap: 20.0,
            noise_sd: 0.0,
            anneal_loops: 0,
            seed: 0,
            sigma_stop: true,
            curve_param_cost: 3,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.comparator_c.is_finite() && self.comparator_c > 0.0) {
            return Err(ModelError::BadConfig("comparator_c must be positive".to_string()));
        }
        if let Some(m0) = self.m0 {
            if m0 < 2 {
                return Err(ModelError::BadConfig("m0 must be at least 2".to_string()));
            }
        }
        if !(self.ll_cap.is_finite() && self.ll_cap > 0.0) {
            return Err(ModelError::BadConfig("ll_cap must be positive".to_string()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd <= 1e-3) {
            return Err(ModelError::BadConfig("noise_sd must lie in [0, 1e-3]".to_string()));
        }
        if self.curve_param_cost == 0 {
            return Err(ModelError::BadConfig("curve_param_cost must be positive".to_string()));
        }
        Ok(())
    }

    /// Effective initial comparison block size for a grid of `n` rows.
    pub fn effective_m0(&self, n: usize) -> usize {
        let m = self.m0.unwrap_or_else(|| 10_000.min(n.div_ceil(100)));
        m.clamp(2, n.max(2))
    }
}

// ---------------------------------------------------------------------------
// Fit report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxCurves,
    CriterionFailed,
    NoImprovement,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::MaxCurves => "MAX_CURVES",
            StopReason::CriterionFailed => "CRITERION_FAILED",
            StopReason::NoImprovement => "NO_IMPROVEMENT",
        }
    }
}

/// One accepted curve in the order it was added.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub regressor: String,
    pub to_state: String,
    pub family: CurveFamily,
    pub center: f64,
    pub slope: f64,
    /// Full-grid mean capped negative log likelihood after this curve.
    pub neg_ll: f64,
    pub delta_aic: f64,
    pub delta_bic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub entries: Vec<ReportEntry>,
    pub reason: StopReason,
}

impl FitReport {
    pub const CSV_HEADER: &'static str =
        "regressor,to_state,type,center,slope,neg_ll,delta_aic,delta_bic";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                e.regressor,
                e.to_state,
                e.family,
                e.center,
                e.slope,
                e.neg_ll,
                e.delta_aic,
                e.delta_bic
            ));
        }
        out
    }
}
