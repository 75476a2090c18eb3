//! Shared fixtures for the criterion benches.

use parsifit::{
    CurveFamily, CurveSpec, ItemModel, ObservationGrid, RegressorDistribution, RegressorMeta,
    StatusSpace, SyntheticSpec,
};

/// Three-state loan space with absorbing prepaid and delinquent statuses.
pub fn cp3_space() -> StatusSpace {
    StatusSpace::new(
        &["C", "P", "3"],
        &[("C", &["C", "P", "3"]), ("P", &["P"]), ("3", &["3"])],
        &["P", "3"],
    )
    .unwrap()
}

/// A current-status model with one logistic curve on the first regressor.
pub fn bench_model() -> ItemModel {
    let meta = vec![
        RegressorMeta::real("s"),
        RegressorMeta::real("z"),
        RegressorMeta::flag("j"),
    ];
    let mut model = ItemModel::new(cp3_space(), meta, 0).unwrap();
    model.intercepts = vec![-2.0, -2.5];
    model.flag_betas[(0, 2)] = 0.4;
    model.curves.push(CurveSpec {
        family: CurveFamily::Logistic,
        a: 1.1,
        b: 0.2,
        regressor: 0,
        to_state: 1,
        beta: 1.3,
    });
    model
}

/// Synthetic observations drawn from the bench model.
pub fn bench_grid(rows: usize, seed: u64) -> ObservationGrid {
    let spec = SyntheticSpec {
        model: bench_model(),
        distributions: vec![
            RegressorDistribution::Uniform { low: -2.0, high: 2.0 },
            RegressorDistribution::Normal { mean: 0.0, sd: 1.0 },
            RegressorDistribution::Bernoulli { p: 0.25 },
        ],
        rows,
        seed,
    };
    parsifit::data::generate_synthetic(&spec).unwrap().grid
}
