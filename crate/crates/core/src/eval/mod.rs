//! Metrics, statistical tests, baselines and evaluation protocols.

mod metrics;
mod protocol;
mod stats;

pub use metrics::{precision_recall, r_squared, PrCurve, PrPoint, ScoredLabel};
pub use protocol::{
    assign_folds, bootstrap_population_experiment, cross_validate, forecast_persons, forecast_population, redact, scaling_baseline,
    symptom_network, window_labels, Ablation, CvFold, CvModeSummary, CvOptions, CvReport, ExperimentConfig, PopulationReport, R2Row,
    R2Summary, SyntheticWorld, METHOD_FILTER, METHOD_PERSISTENCE, METHOD_SCALING,
};
pub use stats::{
    episode_durations, exponential_fit, exponential_mle, kolmogorov_survival, ks_test, ks_uniform, pairs_from_groups, permutation_test,
    symptom_transition_matrix, DayContacts, ExponentialFit, PermutationResult, SymptomMatrix, SymptomNetwork, EPISODES,
};
