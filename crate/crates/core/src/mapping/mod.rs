//! Linear mappings between shape coefficients and anatomical measurements,
//! and the anatomically parameterized models built from them.

mod evaluation;
mod file;
mod linear;
mod model;
mod population;
mod sweep;

pub use evaluation::{
    loo_evaluate, loo_evaluate_with, mapping_vs_corr, normality_report, pearson_reports,
    population_size_study, size_study_csv, CorrelationReport, ErrorSummary, LooOptions, LooReport,
    MappingCorrDiff, NormalityEntry, NormalityReport, PredictionMode, SequentialStep,
    SizeStudyPoint, LOO_MODELS, NORMALITY_ALPHA,
};
pub use file::{MappingFile, MappingKind};
pub use linear::{
    check_row_rank, fit_mapping, orthogonal_procrustes, procrustes_matrix, pseudo_inverse,
    MappingK, MappingQ, RANK_TOLERANCE,
};
pub use model::{
    build_anat, build_oc_anat, AblationStep, AnatModel, ModelKind, VariabilityEntry,
    VariabilityReport,
};
pub use population::{
    generate_population, generate_population_with, stats_path, LabelStats, PopulationOptions,
    SyntheticPopulation, MAX_REJECT_FRACTION,
};
pub use sweep::{sweep, SweepResult, SWEEP_RANGE};
