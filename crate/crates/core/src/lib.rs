//! Research capacity index construction: panel ingestion and imputation,
//! factor analysis, reliability, composite indexes and rankings, and
//! hierarchical Bayesian regression of citation impact on the indexes.

pub mod bayes;
pub mod error;
pub mod factor;
pub mod index;
pub mod matrix;
pub mod panel;
pub mod pipeline;
pub mod reliability;
pub mod report;
pub mod synth;

pub use bayes::{filter_low_pub, fit, summarize, Fit, ModelSpec, Posterior, RegressionData};
pub use error::{Error, ErrorKind, Result};
pub use factor::{
    adequacy, bartlett, extract_paf, fit_efa, kmo, loading_table, regression_scores, scree, varimax, FactorModel,
    LoadingTable,
};
pub use index::{build_index, rank, summative_index, IndexScores, Ranking, ScoreSeries};
pub use matrix::{pearson_corr, smc, sym_eigen, CorrelationMatrix};
pub use panel::{
    apply_missing_policy, collapse_to_cross_section, default_dictionary, CrossSection, DataDictionary, Panel,
    VariableSpec,
};
pub use reliability::{reliability, ReliabilityReport};
pub use synth::{generate_synthetic_panel, FactorSpec};
