//! Sparse explanation values for binary tabular classifiers.
//!
//! The crate computes SEV⁻, the fewest features of a positively predicted
//! query that must take a negative reference's values to flip the
//! prediction, together with its cluster, flexible-reference and tree
//! variants, a Gaussian-mixture credibility score, and two training
//! procedures that make models sparser to explain.

pub mod credibility;
pub mod data;
pub mod error;
pub mod models;
pub mod optimize;
pub mod references;
pub mod report;
pub mod schema;
pub mod sev;
pub mod tree;

pub use credibility::{credible_walk, fit_gmm, pick_threshold, DensityModel, GmmConfig};
pub use data::{encode_and_standardize, encode_with, load_csv, stratified_split, Dataset, RawDataset, Role};
pub use error::{Error, ErrorClass, Result};
pub use models::{AnyModel, Differentiable, LinearModel, MlpModel, ScoringModel};
pub use optimize::{allopt_train, gradient_check, loss_pos_ref, loss_sev_all_opt, total_loss, OptConfig, RefMode};
pub use references::{flexible_search, sskm_cluster, FlexConfig, ReferenceSet, SskmConfig};
pub use report::{render_tsv, RunSummary, Variant};
pub use schema::{FeatureKind, FeatureSchema, RawValue};
pub use sev::{
    build_mean_mode_reference, compute_sev_minus, explain_batch, materialize_vertex, summarize_metrics, AlignmentMask,
    ExplanationRecord, Reference, SevProblem,
};
pub use tree::{
    leaf_credibility, preprocess_negative_paths, sev_t, topt, train_cart, CartConfig, SevTOptions, TOptConfig,
    TreeModel,
};
