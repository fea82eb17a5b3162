//! Per-company obfuscation: standardization, Gaussian projection, PCA to a
//! shared width, and a one-hot company tag.

mod pca;
mod pipeline;
mod projection;
mod standardize;

pub use pca::PcaModel;
pub use pipeline::{company_pipeline, one_hot_tag, strip_tag, CompanyTransform, PipelineConfig, DEFAULT_MAX_PCA};
pub use projection::{gaussian_project, ProjectionModel};
pub use standardize::{StandardizeModel, STD_FLOOR};
