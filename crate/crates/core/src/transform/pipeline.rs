use serde::{Deserialize, Serialize};

use crate::dataio::CompanyView;
use crate::error::{Error, Result};
use crate::numkernel::{Matrix, RngStream};

use super::{PcaModel, ProjectionModel, StandardizeModel};

/// Default upper bound on the PCA output width.
pub const DEFAULT_MAX_PCA: usize = 8;

/// Which stages a company runs before uploading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Upper bound on the PCA width; the effective width is `min(k_pca, input width)`.
    pub k_pca: usize,
    pub project: bool,
    pub reduce: bool,
    pub tag: bool,
}

impl PipelineConfig {
    /// standardize → project → PCA → one-hot.
    pub fn mics(k_pca: usize) -> Self {
        Self {
            k_pca,
            project: true,
            reduce: true,
            tag: true,
        }
    }

    /// Only z-scoring; used by isolated single-company training.
    pub fn standardize_only() -> Self {
        Self {
            k_pca: DEFAULT_MAX_PCA,
            project: false,
            reduce: false,
            tag: false,
        }
    }

    pub fn output_width(&self, input_width: usize, n_companies: usize) -> usize {
        let base = if self.reduce {
            self.k_pca.min(input_width)
        } else {
            input_width
        };
        base + if self.tag { n_companies } else { 0 }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::mics(DEFAULT_MAX_PCA)
    }
}

/// Every fitted stage of one company's pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyTransform {
    pub industry: usize,
    pub company: usize,
    pub n_companies: usize,
    pub standardize: StandardizeModel,
    pub projection: Option<ProjectionModel>,
    pub pca: Option<PcaModel>,
    pub tag: bool,
}

impl CompanyTransform {
    pub fn input_width(&self) -> usize {
        self.standardize.width()
    }

    pub fn output_width(&self) -> usize {
        let base = match (&self.pca, &self.projection) {
            (Some(p), _) => p.output_width(),
            (None, Some(r)) => r.matrix.cols(),
            (None, None) => self.input_width(),
        };
        base + if self.tag { self.n_companies } else { 0 }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = self.standardize.apply(x)?;
        if let Some(r) = &self.projection {
            out = r.apply(&out)?;
        }
        if let Some(p) = &self.pca {
            out = p.apply(&out)?;
        }
        if self.tag {
            out = one_hot_tag(&out, self.company, self.n_companies)?;
        }
        Ok(out)
    }
}

/// Appends the `n_companies`-wide indicator of `company_index` to every row.
pub fn one_hot_tag(x: &Matrix, company_index: usize, n_companies: usize) -> Result<Matrix> {
    if company_index >= n_companies {
        return Err(Error::Company {
            index: company_index,
            count: n_companies,
        });
    }
    let mut tag = Matrix::zeros(x.rows(), n_companies);
    for r in 0..x.rows() {
        tag[(r, company_index)] = 1.0;
    }
    Matrix::hstack(&[x, &tag])
}

/// Drops the trailing `n_companies` tag columns.
pub fn strip_tag(x: &Matrix, n_companies: usize) -> Matrix {
    x.col_range(0, x.cols().saturating_sub(n_companies))
}

/// Fits the company's stages on `view` (training rows only) and returns the
/// fitted transform together with the transformed rows.
///
/// The projection keeps the input width and draws from `stream/projection`.
pub fn company_pipeline(
    view: &CompanyView,
    config: &PipelineConfig,
    n_companies: usize,
    stream: &RngStream,
) -> Result<(CompanyTransform, Matrix)> {
    if view.is_empty() {
        return Err(Error::Data(format!(
            "company {} of industry {} holds no rows",
            view.company, view.industry
        )));
    }
    if view.company >= n_companies {
        return Err(Error::Company {
            index: view.company,
            count: n_companies,
        });
    }
    let standardize = StandardizeModel::fit(&view.features)?;
    let mut current = standardize.apply(&view.features)?;
    let width = current.cols();

    let projection = if config.project {
        let model = ProjectionModel::generate(&stream.child("projection"), width, width)?;
        current = model.apply(&current)?;
        Some(model)
    } else {
        None
    };

    let pca = if config.reduce {
        let model = PcaModel::fit(&current, config.k_pca.min(width))?;
        current = model.apply(&current)?;
        Some(model)
    } else {
        None
    };

    if config.tag {
        current = one_hot_tag(&current, view.company, n_companies)?;
    }

    Ok((
        CompanyTransform {
            industry: view.industry,
            company: view.company,
            n_companies,
            standardize,
            projection,
            pca,
            tag: config.tag,
        },
        current,
    ))
}
