//! Smooth convex empirical criteria: value, score, Hessian and
//! per-observation scores.
//!
//! The squared loss carries the conventional one-half factor,
//! `(1/2T) Σ (y_t − x_t'θ)²`, so its score is `−X'(y − Xθ)/T`. The logistic
//! loss is the average negative log-likelihood with responses in `{0, 1}`.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::groups::ActiveSets;

/// Largest dimension for which a dense Hessian is materialized.
pub const MAX_DENSE_DIM: usize = 2000;

/// Design matrix (`T × d`, one row per observation) and response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    design: DMatrix<f64>,
    response: DVector<f64>,
}

impl Dataset {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        check_len(design.nrows(), response.len())?;
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData("design"));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData("response"));
        }
        Ok(Self { design, response })
    }

    /// Reads a CSV with a header row. The column named `response` is the
    /// response; every other column, in file order, is a design column.
    pub fn from_csv_reader<R: Read>(reader: R, response: &str) -> Result<(Self, Vec<String>)> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
        let response_col = headers
            .iter()
            .position(|h| h.trim() == response)
            .ok_or_else(|| Error::Csv(format!("response column '{response}' not found")))?;
        let names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != response_col)
            .map(|(_, h)| h.trim().to_string())
            .collect();

        let mut rows: Vec<f64> = Vec::new();
        let mut y = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Csv(e.to_string()))?;
            if record.len() != headers.len() {
                return Err(Error::Csv(format!(
                    "row {} has {} fields, header has {}",
                    line + 1,
                    record.len(),
                    headers.len()
                )));
            }
            for (i, field) in record.iter().enumerate() {
                let value: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Csv(format!("row {}: cannot parse '{}' as a number", line + 1, field)))?;
                if i == response_col {
                    y.push(value);
                } else {
                    rows.push(value);
                }
            }
        }
        let design = DMatrix::from_row_slice(y.len(), names.len(), &rows);
        Ok((Self::new(design, DVector::from_vec(y))?, names))
    }

    pub fn from_csv_path(path: impl AsRef<Path>, response: &str) -> Result<(Self, Vec<String>)> {
        let file =
            std::fs::File::open(path.as_ref()).map_err(|e| Error::Csv(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(file, response)
    }

    /// Sample size `T`.
    pub fn n_obs(&self) -> usize {
        self.design.nrows()
    }

    /// Number of covariates `d`.
    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    /// Dataset made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            design: self.design.select_rows(rows),
            response: self.response.select_rows(rows),
        }
    }

    /// Dataset made of the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        Dataset {
            design: self.design.select_columns(cols),
            response: self.response.clone(),
        }
    }

    pub fn linear_predictor(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.design * theta
    }
}

/// Contract for a smooth convex per-observation loss averaged over the sample.
///
/// Implementors supply the value, the score (gradient), the Hessian and the
/// per-observation scores. Convexity and smoothness in `θ` are the
/// implementor's responsibility; the solver relies on both.
pub trait Loss: Sync {
    /// Checks that the dataset is admissible for this loss.
    fn validate(&self, _data: &Dataset) -> Result<()> {
        Ok(())
    }

    fn value(&self, data: &Dataset, theta: &DVector<f64>) -> Result<f64>;

    fn score(&self, data: &Dataset, theta: &DVector<f64>) -> Result<DVector<f64>>;

    fn hessian(&self, data: &Dataset, theta: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// `T × d` matrix whose row `t` is the gradient of the `t`-th term.
    fn observation_scores(&self, data: &Dataset, theta: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// True when the loss is exactly `(1/2T)‖y − Xθ‖²`, which lets the solver
    /// work from the Gram matrix.
    fn is_least_squares(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFamily {
    Squared,
    Logistic,
}

impl std::str::FromStr for LossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(LossFamily::Squared),
            "logistic" => Ok(LossFamily::Logistic),
            other => Err(Error::InvalidConfig(format!("unknown loss family '{other}'"))),
        }
    }
}

impl std::fmt::Display for LossFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossFamily::Squared => "squared",
            LossFamily::Logistic => "logistic",
        })
    }
}

/// `log(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LossFamily {
    fn check(&self, data: &Dataset, theta: &DVector<f64>) -> Result<()> {
        check_len(data.dim(), theta.len())?;
        self.validate(data)
    }

    /// Derivative of the per-observation loss with respect to the linear
    /// predictor, `∂l/∂(x'θ)`.
    fn residual_derivative(&self, data: &Dataset, theta: &DVector<f64>) -> DVector<f64> {
        let eta = data.linear_predictor(theta);
        let y = data.response();
        match self {
            LossFamily::Squared => eta - y,
            LossFamily::Logistic => {
                DVector::from_iterator(eta.len(), eta.iter().zip(y.iter()).map(|(&z, &yt)| sigmoid(z) - yt))
            }
        }
    }
}

impl Loss for LossFamily {
    fn validate(&self, data: &Dataset) -> Result<()> {
        if *self == LossFamily::Logistic {
            if let Some(bad) = data.response().iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidResponse(format!(
                    "logistic responses must be 0 or 1, found {bad}"
                )));
            }
        }
        Ok(())
    }

    fn value(&self, data: &Dataset, theta: &DVector<f64>) -> Result<f64> {
        self.check(data, theta)?;
        let t = data.n_obs() as f64;
        let eta = data.linear_predictor(theta);
        let y = data.response();
        let total = match self {
            LossFamily::Squared => 0.5 * (y - eta).norm_squared(),
            LossFamily::Logistic => eta.iter().zip(y.iter()).map(|(&z, &yt)| softplus(z) - yt * z).sum(),
        };
        Ok(total / t)
    }

    fn score(&self, data: &Dataset, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(data, theta)?;
        let r = self.residual_derivative(data, theta);
        Ok(data.design().tr_mul(&r) / data.n_obs() as f64)
    }

    fn hessian(&self, data: &Dataset, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(data, theta)?;
        if data.dim() > MAX_DENSE_DIM {
            return Err(Error::ProblemTooLarge {
                d: data.dim(),
                limit: MAX_DENSE_DIM,
            });
        }
        let t = data.n_obs() as f64;
        let x = data.design();
        let h = match self {
            LossFamily::Squared => x.tr_mul(x),
            LossFamily::Logistic => {
                let eta = data.linear_predictor(theta);
                let mut weighted = x.clone();
                for (mut row, &z) in weighted.row_iter_mut().zip(eta.iter()) {
                    let p = sigmoid(z);
                    row *= p * (1.0 - p);
                }
                x.tr_mul(&weighted)
            }
        };
        let mut h = h / t;
        // exact symmetry
        for i in 0..h.nrows() {
            for j in 0..i {
                let v = 0.5 * (h[(i, j)] + h[(j, i)]);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(h)
    }

    fn observation_scores(&self, data: &Dataset, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(data, theta)?;
        let r = self.residual_derivative(data, theta);
        let mut g = data.design().clone();
        for (mut row, &rt) in g.row_iter_mut().zip(r.iter()) {
            row *= rt;
        }
        Ok(g)
    }

    fn is_least_squares(&self) -> bool {
        *self == LossFamily::Squared
    }
}

/// Reciprocal condition number below which a symmetric matrix is treated
/// as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

/// Inverse of a symmetric positive semi-definite matrix, or
/// `SingularHessian` when its reciprocal condition number is below
/// [`SINGULAR_RCOND`].
pub fn spd_inverse(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(h.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let rcond = if max > 0.0 { min / max } else { 0.0 };
    if !(rcond >= SINGULAR_RCOND) {
        return Err(Error::SingularHessian { rcond });
    }
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose())
}

/// Sandwich covariance `Ĥ⁻¹ M̂ Ĥ⁻¹` over the active coordinates, with `Ĥ`
/// the empirical Hessian and `M̂ = (1/T) Σ g_t g_t'` the empirical second
/// moment of the per-observation scores, both restricted to `active`.
pub fn sandwich_covariance<L: Loss + ?Sized>(
    loss: &L,
    data: &Dataset,
    theta: &DVector<f64>,
    active: &ActiveSets,
) -> Result<DMatrix<f64>> {
    check_len(data.dim(), active.dim)?;
    let idx = active.indices();
    if idx.is_empty() {
        return Err(Error::InvalidConfig(
            "sandwich covariance needs a non-empty active set".into(),
        ));
    }
    let h = loss.hessian(data, theta)?.select_rows(&idx).select_columns(&idx);
    let g = loss.observation_scores(data, theta)?.select_columns(&idx);
    let m = g.tr_mul(&g) / data.n_obs() as f64;
    let h_inv = spd_inverse(&h)?;
    let v = &h_inv * m * &h_inv;
    Ok((&v + v.transpose()) * 0.5)
}
