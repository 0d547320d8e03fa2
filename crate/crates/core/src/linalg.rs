//! Dense symmetric matrix foundation.
//!
//! Every matrix function used by the estimators (inverse, square root,
//! log-determinant, condition number) goes through [`SymMatrix::eigen`], so
//! results are exactly symmetric and share one numerical backend.
//!
//! Covariances are maximum-likelihood estimates: the divisor is `n`, not
//! `n - 1`.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};

/// Relative tolerance under which an asymmetric input is silently averaged.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalues at or below this fraction of the largest one count as zero.
pub const RANK_TOL: f64 = 1e-12;

/// `n` observations by `p` named features, optionally class labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    feature_names: Vec<String>,
    class_labels: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, feature_names: Vec<String>) -> Result<Self> {
        let (n, p) = values.shape();
        if n < 2 {
            return Err(invalid(format!("need at least 2 observations, got {n}")));
        }
        if p < 2 {
            return Err(invalid(format!("need at least 2 features, got {p}")));
        }
        if feature_names.len() != p {
            return Err(Error::Dimension(format!(
                "{} feature names for {p} columns",
                feature_names.len()
            )));
        }
        check_unique(&feature_names)?;
        for j in 0..p {
            for i in 0..n {
                if !values[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self {
            values,
            feature_names,
            class_labels: None,
        })
    }

    /// Builds a data matrix with features named `V1..Vp`.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let names = default_names(values.ncols());
        Self::new(values, names)
    }

    pub fn with_class_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.nrows() {
            return Err(Error::Dimension(format!(
                "{} class labels for {} rows",
                labels.len(),
                self.nrows()
            )));
        }
        self.class_labels = Some(labels);
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_labels(&self) -> Option<&[String]> {
        self.class_labels.as_deref()
    }

    /// Row subset as a new data matrix. Fails if fewer than 2 rows remain.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let values = self.values.select_rows(rows);
        let mut out = Self::new(values, self.feature_names.clone())?;
        if let Some(labels) = &self.class_labels {
            out.class_labels = Some(rows.iter().map(|&r| labels[r].clone()).collect());
        }
        Ok(out)
    }

    /// Splits the rows by class label, classes in order of first appearance.
    pub fn split_by_class(&self) -> Result<Vec<(String, DataMatrix)>> {
        let labels = self
            .class_labels
            .as_ref()
            .ok_or_else(|| invalid("data matrix carries no class labels"))?;
        let mut order: Vec<String> = Vec::new();
        for l in labels {
            if !order.contains(l) {
                order.push(l.clone());
            }
        }
        order
            .into_iter()
            .map(|class| {
                let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
                let mut sub = Self::new(self.values.select_rows(&rows), self.feature_names.clone())
                    .map_err(|e| invalid(format!("class `{class}`: {e}")))?;
                sub.class_labels = Some(vec![class.clone(); rows.len()]);
                Ok((class, sub))
            })
            .collect()
    }
}

/// Labeled `p x p` symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors
/// stored column-wise.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `V f(D) V^T`, symmetrized.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = DVector::from_iterator(self.values.len(), self.values.iter().map(|&d| f(d)));
        let mut vs = self.vectors.clone();
        for (j, mut col) in vs.column_iter_mut().enumerate() {
            col *= scaled[j];
        }
        symmetrize(&(vs * self.vectors.transpose()))
    }

    pub fn recompose(&self) -> DMatrix<f64> {
        self.map(|d| d)
    }
}

impl SymMatrix {
    /// Validates shape, labels, finiteness and symmetry. Asymmetry below
    /// [`SYMMETRY_TOL`] (relative to the largest entry) is averaged away.
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let (r, c) = values.shape();
        if r != c {
            return Err(Error::Dimension(format!("matrix is {r}x{c}, expected square")));
        }
        if names.len() != r {
            return Err(Error::Dimension(format!("{} names for a {r}x{r} matrix", names.len())));
        }
        check_unique(&names)?;
        let mut scale = 0.0f64;
        for j in 0..r {
            for i in 0..r {
                let v = values[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                scale = scale.max(v.abs());
            }
        }
        let asym = max_asymmetry(&values);
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self {
            values: symmetrize(&values),
            names,
        })
    }

    /// Unlabeled constructor; names default to `V1..Vp`.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let names = default_names(values.nrows());
        Self::new(values, names)
    }

    /// For results of computations that are symmetric up to rounding.
    pub(crate) fn from_computed(values: DMatrix<f64>, names: Vec<String>) -> Self {
        debug_assert_eq!(values.nrows(), names.len());
        Self {
            values: symmetrize(&values),
            names,
        }
    }

    pub fn identity(names: Vec<String>) -> Self {
        let p = names.len();
        Self {
            values: DMatrix::identity(p, p),
            names,
        }
    }

    pub fn zeros(names: Vec<String>) -> Self {
        let p = names.len();
        Self {
            values: DMatrix::zeros(p, p),
            names,
        }
    }

    pub fn from_diagonal(diag: &[f64], names: Vec<String>) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)), names)
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim() {
            return Err(Error::Dimension(format!("{} names for dimension {}", names.len(), self.dim())));
        }
        check_unique(&names)?;
        self.names = names;
        Ok(self)
    }

    /// Same dimension and labels.
    pub fn check_compatible(&self, other: &SymMatrix) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!("{}x{0} vs {}x{1}", self.dim(), other.dim())));
        }
        if self.names != other.names {
            return Err(Error::Dimension("feature labels differ".into()));
        }
        Ok(())
    }

    pub fn eigen(&self) -> Result<SymEigen> {
        sym_eigen(&self.values)
    }

    /// `lambda_max / lambda_min`.
    pub fn condition_number(&self) -> Result<f64> {
        let e = self.eigen()?;
        if e.min() <= 0.0 {
            return Err(Error::NotPositiveDefinite(e.min()));
        }
        Ok(e.max() / e.min())
    }

    /// Inverse of a positive-definite matrix via its spectrum.
    pub fn inverse_pd(&self) -> Result<SymMatrix> {
        let e = self.eigen()?;
        if e.min() <= 0.0 {
            return Err(Error::NotPositiveDefinite(e.min()));
        }
        Ok(Self::from_computed(e.map(|d| 1.0 / d), self.names.clone()))
    }

    /// `ln |M|` for positive-definite `M`.
    pub fn log_det(&self) -> Result<f64> {
        let e = self.eigen()?;
        if e.min() <= 0.0 {
            return Err(Error::NotPositiveDefinite(e.min()));
        }
        Ok(e.values.iter().map(|d| d.ln()).sum())
    }

    /// Principal submatrix on the given indices, in the given order.
    pub fn submatrix(&self, idx: &[usize]) -> SymMatrix {
        let values = self.values.select_rows(idx).select_columns(idx);
        let names = idx.iter().map(|&i| self.names[i].clone()).collect();
        Self { values, names }
    }

    /// `tr(A B)` without forming the product.
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        self.values.component_mul(&other.values).sum()
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        (&self.values - &other.values).amax()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.norm()
    }

    /// Count of nonzero entries strictly above the diagonal.
    pub fn offdiag_nonzeros(&self) -> usize {
        let p = self.dim();
        (0..p)
            .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
            .filter(|&(i, j)| self.values[(i, j)] != 0.0)
            .count()
    }
}

pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("V{i}")).collect()
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(names.len());
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(invalid(format!("duplicate name `{n}`")));
        }
    }
    Ok(())
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..p {
        for i in j + 1..p {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<SymEigen> {
    let p = m.nrows();
    if p != m.ncols() {
        return Err(Error::Dimension(format!("{}x{} is not square", p, m.ncols())));
    }
    let scale = m.amax();
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    if p == 0 {
        return Ok(SymEigen {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, 100_000)
        .ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(p, order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = eig.eigenvectors.select_columns(&order);
    Ok(SymEigen { values, vectors })
}

/// Maximum-likelihood covariance `(1/n) Xc^T Xc`.
///
/// `center` subtracts column means; `scale` divides each column by its
/// root-mean-square deviation (divisor `n`), so that with both flags the
/// result is the sample correlation matrix.
pub fn cov_ml(x: &DataMatrix, center: bool, scale: bool) -> Result<SymMatrix> {
    let values = cov_ml_values(x.values(), center, scale).map_err(|e| match e {
        ColumnError::ZeroVariance(j) => Error::ZeroVariance(x.feature_names()[j].clone()),
    })?;
    Ok(SymMatrix::from_computed(values, x.feature_names().to_vec()))
}

pub(crate) enum ColumnError {
    ZeroVariance(usize),
}

pub(crate) fn cov_ml_values(
    x: &DMatrix<f64>,
    center: bool,
    scale: bool,
) -> std::result::Result<DMatrix<f64>, ColumnError> {
    let n = x.nrows() as f64;
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        if center {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        if scale {
            let rms = (col.norm_squared() / n).sqrt();
            if rms <= f64::MIN_POSITIVE {
                return Err(ColumnError::ZeroVariance(j));
            }
            col /= rms;
        }
    }
    Ok(symmetrize(&(xc.tr_mul(&xc) / n)))
}

/// Partial correlations `-w_ij / sqrt(w_ii w_jj)` with unit diagonal.
/// Zero precision entries map to exact zeros.
pub fn prec_to_pcor(omega: &SymMatrix) -> Result<SymMatrix> {
    let p = omega.dim();
    let diag: Vec<f64> = (0..p).map(|i| omega.get(i, i)).collect();
    if let Some(i) = diag.iter().position(|&d| d <= 0.0) {
        return Err(invalid(format!(
            "diagonal entry of `{}` is {} (must be positive)",
            omega.names()[i],
            diag[i]
        )));
    }
    let values = DMatrix::from_fn(p, p, |i, j| {
        let w = omega.get(i, j);
        if i == j {
            1.0
        } else if w == 0.0 {
            0.0
        } else {
            -w / (diag[i] * diag[j]).sqrt()
        }
    });
    Ok(SymMatrix::from_computed(values, omega.names().to_vec()))
}
