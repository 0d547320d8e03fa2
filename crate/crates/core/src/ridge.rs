//! Single-class ridge precision estimators and default targets.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{SymMatrix, RANK_TOL};

/// Non-informative target families plus a user-supplied matrix.
///
/// Only `Dupv` has a fixed meaning in the literature this crate follows;
/// the scalar targets `Daie` and `Dvar` are defined here as documented on
/// each variant.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    /// All-zero target.
    Null,
    /// Identity: unit partial variance.
    Dupv,
    /// `alpha I`, alpha the mean of the inverse nonzero eigenvalues of `S`.
    Daie,
    /// `alpha I`, alpha the inverse of the mean sample variance.
    Dvar,
    Custom(SymMatrix),
}

/// Name-only form of [`TargetKind`] for configuration files and flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetName {
    Null,
    Dupv,
    Daie,
    Dvar,
}

impl From<TargetName> for TargetKind {
    fn from(n: TargetName) -> Self {
        match n {
            TargetName::Null => TargetKind::Null,
            TargetName::Dupv => TargetKind::Dupv,
            TargetName::Daie => TargetKind::Daie,
            TargetName::Dvar => TargetKind::Dvar,
        }
    }
}

impl std::str::FromStr for TargetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "null" => Ok(Self::Null),
            "dupv" => Ok(Self::Dupv),
            "daie" => Ok(Self::Daie),
            "dvar" => Ok(Self::Dvar),
            other => Err(invalid(format!("unknown target kind `{other}`"))),
        }
    }
}

pub fn default_target(s: &SymMatrix, kind: &TargetKind) -> Result<SymMatrix> {
    let names = s.names().to_vec();
    let p = s.dim();
    match kind {
        TargetKind::Null => Ok(SymMatrix::zeros(names)),
        TargetKind::Dupv => Ok(SymMatrix::identity(names)),
        TargetKind::Daie => {
            let e = s.eigen()?;
            let cutoff = RANK_TOL * e.max().max(0.0);
            let nonzero: Vec<f64> = e.values.iter().copied().filter(|&d| d > cutoff).collect();
            if nonzero.is_empty() {
                return Err(invalid("DAIE target needs at least one nonzero eigenvalue"));
            }
            let alpha = nonzero.iter().map(|d| 1.0 / d).sum::<f64>() / nonzero.len() as f64;
            SymMatrix::from_diagonal(&vec![alpha; p], names)
        }
        TargetKind::Dvar => {
            let mean_var = (0..p).map(|i| s.get(i, i)).sum::<f64>() / p as f64;
            if mean_var <= 0.0 {
                return Err(invalid("DVAR target needs a positive mean variance"));
            }
            SymMatrix::from_diagonal(&vec![1.0 / mean_var; p], names)
        }
        TargetKind::Custom(t) => {
            if t.dim() != p {
                return Err(Error::Dimension(format!("target is {0}x{0}, covariance is {p}x{p}", t.dim())));
            }
            let e = t.eigen()?;
            if e.min() < -1e-10 * e.max().abs().max(1.0) {
                return Err(invalid(format!(
                    "target is not positive semi-definite (smallest eigenvalue {:e})",
                    e.min()
                )));
            }
            Ok(t.clone())
        }
    }
}

fn check_pair(s: &SymMatrix, t: &SymMatrix) -> Result<()> {
    if s.dim() != t.dim() {
        return Err(Error::Dimension(format!(
            "covariance is {0}x{0}, target is {1}x{1}",
            s.dim(),
            t.dim()
        )));
    }
    Ok(())
}

/// Eigenvalue of the ridge estimate belonging to eigenvalue `d` of
/// `S - lambda T`: `1 / (sqrt(lambda + d^2/4) + d/2)`.
///
/// For negative `d` the conjugate form avoids cancellation.
pub(crate) fn ridge_eigenvalue(d: f64, lambda: f64) -> f64 {
    let root = (0.5 * d).hypot(lambda.sqrt());
    if d >= 0.0 {
        1.0 / (root + 0.5 * d)
    } else {
        (root - 0.5 * d) / lambda
    }
}

/// Algebraic ridge precision estimator
/// `{[lambda I + (S - lambda T)^2 / 4]^{1/2} + (S - lambda T) / 2}^{-1}`.
///
/// Evaluated with a single eigendecomposition of `S - lambda T`. `S` only
/// needs to be symmetric; the result is positive definite regardless.
pub fn ridge_alt(s: &SymMatrix, t: &SymMatrix, lambda: f64) -> Result<SymMatrix> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("ridge penalty must be positive and finite, got {lambda}")));
    }
    check_pair(s, t)?;
    let shifted = s.values() - t.values() * lambda;
    let e = crate::linalg::sym_eigen(&shifted)?;
    let values = e.map(|d| ridge_eigenvalue(d, lambda));
    Ok(SymMatrix::from_computed(values, s.names().to_vec()))
}

/// Archetypal estimator `[(1 - lambda) S + lambda T]^{-1}`, `lambda` in `(0, 1]`.
pub fn ridge_arch_i(s: &SymMatrix, t: &SymMatrix, lambda: f64) -> Result<SymMatrix> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(invalid(format!("archetypal I penalty must lie in (0, 1], got {lambda}")));
    }
    check_pair(s, t)?;
    let combo = s.values() * (1.0 - lambda) + t.values() * lambda;
    let e = crate::linalg::sym_eigen(&combo)?;
    if e.min() <= RANK_TOL * e.max().abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Singular(format!(
            "convex combination has smallest eigenvalue {:e}",
            e.min()
        )));
    }
    Ok(SymMatrix::from_computed(e.map(|d| 1.0 / d), s.names().to_vec()))
}

/// Archetypal estimator `[S + lambda I]^{-1}`.
pub fn ridge_arch_ii(s: &SymMatrix, lambda: f64) -> Result<SymMatrix> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("archetypal II penalty must be positive, got {lambda}")));
    }
    let e = s.eigen()?;
    if e.min() + lambda <= 0.0 {
        return Err(Error::Singular(format!(
            "S + lambda I has smallest eigenvalue {:e}",
            e.min() + lambda
        )));
    }
    Ok(SymMatrix::from_computed(e.map(|d| 1.0 / (d + lambda)), s.names().to_vec()))
}

/// Gaussian log-likelihood up to constants: `ln|Omega| - tr(S Omega)`.
pub fn log_likelihood(omega: &SymMatrix, s: &SymMatrix) -> Result<f64> {
    check_pair(s, omega)?;
    Ok(omega.log_det()? - s.trace_product(omega))
}

/// Log-likelihood minus `lambda/2 ||Omega - T||_F^2`; maximized by [`ridge_alt`].
pub fn penalized_log_likelihood(omega: &SymMatrix, s: &SymMatrix, t: &SymMatrix, lambda: f64) -> Result<f64> {
    check_pair(s, t)?;
    let dev = (omega.values() - t.values()).norm_squared();
    Ok(log_likelihood(omega, s)? - 0.5 * lambda * dev)
}
