//! Penalty selection by K-fold cross-validation, and condition-number
//! diagnostics over the penalty domain.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{cov_ml_values, DataMatrix, SymMatrix};
use crate::optim::scan_then_brent;
use crate::ridge::ridge_alt;

/// Search settings for [`opt_penalty_kcv_auto`]. All values are in
/// `log10(lambda)` units.
#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    pub scan_points: usize,
    pub tol: f64,
    pub max_evaluations: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            scan_points: 16,
            tol: 1e-6,
            max_evaluations: 200,
        }
    }
}

/// Partition of observations `0..n` into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    /// Seeded uniform shuffle dealt into `k` near-equal blocks.
    pub fn seeded(n: usize, k: usize, seed: u64) -> Result<Self> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut fold_of = vec![0; n];
        for (pos, &obs) in order.iter().enumerate() {
            fold_of[obs] = pos % k.max(1);
        }
        Self::from_labels(fold_of, k)
    }

    /// Explicit 0-based fold labels.
    pub fn from_labels(fold_of: Vec<usize>, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(invalid(format!("need at least 2 folds, got {k}")));
        }
        let mut sizes = vec![0usize; k];
        for &f in &fold_of {
            if f >= k {
                return Err(invalid(format!("fold label {f} out of range for k = {k}")));
            }
            sizes[f] += 1;
        }
        if let Some(f) = sizes.iter().position(|&s| s < 2) {
            return Err(invalid(format!(
                "fold {} has {} observation(s); every fold needs at least 2",
                f + 1,
                sizes[f]
            )));
        }
        Ok(Self { fold_of, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    /// Observation indices per fold, ascending.
    pub fn folds(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &f) in self.fold_of.iter().enumerate() {
            out[f].push(i);
        }
        out
    }
}

struct FoldCovariances {
    n_test: f64,
    test: SymMatrix,
    train: SymMatrix,
}

/// Fold covariances computed once, reusable across penalty values.
pub struct KcvProblem {
    folds: Vec<FoldCovariances>,
    target: SymMatrix,
}

impl KcvProblem {
    pub fn new(x: &DataMatrix, folds: &FoldAssignment, target: &SymMatrix) -> Result<Self> {
        if folds.n() != x.nrows() {
            return Err(Error::Dimension(format!(
                "fold assignment covers {} rows, data has {}",
                folds.n(),
                x.nrows()
            )));
        }
        if target.dim() != x.ncols() {
            return Err(Error::Dimension(format!(
                "target is {0}x{0}, data has {1} features",
                target.dim(),
                x.ncols()
            )));
        }
        let names = x.feature_names().to_vec();
        let cov = |rows: &[usize]| -> SymMatrix {
            let values = cov_ml_values(&x.values().select_rows(rows), true, false)
                .ok()
                .expect("centering without scaling cannot fail");
            SymMatrix::from_computed(values, names.clone())
        };
        let fold_rows = folds.folds();
        let folds = fold_rows
            .iter()
            .map(|rows| {
                let rest: Vec<usize> = (0..x.nrows()).filter(|i| rows.binary_search(i).is_err()).collect();
                FoldCovariances {
                    n_test: rows.len() as f64,
                    test: cov(rows),
                    train: cov(&rest),
                }
            })
            .collect();
        Ok(Self {
            folds,
            target: target.clone(),
        })
    }

    /// `sum_k n_k { -ln|Omega_{-k}| + tr(S_k Omega_{-k}) }`.
    pub fn score(&self, lambda: f64) -> Result<f64> {
        let mut total = 0.0;
        for f in &self.folds {
            let omega = ridge_alt(&f.train, &self.target, lambda)?;
            total += f.n_test * (-omega.log_det()? + f.test.trace_product(&omega));
        }
        if !total.is_finite() {
            return Err(Error::NonFiniteScore(lambda));
        }
        Ok(total)
    }
}

/// K-fold cross-validated negative log-likelihood of the ridge estimator.
pub fn kcv_score(x: &DataMatrix, folds: &FoldAssignment, lambda: f64, target: &SymMatrix) -> Result<f64> {
    KcvProblem::new(x, folds, target)?.score(lambda)
}

#[derive(Debug, Clone)]
pub struct PenaltyOptimum {
    pub lambda: f64,
    pub precision: SymMatrix,
    pub score: f64,
    pub evaluations: usize,
}

/// Minimizes the K-fold CV score over `[lambda_min, lambda_max]`.
///
/// The search runs on `log10(lambda)`: a coarse scan locates the best cell
/// and Brent's method refines within it. The returned precision is the
/// ridge estimate on the full-data covariance at the optimum.
pub fn opt_penalty_kcv_auto(
    x: &DataMatrix,
    lambda_min: f64,
    lambda_max: f64,
    k: usize,
    target: &SymMatrix,
    seed: u64,
) -> Result<PenaltyOptimum> {
    opt_penalty_kcv_with(x, lambda_min, lambda_max, k, target, seed, SearchConfig::default())
}

pub fn opt_penalty_kcv_with(
    x: &DataMatrix,
    lambda_min: f64,
    lambda_max: f64,
    k: usize,
    target: &SymMatrix,
    seed: u64,
    config: SearchConfig,
) -> Result<PenaltyOptimum> {
    check_bracket(lambda_min, lambda_max)?;
    if x.nrows() < k {
        return Err(invalid(format!("{} observations cannot fill {k} folds", x.nrows())));
    }
    let folds = FoldAssignment::seeded(x.nrows(), k, seed)?;
    let problem = KcvProblem::new(x, &folds, target)?;
    let best = scan_then_brent(
        |t| problem.score(10f64.powf(t)),
        lambda_min.log10(),
        lambda_max.log10(),
        config.scan_points,
        config.tol,
        config.max_evaluations,
    )?;
    let lambda = 10f64.powf(best.x).clamp(lambda_min, lambda_max);
    let s = crate::linalg::cov_ml(x, true, false)?;
    Ok(PenaltyOptimum {
        lambda,
        precision: ridge_alt(&s, target, lambda)?,
        score: best.fx,
        evaluations: best.evaluations,
    })
}

fn check_bracket(lambda_min: f64, lambda_max: f64) -> Result<()> {
    if !(lambda_min > 0.0) {
        return Err(invalid(format!("lambda_min must be positive, got {lambda_min}")));
    }
    if !(lambda_min <= lambda_max) || !lambda_max.is_finite() {
        return Err(invalid(format!("invalid penalty bracket [{lambda_min}, {lambda_max}]")));
    }
    Ok(())
}

/// Condition number of the ridge estimate over a log-spaced penalty grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnCurve {
    pub lambdas: Vec<f64>,
    pub kappas: Vec<f64>,
    /// `log10(kappa)`: approximate digits of accuracy lost on inversion.
    pub digits_loss: Vec<f64>,
    /// Second differences of kappa with respect to `log10(lambda)`.
    pub curvature: Vec<f64>,
}

impl CnCurve {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,kappa,digits_loss,curvature\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.lambdas[i], self.kappas[i], self.digits_loss[i], self.curvature[i]
            ));
        }
        out
    }
}

pub fn cn_curve(s: &SymMatrix, t: &SymMatrix, lambda_min: f64, lambda_max: f64, steps: usize) -> Result<CnCurve> {
    if steps < 10 {
        return Err(invalid(format!("need at least 10 steps, got {steps}")));
    }
    check_bracket(lambda_min, lambda_max)?;
    let (lo, hi) = (lambda_min.log10(), lambda_max.log10());
    let h = (hi - lo) / (steps - 1) as f64;
    let lambdas: Vec<f64> = (0..steps)
        .map(|i| match i {
            0 => lambda_min,
            i if i + 1 == steps => lambda_max,
            i => 10f64.powf(lo + h * i as f64),
        })
        .collect();
    let kappas = lambdas
        .iter()
        .map(|&l| ridge_alt(s, t, l)?.condition_number())
        .collect::<Result<Vec<_>>>()?;
    let digits_loss = kappas.iter().map(|k| k.log10()).collect();
    let curvature = second_differences(&kappas, h);
    Ok(CnCurve {
        lambdas,
        kappas,
        digits_loss,
        curvature,
    })
}

/// Central second differences, with the end points taking the value of
/// their one-sided neighbours' stencil.
fn second_differences(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    if h == 0.0 {
        return vec![0.0; n];
    }
    let inner = |i: usize| (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h);
    (0..n)
        .map(|i| match i {
            0 => inner(1),
            i if i + 1 == n => inner(n - 2),
            i => inner(i),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cov_ml, default_names};
    use crate::ridge::{default_target, TargetKind};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn gaussian_data(seed: u64, n: usize, p: usize) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::from_values(DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))).unwrap()
    }

    #[test]
    fn folds_partition_and_validate() {
        let f = FoldAssignment::seeded(23, 5, 1).unwrap();
        let folds = f.folds();
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(folds.iter().all(|b| b.len() == 4 || b.len() == 5));
        assert_eq!(f, FoldAssignment::seeded(23, 5, 1).unwrap());
        assert!(FoldAssignment::seeded(9, 5, 1).is_err());
        assert!(FoldAssignment::from_labels(vec![0, 0, 1, 1], 1).is_err());
        assert!(FoldAssignment::from_labels(vec![0, 0, 1, 2], 3).is_err());
    }

    #[test]
    fn duplicated_halves_give_equal_terms() {
        let half = gaussian_data(3, 6, 4);
        let mut stacked = DMatrix::zeros(12, 4);
        stacked.rows_mut(0, 6).copy_from(half.values());
        stacked.rows_mut(6, 6).copy_from(half.values());
        let x = DataMatrix::from_values(stacked).unwrap();
        let folds = FoldAssignment::from_labels((0..12).map(|i| i / 6).collect(), 2).unwrap();
        let t = SymMatrix::identity(default_names(4));
        let lambda = 0.7;
        let s = cov_ml(&half, true, false).unwrap();
        let omega = ridge_alt(&s, &t, lambda).unwrap();
        let want = 12.0 * (-omega.log_det().unwrap() + s.trace_product(&omega));
        let got = kcv_score(&x, &folds, lambda, &t).unwrap();
        assert!((got - want).abs() < 1e-10 * want.abs());
    }

    /// Direct sum with explicit submatrices, loop covariances and LU
    /// determinants.
    fn loop_oracle(x: &DataMatrix, folds: &FoldAssignment, lambda: f64, t: &SymMatrix) -> f64 {
        let p = x.ncols();
        let cov = |rows: &[usize]| -> SymMatrix {
            let n = rows.len() as f64;
            let mut mean = vec![0.0; p];
            for &r in rows {
                for j in 0..p {
                    mean[j] += x.values()[(r, j)] / n;
                }
            }
            let mut s = DMatrix::zeros(p, p);
            for a in 0..p {
                for b in 0..p {
                    let mut acc = 0.0;
                    for &r in rows {
                        acc += (x.values()[(r, a)] - mean[a]) * (x.values()[(r, b)] - mean[b]);
                    }
                    s[(a, b)] = acc / n;
                }
            }
            SymMatrix::from_values(s).unwrap()
        };
        let mut total = 0.0;
        for k in 0..folds.k() {
            let test: Vec<usize> = (0..x.nrows()).filter(|&i| folds.fold_of()[i] == k).collect();
            let train: Vec<usize> = (0..x.nrows()).filter(|&i| folds.fold_of()[i] != k).collect();
            let omega = ridge_alt(&cov(&train), t, lambda).unwrap();
            let det = omega.values().clone().lu().determinant();
            let sk = cov(&test);
            let mut tr = 0.0;
            for a in 0..p {
                for b in 0..p {
                    tr += sk.get(a, b) * omega.get(b, a);
                }
            }
            total += test.len() as f64 * (-det.ln() + tr);
        }
        total
    }

    #[test]
    fn score_matches_loop_oracle() {
        let x = gaussian_data(20, 20, 10);
        let folds = FoldAssignment::seeded(20, 5, 42).unwrap();
        let t = SymMatrix::identity(default_names(10));
        let got = kcv_score(&x, &folds, 0.3, &t).unwrap();
        let want = loop_oracle(&x, &folds, 0.3, &t);
        assert!((got - want).abs() < 1e-9 * want.abs(), "{got} vs {want}");
    }

    #[test]
    fn score_invariant_to_fold_relabeling() {
        let x = gaussian_data(21, 20, 6);
        let folds = FoldAssignment::seeded(20, 4, 5).unwrap();
        let relabeled = FoldAssignment::from_labels(folds.fold_of().iter().map(|&f| 3 - f).collect(), 4).unwrap();
        let t = SymMatrix::identity(default_names(6));
        let a = kcv_score(&x, &folds, 0.5, &t).unwrap();
        let b = kcv_score(&x, &relabeled, 0.5, &t).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn isotropic_score_is_nearly_flat() {
        let x = gaussian_data(4, 4000, 3);
        let folds = FoldAssignment::seeded(4000, 2, 9).unwrap();
        let t = SymMatrix::identity(default_names(3));
        let scores: Vec<f64> = [0.01, 1.0, 100.0]
            .iter()
            .map(|&l| kcv_score(&x, &folds, l, &t).unwrap())
            .collect();
        let spread = scores.iter().cloned().fold(f64::MIN, f64::max) - scores.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 0.01 * scores[0].abs(), "{scores:?}");
    }

    #[test]
    fn recovers_identity_precision() {
        let x = gaussian_data(77, 200, 10);
        let t = SymMatrix::identity(default_names(10));
        let opt = opt_penalty_kcv_auto(&x, 1e-4, 1e4, 5, &t, 1234).unwrap();
        let dist = (opt.precision.values() - DMatrix::<f64>::identity(10, 10)).norm();
        assert!(dist < 0.15, "distance {dist}, lambda {}", opt.lambda);
    }

    #[test]
    fn optimum_beats_grid_and_endpoints() {
        let x = gaussian_data(5, 30, 40);
        let s = cov_ml(&x, true, false).unwrap();
        let t = default_target(&s, &TargetKind::Dupv).unwrap();
        let (lo, hi) = (1e-3, 50.0);
        let opt = opt_penalty_kcv_auto(&x, lo, hi, 5, &t, 7).unwrap();
        let folds = FoldAssignment::seeded(30, 5, 7).unwrap();
        let problem = KcvProblem::new(&x, &folds, &t).unwrap();
        for i in 0..21 {
            let l = 10f64.powf(lo.log10() + (hi / lo).log10() * i as f64 / 20.0);
            assert!(problem.score(l).unwrap() >= opt.score - 1e-6 * opt.score.abs());
        }
        assert!((problem.score(opt.lambda).unwrap() - opt.score).abs() < 1e-9 * opt.score.abs());
    }

    #[test]
    fn collapsed_bracket_stays_inside() {
        let x = gaussian_data(6, 20, 5);
        let t = SymMatrix::identity(default_names(5));
        let opt = opt_penalty_kcv_auto(&x, 0.5 - 1e-9, 0.5, 2, &t, 1).unwrap();
        assert!(opt.lambda >= 0.5 - 1e-9 && opt.lambda <= 0.5);
        assert!(opt_penalty_kcv_auto(&x, 0.0, 0.5, 2, &t, 1).is_err());
        assert!(opt_penalty_kcv_auto(&x, 1.0, 0.5, 2, &t, 1).is_err());
    }

    #[test]
    fn cn_curve_identity_is_flat() {
        let i = SymMatrix::identity(default_names(4));
        let c = cn_curve(&i, &i, 1e-3, 1e3, 25).unwrap();
        assert_eq!(c.len(), 25);
        assert!(c.kappas.iter().all(|&k| (k - 1.0).abs() < 1e-12));
        assert!(c.digits_loss.iter().all(|&d| d.abs() < 1e-12));
        assert!(c.curvature.iter().all(|&d| d.abs() < 1e-8));
        assert!(cn_curve(&i, &i, 1e-3, 1e3, 9).is_err());
    }

    #[test]
    fn cn_curve_tends_to_one_for_large_penalty() {
        let x = gaussian_data(8, 10, 30);
        let s = cov_ml(&x, true, false).unwrap();
        let t = SymMatrix::identity(default_names(30));
        let c = cn_curve(&s, &t, 1e-4, 1e8, 50).unwrap();
        assert!(c.kappas[0] > 10.0);
        assert!((c.kappas[49] - 1.0).abs() < 1e-6);
        for (k, d) in c.kappas.iter().zip(&c.digits_loss) {
            assert_eq!(k.log10(), *d);
        }
        assert!(c.to_csv().starts_with("lambda,kappa,digits_loss,curvature\n"));
    }

    #[test]
    fn constant_curvature_is_zero() {
        assert_eq!(second_differences(&[2.0; 12], 0.1), vec![0.0; 12]);
        let quad: Vec<f64> = (0..10).map(|i| (i as f64 * 0.5).powi(2)).collect();
        for c in second_differences(&quad, 0.5) {
            assert!((c - 2.0).abs() < 1e-12);
        }
    }
}
