//! Support determination for a regularized precision matrix.
//!
//! Three rules are available: keep the `top` strongest partial
//! correlations, keep those above an absolute cut, or keep those whose
//! empirical posterior probability of being an edge reaches `fdr_cut`
//! under a null/non-null mixture fitted to the partial correlations.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{invalid, Error, Result};
use crate::linalg::SymMatrix;
use crate::optim::scan_then_brent;

/// Undirected edge `(i, j)` with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Threshold {
    Top { top: usize },
    #[serde(rename = "absvalue")]
    AbsValue { cut: f64 },
    #[serde(rename = "lfdr")]
    LocalFdr { fdr_cut: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsifiedNetwork {
    pub sparse_precision: SymMatrix,
    pub sparse_parcor: SymMatrix,
    pub retained_edges: Vec<Edge>,
    pub method: Threshold,
}

impl SparsifiedNetwork {
    pub fn report(&self) -> RetentionReport {
        let p = self.sparse_parcor.dim();
        RetentionReport {
            retained: self.retained_edges.len(),
            total_pairs: p * p.saturating_sub(1) / 2,
        }
    }
}

/// Count of retained pairs out of the nonredundant off-diagonal pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub retained: usize,
    pub total_pairs: usize,
}

impl RetentionReport {
    pub fn percentage(&self) -> f64 {
        if self.total_pairs == 0 {
            0.0
        } else {
            100.0 * self.retained as f64 / self.total_pairs as f64
        }
    }
}

impl fmt::Display for RetentionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = format!("{:.2}", self.percentage());
        let pct = pct.trim_end_matches('0').trim_end_matches('.');
        writeln!(f, "- Retained elements: {}", self.retained)?;
        write!(f, "- Corresponding to {pct} %")
    }
}

fn check_pair(pcor: &SymMatrix, precision: &SymMatrix) -> Result<()> {
    if pcor.dim() != precision.dim() {
        return Err(Error::Dimension(format!(
            "partial correlations are {0}x{0}, precision is {1}x{1}",
            pcor.dim(),
            precision.dim()
        )));
    }
    Ok(())
}

fn upper_pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |i| (i + 1..p).map(move |j| (i, j)))
}

/// Zeroes every off-diagonal pair outside `keep` in both matrices.
fn restrict(pcor: &SymMatrix, precision: &SymMatrix, keep: &[(usize, usize)], method: Threshold) -> SparsifiedNetwork {
    let p = pcor.dim();
    let mut mask = vec![false; p * p];
    for &(i, j) in keep {
        mask[i * p + j] = true;
        mask[j * p + i] = true;
    }
    let apply = |m: &SymMatrix| {
        let mut v = m.values().clone();
        for i in 0..p {
            for j in 0..p {
                if i != j && !mask[i * p + j] {
                    v[(i, j)] = 0.0;
                }
            }
        }
        SymMatrix::from_computed(v, m.names().to_vec())
    };
    let sparse_parcor = apply(pcor);
    let sparse_precision = apply(precision);
    let retained_edges = upper_pairs(p)
        .filter(|&(i, j)| mask[i * p + j] && sparse_parcor.get(i, j) != 0.0)
        .map(|(i, j)| Edge {
            i,
            j,
            weight: sparse_parcor.get(i, j),
        })
        .collect();
    SparsifiedNetwork {
        sparse_precision,
        sparse_parcor,
        retained_edges,
        method,
    }
}

/// Keeps the `top` pairs with the largest absolute partial correlation.
/// Ties go to the lexicographically smaller pair.
pub fn sparsify_top(pcor: &SymMatrix, precision: &SymMatrix, top: usize) -> Result<SparsifiedNetwork> {
    check_pair(pcor, precision)?;
    let p = pcor.dim();
    let max = p * p.saturating_sub(1) / 2;
    if top == 0 || top > max {
        return Err(invalid(format!("top must lie in 1..={max}, got {top}")));
    }
    let mut pairs: Vec<(usize, usize)> = upper_pairs(p).collect();
    // stable sort keeps lexicographic order among ties
    pairs.sort_by(|a, b| pcor.get(b.0, b.1).abs().total_cmp(&pcor.get(a.0, a.1).abs()));
    pairs.truncate(top);
    Ok(restrict(pcor, precision, &pairs, Threshold::Top { top }))
}

/// Keeps pairs with `|pcor| >= cut`.
pub fn sparsify_abs(pcor: &SymMatrix, precision: &SymMatrix, cut: f64) -> Result<SparsifiedNetwork> {
    check_pair(pcor, precision)?;
    if !(cut > 0.0 && cut < 1.0) {
        return Err(invalid(format!("absolute cut must lie in (0, 1), got {cut}")));
    }
    let keep: Vec<(usize, usize)> = upper_pairs(pcor.dim())
        .filter(|&(i, j)| pcor.get(i, j).abs() >= cut)
        .collect();
    Ok(restrict(pcor, precision, &keep, Threshold::AbsValue { cut }))
}

/// Keeps pairs whose posterior edge probability `1 - lfdr` reaches `fdr_cut`.
pub fn sparsify_lfdr(pcor: &SymMatrix, precision: &SymMatrix, fdr_cut: f64) -> Result<(SparsifiedNetwork, MixtureFit)> {
    check_pair(pcor, precision)?;
    if !(fdr_cut > 0.0 && fdr_cut < 1.0) {
        return Err(invalid(format!("FDR cut must lie in (0, 1), got {fdr_cut}")));
    }
    let fit = fit_null_mixture(pcor)?;
    let keep: Vec<(usize, usize)> = upper_pairs(pcor.dim())
        .filter(|&(i, j)| 1.0 - fit.lfdr(pcor.get(i, j)) >= fdr_cut)
        .collect();
    Ok((restrict(pcor, precision, &keep, Threshold::LocalFdr { fdr_cut }), fit))
}

/// Computes partial correlations from `precision` and applies `threshold`.
pub fn sparsify(precision: &SymMatrix, threshold: Threshold) -> Result<(SparsifiedNetwork, Option<MixtureFit>)> {
    let pcor = crate::linalg::prec_to_pcor(precision)?;
    match threshold {
        Threshold::Top { top } => Ok((sparsify_top(&pcor, precision, top)?, None)),
        Threshold::AbsValue { cut } => Ok((sparsify_abs(&pcor, precision, cut)?, None)),
        Threshold::LocalFdr { fdr_cut } => {
            let (net, fit) = sparsify_lfdr(&pcor, precision, fdr_cut)?;
            Ok((net, Some(fit)))
        }
    }
}

/// Tuning constants of the mixture fit.
#[derive(Debug, Clone, Copy)]
pub struct MixtureConfig {
    /// Fraction of smallest `|r|` used for the truncated null fit.
    pub kappa_trim: f64,
    /// Fraction of smallest `|r|` over which `f / f0` is summarized.
    pub eta_central: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    /// Grid points over `[-1, 1]` for binning and density evaluation.
    pub grid_points: usize,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            kappa_trim: 0.8,
            eta_central: 0.5,
            kappa_min: 3.0 + 1e-3,
            kappa_max: 1e6,
            grid_points: 2049,
        }
    }
}

/// Fitted null/non-null mixture `f = eta0 f0(.; kappa) + (1 - eta0) fE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub eta0: f64,
    pub kappa: f64,
    pub bandwidth: f64,
    /// Evaluation grid over `[-1, 1]` and the total density estimate on it.
    pub grid: Vec<f64>,
    pub f_total: Vec<f64>,
    abs_knots: Vec<f64>,
    lfdr_knots: Vec<f64>,
}

impl MixtureFit {
    /// Null density of a partial correlation.
    pub fn f0(&self, r: f64) -> f64 {
        null_density(r, self.kappa)
    }

    /// Total density estimate, linearly interpolated on the grid.
    pub fn density(&self, r: f64) -> f64 {
        interpolate(&self.grid, &self.f_total, r)
    }

    /// Local false discovery rate; symmetric in `r` and non-increasing in `|r|`.
    pub fn lfdr(&self, r: f64) -> f64 {
        interpolate(&self.abs_knots, &self.lfdr_knots, r.abs())
    }
}

/// `(1 - r^2)^((kappa - 3)/2) / B(1/2, (kappa - 1)/2)` on `(-1, 1)`.
pub fn null_density(r: f64, kappa: f64) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    (0.5 * (kappa - 3.0) * (1.0 - r * r).ln() - ln_beta(0.5, 0.5 * (kappa - 1.0))).exp()
}

/// Fits the mixture to the upper-triangular entries of `pcor`.
pub fn fit_null_mixture(pcor: &SymMatrix) -> Result<MixtureFit> {
    if pcor.dim() < 10 {
        return Err(Error::Mixture(format!("need p >= 10, got {}", pcor.dim())));
    }
    let values: Vec<f64> = upper_pairs(pcor.dim()).map(|(i, j)| pcor.get(i, j)).collect();
    fit_null_mixture_values(&values, &MixtureConfig::default())
}

/// Mixture fit on raw correlation values.
///
/// 1. `kappa` by maximum likelihood of the null density truncated to the
///    central `kappa_trim` fraction of `|r|`;
/// 2. `f` by a Gaussian kernel density estimate with a two-stage direct
///    plug-in bandwidth, reflected at `+-1`;
/// 3. `eta0` as the median of `f / f0` over the central `eta_central`
///    fraction, capped at 1;
/// 4. `lfdr = clamp(eta0 f0 / f, 0, 1)`, then made non-increasing in `|r|`
///    by isotonic regression.
pub fn fit_null_mixture_values(values: &[f64], config: &MixtureConfig) -> Result<MixtureFit> {
    if values.len() < 10 {
        return Err(Error::Mixture(format!("need at least 10 values, got {}", values.len())));
    }
    if let Some(r) = values.iter().find(|r| !(r.abs() < 1.0)) {
        return Err(Error::Mixture(format!("value {r} outside (-1, 1)")));
    }
    let first = values[0];
    if values.iter().all(|&r| r == first) {
        return Err(Error::Mixture("all values are identical".into()));
    }
    let mut abs_sorted: Vec<f64> = values.iter().map(|r| r.abs()).collect();
    abs_sorted.sort_by(f64::total_cmp);

    let kappa = fit_kappa(&abs_sorted, config)?;

    let grid = linspace(-1.0, 1.0, config.grid_points);
    let counts = linear_bin(values, &grid);
    let bandwidth = dpi_bandwidth(values, &grid, &counts)?;
    let f_total = reflected_kde(&grid, &counts, values.len() as f64, bandwidth);

    let central = quantile_sorted(&abs_sorted, config.eta_central);
    let mut ratios: Vec<f64> = values
        .iter()
        .filter(|r| r.abs() <= central)
        .map(|&r| interpolate(&grid, &f_total, r) / null_density(r, kappa))
        .filter(|x| x.is_finite())
        .collect();
    if ratios.is_empty() {
        return Err(Error::Mixture("no central values to estimate the null proportion".into()));
    }
    ratios.sort_by(f64::total_cmp);
    let eta0 = quantile_sorted(&ratios, 0.5).min(1.0);

    let mut raw: Vec<(f64, f64)> = values
        .iter()
        .map(|&r| {
            let f = interpolate(&grid, &f_total, r);
            let l = if f > 0.0 { eta0 * null_density(r, kappa) / f } else { 0.0 };
            (r.abs(), l.clamp(0.0, 1.0))
        })
        .collect();
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lfdr_knots = antitonic(&raw.iter().map(|x| x.1).collect::<Vec<_>>());
    let abs_knots = raw.iter().map(|x| x.0).collect();

    Ok(MixtureFit {
        eta0,
        kappa,
        bandwidth,
        grid,
        f_total,
        abs_knots,
        lfdr_knots,
    })
}

/// Truncated maximum likelihood for `kappa` using `r^2 ~ Beta(1/2, (kappa-1)/2)`.
fn fit_kappa(abs_sorted: &[f64], config: &MixtureConfig) -> Result<f64> {
    let c = quantile_sorted(abs_sorted, config.kappa_trim);
    let kept: Vec<f64> = abs_sorted.iter().copied().filter(|&a| a <= c).collect();
    if c <= 0.0 || kept.len() < 2 {
        return Err(Error::Mixture("central values are all zero".into()));
    }
    let m = kept.len() as f64;
    let sum_log = kept.iter().map(|a| (1.0 - a * a).max(f64::MIN_POSITIVE).ln()).sum::<f64>();
    let c2 = c * c;
    let neg_loglik = |t: f64| -> Result<f64> {
        let kappa = config.kappa_min + t.exp();
        let b = 0.5 * (kappa - 1.0);
        let mass = beta_reg(0.5, b, c2).max(f64::MIN_POSITIVE);
        let ll = 0.5 * (kappa - 3.0) * sum_log - m * (ln_beta(0.5, b) + mass.ln());
        Ok(if ll.is_finite() { -ll } else { f64::INFINITY })
    };
    let lo = 1e-3f64.ln();
    let hi = (config.kappa_max - config.kappa_min).ln();
    let best = scan_then_brent(neg_loglik, lo, hi, 40, 1e-8, 300)?;
    if !best.fx.is_finite() {
        return Err(Error::Mixture("null likelihood is not finite".into()));
    }
    Ok(config.kappa_min + best.x.exp())
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { b } else { a + h * i as f64 }).collect()
}

/// Linear binning of the data onto an equispaced grid.
fn linear_bin(values: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let (a, h) = (grid[0], grid[1] - grid[0]);
    let mut counts = vec![0.0; n];
    for &x in values {
        let pos = ((x - a) / h).clamp(0.0, (n - 1) as f64);
        let k = (pos.floor() as usize).min(n - 2);
        let frac = pos - k as f64;
        counts[k] += 1.0 - frac;
        counts[k + 1] += frac;
    }
    counts
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn std_normal(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Binned estimate of the density functional `psi_r = int f^(r) f`,
/// `r` in {4, 6}, with a Gaussian kernel of bandwidth `g`.
fn psi_binned(grid: &[f64], counts: &[f64], n: f64, g: f64, order: u32) -> f64 {
    let h = grid[1] - grid[0];
    let occupied: Vec<(usize, f64)> = counts.iter().copied().enumerate().filter(|c| c.1 > 0.0).collect();
    let deriv = |u: f64| -> f64 {
        let u2 = u * u;
        let poly = match order {
            4 => u2 * u2 - 6.0 * u2 + 3.0,
            6 => u2 * u2 * u2 - 15.0 * u2 * u2 + 45.0 * u2 - 15.0,
            _ => unreachable!("unsupported derivative order"),
        };
        poly * std_normal(u)
    };
    let mut total = 0.0;
    for &(a, ca) in &occupied {
        for &(b, cb) in &occupied {
            let u = (a as f64 - b as f64) * h / g;
            if u.abs() < 12.0 {
                total += ca * cb * deriv(u);
            }
        }
    }
    total / (n * n * g.powi(order as i32 + 1))
}

/// Two-stage direct plug-in bandwidth (Sheather-Jones family).
fn dpi_bandwidth(values: &[f64], grid: &[f64], counts: &[f64]) -> Result<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let scale = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
    if !(scale > 0.0) {
        return Err(Error::Mixture("values have zero spread".into()));
    }
    let pi = std::f64::consts::PI;
    let psi8 = 105.0 / (32.0 * pi.sqrt() * scale.powi(9));
    let g1 = (30.0 * INV_SQRT_2PI / (psi8 * n)).powf(1.0 / 9.0);
    let psi6 = psi_binned(grid, counts, n, g1, 6);
    let g2 = (-6.0 * INV_SQRT_2PI / (psi6 * n)).powf(1.0 / 7.0);
    let psi4 = psi_binned(grid, counts, n, g2, 4);
    let h = (1.0 / (2.0 * pi.sqrt() * psi4 * n)).powf(0.2);
    // the plug-in can break down on near-degenerate data; fall back to the
    // normal-reference rule
    let fallback = 1.06 * scale * n.powf(-0.2);
    let grid_step = grid[1] - grid[0];
    Ok(if h.is_finite() && h > 0.0 { h.max(grid_step) } else { fallback.max(grid_step) })
}

/// Gaussian KDE on the grid with reflection about `-1` and `1`.
fn reflected_kde(grid: &[f64], counts: &[f64], n: f64, h: f64) -> Vec<f64> {
    let occupied: Vec<(f64, f64)> = counts
        .iter()
        .enumerate()
        .filter(|c| *c.1 > 0.0)
        .map(|(k, &c)| (grid[k], c))
        .collect();
    grid.iter()
        .map(|&x| {
            let mut acc = 0.0;
            for &(xb, c) in &occupied {
                for centre in [xb, 2.0 - xb, -2.0 - xb] {
                    let u = (x - centre) / h;
                    if u.abs() < 8.0 {
                        acc += c * std_normal(u);
                    }
                }
            }
            acc / (n * h)
        })
        .collect()
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Piecewise-linear interpolation, constant beyond the end knots.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v < x);
    if k == 0 {
        return ys[0];
    }
    if k == xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    if x1 == x0 {
        return ys[k];
    }
    ys[k - 1] + (x - x0) / (x1 - x0) * (ys[k] - ys[k - 1])
}

/// Least-squares non-increasing fit (pool adjacent violators).
fn antitonic(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, w2) = blocks[blocks.len() - 1];
            let (m1, w1) = blocks[blocks.len() - 2];
            if m1 >= m2 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().unwrap();
            *last = ((m1 * w1 as f64 + m2 * w2 as f64) / (w1 + w2) as f64, w1 + w2);
        }
    }
    blocks.into_iter().flat_map(|(m, w)| std::iter::repeat_n(m, w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{default_names, prec_to_pcor};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sym(m: DMatrix<f64>) -> SymMatrix {
        SymMatrix::from_values(m).unwrap()
    }

    /// Precision with unit diagonal whose partial correlations are `pc`.
    fn from_pcor(pc: &DMatrix<f64>) -> (SymMatrix, SymMatrix) {
        let p = pc.nrows();
        let omega = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { -pc[(i, j)] });
        let omega = sym(omega);
        (prec_to_pcor(&omega).unwrap(), omega)
    }

    fn random_pcor(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in i + 1..p {
                let v = rng.random_range(-0.9..0.9);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Rejection sampler for the null density with a uniform proposal.
    fn sample_null(rng: &mut ChaCha8Rng, kappa: f64, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let r: f64 = rng.random_range(-1.0..1.0);
            let accept = (1.0 - r * r).powf(0.5 * (kappa - 3.0));
            if rng.random::<f64>() < accept {
                out.push(r);
            }
        }
        out
    }

    #[test]
    fn top_keeps_all_when_maximal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (pc, om) = from_pcor(&random_pcor(&mut rng, 5));
        let net = sparsify_top(&pc, &om, 10).unwrap();
        assert_eq!(net.retained_edges.len(), 10);
        assert_eq!(net.sparse_parcor, pc);
        assert!(sparsify_top(&pc, &om, 11).is_err());
        assert!(sparsify_top(&pc, &om, 0).is_err());
    }

    #[test]
    fn top_one_picks_unique_maximum() {
        let mut m = DMatrix::from_element(4, 4, 0.1);
        m[(0, 2)] = 0.6;
        m[(2, 0)] = 0.6;
        let (pc, om) = from_pcor(&m);
        let net = sparsify_top(&pc, &om, 1).unwrap();
        assert_eq!(net.retained_edges.len(), 1);
        assert_eq!((net.retained_edges[0].i, net.retained_edges[0].j), (0, 2));
        assert_eq!(net.sparse_precision.get(0, 1), 0.0);
        assert_eq!(net.sparse_precision.get(0, 2), -0.6);
    }

    #[test]
    fn top_ties_break_lexicographically() {
        let m = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 0.2 });
        let (pc, om) = from_pcor(&m);
        let net = sparsify_top(&pc, &om, 2).unwrap();
        let kept: Vec<_> = net.retained_edges.iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(kept, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn top_matches_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (pc, om) = from_pcor(&random_pcor(&mut rng, 6));
        let net = sparsify_top(&pc, &om, 5).unwrap();
        let mut all = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                if i < j {
                    all.push((pc.get(i, j).abs(), i, j));
                }
            }
        }
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut want: Vec<(usize, usize)> = all[..5].iter().map(|x| (x.1, x.2)).collect();
        want.sort();
        let got: Vec<_> = net.retained_edges.iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn abs_value_examples() {
        let mut m = DMatrix::zeros(3, 3);
        for (i, j, v) in [(0, 1, 0.1), (0, 2, 0.3), (1, 2, -0.5)] {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        let (pc, om) = from_pcor(&m);
        let net = sparsify_abs(&pc, &om, 0.3).unwrap();
        let kept: Vec<_> = net.retained_edges.iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(kept, vec![(0, 2), (1, 2)]);
        assert!(sparsify_abs(&pc, &om, 0.51).unwrap().retained_edges.is_empty());
        assert_eq!(sparsify_abs(&pc, &om, 1e-12).unwrap().retained_edges.len(), 3);
        assert!(sparsify_abs(&pc, &om, 1.0).is_err());
    }

    #[test]
    fn report_format() {
        let r = RetentionReport { retained: 310, total_pairs: 230 * 229 / 2 };
        assert_eq!(r.to_string(), "- Retained elements: 310\n- Corresponding to 1.18 %");
        let r = RetentionReport { retained: 289, total_pairs: 230 * 229 / 2 };
        assert_eq!(r.to_string(), "- Retained elements: 289\n- Corresponding to 1.1 %");
        let r = RetentionReport { retained: 0, total_pairs: 10 };
        assert_eq!(r.to_string(), "- Retained elements: 0\n- Corresponding to 0 %");
    }

    #[test]
    fn null_density_integrates_to_one() {
        for kappa in [4.0, 10.0, 50.0, 500.0] {
            let n = 200_000;
            let h = 2.0 / n as f64;
            let total: f64 = (0..n).map(|i| null_density(-1.0 + (i as f64 + 0.5) * h, kappa) * h).sum();
            assert!((total - 1.0).abs() < 1e-4, "kappa {kappa}: {total}");
        }
    }

    #[test]
    fn antitonic_pools_violators() {
        assert_eq!(antitonic(&[1.0, 0.5, 0.7, 0.2]), vec![1.0, 0.6, 0.6, 0.2]);
        assert_eq!(antitonic(&[0.1, 0.3]), vec![0.2, 0.2]);
    }

    #[test]
    fn recovers_null_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let values = sample_null(&mut rng, 50.0, 5000);
        let fit = fit_null_mixture_values(&values, &MixtureConfig::default()).unwrap();
        assert!(fit.eta0 >= 0.9, "eta0 {}", fit.eta0);
        assert!((fit.kappa - 50.0).abs() <= 10.0, "kappa {}", fit.kappa);
    }

    #[test]
    fn pure_null_has_high_lfdr_in_bulk() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let mut values = sample_null(&mut rng, 80.0, 3000);
        let fit = fit_null_mixture_values(&values, &MixtureConfig::default()).unwrap();
        values.sort_by(f64::total_cmp);
        let lo = values.len() / 20;
        for &r in &values[lo..values.len() - lo] {
            assert!(fit.lfdr(r) >= 0.95, "lfdr({r}) = {}", fit.lfdr(r));
        }
    }

    #[test]
    fn alternative_component_lowers_lfdr() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let mut values = sample_null(&mut rng, 60.0, 4500);
        for _ in 0..500 {
            let centre = if rng.random::<bool>() { 0.5 } else { -0.5 };
            values.push(centre + rng.random_range(-0.1..0.1));
        }
        let fit = fit_null_mixture_values(&values, &MixtureConfig::default()).unwrap();
        assert!(fit.lfdr(0.5) < fit.lfdr(0.05));
        assert!(fit.lfdr(0.5) < 0.05);
        assert!(fit.eta0 < 1.0);
    }

    #[test]
    fn lfdr_is_symmetric_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut values = sample_null(&mut rng, 30.0, 800);
        values.extend((0..80).map(|i| if i % 2 == 0 { 0.6 } else { -0.55 }));
        let fit = fit_null_mixture_values(&values, &MixtureConfig::default()).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=100 {
            let r = k as f64 / 100.0 * 0.999;
            let l = fit.lfdr(r);
            assert!((0.0..=1.0).contains(&l));
            assert_eq!(l, fit.lfdr(-r));
            assert!(l <= prev);
            prev = l;
        }
    }

    #[test]
    fn degenerate_input_is_rejected() {
        let m = DMatrix::from_fn(12, 12, |i, j| if i == j { 1.0 } else { 0.2 });
        let pc = sym(m);
        match fit_null_mixture(&pc) {
            Err(Error::Mixture(msg)) => assert!(msg.contains("identical")),
            other => panic!("unexpected {other:?}"),
        }
        let small = SymMatrix::identity(default_names(5));
        assert!(fit_null_mixture(&small).is_err());
    }

    #[test]
    fn lfdr_retention_shrinks_with_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let p = 40;
        let mut m = DMatrix::zeros(p, p);
        let null = sample_null(&mut rng, 40.0, p * (p - 1) / 2);
        let mut it = null.into_iter();
        for i in 0..p {
            for j in i + 1..p {
                let v = if j == i + 1 && i < 8 { 0.55 } else { it.next().unwrap() };
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let (pc, om) = from_pcor(&m);
        let mut prev = usize::MAX;
        for cut in [1e-12, 0.5, 0.9, 0.999] {
            let (net, fit) = sparsify_lfdr(&pc, &om, cut).unwrap();
            let n = net.retained_edges.len();
            assert!(n <= prev);
            prev = n;
            if cut == 1e-12 {
                let below_one = upper_pairs(p).filter(|&(i, j)| fit.lfdr(pc.get(i, j)) < 1.0).count();
                assert_eq!(n, below_one);
            }
            if cut <= 0.9 {
                for k in 0..8 {
                    assert!(net.sparse_parcor.get(k, k + 1) != 0.0, "cut {cut} lost planted edge {k}");
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn supports_agree_and_diagonal_untouched(seed in any::<u64>(), p in 10usize..20, top in 1usize..40) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
                let omega = sym(&a * a.transpose() + DMatrix::identity(p, p));
                let pc = prec_to_pcor(&omega).unwrap();
                let nets = vec![
                    sparsify_top(&pc, &omega, top).unwrap(),
                    sparsify_abs(&pc, &omega, 0.2).unwrap(),
                    sparsify_lfdr(&pc, &omega, 0.8).unwrap().0,
                ];
                prop_assert_eq!(nets[0].retained_edges.len(), top);
                for net in &nets {
                    let again = prec_to_pcor(&net.sparse_precision).unwrap();
                    for i in 0..p {
                        prop_assert_eq!(net.sparse_precision.get(i, i), omega.get(i, i));
                        for j in 0..p {
                            prop_assert_eq!(net.sparse_precision.get(i, j) == 0.0, net.sparse_parcor.get(i, j) == 0.0);
                            prop_assert_eq!(net.sparse_parcor.get(i, j), net.sparse_parcor.get(j, i));
                            prop_assert!((again.get(i, j) - net.sparse_parcor.get(i, j)).abs() < 1e-12);
                        }
                    }
                }
                // lfdr selection is monotone in |r|
                let lf = &nets[2];
                let min_kept = lf.retained_edges.iter().map(|e| e.weight.abs()).fold(f64::INFINITY, f64::min);
                for (i, j) in upper_pairs(p) {
                    if pc.get(i, j).abs() > min_kept {
                        prop_assert!(lf.sparse_parcor.get(i, j) != 0.0);
                    }
                }
            }
        }
    }
}
