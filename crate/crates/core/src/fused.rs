//! Joint estimation of class-specific precision matrices under a fused
//! ridge penalty, and tools for comparing the resulting networks.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{cov_ml, cov_ml_values, DataMatrix, SymMatrix};
use crate::netstats::{network_stats, Network, StatsTable};
use crate::optim::nelder_mead;
use crate::ridge::{default_target, ridge_alt, TargetKind};
use crate::sparsify::{sparsify, MixtureFit, RetentionReport, SparsifiedNetwork, Threshold};
use crate::tuning::{FoldAssignment, KcvProblem, SearchConfig};

/// Per-class covariances and sample sizes over a shared feature set.
#[derive(Debug, Clone)]
pub struct ClassSet {
    names: Vec<String>,
    covariances: Vec<SymMatrix>,
    sizes: Vec<usize>,
    data: Option<Vec<DataMatrix>>,
}

impl ClassSet {
    /// Classes from raw data; covariances are centered ML estimates.
    pub fn from_data(classes: Vec<(String, DataMatrix)>) -> Result<Self> {
        let mut covariances = Vec::with_capacity(classes.len());
        for (name, x) in &classes {
            covariances.push(cov_ml(x, true, false).map_err(|e| invalid(format!("class `{name}`: {e}")))?);
        }
        let sizes: Vec<usize> = classes.iter().map(|(_, x)| x.nrows()).collect();
        let (names, data): (Vec<_>, Vec<_>) = classes.into_iter().unzip();
        let mut set = Self::from_covariances(names.into_iter().zip(covariances).zip(sizes).map(|((a, b), c)| (a, b, c)).collect())?;
        set.data = Some(data);
        Ok(set)
    }

    /// Classes from covariance matrices and sample sizes alone. Such a set
    /// cannot be cross-validated.
    pub fn from_covariances(classes: Vec<(String, SymMatrix, usize)>) -> Result<Self> {
        if classes.is_empty() {
            return Err(invalid("no classes given"));
        }
        let first = &classes[0].1;
        for (name, s, n) in &classes {
            s.check_compatible(first).map_err(|e| invalid(format!("class `{name}`: {e}")))?;
            if *n == 0 {
                return Err(invalid(format!("class `{name}` has no observations")));
            }
        }
        let mut seen = std::collections::HashSet::new();
        if let Some((name, _, _)) = classes.iter().find(|c| !seen.insert(c.0.clone())) {
            return Err(invalid(format!("duplicate class name `{name}`")));
        }
        let mut names = Vec::new();
        let mut covariances = Vec::new();
        let mut sizes = Vec::new();
        for (name, s, n) in classes {
            names.push(name);
            covariances.push(s);
            sizes.push(n);
        }
        Ok(Self {
            names,
            covariances,
            sizes,
            data: None,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn covariances(&self) -> &[SymMatrix] {
        &self.covariances
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn total_size(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn feature_names(&self) -> &[String] {
        self.covariances[0].names()
    }

    pub fn data(&self) -> Option<&[DataMatrix]> {
        self.data.as_deref()
    }

    /// Same classes in a new order: `order[new] = old`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            names: order.iter().map(|&g| self.names[g].clone()).collect(),
            covariances: order.iter().map(|&g| self.covariances[g].clone()).collect(),
            sizes: order.iter().map(|&g| self.sizes[g]).collect(),
            data: self.data.as_ref().map(|d| order.iter().map(|&g| d[g].clone()).collect()),
        }
    }

    fn check_targets(&self, targets: &[SymMatrix]) -> Result<()> {
        if targets.len() != self.len() {
            return Err(Error::Dimension(format!("{} targets for {} classes", targets.len(), self.len())));
        }
        for t in targets {
            t.check_compatible(&self.covariances[0])?;
        }
        Ok(())
    }
}

/// One entry of a penalty template: a parameter name or a fixed value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PenaltyEntry {
    Fixed(f64),
    Name(String),
}

impl PenaltyEntry {
    /// Numeric strings are read as fixed values.
    pub fn parse(s: &str) -> Self {
        match s.trim().parse::<f64>() {
            Ok(v) => Self::Fixed(v),
            Err(_) => Self::Name(s.trim().to_string()),
        }
    }
}

/// Symmetric `G x G` template of penalty parameters with their values.
///
/// Diagonal entries are ridge penalties, off-diagonal entries fusion
/// penalties. Entries sharing a name share a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub template: Vec<Vec<PenaltyEntry>>,
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
}

impl PenaltySpec {
    pub fn new(template: Vec<Vec<PenaltyEntry>>, values: BTreeMap<String, f64>) -> Result<Self> {
        let spec = Self { template, values };
        spec.validate_template()?;
        Ok(spec)
    }

    /// Template from strings, numeric ones fixed.
    pub fn from_strings(template: &[Vec<String>], values: BTreeMap<String, f64>) -> Result<Self> {
        Self::new(
            template.iter().map(|row| row.iter().map(|s| PenaltyEntry::parse(s)).collect()).collect(),
            values,
        )
    }

    /// One shared ridge name and one shared fusion name.
    pub fn uniform(classes: usize, ridge: f64, fusion: f64) -> Self {
        let template = (0..classes)
            .map(|a| {
                (0..classes)
                    .map(|b| PenaltyEntry::Name(if a == b { "ridge" } else { "fusion" }.into()))
                    .collect()
            })
            .collect();
        let mut values = BTreeMap::from([("ridge".to_string(), ridge)]);
        if classes > 1 {
            values.insert("fusion".into(), fusion);
        }
        Self { template, values }
    }

    pub fn classes(&self) -> usize {
        self.template.len()
    }

    fn validate_template(&self) -> Result<()> {
        let g = self.template.len();
        if g == 0 {
            return Err(invalid("empty penalty template"));
        }
        for (a, row) in self.template.iter().enumerate() {
            if row.len() != g {
                return Err(Error::Dimension(format!("penalty template row {} has {} entries, expected {g}", a + 1, row.len())));
            }
        }
        for (a, row) in self.template.iter().enumerate() {
            for (b, entry) in row.iter().enumerate() {
                if *entry != self.template[b][a] {
                    return Err(invalid(format!("penalty template is not symmetric at ({}, {})", a + 1, b + 1)));
                }
            }
        }
        let ridge = self.ridge_names();
        if let Some(name) = self.fusion_names().into_iter().find(|n| ridge.contains(n)) {
            return Err(invalid(format!("`{name}` is used for both ridge and fusion penalties")));
        }
        Ok(())
    }

    fn names_where(&self, diagonal: bool) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for (a, row) in self.template.iter().enumerate() {
            for (b, entry) in row.iter().enumerate().skip(a) {
                if let PenaltyEntry::Name(n) = entry {
                    if (a == b) == diagonal && !out.contains(n) {
                        out.push(n.clone());
                    }
                }
            }
        }
        out
    }

    /// Names on the diagonal, in order of first appearance.
    pub fn ridge_names(&self) -> Vec<String> {
        self.names_where(true)
    }

    /// Off-diagonal names, in order of first appearance.
    pub fn fusion_names(&self) -> Vec<String> {
        self.names_where(false)
    }

    /// Numeric penalty matrix, checking diagonal > 0 and off-diagonal >= 0.
    pub fn realize(&self) -> Result<DMatrix<f64>> {
        self.validate_template()?;
        let g = self.classes();
        let mut out = DMatrix::zeros(g, g);
        for a in 0..g {
            for b in 0..g {
                let v = match &self.template[a][b] {
                    PenaltyEntry::Fixed(v) => *v,
                    PenaltyEntry::Name(n) => *self
                        .values
                        .get(n)
                        .ok_or_else(|| invalid(format!("no value for penalty `{n}`")))?,
                };
                let ok = if a == b { v > 0.0 } else { v >= 0.0 };
                if !ok || !v.is_finite() {
                    return Err(invalid(format!("penalty ({}, {}) = {v} out of range", a + 1, b + 1)));
                }
                out[(a, b)] = v;
            }
        }
        Ok(out)
    }

    fn with_values(&self, values: BTreeMap<String, f64>) -> Self {
        Self {
            template: self.template.clone(),
            values,
        }
    }

    /// Same penalties for classes reordered as `order[new] = old`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            template: order.iter().map(|&a| order.iter().map(|&b| self.template[a][b].clone()).collect()).collect(),
            values: self.values.clone(),
        }
    }
}

/// Pooled covariance `sum_g n_g S_g / n` turned into a default target,
/// one copy per class.
pub fn default_target_fused(classes: &ClassSet, kind: &TargetKind) -> Result<Vec<SymMatrix>> {
    let n = classes.total_size() as f64;
    let mut pooled = DMatrix::zeros(classes.feature_names().len(), classes.feature_names().len());
    for (s, &ng) in classes.covariances().iter().zip(classes.sizes()) {
        pooled += s.values() * (ng as f64 / n);
    }
    let pooled = SymMatrix::from_computed(pooled, classes.feature_names().to_vec());
    let target = default_target(&pooled, kind)?;
    Ok(vec![target; classes.len()])
}

/// Maximizes the fused objective over class `g` with all other classes
/// held at `estimates`.
pub fn fused_class_update(
    g: usize,
    lambda: &DMatrix<f64>,
    estimates: &[SymMatrix],
    classes: &ClassSet,
    targets: &[SymMatrix],
) -> Result<SymMatrix> {
    let (s_bar, l_bar) = shifted_problem(g, lambda, estimates, classes, targets)?;
    ridge_alt(&s_bar, &targets[g], l_bar)
}

/// Effective covariance and penalty of the single-class subproblem.
fn shifted_problem(
    g: usize,
    lambda: &DMatrix<f64>,
    estimates: &[SymMatrix],
    classes: &ClassSet,
    targets: &[SymMatrix],
) -> Result<(SymMatrix, f64)> {
    let ng = classes.sizes()[g] as f64;
    let mut s_bar = classes.covariances()[g].values().clone();
    let mut l_bar = 0.0;
    for h in 0..classes.len() {
        let l = lambda[(h, g)];
        l_bar += l;
        if h != g && l != 0.0 {
            s_bar -= (estimates[h].values() - targets[h].values()) * (l / ng);
        }
    }
    l_bar /= ng;
    if !(l_bar > 0.0 && l_bar.is_finite()) {
        return Err(invalid(format!("effective penalty of class {} is {l_bar}", g + 1)));
    }
    Ok((SymMatrix::from_computed(s_bar, classes.feature_names().to_vec()), l_bar))
}

/// `max |Omega^{-1} - S_bar - lambda_bar (Omega - T)|` for class `g`.
pub fn stationarity_residual(
    g: usize,
    lambda: &DMatrix<f64>,
    estimates: &[SymMatrix],
    classes: &ClassSet,
    targets: &[SymMatrix],
) -> Result<f64> {
    let (s_bar, l_bar) = shifted_problem(g, lambda, estimates, classes, targets)?;
    let inv = estimates[g].inverse_pd()?;
    let r = inv.values() - s_bar.values() - (estimates[g].values() - targets[g].values()) * l_bar;
    Ok(r.amax())
}

/// Fused penalized log-likelihood
/// `sum_g n_g (ln|O_g| - tr(S_g O_g)) - sum_g l_gg/2 |O_g - T_g|^2
///  - sum_{g<h} l_gh/2 |(O_g - T_g) - (O_h - T_h)|^2`.
pub fn fused_objective(
    estimates: &[SymMatrix],
    classes: &ClassSet,
    targets: &[SymMatrix],
    lambda: &DMatrix<f64>,
) -> Result<f64> {
    let g = classes.len();
    let mut total = 0.0;
    let dev: Vec<DMatrix<f64>> = (0..g).map(|a| estimates[a].values() - targets[a].values()).collect();
    for a in 0..g {
        let s = &classes.covariances()[a];
        total += classes.sizes()[a] as f64 * (estimates[a].log_det()? - s.trace_product(&estimates[a]));
        total -= 0.5 * lambda[(a, a)] * dev[a].norm_squared();
        for b in a + 1..g {
            total -= 0.5 * lambda[(a, b)] * (&dev[a] - &dev[b]).norm_squared();
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
pub struct FusedOptions {
    pub max_iter: usize,
    /// Bound on the largest relative Frobenius change over one sweep.
    pub tol: f64,
}

impl Default for FusedOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct FusedFit {
    pub estimates: Vec<SymMatrix>,
    pub sweeps: usize,
    /// Largest relative change in the last sweep.
    pub residual: f64,
    /// Objective at the start and after every sweep.
    pub objective: Vec<f64>,
}

/// Block coordinate ascent over classes in index order, starting from the
/// fusion-free estimates `ridge_alt(S_g, T_g, lambda_bar_g)`.
pub fn ridge_p_fused(
    classes: &ClassSet,
    targets: &[SymMatrix],
    penalty: &PenaltySpec,
    options: FusedOptions,
) -> Result<FusedFit> {
    classes.check_targets(targets)?;
    if penalty.classes() != classes.len() {
        return Err(Error::Dimension(format!(
            "penalty template is {0}x{0}, there are {1} classes",
            penalty.classes(),
            classes.len()
        )));
    }
    let lambda = penalty.realize()?;
    let g_count = classes.len();
    let mut estimates = (0..g_count)
        .map(|g| {
            let l_bar = lambda.column(g).sum() / classes.sizes()[g] as f64;
            ridge_alt(&classes.covariances()[g], &targets[g], l_bar)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut objective = vec![fused_objective(&estimates, classes, targets, &lambda)?];
    let groups = shift_groups(&lambda);
    let mut anderson = Anderson::new(ANDERSON_MEMORY);
    let mut residual = f64::INFINITY;
    for sweep in 1..=options.max_iter {
        residual = 0.0;
        let previous = estimates.clone();
        for g in 0..g_count {
            estimates[g] = fused_class_update(g, &lambda, &estimates, classes, targets)?;
        }
        let mut current = fused_objective(&estimates, classes, targets, &lambda)?;
        for group in &groups {
            let shift = group_shift(group, &estimates, classes, targets, &lambda)?;
            let dirs: Vec<DMatrix<f64>> = (0..g_count)
                .map(|g| if group.contains(&g) { shift.clone() } else { DMatrix::zeros(shift.nrows(), shift.ncols()) })
                .collect();
            if let Some((_, moved, value)) = line_search(&estimates, &dirs, classes, targets, &lambda, current)? {
                estimates = moved;
                current = value;
            }
        }
        if let Some((mixed, value)) = anderson.propose(&previous, &estimates, classes, targets, &lambda, current)? {
            estimates = mixed;
            current = value;
        }
        for g in 0..g_count {
            let change = (estimates[g].values() - previous[g].values()).norm() / previous[g].frobenius_norm();
            residual = f64::max(residual, change);
        }
        objective.push(current);
        if residual < options.tol {
            return Ok(FusedFit {
                estimates,
                sweeps: sweep,
                residual,
                objective,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: options.max_iter,
        residual,
        last: estimates,
    })
}

const ANDERSON_MEMORY: usize = 5;

/// Anderson mixing of the sweep map `x -> G(x)`: extrapolates from the
/// last few map evaluations by least squares on their residuals.
struct Anderson {
    memory: usize,
    xs: std::collections::VecDeque<DVector<f64>>,
    gs: std::collections::VecDeque<DVector<f64>>,
}

fn stack(ms: &[SymMatrix]) -> DVector<f64> {
    DVector::from_iterator(ms.iter().map(|m| m.values().len()).sum(), ms.iter().flat_map(|m| m.values().iter().cloned()))
}

impl Anderson {
    fn new(memory: usize) -> Self {
        Self {
            memory,
            xs: Default::default(),
            gs: Default::default(),
        }
    }

    /// Records the pair `(x, G(x))` and returns the mixed point when it is
    /// positive definite and beats `G(x)` on the objective.
    fn propose(
        &mut self,
        x: &[SymMatrix],
        gx: &[SymMatrix],
        classes: &ClassSet,
        targets: &[SymMatrix],
        lambda: &DMatrix<f64>,
        current: f64,
    ) -> Result<Option<(Vec<SymMatrix>, f64)>> {
        self.xs.push_back(stack(x));
        self.gs.push_back(stack(gx));
        if self.xs.len() > self.memory + 1 {
            self.xs.pop_front();
            self.gs.pop_front();
        }
        let m = self.xs.len() - 1;
        if m == 0 {
            return Ok(None);
        }
        let res: Vec<DVector<f64>> = self.xs.iter().zip(&self.gs).map(|(x, g)| g - x).collect();
        let len = res[0].len();
        let df = DMatrix::from_fn(len, m, |r, c| res[c + 1][r] - res[c][r]);
        let dg = DMatrix::from_fn(len, m, |r, c| self.gs[c + 1][r] - self.gs[c][r]);
        let svd = df.svd(true, true);
        let Ok(gamma) = svd.solve(&res[m], 1e-12 * res[m].norm().max(f64::MIN_POSITIVE)) else {
            return Ok(None);
        };
        let mixed = &self.gs[m] - dg * gamma;
        if !mixed.iter().all(|v| v.is_finite()) {
            return Ok(None);
        }
        let p = x[0].dim();
        let candidate: Vec<SymMatrix> = (0..x.len())
            .map(|g| {
                let block = DMatrix::from_column_slice(p, p, &mixed.as_slice()[g * p * p..(g + 1) * p * p]);
                SymMatrix::from_computed(block, x[g].names().to_vec())
            })
            .collect();
        match fused_objective(&candidate, classes, targets, lambda) {
            Ok(value) if value > current => Ok(Some((candidate, value))),
            Ok(_) | Err(Error::NotPositiveDefinite(_)) => {
                // restart the history from the accepted point
                self.xs.clear();
                self.gs.clear();
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}

/// Exact line search from `at` along `dirs`, over nonnegative steps.
/// Returns the step, the new estimates and their objective when that
/// improves on `current`.
///
/// The objective is concave along the line, so its derivative is monotone
/// and bisection finds the root.
fn line_search(
    at: &[SymMatrix],
    dirs: &[DMatrix<f64>],
    classes: &ClassSet,
    targets: &[SymMatrix],
    lambda: &DMatrix<f64>,
    current: f64,
) -> Result<Option<(f64, Vec<SymMatrix>, f64)>> {
    let after = at;
    let g_count = after.len();
    if dirs.iter().all(|d| d.amax() == 0.0) {
        return Ok(None);
    }
    let devs: Vec<DMatrix<f64>> = (0..g_count).map(|g| after[g].values() - targets[g].values()).collect();
    // eigenvalues of L^{-1} D L^{-T} with A = L L^T, so that
    // d/dt ln|A + tD| = sum mu / (1 + t mu)
    let mut mus = Vec::with_capacity(g_count);
    let mut t_max = f64::INFINITY;
    for g in 0..g_count {
        let chol = match after[g].values().clone().cholesky() {
            Some(c) => c,
            None => return Ok(None),
        };
        let l = chol.l();
        let half = l.solve_lower_triangular(&dirs[g]).ok_or(Error::EigenFailure)?;
        let m = l.solve_lower_triangular(&half.transpose()).ok_or(Error::EigenFailure)?;
        let e = crate::linalg::sym_eigen(&crate::linalg::symmetrize(&m))?;
        if e.min() < 0.0 {
            t_max = t_max.min(-1.0 / e.min());
        }
        mus.push(e.values);
    }
    // constant and slope parts of the derivative
    let mut c0 = 0.0;
    let mut c1 = 0.0;
    for g in 0..g_count {
        let n = classes.sizes()[g] as f64;
        c0 -= n * classes.covariances()[g].values().component_mul(&dirs[g]).sum();
        c0 -= lambda[(g, g)] * devs[g].component_mul(&dirs[g]).sum();
        c1 += lambda[(g, g)] * dirs[g].norm_squared();
        for h in g + 1..g_count {
            let l = lambda[(g, h)];
            if l == 0.0 {
                continue;
            }
            let e = &devs[g] - &devs[h];
            let d = &dirs[g] - &dirs[h];
            c0 -= l * e.component_mul(&d).sum();
            c1 += l * d.norm_squared();
        }
    }
    let slope = |t: f64| -> f64 {
        let mut s = c0 - c1 * t;
        for (g, mu) in mus.iter().enumerate() {
            s += classes.sizes()[g] as f64 * mu.iter().map(|m| m / (1.0 + t * m)).sum::<f64>();
        }
        s
    };
    if !(slope(0.0) > 0.0) {
        return Ok(None);
    }
    let mut hi = if t_max.is_finite() { t_max } else { 1.0 };
    if !t_max.is_finite() {
        while slope(hi) > 0.0 {
            hi *= 2.0;
            if hi > 1e300 {
                return Ok(None);
            }
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = lo;
    if t == 0.0 {
        return Ok(None);
    }
    let moved: Vec<SymMatrix> = (0..g_count)
        .map(|g| SymMatrix::from_computed(after[g].values() + &dirs[g] * t, after[g].names().to_vec()))
        .collect();
    let value = match fused_objective(&moved, classes, targets, lambda) {
        Ok(v) => v,
        Err(Error::NotPositiveDefinite(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok((value > current).then_some((t, moved, value)))
}

/// Shared shift for the classes in `group` that maximizes the objective
/// when their estimates are replaced by the size-weighted mean `A`:
/// `O^{-1} = S' + l' O` with `O = A + shift` is again a ridge problem.
///
/// Strong fusion ties the classes' deviations together, and block updates
/// then barely move their common part; this direction moves it directly.
fn group_shift(group: &[usize], at: &[SymMatrix], classes: &ClassSet, targets: &[SymMatrix], lambda: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = classes.feature_names().len();
    let n: f64 = group.iter().map(|&g| classes.sizes()[g] as f64).sum();
    let mut mean = DMatrix::zeros(p, p);
    for &g in group {
        mean += at[g].values() * (classes.sizes()[g] as f64 / n);
    }
    let mut s = DMatrix::zeros(p, p);
    let mut l = 0.0;
    for &g in group {
        let dev = at[g].values() - targets[g].values();
        s += classes.covariances()[g].values() * classes.sizes()[g] as f64;
        s += (&dev - &mean) * lambda[(g, g)];
        l += lambda[(g, g)];
        for k in (0..classes.len()).filter(|k| !group.contains(k)) {
            let w = lambda[(g, k)];
            if w != 0.0 {
                let other = at[k].values() - targets[k].values();
                s += (&dev - &other - &mean) * w;
                l += w;
            }
        }
    }
    let names = classes.feature_names().to_vec();
    let s = SymMatrix::from_computed(s / n, names.clone());
    let omega = ridge_alt(&s, &SymMatrix::zeros(names), l / n)?;
    Ok(omega.values() - mean)
}

/// The whole class set and every fused pair, when there are more than two
/// classes.
fn shift_groups(lambda: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let g = lambda.nrows();
    let mut groups = Vec::new();
    if (0..g).any(|a| (0..g).any(|b| a != b && lambda[(a, b)] > 0.0)) {
        groups.push((0..g).collect());
    }
    if g > 2 {
        for a in 0..g {
            for b in a + 1..g {
                if lambda[(a, b)] > 0.0 {
                    groups.push(vec![a, b]);
                }
            }
        }
    }
    groups
}

struct FoldData {
    train: ClassSet,
    test: Vec<(f64, SymMatrix)>,
}

/// K-fold fused cross-validation, folds stratified by class.
pub struct FusedKcv {
    folds: Vec<FoldData>,
    targets: Vec<SymMatrix>,
    template: PenaltySpec,
    options: FusedOptions,
    class_folds: Vec<FoldAssignment>,
}

/// Per-class fold seed; class 0 uses the run seed itself.
fn class_seed(seed: u64, g: usize) -> u64 {
    seed.wrapping_add(g as u64)
}

impl FusedKcv {
    pub fn new(classes: &ClassSet, targets: &[SymMatrix], template: &PenaltySpec, k: usize, seed: u64) -> Result<Self> {
        classes.check_targets(targets)?;
        if template.classes() != classes.len() {
            return Err(Error::Dimension("penalty template does not match class count".into()));
        }
        let data = classes
            .data()
            .ok_or_else(|| invalid("cross-validation needs the class data, not only covariances"))?;
        let class_folds = data
            .iter()
            .enumerate()
            .map(|(g, x)| {
                FoldAssignment::seeded(x.nrows(), k, class_seed(seed, g))
                    .map_err(|e| invalid(format!("class `{}`: {e}", classes.names()[g])))
            })
            .collect::<Result<Vec<_>>>()?;
        let names = classes.feature_names().to_vec();
        let cov = |x: &DataMatrix, rows: &[usize]| {
            let values = cov_ml_values(&x.values().select_rows(rows), true, false)
                .ok()
                .expect("centering without scaling cannot fail");
            SymMatrix::from_computed(values, names.clone())
        };
        let mut folds = Vec::with_capacity(k);
        for f in 0..k {
            let mut train = Vec::with_capacity(classes.len());
            let mut test = Vec::with_capacity(classes.len());
            for (g, x) in data.iter().enumerate() {
                let fold_of = class_folds[g].fold_of();
                let (inside, outside): (Vec<usize>, Vec<usize>) = (0..x.nrows()).partition(|&i| fold_of[i] == f);
                train.push((classes.names()[g].clone(), cov(x, &outside), outside.len()));
                test.push((inside.len() as f64, cov(x, &inside)));
            }
            folds.push(FoldData {
                train: ClassSet::from_covariances(train)?,
                test,
            });
        }
        Ok(Self {
            folds,
            targets: targets.to_vec(),
            template: template.clone(),
            options: FusedOptions::default(),
            class_folds,
        })
    }

    pub fn class_folds(&self) -> &[FoldAssignment] {
        &self.class_folds
    }

    /// `sum_k sum_g n_gk { -ln|O_g,-k| + tr(S_gk O_g,-k) }`.
    pub fn score(&self, values: &BTreeMap<String, f64>) -> Result<f64> {
        let spec = self.template.with_values(values.clone());
        let mut total = 0.0;
        for fold in &self.folds {
            let estimates = match ridge_p_fused(&fold.train, &self.targets, &spec, self.options) {
                Ok(fit) => fit.estimates,
                Err(Error::NotConverged { last, .. }) => last,
                Err(e) => return Err(e),
            };
            for ((n, s), omega) in fold.test.iter().zip(&estimates) {
                total += n * (-omega.log_det()? + s.trace_product(omega));
            }
        }
        if !total.is_finite() {
            return Err(Error::NonFiniteScore(values.values().cloned().fold(f64::NAN, f64::max)));
        }
        Ok(total)
    }
}

#[derive(Debug, Clone)]
pub struct FusedOptimum {
    pub values: BTreeMap<String, f64>,
    pub penalty: PenaltySpec,
    pub estimates: Vec<SymMatrix>,
    pub score: f64,
    pub evaluations: usize,
}

const RESTARTS: usize = 3;
const LN_RIDGE_MIN: f64 = -23.0; // about 1e-10
const LN_MAX: f64 = 23.0;

/// Maps the search vector to named penalty values. Ridge names live on a
/// log scale; fusion names on `ln(lambda + shift)`, reaching zero at
/// `ln(shift)` and below.
struct Transform {
    ridge: Vec<String>,
    fusion: Vec<String>,
    shift: f64,
}

impl Transform {
    fn decode(&self, x: &[f64]) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (name, t) in self.ridge.iter().zip(x) {
            out.insert(name.clone(), t.clamp(LN_RIDGE_MIN, LN_MAX).exp());
        }
        for (name, t) in self.fusion.iter().zip(&x[self.ridge.len()..]) {
            out.insert(name.clone(), (t.min(LN_MAX).exp() - self.shift).max(0.0));
        }
        out
    }
}

/// Minimizes the fused K-fold CV score over the named penalties of
/// `template`.
///
/// Ridge names start from the per-class scalar CV optima scaled by the class
/// sizes, fusion names from `1e-4` times the smallest ridge start. A
/// Nelder-Mead search runs from there and is restarted twice from seeded
/// perturbations of the incumbent.
pub fn opt_penalty_fused(
    classes: &ClassSet,
    targets: &[SymMatrix],
    template: &PenaltySpec,
    k: usize,
    seed: u64,
) -> Result<FusedOptimum> {
    let problem = FusedKcv::new(classes, targets, template, k, seed)?;
    let data = classes.data().expect("checked by FusedKcv");
    let ridge = template.ridge_names();
    let fusion = template.fusion_names();

    let mut scalar_start = Vec::with_capacity(classes.len());
    for (g, x) in data.iter().enumerate() {
        let single = KcvProblem::new(x, &problem.class_folds()[g], &targets[g])?;
        let config = SearchConfig::default();
        let best = crate::optim::scan_then_brent(
            |t| single.score(10f64.powf(t)),
            -5.0,
            5.0,
            config.scan_points,
            config.tol,
            config.max_evaluations,
        )?;
        scalar_start.push(10f64.powf(best.x) * classes.sizes()[g] as f64);
    }
    let ridge_start: Vec<f64> = ridge
        .iter()
        .map(|name| {
            let logs: Vec<f64> = (0..classes.len())
                .filter(|&g| template.template[g][g] == PenaltyEntry::Name(name.clone()))
                .map(|g| scalar_start[g].ln())
                .collect();
            (logs.iter().sum::<f64>() / logs.len() as f64).exp()
        })
        .collect();
    let min_ridge = ridge_start.iter().cloned().fold(f64::INFINITY, f64::min);
    let fusion_start = 1e-4 * if min_ridge.is_finite() { min_ridge } else { 1.0 };
    let transform = Transform {
        ridge: ridge.clone(),
        fusion: fusion.clone(),
        shift: fusion_start,
    };
    let mut x0: Vec<f64> = ridge_start.iter().map(|v| v.ln()).collect();
    x0.extend(std::iter::repeat_n((2.0 * fusion_start).ln(), fusion.len()));

    let objective = |x: &[f64]| problem.score(&transform.decode(x));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = nelder_mead(objective, &x0, 1.0, 1e-4, 1e-10, 400)?;
    let mut evaluations = best.evaluations;
    for _ in 1..RESTARTS {
        let start: Vec<f64> = best.x.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        let run = nelder_mead(objective, &start, 0.5, 1e-4, 1e-10, 400)?;
        evaluations += run.evaluations;
        if run.fx < best.fx {
            best = run;
        }
    }
    let values = transform.decode(&best.x);
    let penalty = template.with_values(values.clone());
    let estimates = match ridge_p_fused(classes, targets, &penalty, FusedOptions::default()) {
        Ok(fit) => fit.estimates,
        Err(Error::NotConverged { last, .. }) => {
            log::warn!("fused estimate at the optimum did not converge; returning the last iterate");
            last
        }
        Err(e) => return Err(e),
    };
    Ok(FusedOptimum {
        values,
        penalty,
        estimates,
        score: best.fx,
        evaluations,
    })
}

/// Sparsifies every class independently.
pub fn sparsify_fused(
    estimates: &[SymMatrix],
    threshold: &Threshold,
) -> Result<Vec<(SparsifiedNetwork, Option<MixtureFit>)>> {
    estimates
        .iter()
        .enumerate()
        .map(|(g, omega)| sparsify(omega, threshold.clone()).map_err(|e| invalid(format!("class {}: {e}", g + 1))))
        .collect()
}

/// Retention reports of a fused sparsification, in class order.
pub fn fused_reports(nets: &[(SparsifiedNetwork, Option<MixtureFit>)]) -> Vec<RetentionReport> {
    nets.iter().map(|(n, _)| n.report()).collect()
}

fn connected_features(m: &SymMatrix) -> Vec<bool> {
    let p = m.dim();
    (0..p).map(|i| (0..p).any(|j| j != i && m.get(i, j) != 0.0)).collect()
}

fn check_labels(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.names() != b.names() {
        return Err(invalid("matrices carry different feature names"));
    }
    Ok(())
}

/// Restricts both matrices to features with a nonzero off-diagonal entry in
/// either one. Returns the restricted pair and the kept indices.
pub fn union_support(a: &SymMatrix, b: &SymMatrix) -> Result<(SymMatrix, SymMatrix, Vec<usize>)> {
    check_labels(a, b)?;
    let ca = connected_features(a);
    let cb = connected_features(b);
    let kept: Vec<usize> = (0..a.dim()).filter(|&i| ca[i] || cb[i]).collect();
    Ok((a.submatrix(&kept), b.submatrix(&kept), kept))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiffTag {
    #[serde(rename = "onlyA")]
    OnlyA,
    #[serde(rename = "onlyB")]
    OnlyB,
}

impl DiffTag {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::OnlyA => "onlyA",
            Self::OnlyB => "onlyB",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffEdge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub tag: DiffTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffNetwork {
    pub nodes: Vec<String>,
    pub edges: Vec<DiffEdge>,
}

/// Edges present in exactly one of the two matrices, weighted by the
/// matrix that has them.
pub fn diff_network(a: &SymMatrix, b: &SymMatrix) -> Result<DiffNetwork> {
    check_labels(a, b)?;
    let p = a.dim();
    let mut edges = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            let (wa, wb) = (a.get(i, j), b.get(i, j));
            match (wa != 0.0, wb != 0.0) {
                (true, false) => edges.push(DiffEdge { i, j, weight: wa, tag: DiffTag::OnlyA }),
                (false, true) => edges.push(DiffEdge { i, j, weight: wb, tag: DiffTag::OnlyB }),
                _ => {}
            }
        }
    }
    Ok(DiffNetwork {
        nodes: a.names().to_vec(),
        edges,
    })
}

/// Node statistics per class joined into one table, columns prefixed by
/// `<class>.`.
pub fn network_stats_fused(nets: &[(String, SparsifiedNetwork)]) -> Result<StatsTable> {
    let mut joined: Option<StatsTable> = None;
    for (name, net) in nets {
        let table = network_stats(&Network::from_sparsified(net, false))
            .map_err(|e| invalid(format!("class `{name}`: {e}")))?
            .to_table(&format!("{name}."));
        match &mut joined {
            None => joined = Some(table),
            Some(t) => {
                if t.rows != table.rows {
                    return Err(invalid(format!("class `{name}` has different features")));
                }
                t.columns.extend(table.columns);
            }
        }
    }
    joined.ok_or_else(|| invalid("no networks given"))
}
