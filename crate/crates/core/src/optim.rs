//! Derivative-free minimizers used for penalty selection.

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMin {
    pub x: f64,
    pub fx: f64,
    pub evaluations: usize,
}

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Brent's method (golden section with parabolic interpolation) on `[a, b]`.
///
/// `tol` is an absolute tolerance on the abscissa. Stops after `max_eval`
/// function evaluations at the latest.
pub fn brent<F>(mut f: F, a: f64, b: f64, tol: f64, max_eval: usize) -> Result<ScalarMin>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(a <= b) {
        return Err(invalid(format!("empty bracket [{a}, {b}]")));
    }
    let (mut a, mut b) = (a, b);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let mut evals = 1;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    while evals < max_eval {
        let mid = 0.5 * (a + b);
        let tol1 = 1e-10 * x.abs() + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < mid { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < mid { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u)?;
        evals += 1;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok(ScalarMin { x, fx, evaluations: evals })
}

/// Coarse scan of `grid` equispaced points over `[a, b]`, then Brent inside
/// the cell pair around the best grid point. Returns the best point seen.
pub fn scan_then_brent<F>(mut f: F, a: f64, b: f64, grid: usize, tol: f64, max_eval: usize) -> Result<ScalarMin>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(a <= b) {
        return Err(invalid(format!("empty bracket [{a}, {b}]")));
    }
    let grid = grid.max(2);
    if b - a <= tol || max_eval <= grid {
        let x = 0.5 * (a + b);
        let fx = f(x)?;
        let mut best = ScalarMin { x, fx, evaluations: 1 };
        for x in [a, b] {
            let fx = f(x)?;
            best.evaluations += 1;
            if fx < best.fx {
                best.x = x;
                best.fx = fx;
            }
        }
        return Ok(best);
    }
    let h = (b - a) / (grid - 1) as f64;
    let xs: Vec<f64> = (0..grid).map(|i| if i + 1 == grid { b } else { a + h * i as f64 }).collect();
    let mut fs = Vec::with_capacity(grid);
    for &x in &xs {
        fs.push(f(x)?);
    }
    let ibest = (0..grid).fold(0, |best, i| if fs[i] < fs[best] { i } else { best });
    let lo = xs[ibest.saturating_sub(1)];
    let hi = xs[(ibest + 1).min(grid - 1)];
    let refined = brent(&mut f, lo, hi, tol, max_eval - grid)?;
    let evaluations = grid + refined.evaluations;
    if refined.fx < fs[ibest] {
        Ok(ScalarMin { evaluations, ..refined })
    } else {
        Ok(ScalarMin {
            x: xs[ibest],
            fx: fs[ibest],
            evaluations,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorMin {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evaluations: usize,
}

/// Nelder-Mead simplex search from `x0` with initial edge length `step`.
///
/// Converges when the spread of simplex values falls below `ftol` and the
/// simplex diameter below `xtol`, or after `max_eval` evaluations.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: f64, xtol: f64, ftol: f64, max_eval: usize) -> Result<VectorMin>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let dim = x0.len();
    if dim == 0 {
        let fx = f(x0)?;
        return Ok(VectorMin { x: vec![], fx, evaluations: 1 });
    }
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values = Vec::with_capacity(dim + 1);
    for v in &simplex {
        values.push(f(v)?);
    }
    let mut evals = dim + 1;

    while evals < max_eval {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[dim] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.abs() <= ftol * (1.0 + values[0].abs()) && diameter <= xtol {
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|v| v[k]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let reflected = along(-1.0);
        let fr = f(&reflected)?;
        evals += 1;
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded)?;
            evals += 1;
            if fe < fr {
                simplex[dim] = expanded;
                values[dim] = fe;
            } else {
                simplex[dim] = reflected;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[dim] {
            let c = along(-0.5);
            let fc = f(&c)?;
            (c, fc)
        } else {
            let c = along(0.5);
            let fc = f(&c)?;
            (c, fc)
        };
        evals += 1;
        if fc < values[dim].min(fr) {
            simplex[dim] = contracted;
            values[dim] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=dim {
            let shrunk: Vec<f64> = simplex[i]
                .iter()
                .zip(&simplex[0])
                .map(|(v, b)| b + 0.5 * (v - b))
                .collect();
            values[i] = f(&shrunk)?;
            simplex[i] = shrunk;
            evals += 1;
        }
    }
    let ibest = (0..=dim).fold(0, |b, i| if values[i] < values[b] { i } else { b });
    Ok(VectorMin {
        x: simplex[ibest].clone(),
        fx: values[ibest],
        evaluations: evals,
    })
}
