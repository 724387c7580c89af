//! Additive (degree-1) multivariate adaptive regression splines.
//!
//! Forward pass: repeatedly add the hinge pair `max(0, x_j - t)`,
//! `max(0, t - x_j)` that most reduces the residual sum of squares. The
//! current basis is kept as an orthonormal set, and for each variable all
//! candidate knots are scored in one descending sweep whose running sums give
//! every needed inner product in O(terms) per knot.
//!
//! Backward pass: drop terms one at a time (cheapest RSS increase first,
//! computed from the inverse Gram matrix) and keep the subset with the
//! smallest generalized cross-validation score.

use nalgebra::{DMatrix, DVector};

use crate::data::column;

/// GCV charge per knot.
pub const GCV_PENALTY: f64 = 2.0;
/// Minimum relative R^2 gain for the forward pass to continue.
const FORWARD_THRESH: f64 = 0.001;

/// Maximum number of terms before pruning for `p` predictors.
pub fn max_terms(p: usize) -> usize {
    (2 * p + 1).clamp(21, 1000)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hinge {
    pub var: usize,
    pub knot: f64,
    /// `true` for max(0, x - knot), `false` for max(0, knot - x).
    pub upper: bool,
}

impl Hinge {
    fn eval(&self, x: f64) -> f64 {
        if self.upper {
            (x - self.knot).max(0.0)
        } else {
            (self.knot - x).max(0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarsModel {
    pub intercept: f64,
    pub terms: Vec<(Hinge, f64)>,
    /// Terms produced by the forward pass, before pruning.
    pub forward_terms: usize,
    pub gcv: f64,
    pub forward_gcv: f64,
    pub clip01: bool,
}

/// GCV = RSS / (n (1 - C(M)/n)^2), C(M) = M + penalty (M - 1) / 2,
/// with M counting the intercept.
pub fn gcv(rss: f64, n: usize, n_terms: usize) -> f64 {
    let m = n_terms as f64;
    let c = m + GCV_PENALTY * (m - 1.0) / 2.0;
    let n = n as f64;
    if c >= n {
        return f64::INFINITY;
    }
    let d = 1.0 - c / n;
    rss / (n * d * d)
}

struct Basis {
    /// Orthonormal columns spanning the centered basis (intercept excluded).
    q: Vec<Vec<f64>>,
}

impl Basis {
    /// Orthogonalizes `v` (already centered) against the basis. Returns the
    /// normalized remainder when it carries a meaningful new direction.
    fn orthonormalize(&self, v: &[f64]) -> Option<Vec<f64>> {
        let norm0: f64 = v.iter().map(|a| a * a).sum::<f64>();
        if norm0 <= 0.0 {
            return None;
        }
        let mut u = v.to_vec();
        // two rounds of classical Gram-Schmidt keep orthogonality tight
        for _ in 0..2 {
            for qk in &self.q {
                let c: f64 = qk.iter().zip(&u).map(|(a, b)| a * b).sum();
                for (ui, qi) in u.iter_mut().zip(qk) {
                    *ui -= c * qi;
                }
            }
        }
        let norm: f64 = u.iter().map(|a| a * a).sum::<f64>();
        if norm <= 1e-10 * norm0 {
            return None;
        }
        let s = norm.sqrt();
        u.iter_mut().for_each(|a| *a /= s);
        Some(u)
    }
}

fn center(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|a| *a -= m);
}

struct Candidate {
    var: usize,
    knot: f64,
    reduction: f64,
}

/// Minimum observations between a knot and either end of a variable's range.
fn endspan(p: usize) -> usize {
    (3.0 - (0.05 / p as f64).log2()).floor().max(1.0) as usize
}

/// Minimum observations between neighboring candidate knots.
fn minspan(p: usize, n: usize) -> usize {
    let alpha: f64 = 0.05;
    let v = -(-(1.0 / (alpha * p as f64 * n as f64)) * (1.0 - alpha).ln()).log2() / 2.5;
    v.floor().max(1.0) as usize
}

/// Forward pass state for one variable's knot sweep.
fn best_knot_for_variable(
    xj: &[f64],
    order: &[usize],
    r: &[f64],
    basis: &Basis,
    span: (usize, usize),
) -> Option<(f64, f64)> {
    let n = xj.len();
    let m = basis.q.len();
    let (end_span, min_span) = span;
    if n < 2 * end_span + 2 {
        return None;
    }
    // centered copy of x_j and its projection onto the basis
    let mut xc = xj.to_vec();
    center(&mut xc);
    let qx: Vec<f64> = basis
        .q
        .iter()
        .map(|qk| qk.iter().zip(&xc).map(|(a, b)| a * b).sum())
        .collect();
    let xx: f64 = xc.iter().map(|a| a * a).sum();
    let uu = xx - qx.iter().map(|a| a * a).sum::<f64>();
    let has_u = uu > 1e-10 * xx.max(1e-300);
    let ru: f64 = r.iter().zip(&xc).map(|(a, b)| a * b).sum(); // r is orthogonal to Q
    let lin_red = if has_u { ru * ru / uu } else { 0.0 };

    // running sums over S(t) = {i : x_i > t}, built in descending x order
    let mut a = vec![0.0; m]; // sum Q_i x_i
    let mut b = vec![0.0; m]; // sum Q_i
    let (mut sx, mut sxx, mut sr, mut srx, mut sxc, mut sxcx) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let mut count = 0usize;
    // h(t) centered: the intercept is implicit, so use h - mean(h)
    let mut best: Option<(f64, f64)> = None;
    let mut since_last = min_span;
    for pos in (0..n).rev() {
        let i = order[pos];
        let xi = xj[i];
        // position pos is the candidate knot t = x_(pos); S(t) contains pos+1..n
        let t = xi;
        let knot_ok = pos >= end_span
            && n - 1 - pos >= end_span
            && count > 0
            && (pos + 1 >= n || xj[order[pos + 1]] > t);
        if knot_ok && since_last >= min_span {
            since_last = 0;
            let cnt = count as f64;
            // h_i = x_i - t on S
            let sum_h = sx - t * cnt;
            let hh_raw = sxx - 2.0 * t * sx + t * t * cnt;
            let hh = hh_raw - sum_h * sum_h / n as f64; // centered norm
            let rh = srx - t * sr; // r has zero mean, so centering h is free
            let mut qh2 = 0.0;
            let mut qxqh = 0.0;
            for k in 0..m {
                let v = a[k] - t * b[k];
                qh2 += v * v;
                qxqh += qx[k] * v;
            }
            // x_c . h_c over S
            let xh = sxcx - t * sxc;
            let mut hres = hh - qh2;
            let mut rres = rh;
            if has_u {
                let uh = xh - qxqh;
                hres -= uh * uh / uu;
                rres -= ru * uh / uu;
            }
            if hres > 1e-9 * hh.max(1e-300) {
                let red = lin_red + rres * rres / hres;
                if best.is_none_or(|(_, v)| red > v) {
                    best = Some((t, red));
                }
            }
        } else {
            since_last += 1;
        }
        // add point i to S before moving to the next (smaller) knot
        count += 1;
        sx += xi;
        sxx += xi * xi;
        sr += r[i];
        srx += r[i] * xi;
        sxc += xc[i];
        sxcx += xc[i] * xi;
        for k in 0..m {
            let qi = basis.q[k][i];
            a[k] += qi * xi;
            b[k] += qi;
        }
    }
    if best.is_none() && has_u && lin_red > 0.0 {
        // no admissible knot; a knot at the minimum adds the linear term alone
        let t = xj[order[0]];
        best = Some((t, lin_red));
    }
    best
}

pub fn fit_mars(x: &DMatrix<f64>, y: &[f64], clip01: bool) -> MarsModel {
    let n = x.nrows();
    let p = x.ncols();
    let nk = max_terms(p);
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut r: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let tss: f64 = r.iter().map(|v| v * v).sum();
    let mut rss = tss;
    let mut basis = Basis { q: Vec::new() };
    let mut hinges: Vec<Hinge> = Vec::new();
    let orders: Vec<Vec<usize>> = (0..p)
        .map(|j| {
            let col = column(x, j);
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            o
        })
        .collect();
    let span = (endspan(p), minspan(p, n));

    // intercept counts as one term
    while hinges.len() + 1 < nk && tss > 0.0 {
        if hinges.len() + 3 > n {
            break;
        }
        let mut best: Option<Candidate> = None;
        for j in 0..p {
            if let Some((knot, reduction)) =
                best_knot_for_variable(column(x, j), &orders[j], &r, &basis, span)
            {
                if best.as_ref().is_none_or(|b| reduction > b.reduction) {
                    best = Some(Candidate {
                        var: j,
                        knot,
                        reduction,
                    });
                }
            }
        }
        let Some(cand) = best else { break };
        if cand.reduction / tss < FORWARD_THRESH {
            break;
        }
        let col = column(x, cand.var);
        let mut added = false;
        for upper in [true, false] {
            if hinges.len() + 1 >= nk {
                break;
            }
            let h = Hinge {
                var: cand.var,
                knot: cand.knot,
                upper,
            };
            let mut v: Vec<f64> = col.iter().map(|&xi| h.eval(xi)).collect();
            center(&mut v);
            if let Some(qn) = basis.orthonormalize(&v) {
                let c: f64 = qn.iter().zip(&r).map(|(a, b)| a * b).sum();
                for (ri, qi) in r.iter_mut().zip(&qn) {
                    *ri -= c * qi;
                }
                basis.q.push(qn);
                hinges.push(h);
                added = true;
            }
        }
        if !added {
            break;
        }
        let new_rss: f64 = r.iter().map(|v| v * v).sum();
        rss = new_rss;
        if 1.0 - rss / tss >= 1.0 - FORWARD_THRESH {
            break;
        }
    }
    let forward_terms = hinges.len();
    let forward_gcv = gcv(rss, n, forward_terms + 1);
    prune(x, y, &hinges, clip01, forward_terms, forward_gcv)
}

fn prune(
    x: &DMatrix<f64>,
    y: &[f64],
    hinges: &[Hinge],
    clip01: bool,
    forward_terms: usize,
    forward_gcv: f64,
) -> MarsModel {
    let n = x.nrows();
    let m = hinges.len();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let yy: f64 = yc.iter().map(|v| v * v).sum();
    if m == 0 {
        return MarsModel {
            intercept: ybar,
            terms: Vec::new(),
            forward_terms,
            gcv: gcv(yy, n, 1),
            forward_gcv,
            clip01,
        };
    }
    // centered basis columns
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut col_means = Vec::with_capacity(m);
    for h in hinges {
        let mut v: Vec<f64> = column(x, h.var).iter().map(|&xi| h.eval(xi)).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|a| *a -= mean);
        cols.push(v);
        col_means.push(mean);
    }
    let g = DMatrix::from_fn(m, m, |a, b| cols[a].iter().zip(&cols[b]).map(|(u, v)| u * v).sum());
    let bvec = DVector::from_fn(m, |a, _| cols[a].iter().zip(&yc).map(|(u, v)| u * v).sum());
    let ridge = 1e-12 * (0..m).map(|k| g[(k, k)]).sum::<f64>() / m as f64;
    let mut greg = g.clone();
    for k in 0..m {
        greg[(k, k)] += ridge;
    }
    let Some(chol) = nalgebra::Cholesky::new(greg) else {
        return MarsModel {
            intercept: ybar,
            terms: Vec::new(),
            forward_terms,
            gcv: gcv(yy, n, 1),
            forward_gcv,
            clip01,
        };
    };
    let mut inv = chol.inverse();
    let mut active: Vec<usize> = (0..m).collect();
    let rss_of = |inv: &DMatrix<f64>, active: &[usize]| -> (f64, Vec<f64>) {
        let beta: Vec<f64> = (0..active.len())
            .map(|a| (0..active.len()).map(|c| inv[(a, c)] * bvec[active[c]]).sum())
            .collect();
        let fit: f64 = beta.iter().zip(active).map(|(bk, &k)| bk * bvec[k]).sum();
        ((yy - fit).max(0.0), beta)
    };
    let (rss_full, _) = rss_of(&inv, &active);
    let mut best_subset = active.clone();
    let mut best_gcv = gcv(rss_full, n, m + 1);
    while !active.is_empty() {
        let (_, beta) = rss_of(&inv, &active);
        // drop the term whose removal raises RSS the least
        let mut drop = 0;
        let mut drop_cost = f64::INFINITY;
        for a in 0..active.len() {
            let cost = beta[a] * beta[a] / inv[(a, a)];
            if cost < drop_cost {
                drop_cost = cost;
                drop = a;
            }
        }
        let k = active.len();
        let h = inv[(drop, drop)];
        let keep: Vec<usize> = (0..k).filter(|&a| a != drop).collect();
        let new_inv = DMatrix::from_fn(k - 1, k - 1, |a, c| {
            let (ia, ic) = (keep[a], keep[c]);
            inv[(ia, ic)] - inv[(ia, drop)] * inv[(drop, ic)] / h
        });
        inv = new_inv;
        active.remove(drop);
        let (rss, _) = rss_of(&inv, &active);
        let score = gcv(rss, n, active.len() + 1);
        if score <= best_gcv {
            best_gcv = score;
            best_subset = active.clone();
        }
    }
    // refit on the chosen subset
    let k = best_subset.len();
    let mut terms = Vec::with_capacity(k);
    let mut intercept = ybar;
    if k > 0 {
        let mut gs = DMatrix::from_fn(k, k, |a, c| g[(best_subset[a], best_subset[c])]);
        for a in 0..k {
            gs[(a, a)] += ridge;
        }
        let bs = DVector::from_fn(k, |a, _| bvec[best_subset[a]]);
        let beta = nalgebra::Cholesky::new(gs)
            .map(|c| c.solve(&bs))
            .unwrap_or_else(|| DVector::zeros(k));
        for (a, &idx) in best_subset.iter().enumerate() {
            intercept -= beta[a] * col_means[idx];
            terms.push((hinges[idx], beta[a]));
        }
        terms.sort_by_key(|(h, _)| (h.var, !h.upper));
    }
    MarsModel {
        intercept,
        terms,
        forward_terms,
        gcv: best_gcv,
        forward_gcv,
        clip01,
    }
}

impl MarsModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut out = vec![self.intercept; x.nrows()];
        for (h, coef) in &self.terms {
            for (o, &xi) in out.iter_mut().zip(column(x, h.var)) {
                *o += coef * h.eval(xi);
            }
        }
        if self.clip01 {
            out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn r2(y: &[f64], pred: &[f64]) -> f64 {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        let ss: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
        let rs: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
        1.0 - rs / ss
    }

    #[test]
    fn nk_formula() {
        assert_eq!(max_terms(10), 21);
        assert_eq!(max_terms(50), 101);
        assert_eq!(max_terms(500), 1000);
        assert_eq!(max_terms(2), 21);
    }

    #[test]
    fn linear_outcome_is_fit_exactly() {
        let mut rng = seed::rng(4);
        let x = DMatrix::from_fn(200, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..200).map(|i| 2.0 + 3.0 * x[(i, 0)]).collect();
        let m = fit_mars(&x, &y, false);
        assert!(r2(&y, &m.predict(&x)) > 0.999);
        assert!(m.terms.iter().all(|(h, _)| h.var == 0));
    }

    #[test]
    fn constant_outcome_gives_intercept_only() {
        let x = DMatrix::from_fn(50, 2, |i, j| (i * (j + 1)) as f64);
        let m = fit_mars(&x, &vec![1.5; 50], false);
        assert!(m.terms.is_empty());
        assert_eq!(m.predict(&x), vec![1.5; 50]);
    }

    #[test]
    fn hinge_shape_is_recovered_and_pruning_helps_gcv() {
        let mut rng = seed::rng(8);
        let n = 400;
        let x = DMatrix::from_fn(n, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..n)
            .map(|i| (x[(i, 1)] - 0.3).max(0.0) * 4.0 + 0.2 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let m = fit_mars(&x, &y, false);
        assert!(r2(&y, &m.predict(&x)) > 0.95);
        assert!(m.gcv <= m.forward_gcv + 1e-12);
        assert!(m.terms.iter().any(|(h, _)| h.var == 1 && (h.knot - 0.3).abs() < 0.2));
    }

    #[test]
    fn binary_predictions_are_clipped() {
        let mut rng = seed::rng(9);
        let x = DMatrix::from_fn(300, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..300).map(|i| if x[(i, 0)] > 0.0 { 1.0 } else { 0.0 }).collect();
        let m = fit_mars(&x, &y, true);
        let wide = DMatrix::from_fn(20, 2, |i, _| (i as f64 - 10.0) * 3.0);
        assert!(m.predict(&wide).iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
