//! B-spline bases on `[0, 1]`: knot construction, evaluation, exact Gram and
//! derivative-penalty matrices, the P-spline difference penalty and the
//! reproducing kernel of the spline space under `<f,g> + lambda <f^(m), g^(m)>`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::quadrature::gauss_legendre;

/// Sample size at or below which every interior design point becomes a knot.
pub const ALL_POINTS_MAX_N: usize = 50;
/// Lower bound on the number of interior knots used by the thinning rule.
pub const MIN_THINNED_KNOTS: usize = 10;

/// How interior knots are chosen from the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "k")]
pub enum KnotStrategy {
    /// `AllPoints` for `n <= 50`, `Thinned` otherwise.
    Auto,
    /// Every distinct design point strictly between the extreme design points.
    AllPoints,
    /// `max(ceil(n^(1/(2m+1))), 10)` equidistant knots, capped at the number of distinct points.
    Thinned,
    /// The given number of equidistant interior knots.
    Explicit(usize),
}

/// Knot sequence of an order-`p` spline space with clamped boundary knots at 0 and 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    interior: Vec<f64>,
    order: usize,
    full: Vec<f64>,
}

impl KnotVector {
    pub fn new(interior: Vec<f64>, order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidOrder(format!("spline order must be >= 2, got {order}")));
        }
        if interior.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::InvalidDesign("interior knots must lie in (0, 1)".into()));
        }
        if interior.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDesign("interior knots must be strictly ascending".into()));
        }
        let mut full = Vec::with_capacity(interior.len() + 2 * order);
        full.extend(std::iter::repeat_n(0.0, order));
        full.extend_from_slice(&interior);
        full.extend(std::iter::repeat_n(1.0, order));
        Ok(Self { interior, order, full })
    }

    /// `K` equidistant interior knots `j / (K + 1)`.
    pub fn equidistant(k: usize, order: usize) -> Result<Self> {
        let step = 1.0 / (k as f64 + 1.0);
        Self::new((1..=k).map(|j| j as f64 * step).collect(), order)
    }

    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn full(&self) -> &[f64] {
        &self.full
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    /// Dimension of the spline space, `K + p`.
    pub fn dim(&self) -> usize {
        self.interior.len() + self.order
    }

    /// Breakpoints `0 = x_0 < x_1 < ... < x_K < x_{K+1} = 1`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.interior.len() + 2);
        b.push(0.0);
        b.extend_from_slice(&self.interior);
        b.push(1.0);
        b
    }

    fn span(&self, t: f64) -> usize {
        let degree = self.order - 1;
        let last = self.dim() - 1;
        if t >= 1.0 {
            return last;
        }
        // largest s in [degree, last] with full[s] <= t
        let (mut lo, mut hi) = (degree, last + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.full[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Values of the `order` basis functions that can be nonzero at `t`, and of their
    /// derivatives up to `deriv`. Returns the index of the first function and one row
    /// per derivative order.
    pub fn local_basis(&self, t: f64, deriv: usize) -> Result<(usize, Vec<Vec<f64>>)> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("evaluation point {t} outside [0, 1]")));
        }
        if deriv >= self.order {
            return Err(Error::InvalidOrder(format!(
                "derivative {deriv} must be below the spline order {}",
                self.order
            )));
        }
        let span = self.span(t);
        Ok((span + 1 - self.order, ders_basis_funs(&self.full, span, t, self.order - 1, deriv)))
    }
}

// Derivatives of the nonzero B-splines at `u` in knot span `span` (de Boor / Piegl–Tiller).
fn ders_basis_funs(knots: &[f64], span: usize, u: f64, degree: usize, n: usize) -> Vec<Vec<f64>> {
    let d = degree;
    let mut ndu = vec![vec![0.0; d + 1]; d + 1];
    let mut left = vec![0.0; d + 1];
    let mut right = vec![0.0; d + 1];
    ndu[0][0] = 1.0;
    for j in 1..=d {
        left[j] = u - knots[span + 1 - j];
        right[j] = knots[span + j] - u;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = vec![vec![0.0; d + 1]; n + 1];
    for j in 0..=d {
        ders[0][j] = ndu[j][d];
    }
    let mut a = vec![vec![0.0; d + 1]; 2];
    for r in 0..=d {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=n {
            let mut dd = 0.0;
            let rk = r as isize - k as isize;
            let pk = d - k;
            if rk >= 0 {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                dd = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { d - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                dd += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                dd += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = dd;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = d as f64;
    for (k, row) in ders.iter_mut().enumerate().skip(1) {
        for v in row.iter_mut() {
            *v *= factor;
        }
        factor *= d as f64 - k as f64;
    }
    ders
}

/// Builds the knot vector for design points `t` (assumed sorted or not; only distinct values matter).
pub fn build_knots(t: &[f64], p: usize, m: usize, strategy: KnotStrategy) -> Result<KnotVector> {
    if p < 2 {
        return Err(Error::InvalidOrder(format!("spline order must be >= 2, got {p}")));
    }
    if m < 1 || m >= p {
        return Err(Error::InvalidOrder(format!("penalty order m={m} must satisfy 1 <= m < p={p}")));
    }
    if let Some(bad) = t.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Domain(format!("design point {bad} outside [0, 1]")));
    }
    let n = t.len();
    if n < p {
        return Err(Error::InvalidDesign(format!("{n} design points but spline order {p}")));
    }
    let distinct = distinct_sorted(t);
    if distinct.len() < p {
        return Err(Error::InvalidDesign(format!(
            "only {} distinct design points, need at least p={p}",
            distinct.len()
        )));
    }
    let strategy = match strategy {
        KnotStrategy::Auto if n <= ALL_POINTS_MAX_N => KnotStrategy::AllPoints,
        KnotStrategy::Auto => KnotStrategy::Thinned,
        s => s,
    };
    match strategy {
        KnotStrategy::AllPoints => {
            let interior: Vec<f64> = distinct[1..distinct.len() - 1]
                .iter()
                .copied()
                .filter(|&x| x > 0.0 && x < 1.0)
                .collect();
            KnotVector::new(interior, p)
        }
        KnotStrategy::Thinned => {
            let k = thinned_knot_count(n, m).min(distinct.len());
            KnotVector::equidistant(k, p)
        }
        KnotStrategy::Explicit(k) => KnotVector::equidistant(k, p),
        KnotStrategy::Auto => unreachable!(),
    }
}

/// `max(ceil(n^(1/(2m+1))), 10)`.
pub fn thinned_knot_count(n: usize, m: usize) -> usize {
    let k = (n as f64).powf(1.0 / (2.0 * m as f64 + 1.0)).ceil() as usize;
    k.max(MIN_THINNED_KNOTS)
}

fn distinct_sorted(t: &[f64]) -> Vec<f64> {
    let mut v = t.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `(d/dt)^deriv B_j(t)` for every basis function `j`.
pub fn eval_basis(kv: &KnotVector, t: f64, deriv: usize) -> Result<Vec<f64>> {
    let (start, ders) = kv.local_basis(t, deriv)?;
    let mut out = vec![0.0; kv.dim()];
    out[start..start + kv.order()].copy_from_slice(&ders[deriv]);
    Ok(out)
}

/// Spline basis evaluated at a design, with its Gram and derivative-penalty matrices.
///
/// The design matrix is stored row-compressed: row `i` holds the `p` possibly
/// nonzero values starting at column `row_start[i]`.
#[derive(Debug, Clone)]
pub struct SplineBasis {
    knots: KnotVector,
    m: usize,
    points: Vec<f64>,
    row_start: Vec<usize>,
    row_values: Vec<f64>,
    gram: DMatrix<f64>,
    penalty: DMatrix<f64>,
    split: PenaltySplit,
}

/// Orthogonal change of coefficients `c = Q d` whose first `m` columns span the
/// penalty null space (polynomials of degree `< m`); in these coordinates the
/// penalty is `diag(0, S)` with exact zeros, which keeps very large `lambda` accurate.
#[derive(Debug, Clone)]
pub(crate) struct PenaltySplit {
    q: DMatrix<f64>,
    reduced: DMatrix<f64>,
    m: usize,
}

impl PenaltySplit {
    fn new(kv: &KnotVector, m: usize, gram: &DMatrix<f64>, penalty: &DMatrix<f64>) -> Self {
        let dim = kv.dim();
        let p = kv.order();
        // coefficients of 1, t, ..., t^(m-1) by exact L2 projection
        let (nodes, weights) = gauss_legendre(p);
        let mut moments = DMatrix::zeros(dim, m);
        for w in kv.breakpoints().windows(2) {
            let (half, mid) = (0.5 * (w[1] - w[0]), 0.5 * (w[0] + w[1]));
            for (x, wq) in nodes.iter().zip(&weights) {
                let u = mid + half * x;
                let (start, ders) = kv.local_basis(u, 0).expect("quadrature node inside [0, 1]");
                for k in 0..m {
                    let f = wq * half * u.powi(k as i32);
                    for i in 0..p {
                        moments[(start + i, k)] += f * ders[0][i];
                    }
                }
            }
        }
        let null = linalg::solve_matrix(gram, &moments).expect("Gram matrix is positive definite");
        let mut stacked = DMatrix::zeros(dim, m + dim);
        stacked.view_mut((0, 0), (dim, m)).copy_from(&null);
        stacked.view_mut((0, m), (dim, dim)).fill_with_identity();
        let q = stacked.qr().q();
        let z = q.columns(m, dim - m);
        let r = z.transpose() * penalty * z;
        let reduced = (&r + r.transpose()) * 0.5;
        Self { q, reduced, m }
    }

    pub(crate) fn rotate(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.q.transpose() * a * &self.q
    }

    /// `Qᵀ a Q + 2λ diag(0, S)`.
    pub(crate) fn penalized(&self, a: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
        let mut out = self.rotate(a);
        let k = self.reduced.nrows();
        let mut block = out.view_mut((self.m, self.m), (k, k));
        block += &self.reduced * (2.0 * lambda);
        out
    }

    pub(crate) fn to_rotated(&self, v: &DVector<f64>) -> DVector<f64> {
        self.q.transpose() * v
    }

    pub(crate) fn from_rotated(&self, d: &DVector<f64>) -> DVector<f64> {
        &self.q * d
    }

    fn penalty_form(&self, coefs: &[f64]) -> f64 {
        let c = DVector::from_column_slice(coefs);
        let z = self.q.columns(self.m, self.reduced.nrows()).transpose() * c;
        z.dot(&(&self.reduced * &z))
    }
}

/// Evaluates `B(t)` and the Gram/penalty matrices by Gauss–Legendre quadrature with
/// `p` nodes per knot interval, which is exact for these piecewise polynomials.
pub fn assemble(kv: &KnotVector, t: &[f64], m: usize) -> Result<SplineBasis> {
    let p = kv.order();
    if m < 1 || m >= p {
        return Err(Error::InvalidOrder(format!("penalty order m={m} must satisfy 1 <= m < p={p}")));
    }
    let mut row_start = Vec::with_capacity(t.len());
    let mut row_values = Vec::with_capacity(t.len() * p);
    for &ti in t {
        let (start, ders) = kv.local_basis(ti, 0)?;
        row_start.push(start);
        row_values.extend_from_slice(&ders[0]);
    }
    let (gram, penalty) = gram_and_penalty(kv, m);
    let split = PenaltySplit::new(kv, m, &gram, &penalty);
    Ok(SplineBasis { knots: kv.clone(), m, points: t.to_vec(), row_start, row_values, gram, penalty, split })
}

fn gram_and_penalty(kv: &KnotVector, m: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = kv.order();
    let dim = kv.dim();
    let (nodes, weights) = gauss_legendre(p);
    let mut gram = DMatrix::zeros(dim, dim);
    let mut penalty = DMatrix::zeros(dim, dim);
    for w in kv.breakpoints().windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, wq) in nodes.iter().zip(&weights) {
            let u = mid + half * x;
            let (start, ders) = kv.local_basis(u, m).expect("quadrature node inside [0, 1]");
            let scale = wq * half;
            for i in 0..p {
                for j in 0..p {
                    gram[(start + i, start + j)] += scale * ders[0][i] * ders[0][j];
                    penalty[(start + i, start + j)] += scale * ders[m][i] * ders[m][j];
                }
            }
        }
    }
    (gram, penalty)
}

impl SplineBasis {
    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn penalty_order(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.knots.order()
    }

    pub fn dim(&self) -> usize {
        self.knots.dim()
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Gram matrix `H[i][j] = <B_i, B_j>`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Penalty matrix `P[i][j] = <B_i^(m), B_j^(m)>`.
    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    /// Compressed row `i` of the design matrix.
    pub fn row(&self, i: usize) -> (usize, &[f64]) {
        let p = self.order();
        (self.row_start[i], &self.row_values[i * p..(i + 1) * p])
    }

    /// Dense `n x (K+p)` design matrix.
    pub fn design_matrix(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.n(), self.dim());
        for i in 0..self.n() {
            let (s, vals) = self.row(i);
            for (j, v) in vals.iter().enumerate() {
                b[(i, s + j)] = *v;
            }
        }
        b
    }

    /// Fitted values `B coefs` at the design points.
    pub fn apply(&self, coefs: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                let (s, vals) = self.row(i);
                vals.iter().zip(&coefs[s..]).map(|(b, c)| b * c).sum()
            })
            .collect()
    }

    /// `B^T v`.
    pub fn transpose_apply(&self, v: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (i, vi) in v.iter().enumerate() {
            let (s, vals) = self.row(i);
            for (j, b) in vals.iter().enumerate() {
                out[s + j] += b * vi;
            }
        }
        out
    }

    /// `B^T diag(w) B`.
    pub fn weighted_cross(&self, w: &[f64]) -> DMatrix<f64> {
        let dim = self.dim();
        let mut out = DMatrix::zeros(dim, dim);
        for (i, wi) in w.iter().enumerate() {
            let (s, vals) = self.row(i);
            for (a, ba) in vals.iter().enumerate() {
                let wb = wi * ba;
                for (b, bb) in vals.iter().enumerate() {
                    out[(s + a, s + b)] += wb * bb;
                }
            }
        }
        out
    }

    /// Value of the spline with coefficients `coefs` (and derivative `deriv`) at any `t` in `[0, 1]`.
    pub fn evaluate(&self, coefs: &[f64], t: f64, deriv: usize) -> Result<f64> {
        let (start, ders) = self.knots.local_basis(t, deriv)?;
        Ok(ders[deriv].iter().zip(&coefs[start..]).map(|(b, c)| b * c).sum())
    }

    /// `coefs^T P coefs`, evaluated on the component orthogonal to the null space.
    pub fn penalty_form(&self, coefs: &[f64]) -> f64 {
        self.split.penalty_form(coefs)
    }

    pub(crate) fn split(&self) -> &PenaltySplit {
        &self.split
    }
}

pub(crate) fn quadratic_form(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = DVector::from_column_slice(x);
    v.dot(&(a * &v))
}

/// `D_m^T D_m` where `D_m` is the `(dim - m) x dim` m-th order difference operator.
pub fn difference_penalty(dim: usize, m: usize) -> Result<DMatrix<f64>> {
    if dim <= m {
        return Err(Error::InvalidOrder(format!("dimension {dim} must exceed difference order {m}")));
    }
    let mut d = DMatrix::<f64>::identity(dim, dim);
    for _ in 0..m {
        let rows = d.nrows() - 1;
        let mut next = DMatrix::zeros(rows, dim);
        for r in 0..rows {
            let diff = d.row(r + 1) - d.row(r);
            next.set_row(r, &diff);
        }
        d = next;
    }
    Ok(d.transpose() * d)
}

/// Reproducing kernel `B(x)^T (H + lambda P)^{-1} B(y)`.
pub fn reproducing_kernel(basis: &SplineBasis, lambda: f64, x: f64, y: f64) -> Result<f64> {
    if lambda < 0.0 {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let g = basis.gram() + basis.penalty() * lambda;
    let bx = DVector::from_vec(eval_basis(basis.knots(), x, 0)?);
    let by = DVector::from_vec(eval_basis(basis.knots(), y, 0)?);
    let sol = linalg::solve_spd(&g, &by)
        .ok_or_else(|| Error::SingularSystem("H + lambda P not positive definite".into()))?;
    Ok(bx.dot(&sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn explicit_three_knots_cubic() {
        let kv = build_knots(&[0.1, 0.2, 0.5, 0.7, 0.9], 4, 2, KnotStrategy::Explicit(3)).unwrap();
        assert_eq!(kv.interior(), &[0.25, 0.5, 0.75]);
        assert_eq!(kv.full(), &[0.0, 0.0, 0.0, 0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(kv.dim(), 7);
    }

    #[test]
    fn all_points_uses_interior_design_points() {
        let t: Vec<f64> = (1..=40).map(|i| i as f64 / 41.0).collect();
        let kv = build_knots(&t, 4, 2, KnotStrategy::AllPoints).unwrap();
        assert_eq!(kv.num_interior(), 38);
        assert_eq!(kv.interior(), &t[1..39]);
        let auto = build_knots(&t, 4, 2, KnotStrategy::Auto).unwrap();
        assert_eq!(auto, kv);
    }

    #[test]
    fn thinned_rule_gives_floor_of_ten() {
        let t: Vec<f64> = (1..=200).map(|i| i as f64 / 201.0).collect();
        // 200^(1/5) ~ 2.89, so the floor of 10 applies
        assert_eq!(thinned_knot_count(200, 2), 10);
        let kv = build_knots(&t, 4, 2, KnotStrategy::Thinned).unwrap();
        assert_eq!(kv.num_interior(), 10);
        assert_eq!(build_knots(&t, 4, 2, KnotStrategy::Auto).unwrap(), kv);
        assert_eq!(thinned_knot_count(5000, 2), 10);
        assert_eq!(thinned_knot_count(1_000_000, 1), 100);
    }

    #[test]
    fn thinned_is_capped_by_distinct_points() {
        let t: Vec<f64> = (0..60).map(|i| (i % 6) as f64 / 5.0).collect();
        let kv = build_knots(&t, 4, 2, KnotStrategy::Thinned).unwrap();
        assert_eq!(kv.num_interior(), 6);
    }

    #[test]
    fn knot_errors() {
        assert!(matches!(build_knots(&[0.1, 0.2], 4, 2, KnotStrategy::Auto), Err(Error::InvalidDesign(_))));
        assert!(matches!(
            build_knots(&[0.1, 0.1, 0.1, 0.2, 0.2], 4, 2, KnotStrategy::Auto),
            Err(Error::InvalidDesign(_))
        ));
        assert!(matches!(build_knots(&[0.1, 0.2, 0.3, 1.2], 4, 2, KnotStrategy::Auto), Err(Error::Domain(_))));
        assert!(matches!(build_knots(&[0.1, 0.2, 0.3, 0.4], 4, 4, KnotStrategy::Auto), Err(Error::InvalidOrder(_))));
    }

    #[test]
    fn basis_at_zero_is_first_unit_vector() {
        let kv = KnotVector::equidistant(3, 4).unwrap();
        assert_eq!(eval_basis(&kv, 0.0, 0).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let at_one = eval_basis(&kv, 1.0, 0).unwrap();
        assert_eq!(at_one[6], 1.0);
        assert!(matches!(eval_basis(&kv, 1.5, 0), Err(Error::Domain(_))));
        assert!(matches!(eval_basis(&kv, 0.5, 4), Err(Error::InvalidOrder(_))));
    }

    #[test]
    fn first_derivative_matches_central_difference() {
        let kv = KnotVector::equidistant(3, 4).unwrap();
        let t = 0.37;
        let h = 1e-6;
        let d = eval_basis(&kv, t, 1).unwrap();
        let up = eval_basis(&kv, t + h, 0).unwrap();
        let dn = eval_basis(&kv, t - h, 0).unwrap();
        for j in 0..kv.dim() {
            let fd = (up[j] - dn[j]) / (2.0 * h);
            if d[j].abs() > 1e-12 {
                assert!(((fd - d[j]) / d[j]).abs() < 1e-5, "j={j}: {fd} vs {}", d[j]);
            } else {
                assert!(fd.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn hat_function_gram_is_closed_form() {
        // p=2, one knot at 0.5: hats on [0,.5], [0,1], [.5,1] with h = 0.5
        let kv = KnotVector::new(vec![0.5], 2).unwrap();
        let basis = assemble(&kv, &[0.0, 0.25, 0.5, 0.75, 1.0], 1).unwrap();
        let h = 0.5;
        let expected = DMatrix::from_row_slice(3, 3, &[h / 3.0, h / 6.0, 0.0, h / 6.0, 2.0 * h / 3.0, h / 6.0, 0.0, h / 6.0, h / 3.0]);
        assert_relative_eq!(basis.gram(), &expected, epsilon = 1e-15);
        let pen = DMatrix::from_row_slice(3, 3, &[1.0 / h, -1.0 / h, 0.0, -1.0 / h, 2.0 / h, -1.0 / h, 0.0, -1.0 / h, 1.0 / h]);
        assert_relative_eq!(basis.penalty(), &pen, epsilon = 1e-12);
    }

    #[test]
    fn difference_penalty_first_order() {
        let d = difference_penalty(3, 1).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(d, expected);
        assert!(matches!(difference_penalty(2, 2), Err(Error::InvalidOrder(_))));
    }

    #[test]
    fn difference_penalty_null_spaces() {
        let d1 = difference_penalty(6, 1).unwrap();
        assert_eq!(quadratic_form(&d1, &[2.5; 6]), 0.0);
        let d2 = difference_penalty(5, 2).unwrap();
        let linear = [1.0, 3.0, 5.0, 7.0, 9.0];
        assert!(quadratic_form(&d2, &linear).abs() < 1e-12);
        let bumpy = [0.0, 1.0, 0.0, 1.0, 0.0];
        assert!(quadratic_form(&d2, &bumpy) > 1.0);
    }

    #[test]
    fn penalty_annihilates_constants() {
        let kv = KnotVector::equidistant(7, 4).unwrap();
        let basis = assemble(&kv, &[0.1, 0.5, 0.9, 0.3], 2).unwrap();
        let ones = vec![1.0; kv.dim()];
        assert!(basis.penalty_form(&ones).abs() < 1e-10);
    }

    #[test]
    fn kernel_is_symmetric_and_reproducing() {
        let kv = KnotVector::equidistant(6, 4).unwrap();
        let basis = assemble(&kv, &[0.2, 0.4], 2).unwrap();
        let lambda = 0.01;
        for &(x, y) in &[(0.1, 0.8), (0.33, 0.34), (0.0, 1.0)] {
            let a = reproducing_kernel(&basis, lambda, x, y).unwrap();
            let b = reproducing_kernel(&basis, lambda, y, x).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        let f: Vec<f64> = (0..kv.dim()).map(|j| (j as f64 * 0.7).sin()).collect();
        let g = basis.gram() + basis.penalty() * lambda;
        let gf = &g * DVector::from_column_slice(&f);
        let t = 0.61;
        let bt = DVector::from_vec(eval_basis(&kv, t, 0).unwrap());
        let kernel_coefs = linalg::solve_spd(&g, &bt).unwrap();
        let reproduced = kernel_coefs.dot(&gf);
        assert!((reproduced - basis.evaluate(&f, t, 0).unwrap()).abs() < 1e-10);
    }
}
