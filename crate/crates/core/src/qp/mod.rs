//! Convex quadratic programming.
//!
//! Problems have the form
//!
//! ```text
//! minimise    ½ xᵀ H x + fᵀ x
//! subject to  lo ≤ x ≤ hi,  A_eq x = b_eq,  A_in x ≤ b_in
//! ```
//!
//! [`solve`] runs an over-relaxed ADMM iteration whose linear systems are
//! banded (the planners only couple neighbouring stations), then polishes the
//! iterate with a primal-dual active-set pass on the reduced KKT system. The
//! returned [`QPSolution`] is certified against the original problem: the
//! status is [`QpStatus::Optimal`] only when stationarity, primal
//! feasibility and complementary slackness residuals are all within `tol`.

mod banded;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub use banded::{BandCholesky, SymBand};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 20_000;

/// Sparse linear form `Σ coeff · x[col]` compared against `rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    n: usize,
    /// Lower triangle `(i >= j)` of the Hessian.
    hessian: BTreeMap<(usize, usize), f64>,
    pub linear: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub equalities: Vec<LinearConstraint>,
    pub inequalities: Vec<LinearConstraint>,
}

impl QuadraticProgram {
    pub fn new(n: usize) -> Self {
        QuadraticProgram {
            n,
            hessian: BTreeMap::new(),
            linear: vec![0.0; n],
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
            equalities: Vec::new(),
            inequalities: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `v` to `H[i][j]` and `H[j][i]` (once when `i == j`).
    pub fn add_hessian(&mut self, i: usize, j: usize, v: f64) {
        let key = if i >= j { (i, j) } else { (j, i) };
        *self.hessian.entry(key).or_insert(0.0) += v;
    }

    /// Adds `w (Σ aₖ x_k − c)²`, expanded into `½ xᵀHx + fᵀx` form (the
    /// constant is dropped).
    pub fn add_squared_residual(&mut self, w: f64, terms: &[(usize, f64)], c: f64) {
        for (a, &(i, ci)) in terms.iter().enumerate() {
            for (b, &(j, cj)) in terms[..=a].iter().enumerate() {
                // a repeated column folds both halves of the outer product
                let dup = if a != b && i == j { 2.0 } else { 1.0 };
                self.add_hessian(i, j, dup * 2.0 * w * ci * cj);
            }
            self.linear[i] -= 2.0 * w * c * ci;
        }
    }

    pub fn add_linear(&mut self, i: usize, v: f64) {
        self.linear[i] += v;
    }

    pub fn set_bounds(&mut self, i: usize, lo: f64, hi: f64) {
        self.bounds[i] = (lo, hi);
    }

    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearConstraint { coeffs, rhs });
    }

    pub fn add_inequality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.inequalities.push(LinearConstraint { coeffs, rhs });
    }

    pub fn hessian_entry(&self, i: usize, j: usize) -> f64 {
        let key = if i >= j { (i, j) } else { (j, i) };
        self.hessian.get(&key).copied().unwrap_or(0.0)
    }

    pub fn hessian_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for (&(i, j), &v) in &self.hessian {
            h[(i, j)] += v;
            if i != j {
                h[(j, i)] += v;
            }
        }
        h
    }

    pub fn hessian_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (&(i, j), &v) in &self.hessian {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let hx = self.hessian_mul(x);
        x.iter().zip(&hx).zip(&self.linear).map(|((xi, hxi), fi)| 0.5 * xi * hxi + fi * xi).sum()
    }

    /// Largest `|i - j|` coupling in the Hessian or any constraint row.
    pub fn bandwidth(&self) -> usize {
        let h = self.hessian.keys().map(|&(i, j)| i - j).max().unwrap_or(0);
        let rows = self.equalities.iter().chain(&self.inequalities).map(|r| row_span(&r.coeffs)).max().unwrap_or(0);
        h.max(rows)
    }

    fn validate(&self) -> Result<()> {
        if self.linear.len() != self.n || self.bounds.len() != self.n {
            return Err(Error::domain("linear term or bounds do not match the dimension"));
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo > hi || lo.is_nan() || hi.is_nan() {
                return Err(Error::Domain(alloc::format!("box bound {i} has lo > hi")));
            }
        }
        let bad_col = self
            .equalities
            .iter()
            .chain(&self.inequalities)
            .flat_map(|r| r.coeffs.iter())
            .any(|&(c, v)| c >= self.n || !v.is_finite());
        if bad_col || self.hessian.values().any(|v| !v.is_finite()) || self.linear.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite or out-of-range coefficient"));
        }
        Ok(())
    }
}

fn row_span(coeffs: &[(usize, f64)]) -> usize {
    let lo = coeffs.iter().map(|c| c.0).min().unwrap_or(0);
    let hi = coeffs.iter().map(|c| c.0).max().unwrap_or(0);
    hi - lo
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QPSolution {
    pub x: Vec<f64>,
    /// Multipliers in row order: equalities, inequalities, then one per
    /// finitely bounded variable in index order.
    pub y: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity: f64,
    pub iterations: usize,
    pub polished: bool,
}

impl QPSolution {
    /// Largest of the three KKT residuals.
    pub fn kkt_residual(&self) -> f64 {
        self.primal_residual.max(self.dual_residual).max(self.complementarity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityReport {
    pub min_eigenvalue: f64,
    pub bandwidth: usize,
    pub convex: bool,
}

/// Minimum Hessian eigenvalue and structural bandwidth.
pub fn validate_convexity(qp: &QuadraticProgram) -> ConvexityReport {
    let min_eigenvalue = if qp.n == 0 {
        0.0
    } else {
        let eig = SymmetricEigen::new(qp.hessian_dense());
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let scale = qp.hessian.values().fold(1.0f64, |m, v| m.max(v.abs()));
    ConvexityReport { min_eigenvalue, bandwidth: qp.bandwidth(), convex: min_eigenvalue >= -1e-10 * scale }
}

struct Row {
    cols: Vec<(usize, f64)>,
    lo: f64,
    hi: f64,
    eq: bool,
}

impl Row {
    fn dot(&self, x: &[f64]) -> f64 {
        self.cols.iter().map(|&(c, v)| v * x[c]).sum()
    }
}

struct Stacked<'a> {
    qp: &'a QuadraticProgram,
    rows: Vec<Row>,
}

impl<'a> Stacked<'a> {
    fn new(qp: &'a QuadraticProgram) -> Self {
        let mut rows = Vec::new();
        for e in &qp.equalities {
            rows.push(Row { cols: e.coeffs.clone(), lo: e.rhs, hi: e.rhs, eq: true });
        }
        for r in &qp.inequalities {
            rows.push(Row { cols: r.coeffs.clone(), lo: f64::NEG_INFINITY, hi: r.rhs, eq: false });
        }
        for (i, &(lo, hi)) in qp.bounds.iter().enumerate() {
            if lo.is_finite() || hi.is_finite() {
                rows.push(Row { cols: vec![(i, 1.0)], lo, hi, eq: lo == hi });
            }
        }
        Stacked { qp, rows }
    }

    fn ax(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.dot(x)).collect()
    }

    fn aty(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.qp.n];
        for (r, &yi) in self.rows.iter().zip(y) {
            for &(c, v) in &r.cols {
                out[c] += v * yi;
            }
        }
        out
    }

    fn bandwidth(&self) -> usize {
        let h = self.qp.hessian.keys().map(|&(i, j)| i - j).max().unwrap_or(0);
        self.rows.iter().map(|r| row_span(&r.cols)).max().unwrap_or(0).max(h)
    }

    fn kkt_matrix(&self, sigma: f64, rho: &[f64], bw: usize) -> SymBand {
        let mut m = SymBand::zeros(self.qp.n, bw);
        for (&(i, j), &v) in &self.qp.hessian {
            m.add(i, j, v);
        }
        m.add_diagonal(sigma);
        for (r, &rr) in self.rows.iter().zip(rho) {
            for (a, &(ci, vi)) in r.cols.iter().enumerate() {
                for (b, &(cj, vj)) in r.cols[..=a].iter().enumerate() {
                    let dup = if a != b && ci == cj { 2.0 } else { 1.0 };
                    m.add(ci, cj, dup * rr * vi * vj);
                }
            }
        }
        m
    }

    /// Primal violation, stationarity and complementarity residuals.
    fn residuals(&self, x: &[f64], y: &[f64]) -> (f64, f64, f64) {
        let ax = self.ax(x);
        let mut rp = 0.0f64;
        let mut compl = 0.0f64;
        for ((r, &axi), &yi) in self.rows.iter().zip(&ax).zip(y) {
            rp = rp.max(r.lo - axi).max(axi - r.hi);
            if !r.eq {
                let c = if yi < 0.0 {
                    if r.lo.is_finite() { -yi * (axi - r.lo).abs() } else { f64::INFINITY }
                } else if yi > 0.0 {
                    if r.hi.is_finite() { yi * (r.hi - axi).abs() } else { f64::INFINITY }
                } else {
                    0.0
                };
                compl = compl.max(c);
            }
        }
        let hx = self.qp.hessian_mul(x);
        let aty = self.aty(y);
        let rd = (0..self.qp.n).map(|i| (hx[i] + self.qp.linear[i] + aty[i]).abs()).fold(0.0, f64::max);
        (rp.max(0.0), rd, compl)
    }

    /// Equality-constrained solve on an active set, refined against the
    /// unregularised KKT system.
    fn kkt_solve(&self, active: &[Option<bool>]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.qp.n;
        let act: Vec<usize> = (0..self.rows.len()).filter(|&i| active[i].is_some()).collect();
        let k = act.len();
        let dim = n + k;
        let mut exact = DMatrix::<f64>::zeros(dim, dim);
        for (&(i, j), &v) in &self.qp.hessian {
            exact[(i, j)] += v;
            if i != j {
                exact[(j, i)] += v;
            }
        }
        let mut rhs = DVector::<f64>::zeros(dim);
        for i in 0..n {
            rhs[i] = -self.qp.linear[i];
        }
        for (a, &ri) in act.iter().enumerate() {
            let r = &self.rows[ri];
            for &(c, v) in &r.cols {
                exact[(n + a, c)] += v;
                exact[(c, n + a)] += v;
            }
            rhs[n + a] = if active[ri] == Some(true) { r.hi } else { r.lo };
        }
        let delta = 1e-10;
        let mut reg = exact.clone();
        for i in 0..n {
            reg[(i, i)] += delta;
        }
        for i in n..dim {
            reg[(i, i)] -= delta;
        }
        let lu = reg.lu();
        let mut sol = lu.solve(&rhs)?;
        for _ in 0..5 {
            let resid = &rhs - &exact * &sol;
            let corr = lu.solve(&resid)?;
            sol += corr;
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let x = sol.rows(0, n).iter().copied().collect();
        let mut y = vec![0.0; self.rows.len()];
        for (a, &ri) in act.iter().enumerate() {
            y[ri] = sol[n + a];
        }
        Some((x, y))
    }

    /// Primal-dual active-set iteration seeded from an ADMM iterate.
    /// `Some(true)` marks an active upper bound, `Some(false)` a lower one.
    fn polish(&self, x0: &[f64], y0: &[f64], tol: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let ax0 = self.ax(x0);
        let mut active: Vec<Option<bool>> = self
            .rows
            .iter()
            .zip(&ax0)
            .zip(y0)
            .map(|((r, &axi), &yi)| {
                if r.eq {
                    Some(false)
                } else if r.hi.is_finite() && r.hi - axi < yi {
                    Some(true)
                } else if r.lo.is_finite() && axi - r.lo < -yi {
                    Some(false)
                } else {
                    None
                }
            })
            .collect();
        let feas_tol = 1e-3 * tol;
        for _ in 0..(2 * self.rows.len() + 10) {
            let (x, y) = self.kkt_solve(&active)?;
            let ax = self.ax(&x);
            let mut changed = false;
            for (i, r) in self.rows.iter().enumerate() {
                if active[i].is_none() {
                    if ax[i] > r.hi + feas_tol {
                        active[i] = Some(true);
                        changed = true;
                    } else if ax[i] < r.lo - feas_tol {
                        active[i] = Some(false);
                        changed = true;
                    }
                }
            }
            if !changed {
                let worst = (0..self.rows.len())
                    .filter(|&i| !self.rows[i].eq)
                    .filter_map(|i| match active[i] {
                        Some(true) if y[i] < 0.0 => Some((i, -y[i])),
                        Some(false) if y[i] > 0.0 => Some((i, y[i])),
                        _ => None,
                    })
                    .fold(None::<(usize, f64)>, |best, c| match best {
                        Some(b) if b.1 >= c.1 => Some(b),
                        _ => Some(c),
                    });
                match worst {
                    Some((i, mag)) if mag > 1e-12 => {
                        active[i] = None;
                        changed = true;
                    }
                    _ => return Some((x, y)),
                }
            }
            debug_assert!(changed);
        }
        None
    }
}

const ALPHA: f64 = 1.6;
const SIGMA: f64 = 1e-6;
const RHO_EQ_SCALE: f64 = 1e3;

/// Solves `qp` to KKT tolerance `tol` within `max_iter` ADMM iterations.
///
/// Fails with [`Error::NonConvex`] when the Hessian does not admit a
/// Cholesky factorisation after a diagonal shift of at most `1e-10` (scaled
/// by the largest Hessian entry), and with [`Error::Domain`] for malformed
/// problems. Infeasible and unconverged problems are reported through
/// [`QPSolution::status`].
pub fn solve(qp: &QuadraticProgram, tol: f64, max_iter: usize) -> Result<QPSolution> {
    qp.validate()?;
    let n = qp.n;
    let st = Stacked::new(qp);
    let m = st.rows.len();
    let bw = st.bandwidth();

    let scale = qp.hessian.values().fold(1.0f64, |a, v| a.max(v.abs()));
    {
        let mut h = SymBand::zeros(n, bw);
        for (&(i, j), &v) in &qp.hessian {
            h.add(i, j, v);
        }
        h.add_diagonal(1e-10 * scale);
        if BandCholesky::factor(&h).is_none() {
            let report = validate_convexity(qp);
            if !report.convex {
                return Err(Error::NonConvex { min_eig: report.min_eigenvalue });
            }
        }
    }

    let mut rho_base = 0.1;
    let rho_for = |base: f64| -> Vec<f64> {
        st.rows.iter().map(|r| if r.eq { base * RHO_EQ_SCALE } else { base }).collect()
    };
    let mut rho = rho_for(rho_base);
    let mut factor = BandCholesky::factor(&st.kkt_matrix(SIGMA, &rho, bw))
        .ok_or_else(|| Error::domain("KKT matrix factorisation failed"))?;

    let mut x = vec![0.0; n];
    let mut z: Vec<f64> = st.rows.iter().map(|r| 0.0f64.clamp(r.lo, r.hi)).collect();
    let mut y = vec![0.0; m];
    let mut y_prev = y.clone();
    let admm_tol = 0.1 * tol;
    let mut iterations = 0;
    let mut infeasible = false;
    let mut early = None;
    let mut rhs = vec![0.0; n];

    for k in 1..=max_iter {
        iterations = k;
        let ry: Vec<f64> = (0..m).map(|i| rho[i] * z[i] - y[i]).collect();
        let aty = st.aty(&ry);
        for i in 0..n {
            rhs[i] = SIGMA * x[i] - qp.linear[i] + aty[i];
        }
        factor.solve_in_place(&mut rhs);
        let x_tilde = &rhs;
        let z_tilde = st.ax(x_tilde);
        for i in 0..n {
            x[i] = ALPHA * x_tilde[i] + (1.0 - ALPHA) * x[i];
        }
        for i in 0..m {
            let relaxed = ALPHA * z_tilde[i] + (1.0 - ALPHA) * z[i];
            let z_new = (relaxed + y[i] / rho[i]).clamp(st.rows[i].lo, st.rows[i].hi);
            y[i] += rho[i] * (relaxed - z_new);
            z[i] = z_new;
        }

        if k % 10 == 0 || k == max_iter {
            let ax = st.ax(&x);
            let rp = ax.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let hx = qp.hessian_mul(&x);
            let aty = st.aty(&y);
            let rd = (0..n).map(|i| (hx[i] + qp.linear[i] + aty[i]).abs()).fold(0.0, f64::max);
            if rp <= admm_tol && rd <= admm_tol {
                break;
            }
            if k % 50 == 0 {
                if let Some((px, py)) = st.polish(&x, &y, tol) {
                    let (prp, prd, pc) = st.residuals(&px, &py);
                    if prp.max(prd).max(pc) <= tol {
                        early = Some((px, py));
                        break;
                    }
                }
                if primal_infeasible(&st, &y, &y_prev) {
                    infeasible = true;
                    break;
                }
                y_prev.clone_from(&y);
                let ax_norm = ax.iter().chain(&z).fold(1e-12f64, |a, v| a.max(v.abs()));
                let d_norm = hx.iter().chain(&aty).chain(&qp.linear).fold(1e-12f64, |a, v| a.max(v.abs()));
                let ratio = libm::sqrt((rp / ax_norm) / (rd / d_norm).max(1e-300));
                if ratio.is_finite() && !(0.2..=5.0).contains(&ratio) {
                    rho_base = (rho_base * ratio).clamp(1e-6, 1e6);
                    rho = rho_for(rho_base);
                    factor = BandCholesky::factor(&st.kkt_matrix(SIGMA, &rho, bw))
                        .ok_or_else(|| Error::domain("KKT matrix factorisation failed"))?;
                }
            }
        }
    }

    let mut polished = false;
    if let Some((px, py)) = early {
        x = px;
        y = py;
        polished = true;
    }
    let (mut rp, mut rd, mut compl) = st.residuals(&x, &y);
    if !infeasible && !polished {
        if let Some((px, py)) = st.polish(&x, &y, tol) {
            let (prp, prd, pc) = st.residuals(&px, &py);
            if prp.max(prd).max(pc) <= rp.max(rd).max(compl) || prp.max(prd).max(pc) <= tol {
                x = px;
                y = py;
                rp = prp;
                rd = prd;
                compl = pc;
                polished = true;
            }
        }
    }
    let status = if infeasible && rp > tol {
        QpStatus::Infeasible
    } else if rp <= tol && rd <= tol && compl <= tol {
        QpStatus::Optimal
    } else {
        QpStatus::MaxIter
    };
    Ok(QPSolution {
        objective: qp.objective(&x),
        x,
        y,
        status,
        primal_residual: rp,
        dual_residual: rd,
        complementarity: compl,
        iterations,
        polished,
    })
}

/// Farkas-type certificate on the change in duals between checks.
fn primal_infeasible(st: &Stacked<'_>, y: &[f64], y_prev: &[f64]) -> bool {
    let dy: Vec<f64> = y.iter().zip(y_prev).map(|(a, b)| a - b).collect();
    let norm = dy.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if norm < 1e-9 {
        return false;
    }
    let aty = st.aty(&dy);
    if aty.iter().fold(0.0f64, |a, v| a.max(v.abs())) > 1e-6 * norm {
        return false;
    }
    let mut support = 0.0;
    for (r, &d) in st.rows.iter().zip(&dy) {
        if d > 0.0 {
            if !r.hi.is_finite() {
                return false;
            }
            support += r.hi * d;
        } else if d < 0.0 {
            if !r.lo.is_finite() {
                return false;
            }
            support += r.lo * d;
        }
    }
    support < -1e-6 * norm
}
