//! Lemke's complementary pivoting algorithm for linear complementarity
//! problems: find `z >= 0` with `w = Mz + q >= 0` and `z . w = 0`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative tolerance for the pivot-candidate zero test.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Diagonal regularization added to the reduced normal block of a mixed
/// problem.
pub const REGULARIZATION: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LcpError {
    #[error("matrix is {rows}x{cols} but q has {len} entries")]
    Dimension { rows: usize, cols: usize, len: usize },
    #[error("problem contains non-finite entries")]
    NonFinite,
    #[error("ray termination: no solution found after {0} pivots")]
    Ray(usize),
    #[error("pivot budget of {0} exhausted")]
    PivotBudget(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcpProblem {
    m: DMatrix<f64>,
    q: DVector<f64>,
}

impl LcpProblem {
    pub fn new(m: DMatrix<f64>, q: DVector<f64>) -> Result<Self, LcpError> {
        if m.nrows() != m.ncols() || m.nrows() != q.len() {
            return Err(LcpError::Dimension { rows: m.nrows(), cols: m.ncols(), len: q.len() });
        }
        if m.iter().chain(q.iter()).any(|x| !x.is_finite()) {
            return Err(LcpError::NonFinite);
        }
        Ok(Self { m, q })
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Plain-text dump for failure triage.
    pub fn dump(&self) -> String {
        format!("M = {}q = {}", self.m, self.q.transpose())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolution {
    pub z: DVector<f64>,
    pub w: DVector<f64>,
    pub pivots: usize,
}

/// Largest violation of each complementarity condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// `max(0, -min z)`
    pub z_negativity: f64,
    /// `max(0, -min w)` with `w` recomputed as `Mz + q`
    pub w_negativity: f64,
    /// `max |z_i w_i|`
    pub complementarity: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.z_negativity.max(self.w_negativity).max(self.complementarity)
    }
}

pub fn validate_solution(p: &LcpProblem, z: &DVector<f64>) -> Residuals {
    let w = &p.m * z + &p.q;
    let neg = |v: &DVector<f64>| v.iter().fold(0.0_f64, |m, &x| m.max(-x));
    Residuals {
        z_negativity: neg(z),
        w_negativity: neg(&w),
        complementarity: z.iter().zip(w.iter()).fold(0.0_f64, |m, (a, b)| m.max((a * b).abs())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    W(usize),
    Z(usize),
    Aux,
}

struct Tableau<'a> {
    p: &'a LcpProblem,
    binv: DMatrix<f64>,
    x: DVector<f64>,
    basis: Vec<Var>,
}

impl Tableau<'_> {
    fn column(&self, v: Var) -> DVector<f64> {
        let n = self.p.len();
        let a = match v {
            Var::W(i) => {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                e
            }
            Var::Z(j) => -self.p.m.column(j),
            Var::Aux => DVector::from_element(n, -1.0),
        };
        &self.binv * a
    }

    /// Row chosen by the lexicographic minimum ratio rule, `None` on a ray.
    fn leaving_row(&self, col: &DVector<f64>) -> Option<usize> {
        let scale = col.amax().max(1.0);
        let tol = PIVOT_TOLERANCE * scale;
        let mut rows: Vec<usize> = (0..col.len()).filter(|&i| col[i] > tol).collect();
        if rows.is_empty() {
            return None;
        }
        let ratio_tol = 1e-12;
        let pick = |rows: &[usize], f: &dyn Fn(usize) -> f64| -> Vec<usize> {
            let best = rows.iter().map(|&i| f(i)).fold(f64::INFINITY, f64::min);
            let band = ratio_tol * best.abs().max(1.0);
            rows.iter().copied().filter(|&i| f(i) <= best + band).collect()
        };
        rows = pick(&rows, &|i| self.x[i] / col[i]);
        if let Some(&r) = rows.iter().find(|&&i| self.basis[i] == Var::Aux) {
            return Some(r);
        }
        let mut k = 0;
        while rows.len() > 1 && k < self.binv.ncols() {
            rows = pick(&rows, &|i| self.binv[(i, k)] / col[i]);
            k += 1;
        }
        rows.first().copied()
    }

    fn pivot(&mut self, row: usize, col: &DVector<f64>, entering: Var) {
        let piv = col[row];
        let n = self.x.len();
        for j in 0..n {
            self.binv[(row, j)] /= piv;
        }
        self.x[row] /= piv;
        for i in 0..n {
            if i == row || col[i] == 0.0 {
                continue;
            }
            let f = col[i];
            for j in 0..n {
                let v = self.binv[(row, j)];
                self.binv[(i, j)] -= f * v;
            }
            self.x[i] -= f * self.x[row];
        }
        self.basis[row] = entering;
    }
}

/// Solves the LCP with a covering vector of ones and lexicographic
/// degeneracy resolution. `max_pivots` defaults to `50 n`.
pub fn lemke_solve(p: &LcpProblem, max_pivots: Option<usize>) -> Result<LcpSolution, LcpError> {
    let n = p.len();
    if p.q.iter().all(|&x| x >= 0.0) {
        return Ok(LcpSolution { z: DVector::zeros(n), w: p.q.clone(), pivots: 0 });
    }
    let budget = max_pivots.unwrap_or(50 * n).max(1);
    let mut t = Tableau { p, binv: DMatrix::identity(n, n), x: p.q.clone(), basis: (0..n).map(Var::W).collect() };

    // first pivot: the auxiliary variable replaces the most negative w
    let col = t.column(Var::Aux);
    let qmin = p.q.min();
    let ties: Vec<usize> = (0..n).filter(|&i| p.q[i] <= qmin + 1e-12 * qmin.abs().max(1.0)).collect();
    let first = if ties.len() == 1 { ties[0] } else { t.leaving_row_among(&ties, &col) };
    let mut leaving = t.basis[first];
    t.pivot(first, &col, Var::Aux);
    let mut pivots = 1;

    loop {
        let entering = match leaving {
            Var::W(i) => Var::Z(i),
            Var::Z(i) => Var::W(i),
            Var::Aux => break,
        };
        if pivots >= budget {
            return Err(LcpError::PivotBudget(budget));
        }
        let col = t.column(entering);
        let row = t.leaving_row(&col).ok_or(LcpError::Ray(pivots))?;
        leaving = t.basis[row];
        t.pivot(row, &col, entering);
        pivots += 1;
    }

    let mut z = DVector::zeros(n);
    for (i, v) in t.basis.iter().enumerate() {
        if let Var::Z(j) = *v {
            z[j] = t.x[i].max(0.0);
        }
    }
    let z = polish(p, z);
    let w = &p.m * &z + &p.q;
    Ok(LcpSolution { z, w, pivots })
}

impl Tableau<'_> {
    fn leaving_row_among(&self, rows: &[usize], col: &DVector<f64>) -> usize {
        let mut rows = rows.to_vec();
        let mut k = 0;
        while rows.len() > 1 && k < self.binv.ncols() {
            let best = rows.iter().map(|&i| self.binv[(i, k)] / col[i]).fold(f64::INFINITY, f64::min);
            rows.retain(|&i| self.binv[(i, k)] / col[i] <= best + 1e-12);
            k += 1;
        }
        rows[0]
    }
}

/// Re-solves the active set directly to remove pivoting round-off; keeps
/// the pivoted solution if the refined one is worse.
fn polish(p: &LcpProblem, z: DVector<f64>) -> DVector<f64> {
    let active: Vec<usize> = (0..z.len()).filter(|&i| z[i] > 0.0).collect();
    if active.is_empty() {
        return z;
    }
    let k = active.len();
    let msub = DMatrix::from_fn(k, k, |a, b| p.m[(active[a], active[b])]);
    let qsub = DVector::from_fn(k, |a, _| -p.q[active[a]]);
    let Some(sol) = msub.lu().solve(&qsub) else { return z };
    let mut refined = DVector::zeros(z.len());
    for (a, &i) in active.iter().enumerate() {
        refined[i] = sol[a].max(0.0);
    }
    if validate_solution(p, &refined).max() <= validate_solution(p, &z).max() {
        refined
    } else {
        z
    }
}

/// Pseudo-inverse of a symmetric positive semidefinite matrix; eigenvalues
/// below `1e-10` times the largest are treated as zero.
fn symmetric_pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = 0.5 * (a + a.transpose());
    let eig = sym.symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let cut = 1e-10 * top;
    let mut inv = DMatrix::zeros(n, n);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > cut {
            let v = eig.eigenvectors.column(k);
            inv += (v * v.transpose()) / l;
        }
    }
    inv
}

/// Solution of a mixed problem with free (equality) variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSolution {
    /// Complementarity variables.
    pub normal: DVector<f64>,
    /// Free variables.
    pub free: DVector<f64>,
    pub pivots: usize,
}

/// Solves
/// ```text
/// [Ann Anf] [zn]   [bn]   [wn]
/// [Afn Aff] [zf] + [bf] = [ 0]     0 <= zn ⊥ wn >= 0,  zf free
/// ```
/// by eliminating `zf` with a pseudo-inverse of `Aff` and solving the
/// regularized reduced LCP in `zn`.
pub fn solve_mixed(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    n_normal: usize,
    max_pivots: Option<usize>,
) -> Result<MixedSolution, LcpError> {
    let total = b.len();
    if a.nrows() != total || a.ncols() != total || n_normal > total {
        return Err(LcpError::Dimension { rows: a.nrows(), cols: a.ncols(), len: total });
    }
    let nf = total - n_normal;
    let ann = a.view((0, 0), (n_normal, n_normal));
    let anf = a.view((0, n_normal), (n_normal, nf));
    let afn = a.view((n_normal, 0), (nf, n_normal));
    let aff = a.view((n_normal, n_normal), (nf, nf)).into_owned();
    let bn = b.rows(0, n_normal);
    let bf = b.rows(n_normal, nf);

    let aff_pinv = symmetric_pseudo_inverse(&aff);
    let reduce = &anf * &aff_pinv;
    let mut m = ann - &reduce * afn;
    m = 0.5 * (&m + m.transpose());
    for i in 0..n_normal {
        m[(i, i)] += REGULARIZATION;
    }
    let q = bn - &reduce * bf;
    let sol = lemke_solve(&LcpProblem::new(m, q)?, max_pivots)?;
    let free = if nf == 0 {
        DVector::zeros(0)
    } else {
        let rhs = bf + afn * &sol.z;
        let mut zf = -(&aff_pinv * &rhs);
        // one step of refinement against round-off in the pseudo-inverse
        let resid = &rhs + &aff * &zf;
        zf -= &aff_pinv * resid;
        zf
    };
    Ok(MixedSolution { normal: sol.z, free, pivots: sol.pivots })
}
