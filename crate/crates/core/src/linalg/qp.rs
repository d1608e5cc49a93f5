//! Dense convex QP solver (Goldfarb-Idnani dual active-set method).
//!
//! Solves
//!
//! ```text
//! minimize    1/2 x^T H x + f^T x
//! subject to  A_eq x  = b_eq
//!             A_in x <= b_in
//!             lb <= x <= ub
//! ```
//!
//! The dual method starts from the unconstrained minimizer and adds violated
//! constraints one at a time, so it needs no feasible starting point and it
//! proves infeasibility when a violated constraint cannot be added.
//! It requires a positive definite Hessian; a singular `H` is first
//! augmented with `sigma * A_eq^T A_eq` (exact on the feasible set) and only
//! then regularized with a small multiple of the identity.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

/// Dense convex QP in standard form.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x_star: DVector<f64>,
    pub status: QpStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Wall-clock solve time in seconds.
    pub solve_time: f64,
    /// Multipliers of the equality rows (sign convention: `H x + f + A_eq^T l_eq + A_in^T l_in + ... = 0`).
    pub eq_multipliers: DVector<f64>,
    /// Multipliers of the inequality rows, all `>= 0`.
    pub in_multipliers: DVector<f64>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    /// Bound on the KKT residual for an `Optimal` report.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

impl QpProblem {
    /// Unconstrained problem with infinite bounds.
    pub fn new(h: DMatrix<f64>, f: DVector<f64>) -> Self {
        let d = f.len();
        QpProblem {
            h,
            f,
            a_eq: DMatrix::zeros(0, d),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, d),
            b_in: DVector::zeros(0),
            lb: DVector::from_element(d, f64::NEG_INFINITY),
            ub: DVector::from_element(d, f64::INFINITY),
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn with_bounds(mut self, lb: DVector<f64>, ub: DVector<f64>) -> Self {
        self.lb = lb;
        self.ub = ub;
        self
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }

    /// Largest absolute constraint violation at `x`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        if self.a_eq.nrows() > 0 {
            v = v.max((&self.a_eq * x - &self.b_eq).abs().max());
        }
        if self.a_in.nrows() > 0 {
            v = v.max((&self.a_in * x - &self.b_in).max().max(0.0));
        }
        for i in 0..x.len() {
            v = v.max(self.lb[i] - x[i]).max(x[i] - self.ub[i]);
        }
        v
    }

    /// Checks the structural invariants (shapes, symmetry, `lb <= ub`).
    pub fn validate(&self) -> Result<(), String> {
        let d = self.dim();
        if self.h.shape() != (d, d) {
            return Err(format!("H is {:?}, expected ({d}, {d})", self.h.shape()));
        }
        if self.a_eq.ncols() != d || self.a_eq.nrows() != self.b_eq.len() {
            return Err("equality block shape mismatch".into());
        }
        if self.a_in.ncols() != d || self.a_in.nrows() != self.b_in.len() {
            return Err("inequality block shape mismatch".into());
        }
        if self.lb.len() != d || self.ub.len() != d {
            return Err("bound vector length mismatch".into());
        }
        let hn = self.h.abs().max().max(1e-300);
        if (&self.h - self.h.transpose()).abs().max() > 1e-12 * hn {
            return Err("H is not symmetric".into());
        }
        for i in 0..d {
            if self.lb[i] > self.ub[i] {
                return Err(format!("lb[{i}] > ub[{i}]"));
            }
        }
        Ok(())
    }
}

/// One constraint row in `n^T x >= b` form.
struct Row {
    n: DVector<f64>,
    b: f64,
    equality: bool,
    /// Index into the caller-facing multiplier vectors and the sign that
    /// maps the internal multiplier back.
    origin: Origin,
}

#[derive(Clone, Copy)]
enum Origin {
    Eq(usize, f64),
    In(usize),
    Bound,
}

pub fn solve_qp(prob: &QpProblem) -> QpSolution {
    solve_qp_with(prob, &QpSettings::default())
}

pub fn solve_qp_with(prob: &QpProblem, settings: &QpSettings) -> QpSolution {
    let start = Instant::now();
    let d = prob.dim();
    let mut sol = GoldfarbIdnani::new(prob, settings).run();
    sol.solve_time = start.elapsed().as_secs_f64();
    debug_assert_eq!(sol.x_star.len(), d);
    sol
}

struct GoldfarbIdnani<'a> {
    prob: &'a QpProblem,
    settings: &'a QpSettings,
    rows: Vec<Row>,
    x: DVector<f64>,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    active: Vec<usize>,
    u: Vec<f64>,
    is_active: Vec<bool>,
    iterations: usize,
}

enum AddOutcome {
    Added,
    Infeasible,
    MaxIter,
}

impl<'a> GoldfarbIdnani<'a> {
    fn new(prob: &'a QpProblem, settings: &'a QpSettings) -> Self {
        let d = prob.dim();
        let mut rows = Vec::new();
        for i in 0..prob.a_eq.nrows() {
            rows.push(Row {
                n: prob.a_eq.row(i).transpose(),
                b: prob.b_eq[i],
                equality: true,
                origin: Origin::Eq(i, 1.0),
            });
        }
        for i in 0..prob.a_in.nrows() {
            rows.push(Row {
                n: -prob.a_in.row(i).transpose(),
                b: -prob.b_in[i],
                equality: false,
                origin: Origin::In(i),
            });
        }
        for i in 0..d {
            if prob.lb[i].is_finite() {
                let mut n = DVector::zeros(d);
                n[i] = 1.0;
                rows.push(Row {
                    n,
                    b: prob.lb[i],
                    equality: false,
                    origin: Origin::Bound,
                });
            }
            if prob.ub[i].is_finite() {
                let mut n = DVector::zeros(d);
                n[i] = -1.0;
                rows.push(Row {
                    n,
                    b: -prob.ub[i],
                    equality: false,
                    origin: Origin::Bound,
                });
            }
        }
        let nrows = rows.len();
        GoldfarbIdnani {
            prob,
            settings,
            rows,
            x: DVector::zeros(d),
            j: DMatrix::zeros(d, d),
            r: DMatrix::zeros(d, d),
            active: Vec::new(),
            u: Vec::new(),
            is_active: vec![false; nrows],
            iterations: 0,
        }
    }

    /// Factor the (possibly augmented) Hessian and set the unconstrained
    /// minimizer. Returns false when no positive definite surrogate exists.
    fn initialize(&mut self) -> bool {
        let prob = self.prob;
        let d = prob.dim();
        let mut h = prob.h.clone();
        let mut f = prob.f.clone();
        let hscale = h.abs().max().max(1.0);

        let mut chol = h.clone().cholesky();
        if chol.is_none() && prob.a_eq.nrows() > 0 {
            let sigma = hscale;
            h += sigma * prob.a_eq.transpose() * &prob.a_eq;
            f -= sigma * prob.a_eq.transpose() * &prob.b_eq;
            chol = h.clone().cholesky();
        }
        let mut tau = 1e-12 * hscale;
        while chol.is_none() && tau <= 1e-6 * hscale {
            let mut hr = h.clone();
            for i in 0..d {
                hr[(i, i)] += tau;
            }
            chol = hr.cholesky();
            tau *= 100.0;
        }
        let Some(chol) = chol else {
            return false;
        };
        let l = chol.l();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .expect("cholesky factor is nonsingular");
        self.j = l_inv.transpose();
        self.x = -chol.solve(&f);
        true
    }

    fn slack(&self, k: usize) -> f64 {
        self.rows[k].n.dot(&self.x) - self.rows[k].b
    }

    fn violation_tol(&self, k: usize) -> f64 {
        let row = &self.rows[k];
        1e-11 * (1.0f64).max(row.b.abs()).max(row.n.amax() * self.x.amax())
    }

    fn run(mut self) -> QpSolution {
        if !self.initialize() {
            return self.finish(QpStatus::Infeasible);
        }
        // Equalities enter first and never leave.
        for k in 0..self.rows.len() {
            if !self.rows[k].equality {
                continue;
            }
            if self.slack(k) > 0.0 {
                let row = &mut self.rows[k];
                row.n = -row.n.clone();
                row.b = -row.b;
                if let Origin::Eq(i, s) = row.origin {
                    row.origin = Origin::Eq(i, -s);
                }
            }
            match self.add_constraint(k) {
                AddOutcome::Added => {}
                AddOutcome::Infeasible => return self.finish(QpStatus::Infeasible),
                AddOutcome::MaxIter => return self.finish(QpStatus::MaxIter),
            }
        }
        loop {
            // Most violated inactive inequality, scaled by row norm.
            let mut worst: Option<(usize, f64)> = None;
            for k in 0..self.rows.len() {
                if self.is_active[k] || self.rows[k].equality {
                    continue;
                }
                let s = self.slack(k);
                if s < -self.violation_tol(k) {
                    let scaled = s / self.rows[k].n.norm();
                    if worst.is_none_or(|(_, w)| scaled < w) {
                        worst = Some((k, scaled));
                    }
                }
            }
            let Some((p, _)) = worst else {
                return self.finish(QpStatus::Optimal);
            };
            match self.add_constraint(p) {
                AddOutcome::Added => {}
                AddOutcome::Infeasible => return self.finish(QpStatus::Infeasible),
                AddOutcome::MaxIter => return self.finish(QpStatus::MaxIter),
            }
        }
    }

    /// Steps primal and dual variables until row `p` is satisfied with
    /// equality and joins the active set, dropping blocking constraints.
    fn add_constraint(&mut self, p: usize) -> AddOutcome {
        let d = self.prob.dim();
        let mut u_p = 0.0;
        loop {
            self.iterations += 1;
            if self.iterations > self.settings.max_iter {
                return AddOutcome::MaxIter;
            }
            let q = self.active.len();
            let np = &self.rows[p].n;
            let dv = self.j.tr_mul(np);
            // Primal direction z = J2 d2, dual direction r = R^-1 d1.
            let mut z = DVector::zeros(d);
            for c in q..d {
                z.axpy(dv[c], &self.j.column(c), 1.0);
            }
            let mut r = vec![0.0; q];
            for i in (0..q).rev() {
                let mut acc = dv[i];
                for c in (i + 1)..q {
                    acc -= self.r[(i, c)] * r[c];
                }
                r[i] = acc / self.r[(i, i)];
            }

            // Partial (dual) step bound over active inequalities.
            let mut t1 = f64::INFINITY;
            let mut drop_idx = None;
            for (idx, &k) in self.active.iter().enumerate() {
                if self.rows[k].equality {
                    continue;
                }
                if r[idx] > 0.0 {
                    let t = self.u[idx] / r[idx];
                    if t < t1 {
                        t1 = t;
                        drop_idx = Some(idx);
                    }
                }
            }

            let d2_norm = dv.rows(q, d - q).norm();
            let zero_primal = d2_norm <= 1e-12 * dv.norm().max(1e-300);
            if zero_primal && self.rows[p].equality {
                // Dependent on earlier equalities: either redundant or inconsistent.
                let s = np.dot(&self.x) - self.rows[p].b;
                return if s.abs() <= self.violation_tol(p).max(1e-9 * (1.0 + self.rows[p].b.abs())) {
                    AddOutcome::Added
                } else {
                    AddOutcome::Infeasible
                };
            }
            let t2 = if zero_primal {
                f64::INFINITY
            } else {
                let zn = z.dot(np);
                let s = np.dot(&self.x) - self.rows[p].b;
                (-s / zn).max(0.0)
            };

            if t1.is_infinite() && t2.is_infinite() {
                return AddOutcome::Infeasible;
            }
            if t2.is_infinite() {
                for (ui, ri) in self.u.iter_mut().zip(&r) {
                    *ui -= t1 * ri;
                }
                u_p += t1;
                let idx = drop_idx.expect("finite t1 has an index");
                self.drop_active(idx);
                continue;
            }

            let t = t1.min(t2);
            self.x.axpy(t, &z, 1.0);
            for (ui, ri) in self.u.iter_mut().zip(&r) {
                *ui -= t * ri;
            }
            u_p += t;
            if t2 <= t1 {
                if !self.append_active(p, dv) {
                    // Linearly dependent on the active set yet still violated.
                    return AddOutcome::Infeasible;
                }
                self.u.push(u_p);
                return AddOutcome::Added;
            }
            let idx = drop_idx.expect("t1 < t2 implies a blocking constraint");
            self.drop_active(idx);
        }
    }

    /// Givens-rotates `dv = J^T n_p` so the new row enters R.
    fn append_active(&mut self, p: usize, mut dv: DVector<f64>) -> bool {
        let d = self.prob.dim();
        let q = self.active.len();
        for c in ((q + 1)..d).rev() {
            let (a, b) = (dv[c - 1], dv[c]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (cs, sn) = (a / h, b / h);
            dv[c - 1] = h;
            dv[c] = 0.0;
            rotate_columns(&mut self.j, c - 1, c, cs, sn);
        }
        if dv[q].abs() <= 1e-14 * dv.norm().max(1e-300) {
            return false;
        }
        for i in 0..=q {
            self.r[(i, q)] = dv[i];
        }
        self.active.push(p);
        self.is_active[p] = true;
        true
    }

    fn drop_active(&mut self, idx: usize) {
        let q = self.active.len();
        let k = self.active.remove(idx);
        self.u.remove(idx);
        self.is_active[k] = false;
        // Shift R columns left past the removed one.
        for c in idx..(q - 1) {
            for i in 0..=(c + 1).min(q - 1) {
                self.r[(i, c)] = self.r[(i, c + 1)];
            }
        }
        for i in 0..q {
            self.r[(i, q - 1)] = 0.0;
        }
        // Restore triangular form.
        for c in idx..(q - 1) {
            let (a, b) = (self.r[(c, c)], self.r[(c + 1, c)]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (cs, sn) = (a / h, b / h);
            for col in c..(q - 1) {
                let (ra, rb) = (self.r[(c, col)], self.r[(c + 1, col)]);
                self.r[(c, col)] = cs * ra + sn * rb;
                self.r[(c + 1, col)] = -sn * ra + cs * rb;
            }
            rotate_columns(&mut self.j, c, c + 1, cs, sn);
        }
    }

    fn finish(self, status: QpStatus) -> QpSolution {
        let prob = self.prob;
        let mut eq_mult = DVector::zeros(prob.a_eq.nrows());
        let mut in_mult = DVector::zeros(prob.a_in.nrows());
        // Stationarity with the internal convention: H x + f - sum u_k n_k = 0.
        let hx = &prob.h * &self.x;
        let mut grad = &hx + &prob.f;
        let mut mult_scale: f64 = 0.0;
        for (&k, &uk) in self.active.iter().zip(&self.u) {
            let row = &self.rows[k];
            grad.axpy(-uk, &row.n, 1.0);
            mult_scale = mult_scale.max(uk.abs() * row.n.amax());
            match row.origin {
                Origin::Eq(i, s) => eq_mult[i] = -s * uk,
                Origin::In(i) => in_mult[i] = uk,
                Origin::Bound => {}
            }
        }
        let stat_scale = 1.0 + hx.amax() + prob.f.amax() + mult_scale;
        let stationarity = grad.amax() / stat_scale;
        let primal = prob.max_violation(&self.x);
        let dual = self
            .active
            .iter()
            .zip(&self.u)
            .filter(|(&k, _)| !self.rows[k].equality)
            .map(|(_, &uk)| (-uk).max(0.0))
            .fold(0.0, f64::max);
        let kkt_residual = stationarity.max(primal).max(dual);

        let status = match status {
            QpStatus::Optimal if !(kkt_residual <= self.settings.tol) => QpStatus::MaxIter,
            s => s,
        };
        QpSolution {
            x_star: self.x,
            status,
            kkt_residual,
            iterations: self.iterations,
            solve_time: 0.0,
            eq_multipliers: eq_mult,
            in_multipliers: in_mult,
        }
    }
}

fn rotate_columns(m: &mut DMatrix<f64>, a: usize, b: usize, cs: f64, sn: f64) {
    for i in 0..m.nrows() {
        let (ma, mb) = (m[(i, a)], m[(i, b)]);
        m[(i, a)] = cs * ma + sn * mb;
        m[(i, b)] = -sn * ma + cs * mb;
    }
}
