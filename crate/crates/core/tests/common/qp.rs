//! Shared QP oracle: active-set enumeration and hand-solved problems.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use softclf::linalg::QpProblem;

use super::uniform_vec;

/// One inequality `a^T x <= b`, with bounds folded in as rows.
pub fn inequality_rows(p: &QpProblem) -> Vec<(DVector<f64>, f64)> {
    let d = p.dim();
    let mut rows: Vec<(DVector<f64>, f64)> = (0..p.a_in.nrows())
        .map(|i| (p.a_in.row(i).transpose(), p.b_in[i]))
        .collect();
    for i in 0..d {
        let mut e = DVector::zeros(d);
        if p.ub[i].is_finite() {
            e[i] = 1.0;
            rows.push((e.clone(), p.ub[i]));
        }
        if p.lb[i].is_finite() {
            e[i] = -1.0;
            rows.push((e, -p.lb[i]));
        }
    }
    rows
}

/// Global minimizer of a strictly convex QP by enumerating every active set
/// of inequality rows, solving the equality-constrained KKT system of each
/// and keeping the best feasible point. `None` when nothing is feasible.
pub fn brute_force(p: &QpProblem) -> Option<DVector<f64>> {
    let d = p.dim();
    let rows = inequality_rows(p);
    let neq = p.a_eq.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << rows.len()) {
        let active: Vec<usize> = (0..rows.len()).filter(|i| mask & (1 << i) != 0).collect();
        let k = neq + active.len();
        if k > d {
            continue;
        }
        let mut kkt = DMatrix::zeros(d + k, d + k);
        let mut rhs = DVector::zeros(d + k);
        kkt.view_mut((0, 0), (d, d)).copy_from(&p.h);
        rhs.rows_mut(0, d).copy_from(&(-&p.f));
        for r in 0..neq {
            let a = p.a_eq.row(r);
            kkt.view_mut((d + r, 0), (1, d)).copy_from(&a);
            kkt.view_mut((0, d + r), (d, 1)).copy_from(&a.transpose());
            rhs[d + r] = p.b_eq[r];
        }
        for (j, &i) in active.iter().enumerate() {
            let (a, b) = &rows[i];
            kkt.view_mut((d + neq + j, 0), (1, d))
                .copy_from(&a.transpose());
            kkt.view_mut((0, d + neq + j), (d, 1)).copy_from(a);
            rhs[d + neq + j] = *b;
        }
        let svd = kkt.clone().svd(true, true);
        if svd.singular_values.min() < 1e-10 * svd.singular_values.max() {
            continue;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x = sol.rows(0, d).into_owned();
        if p.max_violation(&x) > 1e-9 {
            continue;
        }
        let obj = p.objective(&x);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best.map(|(_, x)| x)
}

pub fn random_spd(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

/// Random QP with 5 variables, 2 equalities, 3 inequalities and bounds on
/// two variables, built around a known feasible point.
pub fn random_qp(rng: &mut impl Rng) -> QpProblem {
    let d = 5;
    let x0 = uniform_vec(rng, d, 1.0);
    let a_eq = DMatrix::from_fn(2, d, |_, _| rng.random_range(-1.0..1.0));
    let b_eq = &a_eq * &x0;
    let a_in = DMatrix::from_fn(3, d, |_, _| rng.random_range(-1.0..1.0));
    let slack = DVector::from_fn(3, |_, _| rng.random_range(0.0..0.5));
    let b_in = &a_in * &x0 + slack;
    let mut lb = DVector::from_element(d, f64::NEG_INFINITY);
    let mut ub = DVector::from_element(d, f64::INFINITY);
    for i in 0..2 {
        lb[i] = x0[i] - rng.random_range(0.0..0.5);
        ub[i] = x0[i] + rng.random_range(0.0..0.5);
    }
    QpProblem::new(random_spd(rng, d), uniform_vec(rng, d, 3.0))
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_in, b_in)
        .with_bounds(lb, ub)
}

pub fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn dm(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, v)
}

/// Hand-solved problems with their minimizers; the first three are the
/// textbook cases (active bound, symmetric equality, stationary point).
pub fn analytic_qps() -> Vec<(QpProblem, Vec<f64>)> {
    vec![
        // min x^2 s.t. x >= 1
        (
            QpProblem::new(dm(1, 1, &[2.0]), dv(&[0.0]))
                .with_bounds(dv(&[1.0]), dv(&[f64::INFINITY])),
            vec![1.0],
        ),
        // min |x|^2 s.t. x1 + x2 = 1
        (
            QpProblem::new(DMatrix::identity(2, 2) * 2.0, dv(&[0.0, 0.0]))
                .with_equalities(dm(1, 2, &[1.0, 1.0]), dv(&[1.0])),
            vec![0.5, 0.5],
        ),
        // min 1/2 x^T diag(2, 2) x - (2, 4)^T x
        (
            QpProblem::new(DMatrix::identity(2, 2) * 2.0, dv(&[-2.0, -4.0])),
            vec![1.0, 2.0],
        ),
        // Projection of (2, 2) onto x1 + x2 <= 1.
        (
            QpProblem::new(DMatrix::identity(2, 2) * 2.0, dv(&[-4.0, -4.0]))
                .with_inequalities(dm(1, 2, &[1.0, 1.0]), dv(&[1.0])),
            vec![0.5, 0.5],
        ),
        // Inactive inequality leaves the unconstrained minimizer.
        (
            QpProblem::new(DMatrix::identity(2, 2) * 2.0, dv(&[-2.0, 0.0]))
                .with_inequalities(dm(1, 2, &[1.0, 0.0]), dv(&[5.0])),
            vec![1.0, 0.0],
        ),
        // Box clipping of (3, -3) into [-1, 1]^2.
        (
            QpProblem::new(DMatrix::identity(2, 2) * 2.0, dv(&[-6.0, 6.0]))
                .with_bounds(dv(&[-1.0, -1.0]), dv(&[1.0, 1.0])),
            vec![1.0, -1.0],
        ),
        // Anisotropic weights with an equality: min x1^2 + 4 x2^2 s.t. x1 + x2 = 5
        // gives x1 = 4 x2, so x = (4, 1).
        (
            QpProblem::new(dm(2, 2, &[2.0, 0.0, 0.0, 8.0]), dv(&[0.0, 0.0]))
                .with_equalities(dm(1, 2, &[1.0, 1.0]), dv(&[5.0])),
            vec![4.0, 1.0],
        ),
        // Two active inequalities meeting at a vertex: min |x - (2, 2)|^2,
        // x1 <= 0.5, x2 <= 0.25.
        (
            QpProblem::new(DMatrix::identity(2, 2) * 2.0, dv(&[-4.0, -4.0]))
                .with_inequalities(dm(2, 2, &[1.0, 0.0, 0.0, 1.0]), dv(&[0.5, 0.25])),
            vec![0.5, 0.25],
        ),
        // Coupled Hessian, unconstrained: [[2, 1], [1, 2]] x = (3, 3) gives x = (1, 1).
        (
            QpProblem::new(dm(2, 2, &[2.0, 1.0, 1.0, 2.0]), dv(&[-3.0, -3.0])),
            vec![1.0, 1.0],
        ),
        // Equality fixes x3 while a bound clips x1: min |x - (5, 1, 0)|^2,
        // x3 = 2, x1 <= 3.
        (
            QpProblem::new(DMatrix::identity(3, 3) * 2.0, dv(&[-10.0, -2.0, 0.0]))
                .with_equalities(dm(1, 3, &[0.0, 0.0, 1.0]), dv(&[2.0]))
                .with_bounds(
                    dv(&[f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY]),
                    dv(&[3.0, f64::INFINITY, f64::INFINITY]),
                ),
            vec![3.0, 1.0, 2.0],
        ),
    ]
}
