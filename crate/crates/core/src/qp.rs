//! Dense constrained least-squares QP solving and strict-priority task cascades.
//!
//! The primitive problem is
//!
//! ```text
//!   minimise    0.5 * || A x - b ||^2
//!   subject to  C x <= d,   E x = f
//! ```
//!
//! solved by a Mehrotra-style primal-dual interior point iteration on the
//! normal-equations form. A strict-priority cascade solves one such problem
//! per level and pins every solved level with the equality `A_k x = A_k x_k*`
//! before moving on, so lower-priority levels can never degrade the residual
//! achieved by a higher-priority one.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default convergence tolerance on the scaled KKT residual.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
/// Default iteration budget for one QP solve.
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

/// Fraction of the distance to the positivity boundary taken per step.
const STEP_SCALE: f64 = 0.995;
/// Relative static regularisation added to the KKT system. Keeps rank
/// deficient objectives and redundant equality rows solvable; small enough
/// that the minimiser shift stays far below the convergence tolerance.
const STATIC_REG: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("problem data contains non-finite entries")]
    NonFinite,
    #[error("no point satisfies the constraints within tolerance")]
    Infeasible,
    #[error("iteration budget exhausted before reaching tolerance")]
    MaxIterations,
    #[error("KKT system too ill-conditioned to factorise")]
    IllConditioned,
    #[error("hierarchy level {level} failed")]
    LevelFailed {
        level: usize,
        #[source]
        source: Box<QpError>,
    },
}

/// One constrained least-squares problem.
#[derive(Debug, Clone)]
pub struct QpProblem {
    /// Objective matrix `A`, one row per residual component.
    pub objective_matrix: DMatrix<f64>,
    /// Objective target `b`.
    pub objective_vector: DVector<f64>,
    /// Inequality rows `C` (may have zero rows).
    pub ineq_matrix: DMatrix<f64>,
    /// Inequality bounds `d` in `C x <= d`.
    pub ineq_bound: DVector<f64>,
    /// Equality rows `E` (may have zero rows).
    pub eq_matrix: DMatrix<f64>,
    /// Equality targets `f` in `E x = f`.
    pub eq_rhs: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained least-squares problem.
    pub fn new(objective_matrix: DMatrix<f64>, objective_vector: DVector<f64>) -> Self {
        let dim = objective_matrix.ncols();
        Self {
            objective_matrix,
            objective_vector,
            ineq_matrix: DMatrix::zeros(0, dim),
            ineq_bound: DVector::zeros(0),
            eq_matrix: DMatrix::zeros(0, dim),
            eq_rhs: DVector::zeros(0),
        }
    }

    pub fn with_inequalities(mut self, matrix: DMatrix<f64>, bound: DVector<f64>) -> Self {
        self.ineq_matrix = matrix;
        self.ineq_bound = bound;
        self
    }

    pub fn with_equalities(mut self, matrix: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        self.eq_matrix = matrix;
        self.eq_rhs = rhs;
        self
    }

    pub fn dim(&self) -> usize {
        self.objective_matrix.ncols()
    }

    fn validate(&self) -> Result<(), QpError> {
        let s = self.dim();
        if s == 0 {
            return Err(QpError::DimensionMismatch("empty decision vector".into()));
        }
        if self.objective_matrix.nrows() != self.objective_vector.len() {
            return Err(QpError::DimensionMismatch(
                "objective matrix rows != objective vector length".into(),
            ));
        }
        if self.ineq_matrix.ncols() != s || self.eq_matrix.ncols() != s {
            return Err(QpError::DimensionMismatch(
                "constraint columns != decision dimension".into(),
            ));
        }
        if self.ineq_matrix.nrows() != self.ineq_bound.len() {
            return Err(QpError::DimensionMismatch(
                "inequality rows != bound length".into(),
            ));
        }
        if self.eq_matrix.nrows() != self.eq_rhs.len() {
            return Err(QpError::DimensionMismatch(
                "equality rows != rhs length".into(),
            ));
        }
        let finite = self.objective_matrix.iter().all(|v| v.is_finite())
            && self.objective_vector.iter().all(|v| v.is_finite())
            && self.ineq_matrix.iter().all(|v| v.is_finite())
            && self.ineq_bound.iter().all(|v| v.is_finite())
            && self.eq_matrix.iter().all(|v| v.is_finite())
            && self.eq_rhs.iter().all(|v| v.is_finite());
        if !finite {
            return Err(QpError::NonFinite);
        }
        Ok(())
    }
}

/// Solution of one QP or of a whole cascade.
#[derive(Debug, Clone)]
pub struct QpSolution {
    /// Minimiser.
    pub x: DVector<f64>,
    /// `|| A_k x - b_k ||` per level, in priority order.
    pub level_residuals: Vec<f64>,
    /// Worst scaled KKT residual (stationarity, feasibility, complementarity)
    /// observed at exit of the last solved level.
    pub kkt_residual: f64,
    /// Total interior point iterations spent.
    pub iterations: usize,
}

/// One task `weight * || A x - b ||^2` inside a soft-weighted level.
#[derive(Debug, Clone)]
pub struct WeightedTask {
    pub weight: f64,
    pub matrix: DMatrix<f64>,
    pub vector: DVector<f64>,
}

/// One priority level: minimise `|| matrix x - vector ||^2`.
#[derive(Debug, Clone)]
pub struct TaskLevel {
    pub matrix: DMatrix<f64>,
    pub vector: DVector<f64>,
}

/// Stacks weighted tasks into one level by scaling each block with
/// `sqrt(weight)`, which reproduces the weighted sum of squares exactly.
pub fn weighted_stack_level(tasks: &[WeightedTask]) -> Result<TaskLevel, QpError> {
    if tasks.is_empty() {
        return Err(QpError::DimensionMismatch("no tasks to stack".into()));
    }
    let dim = tasks[0].matrix.ncols();
    let mut rows = 0;
    for task in tasks {
        if task.matrix.ncols() != dim {
            return Err(QpError::DimensionMismatch(
                "stacked tasks disagree on decision dimension".into(),
            ));
        }
        if task.matrix.nrows() != task.vector.len() {
            return Err(QpError::DimensionMismatch(
                "task matrix rows != task vector length".into(),
            ));
        }
        if !(task.weight.is_finite() && task.weight >= 0.0) {
            return Err(QpError::NonFinite);
        }
        rows += task.matrix.nrows();
    }
    let mut matrix = DMatrix::zeros(rows, dim);
    let mut vector = DVector::zeros(rows);
    let mut at = 0;
    for task in tasks {
        let w = task.weight.sqrt();
        let n = task.matrix.nrows();
        matrix
            .view_mut((at, 0), (n, dim))
            .copy_from(&(&task.matrix * w));
        vector.rows_mut(at, n).copy_from(&(&task.vector * w));
        at += n;
    }
    Ok(TaskLevel { matrix, vector })
}

/// Inequality and equality constraints shared by every level of a cascade.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_bound: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
}

impl ConstraintSet {
    pub fn empty(dim: usize) -> Self {
        Self {
            ineq_matrix: DMatrix::zeros(0, dim),
            ineq_bound: DVector::zeros(0),
            eq_matrix: DMatrix::zeros(0, dim),
            eq_rhs: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.ineq_matrix.ncols()
    }

    pub fn push_ineq_row(&mut self, row: &DVector<f64>, bound: f64) {
        let n = self.ineq_matrix.nrows();
        let mut m = DMatrix::zeros(n + 1, self.dim());
        m.view_mut((0, 0), (n, self.dim())).copy_from(&self.ineq_matrix);
        m.row_mut(n).copy_from(&row.transpose());
        self.ineq_matrix = m;
        self.ineq_bound = self.ineq_bound.clone().insert_row(n, bound);
    }

    pub fn push_eq_row(&mut self, row: &DVector<f64>, rhs: f64) {
        let n = self.eq_matrix.nrows();
        let mut m = DMatrix::zeros(n + 1, self.dim());
        m.view_mut((0, 0), (n, self.dim())).copy_from(&self.eq_matrix);
        m.row_mut(n).copy_from(&row.transpose());
        self.eq_matrix = m;
        self.eq_rhs = self.eq_rhs.clone().insert_row(n, rhs);
    }

    /// Appends a whole block of inequality rows.
    pub fn append_ineq(&mut self, matrix: &DMatrix<f64>, bound: &DVector<f64>) {
        debug_assert_eq!(matrix.ncols(), self.dim());
        debug_assert_eq!(matrix.nrows(), bound.len());
        let n = self.ineq_matrix.nrows();
        let add = matrix.nrows();
        let mut m = DMatrix::zeros(n + add, self.dim());
        m.view_mut((0, 0), (n, self.dim())).copy_from(&self.ineq_matrix);
        m.view_mut((n, 0), (add, self.dim())).copy_from(matrix);
        self.ineq_matrix = m;
        let mut b = DVector::zeros(n + add);
        b.rows_mut(0, n).copy_from(&self.ineq_bound);
        b.rows_mut(n, add).copy_from(bound);
        self.ineq_bound = b;
    }

    /// Appends a whole block of equality rows.
    pub fn append_eq(&mut self, matrix: &DMatrix<f64>, rhs: &DVector<f64>) {
        debug_assert_eq!(matrix.ncols(), self.dim());
        debug_assert_eq!(matrix.nrows(), rhs.len());
        let n = self.eq_matrix.nrows();
        let add = matrix.nrows();
        let mut m = DMatrix::zeros(n + add, self.dim());
        m.view_mut((0, 0), (n, self.dim())).copy_from(&self.eq_matrix);
        m.view_mut((n, 0), (add, self.dim())).copy_from(matrix);
        self.eq_matrix = m;
        let mut r = DVector::zeros(n + add);
        r.rows_mut(0, n).copy_from(&self.eq_rhs);
        r.rows_mut(n, add).copy_from(rhs);
        self.eq_rhs = r;
    }
}

/// Ordered task levels (index 0 = highest priority) over a shared constraint
/// set and decision dimension.
#[derive(Debug, Clone)]
pub struct HierarchyStack {
    pub dim: usize,
    pub levels: Vec<TaskLevel>,
    pub constraints: ConstraintSet,
}

impl HierarchyStack {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            levels: Vec::new(),
            constraints: ConstraintSet::empty(dim),
        }
    }

    pub fn push_level(&mut self, level: TaskLevel) {
        self.levels.push(level);
    }
}

/// Solves one constrained least-squares QP to the given scaled KKT tolerance.
pub fn solve_qp(problem: &QpProblem, tolerance: f64) -> Result<QpSolution, QpError> {
    solve_qp_warm(problem, tolerance, DEFAULT_MAX_ITERATIONS, None)
}

/// As [`solve_qp`] with an explicit iteration budget and optional warm-start
/// guess for the minimiser (the guess seeds the interior point iterate; it
/// does not change the solution).
pub fn solve_qp_warm(
    problem: &QpProblem,
    tolerance: f64,
    max_iterations: usize,
    warm_start: Option<&DVector<f64>>,
) -> Result<QpSolution, QpError> {
    problem.validate()?;
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(QpError::DimensionMismatch("tolerance must be positive".into()));
    }
    let inner = ipm_solve(problem, tolerance, max_iterations, warm_start)?;
    let residual = (&problem.objective_matrix * &inner.x - &problem.objective_vector).norm();
    Ok(QpSolution {
        x: inner.x,
        level_residuals: vec![residual],
        kkt_residual: inner.kkt_residual,
        iterations: inner.iterations,
    })
}

/// Orthonormal basis of the nullspace of `m`, one basis vector per column.
///
/// The rowspace is taken from the singular vectors with singular values above
/// a relative cutoff, then completed to a full orthonormal set by Gram-Schmidt
/// over the coordinate directions. An empty `m` yields the identity.
fn nullspace_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("SVD with v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = 1e-10 * smax.max(1.0);
    let mut frame: Vec<DVector<f64>> = Vec::with_capacity(n);
    for (row, sv) in v_t.row_iter().zip(svd.singular_values.iter()) {
        if *sv > cutoff {
            frame.push(row.transpose());
        }
    }
    let rank = frame.len();
    for j in 0..n {
        if frame.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[j] = 1.0;
        for _ in 0..2 {
            for b in &frame {
                let p = b.dot(&v);
                v -= b * p;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            frame.push(v / norm);
        }
    }
    let null_count = frame.len() - rank;
    let mut basis = DMatrix::zeros(n, null_count);
    for (col, v) in frame[rank..].iter().enumerate() {
        basis.set_column(col, v);
    }
    basis
}

/// Minimum-norm solution of `E x = f` via the pseudoinverse; errors when the
/// system is inconsistent.
fn min_norm_solution(e: &DMatrix<f64>, f: &DVector<f64>) -> Result<DVector<f64>, QpError> {
    let svd = e.clone().svd(true, true);
    let x = svd
        .solve(f, 1e-12)
        .map_err(|_| QpError::IllConditioned)?;
    let residual = (e * &x - f).norm();
    if residual > 1e-8 * (1.0 + f.norm()) {
        return Err(QpError::Infeasible);
    }
    Ok(x)
}

/// Solves a strict-priority cascade by nullspace reduction. After level `k`
/// is solved, its rows `A_k` join the frozen set and level `k + 1` optimises
/// only over `x = x_k* + Z z` with `Z` spanning the frozen nullspace, which
/// pins every higher-priority residual exactly. Inequality rows orthogonal to
/// `Z` are constant on that subspace and already hold at `x_k*`, so they are
/// dropped; keeping them would hand the interior point solver constraints
/// with forced zero slack whenever a higher level saturates a bound.
pub fn solve_hierarchy(stack: &HierarchyStack, tolerance: f64) -> Result<QpSolution, QpError> {
    if stack.levels.is_empty() {
        return Err(QpError::DimensionMismatch("hierarchy has no levels".into()));
    }
    let dim = stack.dim;
    let ineq = &stack.constraints.ineq_matrix;
    let bound = &stack.constraints.ineq_bound;
    let mut frozen = stack.constraints.eq_matrix.clone();
    let mut x = if frozen.nrows() > 0 {
        min_norm_solution(&frozen, &stack.constraints.eq_rhs)?
    } else {
        DVector::zeros(dim)
    };
    let mut residuals = Vec::with_capacity(stack.levels.len());
    let mut iterations = 0;
    let mut kkt_residual = 0.0;

    for (index, level) in stack.levels.iter().enumerate() {
        let basis = nullspace_basis(&frozen);
        if basis.ncols() > 0 {
            let reduced_obj = &level.matrix * &basis;
            let reduced_target = &level.vector - &level.matrix * &x;
            let mut kept_rows = Vec::new();
            for i in 0..ineq.nrows() {
                let row = ineq.row(i);
                let reduced_row = row * &basis;
                if reduced_row.norm() > 1e-9 * (1.0 + row.norm()) {
                    kept_rows.push((reduced_row.transpose(), bound[i] - row.transpose().dot(&x)));
                }
            }
            let mut reduced_ineq = DMatrix::zeros(kept_rows.len(), basis.ncols());
            let mut reduced_bound = DVector::zeros(kept_rows.len());
            for (i, (row, b)) in kept_rows.iter().enumerate() {
                reduced_ineq.row_mut(i).copy_from(&row.transpose());
                reduced_bound[i] = *b;
            }
            let problem = QpProblem::new(reduced_obj, reduced_target)
                .with_inequalities(reduced_ineq, reduced_bound);
            let sol = solve_qp_warm(&problem, tolerance, DEFAULT_MAX_ITERATIONS, None).map_err(
                |source| QpError::LevelFailed {
                    level: index + 1,
                    source: Box::new(source),
                },
            )?;
            x += &basis * &sol.x;
            iterations += sol.iterations;
            kkt_residual = sol.kkt_residual;
        }
        residuals.push((&level.matrix * &x - &level.vector).norm());

        let is_last = index + 1 == stack.levels.len();
        if !is_last {
            let rows = frozen.nrows();
            let add = level.matrix.nrows();
            let mut m = DMatrix::zeros(rows + add, dim);
            m.view_mut((0, 0), (rows, dim)).copy_from(&frozen);
            m.view_mut((rows, 0), (add, dim)).copy_from(&level.matrix);
            frozen = m;
        }
    }

    Ok(QpSolution {
        x,
        level_residuals: residuals,
        kkt_residual,
        iterations,
    })
}

struct IpmSolution {
    x: DVector<f64>,
    kkt_residual: f64,
    iterations: usize,
}

fn inf_norm_v(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, e| acc.max(e.abs()))
}

fn inf_norm_m(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, e| acc.max(e.abs()))
}

fn ipm_solve(
    problem: &QpProblem,
    tolerance: f64,
    max_iterations: usize,
    warm_start: Option<&DVector<f64>>,
) -> Result<IpmSolution, QpError> {
    let s = problem.dim();
    let m = problem.ineq_matrix.nrows();
    let p = problem.eq_matrix.nrows();

    let a = &problem.objective_matrix;
    let b = &problem.objective_vector;
    let c = &problem.ineq_matrix;
    let d = &problem.ineq_bound;
    let e = &problem.eq_matrix;
    let f = &problem.eq_rhs;

    let h = a.tr_mul(a);
    let g = a.tr_mul(b);
    let sigma = STATIC_REG * (1.0 + inf_norm_m(&h));
    let delta = STATIC_REG * (1.0 + inf_norm_m(e));

    let g_scale = 1.0_f64.max(inf_norm_v(&g));
    let ineq_scale = 1.0_f64.max(inf_norm_v(d));
    let eq_scale = 1.0_f64.max(inf_norm_v(f));

    let mut x = match warm_start {
        Some(x0) if x0.len() == s && x0.iter().all(|v| v.is_finite()) => x0.clone(),
        _ => DVector::zeros(s),
    };

    // No inequalities: the KKT conditions are linear. One regularised solve
    // plus iterative refinement reaches machine-level residuals.
    if m == 0 {
        let n = s + p;
        let mut kkt = DMatrix::zeros(n, n);
        kkt.view_mut((0, 0), (s, s)).copy_from(&h);
        for i in 0..s {
            kkt[(i, i)] += sigma;
        }
        if p > 0 {
            kkt.view_mut((s, 0), (p, s)).copy_from(e);
            kkt.view_mut((0, s), (s, p)).copy_from(&e.transpose());
            for i in 0..p {
                kkt[(s + i, s + i)] = -delta;
            }
        }
        let mut rhs = DVector::zeros(n);
        rhs.rows_mut(0, s).copy_from(&g);
        if p > 0 {
            rhs.rows_mut(s, p).copy_from(f);
        }
        let lu = kkt.clone().lu();
        let mut sol = lu.solve(&rhs).ok_or(QpError::IllConditioned)?;
        for _ in 0..2 {
            let resid = &rhs - &kkt * &sol;
            if let Some(corr) = lu.solve(&resid) {
                sol += corr;
            }
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(QpError::IllConditioned);
        }
        x = sol.rows(0, s).into();
        let nu: DVector<f64> = if p > 0 { sol.rows(s, p).into() } else { DVector::zeros(0) };
        let r_dual = &h * &x - &g + e.tr_mul(&nu);
        let stat_scale = 1.0_f64.max(inf_norm_v(&(&h * &x))).max(g_scale);
        let dual_ratio = inf_norm_v(&r_dual) / stat_scale;
        let eq_ratio = if p > 0 {
            inf_norm_v(&(e * &x - f)) / eq_scale.max(inf_norm_v(&(e * &x)))
        } else {
            0.0
        };
        let kkt_residual = dual_ratio.max(eq_ratio);
        if eq_ratio > tolerance.sqrt() {
            return Err(QpError::Infeasible);
        }
        if kkt_residual > tolerance {
            return Err(QpError::IllConditioned);
        }
        return Ok(IpmSolution {
            x,
            kkt_residual,
            iterations: 1,
        });
    }

    let mut w = DVector::from_fn(m, |i, _| (d[i] - c.row(i).transpose().dot(&x)).max(1.0));
    let mut lambda = DVector::from_element(m, 1.0);
    let mut nu = DVector::zeros(p);

    let mut best_primal = f64::INFINITY;
    let mut stalled = 0usize;
    let mut best_worst = f64::INFINITY;
    let mut worst_stalled = 0usize;

    for iter in 0..max_iterations {
        let hx = &h * &x;
        let ct_lambda = c.tr_mul(&lambda);
        let et_nu = if p > 0 { e.tr_mul(&nu) } else { DVector::zeros(s) };
        let r_dual = &hx - &g + &ct_lambda + &et_nu;
        let r_ineq = c * &x + &w - d;
        let r_eq = if p > 0 { e * &x - f } else { DVector::zeros(0) };
        let mu = w.dot(&lambda) / m as f64;

        let stat_scale = 1.0_f64
            .max(inf_norm_v(&hx))
            .max(g_scale)
            .max(inf_norm_v(&ct_lambda))
            .max(inf_norm_v(&et_nu));
        let ineq_ratio = inf_norm_v(&r_ineq) / ineq_scale.max(inf_norm_v(&(c * &x))).max(inf_norm_v(&w));
        let eq_ratio = if p > 0 {
            inf_norm_v(&r_eq) / eq_scale.max(inf_norm_v(&(e * &x)))
        } else {
            0.0
        };
        let dual_ratio = inf_norm_v(&r_dual) / stat_scale;
        let comp_ratio = mu / g_scale;
        let worst = dual_ratio.max(ineq_ratio).max(eq_ratio).max(comp_ratio);

        if worst <= tolerance {
            return Ok(IpmSolution {
                x,
                kkt_residual: worst,
                iterations: iter + 1,
            });
        }

        let primal = ineq_ratio.max(eq_ratio);
        if primal < best_primal - 1e-14 {
            best_primal = primal;
            stalled = 0;
        } else {
            stalled += 1;
        }
        // Complementarity collapsed while the primal violation persists, or
        // the duals blew up without primal progress: no feasible point.
        let dual_norm = inf_norm_v(&lambda);
        if (comp_ratio <= tolerance && primal > 1e3 * tolerance && iter > 10)
            || (dual_norm > 1e12 && primal > 10.0 * tolerance)
            || (stalled > 50 && primal > tolerance.sqrt())
        {
            return Err(QpError::Infeasible);
        }
        // A converging run improves the KKT measure superlinearly near the
        // end; a long flat stretch means degeneracy, so fail fast instead of
        // grinding out the remaining budget.
        if worst < best_worst * (1.0 - 1e-2) {
            best_worst = worst;
            worst_stalled = 0;
        } else {
            worst_stalled += 1;
            if worst_stalled > 100 {
                break;
            }
        }

        // Condensed KKT matrix, refactored every iteration.
        let n = s + p;
        let mut kkt = DMatrix::zeros(n, n);
        {
            let mut msub = kkt.view_mut((0, 0), (s, s));
            msub.copy_from(&h);
        }
        for i in 0..m {
            let scale = lambda[i] / w[i];
            let row = c.row(i);
            for r in 0..s {
                let cr = row[r];
                if cr == 0.0 {
                    continue;
                }
                for q in 0..s {
                    kkt[(r, q)] += scale * cr * row[q];
                }
            }
        }
        for i in 0..s {
            kkt[(i, i)] += sigma;
        }
        if p > 0 {
            kkt.view_mut((s, 0), (p, s)).copy_from(e);
            kkt.view_mut((0, s), (s, p)).copy_from(&e.transpose());
            for i in 0..p {
                kkt[(s + i, s + i)] = -delta;
            }
        }
        let lu = kkt.lu();

        let solve_step = |r_c: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
            // rhs_x = -r_dual + C^T (r_c / w - (lambda/w) .* r_ineq)
            let mut mixed = DVector::zeros(m);
            for i in 0..m {
                mixed[i] = r_c[i] / w[i] - lambda[i] / w[i] * r_ineq[i];
            }
            let mut rhs = DVector::zeros(n);
            rhs.rows_mut(0, s).copy_from(&(-&r_dual + c.tr_mul(&mixed)));
            if p > 0 {
                rhs.rows_mut(s, p).copy_from(&(-&r_eq));
            }
            let sol = lu.solve(&rhs)?;
            if sol.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let dx: DVector<f64> = sol.rows(0, s).into();
            let dnu: DVector<f64> = if p > 0 { sol.rows(s, p).into() } else { DVector::zeros(0) };
            let dw = -&r_ineq - c * &dx;
            let mut dlambda = DVector::zeros(m);
            for i in 0..m {
                dlambda[i] = -(r_c[i] + lambda[i] * dw[i]) / w[i];
            }
            Some((dx, dw, dlambda, dnu))
        };

        // Predictor (affine scaling) step.
        let r_c_aff = DVector::from_fn(m, |i, _| lambda[i] * w[i]);
        let (_dx_aff, dw_aff, dl_aff, _) = solve_step(&r_c_aff).ok_or(QpError::IllConditioned)?;
        let alpha_p_aff = max_step(&w, &dw_aff);
        let alpha_d_aff = max_step(&lambda, &dl_aff);
        let mu_aff = {
            let mut acc = 0.0;
            for i in 0..m {
                acc += (w[i] + alpha_p_aff * dw_aff[i]) * (lambda[i] + alpha_d_aff * dl_aff[i]);
            }
            (acc / m as f64).max(0.0)
        };
        let centering = if mu > 0.0 {
            ((mu_aff / mu).powi(3)).clamp(1e-8, 1.0)
        } else {
            1e-8
        };

        // Corrector step with centering.
        let r_c = DVector::from_fn(m, |i, _| {
            lambda[i] * w[i] + dw_aff[i] * dl_aff[i] - centering * mu
        });
        let (dx, dw, dlambda, dnu) = solve_step(&r_c).ok_or(QpError::IllConditioned)?;
        let alpha_p = STEP_SCALE * max_step(&w, &dw);
        let alpha_d = STEP_SCALE * max_step(&lambda, &dlambda);
        let alpha_p = alpha_p.min(1.0);
        let alpha_d = alpha_d.min(1.0);

        x += &dx * alpha_p;
        w += &dw * alpha_p;
        lambda += &dlambda * alpha_d;
        if p > 0 {
            nu += &dnu * alpha_d;
        }
        for i in 0..m {
            w[i] = w[i].max(1e-300);
            lambda[i] = lambda[i].max(1e-300);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(QpError::IllConditioned);
        }
    }

    // Budget exhausted: classify by the remaining primal violation.
    let r_ineq = c * &x + &w - d;
    let primal = inf_norm_v(&r_ineq) / ineq_scale;
    let eq_viol = if p > 0 {
        inf_norm_v(&(e * &x - f)) / eq_scale
    } else {
        0.0
    };
    if primal.max(eq_viol) > tolerance.sqrt() {
        Err(QpError::Infeasible)
    } else {
        Err(QpError::MaxIterations)
    }
}

/// Largest step in (0, 1] keeping `v + alpha dv` strictly positive.
fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut alpha = 1.0_f64;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            alpha = alpha.min(-v[i] / dv[i]);
        }
    }
    alpha
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const TOL: f64 = 1e-8;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    fn vec(data: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(data)
    }

    #[test]
    fn identity_objective_recovers_target() {
        let p = QpProblem::new(DMatrix::identity(2, 2), vec(&[1.0, 2.0]));
        let sol = solve_qp(&p, TOL).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.x[1], 2.0, epsilon = 1e-8);
        assert!(sol.kkt_residual <= TOL);
    }

    #[test]
    fn active_bound_clamps_minimiser() {
        let p = QpProblem::new(DMatrix::identity(1, 1), vec(&[1.0]))
            .with_inequalities(mat(1, 1, &[1.0]), vec(&[0.5]));
        let sol = solve_qp(&p, TOL).unwrap();
        assert_abs_diff_eq!(sol.x[0], 0.5, epsilon = 1e-7);
    }

    #[test]
    fn equality_constrained_stationary_point() {
        // minimise (x1 + x2 - 2)^2 subject to x1 = x2 has minimiser (1, 1).
        let p = QpProblem::new(mat(1, 2, &[1.0, 1.0]), vec(&[2.0]))
            .with_equalities(mat(1, 2, &[1.0, -1.0]), vec(&[0.0]));
        let sol = solve_qp(&p, TOL).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn redundant_consistent_equalities_are_harmless() {
        let p = QpProblem::new(mat(1, 2, &[1.0, 1.0]), vec(&[2.0]))
            .with_equalities(mat(2, 2, &[1.0, -1.0, 2.0, -2.0]), vec(&[0.0, 0.0]));
        let sol = solve_qp(&p, TOL).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn contradictory_bounds_report_infeasible() {
        // x <= 0 and x >= 1 cannot hold together.
        let p = QpProblem::new(DMatrix::identity(1, 1), vec(&[0.0]))
            .with_inequalities(mat(2, 1, &[1.0, -1.0]), vec(&[0.0, -1.0]));
        match solve_qp(&p, TOL) {
            Err(QpError::Infeasible) => {}
            other => panic!("expected Infeasible, got {other:?}"),
        }
    }

    #[test]
    fn iteration_budget_is_honoured() {
        let p = QpProblem::new(DMatrix::identity(2, 2), vec(&[1.0, 2.0]))
            .with_inequalities(mat(1, 2, &[1.0, 1.0]), vec(&[1.0]));
        match solve_qp_warm(&p, TOL, 1, None) {
            Err(QpError::MaxIterations) => {}
            other => panic!("expected MaxIterations, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = QpProblem::new(mat(1, 2, &[1.0, 1.0]), vec(&[2.0]))
            .with_inequalities(mat(1, 3, &[1.0, 0.0, 0.0]), vec(&[1.0]));
        assert!(matches!(solve_qp(&p, TOL), Err(QpError::DimensionMismatch(_))));
    }

    #[test]
    fn weighted_stack_averages_conflicting_targets() {
        // weight 4 pulling to 0 and weight 1 pulling to 5 settle at 1.
        let tasks = [
            WeightedTask {
                weight: 4.0,
                matrix: DMatrix::identity(1, 1),
                vector: vec(&[0.0]),
            },
            WeightedTask {
                weight: 1.0,
                matrix: DMatrix::identity(1, 1),
                vector: vec(&[5.0]),
            },
        ];
        let level = weighted_stack_level(&tasks).unwrap();
        let sol = solve_qp(&QpProblem::new(level.matrix, level.vector), TOL).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn weighted_stack_of_identical_tasks_keeps_minimiser() {
        let tasks = [
            WeightedTask {
                weight: 100.0,
                matrix: DMatrix::identity(2, 2),
                vector: vec(&[3.0, -1.0]),
            },
            WeightedTask {
                weight: 0.001,
                matrix: DMatrix::identity(2, 2),
                vector: vec(&[3.0, -1.0]),
            },
        ];
        let level = weighted_stack_level(&tasks).unwrap();
        let sol = solve_qp(&QpProblem::new(level.matrix, level.vector), TOL).unwrap();
        assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.x[1], -1.0, epsilon = 1e-7);
    }

    #[test]
    fn hierarchy_solves_orthogonal_levels_exactly() {
        let mut stack = HierarchyStack::new(2);
        stack.push_level(TaskLevel {
            matrix: mat(1, 2, &[1.0, 0.0]),
            vector: vec(&[3.0]),
        });
        stack.push_level(TaskLevel {
            matrix: mat(1, 2, &[0.0, 1.0]),
            vector: vec(&[5.0]),
        });
        let sol = solve_hierarchy(&stack, TOL).unwrap();
        assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.x[1], 5.0, epsilon = 1e-6);
        assert!(sol.level_residuals.iter().all(|r| *r < 1e-6));
    }

    #[test]
    fn hierarchy_preserves_high_priority_residual_under_conflict() {
        let mut stack = HierarchyStack::new(2);
        stack.push_level(TaskLevel {
            matrix: mat(1, 2, &[1.0, 0.0]),
            vector: vec(&[3.0]),
        });
        stack.push_level(TaskLevel {
            matrix: mat(1, 2, &[1.0, 0.0]),
            vector: vec(&[0.0]),
        });
        let sol = solve_hierarchy(&stack, TOL).unwrap();
        assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.level_residuals[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.level_residuals[1], 3.0, epsilon = 1e-6);
    }

    #[test]
    fn hierarchy_failure_reports_level_index() {
        let mut stack = HierarchyStack::new(1);
        stack.constraints.append_ineq(&mat(2, 1, &[1.0, -1.0]), &vec(&[0.0, -1.0]));
        stack.push_level(TaskLevel {
            matrix: DMatrix::identity(1, 1),
            vector: vec(&[0.0]),
        });
        match solve_hierarchy(&stack, TOL) {
            Err(QpError::LevelFailed { level: 1, .. }) => {}
            other => panic!("expected LevelFailed at level 1, got {other:?}"),
        }
    }

    #[test]
    fn rank_deficient_objective_returns_minimum_norm_minimiser() {
        // Only x1 is determined; the regularised solve leaves x2 at zero.
        let p = QpProblem::new(mat(1, 2, &[1.0, 0.0]), vec(&[3.0]));
        let sol = solve_qp(&p, TOL).unwrap();
        assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.x[1], 0.0, epsilon = 1e-6);
    }
}
