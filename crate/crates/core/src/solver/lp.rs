//! Dense bounded-variable two-phase primal simplex.
//!
//! Small and deterministic: explicit basis inverse, Dantzig pricing with a
//! permanent switch to Bland's rule after too many degenerate pivots,
//! periodic refactorization. Rows are `a^T w (<=|=|>=) b` over structural
//! variables with finite boxes; slacks carry the row sense, artificials give
//! the phase-1 start.

use crate::model::Sense;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

const DEGENERATE_STEP: f64 = 1e-10;
const RATIO_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 50;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpProblem {
    /// Minimized objective over the structural variables.
    pub objective: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub rows: Vec<LpRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    /// Structural variable values.
    pub x: Vec<f64>,
    /// Row multipliers at the final basis.
    pub duals: Vec<f64>,
    /// Reduced costs of the structural variables.
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum At {
    Lower,
    Upper,
    Basic,
}

struct Simplex {
    n_struct: usize,
    m: usize,
    /// Row-major structural matrix.
    a: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    /// Bounds for every column (structurals, slacks, artificials).
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    /// Artificial columns as (row, sign).
    artificials: Vec<(usize, f64)>,
    state: Vec<At>,
    basis: Vec<usize>,
    binv: Vec<Vec<f64>>,
    xb: Vec<f64>,
    pivot_tol: f64,
    bland: bool,
    degenerate_pivots: usize,
    iterations: usize,
    max_iterations: usize,
}

impl Simplex {
    fn ncols(&self) -> usize {
        self.n_struct + self.m + self.artificials.len()
    }

    /// Dense column of variable `j` in the row space.
    fn column(&self, j: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.m, 0.0);
        if j < self.n_struct {
            for i in 0..self.m {
                out[i] = self.a[i][j];
            }
        } else if j < self.n_struct + self.m {
            out[j - self.n_struct] = 1.0;
        } else {
            let (row, sign) = self.artificials[j - self.n_struct - self.m];
            out[row] = sign;
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            At::Lower => self.lower[j],
            At::Upper => self.upper[j],
            At::Basic => unreachable!("basic variable has no bound value"),
        }
    }

    /// Recomputes the basis inverse and basic values from scratch.
    fn refactorize(&mut self) -> Result<()> {
        let m = self.m;
        let mut mat = vec![vec![0.0; m]; m];
        let mut col = Vec::new();
        for (k, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for i in 0..m {
                mat[i][k] = col[i];
            }
        }
        // Gauss-Jordan inversion with partial pivoting.
        let mut inv = vec![vec![0.0; m]; m];
        for (i, row) in inv.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for c in 0..m {
            let mut piv = c;
            for r in c + 1..m {
                if mat[r][c].abs() > mat[piv][c].abs() {
                    piv = r;
                }
            }
            if mat[piv][c].abs() <= self.pivot_tol {
                return Err(Error::Solver("singular basis during refactorization".into()));
            }
            mat.swap(c, piv);
            inv.swap(c, piv);
            let scale = mat[c][c];
            for k in 0..m {
                mat[c][k] /= scale;
                inv[c][k] /= scale;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let factor = mat[r][c];
                if factor == 0.0 {
                    continue;
                }
                for k in 0..m {
                    mat[r][k] -= factor * mat[c][k];
                    inv[r][k] -= factor * inv[c][k];
                }
            }
        }
        self.binv = inv;
        self.recompute_xb();
        Ok(())
    }

    fn recompute_xb(&mut self) {
        // xb = B^-1 (rhs - N w_N)
        let m = self.m;
        let mut resid = self.rhs.clone();
        let mut col = Vec::new();
        for j in 0..self.ncols() {
            if self.state[j] == At::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            if v == 0.0 {
                continue;
            }
            self.column(j, &mut col);
            for i in 0..m {
                resid[i] -= col[i] * v;
            }
        }
        let mut xb = vec![0.0; m];
        for i in 0..m {
            let mut acc = 0.0;
            for k in 0..m {
                acc += self.binv[i][k] * resid[k];
            }
            xb[i] = acc;
        }
        self.xb = xb;
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for k in 0..m {
            let cb = self.cost[self.basis[k]];
            if cb == 0.0 {
                continue;
            }
            for i in 0..m {
                y[i] += cb * self.binv[k][i];
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        let mut d = self.cost[j];
        if j < self.n_struct {
            for i in 0..self.m {
                if y[i] != 0.0 {
                    d -= y[i] * self.a[i][j];
                }
            }
        } else if j < self.n_struct + self.m {
            d -= y[j - self.n_struct];
        } else {
            let (row, sign) = self.artificials[j - self.n_struct - self.m];
            d -= y[row] * sign;
        }
        d
    }

    /// Runs the simplex on the current costs until optimality.
    fn optimize(&mut self) -> Result<LpStatus> {
        let mut col = Vec::new();
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(Error::Solver(format!(
                    "simplex iteration limit {} reached",
                    self.max_iterations
                )));
            }
            if self.iterations.is_multiple_of(REFACTOR_EVERY) {
                self.refactorize()?;
            }

            let y = self.duals();

            // Entering variable.
            let mut entering: Option<(usize, f64, f64)> = None; // (col, dir, score)
            for j in 0..self.ncols() {
                if self.state[j] == At::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let d = self.reduced_cost(j, &y);
                let (eligible, dir) = match self.state[j] {
                    At::Lower => (d < -self.pivot_tol, 1.0),
                    At::Upper => (d > self.pivot_tol, -1.0),
                    At::Basic => unreachable!(),
                };
                if !eligible {
                    continue;
                }
                if self.bland {
                    entering = Some((j, dir, d.abs()));
                    break;
                }
                match entering {
                    Some((_, _, best)) if d.abs() <= best => {}
                    _ => entering = Some((j, dir, d.abs())),
                }
            }
            let Some((e, dir, _)) = entering else {
                return Ok(LpStatus::Optimal);
            };

            // Basic direction: xb changes by -dir * B^-1 A_e per unit step.
            self.column(e, &mut col);
            let mut delta = vec![0.0; self.m];
            for i in 0..self.m {
                let mut acc = 0.0;
                for k in 0..self.m {
                    acc += self.binv[i][k] * col[k];
                }
                delta[i] = -dir * acc;
            }

            // Two-pass ratio test. Pass 1 finds the step limit against
            // bounds relaxed by a feasibility window; pass 2 picks, among
            // rows whose exact ratio fits under the limit, the one with the
            // largest pivot element. Near-degenerate ties then pivot on a
            // stable element instead of an arbitrary tiny one, at the price
            // of bound violations no larger than the window.
            let own_range = self.upper[e] - self.lower[e];
            let mut t_limit = own_range;
            for i in 0..self.m {
                let b = self.basis[i];
                if delta[i] > self.pivot_tol {
                    t_limit = t_limit.min((self.upper[b] - self.xb[i] + RATIO_TOL) / delta[i]);
                } else if delta[i] < -self.pivot_tol {
                    t_limit = t_limit.min((self.lower[b] - self.xb[i] - RATIO_TOL) / delta[i]);
                }
            }
            if t_limit.is_infinite() {
                return Ok(LpStatus::Unbounded);
            }

            // (basis position, bound hit, |pivot|, exact ratio)
            let mut leave: Option<(usize, At, f64, f64)> = None;
            let mut fallback: Option<(usize, At, f64, f64)> = None;
            for i in 0..self.m {
                let b = self.basis[i];
                let (t, hit) = if delta[i] > self.pivot_tol {
                    ((self.upper[b] - self.xb[i]) / delta[i], At::Upper)
                } else if delta[i] < -self.pivot_tol {
                    ((self.lower[b] - self.xb[i]) / delta[i], At::Lower)
                } else {
                    continue;
                };
                let mag = delta[i].abs();
                let better = |prev: &Option<(usize, At, f64, f64)>, by_ratio: bool| match prev {
                    None => true,
                    Some((pi, _, pmag, pt)) => {
                        if by_ratio {
                            t < pt - 1e-15 || (t <= pt + 1e-15 && mag > *pmag)
                        } else if self.bland {
                            b < self.basis[*pi]
                        } else {
                            mag > *pmag || (mag == *pmag && b < self.basis[*pi])
                        }
                    }
                };
                if t <= t_limit && better(&leave, false) {
                    leave = Some((i, hit, mag, t));
                }
                if better(&fallback, true) {
                    fallback = Some((i, hit, mag, t));
                }
            }
            // All exact ratios may sit just above the relaxed limit; fall
            // back to the smallest exact ratio then.
            if leave.is_none() && t_limit < own_range {
                leave = fallback;
            }

            let t_step = match &leave {
                Some((_, _, _, t)) => t.max(0.0),
                None => own_range,
            };
            if t_step <= DEGENERATE_STEP {
                self.degenerate_pivots += 1;
                if !self.bland && self.degenerate_pivots > 10 * (self.m + self.ncols()) {
                    self.bland = true;
                }
            }

            match leave {
                None => {
                    // Bound flip: entering runs to its other bound.
                    for i in 0..self.m {
                        self.xb[i] += t_step * delta[i];
                    }
                    self.state[e] = match self.state[e] {
                        At::Lower => At::Upper,
                        At::Upper => At::Lower,
                        At::Basic => unreachable!(),
                    };
                }
                Some((r, hit, _, _)) => {
                    let leaving = self.basis[r];
                    let entering_value = self.nonbasic_value(e) + dir * t_step;
                    for i in 0..self.m {
                        self.xb[i] += t_step * delta[i];
                    }
                    self.xb[r] = entering_value;

                    // Update the inverse: pivot on (r, e).
                    let mut be = vec![0.0; self.m];
                    for i in 0..self.m {
                        let mut acc = 0.0;
                        for k in 0..self.m {
                            acc += self.binv[i][k] * col[k];
                        }
                        be[i] = acc;
                    }
                    let piv = be[r];
                    if piv.abs() <= self.pivot_tol {
                        // Numerical trouble; rebuild and retry from scratch.
                        self.refactorize()?;
                        continue;
                    }
                    let pivot_row: Vec<f64> = self.binv[r].iter().map(|v| v / piv).collect();
                    for i in 0..self.m {
                        if i == r {
                            continue;
                        }
                        let factor = be[i];
                        if factor == 0.0 {
                            continue;
                        }
                        for k in 0..self.m {
                            self.binv[i][k] -= factor * pivot_row[k];
                        }
                    }
                    self.binv[r] = pivot_row;

                    self.basis[r] = e;
                    self.state[e] = At::Basic;
                    self.state[leaving] = hit;
                }
            }
        }
    }

    fn structural_values(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_struct];
        for j in 0..self.n_struct {
            if self.state[j] != At::Basic {
                x[j] = self.nonbasic_value(j);
            }
        }
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                x[b] = self.xb[i];
            }
        }
        x
    }
}

/// Solves the LP. `Err` is reserved for numerical breakdown; ordinary
/// infeasibility and unboundedness come back as statuses.
pub fn solve_lp(problem: &LpProblem, pivot_tol: f64) -> Result<LpSolution> {
    let n = problem.objective.len();
    let m = problem.rows.len();
    if problem.lb.len() != n || problem.ub.len() != n {
        return Err(Error::Argument("bound length mismatch".into()));
    }
    for row in &problem.rows {
        if row.coeffs.len() != n {
            return Err(Error::Argument("row length mismatch".into()));
        }
    }
    for j in 0..n {
        if !problem.lb[j].is_finite() || !problem.ub[j].is_finite() {
            return Err(Error::Argument("structural bounds must be finite".into()));
        }
        if problem.lb[j] > problem.ub[j] + 1e-12 {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                value: f64::NAN,
                x: vec![],
                duals: vec![],
                reduced_costs: vec![],
                iterations: 0,
            });
        }
    }

    // Assemble columns: structurals, slacks, then artificials as needed.
    let mut lower = problem.lb.clone();
    let mut upper = problem.ub.clone();
    let mut a = vec![vec![0.0; n]; m];
    let mut rhs = vec![0.0; m];
    for (i, row) in problem.rows.iter().enumerate() {
        a[i].copy_from_slice(&row.coeffs);
        rhs[i] = row.rhs;
        let (sl, su) = match row.sense {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (0.0, 0.0),
        };
        lower.push(sl);
        upper.push(su);
    }

    let mut state = vec![At::Lower; n + m];
    let mut basis = Vec::with_capacity(m);
    let mut artificials: Vec<(usize, f64)> = Vec::new();

    // Slack start: structurals at lower bound, slack values from the rows.
    let mut art_costs = Vec::new();
    for i in 0..m {
        let mut s_raw = rhs[i];
        for j in 0..n {
            s_raw -= a[i][j] * lower[j];
        }
        let (sl, su) = (lower[n + i], upper[n + i]);
        if s_raw >= sl && s_raw <= su {
            basis.push(n + i);
            state[n + i] = At::Basic;
        } else {
            let clamp = if s_raw < sl { sl } else { su };
            state[n + i] = if s_raw < sl { At::Lower } else { At::Upper };
            let sign = if s_raw - clamp >= 0.0 { 1.0 } else { -1.0 };
            artificials.push((i, sign));
            art_costs.push(1.0);
            basis.push(n + m + artificials.len() - 1);
        }
    }
    for _ in &artificials {
        lower.push(0.0);
        upper.push(f64::INFINITY);
        state.push(At::Basic);
    }

    let mut cost = vec![0.0; n + m];
    cost.extend_from_slice(&art_costs);

    let mut spx = Simplex {
        n_struct: n,
        m,
        a,
        rhs,
        lower,
        upper,
        cost,
        artificials,
        state,
        basis,
        binv: vec![],
        xb: vec![],
        pivot_tol,
        bland: false,
        degenerate_pivots: 0,
        iterations: 0,
        max_iterations: 20_000 + 200 * (n + 2 * m),
    };
    spx.refactorize()?;

    // Phase 1.
    if !spx.artificials.is_empty() {
        match spx.optimize()? {
            LpStatus::Optimal => {}
            LpStatus::Unbounded => {
                return Err(Error::Solver("phase-1 objective unbounded".into()))
            }
            LpStatus::Infeasible => unreachable!(),
        }
        let infeasibility: f64 = spx
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= n + m)
            .map(|(i, _)| spx.xb[i].abs())
            .sum();
        if infeasibility > 1e-7 {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                value: f64::NAN,
                x: vec![],
                duals: vec![],
                reduced_costs: vec![],
                iterations: spx.iterations,
            });
        }
        // Freeze artificials at zero for phase 2.
        for k in 0..spx.artificials.len() {
            let j = n + m + k;
            spx.lower[j] = 0.0;
            spx.upper[j] = 0.0;
            spx.cost[j] = 0.0;
            if spx.state[j] != At::Basic {
                spx.state[j] = At::Lower;
            }
        }
    }

    // Phase 2.
    spx.cost[..n].copy_from_slice(&problem.objective);
    for j in n..n + m {
        spx.cost[j] = 0.0;
    }
    spx.degenerate_pivots = 0;
    let status = spx.optimize()?;
    if status == LpStatus::Unbounded {
        return Ok(LpSolution {
            status,
            value: f64::NEG_INFINITY,
            x: vec![],
            duals: vec![],
            reduced_costs: vec![],
            iterations: spx.iterations,
        });
    }

    spx.refactorize()?;
    let x = spx.structural_values();

    // An Optimal claim must be backed by a feasible point.
    let mut worst = 0.0_f64;
    for j in 0..n {
        worst = worst.max(problem.lb[j] - x[j]).max(x[j] - problem.ub[j]);
    }
    for row in &problem.rows {
        let act: f64 = row.coeffs.iter().zip(&x).map(|(a, w)| a * w).sum();
        let scale = 1.0 + row.rhs.abs();
        worst = worst.max(match row.sense {
            Sense::Le => (act - row.rhs) / scale,
            Sense::Ge => (row.rhs - act) / scale,
            Sense::Eq => (act - row.rhs).abs() / scale,
        });
    }
    if worst > 5e-7 {
        return Err(Error::Solver(format!(
            "claimed optimum violates the constraints by {worst:.3e}"
        )));
    }

    let value = problem
        .objective
        .iter()
        .zip(&x)
        .map(|(c, v)| c * v)
        .sum::<f64>();
    let y = spx.duals();
    let reduced: Vec<f64> = (0..n).map(|j| spx.reduced_cost(j, &y)).collect();

    Ok(LpSolution {
        status: LpStatus::Optimal,
        value,
        x,
        duals: y,
        reduced_costs: reduced,
        iterations: spx.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn le(coeffs: Vec<f64>, rhs: f64) -> LpRow {
        LpRow {
            coeffs,
            sense: Sense::Le,
            rhs,
        }
    }

    #[test]
    fn tiny_lp() {
        // min -w1 - w2  s.t. w1 + w2 <= 1, 0 <= w <= 10.
        let p = LpProblem {
            objective: vec![-1.0, -1.0],
            lb: vec![0.0, 0.0],
            ub: vec![10.0, 10.0],
            rows: vec![le(vec![1.0, 1.0], 1.0)],
        };
        let sol = solve_lp(&p, 1e-9).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_relative_eq!(sol.value, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_bounds_and_rows() {
        // w1 <= -1 and w1 >= 0 expressed as rows.
        let p = LpProblem {
            objective: vec![0.0],
            lb: vec![-10.0],
            ub: vec![10.0],
            rows: vec![
                le(vec![1.0], -1.0),
                LpRow {
                    coeffs: vec![1.0],
                    sense: Sense::Ge,
                    rhs: 0.0,
                },
            ],
        };
        let sol = solve_lp(&p, 1e-9).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);

        // Same conflict as a crossed box.
        let p = LpProblem {
            objective: vec![0.0],
            lb: vec![0.0],
            ub: vec![-1.0],
            rows: vec![],
        };
        assert_eq!(solve_lp(&p, 1e-9).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn equality_rows_hold() {
        // min w1 s.t. w1 + w2 = 3, w2 <= 2.
        let p = LpProblem {
            objective: vec![1.0, 0.0],
            lb: vec![0.0, 0.0],
            ub: vec![10.0, 2.0],
            rows: vec![LpRow {
                coeffs: vec![1.0, 1.0],
                sense: Sense::Eq,
                rhs: 3.0,
            }],
        };
        let sol = solve_lp(&p, 1e-9).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_relative_eq!(sol.value, 1.0, epsilon = 1e-9);
        assert_relative_eq!(sol.x[1], 2.0, epsilon = 1e-9);
    }

    /// Random boxes and rows: the returned point must be feasible, and the
    /// dual certificate must close the gap (weak duality check).
    #[test]
    fn random_lps_pass_duality_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..50 {
            let n = rng.gen_range(3..=20);
            let m = rng.gen_range(2..=10);
            let p = LpProblem {
                objective: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                lb: vec![0.0; n],
                ub: (0..n).map(|_| rng.gen_range(0.5..4.0)).collect(),
                rows: (0..m)
                    .map(|_| {
                        let coeffs: Vec<f64> =
                            (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
                        le(coeffs, rng.gen_range(0.5..6.0))
                    })
                    .collect(),
            };
            let sol = solve_lp(&p, 1e-9).unwrap();
            if sol.status != LpStatus::Optimal {
                continue;
            }
            // Primal feasibility.
            for (row, &d) in p.rows.iter().zip(&sol.duals) {
                let act: f64 = row.coeffs.iter().zip(&sol.x).map(|(a, x)| a * x).sum();
                assert!(act <= row.rhs + 1e-7, "trial {trial}: row violated");
                // Complementary slackness: only binding rows carry weight.
                if d.abs() > 1e-6 {
                    assert!(
                        (act - row.rhs).abs() <= 1e-6,
                        "trial {trial}: slack row with multiplier {d}"
                    );
                }
            }
            for j in 0..n {
                assert!(sol.x[j] >= p.lb[j] - 1e-9 && sol.x[j] <= p.ub[j] + 1e-9);
            }
            // Dual objective (for a <= system with boxes):
            // sum_i y_i b_i + sum_j min over the box of the residual cost.
            let mut dual_val = 0.0;
            for (row, &y) in p.rows.iter().zip(&sol.duals) {
                assert!(y <= 1e-9, "trial {trial}: wrong multiplier sign {y}");
                dual_val += y * row.rhs;
            }
            for j in 0..n {
                let mut resid = p.objective[j];
                for (row, &y) in p.rows.iter().zip(&sol.duals) {
                    resid -= y * row.coeffs[j];
                }
                dual_val += if resid >= 0.0 {
                    resid * p.lb[j]
                } else {
                    resid * p.ub[j]
                };
            }
            assert!(
                (dual_val - sol.value).abs() <= 1e-7 * (1.0 + sol.value.abs()),
                "trial {trial}: duality gap {} vs {}",
                dual_val,
                sol.value
            );
        }
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Many redundant rows through the same vertex.
        let p = LpProblem {
            objective: vec![-1.0, -1.0, -1.0],
            lb: vec![0.0; 3],
            ub: vec![5.0; 3],
            rows: vec![
                le(vec![1.0, 1.0, 0.0], 1.0),
                le(vec![1.0, 0.0, 1.0], 1.0),
                le(vec![0.0, 1.0, 1.0], 1.0),
                le(vec![1.0, 1.0, 1.0], 1.5),
                le(vec![2.0, 2.0, 2.0], 3.0),
            ],
        };
        let sol = solve_lp(&p, 1e-9).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_relative_eq!(sol.value, -1.5, epsilon = 1e-9);
    }
}
