//! Bounded-variable primal simplex on a dense tableau.
//!
//! Every row gets a slack column whose bounds encode the relation (`<=`:
//! `[0, inf)`, `>=`: `(-inf, 0]`, `=`: `[0, 0]`), so the working system is
//! `A x + s = b`. Rows whose slack cannot absorb the initial residual receive an
//! artificial column and phase 1 drives those to zero. Nonbasic variables sit
//! at a finite bound, or at zero when free.

use super::{LinearProgram, LpError, LpSolution, LpStatus, Relation};

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
    pub bland_after: usize,
    /// Primal feasibility tolerance.
    pub feasibility_tol: f64,
    /// Reduced-cost tolerance for optimality.
    pub optimality_tol: f64,
    /// Smallest pivot magnitude accepted in the ratio test.
    pub pivot_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 200_000,
            bland_after: 50,
            feasibility_tol: 1e-7,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
        }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_with(lp, &SolverOptions::default())
}

pub fn solve_with(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let mut tab = Tableau::new(lp);
    let n = lp.num_vars();

    if tab.num_artificial > 0 {
        let mut cost = vec![0.0; tab.ncols];
        for c in &mut cost[tab.first_artificial..] {
            *c = -1.0;
        }
        tab.set_cost(cost);
        tab.run(opts)?;
        tab.refresh_values();
        let residual: f64 = (tab.first_artificial..tab.ncols).map(|j| tab.value[j]).sum();
        if residual > opts.feasibility_tol {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                values: tab.value[..n].to_vec(),
                objective_value: f64::NAN,
            });
        }
        for j in tab.first_artificial..tab.ncols {
            tab.upper[j] = 0.0;
            if tab.row_of[j].is_none() {
                tab.value[j] = 0.0;
            }
        }
    }

    let mut cost = vec![0.0; tab.ncols];
    cost[..n].copy_from_slice(lp.objective());
    tab.set_cost(cost);
    let outcome = tab.run(opts)?;
    tab.refresh_values();

    let mut values = tab.value[..n].to_vec();
    for (v, &(lo, hi)) in values.iter_mut().zip(lp.bounds()) {
        *v = v.clamp(lo, hi);
    }
    let status = match outcome {
        Phase::Optimal => LpStatus::Optimal,
        Phase::Unbounded => LpStatus::Unbounded,
    };
    let objective_value = match status {
        LpStatus::Unbounded => f64::INFINITY,
        _ => lp.objective_value(&values),
    };
    Ok(LpSolution {
        status,
        values,
        objective_value,
    })
}

enum Phase {
    Optimal,
    Unbounded,
}

struct Tableau {
    m: usize,
    ncols: usize,
    first_slack: usize,
    first_artificial: usize,
    num_artificial: usize,
    /// Row-major `m x ncols`, holding `B^-1 [A | I | art]`.
    t: Vec<f64>,
    rhs: Vec<f64>,
    /// Original columns of the structural part, per row (sparse).
    rows: Vec<Vec<(usize, f64)>>,
    /// Row and sign of each artificial column.
    artificial_rows: Vec<(usize, f64)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    value: Vec<f64>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<Option<usize>>,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.num_constraints();
        let first_slack = n;

        let mut lower = Vec::with_capacity(n + 2 * m);
        let mut upper = Vec::with_capacity(n + 2 * m);
        let mut value = Vec::with_capacity(n + 2 * m);
        for &(lo, hi) in lp.bounds() {
            lower.push(lo);
            upper.push(hi);
            value.push(if lo.is_finite() {
                lo
            } else if hi.is_finite() {
                hi
            } else {
                0.0
            });
        }

        let rows: Vec<Vec<(usize, f64)>> = lp.constraints().iter().map(|c| c.coeffs.clone()).collect();
        let rhs: Vec<f64> = lp.constraints().iter().map(|c| c.rhs).collect();

        // Decide, row by row, whether the slack can start basic.
        let mut artificial_rows = Vec::new();
        let mut slack_basic = vec![true; m];
        for (i, c) in lp.constraints().iter().enumerate() {
            let (lo, hi) = match c.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            let residual = c.rhs - c.activity(&value[..n]);
            lower.push(lo);
            upper.push(hi);
            if residual >= lo && residual <= hi {
                value.push(residual);
            } else {
                let at = residual.clamp(lo, hi);
                value.push(at);
                slack_basic[i] = false;
                let excess = residual - at;
                artificial_rows.push((i, excess.signum()));
            }
        }
        let first_artificial = n + m;
        let num_artificial = artificial_rows.len();
        for &(i, _) in &artificial_rows {
            lower.push(0.0);
            upper.push(f64::INFINITY);
            let at = value[first_slack + i];
            let residual = rhs[i] - lp.constraints()[i].activity(&value[..n]);
            value.push((residual - at).abs());
        }
        let ncols = first_artificial + num_artificial;

        // B is diagonal (+1 for slacks, ±1 for artificials), so B^-1 A is A
        // with artificial rows sign-flipped where needed.
        let mut t = vec![0.0; m * ncols];
        let mut basis = vec![0; m];
        let mut row_of = vec![None; ncols];
        let mut row_sign = vec![1.0; m];
        for (k, &(i, sign)) in artificial_rows.iter().enumerate() {
            row_sign[i] = sign;
            basis[i] = first_artificial + k;
            t[i * ncols + first_artificial + k] = 1.0;
        }
        for i in 0..m {
            let s = row_sign[i];
            let base = i * ncols;
            for &(j, a) in &rows[i] {
                t[base + j] = s * a;
            }
            t[base + first_slack + i] = s;
            if slack_basic[i] {
                basis[i] = first_slack + i;
            }
        }
        for (i, &b) in basis.iter().enumerate() {
            row_of[b] = Some(i);
        }

        Tableau {
            m,
            ncols,
            first_slack,
            first_artificial,
            num_artificial,
            t,
            rhs,
            rows,
            artificial_rows,
            lower,
            upper,
            value,
            cost: vec![0.0; ncols],
            reduced: vec![0.0; ncols],
            basis,
            row_of,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.ncols + j]
    }

    fn set_cost(&mut self, cost: Vec<f64>) {
        self.cost = cost;
        self.recompute_reduced_costs();
    }

    fn recompute_reduced_costs(&mut self) {
        let mut d = self.cost.clone();
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
                for (dj, &tij) in d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        for &b in &self.basis {
            d[b] = 0.0;
        }
        self.reduced = d;
    }

    /// Recomputes basic values from the nonbasic ones: `x_B = B^-1 (b - N x_N)`.
    /// The slack block of the tableau is `B^-1`.
    fn refresh_values(&mut self) {
        let mut residual = self.rhs.clone();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                if self.row_of[j].is_none() {
                    residual[i] -= a * self.value[j];
                }
            }
            let s = self.first_slack + i;
            if self.row_of[s].is_none() {
                residual[i] -= self.value[s];
            }
        }
        for (k, &(i, sign)) in self.artificial_rows.iter().enumerate() {
            let j = self.first_artificial + k;
            if self.row_of[j].is_none() {
                residual[i] -= sign * self.value[j];
            }
        }
        for r in 0..self.m {
            let base = r * self.ncols + self.first_slack;
            let binv = &self.t[base..base + self.m];
            let v: f64 = binv.iter().zip(&residual).map(|(a, b)| a * b).sum();
            self.value[self.basis[r]] = v;
        }
    }

    /// Picks an entering column and its direction (+1 increase, -1 decrease).
    fn price(&self, bland: bool, tol: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols {
            if self.row_of[j].is_some() || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced[j];
            let dir = if d > tol && self.value[j] < self.upper[j] {
                1.0
            } else if d < -tol && self.value[j] > self.lower[j] {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, score)| d.abs() > score) {
                best = Some((j, dir, d.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn run(&mut self, opts: &SolverOptions) -> Result<Phase, LpError> {
        let mut iterations = 0;
        let mut degenerate = 0;
        let mut rechecked = false;
        loop {
            let bland = degenerate >= opts.bland_after;
            let Some((q, dir)) = self.price(bland, opts.optimality_tol) else {
                // Confirm against freshly computed reduced costs before stopping.
                if rechecked {
                    return Ok(Phase::Optimal);
                }
                self.recompute_reduced_costs();
                rechecked = true;
                continue;
            };
            rechecked = false;
            iterations += 1;
            if iterations > opts.max_iterations {
                return Err(LpError::IterationLimit(opts.max_iterations));
            }

            // Ratio test. Ties prefer the larger pivot, or the lower basis
            // index under Bland's rule; a tie with the bound flip keeps the flip.
            let mut step = self.upper[q] - self.lower[q];
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let alpha = dir * self.at(i, q);
                if alpha.abs() <= opts.pivot_tol {
                    continue;
                }
                let b = self.basis[i];
                let limit = if alpha > 0.0 {
                    if self.lower[b] == f64::NEG_INFINITY {
                        continue;
                    }
                    (self.value[b] - self.lower[b]).max(0.0) / alpha
                } else {
                    if self.upper[b] == f64::INFINITY {
                        continue;
                    }
                    (self.upper[b] - self.value[b]).max(0.0) / -alpha
                };
                if limit < step - 1e-12 {
                    step = limit;
                    leaving = Some((i, alpha));
                } else if limit <= step + 1e-12 {
                    if let Some((r, current)) = leaving {
                        let prefer = if bland {
                            b < self.basis[r]
                        } else {
                            alpha.abs() > current.abs()
                        };
                        if prefer {
                            leaving = Some((i, alpha));
                        }
                        step = step.min(limit);
                    }
                }
            }

            if step == f64::INFINITY {
                return Ok(Phase::Unbounded);
            }
            if step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }

            // Move along the edge.
            self.value[q] += dir * step;
            for i in 0..self.m {
                let a = self.at(i, q);
                if a != 0.0 {
                    let b = self.basis[i];
                    self.value[b] -= dir * step * a;
                }
            }

            match leaving {
                None => {
                    // Bound flip: the entering variable reached its other bound.
                    self.value[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                }
                Some((r, alpha)) => {
                    let out = self.basis[r];
                    self.value[out] = if alpha > 0.0 { self.lower[out] } else { self.upper[out] };
                    self.pivot(r, q);
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let nc = self.ncols;
        let piv = self.at(r, q);
        let mut nz = Vec::new();
        {
            let row = &mut self.t[r * nc..(r + 1) * nc];
            for (j, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v /= piv;
                    if v.abs() < 1e-14 {
                        *v = 0.0;
                    } else {
                        nz.push(j);
                    }
                }
            }
            row[q] = 1.0;
        }
        let pivot_row: Vec<f64> = nz.iter().map(|&j| self.t[r * nc + j]).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let base = i * nc;
            let f = self.t[base + q];
            if f == 0.0 {
                continue;
            }
            for (&j, &pj) in nz.iter().zip(&pivot_row) {
                self.t[base + j] -= f * pj;
            }
            self.t[base + q] = 0.0;
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for (&j, &pj) in nz.iter().zip(&pivot_row) {
                self.reduced[j] -= f * pj;
            }
        }
        self.reduced[q] = 0.0;

        let out = self.basis[r];
        self.row_of[out] = None;
        self.row_of[q] = Some(r);
        self.basis[r] = q;
    }
}
