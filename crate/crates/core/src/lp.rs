//! Dense bounded-variable linear programming by two-phase revised simplex.
//!
//! The solver is built for the problem sizes this crate produces: dispatch
//! LPs with tens of rows and least-absolute-deviation LPs with up to a few
//! hundred rows. It returns exact vertex solutions together with row duals
//! in the shadow-price convention (`dual[r] = d objective / d rhs[r]`) and
//! reduced costs for the structural variables, which downstream code reads
//! as bound multipliers.
//!
//! Duals of a degenerate optimal basis are not unique; the solver reports
//! any optimal dual vector and sets [`LpSolution::degenerate`] so callers
//! can log the fact.

use nalgebra::DMatrix;
use thiserror::Error;

/// Relative feasibility tolerance for bounds and row activity.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Optimality tolerance on reduced costs.
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Tolerance used to flag degenerate bases / alternative optima.
pub const DEGENERACY_TOL: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-10;
const REFRESH_EVERY: usize = 1000;
const STALL_LIMIT: usize = 2000;

/// Row sense of a linear constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
struct Row {
    sense: Sense,
    rhs: f64,
}

/// A linear program over bounded variables: minimize `c x` subject to the
/// rows and `lower <= x <= upper` (infinite bounds allowed).
#[derive(Clone, Debug)]
pub struct LinearProgram {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
    /// Sparse structural columns: `cols[j]` lists `(row, coefficient)`.
    cols: Vec<Vec<(usize, f64)>>,
}

/// Incremental builder for [`LinearProgram`].
#[derive(Default)]
pub struct LpBuilder {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
    row_terms: Vec<Vec<(usize, f64)>>,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        assert!(lower <= upper, "variable bounds must be ordered");
        assert!(cost.is_finite(), "variable cost must be finite");
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.len() - 1
    }

    /// Adds a constraint row and returns its index. Duplicate variable
    /// references within one row are summed.
    pub fn add_row(&mut self, sense: Sense, rhs: f64, terms: &[(usize, f64)]) -> usize {
        assert!(rhs.is_finite(), "row rhs must be finite");
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for &(var, coeff) in terms {
            assert!(var < self.cost.len(), "row references unknown variable");
            if coeff == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(v, _)| *v == var) {
                Some((_, c)) => *c += coeff,
                None => merged.push((var, coeff)),
            }
        }
        self.rows.push(Row { sense, rhs });
        self.row_terms.push(merged);
        self.rows.len() - 1
    }

    pub fn build(self) -> LinearProgram {
        let n = self.cost.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, terms) in self.row_terms.iter().enumerate() {
            for &(v, c) in terms {
                cols[v].push((r, c));
            }
        }
        LinearProgram {
            cost: self.cost,
            lower: self.lower,
            upper: self.upper,
            rows: self.rows,
            cols,
        }
    }
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Optimal solution of a [`LinearProgram`].
#[derive(Clone, Debug)]
pub struct LpSolution {
    /// Structural variable values.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Shadow prices: `row_duals[r]` is the derivative of the optimal
    /// objective with respect to `rhs[r]`. For a minimization this is
    /// `<= 0` on binding `Le` rows and `>= 0` on binding `Ge` rows.
    pub row_duals: Vec<f64>,
    /// Reduced costs of the structural variables. A variable binding at
    /// its lower bound has reduced cost `>= 0`, at its upper bound `<= 0`.
    pub reduced_costs: Vec<f64>,
    /// True when the optimal basis is primal degenerate or admits
    /// alternative optima, i.e. when duals may be non-unique.
    pub degenerate: bool,
    pub iterations: usize,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("infeasible program: residual {residual:.3e} on rows {rows:?}")]
    Infeasible { rows: Vec<usize>, residual: f64 },
    #[error("objective unbounded along variable {var}")]
    Unbounded { var: usize },
    #[error("iteration limit {0} exceeded")]
    IterationLimit(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable parked at zero.
    Free,
}

/// Solves the program with the default two-phase method.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let mut s = Simplex::new(lp);
    s.init_two_phase()?;
    s.run_phase2()
}

/// Solves starting from a caller-supplied feasible basis. `basis[r]` names
/// the variable basic in row `r` (slack indices allowed: `num_vars + r`),
/// `at_upper` lists nonbasic variables parked at their upper bound, and
/// `binv_t` is the transposed basis inverse. Falls back to the two-phase
/// method if the start point fails validation.
pub fn solve_from_basis(
    lp: &LinearProgram,
    basis: &[usize],
    at_upper: &[usize],
    binv_t: DMatrix<f64>,
) -> Result<LpSolution, LpError> {
    let mut s = Simplex::new(lp);
    if s.init_from_basis(basis, at_upper, binv_t) {
        s.run_phase2()
    } else {
        solve(lp)
    }
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    m: usize,
    n: usize,
    /// Artificial columns appended past `n + m`: `(row, sign)`.
    artificials: Vec<(usize, f64)>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    x: Vec<f64>,
    /// Transposed basis inverse: `binv_t[(c, r)] = B^{-1}[(r, c)]`. Stored
    /// transposed so pivot row operations become contiguous column ops.
    binv_t: DMatrix<f64>,
    y: Vec<f64>,
    iterations: usize,
    bland: bool,
    stall: usize,
    last_objective: f64,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        let mut cost = lp.cost.clone();
        // Slack for row r is variable n + r with coefficient +1:
        // Le rows get s in [0, inf), Ge rows s in (-inf, 0], Eq rows fix s.
        for row in &lp.rows {
            cost.push(0.0);
            match row.sense {
                Sense::Le => {
                    lower.push(0.0);
                    upper.push(f64::INFINITY);
                }
                Sense::Ge => {
                    lower.push(f64::NEG_INFINITY);
                    upper.push(0.0);
                }
                Sense::Eq => {
                    lower.push(0.0);
                    upper.push(0.0);
                }
            }
        }
        Simplex {
            lp,
            m,
            n,
            artificials: Vec::new(),
            cost,
            lower,
            upper,
            basis: Vec::new(),
            state: vec![VarState::AtLower; n + m],
            x: vec![0.0; n + m],
            binv_t: DMatrix::zeros(m, m),
            y: vec![0.0; m],
            iterations: 0,
            bland: false,
            stall: 0,
            last_objective: f64::INFINITY,
        }
    }

    fn num_cols(&self) -> usize {
        self.n + self.m + self.artificials.len()
    }

    fn col_entries(&self, j: usize) -> ColIter<'_> {
        if j < self.n {
            ColIter::Slice(self.lp.cols[j].iter())
        } else if j < self.n + self.m {
            ColIter::Unit(Some((j - self.n, 1.0)))
        } else {
            let (row, sign) = self.artificials[j - self.n - self.m];
            ColIter::Unit(Some((row, sign)))
        }
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    /// Parks variable `j` at its bound nearest zero (or at zero if free).
    fn park(&mut self, j: usize) {
        let lo = self.lower[j];
        let hi = self.upper[j];
        if lo.is_finite() && (lo.abs() <= hi.abs() || !hi.is_finite()) {
            self.state[j] = VarState::AtLower;
            self.x[j] = lo;
        } else if hi.is_finite() {
            self.state[j] = VarState::AtUpper;
            self.x[j] = hi;
        } else {
            self.state[j] = VarState::Free;
            self.x[j] = 0.0;
        }
    }

    fn init_two_phase(&mut self) -> Result<(), LpError> {
        for j in 0..self.n + self.m {
            self.park(j);
        }
        // Residual of each row at the parked point decides the sign of its
        // artificial so the phase-1 start is feasible with basis = artificials.
        let mut residual = vec![0.0; self.m];
        for (r, row) in self.lp.rows.iter().enumerate() {
            residual[r] = row.rhs;
        }
        for j in 0..self.n + self.m {
            if self.x[j] != 0.0 {
                let xj = self.x[j];
                for (r, v) in self.col_entries(j) {
                    residual[r] -= v * xj;
                }
            }
        }
        self.basis = Vec::with_capacity(self.m);
        self.binv_t = DMatrix::zeros(self.m, self.m);
        for r in 0..self.m {
            let sign = if residual[r] < 0.0 { -1.0 } else { 1.0 };
            let var = self.n + self.m + self.artificials.len();
            self.artificials.push((r, sign));
            self.cost.push(0.0);
            self.lower.push(0.0);
            self.upper.push(f64::INFINITY);
            self.state.push(VarState::Basic);
            self.x.push(residual[r].abs());
            self.basis.push(var);
            self.binv_t[(r, r)] = sign;
        }

        // Phase 1: minimize the sum of artificial values.
        let phase1_cost: Vec<f64> = (0..self.num_cols())
            .map(|j| if j >= self.n + self.m { 1.0 } else { 0.0 })
            .collect();
        let saved = std::mem::replace(&mut self.cost, phase1_cost);
        self.refresh_duals();
        self.last_objective = f64::INFINITY;
        self.iterate()?;
        let infeasibility: f64 = self
            .basis
            .iter()
            .filter(|&&v| v >= self.n + self.m)
            .map(|&v| self.x[v].max(0.0))
            .sum();
        if infeasibility > 1e-7 {
            let rows = self
                .basis
                .iter()
                .enumerate()
                .filter(|(_, &v)| v >= self.n + self.m && self.x[v] > 1e-7)
                .map(|(r, _)| r)
                .collect();
            return Err(LpError::Infeasible {
                rows,
                residual: infeasibility,
            });
        }

        // Pivot leftover artificials out where a real column can replace
        // them; rows where none can are redundant and the artificial stays
        // pinned at zero without ever blocking a ratio test.
        self.evict_artificials();
        self.cost = saved;
        for t in 0..self.artificials.len() {
            let var = self.n + self.m + t;
            self.upper[var] = 0.0;
            if self.state[var] != VarState::Basic {
                self.state[var] = VarState::AtLower;
                self.x[var] = 0.0;
            }
        }
        Ok(())
    }

    fn evict_artificials(&mut self) {
        for r in 0..self.m {
            if self.basis[r] < self.n + self.m {
                continue;
            }
            if self.x[self.basis[r]].abs() > 1e-7 {
                continue;
            }
            let mut replacement = None;
            for j in 0..self.n + self.m {
                if self.state[j] == VarState::Basic || self.is_fixed(j) {
                    continue;
                }
                // Pivot element (B^{-1} A_j)_r without forming the full ftran.
                let mut w_r = 0.0;
                for (row, v) in self.col_entries(j) {
                    w_r += v * self.binv_t[(row, r)];
                }
                if w_r.abs() > 1e-7 {
                    replacement = Some(j);
                    break;
                }
            }
            if let Some(j) = replacement {
                let w = self.ftran(j);
                self.pivot(j, r, &w, 0.0, self.direction_of(j));
            }
        }
    }

    fn init_from_basis(&mut self, basis: &[usize], at_upper: &[usize], binv_t: DMatrix<f64>) -> bool {
        if basis.len() != self.m || binv_t.shape() != (self.m, self.m) {
            return false;
        }
        for j in 0..self.n + self.m {
            self.park(j);
        }
        for &j in at_upper {
            if self.upper[j].is_finite() {
                self.state[j] = VarState::AtUpper;
                self.x[j] = self.upper[j];
            }
        }
        self.basis = basis.to_vec();
        for &v in basis {
            if v >= self.n + self.m {
                return false;
            }
            self.state[v] = VarState::Basic;
        }
        self.binv_t = binv_t;
        if !self.recompute_basics() {
            return false;
        }
        // Validate feasibility and inverse consistency at the start point.
        for r in 0..self.m {
            let v = self.basis[r];
            let tol = FEASIBILITY_TOL * (1.0 + self.x[v].abs());
            if self.x[v] < self.lower[v] - tol || self.x[v] > self.upper[v] + tol {
                return false;
            }
        }
        self.refresh_duals();
        self.last_objective = f64::INFINITY;
        true
    }

    /// Recomputes basic values `x_B = B^{-1} (b - N x_N)`. Returns false if
    /// the result is non-finite (singular or inconsistent inverse).
    fn recompute_basics(&mut self) -> bool {
        let mut rhs: Vec<f64> = self.lp.rows.iter().map(|r| r.rhs).collect();
        for j in 0..self.num_cols() {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                for (r, v) in self.col_entries(j) {
                    rhs[r] -= v * xj;
                }
            }
        }
        for r in 0..self.m {
            let mut val = 0.0;
            for k in 0..self.m {
                val += self.binv_t[(k, r)] * rhs[k];
            }
            if !val.is_finite() {
                return false;
            }
            self.x[self.basis[r]] = val;
        }
        true
    }

    /// Full dual recomputation `y = c_B B^{-1}`.
    fn refresh_duals(&mut self) {
        for r in 0..self.m {
            let mut v = 0.0;
            for k in 0..self.m {
                v += self.cost[self.basis[k]] * self.binv_t[(r, k)];
            }
            self.y[r] = v;
        }
    }

    fn objective(&self) -> f64 {
        (0..self.num_cols()).map(|j| self.cost[j] * self.x[j]).sum()
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        let mut d = self.cost[j];
        for (r, v) in self.col_entries(j) {
            d -= self.y[r] * v;
        }
        d
    }

    /// +1 when the variable would enter increasing, -1 decreasing.
    fn direction_of(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtUpper => -1.0,
            _ => 1.0,
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.m];
        for (r, v) in self.col_entries(j) {
            for i in 0..self.m {
                w[i] += v * self.binv_t[(r, i)];
            }
        }
        w
    }

    fn iterate(&mut self) -> Result<(), LpError> {
        let limit = 20_000 + 200 * (self.m + self.n);
        loop {
            if self.iterations >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            if self.iterations % REFRESH_EVERY == REFRESH_EVERY - 1 {
                self.refresh_duals();
                self.recompute_basics();
            }
            let entering = match self.price() {
                Some(j) => j,
                None => return Ok(()),
            };
            self.iterations += 1;
            let dir = match self.state[entering] {
                VarState::AtLower => 1.0,
                VarState::AtUpper => -1.0,
                VarState::Free => {
                    if self.reduced_cost(entering) < 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                VarState::Basic => unreachable!("basic variable priced"),
            };
            let w = self.ftran(entering);
            self.step(entering, dir, &w)?;

            let obj = self.objective();
            if obj < self.last_objective - 1e-12 * (1.0 + self.last_objective.abs()) {
                self.last_objective = obj;
                self.stall = 0;
            } else {
                self.stall += 1;
                if self.stall > STALL_LIMIT {
                    // Degenerate cycling guard: Bland's rule terminates.
                    self.bland = true;
                }
            }
        }
    }

    /// Picks the entering variable (Dantzig rule, Bland under stall).
    fn price(&self) -> Option<usize> {
        let tol = OPTIMALITY_TOL * (1.0 + self.cost.iter().fold(0.0_f64, |a, &c| a.max(c.abs())));
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.num_cols() {
            if self.state[j] == VarState::Basic || self.is_fixed(j) {
                continue;
            }
            let d = self.reduced_cost(j);
            let violation = match self.state[j] {
                VarState::AtLower => -d,
                VarState::AtUpper => d,
                VarState::Free => d.abs(),
                VarState::Basic => unreachable!(),
            };
            if violation > tol {
                if self.bland {
                    return Some(j);
                }
                if best.map_or(true, |(_, v)| violation > v) {
                    best = Some((j, violation));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    fn step(&mut self, entering: usize, dir: f64, w: &[f64]) -> Result<(), LpError> {
        // Ratio test: nearest blocking bound among basics, plus the
        // entering variable's own opposite bound (bound flip).
        let mut t_block = f64::INFINITY;
        let mut leave: Option<usize> = None;
        for r in 0..self.m {
            let v = self.basis[r];
            let delta = dir * w[r];
            if delta.abs() <= PIVOT_TOL {
                continue;
            }
            let limit = if delta > 0.0 {
                self.lower[v]
            } else {
                self.upper[v]
            };
            if !limit.is_finite() {
                continue;
            }
            let t = ((self.x[v] - limit) / delta).max(0.0);
            match leave {
                None => {
                    t_block = t;
                    leave = Some(r);
                }
                Some(lr) => {
                    if t < t_block - 1e-12 {
                        t_block = t;
                        leave = Some(r);
                    } else if t <= t_block + 1e-12 {
                        // Tie: Bland takes the smallest variable index,
                        // otherwise prefer the largest pivot magnitude.
                        let take = if self.bland {
                            self.basis[r] < self.basis[lr]
                        } else {
                            w[r].abs() > w[lr].abs()
                        };
                        if take {
                            t_block = t.min(t_block);
                            leave = Some(r);
                        }
                    }
                }
            }
        }
        let span = self.upper[entering] - self.lower[entering];
        let t_flip = if span.is_finite() { span } else { f64::INFINITY };

        if t_block.is_infinite() && t_flip.is_infinite() {
            return Err(LpError::Unbounded { var: entering });
        }

        if t_flip < t_block {
            // Bound flip: no basis change.
            self.x[entering] += dir * t_flip;
            for r in 0..self.m {
                self.x[self.basis[r]] -= dir * t_flip * w[r];
            }
            self.state[entering] = if dir > 0.0 {
                VarState::AtUpper
            } else {
                VarState::AtLower
            };
            return Ok(());
        }

        let row = leave.expect("blocking row exists when not flipping");
        self.pivot(entering, row, w, t_block, dir);
        Ok(())
    }

    /// Executes the basis exchange `entering` <-> `basis[row]` with step
    /// length `t` in direction `dir`, updating values, duals, and inverse.
    fn pivot(&mut self, entering: usize, row: usize, w: &[f64], t: f64, dir: f64) {
        let leaving = self.basis[row];
        // Dual update uses the pre-pivot inverse row and reduced cost.
        let d_enter = self.reduced_cost(entering);
        let gamma = d_enter / w[row];
        for r in 0..self.m {
            self.y[r] += gamma * self.binv_t[(r, row)];
        }

        // Primal step.
        if t != 0.0 {
            self.x[entering] += dir * t;
            for r in 0..self.m {
                self.x[self.basis[r]] -= dir * t * w[r];
            }
        }
        // Snap the leaving variable exactly onto the bound it hit. Forced
        // zero-step exchanges (artificial eviction) may point at an
        // infinite bound; park at the finite one instead.
        let delta = dir * w[row];
        let mut hit = if delta > 0.0 {
            self.lower[leaving]
        } else {
            self.upper[leaving]
        };
        if !hit.is_finite() {
            hit = if self.lower[leaving].is_finite() {
                self.lower[leaving]
            } else {
                self.upper[leaving]
            };
        }
        assert!(hit.is_finite(), "leaving variable must have a finite bound");
        self.x[leaving] = hit;
        self.state[leaving] = if hit == self.lower[leaving] {
            VarState::AtLower
        } else {
            VarState::AtUpper
        };

        self.basis[row] = entering;
        self.state[entering] = VarState::Basic;

        // Gauss-Jordan update of the transposed inverse: row ops on B^{-1}
        // are column ops on binv_t, contiguous in memory.
        let pivot = w[row];
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let factor = w[i] / pivot;
            if factor == 0.0 {
                continue;
            }
            // binv_t[:, i] -= factor * binv_t[:, row]
            let (src, dst) = if i < row {
                let (a, b) = self.binv_t.columns_range_pair_mut(i..i + 1, row..row + 1);
                (b, a)
            } else {
                let (a, b) = self.binv_t.columns_range_pair_mut(row..row + 1, i..i + 1);
                (a, b)
            };
            let mut dst = dst;
            for k in 0..src.nrows() {
                dst[(k, 0)] -= factor * src[(k, 0)];
            }
        }
        let inv_pivot = 1.0 / pivot;
        for k in 0..self.m {
            self.binv_t[(k, row)] *= inv_pivot;
        }
    }

    fn run_phase2(&mut self) -> Result<LpSolution, LpError> {
        self.refresh_duals();
        self.last_objective = f64::INFINITY;
        self.stall = 0;
        self.iterate()?;
        self.polish();
        Ok(self.extract())
    }

    /// One step of iterative refinement for basic values and duals against
    /// the exact basis columns; recovers accuracy lost to inverse drift.
    fn polish(&mut self) {
        self.recompute_basics();
        self.refresh_duals();
        // Residual correction x_B += B^{-1}(b_eff - B x_B).
        let mut resid: Vec<f64> = self.lp.rows.iter().map(|r| r.rhs).collect();
        for j in 0..self.num_cols() {
            if self.x[j] != 0.0 {
                let xj = self.x[j];
                for (r, v) in self.col_entries(j) {
                    resid[r] -= v * xj;
                }
            }
        }
        for r in 0..self.m {
            let mut corr = 0.0;
            for k in 0..self.m {
                corr += self.binv_t[(k, r)] * resid[k];
            }
            self.x[self.basis[r]] += corr;
        }
    }

    fn extract(&self) -> LpSolution {
        let x: Vec<f64> = self.x[..self.n].to_vec();
        let objective: f64 = (0..self.n).map(|j| self.lp.cost[j] * x[j]).sum();
        let reduced_costs: Vec<f64> = (0..self.n).map(|j| self.reduced_cost(j)).collect();
        let mut degenerate = false;
        for r in 0..self.m {
            let v = self.basis[r];
            let scale = 1.0 + self.x[v].abs();
            let lo = self.lower[v];
            let hi = self.upper[v];
            if (lo.is_finite() && (self.x[v] - lo).abs() <= DEGENERACY_TOL * scale)
                || (hi.is_finite() && (hi - self.x[v]).abs() <= DEGENERACY_TOL * scale)
            {
                degenerate = true;
                break;
            }
        }
        if !degenerate {
            for j in 0..self.n + self.m {
                if self.state[j] == VarState::Basic || self.is_fixed(j) {
                    continue;
                }
                if self.reduced_cost(j).abs() <= DEGENERACY_TOL {
                    degenerate = true;
                    break;
                }
            }
        }
        LpSolution {
            x,
            objective,
            row_duals: self.y.clone(),
            reduced_costs,
            degenerate,
            iterations: self.iterations,
        }
    }
}

enum ColIter<'a> {
    Slice(std::slice::Iter<'a, (usize, f64)>),
    Unit(Option<(usize, f64)>),
}

impl Iterator for ColIter<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColIter::Slice(it) => it.next().copied(),
            ColIter::Unit(u) => u.take(),
        }
    }
}

/// Least-absolute-deviation subproblem `min ||X^T m||_1  s.t.  n . m = 1`,
/// solved through the simplex core with a warm start that skips phase 1.
pub mod lad {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    /// Result of the constrained L1 minimization.
    #[derive(Clone, Debug)]
    pub struct LadSolution {
        pub m: DVector<f64>,
        pub objective: f64,
        pub iterations: usize,
    }

    /// Minimizes the L1 norm of `x^T m` over the affine slice `n . m = 1`.
    /// `x` is `k x M` with data points as columns. The absolute values are
    /// split into nonnegative pairs `u - v`, giving the equality system
    /// `x_i . m + u_i - v_i = 0` plus the normalization row.
    pub fn min_l1_on_affine(x: &DMatrix<f64>, n_hat: &DVector<f64>) -> Result<LadSolution, LpError> {
        let k = x.nrows();
        let cols = x.ncols();
        assert_eq!(n_hat.len(), k, "constraint vector dimension mismatch");
        let mut b = LpBuilder::new();
        let m_vars: Vec<usize> = (0..k)
            .map(|_| b.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY))
            .collect();
        let u_vars: Vec<usize> = (0..cols).map(|_| b.add_var(1.0, 0.0, f64::INFINITY)).collect();
        let v_vars: Vec<usize> = (0..cols).map(|_| b.add_var(1.0, 0.0, f64::INFINITY)).collect();
        for i in 0..cols {
            let mut terms: Vec<(usize, f64)> = (0..k).map(|d| (m_vars[d], x[(d, i)])).collect();
            terms.push((u_vars[i], 1.0));
            terms.push((v_vars[i], -1.0));
            b.add_row(Sense::Eq, 0.0, &terms);
        }
        let norm_terms: Vec<(usize, f64)> = (0..k).map(|d| (m_vars[d], n_hat[d])).collect();
        let norm_row = b.add_row(Sense::Eq, 1.0, &norm_terms);
        let lp = b.build();

        // Warm start: make the largest-magnitude component of n basic on the
        // normalization row and pick u or v per data row by residual sign.
        // The basis matrix is then units plus one dense column, with a
        // closed-form inverse.
        let d_star = (0..k)
            .max_by(|&a, &bb| n_hat[a].abs().partial_cmp(&n_hat[bb].abs()).unwrap())
            .expect("nonempty constraint vector");
        if n_hat[d_star].abs() > 1e-12 {
            let m_star = 1.0 / n_hat[d_star];
            let mut basis = vec![0usize; cols + 1];
            let mut signs = vec![1.0; cols];
            for i in 0..cols {
                let g = -x[(d_star, i)] * m_star;
                if g >= 0.0 {
                    basis[i] = u_vars[i];
                    signs[i] = 1.0;
                } else {
                    basis[i] = v_vars[i];
                    signs[i] = -1.0;
                }
            }
            basis[norm_row] = m_vars[d_star];
            let mm = cols + 1;
            let mut binv_t = DMatrix::zeros(mm, mm);
            let a_rr = n_hat[d_star];
            // B^{-1} rows: row r* = e_r*/a_rr; row i = s_i (e_i - a_i e_r*/a_rr).
            binv_t[(norm_row, norm_row)] = 1.0 / a_rr;
            for i in 0..cols {
                binv_t[(i, i)] = signs[i];
                binv_t[(norm_row, i)] = -signs[i] * x[(d_star, i)] / a_rr;
            }
            let sol = solve_from_basis(&lp, &basis, &[], binv_t)?;
            return Ok(LadSolution {
                m: DVector::from_iterator(k, sol.x[..k].iter().copied()),
                objective: sol.objective,
                iterations: sol.iterations,
            });
        }
        let sol = solve(&lp)?;
        Ok(LadSolution {
            m: DVector::from_iterator(k, sol.x[..k].iter().copied()),
            objective: sol.objective,
            iterations: sol.iterations,
        })
    }
}
