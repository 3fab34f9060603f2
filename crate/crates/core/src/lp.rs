//! Dense simplex solver with dual extraction.
//!
//! Programs are converted to `max c·y  s.t.  A y ≤ b, y ≥ 0` by shifting and
//! splitting bounded or free variables and by negating `≥` rows (equalities
//! become a pair of inequalities). Phase one uses a single auxiliary column
//! (the "x0" initialization), so a program with many violated rows still
//! starts from a basis after one pivot. Pricing is Dantzig's largest
//! coefficient; after a run of degenerate pivots the solver switches to
//! Bland's smallest-index rule for the rest of the phase.
//!
//! Duals are reported per original row as the sensitivity of the optimal
//! objective to that row's right-hand side, read from the final basis.

use crate::error::{Error, Result};

/// Entries smaller than this are never pivoted on.
pub const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;
const DEGENERATE_RUN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A linear program over `objective.len()` variables.
///
/// Variables default to the bounds `[0, +inf)`; use [`LinearProgram::set_bounds`]
/// with `f64::NEG_INFINITY` / `f64::INFINITY` for free or one-sided variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// One entry per row: d(objective)/d(rhs) at the final basis.
    pub duals: Vec<f64>,
    pub objective: f64,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            sense,
            objective,
            rows: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> usize {
        self.rows.push(Row { coeffs, relation, rhs });
        self.rows.len() - 1
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    /// Checks the structural invariants: at least one variable, every row as
    /// wide as the objective, finite data, and consistent bounds.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if n == 0 {
            return Err(Error::MalformedLp("program has no variables".into()));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::MalformedLp(format!(
                "bounds have lengths {}/{}, expected {n}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::MalformedLp("non-finite objective coefficient".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(Error::MalformedLp(format!(
                    "row {i} has {} coefficients, expected {n}",
                    row.coeffs.len()
                )));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(Error::MalformedLp(format!("row {i} has non-finite data")));
            }
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(Error::MalformedLp(format!("variable {j} has bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// How an original variable is expressed in the nonnegative working columns.
struct VarMap {
    offset: f64,
    cols: Vec<(usize, f64)>,
}

/// Solves `prob`, classifying it as optimal, infeasible or unbounded.
pub fn solve_lp(prob: &LinearProgram) -> Result<LpSolution> {
    prob.validate()?;
    let n = prob.num_vars();

    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (prob.lower[j], prob.upper[j]);
        if lo.is_finite() {
            if hi.is_finite() {
                bound_rows.push((ncols, hi - lo));
            }
            maps.push(VarMap { offset: lo, cols: vec![(ncols, 1.0)] });
            ncols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap { offset: hi, cols: vec![(ncols, -1.0)] });
            ncols += 1;
        } else {
            maps.push(VarMap { offset: 0.0, cols: vec![(ncols, 1.0), (ncols + 1, -1.0)] });
            ncols += 2;
        }
    }

    // Working rows in ≤ form, plus the (std_row, sign) pieces of each original row.
    let mut std_rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut row_pieces: Vec<Vec<(usize, f64)>> = Vec::with_capacity(prob.rows.len());
    for row in &prob.rows {
        let mut coeffs = vec![0.0; ncols];
        let mut rhs = row.rhs;
        for (j, &a) in row.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            rhs -= a * maps[j].offset;
            for &(k, s) in &maps[j].cols {
                coeffs[k] += a * s;
            }
        }
        let mut pieces = Vec::new();
        if matches!(row.relation, Relation::Le | Relation::Eq) {
            pieces.push((std_rows.len(), 1.0));
            std_rows.push((coeffs.clone(), rhs));
        }
        if matches!(row.relation, Relation::Ge | Relation::Eq) {
            pieces.push((std_rows.len(), -1.0));
            std_rows.push((coeffs.iter().map(|a| -a).collect(), -rhs));
        }
        row_pieces.push(pieces);
    }
    for &(k, width) in &bound_rows {
        let mut coeffs = vec![0.0; ncols];
        coeffs[k] = 1.0;
        std_rows.push((coeffs, width));
    }

    let sense_mult = match prob.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let mut cost = vec![0.0; ncols];
    for (j, &c) in prob.objective.iter().enumerate() {
        for &(k, s) in &maps[j].cols {
            cost[k] += sense_mult * c * s;
        }
    }

    let mut tab = Tableau::new(&std_rows, ncols);
    let outcome = tab.run(&cost)?;

    let assemble_primal = |y: &[f64]| -> Vec<f64> {
        maps.iter()
            .map(|m| m.offset + m.cols.iter().map(|&(k, s)| s * y[k]).sum::<f64>())
            .collect::<Vec<f64>>()
    };

    match outcome {
        Outcome::Infeasible => Ok(LpSolution {
            status: LpStatus::Infeasible,
            primal: vec![0.0; n],
            duals: vec![0.0; prob.rows.len()],
            objective: f64::NAN,
        }),
        Outcome::Unbounded => Ok(LpSolution {
            status: LpStatus::Unbounded,
            primal: assemble_primal(&tab.primal()),
            duals: vec![0.0; prob.rows.len()],
            objective: sense_mult * f64::INFINITY,
        }),
        Outcome::Optimal => {
            let primal = assemble_primal(&tab.primal());
            let std_duals = tab.duals();
            let duals = row_pieces
                .iter()
                .map(|pieces| sense_mult * pieces.iter().map(|&(r, s)| s * std_duals[r]).sum::<f64>())
                .collect();
            let objective = prob.objective.iter().zip(&primal).map(|(c, x)| c * x).sum();
            Ok(LpSolution { status: LpStatus::Optimal, primal, duals, objective })
        }
    }
}

enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Row-major tableau over `[structural | slack | aux]` columns.
struct Tableau {
    rows: usize,
    width: usize,
    structural: usize,
    data: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    reduced: Vec<f64>,
    value: f64,
    banned_aux: bool,
    pivots: usize,
    pivot_limit: usize,
}

impl Tableau {
    fn new(std_rows: &[(Vec<f64>, f64)], structural: usize) -> Self {
        let rows = std_rows.len();
        let width = structural + rows + 1;
        let mut data = vec![0.0; rows * width];
        let mut rhs = Vec::with_capacity(rows);
        for (i, (coeffs, b)) in std_rows.iter().enumerate() {
            let r = &mut data[i * width..(i + 1) * width];
            r[..structural].copy_from_slice(coeffs);
            r[structural + i] = 1.0;
            rhs.push(*b);
        }
        Self {
            rows,
            width,
            structural,
            data,
            rhs,
            basis: (0..rows).map(|i| structural + i).collect(),
            reduced: vec![0.0; width],
            value: 0.0,
            banned_aux: true,
            pivots: 0,
            pivot_limit: 20_000 + 50 * (rows + width),
        }
    }

    fn aux(&self) -> usize {
        self.width - 1
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) -> Result<()> {
        self.pivots += 1;
        if self.pivots > self.pivot_limit {
            return Err(Error::LpIterationLimit(self.pivot_limit));
        }
        let w = self.width;
        let inv = 1.0 / self.data[r * w + c];
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v *= inv;
        }
        self.rhs[r] *= inv;
        self.data[r * w + c] = 1.0;
        let nz: Vec<(usize, f64)> = self
            .row(r)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .collect();
        let prhs = self.rhs[r];
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.data[i * w + c];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.data[i * w..(i + 1) * w];
            for &(j, v) in &nz {
                row[j] -= f * v;
            }
            row[c] = 0.0;
            self.rhs[i] -= f * prhs;
        }
        let f = self.reduced[c];
        if f != 0.0 {
            for &(j, v) in &nz {
                self.reduced[j] -= f * v;
            }
            self.reduced[c] = 0.0;
            self.value += f * prhs;
        }
        self.basis[r] = c;
        Ok(())
    }

    /// Primal simplex on the current reduced-cost row. Returns false if unbounded.
    fn optimize(&mut self) -> Result<bool> {
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            // Once stalling is detected the smallest-index rule stays on:
            // near-degenerate steps would otherwise let Dantzig cycle back.
            bland |= degenerate_run >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = OPT_TOL;
            for j in 0..self.width {
                if self.banned_aux && j == self.aux() {
                    continue;
                }
                let d = self.reduced[j];
                if d > best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else { return Ok(true) };

            let w = self.width;
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.data[i * w + c];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs[i].max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, best_ratio)) => {
                        let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio.abs());
                        if ratio < best_ratio && !tie {
                            Some((i, ratio))
                        } else if tie {
                            let better = if bland {
                                self.basis[i] < self.basis[k]
                            } else {
                                a > self.data[k * w + c]
                            };
                            if better { Some((i, ratio)) } else { Some((k, best_ratio)) }
                        } else {
                            Some((k, best_ratio))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leave else { return Ok(false) };
            if ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c)?;
        }
    }

    fn run(&mut self, cost: &[f64]) -> Result<Outcome> {
        let scale = self.rhs.iter().fold(1.0f64, |m, b| m.max(b.abs()));
        let (worst, _) = self
            .rhs
            .iter()
            .enumerate()
            .fold((usize::MAX, 0.0), |(k, v), (i, &b)| if b < v { (i, b) } else { (k, v) });

        if worst != usize::MAX {
            // Phase one: maximize -x0 where x0 enters every row with coefficient -1.
            let aux = self.aux();
            let w = self.width;
            for i in 0..self.rows {
                self.data[i * w + aux] = -1.0;
            }
            self.banned_aux = false;
            self.reduced.iter_mut().for_each(|d| *d = 0.0);
            self.reduced[aux] = -1.0;
            self.value = 0.0;
            self.pivot(worst, aux)?;
            self.optimize()?;
            if self.value < -1e-9 * scale {
                return Ok(Outcome::Infeasible);
            }
            if let Some(r) = self.basis.iter().position(|&b| b == aux) {
                let row = self.row(r);
                let col = (0..aux)
                    .filter(|&j| row[j].abs() > PIVOT_TOL)
                    .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()));
                if let Some(c) = col {
                    self.pivot(r, c)?;
                }
            }
            self.banned_aux = true;
            for i in 0..self.rows {
                if self.basis[i] != aux {
                    self.data[i * w + aux] = 0.0;
                }
            }
            for b in &mut self.rhs {
                if *b < 0.0 && *b > -1e-9 * scale {
                    *b = 0.0;
                }
            }
        }

        // Phase two reduced costs: d_j = c_j - sum_i c_B(i) T[i][j].
        self.reduced.iter_mut().for_each(|d| *d = 0.0);
        self.reduced[..self.structural].copy_from_slice(cost);
        self.value = 0.0;
        let w = self.width;
        for i in 0..self.rows {
            let b = self.basis[i];
            let cb = if b < self.structural { cost[b] } else { 0.0 };
            if cb == 0.0 {
                continue;
            }
            let row = &self.data[i * w..(i + 1) * w];
            for (d, t) in self.reduced.iter_mut().zip(row) {
                *d -= cb * t;
            }
            self.value += cb * self.rhs[i];
        }
        for i in 0..self.rows {
            let b = self.basis[i];
            self.reduced[b] = 0.0;
        }
        if self.optimize()? {
            Ok(Outcome::Optimal)
        } else {
            Ok(Outcome::Unbounded)
        }
    }

    fn primal(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.structural];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.structural {
                y[b] = self.rhs[i].max(0.0);
            }
        }
        y
    }

    fn duals(&self) -> Vec<f64> {
        (0..self.rows).map(|i| -self.reduced[self.structural + i]).collect()
    }
}
