//! Bounded-variable revised primal simplex with an explicit dense basis inverse.
//!
//! Every row gets a slack column with coefficient +1 whose bounds encode the
//! row sense (`<=`: `[0, inf)`, `>=`: `(-inf, 0]`, `=`: `[0, 0]`). Rows whose
//! slack cannot absorb the initial point get an artificial column and a
//! phase-one objective.

use std::fmt::Write as _;

use thiserror::Error;

pub const FEAS_TOL: f64 = 1e-8;
pub const OPT_TOL: f64 = 1e-9;
pub const PIVOT_TOL: f64 = 1e-10;

const REFACTOR_EVERY: usize = 64;
const DEGENERATE_LIMIT: usize = 40;
const REFRESH_AFTER: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
    pub names: Vec<String>,
    /// Optional starting point: free variables start at their value, bounded
    /// ones at the nearer bound. Empty means all at a bound (or zero if free).
    pub start: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Sensitivity of the optimal objective to each row's rhs.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed LP: {0}")]
    Malformed(String),
    #[error("numerical breakdown: {0}")]
    Numerical(String),
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, name: &str, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.push(name.to_string());
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(Row { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors differ in length from objective".into()));
        }
        if !self.start.is_empty() && self.start.len() != n {
            return Err(LpError::Malformed("start point differs in length from objective".into()));
        }
        if !self.objective_offset.is_finite() {
            return Err(LpError::Malformed("objective offset is not finite".into()));
        }
        for j in 0..n {
            if !self.objective[j].is_finite() {
                return Err(LpError::Malformed(format!("objective coefficient {j} is not finite")));
            }
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(LpError::Malformed(format!(
                    "variable {j} has bounds [{}, {}]",
                    self.lower[j], self.upper[j]
                )));
            }
            if self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("variable {j} has an empty domain")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {i} has non-finite rhs")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::Malformed(format!("row {i} references variable {j}")));
                }
                if !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {i} has a non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|&(j, a)| a * x[j]).sum())
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..x.len() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for (row, act) in self.rows.iter().zip(self.row_activity(x)) {
            let v = match row.sense {
                Sense::Le => act - row.rhs,
                Sense::Ge => row.rhs - act,
                Sense::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    /// CPLEX-style LP text, for debugging.
    pub fn to_lp_format(&self) -> String {
        let name = |j: usize| -> String {
            match self.names.get(j) {
                Some(s) if !s.is_empty() => s.clone(),
                _ => format!("x{j}"),
            }
        };
        let term_list = |terms: &mut dyn Iterator<Item = (usize, f64)>| -> String {
            let mut s = String::new();
            for (k, (j, a)) in terms.enumerate() {
                if k == 0 {
                    let _ = write!(s, "{a} {}", name(j));
                } else if a < 0.0 {
                    let _ = write!(s, " - {} {}", -a, name(j));
                } else {
                    let _ = write!(s, " + {a} {}", name(j));
                }
            }
            if s.is_empty() {
                s.push('0');
            }
            s
        };
        let mut out = String::from("Minimize\n obj: ");
        out += &term_list(&mut self.objective.iter().copied().enumerate().filter(|(_, c)| *c != 0.0));
        if self.objective_offset != 0.0 {
            let _ = write!(out, " + {} constant", self.objective_offset);
        }
        out += "\nSubject To\n";
        for (i, row) in self.rows.iter().enumerate() {
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " r{i}: {} {op} {}", term_list(&mut row.coeffs.iter().copied()), row.rhs);
        }
        out += "Bounds\n";
        if self.objective_offset != 0.0 {
            out += " constant = 1\n";
        }
        for j in 0..self.objective.len() {
            let (l, u) = (self.lower[j], self.upper[j]);
            let n = name(j);
            match (l.is_finite(), u.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " {n} free");
                }
                (true, true) => {
                    let _ = writeln!(out, " {l} <= {n} <= {u}");
                }
                (true, false) => {
                    let _ = writeln!(out, " {n} >= {l}");
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {n} <= {u}");
                }
            }
        }
        out += "End\n";
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum VarState {
    Basic,
    Lower,
    Upper,
    FreeZero,
}

struct Simplex {
    m: usize,
    n: usize,
    /// Structural columns stored sparse by column.
    cols: Vec<(usize, f64)>,
    col_start: Vec<usize>,
    /// Artificial columns: (row, sign).
    art: Vec<(usize, f64)>,
    lo: Vec<f64>,
    up: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    rhs: Vec<f64>,
    iterations: usize,
    pivots_since_refactor: usize,
    bland: bool,
    degenerate_run: usize,
    /// Cached duals `c_B B^-1`; empty when stale.
    y: Vec<f64>,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl Simplex {
    fn total(&self) -> usize {
        self.n + self.m + self.art.len()
    }

    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if j < self.n {
            out.extend_from_slice(&self.cols[self.col_start[j]..self.col_start[j + 1]]);
        } else if j < self.n + self.m {
            out.push((j - self.n, 1.0));
        } else {
            out.push(self.art[j - self.n - self.m]);
        }
    }

    fn dot_col(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.cols[self.col_start[j]..self.col_start[j + 1]].iter().map(|&(i, a)| a * y[i]).sum()
        } else if j < self.n + self.m {
            y[j - self.n]
        } else {
            let (i, s) = self.art[j - self.n - self.m];
            s * y[i]
        }
    }

    fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        // Column-compressed copy of the rows, duplicates merged.
        let mut count = vec![0usize; n + 1];
        for row in &lp.rows {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    count[j + 1] += 1;
                }
            }
        }
        for j in 0..n {
            count[j + 1] += count[j];
        }
        let mut fill = count.clone();
        let mut cols = vec![(0usize, 0.0); count[n]];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    cols[fill[j]] = (i, a);
                    fill[j] += 1;
                }
            }
        }
        let mut col_start = Vec::with_capacity(n + 1);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(cols.len());
        for j in 0..n {
            col_start.push(merged.len());
            let first = merged.len();
            for &(i, a) in &cols[count[j]..count[j + 1]] {
                if merged.len() > first && merged.last().unwrap().0 == i {
                    merged.last_mut().unwrap().1 += a;
                } else {
                    merged.push((i, a));
                }
            }
        }
        col_start.push(merged.len());
        let cols = merged;
        let mut lo = lp.lower.clone();
        let mut up = lp.upper.clone();
        let mut x = vec![0.0; n];
        let mut state = vec![VarState::Lower; n];
        for j in 0..n {
            if lo[j].is_finite() {
                x[j] = lo[j];
                state[j] = VarState::Lower;
            } else if up[j].is_finite() {
                x[j] = up[j];
                state[j] = VarState::Upper;
            } else {
                x[j] = 0.0;
                state[j] = VarState::FreeZero;
            }
            if let Some(&v) = lp.start.get(j) {
                if !v.is_finite() {
                    continue;
                }
                match (lo[j].is_finite(), up[j].is_finite()) {
                    (false, false) => x[j] = v,
                    (true, true) if (v - up[j]).abs() < (v - lo[j]).abs() => {
                        x[j] = up[j];
                        state[j] = VarState::Upper;
                    }
                    _ => {}
                }
            }
        }
        let mut activity = vec![0.0; m];
        for j in 0..n {
            for &(i, a) in &cols[col_start[j]..col_start[j + 1]] {
                activity[i] += a * x[j];
            }
        }
        let mut art = Vec::new();
        let mut basis = vec![0; m];
        let rhs: Vec<f64> = lp.rows.iter().map(|r| r.rhs).collect();
        for (i, row) in lp.rows.iter().enumerate() {
            let (sl, su) = match row.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo.push(sl);
            up.push(su);
            let s = rhs[i] - activity[i];
            if s >= sl - FEAS_TOL && s <= su + FEAS_TOL {
                x.push(s);
                state.push(VarState::Basic);
                basis[i] = n + i;
            } else {
                let bound = if s < sl { sl } else { su };
                x.push(bound);
                state.push(if s < sl { VarState::Lower } else { VarState::Upper });
                let sign = if s - bound >= 0.0 { 1.0 } else { -1.0 };
                art.push((i, sign));
            }
        }
        let mut sx = Simplex {
            m,
            n,
            cols,
            col_start,
            art: Vec::new(),
            lo,
            up,
            cost: Vec::new(),
            x,
            state,
            basis,
            binv: Vec::new(),
            rhs,
            iterations: 0,
            pivots_since_refactor: 0,
            bland: false,
            degenerate_run: 0,
            y: Vec::new(),
        };
        for (k, &(i, sign)) in art.iter().enumerate() {
            let j = n + m + k;
            let s = sx.rhs[i] - activity[i] - sx.x[n + i];
            sx.lo.push(0.0);
            sx.up.push(f64::INFINITY);
            sx.x.push(s * sign);
            sx.state.push(VarState::Basic);
            sx.basis[i] = j;
        }
        sx.art = art;
        sx
    }

    /// Refactors only once enough eta updates have piled up; otherwise just
    /// recomputes the basic values.
    fn refresh(&mut self) -> Result<(), LpError> {
        if self.pivots_since_refactor > REFRESH_AFTER {
            self.refactor()
        } else {
            self.recompute_basic_values();
            Ok(())
        }
    }

    /// Inverse of a basis made of unit columns on distinct rows, if it is one.
    fn unit_basis_inverse(&self) -> Option<Vec<f64>> {
        let m = self.m;
        let mut inv = vec![0.0; m * m];
        let mut seen = vec![false; m];
        let mut col = Vec::new();
        for (p, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            if col.len() != 1 || seen[col[0].0] || col[0].1.abs() < 1e-11 {
                return None;
            }
            seen[col[0].0] = true;
            inv[p * m + col[0].0] = 1.0 / col[0].1;
        }
        Some(inv)
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        if let Some(inv) = self.unit_basis_inverse() {
            self.binv = inv;
            self.pivots_since_refactor = 0;
            self.y.clear();
            self.recompute_basic_values();
            return Ok(());
        }
        let m = self.m;
        let mut b = vec![0.0; m * m];
        let mut col = Vec::new();
        for (p, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for &(i, a) in &col {
                b[i * m + p] = a;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let mut piv = c;
            let mut best = b[c * m + c].abs();
            for r in c + 1..m {
                let v = b[r * m + c].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-11 {
                return Err(LpError::Numerical("singular basis during refactorization".into()));
            }
            if piv != c {
                for k in 0..m {
                    b.swap(c * m + k, piv * m + k);
                    inv.swap(c * m + k, piv * m + k);
                }
            }
            let d = 1.0 / b[c * m + c];
            for k in 0..m {
                b[c * m + k] *= d;
                inv[c * m + k] *= d;
            }
            for r in 0..m {
                if r != c {
                    let f = b[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            b[r * m + k] -= f * b[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.pivots_since_refactor = 0;
        self.y.clear();
        self.recompute_basic_values();
        Ok(())
    }

    fn recompute_basic_values(&mut self) {
        let m = self.m;
        let mut r = self.rhs.clone();
        let mut col = Vec::new();
        for j in 0..self.total() {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                self.column(j, &mut col);
                for &(i, a) in &col {
                    r[i] -= a * self.x[j];
                }
            }
        }
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            let v: f64 = row.iter().zip(&r).map(|(a, b)| a * b).sum();
            self.x[self.basis[p]] = v;
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for p in 0..m {
            let cb = self.cost[self.basis[p]];
            if cb != 0.0 {
                let row = &self.binv[p * m..(p + 1) * m];
                for (yi, a) in y.iter_mut().zip(row) {
                    *yi += cb * a;
                }
            }
        }
        y
    }

    fn run(&mut self, max_iter: usize) -> Result<Phase, LpError> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        let mut col = Vec::new();
        loop {
            if self.iterations >= max_iter {
                return Err(LpError::IterationLimit(max_iter));
            }
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            if self.y.len() != m {
                self.y = self.duals();
            }
            let y = std::mem::take(&mut self.y);
            // Pricing.
            let mut enter = usize::MAX;
            let mut best = 0.0;
            let mut enter_d = 0.0;
            for j in 0..self.total() {
                let st = self.state[j];
                if st == VarState::Basic || self.lo[j] == self.up[j] {
                    continue;
                }
                let d = self.cost[j] - self.dot_col(j, &y);
                let eligible = match st {
                    VarState::Lower => d < -OPT_TOL,
                    VarState::Upper => d > OPT_TOL,
                    VarState::FreeZero => d.abs() > OPT_TOL,
                    VarState::Basic => false,
                };
                if eligible {
                    if self.bland {
                        enter = j;
                        enter_d = d;
                        break;
                    }
                    if d.abs() > best {
                        best = d.abs();
                        enter = j;
                        enter_d = d;
                    }
                }
            }
            self.y = y;
            if enter == usize::MAX {
                return Ok(Phase::Optimal);
            }
            self.iterations += 1;
            let q = enter;
            let dir = if enter_d < 0.0 { 1.0 } else { -1.0 };
            self.column(q, &mut col);
            for (p, a) in alpha.iter_mut().enumerate() {
                let row = &self.binv[p * m..(p + 1) * m];
                *a = col.iter().map(|&(i, v)| v * row[i]).sum();
            }
            // Ratio test.
            let mut theta = self.up[q] - self.lo[q];
            let mut leave = usize::MAX;
            let mut leave_to_upper = false;
            let mut leave_alpha = 0.0;
            for p in 0..m {
                let a = alpha[p];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let bj = self.basis[p];
                let rate = -dir * a;
                let xb = self.x[bj];
                let (t, to_upper) = if rate < 0.0 {
                    if !self.lo[bj].is_finite() {
                        continue;
                    }
                    (((xb - self.lo[bj]).max(0.0)) / -rate, false)
                } else {
                    if !self.up[bj].is_finite() {
                        continue;
                    }
                    (((self.up[bj] - xb).max(0.0)) / rate, true)
                };
                let better = if leave == usize::MAX {
                    t < theta || !theta.is_finite()
                } else if t < theta - 1e-12 * (1.0 + theta.abs()) {
                    true
                } else if t <= theta + 1e-12 * (1.0 + theta.abs()) {
                    if self.bland {
                        bj < self.basis[leave]
                    } else {
                        a.abs() > leave_alpha
                    }
                } else {
                    false
                };
                if better {
                    theta = t;
                    leave = p;
                    leave_to_upper = to_upper;
                    leave_alpha = a.abs();
                }
            }
            if !theta.is_finite() {
                return Ok(Phase::Unbounded);
            }
            if theta <= 1e-12 {
                self.degenerate_run += 1;
                if self.degenerate_run > DEGENERATE_LIMIT {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
                self.bland = false;
            }
            // Move.
            let step = dir * theta;
            self.x[q] += step;
            for p in 0..m {
                if alpha[p] != 0.0 {
                    let bj = self.basis[p];
                    self.x[bj] -= step * alpha[p];
                }
            }
            if leave == usize::MAX {
                // Bound flip.
                if dir > 0.0 {
                    self.state[q] = VarState::Upper;
                    self.x[q] = self.up[q];
                } else {
                    self.state[q] = VarState::Lower;
                    self.x[q] = self.lo[q];
                }
                continue;
            }
            let out = self.basis[leave];
            if leave_to_upper {
                self.state[out] = VarState::Upper;
                self.x[out] = self.up[out];
            } else {
                self.state[out] = VarState::Lower;
                self.x[out] = self.lo[out];
            }
            self.state[q] = VarState::Basic;
            self.basis[leave] = q;
            let piv = alpha[leave];
            if piv.abs() < PIVOT_TOL {
                return Err(LpError::Numerical("pivot element vanished".into()));
            }
            let inv_piv = 1.0 / piv;
            for k in 0..m {
                self.binv[leave * m + k] *= inv_piv;
            }
            let (head, tail) = self.binv.split_at_mut(leave * m);
            let (prow, rest) = tail.split_at_mut(m);
            for p in 0..m {
                if p == leave || alpha[p] == 0.0 {
                    continue;
                }
                let f = alpha[p];
                let row = if p < leave {
                    &mut head[p * m..(p + 1) * m]
                } else {
                    let o = (p - leave - 1) * m;
                    &mut rest[o..o + m]
                };
                for (r, pr) in row.iter_mut().zip(prow.iter()) {
                    *r -= f * *pr;
                }
            }
            // c_B B^-1 changes by the entering reduced cost times the new pivot row.
            for (yi, pr) in self.y.iter_mut().zip(prow.iter()) {
                *yi += enter_d * *pr;
            }
            self.pivots_since_refactor += 1;
        }
    }
}

/// Solves `min c'x + offset` subject to the rows and bounds of `lp`.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n = lp.num_vars();
    let m = lp.num_rows();
    let mut sx = Simplex::new(lp);
    let max_iter = 100 * (n + m) + 1000;
    sx.refactor()?;
    if !sx.art.is_empty() {
        sx.cost = vec![0.0; sx.total()];
        sx.y.clear();
        for k in 0..sx.art.len() {
            sx.cost[n + m + k] = 1.0;
        }
        sx.run(max_iter)?;
        sx.refresh()?;
        let infeas: f64 = (0..sx.art.len()).map(|k| sx.x[n + m + k]).sum();
        let scale = 1.0 + lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        if infeas > FEAS_TOL * scale {
            let x = sx.x[..n].to_vec();
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::INFINITY,
                x,
                duals: vec![0.0; m],
                reduced_costs: vec![0.0; n],
                iterations: sx.iterations,
            });
        }
        for k in 0..sx.art.len() {
            let j = n + m + k;
            sx.up[j] = 0.0;
            if sx.state[j] != VarState::Basic {
                sx.state[j] = VarState::Lower;
                sx.x[j] = 0.0;
            }
        }
        sx.bland = false;
        sx.degenerate_run = 0;
    }
    let mut cost = lp.objective.clone();
    cost.resize(sx.total(), 0.0);
    sx.cost = cost;
    sx.y.clear();
    let phase = sx.run(max_iter)?;
    if let Phase::Unbounded = phase {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: f64::NEG_INFINITY,
            x: sx.x[..n].to_vec(),
            duals: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            iterations: sx.iterations,
        });
    }
    sx.refresh()?;
    let y = sx.duals();
    let reduced_costs: Vec<f64> = (0..n).map(|j| sx.cost[j] - sx.dot_col(j, &y)).collect();
    let mut x = sx.x[..n].to_vec();
    for j in 0..n {
        x[j] = x[j].clamp(lp.lower[j], lp.upper[j]);
    }
    let scale = 1.0 + lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
    let viol = lp.max_violation(&x);
    if viol > 1e-6 * scale {
        return Err(LpError::Numerical(format!("final primal violation {viol:e}")));
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective_value(&x),
        x,
        duals: y,
        reduced_costs,
        iterations: sx.iterations,
    })
}

impl LpSolution {
    /// `b'y + sum_j d_j x_j + offset`, equal to the primal objective at an optimum.
    pub fn dual_objective(&self, lp: &LinearProgram) -> f64 {
        let by: f64 = lp.rows.iter().zip(&self.duals).map(|(r, y)| r.rhs * y).sum();
        let dx: f64 = self.reduced_costs.iter().zip(&self.x).map(|(d, x)| d * x).sum();
        lp.objective_offset + by + dx
    }
}
