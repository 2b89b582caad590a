//! Dense two-phase simplex for small linear programs with bounded
//! variables.
//!
//! Variables are shifted to their lower bound (or mirrored at their upper
//! bound, or split when free) so the tableau works on `y >= 0`; finite
//! ranges become explicit rows. Rows are scaled to unit max-norm, pivots
//! follow Bland's rule, and the final basic solution is recomputed from the
//! scaled rows with an LU solve to shed tableau round-off.

use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coefficients: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub maximize: bool,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// Maximize `objective . x` with `x >= 0` until bounds are changed.
    pub fn maximize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            maximize: true,
            objective,
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self {
            maximize: false,
            ..Self::maximize(objective)
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    pub fn add_constraint(&mut self, coefficients: Vec<f64>, sense: Sense, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint {
            coefficients,
            sense,
            rhs,
        });
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension(format!(
                "{n} variables but {} lower / {} upper bounds",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if c.coefficients.len() != n {
                return Err(Error::Dimension(format!(
                    "constraint {k} has {} coefficients for {n} variables",
                    c.coefficients.len()
                )));
            }
            if !c.rhs.is_finite() || c.coefficients.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!("constraint {k} is not finite")));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("objective is not finite".into()));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::Contract(format!("variable {j} has bounds [{l}, {u}]")));
            }
        }
        Ok(())
    }

    /// Largest violation of a constraint or bound at `x`, measured on rows
    /// scaled to unit max-norm.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let scale = c.coefficients.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            let lhs: f64 = c.coefficients.iter().zip(x).map(|(a, v)| a * v).sum();
            let gap = (lhs - c.rhs) / scale;
            let v = match c.sense {
                Sense::Le => gap.max(0.0),
                Sense::Ge => (-gap).max(0.0),
                Sense::Eq => gap.abs(),
            };
            worst = worst.max(v);
        }
        for (j, v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    /// Plain-text dump for cross-checking with external tools:
    ///
    /// ```text
    /// # lp v1
    /// maximize 1 0.5
    /// c0: 1 1 <= 4
    /// x0 in [0, inf]
    /// ```
    pub fn dump(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
        let mut s = String::from("# lp v1\n");
        let dir = if self.maximize { "maximize" } else { "minimize" };
        let _ = writeln!(s, "{dir} {}", join(&self.objective));
        for (k, c) in self.constraints.iter().enumerate() {
            let _ = writeln!(s, "c{k}: {} {} {}", join(&c.coefficients), c.sense, c.rhs);
        }
        for j in 0..self.num_vars() {
            let _ = writeln!(s, "x{j} in [{}, {}]", self.lower[j], self.upper[j]);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Empty unless optimal.
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per constraint: `>= 0` on binding `<=` rows and
    /// `<= 0` on binding `>=` rows of a maximization, zero on slack rows.
    pub duals: Vec<f64>,
}

impl LpSolution {
    fn non_optimal(status: LpStatus) -> Self {
        Self {
            status,
            x: Vec::new(),
            objective: f64::NAN,
            duals: Vec::new(),
        }
    }

    pub fn into_optimal(self) -> Result<Self> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            s => Err(Error::Lp(s)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum VarMap {
    Shift { col: usize, lower: f64 },
    Mirror { col: usize, upper: f64 },
    Free { pos: usize, neg: usize },
}

struct Row {
    coefficients: Vec<f64>,
    sense: Sense,
    rhs: f64,
    /// Factor applied to the source row (scale and sign), `None` for
    /// bound rows.
    factor: Option<(usize, f64)>,
}

pub fn solve(p: &LpProblem) -> Result<LpSolution> {
    p.validate()?;
    let n = p.num_vars();

    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0;
    let mut bound_rows = Vec::new();
    for j in 0..n {
        let (l, u) = (p.lower[j], p.upper[j]);
        if l.is_finite() {
            maps.push(VarMap::Shift { col: ncols, lower: l });
            if u.is_finite() {
                bound_rows.push((ncols, u - l));
            }
            ncols += 1;
        } else if u.is_finite() {
            maps.push(VarMap::Mirror { col: ncols, upper: u });
            ncols += 1;
        } else {
            maps.push(VarMap::Free {
                pos: ncols,
                neg: ncols + 1,
            });
            ncols += 2;
        }
    }
    let nstruct = ncols;

    let mut rows = Vec::with_capacity(p.constraints.len() + bound_rows.len());
    for (k, c) in p.constraints.iter().enumerate() {
        let mut coef = vec![0.0; nstruct];
        let mut rhs = c.rhs;
        for (j, &a) in c.coefficients.iter().enumerate() {
            match maps[j] {
                VarMap::Shift { col, lower } => {
                    coef[col] += a;
                    rhs -= a * lower;
                }
                VarMap::Mirror { col, upper } => {
                    coef[col] -= a;
                    rhs -= a * upper;
                }
                VarMap::Free { pos, neg } => {
                    coef[pos] += a;
                    coef[neg] -= a;
                }
            }
        }
        let scale = coef.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            let ok = match c.sense {
                Sense::Le => rhs >= -FEAS_TOL,
                Sense::Ge => rhs <= FEAS_TOL,
                Sense::Eq => rhs.abs() <= FEAS_TOL,
            };
            if !ok {
                return Ok(LpSolution::non_optimal(LpStatus::Infeasible));
            }
            continue;
        }
        rows.push(Row {
            coefficients: coef,
            sense: c.sense,
            rhs,
            factor: Some((k, 1.0 / scale)),
        });
    }
    for (col, range) in bound_rows {
        let mut coef = vec![0.0; nstruct];
        coef[col] = 1.0;
        rows.push(Row {
            coefficients: coef,
            sense: Sense::Le,
            rhs: range,
            factor: None,
        });
    }
    for r in &mut rows {
        let mut f = r.factor.map_or(1.0, |(_, f)| f);
        if r.rhs * f < 0.0 {
            f = -f;
            r.sense = match r.sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
        for v in &mut r.coefficients {
            *v *= f;
        }
        r.rhs *= f;
        if let Some((_, g)) = r.factor.as_mut() {
            *g = f;
        }
    }

    let mut cost = vec![0.0; nstruct];
    let sign = if p.maximize { 1.0 } else { -1.0 };
    for (j, m) in maps.iter().enumerate() {
        let c = sign * p.objective[j];
        match *m {
            VarMap::Shift { col, .. } => cost[col] += c,
            VarMap::Mirror { col, .. } => cost[col] -= c,
            VarMap::Free { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    let mut t = Tableau::build(&rows, nstruct);
    let status = t.run(&cost)?;
    if status != LpStatus::Optimal {
        return Ok(LpSolution::non_optimal(status));
    }

    let y = t.refined_solution(&rows);
    let x: Vec<f64> = maps
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let v = match *m {
                VarMap::Shift { col, lower } => lower + y[col],
                VarMap::Mirror { col, upper } => upper - y[col],
                VarMap::Free { pos, neg } => y[pos] - y[neg],
            };
            v.clamp(p.lower[j], p.upper[j])
        })
        .collect();
    let objective = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let mut duals = vec![0.0; p.constraints.len()];
    for (i, r) in rows.iter().enumerate() {
        if let Some((k, f)) = r.factor {
            duals[k] = sign * t.row_price(i) * f;
        }
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        duals,
    })
}

struct Tableau {
    m: usize,
    width: usize,
    nstruct: usize,
    /// First artificial column; columns `art_start..width-1` are artificial.
    art_start: usize,
    a: Vec<f64>,
    basis: Vec<usize>,
    /// Column holding `e_i` for row `i` (slack or artificial).
    unit_col: Vec<usize>,
    /// Row and sign of each auxiliary column.
    aux: Vec<(usize, f64)>,
    reduced: Vec<f64>,
}

impl Tableau {
    fn build(rows: &[Row], nstruct: usize) -> Self {
        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.sense != Sense::Eq).count();
        let n_art = rows.iter().filter(|r| r.sense != Sense::Le).count();
        let art_start = nstruct + n_slack;
        let ncols = art_start + n_art;
        let width = ncols + 1;
        let mut a = vec![0.0; m * width];
        let mut basis = vec![0; m];
        let mut unit_col = vec![0; m];
        let mut aux = vec![(0, 0.0); ncols - nstruct];
        let (mut s, mut art) = (nstruct, art_start);
        for (i, r) in rows.iter().enumerate() {
            let row = &mut a[i * width..(i + 1) * width];
            row[..nstruct].copy_from_slice(&r.coefficients);
            row[ncols] = r.rhs;
            match r.sense {
                Sense::Le => {
                    row[s] = 1.0;
                    aux[s - nstruct] = (i, 1.0);
                    basis[i] = s;
                    s += 1;
                }
                Sense::Ge => {
                    row[s] = -1.0;
                    aux[s - nstruct] = (i, -1.0);
                    s += 1;
                    row[art] = 1.0;
                    aux[art - nstruct] = (i, 1.0);
                    basis[i] = art;
                    art += 1;
                }
                Sense::Eq => {
                    row[art] = 1.0;
                    aux[art - nstruct] = (i, 1.0);
                    basis[i] = art;
                    art += 1;
                }
            }
            unit_col[i] = basis[i];
        }
        Self {
            m,
            width,
            nstruct,
            art_start,
            a,
            basis,
            unit_col,
            aux,
            reduced: vec![0.0; width],
        }
    }

    fn ncols(&self) -> usize {
        self.width - 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.width + j]
    }

    fn price_out(&mut self, cost: &[f64]) {
        let w = self.width;
        self.reduced[..cost.len()].copy_from_slice(cost);
        for v in &mut self.reduced[cost.len()..] {
            *v = 0.0;
        }
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    self.reduced[j] -= cb * self.a[i * w + j];
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let p = self.a[r * w + q];
        for j in 0..w {
            self.a[r * w + j] /= p;
        }
        let (before, rest) = self.a.split_at_mut(r * w);
        let (pivot_row, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[q];
            if f != 0.0 {
                for (x, pr) in row.iter_mut().zip(pivot_row.iter()) {
                    *x -= f * pr;
                }
                row[q] = 0.0;
            }
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for (x, pr) in self.reduced.iter_mut().zip(pivot_row.iter()) {
                *x -= f * pr;
            }
            self.reduced[q] = 0.0;
        }
        self.basis[r] = q;
    }

    /// Bland's rule iterations over columns `< allowed`.
    fn iterate(&mut self, allowed: usize, pivots: &mut usize) -> Result<bool> {
        let rhs = self.ncols();
        loop {
            let Some(q) = (0..allowed).find(|&j| self.reduced[j] > COST_TOL) else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let aiq = self.at(i, q);
                if aiq > PIVOT_TOL {
                    let ratio = self.at(i, rhs).max(0.0) / aiq;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Ok(false);
            };
            self.pivot(r, q);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(Error::Numerical("simplex pivot limit exceeded".into()));
            }
        }
    }

    fn run(&mut self, cost: &[f64]) -> Result<LpStatus> {
        let ncols = self.ncols();
        let mut pivots = 0;
        if self.art_start < ncols {
            let mut phase1 = vec![0.0; ncols];
            for v in &mut phase1[self.art_start..] {
                *v = -1.0;
            }
            self.price_out(&phase1);
            self.iterate(ncols, &mut pivots)?;
            let infeasibility: f64 = (0..self.m)
                .filter(|&i| self.basis[i] >= self.art_start)
                .map(|i| self.at(i, ncols))
                .sum();
            if infeasibility > FEAS_TOL {
                return Ok(LpStatus::Infeasible);
            }
            for i in 0..self.m {
                if self.basis[i] >= self.art_start {
                    if let Some(q) = (0..self.art_start).find(|&j| self.at(i, j).abs() > PIVOT_TOL) {
                        self.pivot(i, q);
                    }
                }
            }
        }
        let mut full = cost.to_vec();
        full.resize(ncols, 0.0);
        self.price_out(&full);
        if self.iterate(self.art_start, &mut pivots)? {
            Ok(LpStatus::Optimal)
        } else {
            Ok(LpStatus::Unbounded)
        }
    }

    /// Simplex multiplier of tableau row `i`.
    fn row_price(&self, i: usize) -> f64 {
        -self.reduced[self.unit_col[i]]
    }

    /// Structural values of the final basis, recomputed from the scaled
    /// rows; falls back to the tableau values if the basis is singular.
    fn refined_solution(&self, rows: &[Row]) -> Vec<f64> {
        let rhs = self.ncols();
        let mut y = vec![0.0; self.nstruct];
        let mut from_tableau = vec![0.0; self.ncols()];
        for i in 0..self.m {
            from_tableau[self.basis[i]] = self.at(i, rhs).max(0.0);
        }
        let column = |i: usize, col: usize| -> f64 {
            if col < self.nstruct {
                rows[i].coefficients[col]
            } else {
                let (row, v) = self.aux[col - self.nstruct];
                if row == i {
                    v
                } else {
                    0.0
                }
            }
        };
        let b = DMatrix::from_fn(self.m, self.m, |i, k| column(i, self.basis[k]));
        let rhs_v = DVector::from_fn(self.m, |i, _| rows[i].rhs);
        let solved = b.lu().solve(&rhs_v);
        match solved {
            Some(v) if v.iter().all(|x| x.is_finite()) => {
                for (k, &col) in self.basis.iter().enumerate() {
                    if col < self.nstruct {
                        y[col] = v[k].max(0.0);
                    }
                }
            }
            _ => y.copy_from_slice(&from_tableau[..self.nstruct]),
        }
        y
    }
}
