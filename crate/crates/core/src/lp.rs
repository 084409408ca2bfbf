//! Small dense two-phase simplex.
//!
//! Solves `maximize c.x` subject to rows of the form `a.x (<=|=|>=) b` and
//! `x >= 0`. Problem sizes here are a few hundred rows at most, so a dense
//! tableau with Bland's anti-cycling rule is plenty.

use thiserror::Error;

const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("constraint has {got} coefficients, expected {expected}")]
    Width { expected: usize, got: usize },
    #[error("simplex did not converge within {0} pivots")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<f64>,
    rel: Relation,
    rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

impl LinearProgram {
    /// New maximization problem over `objective.len()` nonnegative variables.
    pub fn maximize(objective: Vec<f64>) -> Self {
        LinearProgram {
            objective,
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constraint(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) -> Result<&mut Self, LpError> {
        if coeffs.len() != self.objective.len() {
            return Err(LpError::Width {
                expected: self.objective.len(),
                got: coeffs.len(),
            });
        }
        self.rows.push(Row { coeffs, rel, rhs });
        Ok(self)
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self).run()
    }
}

struct Tableau {
    /// rows x (cols + 1); last column is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_orig: usize,
    n_total: usize,
    artificial_start: usize,
    objective: Vec<f64>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.rows.len();
        // normalize so every rhs is nonnegative
        let rows: Vec<Row> = lp
            .rows
            .iter()
            .map(|r| {
                if r.rhs < 0.0 {
                    Row {
                        coeffs: r.coeffs.iter().map(|c| -c).collect(),
                        rel: match r.rel {
                            Relation::Le => Relation::Ge,
                            Relation::Ge => Relation::Le,
                            Relation::Eq => Relation::Eq,
                        },
                        rhs: -r.rhs,
                    }
                } else {
                    r.clone()
                }
            })
            .collect();
        let n_slack = rows.iter().filter(|r| r.rel != Relation::Eq).count();
        let n_art = rows.iter().filter(|r| r.rel != Relation::Le).count();
        let artificial_start = n + n_slack;
        let n_total = artificial_start + n_art;
        let mut t = vec![vec![0.0; n_total + 1]; m];
        let mut basis = vec![0; m];
        let (mut s, mut a) = (n, artificial_start);
        for (i, r) in rows.iter().enumerate() {
            t[i][..n].copy_from_slice(&r.coeffs);
            t[i][n_total] = r.rhs;
            match r.rel {
                Relation::Le => {
                    t[i][s] = 1.0;
                    basis[i] = s;
                    s += 1;
                }
                Relation::Ge => {
                    t[i][s] = -1.0;
                    s += 1;
                    t[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
                Relation::Eq => {
                    t[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
            }
        }
        Tableau {
            t,
            basis,
            n_orig: n,
            n_total,
            artificial_start,
            objective: lp.objective.clone(),
        }
    }

    fn reduced_costs(&self, cost: &[f64], allowed: usize) -> Vec<f64> {
        // r_j = c_j - c_B . column_j
        (0..allowed)
            .map(|j| {
                let z: f64 = self
                    .basis
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| cost[b] * self.t[i][j])
                    .sum();
                cost[j] - z
            })
            .collect()
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.n_total + 1;
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f.abs() > 0.0 {
                for j in 0..width {
                    r[j] -= f * pivot_row[j];
                }
            }
        }
        self.basis[row] = col;
    }

    /// Maximizes `cost` using columns `< allowed`. Bland's rule.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<(), LpError> {
        let limit = 50_000;
        for _ in 0..limit {
            let rc = self.reduced_costs(cost, allowed);
            let Some(col) = (0..allowed).find(|&j| rc[j] > EPS) else {
                return Ok(());
            };
            let rhs = self.n_total;
            let mut best: Option<(usize, f64)> = None;
            for (i, r) in self.t.iter().enumerate() {
                if r[col] > EPS {
                    let ratio = r[rhs] / r[col];
                    match best {
                        None => best = Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - EPS || (ratio <= br + EPS && self.basis[i] < self.basis[bi]) {
                                best = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, _)) = best else {
                return Err(LpError::Unbounded);
            };
            self.pivot(row, col);
        }
        Err(LpError::IterationLimit(limit))
    }

    fn run(mut self) -> Result<LpSolution, LpError> {
        let rhs = self.n_total;
        if self.artificial_start < self.n_total {
            // phase 1: maximize -sum(artificials)
            let mut cost = vec![0.0; self.n_total];
            for c in cost.iter_mut().skip(self.artificial_start) {
                *c = -1.0;
            }
            self.optimize(&cost, self.n_total)?;
            let infeas: f64 = self
                .basis
                .iter()
                .enumerate()
                .filter(|(_, &b)| b >= self.artificial_start)
                .map(|(i, _)| self.t[i][rhs])
                .sum();
            if infeas > 1e-7 {
                return Err(LpError::Infeasible);
            }
            // drive remaining (zero-valued) artificials out of the basis
            for i in 0..self.basis.len() {
                if self.basis[i] >= self.artificial_start {
                    if let Some(col) =
                        (0..self.artificial_start).find(|&j| self.t[i][j].abs() > EPS)
                    {
                        self.pivot(i, col);
                    }
                }
            }
        }
        let mut cost = vec![0.0; self.n_total];
        cost[..self.n_orig].copy_from_slice(&self.objective);
        self.optimize(&cost, self.artificial_start)?;
        let mut x = vec![0.0; self.n_orig];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_orig {
                x[b] = self.t[i][rhs];
            }
        }
        let value = x.iter().zip(&self.objective).map(|(a, b)| a * b).sum();
        Ok(LpSolution { value, x })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y ; x <= 4 ; 2y <= 12 ; 3x + 2y <= 18  -> (2, 6), 36
        let mut lp = LinearProgram::maximize(vec![3.0, 5.0]);
        lp.constraint(vec![1.0, 0.0], Relation::Le, 4.0).unwrap();
        lp.constraint(vec![0.0, 2.0], Relation::Le, 12.0).unwrap();
        lp.constraint(vec![3.0, 2.0], Relation::Le, 18.0).unwrap();
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.value, 36.0, epsilon = 1e-9);
        assert_relative_eq!(s.x[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(s.x[1], 6.0, epsilon = 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x + y ; x + y = 3 ; x >= 1 ; y >= 1 -> 3
        let mut lp = LinearProgram::maximize(vec![1.0, 2.0]);
        lp.constraint(vec![1.0, 1.0], Relation::Eq, 3.0).unwrap();
        lp.constraint(vec![1.0, 0.0], Relation::Ge, 1.0).unwrap();
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.value, 5.0, epsilon = 1e-9);
        assert_relative_eq!(s.x[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        let mut lp = LinearProgram::maximize(vec![1.0]);
        lp.constraint(vec![1.0], Relation::Le, 1.0).unwrap();
        lp.constraint(vec![1.0], Relation::Ge, 2.0).unwrap();
        assert_eq!(lp.solve(), Err(LpError::Infeasible));
    }

    #[test]
    fn detects_unbounded() {
        let mut lp = LinearProgram::maximize(vec![1.0, 0.0]);
        lp.constraint(vec![-1.0, 1.0], Relation::Le, 1.0).unwrap();
        assert_eq!(lp.solve(), Err(LpError::Unbounded));
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // max -x ; -x <= -2  (x >= 2) -> -2
        let mut lp = LinearProgram::maximize(vec![-1.0]);
        lp.constraint(vec![-1.0], Relation::Le, -2.0).unwrap();
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.value, -2.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // classic Beale-style cycling example under Dantzig's rule
        let mut lp = LinearProgram::maximize(vec![0.75, -150.0, 0.02, -6.0]);
        lp.constraint(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0).unwrap();
        lp.constraint(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0).unwrap();
        lp.constraint(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0).unwrap();
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.value, 0.05, epsilon = 1e-9);
    }
}
