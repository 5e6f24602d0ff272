//! Dense tableau simplex for `max c·x  s.t.  A x <= b, x >= 0` with `b >= 0`.
//!
//! Pricing is Dantzig (most negative reduced cost). After a run of
//! degenerate pivots the solver switches to Bland's rule until the objective
//! moves again, which rules out cycling.

use crate::error::{invalid_param, Error, Result};

pub const PIVOT_EPS: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    /// Sparse constraint rows as (variable, coefficient).
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    /// One multiplier per constraint row, all `>= 0`.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

struct Tableau {
    width: usize,
    cells: Vec<f64>,
}

impl Tableau {
    #[inline]
    fn row(&self, r: usize) -> &[f64] {
        &self.cells[r * self.width..(r + 1) * self.width]
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.cells[r * self.width + c]
    }
}

pub fn maximize(lp: &LinearProgram) -> Result<LpSolution> {
    let nv = lp.num_vars;
    let nr = lp.rows.len();
    if lp.objective.len() != nv {
        return Err(invalid_param("objective", "length differs from num_vars"));
    }
    if lp.rhs.len() != nr {
        return Err(invalid_param("rhs", "length differs from the number of rows"));
    }
    if let Some(b) = lp.rhs.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        return Err(invalid_param(
            "rhs",
            format!("must be finite and non-negative, got {b}"),
        ));
    }

    let cols = nv + nr;
    let width = cols + 1;
    let mut t = Tableau {
        width,
        cells: vec![0.0; (nr + 1) * width],
    };
    for (r, row) in lp.rows.iter().enumerate() {
        for &(k, a) in row {
            if k >= nv {
                return Err(invalid_param("rows", format!("variable {k} out of range")));
            }
            t.cells[r * width + k] += a;
        }
        t.cells[r * width + nv + r] = 1.0;
        t.cells[r * width + cols] = lp.rhs[r];
    }
    let obj = nr;
    for (k, &c) in lp.objective.iter().enumerate() {
        t.cells[obj * width + k] = -c;
    }
    let mut basis: Vec<usize> = (nv..cols).collect();

    let max_pivots = 50 * (cols + 1) + 1000;
    let mut pivots = 0;
    let mut degenerate = 0;
    let mut nz = Vec::with_capacity(width);
    loop {
        let bland = degenerate >= DEGENERATE_RUN;
        let reduced = &t.row(obj)[..cols];
        let entering = if bland {
            reduced.iter().position(|&d| d < -PIVOT_EPS)
        } else {
            let mut best = None;
            let mut best_d = -PIVOT_EPS;
            for (k, &d) in reduced.iter().enumerate() {
                if d < best_d {
                    best_d = d;
                    best = Some(k);
                }
            }
            best
        };
        let Some(e) = entering else { break };

        let mut leave: Option<(usize, f64)> = None;
        for r in 0..nr {
            let a = t.at(r, e);
            if a > PIVOT_EPS {
                let ratio = t.at(r, cols) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        let tie = (ratio - lratio).abs() <= 1e-12 * lratio.abs().max(1.0);
                        if ratio < lratio && !tie || tie && basis[r] < basis[lr] {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        let Some((l, ratio)) = leave else {
            return Err(Error::Unbounded);
        };

        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Inconsistent(format!("simplex exceeded {max_pivots} pivots")));
        }
        if ratio <= PIVOT_EPS {
            degenerate += 1;
        } else {
            degenerate = 0;
        }

        let piv = t.at(l, e);
        {
            let prow = &mut t.cells[l * width..(l + 1) * width];
            nz.clear();
            for (k, x) in prow.iter_mut().enumerate() {
                if *x != 0.0 {
                    *x /= piv;
                    nz.push(k);
                }
            }
            prow[e] = 1.0;
        }
        let (before, rest) = t.cells.split_at_mut(l * width);
        let (prow, after) = rest.split_at_mut(width);
        let eliminate = |row: &mut [f64]| {
            let f = row[e];
            if f != 0.0 {
                for &k in &nz {
                    row[k] -= f * prow[k];
                }
                row[e] = 0.0;
            }
        };
        for row in before.chunks_exact_mut(width) {
            eliminate(row);
        }
        for row in after.chunks_exact_mut(width) {
            eliminate(row);
        }
        basis[l] = e;
    }

    let mut x = vec![0.0; nv];
    for (r, &b) in basis.iter().enumerate() {
        if b < nv {
            x[b] = t.at(r, cols).max(0.0);
        }
    }
    let duals = (0..nr).map(|r| t.at(obj, nv + r).max(0.0)).collect();
    Ok(LpSolution {
        value: t.at(obj, cols),
        x,
        duals,
        pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y  s.t.  x <= 4, 2y <= 12, 3x + 2y <= 18  ->  36 at (2, 6)
        let lp = LinearProgram {
            num_vars: 2,
            objective: vec![3.0, 5.0],
            rows: vec![vec![(0, 1.0)], vec![(1, 2.0)], vec![(0, 3.0), (1, 2.0)]],
            rhs: vec![4.0, 12.0, 18.0],
        };
        let s = maximize(&lp).unwrap();
        assert!((s.value - 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
        // duals (0, 1.5, 1) by complementary slackness
        assert!((s.duals[0]).abs() < 1e-9);
        assert!((s.duals[1] - 1.5).abs() < 1e-9);
        assert!((s.duals[2] - 1.0).abs() < 1e-9);
        let dual_obj: f64 = s.duals.iter().zip(&lp.rhs).map(|(y, b)| y * b).sum();
        assert!((dual_obj - s.value).abs() < 1e-9);
    }

    #[test]
    fn unbounded_is_reported() {
        let lp = LinearProgram {
            num_vars: 2,
            objective: vec![1.0, 1.0],
            rows: vec![vec![(0, 1.0), (1, -1.0)]],
            rhs: vec![1.0],
        };
        assert!(matches!(maximize(&lp), Err(Error::Unbounded)));
    }

    #[test]
    fn degenerate_start_terminates() {
        // Beale-style degenerate corner at the origin.
        let lp = LinearProgram {
            num_vars: 4,
            objective: vec![0.75, -150.0, 0.02, -6.0],
            rows: vec![
                vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)],
                vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)],
                vec![(2, 1.0)],
            ],
            rhs: vec![0.0, 0.0, 1.0],
        };
        let s = maximize(&lp).unwrap();
        assert!((s.value - 0.05).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_rejected() {
        let lp = LinearProgram {
            num_vars: 1,
            objective: vec![1.0],
            rows: vec![vec![(0, 1.0)]],
            rhs: vec![-1.0],
        };
        assert!(maximize(&lp).is_err());
    }
}
