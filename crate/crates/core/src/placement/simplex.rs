//! Dense two-phase primal simplex for the solver's LP relaxations.
//!
//! Small by design: relaxations at desk scale have tens of variables and a
//! handful of rows plus unit upper bounds. Bland's rule keeps the pivot
//! sequence finite and deterministic.

use alloc::vec;
use alloc::vec::Vec;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Rel {
    Le,
    Ge,
}

#[derive(Debug, Clone)]
pub(crate) struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Rel,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

/// Maximizes `obj . x` subject to the constraints and `x >= 0`.
///
/// Every right-hand side must be non-negative; callers arrange their rows so
/// that this holds.
pub(crate) fn maximize(obj: &[f64], constraints: &[Constraint]) -> LpOutcome {
    let n = obj.len();
    let m = constraints.len();
    debug_assert!(constraints.iter().all(|c| c.rhs >= 0.0 && c.coeffs.len() == n));

    if m == 0 {
        // Only x >= 0: optimum is 0 unless some coefficient is positive.
        if obj.iter().any(|&c| c > EPS) {
            return LpOutcome::Unbounded;
        }
        return LpOutcome::Optimal {
            x: vec![0.0; n],
            objective: 0.0,
        };
    }

    // Column layout: structural | slack/surplus (one per row) | artificial.
    let num_art = constraints.iter().filter(|c| c.rel == Rel::Ge).count();
    let total = n + m + num_art;
    let mut tab = vec![vec![0.0f64; total + 1]; m];
    let mut basis = vec![0usize; m];
    let mut art_cols = Vec::with_capacity(num_art);

    let mut next_art = n + m;
    for (i, c) in constraints.iter().enumerate() {
        tab[i][..n].copy_from_slice(&c.coeffs);
        tab[i][total] = c.rhs;
        match c.rel {
            Rel::Le => {
                tab[i][n + i] = 1.0;
                basis[i] = n + i;
            }
            Rel::Ge => {
                tab[i][n + i] = -1.0;
                tab[i][next_art] = 1.0;
                basis[i] = next_art;
                art_cols.push(next_art);
                next_art += 1;
            }
        }
    }

    // Phase 1: drive the artificials to zero.
    if num_art > 0 {
        let mut cost = vec![0.0f64; total + 1];
        for (i, &b) in basis.iter().enumerate() {
            if art_cols.contains(&b) {
                for j in 0..=total {
                    cost[j] += tab[i][j];
                }
            }
        }
        for &a in &art_cols {
            cost[a] = 0.0;
        }
        if !pivot_loop(&mut tab, &mut basis, &mut cost, total, &[]) {
            // Phase 1 is bounded by construction.
            return LpOutcome::Infeasible;
        }
        if cost[total] > EPS {
            return LpOutcome::Infeasible;
        }
        // Pivot any leftover zero-valued artificial out of the basis.
        for i in 0..m {
            if art_cols.contains(&basis[i]) {
                if let Some(j) = (0..n + m).find(|&j| tab[i][j].abs() > EPS) {
                    pivot(&mut tab, &mut basis, &mut cost, total, i, j);
                }
            }
        }
    }

    // Phase 2: price out the real objective over the current basis.
    let mut cost = vec![0.0f64; total + 1];
    cost[..n].copy_from_slice(obj);
    for (i, &b) in basis.iter().enumerate() {
        if b < n && cost[b].abs() > 0.0 {
            let scale = cost[b];
            for j in 0..=total {
                cost[j] -= scale * tab[i][j];
            }
        }
    }
    for &a in &art_cols {
        cost[a] = f64::NEG_INFINITY; // never re-enter
    }
    if !pivot_loop(&mut tab, &mut basis, &mut cost, total, &art_cols) {
        return LpOutcome::Unbounded;
    }

    let mut x = vec![0.0f64; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] = tab[i][total];
        }
    }
    let objective = obj.iter().zip(&x).map(|(c, v)| c * v).sum();
    LpOutcome::Optimal { x, objective }
}

/// Bland-rule pivoting until no reduced cost improves. Returns false on
/// unboundedness.
fn pivot_loop(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &mut [f64],
    total: usize,
    banned: &[usize],
) -> bool {
    let m = tab.len();
    loop {
        let entering = (0..total).find(|&j| cost[j] > EPS && !banned.contains(&j));
        let Some(j) = entering else {
            return true;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if tab[i][j] > EPS {
                let ratio = tab[i][total] / tab[i][j];
                let better = match leave {
                    None => true,
                    Some(r) => {
                        ratio < best - EPS || (ratio < best + EPS && basis[i] < basis[r])
                    }
                };
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(r) = leave else {
            return false;
        };
        pivot(tab, basis, cost, total, r, j);
    }
}

fn pivot(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &mut [f64],
    total: usize,
    row: usize,
    col: usize,
) {
    let scale = tab[row][col];
    for v in tab[row].iter_mut() {
        *v /= scale;
    }
    for i in 0..tab.len() {
        if i != row && tab[i][col].abs() > 0.0 {
            let factor = tab[i][col];
            for j in 0..=total {
                tab[i][j] -= factor * tab[row][j];
            }
            tab[i][col] = 0.0;
        }
    }
    if cost[col].is_finite() && cost[col].abs() > 0.0 {
        let factor = cost[col];
        for j in 0..=total {
            if cost[j].is_finite() {
                cost[j] -= factor * tab[row][j];
            }
        }
        cost[col] = 0.0;
    }
    basis[row] = col;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn le(coeffs: Vec<f64>, rhs: f64) -> Constraint {
        Constraint {
            coeffs,
            rel: Rel::Le,
            rhs,
        }
    }

    fn ge(coeffs: Vec<f64>, rhs: f64) -> Constraint {
        Constraint {
            coeffs,
            rel: Rel::Ge,
            rhs,
        }
    }

    #[test]
    fn fractional_knapsack() {
        // max 3a + 2b, a + b <= 1.5, a <= 1, b <= 1  ->  a = 1, b = 0.5.
        let out = maximize(
            &[3.0, 2.0],
            &[
                le(vec![1.0, 1.0], 1.5),
                le(vec![1.0, 0.0], 1.0),
                le(vec![0.0, 1.0], 1.0),
            ],
        );
        match out {
            LpOutcome::Optimal { x, objective } => {
                assert!((x[0] - 1.0).abs() < 1e-9);
                assert!((x[1] - 0.5).abs() < 1e-9);
                assert!((objective - 4.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ge_constraint_forces_floor() {
        // max -x subject to x >= 2, x <= 5: optimum x = 2.
        let out = maximize(&[-1.0], &[ge(vec![1.0], 2.0), le(vec![1.0], 5.0)]);
        match out {
            LpOutcome::Optimal { x, objective } => {
                assert!((x[0] - 2.0).abs() < 1e-9);
                assert!((objective + 2.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_detected() {
        // x >= 3 and x <= 1 cannot both hold.
        let out = maximize(&[1.0], &[ge(vec![1.0], 3.0), le(vec![1.0], 1.0)]);
        assert_eq!(out, LpOutcome::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let out = maximize(&[1.0], &[ge(vec![1.0], 1.0)]);
        assert_eq!(out, LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_equalities_terminate() {
        // Redundant rows exercise the leftover-artificial cleanup.
        let out = maximize(
            &[1.0, 1.0],
            &[
                ge(vec![1.0, 1.0], 1.0),
                ge(vec![2.0, 2.0], 2.0),
                le(vec![1.0, 0.0], 1.0),
                le(vec![0.0, 1.0], 1.0),
            ],
        );
        match out {
            LpOutcome::Optimal { objective, .. } => assert!((objective - 2.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }
}
