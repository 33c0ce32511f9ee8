//! Exact matrix-game solving by linear programming.
//!
//! One small dense simplex, generic over the scalar, backs every linear
//! program in the crate. Instantiated with [`Rational`] it is exact: pivots
//! are big-rational Gauss-Jordan steps and the returned value and strategies
//! are certified by strong duality with zero tolerance. Instantiated with
//! `f64` it serves the inner loops of iterative fixpoint solvers where
//! approximate stage values are acceptable (and flagged as such upstream).
//!
//! # Matrix games
//!
//! [`solve_matrix_game`] computes the value of a zero-sum matrix game
//! (rows maximize, columns minimize) together with optimal mixed strategies
//! for both sides. The classic positivity transformation is used: shift all
//! entries by `k` so they are at least 1, solve
//!
//! ```text
//! max 1'y   subject to  (M + k) y <= 1,  y >= 0
//! ```
//!
//! whose optimum is `1 / (v + k)`; the normalized primal solution is the
//! column player's optimal mixture and the normalized duals (read off the
//! slack columns of the final tableau) are the row player's. Bland's rule
//! makes the pivot sequence deterministic and cycle-free, which also fixes
//! a deterministic tie-break among optimal strategies.

use crate::rational::Rational;
use num::{One, Signed, Zero};
use thiserror::Error;

/// Scalar abstraction for the simplex: exact rationals or doubles.
pub trait LpScalar: Clone + PartialOrd {
    fn lp_zero() -> Self;
    fn lp_one() -> Self;
    fn lp_add(&self, other: &Self) -> Self;
    fn lp_sub(&self, other: &Self) -> Self;
    fn lp_mul(&self, other: &Self) -> Self;
    fn lp_div(&self, other: &Self) -> Self;
    fn lp_neg(&self) -> Self;
    /// Strictly below `-eps` for the scalar's pivoting tolerance.
    fn is_neg(&self) -> bool;
    /// Strictly above `+eps` for the scalar's pivoting tolerance.
    fn is_pos(&self) -> bool;
}

impl LpScalar for Rational {
    fn lp_zero() -> Self {
        Zero::zero()
    }
    fn lp_one() -> Self {
        One::one()
    }
    fn lp_add(&self, other: &Self) -> Self {
        self + other
    }
    fn lp_sub(&self, other: &Self) -> Self {
        self - other
    }
    fn lp_mul(&self, other: &Self) -> Self {
        self * other
    }
    fn lp_div(&self, other: &Self) -> Self {
        self / other
    }
    fn lp_neg(&self) -> Self {
        -self
    }
    fn is_neg(&self) -> bool {
        self.is_negative()
    }
    fn is_pos(&self) -> bool {
        self.is_positive()
    }
}

impl LpScalar for f64 {
    fn lp_zero() -> Self {
        0.0
    }
    fn lp_one() -> Self {
        1.0
    }
    fn lp_add(&self, other: &Self) -> Self {
        self + other
    }
    fn lp_sub(&self, other: &Self) -> Self {
        self - other
    }
    fn lp_mul(&self, other: &Self) -> Self {
        self * other
    }
    fn lp_div(&self, other: &Self) -> Self {
        self / other
    }
    fn lp_neg(&self) -> Self {
        -self
    }
    fn is_neg(&self) -> bool {
        *self < -1e-12
    }
    fn is_pos(&self) -> bool {
        *self > 1e-12
    }
}

/// Failures of the LP solver.
#[derive(Debug, Error)]
pub enum LpError {
    #[error("matrix game must have at least one row and one column")]
    Empty,
    #[error("linear program unbounded (malformed game matrix)")]
    Unbounded,
    #[error("simplex exceeded the pivot budget ({0} pivots)")]
    PivotBudget(usize),
}

/// Value and optimal mixed strategies of a zero-sum matrix game.
#[derive(Debug, Clone)]
pub struct MatrixGameSolution<T> {
    /// Game value for the row (maximizing) player.
    pub value: T,
    /// Optimal row mixture, length = number of rows.
    pub row_strategy: Vec<T>,
    /// Optimal column mixture, length = number of columns.
    pub col_strategy: Vec<T>,
}

/// Solves the zero-sum game `entries[r][c]` with rows maximizing.
pub fn solve_matrix_game<T: LpScalar>(
    entries: &[Vec<T>],
) -> Result<MatrixGameSolution<T>, LpError> {
    let m = entries.len();
    if m == 0 || entries[0].is_empty() {
        return Err(LpError::Empty);
    }
    let n = entries[0].len();

    // Shift so every entry is >= 1: guarantees a positive game value and a
    // bounded feasible region for the normalized LP.
    let mut min_entry = entries[0][0].clone();
    for row in entries {
        debug_assert_eq!(row.len(), n);
        for e in row {
            if *e < min_entry {
                min_entry = e.clone();
            }
        }
    }
    let shift = T::lp_one().lp_sub(&min_entry);

    // Tableau columns: 0..n structural y, n..n+m slacks, last = rhs.
    let width = n + m + 1;
    let mut tab: Vec<Vec<T>> = Vec::with_capacity(m);
    for (r, row) in entries.iter().enumerate() {
        let mut trow = Vec::with_capacity(width);
        for e in row {
            trow.push(e.lp_add(&shift));
        }
        for s in 0..m {
            trow.push(if s == r { T::lp_one() } else { T::lp_zero() });
        }
        trow.push(T::lp_one());
        tab.push(trow);
    }
    // Reduced-cost row for `max 1'y`: structural costs 1 => initial entries -1.
    let mut obj: Vec<T> = Vec::with_capacity(width);
    for _ in 0..n {
        obj.push(T::lp_one().lp_neg());
    }
    for _ in 0..(m + 1) {
        obj.push(T::lp_zero());
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let budget = 2000 * (m + n + 1);
    let mut pivots = 0;
    loop {
        // Bland: entering variable = lowest index with negative reduced cost.
        let Some(enter) = (0..n + m).find(|&j| obj[j].is_neg()) else {
            break;
        };
        // Ratio test; Bland tie-break by lowest basis variable index.
        let mut leave: Option<(usize, T)> = None;
        for i in 0..m {
            if tab[i][enter].is_pos() {
                let ratio = tab[i][width - 1].lp_div(&tab[i][enter]);
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < *lr || (ratio == *lr && basis[i] < basis[*li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((pivot_row, _)) = leave else {
            return Err(LpError::Unbounded);
        };
        pivots += 1;
        if pivots > budget {
            return Err(LpError::PivotBudget(budget));
        }

        // Gauss-Jordan pivot.
        let pivot = tab[pivot_row][enter].clone();
        for x in tab[pivot_row].iter_mut() {
            *x = x.lp_div(&pivot);
        }
        for i in 0..m {
            if i != pivot_row && (tab[i][enter].is_pos() || tab[i][enter].is_neg()) {
                let factor = tab[i][enter].clone();
                for j in 0..width {
                    let delta = factor.lp_mul(&tab[pivot_row][j]);
                    tab[i][j] = tab[i][j].lp_sub(&delta);
                }
            }
        }
        if obj[enter].is_pos() || obj[enter].is_neg() {
            let factor = obj[enter].clone();
            for j in 0..width {
                let delta = factor.lp_mul(&tab[pivot_row][j]);
                obj[j] = obj[j].lp_sub(&delta);
            }
        }
        basis[pivot_row] = enter;
    }

    // Optimal objective = 1/(value + shift); recover both strategies.
    let mut y = vec![T::lp_zero(); n];
    for i in 0..m {
        if basis[i] < n {
            y[basis[i]] = tab[i][width - 1].clone();
        }
    }
    let mut y_total = T::lp_zero();
    for v in &y {
        y_total = y_total.lp_add(v);
    }
    if !y_total.is_pos() {
        // Cannot happen for shifted matrices (value >= 1), kept as a guard.
        return Err(LpError::Unbounded);
    }
    let shifted_value = T::lp_one().lp_div(&y_total);
    let value = shifted_value.lp_sub(&shift);

    let col_strategy: Vec<T> = y.iter().map(|v| v.lp_mul(&shifted_value)).collect();
    let mut row_strategy: Vec<T> = (0..m).map(|i| obj[n + i].lp_mul(&shifted_value)).collect();
    // Duals can carry tiny negative noise in the f64 instantiation; clamp.
    for v in row_strategy.iter_mut() {
        if v.is_neg() || *v < T::lp_zero() {
            *v = T::lp_zero();
        }
    }
    // Renormalize the row strategy exactly (sums to 1 already for rationals).
    let mut row_total = T::lp_zero();
    for v in &row_strategy {
        row_total = row_total.lp_add(v);
    }
    if row_total.is_pos() {
        for v in row_strategy.iter_mut() {
            *v = v.lp_div(&row_total);
        }
    }

    Ok(MatrixGameSolution {
        value,
        row_strategy,
        col_strategy,
    })
}

/// Exact worst-case payoff of the row mixture `x`: `min_c x' M e_c`.
pub fn row_guarantee(entries: &[Vec<Rational>], x: &[Rational]) -> Rational {
    let n = entries[0].len();
    (0..n)
        .map(|c| {
            entries
                .iter()
                .zip(x)
                .map(|(row, xi)| &row[c] * xi)
                .fold(Rational::zero(), |a, b| a + b)
        })
        .min()
        .unwrap()
}

/// Exact worst-case loss of the column mixture `q`: `max_r e_r' M q`.
pub fn col_exposure(entries: &[Vec<Rational>], q: &[Rational]) -> Rational {
    entries
        .iter()
        .map(|row| {
            row.iter()
                .zip(q)
                .map(|(e, qi)| e * qi)
                .fold(Rational::zero(), |a, b| a + b)
        })
        .max()
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};
    use proptest::prelude::*;

    fn rows(entries: &[&[i64]]) -> Vec<Vec<Rational>> {
        entries
            .iter()
            .map(|r| r.iter().map(|&e| rat(e)).collect())
            .collect()
    }

    /// Strong-duality check: both strategies guarantee the value exactly.
    fn assert_certified(entries: &[Vec<Rational>], sol: &MatrixGameSolution<Rational>) {
        assert_eq!(row_guarantee(entries, &sol.row_strategy), sol.value);
        assert_eq!(col_exposure(entries, &sol.col_strategy), sol.value);
        let sum_r: Rational = sol.row_strategy.iter().cloned().sum();
        let sum_c: Rational = sol.col_strategy.iter().cloned().sum();
        assert!(sum_r.is_one() && sum_c.is_one());
    }

    #[test]
    fn matching_pennies_has_value_half_with_uniform_strategies() {
        let m = rows(&[&[1, 0], &[0, 1]]);
        let sol = solve_matrix_game(&m).unwrap();
        assert_eq!(sol.value, ratio(1, 2));
        assert_eq!(sol.row_strategy, vec![ratio(1, 2), ratio(1, 2)]);
        assert_eq!(sol.col_strategy, vec![ratio(1, 2), ratio(1, 2)]);
        assert_certified(&m, &sol);
    }

    #[test]
    fn mixed_2x2_matches_the_closed_form() {
        // Value of [[a,b],[c,d]] with interior equilibrium:
        // (a*d - b*c) / (a - b - c + d).
        let m = rows(&[&[4, 1], &[2, 3]]);
        let sol = solve_matrix_game(&m).unwrap();
        assert_eq!(sol.value, ratio(4 * 3 - 1 * 2, 4 - 1 - 2 + 3));
        assert_certified(&m, &sol);
    }

    #[test]
    fn saddle_points_come_out_pure() {
        // Row 0 dominates; column 1 is the minimizer's best reply.
        let m = rows(&[&[2, 1], &[0, -1]]);
        let sol = solve_matrix_game(&m).unwrap();
        assert_eq!(sol.value, rat(1));
        assert_eq!(sol.row_strategy, vec![rat(1), rat(0)]);
        assert_certified(&m, &sol);
    }

    #[test]
    fn negative_and_rectangular_matrices_work() {
        let m = rows(&[&[-3, -1, -2], &[-1, -4, -2]]);
        let sol = solve_matrix_game(&m).unwrap();
        assert_certified(&m, &sol);
        // Sanity bracket: value between the pure maximin and minimax bounds.
        assert!(sol.value >= rat(-3) && sol.value <= rat(-1));
    }

    #[test]
    fn one_by_one_game_is_its_entry() {
        let m = rows(&[&[7]]);
        let sol = solve_matrix_game(&m).unwrap();
        assert_eq!(sol.value, rat(7));
    }

    #[test]
    fn f64_instantiation_agrees_on_matching_pennies() {
        let m = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let sol = solve_matrix_game(&m).unwrap();
        assert!((sol.value - 0.5).abs() < 1e-12);
        assert!((sol.row_strategy[0] - 0.5).abs() < 1e-12);
    }

    proptest! {
        /// Random small integer games: the returned pair certifies the value
        /// exactly on both sides (max-min equals min-max, zero tolerance).
        #[test]
        fn random_games_are_exactly_certified(
            entries in proptest::collection::vec(-9i64..=9, 1..=12),
            rows_n in 1usize..=4,
        ) {
            let r = rows_n.min(entries.len());
            let c = entries.len() / r;
            prop_assume!(c >= 1);
            let m: Vec<Vec<Rational>> = (0..r)
                .map(|i| (0..c).map(|j| rat(entries[i * c + j])).collect())
                .collect();
            let sol = solve_matrix_game(&m).unwrap();
            prop_assert_eq!(row_guarantee(&m, &sol.row_strategy), sol.value.clone());
            prop_assert_eq!(col_exposure(&m, &sol.col_strategy), sol.value);
        }
    }
}
