//! Dense two-phase simplex over exact rationals.
//!
//! Built for capacity-region queries: tens of constraint rows, up to a few
//! thousand columns. Dantzig pricing with a Bland fallback after a run of
//! degenerate pivots, so it terminates on degenerate instances.

use num_traits::{One, Signed, Zero};

use crate::rat::Rat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    /// Sparse (column, coefficient) pairs.
    pub coeffs: Vec<(usize, Rat)>,
    pub rel: Rel,
    pub rhs: Rat,
}

#[derive(Debug, Clone)]
pub struct LinProg {
    pub num_vars: usize,
    pub constraints: Vec<Constraint>,
    /// Sparse objective over the structural variables.
    pub objective: Vec<(usize, Rat)>,
    pub maximize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Infeasible,
    Unbounded,
    Optimal { objective: Rat, solution: Vec<Rat> },
}

struct Tableau {
    rows: Vec<Vec<Rat>>,
    rhs: Vec<Rat>,
    /// Basic variable per row.
    basis: Vec<usize>,
    /// Reduced-cost row of the active (minimization) objective.
    obj: Vec<Rat>,
    obj_value: Rat,
    cols: usize,
    /// Columns barred from entering (artificials in phase 2).
    banned: Vec<bool>,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let pivot = self.rows[row][col].clone();
        debug_assert!(!pivot.is_zero());
        if !pivot.is_one() {
            for v in self.rows[row].iter_mut() {
                if !v.is_zero() {
                    *v /= &pivot;
                }
            }
            self.rhs[row] /= &pivot;
        }
        let pivot_row = self.rows[row].clone();
        let pivot_rhs = self.rhs[row].clone();
        for r in 0..self.rows.len() {
            if r == row {
                continue;
            }
            let factor = self.rows[r][col].clone();
            if factor.is_zero() {
                continue;
            }
            for c in 0..self.cols {
                if !pivot_row[c].is_zero() {
                    let delta = &factor * &pivot_row[c];
                    self.rows[r][c] -= delta;
                }
            }
            self.rhs[r] -= &factor * &pivot_rhs;
        }
        let factor = self.obj[col].clone();
        if !factor.is_zero() {
            for c in 0..self.cols {
                if !pivot_row[c].is_zero() {
                    let delta = &factor * &pivot_row[c];
                    self.obj[c] -= delta;
                }
            }
            self.obj_value -= &factor * &pivot_rhs;
        }
        self.basis[row] = col;
    }

    /// Minimizes the loaded objective. Returns false when unbounded.
    fn run(&mut self) -> bool {
        let mut degenerate_run = 0usize;
        loop {
            let bland = degenerate_run > 24;
            let mut entering: Option<usize> = None;
            let mut best: Option<Rat> = None;
            for c in 0..self.cols {
                if self.banned[c] || !self.obj[c].is_negative() {
                    continue;
                }
                if bland {
                    entering = Some(c);
                    break;
                }
                if best.as_ref().map_or(true, |b| self.obj[c] < *b) {
                    best = Some(self.obj[c].clone());
                    entering = Some(c);
                }
            }
            let Some(col) = entering else { return true };
            // Ratio test; ties by smallest basic variable (Bland-safe).
            let mut leave: Option<(usize, Rat)> = None;
            for r in 0..self.rows.len() {
                if !self.rows[r][col].is_positive() {
                    continue;
                }
                let ratio = &self.rhs[r] / &self.rows[r][col];
                let better = match &leave {
                    None => true,
                    Some((lr, lratio)) => {
                        ratio < *lratio || (ratio == *lratio && self.basis[r] < self.basis[*lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
            let Some((row, ratio)) = leave else { return false };
            if ratio.is_zero() {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(row, col);
        }
    }
}

/// Solves the program exactly.
pub fn solve(lp: &LinProg) -> LpOutcome {
    let m = lp.constraints.len();
    let slack_count = lp
        .constraints
        .iter()
        .filter(|c| c.rel == Rel::Le)
        .count();
    // Column layout: structural | slack | artificial.
    let slack_base = lp.num_vars;
    let art_base = slack_base + slack_count;
    let mut cols = art_base;
    let mut rows: Vec<Vec<Rat>> = Vec::with_capacity(m);
    let mut rhs: Vec<Rat> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let mut artificial_cols: Vec<usize> = Vec::new();
    let mut slack_idx = 0usize;
    let mut pending_artificial: Vec<usize> = Vec::new();
    for (r, con) in lp.constraints.iter().enumerate() {
        let mut row = vec![Rat::zero(); art_base];
        for (c, v) in &con.coeffs {
            debug_assert!(*c < lp.num_vars);
            row[*c] += v.clone();
        }
        let mut b = con.rhs.clone();
        if con.rel == Rel::Le {
            row[slack_base + slack_idx] = Rat::one();
            slack_idx += 1;
        }
        if b.is_negative() {
            for v in row.iter_mut() {
                if !v.is_zero() {
                    *v = -v.clone();
                }
            }
            b = -b;
        }
        // A slack with +1 coefficient and nonnegative rhs can seed the basis;
        // otherwise the row needs an artificial.
        let slack_col = (con.rel == Rel::Le).then(|| slack_base + slack_idx - 1);
        match slack_col {
            Some(sc) if row[sc].is_one() => basis.push(sc),
            _ => {
                pending_artificial.push(r);
                basis.push(usize::MAX); // patched below
            }
        }
        rows.push(row);
        rhs.push(b);
    }
    for &r in &pending_artificial {
        let col = cols;
        cols += 1;
        artificial_cols.push(col);
        for (i, row) in rows.iter_mut().enumerate() {
            row.push(if i == r { Rat::one() } else { Rat::zero() });
        }
        basis[r] = col;
    }
    let mut tab = Tableau {
        rows,
        rhs,
        basis,
        obj: vec![Rat::zero(); cols],
        obj_value: Rat::zero(),
        cols,
        banned: vec![false; cols],
    };

    // Phase 1: minimize the artificial sum.
    if !artificial_cols.is_empty() {
        for &c in &artificial_cols {
            tab.obj[c] = Rat::one();
        }
        // Price out the artificial basis.
        for r in 0..m {
            if artificial_cols.contains(&tab.basis[r]) {
                let row = tab.rows[r].clone();
                let b = tab.rhs[r].clone();
                for c in 0..tab.cols {
                    if !row[c].is_zero() {
                        let delta = row[c].clone();
                        tab.obj[c] -= delta;
                    }
                }
                tab.obj_value -= b;
            }
        }
        let bounded = tab.run();
        debug_assert!(bounded, "phase-1 objective is bounded below by zero");
        if !tab.obj_value.is_zero() {
            return LpOutcome::Infeasible;
        }
        // Drive leftover artificials out of the basis; drop redundant rows.
        for r in 0..m {
            if !artificial_cols.contains(&tab.basis[r]) {
                continue;
            }
            if let Some(c) = (0..art_base).find(|&c| !tab.rows[r][c].is_zero()) {
                tab.pivot(r, c);
            }
            // Otherwise the row is redundant (all-zero over real columns);
            // its basic artificial stays at value zero and is banned below.
        }
        for &c in &artificial_cols {
            tab.banned[c] = true;
        }
    }

    // Phase 2: the real objective, as minimization.
    tab.obj = vec![Rat::zero(); tab.cols];
    tab.obj_value = Rat::zero();
    for (c, v) in &lp.objective {
        tab.obj[*c] = if lp.maximize { -v.clone() } else { v.clone() };
    }
    for r in 0..tab.rows.len() {
        let bc = tab.basis[r];
        if tab.obj[bc].is_zero() {
            continue;
        }
        let factor = tab.obj[bc].clone();
        let row = tab.rows[r].clone();
        let b = tab.rhs[r].clone();
        for c in 0..tab.cols {
            if !row[c].is_zero() {
                let delta = &factor * &row[c];
                tab.obj[c] -= delta;
            }
        }
        tab.obj_value -= &factor * &b;
    }
    if !tab.run() {
        return LpOutcome::Unbounded;
    }
    let mut solution = vec![Rat::zero(); lp.num_vars];
    for r in 0..tab.rows.len() {
        if tab.basis[r] < lp.num_vars {
            solution[tab.basis[r]] = tab.rhs[r].clone();
        }
    }
    // The objective row tracks the negated value of the minimized objective;
    // maximization ran on the negated costs, which cancels the sign.
    let objective = if lp.maximize {
        tab.obj_value.clone()
    } else {
        -tab.obj_value.clone()
    };
    LpOutcome::Optimal {
        objective,
        solution,
    }
}
