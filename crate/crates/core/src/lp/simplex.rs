use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

use super::{Bound, ConstraintSet, Solution};
use crate::time::Millis;

type Q = Ratio<i128>;

/// Solves the program as a general LP: maximize the weighted sum of interval
/// widths subject to every constraint and `tmin <= tmax`, using a two-phase
/// simplex over exact rationals with Bland's rule. Intended for cross-checks
/// on small instances; infeasibility carries no culprits.
pub fn solve_lp_oracle(cs: &ConstraintSet) -> Solution {
    let Ok(fixed) = cs.fixed_values() else {
        return Solution::infeasible(Vec::new());
    };
    // Shift all constants so the tableau stays small.
    let base = fixed.iter().flatten().copied().min().unwrap_or(0);
    let n = cs.variables.len();
    // Column of each free (variable, bound); each is split into two
    // non-negative columns, `pos - neg`.
    let mut column = vec![[usize::MAX; 2]; n];
    let mut cols = 0;
    for v in 0..n {
        if fixed[v].is_none() {
            column[v] = [cols, cols + 2];
            cols += 4;
        }
    }
    let fam = |b: Bound| match b {
        Bound::Tmin => 0,
        Bound::Tmax => 1,
    };
    // Rows `a . x <= b` over signed free variables.
    let mut rows: Vec<(Vec<(usize, i128)>, i128)> = Vec::new();
    for c in &cs.constraints {
        let mut terms = Vec::new();
        let mut rhs = c.offset as i128;
        match fixed[c.lhs] {
            Some(x) => rhs -= (x - base) as i128,
            None => terms.push((column[c.lhs][fam(c.bound)], 1)),
        }
        match fixed[c.rhs] {
            Some(x) => rhs += (x - base) as i128,
            None => terms.push((column[c.rhs][fam(c.bound)], -1)),
        }
        if terms.is_empty() {
            if rhs < 0 {
                return Solution::infeasible(Vec::new());
            }
            continue;
        }
        rows.push((terms, rhs));
    }
    for v in 0..n {
        if fixed[v].is_none() {
            rows.push((vec![(column[v][0], 1), (column[v][1], -1)], 0));
        }
    }
    let weights = cs.weights();
    let mut cost = vec![Q::zero(); cols];
    for v in 0..n {
        if fixed[v].is_none() {
            let w = Q::from_integer(weights[v]);
            // + w * tmax - w * tmin, each split into pos - neg.
            cost[column[v][1]] = w;
            cost[column[v][1] + 1] = -w;
            cost[column[v][0]] = -w;
            cost[column[v][0] + 1] = w;
        }
    }
    let dense: Vec<(Vec<Q>, Q)> = rows
        .into_iter()
        .map(|(terms, rhs)| {
            let mut a = vec![Q::zero(); cols];
            for (c, s) in terms {
                a[c] += Q::from_integer(s);
                a[c + 1] -= Q::from_integer(s);
            }
            (a, Q::from_integer(rhs))
        })
        .collect();
    let Some(x) = maximize(&cost, &dense) else {
        return Solution::infeasible(Vec::new());
    };
    let value = |c: usize| -> Millis {
        let q = x[c] - x[c + 1];
        debug_assert!(q.is_integer(), "difference constraints have integral vertices");
        q.to_integer() as Millis + base
    };
    let mut tmin = vec![0; n];
    let mut tmax = vec![0; n];
    for v in 0..n {
        match fixed[v] {
            Some(f) => {
                tmin[v] = f;
                tmax[v] = f;
            }
            None => {
                tmin[v] = value(column[v][0]);
                tmax[v] = value(column[v][1]);
            }
        }
    }
    Solution::from_values(cs, &tmin, &tmax)
}

/// Maximizes `cost . x` subject to `a x <= b`, `x >= 0`. `None` when the
/// program is infeasible or unbounded.
fn maximize(cost: &[Q], rows: &[(Vec<Q>, Q)]) -> Option<Vec<Q>> {
    let n = cost.len();
    let m = rows.len();
    // Columns: originals, one slack per row, one artificial per negative row.
    let negative: Vec<usize> = (0..m).filter(|&i| rows[i].1.is_negative()).collect();
    let width = n + m + negative.len();
    let mut t = Tableau {
        rows: Vec::with_capacity(m),
        basis: Vec::with_capacity(m),
    };
    for (i, (a, b)) in rows.iter().enumerate() {
        let mut row = vec![Q::zero(); width + 1];
        let sign = if b.is_negative() { -Q::one() } else { Q::one() };
        for j in 0..n {
            row[j] = a[j] * sign;
        }
        row[n + i] = sign;
        row[width] = b * sign;
        match negative.iter().position(|&k| k == i) {
            Some(k) => {
                row[n + m + k] = Q::one();
                t.basis.push(n + m + k);
            }
            None => t.basis.push(n + i),
        }
        t.rows.push(row);
    }
    let artificial = |j: usize| j >= n + m;

    if !negative.is_empty() {
        let mut phase1 = vec![Q::zero(); width];
        for j in n + m..width {
            phase1[j] = -Q::one();
        }
        t.optimize(&phase1, &|_| true)?;
        let infeasibility: Q = t
            .basis
            .iter()
            .zip(&t.rows)
            .filter(|(&b, _)| artificial(b))
            .map(|(_, r)| r[width])
            .sum();
        if !infeasibility.is_zero() {
            return None;
        }
        // Drive remaining (zero) artificials out of the basis where possible.
        for i in 0..m {
            if artificial(t.basis[i]) {
                if let Some(j) = (0..n + m).find(|&j| !t.rows[i][j].is_zero()) {
                    t.pivot(i, j);
                }
            }
        }
    }
    let mut phase2 = vec![Q::zero(); width];
    phase2[..n].clone_from_slice(cost);
    t.optimize(&phase2, &|j| !artificial(j))?;
    let mut x = vec![Q::zero(); n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rows[i][width];
        }
    }
    Some(x)
}

struct Tableau {
    rows: Vec<Vec<Q>>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= f * p;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Primal simplex with Bland's rule; `None` if unbounded.
    fn optimize(&mut self, cost: &[Q], allowed: &dyn Fn(usize) -> bool) -> Option<()> {
        let width = cost.len();
        loop {
            // Reduced cost c_j - c_B B^-1 A_j; enter on the first positive one.
            let entering = (0..width).filter(|&j| allowed(j) && !self.basis.contains(&j)).find(|&j| {
                let z: Q = self.rows.iter().zip(&self.basis).map(|(row, &b)| cost[b] * row[j]).sum();
                (cost[j] - z).is_positive()
            });
            let Some(c) = entering else { return Some(()) };
            let leaving = (0..self.rows.len())
                .filter(|&i| self.rows[i][c].is_positive())
                .min_by(|&i, &k| {
                    let ri = self.rows[i][width] / self.rows[i][c];
                    let rk = self.rows[k][width] / self.rows[k][c];
                    ri.cmp(&rk).then(self.basis[i].cmp(&self.basis[k]))
                });
            let r = leaving?;
            self.pivot(r, c);
        }
    }
}
