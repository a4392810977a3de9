use super::matrix::{total_cost, Assignment, CostMatrix};
use super::AssignError;

/// Minimum-total-cost matching of size min(n_agents, n_tasks).
///
/// Among optimal matchings the lexicographically smallest pairing is
/// returned, so results do not depend on solver internals.
pub fn hungarian(c: &CostMatrix) -> Result<Assignment, AssignError> {
    if c.is_empty() {
        return Ok(Assignment::empty());
    }
    if c.n_agents() > c.n_tasks() {
        let t = hungarian(&c.transpose()).map_err(|e| match e {
            AssignError::InfeasibleAgent(j) => AssignError::InfeasibleTask(j),
            other => other,
        })?;
        return Assignment::new(t.pairs().iter().map(|&(j, i)| (i, j)).collect());
    }
    check_required_rows(c)?;
    let cols = solve_rows_le_cols(c);
    let raw = Assignment::new(cols.iter().enumerate().map(|(i, &j)| (i, j)).collect())?;
    if let Some(&(i, _)) = raw.pairs().iter().find(|&&(i, j)| !c.get(i, j).is_finite()) {
        return Err(AssignError::InfeasibleAgent(i));
    }
    let best = total_cost(c, &raw)?;
    Ok(canonical(c, best).unwrap_or(raw))
}

fn check_required_rows(c: &CostMatrix) -> Result<(), AssignError> {
    for i in 0..c.n_agents() {
        if c.row(i).iter().all(|v| !v.is_finite()) {
            return Err(AssignError::InfeasibleAgent(i));
        }
    }
    Ok(())
}

/// Finite stand-in for +inf: larger than any finite full matching.
fn big_value(c: &CostMatrix) -> f64 {
    (c.max_finite() + 1.0) * (c.n_agents().max(c.n_tasks()) as f64 + 1.0) * 4.0
}

/// Shortest augmenting path with potentials; requires n_agents <= n_tasks.
/// Returns the column matched to each row.
fn solve_rows_le_cols(c: &CostMatrix) -> Vec<usize> {
    let n = c.n_agents();
    let m = c.n_tasks();
    let big = big_value(c);
    let cost = |i: usize, j: usize| {
        let v = c.get(i, j);
        if v.is_finite() {
            v
        } else {
            big
        }
    };
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

fn optimum_of(c: &CostMatrix, rows: &[usize], cols: &[usize]) -> Option<f64> {
    if rows.is_empty() {
        return Some(0.0);
    }
    let mut e = Vec::with_capacity(rows.len() * cols.len());
    for &i in rows {
        for &j in cols {
            e.push(c.get(i, j));
        }
    }
    let sub = CostMatrix::new(rows.len(), cols.len(), e).ok()?;
    if check_required_rows(&sub).is_err() {
        return None;
    }
    let sol = solve_rows_le_cols(&sub);
    let mut total = 0.0;
    for (i, &j) in sol.iter().enumerate() {
        let v = sub.get(i, j);
        if !v.is_finite() {
            return None;
        }
        total += v;
    }
    Some(total)
}

/// Fixes rows in order to the smallest column that still admits an optimum.
fn canonical(c: &CostMatrix, best: f64) -> Option<Assignment> {
    let tol = 1e-9 * best.abs().max(1.0);
    let n = c.n_agents();
    let mut free_cols: Vec<usize> = (0..c.n_tasks()).collect();
    let mut fixed = 0.0;
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let rest_rows: Vec<usize> = (i + 1..n).collect();
        let mut chosen = None;
        for (k, &j) in free_cols.iter().enumerate() {
            let cij = c.get(i, j);
            if !cij.is_finite() || fixed + cij > best + tol {
                continue;
            }
            let rest_cols: Vec<usize> = free_cols.iter().copied().filter(|&x| x != j).collect();
            if let Some(rest) = optimum_of(c, &rest_rows, &rest_cols) {
                if fixed + cij + rest <= best + tol {
                    chosen = Some((k, j, cij));
                    break;
                }
            }
        }
        let (k, j, cij) = chosen?;
        free_cols.remove(k);
        fixed += cij;
        pairs.push((i, j));
    }
    Assignment::new(pairs).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let a = hungarian(&c).unwrap();
        assert_eq!(a.pairs(), &[(0, 0), (1, 1)]);
        assert_eq!(total_cost(&c, &a).unwrap(), 2.0);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let c = CostMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(hungarian(&c).unwrap().pairs(), &[(0, 0), (1, 1)]);
        let c = CostMatrix::filled(3, 3, 2.0);
        assert_eq!(hungarian(&c).unwrap().pairs(), &[(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn rectangular_both_ways() {
        let wide = CostMatrix::from_rows(&[vec![5.0, 1.0, 7.0], vec![2.0, 3.0, 0.5]]).unwrap();
        let a = hungarian(&wide).unwrap();
        assert_eq!(a.pairs(), &[(0, 1), (1, 2)]);
        let tall = wide.transpose();
        let b = hungarian(&tall).unwrap();
        assert_eq!(b.pairs(), &[(1, 0), (2, 1)]);
    }

    #[test]
    fn infeasible_row_is_named() {
        let inf = f64::INFINITY;
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![inf, inf]]).unwrap();
        assert_eq!(hungarian(&c).unwrap_err(), AssignError::InfeasibleAgent(1));
    }

    #[test]
    fn hall_violation_is_infeasible() {
        let inf = f64::INFINITY;
        // both agents can only do task 0
        let c = CostMatrix::from_rows(&[vec![1.0, inf], vec![2.0, inf]]).unwrap();
        assert!(matches!(hungarian(&c), Err(AssignError::InfeasibleAgent(_))));
    }

    #[test]
    fn infinite_entries_avoided_when_possible() {
        let inf = f64::INFINITY;
        let c = CostMatrix::from_rows(&[vec![1.0, inf], vec![1.0, 9.0]]).unwrap();
        assert_eq!(hungarian(&c).unwrap().pairs(), &[(0, 0), (1, 1)]);
    }

    #[test]
    fn empty_is_empty() {
        let c = CostMatrix::new(0, 3, vec![]).unwrap();
        assert!(hungarian(&c).unwrap().is_empty());
    }
}
