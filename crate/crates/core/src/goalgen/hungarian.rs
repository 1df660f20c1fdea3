//! Minimum-cost assignment of every row to a distinct column
//! (Kuhn–Munkres with row/column potentials, O(rows² · cols)).

/// Solves the rectangular assignment problem for a `rows x cols` cost
/// matrix in row-major order, `rows <= cols`. Returns the column assigned
/// to each row. Costs must be finite. Among equal-cost augmenting choices
/// the lowest column index wins.
pub fn solve(costs: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    assert!(rows <= cols, "assignment needs at least as many columns ({cols}) as rows ({rows})");
    assert_eq!(costs.len(), rows * cols);
    assert!(costs.iter().all(|c| c.is_finite()), "assignment costs must be finite");
    if rows == 0 {
        return Vec::new();
    }
    let a = |i: usize, j: usize| costs[(i - 1) * cols + (j - 1)];
    // 1-based; column 0 is a virtual column holding the row being inserted.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut row_of = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = a(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![usize::MAX; rows];
    for j in 1..=cols {
        if row_of[j] != 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Total cost of an assignment.
pub fn total_cost(costs: &[f64], cols: usize, assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &j)| costs[i * cols + j]).sum()
}
