//! Minimum-cost linear assignment (Hungarian method with potentials).

use crate::scalar::Real;

/// Solves the assignment problem for a `rows x cols` cost matrix stored
/// row-major, with `rows <= cols`. Returns the column assigned to every row.
///
/// Runs in `O(rows^2 * cols)`. Ties are resolved deterministically: the
/// lowest column index wins when reduced costs are equal.
pub fn solve<T: Real>(cost: &[T], rows: usize, cols: usize) -> Vec<usize> {
    assert!(rows <= cols, "solve requires rows <= cols");
    assert_eq!(cost.len(), rows * cols);
    if rows == 0 {
        return Vec::new();
    }
    let at = |i: usize, j: usize| cost[(i - 1) * cols + (j - 1)];

    // 1-based with a virtual column 0, following the classic formulation.
    let mut u = vec![T::zero(); rows + 1];
    let mut v = vec![T::zero(); cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];

    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![T::infinity(); cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = T::infinity();
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = at(i0, j) - u[i0] - v[j];
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
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![usize::MAX; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}
