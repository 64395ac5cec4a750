use crate::Scalar;

/// Minimum-cost assignment of every row of a `rows × cols` row-major matrix to a
/// distinct column (`rows ≤ cols`). Returns the column of each row.
pub fn hungarian<T: Scalar>(cost: &[T], rows: usize, cols: usize) -> Vec<usize> {
    hungarian_warm(cost, rows, cols, None).0
}

/// [`hungarian`] seeded with column potentials (any values are valid; duals of a
/// nearby instance make it fast). Also returns the final column potentials.
pub fn hungarian_warm<T: Scalar>(
    cost: &[T],
    rows: usize,
    cols: usize,
    col_potential: Option<&[T]>,
) -> (Vec<usize>, Vec<T>) {
    assert!(rows <= cols, "hungarian needs rows <= cols");
    assert_eq!(cost.len(), rows * cols);
    let inf = T::infinity();
    // 1-based indices; column 0 and row 0 are sentinels
    let mut u = vec![T::zero(); rows + 1];
    let mut v = vec![T::zero(); cols + 1];
    if let Some(init) = col_potential {
        assert_eq!(init.len(), cols);
        v[1..].copy_from_slice(init);
    }
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    let mut minv = vec![inf; cols + 1];
    let mut used = vec![false; cols + 1];
    let mut touched: Vec<usize> = Vec::with_capacity(cols + 1);
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|b| *b = false);
        touched.clear();
        loop {
            used[j0] = true;
            touched.push(j0);
            let i0 = owner[j0];
            let row = &cost[(i0 - 1) * cols..i0 * cols];
            let ui = u[i0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - ui - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for &j in &touched {
                u[owner[j]] += delta;
                v[j] -= delta;
            }
            for j in 1..=cols {
                if !used[j] {
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
    let mut assignment = vec![0usize; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    (assignment, v[1..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_three() {
        let c = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = hungarian::<f64>(&c, 3, 3);
        let total: f64 = a.iter().enumerate().map(|(i, j)| c[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn warm_start_with_stale_duals_is_still_optimal() {
        let c = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let (a, _) = hungarian_warm::<f64>(&c, 3, 3, Some(&[100.0, -7.0, 3.0]));
        let total: f64 = a.iter().enumerate().map(|(i, j)| c[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }
}
