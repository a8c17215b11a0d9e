//! Maximum-weight bipartite matching (Hungarian method with potentials).

/// Maximum-weight matching of a `rows x cols` weight matrix where any row
/// or column may stay unmatched. Entries that are not strictly positive (or
/// not finite) are treated as missing edges.
///
/// Returns, for each row, the matched column.
pub fn max_weight_matching(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = weights[0].len();
    debug_assert!(weights.iter().all(|r| r.len() == cols));
    if cols == 0 {
        return vec![None; rows];
    }
    let n = rows.max(cols);
    let gain = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            let w = weights[i][j];
            if w.is_finite() && w > 0.0 {
                return w;
            }
        }
        0.0
    };

    // Minimize -gain on the padded square matrix; 1-based indices, slot 0 is
    // the virtual root of each augmentation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = -gain(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
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

    let mut out = vec![None; rows];
    for (j, &i) in p.iter().enumerate().take(n + 1).skip(1) {
        if i >= 1 && i <= rows && j <= cols && gain(i - 1, j - 1) > 0.0 {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Sum of the matched weights, accumulated in row order.
pub fn matching_weight(weights: &[Vec<f64>], assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| weights[i][j]))
        .sum()
}
