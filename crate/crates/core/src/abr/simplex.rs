/// Euclidean projection onto the probability simplex, by the sort-and-threshold
/// method: find the largest `k` with `u_k > (sum_{i<=k} u_i - 1) / k` over the
/// values sorted descending, then shift by that threshold and clip at zero.
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty());
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}
