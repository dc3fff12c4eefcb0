/// Euclidean projection onto the probability simplex.
///
/// Sort-and-threshold: with `u` sorted in decreasing order, the threshold is
/// `tau = (sum_{i <= rho} u_i - 1) / rho` for the largest `rho` such that
/// `u_rho > tau`, and the projection is `max(v - tau, 0)`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}
