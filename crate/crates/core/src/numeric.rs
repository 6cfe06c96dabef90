//! Small scalar helpers shared by the nadir searches.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimisation of a unimodal `f` on `[lo, hi]`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let flo = f(lo);
    let fhi = f(hi);
    // Endpoints are included so a minimum sitting on the bracket edge is kept exactly.
    [(x1, f1), (x2, f2), (lo, flo), (hi, fhi)]
        .into_iter()
        .fold((f64::NAN, f64::INFINITY), |best, cand| if cand.1 < best.1 { cand } else { best })
}

/// Uniform grid `0, h, …, horizon` with `points` nodes.
pub fn uniform_grid(horizon: f64, points: usize) -> Vec<f64> {
    let n = points.max(2) - 1;
    (0..=n).map(|i| horizon * i as f64 / n as f64).collect()
}

/// Index of the smallest value (first one on ties).
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Grid minimum of sampled `values` refined by golden section on the
/// neighbouring cells, using `f` to evaluate between nodes.
pub fn refine_grid_min<F: FnMut(f64) -> f64>(times: &[f64], values: &[f64], f: F, tol: f64) -> (f64, f64) {
    let i = argmin(values);
    let lo = times[i.saturating_sub(1)];
    let hi = times[(i + 1).min(times.len() - 1)];
    let (t, v) = golden_min(f, lo, hi, tol);
    if v < values[i] {
        (t, v)
    } else {
        (times[i], values[i])
    }
}

/// Indices of interior and boundary local minima of a sampled curve.
pub fn local_minima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    (0..n)
        .filter(|&i| {
            let left = i == 0 || values[i] <= values[i - 1];
            let right = i + 1 == n || values[i] <= values[i + 1];
            left && right
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, fx) = golden_min(|x| (x - 0.3).powi(2) + 1.0, 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-15);
    }

    #[test]
    fn golden_keeps_edge_minimum() {
        let (x, _) = golden_min(|x| -x, 0.0, 2.0, 1e-10);
        assert_eq!(x, 2.0);
    }

    #[test]
    fn refine_between_nodes() {
        let times = uniform_grid(1.0, 11);
        let f = |t: f64| (t - 0.437).powi(2);
        let values: Vec<f64> = times.iter().map(|&t| f(t)).collect();
        let (t, _) = refine_grid_min(&times, &values, f, 1e-12);
        assert!((t - 0.437).abs() < 1e-8);
    }

    #[test]
    fn minima_detection() {
        assert_eq!(local_minima(&[3.0, 1.0, 2.0, 0.5, 4.0]), vec![1, 3]);
        assert_eq!(local_minima(&[0.0, 1.0, 2.0]), vec![0]);
    }
}
