//! Fourth-order finite differences on uniform grids.

/// First derivative with the 5-point central stencil, one-sided near the ends.
pub fn d1(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "need at least 5 samples");
    let mut out = vec![0.0; n];
    let c = 12.0 * h;
    for i in 2..n - 2 {
        out[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / c;
    }
    out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / c;
    out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / c;
    let m = n - 1;
    out[m] = -(-25.0 * f[m] + 48.0 * f[m - 1] - 36.0 * f[m - 2] + 16.0 * f[m - 3] - 3.0 * f[m - 4]) / c;
    out[m - 1] =
        -(-3.0 * f[m] - 10.0 * f[m - 1] + 18.0 * f[m - 2] - 6.0 * f[m - 3] + f[m - 4]) / c;
    out
}

/// Second derivative with the 5-point central stencil, 6-point one-sided near the ends.
pub fn d2(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 6, "need at least 6 samples");
    let mut out = vec![0.0; n];
    let c = 12.0 * h * h;
    for i in 2..n - 2 {
        out[i] = (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) / c;
    }
    let fwd0 = |g: &dyn Fn(usize) -> f64| {
        (45.0 * g(0) - 154.0 * g(1) + 214.0 * g(2) - 156.0 * g(3) + 61.0 * g(4) - 10.0 * g(5)) / c
    };
    let fwd1 = |g: &dyn Fn(usize) -> f64| {
        (10.0 * g(0) - 15.0 * g(1) - 4.0 * g(2) + 14.0 * g(3) - 6.0 * g(4) + g(5)) / c
    };
    out[0] = fwd0(&|k| f[k]);
    out[1] = fwd1(&|k| f[k]);
    let m = n - 1;
    out[m] = fwd0(&|k| f[m - k]);
    out[m - 1] = fwd1(&|k| f[m - k]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_quartics() {
        let h = 0.1;
        let xs: Vec<f64> = (0..12).map(|i| i as f64 * h).collect();
        let f: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x - x * x + 0.5 * x.powi(3) + x.powi(4)).collect();
        let df = d1(&f, h);
        let ddf = d2(&f, h);
        for (i, x) in xs.iter().enumerate() {
            let e1 = 2.0 - 2.0 * x + 1.5 * x * x + 4.0 * x.powi(3);
            let e2 = -2.0 + 3.0 * x + 12.0 * x * x;
            assert!((df[i] - e1).abs() < 1e-10, "d1 at {i}");
            assert!((ddf[i] - e2).abs() < 1e-8, "d2 at {i}");
        }
    }
}
