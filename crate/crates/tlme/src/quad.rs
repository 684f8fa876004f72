//! Quadrature building blocks: Gauss-Legendre rules, adaptive subdivision,
//! and an averaged-panel scheme for slowly decaying oscillatory tails.

use std::cell::RefCell;
use std::collections::HashMap;

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton
/// iteration on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Initial guess (Chebyshev-like).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

thread_local! {
    static GL_CACHE: RefCell<HashMap<usize, (Vec<f64>, Vec<f64>)>> = RefCell::new(HashMap::new());
}

fn with_rule<R>(n: usize, f: impl FnOnce(&[f64], &[f64]) -> R) -> R {
    GL_CACHE.with(|c| {
        let mut c = c.borrow_mut();
        let rule = c.entry(n).or_insert_with(|| gauss_legendre(n));
        f(&rule.0, &rule.1)
    })
}

/// Fixed-order Gauss-Legendre on [a, b].
pub fn fixed_quad(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    with_rule(n, |x, w| {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut acc = 0.0;
        for (xi, wi) in x.iter().zip(w.iter()) {
            acc += wi * f(c + h * xi);
        }
        acc * h
    })
}

/// Adaptive quadrature with G16/G32 error control. Returns the value and
/// an error estimate.
pub fn adaptive_quad(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    fn recurse(
        f: &mut dyn FnMut(f64) -> f64,
        a: f64,
        b: f64,
        tol: f64,
        depth: usize,
        coarse: f64,
    ) -> (f64, f64) {
        let fine = fixed_quad(f, a, b, 32);
        let err = (fine - coarse).abs();
        if err <= tol || depth >= 28 {
            return (fine, err);
        }
        let mid = 0.5 * (a + b);
        let left_coarse = fixed_quad(f, a, mid, 16);
        let right_coarse = fixed_quad(f, mid, b, 16);
        let (lv, le) = recurse(f, a, mid, tol * 0.5, depth + 1, left_coarse);
        let (rv, re) = recurse(f, mid, b, tol * 0.5, depth + 1, right_coarse);
        (lv + rv, le + re)
    }
    let coarse = fixed_quad(f, a, b, 16);
    recurse(f, a, b, tol, 0, coarse)
}

/// Limit of a sequence of partial sums of an (eventually alternating)
/// oscillatory series by iterated pairwise averaging. Returns the
/// accelerated value and an error estimate from the last column.
pub fn averaged_limit(partial_sums: &[f64]) -> (f64, f64) {
    assert!(partial_sums.len() >= 2);
    let mut row: Vec<f64> = partial_sums.to_vec();
    let mut prev_best = *row.last().unwrap();
    let mut best = prev_best;
    let levels = row.len() - 1;
    for _ in 0..levels {
        for i in 0..row.len() - 1 {
            row[i] = 0.5 * (row[i] + row[i + 1]);
        }
        row.pop();
        prev_best = best;
        best = *row.last().unwrap();
    }
    (best, (best - prev_best).abs())
}

/// Integral over [t0, infinity) of an oscillatory integrand whose sign
/// pattern has half-period `half_period`. Panels of one half-period are
/// integrated with a fixed rule; the tail of the partial-sum sequence is
/// resummed by iterated averaging (the Abel limit for slowly decaying
/// envelopes). `n_panels` panels are taken in total; the last `n_avg`
/// partial sums feed the averaging table.
pub fn oscillatory_tail(
    f: &mut dyn FnMut(f64) -> f64,
    t0: f64,
    half_period: f64,
    n_panels: usize,
    n_avg: usize,
) -> (f64, f64) {
    let mut sums = Vec::with_capacity(n_panels);
    let mut acc = 0.0;
    for p in 0..n_panels {
        let a = t0 + p as f64 * half_period;
        let b = a + half_period;
        acc += fixed_quad(f, a, b, 16);
        sums.push(acc);
    }
    let tail = &sums[sums.len().saturating_sub(n_avg)..];
    averaged_limit(tail)
}
