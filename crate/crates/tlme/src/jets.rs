//! Truncated Taylor-series arithmetic ("jets") used for closed-form
//! derivatives of the bath spectral functions.
//!
//! A jet stores the coefficients of `f(x0 + h)` up to `h^MAX_ORDER`. The
//! k-th derivative is `k! * coeff[k]`.

pub const MAX_ORDER: usize = 16;
const LEN: usize = MAX_ORDER + 1;

#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub c: [f64; LEN],
}

impl Jet {
    pub fn constant(x: f64) -> Self {
        let mut c = [0.0; LEN];
        c[0] = x;
        Jet { c }
    }

    /// The identity function seeded at `x0`.
    pub fn variable(x0: f64) -> Self {
        let mut c = [0.0; LEN];
        c[0] = x0;
        c[1] = 1.0;
        Jet { c }
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut c = self.c;
        for v in &mut c {
            *v *= s;
        }
        Jet { c }
    }

    pub fn add(&self, other: &Jet) -> Self {
        let mut c = self.c;
        for (v, o) in c.iter_mut().zip(other.c.iter()) {
            *v += o;
        }
        Jet { c }
    }

    pub fn mul(&self, other: &Jet) -> Self {
        let mut c = [0.0; LEN];
        for i in 0..LEN {
            if self.c[i] == 0.0 {
                continue;
            }
            for j in 0..LEN - i {
                c[i + j] += self.c[i] * other.c[j];
            }
        }
        Jet { c }
    }

    /// Reciprocal; requires a nonzero constant term.
    pub fn recip(&self) -> Self {
        assert!(self.c[0] != 0.0, "jet reciprocal at a zero");
        let mut c = [0.0; LEN];
        c[0] = 1.0 / self.c[0];
        for n in 1..LEN {
            let mut acc = 0.0;
            for j in 1..=n {
                acc += self.c[j] * c[n - j];
            }
            c[n] = -acc / self.c[0];
        }
        Jet { c }
    }

    pub fn div(&self, other: &Jet) -> Self {
        self.mul(&other.recip())
    }

    pub fn exp(&self) -> Self {
        let mut c = [0.0; LEN];
        c[0] = self.c[0].exp();
        for n in 1..LEN {
            let mut acc = 0.0;
            for j in 1..=n {
                acc += (j as f64) * self.c[j] * c[n - j];
            }
            c[n] = acc / n as f64;
        }
        Jet { c }
    }

    /// Evaluates a polynomial with coefficients `poly` (ascending powers)
    /// at this jet. The constant term of `self` should be small enough for
    /// the polynomial to be an accurate series.
    pub fn poly(&self, poly: &[f64]) -> Self {
        let mut acc = Jet::constant(0.0);
        for &p in poly.iter().rev() {
            acc = acc.mul(self).add(&Jet::constant(p));
        }
        acc
    }

    pub fn derivative(&self, k: usize) -> f64 {
        assert!(k <= MAX_ORDER);
        let mut f = 1.0;
        for i in 2..=k {
            f *= i as f64;
        }
        self.c[k] * f
    }
}

/// Series coefficients of `x / (e^x - 1)` (Bernoulli numbers over
/// factorials), accurate for |x| <= 0.5 at this truncation.
pub fn todd_series() -> [f64; 21] {
    // B_n / n! for n = 0..20; odd entries vanish except n = 1.
    let bern: [(i64, i64); 11] = [
        (1, 1),
        (1, 6),
        (-1, 30),
        (1, 42),
        (-1, 30),
        (5, 66),
        (-691, 2730),
        (7, 6),
        (-3617, 510),
        (43867, 798),
        (-174611, 330),
    ];
    let mut out = [0.0; 21];
    out[0] = 1.0;
    out[1] = -0.5;
    let mut fact = 1.0_f64;
    for n in 1..=20 {
        fact *= n as f64;
        if n % 2 == 0 {
            let (p, q) = bern[n / 2];
            out[n] = p as f64 / q as f64 / fact;
        }
    }
    out
}

/// Jet of `x / (e^x - 1)` at the (jet) argument `x`.
pub fn todd(x: &Jet) -> Jet {
    if x.c[0].abs() < 0.5 {
        x.poly(&todd_series())
    } else {
        let denom = x.exp().add(&Jet::constant(-1.0));
        x.div(&denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff(f: impl Fn(f64) -> f64, x: f64, k: usize, h: f64) -> f64 {
        // central differences, k <= 3
        match k {
            1 => (f(x + h) - f(x - h)) / (2.0 * h),
            2 => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
            3 => (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h),
            _ => unreachable!(),
        }
    }

    #[test]
    fn exp_jet_derivatives() {
        let j = Jet::variable(0.3).exp();
        for k in 0..=4 {
            assert!((j.derivative(k) - (0.3_f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn rational_jet_matches_finite_differences() {
        // f(x) = x / (1 + x^2)
        let f = |x: f64| x / (1.0 + x * x);
        let x0 = 0.7;
        let x = Jet::variable(x0);
        let j = x.div(&x.mul(&x).add(&Jet::constant(1.0)));
        for k in 1..=3 {
            let fd = finite_diff(f, x0, k, 1e-4);
            assert!(
                (j.derivative(k) - fd).abs() < 1e-5 * fd.abs().max(1.0),
                "k={k}: jet {} vs fd {}",
                j.derivative(k),
                fd
            );
        }
    }

    #[test]
    fn todd_series_matches_direct_form() {
        // On both sides of the branch switch the values must agree.
        for &x0 in &[0.49, 0.51, 0.2, 1.5] {
            let a = todd(&Jet::variable(x0));
            let direct = x0 / (x0.exp() - 1.0);
            assert!((a.c[0] - direct).abs() < 1e-13, "x0={x0}");
            // d/dx [x/(e^x-1)] via finite differences
            let f = |x: f64| x / (x.exp() - 1.0);
            let fd = finite_diff(f, x0, 1, 1e-5);
            assert!((a.derivative(1) - fd).abs() < 1e-8, "x0={x0}");
        }
    }

    #[test]
    fn todd_is_regular_at_zero() {
        let a = todd(&Jet::variable(0.0));
        assert!((a.c[0] - 1.0).abs() < 1e-15);
        assert!((a.derivative(1) + 0.5).abs() < 1e-15);
        assert!((a.derivative(2) - 1.0 / 6.0).abs() < 1e-14);
    }
}
