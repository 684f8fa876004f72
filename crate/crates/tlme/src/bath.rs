//! Bosonic bath: Ohmic spectral density with Lorentz-Drude cutoff,
//! occupation factors, spectral functions and their frequency derivatives,
//! and the time-domain correlation functions.

use crate::jets::{todd, Jet};
use crate::quad::{adaptive_quad, oscillatory_tail};
use crate::{Error, Result, C64};
use std::f64::consts::PI;

/// Frequency cutoff of all half-line quadratures, in units of the qubit
/// splitting. The slowly decaying tail above it is resummed analytically
/// or by panel averaging; the equal-time value of the `Plus` correlation
/// function is understood as truncated at this cutoff.
pub const OMEGA_MAX: f64 = 200.0;

/// Correlation branch: `Plus` pairs with `n+ = n- + 1`, `Minus` with `n-`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn flip(self) -> Self {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// Bath parameters. Inverse temperature and cutoff are in units of the
/// qubit splitting; the defaults are `beta = 10`, `omega_c = 10`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BathSpec {
    pub beta: f64,
    pub omega_c: f64,
}

impl Default for BathSpec {
    fn default() -> Self {
        BathSpec { beta: 10.0, omega_c: 10.0 }
    }
}

impl BathSpec {
    pub fn new(beta: f64, omega_c: f64) -> Result<Self> {
        if !(beta > 0.0) || !(omega_c > 0.0) {
            return Err(Error::InvalidArg(format!(
                "bath parameters must be positive (beta={beta}, omega_c={omega_c})"
            )));
        }
        Ok(BathSpec { beta, omega_c })
    }
}

/// Ohmic spectral density with Lorentz-Drude cutoff,
/// `J(w) = w / (1 + (w/w_c)^2)`.
pub fn spectral_density(spec: &BathSpec, omega: f64) -> Result<f64> {
    if omega < 0.0 {
        return Err(Error::InvalidArg(format!(
            "spectral density needs omega >= 0, got {omega}"
        )));
    }
    Ok(omega / (1.0 + (omega / spec.omega_c).powi(2)))
}

/// Bose occupation factors `n-(w) = 1/(exp(beta w) - 1)` and
/// `n+(w) = n-(w) + 1`.
pub fn bose_occupation(spec: &BathSpec, omega: f64, branch: Branch) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::InvalidArg(format!(
            "occupation factor needs omega > 0, got {omega}"
        )));
    }
    let n_minus = 1.0 / ((spec.beta * omega).exp_m1());
    Ok(match branch {
        Branch::Minus => n_minus,
        Branch::Plus => n_minus + 1.0,
    })
}

/// Spectral functions `J(w) n±(w)`. Evaluated through the same series as
/// the derivatives, so `spectrum_derivative(.., 0)` reproduces it exactly.
pub fn spectrum(spec: &BathSpec, omega: f64, branch: Branch) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::InvalidArg(format!(
            "spectrum needs omega > 0, got {omega}"
        )));
    }
    Ok(spectrum_jet(spec, omega, branch).c[0])
}

fn spectrum_jet(spec: &BathSpec, omega: f64, branch: Branch) -> Jet {
    let w = Jet::variable(omega);
    // J n- = [wc^2/(wc^2 + w^2)] * (1/beta) * x/(e^x - 1) with x = beta w,
    // which is regular through w = 0.
    let wc2 = spec.omega_c * spec.omega_c;
    let lorentz = Jet::constant(wc2).div(&w.mul(&w).add(&Jet::constant(wc2)));
    let wn_minus = todd(&w.scale(spec.beta)).scale(1.0 / spec.beta);
    let wn = match branch {
        Branch::Minus => wn_minus,
        Branch::Plus => wn_minus.add(&w),
    };
    lorentz.mul(&wn)
}

/// k-th frequency derivative of the spectral function, in closed form.
/// Supports `k <= 4`, the largest order the contraction rules need.
pub fn spectrum_derivative(spec: &BathSpec, omega: f64, branch: Branch, k: usize) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::InvalidArg(format!(
            "spectrum derivative needs omega > 0, got {omega}"
        )));
    }
    if k > 4 {
        return Err(Error::UnsupportedOrder { k, l: 1 });
    }
    Ok(spectrum_jet(spec, omega, branch).derivative(k))
}

/// Derivative of the spectral function continued over the whole real line
/// through `J(-w) n±(-w) = J(w) n∓(w)`. Used by the diagram rules, which
/// may constrain frequencies to either sign of the splitting.
pub fn spectrum_derivative_full_line(spec: &BathSpec, x: f64, branch: Branch, k: usize) -> f64 {
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    if x > 0.0 {
        spectrum_jet(spec, x, branch).derivative(k)
    } else if x < 0.0 {
        sign * spectrum_jet(spec, -x, branch.flip()).derivative(k)
    } else {
        // Regular limit at zero; both continuations agree there.
        spectrum_jet(spec, 0.0, branch).derivative(k)
    }
}

/// Asymptotic Taylor data of the spectral function at `w = 0`, used by the
/// large-time expansion of the correlation functions.
pub fn spectrum_taylor_at_zero(spec: &BathSpec, branch: Branch, orders: usize) -> Vec<f64> {
    let jet = spectrum_jet(spec, 0.0, branch);
    (0..=orders).map(|k| jet.derivative(k)).collect()
}

/// Exponential integral `E1(i x)` for `x > 0`.
fn e1_imag(x: f64) -> C64 {
    let z = C64::new(0.0, x);
    if x <= 4.0 {
        // Series: E1(z) = -gamma - ln z + sum (-1)^{n+1} z^n / (n n!)
        const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
        let mut sum = C64::new(0.0, 0.0);
        let mut term = C64::new(1.0, 0.0);
        for n in 1..=60 {
            term *= -z / n as f64;
            let contrib = -term / n as f64;
            sum += contrib;
            if contrib.norm() < 1e-17 * (1.0 + sum.norm()) {
                break;
            }
        }
        let ln_z = C64::new(x.ln(), PI / 2.0);
        -C64::new(EULER_GAMMA, 0.0) - ln_z + sum
    } else {
        // Continued fraction, modified Lentz.
        let tiny = 1e-30;
        let mut f = C64::new(tiny, 0.0);
        let mut c = f;
        let mut d = C64::new(0.0, 0.0);
        // b0 = z, then alternating a_n: n, n; b: 1, z
        let b = z;
        let mut a;
        d = (b + d).inv();
        c = b + C64::new(1.0, 0.0) / c;
        f *= c * d;
        for n in 1..200 {
            a = C64::new(n as f64, 0.0);
            // step with b = 1
            let b1 = C64::new(1.0, 0.0);
            d = (b1 + a * d).inv();
            c = b1 + a / c;
            f *= c * d;
            // step with b = z
            d = (z + a * d).inv();
            c = z + a / c;
            let delta = c * d;
            f *= delta;
            if (delta - C64::new(1.0, 0.0)).norm() < 1e-15 {
                break;
            }
        }
        let _ = b;
        (-z).exp() * f
    }
}

/// Tail `int_W^inf J n+ e^{-i w tau} dw` from the large-frequency expansion
/// `J n+ = wc^2/w - wc^4/w^3 + wc^6/w^5 - ...` (the thermal part is
/// exponentially small there).
pub(crate) fn plus_tail(spec: &BathSpec, tau: f64) -> C64 {
    debug_assert!(tau > 0.0);
    let omega0 = OMEGA_MAX;
    let x = omega0 * tau;
    let i1 = e1_imag(x);
    // I_k = int_W^inf e^{-i w tau} / w^k dw; recursion
    // I_k = e^{-i W tau} / ((k-1) W^{k-1}) - (i tau / (k-1)) I_{k-1}.
    let phase = C64::new(0.0, -omega0 * tau).exp();
    let mut i_prev = i1;
    let mut i_k = [C64::new(0.0, 0.0); 6];
    i_k[1] = i1;
    for k in 2..=5 {
        let km1 = (k - 1) as f64;
        let val = phase / (km1 * omega0.powi(k as i32 - 1))
            - C64::new(0.0, tau / km1) * i_prev;
        i_k[k] = val;
        i_prev = val;
    }
    let wc2 = spec.omega_c.powi(2);
    wc2 * i_k[1] - wc2 * wc2 * i_k[3] + wc2 * wc2 * wc2 * i_k[5]
}

/// Time-domain correlation functions
/// `C-(tau) = int_0^inf J n- e^{+i w tau} dw` and
/// `C+(tau) = int_0^inf J n+ e^{-i w tau} dw`,
/// for any real `tau`. They obey `C±(-tau) = conj(C±(tau))`.
pub fn correlation_time_domain(spec: &BathSpec, tau: f64, branch: Branch) -> Result<C64> {
    let phase_sign = match branch {
        // e^{-i w tau} for Plus, e^{+i w tau} for Minus.
        Branch::Plus => -1.0,
        Branch::Minus => 1.0,
    };
    let f = |w: f64| spectrum_jet(spec, w, branch).c[0];
    let at = tau.abs();

    let mut re_int = |w: f64| f(w) * (w * at).cos();
    // For tau```s sign folded at the end: cos even, sin odd.
    let mut im_int = |w: f64| f(w) * (w * at).sin();

    let floor = 1e-8 * (1.0 + spec.omega_c * spec.omega_c / spec.beta);
    let (re, im, err) = if at * OMEGA_MAX < 12.0 * PI {
        // Few oscillations fit below the cutoff: direct adaptive pass.
        let (re, re_err) = adaptive_quad(&mut re_int, 0.0, OMEGA_MAX, 1e-10);
        let (im, im_err) = adaptive_quad(&mut im_int, 0.0, OMEGA_MAX, 1e-10);
        let mut re = re;
        let mut im = im;
        if at > 0.0 && branch == Branch::Plus {
            let tail = plus_tail(spec, at);
            re += tail.re;
            // plus_tail is for e^{-i w tau}; its imaginary part already has
            // the Plus orientation at positive tau.
            im += -tail.im;
        }
        (re, im, re_err + im_err)
    } else {
        let h = PI / at;
        let n_panels = ((OMEGA_MAX / h).ceil() as usize).max(16);
        let head_end = 4.0 * h;
        let (re_head, e1) = adaptive_quad(&mut re_int, 0.0, head_end, 1e-11);
        let (im_head, e2) = adaptive_quad(&mut im_int, 0.0, head_end, 1e-11);
        let n_avg = 16.min(n_panels - 4);
        let (re_tail, e3) = oscillatory_tail(&mut re_int, head_end, h, n_panels - 4, n_avg);
        let (im_tail, e4) = oscillatory_tail(&mut im_int, head_end, h, n_panels - 4, n_avg);
        (re_head + re_tail, im_head + im_tail, e1 + e2 + e3 + e4)
    };

    let value = C64::new(re, phase_sign * tau.signum() * im);
    let tol = (1e-6 * value.norm()).max(floor);
    if err > tol {
        return Err(Error::QuadratureResidual { residual: err, tol });
    }
    Ok(value)
}

/// Measured decay scale of the correlation functions: `1/tau_e` with
/// `tau_e` the first time `|C+(tau)|` falls below `1/e` of its (truncated)
/// equal-time value. Serves as the proxy for the minimum bath decay rate.
pub fn decay_scale(spec: &BathSpec) -> Result<f64> {
    let c0 = correlation_time_domain(spec, 0.0, Branch::Plus)?.norm();
    let target = c0 / std::f64::consts::E;
    let mut lo = 0.0;
    let mut hi = 0.0;
    let mut t = 0.05;
    while t < 100.0 {
        if correlation_time_domain(spec, t, Branch::Plus)?.norm() < target {
            hi = t;
            break;
        }
        lo = t;
        t *= 1.5;
    }
    if hi == 0.0 {
        return Err(Error::InvalidArg("correlation function does not decay below 1/e".into()));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if correlation_time_domain(spec, mid, Branch::Plus)?.norm() < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(1.0 / (0.5 * (lo + hi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_spec() -> BathSpec {
        BathSpec::default()
    }

    #[test]
    fn spectral_density_examples() {
        let s = default_spec();
        assert_eq!(spectral_density(&s, 0.0).unwrap(), 0.0);
        assert!((spectral_density(&s, s.omega_c).unwrap() - s.omega_c / 2.0).abs() < 1e-15);
        assert!((spectral_density(&s, 1.0).unwrap() - 1.0 / 1.01).abs() < 1e-15);
        assert!(spectral_density(&s, -1.0).is_err());
    }

    #[test]
    fn occupation_examples() {
        let s = default_spec();
        // 1/(e^10 - 1), high-precision reference value
        let n = bose_occupation(&s, 1.0, Branch::Minus).unwrap();
        assert!((n - 4.540_199_100_968_777e-5).abs() < 1e-10);
        let diff = bose_occupation(&s, 2.5, Branch::Plus).unwrap()
            - bose_occupation(&s, 2.5, Branch::Minus).unwrap();
        assert!((diff - 1.0).abs() < 1e-14);
        // strong suppression at large beta*omega
        assert!(bose_occupation(&s, 20.0, Branch::Minus).unwrap() < 1e-80);
        assert!(bose_occupation(&s, 0.0, Branch::Minus).is_err());
    }

    #[test]
    fn spectrum_examples() {
        let s = default_spec();
        let v = spectrum(&s, 1.0, Branch::Minus).unwrap();
        assert!((v - 4.495_246_634_622_551e-5).abs() < 1e-8);
        for &w in &[0.3, 1.0, 4.0] {
            let d = spectrum(&s, w, Branch::Plus).unwrap() - spectrum(&s, w, Branch::Minus).unwrap();
            assert!((d - spectral_density(&s, w).unwrap()).abs() < 1e-13);
        }
        // n- decays, so the minus spectrum vanishes at large frequency.
        assert!(spectrum(&s, 50.0, Branch::Minus).unwrap() < 1e-100);
    }

    /// Richardson-extrapolated central differences of the spectrum.
    fn fd_derivative(spec: &BathSpec, w: f64, branch: Branch, k: usize) -> f64 {
        let f = |x: f64| spectrum(spec, x, branch).unwrap();
        let d_h = |h: f64| -> f64 {
            match k {
                1 => (f(w + h) - f(w - h)) / (2.0 * h),
                2 => (f(w + h) - 2.0 * f(w) + f(w - h)) / (h * h),
                3 => (f(w + 2.0 * h) - 2.0 * f(w + h) + 2.0 * f(w - h) - f(w - 2.0 * h))
                    / (2.0 * h * h * h),
                4 => (f(w + 2.0 * h) - 4.0 * f(w + h) + 6.0 * f(w) - 4.0 * f(w - h)
                    + f(w - 2.0 * h))
                    / h.powi(4),
                _ => unreachable!(),
            }
        };
        // Two Richardson levels on the O(h^2) central differences.
        let h = 2e-2;
        let d0 = d_h(h);
        let d1 = d_h(h / 2.0);
        let d2 = d_h(h / 4.0);
        let r1 = (4.0 * d1 - d0) / 3.0;
        let r2 = (4.0 * d2 - d1) / 3.0;
        (16.0 * r2 - r1) / 15.0
    }

    #[test]
    fn derivative_k0_reproduces_spectrum() {
        let s = default_spec();
        for &w in &[0.5, 1.0, 2.0, 5.0] {
            for branch in [Branch::Plus, Branch::Minus] {
                assert_eq!(
                    spectrum_derivative(&s, w, branch, 0).unwrap(),
                    spectrum(&s, w, branch).unwrap()
                );
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let s = default_spec();
        let d1 = spectrum_derivative(&s, 1.0, Branch::Plus, 1).unwrap();
        let fd1 = fd_derivative(&s, 1.0, Branch::Plus, 1);
        assert!((d1 - fd1).abs() < 1e-8 * fd1.abs().max(1.0), "{d1} vs {fd1}");
        let d2 = spectrum_derivative(&s, 1.0, Branch::Plus, 2).unwrap();
        let fd2 = fd_derivative(&s, 1.0, Branch::Plus, 2);
        assert!((d2 - fd2).abs() < 1e-6 * fd2.abs().max(1.0), "{d2} vs {fd2}");
        for &w in &[0.5, 1.0, 2.0, 5.0] {
            for branch in [Branch::Plus, Branch::Minus] {
                for k in 1..=2 {
                    let an = spectrum_derivative(&s, w, branch, k).unwrap();
                    let fd = fd_derivative(&s, w, branch, k);
                    assert!(
                        (an - fd).abs() < 1e-6 * fd.abs().max(1e-6),
                        "w={w} k={k} {an} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn derivative_order_bound() {
        let s = default_spec();
        assert!(spectrum_derivative(&s, 1.0, Branch::Plus, 5).is_err());
        assert!(spectrum_derivative(&s, 1.0, Branch::Plus, 4).is_ok());
    }

    #[test]
    fn full_line_continuation() {
        let s = default_spec();
        for k in 0..=3 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let at_neg = spectrum_derivative_full_line(&s, -1.3, Branch::Plus, k);
            let flipped = sign * spectrum_derivative(&s, 1.3, Branch::Minus, k).unwrap();
            assert!((at_neg - flipped).abs() < 1e-13, "k={k}");
        }
        // continuity through zero
        let a = spectrum_derivative_full_line(&s, 1e-7, Branch::Plus, 0);
        let b = spectrum_derivative_full_line(&s, -1e-7, Branch::Plus, 0);
        let c = spectrum_derivative_full_line(&s, 0.0, Branch::Plus, 0);
        assert!((a - c).abs() < 1e-6 && (b - c).abs() < 1e-6);
        assert!((c - 1.0 / s.beta).abs() < 1e-9);
    }

    #[test]
    fn correlation_at_zero_minus_is_real_positive() {
        let s = default_spec();
        let c = correlation_time_domain(&s, 0.0, Branch::Minus).unwrap();
        assert!(c.re > 0.0);
        assert!(c.im.abs() < 1e-12);
    }

    #[test]
    fn correlation_conjugation_symmetry() {
        let s = default_spec();
        let c_pos = correlation_time_domain(&s, 3.0, Branch::Minus).unwrap();
        let c_neg = correlation_time_domain(&s, -3.0, Branch::Minus).unwrap();
        assert!((c_neg - c_pos.conj()).norm() < 1e-8);
        for &tau in &[0.17, 0.5, 1.3, 2.9, 4.1, 7.7, 11.3, 16.9, 23.5, 31.1] {
            for branch in [Branch::Plus, Branch::Minus] {
                let a = correlation_time_domain(&s, tau, branch).unwrap();
                let b = correlation_time_domain(&s, -tau, branch).unwrap();
                assert!(
                    (b - a.conj()).norm() < 1e-6 * a.norm().max(1e-6),
                    "tau={tau} branch={branch:?}"
                );
            }
        }
    }

    #[test]
    fn correlation_decays_on_the_bath_scale() {
        let s = default_spec();
        let c0 = correlation_time_domain(&s, 0.0, Branch::Plus).unwrap().norm();
        let c10 = correlation_time_domain(&s, 10.0, Branch::Plus).unwrap().norm();
        assert!(c10 < 0.05 * c0, "c10={c10}, c0={c0}");
    }

    #[test]
    fn decay_scale_is_finite_and_sane() {
        let s = default_spec();
        let g = decay_scale(&s).unwrap();
        assert!(g > 0.01 && g < 1000.0, "gamma proxy {g}");
    }
}
