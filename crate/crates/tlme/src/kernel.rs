//! Time-domain memory kernel at one contraction and its moment
//! quadratures.
//!
//! This module is the independent cross-check path: it never touches the
//! diagram rules. The kernel is assembled from the correlation functions
//! and rotating-frame phases; the constant superoperators follow from the
//! moment identity `S^(k) = int_0^inf ((-tau)^k / k!) Sigma(tau) dtau`,
//! applied to the kernel symmetrized over the sign of the time argument
//! (the time-domain form of summing mirrored diagrams, which removes all
//! principal-value content). The same quadratures provide the
//! initial-correlation integrals `S_hat^(k)(t)` used by the analysis
//! layer.

use crate::bath::{plus_tail, spectrum, spectrum_taylor_at_zero, BathSpec, Branch, OMEGA_MAX};
use crate::linalg::{sandwich_super, sigma_minus, sigma_plus, Mat2, Mat4};
use crate::quad::{averaged_limit, gauss_legendre};
use crate::{Error, Result, C64, DELTA_E};
use std::f64::consts::PI;

/// Beyond this time the correlation functions switch to their
/// large-time expansion.
const T_ASYMPTOTIC: f64 = 60.0;
/// Number of Taylor orders carried into the large-time expansion.
const N_ASYMPTOTIC: usize = 14;

/// Precomputed data for fast kernel evaluation at many times.
pub struct KernelCtx {
    pub spec: BathSpec,
    pub g_c: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    f_plus: Vec<f64>,
    f_minus: Vec<f64>,
    taylor_plus: Vec<f64>,
    taylor_minus: Vec<f64>,
}

impl KernelCtx {
    pub fn new(g_c: f64, spec: BathSpec) -> Result<Self> {
        if !(g_c >= 0.0) {
            return Err(Error::InvalidArg(format!("coupling must be nonnegative, got {g_c}")));
        }
        // Fixed Gauss-Legendre grid over [0, OMEGA_MAX], fine enough to
        // resolve phases e^{i w tau} up to tau = T_ASYMPTOTIC.
        let panel_width = 0.4;
        let n_panels = (OMEGA_MAX / panel_width).ceil() as usize;
        let (x, w) = gauss_legendre(16);
        let mut nodes = Vec::with_capacity(16 * n_panels);
        let mut weights = Vec::with_capacity(16 * n_panels);
        for p in 0..n_panels {
            let a = p as f64 * panel_width;
            let b = (a + panel_width).min(OMEGA_MAX);
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            for (xi, wi) in x.iter().zip(w.iter()) {
                nodes.push(c + h * xi);
                weights.push(wi * h);
            }
        }
        let f_plus: Vec<f64> =
            nodes.iter().map(|&wv| spectrum(&spec, wv, Branch::Plus).unwrap()).collect();
        let f_minus: Vec<f64> =
            nodes.iter().map(|&wv| spectrum(&spec, wv, Branch::Minus).unwrap()).collect();
        let taylor_plus = spectrum_taylor_at_zero(&spec, Branch::Plus, N_ASYMPTOTIC);
        let taylor_minus = spectrum_taylor_at_zero(&spec, Branch::Minus, N_ASYMPTOTIC);
        Ok(KernelCtx { spec, g_c, nodes, weights, f_plus, f_minus, taylor_plus, taylor_minus })
    }

    /// Correlation function `C±(tau)`, matching
    /// [`crate::bath::correlation_time_domain`] but vectorized over the
    /// fixed grid and switching to the large-time expansion.
    pub fn corr(&self, branch: Branch, tau: f64) -> C64 {
        let at = tau.abs();
        let val_at_pos = if at <= T_ASYMPTOTIC {
            let mut re = 0.0;
            let mut im = 0.0;
            let f = match branch {
                Branch::Plus => &self.f_plus,
                Branch::Minus => &self.f_minus,
            };
            for ((&node, &weight), &fv) in self.nodes.iter().zip(&self.weights).zip(f) {
                let (s, c) = (node * at).sin_cos();
                re += weight * fv * c;
                im += weight * fv * s;
            }
            // Phase orientation at positive argument: e^{-i w tau} for
            // Plus, e^{+i w tau} for Minus.
            let mut v = match branch {
                Branch::Plus => C64::new(re, -im),
                Branch::Minus => C64::new(re, im),
            };
            if at > 0.0 && branch == Branch::Plus {
                v += plus_tail(&self.spec, at);
            }
            v
        } else {
            // C+(tau) = sum_n f^(n)(0) / (i tau)^{n+1},
            // C-(tau) = sum_n (-1)^{n+1} f^(n)(0) / (i tau)^{n+1}.
            let taylor = match branch {
                Branch::Plus => &self.taylor_plus,
                Branch::Minus => &self.taylor_minus,
            };
            let inv = (C64::new(0.0, at)).inv();
            let mut acc = C64::new(0.0, 0.0);
            let mut pw = inv;
            for (n, &fn0) in taylor.iter().enumerate() {
                let sign = match branch {
                    Branch::Plus => 1.0,
                    Branch::Minus => {
                        if n % 2 == 0 {
                            -1.0
                        } else {
                            1.0
                        }
                    }
                };
                acc += pw * fn0 * sign;
                pw *= inv;
            }
            acc
        };
        if tau >= 0.0 {
            val_at_pos
        } else {
            val_at_pos.conj()
        }
    }

    /// The one-contraction kernel as a superoperator, valid for either
    /// sign of `tau`:
    ///
    /// `Sigma(tau) rho = -g^2 [ phi C+(tau) P_e rho + conj(phi) C-(tau) P_g rho
    ///   + conj(phi) C+(-tau) rho P_e + phi C-(-tau) rho P_g
    ///   - (conj(phi) C-(tau) + phi C-(-tau)) s+ rho s-
    ///   - (phi C+(tau) + conj(phi) C+(-tau)) s- rho s+ ]`
    ///
    /// with `phi = e^{i dE tau}` and `P_e`, `P_g` the level projectors.
    pub fn sigma0(&self, tau: f64) -> Mat4 {
        let phi = C64::new(0.0, DELTA_E * tau).exp();
        let cp = self.corr(Branch::Plus, tau);
        let cm = self.corr(Branch::Minus, tau);
        let cp_r = self.corr(Branch::Plus, -tau);
        let cm_r = self.corr(Branch::Minus, -tau);
        let g2 = C64::new(self.g_c * self.g_c, 0.0);
        let sp = sigma_plus();
        let sm = sigma_minus();
        let id = Mat2::identity();
        let p_e = sp * sm;
        let p_g = sm * sp;
        let mut m = Mat4::zeros();
        m += sandwich_super(&p_e, &id) * (phi * cp);
        m += sandwich_super(&p_g, &id) * (phi.conj() * cm);
        m += sandwich_super(&id, &p_e) * (phi.conj() * cp_r);
        m += sandwich_super(&id, &p_g) * (phi * cm_r);
        m -= sandwich_super(&sp, &sm) * (phi.conj() * cm + phi * cm_r);
        m -= sandwich_super(&sm, &sp) * (phi * cp + phi.conj() * cp_r);
        m * (-g2)
    }

    /// Mirror-symmetrized kernel entering the order-`k` moment:
    /// `K_k(tau) = (Sigma(tau) + (-1)^k Sigma(-tau)) / 2`.
    fn symmetrized(&self, k: usize, tau: f64) -> Mat4 {
        let a = self.sigma0(tau);
        let b = self.sigma0(-tau);
        if k % 2 == 0 {
            (a + b) * C64::new(0.5, 0.0)
        } else {
            (a - b) * C64::new(0.5, 0.0)
        }
    }

    /// Both parities of the symmetrized kernel from one pair of kernel
    /// evaluations: `(K_even(tau), K_odd(tau))`.
    pub fn symmetrized_pair(&self, tau: f64) -> (Mat4, Mat4) {
        let a = self.sigma0(tau);
        let b = self.sigma0(-tau);
        ((a + b) * C64::new(0.5, 0.0), (a - b) * C64::new(0.5, 0.0))
    }

    /// Generalized partial moment
    /// `T^(j,k)(t) = -int_t^inf ((t-u)^j / j!) K_k(u) du`; `s_hat` is the
    /// diagonal case `j = k`.
    pub fn partial_moment(&self, j: usize, k: usize, t: f64) -> Result<Mat4> {
        if j > 2 || k > 2 {
            return Err(Error::UnsupportedOrder { k, l: 1 });
        }
        let mut jfact = 1.0;
        for i in 2..=j {
            jfact *= i as f64;
        }
        let f = |u: f64| self.symmetrized(k, u) * C64::new((t - u).powi(j as i32) / jfact, 0.0);
        let (value, residual) = self.panel_integral(t, 24.0 * PI, f);
        let scale = crate::linalg::max_abs(&value).max(1e-12 * self.g_c * self.g_c);
        let tol = 2e-5 * scale;
        if residual > tol {
            return Err(Error::QuadratureResidual { residual, tol });
        }
        Ok(-value)
    }

    /// `S^(k)` by direct time quadrature of the moment identity on the
    /// symmetrized kernel. Supports `k <= 2`.
    pub fn moment_superoperator(&self, k: usize) -> Result<Mat4> {
        if k > 2 {
            return Err(Error::UnsupportedOrder { k, l: 1 });
        }
        let f = |u: f64| self.symmetrized(k, u) * C64::new(moment_weight(k, u), 0.0);
        let (value, residual) = self.panel_integral(0.0, 24.0 * PI, f);
        let scale = crate::linalg::max_abs(&value).max(1e-12 * self.g_c * self.g_c);
        let tol = 2e-5 * scale;
        if residual > tol {
            return Err(Error::QuadratureResidual { residual, tol });
        }
        Ok(value)
    }

    /// Initial-correlation integral
    /// `S_hat^(k)(t) = -int_t^inf ((t-u)^k / k!) K_k(u) du`, so that
    /// `S_hat^(k)(0) = -S^(k)`.
    pub fn s_hat(&self, k: usize, t: f64) -> Result<Mat4> {
        if k > 2 {
            return Err(Error::UnsupportedOrder { k, l: 1 });
        }
        if !(t >= 0.0) {
            return Err(Error::InvalidArg(format!("s_hat needs t >= 0, got {t}")));
        }
        let mut kfact = 1.0;
        for i in 2..=k {
            kfact *= i as f64;
        }
        let f = |u: f64| self.symmetrized(k, u) * C64::new((t - u).powi(k as i32) / kfact, 0.0);
        let (value, residual) = self.panel_integral(t, 24.0 * PI, f);
        let scale = crate::linalg::max_abs(&value).max(1e-12 * self.g_c * self.g_c);
        let tol = 2e-5 * scale;
        if residual > tol {
            return Err(Error::QuadratureResidual { residual, tol });
        }
        Ok(-value)
    }

    /// Independently coded route to the same integral: the antiderivative
    /// kernel is built first by an inner quadrature,
    /// `Sigma^(k)(s) = (-1)^k int_s^inf ((u-s)^{k-1}/(k-1)!) K_k(u) du`,
    /// and then integrated over `(t, inf)`. Used to confirm that the two
    /// decompositions of the initial-correlation term agree.
    pub fn s_hat_via_antiderivative(&self, k: usize, t: f64) -> Result<Mat4> {
        if k == 0 {
            return self.s_hat(0, t);
        }
        if k > 2 {
            return Err(Error::UnsupportedOrder { k, l: 1 });
        }
        let mut km1fact = 1.0;
        for i in 2..k {
            km1fact *= i as f64;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let sigma_k = |s: f64| -> Mat4 {
            let inner = self
                .panel_integral(s, 16.0 * PI, |u| {
                    self.symmetrized(k, u) * C64::new((u - s).powi(k as i32 - 1) / km1fact, 0.0)
                })
                .0;
            inner * C64::new(sign, 0.0)
        };
        let (outer, _) = self.panel_integral(t, 12.0 * PI, sigma_k);
        Ok(-outer)
    }

    /// Matrix-valued integral over `(t0, inf)`: geometric refinement near
    /// the (logarithmically singular) left endpoint, half-period panels
    /// through the head region, then an averaged oscillatory tail.
    fn panel_integral(&self, t0: f64, head: f64, f: impl Fn(f64) -> Mat4) -> (Mat4, f64) {
        let (x, w) = gauss_legendre(16);
        let panel = |a: f64, b: f64| -> Mat4 {
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            let mut acc = Mat4::zeros();
            for (xi, wi) in x.iter().zip(w.iter()) {
                acc += f(c + h * xi) * C64::new(wi * h, 0.0);
            }
            acc
        };
        let mut total = Mat4::zeros();
        // Geometric panels over the first unit of time.
        let mut edges = vec![t0];
        let mut step = 1e-7;
        while step < 1.0 {
            edges.push(t0 + step);
            step *= 2.0;
        }
        edges.push(t0 + 1.0);
        for pair in edges.windows(2) {
            total += panel(pair[0], pair[1]);
        }
        // Uniform half-period panels through the head region, then an
        // averaged tail long enough for the asymptotic oscillation.
        let h = PI / DELTA_E;
        let n_head = (head / h).ceil() as usize;
        let n_tail = 160;
        let mut partials: Vec<Mat4> = Vec::with_capacity(n_head + n_tail);
        let mut acc = Mat4::zeros();
        let head_start = t0 + 1.0;
        for p in 0..n_head + n_tail {
            let a = head_start + p as f64 * h;
            acc += panel(a, a + h);
            partials.push(acc);
        }
        let n_avg = 24.min(partials.len());
        let window = &partials[partials.len() - n_avg..];
        let mut tail_value = Mat4::zeros();
        let mut residual = 0.0_f64;
        for r in 0..4 {
            for c in 0..4 {
                let re: Vec<f64> = window.iter().map(|m| m[(r, c)].re).collect();
                let im: Vec<f64> = window.iter().map(|m| m[(r, c)].im).collect();
                let (vre, ere) = averaged_limit(&re);
                let (vim, eim) = averaged_limit(&im);
                tail_value[(r, c)] = C64::new(vre, vim);
                residual = residual.max(ere).max(eim);
            }
        }
        (total + tail_value, residual)
    }
}

fn moment_weight(k: usize, u: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => -u,
        2 => 0.5 * u * u,
        _ => unreachable!(),
    }
}

/// `S^(k)_1` from the quadrature path. The contraction order is part of
/// the signature for symmetry with the rule-based path; only `n_c = 1`
/// carries a quadrature oracle.
pub fn compute_s_oracle(k: usize, n_c: usize, g_c: f64, spec: &BathSpec) -> Result<Mat4> {
    if n_c != 1 {
        return Err(Error::UnsupportedOrder { k, l: n_c });
    }
    KernelCtx::new(g_c, *spec)?.moment_superoperator(k)
}

/// Moment integral of a scalar kernel over `(0, inf)`:
/// `int ((-u)^k / k!) f(u) du`. Used to validate the moment identity on
/// kernels with a known antiderivative ladder.
pub fn scalar_moment(f: impl Fn(f64) -> f64, k: usize, t_max: f64) -> f64 {
    let mut kfact = 1.0;
    for i in 2..=k {
        kfact *= i as f64;
    }
    let mut g = |u: f64| (-u).powi(k as i32) / kfact * f(u);
    let (v, _) = crate::quad::adaptive_quad(&mut g, 0.0, t_max, 1e-14);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::correlation_time_domain;
    use crate::linalg::max_abs;

    fn ctx() -> KernelCtx {
        KernelCtx::new(0.1, BathSpec::default()).unwrap()
    }

    #[test]
    fn scalar_moment_identity_on_exponential() {
        // For f = e^{-gamma u}: S^(k) = (-1)^k / gamma^{k+1}.
        for &gamma in &[0.5, 1.0, 2.5] {
            for k in 0..=2 {
                let v = scalar_moment(|u| (-gamma * u).exp(), k, 200.0 / gamma);
                let expected = (-1.0f64).powi(k as i32) / gamma.powi(k as i32 + 1);
                assert!(
                    (v - expected).abs() < 1e-10 * expected.abs(),
                    "gamma={gamma} k={k}: {v} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn grid_correlation_matches_pointwise_op() {
        let c = ctx();
        for &tau in &[0.0, 0.4, 3.0, 10.0, 40.0] {
            for branch in [Branch::Plus, Branch::Minus] {
                let grid = c.corr(branch, tau);
                let point = correlation_time_domain(&c.spec, tau, branch).unwrap();
                assert!(
                    (grid - point).norm() < 2e-6 * point.norm().max(1e-4),
                    "tau={tau} branch={branch:?}: {grid} vs {point}"
                );
            }
        }
    }

    #[test]
    fn asymptotic_branch_is_continuous() {
        let c = ctx();
        for branch in [Branch::Plus, Branch::Minus] {
            let below = c.corr(branch, T_ASYMPTOTIC - 1e-6);
            let above = c.corr(branch, T_ASYMPTOTIC + 1e-6);
            // Bounded by the grid's phase-resolution floor; a wrong
            // expansion would be off at order one.
            assert!(
                (below - above).norm() < 1e-5 * below.norm().max(1e-10),
                "branch={branch:?}: {below} vs {above}"
            );
        }
    }

    #[test]
    fn kernel_is_conjugate_symmetric_in_time() {
        let c = ctx();
        for &tau in &[0.3, 1.7, 6.0] {
            let a = c.sigma0(tau);
            let b = c.sigma0(-tau);
            for r in 0..4 {
                for col in 0..4 {
                    assert!(
                        (b[(r, col)] - a[(r, col)].conj()).norm()
                            < 1e-10 * max_abs(&a).max(1e-12),
                        "tau={tau}"
                    );
                }
            }
        }
    }

    #[test]
    fn s_hat_at_zero_is_minus_the_moment() {
        let c = ctx();
        for k in 0..=2 {
            let s = c.moment_superoperator(k).unwrap();
            let hat = c.s_hat(k, 0.0).unwrap();
            let diff = max_abs(&(hat + s));
            assert!(diff < 1e-9 * max_abs(&s).max(1e-12), "k={k}: diff {diff:.3e}");
        }
    }

    #[test]
    fn s_hat_decays_with_time() {
        let c = ctx();
        let h0 = max_abs(&c.s_hat(0, 0.0).unwrap());
        let h10 = max_abs(&c.s_hat(0, 10.0).unwrap());
        assert!(h10 < 0.1 * h0, "h0={h0:.3e}, h10={h10:.3e}");
    }

    #[test]
    fn oracle_agrees_with_rule_path_at_one_contraction() {
        let spec = BathSpec::default();
        for k in 0..=2 {
            let rules = crate::diagrams::compute_s(k, 1, 0.1, &spec).unwrap();
            let oracle = compute_s_oracle(k, 1, 0.1, &spec).unwrap();
            let scale = max_abs(&rules);
            for r in 0..4 {
                for c in 0..4 {
                    let a = rules[(r, c)];
                    let b = oracle[(r, c)];
                    let denom = a.norm().max(b.norm()).max(1e-3 * scale);
                    assert!(
                        (a - b).norm() <= 1e-4 * denom,
                        "k={k} entry ({r},{c}): rule {a} vs oracle {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn oracle_rejects_higher_contraction_orders() {
        assert!(compute_s_oracle(0, 2, 0.1, &BathSpec::default()).is_err());
    }
}
