//! Assembly of the constant time-local evolution generator for a chosen
//! approximation scheme.
//!
//! Closing the derivative hierarchy on a segment with constant drive
//! substitutes `rho_(k) = G^k rho`, which turns the scheme's superoperator
//! sum into a fixed-point equation
//! `G = L_D + sum_{(k,l)} S^(k)_l G^k` solved by iteration.

use crate::diagrams::{STable, SUPPORTED_ORDERS};
use crate::linalg::{commutator_super, max_abs, sigma_x, trace_defect, Mat4};
use crate::terms::enumerate_terms;
use crate::{Error, Result, C64};

/// Approximation scheme selecting which `S^(k)_l` enter the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Lowest order only: `S^(0)_1`.
    BornMarkov,
    /// One contraction, antiderivative orders `0..=markov_order`
    /// (at most 2).
    BornOnly { markov_order: usize },
    /// Everything in the table up to the combined-order cutoff.
    Full { cutoff: usize },
}

pub const MAX_MARKOV_ORDER: usize = 2;
pub const ALLOWED_CUTOFFS: [usize; 4] = [1, 3, 5, 7];

impl Scheme {
    pub fn validate(&self) -> Result<()> {
        match self {
            Scheme::BornMarkov => Ok(()),
            Scheme::BornOnly { markov_order } => {
                if *markov_order > MAX_MARKOV_ORDER {
                    return Err(Error::InvalidArg(format!(
                        "markov order must be <= {MAX_MARKOV_ORDER}, got {markov_order}"
                    )));
                }
                Ok(())
            }
            Scheme::Full { cutoff } => {
                if !ALLOWED_CUTOFFS.contains(cutoff) {
                    return Err(Error::InvalidArg(format!(
                        "cutoff must be one of {ALLOWED_CUTOFFS:?}, got {cutoff}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// The `(k, l)` pairs the scheme draws from the table. For the full
    /// scheme these are all supported pairs whose combined order
    /// `2l - 1 + 2k` stays within the cutoff; beyond five the table holds
    /// nothing further, so cutoff seven selects the same set.
    pub fn orders(&self) -> Vec<(usize, usize)> {
        match self {
            Scheme::BornMarkov => vec![(0, 1)],
            Scheme::BornOnly { markov_order } => (0..=*markov_order).map(|k| (k, 1)).collect(),
            Scheme::Full { cutoff } => SUPPORTED_ORDERS
                .iter()
                .copied()
                .filter(|&(k, l)| 2 * l - 1 + 2 * k <= *cutoff)
                .collect(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Scheme::BornMarkov => "bm".into(),
            Scheme::BornOnly { markov_order } => format!("born{markov_order}"),
            Scheme::Full { cutoff } => format!("nbm{cutoff}"),
        }
    }
}

/// An assembled generator together with its convergence diagnostics.
#[derive(Clone, Debug)]
pub struct Generator {
    pub matrix: Mat4,
    pub scheme: Scheme,
    pub drive_amplitude: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Superoperator of the drive commutator `rho -> -i [g_D sigma_x, rho]`
/// while the pulse is on, zero otherwise.
pub fn drive_liouvillian(g_d: f64, active: bool) -> Result<Mat4> {
    if !(g_d >= 0.0) {
        return Err(Error::InvalidArg(format!("drive amplitude must be nonnegative, got {g_d}")));
    }
    if !active {
        return Ok(Mat4::zeros());
    }
    Ok(commutator_super(&sigma_x()) * C64::new(0.0, -g_d))
}

pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITERS: usize = 200;

/// Solves `G = L_D + sum S^(k)_l G^k` by iteration from the `k = 0`
/// content. Exact on segments where the drive is constant.
pub fn assemble_generator(table: &STable, scheme: Scheme, drive: &Mat4) -> Result<Generator> {
    scheme.validate()?;
    let orders = scheme.orders();
    let parts: Vec<(usize, Mat4)> = orders
        .iter()
        .map(|&(k, l)| table.get(k, l).map(|m| (k, m)))
        .collect::<Result<_>>()?;

    let map = |g: &Mat4| -> Mat4 {
        let mut acc = *drive;
        for (k, s) in &parts {
            let mut power = Mat4::identity();
            for _ in 0..*k {
                power *= *g;
            }
            acc += s * power;
        }
        acc
    };

    let mut g = {
        let mut acc = *drive;
        for (k, s) in &parts {
            if *k == 0 {
                acc += s;
            }
        }
        acc
    };
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for iter in 1..=FIXED_POINT_MAX_ITERS {
        let next = map(&g);
        residual = max_abs(&(next - g));
        g = next;
        iterations = iter;
        if residual < FIXED_POINT_TOL {
            break;
        }
    }
    if residual >= FIXED_POINT_TOL {
        return Err(Error::NotConverged { residual, iters: iterations });
    }
    let defect = trace_defect(&g);
    if defect > 1e-10 {
        return Err(Error::GroupSymmetry(format!(
            "assembled generator is not trace preserving: defect {defect:.3e}"
        )));
    }
    Ok(Generator {
        matrix: g,
        scheme,
        drive_amplitude: if max_abs(drive) > 0.0 { drive[(0, 1)].norm() } else { 0.0 },
        iterations,
        residual,
    })
}

/// Only the instantaneous (`k = 0`) content of the full scheme: the
/// reference whose steady state the full generator must share.
pub fn markov_subset_generator(table: &STable, cutoff: usize) -> Result<Mat4> {
    let mut acc = Mat4::zeros();
    for &(k, l) in SUPPORTED_ORDERS.iter() {
        if k == 0 && 2 * l - 1 <= cutoff {
            acc += table.get(0, l)?;
        }
    }
    Ok(acc)
}

/// The generator as an explicit sum over enumerated product terms with
/// all contraction-order assignments of combined order within the
/// cutoff. Free evolution only (no drive). For cutoff five this is the
/// eight-term sum
/// `S01 + S02 + S03 + S11 S01 + S12 S01 + S11 S02 + S21 S01 S01 + S11 S11 S01`.
pub fn explicit_sum_generator(table: &STable, cutoff: usize) -> Result<Mat4> {
    if !ALLOWED_CUTOFFS.contains(&cutoff) {
        return Err(Error::InvalidArg(format!(
            "cutoff must be one of {ALLOWED_CUTOFFS:?}, got {cutoff}"
        )));
    }
    let max_len = (cutoff + 1) / 2;
    let mut total = Mat4::zeros();
    for n in 1..=max_len {
        for term in enumerate_terms(n)? {
            // All assignments of contraction orders l_i >= 1 to the n
            // factors, bounded by the combined order.
            let mut assignment = vec![1usize; n];
            loop {
                let combined: usize = term
                    .0
                    .iter()
                    .zip(&assignment)
                    .map(|(&f, &l)| 2 * l - 1 + f)
                    .sum();
                let all_supported = term
                    .0
                    .iter()
                    .zip(&assignment)
                    .all(|(&f, &l)| STable::supported(f, l));
                if combined <= cutoff && all_supported {
                    let mut product = Mat4::identity();
                    for (&f, &l) in term.0.iter().zip(&assignment) {
                        product *= table.get(f, l)?;
                    }
                    total += product;
                }
                // next assignment
                let mut idx = 0;
                loop {
                    if idx == n {
                        break;
                    }
                    assignment[idx] += 1;
                    if assignment[idx] <= crate::diagrams::MAX_CONTRACTIONS {
                        break;
                    }
                    assignment[idx] = 1;
                    idx += 1;
                }
                if idx == n {
                    break;
                }
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::BathSpec;
    use crate::linalg::{hermiticity_defect, unvectorize, vectorize, Mat2, ONE, ZERO};

    fn table(g_c: f64) -> STable {
        STable::build(g_c, BathSpec::default()).unwrap()
    }

    #[test]
    fn inactive_drive_is_zero() {
        assert_eq!(drive_liouvillian(0.2, false).unwrap(), Mat4::zeros());
        assert!(drive_liouvillian(-0.1, true).is_err());
    }

    #[test]
    fn drive_output_is_traceless_hermitian() {
        let l = drive_liouvillian(0.2, true).unwrap();
        let ground = Mat2::new(ZERO, ZERO, ZERO, ONE);
        let out = unvectorize(&(l * vectorize(&ground)));
        assert!((out[(0, 0)] + out[(1, 1)]).norm() < 1e-15);
        assert!((out - out.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-15);
    }

    #[test]
    fn born_markov_without_drive_is_the_lowest_superoperator() {
        let t = table(0.2);
        let g = assemble_generator(&t, Scheme::BornMarkov, &Mat4::zeros()).unwrap();
        assert_eq!(g.iterations, 1);
        assert!(max_abs(&(g.matrix - t.get(0, 1).unwrap())) < 1e-15);
    }

    #[test]
    fn zero_coupling_leaves_only_the_drive() {
        let t = table(0.0);
        let drive = drive_liouvillian(0.2, true).unwrap();
        let g = assemble_generator(&t, Scheme::Full { cutoff: 5 }, &drive).unwrap();
        assert!(max_abs(&(g.matrix - drive)) < 1e-15);
    }

    #[test]
    fn fixed_point_converges_fast_at_moderate_coupling() {
        for &g_c in &[0.05, 0.1, 0.2] {
            let t = table(g_c);
            let g = assemble_generator(&t, Scheme::Full { cutoff: 5 }, &Mat4::zeros()).unwrap();
            assert!(g.iterations < 50, "g_c={g_c}: {} iterations", g.iterations);
            assert!(trace_defect(&g.matrix) < 1e-10);
            assert!(hermiticity_defect(&g.matrix) < 1e-10 * max_abs(&g.matrix));
        }
    }

    #[test]
    fn scheme_validation() {
        assert!(Scheme::BornOnly { markov_order: 3 }.validate().is_err());
        assert!(Scheme::Full { cutoff: 4 }.validate().is_err());
        assert!(Scheme::Full { cutoff: 7 }.validate().is_ok());
        // The table carries nothing beyond combined order five.
        assert_eq!(Scheme::Full { cutoff: 7 }.orders(), Scheme::Full { cutoff: 5 }.orders());
        assert_eq!(Scheme::Full { cutoff: 1 }.orders(), vec![(0, 1)]);
    }

    #[test]
    fn explicit_sum_cutoff_one_is_the_lowest_superoperator() {
        let t = table(0.15);
        let sum = explicit_sum_generator(&t, 1).unwrap();
        assert!(max_abs(&(sum - t.get(0, 1).unwrap())) < 1e-15);
    }

    #[test]
    fn explicit_sum_cutoff_five_matches_the_eight_term_product_list() {
        let t = table(0.15);
        let s = |k: usize, l: usize| t.get(k, l).unwrap();
        let expected = s(0, 1)
            + s(0, 2)
            + s(0, 3)
            + s(1, 1) * s(0, 1)
            + s(1, 2) * s(0, 1)
            + s(1, 1) * s(0, 2)
            + s(2, 1) * s(0, 1) * s(0, 1)
            + s(1, 1) * s(1, 1) * s(0, 1);
        let sum = explicit_sum_generator(&t, 5).unwrap();
        assert!(max_abs(&(sum - expected)) < 1e-14 * max_abs(&expected));
    }

    #[test]
    fn fixed_point_approaches_explicit_sum_at_high_order_in_coupling() {
        // The closure re-sums products beyond the cutoff; the leading
        // difference carries eight powers of the coupling.
        let mut norms = Vec::new();
        for &g_c in &[0.2, 0.1] {
            let t = table(g_c);
            let fp = assemble_generator(&t, Scheme::Full { cutoff: 5 }, &Mat4::zeros()).unwrap();
            let ex = explicit_sum_generator(&t, 5).unwrap();
            norms.push(max_abs(&(fp.matrix - ex)));
        }
        let ratio = norms[0] / norms[1];
        assert!(ratio > 2f64.powi(7), "ratio {ratio}");
    }
}
