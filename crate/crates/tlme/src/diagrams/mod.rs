//! Contour diagrams for the memory-kernel expansion and the table of
//! constant relaxation superoperators built from them.
//!
//! A diagram with `n_c` contractions has `2 n_c` time-ordered vertices,
//! each on the upper or lower branch of the doubled time axis, and a
//! perfect pairing of raising with lowering vertices. Only irreducible
//! diagrams (no uncrossed gap between consecutive vertices) contribute.

pub mod engine;

use crate::bath::{spectrum_derivative_full_line, BathSpec, Branch};
use crate::linalg::{max_abs, sandwich_super, sigma_minus, sigma_plus, Mat2, Mat4};
use crate::{Error, Result, C64};
use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

pub const MAX_CONTRACTIONS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Contour {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpSign {
    Raise,
    Lower,
}

impl OpSign {
    pub fn flip(self) -> Self {
        match self {
            OpSign::Raise => OpSign::Lower,
            OpSign::Lower => OpSign::Raise,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Vertex {
    /// Time-order index, 1-based; larger is later.
    pub position: usize,
    pub contour: Contour,
    pub op_sign: OpSign,
}

/// A time-ordered contour diagram. Pairings are stored as
/// `(early, late)` position pairs. The stored `op_sign`s form the
/// canonical dressing (earlier vertex of each pair raises); evaluation
/// sums over both dressings of every pair.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Diagram {
    pub vertices: Vec<Vertex>,
    pub pairings: Vec<(usize, usize)>,
    pub n_c: usize,
}

impl Diagram {
    pub fn lower_count(&self) -> usize {
        self.vertices.iter().filter(|v| v.contour == Contour::Lower).count()
    }
}

/// All perfect matchings of positions `1..=2n` into `(early, late)`
/// pairs.
fn matchings(n: usize) -> Vec<Vec<(usize, usize)>> {
    fn go(free: &mut Vec<usize>, acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if free.is_empty() {
            out.push(acc.clone());
            return;
        }
        let first = free[0];
        for i in 1..free.len() {
            let partner = free[i];
            let mut rest: Vec<usize> = free.iter().copied().filter(|&p| p != first && p != partner).collect();
            acc.push((first, partner));
            go(&mut rest, acc, out);
            acc.pop();
        }
    }
    let mut free: Vec<usize> = (1..=2 * n).collect();
    let mut out = Vec::new();
    go(&mut free, &mut Vec::new(), &mut out);
    out
}

/// Irreducibility: every gap between consecutive positions is spanned by
/// at least one pairing.
pub fn is_irreducible(pairings: &[(usize, usize)], n_c: usize) -> bool {
    for gap in 1..2 * n_c {
        if !pairings.iter().any(|&(e, l)| e <= gap && gap < l) {
            return false;
        }
    }
    true
}

/// Enumerates all irreducible diagrams with `n_c` contractions, in a
/// deterministic order. Contour assignments are exhaustive; the stored
/// operator signs are the canonical dressing.
pub fn enumerate_diagrams(n_c: usize) -> Result<Vec<Diagram>> {
    if n_c == 0 || n_c > MAX_CONTRACTIONS {
        return Err(Error::InvalidArg(format!(
            "contraction order must be in 1..={MAX_CONTRACTIONS}, got {n_c}"
        )));
    }
    let mut out = Vec::new();
    for pairing in matchings(n_c) {
        if !is_irreducible(&pairing, n_c) {
            continue;
        }
        for mask in 0..(1u32 << (2 * n_c)) {
            let vertices: Vec<Vertex> = (1..=2 * n_c)
                .map(|pos| {
                    let contour = if mask & (1 << (pos - 1)) == 0 { Contour::Upper } else { Contour::Lower };
                    let op_sign = if pairing.iter().any(|&(e, _)| e == pos) {
                        OpSign::Raise
                    } else {
                        OpSign::Lower
                    };
                    Vertex { position: pos, contour, op_sign }
                })
                .collect();
            out.push(Diagram { vertices, pairings: pairing.clone(), n_c });
        }
    }
    out.sort();
    Ok(out)
}

/// The supported `(k, l)` pairs: everything of combined order
/// `2l - 1 + 2k <= 5` with up to three contractions. These are exactly
/// the superoperators entering the order-five truncation.
pub const SUPPORTED_ORDERS: [(usize, usize); 6] =
    [(0, 1), (1, 1), (2, 1), (0, 2), (1, 2), (0, 3)];

/// Table of relaxation superoperators `S^(k)_l`, premultiplied by the
/// coupling factor `g_c^{2l}`. Values are stored at unit coupling so the
/// exact `g_c^{2l}` scaling is applied on lookup.
#[derive(Clone, Debug)]
pub struct STable {
    pub spec: BathSpec,
    pub g_c: f64,
    unit_values: BTreeMap<(usize, usize), Mat4>,
}

/// Unit-coupling values are bath-dependent only; they are computed once
/// per bath and shared.
fn cached_unit_values(spec: &BathSpec) -> Result<BTreeMap<(usize, usize), Mat4>> {
    static CACHE: Mutex<Option<HashMap<(u64, u64), BTreeMap<(usize, usize), Mat4>>>> =
        Mutex::new(None);
    let key = (spec.beta.to_bits(), spec.omega_c.to_bits());
    {
        let guard = CACHE.lock().unwrap();
        if let Some(map) = guard.as_ref() {
            if let Some(values) = map.get(&key) {
                return Ok(values.clone());
            }
        }
    }
    let mut unit_values = BTreeMap::new();
    for &(k, l) in SUPPORTED_ORDERS.iter() {
        unit_values.insert((k, l), evaluate_order(k, l, spec)?);
    }
    let mut guard = CACHE.lock().unwrap();
    guard.get_or_insert_with(HashMap::new).insert(key, unit_values.clone());
    Ok(unit_values)
}

impl STable {
    /// Builds the full table for the given bath and coupling.
    pub fn build(g_c: f64, spec: BathSpec) -> Result<Self> {
        if !(g_c >= 0.0) {
            return Err(Error::InvalidArg(format!("coupling must be nonnegative, got {g_c}")));
        }
        let unit_values = cached_unit_values(&spec)?;
        Ok(STable { spec, g_c, unit_values })
    }

    pub fn supported(k: usize, l: usize) -> bool {
        SUPPORTED_ORDERS.contains(&(k, l))
    }

    /// `S^(k)_l` at the table's coupling.
    pub fn get(&self, k: usize, l: usize) -> Result<Mat4> {
        let unit = self
            .unit_values
            .get(&(k, l))
            .ok_or(Error::UnsupportedOrder { k, l })?;
        Ok(unit * C64::new(self.g_c.powi(2 * l as i32), 0.0))
    }

    /// All `(k, l)` pairs in the table, ascending.
    pub fn orders(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = self.unit_values.keys().copied().collect();
        v.sort_by_key(|&(k, l)| (2 * l - 1 + 2 * k, l, k));
        v
    }
}

/// The constant superoperator `S^(k)_{n_c}` at coupling `g_c`, evaluated
/// through the diagram rules.
pub fn compute_s(k: usize, n_c: usize, g_c: f64, spec: &BathSpec) -> Result<Mat4> {
    if !STable::supported(k, n_c) {
        return Err(Error::UnsupportedOrder { k, l: n_c });
    }
    let unit = cached_unit_values(spec)?;
    Ok(unit[&(k, n_c)] * C64::new(g_c.powi(2 * n_c as i32), 0.0))
}

/// Computes `S^(k)_{n_c}` at unit coupling by summing all diagram groups.
fn evaluate_order(k: usize, n_c: usize, spec: &BathSpec) -> Result<Mat4> {
    let diagrams = enumerate_diagrams(n_c)?;
    let mut total = Mat4::zeros();
    for diagram in &diagrams {
        for dressing in engine::dressings(diagram) {
            let value = engine::dressed_value(&dressing, k, spec)?;
            let slot = dressing_slot(&dressing);
            total += slot * value;
        }
    }
    check_group_symmetry(&total)?;
    Ok(total)
}

/// Superoperator slot `rho -> U rho L` of a dressed diagram: upper-contour
/// operators multiply from the left in descending time order, lower ones
/// from the right in ascending order.
pub(crate) fn dressing_slot(d: &engine::DressedDiagram) -> Mat4 {
    let mut upper = Mat2::identity();
    for v in d.vertices.iter().rev() {
        if v.contour == Contour::Upper {
            upper *= op_matrix(v.op_sign);
        }
    }
    let mut lower = Mat2::identity();
    for v in d.vertices.iter() {
        if v.contour == Contour::Lower {
            lower *= op_matrix(v.op_sign);
        }
    }
    sandwich_super(&upper, &lower)
}

fn op_matrix(sign: OpSign) -> Mat2 {
    match sign {
        OpSign::Raise => sigma_plus(),
        OpSign::Lower => sigma_minus(),
    }
}

/// Group-level sanity: population-to-population entries must come out
/// real, and the result must be Hermiticity covariant. A violation means
/// the group summation itself is broken.
fn check_group_symmetry(m: &Mat4) -> Result<()> {
    let scale = max_abs(m).max(1e-30);
    for &(r, c) in &[(0usize, 0usize), (0, 3), (3, 0), (3, 3)] {
        if m[(r, c)].im.abs() > 1e-10 * scale {
            return Err(Error::GroupSymmetry(format!(
                "population entry ({r},{c}) has imaginary part {:.3e}",
                m[(r, c)].im
            )));
        }
    }
    let herm = crate::linalg::hermiticity_defect(m);
    if herm > 1e-10 * scale {
        return Err(Error::GroupSymmetry(format!(
            "Hermiticity covariance defect {herm:.3e}"
        )));
    }
    Ok(())
}

/// Evaluates the summed contribution of one group of diagrams (same
/// superoperator entry, same branch multiset) at antiderivative order `k`.
/// Exposed for inspection and tests; `STable::build` performs the same
/// summation over all groups.
pub fn evaluate_diagram_group(
    group: &[engine::DressedDiagram],
    k: usize,
    spec: &BathSpec,
    _delta_e: f64,
) -> Result<C64> {
    if group.is_empty() {
        return Err(Error::InvalidArg("empty diagram group".into()));
    }
    let entry = engine::group_entry(&group[0])
        .ok_or_else(|| Error::GroupSymmetry("group has no superoperator entry".into()))?;
    let branches = engine::branch_multiset(&group[0]);
    for d in group {
        if engine::group_entry(d) != Some(entry) || engine::branch_multiset(d) != branches {
            return Err(Error::GroupSymmetry(
                "diagrams in the group differ in entry or branches".into(),
            ));
        }
    }
    let mut acc = C64::new(0.0, 0.0);
    for d in group {
        let v = engine::dressed_value(d, k, spec)?;
        let slot = dressing_slot(d);
        acc += slot[(entry.0, entry.1)] * v;
    }
    Ok(acc)
}

/// Convenience: the full set of dressed diagrams at order `n_c`, bucketed
/// into groups by superoperator entry and branch multiset.
pub fn diagram_groups(n_c: usize) -> Result<Vec<Vec<engine::DressedDiagram>>> {
    let mut buckets: BTreeMap<((usize, usize), Vec<Branch>), Vec<engine::DressedDiagram>> =
        BTreeMap::new();
    for diagram in enumerate_diagrams(n_c)? {
        for dressing in engine::dressings(&diagram) {
            if let Some(entry) = engine::group_entry(&dressing) {
                let key = (entry, engine::branch_multiset(&dressing));
                buckets.entry(key).or_default().push(dressing);
            }
        }
    }
    Ok(buckets.into_values().collect())
}

/// Closed-form one-contraction superoperator at unit coupling; the sum of
/// the eight dressed one-contraction diagrams.
///
/// With `F±` the spectral functions continued over the real line and all
/// derivatives taken at the splitting, the structure is a generalized
/// amplitude-damping form whose coefficients pick up `i^k` phases from
/// the antiderivative order.
pub fn one_contraction_closed_form(k: usize, spec: &BathSpec) -> Result<Mat4> {
    if k > 2 {
        return Err(Error::UnsupportedOrder { k, l: 1 });
    }
    let de = crate::DELTA_E;
    let fp = spectrum_derivative_full_line(spec, de, Branch::Plus, k);
    let fm = spectrum_derivative_full_line(spec, de, Branch::Minus, k);
    let ik = C64::new(0.0, 1.0).powu(k as u32);
    let mik = (-C64::new(0.0, 1.0)).powu(k as u32);
    let mut kfact = 1.0;
    for i in 2..=k {
        kfact *= i as f64;
    }
    let pi = std::f64::consts::PI / kfact;
    let sp = sigma_plus();
    let sm = sigma_minus();
    let id = Mat2::identity();
    let pop_up = sp * sm; // |e><e|
    let pop_dn = sm * sp; // |g><g|
    let mut m = Mat4::zeros();
    m += sandwich_super(&pop_up, &id) * (-ik * pi * fp);
    m += sandwich_super(&id, &pop_up) * (-mik * pi * fp);
    m += sandwich_super(&pop_dn, &id) * (-mik * pi * fm);
    m += sandwich_super(&id, &pop_dn) * (-ik * pi * fm);
    m += sandwich_super(&sm, &sp) * ((ik + mik) * pi * fp);
    m += sandwich_super(&sp, &sm) * ((ik + mik) * pi * fm);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_contraction_has_four_diagrams() {
        let diagrams = enumerate_diagrams(1).unwrap();
        assert_eq!(diagrams.len(), 4);
        for d in &diagrams {
            let raises = d.vertices.iter().filter(|v| v.op_sign == OpSign::Raise).count();
            let lowers = d.vertices.iter().filter(|v| v.op_sign == OpSign::Lower).count();
            assert_eq!((raises, lowers), (1, 1));
        }
    }

    /// Brute-force oracle: enumerate all (pairing, contour) assignments of
    /// `2 n_c` vertices and filter for irreducibility.
    fn brute_force_count(n_c: usize) -> usize {
        let mut count = 0;
        for pairing in matchings(n_c) {
            if !is_irreducible(&pairing, n_c) {
                continue;
            }
            count += 1usize << (2 * n_c);
        }
        count
    }

    #[test]
    fn counts_match_brute_force() {
        assert_eq!(enumerate_diagrams(1).unwrap().len(), brute_force_count(1));
        assert_eq!(enumerate_diagrams(2).unwrap().len(), brute_force_count(2));
        assert_eq!(enumerate_diagrams(3).unwrap().len(), brute_force_count(3));
        // Matchings surviving the irreducibility filter: 1, 2, 10.
        assert_eq!(brute_force_count(2), 2 << 4);
        assert_eq!(brute_force_count(3), 10 << 6);
    }

    #[test]
    fn reducible_pairings_are_rejected() {
        // (1,2)(3,4) can be cut between 2 and 3.
        assert!(!is_irreducible(&[(1, 2), (3, 4)], 2));
        assert!(is_irreducible(&[(1, 3), (2, 4)], 2));
        assert!(is_irreducible(&[(1, 4), (2, 3)], 2));
    }

    #[test]
    fn enumeration_is_deterministic() {
        let a = enumerate_diagrams(2).unwrap();
        let b = enumerate_diagrams(2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn order_bounds() {
        assert!(enumerate_diagrams(0).is_err());
        assert!(enumerate_diagrams(4).is_err());
    }
}
