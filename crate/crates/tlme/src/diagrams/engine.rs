//! Evaluation of diagram contributions to the constant superoperators.
//!
//! Each dressed diagram maps to a product of boundary-value factors
//! `1/(Y_j - i j eta)` over cumulative vertex-frequency sums `Y_j`,
//! integrated against the spectral weights of its contractions over the
//! whole real line. The group-summed limit `eta -> 0` keeps only the
//! delta parts of every factor; principal-value parts cancel between
//! mirrored diagrams and are dropped at each elimination step. The
//! bookkeeping is exact: scalars are Gaussian rationals times powers of
//! `eta`, so the compensation of the short-lived `1/eta` divergences
//! (from coinciding pole locations) is verified identically rather than
//! in floating point.

use super::{Contour, Diagram, OpSign, Vertex, MAX_CONTRACTIONS};
use crate::bath::{spectrum_derivative_full_line, BathSpec, Branch};
use crate::{Error, Result, C64};
use num_rational::Ratio;
use std::collections::BTreeMap;

type Q = Ratio<i128>;

fn q(n: i128) -> Q {
    Ratio::from_integer(n)
}

/// Exact complex rational.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct QC {
    re: Q,
    im: Q,
}

impl QC {
    const fn new(re: Q, im: Q) -> Self {
        QC { re, im }
    }
    fn zero() -> Self {
        QC::new(q(0), q(0))
    }
    fn one() -> Self {
        QC::new(q(1), q(0))
    }
    fn from_int(n: i128) -> Self {
        QC::new(q(n), q(0))
    }
    fn from_ratio(r: Q) -> Self {
        QC::new(r, q(0))
    }
    fn i() -> Self {
        QC::new(q(0), q(1))
    }
    fn is_zero(&self) -> bool {
        self.re == q(0) && self.im == q(0)
    }
    fn add(&self, o: &QC) -> QC {
        QC::new(self.re + o.re, self.im + o.im)
    }
    fn mul(&self, o: &QC) -> QC {
        QC::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
    fn neg(&self) -> QC {
        QC::new(-self.re, -self.im)
    }
    fn inv(&self) -> QC {
        let d = self.re * self.re + self.im * self.im;
        assert!(d != q(0), "inverting exact zero");
        QC::new(self.re / d, -self.im / d)
    }
    /// i^n for any integer n.
    fn i_pow(n: i64) -> QC {
        match n.rem_euclid(4) {
            0 => QC::one(),
            1 => QC::i(),
            2 => QC::one().neg(),
            _ => QC::i().neg(),
        }
    }
    fn to_c64(self) -> C64 {
        fn f(r: Q) -> f64 {
            *r.numer() as f64 / *r.denom() as f64
        }
        C64::new(f(self.re), f(self.im))
    }
}

/// Truncated Laurent polynomial in the regulator, exponents clamped to
/// `[-WINDOW, WINDOW]`. Everything above the window is irrelevant to the
/// constant term; anything below it would be a genuine divergence and is
/// kept so the final cancellation check sees it.
const WINDOW: i32 = 14;

#[derive(Clone, Debug, PartialEq)]
struct Laurent(BTreeMap<i32, QC>);

impl Laurent {
    fn zero() -> Self {
        Laurent(BTreeMap::new())
    }
    fn from_qc(c: QC) -> Self {
        let mut m = BTreeMap::new();
        if !c.is_zero() {
            m.insert(0, c);
        }
        Laurent(m)
    }
    fn monomial(c: QC, e: i32) -> Self {
        let mut m = BTreeMap::new();
        if !c.is_zero() {
            m.insert(e, c);
        }
        Laurent(m)
    }
    fn add_inplace(&mut self, other: &Laurent) {
        for (&e, c) in other.0.iter() {
            let entry = self.0.entry(e).or_insert_with(QC::zero);
            *entry = entry.add(c);
            if entry.is_zero() {
                self.0.remove(&e);
            }
        }
    }
    fn mul(&self, other: &Laurent) -> Laurent {
        let mut out = BTreeMap::new();
        for (&e1, c1) in self.0.iter() {
            for (&e2, c2) in other.0.iter() {
                let e = e1 + e2;
                if e > WINDOW {
                    continue;
                }
                assert!(e >= -WINDOW, "regulator window exceeded");
                let c = c1.mul(c2);
                if c.is_zero() {
                    continue;
                }
                let entry = out.entry(e).or_insert_with(QC::zero);
                *entry = entry.add(&c);
                if entry.is_zero() {
                    out.remove(&e);
                }
            }
        }
        Laurent(out)
    }
    fn scale(&self, c: &QC) -> Laurent {
        if c.is_zero() {
            return Laurent::zero();
        }
        Laurent(self.0.iter().map(|(&e, v)| (e, v.mul(c))).collect())
    }
    fn lead(&self) -> Option<i32> {
        self.0.keys().next().copied()
    }
    fn coeff(&self, e: i32) -> QC {
        self.0.get(&e).copied().unwrap_or_else(QC::zero)
    }
    fn negative_part_is_zero(&self) -> bool {
        self.0.keys().all(|&e| e >= 0)
    }
}

/// Expansion of `(base + i e eta)^(-p)` as a Laurent series, with `base`
/// a nonzero rational. Truncated at the window.
fn expand_shifted_pole(base: Q, e: i32, p: u32, budget: i32) -> Laurent {
    let mut m = BTreeMap::new();
    let base_inv_p = {
        let mut acc = q(1);
        for _ in 0..p {
            acc *= base;
        }
        QC::from_ratio(q(1) / acc)
    };
    // (1 + i e eta / base)^(-p) = sum_s binom(-p, s) (i e / base)^s eta^s
    let mut term = QC::one();
    for s in 0..=budget.max(0) {
        if s > 0 {
            // binom(-p, s)/binom(-p, s-1) = -(p + s - 1)/s
            let factor = QC::new(-q((p as i128) + (s as i128) - 1) / q(s as i128), q(0));
            let ie_over_base = QC::new(q(0), q(e as i128) / base);
            term = term.mul(&factor).mul(&ie_over_base);
        }
        let c = base_inv_p.mul(&term);
        if !c.is_zero() {
            m.insert(s, c);
        }
    }
    Laurent(m)
}

/// Linear form over the contraction frequencies plus an integer multiple
/// of the qubit splitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct LinForm {
    w: [i8; MAX_CONTRACTIONS],
    de: i32,
}

impl LinForm {
    fn zero() -> Self {
        LinForm { w: [0; MAX_CONTRACTIONS], de: 0 }
    }
    fn unit(var: usize) -> Self {
        let mut f = LinForm::zero();
        f.w[var] = 1;
        f
    }
    fn add(&self, o: &LinForm) -> LinForm {
        let mut w = self.w;
        for (a, b) in w.iter_mut().zip(o.w.iter()) {
            *a += b;
        }
        LinForm { w, de: self.de + o.de }
    }
    fn neg(&self) -> LinForm {
        let mut w = self.w;
        for a in w.iter_mut() {
            *a = -*a;
        }
        LinForm { w, de: -self.de }
    }
    fn scaled(&self, s: i8) -> LinForm {
        let mut w = self.w;
        for a in w.iter_mut() {
            *a *= s;
        }
        LinForm { w, de: self.de * s as i32 }
    }
    fn is_const(&self) -> bool {
        self.w.iter().all(|&c| c == 0)
    }
}

/// Multiplicative factor `(form + i eta_c eta)^(-power)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct PoleFactor {
    form: LinForm,
    eta_c: i32,
    power: u32,
}

/// Spectral-weight placeholder: the `order`-th derivative of the
/// continued spectral function of `branch`, evaluated at
/// `loc + i loc_eta eta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct FFactor {
    branch: Branch,
    order: u32,
    loc: LinForm,
    loc_eta: i32,
}

#[derive(Clone, Debug)]
struct Term {
    scalar: Laurent,
    pi_pow: u32,
    fs: Vec<FFactor>,
    poles: Vec<PoleFactor>,
}

/// A diagram with a definite raise/lower assignment on every vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DressedDiagram {
    pub vertices: Vec<Vertex>,
    pub pairings: Vec<(usize, usize)>,
    pub n_c: usize,
}

/// Both operator assignments of every contraction of a structural
/// diagram.
pub fn dressings(d: &Diagram) -> Vec<DressedDiagram> {
    let n = d.n_c;
    let mut out = Vec::with_capacity(1 << n);
    for mask in 0..(1u32 << n) {
        let mut vertices = d.vertices.clone();
        for (m, &(early, late)) in d.pairings.iter().enumerate() {
            let (raise_pos, lower_pos) = if mask & (1 << m) == 0 { (early, late) } else { (late, early) };
            vertices[raise_pos - 1].op_sign = OpSign::Raise;
            vertices[lower_pos - 1].op_sign = OpSign::Lower;
        }
        out.push(DressedDiagram { vertices, pairings: d.pairings.clone(), n_c: n });
    }
    out
}

/// Correlation branch of each contraction: determined by the operator at
/// the vertex that comes first in the bath expectation value, which is
/// the early vertex when it sits on the lower contour and the late vertex
/// otherwise.
pub fn branch_multiset(d: &DressedDiagram) -> Vec<Branch> {
    let mut v: Vec<Branch> = d
        .pairings
        .iter()
        .map(|&(early, late)| pair_branch(d, early, late))
        .collect();
    v.sort_by_key(|b| matches!(b, Branch::Minus));
    v
}

fn pair_branch(d: &DressedDiagram, early: usize, late: usize) -> Branch {
    let first = if d.vertices[early - 1].contour == Contour::Lower { early } else { late };
    if d.vertices[first - 1].op_sign == OpSign::Raise {
        Branch::Plus
    } else {
        Branch::Minus
    }
}

/// The superoperator entry a dressed diagram contributes to, if any.
pub fn group_entry(d: &DressedDiagram) -> Option<(usize, usize)> {
    let slot = super::dressing_slot(d);
    for r in 0..4 {
        for c in 0..4 {
            if slot[(r, c)].norm() > 0.5 {
                return Some((r, c));
            }
        }
    }
    None
}

/// Per-vertex frequency coefficients of the chain.
fn vertex_forms(d: &DressedDiagram) -> Vec<LinForm> {
    let nv = 2 * d.n_c;
    let mut eps = vec![LinForm::zero(); nv];
    for v in &d.vertices {
        eps[v.position - 1].de = match v.op_sign {
            OpSign::Raise => 1,
            OpSign::Lower => -1,
        };
    }
    for (m, &(early, late)) in d.pairings.iter().enumerate() {
        let (first, second) = if d.vertices[early - 1].contour == Contour::Lower {
            (early, late)
        } else {
            (late, early)
        };
        let c: i8 = if d.vertices[first - 1].op_sign == OpSign::Raise { 1 } else { -1 };
        eps[first - 1].w[m] -= c;
        eps[second - 1].w[m] += c;
    }
    eps
}

/// Nonnegative compositions of `total` into `parts` ordered slots.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn go(total: usize, parts: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            acc.push(total);
            out.push(acc.clone());
            acc.pop();
            return;
        }
        for first in 0..=total {
            acc.push(first);
            go(total - first, parts - 1, acc, out);
            acc.pop();
        }
    }
    let mut out = Vec::new();
    go(total, parts, &mut Vec::new(), &mut out);
    out
}

/// Value of a dressed diagram's frequency integrals at antiderivative
/// order `k`, keeping only delta parts. Multiply by the slot
/// superoperator and `g_c^{2 n_c}` to obtain the diagram's contribution
/// to `S^(k)_{n_c}`.
///
/// A single elimination order privileges one contraction when several
/// delta constraints pin the same point; averaging over all orders keeps
/// the result symmetric under relabeling of contractions.
pub fn dressed_value(d: &DressedDiagram, k: usize, spec: &BathSpec) -> Result<C64> {
    let mut orders: Vec<Vec<usize>> = Vec::new();
    permutations(d.n_c, &mut orders);
    let mut acc = C64::new(0.0, 0.0);
    for order in &orders {
        acc += dressed_value_with_order(d, k, spec, order)?;
    }
    Ok(acc / orders.len() as f64)
}

fn permutations(n: usize, out: &mut Vec<Vec<usize>>) {
    fn go(remaining: &mut Vec<usize>, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if remaining.is_empty() {
            out.push(acc.clone());
            return;
        }
        for i in 0..remaining.len() {
            let v = remaining.remove(i);
            acc.push(v);
            go(remaining, acc, out);
            acc.pop();
            remaining.insert(i, v);
        }
    }
    let mut rem: Vec<usize> = (0..n).collect();
    go(&mut rem, &mut Vec::new(), out);
}

/// Same as [`dressed_value`] with an explicit frequency elimination
/// order; the result must not depend on it.
pub fn dressed_value_with_order(
    d: &DressedDiagram,
    k: usize,
    spec: &BathSpec,
    elim_order: &[usize],
) -> Result<C64> {
    let nv = 2 * d.n_c;
    let eps = vertex_forms(d);
    let mut y = Vec::with_capacity(nv - 1);
    let mut acc = LinForm::zero();
    for e in eps.iter().take(nv - 1) {
        acc = acc.add(e);
        y.push(acc);
    }
    let b_lower = d.vertices.iter().filter(|v| v.contour == Contour::Lower).count();

    // (-1)^{n_c + b + k} (-i)^{2 n_c - 1 + k}
    let sign = if (d.n_c + b_lower + k) % 2 == 0 { 1 } else { -1 };
    let base = QC::from_int(sign).mul(&QC::i_pow(-((2 * d.n_c - 1 + k) as i64)));

    let branches: Vec<Branch> = d
        .pairings
        .iter()
        .map(|&(early, late)| pair_branch(d, early, late))
        .collect();

    let mut terms = Vec::new();
    for extras in compositions(k, nv - 1) {
        let poles: Vec<PoleFactor> = y
            .iter()
            .enumerate()
            .map(|(idx, form)| PoleFactor {
                form: *form,
                eta_c: -((idx + 1) as i32),
                power: 1 + extras[idx] as u32,
            })
            .collect();
        let fs: Vec<FFactor> = branches
            .iter()
            .enumerate()
            .map(|(m, &branch)| FFactor { branch, order: 0, loc: LinForm::unit(m), loc_eta: 0 })
            .collect();
        terms.push(Term { scalar: Laurent::from_qc(base), pi_pow: 0, fs, poles });
    }

    for &var in elim_order {
        terms = eliminate(terms, var)?;
    }
    finalize(terms, spec, d.n_c as u32)
}

/// One delta-extraction pass over a single frequency.
fn eliminate(terms: Vec<Term>, var: usize) -> Result<Vec<Term>> {
    let mut out = Vec::new();
    for term in terms {
        let (with_var, without): (Vec<PoleFactor>, Vec<PoleFactor>) =
            term.poles.iter().partition(|p| p.form.w[var] != 0);
        if with_var.is_empty() {
            // Pure principal-value content in this variable; dropped by the
            // group-cancellation rule.
            continue;
        }
        // Normalize slopes to +1 and merge coinciding poles.
        let mut scalar = term.scalar.clone();
        let mut normalized: Vec<(LinForm, i32, u32)> = Vec::new();
        for p in &with_var {
            let s = p.form.w[var];
            if s.abs() != 1 {
                return Err(Error::GroupSymmetry(format!(
                    "non-unit frequency slope {s} in chain factor"
                )));
            }
            let (form, eta_c) = if s == 1 { (p.form, p.eta_c) } else { (p.form.neg(), -p.eta_c) };
            if s == -1 && p.power % 2 == 1 {
                scalar = scalar.scale(&QC::from_int(-1));
            }
            // Location z: omega_var = -(rest) - i eta_c eta.
            let mut loc = form.neg();
            loc.w[var] = 0;
            let loc_eta = -eta_c;
            if let Some(e) = normalized.iter_mut().find(|(l, le, _)| *l == loc && *le == loc_eta) {
                e.2 += p.power;
            } else {
                normalized.push((loc, loc_eta, p.power));
            }
        }

        for (i, &(z_loc, z_eta, p_i)) in normalized.iter().enumerate() {
            if z_eta == 0 {
                return Err(Error::GroupSymmetry(
                    "pole pinned to the real axis (pinch)".into(),
                ));
            }
            for qpow in 1..=p_i {
                let r = (p_i - qpow) as usize;
                // Partial-fraction coefficients: sum over compositions of r
                // among the other poles.
                let others: Vec<(usize, LinForm, i32, u32)> = normalized
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(j, &(l, le, p))| (j, l, le, p))
                    .collect();
                let pieces = pf_pieces(&z_loc, z_eta, &others, r)?;
                for (piece_scalar, piece_poles) in pieces {
                    // Build the term to differentiate: everything except the
                    // extracted single pole.
                    let mut work = Term {
                        scalar: scalar.mul(&piece_scalar),
                        pi_pow: term.pi_pow + 1,
                        fs: term.fs.clone(),
                        poles: without.clone(),
                    };
                    work.poles.extend(piece_poles.iter().copied());
                    // sign(z_eta) * i * pi / (q-1)! from the delta part.
                    let sgn = if z_eta > 0 { 1 } else { -1 };
                    let mut fact = q(1);
                    for t in 2..=(qpow as i128 - 1) {
                        fact *= q(t);
                    }
                    let coeff = QC::i().mul(&QC::from_int(sgn as i128)).mul(&QC::from_ratio(q(1) / fact));
                    work.scalar = work.scalar.scale(&coeff);
                    // D^{q-1} with respect to the variable, then substitute.
                    let mut expanded = vec![work];
                    for _ in 1..qpow {
                        let mut next = Vec::new();
                        for t in expanded {
                            next.extend(d_dvar(&t, var));
                        }
                        expanded = next;
                    }
                    for mut t in expanded {
                        substitute(&mut t, var, &z_loc, z_eta)?;
                        out.push(t);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Partial-fraction pieces `prod_{j != i} (z_i - z_j)^-(p_j + r_j)` with
/// binomial weights summed over compositions of `r`. Constant differences
/// expand into Laurent scalars; differences involving later variables
/// stay as pole factors.
#[allow(clippy::type_complexity)]
fn pf_pieces(
    z_loc: &LinForm,
    z_eta: i32,
    others: &[(usize, LinForm, i32, u32)],
    r: usize,
) -> Result<Vec<(Laurent, Vec<PoleFactor>)>> {
    if others.is_empty() {
        if r == 0 {
            return Ok(vec![(Laurent::from_qc(QC::one()), Vec::new())]);
        }
        return Ok(Vec::new());
    }
    let comps = compositions(r, others.len());
    let mut out = Vec::new();
    for comp in comps {
        let mut scalar = Laurent::from_qc(QC::one());
        let mut poles = Vec::new();
        for ((_, l, le, p), &rj) in others.iter().zip(comp.iter()) {
            // binom(p + rj - 1, rj) * (-1)^{rj}
            let mut binom = q(1);
            for t in 0..rj as i128 {
                binom = binom * q(*p as i128 + t) / q(t + 1);
            }
            let sgn = if rj % 2 == 0 { 1 } else { -1 };
            scalar = scalar.scale(&QC::from_ratio(binom * q(sgn)));
            let diff = z_loc.add(&l.neg());
            let diff_eta = z_eta - le;
            let power = p + rj as u32;
            if diff.is_const() {
                if diff.de != 0 {
                    scalar = scalar.mul(&expand_shifted_pole(
                        q(diff.de as i128),
                        diff_eta,
                        power,
                        2 * WINDOW,
                    ));
                } else if diff_eta != 0 {
                    // (i diff_eta eta)^(-power)
                    let ie = QC::new(q(0), q(diff_eta as i128));
                    let mut c = QC::one();
                    for _ in 0..power {
                        c = c.mul(&ie.inv());
                    }
                    scalar = scalar.mul(&Laurent::monomial(c, -(power as i32)));
                } else {
                    return Err(Error::GroupSymmetry(
                        "coinciding pole locations with equal regulators".into(),
                    ));
                }
            } else {
                poles.push(PoleFactor { form: diff, eta_c: diff_eta, power });
            }
        }
        out.push((scalar, poles));
    }
    Ok(out)
}

/// Derivative of a term with respect to one frequency (product rule).
fn d_dvar(term: &Term, var: usize) -> Vec<Term> {
    let mut out = Vec::new();
    for (idx, f) in term.fs.iter().enumerate() {
        let s = f.loc.w[var];
        if s == 0 {
            continue;
        }
        let mut t = term.clone();
        t.fs[idx].order += 1;
        t.scalar = t.scalar.scale(&QC::from_int(s as i128));
        out.push(t);
    }
    for (idx, p) in term.poles.iter().enumerate() {
        let s = p.form.w[var];
        if s == 0 {
            continue;
        }
        let mut t = term.clone();
        t.poles[idx].power += 1;
        t.scalar = t.scalar.scale(&QC::from_int(-(p.power as i128) * s as i128));
        out.push(t);
    }
    out
}

/// Substitutes `omega_var := z_loc + i z_eta eta` everywhere.
fn substitute(term: &mut Term, var: usize, z_loc: &LinForm, z_eta: i32) -> Result<()> {
    for f in term.fs.iter_mut() {
        let s = f.loc.w[var];
        if s != 0 {
            let mut loc = f.loc.add(&z_loc.scaled(s));
            loc.w[var] = 0;
            f.loc = loc;
            f.loc_eta += s as i32 * z_eta;
        }
    }
    for p in term.poles.iter_mut() {
        let s = p.form.w[var];
        if s != 0 {
            let mut form = p.form.add(&z_loc.scaled(s));
            form.w[var] = 0;
            p.form = form;
            p.eta_c += s as i32 * z_eta;
        }
    }
    Ok(())
}

/// Converts leftover constant pole factors and the spectral placeholders
/// into Laurent data, checks the divergent parts cancel, and evaluates.
fn finalize(terms: Vec<Term>, spec: &BathSpec, n_c: u32) -> Result<C64> {
    type Sig = Vec<(u8, u32, i32)>;
    let mut by_sig: BTreeMap<Sig, Laurent> = BTreeMap::new();

    for term in terms {
        if term.pi_pow != n_c {
            return Err(Error::GroupSymmetry(format!(
                "expected pi^{n_c}, found pi^{}",
                term.pi_pow
            )));
        }
        let mut scalar = term.scalar.clone();
        for p in &term.poles {
            if !p.form.is_const() {
                return Err(Error::GroupSymmetry(
                    "unresolved frequency dependence after elimination".into(),
                ));
            }
            if p.form.de != 0 {
                scalar = scalar.mul(&expand_shifted_pole(
                    q(p.form.de as i128),
                    p.eta_c,
                    p.power,
                    2 * WINDOW,
                ));
            } else if p.eta_c != 0 {
                let ie = QC::new(q(0), q(p.eta_c as i128));
                let mut c = QC::one();
                for _ in 0..p.power {
                    c = c.mul(&ie.inv());
                }
                scalar = scalar.mul(&Laurent::monomial(c, -(p.power as i32)));
            } else {
                return Err(Error::GroupSymmetry("constant pole at exact zero".into()));
            }
        }
        // Expand every spectral placeholder around its real location in
        // powers of the regulator, within the budget that can still reach
        // the constant term.
        let budget = match scalar.lead() {
            None => continue,
            Some(l) if l > 0 => continue,
            Some(l) => (-l) as usize,
        };
        expand_fs(&term.fs, 0, scalar, &mut Vec::new(), budget, &mut by_sig);
    }

    let mut total = C64::new(0.0, 0.0);
    let pi_factor = std::f64::consts::PI.powi(n_c as i32);
    for (sig, laurent) in by_sig {
        if !laurent.negative_part_is_zero() {
            return Err(Error::GroupSymmetry(format!(
                "regulator divergence did not cancel: {:?} -> {:?}",
                sig,
                laurent.lead()
            )));
        }
        let c0 = laurent.coeff(0);
        if c0.is_zero() {
            continue;
        }
        let mut weight = 1.0;
        for &(branch_tag, order, de) in &sig {
            let branch = if branch_tag == 0 { Branch::Plus } else { Branch::Minus };
            weight *= spectrum_derivative_full_line(
                spec,
                de as f64 * crate::DELTA_E,
                branch,
                order as usize,
            );
        }
        total += c0.to_c64() * weight * pi_factor;
    }
    Ok(total)
}

type SigMap = BTreeMap<Vec<(u8, u32, i32)>, Laurent>;

fn expand_fs(
    fs: &[FFactor],
    idx: usize,
    scalar: Laurent,
    sig: &mut Vec<(u8, u32, i32)>,
    budget: usize,
    out: &mut SigMap,
) {
    if idx == fs.len() {
        let mut key = sig.clone();
        key.sort_unstable();
        out.entry(key).or_insert_with(Laurent::zero).add_inplace(&scalar);
        return;
    }
    let f = &fs[idx];
    assert!(f.loc.is_const(), "spectral weight with unresolved location");
    let branch_tag = match f.branch {
        Branch::Plus => 0u8,
        Branch::Minus => 1u8,
    };
    if f.loc_eta == 0 {
        sig.push((branch_tag, f.order, f.loc.de));
        expand_fs(fs, idx + 1, scalar, sig, budget, out);
        sig.pop();
        return;
    }
    // F^(o)(x + i c eta) = sum_s (i c)^s / s! eta^s F^(o+s)(x)
    let mut coeff = QC::one();
    for s in 0..=budget {
        if s > 0 {
            let ic = QC::new(q(0), q(f.loc_eta as i128));
            coeff = coeff.mul(&ic).mul(&QC::from_ratio(q(1) / q(s as i128)));
        }
        let scaled = scalar.mul(&Laurent::monomial(coeff, s as i32));
        if scaled.0.is_empty() {
            continue;
        }
        sig.push((branch_tag, f.order + s as u32, f.loc.de));
        expand_fs(fs, idx + 1, scaled, sig, budget.saturating_sub(s), out);
        sig.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagrams::{enumerate_diagrams, one_contraction_closed_form, dressing_slot};
    use crate::linalg::{max_abs, Mat4};

    fn spec() -> BathSpec {
        BathSpec::default()
    }

    fn sum_order(k: usize, n_c: usize, order: Option<Vec<usize>>) -> Mat4 {
        let mut total = Mat4::zeros();
        for d in enumerate_diagrams(n_c).unwrap() {
            for dressed in dressings(&d) {
                let v = match &order {
                    None => dressed_value(&dressed, k, &spec()).unwrap(),
                    Some(ord) => dressed_value_with_order(&dressed, k, &spec(), ord).unwrap(),
                };
                total += dressing_slot(&dressed) * v;
            }
        }
        total
    }

    #[test]
    fn one_contraction_matches_closed_form() {
        for k in 0..=2 {
            let engine = sum_order(k, 1, None);
            let closed = one_contraction_closed_form(k, &spec()).unwrap();
            let diff = max_abs(&(engine - closed));
            assert!(
                diff < 1e-12 * max_abs(&closed).max(1e-12),
                "k={k}: diff {diff:.3e}\nengine {engine}\nclosed {closed}"
            );
        }
    }

    #[test]
    fn one_contraction_k0_matches_golden_rates() {
        // Populations relax with 2 pi F+(1) out of the excited state.
        let m = sum_order(0, 1, None);
        let f_plus = crate::bath::spectrum(&spec(), 1.0, Branch::Plus).unwrap();
        assert!((m[(0, 0)].re + 2.0 * std::f64::consts::PI * f_plus).abs() < 1e-10);
        assert!(m[(0, 0)].im.abs() < 1e-14);
        // Coherences decay at half the total population rate.
        let f_minus = crate::bath::spectrum(&spec(), 1.0, Branch::Minus).unwrap();
        let half = -std::f64::consts::PI * (f_plus + f_minus);
        assert!((m[(1, 1)].re - half).abs() < 1e-10);
        assert!(m[(1, 1)].im.abs() < 1e-12, "no frequency shift is kept");
    }

    /// Relabeling the contractions permutes the internal frequency
    /// variables; the averaged value must not change.
    #[test]
    fn value_is_invariant_under_contraction_relabeling() {
        for (k, n_c) in [(0usize, 2usize), (1, 2), (0, 3)] {
            for d in enumerate_diagrams(n_c).unwrap().iter().take(6) {
                for dressed in dressings(d) {
                    let v = dressed_value(&dressed, k, &spec()).unwrap();
                    let mut relabeled = dressed.clone();
                    relabeled.pairings.rotate_left(1);
                    let w = dressed_value(&relabeled, k, &spec()).unwrap();
                    assert!(
                        (v - w).norm() < 1e-10 * v.norm().max(1e-9),
                        "k={k} n_c={n_c}: {v} vs {w}"
                    );
                }
            }
        }
    }

    #[test]
    fn trace_is_annihilated_at_every_order() {
        for &(k, l) in crate::diagrams::SUPPORTED_ORDERS.iter() {
            let m = sum_order(k, l, None);
            let defect = crate::linalg::trace_defect(&m);
            assert!(
                defect < 1e-11 * max_abs(&m).max(1e-12),
                "(k={k}, l={l}): trace defect {defect:.3e}"
            );
        }
    }

    #[test]
    fn hermiticity_covariance_at_every_order() {
        for &(k, l) in crate::diagrams::SUPPORTED_ORDERS.iter() {
            let m = sum_order(k, l, None);
            let defect = crate::linalg::hermiticity_defect(&m);
            assert!(
                defect < 1e-11 * max_abs(&m).max(1e-12),
                "(k={k}, l={l}): hermiticity defect {defect:.3e}"
            );
        }
    }

    #[test]
    fn compositions_cover_all_routings() {
        assert_eq!(compositions(0, 3).len(), 1);
        assert_eq!(compositions(1, 3).len(), 3);
        assert_eq!(compositions(2, 3).len(), 6);
        for c in compositions(2, 3) {
            assert_eq!(c.iter().sum::<usize>(), 2);
        }
    }

    #[test]
    fn laurent_pole_expansion() {
        // (2 + i eta)^{-1} = 1/2 - i eta / 4 - eta^2/8 ...
        let l = expand_shifted_pole(q(2), 1, 1, 4);
        assert_eq!(l.coeff(0), QC::new(q(1) / q(2), q(0)));
        assert_eq!(l.coeff(1), QC::new(q(0), -q(1) / q(4)));
        assert_eq!(l.coeff(2), QC::new(-q(1) / q(8), q(0)));
    }
}
