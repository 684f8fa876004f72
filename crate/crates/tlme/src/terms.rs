//! Enumeration of the product terms closing the derivative hierarchy.
//!
//! A term of length `n` is an ordered tuple of antiderivative orders
//! `(f_n, ..., f_1)`, written left to right in product order so the
//! rightmost entry acts on the state first. Valid tuples satisfy two
//! rules: the entries sum to `n - 1`, and counting positions `p = 1, 2,
//! ...` from the right, the sum of the rightmost `p` entries stays below
//! `p`.

use crate::{Error, Result};

/// One product term: antiderivative orders in product order
/// (rightmost entry multiplies the state first).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermSequence(pub Vec<usize>);

impl TermSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::fmt::Display for TermSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Checks both composition rules on a candidate sequence.
pub fn is_valid(seq: &TermSequence) -> bool {
    let n = seq.0.len();
    if n == 0 {
        return false;
    }
    if seq.0.iter().sum::<usize>() != n - 1 {
        return false;
    }
    let mut suffix = 0usize;
    for (p, f) in seq.0.iter().rev().enumerate() {
        suffix += f;
        if suffix >= p + 1 {
            return false;
        }
    }
    true
}

pub const MAX_TERM_LENGTH: usize = 12;

/// All valid sequences of length `n`, lexicographically ordered on the
/// left-to-right tuple. Enumeration is a right-to-left depth-first search
/// that prunes any suffix already violating the position rule.
pub fn enumerate_terms(n: usize) -> Result<Vec<TermSequence>> {
    if n == 0 || n > MAX_TERM_LENGTH {
        return Err(Error::InvalidArg(format!(
            "term length must be in 1..={MAX_TERM_LENGTH}, got {n}"
        )));
    }
    let mut out = Vec::new();
    let mut suffix = Vec::with_capacity(n);
    build(n, n - 1, 0, &mut suffix, &mut out);
    out.sort();
    Ok(out)
}

fn build(n: usize, total: usize, suffix_sum: usize, suffix: &mut Vec<usize>, out: &mut Vec<TermSequence>) {
    let p = suffix.len();
    if p == n {
        if suffix_sum == total {
            // The suffix was built right to left; reverse into product order.
            let seq: Vec<usize> = suffix.iter().rev().copied().collect();
            out.push(TermSequence(seq));
        }
        return;
    }
    // Position p+1 (from the right) allows a running sum of at most p.
    let cap = (p).min(total - suffix_sum + 0);
    let remaining_cap = total.saturating_sub(suffix_sum);
    for f in 0..=cap.min(remaining_cap) {
        if suffix_sum + f > p {
            break;
        }
        suffix.push(f);
        build(n, total, suffix_sum + f, suffix, out);
        suffix.pop();
    }
}

/// Number of valid sequences of length `n`, counted without materializing
/// the sequences.
pub fn count_terms(n: usize) -> Result<u64> {
    if n == 0 || n > MAX_TERM_LENGTH {
        return Err(Error::InvalidArg(format!(
            "term length must be in 1..={MAX_TERM_LENGTH}, got {n}"
        )));
    }
    fn count(n: usize, total: usize, p: usize, suffix_sum: usize) -> u64 {
        if p == n {
            return u64::from(suffix_sum == total);
        }
        let mut acc = 0;
        for f in 0..=(p.min(total - suffix_sum)) {
            if suffix_sum + f > p {
                break;
            }
            acc += count(n, total, p + 1, suffix_sum + f);
        }
        acc
    }
    Ok(count(n, n - 1, 0, 0))
}
