//! Normalised probabilists' Hermite polynomials and multi-indices.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// `H_q(x)`, orthonormal under the standard Gaussian, via the three-term recurrence.
pub fn hermite_1d(q: u32, x: f64) -> f64 {
    let mut prev = 1.0;
    if q == 0 {
        return prev;
    }
    let mut cur = x;
    for j in 1..q {
        let jf = j as f64;
        let next = (x * cur - jf.sqrt() * prev) / (jf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// Writes `H_0(x), …, H_{out.len()-1}(x)` into `out`.
pub fn hermite_table(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for j in 1..out.len().saturating_sub(1) {
        let jf = j as f64;
        out[j + 1] = (x * out[j] - jf.sqrt() * out[j - 1]) / (jf + 1.0).sqrt();
    }
}

/// Multi-index `S` with trailing zeros trimmed.
///
/// Ordered by total degree first, then lexicographically on the padded entries, so
/// iteration over a sorted map visits low degrees first.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "Vec<u32>", into = "Vec<u32>")]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(mut entries: Vec<u32>) -> Self {
        while entries.last() == Some(&0) {
            entries.pop();
        }
        MultiIndex(entries)
    }

    pub fn zero() -> Self {
        MultiIndex(Vec::new())
    }

    /// Unit index `e_i`.
    pub fn unit(i: usize) -> Self {
        let mut v = vec![0; i + 1];
        v[i] = 1;
        MultiIndex(v)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0.get(i).copied().unwrap_or(0)
    }

    /// `|S|`.
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Number of coordinates the index touches (after trimming).
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// Entries padded with zeros to length `n`.
    pub fn padded(&self, n: usize) -> Vec<u32> {
        let mut v = self.0.clone();
        v.resize(n.max(v.len()), 0);
        v
    }

    /// `H_S(x) = ∏ H_{S_i}(x_i)`. Coordinates of `x` beyond `len()` are ignored.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&q, &xi)| if q == 0 { 1.0 } else { hermite_1d(q, xi) })
            .product()
    }

    /// Evaluates from per-coordinate tables, `tables[i][q] = H_q(x_i)`.
    pub fn eval_tables(&self, tables: &[Vec<f64>]) -> f64 {
        self.0.iter().enumerate().map(|(i, &q)| tables[i][q as usize]).product()
    }

    /// All indices over `n` coordinates with `|S| ≤ d`, in canonical order.
    pub fn all_up_to(n: usize, d: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; n];
        fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if pos == cur.len() {
                out.push(MultiIndex::new(cur.clone()));
                return;
            }
            for q in 0..=left {
                cur[pos] = q;
                rec(pos + 1, left - q, cur, out);
            }
            cur[pos] = 0;
        }
        rec(0, d, &mut cur, &mut out);
        out.sort();
        out
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex::new(v)
    }
}

impl From<MultiIndex> for Vec<u32> {
    fn from(m: MultiIndex) -> Self {
        m.0
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            let n = self.0.len().max(other.0.len());
            for i in 0..n {
                match other.get(i).cmp(&self.get(i)) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            Ordering::Equal
        })
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{:?}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_values() {
        assert_eq!(hermite_1d(0, 3.7), 1.0);
        assert_eq!(hermite_1d(1, 2.0), 2.0);
        assert!(hermite_1d(2, 1.0).abs() < 1e-15);
        let x: f64 = 0.7;
        let h3 = (x.powi(3) - 3.0 * x) / 6f64.sqrt();
        assert!((hermite_1d(3, x) - h3).abs() < 1e-15);
    }

    #[test]
    fn table_matches_scalar() {
        let mut t = vec![0.0; 10];
        hermite_table(-1.3, &mut t);
        for (q, v) in t.iter().enumerate() {
            assert!((v - hermite_1d(q as u32, -1.3)).abs() < 1e-13);
        }
    }

    #[test]
    fn multi_index_trims_and_orders() {
        assert_eq!(MultiIndex::new(vec![1, 0, 0]), MultiIndex::new(vec![1]));
        assert_eq!(MultiIndex::new(vec![0, 0]), MultiIndex::zero());
        let all = MultiIndex::all_up_to(2, 2);
        assert_eq!(all.len(), 6);
        assert!(all[0].is_zero());
        assert_eq!(all[1], MultiIndex::new(vec![1]));
        assert_eq!(all[2], MultiIndex::new(vec![0, 1]));
        assert!(all.windows(2).all(|w| w[0].degree() <= w[1].degree()));
    }

    #[test]
    fn multi_eval() {
        assert_eq!(MultiIndex::new(vec![0, 0]).eval(&[5.0, 2.0]), 1.0);
        assert_eq!(MultiIndex::new(vec![1, 1]).eval(&[2.0, 3.0]), 6.0);
        assert!(MultiIndex::new(vec![2, 1]).eval(&[1.0, 1.0]).abs() < 1e-15);
    }
}
