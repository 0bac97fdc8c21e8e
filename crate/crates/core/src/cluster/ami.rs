//! Adjusted mutual information between two labelings, with the expected
//! mutual information taken under the hypergeometric permutation model.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Contingency table between two labelings, with its row and column sums.
#[derive(Debug, Clone, PartialEq)]
pub struct Contingency {
    pub n: usize,
    pub table: Vec<Vec<usize>>,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl Contingency {
    pub fn new<A: Ord, B: Ord>(a: &[A], b: &[B]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::shape("labelings", a.len(), b.len()));
        }
        let ia = index_labels(a);
        let ib = index_labels(b);
        let mut table = vec![vec![0usize; ib.len()]; ia.len()];
        for (x, y) in a.iter().zip(b) {
            table[ia[x]][ib[y]] += 1;
        }
        let rows = table.iter().map(|r| r.iter().sum()).collect();
        let cols = (0..ib.len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        Ok(Contingency {
            n: a.len(),
            table,
            rows,
            cols,
        })
    }

    pub fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let mut mi = 0.0;
        for (i, row) in self.table.iter().enumerate() {
            for (j, &nij) in row.iter().enumerate() {
                if nij > 0 {
                    let nij = nij as f64;
                    mi += nij / n * (n * nij / (self.rows[i] as f64 * self.cols[j] as f64)).ln();
                }
            }
        }
        mi.max(0.0)
    }

    /// Expected mutual information over all labelings with the same
    /// marginals.
    pub fn expected_mutual_information(&self) -> f64 {
        let n = self.n;
        let lf = ln_factorials(n);
        let nf = n as f64;
        let mut emi = 0.0;
        for &a in &self.rows {
            for &b in &self.cols {
                let lo = (a + b).saturating_sub(n).max(1);
                let hi = a.min(b);
                let fixed = lf[a] + lf[b] + lf[n - a] + lf[n - b] - lf[n];
                for nij in lo..=hi {
                    let x = nij as f64;
                    let term = x / nf * (nf * x / (a as f64 * b as f64)).ln();
                    let ln_p = fixed - lf[nij] - lf[a - nij] - lf[b - nij] - lf[n + nij - a - b];
                    emi += term * ln_p.exp();
                }
            }
        }
        emi
    }
}

/// Dense index per distinct label, in first-seen order.
fn index_labels<T: Ord>(xs: &[T]) -> BTreeMap<&T, usize> {
    let mut m = BTreeMap::new();
    for x in xs {
        let next = m.len();
        m.entry(x).or_insert(next);
    }
    m
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    for i in 1..=n {
        out.push(out[i - 1] + (i as f64).ln());
    }
    out
}

/// Entropy of a labeling given its cluster sizes, in nats.
pub fn entropy(sizes: &[usize]) -> f64 {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    -sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// `(MI - E[MI]) / (mean(H(A), H(B)) - E[MI])`.
///
/// When the denominator vanishes (both labelings a single cluster, or both
/// all singletons) the result is 1.0 for identical partitions and 0.0
/// otherwise.
pub fn ami<A: Ord, B: Ord>(a: &[A], b: &[B]) -> Result<f64> {
    let c = Contingency::new(a, b)?;
    if c.n == 0 {
        return Err(Error::Input("AMI of empty labelings".into()));
    }
    let identical = c.rows.len() == c.cols.len()
        && c.table.iter().all(|r| r.iter().filter(|&&v| v > 0).count() == 1);
    let h = 0.5 * (entropy(&c.rows) + entropy(&c.cols));
    let mi = c.mutual_information();
    let emi = c.expected_mutual_information();
    let denom = h - emi;
    if denom.abs() < 1e-12 {
        return Ok(if identical { 1.0 } else { 0.0 });
    }
    if identical {
        return Ok(1.0);
    }
    Ok((mi - emi) / denom)
}
