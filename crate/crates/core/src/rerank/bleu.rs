use std::collections::HashMap;
use std::ops::AddAssign;

use crate::error::{Error, Result};

/// Sufficient statistics for corpus BLEU: clipped n-gram matches and
/// n-gram totals per order, plus hypothesis and reference lengths.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn zero(max_n: usize) -> Self {
        BleuStats {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    pub fn sentence<S: AsRef<str>>(hyp: &[S], reference: &[S], max_n: usize) -> Self {
        let hyp: Vec<&str> = hyp.iter().map(AsRef::as_ref).collect();
        let reference: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
        let mut stats = BleuStats::zero(max_n);
        stats.hyp_len = hyp.len() as u64;
        stats.ref_len = reference.len() as u64;
        for n in 1..=max_n {
            let ref_counts = ngram_counts(&reference, n);
            for (gram, count) in ngram_counts(&hyp, n) {
                let clip = ref_counts.get(gram).copied().unwrap_or(0);
                stats.matches[n - 1] += count.min(clip);
                stats.totals[n - 1] += count;
            }
        }
        stats
    }

    /// Geometric mean of the n-gram precisions times the brevity penalty;
    /// 0 when any precision is 0.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.totals.is_empty() {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for (&m, &t) in self.matches.iter().zip(&self.totals) {
            if m == 0 || t == 0 {
                return 0.0;
            }
            log_sum += (m as f64 / t as f64).ln();
        }
        let log_bp = (1.0 - self.ref_len as f64 / self.hyp_len as f64).min(0.0);
        (log_sum / self.totals.len() as f64 + log_bp).exp()
    }
}

impl AddAssign<&BleuStats> for BleuStats {
    fn add_assign(&mut self, rhs: &BleuStats) {
        for (a, b) in self.matches.iter_mut().zip(&rhs.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&rhs.totals) {
            *a += b;
        }
        self.hyp_len += rhs.hyp_len;
        self.ref_len += rhs.ref_len;
    }
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Case-sensitive corpus BLEU over pre-tokenized sentences with a single
/// reference each. No smoothing.
pub fn corpus_bleu<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>], max_n: usize) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::InvalidInput(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if max_n == 0 {
        return Err(Error::InvalidInput("BLEU order must be at least 1".into()));
    }
    let mut total = BleuStats::zero(max_n);
    for (h, r) in hypotheses.iter().zip(references) {
        total += &BleuStats::sentence(h, r, max_n);
    }
    Ok(total.score())
}
