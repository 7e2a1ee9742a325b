use super::bleu::BleuStats;
use super::{rank_scored, NBestList, RerankWeights};
use crate::error::{Error, Result};

const BLEU_ORDER: usize = 4;

/// `(w2, wWP)` grid: w2 in 0.0..=2.0 and wWP in -1.0..=1.0, both step 0.1.
pub fn default_grid() -> Vec<(f64, f64)> {
    let mut grid = Vec::with_capacity(21 * 21);
    for a in 0..=20 {
        for b in -10..=10 {
            grid.push((f64::from(a) / 10.0, f64::from(b) / 10.0));
        }
    }
    grid
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuneResult {
    pub weights: RerankWeights,
    /// Dev-set BLEU of the 1-best outputs under `weights`.
    pub bleu: f64,
}

/// Exhaustive grid search over `(w2, wWP)` with `w1 = 1`, maximizing corpus
/// BLEU of the reranked 1-best outputs.
///
/// `references[k]` is the reference for `dev[k]`. Ties in BLEU go to the
/// point with the smaller Euclidean norm, then to the earlier grid point.
pub fn tune_weights(dev: &[NBestList], references: &[Vec<String>], grid: &[(f64, f64)]) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if dev.len() != references.len() {
        return Err(Error::InvalidInput(format!(
            "{} dev lists but {} references",
            dev.len(),
            references.len()
        )));
    }
    if let Some(list) = dev.iter().find(|l| !l.is_scored()) {
        return Err(Error::InvalidInput(format!(
            "dev list {} is not scored",
            list.sentence_id
        )));
    }
    // per-candidate sufficient statistics, computed once
    let stats: Vec<Vec<BleuStats>> = dev
        .iter()
        .zip(references)
        .map(|(list, r)| {
            list.candidates
                .iter()
                .map(|c| BleuStats::sentence(&c.tokens, r, BLEU_ORDER))
                .collect()
        })
        .collect();

    let mut best: Option<(TuneResult, f64)> = None;
    for &(w2, wwp) in grid {
        let weights = RerankWeights {
            upstream: 1.0,
            forced: w2,
            word_penalty: wwp,
        };
        let mut total = BleuStats::zero(BLEU_ORDER);
        for (list, cand_stats) in dev.iter().zip(&stats) {
            if let Some(top) = rank_scored(list, &weights)?.first() {
                total += &cand_stats[top.original_rank];
            }
        }
        let bleu = total.score();
        let norm = w2.hypot(wwp);
        let better = match &best {
            None => true,
            Some((b, b_norm)) => bleu > b.bleu || (bleu == b.bleu && norm < *b_norm),
        };
        if better {
            best = Some((TuneResult { weights, bleu }, norm));
        }
    }
    Ok(best.expect("grid is non-empty").0)
}
