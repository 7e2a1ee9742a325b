//! N-best reranking with a log-linear combination of the upstream model
//! score, the forced-decoding score and a word penalty.

mod bleu;
pub mod io;
mod tune;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use bleu::{corpus_bleu, BleuStats};
pub use tune::{default_grid, tune_weights, TuneResult};

use crate::corpus::UnalignedStats;
use crate::decoder::{forced_decode, DecoderConfig};
use crate::error::{Error, Result};
use crate::phrase_table::PhraseTable;

pub const FORCED_FEATURE: &str = "forced_logscore";
pub const WORD_PENALTY_FEATURE: &str = "word_penalty";

/// One candidate translation.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub sentence_id: usize,
    pub tokens: Vec<String>,
    /// Log probability (or any finite score) reported by the producer.
    pub upstream_log_prob: f64,
    pub features: BTreeMap<String, f64>,
}

impl Candidate {
    pub fn new(sentence_id: usize, tokens: Vec<String>, upstream_log_prob: f64) -> Result<Self> {
        if !upstream_log_prob.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sentence {sentence_id}: upstream score {upstream_log_prob} is not finite"
            )));
        }
        let mut features = BTreeMap::new();
        features.insert(WORD_PENALTY_FEATURE.to_string(), tokens.len() as f64);
        Ok(Candidate {
            sentence_id,
            tokens,
            upstream_log_prob,
            features,
        })
    }

    pub fn forced_log_score(&self) -> Option<f64> {
        self.features.get(FORCED_FEATURE).copied()
    }

    pub fn set_forced_log_score(&mut self, score: f64) {
        self.features.insert(FORCED_FEATURE.to_string(), score);
    }

    pub fn word_penalty(&self) -> f64 {
        self.tokens.len() as f64
    }
}

/// Candidates for one source sentence, in producer order.
#[derive(Clone, Debug, PartialEq)]
pub struct NBestList {
    pub sentence_id: usize,
    pub source: Vec<String>,
    pub candidates: Vec<Candidate>,
}

impl NBestList {
    pub fn is_scored(&self) -> bool {
        self.candidates.iter().all(|c| c.forced_log_score().is_some())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RerankWeights {
    pub upstream: f64,
    pub forced: f64,
    pub word_penalty: f64,
}

impl RerankWeights {
    pub fn new(upstream: f64, forced: f64, word_penalty: f64) -> Result<Self> {
        let w = RerankWeights {
            upstream,
            forced,
            word_penalty,
        };
        let all = [upstream, forced, word_penalty];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidWeights(format!("non-finite weight in {all:?}")));
        }
        if all.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidWeights("all weights are zero".into()));
        }
        Ok(w)
    }

    /// Upstream score only.
    pub fn upstream_only() -> Self {
        RerankWeights {
            upstream: 1.0,
            forced: 0.0,
            word_penalty: 0.0,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        RerankWeights {
            upstream: self.upstream * c,
            forced: self.forced * c,
            word_penalty: self.word_penalty * c,
        }
    }
}

/// `w1 * upstream + w2 * forced + wWP * |tokens|`.
pub fn combined_score(c: &Candidate, w: &RerankWeights) -> Result<f64> {
    let forced = c.forced_log_score().ok_or(Error::NotScored(FORCED_FEATURE))?;
    Ok(w.upstream * c.upstream_log_prob + w.forced * forced + w.word_penalty * c.word_penalty())
}

/// What to do with a candidate whose forced decoding fails.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OnScoreError {
    #[default]
    Abort,
    /// Drop the candidate and log a warning.
    Skip,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ScoringConfig {
    pub decoder: DecoderConfig,
    pub on_error: OnScoreError,
}

/// Forced-decoding log score of `target` given `source`.
pub fn forced_log_score(
    source: &[String],
    target: &[String],
    table: &PhraseTable,
    stats: &UnalignedStats,
    decoder: &DecoderConfig,
) -> Result<f64> {
    forced_decode(source, target, table, stats, decoder).map(|p| p.total_log_score)
}

/// Attaches the forced-decoding and word-penalty features to every
/// candidate that lacks them. Candidates are decoded in parallel; the list
/// order is preserved. Returns the number of skipped candidates.
pub fn score_nbest(
    list: &mut NBestList,
    table: &PhraseTable,
    stats: &UnalignedStats,
    config: &ScoringConfig,
) -> Result<usize> {
    let source = &list.source;
    let results: Vec<Option<Result<f64>>> = list
        .candidates
        .par_iter()
        .map(|c| {
            c.forced_log_score()
                .is_none()
                .then(|| forced_log_score(source, &c.tokens, table, stats, &config.decoder))
        })
        .collect();

    let mut kept = Vec::with_capacity(list.candidates.len());
    let mut skipped = 0;
    for (mut cand, result) in list.candidates.drain(..).zip(results) {
        match result {
            None => {}
            Some(Ok(score)) => cand.set_forced_log_score(score),
            Some(Err(e)) => match config.on_error {
                OnScoreError::Abort => {
                    return Err(Error::InvalidInput(format!(
                        "sentence {}: scoring failed: {e}",
                        cand.sentence_id
                    )))
                }
                OnScoreError::Skip => {
                    log::warn!("sentence {}: skipping candidate: {e}", cand.sentence_id);
                    skipped += 1;
                    continue;
                }
            },
        }
        cand.features
            .insert(WORD_PENALTY_FEATURE.to_string(), cand.word_penalty());
        kept.push(cand);
    }
    list.candidates = kept;
    Ok(skipped)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ranked {
    pub candidate: Candidate,
    /// 0-based position in the input list.
    pub original_rank: usize,
    pub combined: f64,
}

/// Orders an already scored list by combined score, best first; equal
/// scores keep their input order.
pub fn rank_scored(list: &NBestList, w: &RerankWeights) -> Result<Vec<Ranked>> {
    let mut ranked = list
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            Ok(Ranked {
                candidate: c.clone(),
                original_rank: i,
                combined: combined_score(c, w)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        b.combined
            .total_cmp(&a.combined)
            .then(a.original_rank.cmp(&b.original_rank))
    });
    Ok(ranked)
}

/// Scores (where needed) and reranks one n-best list.
pub fn rerank_nbest(
    mut list: NBestList,
    table: &PhraseTable,
    stats: &UnalignedStats,
    w: &RerankWeights,
    config: &ScoringConfig,
) -> Result<Vec<Ranked>> {
    score_nbest(&mut list, table, stats, config)?;
    rank_scored(&list, w)
}
