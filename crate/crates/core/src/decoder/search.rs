use std::cmp::Ordering;
use rustc_hash::FxHashMap;
use std::rc::Rc;

use super::{
    compare_rule_paths, deletion_log_score, insertion_log_score, preference, rule_keys, AppliedRule, Coverage,
    DecodeInput, DecoderConfig, DecodingPath, Expander, Hypothesis, Mode, RuleKind,
};
use crate::corpus::UnalignedStats;
use crate::error::{Error, Result};
use crate::phrase_table::PhraseTable;
use crate::span::Span;

/// Recombination key. The last source position only matters when a
/// distortion limit is active.
type StateKey = (Coverage, usize);

/// One decoding stack: at most one hypothesis per recombination state.
struct Stack<'a> {
    states: FxHashMap<StateKey, Rc<Hypothesis<'a>>>,
    track_position: bool,
    penalty: f64,
}

impl<'a> Stack<'a> {
    fn new(track_position: bool, penalty: f64) -> Self {
        Stack {
            states: FxHashMap::default(),
            track_position,
            penalty,
        }
    }

    fn push(&mut self, h: Hypothesis<'a>) {
        let key = (
            h.coverage.clone(),
            if self.track_position { h.last_source_end } else { 0 },
        );
        match self.states.get_mut(&key) {
            Some(existing) => {
                if compare(&h, existing, self.penalty) == Ordering::Less {
                    *existing = Rc::new(h);
                }
            }
            None => {
                self.states.insert(key, Rc::new(h));
            }
        }
    }

    /// Surviving hypotheses, best first, truncated to `beam`.
    fn prune(self, beam: usize) -> Vec<Rc<Hypothesis<'a>>> {
        let penalty = self.penalty;
        let mut hyps: Vec<_> = self.states.into_values().collect();
        if hyps.len() > beam {
            hyps.select_nth_unstable_by(beam - 1, |a, b| compare(a, b, penalty));
            hyps.truncate(beam);
        }
        hyps.sort_by(|a, b| compare(a, b, penalty));
        hyps
    }
}

fn compare(a: &Hypothesis<'_>, b: &Hypothesis<'_>, penalty: f64) -> Ordering {
    preference(
        a.log_score + penalty * a.target_index as f64,
        a.soft_ops,
        b.log_score + penalty * b.target_index as f64,
        b.soft_ops,
        || compare_rule_paths(a, b),
    )
}

/// Scores `target` as a translation of `source` by the best soft forced
/// decoding path.
///
/// Stack `i` holds hypotheses that have generated the first `i` target
/// words. Each hypothesis in stacks `0..I` is expanded by every phrase rule
/// continuing the target and by inserting the next target word. Every
/// hypothesis in the last stack is then completed by deleting its uncovered
/// source words, and the best completion is returned. An empty target is
/// allowed and yields a path of deletions only.
pub fn forced_decode<'a>(
    source: &'a [String],
    target: &'a [String],
    table: &'a PhraseTable,
    stats: &UnalignedStats,
    config: &DecoderConfig,
) -> Result<DecodingPath<'a>> {
    if source.is_empty() {
        return Err(Error::InvalidInput("forced decoding needs a non-empty source".into()));
    }
    if config.beam_width == 0 {
        return Err(Error::InvalidInput("beam width must be at least 1".into()));
    }
    let input = DecodeInput { source, target };
    let expander = Expander::new(Mode::Forced, table, input, config.distortion_limit);
    let track = config.distortion_limit.is_some();
    let insert_scores: Vec<f64> = target.iter().map(|e| insertion_log_score(e, stats)).collect();
    let delete_scores: Vec<f64> = source.iter().map(|f| deletion_log_score(f, stats)).collect();

    let mut stacks: Vec<Stack<'a>> = (0..=target.len()).map(|_| Stack::new(track, 0.0)).collect();
    stacks[0].push(unwrap_root(Hypothesis::root(source.len())));

    for i in 0..target.len() {
        let current = std::mem::replace(&mut stacks[i], Stack::new(track, 0.0));
        for h in current.prune(config.beam_width) {
            for child in expander.expand(&h) {
                stacks[child.target_index].push(child);
            }
            let inserted = Hypothesis::child(
                &h,
                AppliedRule {
                    kind: RuleKind::InsertTarget,
                    source: &[],
                    target: &target[i..i + 1],
                    source_span: None,
                    target_span: Some(Span::single(i)),
                    log_score: insert_scores[i],
                },
            );
            stacks[i + 1].push(inserted);
        }
    }

    // The last stack is completed in full, without pruning.
    let last = stacks.pop().expect("at least one stack");
    let mut best: Option<Completed<'a>> = None;
    for h in last.prune(usize::MAX) {
        let mut score = h.log_score;
        let mut deleted = Vec::new();
        for p in h.coverage.uncovered() {
            score += delete_scores[p];
            deleted.push(p);
        }
        let done = Completed {
            soft_ops: h.soft_ops + deleted.len() as u32,
            hyp: h,
            deleted,
            score,
        };
        best = match best {
            Some(b) if done.compare(&b) != Ordering::Less => Some(b),
            _ => Some(done),
        };
    }
    let best = best.expect("final stack is never empty: insertion always applies");

    let mut rules = best.hyp.rules();
    for &p in &best.deleted {
        rules.push(AppliedRule {
            kind: RuleKind::FinalDelete,
            source: &source[p..p + 1],
            target: &[],
            source_span: Some(Span::single(p)),
            target_span: None,
            log_score: delete_scores[p],
        });
    }
    Ok(DecodingPath {
        rules,
        total_log_score: best.score,
    })
}

fn unwrap_root(root: Rc<Hypothesis<'_>>) -> Hypothesis<'_> {
    Rc::try_unwrap(root).expect("fresh root is uniquely owned")
}

struct Completed<'a> {
    hyp: Rc<Hypothesis<'a>>,
    deleted: Vec<usize>,
    score: f64,
    soft_ops: u32,
}

impl Completed<'_> {
    fn keys(&self) -> Vec<(RuleKind, usize, usize, usize, usize)> {
        let mut keys = rule_keys(&self.hyp);
        keys.extend(
            self.deleted
                .iter()
                .map(|&p| (RuleKind::FinalDelete, p, p + 1, usize::MAX, usize::MAX)),
        );
        keys
    }

    fn compare(&self, other: &Self) -> Ordering {
        preference(self.score, self.soft_ops, other.score, other.soft_ops, || {
            self.keys().cmp(&other.keys())
        })
    }
}

/// Output of [`decode_standard`].
#[derive(Clone, Debug)]
pub struct StandardDecoding<'a> {
    pub target: Vec<String>,
    pub path: DecodingPath<'a>,
    /// Sum of rule log scores plus `word_penalty * target.len()`.
    pub score: f64,
}

/// Translates `source` with stacks indexed by covered-word count.
///
/// Hypotheses are ranked by their summed rule log scores plus
/// `word_penalty` per generated target word. Source words without any
/// single-word rule are copied to the output with score 0, so a complete
/// translation always exists.
pub fn decode_standard<'a>(
    source: &'a [String],
    table: &'a PhraseTable,
    config: &DecoderConfig,
    word_penalty: f64,
) -> Result<StandardDecoding<'a>> {
    if source.is_empty() {
        return Err(Error::InvalidInput("cannot decode an empty source".into()));
    }
    if config.beam_width == 0 {
        return Err(Error::InvalidInput("beam width must be at least 1".into()));
    }
    let input = DecodeInput { source, target: &[] };
    let expander = Expander::new(Mode::Standard, table, input, config.distortion_limit);
    let track = config.distortion_limit.is_some();
    let len = source.len();

    let mut stacks: Vec<Stack<'a>> = (0..=len).map(|_| Stack::new(track, word_penalty)).collect();
    stacks[0].push(unwrap_root(Hypothesis::root(len)));
    for j in 0..len {
        let current = std::mem::replace(&mut stacks[j], Stack::new(track, word_penalty));
        for h in current.prune(config.beam_width) {
            for child in expander.expand(&h) {
                let covered = child.coverage.count();
                stacks[covered].push(child);
            }
        }
    }
    let last = stacks.pop().expect("at least one stack");
    let best = last
        .prune(1)
        .pop()
        .ok_or_else(|| Error::Invariant("no complete hypothesis".into()))?;

    let rules = best.rules();
    let target: Vec<String> = rules.iter().flat_map(|r| r.target.iter().cloned()).collect();
    let score = best.log_score + word_penalty * target.len() as f64;
    Ok(StandardDecoding {
        target,
        path: DecodingPath {
            rules,
            total_log_score: best.log_score,
        },
        score,
    })
}
