//! Phrase-based stack decoding.
//!
//! Two searches share one hypothesis representation:
//!
//! * [`decode_standard`] translates a source sentence with stacks indexed by
//!   the number of covered source words.
//! * [`forced_decode`] scores a *given* target sentence with stacks indexed
//!   by the number of target words generated so far. Besides the phrase
//!   rules it may insert the next target word (`null -> e`) and, once the
//!   whole target is generated, delete every still-uncovered source word
//!   (`f -> null`). Those soft rules make the search total: every
//!   (source, target) pair gets a finite best-path score.
//!
//! All scores are natural-log domain. No reordering or language-model
//! features take part; any uncovered span may be translated next.

mod coverage;
mod search;

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::rc::Rc;

pub use coverage::Coverage;
pub use search::{decode_standard, forced_decode, StandardDecoding};

use crate::corpus::UnalignedStats;
use crate::phrase_table::PhraseTable;
use crate::span::Span;

pub const DEFAULT_BEAM_WIDTH: usize = 100;

/// Beam width that never prunes.
pub const UNLIMITED_BEAM: usize = usize::MAX;

/// Word written in traces for the empty side of an insertion or deletion.
pub const NULL_WORD: &str = "null";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecoderConfig {
    /// Hypotheses kept per stack after recombination.
    pub beam_width: usize,
    /// Maximum jump between the end of the previous source span and the
    /// start of the next one. `None` allows any reordering.
    pub distortion_limit: Option<usize>,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            beam_width: DEFAULT_BEAM_WIDTH,
            distortion_limit: None,
        }
    }
}

impl DecoderConfig {
    pub fn with_beam(beam_width: usize) -> Self {
        DecoderConfig {
            beam_width: beam_width.max(1),
            ..Default::default()
        }
    }
}

/// Log score of inserting target word `e`: twice the log of its smoothed
/// unaligned frequency, so that it lives on the same scale as a phrase rule
/// (a product of two probabilities).
pub fn insertion_log_score(e: &str, stats: &UnalignedStats) -> f64 {
    2.0 * stats.insertion_score(e).ln()
}

/// Log score of deleting source word `f`; mirror of [`insertion_log_score`].
pub fn deletion_log_score(f: &str, stats: &UnalignedStats) -> f64 {
    2.0 * stats.deletion_score(f).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleKind {
    /// A rule from the phrase table.
    Phrase,
    /// `null -> e`: the next target word generated without a source.
    InsertTarget,
    /// `f -> null`: a source word left uncovered at the end of forced
    /// decoding.
    FinalDelete,
    /// Standard decoding only: an unknown source word copied verbatim.
    PassThrough,
}

impl RuleKind {
    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Phrase => "phrase",
            RuleKind::InsertTarget => "insert",
            RuleKind::FinalDelete => "delete",
            RuleKind::PassThrough => "passthrough",
        }
    }

    pub fn is_soft(self) -> bool {
        matches!(self, RuleKind::InsertTarget | RuleKind::FinalDelete)
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One step of a decoding path. Token slices borrow from the rule table or
/// the input sentences.
#[derive(Clone, Debug, PartialEq)]
pub struct AppliedRule<'a> {
    pub kind: RuleKind,
    pub source: &'a [String],
    pub target: &'a [String],
    pub source_span: Option<Span>,
    pub target_span: Option<Span>,
    pub log_score: f64,
}

impl AppliedRule<'_> {
    fn sort_key(&self) -> (RuleKind, usize, usize, usize, usize) {
        let s = self.source_span.map_or((usize::MAX, usize::MAX), |s| (s.start, s.end));
        let t = self.target_span.map_or((usize::MAX, usize::MAX), |t| (t.start, t.end));
        (self.kind, s.0, s.1, t.0, t.1)
    }
}

/// A partial decoding state.
///
/// `target_index` counts target words generated so far (in forced mode,
/// the prefix of the given target that has been matched).
#[derive(Debug)]
pub struct Hypothesis<'a> {
    pub coverage: Coverage,
    pub target_index: usize,
    pub log_score: f64,
    soft_ops: u32,
    last_source_end: usize,
    depth: usize,
    back: Option<(Rc<Hypothesis<'a>>, AppliedRule<'a>)>,
}

impl<'a> Hypothesis<'a> {
    pub fn root(source_len: usize) -> Rc<Self> {
        Rc::new(Hypothesis {
            coverage: Coverage::new(source_len),
            target_index: 0,
            log_score: 0.0,
            soft_ops: 0,
            last_source_end: 0,
            depth: 0,
            back: None,
        })
    }

    fn child(parent: &Rc<Self>, rule: AppliedRule<'a>) -> Self {
        let coverage = match (rule.kind, rule.source_span) {
            (RuleKind::Phrase | RuleKind::PassThrough, Some(span)) => parent.coverage.with_span(span),
            _ => parent.coverage.clone(),
        };
        let last_source_end = match rule.kind {
            RuleKind::Phrase | RuleKind::PassThrough => rule.source_span.map_or(0, |s| s.end),
            _ => parent.last_source_end,
        };
        Hypothesis {
            coverage,
            target_index: parent.target_index + rule.target.len(),
            log_score: parent.log_score + rule.log_score,
            soft_ops: parent.soft_ops + u32::from(rule.kind.is_soft()),
            last_source_end,
            depth: parent.depth + 1,
            back: Some((Rc::clone(parent), rule)),
        }
    }

    pub fn parent(&self) -> Option<&Rc<Hypothesis<'a>>> {
        self.back.as_ref().map(|(p, _)| p)
    }

    /// The rule that produced this hypothesis from its parent.
    pub fn applied_rule(&self) -> Option<&AppliedRule<'a>> {
        self.back.as_ref().map(|(_, r)| r)
    }

    /// Number of insertion/deletion rules on the path to this hypothesis.
    pub fn soft_ops(&self) -> u32 {
        self.soft_ops
    }

    /// Applied rules from the root, in application order.
    pub fn rules(&self) -> Vec<AppliedRule<'a>> {
        let mut out = Vec::new();
        let mut cur = self;
        while let Some((parent, rule)) = &cur.back {
            out.push(rule.clone());
            cur = parent;
        }
        out.reverse();
        out
    }
}

/// Whether an expansion generates free target text or must reproduce a
/// fixed target sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Standard,
    Forced,
}

/// The sentence pair being decoded. `target` is ignored in standard mode.
#[derive(Clone, Copy, Debug)]
pub struct DecodeInput<'a> {
    pub source: &'a [String],
    pub target: &'a [String],
}

/// Precomputed expansion options for one input.
pub(crate) struct Expander<'a> {
    mode: Mode,
    table: &'a PhraseTable,
    input: DecodeInput<'a>,
    distortion_limit: Option<usize>,
    /// Forced mode: for each target index, the (rule, source span) pairs
    /// whose target phrase starts there and whose source phrase occurs at
    /// that span. Standard mode: one list of all (rule, source span)
    /// matches, plus pass-through spans.
    options: Vec<Vec<(usize, Span)>>,
    pass_through: Vec<Span>,
}

impl<'a> Expander<'a> {
    pub(crate) fn new(
        mode: Mode,
        table: &'a PhraseTable,
        input: DecodeInput<'a>,
        distortion_limit: Option<usize>,
    ) -> Self {
        let source = input.source;
        let mut source_spans: Vec<(Span, &'a [usize])> = Vec::new();
        for start in 0..source.len() {
            for end in start + 1..=source.len().min(start + table.max_source_len()) {
                let rules = table.source_matches(&source[start..end]);
                if !rules.is_empty() {
                    source_spans.push((Span::new(start, end), rules));
                }
            }
        }
        let mut options = Vec::new();
        let mut pass_through = Vec::new();
        match mode {
            Mode::Standard => {
                options.push(
                    source_spans
                        .iter()
                        .flat_map(|&(span, rules)| rules.iter().map(move |&r| (r, span)))
                        .collect(),
                );
                pass_through = (0..source.len())
                    .filter(|&p| table.source_matches(&source[p..p + 1]).is_empty())
                    .map(Span::single)
                    .collect();
            }
            Mode::Forced => {
                for i in 0..input.target.len() {
                    let mut at: Vec<(usize, Span)> = Vec::new();
                    for r in table.target_match_indices(input.target, i) {
                        let rule = table.rule(r);
                        for &(span, rules) in &source_spans {
                            if span.len() == rule.source.len() && rules.contains(&r) {
                                at.push((r, span));
                            }
                        }
                    }
                    at.sort_unstable_by_key(|&(r, s)| (s, table.rule(r).target.len(), r));
                    options.push(at);
                }
            }
        }
        Expander {
            mode,
            table,
            input,
            distortion_limit,
            options,
            pass_through,
        }
    }

    fn within_distortion(&self, h: &Hypothesis<'_>, span: Span) -> bool {
        let Some(limit) = self.distortion_limit else {
            return true;
        };
        if h.last_source_end.abs_diff(span.start) > limit {
            return false;
        }
        // Standard mode has no deletions: the first gap left behind must
        // stay within reach or the hypothesis can never complete.
        if self.mode == Mode::Standard {
            if let Some(gap) = h.coverage.uncovered().find(|&p| !span.contains(p)) {
                if gap < span.start && span.end.abs_diff(gap) > limit {
                    return false;
                }
            }
        }
        true
    }

    /// Children reachable by one phrase rule (or pass-through, in standard
    /// mode). Never applies insertion or deletion.
    pub(crate) fn expand(&self, h: &Rc<Hypothesis<'a>>) -> Vec<Hypothesis<'a>> {
        let mut out = Vec::new();
        let opts: &[(usize, Span)] = match self.mode {
            Mode::Standard => &self.options[0],
            Mode::Forced => match self.options.get(h.target_index) {
                Some(o) => o,
                None => return out,
            },
        };
        for &(r, span) in opts {
            if !h.coverage.is_span_free(span) || !self.within_distortion(h, span) {
                continue;
            }
            let rule = self.table.rule(r);
            let t = h.target_index;
            out.push(Hypothesis::child(
                h,
                AppliedRule {
                    kind: RuleKind::Phrase,
                    source: &rule.source,
                    target: &rule.target,
                    source_span: Some(span),
                    target_span: Some(Span::new(t, t + rule.target.len())),
                    log_score: rule.log_score,
                },
            ));
        }
        for &span in &self.pass_through {
            if !h.coverage.is_span_free(span) || !self.within_distortion(h, span) {
                continue;
            }
            let word = &self.input.source[span.start..span.end];
            let t = h.target_index;
            out.push(Hypothesis::child(
                h,
                AppliedRule {
                    kind: RuleKind::PassThrough,
                    source: word,
                    target: word,
                    source_span: Some(span),
                    target_span: Some(Span::single(t)),
                    log_score: 0.0,
                },
            ));
        }
        out
    }
}

/// Expands `h` by every applicable phrase rule. In forced mode the rule's
/// target phrase must continue `input.target` at `h.target_index`; in
/// standard mode unknown source words may also pass through unchanged.
pub fn expand<'a>(
    h: &Rc<Hypothesis<'a>>,
    table: &'a PhraseTable,
    input: DecodeInput<'a>,
    mode: Mode,
) -> Vec<Hypothesis<'a>> {
    Expander::new(mode, table, input, None).expand(h)
}

/// Best path found by a search, with its applied rules in target order
/// (final deletions last).
#[derive(Clone, Debug, PartialEq)]
pub struct DecodingPath<'a> {
    pub rules: Vec<AppliedRule<'a>>,
    pub total_log_score: f64,
}

impl<'a> DecodingPath<'a> {
    /// Target tokens produced by the path, in order.
    pub fn target_tokens(&self) -> Vec<&'a str> {
        self.rules
            .iter()
            .filter(|r| r.kind != RuleKind::FinalDelete)
            .flat_map(|r| r.target.iter().map(String::as_str))
            .collect()
    }

    pub fn count(&self, kind: RuleKind) -> usize {
        self.rules.iter().filter(|r| r.kind == kind).count()
    }

    /// One line per applied rule:
    /// `kind<TAB>source tokens<TAB>target tokens<TAB>log score`, with
    /// `null` standing in for an empty side.
    pub fn write_trace<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.rules {
            let side = |toks: &[String]| {
                if toks.is_empty() {
                    NULL_WORD.to_string()
                } else {
                    toks.join(" ")
                }
            };
            writeln!(
                out,
                "{}\t{}\t{}\t{:.6}",
                r.kind,
                side(r.source),
                side(r.target),
                r.log_score
            )?;
        }
        Ok(())
    }
}

/// Total order used for beam pruning, recombination and the final argmax:
/// higher score, then fewer soft rules, then the lexicographically smaller
/// rule sequence (`by_rules`). `Less` means `a` is preferred.
pub(crate) fn preference(
    a_score: f64,
    a_soft: u32,
    b_score: f64,
    b_soft: u32,
    by_rules: impl FnOnce() -> Ordering,
) -> Ordering {
    b_score
        .total_cmp(&a_score)
        .then(a_soft.cmp(&b_soft))
        .then_with(by_rules)
}

pub(crate) fn rule_keys(h: &Hypothesis<'_>) -> Vec<(RuleKind, usize, usize, usize, usize)> {
    h.rules().iter().map(AppliedRule::sort_key).collect()
}

/// Lexicographic comparison of the rule sequences leading to `a` and `b`,
/// walking back-pointers up to the shared ancestor instead of
/// materialising both paths.
pub(crate) fn compare_rule_paths(a: &Hypothesis<'_>, b: &Hypothesis<'_>) -> Ordering {
    fn step<'h, 'a>(h: &'h Hypothesis<'a>) -> (&'h Hypothesis<'a>, &'h AppliedRule<'a>) {
        let (parent, rule) = h.back.as_ref().expect("depth > 0 implies a parent");
        (parent, rule)
    }
    let (mut x, mut y) = (a, b);
    while x.depth > y.depth {
        x = step(x).0;
    }
    while y.depth > x.depth {
        y = step(y).0;
    }
    // The divergence nearest the root decides; with none, the shorter path
    // is a prefix of the longer one.
    let mut decided = Ordering::Equal;
    while !std::ptr::eq(x, y) && x.depth > 0 {
        let (px, rx) = step(x);
        let (py, ry) = step(y);
        let ord = rx.sort_key().cmp(&ry.sort_key());
        if ord != Ordering::Equal {
            decided = ord;
        }
        x = px;
        y = py;
    }
    decided.then(a.depth.cmp(&b.depth))
}
