//! Translation rules and the rule table, with source- and target-side
//! indices and the native / Moses text formats.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Header line written at the top of every native table file.
pub const NATIVE_HEADER: &str = "# source\ttarget\tdirect_prob\tinverse_prob";

/// A phrase translation rule scored by the product of its direct and
/// inverse translation probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct PhraseRule {
    pub source: Vec<String>,
    pub target: Vec<String>,
    /// p(e|f)
    pub direct_prob: f64,
    /// p(f|e)
    pub inverse_prob: f64,
    /// ln p(e|f) + ln p(f|e)
    pub log_score: f64,
}

impl PhraseRule {
    pub fn new(
        source: Vec<String>,
        target: Vec<String>,
        direct_prob: f64,
        inverse_prob: f64,
    ) -> Result<Self> {
        if source.is_empty() || target.is_empty() {
            return Err(Error::InvalidRule("empty phrase".into()));
        }
        for (name, p) in [("direct", direct_prob), ("inverse", inverse_prob)] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidRule(format!(
                    "{name} probability {p} outside (0, 1]"
                )));
            }
        }
        Ok(PhraseRule {
            source,
            target,
            direct_prob,
            inverse_prob,
            log_score: direct_prob.ln() + inverse_prob.ln(),
        })
    }

    /// Convenience constructor from whitespace-separated phrases.
    pub fn from_strs(source: &str, target: &str, direct_prob: f64, inverse_prob: f64) -> Result<Self> {
        PhraseRule::new(
            source.split_whitespace().map(str::to_owned).collect(),
            target.split_whitespace().map(str::to_owned).collect(),
            direct_prob,
            inverse_prob,
        )
    }
}

/// Immutable rule table indexed by both phrase sides.
///
/// Duplicate (source, target) entries are collapsed to the one with the
/// highest log score; the first occurrence wins exact ties. Rule order is
/// the order of first appearance.
#[derive(Clone, Debug, Default)]
pub struct PhraseTable {
    rules: Vec<PhraseRule>,
    by_source: HashMap<Vec<String>, Vec<usize>>,
    by_target: HashMap<Vec<String>, Vec<usize>>,
    max_source_len: usize,
    max_target_len: usize,
}

impl PartialEq for PhraseTable {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules
    }
}

impl PhraseTable {
    pub fn from_rules<I: IntoIterator<Item = PhraseRule>>(rules: I) -> Self {
        let mut table = PhraseTable::default();
        let mut seen: HashMap<(Vec<String>, Vec<String>), usize> = HashMap::new();
        for rule in rules {
            let key = (rule.source.clone(), rule.target.clone());
            if let Some(&idx) = seen.get(&key) {
                if rule.log_score > table.rules[idx].log_score {
                    table.rules[idx] = rule;
                }
                continue;
            }
            seen.insert(key, table.rules.len());
            table.rules.push(rule);
        }
        for (idx, rule) in table.rules.iter().enumerate() {
            table.by_source.entry(rule.source.clone()).or_default().push(idx);
            table.by_target.entry(rule.target.clone()).or_default().push(idx);
            table.max_source_len = table.max_source_len.max(rule.source.len());
            table.max_target_len = table.max_target_len.max(rule.target.len());
        }
        table
    }

    pub fn rules(&self) -> &[PhraseRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn max_source_len(&self) -> usize {
        self.max_source_len
    }

    pub fn max_target_len(&self) -> usize {
        self.max_target_len
    }

    pub fn rule(&self, idx: usize) -> &PhraseRule {
        &self.rules[idx]
    }

    pub fn get(&self, source: &[String], target: &[String]) -> Option<&PhraseRule> {
        self.by_source
            .get(source)?
            .iter()
            .map(|&i| &self.rules[i])
            .find(|r| r.target == target)
    }

    /// Indices of rules whose source phrase equals `source`.
    pub fn source_matches(&self, source: &[String]) -> &[usize] {
        self.by_source.get(source).map_or(&[], Vec::as_slice)
    }

    /// Indices of rules whose target phrase equals `target`.
    pub fn target_matches(&self, target: &[String]) -> &[usize] {
        self.by_target.get(target).map_or(&[], Vec::as_slice)
    }

    /// Every rule whose target phrase equals `target[start..start + k]` for
    /// some `k` up to the longest target phrase in the table.
    pub fn lookup_target_matches(&self, target: &[String], start: usize) -> Vec<&PhraseRule> {
        self.target_match_indices(target, start)
            .map(|i| &self.rules[i])
            .collect()
    }

    pub(crate) fn target_match_indices<'a>(
        &'a self,
        target: &'a [String],
        start: usize,
    ) -> impl Iterator<Item = usize> + 'a {
        let longest = self.max_target_len.min(target.len().saturating_sub(start));
        (1..=longest).flat_map(move |k| self.target_matches(&target[start..start + k]).iter().copied())
    }

    /// The subset of rules usable for one sentence pair: both phrases occur
    /// contiguously in `source` and `target` respectively. Scores are
    /// unaffected.
    pub fn restrict_to(&self, source: &[String], target: &[String]) -> PhraseTable {
        let occurs = |phrase: &[String], text: &[String]| {
            phrase.len() <= text.len() && text.windows(phrase.len()).any(|w| w == phrase)
        };
        PhraseTable::from_rules(
            self.rules
                .iter()
                .filter(|r| occurs(&r.source, source) && occurs(&r.target, target))
                .cloned(),
        )
    }

    /// Writes the native TSV format: a header comment, then
    /// `source<TAB>target<TAB>direct<TAB>inverse` per rule.
    pub fn write_native<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{NATIVE_HEADER}")?;
        for r in &self.rules {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                r.source.join(" "),
                r.target.join(" "),
                r.direct_prob,
                r.inverse_prob
            )?;
        }
        Ok(())
    }

    pub fn write_native_file(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_native(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_native<R: BufRead>(input: R, context: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io(context, e))?;
            let lineno = idx + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::parse(
                    context,
                    lineno,
                    format!("expected 4 tab-separated fields, found {}", fields.len()),
                ));
            }
            let direct = parse_prob(fields[2], context, lineno)?;
            let inverse = parse_prob(fields[3], context, lineno)?;
            let rule = PhraseRule::from_strs(fields[0], fields[1], direct, inverse)
                .map_err(|e| Error::parse(context, lineno, e.to_string()))?;
            rules.push(rule);
        }
        Ok(PhraseTable::from_rules(rules))
    }

    pub fn read_native_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        PhraseTable::read_native(BufReader::new(file), &path.display().to_string())
    }

    /// Reads a Moses `f ||| e ||| scores ...` table. Only the two score
    /// columns named by `layout` are kept; further `|||` fields (alignment,
    /// counts) are ignored.
    pub fn read_moses<R: BufRead>(input: R, context: &str, layout: MosesLayout) -> Result<Self> {
        let mut rules = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io(context, e))?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
            if fields.len() < 3 {
                return Err(Error::parse(context, lineno, "missing `|||` separator"));
            }
            let scores: Vec<&str> = fields[2].split_whitespace().collect();
            let column = |c: usize| {
                scores.get(c).ok_or_else(|| {
                    Error::parse(
                        context,
                        lineno,
                        format!("score column {c} missing ({} scores)", scores.len()),
                    )
                })
            };
            let inverse = parse_prob(column(layout.inverse)?, context, lineno)?;
            let direct = parse_prob(column(layout.direct)?, context, lineno)?;
            let rule = PhraseRule::from_strs(fields[0], fields[1], direct, inverse)
                .map_err(|e| Error::parse(context, lineno, e.to_string()))?;
            rules.push(rule);
        }
        Ok(PhraseTable::from_rules(rules))
    }

    pub fn read_moses_file(path: &Path, layout: MosesLayout) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        PhraseTable::read_moses(BufReader::new(file), &path.display().to_string(), layout)
    }
}

/// Which Moses score columns hold the two phrase translation probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MosesLayout {
    /// Column of p(f|e).
    pub inverse: usize,
    /// Column of p(e|f).
    pub direct: usize,
}

impl Default for MosesLayout {
    /// The usual four-score layout: `p(f|e) lex(f|e) p(e|f) lex(e|f)`.
    fn default() -> Self {
        MosesLayout {
            inverse: 0,
            direct: 2,
        }
    }
}

fn parse_prob(text: &str, context: &str, line: usize) -> Result<f64> {
    let p: f64 = text
        .parse()
        .map_err(|_| Error::parse(context, line, format!("non-numeric score `{text}`")))?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::parse(
            context,
            line,
            format!("probability {text} outside (0, 1]"),
        ));
    }
    Ok(p)
}
