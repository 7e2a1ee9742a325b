//! Word-aligned parallel corpora: reading, unaligned-word statistics and
//! consistent phrase-pair extraction.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Lines, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::phrase_table::{PhraseRule, PhraseTable};
use crate::span::Span;

/// Default cap on source and target phrase length during extraction.
pub const DEFAULT_MAX_PHRASE_LEN: usize = 7;

/// Count substituted for words that were never seen unaligned.
pub const DEFAULT_SMOOTHING_FLOOR: f64 = 0.5;

/// An alignment link `(source index, target index)`, both 0-based.
pub type Link = (usize, usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
    /// Sorted and deduplicated.
    pub alignment: Vec<Link>,
}

impl SentencePair {
    pub fn new(source: Vec<String>, target: Vec<String>, mut alignment: Vec<Link>) -> Result<Self> {
        if let Some(&(j, i)) = alignment
            .iter()
            .find(|&&(j, i)| j >= source.len() || i >= target.len())
        {
            return Err(Error::InvalidInput(format!(
                "link {j}-{i} outside a {}x{} sentence pair",
                source.len(),
                target.len()
            )));
        }
        alignment.sort_unstable();
        alignment.dedup();
        Ok(SentencePair {
            source,
            target,
            alignment,
        })
    }

    /// Whitespace-tokenizes both sides and parses a Pharaoh alignment line.
    pub fn parse(source: &str, target: &str, alignment: &str) -> Result<Self> {
        let source = tokenize(source);
        let target = tokenize(target);
        let links = parse_alignment(alignment, source.len(), target.len())
            .map_err(Error::InvalidInput)?;
        SentencePair::new(source, target, links)
    }

    fn aligned_flags(&self) -> (Vec<bool>, Vec<bool>) {
        let mut src = vec![false; self.source.len()];
        let mut tgt = vec![false; self.target.len()];
        for &(j, i) in &self.alignment {
            src[j] = true;
            tgt[i] = true;
        }
        (src, tgt)
    }
}

pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_owned).collect()
}

/// Parses a Pharaoh alignment line (`j-i` pairs separated by whitespace),
/// checking every index against the sentence lengths.
pub fn parse_alignment(
    line: &str,
    source_len: usize,
    target_len: usize,
) -> std::result::Result<Vec<Link>, String> {
    let mut links = Vec::new();
    for item in line.split_whitespace() {
        let (j, i) = item
            .split_once('-')
            .ok_or_else(|| format!("malformed link `{item}`"))?;
        let j: usize = j
            .parse()
            .map_err(|_| format!("malformed link `{item}`: non-integer source index"))?;
        let i: usize = i
            .parse()
            .map_err(|_| format!("malformed link `{item}`: non-integer target index"))?;
        if j >= source_len {
            return Err(format!(
                "link `{item}`: source index {j} out of range (source length {source_len})"
            ));
        }
        if i >= target_len {
            return Err(format!(
                "link `{item}`: target index {i} out of range (target length {target_len})"
            ));
        }
        links.push((j, i));
    }
    Ok(links)
}

/// Streams [`SentencePair`]s from three line-aligned readers.
///
/// Lines where either side is empty are skipped and counted. Once an error
/// is yielded the reader is exhausted.
pub struct CorpusReader<S, T, A> {
    source: Lines<S>,
    target: Lines<T>,
    alignment: Lines<A>,
    names: [String; 3],
    line: usize,
    skipped: usize,
    done: bool,
}

impl<S: BufRead, T: BufRead, A: BufRead> CorpusReader<S, T, A> {
    pub fn new(source: S, target: T, alignment: A) -> Self {
        CorpusReader {
            source: source.lines(),
            target: target.lines(),
            alignment: alignment.lines(),
            names: ["source".into(), "target".into(), "alignment".into()],
            line: 0,
            skipped: 0,
            done: false,
        }
    }

    fn with_names(mut self, names: [String; 3]) -> Self {
        self.names = names;
        self
    }

    /// Number of line triples skipped because a side was empty.
    pub fn skipped_empty(&self) -> usize {
        self.skipped
    }

    fn read_triple(&mut self) -> Result<Option<(String, String, String)>> {
        let next = |lines: &mut dyn Iterator<Item = std::io::Result<String>>, name: &str| {
            lines
                .next()
                .transpose()
                .map_err(|e| Error::io(PathBuf::from(name), e))
        };
        let s = next(&mut self.source, &self.names[0])?;
        let t = next(&mut self.target, &self.names[1])?;
        let a = next(&mut self.alignment, &self.names[2])?;
        match (s, t, a) {
            (None, None, None) => Ok(None),
            (Some(s), Some(t), Some(a)) => Ok(Some((s, t, a))),
            (s, t, a) => {
                let ended: Vec<&str> = [s.is_none(), t.is_none(), a.is_none()]
                    .iter()
                    .zip(&self.names)
                    .filter(|(ended, _)| **ended)
                    .map(|(_, name)| name.as_str())
                    .collect();
                Err(Error::LineCountMismatch {
                    line: self.line + 1,
                    detail: format!("no line {} in {}", self.line + 1, ended.join(", ")),
                })
            }
        }
    }
}

impl CorpusReader<BufReader<File>, BufReader<File>, BufReader<File>> {
    pub fn open(source: &Path, target: &Path, alignment: &Path) -> Result<Self> {
        let open = |p: &Path| {
            File::open(p)
                .map(BufReader::new)
                .map_err(|e| Error::io(p, e))
        };
        let names = [source, target, alignment].map(|p| p.display().to_string());
        Ok(CorpusReader::new(open(source)?, open(target)?, open(alignment)?).with_names(names))
    }
}

impl<S: BufRead, T: BufRead, A: BufRead> Iterator for CorpusReader<S, T, A> {
    type Item = Result<SentencePair>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let (s, t, a) = match self.read_triple() {
                Ok(Some(triple)) => triple,
                Ok(None) => {
                    self.done = true;
                    return None;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            };
            self.line += 1;
            let source = tokenize(&s);
            let target = tokenize(&t);
            if source.is_empty() || target.is_empty() {
                self.skipped += 1;
                log::debug!("skipping empty sentence pair at line {}", self.line);
                continue;
            }
            let pair = parse_alignment(&a, source.len(), target.len())
                .map_err(|msg| Error::parse(self.names[2].clone(), self.line, msg))
                .and_then(|links| SentencePair::new(source, target, links));
            if pair.is_err() {
                self.done = true;
            }
            return Some(pair);
        }
        None
    }
}

/// Opens the three corpus files; see [`CorpusReader`].
pub fn read_parallel_corpus(
    source: &Path,
    target: &Path,
    alignment: &Path,
) -> Result<CorpusReader<BufReader<File>, BufReader<File>, BufReader<File>>> {
    CorpusReader::open(source, target, alignment)
}

/// Per-token unaligned occurrence counts over a word-aligned corpus.
///
/// These drive the scores of the soft deletion (`f -> null`) and insertion
/// (`null -> e`) rules: `max(count, floor) / corpus_size`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnalignedStats {
    source_unaligned: BTreeMap<String, u64>,
    target_unaligned: BTreeMap<String, u64>,
    corpus_size: u64,
    smoothing_floor: f64,
}

impl UnalignedStats {
    /// An empty accumulator. It becomes usable for scoring once at least
    /// one pair has been added.
    pub fn empty(smoothing_floor: f64) -> Self {
        UnalignedStats {
            source_unaligned: BTreeMap::new(),
            target_unaligned: BTreeMap::new(),
            corpus_size: 0,
            smoothing_floor,
        }
    }

    pub fn from_counts(
        source_unaligned: BTreeMap<String, u64>,
        target_unaligned: BTreeMap<String, u64>,
        corpus_size: u64,
        smoothing_floor: f64,
    ) -> Result<Self> {
        if corpus_size == 0 {
            return Err(Error::EmptyCorpus);
        }
        check_floor(smoothing_floor)?;
        Ok(UnalignedStats {
            source_unaligned,
            target_unaligned,
            corpus_size,
            smoothing_floor,
        })
    }

    pub fn add_pair(&mut self, pair: &SentencePair) {
        let (src_aligned, tgt_aligned) = pair.aligned_flags();
        for (tok, _) in pair.source.iter().zip(src_aligned).filter(|(_, a)| !a) {
            *self.source_unaligned.entry(tok.clone()).or_default() += 1;
        }
        for (tok, _) in pair.target.iter().zip(tgt_aligned).filter(|(_, a)| !a) {
            *self.target_unaligned.entry(tok.clone()).or_default() += 1;
        }
        self.corpus_size += 1;
    }

    /// Combines statistics from another corpus shard.
    pub fn merge(&mut self, other: &UnalignedStats) {
        for (tok, n) in &other.source_unaligned {
            *self.source_unaligned.entry(tok.clone()).or_default() += n;
        }
        for (tok, n) in &other.target_unaligned {
            *self.target_unaligned.entry(tok.clone()).or_default() += n;
        }
        self.corpus_size += other.corpus_size;
    }

    pub fn corpus_size(&self) -> u64 {
        self.corpus_size
    }

    pub fn smoothing_floor(&self) -> f64 {
        self.smoothing_floor
    }

    pub fn set_smoothing_floor(&mut self, floor: f64) -> Result<()> {
        check_floor(floor)?;
        self.smoothing_floor = floor;
        Ok(())
    }

    pub fn source_counts(&self) -> &BTreeMap<String, u64> {
        &self.source_unaligned
    }

    pub fn target_counts(&self) -> &BTreeMap<String, u64> {
        &self.target_unaligned
    }

    pub fn source_unaligned(&self, token: &str) -> u64 {
        self.source_unaligned.get(token).copied().unwrap_or(0)
    }

    pub fn target_unaligned(&self, token: &str) -> u64 {
        self.target_unaligned.get(token).copied().unwrap_or(0)
    }

    /// Unsquared score of deleting source word `f`.
    pub fn deletion_score(&self, f: &str) -> f64 {
        self.smoothed(self.source_unaligned(f))
    }

    /// Unsquared score of inserting target word `e`.
    pub fn insertion_score(&self, e: &str) -> f64 {
        self.smoothed(self.target_unaligned(e))
    }

    fn smoothed(&self, count: u64) -> f64 {
        debug_assert!(self.corpus_size >= 1, "scoring with empty statistics");
        (count as f64).max(self.smoothing_floor) / self.corpus_size as f64
    }

    /// Writes the statistics TSV: a `#corpus_size` header, then
    /// `src|tgt<TAB>token<TAB>count` rows in token order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "#corpus_size\t{}", self.corpus_size)?;
        for (tok, n) in &self.source_unaligned {
            writeln!(out, "src\t{tok}\t{n}")?;
        }
        for (tok, n) in &self.target_unaligned {
            writeln!(out, "tgt\t{tok}\t{n}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R, context: &str, smoothing_floor: f64) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let corpus_size = match lines.next() {
            Some((_, line)) => {
                let line = line.map_err(|e| Error::io(context, e))?;
                let size = line
                    .strip_prefix("#corpus_size\t")
                    .ok_or_else(|| Error::parse(context, 1, "expected `#corpus_size<TAB>N` header"))?;
                size.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::parse(context, 1, format!("bad corpus size `{size}`")))?
            }
            None => return Err(Error::parse(context, 1, "missing header")),
        };
        let mut src = BTreeMap::new();
        let mut tgt = BTreeMap::new();
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io(context, e))?;
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let mut fields = line.split('\t');
            let (side, tok, count) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
                (Some(side), Some(tok), Some(count), None) => (side, tok, count),
                _ => return Err(Error::parse(context, lineno, "expected 3 tab-separated fields")),
            };
            let count: u64 = count
                .parse()
                .map_err(|_| Error::parse(context, lineno, format!("bad count `{count}`")))?;
            let map = match side {
                "src" => &mut src,
                "tgt" => &mut tgt,
                other => {
                    return Err(Error::parse(context, lineno, format!("unknown side `{other}`")))
                }
            };
            *map.entry(tok.to_owned()).or_default() += count;
        }
        UnalignedStats::from_counts(src, tgt, corpus_size, smoothing_floor)
    }

    pub fn read_tsv_file(path: &Path, smoothing_floor: f64) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        UnalignedStats::read_tsv(BufReader::new(file), &path.display().to_string(), smoothing_floor)
    }
}

fn check_floor(floor: f64) -> Result<()> {
    if floor.is_finite() && floor > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "smoothing floor must be positive, got {floor}"
        )))
    }
}

/// Counts unaligned token occurrences on both sides of every pair.
pub fn compute_unaligned_stats<I>(pairs: I, smoothing_floor: f64) -> Result<UnalignedStats>
where
    I: IntoIterator,
    I::Item: Borrow<SentencePair>,
{
    check_floor(smoothing_floor)?;
    let mut stats = UnalignedStats::empty(smoothing_floor);
    for pair in pairs {
        stats.add_pair(pair.borrow());
    }
    if stats.corpus_size == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(stats)
}

/// Enumerates every consistent (source span, target span) pair with both
/// sides at most `max_len` tokens long.
///
/// A rectangle is consistent when it contains at least one link and no link
/// joins a word inside it to a word outside it. Unaligned words at the
/// target edges are absorbed in every combination.
pub fn extract_phrase_pairs(pair: &SentencePair, max_len: usize) -> BTreeSet<(Span, Span)> {
    let mut out = BTreeSet::new();
    if max_len == 0 || pair.alignment.is_empty() {
        return out;
    }
    let src_len = pair.source.len();
    let tgt_len = pair.target.len();
    let mut src_links = vec![Vec::new(); src_len];
    let mut tgt_links = vec![Vec::new(); tgt_len];
    for &(j, i) in &pair.alignment {
        src_links[j].push(i);
        tgt_links[i].push(j);
    }

    for j1 in 0..src_len {
        let mut t_lo = usize::MAX;
        let mut t_hi = 0;
        for j2 in j1..src_len.min(j1 + max_len) {
            for &i in &src_links[j2] {
                t_lo = t_lo.min(i);
                t_hi = t_hi.max(i);
            }
            if t_lo == usize::MAX || t_hi - t_lo + 1 > max_len {
                continue;
            }
            let consistent = tgt_links[t_lo..=t_hi]
                .iter()
                .flatten()
                .all(|&j| j1 <= j && j <= j2);
            if !consistent {
                continue;
            }
            let mut i1 = t_lo;
            loop {
                let mut i2 = t_hi;
                while i2 - i1 < max_len {
                    out.insert((Span::new(j1, j2 + 1), Span::new(i1, i2 + 1)));
                    i2 += 1;
                    if i2 >= tgt_len || !tgt_links[i2].is_empty() {
                        break;
                    }
                }
                if i1 == 0 || !tgt_links[i1 - 1].is_empty() {
                    break;
                }
                i1 -= 1;
                if t_hi - i1 + 1 > max_len {
                    break;
                }
            }
        }
    }
    out
}

/// Aggregated counts for one phrase pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhrasePairCount {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub joint: u64,
    pub source_marginal: u64,
    pub target_marginal: u64,
}

/// Accumulates extracted phrase-pair occurrences over a corpus.
#[derive(Clone, Debug, Default)]
pub struct PhraseCounter {
    max_len: usize,
    joint: HashMap<(Vec<String>, Vec<String>), u64>,
}

impl PhraseCounter {
    pub fn new(max_len: usize) -> Self {
        PhraseCounter {
            max_len,
            joint: HashMap::new(),
        }
    }

    pub fn add_pair(&mut self, pair: &SentencePair) {
        for (s, t) in extract_phrase_pairs(pair, self.max_len) {
            let key = (
                pair.source[s.start..s.end].to_vec(),
                pair.target[t.start..t.end].to_vec(),
            );
            *self.joint.entry(key).or_default() += 1;
        }
    }

    pub fn merge(&mut self, other: &PhraseCounter) {
        for (k, n) in &other.joint {
            *self.joint.entry(k.clone()).or_default() += n;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.joint.is_empty()
    }

    /// Joint counts with their marginals, sorted by (source, target).
    pub fn counts(&self) -> Vec<PhrasePairCount> {
        let mut src_marginal: HashMap<&[String], u64> = HashMap::new();
        let mut tgt_marginal: HashMap<&[String], u64> = HashMap::new();
        for ((s, t), n) in &self.joint {
            *src_marginal.entry(s).or_default() += n;
            *tgt_marginal.entry(t).or_default() += n;
        }
        let mut out: Vec<PhrasePairCount> = self
            .joint
            .iter()
            .map(|((s, t), &n)| PhrasePairCount {
                source: s.clone(),
                target: t.clone(),
                joint: n,
                source_marginal: src_marginal[s.as_slice()],
                target_marginal: tgt_marginal[t.as_slice()],
            })
            .collect();
        out.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
        out
    }
}

/// Relative-frequency estimate of direct `p(e|f)` and inverse `p(f|e)`
/// probabilities for every counted pair. Pairs with a zero joint count are
/// dropped.
pub fn estimate_phrase_table<I>(counts: I) -> Result<PhraseTable>
where
    I: IntoIterator<Item = PhrasePairCount>,
{
    let mut rules = Vec::new();
    for c in counts {
        if c.joint == 0 {
            continue;
        }
        if c.joint > c.source_marginal || c.joint > c.target_marginal {
            return Err(Error::Invariant(format!(
                "joint count {} exceeds marginals ({}, {}) for `{}` -> `{}`",
                c.joint,
                c.source_marginal,
                c.target_marginal,
                c.source.join(" "),
                c.target.join(" ")
            )));
        }
        let direct = c.joint as f64 / c.source_marginal as f64;
        let inverse = c.joint as f64 / c.target_marginal as f64;
        rules.push(PhraseRule::new(c.source, c.target, direct, inverse)?);
    }
    Ok(PhraseTable::from_rules(rules))
}
