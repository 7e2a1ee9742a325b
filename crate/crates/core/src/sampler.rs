//! Candidate generation by sampling from a next-token scorer.
//!
//! The default strategy draws each next word from the two most probable
//! words only, renormalized: `P(e') = p(e') / (p(e') + p(e''))`. This keeps
//! samples close to the mode while still diversifying the list. Full
//! ancestral sampling is available for comparison.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rerank::{Candidate, NBestList};

pub const EOS: &str = "</s>";
pub const BOS: &str = "<s>";
pub const DEFAULT_NUM_SAMPLES: usize = 1000;
pub const DEFAULT_MAX_LEN: usize = 200;

const SUM_TOLERANCE: f64 = 1e-6;

/// A probability distribution over a target vocabulary that contains
/// [`EOS`].
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    tokens: Vec<String>,
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(tokens: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        if tokens.len() != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} tokens but {} probabilities",
                tokens.len(),
                probs.len()
            )));
        }
        if tokens.is_empty() {
            return Err(Error::InvalidDistribution("empty vocabulary".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("bad probability {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {sum}")));
        }
        if !tokens.iter().any(|t| t == EOS) {
            return Err(Error::InvalidDistribution(format!("vocabulary lacks {EOS}")));
        }
        Ok(Distribution { tokens, probs })
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let (tokens, probs) = pairs.into_iter().map(|(t, p)| (t.into(), p)).unzip();
        Distribution::new(tokens, probs)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, token: &str) -> f64 {
        self.tokens
            .iter()
            .position(|t| t == token)
            .map_or(0.0, |i| self.probs[i])
    }

    /// Indices of the two most probable tokens; ties go to the lower index.
    pub fn top_two(&self) -> (usize, Option<usize>) {
        let mut first = 0;
        let mut second: Option<usize> = None;
        for i in 1..self.probs.len() {
            if self.probs[i] > self.probs[first] {
                second = Some(first);
                first = i;
            } else if second.is_none_or(|s| self.probs[i] > self.probs[s]) {
                second = Some(i);
            }
        }
        (first, second)
    }
}

/// Supplies next-token distributions given a source sentence and the target
/// prefix generated so far.
pub trait NextTokenScorer {
    fn next_distribution(&mut self, source: &[String], prefix: &[String]) -> Result<Distribution>;
}

impl<T: NextTokenScorer + ?Sized> NextTokenScorer for &mut T {
    fn next_distribution(&mut self, source: &[String], prefix: &[String]) -> Result<Distribution> {
        (**self).next_distribution(source, prefix)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SamplingStrategy {
    /// Renormalized choice between the two most probable tokens.
    #[default]
    TopTwo,
    /// Draw from the full distribution.
    Ancestral,
}

/// Picks the next token from the renormalized top two. A one-word
/// vocabulary always yields its only token.
pub fn sample_next<'d, R: Rng + ?Sized>(dist: &'d Distribution, rng: &mut R) -> &'d str {
    &dist.tokens[sample_top_two_index(dist, rng)]
}

fn sample_top_two_index<R: Rng + ?Sized>(dist: &Distribution, rng: &mut R) -> usize {
    match dist.top_two() {
        (first, None) => first,
        (first, Some(second)) => {
            let p1 = dist.probs[first];
            let p2 = dist.probs[second];
            let u: f64 = rng.random();
            if u * (p1 + p2) < p1 {
                first
            } else {
                second
            }
        }
    }
}

/// Picks the next token from the full distribution.
pub fn sample_ancestral<'d, R: Rng + ?Sized>(dist: &'d Distribution, rng: &mut R) -> &'d str {
    &dist.tokens[sample_ancestral_index(dist, rng)]
}

fn sample_ancestral_index<R: Rng + ?Sized>(dist: &Distribution, rng: &mut R) -> usize {
    let total: f64 = dist.probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last_positive = 0;
    for (i, &p) in dist.probs.iter().enumerate() {
        if p > 0.0 {
            if u < p {
                return i;
            }
            u -= p;
            last_positive = i;
        }
    }
    last_positive
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Generated tokens, without the end marker.
    pub tokens: Vec<String>,
    /// Sum of log probabilities of every drawn token, end marker included.
    pub log_prob: f64,
    /// False when `max_len` was reached before the end marker was drawn.
    pub finished: bool,
}

/// Samples one translation, stopping at [`EOS`] or after `max_len` tokens.
pub fn sample_translation<S, R>(
    scorer: &mut S,
    source: &[String],
    rng: &mut R,
    max_len: usize,
    strategy: SamplingStrategy,
) -> Result<Sample>
where
    S: NextTokenScorer + ?Sized,
    R: Rng + ?Sized,
{
    if max_len == 0 {
        return Err(Error::InvalidInput("max_len must be at least 1".into()));
    }
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    while tokens.len() < max_len {
        let dist = scorer.next_distribution(source, &tokens)?;
        let idx = match strategy {
            SamplingStrategy::TopTwo => sample_top_two_index(&dist, rng),
            SamplingStrategy::Ancestral => sample_ancestral_index(&dist, rng),
        };
        log_prob += dist.probs[idx].ln();
        if dist.tokens[idx] == EOS {
            return Ok(Sample {
                tokens,
                log_prob,
                finished: true,
            });
        }
        tokens.push(dist.tokens[idx].clone());
    }
    Ok(Sample {
        tokens,
        log_prob,
        finished: false,
    })
}

/// Log probability of `tokens` followed by [`EOS`] under the scorer.
pub fn sequence_log_prob<S: NextTokenScorer + ?Sized>(
    scorer: &mut S,
    source: &[String],
    tokens: &[String],
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..=tokens.len() {
        let dist = scorer.next_distribution(source, &tokens[..i])?;
        let next = tokens.get(i).map_or(EOS, String::as_str);
        total += dist.prob(next).ln();
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    pub num_samples: usize,
    pub max_len: usize,
    pub strategy: SamplingStrategy,
    /// Drop repeated token sequences (the first occurrence is kept).
    pub dedupe: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            num_samples: DEFAULT_NUM_SAMPLES,
            max_len: DEFAULT_MAX_LEN,
            strategy: SamplingStrategy::TopTwo,
            dedupe: false,
        }
    }
}

/// Builds the reranking list for one source sentence: the externally
/// supplied beam-search best followed by `num_samples` samples.
///
/// Each sample gets its own generator seeded from `rng` up front, so the
/// list depends only on the state of `rng`, never on sampling order. Every
/// candidate carries its sequence log probability under the scorer.
pub fn build_candidate_list<S, R>(
    scorer: &mut S,
    sentence_id: usize,
    source: &[String],
    beam_best: &[String],
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<NBestList>
where
    S: NextTokenScorer + ?Sized,
    R: RngCore + ?Sized,
{
    let seeds: Vec<u64> = (0..config.num_samples).map(|_| rng.next_u64()).collect();
    let beam_lp = sequence_log_prob(scorer, source, beam_best)?;
    if !beam_lp.is_finite() {
        return Err(Error::InvalidInput(format!(
            "sentence {sentence_id}: beam-best output has zero probability under the scorer"
        )));
    }
    let mut candidates = vec![Candidate::new(sentence_id, beam_best.to_vec(), beam_lp)?];
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    if config.dedupe {
        seen.insert(beam_best.to_vec());
    }
    for seed in seeds {
        let mut sample_rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sample_translation(scorer, source, &mut sample_rng, config.max_len, config.strategy)?;
        if config.dedupe && !seen.insert(s.tokens.clone()) {
            continue;
        }
        candidates.push(Candidate::new(sentence_id, s.tokens, s.log_prob)?);
    }
    Ok(NBestList {
        sentence_id,
        source: source.to_vec(),
        candidates,
    })
}

/// Toy bigram model: the next-token distribution depends only on the
/// previous target token (or [`BOS`]). The source is ignored.
#[derive(Clone, Debug)]
pub struct BigramScorer {
    transitions: HashMap<String, Distribution>,
    fallback: Distribution,
}

impl BigramScorer {
    /// Explicit transition table keyed by previous token. Histories not in
    /// the table get `fallback`.
    pub fn new(transitions: HashMap<String, Distribution>, fallback: Distribution) -> Self {
        BigramScorer {
            transitions,
            fallback,
        }
    }

    /// Add-`alpha` smoothed bigram estimates from tokenized sentences.
    pub fn from_corpus(sentences: &[Vec<String>], alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidInput(format!("smoothing alpha must be positive, got {alpha}")));
        }
        let mut vocab: Vec<String> = sentences.iter().flatten().cloned().collect();
        vocab.push(EOS.to_string());
        vocab.sort();
        vocab.dedup();
        let position: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();

        let mut counts: HashMap<String, Vec<f64>> = HashMap::new();
        for sent in sentences {
            let mut prev = BOS;
            for tok in sent.iter().map(String::as_str).chain(std::iter::once(EOS)) {
                counts.entry(prev.to_string()).or_insert_with(|| vec![0.0; vocab.len()])[position[tok]] += 1.0;
                prev = tok;
            }
        }
        let normalize = |row: &[f64]| {
            let total: f64 = row.iter().sum::<f64>() + alpha * row.len() as f64;
            row.iter().map(|c| (c + alpha) / total).collect::<Vec<f64>>()
        };
        let fallback = Distribution::new(vocab.clone(), normalize(&vec![0.0; vocab.len()]))?;
        let transitions = counts
            .into_iter()
            .map(|(prev, row)| Ok((prev, Distribution::new(vocab.clone(), normalize(&row))?)))
            .collect::<Result<_>>()?;
        Ok(BigramScorer {
            transitions,
            fallback,
        })
    }
}

impl NextTokenScorer for BigramScorer {
    fn next_distribution(&mut self, _source: &[String], prefix: &[String]) -> Result<Distribution> {
        let prev = prefix.last().map_or(BOS, String::as_str);
        Ok(self.transitions.get(prev).unwrap_or(&self.fallback).clone())
    }
}

/// Line protocol to an external scorer. Each request is one line
/// `source tokens ||| prefix tokens`; each response is one line of
/// whitespace-separated `token prob` pairs.
pub struct LineProtocolScorer<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> LineProtocolScorer<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        LineProtocolScorer { reader, writer }
    }
}

pub fn parse_distribution_line(line: &str) -> Result<Distribution> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if !fields.len().is_multiple_of(2) {
        return Err(Error::Protocol(format!("odd number of fields in `{line}`")));
    }
    let pairs = fields
        .chunks(2)
        .map(|c| {
            c[1].parse::<f64>()
                .map(|p| (c[0].to_string(), p))
                .map_err(|_| Error::Protocol(format!("bad probability `{}`", c[1])))
        })
        .collect::<Result<Vec<_>>>()?;
    Distribution::from_pairs(pairs)
}

impl<R: BufRead, W: Write> NextTokenScorer for LineProtocolScorer<R, W> {
    fn next_distribution(&mut self, source: &[String], prefix: &[String]) -> Result<Distribution> {
        let io = |e: std::io::Error| Error::Protocol(e.to_string());
        writeln!(self.writer, "{} ||| {}", source.join(" "), prefix.join(" ")).map_err(io)?;
        self.writer.flush().map_err(io)?;
        let mut line = String::new();
        if self.reader.read_line(&mut line).map_err(io)? == 0 {
            return Err(Error::Protocol("scorer closed its output".into()));
        }
        parse_distribution_line(&line)
    }
}

/// Runs a shell command speaking the [`LineProtocolScorer`] protocol on its
/// stdin/stdout.
pub struct ProcessScorer {
    child: Child,
    inner: LineProtocolScorer<BufReader<ChildStdout>, ChildStdin>,
}

impl ProcessScorer {
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Protocol(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(ProcessScorer {
            child,
            inner: LineProtocolScorer::new(BufReader::new(stdout), stdin),
        })
    }
}

impl NextTokenScorer for ProcessScorer {
    fn next_distribution(&mut self, source: &[String], prefix: &[String]) -> Result<Distribution> {
        self.inner.next_distribution(source, prefix)
    }
}

impl Drop for ProcessScorer {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
