//! Test-only oracles, deliberately written without touching the decoder's
//! search code: exhaustive path enumeration, direct rectangle checks and a
//! path validator that recomputes every score from the raw inputs.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use softforce::corpus::{SentencePair, UnalignedStats};
use softforce::decoder::{DecodingPath, RuleKind};
use softforce::phrase_table::{PhraseRule, PhraseTable};
use softforce::Span;

pub struct Instance {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub table: PhraseTable,
    pub stats: UnalignedStats,
}

const SRC_VOCAB: [&str; 5] = ["s0", "s1", "s2", "s3", "s4"];
const TGT_VOCAB: [&str; 5] = ["t0", "t1", "t2", "t3", "t4"];

fn words<R: Rng>(rng: &mut R, vocab: &[&str], len: usize) -> Vec<String> {
    (0..len).map(|_| vocab.choose(rng).unwrap().to_string()).collect()
}

fn sub_phrase<R: Rng>(rng: &mut R, text: &[String], vocab: &[&str], max_len: usize) -> Vec<String> {
    // mostly substrings of the sentence so that rules actually fire
    if !text.is_empty() && rng.random_bool(0.8) {
        let len = rng.random_range(1..=max_len.min(text.len()));
        let start = rng.random_range(0..=text.len() - len);
        text[start..start + len].to_vec()
    } else {
        let len = rng.random_range(1..=max_len);
        words(rng, vocab, len)
    }
}

pub fn random_rule<R: Rng>(rng: &mut R, source: &[String], target: &[String]) -> PhraseRule {
    let src = sub_phrase(rng, source, &SRC_VOCAB, 3);
    let tgt = sub_phrase(rng, target, &TGT_VOCAB, 3);
    let direct = rng.random_range(0.01..=1.0);
    let inverse = rng.random_range(0.01..=1.0);
    PhraseRule::new(src, tgt, direct, inverse).unwrap()
}

pub fn random_stats<R: Rng>(rng: &mut R) -> UnalignedStats {
    let corpus_size = rng.random_range(1..=60u64);
    let mut src = BTreeMap::new();
    let mut tgt = BTreeMap::new();
    for w in SRC_VOCAB {
        if rng.random_bool(0.6) {
            src.insert(w.to_string(), rng.random_range(0..=corpus_size));
        }
    }
    for w in TGT_VOCAB {
        if rng.random_bool(0.6) {
            tgt.insert(w.to_string(), rng.random_range(0..=corpus_size));
        }
    }
    UnalignedStats::from_counts(src, tgt, corpus_size, 0.5).unwrap()
}

/// |F| in 1..=max_src, |E| in 0..=max_tgt, up to `max_rules` rules.
pub fn random_instance<R: Rng>(rng: &mut R, max_src: usize, max_tgt: usize, max_rules: usize) -> Instance {
    let src_len = rng.random_range(1..=max_src);
    let source = words(rng, &SRC_VOCAB, src_len);
    let tgt_len = rng.random_range(0..=max_tgt);
    let target = words(rng, &TGT_VOCAB, tgt_len);
    let n_rules = rng.random_range(0..=max_rules);
    let rules: Vec<PhraseRule> = (0..n_rules).map(|_| random_rule(rng, &source, &target)).collect();
    Instance {
        source,
        target,
        table: PhraseTable::from_rules(rules),
        stats: random_stats(rng),
    }
}

/// Insertion / deletion log scores straight from the counts.
pub fn oracle_insert(stats: &UnalignedStats, e: &str) -> f64 {
    let n = stats.target_counts().get(e).copied().unwrap_or(0) as f64;
    2.0 * (n.max(stats.smoothing_floor()) / stats.corpus_size() as f64).ln()
}

pub fn oracle_delete(stats: &UnalignedStats, f: &str) -> f64 {
    let n = stats.source_counts().get(f).copied().unwrap_or(0) as f64;
    2.0 * (n.max(stats.smoothing_floor()) / stats.corpus_size() as f64).ln()
}

/// Exhaustive maximum over every forced-decoding path: at each target
/// position either insert the word or apply any rule (found by linear scan)
/// whose target continues the sentence at any free source position; once
/// the target is done, delete what is left.
pub fn brute_force_forced(inst: &Instance) -> f64 {
    fn go(inst: &Instance, i: usize, covered: &mut Vec<bool>) -> f64 {
        let (f, e) = (&inst.source, &inst.target);
        if i == e.len() {
            return f
                .iter()
                .zip(covered.iter())
                .filter(|(_, c)| !**c)
                .map(|(w, _)| oracle_delete(&inst.stats, w))
                .sum();
        }
        let mut best = oracle_insert(&inst.stats, &e[i]) + go(inst, i + 1, covered);
        for rule in inst.table.rules() {
            let (rs, rt) = (&rule.source, &rule.target);
            if !e[i..].starts_with(rt) || rs.len() > f.len() {
                continue;
            }
            for start in 0..=f.len() - rs.len() {
                let end = start + rs.len();
                if f[start..end] != rs[..] || covered[start..end].iter().any(|&c| c) {
                    continue;
                }
                covered[start..end].iter_mut().for_each(|c| *c = true);
                let v = rule.log_score + go(inst, i + rt.len(), covered);
                covered[start..end].iter_mut().for_each(|c| *c = false);
                best = best.max(v);
            }
        }
        best
    }
    go(inst, 0, &mut vec![false; inst.source.len()])
}

/// Checks every structural invariant of a forced-decoding path and
/// recomputes its score. Returns a description of the first violation.
pub fn check_forced_path(inst: &Instance, path: &DecodingPath<'_>) -> Result<(), String> {
    let (f, e) = (&inst.source, &inst.target);
    if !path.total_log_score.is_finite() {
        return Err(format!("non-finite score {}", path.total_log_score));
    }
    let produced: Vec<&str> = path.target_tokens();
    let expected: Vec<&str> = e.iter().map(String::as_str).collect();
    if produced != expected {
        return Err(format!("target {produced:?} != {expected:?}"));
    }
    let mut cover = vec![0usize; f.len()];
    let mut next_target = 0;
    let mut seen_final = false;
    let mut sum = 0.0;
    for r in &path.rules {
        sum += r.log_score;
        if seen_final && r.kind != RuleKind::FinalDelete {
            return Err("final deletions must come last".into());
        }
        match r.kind {
            RuleKind::Phrase => {
                let (s, t) = (r.source_span.ok_or("phrase without source span")?, r.target_span.ok_or("phrase without target span")?);
                if t.start != next_target {
                    return Err(format!("target span {t} out of order"));
                }
                next_target = t.end;
                if r.source != &f[s.start..s.end] || r.target != &e[t.start..t.end] {
                    return Err(format!("rule tokens disagree with spans {s} {t}"));
                }
                let rule = inst
                    .table
                    .get(r.source, r.target)
                    .ok_or_else(|| format!("rule {:?} -> {:?} not in table", r.source, r.target))?;
                if (rule.log_score - r.log_score).abs() > 1e-12 {
                    return Err("phrase score differs from table".into());
                }
                for c in &mut cover[s.start..s.end] {
                    *c += 1;
                }
            }
            RuleKind::InsertTarget => {
                let t = r.target_span.ok_or("insert without target span")?;
                if r.source_span.is_some() || t.len() != 1 || t.start != next_target {
                    return Err(format!("bad insertion at {t}"));
                }
                next_target = t.end;
                if (r.log_score - oracle_insert(&inst.stats, &e[t.start])).abs() > 1e-12 {
                    return Err("insertion score mismatch".into());
                }
            }
            RuleKind::FinalDelete => {
                seen_final = true;
                let s = r.source_span.ok_or("delete without source span")?;
                if r.target_span.is_some() || s.len() != 1 {
                    return Err(format!("bad deletion at {s}"));
                }
                if (r.log_score - oracle_delete(&inst.stats, &f[s.start])).abs() > 1e-12 {
                    return Err("deletion score mismatch".into());
                }
                cover[s.start] += 1;
            }
            RuleKind::PassThrough => return Err("pass-through in forced path".into()),
        }
    }
    if next_target != e.len() {
        return Err("target not fully generated".into());
    }
    if let Some(p) = cover.iter().position(|&c| c != 1) {
        return Err(format!("source position {p} covered {} times", cover[p]));
    }
    if (sum - path.total_log_score).abs() > 1e-9 {
        return Err(format!("score {} != sum of rules {sum}", path.total_log_score));
    }
    Ok(())
}

/// Best standard-decoding score by enumerating every segmentation of the
/// source into contiguous pieces (order is free and costless).
pub fn brute_force_standard(source: &[String], table: &PhraseTable, word_penalty: f64) -> f64 {
    fn piece_best(piece: &[String], table: &PhraseTable, wp: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for r in table.rules() {
            if r.source == piece {
                let v = r.log_score + wp * r.target.len() as f64;
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        if piece.len() == 1 && !table.rules().iter().any(|r| r.source == piece) {
            best = Some(wp);
        }
        best
    }
    fn go(source: &[String], table: &PhraseTable, wp: f64) -> f64 {
        if source.is_empty() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for k in 1..=source.len() {
            if let Some(v) = piece_best(&source[..k], table, wp) {
                best = best.max(v + go(&source[k..], table, wp));
            }
        }
        best
    }
    go(source, table, word_penalty)
}

/// All consistent (source span, target span) rectangles, by checking every
/// rectangle directly.
pub fn brute_force_extract(pair: &SentencePair, max_len: usize) -> BTreeSet<(Span, Span)> {
    let (j_len, i_len) = (pair.source.len(), pair.target.len());
    let mut out = BTreeSet::new();
    for j1 in 0..j_len {
        for j2 in j1 + 1..=j_len {
            for i1 in 0..i_len {
                for i2 in i1 + 1..=i_len {
                    if j2 - j1 > max_len || i2 - i1 > max_len {
                        continue;
                    }
                    let inside_src = |j: usize| j1 <= j && j < j2;
                    let inside_tgt = |i: usize| i1 <= i && i < i2;
                    let any_inside = pair.alignment.iter().any(|&(j, i)| inside_src(j) && inside_tgt(i));
                    let crossing = pair
                        .alignment
                        .iter()
                        .any(|&(j, i)| inside_src(j) != inside_tgt(i));
                    if any_inside && !crossing {
                        out.insert((Span::new(j1, j2), Span::new(i1, i2)));
                    }
                }
            }
        }
    }
    out
}
