//! N-best and weight file formats.
//!
//! JSON-lines n-best records look like
//! `{"id": 0, "src": "...", "hyp": "...", "nmt_logprob": -3.2}`; scored and
//! reranked output adds `forced_logscore`, `word_penalty`, `combined` and
//! `rank`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Candidate, NBestList, Ranked, RerankWeights};
use crate::corpus::tokenize;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: usize,
    pub src: String,
    pub hyp: String,
    pub nmt_logprob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_logscore: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_penalty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combined: Option<f64>,
    /// 1-based position after reranking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
}

impl CandidateRecord {
    pub fn to_candidate(&self) -> Result<Candidate> {
        let mut c = Candidate::new(self.id, tokenize(&self.hyp), self.nmt_logprob)?;
        if let Some(f) = self.forced_logscore {
            c.set_forced_log_score(f);
        }
        Ok(c)
    }

    pub fn from_candidate(c: &Candidate, source: &[String]) -> Self {
        CandidateRecord {
            id: c.sentence_id,
            src: source.join(" "),
            hyp: c.tokens.join(" "),
            nmt_logprob: c.upstream_log_prob,
            forced_logscore: c.forced_log_score(),
            word_penalty: c.forced_log_score().map(|_| c.word_penalty()),
            combined: None,
            rank: None,
        }
    }
}

/// Reads JSON-lines records, skipping blank lines.
pub fn read_records<R: BufRead>(input: R, context: &str) -> Result<Vec<CandidateRecord>> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(context, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CandidateRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(context, idx + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_record<W: Write>(mut out: W, rec: &CandidateRecord) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, rec)?;
    out.write_all(b"\n")
}

/// Groups records into one list per sentence id, in order of first
/// appearance. All records of one id must share the same source.
pub fn group_records(records: &[CandidateRecord]) -> Result<Vec<NBestList>> {
    let mut lists: Vec<NBestList> = Vec::new();
    let mut index: HashMap<usize, usize> = HashMap::new();
    for rec in records {
        let source = tokenize(&rec.src);
        let slot = *index.entry(rec.id).or_insert_with(|| {
            lists.push(NBestList {
                sentence_id: rec.id,
                source: source.clone(),
                candidates: Vec::new(),
            });
            lists.len() - 1
        });
        if lists[slot].source != source {
            return Err(Error::InvalidInput(format!(
                "sentence {}: candidates disagree on the source sentence",
                rec.id
            )));
        }
        lists[slot].candidates.push(rec.to_candidate()?);
    }
    Ok(lists)
}

/// Output records for a reranked list, best first.
pub fn ranked_records(list: &NBestList, ranked: &[Ranked]) -> Vec<CandidateRecord> {
    ranked
        .iter()
        .enumerate()
        .map(|(pos, r)| {
            let mut rec = CandidateRecord::from_candidate(&r.candidate, &list.source);
            rec.word_penalty = Some(r.candidate.word_penalty());
            rec.combined = Some(r.combined);
            rec.rank = Some(pos + 1);
            rec
        })
        .collect()
}

/// Reads a Moses-style n-best list (`id ||| hyp ||| features ||| score`).
/// `sources[id]` supplies the source sentence for each id.
pub fn read_moses_nbest<R: BufRead>(input: R, context: &str, sources: &[Vec<String>]) -> Result<Vec<NBestList>> {
    let mut lists: Vec<NBestList> = Vec::new();
    let mut index: HashMap<usize, usize> = HashMap::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(context, e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
        if fields.len() < 4 {
            return Err(Error::parse(context, lineno, "expected `id ||| hyp ||| features ||| score`"));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(context, lineno, format!("bad sentence id `{}`", fields[0])))?;
        let score: f64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(context, lineno, format!("bad score `{}`", fields[3])))?;
        let source = sources.get(id).ok_or_else(|| {
            Error::parse(context, lineno, format!("no source sentence for id {id}"))
        })?;
        let slot = *index.entry(id).or_insert_with(|| {
            lists.push(NBestList {
                sentence_id: id,
                source: source.clone(),
                candidates: Vec::new(),
            });
            lists.len() - 1
        });
        let cand = Candidate::new(id, tokenize(fields[1]), score)
            .map_err(|e| Error::parse(context, lineno, e.to_string()))?;
        lists[slot].candidates.push(cand);
    }
    Ok(lists)
}

/// Writes `w1<TAB>w2<TAB>wWP`.
pub fn write_weights<W: Write>(mut out: W, w: &RerankWeights) -> std::io::Result<()> {
    writeln!(out, "{}\t{}\t{}", w.upstream, w.forced, w.word_penalty)
}

/// Reads the first non-comment line of a weights file.
pub fn read_weights<R: BufRead>(input: R, context: &str) -> Result<RerankWeights> {
    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(context, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let values = trimmed
            .split('\t')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(context, idx + 1, e.to_string()))?;
        if values.len() != 3 {
            return Err(Error::parse(context, idx + 1, "expected `w1<TAB>w2<TAB>wWP`"));
        }
        return RerankWeights::new(values[0], values[1], values[2])
            .map_err(|e| Error::parse(context, idx + 1, e.to_string()));
    }
    Err(Error::parse(context, 1, "no weights found"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn jsonl_round_trip_and_grouping() {
        let text = r#"{"id": 1, "src": "a b", "hyp": "x y", "nmt_logprob": -1.5}
{"id": 0, "src": "c", "hyp": "z", "nmt_logprob": -0.5, "forced_logscore": -2.0}

{"id": 1, "src": "a b", "hyp": "x", "nmt_logprob": -2.5}
"#;
        let recs = read_records(Cursor::new(text), "nb").unwrap();
        assert_eq!(recs.len(), 3);
        let lists = group_records(&recs).unwrap();
        assert_eq!(lists.len(), 2);
        assert_eq!(lists[0].sentence_id, 1);
        assert_eq!(lists[0].candidates.len(), 2);
        assert_eq!(lists[1].candidates[0].forced_log_score(), Some(-2.0));

        let mut buf = Vec::new();
        write_record(&mut buf, &recs[0]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"id\":1,\"src\":\"a b\",\"hyp\":\"x y\",\"nmt_logprob\":-1.5}\n"
        );
    }

    #[test]
    fn conflicting_sources_rejected() {
        let text = r#"{"id": 0, "src": "a", "hyp": "x", "nmt_logprob": -1}
{"id": 0, "src": "b", "hyp": "x", "nmt_logprob": -1}
"#;
        let recs = read_records(Cursor::new(text), "nb").unwrap();
        assert!(group_records(&recs).is_err());
    }

    #[test]
    fn bad_json_reports_line() {
        let err = read_records(Cursor::new("{\"id\": 0}\n"), "nb").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn moses_nbest() {
        let sources = vec![tokenize("das haus"), tokenize("ein baum")];
        let text = "0 ||| the house ||| tm: -1 -2 ||| -3.5\n1 ||| a tree ||| tm: -1 ||| -1.25\n0 ||| house ||| ||| -4\n";
        let lists = read_moses_nbest(Cursor::new(text), "nb", &sources).unwrap();
        assert_eq!(lists.len(), 2);
        assert_eq!(lists[0].candidates.len(), 2);
        assert_eq!(lists[0].candidates[1].upstream_log_prob, -4.0);
        assert_eq!(lists[1].source, tokenize("ein baum"));
        assert!(read_moses_nbest(Cursor::new("5 ||| x ||| ||| -1\n"), "nb", &sources).is_err());
    }

    #[test]
    fn weights_round_trip() {
        let w = RerankWeights::new(1.0, 0.3, -0.2).unwrap();
        let mut buf = Vec::new();
        write_weights(&mut buf, &w).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "1\t0.3\t-0.2\n");
        assert_eq!(read_weights(Cursor::new(buf), "w").unwrap(), w);
        assert!(read_weights(Cursor::new("1\t2\n"), "w").is_err());
        assert!(read_weights(Cursor::new("0\t0\t0\n"), "w").is_err());
    }
}
