use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use softforce::corpus::{
    compute_unaligned_stats, estimate_phrase_table, read_parallel_corpus, tokenize, PhraseCounter, SentencePair,
    UnalignedStats, DEFAULT_MAX_PHRASE_LEN, DEFAULT_SMOOTHING_FLOOR,
};
use softforce::decoder::{decode_standard, forced_decode, DecoderConfig, DecodingPath, DEFAULT_BEAM_WIDTH};
use softforce::phrase_table::{MosesLayout, PhraseTable};
use softforce::rerank::io::{
    group_records, ranked_records, read_moses_nbest, read_records, read_weights, write_record, write_weights,
    CandidateRecord,
};
use softforce::rerank::{
    corpus_bleu, default_grid, rank_scored, score_nbest, tune_weights, NBestList, OnScoreError, RerankWeights,
    ScoringConfig,
};
use softforce::sampler::{
    build_candidate_list, BigramScorer, NextTokenScorer, ProcessScorer, SamplerConfig, SamplingStrategy,
    DEFAULT_MAX_LEN, DEFAULT_NUM_SAMPLES,
};

use crate::config::Config;
use crate::error::{CliError, CliResult, Kind};
use crate::{BleuArgs, DecodeArgs, ExtractArgs, ModelArgs, RerankArgs, SampleArgs, ScoreArgs, TuneArgs};

const DEFAULT_BIGRAM_ALPHA: f64 = 0.1;

type Output = BufWriter<Box<dyn Write>>;

fn create(path: Option<&Path>) -> CliResult<Output> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(File::create(p).map_err(|e| CliError::io(p, e))?),
        None => Box::new(std::io::stdout()),
    };
    Ok(BufWriter::new(sink))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    open(path)?
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::io(path, e))
}

fn write_err(path: Option<&Path>) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| match path {
        Some(p) => CliError::io(p, e),
        None => CliError::io(Path::new("<stdout>"), e),
    }
}

fn same_length(a: &[String], a_name: &Path, b: &[String], b_name: &Path) -> CliResult<()> {
    if a.len() != b.len() {
        return Err(CliError::new(
            Kind::Format,
            format!(
                "{} has {} lines but {} has {}",
                a_name.display(),
                a.len(),
                b_name.display(),
                b.len()
            ),
        ));
    }
    Ok(())
}

fn load_table(config: &Config, path: Option<PathBuf>, format: Option<String>) -> CliResult<PhraseTable> {
    let path = config.path(path, "table")?;
    let format = config.or(format, "table_format", "native".to_string())?;
    let table = match format.as_str() {
        "native" => PhraseTable::read_native_file(&path)?,
        "moses" => PhraseTable::read_moses_file(&path, MosesLayout::default())?,
        other => return Err(CliError::usage(format!("--table-format must be native or moses, got `{other}`"))),
    };
    log::info!("loaded {} rules from {}", table.len(), path.display());
    Ok(table)
}

fn decoder_config(config: &Config, beam: Option<usize>, distortion: Option<usize>) -> CliResult<DecoderConfig> {
    let beam_width = config.or(beam, "beam_width", DEFAULT_BEAM_WIDTH)?;
    if beam_width == 0 {
        return Err(CliError::usage("--beam-width must be at least 1"));
    }
    Ok(DecoderConfig {
        beam_width,
        distortion_limit: config.get(distortion, "distortion_limit")?,
    })
}

struct Model {
    table: PhraseTable,
    stats: UnalignedStats,
    decoder: DecoderConfig,
}

fn load_model(args: ModelArgs, config: &Config) -> CliResult<Model> {
    let floor = config.or(args.smoothing_floor, "smoothing_floor", DEFAULT_SMOOTHING_FLOOR)?;
    if !(floor > 0.0 && floor.is_finite()) {
        return Err(CliError::usage(format!("--smoothing-floor must be positive, got {floor}")));
    }
    let decoder = decoder_config(config, args.beam_width, args.distortion_limit)?;
    let table = load_table(config, args.table, args.table_format)?;
    let stats = UnalignedStats::read_tsv_file(&config.path(args.stats, "stats")?, floor)?;
    Ok(Model { table, stats, decoder })
}

fn scoring_config(config: &Config, on_error: Option<String>, decoder: DecoderConfig) -> CliResult<ScoringConfig> {
    let on_error = match config.or(on_error, "on_error", "abort".to_string())?.as_str() {
        "abort" => OnScoreError::Abort,
        "skip" => OnScoreError::Skip,
        other => return Err(CliError::usage(format!("--on-error must be abort or skip, got `{other}`"))),
    };
    Ok(ScoringConfig { decoder, on_error })
}

fn write_trace(out: &mut Output, index: usize, path: &DecodingPath<'_>) -> std::io::Result<()> {
    writeln!(out, "# {index}\t{}", path.total_log_score)?;
    path.write_trace(&mut *out)?;
    writeln!(out)
}

pub fn extract(args: ExtractArgs, config: &Config) -> CliResult<()> {
    let source = config.path(args.source, "source")?;
    let target = config.path(args.target, "target")?;
    let alignment = config.path(args.alignment, "alignment")?;
    let table_out = config.path(args.table_out, "table_out")?;
    let stats_out = config.path(args.stats_out, "stats_out")?;
    let max_len = config.or(args.max_phrase_len, "max_phrase_len", DEFAULT_MAX_PHRASE_LEN)?;
    if max_len == 0 {
        return Err(CliError::usage("--max-phrase-len must be at least 1"));
    }

    let pairs: Vec<SentencePair> = read_parallel_corpus(&source, &target, &alignment)?.collect::<Result<_, _>>()?;
    let stats = compute_unaligned_stats(&pairs, DEFAULT_SMOOTHING_FLOOR)?;
    let counter = pairs
        .par_iter()
        .fold(
            || PhraseCounter::new(max_len),
            |mut c, p| {
                c.add_pair(p);
                c
            },
        )
        .reduce(
            || PhraseCounter::new(max_len),
            |mut a, b| {
                a.merge(&b);
                a
            },
        );
    let table = estimate_phrase_table(counter.counts())?;
    log::info!("{} sentence pairs, {} phrase rules", pairs.len(), table.len());

    table.write_native_file(&table_out)?;
    let mut out = create(Some(&stats_out))?;
    stats
        .write_tsv(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(&stats_out, e))
}

pub fn score(args: ScoreArgs, config: &Config) -> CliResult<()> {
    let model = load_model(args.model, config)?;
    let scoring = scoring_config(config, args.on_error, model.decoder)?;
    let output = config.get(args.output, "output")?;
    let trace_path = config.get(args.trace, "trace")?;

    // (source, target) pairs plus, for n-best input, the records to echo.
    let (pairs, records) = match config.get(args.nbest, "nbest")? {
        Some(nbest) => {
            let records = read_records(open(&nbest)?, &nbest.display().to_string())?;
            let pairs: Vec<(Vec<String>, Vec<String>)> =
                records.iter().map(|r| (tokenize(&r.src), tokenize(&r.hyp))).collect();
            (pairs, Some(records))
        }
        None => {
            let src_path = config.path(args.source, "source")?;
            let tgt_path = config.path(args.target, "target")?;
            let (src, tgt) = (read_lines(&src_path)?, read_lines(&tgt_path)?);
            same_length(&src, &src_path, &tgt, &tgt_path)?;
            let pairs = src.iter().zip(&tgt).map(|(s, t)| (tokenize(s), tokenize(t))).collect();
            (pairs, None)
        }
    };

    let paths: Vec<softforce::Result<DecodingPath<'_>>> = pairs
        .par_iter()
        .map(|(s, t)| forced_decode(s, t, &model.table, &model.stats, &scoring.decoder))
        .collect();

    let mut out = create(output.as_deref())?;
    let mut trace = trace_path.as_deref().map(|p| create(Some(p))).transpose()?;
    let werr = write_err(output.as_deref());
    let mut skipped = 0;
    for (idx, result) in paths.iter().enumerate() {
        let path = match result {
            Ok(p) => p,
            Err(e) => match scoring.on_error {
                OnScoreError::Abort => {
                    return Err(CliError::new(Kind::Data, format!("candidate {}: {e}", idx + 1)));
                }
                OnScoreError::Skip => {
                    log::warn!("candidate {}: skipped: {e}", idx + 1);
                    skipped += 1;
                    if records.is_none() {
                        writeln!(out, "nan").map_err(&werr)?;
                    }
                    continue;
                }
            },
        };
        match &records {
            Some(recs) => {
                let mut rec = recs[idx].clone();
                rec.forced_logscore = Some(path.total_log_score);
                rec.word_penalty = Some(pairs[idx].1.len() as f64);
                write_record(&mut out, &rec).map_err(&werr)?;
            }
            None => writeln!(out, "{}", path.total_log_score).map_err(&werr)?,
        }
        if let (Some(t), Some(p)) = (trace.as_mut(), trace_path.as_deref()) {
            write_trace(t, idx, path).map_err(|e| CliError::io(p, e))?;
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} candidates skipped");
    }
    out.flush().map_err(&werr)?;
    if let (Some(mut t), Some(p)) = (trace, trace_path.as_deref()) {
        t.flush().map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}

fn parse_inline_weights(text: &str) -> CliResult<RerankWeights> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::usage(format!("--w `{text}`: {e}")))?;
    match values[..] {
        [a, b, c] => Ok(RerankWeights::new(a, b, c)?),
        _ => Err(CliError::usage(format!("--w expects `w1,w2,wWP`, got `{text}`"))),
    }
}

fn read_nbest(config: &Config, nbest: Option<PathBuf>, source: Option<PathBuf>) -> CliResult<Vec<NBestList>> {
    let nbest = config.path(nbest, "nbest")?;
    let ctx = nbest.display().to_string();
    match config.get(source, "source")? {
        Some(src) => {
            let sources: Vec<Vec<String>> = read_lines(&src)?.iter().map(|l| tokenize(l)).collect();
            Ok(read_moses_nbest(open(&nbest)?, &ctx, &sources)?)
        }
        None => Ok(group_records(&read_records(open(&nbest)?, &ctx)?)?),
    }
}

fn score_lists(lists: &mut [NBestList], model: &Model, scoring: &ScoringConfig) -> CliResult<()> {
    let skipped = lists
        .par_iter_mut()
        .map(|l| score_nbest(l, &model.table, &model.stats, scoring))
        .collect::<Result<Vec<usize>, _>>()?;
    let total: usize = skipped.iter().sum();
    if total > 0 {
        log::warn!("{total} candidates skipped");
    }
    Ok(())
}

pub fn rerank(args: RerankArgs, config: &Config) -> CliResult<()> {
    let weights = match &args.w {
        Some(text) => parse_inline_weights(text)?,
        None => match config.get(args.weights, "weights")? {
            Some(p) => read_weights(open(&p)?, &p.display().to_string())?,
            None => return Err(CliError::usage("missing --weights or --w")),
        },
    };
    let model = load_model(args.model, config)?;
    let scoring = scoring_config(config, args.on_error, model.decoder)?;
    let mut lists = read_nbest(config, args.nbest, args.source)?;
    score_lists(&mut lists, &model, &scoring)?;

    let output = config.get(args.output, "output")?;
    let mut out = create(output.as_deref())?;
    let werr = write_err(output.as_deref());
    let mut best = args.best_out.as_deref().map(|p| create(Some(p))).transpose()?;
    for list in &lists {
        let ranked = rank_scored(list, &weights)?;
        for rec in ranked_records(list, &ranked) {
            write_record(&mut out, &rec).map_err(&werr)?;
        }
        if let (Some(b), Some(p)) = (best.as_mut(), args.best_out.as_deref()) {
            let top = ranked.first().map(|r| r.candidate.tokens.join(" ")).unwrap_or_default();
            writeln!(b, "{top}").map_err(|e| CliError::io(p, e))?;
        }
    }
    out.flush().map_err(&werr)?;
    if let (Some(mut b), Some(p)) = (best, args.best_out.as_deref()) {
        b.flush().map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}

/// `start:end:step`, inclusive of both ends.
fn parse_axis(text: &str, flag: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::usage(format!("{flag} expects `start:end:step`, got `{text}`"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if step.is_nan() || step <= 0.0 || end < start || !start.is_finite() || !end.is_finite() {
        return Err(bad());
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    // rounded so that 0.1 * 3 prints as 0.3
    Ok((0..=n).map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9).collect())
}

pub fn tune(args: TuneArgs, config: &Config) -> CliResult<()> {
    let w2 = config.get(args.w2_grid, "w2_grid")?;
    let wwp = config.get(args.wwp_grid, "wwp_grid")?;
    let grid = if w2.is_none() && wwp.is_none() {
        default_grid()
    } else {
        let w2 = parse_axis(w2.as_deref().unwrap_or("0:2:0.1"), "--w2-grid")?;
        let wwp = parse_axis(wwp.as_deref().unwrap_or("-1:1:0.1"), "--wwp-grid")?;
        w2.iter().flat_map(|&a| wwp.iter().map(move |&b| (a, b))).collect()
    };

    let model = load_model(args.model, config)?;
    let scoring = scoring_config(config, args.on_error, model.decoder)?;
    let mut lists = read_nbest(config, args.nbest, None)?;
    let ref_path = config.path(args.references, "references")?;
    let references: Vec<Vec<String>> = read_lines(&ref_path)?.iter().map(|l| tokenize(l)).collect();
    score_lists(&mut lists, &model, &scoring)?;

    let result = tune_weights(&lists, &references, &grid)?;
    log::info!(
        "best dev BLEU {:.4} at w2 = {}, wWP = {}",
        result.bleu,
        result.weights.forced,
        result.weights.word_penalty
    );
    let output = config.get(args.output, "output")?;
    let mut out = create(output.as_deref())?;
    write_weights(&mut out, &result.weights)
        .and_then(|_| out.flush())
        .map_err(write_err(output.as_deref()))
}

pub fn sample(args: SampleArgs, config: &Config) -> CliResult<()> {
    let seed: u64 = config.require(args.seed, "seed")?;
    let src_path = config.path(args.source, "source")?;
    let beam_path = config.path(args.beam_best, "beam_best")?;
    let strategy = match config.or(args.strategy, "strategy", "top2".to_string())?.as_str() {
        "top2" => SamplingStrategy::TopTwo,
        "ancestral" => SamplingStrategy::Ancestral,
        other => return Err(CliError::usage(format!("--strategy must be top2 or ancestral, got `{other}`"))),
    };
    let sampler = SamplerConfig {
        num_samples: config.or(args.num_samples, "num_samples", DEFAULT_NUM_SAMPLES)?,
        max_len: config.or(args.max_len, "max_len", DEFAULT_MAX_LEN)?,
        strategy,
        dedupe: config.switch(args.dedupe, "dedupe")?,
    };
    if sampler.max_len == 0 {
        return Err(CliError::usage("--max-len must be at least 1"));
    }

    let mut scorer: Box<dyn NextTokenScorer> = match (
        config.get(args.scorer_cmd, "scorer_cmd")?,
        config.get(args.bigram_corpus, "bigram_corpus")?,
    ) {
        (Some(cmd), None) => Box::new(ProcessScorer::spawn(&cmd)?),
        (None, Some(corpus)) => {
            let alpha = config.or(args.bigram_alpha, "bigram_alpha", DEFAULT_BIGRAM_ALPHA)?;
            let sentences: Vec<Vec<String>> = read_lines(&corpus)?.iter().map(|l| tokenize(l)).collect();
            Box::new(BigramScorer::from_corpus(&sentences, alpha)?)
        }
        _ => return Err(CliError::usage("give exactly one of --scorer-cmd and --bigram-corpus")),
    };

    let sources = read_lines(&src_path)?;
    let beams = read_lines(&beam_path)?;
    same_length(&sources, &src_path, &beams, &beam_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let output = config.get(args.output, "output")?;
    let mut out = create(output.as_deref())?;
    let werr = write_err(output.as_deref());
    for (id, (src, beam)) in sources.iter().zip(&beams).enumerate() {
        let source = tokenize(src);
        let list = build_candidate_list(&mut *scorer, id, &source, &tokenize(beam), &sampler, &mut rng)?;
        for c in &list.candidates {
            write_record(&mut out, &CandidateRecord::from_candidate(c, &source)).map_err(&werr)?;
        }
    }
    out.flush().map_err(&werr)
}

pub fn decode(args: DecodeArgs, config: &Config) -> CliResult<()> {
    let decoder = decoder_config(config, args.beam_width, args.distortion_limit)?;
    let word_penalty = config.or(args.word_penalty, "word_penalty", 0.0)?;
    let table = load_table(config, args.table, args.table_format)?;
    let src_path = config.path(args.source, "source")?;
    let sources: Vec<Vec<String>> = read_lines(&src_path)?.iter().map(|l| tokenize(l)).collect();

    let results = sources
        .par_iter()
        .map(|s| {
            if s.is_empty() {
                return Ok(None);
            }
            decode_standard(s, &table, &decoder, word_penalty).map(Some)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let output = config.get(args.output, "output")?;
    let trace_path = config.get(args.trace, "trace")?;
    let mut out = create(output.as_deref())?;
    let werr = write_err(output.as_deref());
    let mut trace = trace_path.as_deref().map(|p| create(Some(p))).transpose()?;
    for (idx, result) in results.iter().enumerate() {
        let Some(d) = result else {
            writeln!(out).map_err(&werr)?;
            continue;
        };
        writeln!(out, "{}", d.target.join(" ")).map_err(&werr)?;
        if let (Some(t), Some(p)) = (trace.as_mut(), trace_path.as_deref()) {
            write_trace(t, idx, &d.path).map_err(|e| CliError::io(p, e))?;
        }
    }
    out.flush().map_err(&werr)?;
    if let (Some(mut t), Some(p)) = (trace, trace_path.as_deref()) {
        t.flush().map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}

pub fn bleu(args: BleuArgs) -> CliResult<()> {
    let hyps = read_lines(&args.hyp)?;
    let refs = read_lines(&args.reference)?;
    same_length(&hyps, &args.hyp, &refs, &args.reference)?;
    let tok = |lines: &[String]| lines.iter().map(|l| tokenize(l)).collect::<Vec<_>>();
    let score = corpus_bleu(&tok(&hyps), &tok(&refs), 4)?;
    println!("{score:.4}");
    Ok(())
}
