mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::{CliError, CliResult};

const FORMATS: &str = "\
File formats:
  corpus text       one sentence per line, tokens separated by spaces
  alignment         per line `j-i` pairs (0-based source-target), e.g. `0-0 1-2`
  phrase table      `# source\\ttarget\\tdirect_prob\\tinverse_prob` header, then one TSV rule per line
  moses table       `src ||| tgt ||| p(f|e) lex(f|e) p(e|f) lex(e|f) [||| ...]` (--table-format moses)
  unaligned stats   `#corpus_size\\tN`, then `src\\ttoken\\tcount` and `tgt\\ttoken\\tcount` rows
  n-best jsonl      {\"id\": 0, \"src\": \"...\", \"hyp\": \"...\", \"nmt_logprob\": -1.5} per line
  moses n-best      `id ||| hyp ||| features ||| score` (source sentences from --source)
  weights           `w1\\tw2\\twWP` on the first non-comment line
  trace             `# n\\tscore` header, `kind\\tsource\\ttarget\\tlogscore` per rule, blank line after
  config            `key = value` per line; keys are long flag names; flags override the file

Exit status: 0 ok, 2 usage, 3 io, 4 format, 5 data, 6 scorer, 70 internal.
Errors are printed to stderr as one line: `softforce: <kind>: <message>`.";

#[derive(Parser, Debug)]
#[command(name = "softforce", version, about = "Phrase-table extraction, soft forced decoding and n-best reranking", after_help = FORMATS)]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for sentence-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract a phrase table and unaligned-word statistics from an aligned corpus.
    Extract(ExtractArgs),
    /// Forced-decoding log score of each target given its source.
    Score(ScoreArgs),
    /// Rerank an n-best list with weights (w1, w2, wWP).
    Rerank(RerankArgs),
    /// Grid-search reranking weights on a dev n-best list.
    Tune(TuneArgs),
    /// Build sampled candidate lists from a next-token scorer.
    Sample(SampleArgs),
    /// Translate with the phrase table alone (standard stack decoding).
    Decode(DecodeArgs),
    /// Corpus BLEU-4 of a hypothesis file against a reference file.
    Bleu(BleuArgs),
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Phrase table.
    #[arg(long, value_name = "FILE")]
    table: Option<PathBuf>,
    /// Phrase table format: native or moses.
    #[arg(long, value_name = "FORMAT")]
    table_format: Option<String>,
    /// Unaligned-word statistics written by `extract`.
    #[arg(long, value_name = "FILE")]
    stats: Option<PathBuf>,
    /// Floor on unaligned counts for insertion/deletion scores [default: 0.5].
    #[arg(long)]
    smoothing_floor: Option<f64>,
    /// Hypotheses kept per stack [default: 100].
    #[arg(long)]
    beam_width: Option<usize>,
    /// Maximum source jump between consecutive phrases [default: unlimited].
    #[arg(long)]
    distortion_limit: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Source side of the corpus.
    #[arg(long, value_name = "FILE")]
    source: Option<PathBuf>,
    /// Target side of the corpus.
    #[arg(long, value_name = "FILE")]
    target: Option<PathBuf>,
    /// Word alignments, one line per sentence pair.
    #[arg(long, value_name = "FILE")]
    alignment: Option<PathBuf>,
    /// Where to write the phrase table.
    #[arg(long, value_name = "FILE")]
    table_out: Option<PathBuf>,
    /// Where to write the unaligned-word statistics.
    #[arg(long, value_name = "FILE")]
    stats_out: Option<PathBuf>,
    /// Longest phrase on either side [default: 7].
    #[arg(long)]
    max_phrase_len: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Source sentences (with --target).
    #[arg(long, value_name = "FILE")]
    source: Option<PathBuf>,
    /// Target sentences, line-parallel to --source. Output: one score per line.
    #[arg(long, value_name = "FILE")]
    target: Option<PathBuf>,
    /// JSON-lines n-best input instead of --source/--target. Output: records with features added.
    #[arg(long, value_name = "FILE")]
    nbest: Option<PathBuf>,
    /// Output file [default: stdout].
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Also write the rule breakdown of every best path to this file.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// abort or skip candidates that fail to score [default: abort].
    #[arg(long)]
    on_error: Option<String>,
}

#[derive(Args, Debug)]
pub struct RerankArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// N-best list (JSON lines, or Moses format with --source).
    #[arg(long, value_name = "FILE")]
    nbest: Option<PathBuf>,
    /// Source sentences; switches --nbest to the Moses n-best format.
    #[arg(long, value_name = "FILE")]
    source: Option<PathBuf>,
    /// Weights file (`w1<TAB>w2<TAB>wWP`).
    #[arg(long, value_name = "FILE")]
    weights: Option<PathBuf>,
    /// Inline weights `w1,w2,wWP`; overrides --weights.
    #[arg(long, value_name = "W1,W2,WWP", allow_hyphen_values = true)]
    w: Option<String>,
    /// Reranked JSON lines [default: stdout].
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Also write the top candidate of each list, one per line.
    #[arg(long, value_name = "FILE")]
    best_out: Option<PathBuf>,
    /// abort or skip candidates that fail to score [default: abort].
    #[arg(long)]
    on_error: Option<String>,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Dev n-best list (JSON lines).
    #[arg(long, value_name = "FILE")]
    nbest: Option<PathBuf>,
    /// Reference translations, one per n-best list in order of first appearance.
    #[arg(long, value_name = "FILE")]
    references: Option<PathBuf>,
    /// Where to write the weights [default: stdout].
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
    /// w2 grid as `start:end:step` [default: 0:2:0.1].
    #[arg(long, value_name = "START:END:STEP")]
    w2_grid: Option<String>,
    /// Word-penalty grid as `start:end:step` [default: -1:1:0.1].
    #[arg(long, value_name = "START:END:STEP", allow_hyphen_values = true)]
    wwp_grid: Option<String>,
    /// abort or skip candidates that fail to score [default: abort].
    #[arg(long)]
    on_error: Option<String>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Source sentences.
    #[arg(long, value_name = "FILE")]
    source: Option<PathBuf>,
    /// Beam-search best output for each source line.
    #[arg(long, value_name = "FILE")]
    beam_best: Option<PathBuf>,
    /// Master seed; required so that runs are reproducible.
    #[arg(long)]
    seed: Option<u64>,
    /// Shell command speaking the scorer line protocol:
    /// request `src ||| prefix`, response `token prob token prob ...`.
    #[arg(long, value_name = "CMD")]
    scorer_cmd: Option<String>,
    /// Train a toy bigram scorer on this target-language text instead.
    #[arg(long, value_name = "FILE")]
    bigram_corpus: Option<PathBuf>,
    /// Add-alpha smoothing for the bigram scorer [default: 0.1].
    #[arg(long)]
    bigram_alpha: Option<f64>,
    /// Samples per sentence [default: 1000].
    #[arg(long)]
    num_samples: Option<usize>,
    /// Truncate samples at this many tokens [default: 200].
    #[arg(long)]
    max_len: Option<usize>,
    /// top2 or ancestral [default: top2].
    #[arg(long)]
    strategy: Option<String>,
    /// Drop repeated candidates.
    #[arg(long)]
    dedupe: bool,
    /// N-best JSON lines [default: stdout].
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    /// Phrase table.
    #[arg(long, value_name = "FILE")]
    table: Option<PathBuf>,
    /// Phrase table format: native or moses.
    #[arg(long, value_name = "FORMAT")]
    table_format: Option<String>,
    /// Source sentences.
    #[arg(long, value_name = "FILE")]
    source: Option<PathBuf>,
    /// Hypotheses kept per stack [default: 100].
    #[arg(long)]
    beam_width: Option<usize>,
    /// Maximum source jump between consecutive phrases [default: unlimited].
    #[arg(long)]
    distortion_limit: Option<usize>,
    /// Score added per generated target word [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    word_penalty: Option<f64>,
    /// Translations, one per line [default: stdout].
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Also write the rule breakdown of every translation to this file.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BleuArgs {
    /// Hypotheses, one tokenized sentence per line.
    #[arg(long, value_name = "FILE")]
    hyp: PathBuf,
    /// References, line-parallel to --hyp.
    #[arg(long = "ref", value_name = "FILE")]
    reference: PathBuf,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("--threads: {e}")))?;
    }
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Extract(a) => commands::extract(a, &config),
        Command::Score(a) => commands::score(a, &config),
        Command::Rerank(a) => commands::rerank(a, &config),
        Command::Tune(a) => commands::tune(a, &config),
        Command::Sample(a) => commands::sample(a, &config),
        Command::Decode(a) => commands::decode(a, &config),
        Command::Bleu(a) => commands::bleu(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("bad arguments").trim_start_matches("error: ");
            let err = CliError::usage(first.to_string());
            eprintln!("{}", err.line());
            std::process::exit(err.kind.exit_code());
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = run(cli) {
        eprintln!("{}", e.line());
        std::process::exit(e.kind.exit_code());
    }
}
