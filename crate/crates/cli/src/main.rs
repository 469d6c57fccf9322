mod output;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use beatfuse::evaluation::{self, EvalReport, RecordEval};
use beatfuse::signal_io::{self, Record};
use beatfuse::synth::{self, SynthSpec};
use beatfuse::{fusion, quality, run_record, PipelineConfig, PipelineOutcome};

use output::{with_hash_line, write_atomic, write_json};

#[derive(Parser)]
#[command(name = "beatfuse", version, about = "Multimodal heartbeat detection and scoring")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect beats in one or more records.
    Detect(DetectArgs),
    /// Score detected annotations against references.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic record from a TOML spec.
    Synth(SynthArgs),
    /// Export plot-ready traces and beat markers.
    Plotdata(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Wfdb,
    Csv,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// key = value file applied over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    window_sec: Option<f64>,
    #[arg(long)]
    qa_tol_ms: Option<f64>,
    #[arg(long)]
    eval_tol_ms: Option<f64>,
    #[arg(long)]
    default_delay_ms: Option<f64>,
    #[arg(long)]
    min_length_s: Option<f64>,
    /// Skip the pacing-spike check in global quality assessment.
    #[arg(long)]
    no_paced_check: bool,
    /// Maximum-cardinality beat matching instead of greedy nearest.
    #[arg(long)]
    optimal_matching: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = PipelineConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            c.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
        }
        let set = |c: &mut PipelineConfig, key: &str, v: Option<f64>| -> Result<()> {
            if let Some(v) = v {
                c.set(key, &v.to_string())?;
            }
            Ok(())
        };
        set(&mut c, "window_s", self.window_sec)?;
        set(&mut c, "qa_tol_ms", self.qa_tol_ms)?;
        set(&mut c, "eval_tol_ms", self.eval_tol_ms)?;
        set(&mut c, "default_delay_ms", self.default_delay_ms)?;
        set(&mut c, "min_length_s", self.min_length_s)?;
        if self.no_paced_check {
            c.paced_check = false;
        }
        if self.optimal_matching {
            c.optimal_matching = true;
        }
        Ok(c)
    }
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Input format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Sampling rate for CSV input.
    #[arg(long)]
    fs: Option<f64>,
    /// Comma-separated channel labels overriding a CSV header.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
}

#[derive(Args)]
struct DetectArgs {
    /// Record files (.hea or .csv) or directories containing them.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write per-window verdicts, fusion scores and search-back edits.
    #[arg(long)]
    dump_diagnostics: bool,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of detected annotations (`<id>.beats`, with `<id>.meta.json`).
    #[arg(long)]
    det: PathBuf,
    /// Directory of reference annotations.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Extension of reference annotation files.
    #[arg(long, default_value = "truth")]
    ref_ext: String,
    /// Sampling rate used when a detection has no metadata sidecar.
    #[arg(long)]
    fs: Option<f64>,
    /// Where to write report.json and report.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SynthArgs {
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PlotArgs {
    record: PathBuf,
    annotation: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Keep every n-th sample of the traces.
    #[arg(long, default_value_t = 1)]
    decimate: usize,
    #[command(flatten)]
    input: InputArgs,
}

/// Error category deciding the exit code.
enum Failure {
    Usage(anyhow::Error),
    Partial,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Detect(a) => detect(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth_cmd(a).map_err(Failure::Usage),
        Command::Plotdata(a) => plotdata(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Partial) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn infer_format(path: &Path, explicit: Option<Format>) -> Result<Format> {
    if let Some(f) = explicit {
        return Ok(f);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("hea") => Ok(Format::Wfdb),
        Some("csv") => Ok(Format::Csv),
        _ => bail!("cannot infer the format of {}; pass --format", path.display()),
    }
}

fn load(path: &Path, input: &InputArgs) -> Result<Record> {
    match infer_format(path, input.format)? {
        Format::Wfdb => Ok(signal_io::load_wfdb(path)?),
        Format::Csv => {
            let fs = input.fs.ok_or_else(|| anyhow!("CSV input needs --fs"))?;
            let mut record = signal_io::load_csv(path, fs, &input.labels)?;
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                record.id = stem.to_string();
            }
            Ok(record)
        }
    }
}

/// Files named on the command line plus matching files inside named directories, sorted.
fn expand_inputs(inputs: &[PathBuf], format: Option<Format>) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let ext = f.extension().and_then(|e| e.to_str());
                    match format {
                        Some(Format::Wfdb) => ext == Some("hea"),
                        Some(Format::Csv) => ext == Some("csv"),
                        None => matches!(ext, Some("hea") | Some("csv")),
                    }
                })
                .collect();
            found.sort();
            out.extend(found);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            bail!("no such input: {}", p.display());
        }
    }
    if out.is_empty() {
        bail!("no records found");
    }
    Ok(out)
}

#[derive(Serialize)]
struct DetectMeta<'a> {
    record_id: &'a str,
    fs: f64,
    duration_s: f64,
    n_beats: usize,
    config_hash: &'a str,
    config: &'a PipelineConfig,
    windows: WindowSummary,
    global: &'a quality::GlobalVerdict,
    delays: &'a [beatfuse::pipeline::SetDelay],
    searchback_edits: usize,
}

#[derive(Serialize)]
struct WindowSummary {
    accept_ecg: usize,
    fuse_all: usize,
    fuse_no_ecg: usize,
}

#[derive(Serialize)]
struct EditsDump<'a> {
    record_id: &'a str,
    config_hash: &'a str,
    edits: &'a [beatfuse::searchback::SearchbackEdit],
}

fn write_detection(out_dir: &Path, record: &Record, o: &PipelineOutcome, config: &PipelineConfig, diagnostics: bool) -> Result<()> {
    let id = &record.id;
    write_atomic(
        &out_dir.join(format!("{id}.beats")),
        signal_io::format_annotation(&o.annotation.beats).as_bytes(),
    )?;
    let [accept_ecg, fuse_all, fuse_no_ecg] = o.window_counts();
    write_json(
        &out_dir.join(format!("{id}.meta.json")),
        &DetectMeta {
            record_id: id,
            fs: record.fs,
            duration_s: record.duration_s(),
            n_beats: o.annotation.beats.len(),
            config_hash: &o.config_hash,
            config,
            windows: WindowSummary {
                accept_ecg,
                fuse_all,
                fuse_no_ecg,
            },
            global: &o.quality.global,
            delays: &o.delays,
            searchback_edits: o.edits.len(),
        },
    )?;
    if diagnostics {
        write_atomic(
            &out_dir.join(format!("{id}.windows.csv")),
            with_hash_line(&o.config_hash, &quality::windows_csv(&o.quality.windows)).as_bytes(),
        )?;
        write_atomic(
            &out_dir.join(format!("{id}.scores.csv")),
            with_hash_line(&o.config_hash, &fusion::scores_csv(&o.fusion)).as_bytes(),
        )?;
        write_json(
            &out_dir.join(format!("{id}.edits.json")),
            &EditsDump {
                record_id: id,
                config_hash: &o.config_hash,
                edits: &o.edits,
            },
        )?;
    }
    Ok(())
}

fn detect(a: DetectArgs) -> Result<(), Failure> {
    let config = a.config.resolve()?;
    let files = expand_inputs(&a.inputs, a.input.format)?;
    if a.input.fs.is_none() {
        for f in &files {
            if matches!(infer_format(f, a.input.format)?, Format::Csv) {
                return Err(Failure::Usage(anyhow!("CSV input {} needs --fs", f.display())));
            }
        }
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let results: Vec<Result<String>> = files
        .par_iter()
        .map(|path| {
            let record = load(path, &a.input).with_context(|| format!("loading {}", path.display()))?;
            let outcome = run_record(&record, &config).with_context(|| format!("record {}", record.id))?;
            write_detection(&a.out, &record, &outcome, &config, a.dump_diagnostics)?;
            Ok(format!("{}: {} beats", record.id, outcome.annotation.beats.len()))
        })
        .collect();
    let mut failed = 0;
    for r in results {
        match r {
            Ok(line) => log::info!("{line}"),
            Err(e) => {
                failed += 1;
                eprintln!("error: {e:#}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} of {} records failed", files.len());
        return Err(Failure::Partial);
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct MetaLite {
    fs: f64,
    duration_s: f64,
}

#[derive(Serialize)]
struct ReportDump<'a> {
    config_hash: String,
    tol_ms: f64,
    matching: evaluation::Matching,
    min_length_s: f64,
    missing_counterpart: &'a [String],
    excluded_short: &'a [String],
    #[serde(flatten)]
    report: &'a EvalReport,
}

fn ids_with_ext(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = e?.path();
        if p.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), p.clone());
            }
        }
    }
    Ok(out)
}

fn evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    let config = a.config.resolve()?;
    let det = ids_with_ext(&a.det, "beats")?;
    let reference = ids_with_ext(&a.reference, &a.ref_ext)?;
    let mut missing: Vec<String> = det
        .keys()
        .filter(|k| !reference.contains_key(*k))
        .chain(reference.keys().filter(|k| !det.contains_key(*k)))
        .cloned()
        .collect();
    missing.sort();
    for m in &missing {
        log::warn!("record {m} has no counterpart; excluded");
    }
    let common: Vec<&String> = det.keys().filter(|k| reference.contains_key(*k)).collect();
    if common.is_empty() {
        return Err(Failure::Usage(anyhow!("no record appears in both directories")));
    }

    let mut rows = Vec::new();
    let mut short = Vec::new();
    for id in common {
        let meta_path = a.det.join(format!("{id}.meta.json"));
        let meta: Option<MetaLite> = fs::read_to_string(&meta_path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        let fs_hz = match (&meta, a.fs) {
            (Some(m), _) => m.fs,
            (None, Some(f)) => f,
            (None, None) => {
                return Err(Failure::Usage(anyhow!(
                    "{id}: no {} and no --fs given",
                    meta_path.display()
                )))
            }
        };
        if let Some(m) = &meta {
            if m.duration_s < config.min_length_s {
                short.push(id.clone());
                continue;
            }
        }
        let d = signal_io::read_annotation(&det[id], fs_hz).map_err(anyhow::Error::from)?;
        let r = signal_io::read_annotation(&reference[id], fs_hz).map_err(anyhow::Error::from)?;
        let m = evaluation::match_beats(&r.beats, &d.beats, fs_hz, config.eval_tol_ms, config.matching());
        rows.push(RecordEval::new(id.clone(), &m));
    }
    let report = evaluation::aggregate(rows).map_err(|e| Failure::Usage(e.into()))?;
    let table = report.to_table();
    print!("{table}");
    if let Some(out) = &a.out {
        write_json(
            &out.join("report.json"),
            &ReportDump {
                config_hash: config.hash(),
                tol_ms: config.eval_tol_ms,
                matching: config.matching(),
                min_length_s: config.min_length_s,
                missing_counterpart: &missing,
                excluded_short: &short,
                report: &report,
            },
        )?;
        write_atomic(
            &out.join("report.txt"),
            format!("# config_hash={}\n{table}", config.hash()).as_bytes(),
        )?;
    }
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let text = fs::read_to_string(&a.spec).with_context(|| format!("reading {}", a.spec.display()))?;
    let mut spec = SynthSpec::from_toml(&text)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let out = synth::generate(&spec)?;
    fs::create_dir_all(&a.out)?;
    let (csv, truth) = synth::write_outputs(&out, &a.out)?;
    log::info!("wrote {} and {}", csv.display(), truth.display());
    Ok(())
}

fn plotdata(a: PlotArgs) -> Result<(), Failure> {
    let record = load(&a.record, &a.input)?;
    let ann = signal_io::read_annotation(&a.annotation, record.fs).map_err(anyhow::Error::from)?;
    if let Some(&b) = ann.beats.iter().find(|&&b| b >= record.len()) {
        return Err(Failure::Usage(anyhow!(
            "beat {b} lies outside the record ({} samples)",
            record.len()
        )));
    }
    let step = a.decimate.max(1);
    let hash = PipelineConfig::default().hash();
    for (i, ch) in record.channels.iter().enumerate() {
        let mut csv = String::from("time_s,value\n");
        for (k, v) in ch.samples.iter().enumerate().step_by(step) {
            csv.push_str(&format!("{:.6},{v}\n", k as f64 / record.fs));
        }
        let name = format!("{}_{i}_{}.csv", record.id, sanitize(&ch.label));
        write_atomic(&a.out.join(name), with_hash_line(&hash, &csv).as_bytes())?;
    }
    let mut csv = String::from("sample,time_s\n");
    for b in &ann.beats {
        csv.push_str(&format!("{b},{:.6}\n", *b as f64 / record.fs));
    }
    write_atomic(
        &a.out.join(format!("{}_beats.csv", record.id)),
        with_hash_line(&hash, &csv).as_bytes(),
    )?;
    Ok(())
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}
