//! Command implementations behind the `vodtrack` binary.
//!
//! Every command writes its human-readable summary to the supplied writer so
//! it can be captured in tests. Exit codes are stable:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | file system error |
//! | 2 | invalid command line |
//! | 3 | malformed input record |
//! | 4 | invalid configuration or inconsistent input |
//! | 5 | verification suite failure |

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use vodtrack::config::{load_scenario, DetectorPreset, RunConfig};
use vodtrack::evaluation::{EvalSequence, GroundTruthFrame, MatchedCorpus, MetricsReport};
use vodtrack::experiment::{
    run_tracker, sweep, validate_schedule, SequenceStreams, SweepResult, ThresholdMode,
};
use vodtrack::io::{
    read_grouped, write_record, write_records, DetectionRecord, FrameRecord, GroundTruthRecord, Sequence,
    TrackRecord,
};
use vodtrack::linattn::{factored_linear_attention, run_attention_suite, AttnCheckConfig};
use vodtrack::schedule::mean_mac;
use vodtrack::synth::{generate, SynthScenario};
use vodtrack::{Error, FramePacket};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    SuiteFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Validation(_) => 4,
            CliError::SuiteFailed(_) => 5,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => CliError::Io(e.to_string()),
            Error::Parse { .. } => CliError::Parse(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "vodtrack", version, about = "Multi-resolution detection tracking and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track a detection file and write the confirmed track stream.
    Track(TrackArgs),
    /// Score detections or tracks against ground truth.
    Eval(EvalArgs),
    /// Compare frame-by-frame detection with tracking across schedules.
    Sweep(SweepArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Verify the linear attention kernels.
    AttnCheck(AttnArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Detector preset used when the configuration names none.
    #[arg(long, default_value = "nanodet")]
    pub preset: String,
    /// Emit confirmed tracks that were not matched on a frame.
    #[arg(long)]
    pub emit_coasted: bool,
}

impl RunArgs {
    fn load(&self) -> CliResult<RunConfig> {
        let preset: DetectorPreset = self.preset.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p, preset)?,
            None => RunConfig::from_preset(preset),
        };
        if self.emit_coasted {
            cfg.tracker.emit_coasted = true;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Detection file (JSON lines).
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Low-resolution frames per full-resolution frame.
    #[arg(long = "P")]
    pub p: Option<u32>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Detection or track file.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    /// `f1max` or `fixed:<value>`.
    #[arg(long, default_value = "f1max")]
    pub threshold: String,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Detections inferred at full resolution on every frame.
    #[arg(long)]
    pub full: PathBuf,
    /// Detections inferred at low resolution on every frame.
    #[arg(long)]
    pub low: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    /// Comma-separated schedule values.
    #[arg(long = "P", value_delimiter = ',', default_value = "0,1,2,3,4,5,6")]
    pub p: Vec<u32>,
    /// Baseline threshold, chosen on the full-resolution stream.
    #[arg(long, default_value = "f1max")]
    pub threshold: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML scenario; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the stream a detector following this schedule would emit.
    #[arg(long = "P")]
    pub p: Option<u32>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttnArgs {
    #[arg(long = "n", value_delimiter = ',', default_value = "8,16,32,64")]
    pub n_values: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Track(a) => cmd_track(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
        Command::AttnCheck(a) => cmd_attn_check(&a, out),
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn in_file(path: &Path) -> impl Fn(Error) -> CliError + '_ {
    move |e| {
        let c = CliError::from(e);
        let msg = format!("{}: {c}", path.display());
        match c {
            CliError::Io(_) => CliError::Io(msg),
            CliError::Parse(_) => CliError::Parse(msg),
            _ => CliError::Validation(msg),
        }
    }
}

fn read_file<R: for<'de> Deserialize<'de> + FrameRecord>(path: &Path) -> CliResult<Vec<Sequence<(usize, R)>>> {
    read_grouped(open(path)?).map_err(in_file(path))
}

/// Detection packets per sequence, in inference coordinates.
fn load_detections(path: &Path, epsilon: f64) -> CliResult<Vec<(String, Vec<FramePacket>)>> {
    read_file::<DetectionRecord>(path)?
        .into_iter()
        .map(|s| {
            let packets = s
                .records
                .iter()
                .map(|(line, r)| r.to_packet(epsilon, *line))
                .collect::<vodtrack::Result<Vec<_>>>()
                .map_err(in_file(path))?;
            Ok((s.id, packets))
        })
        .collect()
}

fn load_ground_truth(path: &Path) -> CliResult<BTreeMap<String, Vec<GroundTruthFrame>>> {
    read_file::<GroundTruthRecord>(path)?
        .into_iter()
        .map(|s| {
            let frames = s
                .records
                .iter()
                .map(|(line, r)| r.to_frame(*line))
                .collect::<vodtrack::Result<Vec<_>>>()
                .map_err(in_file(path))?;
            Ok((s.id, frames))
        })
        .collect()
}

/// Inserts empty frames where a sequence skips frame indices.
fn fill_gaps(packets: Vec<FramePacket>, res_at: impl Fn(u64) -> vodtrack::Resolution) -> Vec<FramePacket> {
    let mut out: Vec<FramePacket> = Vec::with_capacity(packets.len());
    for p in packets {
        if let Some(last) = out.last() {
            let native = last.native_resolution;
            for t in last.frame_index + 1..p.frame_index {
                out.push(FramePacket {
                    frame_index: t,
                    inference_resolution: res_at(t),
                    native_resolution: native,
                    detections: Vec::new(),
                });
            }
        }
        out.push(p);
    }
    out
}

fn percent(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

pub fn cmd_track(a: &TrackArgs, out: &mut dyn Write) -> CliResult {
    let mut cfg = a.run.load()?;
    if let Some(p) = a.p {
        cfg.schedule.p = p;
    }
    let seqs = load_detections(&a.detections, cfg.rescore.epsilon)?;
    let mut w = create(&a.out)?;
    let (mut frames, mut created, mut removed, mut confirmed) = (0u64, 0u64, 0u64, 0u64);
    for (id, packets) in seqs {
        validate_schedule(&id, &packets, &cfg.schedule)?;
        let stream = fill_gaps(packets, |t| cfg.schedule.resolution_at(t))
            .iter()
            .map(FramePacket::to_native)
            .collect::<vodtrack::Result<Vec<_>>>()?;
        let run = run_tracker(&stream, &cfg)?;
        for (t, outputs) in &run.outputs {
            write_record(&mut w, &TrackRecord::from_outputs(&id, *t, outputs))?;
        }
        frames += run.stats.frames;
        created += run.stats.created;
        removed += run.stats.removed;
        confirmed += run.stats.confirmed;
    }
    w.flush()?;
    let mac = mean_mac(&cfg.schedule)?;
    writeln!(out, "frames processed: {frames}")?;
    writeln!(out, "tracks created: {created}, confirmed: {confirmed}, removed: {removed}")?;
    writeln!(
        out,
        "schedule P={}: mean {:.1} MMAC per frame ({} below full resolution)",
        cfg.schedule.p,
        mac.mean_mac,
        percent(mac.reduction)
    )?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PredictionRecord {
    Tracks(TrackRecord),
    Detections(DetectionRecord),
}

impl FrameRecord for PredictionRecord {
    fn sequence_id(&self) -> &str {
        match self {
            Self::Tracks(r) => r.sequence_id(),
            Self::Detections(r) => r.sequence_id(),
        }
    }

    fn frame(&self) -> u64 {
        match self {
            Self::Tracks(r) => r.frame,
            Self::Detections(r) => r.frame,
        }
    }
}

fn load_eval_sequences(
    predictions: &Path,
    ground_truth: &Path,
    epsilon: f64,
) -> CliResult<Vec<EvalSequence>> {
    let preds = read_file::<PredictionRecord>(predictions)?;
    let mut gt = load_ground_truth(ground_truth)?;
    let missing: Vec<&str> = preds
        .iter()
        .filter(|s| !gt.contains_key(&s.id))
        .map(|s| s.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Validation(format!(
            "sequences missing from {}: {}",
            ground_truth.display(),
            missing.join(", ")
        )));
    }
    let mut seqs = Vec::new();
    for s in preds {
        let frames = gt.remove(&s.id).unwrap_or_default();
        let mut es = EvalSequence::new(&s.id).with_ground_truth(&frames);
        for (line, r) in &s.records {
            let dets = match r {
                PredictionRecord::Tracks(t) => t.detections(*line),
                PredictionRecord::Detections(d) => d.to_packet(epsilon, *line).and_then(|p| p.to_native()).map(|p| p.detections),
            }
            .map_err(in_file(predictions))?;
            es.predictions.insert(r.frame(), dets);
        }
        seqs.push(es);
    }
    for (id, frames) in gt {
        seqs.push(EvalSequence::new(id).with_ground_truth(&frames));
    }
    Ok(seqs)
}

fn write_report(out: &mut dyn Write, r: &MetricsReport) -> std::io::Result<()> {
    writeln!(out, "{:>6} {:>7} {:>9} {:>7} {:>7} {:>7} {:>7} {:>7}", "class", "AP", "precision", "recall", "F1", "TP", "FP", "FN")?;
    for (c, m) in &r.per_class {
        writeln!(
            out,
            "{:>6} {:>7.4} {:>9.4} {:>7.4} {:>7.4} {:>7} {:>7} {:>7}",
            c, m.ap, m.precision, m.recall, m.f1, m.tp, m.fp, m.fn_
        )?;
    }
    writeln!(out, "threshold: {:.4}", r.threshold_used)?;
    writeln!(out, "mAP: {:.4}", r.map)?;
    writeln!(out, "precision: {:.4}", r.mean_precision)?;
    writeln!(out, "recall: {:.4}", r.mean_recall)?;
    writeln!(out, "F1: {:.4}", r.mean_f1)
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> CliResult {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, v).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn parse_threshold(s: &str) -> CliResult<ThresholdMode> {
    s.parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> CliResult {
    let mode = parse_threshold(&a.threshold)?;
    let epsilon = vodtrack::RescoreConfig::default().epsilon;
    let seqs = load_eval_sequences(&a.predictions, &a.ground_truth, epsilon)?;
    let corpus = MatchedCorpus::build(&seqs)?;
    let report = corpus.report_at(mode.resolve(&corpus, epsilon)?);
    write_report(out, &report)?;
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    Ok(())
}

fn check_resolution(path: &Path, id: &str, packets: &[FramePacket], want: vodtrack::Resolution) -> CliResult {
    match packets.iter().find(|p| p.inference_resolution != want) {
        Some(p) => Err(CliError::Validation(format!(
            "{}: sequence {id:?} frame {} was inferred at {}, expected {want}",
            path.display(),
            p.frame_index,
            p.inference_resolution
        ))),
        None => Ok(()),
    }
}

pub fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> CliResult {
    let mode = parse_threshold(&a.threshold)?;
    let cfg = a.run.load()?;
    let eps = cfg.rescore.epsilon;
    let full = load_detections(&a.full, eps)?;
    let mut low: BTreeMap<String, Vec<FramePacket>> = load_detections(&a.low, eps)?.into_iter().collect();
    let mut gt = load_ground_truth(&a.ground_truth)?;
    let mut streams = Vec::with_capacity(full.len());
    for (id, f) in full {
        check_resolution(&a.full, &id, &f, cfg.schedule.full_res)?;
        let l = low.remove(&id).ok_or_else(|| {
            CliError::Validation(format!("sequence {id:?} is missing from {}", a.low.display()))
        })?;
        check_resolution(&a.low, &id, &l, cfg.schedule.low_res)?;
        let g = gt.remove(&id).ok_or_else(|| {
            CliError::Validation(format!("sequence {id:?} is missing from {}", a.ground_truth.display()))
        })?;
        streams.push(SequenceStreams {
            id,
            full: fill_gaps(f, |_| cfg.schedule.full_res),
            low: fill_gaps(l, |_| cfg.schedule.low_res),
            ground_truth: g,
        });
    }
    if let Some(id) = low.keys().next() {
        return Err(CliError::Validation(format!(
            "sequence {id:?} is missing from {}",
            a.full.display()
        )));
    }
    let result = sweep(&streams, &a.p, &cfg, mode)?;
    write_sweep(out, &result)?;
    if let Some(p) = &a.out {
        write_json(p, &result)?;
    }
    Ok(())
}

fn write_sweep(out: &mut dyn Write, r: &SweepResult) -> std::io::Result<()> {
    writeln!(out, "baseline threshold: {:.4}", r.baseline_threshold)?;
    writeln!(
        out,
        "{:>3} {:>8} {:>7} | {:>26} {:>6} | {:>26} {:>6}",
        "P", "MMAC", "saving", "frame-by-frame mAP/P/R", "F1", "tracked mAP/P/R", "F1"
    )?;
    for row in &r.rows {
        let (b, t) = (&row.baseline, &row.tracked);
        writeln!(
            out,
            "{:>3} {:>8.1} {:>7} | {:.4} {:.4} {:.4}  {:>13.4} | {:.4} {:.4} {:.4}  {:>13.4}",
            row.p,
            row.mean_mac,
            percent(row.reduction),
            b.map,
            b.mean_precision,
            b.mean_recall,
            b.mean_f1,
            t.map,
            t.mean_precision,
            t.mean_recall,
            t.mean_f1
        )?;
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> CliResult {
    let mut sc = match &a.config {
        Some(p) => load_scenario(p).map_err(in_file(p))?,
        None => SynthScenario::default(),
    };
    if let Some(seed) = a.seed {
        sc.seed = seed;
    }
    let seqs = generate(&sc)?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Io(format!("{}: {e}", a.out.display())))?;

    let mut gt = Vec::new();
    let (mut full, mut low, mut sched) = (Vec::new(), Vec::new(), Vec::new());
    let (mut objects, mut dropped_low) = (0usize, 0usize);
    for s in &seqs {
        let e = &s.emulator;
        for g in &s.ground_truth {
            gt.push(GroundTruthRecord::from_frame(&s.id, g));
            let t = g.frame_index;
            let f = e.detect(t, sc.native_resolution);
            let (l, st) = e.detect_with_stats(t, sc.low_resolution);
            objects += st.objects;
            dropped_low += st.dropped;
            if let Some(p) = a.p {
                let chosen = if vodtrack::schedule::is_full_res(t, p) { &f } else { &l };
                sched.push(DetectionRecord::from_packet(&s.id, chosen));
            }
            full.push(DetectionRecord::from_packet(&s.id, &f));
            low.push(DetectionRecord::from_packet(&s.id, &l));
        }
    }
    write_records(create(&a.out.join("ground_truth.jsonl"))?, &gt)?;
    write_records(create(&a.out.join("detections_full.jsonl"))?, &full)?;
    write_records(create(&a.out.join("detections_low.jsonl"))?, &low)?;
    if let Some(p) = a.p {
        write_records(create(&a.out.join(format!("detections_p{p}.jsonl")))?, &sched)?;
    }
    writeln!(
        out,
        "{} sequences x {} frames, {} objects, seed {}",
        seqs.len(),
        sc.frame_count,
        sc.n_objects,
        sc.seed
    )?;
    writeln!(
        out,
        "low-resolution drop rate: {}",
        percent(if objects == 0 { 0.0 } else { dropped_low as f64 / objects as f64 })
    )?;
    writeln!(out, "wrote {}", a.out.display())?;
    Ok(())
}

pub fn cmd_attn_check(a: &AttnArgs, out: &mut dyn Write) -> CliResult {
    let cfg = AttnCheckConfig {
        n_values: a.n_values.clone(),
        d: a.d,
        trials: a.trials,
        tolerance: a.tolerance,
        seed: a.seed,
    };
    let report = run_attention_suite(&cfg, &factored_linear_attention::<f64>);
    for c in &report.checks {
        writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::SuiteFailed("attention checks failed".into()))
    }
}
