use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lpmix_core::audit::{audit, AuditReport, DEFAULT_TRIALS};
use lpmix_core::boxgen::{gen_boxes, BoxSizeRange};
use lpmix_core::config::{PartnerMode, PipelineConfig};
use lpmix_core::cutmix::{Label, Policy};
use lpmix_core::dataset::{default_class_names, load_dataset, write_dataset, Dataset, DatasetWriter, LabelRecord, SampleSource};
use lpmix_core::noise::{apply_noise_suite, dataset_mean_iou, NoiseKind, NoiseSpec};
use lpmix_core::pipeline::{Pipeline, Slot};
use lpmix_core::rng::{stream, Purpose};
use lpmix_core::synth::{corner_class_samples, synthetic_samples, SynthConfig};
use lpmix_core::xai::DEFAULT_T_CAM;

mod report;

use report::{Format, Table};

#[derive(Parser)]
#[command(name = "lpmix", version, about = "CutMix with label propagation for multi-label rasters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the batch pipeline over a dataset and write the result.
    Augment(AugmentArgs),
    /// Corrupt reference maps and report the IoU against the clean maps.
    SimulateNoise(NoiseArgs),
    /// Measure the label noise naive CutMix would introduce.
    Audit(AuditArgs),
    /// Draw boxes with the constrained generator.
    GenBoxes(GenBoxesArgs),
    /// Load a dataset and report map/label disagreements.
    Validate(ValidateArgs),
    /// Write a synthetic dataset with maps and masks.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PipelineFlags {
    /// TOML file with pipeline settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Normalized box area range, e.g. 0.3-0.7.
    #[arg(long)]
    box_range: Option<BoxSizeRange>,
    /// Replacement probability.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    t_cam: Option<f32>,
    #[arg(long)]
    t_map: Option<usize>,
    /// Apply t_map to reference-map read-out.
    #[arg(long)]
    smooth_map_readout: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epoch: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum)]
    partner: Option<PartnerArg>,
    #[arg(long)]
    shuffle: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Naive,
    LpMap,
    LpXai,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartnerArg {
    Batch,
    Dataset,
}

impl PipelineFlags {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(p) = self.policy {
            c.policy = match p {
                PolicyArg::Naive => Policy::Naive,
                PolicyArg::LpMap => Policy::LpMap,
                PolicyArg::LpXai => Policy::LpXai,
            };
        }
        if let Some(r) = self.box_range {
            c.box_range = r;
        }
        if let Some(p) = self.p {
            c.p = p;
        }
        if let Some(t) = self.t_cam {
            c.t_cam = t;
        }
        if let Some(t) = self.t_map {
            c.t_map = t;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(e) = self.epoch {
            c.epoch = e;
        }
        if let Some(b) = self.batch_size {
            c.batch_size = b;
        }
        if let Some(p) = self.partner {
            c.partner = match p {
                PartnerArg::Batch => PartnerMode::Batch,
                PartnerArg::Dataset => PartnerMode::Dataset,
            };
        }
        c.smooth_map_readout |= self.smooth_map_readout;
        c.shuffle |= self.shuffle;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct AugmentArgs {
    /// Dataset manifest.
    manifest: PathBuf,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 0 picks one per core.
    #[arg(long, env = "LPMIX_THREADS", default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct NoiseArgs {
    manifest: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    kind: NoiseKind,
    /// Fractions of maps (segments for class_swap) to corrupt; comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    f: Vec<f64>,
    /// Kind-specific magnitudes; comma separated. Defaults per kind.
    #[arg(long, value_delimiter = ',')]
    magnitude: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; one subdirectory per (f, magnitude) setting.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

fn parse_kind(s: &str) -> std::result::Result<NoiseKind, String> {
    s.parse().map_err(|e: lpmix_core::Error| e.to_string())
}

#[derive(Args)]
struct AuditArgs {
    manifest: PathBuf,
    /// Box ranges to audit; repeat for a sweep.
    #[arg(long = "box-range", default_value = "0.3-0.7")]
    box_ranges: Vec<BoxSizeRange>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write records to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args)]
struct GenBoxesArgs {
    #[arg(long)]
    box_range: BoxSizeRange,
    #[arg(long, short)]
    n: usize,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print one line per distinct box with its count instead of every box.
    #[arg(long)]
    histogram: bool,
}

#[derive(Args)]
struct ValidateArgs {
    manifest: PathBuf,
    /// Fail when the map/label check reports anything.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, short, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 120)]
    height: usize,
    #[arg(long, default_value_t = 120)]
    width: usize,
    #[arg(long, default_value_t = 6)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Build the two-class corner fixture with this corner area fraction.
    #[arg(long)]
    corner: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Augment(a) => cmd_augment(a),
        Command::SimulateNoise(a) => cmd_simulate_noise(a),
        Command::Audit(a) => cmd_audit(a),
        Command::GenBoxes(a) => cmd_gen_boxes(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load(manifest: &Path) -> Result<Dataset> {
    let ds = load_dataset(manifest).with_context(|| format!("loading {}", manifest.display()))?;
    for w in &ds.warnings {
        eprintln!("warning: {w}");
    }
    Ok(ds)
}

fn write_jsonl(path: &Path, records: &[serde_json::Value]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn cmd_augment(args: AugmentArgs) -> Result<()> {
    let config = args.pipeline.resolve()?;
    let mut ds = load(&args.manifest)?;
    ds.set_t_cam(config.t_cam)?;
    let pipeline = Pipeline::new(&ds, config, args.workers)?;

    let mut writer = DatasetWriter::create(&args.out, ds.manifest.classes.clone(), ds.geometry())?;
    let mut provenance = Vec::new();
    let (mut total, mut augmented, mut empty) = (0usize, 0usize, 0usize);
    for batch in pipeline.batches() {
        for item in batch?.items {
            total += 1;
            match item.slot {
                Slot::Original(s) => writer.push_sample(&s)?,
                Slot::Augmented(a) => {
                    augmented += 1;
                    empty += a.provenance.empty_label as usize;
                    let label = match &a.label {
                        Label::Hard(y) => LabelRecord {
                            id: item.id.clone(),
                            classes: y.classes(),
                            weights: None,
                        },
                        Label::Soft(y) => LabelRecord {
                            id: item.id.clone(),
                            classes: y.support().classes(),
                            weights: Some(y.weights().to_vec()),
                        },
                    };
                    writer.push(&item.id, &a.image, label, a.map.as_ref(), a.masks.as_ref())?;
                    provenance.push(serde_json::json!({ "id": item.id, "provenance": a.provenance }));
                }
            }
        }
    }
    writer.finish()?;
    write_jsonl(&args.out.join("provenance.jsonl"), &provenance)?;
    fs::write(args.out.join("config.toml"), config.to_toml())?;
    println!("{total} samples, {augmented} augmented, {empty} with empty labels");
    Ok(())
}

fn cmd_simulate_noise(args: NoiseArgs) -> Result<()> {
    let ds = load(&args.manifest)?;
    if !ds.has_maps() {
        bail!("noise simulation needs a reference map for every sample");
    }
    let samples: Vec<_> = (0..ds.len()).map(|i| ds.get(i)).collect::<lpmix_core::Result<_>>()?;
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let maps: Vec<_> = samples.iter().map(|s| s.map.clone().expect("checked")).collect();
    let labels: Vec<_> = samples.iter().map(|s| s.label.clone()).collect();
    let magnitudes: Vec<Option<usize>> = if args.magnitude.is_empty() || !args.kind.has_magnitude() {
        vec![args.kind.default_magnitude()]
    } else {
        args.magnitude.iter().map(|&m| Some(m)).collect()
    };

    let mut table = Table::new(&["kind", "f", "magnitude", "records", "mean_iou"]);
    let mut rows = Vec::new();
    for &f in &args.f {
        for &magnitude in &magnitudes {
            let spec = NoiseSpec::new(args.kind, f, magnitude)?;
            let outcome = apply_noise_suite(&ids, &maps, &labels, ds.num_classes(), &spec, args.seed)?;
            let iou = dataset_mean_iou(&maps, &outcome.maps, ds.num_classes())?;
            let mag = magnitude.map_or("-".to_string(), |m| m.to_string());
            let dir = args.out.join(format!("{}_f{f}_m{mag}", args.kind));
            let mut writer = DatasetWriter::create(&dir, ds.manifest.classes.clone(), ds.geometry())?;
            for (i, s) in samples.iter().enumerate() {
                let label = LabelRecord {
                    id: s.id.clone(),
                    classes: outcome.labels[i].classes(),
                    weights: None,
                };
                writer.push(&s.id, &s.image, label, Some(&outcome.maps[i]), s.masks.as_ref())?;
            }
            writer.finish()?;
            fs::write(dir.join("noise.jsonl"), outcome.manifest_jsonl())?;
            table.row(vec![
                args.kind.to_string(),
                f.to_string(),
                mag,
                outcome.records.len().to_string(),
                format!("{iou:.4}"),
            ]);
            rows.push(serde_json::json!({
                "kind": args.kind,
                "f": f,
                "magnitude": magnitude,
                "records": outcome.records.len(),
                "mean_iou": iou,
                "dir": dir,
            }));
        }
    }
    write_jsonl(&args.out.join("iou_report.jsonl"), &rows)?;
    emit(args.format, &table, &rows)
}

fn emit(format: Format, table: &Table, rows: &[serde_json::Value]) -> Result<()> {
    let mut stdout = io::stdout().lock();
    match format {
        Format::Table => write!(stdout, "{table}")?,
        Format::Records => {
            for r in rows {
                writeln!(stdout, "{r}")?;
            }
        }
    }
    Ok(())
}

fn audit_rows(report: &AuditReport, table: &mut Table, rows: &mut Vec<serde_json::Value>) {
    for r in &report.readings {
        table.row(vec![
            report.box_range.to_string(),
            r.reading.name().to_string(),
            format!("{:.4}", r.subtractive_rate),
            format!("{:.4}", r.additive_rate),
            format!("{:.4}", r.mean_missing),
            format!("{:.4}", r.mean_spurious),
        ]);
        rows.push(serde_json::json!({
            "box_range": report.box_range,
            "trials": report.trials,
            "seed": report.seed,
            "reading": r.reading,
            "subtractive_rate": r.subtractive_rate,
            "additive_rate": r.additive_rate,
            "mean_missing": r.mean_missing,
            "mean_spurious": r.mean_spurious,
        }));
    }
}

fn cmd_audit(args: AuditArgs) -> Result<()> {
    let ds = load(&args.manifest)?;
    let mut table = Table::new(&["box_range", "reading", "subtractive", "additive", "mean_missing", "mean_spurious"]);
    let mut rows = Vec::new();
    for range in &args.box_ranges {
        let report = audit(&ds, range, args.trials, args.seed)?;
        audit_rows(&report, &mut table, &mut rows);
    }
    if let Some(out) = &args.out {
        write_jsonl(out, &rows)?;
    }
    emit(args.format, &table, &rows)
}

fn cmd_gen_boxes(args: GenBoxesArgs) -> Result<()> {
    let mut rng = stream(args.seed, Purpose::Boxes, &[]);
    let boxes = gen_boxes(&args.box_range, args.n, args.height, args.width, &mut rng)?;
    let mut stdout = io::BufWriter::new(io::stdout().lock());
    if args.histogram {
        let mut counts: BTreeMap<(usize, usize, usize, usize), usize> = BTreeMap::new();
        for b in &boxes {
            *counts.entry(b.corners()).or_default() += 1;
        }
        for ((a, b, c, d), n) in counts {
            writeln!(stdout, "{a} {b} {c} {d} {n}")?;
        }
    } else {
        for b in &boxes {
            writeln!(stdout, "{b}")?;
        }
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let ds = load(&args.manifest)?;
    println!(
        "{} samples, {} classes, {} warnings",
        ds.len(),
        ds.num_classes(),
        ds.warnings.len()
    );
    if args.strict && !ds.warnings.is_empty() {
        bail!("{} map/label disagreements", ds.warnings.len());
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let (samples, classes) = match args.corner {
        Some(frac) => (corner_class_samples(args.height, args.width, args.n, frac), 2),
        None => {
            let cfg = SynthConfig {
                height: args.height,
                width: args.width,
                num_classes: args.classes,
                ..SynthConfig::default()
            };
            (synthetic_samples(&cfg, args.n, args.seed, DEFAULT_T_CAM), args.classes)
        }
    };
    let manifest = write_dataset(&args.out, default_class_names(classes), &samples)?;
    println!("wrote {} samples to {}", samples.len(), manifest.display());
    Ok(())
}
