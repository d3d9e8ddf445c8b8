//! Commands behind the `lglstm` binary.
//!
//! Every command takes a [`RunConfig`] and writes its report to the given
//! writer. Failures map to fixed exit codes: 2 for a bad configuration, 3
//! for a missing file and 1 for anything else, including a failed gradient
//! check.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lglstm::checkpoint::{load_checkpoint, save_checkpoint};
use lglstm::dataio::{
    evaluate, read_label_pgm, read_pnm, write_color_ppm, write_label_pgm, write_pnm, LabelMap,
    MetricsReport, SegSample, PALETTE,
};
use lglstm::network::{init_model, predict, Model, ModelConfig};
use lglstm::training::{evaluate_model, grad_check, train_with, OptState, TrainOptions};
use lglstm::{Precision, Scalar};
use serde::{Deserialize, Serialize};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing file: {0}")]
    Missing(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Missing(path.display().to_string())
        } else {
            CliError::Runtime(format!("{}: {e}", path.display()))
        }
    }
}

impl From<lglstm::Error> for CliError {
    fn from(e: lglstm::Error) -> Self {
        match e {
            lglstm::Error::Config(m) => CliError::Config(m),
            lglstm::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => CliError::Missing(io.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        lglstm::Error::Io(e).into()
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Train,
    Eval,
    Infer,
    Gradcheck,
}

/// Runs `cmd` and returns the process exit status.
pub fn run(cmd: Command, cfg: &RunConfig, out: &mut dyn Write) -> CliResult<u8> {
    match cmd {
        Command::Synth => cmd_synth(cfg, out),
        Command::Train => match cfg.model.precision {
            Precision::Wide => cmd_train::<f64>(cfg, out),
            Precision::Narrow => cmd_train::<f32>(cfg, out),
        },
        Command::Eval => match cfg.model.precision {
            Precision::Wide => cmd_eval::<f64>(cfg, out),
            Precision::Narrow => cmd_eval::<f32>(cfg, out),
        },
        Command::Infer => match cfg.model.precision {
            Precision::Wide => cmd_infer::<f64>(cfg, out),
            Precision::Narrow => cmd_infer::<f32>(cfg, out),
        },
        Command::Gradcheck => cmd_gradcheck(cfg, out),
    }
}

/// Index of a dataset written by `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub seed: Option<u64>,
    pub samples: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image: String,
    pub label: String,
}

pub const MANIFEST: &str = "manifest.json";

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Creates the directory an output file goes into.
fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => create_dir(dir),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes samples and a manifest into `dir`.
pub fn write_dataset(dir: &Path, samples: &[SegSample], classes: usize, seed: Option<u64>) -> CliResult<()> {
    create_dir(dir)?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let entry = ManifestEntry {
            image: format!("image_{i:04}.pgm"),
            label: format!("label_{i:04}.pgm"),
        };
        write_pnm(dir.join(&entry.image), &s.image)?;
        write_label_pgm(dir.join(&entry.label), &s.labels)?;
        entries.push(entry);
    }
    let first = &samples[0].labels;
    let manifest = Manifest {
        count: samples.len(),
        height: first.height,
        width: first.width,
        classes,
        seed,
        samples: entries,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&dir.join(MANIFEST), &(text + "\n"))
}

pub fn read_dataset(dir: &Path) -> CliResult<Vec<SegSample>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    manifest
        .samples
        .iter()
        .map(|entry| {
            let image_path = dir.join(&entry.image);
            let label_path = dir.join(&entry.label);
            for p in [&image_path, &label_path] {
                if !p.exists() {
                    return Err(CliError::Missing(p.display().to_string()));
                }
            }
            let image = read_pnm(&image_path)?;
            let labels = read_label_pgm(&label_path)?;
            Ok(SegSample { image, labels })
        })
        .collect()
}

fn load_data(cfg: &RunConfig) -> CliResult<Vec<SegSample>> {
    let samples = match (&cfg.data.dir, &cfg.data.synth) {
        (Some(dir), _) => read_dataset(dir)?,
        (None, Some(p)) => p.generate()?,
        (None, None) => return Err(CliError::Config("data needs `dir` or `synth`".into())),
    };
    for s in &samples {
        s.labels.check_classes(cfg.model.classes)?;
        let channels = s.image.shape()[2];
        if channels != cfg.model.in_channels {
            return Err(CliError::Config(format!(
                "images have {channels} channels, model expects {}",
                cfg.model.in_channels
            )));
        }
    }
    Ok(samples)
}

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    path.as_deref().ok_or_else(|| CliError::Config(format!("`{key}` is required for this command")))
}

fn load_model<T: Scalar>(path: &Path, config: &ModelConfig) -> CliResult<Model<T>> {
    if !path.exists() {
        return Err(CliError::Missing(path.display().to_string()));
    }
    Ok(load_checkpoint(path, config)?)
}

pub fn cmd_synth(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<u8> {
    let params = cfg
        .data
        .synth
        .ok_or_else(|| CliError::Config("`data.synth` is required for synth".into()))?;
    let dir = require(&cfg.data.dir, "data.dir")?;
    let samples = params.generate()?;
    write_dataset(dir, &samples, lglstm::dataio::SYNTH_CLASSES, Some(params.seed))?;
    writeln!(out, "wrote {} samples to {}", samples.len(), dir.display())?;
    Ok(0)
}

pub fn cmd_train<T: Scalar>(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<u8> {
    let data = load_data(cfg)?;
    let mut model: Model<T> = match &cfg.io.checkpoint_in {
        Some(p) => load_model(p, &cfg.model)?,
        None => init_model(&cfg.model, cfg.train.seed)?,
    };
    let mut opt = OptState::new(&model, cfg.train.sgd());
    let options = TrainOptions {
        epochs: cfg.train.epochs,
        seed: cfg.train.seed.wrapping_add(1),
        eval_every: cfg.train.eval_every,
    };
    let mut csv = String::from("step,loss\n");
    let report = train_with(&mut model, &data, &mut opt, &options, |s| {
        csv.push_str(&format!("{},{}\n", s.step, s.loss));
    })?;
    for (epoch, m) in &report.metric_trace {
        writeln!(
            out,
            "epoch {epoch}: pixel_acc {:.4} mean_iou {}",
            m.pixel_acc,
            m.mean_iou.map_or("n/a".into(), |v| format!("{v:.4}"))
        )?;
    }
    if let Some(path) = &cfg.io.loss_csv {
        write_text(path, &csv)?;
    }
    if let Some(path) = &cfg.io.checkpoint_out {
        ensure_parent(path)?;
        save_checkpoint(&model, path)?;
    }
    match report.loss_trace.last() {
        Some(loss) => writeln!(out, "trained {} steps, final loss {loss:.6}", report.loss_trace.len())?,
        None => writeln!(out, "trained 0 steps")?,
    }
    Ok(0)
}

fn print_report(out: &mut dyn Write, report: &MetricsReport) -> CliResult<()> {
    write!(out, "{}", report.to_text())?;
    writeln!(out, "{}", serde_json::to_string(report).expect("report serializes"))?;
    Ok(())
}

#[derive(Serialize)]
struct VariantRow<'a> {
    name: &'a str,
    metrics: &'a MetricsReport,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

pub fn cmd_eval<T: Scalar>(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<u8> {
    let data = load_data(cfg)?;
    if !cfg.io.variants.is_empty() {
        let mut rows = Vec::new();
        for v in &cfg.io.variants {
            let mc = v.model_config(&cfg.model)?;
            let model: Model<T> = load_model(&v.checkpoint, &mc)?;
            rows.push((v.name.as_str(), evaluate_model(&model, &data)?));
        }
        let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(7);
        writeln!(out, "{:<width$}{:>11}{:>11}{:>11}{:>11}", "variant", "pixel_acc", "mean_iou", "fg_iou", "avg_f1")?;
        for (name, m) in &rows {
            writeln!(
                out,
                "{name:<width$}{:>11.4}{:>11}{:>11}{:>11}",
                m.pixel_acc,
                fmt_opt(m.mean_iou),
                fmt_opt(m.fg_iou),
                fmt_opt(m.avg_f1)
            )?;
        }
        let json: Vec<VariantRow> = rows.iter().map(|(name, metrics)| VariantRow { name, metrics }).collect();
        writeln!(out, "{}", serde_json::to_string(&json).expect("rows serialize"))?;
        return Ok(0);
    }
    let report = if let Some(path) = &cfg.io.checkpoint_in {
        let model: Model<T> = load_model(path, &cfg.model)?;
        evaluate_model(&model, &data)?
    } else if let Some(dir) = &cfg.io.pred_dir {
        let preds: Vec<LabelMap> = (0..data.len())
            .map(|i| {
                let p = dir.join(format!("pred_{i:04}.pgm"));
                if !p.exists() {
                    return Err(CliError::Missing(p.display().to_string()));
                }
                Ok(read_label_pgm(&p)?)
            })
            .collect::<CliResult<_>>()?;
        let gts: Vec<LabelMap> = data.iter().map(|s| s.labels.clone()).collect();
        evaluate(&preds, &gts, cfg.model.classes)?
    } else {
        return Err(CliError::Config("eval needs `io.checkpoint_in`, `io.pred_dir` or `io.variants`".into()));
    };
    print_report(out, &report)?;
    Ok(0)
}

pub fn cmd_infer<T: Scalar>(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<u8> {
    if cfg.model.classes > PALETTE.len() {
        return Err(CliError::Config(format!(
            "the color palette has {} entries, model has {} classes",
            PALETTE.len(),
            cfg.model.classes
        )));
    }
    let data = load_data(cfg)?;
    let model: Model<T> = load_model(require(&cfg.io.checkpoint_in, "io.checkpoint_in")?, &cfg.model)?;
    let dir = require(&cfg.io.pred_dir, "io.pred_dir")?;
    create_dir(dir)?;
    for (i, s) in data.iter().enumerate() {
        let pred = predict(&model, &s.image.cast())?;
        write_label_pgm(dir.join(format!("pred_{i:04}.pgm")), &pred)?;
        write_color_ppm(dir.join(format!("pred_{i:04}.ppm")), &pred, &PALETTE)?;
    }
    writeln!(out, "wrote {} predictions to {}", data.len(), dir.display())?;
    Ok(0)
}

/// Finite-difference check of the full model. Always runs in wide precision.
pub fn cmd_gradcheck(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<u8> {
    let model = ModelConfig {
        precision: Precision::Wide,
        ..cfg.model.clone()
    };
    let report = grad_check(&model, &cfg.gradcheck)?;
    writeln!(
        out,
        "max_rel_err {:.3e} over {} coordinates (tol {:.1e})",
        report.max_rel_err,
        report.checks.len(),
        report.tol
    )?;
    if let Some(w) = report.worst() {
        writeln!(
            out,
            "worst {}[{}]: analytic {:.9e} numeric {:.9e}",
            w.name, w.index, w.analytic, w.numeric
        )?;
    }
    let passed = report.passed();
    writeln!(out, "{}", if passed { "PASS" } else { "FAIL" })?;
    Ok(if passed { 0 } else { 1 })
}
