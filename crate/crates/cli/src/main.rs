use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use surfkit::dtm::{brute_force_dtm, signed_dtm, BinaryMask};
use surfkit::gradcheck::{grad_check_loss, DEFAULT_PROBES};
use surfkit::losses::{
    dataset_class_weights, loss, BoundaryKind, ClassWeights, DtmStack, LossInputs, LossKind,
    RegionKind,
};
use surfkit::metrics::evaluate;
use surfkit::schedule::{Schedule, ScheduleKind};
use surfkit::svf::{read_volume, write_volume, Dtype, Payload, SvfVolume};
use surfkit::toy::{
    optimize, run_experiment, ClassMetrics, ExperimentConfig, TrainConfig, DEFAULT_SEED,
};
use surfkit::volume::{one_hot, LabelVolume, ProbVolume};

#[derive(Parser)]
#[command(
    name = "surfkit",
    version,
    about = "Segmentation losses, distance maps and surface metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the tool version as JSON.
    Version,
    /// Signed distance map of every channel of a mask volume.
    Dtm(DtmArgs),
    /// Evaluate a loss on a prediction and a ground truth.
    Loss(LossArgs),
    /// Dataset class weights from voxel counts.
    Weights(WeightsArgs),
    /// Finite-difference check of a loss gradient on a random instance.
    GradCheck(GradCheckArgs),
    /// Dice, HD, HD95 and ASD per class.
    Metrics(MetricsArgs),
    /// Region/boundary blend weight over epochs.
    Schedule(ScheduleArgs),
    /// Train coarse logits on a synthetic scene.
    TrainToy(TrainArgs),
    /// Run a grid of toy trainings and compare the losses.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct DtmArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Use the pairwise oracle instead of the separable transform.
    #[arg(long)]
    brute_force: bool,
    #[arg(long, value_enum, default_value_t = FieldDtype::F32)]
    dtype: FieldDtype,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldDtype {
    F32,
    F64,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum KindArg {
    Dice,
    DiceCe,
    Gdl,
    Hl,
    Bl,
    Gsl,
    Composite,
}

#[derive(Args)]
struct KindArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Region weight of a composite loss, in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Region term of a composite loss.
    #[arg(long, default_value = "dice-ce")]
    region: RegionKind,
    /// Boundary term of a composite loss.
    #[arg(long, default_value = "gsl")]
    boundary: BoundaryKind,
}

#[derive(Args)]
struct LossArgs {
    #[command(flatten)]
    kind: KindArgs,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    dtm: Option<PathBuf>,
    /// JSON class weights: an array, or the object printed by `weights`.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    counts: Vec<u64>,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
}

#[derive(Args)]
struct GradCheckArgs {
    #[command(flatten)]
    kind: KindArgs,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Edge length of the random cubic instance.
    #[arg(long, default_value_t = 4)]
    size: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = DEFAULT_PROBES)]
    probes: usize,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Classes to report; defaults to every foreground class present.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<u32>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Linear,
    Step,
    Cosine,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, value_enum)]
    kind: ScheduleArg,
    #[arg(long)]
    epochs: usize,
    #[arg(long)]
    step_length: Option<usize>,
    /// Print every `(t, alpha)` pair instead of the schedule description.
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<surfkit::Error> for Failure {
    fn from(e: surfkit::Error) -> Self {
        match e {
            surfkit::Error::NonFiniteGradient { .. } | surfkit::Error::DegenerateGroundTruth(_) => {
                Failure::Numeric(e.to_string())
            }
            _ => Failure::Data(e.to_string()),
        }
    }
}

type Outcome = Result<serde_json::Value, Failure>;

fn to_value(v: impl Serialize) -> serde_json::Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(v).expect("reports serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn loss_kind(args: &KindArgs) -> Result<LossKind, Failure> {
    Ok(match args.kind {
        KindArg::Dice => LossKind::Region(RegionKind::Dice),
        KindArg::DiceCe => LossKind::Region(RegionKind::DiceCe),
        KindArg::Gdl => LossKind::Region(RegionKind::Gdl),
        KindArg::Hl => LossKind::Boundary(BoundaryKind::Hl),
        KindArg::Bl => LossKind::Boundary(BoundaryKind::Bl),
        KindArg::Gsl => LossKind::Boundary(BoundaryKind::Gsl),
        KindArg::Composite => {
            let alpha = args.alpha.ok_or_else(|| {
                Failure::Usage("missing required flag --alpha for --kind composite".into())
            })?;
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Failure::Usage(format!(
                    "--alpha must lie in [0, 1], got {alpha}"
                )));
            }
            LossKind::Composite {
                region: args.region,
                boundary: args.boundary,
                alpha,
            }
        }
    })
}

/// Ground truth with `classes` channels: either a matching channel stack or a
/// single-channel u8 label volume to one-hot encode.
fn load_truth(vol: &SvfVolume, classes: usize) -> Result<ProbVolume, Failure> {
    if vol.channels() == classes {
        return Ok(vol.to_prob()?);
    }
    if vol.channels() == 1 && vol.dtype() == Dtype::U8 {
        return Ok(one_hot(&vol.to_labels(classes)?)?);
    }
    Err(Failure::Data(format!(
        "truth has {} channel(s), prediction has {classes}",
        vol.channels()
    )))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WeightsFile {
    List(Vec<f64>),
    Object {
        weights: Vec<f64>,
        #[serde(default = "one")]
        p: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn cmd_loss(args: &LossArgs) -> Outcome {
    let kind = loss_kind(&args.kind)?;
    if kind.needs_dtm() && args.dtm.is_none() {
        return Err(Failure::Usage(format!(
            "missing required flag --dtm for --kind {}",
            args.kind
                .kind
                .to_possible_value()
                .expect("not skipped")
                .get_name()
        )));
    }
    let pred = read_volume(&args.pred)?.to_prob()?;
    let truth = load_truth(&read_volume(&args.truth)?, pred.num_classes())?;
    let dtm = match &args.dtm {
        Some(path) => Some(DtmStack::from_fields(&read_volume(path)?.to_fields()?)?),
        None => None,
    };
    let weights = match &args.weights {
        Some(path) => Some(match read_json::<WeightsFile>(path)? {
            WeightsFile::List(w) => ClassWeights::new(w, 1.0)?,
            WeightsFile::Object { weights, p } => ClassWeights::new(weights, p)?,
        }),
        None => None,
    };
    let mut inputs = LossInputs::new(&pred, &truth)?;
    if let Some(d) = &dtm {
        inputs = inputs.with_dtm(d)?;
    }
    if let Some(w) = &weights {
        inputs = inputs.with_weights(w)?;
    }
    Ok(to_value(loss(kind, &inputs)?))
}

fn cmd_dtm(args: &DtmArgs) -> Outcome {
    let vol = read_volume(&args.input)?;
    let masks = vol.to_masks()?;
    let dtms: Vec<_> = masks
        .iter()
        .map(|m| {
            if args.brute_force {
                brute_force_dtm(m)
            } else {
                signed_dtm(m)
            }
        })
        .collect();
    let dtype = match args.dtype {
        FieldDtype::F32 => Dtype::F32,
        FieldDtype::F64 => Dtype::F64,
    };
    let fields: Vec<_> = dtms.iter().map(|d| d.field().clone()).collect();
    write_volume(&args.out, &SvfVolume::from_fields(&fields, dtype)?)?;
    Ok(json!({
        "out": args.out,
        "shape": vol.grid().shape(),
        "spacing": vol.grid().spacing(),
        "channels": fields.len(),
        "dtype": dtype,
        "method": if args.brute_force { "brute-force" } else { "separable" },
        "source_mask_hashes": dtms.iter().map(|d| d.source_mask_hash()).collect::<Vec<_>>(),
    }))
}

fn cmd_weights(args: &WeightsArgs) -> Outcome {
    Ok(to_value(dataset_class_weights(&args.counts, args.p)?))
}

fn cmd_grad_check(args: &GradCheckArgs) -> Outcome {
    let kind = loss_kind(&args.kind)?;
    let report = grad_check_loss(kind, args.seed, [args.size; 3], args.classes, args.probes)?;
    if !report.stats.passed {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("reports serialize")
        );
        return Err(Failure::Numeric(format!(
            "gradient check failed: max relative error {}",
            report.stats.max_rel_error
        )));
    }
    Ok(to_value(report))
}

/// Labels from a single-channel u8 volume, or the argmax of a channel stack.
fn load_labels(vol: &SvfVolume) -> Result<LabelVolume, Failure> {
    if let (1, Payload::U8(bytes)) = (vol.channels(), vol.payload()) {
        let classes = bytes.iter().copied().max().unwrap_or(0) as usize + 1;
        return Ok(vol.to_labels(classes.max(2))?);
    }
    if vol.channels() == 1 {
        return Err(Failure::Data(
            "a single float channel is ambiguous; store labels as u8".into(),
        ));
    }
    Ok(vol.to_prob()?.argmax())
}

fn cmd_metrics(args: &MetricsArgs) -> Outcome {
    let pred = load_labels(&read_volume(&args.pred)?)?;
    let truth = load_labels(&read_volume(&args.truth)?)?;
    if pred.grid().shape() != truth.grid().shape() {
        return Err(Failure::Data(format!(
            "prediction shape {:?} differs from truth shape {:?}",
            pred.grid().shape(),
            truth.grid().shape()
        )));
    }
    if pred.grid().spacing() != truth.grid().spacing() {
        warn!("prediction and truth spacing differ; using the truth's");
    }
    let classes = args.classes.clone().unwrap_or_else(|| {
        let top = pred.num_classes().max(truth.num_classes()) as u32;
        (1..top).collect()
    });
    let grid = *truth.grid();
    let mask = |labels: &LabelVolume, k: u32| {
        BinaryMask::new(grid, labels.labels().iter().map(|&l| l == k).collect())
    };
    let mut out = Vec::with_capacity(classes.len());
    for k in classes {
        let report = evaluate(&mask(&pred, k)?, &mask(&truth, k)?)?;
        out.push(ClassMetrics { class: k, report });
    }
    Ok(to_value(out))
}

fn cmd_schedule(args: &ScheduleArgs) -> Outcome {
    let kind = match (args.kind, args.step_length) {
        (ScheduleArg::Linear, _) => ScheduleKind::Linear,
        (ScheduleArg::Cosine, _) => ScheduleKind::Cosine,
        (ScheduleArg::Step, Some(step_length)) => ScheduleKind::Step { step_length },
        (ScheduleArg::Step, None) => {
            return Err(Failure::Usage(
                "missing required flag --step-length for --kind step".into(),
            ))
        }
    };
    let schedule = Schedule::new(kind, args.epochs).map_err(|e| Failure::Usage(e.to_string()))?;
    if args.table {
        Ok(to_value(schedule.table()))
    } else {
        Ok(to_value(schedule))
    }
}

fn cmd_train(args: &TrainArgs) -> Outcome {
    let mut config: TrainConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let report = optimize(&config)?;
    info!(
        "trained {} epochs in {:.2?}",
        report.epochs.len(),
        report.wall_time
    );
    match &args.out {
        Some(path) => {
            write_json(path, &report)?;
            let (dice, hd95, asd) = report.summary();
            Ok(json!({
                "out": path,
                "final_loss": report.final_loss,
                "dice": dice,
                "hd95": hd95,
                "asd": asd,
            }))
        }
        None => Ok(to_value(report)),
    }
}

fn cmd_experiment(args: &ExperimentArgs) -> Outcome {
    let config: ExperimentConfig = read_json(&args.config)?;
    let table = run_experiment(&config)?;
    for row in table.rows.iter().filter(|r| r.error.is_some()) {
        warn!(
            "{} seed {}: {}",
            row.variant,
            row.seed,
            row.error.as_deref().unwrap_or_default()
        );
    }
    write_json(&args.out, &table)?;
    Ok(json!({
        "out": args.out,
        "summaries": table.summaries,
        "surface_vs_region": table.surface_vs_region,
    }))
}

fn dispatch(command: &Command) -> Outcome {
    match command {
        Command::Version => Ok(json!({
            "name": "surfkit",
            "version": env!("CARGO_PKG_VERSION"),
        })),
        Command::Dtm(a) => cmd_dtm(a),
        Command::Loss(a) => cmd_loss(a),
        Command::Weights(a) => cmd_weights(a),
        Command::GradCheck(a) => cmd_grad_check(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Schedule(a) => cmd_schedule(a),
        Command::TrainToy(a) => cmd_train(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(&cli.command) {
        Ok(value) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&value).expect("reports serialize")
            );
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
