//! `mlrep`: one subcommand per verification workflow step.
//!
//! Exit codes: 0 success or pass, 1 negative verdict or domain error,
//! 2 usage or malformed input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use mlrep::interp::{run, Calibration, ExecConfig};
use mlrep::io::{format_matrix_csv, parse_json, read_matrix_csv};
use mlrep::ir::{infer_shapes, parse_model, serialize_model, validate_model, ModelSpec};
use mlrep::metrics::{parse_bounds, BudgetRule, Detection, GroundTruthBox, MetricKind};
use mlrep::numerics::{AccumulationMode, Representation};
use mlrep::symcheck::{check_models, ExpandOptions, Level, DEFAULT_MAX_TERMS};
use mlrep::verifier::{
    emit_cdf, generate_usecase_with, replicate_verify, suggest_bounds, tfm_verify, Arch, ReplicationStatus,
    ReplicationSummary, ReportConfig, ReportEnvelope, Sampling, TaskData,
};
use mlrep::{Error, Matrix, Result};

const REFERENCE_NOTE: &str = "FP64 strict-ordering run of the model";

fn parse<T: FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Parser)]
#[command(name = "mlrep", version, about = "Verify that a reduced-precision model replication preserves its validated metrics")]
struct Cli {
    /// Worker threads for batch execution; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model description for structural errors and infer its shapes.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run a model on a CSV batch and write the predictions as CSV.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check reference metrics against their bounds and derive the margin.
    TfmVerify(VerifyArgs),
    /// Like tfm-verify, printing only the margin eps_max.
    Margins(VerifyArgs),
    /// Check every per-sample discrepancy against eps_max.
    Replicate(ReplicateArgs),
    /// Compare two models symbolically.
    Symcheck {
        /// The two models to compare.
        #[arg(long = "model", num_args = 1, required = true)]
        models: Vec<PathBuf>,
        #[arg(long, default_value = "sl0", value_parser = parse::<Level>)]
        level: Level,
        /// Treat initializer elements as symbols rather than values.
        #[arg(long)]
        symbolic_initializers: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_TERMS)]
        max_terms: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic use case: model, inputs, ground truth, bounds.
    Gen {
        #[arg(long, value_parser = parse::<Arch>)]
        arch: Arch,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        n: u64,
        #[arg(long, default_value = "uniform", value_parser = parse::<Sampling>)]
        sampling: Sampling,
        /// Relative slack of the suggested bounds.
        #[arg(long, default_value_t = 0.2)]
        slack: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate the empirical distribution of signed errors.
    Cdf {
        /// CSV of errors, flattened row by row.
        #[arg(long, conflicts_with_all = ["pred_a", "pred_b"])]
        errors: Option<PathBuf>,
        #[arg(long, requires = "pred_b")]
        pred_a: Option<PathBuf>,
        #[arg(long, requires = "pred_a")]
        pred_b: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExecArgs {
    #[arg(long, default_value = "fp64", value_parser = parse::<Representation>)]
    repr: Representation,
    #[arg(long, default_value = "naive", value_parser = parse::<AccumulationMode>)]
    acc: AccumulationMode,
    /// Quantization statistics (JSON) for integer representations.
    #[arg(long, conflicts_with = "calibrate")]
    calibration: Option<PathBuf>,
    /// Calibrate integer representations on the dataset itself.
    #[arg(long)]
    calibrate: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    bounds: PathBuf,
    /// Ground truth: targets for regression, class labels with --labels.
    #[arg(long, required_unless_present = "detections")]
    gt: Option<PathBuf>,
    /// Reference predictions (logits for Top-N).
    #[arg(long, conflicts_with = "model")]
    pred: Option<PathBuf>,
    /// Compute the reference predictions by an FP64 run of this model.
    #[arg(long, requires = "dataset")]
    model: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Read --gt as class labels and --pred as logits.
    #[arg(long)]
    labels: bool,
    /// Detections (JSON list) for mAP bounds.
    #[arg(long, requires = "gt_boxes", conflicts_with_all = ["gt", "pred", "model"])]
    detections: Option<PathBuf>,
    #[arg(long, requires = "detections")]
    gt_boxes: Option<PathBuf>,
    #[arg(long, default_value = "conservative", value_parser = parse::<BudgetRule>)]
    rule: BudgetRule,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplicateArgs {
    #[arg(long)]
    eps_max: f64,
    /// Reference predictions CSV.
    #[arg(long, requires = "pred_b", conflicts_with = "model")]
    pred_a: Option<PathBuf>,
    /// Replica predictions CSV.
    #[arg(long, requires = "pred_a")]
    pred_b: Option<PathBuf>,
    #[arg(long, requires = "dataset", required_unless_present = "pred_a")]
    model: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Representation of the reference run.
    #[arg(long, default_value = "fp64", value_parser = parse::<Representation>)]
    repr_ref: Representation,
    #[command(flatten)]
    exec: ExecArgs,
    /// Label recorded in the report for the replication dataset.
    #[arg(long)]
    dataset_id: Option<String>,
    /// Directory for report.json and cdf.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Whether a well-formed request ended positively.
type Verdict = bool;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}

fn dispatch(cmd: Command) -> Result<Verdict> {
    match cmd {
        Command::Validate { model } => validate(&model),
        Command::Infer {
            model,
            dataset,
            exec,
            out,
        } => infer(&model, &dataset, &exec, out.as_deref()),
        Command::TfmVerify(args) => verify(&args, false),
        Command::Margins(args) => verify(&args, true),
        Command::Replicate(args) => replicate(&args),
        Command::Symcheck {
            models,
            level,
            symbolic_initializers,
            max_terms,
            out,
        } => {
            let [a, b] = models.as_slice() else {
                return Err(Error::schema("--model", format!("expected exactly 2 models, got {}", models.len())));
            };
            let opts = ExpandOptions {
                max_terms,
                symbolic_initializers,
            };
            let report = check_models(&load_model(a)?, &load_model(b)?, level, &opts)?;
            emit(out.as_deref(), &to_json(&report))?;
            Ok(report.holds)
        }
        Command::Gen {
            arch,
            seed,
            n,
            sampling,
            slack,
            out,
        } => gen(arch, seed, n as usize, sampling, slack, &out),
        Command::Cdf {
            errors,
            pred_a,
            pred_b,
            out,
        } => {
            let errs = match (errors, pred_a, pred_b) {
                (Some(e), _, _) => read_matrix_csv(e)?.into_vec(),
                (None, Some(a), Some(b)) => {
                    let (a, b) = (read_matrix_csv(a)?, read_matrix_csv(b)?);
                    mlrep::interp::compare_outputs(&a, &b)?.eps.into_vec()
                }
                _ => {
                    return Err(Error::schema("--errors", "give --errors or both --pred-a and --pred-b"));
                }
            };
            emit(out.as_deref(), &emit_cdf(&errs)?.to_csv())?;
            Ok(true)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn load_model(path: &Path) -> Result<ModelSpec> {
    parse_model(&read(path)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn validate(path: &Path) -> Result<Verdict> {
    let model = load_model(path)?;
    let violations = validate_model(&model);
    if !violations.is_empty() {
        for v in &violations {
            println!("{v}");
        }
        return Ok(false);
    }
    match infer_shapes(&model) {
        Ok(_) => {
            println!("OK");
            Ok(true)
        }
        Err(e) => {
            println!("{e}");
            Ok(false)
        }
    }
}

fn exec_config(exec: &ExecArgs, repr: Representation, model: &ModelSpec, batch: &Matrix) -> Result<ExecConfig> {
    let mut cfg = ExecConfig::new(repr).with_accumulation(exec.acc);
    if repr.int_width().is_some() {
        if let Some(p) = &exec.calibration {
            cfg = cfg.with_calibration(parse_json::<Calibration>(&read(p)?)?);
        } else if exec.calibrate {
            cfg = cfg.with_calibration(Calibration::from_run(model, batch)?);
        }
    }
    Ok(cfg)
}

fn infer(model_path: &Path, dataset: &Path, exec: &ExecArgs, out: Option<&Path>) -> Result<Verdict> {
    let model = load_model(model_path)?;
    let batch = read_matrix_csv(dataset)?;
    let cfg = exec_config(exec, exec.repr, &model, &batch)?;
    let preds = run(&model, &cfg, &batch)?;
    emit(out, &format_matrix_csv(&preds.outputs, "y"))?;
    Ok(true)
}

fn reference_predictions(model: &Path, dataset: &Path) -> Result<Matrix> {
    let model = load_model(model)?;
    let batch = read_matrix_csv(dataset)?;
    Ok(run(&model, &ExecConfig::new(Representation::Fp64), &batch)?.outputs)
}

fn labels_of(m: Matrix) -> Result<Vec<usize>> {
    m.into_vec()
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Csv(format!("label {i} is not a class index: {v}")))
            }
        })
        .collect()
}

fn verify(args: &VerifyArgs, margins_only: bool) -> Result<Verdict> {
    let bounds = parse_bounds(&read(&args.bounds)?)?;
    let pred = match (&args.pred, &args.model, &args.dataset) {
        (Some(p), _, _) => Some(read_matrix_csv(p)?),
        (None, Some(m), Some(d)) => Some(reference_predictions(m, d)?),
        _ => None,
    };
    let mut config = ReportConfig {
        model: args.model.as_ref().map(|p| p.display().to_string()),
        repr: Some(Representation::Fp64.to_string()),
        accumulation: Some(AccumulationMode::NaiveLtr.to_string()),
        dataset_id: args.dataset.as_ref().map(|p| p.display().to_string()),
        reference: args.model.as_ref().map(|_| REFERENCE_NOTE.to_string()),
    };
    let verdict = if let (Some(d), Some(g)) = (&args.detections, &args.gt_boxes) {
        let dets: Vec<Detection<f64>> = parse_json(&read(d)?)?;
        let gts: Vec<GroundTruthBox<f64>> = parse_json(&read(g)?)?;
        config.repr = None;
        config.accumulation = None;
        tfm_verify(
            TaskData::Detection {
                detections: &dets,
                ground_truth: &gts,
            },
            &bounds,
            args.rule,
        )?
    } else {
        let pred = pred.ok_or_else(|| Error::schema("--pred", "give --pred, or --model with --dataset"))?;
        let gt = read_matrix_csv(args.gt.as_ref().expect("required by clap"))?;
        if args.labels || bounds.iter().any(|b| b.metric == MetricKind::TopN) {
            let labels = labels_of(gt)?;
            tfm_verify(TaskData::Classification { logits: &pred, labels: &labels }, &bounds, args.rule)?
        } else {
            tfm_verify(
                TaskData::Regression {
                    gt: gt.as_slice(),
                    pred: pred.as_slice(),
                },
                &bounds,
                args.rule,
            )?
        }
    };
    if margins_only {
        let text = match verdict.eps_max {
            Some(e) => format!("{e:?}\n"),
            None => "infeasible\n".to_string(),
        };
        emit(args.out.as_deref(), &text)?;
        return Ok(verdict.pass);
    }
    let pass = verdict.pass;
    let envelope = ReportEnvelope {
        config,
        eps_max: verdict.eps_max,
        tfm_verdict: Some(verdict),
        replication: None,
        cdf_csv_path: None,
    };
    emit(args.out.as_deref(), &envelope.to_json())?;
    Ok(pass)
}

fn replicate(args: &ReplicateArgs) -> Result<Verdict> {
    let (pred1, pred2, config) = match (&args.pred_a, &args.pred_b, &args.model, &args.dataset) {
        (Some(a), Some(b), _, _) => (
            read_matrix_csv(a)?,
            read_matrix_csv(b)?,
            ReportConfig {
                model: None,
                repr: None,
                accumulation: None,
                dataset_id: args.dataset_id.clone(),
                reference: Some(a.display().to_string()),
            },
        ),
        (_, _, Some(m), Some(d)) => {
            let model = load_model(m)?;
            let batch = read_matrix_csv(d)?;
            let ref_cfg = exec_config(&args.exec, args.repr_ref, &model, &batch)?;
            let tim_cfg = exec_config(&args.exec, args.exec.repr, &model, &batch)?;
            let reference = if args.repr_ref == Representation::Fp64 {
                REFERENCE_NOTE.to_string()
            } else {
                format!("{} run of the model", args.repr_ref)
            };
            (
                run(&model, &ref_cfg, &batch)?.outputs,
                run(&model, &tim_cfg, &batch)?.outputs,
                ReportConfig {
                    model: Some(m.display().to_string()),
                    repr: Some(args.exec.repr.to_string()),
                    accumulation: Some(args.exec.acc.to_string()),
                    dataset_id: Some(args.dataset_id.clone().unwrap_or_else(|| d.display().to_string())),
                    reference: Some(reference),
                },
            )
        }
        _ => return Err(Error::schema("--pred-a", "give --pred-a and --pred-b, or --model with --dataset")),
    };
    let report = replicate_verify(&pred1, &pred2, args.eps_max)?;
    let mut envelope = ReportEnvelope {
        config,
        tfm_verdict: None,
        eps_max: Some(args.eps_max),
        replication: Some(ReplicationSummary::from(&report)),
        cdf_csv_path: None,
    };
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("cdf.csv"), report.cdf.to_csv())?;
            envelope.cdf_csv_path = Some("cdf.csv".to_string());
            fs::write(dir.join("report.json"), envelope.to_json())?;
            println!(
                "{} max|eps|={:?} eps_max={:?} violations={}",
                report.status, report.max_abs_eps, report.eps_max, report.violations
            );
        }
        None => print!("{}", envelope.to_json()),
    }
    Ok(report.status == ReplicationStatus::Replicated)
}

fn gen(arch: Arch, seed: u64, n: usize, sampling: Sampling, slack: f64, out: &Path) -> Result<Verdict> {
    let uc = generate_usecase_with(arch, seed, n, sampling)?;
    let bounds = suggest_bounds(uc.ground_truth.as_slice(), uc.reference.as_slice(), slack)?;
    fs::create_dir_all(out)?;
    let files = [
        ("model.json", serialize_model(&uc.model) + "\n"),
        ("inputs.csv", format_matrix_csv(&uc.inputs, "x")),
        ("ground_truth.csv", format_matrix_csv(&uc.ground_truth, "y")),
        ("reference.csv", format_matrix_csv(&uc.reference, "y")),
        ("bounds.json", to_json(&bounds)),
    ];
    for (name, text) in &files {
        fs::write(out.join(name), text)?;
        println!("{}", out.join(name).display());
    }
    Ok(true)
}
