//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! `cargo test -p mlrep-cli --test acceptance`

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use mlrep::interp::{run, Calibration, ExecConfig};
use mlrep::ir::{GraphSpec, ModelSpec, NodeSpec, OpType, TensorSpec, AttrValue};
use mlrep::metrics::{
    budget_with, build_lut_and_invert, default_eps_grid, derive_margin, iou_min, metric_value, top1_worst_case,
    BoundDirection, BoxPair, BudgetRule, MetricBound, MetricContext, MetricKind,
};
use mlrep::numerics::{accumulate, round_to, AccumulationMode, Representation};
use mlrep::symcheck::{check_models, ExpandOptions, Level};
use mlrep::verifier::{
    generate_usecase, replicate_verify, suggest_bounds, tfm_verify, Arch, ReplicationStatus, TaskData,
};
use mlrep::{Matrix, Rational};
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and budgets, pinned.
const C1_TOL: f64 = 0.002;
const C1_LIMIT: Duration = Duration::from_secs(1);
const C2_TRIALS: usize = 10_000;
const C2_ALLOW: f64 = 1e-12;
const C2_LIMIT: Duration = Duration::from_secs(30);
const C3_SAMPLES: usize = 2000;
const C3_FP16_REL: (f64, f64) = (1e-4, 1e-2);
const C3_FP32_REL: f64 = 1e-5;
const C3_LIMIT: Duration = Duration::from_secs(120);
const C4_PAIRS: usize = 10_000;
const C4_GRID: usize = 41;
const C4_CORNER_TOL: f64 = 1e-9;
const C4_GRID_ALLOW: f64 = 1e-12;
const C4_EXAMPLE_TOL: f64 = 1e-6;
const C4_LIMIT: Duration = Duration::from_secs(30);
const C5_SETS: usize = 100;
const C5_SAMPLES: usize = 200;
const C5_CLASSES: usize = 10;
const C5_LIMIT: Duration = Duration::from_secs(30);
const C6_PAIRS: usize = 100;
const C6_LIMIT: Duration = Duration::from_secs(10);
const C7_SCENARIOS: usize = 100;
const C7_LIMIT: Duration = Duration::from_secs(120);
const C8_INPUTS: usize = 100_000;
const C8_VECTORS: usize = 10_000;
const C8_KAHAN_SHARE: f64 = 0.99;
/// FNV-1a of every CLI output in the determinism run, recorded on x86_64 Linux.
const C9_DIGEST: u64 = 0x4d17_e3be_3b28_4089;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 9] = [
        ("1 margin tables", c1_margin_tables, Some(C1_LIMIT)),
        ("2 budget soundness", c2_budget_soundness, Some(C2_LIMIT)),
        ("3 precision ladder", c3_precision_ladder, Some(C3_LIMIT)),
        ("4 iou_min oracle", c4_iou, Some(C4_LIMIT)),
        ("5 top-1 LUT", c5_top1_lut, Some(C5_LIMIT)),
        ("6 symbolic cross-check", c6_symcheck, Some(C6_LIMIT)),
        ("7 end-to-end preservation", c7_end_to_end, Some(C7_LIMIT)),
        ("8 numerics conformance", c8_numerics, None),
        ("9 determinism", c9_determinism, None),
    ];
    let mut failed = 0;
    for (name, f, limit) in criteria {
        let start = Instant::now();
        let mut o = f();
        let took = start.elapsed();
        if let Some(limit) = limit {
            if took > limit {
                o.pass = false;
                o.detail.push_str(&format!("; runtime over {limit:?}"));
            }
        }
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {name} ({:.2?}): {}",
            if o.pass { "PASS" } else { "FAIL" },
            took,
            o.detail
        );
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn trunc3(v: f64) -> f64 {
    ((v + 1e-9) * 1000.0).floor() / 1000.0
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Printed table row: metric, M1, R, printed margin, and an optional range
/// of acceptable 3-decimal renderings.
type Row = (MetricKind, f64, f64, f64, Option<(f64, f64)>);

fn c1_margin_tables() -> Outcome {
    use MetricKind::*;
    let lstm: [Row; 8] = [
        (Linf, 0.55, 1.0, 0.44, None),
        (Mae, 0.053, 0.07, 0.017, Some((0.017, 0.017))),
        (Mse, 0.005, 0.006, 0.014, None),
        (Mape, 0.079, 0.09, 0.009, None),
        (R2, 0.841, 0.83, 0.008, None),
        (Evs, 0.849, 0.83, 0.013, None),
        (Var, 0.005, 0.01, 0.03, None),
        (Bias, -0.017, 0.03, 0.012, None),
    ];
    let linear: [Row; 6] = [
        (Mae, 0.033, 0.06, 0.026, Some((0.026, 0.027))),
        (Mse, 0.002, 0.01, 0.088, None),
        (R2, 0.821, 0.8, 0.015, None),
        (Evs, 0.821, 0.8, 0.015, None),
        (Var, 0.002, 0.01, 0.088, None),
        (Bias, -0.0003, 0.03, 0.029, Some((0.029, 0.029))),
    ];
    // Variance of the ground truth recovered from MSE / (1 - R²).
    let tables: [(&str, &[Row], MetricContext<f64>); 2] = [
        ("lstm", &lstm, MetricContext::published(0.017, 0.005 / (1.0 - 0.841), 0.079)),
        ("linear", &linear, MetricContext::published(0.0003, 0.002 / (1.0 - 0.821), 0.0)),
    ];
    let mut misses = Vec::new();
    let mut rows = 0;
    for (name, table, ctx) in tables {
        for &(metric, m1, r, printed, precise) in table {
            rows += 1;
            let eps = match derive_margin(&MetricBound::new(metric, r), m1, &ctx) {
                Ok(res) => res.eps,
                Err(e) => {
                    misses.push(format!("{name} {metric}: {e}"));
                    continue;
                }
            };
            let mut ok = (eps - printed).abs() <= C1_TOL + 1e-12;
            if let Some((lo, hi)) = precise {
                let within = |v: f64| v >= lo - 1e-12 && v <= hi + 1e-12;
                ok &= within(trunc3(eps)) || within(round3(eps));
            }
            if !ok {
                misses.push(format!("{name} {metric}: {eps:.4} vs printed {printed}"));
            }
        }
    }
    let detail = if misses.is_empty() {
        format!("{rows} rows within ±{C1_TOL}")
    } else {
        format!("{}/{rows} rows off: {}", misses.len(), misses.join(", "))
    };
    outcome(misses.is_empty(), detail)
}

fn c2_budget_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = [0usize; 8];
    let mut published = [0usize; 8];
    let mut published_mape_rel = 0usize;
    for trial in 0..C2_TRIALS {
        let n = rng.random_range(2..120);
        let gt: Vec<f64> = (0..n)
            .map(|_| {
                let m = rng.random_range(0.2..5.0);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        let spread = rng.random_range(0.01..0.5);
        let offset = rng.random_range(-0.2..0.2);
        let pred: Vec<f64> = gt.iter().map(|g| g + offset + rng.random_range(-spread..spread)).collect();
        let eps = rng.random_range(0.0..0.3);
        let d: Vec<f64> = gt.iter().zip(&pred).map(|(g, p)| p - g).collect();
        let mean_d = d.iter().sum::<f64>() / n as f64;
        let sign = |v: f64| if v >= 0.0 { 1.0 } else { -1.0 };
        let u: Vec<f64> = (0..n)
            .map(|i| match trial % 7 {
                0 => rng.random_range(-eps..=eps),
                1 => eps,
                2 => -eps,
                3 => sign(d[i]) * eps,
                4 => -sign(d[i]) * eps,
                5 => sign(d[i] - mean_d) * eps,
                _ => if i % 2 == 0 { eps } else { -eps },
            })
            .collect();
        let pred2: Vec<f64> = pred.iter().zip(&u).map(|(p, e)| p + e).collect();
        let Ok(ctx) = MetricContext::from_data(&gt, &pred) else {
            continue;
        };
        for (k, metric) in MetricKind::REGRESSION.into_iter().enumerate() {
            let m1 = metric_value(metric, &gt, &pred).unwrap();
            let m2 = metric_value(metric, &gt, &pred2).unwrap();
            let allow = C2_ALLOW * m1.abs().max(m2.abs()).max(1.0);
            let g = budget_with(BudgetRule::Conservative, metric, eps, &ctx).unwrap();
            if (m2 - m1).abs() > g + allow {
                violations[k] += 1;
            }
            let gp = budget_with(BudgetRule::Published, metric, eps, &ctx).unwrap();
            if (m2 - m1).abs() > gp + allow {
                published[k] += 1;
            }
        }
        // Published MAPE under perturbations relative to |pred1_i|.
        let rel: Vec<f64> = pred.iter().zip(&u).map(|(p, e)| p + e * p.abs()).collect();
        let m1 = metric_value(MetricKind::Mape, &gt, &pred).unwrap();
        let m2 = metric_value(MetricKind::Mape, &gt, &rel).unwrap();
        let gp = budget_with(BudgetRule::Published, MetricKind::Mape, eps, &ctx).unwrap();
        if (m2 - m1).abs() > gp + C2_ALLOW * m1.max(1.0) {
            published_mape_rel += 1;
        }
    }
    let total: usize = violations.iter().sum();
    let names: Vec<String> = MetricKind::REGRESSION
        .iter()
        .zip(&published)
        .map(|(m, c)| format!("{m}={c}"))
        .collect();
    outcome(
        total == 0 && published_mape_rel == 0,
        format!(
            "{C2_TRIALS} trials x 8 metrics, conservative violations {total}, relative MAPE violations {published_mape_rel}; \
             published-rule violations under absolute perturbation (informational): {}",
            names.join(" ")
        ),
    )
}

fn configured(r: Representation, cal: &Calibration) -> ExecConfig {
    let cfg = ExecConfig::new(r);
    if r.is_float() {
        cfg
    } else {
        cfg.with_calibration(cal.clone())
    }
}

fn c3_precision_ladder() -> Outcome {
    use Representation::*;
    let mut notes = Vec::new();
    let mut pass = true;
    for (arch, seed) in [(Arch::LinearLike, 7), (Arch::LstmLike, 1)] {
        let uc = generate_usecase(arch, seed, C3_SAMPLES).unwrap();
        let cal = Calibration::from_run(&uc.model, &uc.inputs).unwrap();
        let scale = uc.reference.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = |r: Representation| {
            let out = run(&uc.model, &configured(r, &cal), &uc.inputs).unwrap().outputs;
            out.as_slice()
                .iter()
                .zip(uc.reference.as_slice())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let e: Vec<(Representation, f64)> =
            [Fp32, Fp16, Bf16, Int16, Int14, Int12, Int10].into_iter().map(|r| (r, err(r))).collect();
        let get = |r| e.iter().find(|(x, _)| *x == r).unwrap().1;
        let ok = get(Int10) > get(Int12)
            && get(Int12) > get(Int14)
            && get(Int14) > get(Int16)
            && get(Bf16) > get(Fp16)
            && get(Fp16) > get(Fp32);
        let fp16 = get(Fp16) / scale;
        let fp32 = get(Fp32) / scale;
        let ok = ok && fp16 >= C3_FP16_REL.0 && fp16 <= C3_FP16_REL.1 && fp32 <= C3_FP32_REL;
        pass &= ok;
        let list: Vec<String> = e.iter().map(|(r, v)| format!("{r}={v:.1e}")).collect();
        notes.push(format!(
            "{} [{}] rel fp16={fp16:.1e} fp32={fp32:.1e}{}",
            arch.name(),
            list.join(" "),
            if ok { "" } else { " ORDER/RANGE MISS" }
        ));
    }
    outcome(pass, notes.join("; "))
}

fn c4_iou() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut grid_miss = 0;
    let mut corner_miss = 0;
    for _ in 0..C4_PAIRS {
        let x: f64 = rng.random_range(1.0..3.0);
        let y: f64 = rng.random_range(1.0..3.0);
        let off = |rng: &mut ChaCha8Rng| {
            let m: f64 = rng.random_range(0.02..0.45);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        };
        let (dx, dy) = (off(&mut rng), off(&mut rng));
        let eps = rng.random_range(0.0..0.95) * dx.abs().min(dy.abs());
        let bp = BoxPair {
            x,
            y,
            x1: x + dx,
            y1: y + dy,
            eps,
        };
        let r = iou_min(&bp).unwrap();
        // Sign corner, then plain IoU evaluated from scratch.
        let cx = bp.x1 + eps * dx.signum();
        let cy = bp.y1 + eps * dy.signum();
        let inter = x.min(cx) * y.min(cy);
        let oracle = inter / (x * y + cx * cy - inter);
        if (r.iou - oracle).abs() > C4_CORNER_TOL {
            corner_miss += 1;
        }
        let step = 2.0 * eps / (C4_GRID - 1) as f64;
        'grid: for i in 0..C4_GRID {
            for j in 0..C4_GRID {
                let x2 = bp.x1 - eps + step * i as f64;
                let y2 = bp.y1 - eps + step * j as f64;
                let inter = x.min(x2) * y.min(y2);
                let v = inter / (x * y + x2 * y2 - inter);
                if r.iou > v + C4_GRID_ALLOW {
                    grid_miss += 1;
                    break 'grid;
                }
            }
        }
    }
    let bp = |x1: f64, y1: f64, eps: f64| BoxPair {
        x: 1.0,
        y: 1.0,
        x1,
        y1,
        eps,
    };
    let examples = [
        (bp(0.9, 0.9, 0.0), 0.81),
        (bp(0.9, 0.9, 0.05), 0.7225),
        (bp(1.2, 0.8, 0.1), 1.0 / (1.3 + 1.0 / 0.7 - 1.0)),
    ];
    let example_miss = examples
        .iter()
        .filter(|(b, want)| (iou_min(b).unwrap().iou - want).abs() > C4_EXAMPLE_TOL)
        .count();
    let mixed = iou_min(&examples[2].0).unwrap().iou;
    outcome(
        grid_miss == 0 && corner_miss == 0 && example_miss == 0,
        format!(
            "{C4_PAIRS} pairs: grid misses {grid_miss}, corner misses {corner_miss}; examples off {example_miss} \
             (mixed case {mixed:.10}, decimal 0.578514 differs by {:.1e})",
            (mixed - 0.578514).abs()
        ),
    )
}

/// Adversarial search: every competitor, true and competitor logits each
/// moved by -eps, 0 or +eps. A tie loses the sample.
fn survives_grid(row: &[f64], label: usize, eps: f64) -> bool {
    let steps = [-eps, 0.0, eps];
    row.iter().enumerate().filter(|&(j, _)| j != label).all(|(_, &c)| {
        steps
            .iter()
            .all(|&dt| steps.iter().all(|&dc| row[label] + dt > c + dc))
    })
}

fn c5_top1_lut() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = default_eps_grid::<f64>();
    let mut below = 0;
    let mut grid_disagree = 0;
    let mut checks = 0;
    for set in 0..C5_SETS {
        // Dyadic logits and eps keep the grid sums exact, so ties are real ties.
        let data: Vec<f64> = (0..C5_SAMPLES * C5_CLASSES).map(|_| rng.random_range(-40i32..=40) as f64 / 8.0).collect();
        let labels: Vec<usize> = (0..C5_SAMPLES)
            .map(|i| {
                let row = &data[i * C5_CLASSES..(i + 1) * C5_CLASSES];
                // Mostly the argmax so accuracy is high, as for a trained model.
                if rng.random_bool(0.85) {
                    (0..C5_CLASSES).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap()
                } else {
                    rng.random_range(0..C5_CLASSES)
                }
            })
            .collect();
        let logits = Matrix::new(C5_SAMPLES, C5_CLASSES, data).unwrap();
        let score = |e: f64| top1_worst_case(&logits, &labels, e);
        let hi = score(grid[0]).unwrap();
        let lo = score(*grid.last().unwrap()).unwrap();
        let target = lo + (hi - lo) * rng.random_range(0.0..=1.0);
        match build_lut_and_invert(score, &grid, target) {
            Ok(eps) if score(eps).unwrap() >= target => {}
            _ => below += 1,
        }
        for k in 0..=16 {
            let eps = k as f64 / 16.0 + if set % 2 == 0 { 0.0 } else { 1.0 / 64.0 };
            let hits = logits
                .iter_rows()
                .zip(&labels)
                .filter(|(row, &l)| survives_grid(row, l, eps))
                .count();
            checks += 1;
            if hits as f64 / C5_SAMPLES as f64 != score(eps).unwrap() {
                grid_disagree += 1;
            }
        }
    }
    outcome(
        below == 0 && grid_disagree == 0,
        format!("{C5_SETS} sets: below target {below}, margin rule vs 9-point grid disagreements {grid_disagree}/{checks}"),
    )
}

fn affine(n: usize, w: &[f64], b: &[f64]) -> ModelSpec {
    let n = n as i64;
    ModelSpec::new(GraphSpec {
        name: "xw_b".into(),
        inputs: vec![TensorSpec::input("x", vec![1, n])],
        outputs: vec!["y".into()],
        initializers: vec![
            TensorSpec::constant("W", vec![n, n], w.to_vec()),
            TensorSpec::constant("b", vec![n], b.to_vec()),
        ],
        nodes: vec![NodeSpec::new("g", OpType::Gemm, &["x", "W", "b"], &["y"])],
    })
}

fn transposed(n: usize, w: &[f64], b: &[f64]) -> ModelSpec {
    let n = n as i64;
    ModelSpec::new(GraphSpec {
        name: "b_wtx".into(),
        inputs: vec![TensorSpec::input("x", vec![1, n])],
        outputs: vec!["y".into()],
        initializers: vec![
            TensorSpec::constant("W", vec![n, n], w.to_vec()),
            TensorSpec::constant("b", vec![1, n], b.to_vec()),
        ],
        nodes: vec![
            NodeSpec::new("xt", OpType::Reshape, &["x"], &["xt"]).with_attr("shape", AttrValue::Ints(vec![n, 1])),
            NodeSpec::new("p", OpType::Gemm, &["W", "xt"], &["p"]).with_attr("transA", AttrValue::Int(1)),
            NodeSpec::new("pt", OpType::Reshape, &["p"], &["pt"]).with_attr("shape", AttrValue::Ints(vec![1, n])),
            NodeSpec::new("s", OpType::Add, &["b", "pt"], &["y"]),
        ],
    })
}

fn exact(v: f64) -> Rational {
    BigRational::from_float(v).unwrap()
}

/// `y_j = Σ_i x_i W[i, j] + b_j` in exact arithmetic.
fn affine_exact(n: usize, w: &[f64], b: &[f64], x: &[Rational], j: usize) -> Rational {
    (0..n).fold(exact(b[j]), |acc, i| acc + &x[i] * exact(w[i * n + j]))
}

fn c6_symcheck() -> Outcome {
    let opts = ExpandOptions::default();
    let mut fails = Vec::new();
    for n in [2usize, 8] {
        let w: Vec<f64> = (0..n * n).map(|i| (i as f64 - 7.0) / 4.0).collect();
        let b: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 1.0).collect();
        let (a, t) = (affine(n, &w, &b), transposed(n, &w, &b));
        if !check_models(&a, &t, Level::Sl0, &opts).unwrap().holds {
            fails.push(format!("{n}x{n} not equivalent at SL0"));
        }
        if check_models(&a, &t, Level::Sl2, &opts).unwrap().holds {
            fails.push(format!("{n}x{n} equal at SL2"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut distinguished = 0;
    for _ in 0..C6_PAIRS {
        let n = rng.random_range(1..=6);
        let dy = |rng: &mut ChaCha8Rng| rng.random_range(-64i32..=64) as f64 / 16.0;
        let w: Vec<f64> = (0..n * n).map(|_| dy(&mut rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| dy(&mut rng)).collect();
        let (mut w2, mut b2) = (w.clone(), b.clone());
        let delta = rng.random_range(1i32..=32) as f64 / 16.0 * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        if rng.random_bool(0.7) {
            w2[rng.random_range(0..n * n)] += delta;
        } else {
            b2[rng.random_range(0..n)] += delta;
        }
        let report = check_models(&affine(n, &w, &b), &transposed(n, &w2, &b2), Level::Sl0, &opts).unwrap();
        let Some(wit) = report.sl0.and_then(|v| v.witness) else {
            continue;
        };
        if report.holds {
            continue;
        }
        // Variables absent from both sides are free; any value will do.
        let x: Vec<Rational> = (0..n)
            .map(|i| wit.assignment.get(&format!("x[{i}]")).map_or_else(|| exact(0.0), |v| v.parse().unwrap()))
            .collect();
        let lhs = affine_exact(n, &w, &b, &x, wit.index);
        let rhs = affine_exact(n, &w2, &b2, &x, wit.index);
        if lhs != rhs && wit.lhs == lhs.to_string() && wit.rhs == rhs.to_string() {
            distinguished += 1;
        }
    }
    if distinguished != C6_PAIRS {
        fails.push(format!("{distinguished}/{C6_PAIRS} mutations distinguished with exact witnesses"));
    }
    let detail = if fails.is_empty() {
        format!("worked examples hold; {distinguished}/{C6_PAIRS} mutations distinguished with exact witnesses")
    } else {
        fails.join("; ")
    };
    outcome(fails.is_empty(), detail)
}

fn c7_end_to_end() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut done = 0;
    let mut from_runs = 0;
    let mut broken = Vec::new();
    let mut seed = 1000u64;
    while done < C7_SCENARIOS && seed < 2000 {
        seed += 1;
        let uc = generate_usecase(Arch::LinearLike, seed, 200).unwrap();
        let (gt, pred1) = (uc.ground_truth.as_slice(), uc.reference.as_slice());
        let slack = rng.random_range(0.1..0.3);
        let bounds = suggest_bounds(gt, pred1, slack).unwrap();
        let verdict = tfm_verify(TaskData::Regression { gt, pred: pred1 }, &bounds, BudgetRule::Conservative).unwrap();
        let Some(eps_max) = verdict.eps_max.filter(|_| verdict.pass) else {
            continue;
        };
        let mut pred2 = None;
        if seed % 2 == 0 {
            let r = Representation::ALL[rng.random_range(0..Representation::ALL.len())];
            let cal = Calibration::from_run(&uc.model, &uc.inputs).unwrap();
            let out = run(&uc.model, &configured(r, &cal), &uc.inputs).unwrap().outputs;
            if replicate_verify(&uc.reference, &out, eps_max).unwrap().status == ReplicationStatus::Replicated {
                from_runs += 1;
                pred2 = Some(out);
            }
        }
        let pred2 = pred2.unwrap_or_else(|| {
            let pattern = rng.random_range(0..3);
            let v = pred1
                .iter()
                .enumerate()
                .map(|(i, p)| match pattern {
                    0 => p + rng.random_range(-eps_max..=eps_max),
                    1 => p + if i % 2 == 0 { eps_max } else { -eps_max },
                    _ => p + eps_max,
                })
                .collect();
            Matrix::new(pred1.len(), 1, v).unwrap()
        });
        if replicate_verify(&uc.reference, &pred2, eps_max).unwrap().status != ReplicationStatus::Replicated {
            continue;
        }
        done += 1;
        for b in &bounds {
            let m2 = metric_value(b.metric, gt, pred2.as_slice()).unwrap();
            let m2 = if b.metric == MetricKind::Bias { m2.abs() } else { m2 };
            if !b.direction.holds(m2, b.r) {
                let sym = if b.direction == BoundDirection::Le { "<=" } else { ">=" };
                broken.push(format!("seed {seed} {}: {m2} {sym} {} fails", b.metric, b.r));
            }
        }
    }
    outcome(
        done == C7_SCENARIOS && broken.is_empty(),
        format!(
            "{done} scenarios ({from_runs} from interpreter runs, the rest synthetic within eps_max); violated bounds {}",
            if broken.is_empty() { "0".to_string() } else { broken.join(", ") }
        ),
    )
}

fn c8_numerics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut fp16_miss, mut bf16_miss, mut tried) = (0, 0, 0);
    while tried < C8_INPUTS {
        let bits: u32 = rng.random();
        let x = f32::from_bits(bits);
        if !x.is_finite() {
            continue;
        }
        tried += 1;
        let want16 = half::f16::from_f32(x).to_f64();
        let got16 = round_to(Representation::Fp16, x as f64).value;
        if got16.to_bits() != want16.to_bits() {
            fp16_miss += 1;
        }
        let want_bf = f32::from_bits(bits & 0xffff_0000) as f64;
        let got_bf = round_to(Representation::Bf16, x as f64).value;
        if got_bf.to_bits() != want_bf.to_bits() {
            bf16_miss += 1;
        }
    }
    let mut kahan_ok = 0;
    for _ in 0..C8_VECTORS {
        let n = rng.random_range(8..200);
        let mut xs: Vec<f64> = Vec::with_capacity(n);
        // Large terms that cancel, with small ones in between.
        while xs.len() < n {
            let big = (rng.random_range(1.0..2.0) * 2f64.powi(rng.random_range(8..24))) as f32 as f64;
            xs.push(big);
            xs.push(rng.random_range(-1.0..1.0) as f32 as f64);
            xs.push(-big);
        }
        xs.truncate(n);
        let exact_sum: Rational = xs.iter().fold(exact(0.0), |acc, &v| acc + exact(v));
        let err = |mode| {
            let v = accumulate(Representation::Fp32, mode, &xs).value;
            let d = exact(v) - &exact_sum;
            if d < exact(0.0) {
                -d
            } else {
                d
            }
        };
        if err(AccumulationMode::Kahan) <= err(AccumulationMode::NaiveLtr) {
            kahan_ok += 1;
        }
    }
    let share = kahan_ok as f64 / C8_VECTORS as f64;
    outcome(
        fp16_miss == 0 && bf16_miss == 0 && share >= C8_KAHAN_SHARE,
        format!(
            "{C8_INPUTS} FP32 inputs: fp16 mismatches {fp16_miss}, bf16 mismatches {bf16_miss}; \
             Kahan <= naive on {:.2}% of {C8_VECTORS} ill-conditioned vectors",
            share * 100.0
        ),
    )
}

fn fnv1a(hash: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *hash ^= b as u64;
        *hash = hash.wrapping_mul(0x100_0000_01b3);
    }
}

/// Runs the whole CLI workflow in `dir` with relative paths and returns
/// every output it produced, in order.
fn cli_workflow(dir: &Path, jobs: &str) -> Vec<(String, Vec<u8>)> {
    let mut outputs = Vec::new();
    let mut cmd = |label: &str, args: &[&str]| {
        let o = Command::new(env!("CARGO_BIN_EXE_mlrep"))
            .current_dir(dir)
            .arg("--jobs")
            .arg(jobs)
            .args(args)
            .output()
            .expect("binary runs");
        let mut bytes = o.stdout;
        bytes.extend_from_slice(format!("\nexit {:?}\n", o.status.code()).as_bytes());
        outputs.push((label.to_string(), bytes));
    };
    cmd("gen linear", &["gen", "--arch", "linear-like", "--seed", "7", "--n", "300", "--out", "lin"]);
    cmd("gen lstm", &["gen", "--arch", "lstm-like", "--seed", "1", "--n", "40", "--sampling", "lhs", "--out", "lstm"]);
    cmd("validate", &["validate", "--model", "lstm/model.json"]);
    for r in ["fp64", "fp32", "fp16", "bf16", "int16", "int14", "int12", "int10"] {
        cmd(&format!("infer linear {r}"), &["infer", "--model", "lin/model.json", "--dataset", "lin/inputs.csv", "--repr", r, "--calibrate"]);
    }
    for acc in ["naive", "pairwise", "kahan"] {
        cmd(&format!("infer lstm bf16 {acc}"), &["infer", "--model", "lstm/model.json", "--dataset", "lstm/inputs.csv", "--repr", "bf16", "--acc", acc]);
    }
    let verify = ["--bounds", "lin/bounds.json", "--gt", "lin/ground_truth.csv", "--pred", "lin/reference.csv"];
    cmd("tfm-verify", &[&["tfm-verify"][..], &verify].concat());
    cmd("margins", &[&["margins"][..], &verify].concat());
    cmd(
        "replicate",
        &["replicate", "--eps-max", "0.01", "--model", "lin/model.json", "--dataset", "lin/inputs.csv", "--repr", "fp16", "--out", "rep"],
    );
    cmd("symcheck sl0", &["symcheck", "--model", "lin/model.json", "--model", "lin/model.json"]);
    cmd("symcheck sl2", &["symcheck", "--model", "lin/model.json", "--model", "lin/model.json", "--level", "sl2"]);
    cmd("cdf", &["cdf", "--pred-a", "lin/reference.csv", "--pred-b", "lin/ground_truth.csv"]);
    for f in [
        "lin/model.json", "lin/inputs.csv", "lin/ground_truth.csv", "lin/reference.csv", "lin/bounds.json",
        "lstm/model.json", "lstm/inputs.csv", "rep/report.json", "rep/cdf.csv",
    ] {
        outputs.push((f.to_string(), fs::read(dir.join(f)).unwrap_or_default()));
    }
    outputs
}

fn c9_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<_> = [("a", "1"), ("b", "4")]
        .iter()
        .map(|(d, jobs)| {
            let dir = tmp.path().join(d);
            fs::create_dir_all(&dir).unwrap();
            cli_workflow(&dir, jobs)
        })
        .collect();
    let differing: Vec<&str> = runs[0]
        .iter()
        .zip(&runs[1])
        .filter(|(a, b)| a.1 != b.1)
        .map(|(a, _)| a.0.as_str())
        .collect();
    let usage = b"\nexit Some(2)\n";
    let empty: Vec<&str> = runs[0]
        .iter()
        .filter(|(_, b)| b.is_empty() || b.ends_with(usage))
        .map(|(l, _)| l.as_str())
        .collect();
    let mut digest = 0xcbf2_9ce4_8422_2325u64;
    for (label, bytes) in &runs[0] {
        fnv1a(&mut digest, label.as_bytes());
        fnv1a(&mut digest, bytes);
    }
    let pinned = digest == C9_DIGEST;
    outcome(
        differing.is_empty() && empty.is_empty() && pinned,
        format!(
            "{} outputs compared across two runs (--jobs 1 vs 4): differing {:?}, missing or rejected {:?}; digest {digest:016x} \
             {} the pinned x86_64 Linux digest (only one platform available here)",
            runs[0].len(),
            differing,
            empty,
            if pinned { "matches" } else { "DOES NOT match" }
        ),
    )
}
