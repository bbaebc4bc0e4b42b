//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use credal_core::conformal::ScoreSet;
use credal_core::evaluation::{summarize, CoverageTarget, ExperimentSpec, SummaryRow};
use credal_core::noise::simulate_bounded_noise;
use credal_core::predictors::gradcheck::gradient_check;
use credal_core::random::rng_from_seed;
use credal_core::simplex::for_each_composition;
use credal_core::{
    calibrate, dirichlet_log_density, dirichlet_mode, generate, tv_distance, train, wasserstein1,
    DirichletParams, GeneratorSpec, ModelOrder, NoiseSpec,
    ScoreKind, SimplexGrid, SimplexPoint, TrainConfig,
};
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn first_order_config() -> TrainConfig<f64> {
    TrainConfig {
        learning_rate: 0.1,
        epochs: 100,
        batch_size: 32,
        ..Default::default()
    }
}

fn second_order_config() -> TrainConfig<f64> {
    TrainConfig {
        learning_rate: 0.05,
        epochs: 100,
        batch_size: 32,
        ..Default::default()
    }
}

fn sweep(k: usize, kinds: Vec<ScoreKind>, alphas: Vec<f64>, ms: Vec<u64>) -> Vec<SummaryRow> {
    let mut spec = ExperimentSpec::synthetic(
        GeneratorSpec { k, d: 10, n: 1500, seed: 0 },
        kinds,
        alphas,
        (0..10).collect(),
    );
    spec.ms = ms;
    spec.train_config = first_order_config();
    spec.second_order_config = Some(second_order_config());
    spec.coverage_target = CoverageTarget::Clean;
    let report = credal_core::run(&spec).expect("sweep runs");
    assert!(report.cells.iter().all(|c| c.is_ok()), "no failed cells");
    summarize(&report)
}

fn coverage_within_bounds(rows: &[SummaryRow]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in rows {
        let c = r.coverage.expect("coverage").mean;
        let pass = c >= 1.0 - r.alpha - 0.02 && c <= 1.0 - r.alpha + 0.05;
        ok &= pass;
        parts.push(format!("{}@{}={c:.4}", r.kind, r.alpha));
    }
    outcome(ok, parts.join(" "))
}

fn criterion_1() -> Outcome {
    let rows = sweep(3, vec![ScoreKind::Tv], vec![0.05, 0.1, 0.2], vec![]);
    coverage_within_bounds(&rows)
}

fn criterion_2() -> Outcome {
    let (n, reps, tests, alpha) = (100usize, 1000usize, 1000usize, 0.1);
    let mut rng = rng_from_seed(2024);
    let mut total = 0.0;
    for _ in 0..reps {
        let calib: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let q = ScoreSet::new(calib).unwrap().threshold(alpha).unwrap().q;
        let covered = (0..tests).filter(|_| rng.gen::<f64>() < q).count();
        total += covered as f64 / tests as f64;
    }
    let mean = total / reps as f64;
    let (lo, hi) = (0.9 - 0.01, 0.9 + 1.0 / 101.0 + 0.01);
    outcome(mean >= lo && mean <= hi, format!("mean coverage {mean:.4} in [{lo:.4}, {hi:.4}]"))
}

fn criterion_3() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for k in [3, 6] {
        let rows = sweep(k, vec![ScoreKind::Tv], vec![0.1], vec![1, 5, 10, 100]);
        let q: Vec<f64> = rows.iter().map(|r| r.threshold_q.unwrap().mean).collect();
        let decreasing = q.windows(2).all(|w| w[1] < w[0]);
        let shrink = (q[0] - q[3]) / q[0];
        ok &= decreasing && shrink >= 0.2;
        parts.push(format!(
            "K={k} q(m=1,5,10,100)={:.4},{:.4},{:.4},{:.4} shrink {:.0}%",
            q[0],
            q[1],
            q[2],
            q[3],
            100.0 * shrink
        ));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_4() -> Outcome {
    let rows = sweep(3, vec![ScoreKind::Tv], vec![0.1], vec![1, 5, 10, 100]);
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &rows {
        let c = r.coverage.unwrap().mean;
        ok &= c >= 0.88;
        parts.push(format!("m={} clean coverage {c:.4}", r.m));
    }
    outcome(ok, parts.join(", "))
}

fn criterion_5() -> Outcome {
    let spec = NoiseSpec::new(0.05, 0.02, 0.1).unwrap();
    let adjusted = spec.adjusted_alpha().unwrap();
    let sim = simulate_bounded_noise(&spec, 200, 10_000, 5).unwrap();
    let ok = (adjusted - 0.08 / 0.98).abs() < 1e-15 && sim.adjusted_coverage >= 0.88;
    outcome(
        ok,
        format!(
            "alpha~={adjusted:.5}, adjusted coverage {:.4} (naive {:.4}, closeness {:.4}) over {} trials",
            sim.adjusted_coverage, sim.naive_coverage, sim.closeness_rate, sim.trials
        ),
    )
}

fn criterion_6() -> Outcome {
    let rows = sweep(3, ScoreKind::ALL.to_vec(), vec![0.05, 0.1, 0.2], vec![]);
    coverage_within_bounds(&rows)
}

fn criterion_7() -> Outcome {
    let mut worst = [0.0f64; 2];
    let mut ok = true;
    for (slot, order) in [ModelOrder::First, ModelOrder::Second].into_iter().enumerate() {
        for seed in 0..20 {
            for hidden in [0, 5] {
                let example = generate::<f64>(&GeneratorSpec { k: 4, d: 5, n: 1, seed })
                    .unwrap()
                    .data
                    .remove(0);
                let r = gradient_check(order, &example, hidden, seed, 1e-4).unwrap();
                ok &= r.passed;
                worst[slot] = worst[slot].max(r.max_relative_error);
            }
        }
    }
    outcome(
        ok,
        format!(
            "max relative error: cross-entropy {:.2e}, Dirichlet NLL {:.2e}",
            worst[0], worst[1]
        ),
    )
}

/// Optimal transport cost between integer mass vectors on a line of three
/// bins, by enumerating every integer coupling.
fn brute_force_transport(a: &[usize], b: &[usize]) -> usize {
    let mut best = usize::MAX;
    for p01 in 0..=a[0] {
        for p02 in 0..=a[0] - p01 {
            let p00 = a[0] - p01 - p02;
            for p10 in 0..=a[1] {
                for p12 in 0..=a[1] - p10 {
                    let p11 = a[1] - p10 - p12;
                    let col = |c0: usize, c1: usize, want: usize| -> Option<usize> {
                        want.checked_sub(c0 + c1)
                    };
                    let (Some(p20), Some(p21), Some(p22)) = (
                        col(p00, p10, b[0]),
                        col(p01, p11, b[1]),
                        col(p02, p12, b[2]),
                    ) else {
                        continue;
                    };
                    if p20 + p21 + p22 != a[2] {
                        continue;
                    }
                    let cost = p01 + p10 + p12 + p21 + 2 * (p02 + p20);
                    best = best.min(cost);
                }
            }
        }
    }
    best
}

fn criterion_8() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;

    // Threshold against an exact rational sort-index oracle.
    let mut rng = rng_from_seed(8);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..300usize);
        let permille = rng.gen_range(1..1000usize);
        let alpha = permille as f64 / 1000.0;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let index = ((n + 1) * (1000 - permille)).div_ceil(1000);
        let oracle = if index > n { f64::INFINITY } else { sorted[index - 1] };
        let t = ScoreSet::new(scores).unwrap().threshold(alpha).unwrap();
        if t.index != index || t.q != oracle {
            mismatches += 1;
        }
    }
    ok &= mismatches == 0;
    parts.push(format!("quantile mismatches {mismatches}/1000"));

    // Wasserstein against brute-force transport on the k=3, n=5 lattice.
    let mut comps = Vec::new();
    for_each_composition(3, 5, |c| comps.push(c.to_vec()));
    let mut worst_ws = 0.0f64;
    for a in &comps {
        for b in &comps {
            let pa = SimplexPoint::from_counts(&a.iter().map(|&v| v as u64).collect::<Vec<_>>()).unwrap();
            let pb = SimplexPoint::from_counts(&b.iter().map(|&v| v as u64).collect::<Vec<_>>()).unwrap();
            let got: f64 = wasserstein1(&pa, &pb).unwrap();
            let want = brute_force_transport(a, b) as f64 / 5.0;
            worst_ws = worst_ws.max((got - want).abs());
        }
    }
    ok &= worst_ws <= 1e-9;
    parts.push(format!("transport max error {worst_ws:.1e} over {} pairs", comps.len().pow(2)));

    // Grid efficiency against an exhaustive count on the raw compositions.
    let data = generate::<f64>(&GeneratorSpec { k: 3, d: 4, n: 600, seed: 8 }).unwrap().data;
    let model = train(ModelOrder::First, &data[..200], &first_order_config()).unwrap().model;
    let pred = calibrate(model, ScoreKind::Tv, &data[200..400], 0.1).unwrap();
    let grid = SimplexGrid::<f64>::build(3, 200).unwrap();
    let mut efficiency_mismatches = 0;
    for ex in &data[400..420] {
        let region = pred.materialize(&ex.features, &grid).unwrap();
        let p = match &region.prediction {
            credal_core::Prediction::Distribution(p) => p.probs().to_vec(),
            _ => unreachable!(),
        };
        let mut inside = 0usize;
        for_each_composition(3, 200, |c| {
            let tv: f64 = 0.5 * c.iter().zip(&p).map(|(&ci, &pi)| (ci as f64 / 200.0 - pi).abs()).sum::<f64>();
            inside += usize::from(tv < pred.threshold_q);
        });
        if region.efficiency().unwrap() != inside as f64 / 20301.0 {
            efficiency_mismatches += 1;
        }
    }
    ok &= efficiency_mismatches == 0;
    parts.push(format!("efficiency mismatches {efficiency_mismatches}/20"));

    // Closed-form Dirichlet mode against a lattice search.
    // Concentrations keep the mode at least one lattice step from the
    // boundary, where the density vanishes and the lattice cannot follow.
    let thetas: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..3).map(|_| rng.gen_range(1.5..20.0)).collect())
        .collect();
    let mut worst_cells = 0.0f64;
    for theta in &thetas {
        let params = DirichletParams::new(theta.clone()).unwrap();
        let mode = dirichlet_mode(&params);
        let best = grid
            .points()
            .iter()
            .filter(|p| p.probs().iter().all(|&v| v > 0.0))
            .max_by(|a, b| {
                dirichlet_log_density(a, &params)
                    .unwrap()
                    .total_cmp(&dirichlet_log_density(b, &params).unwrap())
            })
            .unwrap();
        let dist = mode
            .probs()
            .iter()
            .zip(best.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst_cells = worst_cells.max(dist * 200.0);
    }
    ok &= worst_cells <= 1.0;
    parts.push(format!("mode offset {worst_cells:.3} cells over {} concentrations", thetas.len()));
    outcome(ok, parts.join("; "))
}

fn criterion_9() -> Outcome {
    let data = generate::<f64>(&GeneratorSpec { k: 3, d: 4, n: 700, seed: 9 }).unwrap().data;
    let model = train(ModelOrder::First, &data[..200], &first_order_config()).unwrap().model;
    let pred = calibrate(model, ScoreKind::Tv, &data[200..], 0.1).unwrap();
    let uniform = SimplexPoint::<f64>::uniform(3).unwrap();
    let density = dirichlet_log_density(&uniform, &DirichletParams::new(vec![3.0, 3.0, 3.0]).unwrap()).unwrap();
    let tv: f64 = tv_distance(
        &SimplexPoint::new(vec![0.5, 0.3, 0.2]).unwrap(),
        &SimplexPoint::new(vec![0.2, 0.3, 0.5]).unwrap(),
    )
    .unwrap();
    let density_err = (density - (5040.0f64 / 729.0).ln()).abs();
    let ok = pred.quantile_index == 451
        && pred.alpha_prime == 0.902
        && density_err <= 1e-9
        && (tv - 0.3).abs() <= 1e-12;
    outcome(
        ok,
        format!(
            "index {} alpha' {}; log density error {density_err:.1e}; TV {tv}",
            pred.quantile_index, pred.alpha_prime
        ),
    )
}

fn credal(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_credal"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        status.status.success(),
        "credal {args:?}: {}",
        String::from_utf8_lossy(&status.stderr)
    );
}

const PIPELINE_FILES: [&str; 9] = [
    "data.jsonl",
    "noisy.jsonl",
    "model.json",
    "predictor.json",
    "region.json",
    "report.csv",
    "report.json",
    "plot.svg",
    "so_plot.svg",
];

fn run_pipeline(dir: &Path) {
    let spec = r#"{"dataset":{"file":{"path":"noisy.jsonl"}},"ms":[5],"alphas":[0.1],
        "kinds":["TV","SO"],"seeds":[0,1],"grid_n":30,
        "train_config":{"learning_rate":0.1,"epochs":20,"batch_size":32}}"#;
    fs::write(dir.join("spec.json"), spec).unwrap();
    credal(dir, &["generate", "--k", "3", "--n", "600", "--seed", "0", "--out", "data.jsonl"]);
    credal(dir, &["corrupt", "--data", "data.jsonl", "--m", "10", "--seed", "1", "--out", "noisy.jsonl"]);
    credal(dir, &["train", "--model", "first", "--data", "noisy.jsonl", "--seed", "2", "--lr", "0.1", "--epochs", "30"]);
    credal(dir, &["calibrate", "--data", "noisy.jsonl", "--score", "tv", "--alpha", "0.1"]);
    credal(dir, &["predict", "--data", "noisy.jsonl", "--row", "0", "--grid-n", "60", "--out", "region.json"]);
    credal(dir, &["evaluate", "--spec", "spec.json", "--out", "report.csv", "--json", "report.json"]);
    credal(dir, &["plot", "--region", "region.json", "--data", "data.jsonl", "--row", "0", "--out", "plot.svg"]);
    credal(dir, &["train", "--model", "second", "--data", "noisy.jsonl", "--seed", "2", "--lr", "0.05", "--epochs", "30", "--out", "so_model.json"]);
    credal(dir, &["calibrate", "--model", "so_model.json", "--data", "noisy.jsonl", "--score", "so", "--alpha", "0.1", "--out", "so_predictor.json"]);
    credal(dir, &["predict", "--predictor", "so_predictor.json", "--data", "noisy.jsonl", "--row", "0", "--grid-n", "60", "--out", "so_region.json"]);
    credal(dir, &["plot", "--region", "so_region.json", "--out", "so_plot.svg"]);
}

fn criterion_10() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(a.path());
    run_pipeline(b.path());
    let differing: Vec<&str> = PIPELINE_FILES
        .iter()
        .copied()
        .filter(|f| fs::read(a.path().join(f)).unwrap() != fs::read(b.path().join(f)).unwrap())
        .collect();
    let ok = differing.is_empty();
    outcome(
        ok,
        if ok {
            format!("{} files byte-identical across two runs", PIPELINE_FILES.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn main() {
    // Libtest-style arguments (filters, --nocapture) are accepted and ignored.
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("coverage guarantee, TV, K=3", criterion_1),
        ("exchangeability coverage of the quantile rule", criterion_2),
        ("threshold shrinks as m grows", criterion_3),
        ("clean coverage under noisy calibration", criterion_4),
        ("bounded-noise adjustment, Monte Carlo", criterion_5),
        ("coverage for every nonconformity kind", criterion_6),
        ("analytic gradients vs finite differences", criterion_7),
        ("oracle equivalences", criterion_8),
        ("closed-form spot values", criterion_9),
        ("CLI pipeline determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!result.passed);
        println!(
            "criterion {:>2} {} {name}: {} ({:.1}s)",
            i + 1,
            if result.passed { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
