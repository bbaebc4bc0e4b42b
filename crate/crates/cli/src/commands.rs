use credal_core::evaluation::{
    report_to_csv, report_to_nested_json, select, summarize, summary_to_csv,
};
use credal_core::io::{read_csv_dataset, read_dataset, read_json, write_atomic, write_dataset, write_json};
use credal_core::noise::corrupt_dataset;
use credal_core::predictors::gradcheck::gradient_check;
use credal_core::serde_ext::format_float;
use credal_core::simplex::DEFAULT_RESOURCE_CAP;
use credal_core::{
    adjusted_predictor, calibrate, check_bounded_noise, generate, render_ternary, train,
    CredalRegion, Error, ExperimentSpec, GeneratorSpec, LabeledExample, ModelOrder, NoiseSpec,
    Result, ScoreKind, SimplexGrid, SimplexPoint, TernaryPlotSpec, TrainConfig,
};
use serde_json::json;

use crate::files::{ModelFile, PredictorFile, SplitRecord};
use crate::{
    AdjustNoiseArgs, CalibrateArgs, Command, ConvertArgs, CorruptArgs, EvaluateArgs, GenerateArgs,
    GradcheckArgs, PlotArgs, PredictArgs, TrainArgs, RESOURCE_CAP_ENV,
};

type Data = Vec<LabeledExample<f64>>;

pub(crate) fn dispatch(command: Command) -> Result<i32> {
    let outcome = match command {
        Command::Generate(a) => generate_cmd(a),
        Command::Corrupt(a) => corrupt_cmd(a),
        Command::Convert(a) => convert_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::AdjustNoise(a) => adjust_noise_cmd(a),
        Command::Plot(a) => plot_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    };
    match outcome {
        Ok(()) => Ok(0),
        Err(Failed(code)) => Ok(code),
        Err(Fatal(e)) => Err(e),
    }
}

// A command either fails with an error or finishes with a nonzero status
// after printing its own diagnostics.
enum Failure {
    Failed(i32),
    Fatal(Error),
}
use Failure::{Failed, Fatal};

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Fatal(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn resource_cap() -> Result<u64> {
    match std::env::var(RESOURCE_CAP_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{RESOURCE_CAP_ENV}={v} is not a nonnegative integer"))),
        Err(_) => Ok(DEFAULT_RESOURCE_CAP),
    }
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("{what}: cannot parse {s:?} as a number")))
        })
        .collect()
}

fn parse_order(s: &str) -> Result<ModelOrder> {
    s.parse().map_err(|_| usage(format!("unknown model {s:?}; use first or second")))
}

fn parse_kind(s: &str) -> Result<ScoreKind> {
    s.parse().map_err(|_| usage(format!("unknown score {s:?}; use tv, kl, ws, inner or so")))
}

fn parse_split(text: &str) -> Result<[f64; 3]> {
    let v = parse_list(text, "--split")?;
    if v.len() != 3 || v.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
        return Err(usage("--split takes three positive proportions"));
    }
    let total: f64 = v.iter().sum();
    Ok([v[0] / total, v[1] / total, v[2] / total])
}

fn row_of<'a>(data: &'a Data, row: usize) -> Result<&'a LabeledExample<f64>> {
    data.get(row)
        .ok_or_else(|| usage(format!("row {row} out of range; dataset has {} rows", data.len())))
}

fn print_json(value: &serde_json::Value) {
    println!("{value}");
}

fn generate_cmd(a: GenerateArgs) -> CmdResult {
    let spec = GeneratorSpec {
        k: a.k,
        d: a.d,
        n: a.n,
        seed: a.seed,
    };
    let generated = generate::<f64>(&spec)?;
    write_dataset(&a.out, &generated.data)?;
    if let Some(path) = &a.beta_out {
        write_json(path, &generated.beta)?;
    }
    Ok(())
}

fn corrupt_cmd(a: CorruptArgs) -> CmdResult {
    if a.m == 0 {
        return Err(usage("--m must be at least 1").into());
    }
    let data: Data = read_dataset(&a.data)?;
    write_dataset(&a.out, &corrupt_dataset(&data, a.m, a.seed)?)?;
    Ok(())
}

fn convert_cmd(a: ConvertArgs) -> CmdResult {
    let data = read_csv_dataset(&a.csv, a.k)?;
    write_dataset(&a.out, &data)?;
    Ok(())
}

fn train_cmd(a: TrainArgs) -> CmdResult {
    let order = parse_order(&a.model)?;
    let fractions = parse_split(&a.split)?;
    let data: Data = read_dataset(&a.data)?;
    let split = SplitRecord {
        seed: a.seed,
        fractions,
        rows: data.len(),
    };
    let idx = split.indices(data.len())?;
    let defaults = TrainConfig::<f64>::default();
    let config = TrainConfig {
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        epochs: a.epochs.unwrap_or(defaults.epochs),
        batch_size: a.batch.unwrap_or(defaults.batch_size),
        hidden_width: a.hidden.unwrap_or(defaults.hidden_width),
        seed: a.seed,
        l2: a.l2.unwrap_or(defaults.l2),
    };
    let trained = train(order, &select(&data, &idx.train), &config)?;
    print_json(&json!({
        "model": order.to_string(),
        "train_size": idx.train.len(),
        "initial_loss": trained.log.initial(),
        "final_loss": trained.log.last(),
    }));
    ModelFile::new(split, config, trained.log, trained.model).save(&a.out)?;
    Ok(())
}

fn calibrate_cmd(a: CalibrateArgs) -> CmdResult {
    let kind = parse_kind(&a.score)?;
    let file = ModelFile::load(&a.model)?;
    let (calib, split) = match (&a.data, &a.calib_data) {
        (Some(path), None) => {
            let data: Data = read_dataset(path)?;
            let idx = file.split.indices(data.len())?;
            (select(&data, &idx.calib), Some(file.split))
        }
        (None, Some(path)) => (read_dataset(path)?, None),
        _ => return Err(usage("calibrate needs --data or --calib-data").into()),
    };
    let predictor = calibrate(file.model, kind, &calib, a.alpha)?;
    if predictor.is_degenerate() {
        eprintln!(
            "warning: quantile index {} exceeds calibration size {}; threshold is +inf",
            predictor.quantile_index, predictor.calib_size
        );
    }
    print_json(&json!({
        "kind": kind.as_str(),
        "alpha": predictor.alpha,
        "calib_size": predictor.calib_size,
        "quantile_index": predictor.quantile_index,
        "alpha_prime": predictor.alpha_prime,
        "threshold_q": format_float(predictor.threshold_q),
    }));
    PredictorFile::new(split, predictor).save(&a.out)?;
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> CmdResult {
    let file = PredictorFile::load(&a.predictor)?;
    let predictor = &file.predictor;
    if a.coverage {
        let path = a.data.as_ref().ok_or_else(|| usage("--coverage needs --data"))?;
        let data: Data = read_dataset(path)?;
        let test = match (&file.split, a.all_rows) {
            (Some(split), false) => select(&data, &split.indices(data.len())?.test),
            _ => data,
        };
        let coverage = match a.target.as_str() {
            "clean" => predictor.empirical_coverage_by(&test, |ex| ex.clean_or_observed())?,
            "noisy" => predictor.empirical_coverage_by(&test, |ex| &ex.label_dist)?,
            other => return Err(usage(format!("--target {other:?}; use clean or noisy")).into()),
        };
        print_json(&json!({
            "test_size": test.len(),
            "target": a.target,
            "coverage": coverage,
        }));
        return Ok(());
    }

    let features = match (&a.x, &a.data, a.row) {
        (Some(x), None, None) => parse_list(x, "--x")?,
        (None, Some(path), Some(row)) => {
            let data: Data = read_dataset(path)?;
            row_of(&data, row)?.features.clone()
        }
        _ => return Err(usage("predict needs --x, or --data with --row").into()),
    };
    let region = if a.grid_n > 0 {
        let grid = SimplexGrid::build_with_cap(predictor.model.classes(), a.grid_n, resource_cap()?)?;
        predictor.materialize(&features, &grid)?
    } else {
        predictor.region(&features)?
    };
    match &a.out {
        Some(path) => write_json(path, &region)?,
        None => println!("{}", serde_json::to_string_pretty(&region).map_err(Error::from)?),
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> CmdResult {
    let mut spec: ExperimentSpec = read_json(&a.spec)?;
    if std::env::var_os(RESOURCE_CAP_ENV).is_some() {
        spec.resource_cap = resource_cap()?;
    }
    let report = credal_core::run(&spec)?;
    if let Some(note) = &report.note {
        eprintln!("note: {note}");
    }
    let failed = report.cells.iter().filter(|c| !c.is_ok()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} cells failed", report.cells.len());
    }
    write_atomic(&a.out, report_to_csv(&report)?.as_bytes())?;
    if let Some(path) = &a.json {
        write_json(path, &report_to_nested_json(&report)?)?;
    }
    if let Some(path) = &a.summary {
        write_atomic(path, summary_to_csv(&summarize(&report))?.as_bytes())?;
    }
    Ok(())
}

fn adjust_noise_cmd(a: AdjustNoiseArgs) -> CmdResult {
    let spec = NoiseSpec::new(a.epsilon, a.delta, a.alpha)?;
    let adjusted = spec.adjusted_alpha()?;
    let mut out = json!({
        "alpha": a.alpha,
        "delta": a.delta,
        "epsilon": a.epsilon,
        "adjusted_alpha": adjusted,
    });
    let predictor = a.predictor.as_deref().map(PredictorFile::load).transpose()?;
    if a.estimate {
        let path = a.data.as_ref().ok_or_else(|| usage("--estimate needs --data"))?;
        let p = predictor.as_ref().ok_or_else(|| usage("--estimate needs --predictor"))?;
        let paired: Data = read_dataset(path)?;
        let rate = check_bounded_noise(&p.predictor.model, p.predictor.kind, &paired, a.epsilon)?;
        out["closeness_rate"] = json!(rate);
        out["estimated_delta"] = json!(1.0 - rate);
    }
    if let Some(path) = &a.out {
        let file = predictor.ok_or_else(|| usage("--out needs --predictor"))?;
        let widened = adjusted_predictor(&file.predictor, &spec)?;
        out["threshold_q"] = json!(format_float(widened.threshold_q));
        PredictorFile::new(file.split, widened).save(path)?;
    }
    print_json(&out);
    Ok(())
}

fn plot_cmd(a: PlotArgs) -> CmdResult {
    let mut region: CredalRegion<f64> = read_json(&a.region)?;
    if region.mask().is_none() {
        let k = region.prediction.k();
        let grid = SimplexGrid::build_with_cap(k, a.grid_n, resource_cap()?)?;
        region.materialize(&grid)?;
    }
    let truth = match (&a.truth, &a.data, a.row) {
        (Some(t), None, None) => Some(SimplexPoint::new(parse_list(t, "--truth")?)?),
        (None, Some(path), Some(row)) => {
            let data: Data = read_dataset(path)?;
            Some(row_of(&data, row)?.clean_or_observed().clone())
        }
        (None, None, None) => None,
        _ => return Err(usage("use --truth, or --data with --row").into()),
    };
    let mut spec = TernaryPlotSpec::default();
    if let Some(w) = a.width {
        spec.width = w;
    }
    if let Some(h) = a.height {
        spec.height = h;
    }
    let prediction = (!a.no_prediction).then(|| region.prediction.clone());
    let svg = render_ternary(&region, truth.as_ref(), prediction.as_ref(), &spec)?;
    write_atomic(&a.out, svg.as_bytes())?;
    Ok(())
}

fn gradcheck_cmd(a: GradcheckArgs) -> CmdResult {
    let order = parse_order(&a.model)?;
    if a.seeds == 0 {
        return Err(usage("--seeds must be at least 1").into());
    }
    let mut all_passed = true;
    for seed in a.seed..a.seed + a.seeds {
        let spec = GeneratorSpec {
            k: a.k,
            d: a.d,
            n: 1,
            seed,
        };
        let example = generate::<f64>(&spec)?.data.remove(0);
        let report = gradient_check(order, &example, a.hidden, seed, a.tol)?;
        all_passed &= report.passed;
        print_json(&json!({
            "model": order.to_string(),
            "seed": seed,
            "parameters": report.parameters,
            "max_relative_error": report.max_relative_error,
            "worst_parameter": report.worst_parameter,
            "passed": report.passed,
        }));
    }
    if all_passed {
        Ok(())
    } else {
        eprintln!("error: GradientMismatch: analytic and numeric gradients differ beyond {}", a.tol);
        Err(Failed(4))
    }
}
