use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cadmr::datasets::{
    generate_synthetic, load_features_inferred, load_interactions, prepare_interactions, Dataset, DelimitedFormat,
    Fold, Modality, SplitRatio, SyntheticConfig,
};
use cadmr::eval::{
    ablation_arms, cold_start_arms, heads_arms, metrics_at, reports_csv, reports_json, run_arms, sweep_csv,
    thread_cap, Arm, ArmResult, EvalReport, MetricAtK, RankingContext,
};
use cadmr::numerics::{init, stream_rng, GradCheckOptions, Real, Stream};
use cadmr::pipeline::{
    load_checkpoint, loss_trace_csv, read_header, save_checkpoint, LossBreakdown, Model, ModelDims, Precision,
    TrainConfig, TrainData,
};
use clap::ArgMatches;

use crate::args::*;
use crate::manifest::Run;

/// Failures that belong to the command line rather than the engine.
#[derive(Debug)]
pub enum CliError {
    MissingCheckpoint(PathBuf),
    MissingInput(String),
    GradCheckFailed { max_rel_error: f64, tolerance: f64 },
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::MissingCheckpoint(_) => "missing checkpoint",
            CliError::MissingInput(_) => "missing input",
            CliError::GradCheckFailed { .. } => "gradient check failed",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::MissingCheckpoint(p) => write!(f, "no checkpoint at {}", p.display()),
            CliError::MissingInput(what) => write!(f, "{what} does not exist"),
            CliError::GradCheckFailed { max_rel_error, tolerance } => {
                write!(f, "max relative error {max_rel_error:.3e} exceeds {tolerance:e}")
            }
        }
    }
}

impl std::error::Error for CliError {}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(CliError::MissingInput(format!("{what} {}", path.display())).into());
    }
    Ok(())
}

fn require_checkpoint(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(CliError::MissingCheckpoint(path.to_path_buf()).into());
    }
    Ok(())
}

fn load_dataset(dir: &Path, run: &mut Run) -> Result<Dataset> {
    require_file(dir, "dataset directory")?;
    run.input(dir)?;
    Ok(Dataset::load_dir(dir)?)
}

pub fn dispatch(verb: Verb, m: &ArgMatches, argv: Vec<String>) -> Result<()> {
    let name = verb.name();
    match verb {
        Verb::Prepare(a) => {
            check_prepare_inputs(&a)?;
            let run = Run::new(&a.out.out, name, argv)?;
            prepare(a, run)
        }
        Verb::Synth(a) => {
            let run = Run::new(&a.out.out, name, argv)?;
            synth(a, run)
        }
        Verb::Pretrain(a) => {
            let run = Run::new(&a.out.out, name, argv)?;
            pretrain(&a, m, run)
        }
        Verb::Finetune(a) => {
            let run = Run::new(&a.out.out, name, argv)?;
            finetune(&a, run)
        }
        Verb::Evaluate(a) => {
            let ckpt = a.checkpoint.clone().unwrap_or_else(|| a.out.out.join("finetuned.ckpt"));
            require_checkpoint(&ckpt)?;
            let run = Run::new(&a.out.out, name, argv)?;
            evaluate(&a, &ckpt, run)
        }
        Verb::Ablate(a) => {
            let cfg = a.train.resolve(m, Some(&a.heads))?;
            let run = Run::new(&a.out.out, name, argv)?;
            experiment(&a.data.data, &cfg, ablation_arms(&cfg), &a.k, None, run)
        }
        Verb::ColdStart(a) => {
            let cfg = a.train.resolve(m, Some(&a.heads))?;
            let arms = cold_start_arms(&cfg, &a.fractions)?;
            let run = Run::new(&a.out.out, name, argv)?;
            experiment(&a.data.data, &cfg, arms, &a.k, Some(("fraction", |r| r.train_fraction.to_string())), run)
        }
        Verb::HeadsSweep(a) => {
            let cfg = a.train.resolve(m, None)?;
            let arms = heads_arms(&cfg, &a.heads)?;
            let run = Run::new(&a.out.out, name, argv)?;
            experiment(&a.data.data, &cfg, arms, &a.k, Some(("heads", |r| r.heads.to_string())), run)
        }
        Verb::GradCheck(a) => {
            let run = Run::new(&a.out.out, name, argv)?;
            grad_check(&a, m, run)
        }
    }
}

fn check_prepare_inputs(a: &PrepareArgs) -> Result<()> {
    for (p, what) in [
        (&a.interactions, "interactions file"),
        (&a.text_features, "text features"),
        (&a.visual_features, "visual features"),
    ] {
        require_file(p, what)?;
    }
    for p in [&a.text_items, &a.visual_items].into_iter().flatten() {
        require_file(p, "feature item list")?;
    }
    Ok(())
}

fn prepare(a: PrepareArgs, mut run: Run) -> Result<()> {
    let ratio = SplitRatio::parse(&a.ratio)?;
    run.set_seed(a.seed);
    run.input(&a.interactions)?;
    run.input(&a.text_features)?;
    run.input(&a.visual_features)?;
    for p in [&a.text_items, &a.visual_items].into_iter().flatten() {
        run.input(p)?;
    }

    let records = load_interactions(&a.interactions, DelimitedFormat::from_path(&a.interactions), a.header)?;
    let (catalog, matrix, split) = prepare_interactions(&records, a.k_core, &ratio, a.seed)?;
    let text = load_features_inferred(&a.text_features, a.text_items.as_deref(), Modality::Text, &catalog)?;
    let visual = load_features_inferred(&a.visual_features, a.visual_items.as_deref(), Modality::Visual, &catalog)?;
    let ds = Dataset {
        name: a.name.clone(),
        catalog,
        matrix,
        split,
        text,
        visual,
    };
    ds.save_dir(&run.dir)?;
    run.record_all()?;
    let s = ds.stats();
    println!(
        "{}: {} users, {} items, {} interactions after {}-core",
        s.name, s.users, s.items, s.interactions, a.k_core
    );
    run.finish()
}

fn synth(a: SynthArgs, mut run: Run) -> Result<()> {
    let cfg = SyntheticConfig {
        users: a.users,
        items: a.items,
        rank: a.rank,
        text_dim: a.text_dim,
        visual_dim: a.visual_dim,
        noise: a.noise,
        positives_per_user: a.positives,
        seed: a.seed,
        ratio: SplitRatio::parse(&a.ratio)?,
        ..Default::default()
    };
    run.set_seed(a.seed);
    let data = generate_synthetic(&cfg)?;
    data.dataset.save_dir(&run.dir)?;
    run.record_all()?;
    let s = data.dataset.stats();
    println!("synthetic: {} users, {} items, {} interactions", s.users, s.items, s.interactions);
    run.finish()
}

fn pretrain(a: &PretrainArgs, m: &ArgMatches, mut run: Run) -> Result<()> {
    let cfg = a.train.resolve(m, Some(&a.heads))?;
    let ds = load_dataset(&a.data.data, &mut run)?;
    run.set_config(&cfg);
    match cfg.precision {
        Precision::F64 => pretrain_typed::<f64>(&ds, cfg, &mut run)?,
        Precision::F32 => pretrain_typed::<f32>(&ds, cfg, &mut run)?,
    }
    run.finish()
}

fn pretrain_typed<T: Real>(ds: &Dataset, cfg: TrainConfig, run: &mut Run) -> Result<()> {
    let data = TrainData::<T>::from_dataset(ds)?;
    let mut model = Model::<T>::new(cfg, data.dims())?;
    let trace = model.pretrain_all(&data)?;
    save_checkpoint(&model, &run.path("pretrained.ckpt"))?;
    run.record("pretrained.ckpt")?;
    let ae: Vec<LossBreakdown> = trace.ae.iter().copied().map(LossBreakdown::from).collect();
    run.write("ae_trace.csv", loss_trace_csv(&ae))?;
    let mut warm = String::from("epoch,tc\n");
    for (e, tc) in trace.encoder_tc.iter().enumerate() {
        warm.push_str(&format!("{e},{tc}\n"));
    }
    run.write("warmup_trace.csv", warm)?;
    println!(
        "autoencoder: {} epochs, final mse {:.6}; warm-up: {} epochs{}",
        trace.ae.len(),
        trace.ae_final.mse,
        trace.encoder_tc.len(),
        trace.encoder_tc.last().map(|t| format!(", last tc {t:.6}")).unwrap_or_default()
    );
    Ok(())
}

fn finetune(a: &FinetuneArgs, mut run: Run) -> Result<()> {
    let ckpt = a.checkpoint.clone().unwrap_or_else(|| run.path("pretrained.ckpt"));
    require_checkpoint(&ckpt)?;
    let header = read_header(&ckpt)?;
    run.input(&ckpt)?;
    let ds = load_dataset(&a.data.data, &mut run)?;
    match header.precision {
        Precision::F64 => finetune_typed::<f64>(&ds, &ckpt, a.epochs_finetune, &mut run)?,
        Precision::F32 => finetune_typed::<f32>(&ds, &ckpt, a.epochs_finetune, &mut run)?,
    }
    run.finish()
}

fn finetune_typed<T: Real>(ds: &Dataset, ckpt: &Path, epochs: Option<usize>, run: &mut Run) -> Result<()> {
    let mut model: Model<T> = load_checkpoint(ckpt)?;
    if let Some(e) = epochs {
        model.config.finetune_epochs = e;
    }
    run.set_config(&model.config);
    let data = TrainData::<T>::from_dataset(ds)?;
    let trace = model.finetune(&data)?;
    save_checkpoint(&model, &run.path("finetuned.ckpt"))?;
    run.record("finetuned.ckpt")?;
    run.write("finetune_trace.csv", loss_trace_csv(&trace))?;
    match (trace.first(), trace.last()) {
        (Some(f), Some(l)) => println!("finetune: {} epochs, loss {:.6} -> {:.6}", trace.len(), f.total, l.total),
        _ => println!("finetune: 0 epochs"),
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs, ckpt: &Path, mut run: Run) -> Result<()> {
    let header = read_header(ckpt)?;
    run.input(ckpt)?;
    let ds = load_dataset(&a.data.data, &mut run)?;
    let report = match header.precision {
        Precision::F64 => evaluate_typed::<f64>(&ds, ckpt, &a.k, &mut run)?,
        Precision::F32 => evaluate_typed::<f32>(&ds, ckpt, &a.k, &mut run)?,
    };
    let reports = [report];
    run.write("report.csv", reports_csv(&reports))?;
    run.write("report.json", reports_json(&reports))?;
    print_reports(&reports);
    run.finish()
}

fn evaluate_typed<T: Real>(ds: &Dataset, ckpt: &Path, ks: &[usize], run: &mut Run) -> Result<EvalReport> {
    let model: Model<T> = load_checkpoint(ckpt)?;
    run.set_config(&model.config);
    let data = TrainData::<T>::from_dataset(ds)?;
    let scores = model.predict(&data)?.mapv(Real::to_f64);
    let ctx = RankingContext::new(scores, ds.split.per_user(Fold::Train), ds.split.per_user(Fold::Test))?;
    let metrics = metrics_at(&ctx, ks)?
        .into_iter()
        .map(|(k, recall, ndcg)| MetricAtK { k, recall, ndcg })
        .collect();
    Ok(EvalReport {
        arm: model.config.variant.to_string(),
        variant: model.config.variant.to_string(),
        seed: model.config.seed,
        train_fraction: 1.0,
        heads: model.config.attention.heads,
        users: ctx.evaluable_users().len(),
        excluded_users: 0,
        metrics,
    })
}

type SweepKey = (&'static str, fn(&EvalReport) -> String);

fn experiment(data: &Path, cfg: &TrainConfig, arms: Vec<Arm>, ks: &[usize], sweep: Option<SweepKey>, mut run: Run) -> Result<()> {
    let ds = load_dataset(data, &mut run)?;
    run.set_config(cfg);
    let threads = thread_cap();
    run.set_threads(threads);
    let results = run_arms(&ds, &arms, ks, threads)?;
    let reports: Vec<EvalReport> = results.iter().map(|r| r.report.clone()).collect();
    run.write("report.csv", reports_csv(&reports))?;
    run.write("report.json", reports_json(&reports))?;
    if let Some((key, value)) = sweep {
        let k = *ks.first().context("at least one cutoff is required")?;
        run.write("sweep.csv", sweep_csv(&reports, key, k, value))?;
    }
    for r in &results {
        write_arm_traces(r, &mut run)?;
    }
    print_reports(&reports);
    run.finish()
}

fn write_arm_traces(r: &ArmResult, run: &mut Run) -> Result<()> {
    let tag: String = r
        .report
        .arm
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    run.write(&format!("finetune_trace_{tag}.csv"), loss_trace_csv(&r.finetune))?;
    Ok(())
}

fn print_reports(reports: &[EvalReport]) {
    for r in reports {
        let cells: Vec<String> = r
            .metrics
            .iter()
            .map(|m| format!("recall@{} {:.4} ndcg@{} {:.4}", m.k, m.recall, m.k, m.ndcg))
            .collect();
        println!("{:<14} {} ({} users)", r.arm, cells.join("  "), r.users);
    }
}

fn toy_problem(seed: u64) -> Result<(Model<f64>, TrainData<f64>)> {
    let mut cfg = TrainConfig::default();
    cfg.seed = seed;
    cfg.encoder.hidden = 8;
    cfg.encoder.text_out = 4;
    cfg.encoder.visual_out = 4;
    cfg.encoder.fused = 8;
    cfg.attention.latent = 8;
    cfg.attention.heads = 2;
    cfg.ae.hidden = 4;
    cfg.ae.kernel_init_std = 0.3;
    let dims = ModelDims {
        users: 8,
        items: 5,
        text_dim: 6,
        visual_dim: 10,
    };
    let mut rng = stream_rng(seed, Stream::Synthetic);
    let ratings = init::uniform::<f64, _>(&mut rng, (5, 8), 1.0).mapv(|u| if u > 0.2 { 1.0 } else { 0.0 });
    let text = init::normal::<f64, _>(&mut rng, (5, 6), 1.0);
    let visual = init::normal::<f64, _>(&mut rng, (5, 10), 1.0);
    let data = TrainData::new(ratings, text, visual)?;
    let mut model = Model::<f64>::new(cfg, dims)?;
    // Nonzero output projection so every attention weight receives gradient.
    let (wo, bo) = (model.arch.attention.wo, model.arch.attention.bo);
    *model.store.value_mut(wo) = init::normal(&mut rng, (8, 8), 0.5);
    *model.store.value_mut(bo) = init::normal(&mut rng, (1, 8), 0.1);
    Ok((model, data))
}

fn grad_check(a: &GradCheckArgs, m: &ArgMatches, mut run: Run) -> Result<()> {
    let (model, data) = if a.toy {
        run.set_seed(a.train.seed);
        toy_problem(a.train.seed)?
    } else {
        let Some(dir) = &a.data else {
            return Err(CliError::MissingInput("grad-check target (pass --toy or --data)".into()).into());
        };
        {
            let mut cfg = a.train.resolve(m, Some(&a.heads))?;
            cfg.precision = Precision::F64;
            let ds = load_dataset(dir, &mut run)?;
            run.set_config(&cfg);
            let data = TrainData::<f64>::from_dataset(&ds)?;
            (Model::<f64>::new(cfg, data.dims())?, data)
        }
    };
    let opts = GradCheckOptions {
        probes: a.probes,
        tolerance: a.tolerance,
        seed: model.config.seed,
        ..Default::default()
    };
    let report = model.check_gradients(&data, opts)?;
    let mut csv = String::from("param,probed,max_rel_error,max_abs_error\n");
    for p in &report.params {
        csv.push_str(&format!("{},{},{},{}\n", p.name, p.probed, p.max_rel_error, p.max_abs_error));
    }
    run.write("gradcheck.csv", csv)?;
    let worst = report
        .worst
        .as_ref()
        .map(|(n, i)| format!(" at {n}[{i}]"))
        .unwrap_or_default();
    println!(
        "max relative error: {:.3e}{worst} ({} coordinates, {} params, tolerance {:e})",
        report.max_rel_error,
        report.probed,
        report.params.len(),
        a.tolerance
    );
    run.finish()?;
    if !report.passed() {
        return Err(CliError::GradCheckFailed {
            max_rel_error: report.max_rel_error,
            tolerance: a.tolerance,
        }
        .into());
    }
    Ok(())
}
