use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use glyphforge::corpus::{
    build_dataset, load_charset, split_dataset, BuildOptions, Dataset, FontSource, SamplePair, StyleCatalog,
};
use glyphforge::mixer::{interpolation_path, mix, one_hot, render_specimen, MixSpec, SpecimenSheet, StyleWeights};
use glyphforge::train::{
    evaluate, fit, gradient_check, gradient_check_with, negate_array, Conditioning, EvalSet, FitOptions,
    TrainConfig,
};
use glyphforge::unet::{Checkpoint, FontRecord, ModelConfig, Parameters, Phase};
use glyphforge::Error;
use glyphforge_service::{LoadedModel, Limits, ServiceConfig};

use crate::args::*;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments that clap could not catch; exit 1.
    Usage(String),
    /// Everything else; exit 2.
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalDivergence {
                ref last_checkpoint, ..
            } => {
                let kept = last_checkpoint
                    .as_ref()
                    .map_or("none".to_string(), |p| p.display().to_string());
                CliError::Runtime(format!("{e}; last checkpoint: {kept}"))
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io: {e}"))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Dataset(DatasetCommand::Build(a)) => dataset_build(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Gen(a) => gen(a),
        Command::Interpolate(a) => interpolate(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Serve(a) => serve(a),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn ensure_parent(path: &Path) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn dataset_build(a: DatasetBuildArgs) -> CliResult {
    let source = FontSource::parse(&a.source);
    let targets: Vec<FontSource> = a.targets.iter().map(|t| FontSource::parse(t)).collect();
    let charset = load_charset(&a.charset)?;
    let options = BuildOptions {
        size: a.size,
        margin_fraction: a.margin,
        split_seed: a.seed,
    };
    let ds = build_dataset(&source, &targets, &charset, &options)?;
    ensure_parent(&a.out)?;
    ds.save(&a.out)?;
    fs::write(sibling(&a.out, ".skips.tsv"), ds.skip_report())?;
    ds.catalog().save(&sibling(&a.out, ".catalog.tsv"))?;
    println!(
        "samples={} skipped={} styles={} hash={}",
        ds.samples.len(),
        ds.skips.len(),
        ds.manifest.target_fonts.len(),
        ds.manifest.content_hash
    );
    Ok(())
}

fn train(a: TrainArgs) -> CliResult {
    let ds = Dataset::load(&a.dataset)?;
    let catalog = ds.catalog();
    let model = ModelConfig::new(
        a.model.size.unwrap_or(ds.manifest.size),
        a.model.depth,
        a.model.base,
        a.model.k.unwrap_or(catalog.len()),
    )
    .with_cap(a.model.cap)
    .with_seed(a.seed);
    if model.input_size != ds.manifest.size {
        return Err(CliError::Usage(format!(
            "--size {} does not match the dataset glyph size {}",
            model.input_size, ds.manifest.size
        )));
    }
    let split = split_dataset(&ds.samples, a.val_fraction, a.seed)?;
    let phase_config = |phase: Phase, steps: usize| {
        let mut c = TrainConfig::new(phase, steps)
            .with_seed(a.seed)
            .with_batch_size(a.batch_size)
            .with_learning_rate(a.lr);
        c.lr_decay = a.lr_decay;
        c.patience = a.patience;
        c.eval_every = a.eval_every;
        c.checkpoint_every = a.checkpoint_every;
        c
    };
    let phase1 = phase_config(Phase::One, a.phase1_steps);
    let phase2 = phase_config(Phase::Two, a.phase2_steps);
    let src = &ds.manifest.source_font;
    let record = FontRecord {
        path: src.path.clone(),
        sha256: src.sha256.clone(),
        margin_fraction: ds.manifest.margin_fraction,
    };
    fs::create_dir_all(&a.out)?;
    catalog.save(&a.out.join("catalog.tsv"))?;

    let log_every = a.log_every;
    let mut progress = move |phase: Phase, step: usize, loss: f64, lr: f32| {
        if log_every > 0 && step % log_every == 0 {
            eprintln!("phase{} step {step} loss {loss:.6} lr {lr:.3e}", phase.number());
        }
    };
    let opts = FitOptions {
        out_dir: Some(a.out.clone()),
        styles: catalog.names(),
        source_font: Some(record),
        progress: Some(&mut progress),
    };
    let (_, report) = fit(&split, &model, &phase1, &phase2, opts)?;

    let on = match report.evaluated_on {
        EvalSet::Validation => "val",
        EvalSet::Train => "train",
    };
    let mut out = std::io::stdout().lock();
    for (id, mae) in &report.eval.per_style {
        let name = catalog.get(*id).map_or("?", |e| e.name.as_str());
        writeln!(out, "eval\t{on}\t{id}\t{name}\t{mae:.6}")?;
    }
    writeln!(
        out,
        "mae={:.6} on={on} steps={} lr_decays={} wall={:.1}s checkpoint={} hash={}",
        report.eval.overall,
        report.losses.len(),
        report.lr_decays,
        report.wall_clock.as_secs_f64(),
        report
            .final_checkpoint
            .as_ref()
            .map_or("-".to_string(), |p| p.display().to_string()),
        report.checkpoint_hash
    )?;
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let ds = Dataset::load(&a.dataset)?;
    let samples: Vec<SamplePair> = match a.split {
        SplitChoice::All => ds.samples,
        choice => {
            let split = split_dataset(&ds.samples, a.val_fraction, a.seed)?;
            if choice == SplitChoice::Train {
                split.train
            } else {
                split.val
            }
        }
    };
    let table = evaluate(&ckpt, &samples, Conditioning::OneHot)?;
    print!("{}", table.to_tsv());
    Ok(())
}

/// A style name or id, a mixture `name=w,...`, or a raw vector `w0,w1,...`.
fn parse_vector(text: &str, catalog: &StyleCatalog) -> CliResult<StyleWeights> {
    let k = catalog.len();
    if text.contains('=') {
        return Ok(mix(&MixSpec::parse(text)?, catalog)?);
    }
    if text.contains(',') || catalog.id_of(text).is_none() && text.parse::<f32>().is_ok() && k == 1 {
        return raw_vector(text, k);
    }
    style_one_hot(text, catalog)
}

fn raw_vector(text: &str, k: usize) -> CliResult<StyleWeights> {
    let values = text
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f32>()
                .map_err(|_| CliError::Usage(format!("`{v}` in `{text}` is not a number")))
        })
        .collect::<CliResult<Vec<f32>>>()?;
    let w = StyleWeights::new(values)?;
    w.expect_len(k)?;
    Ok(w)
}

fn style_one_hot(text: &str, catalog: &StyleCatalog) -> CliResult<StyleWeights> {
    let id = match catalog.id_of(text) {
        Some(id) => id,
        None => match text.parse::<usize>() {
            Ok(id) if id < catalog.len() => id,
            _ => return Err(Error::StyleUnknown(text.to_string()).into()),
        },
    };
    Ok(one_hot(id, catalog.len())?)
}

fn load_model(a: &InferenceArgs) -> CliResult<(LoadedModel, Vec<char>)> {
    let chars: Vec<char> = a.chars.chars().filter(|c| !c.is_whitespace()).collect();
    if chars.is_empty() {
        return Err(CliError::Usage("--chars must contain at least one character".into()));
    }
    let model = LoadedModel::load(&a.checkpoint, a.catalog.as_deref(), a.source_font.as_deref())?;
    Ok((model, chars))
}

fn write_sheet(sheet: &SpecimenSheet, out: &Path) -> CliResult {
    ensure_parent(out)?;
    fs::write(out, sheet.to_png()?)?;
    Ok(())
}

fn warn_issues(sheet: &SpecimenSheet) {
    for issue in &sheet.issues {
        eprintln!(
            "warning: U+{:04X} column {}: {}",
            issue.codepoint as u32, issue.column, issue.reason
        );
    }
}

fn gen(a: GenArgs) -> CliResult {
    let (model, chars) = load_model(&a.inference)?;
    let mut columns = Vec::new();
    for name in &a.one_hot {
        columns.push(style_one_hot(name, &model.catalog)?);
    }
    for spec in &a.mix {
        columns.push(mix(&MixSpec::parse(spec)?, &model.catalog)?);
    }
    for text in &a.weights {
        columns.push(raw_vector(text, model.catalog.len())?);
    }
    if columns.is_empty() {
        return Err(CliError::Usage("give at least one of --one-hot, --mix or --weights".into()));
    }
    let sheet = render_specimen(&model.checkpoint, &chars, &columns, &model.font)?;
    write_sheet(&sheet, &a.out)?;
    if let Some(report) = &a.report {
        ensure_parent(report)?;
        fs::write(report, sheet.report())?;
    }
    warn_issues(&sheet);
    println!(
        "wrote {} ({} chars x {} columns, {} missing)",
        a.out.display(),
        sheet.rows(),
        sheet.columns(),
        sheet.issues.len()
    );
    Ok(())
}

fn interpolate(a: InterpolateArgs) -> CliResult {
    if a.steps < 2 {
        return Err(CliError::Usage(format!("--steps must be at least 2, got {}", a.steps)));
    }
    let (model, chars) = load_model(&a.inference)?;
    let from = parse_vector(&a.from, &model.catalog)?;
    let to = parse_vector(&a.to, &model.catalog)?;
    let path = interpolation_path(&from, &to, a.steps)?;
    fs::create_dir_all(&a.out)?;
    for (i, w) in path.iter().enumerate() {
        let sheet = render_specimen(&model.checkpoint, &chars, std::slice::from_ref(w), &model.font)?;
        if i == 0 {
            warn_issues(&sheet);
        }
        write_sheet(&sheet, &a.out.join(format!("step_{i:03}.png")))?;
    }
    println!("wrote {} frames to {}", path.len(), a.out.display());
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> CliResult {
    let config = ModelConfig::new(a.size, a.depth, a.base, a.k).with_seed(a.seed);
    config.validate()?;
    let report = match &a.negate {
        None => gradient_check(&config, a.trials, a.seed)?,
        Some(name) => {
            let params = Parameters::<f32>::init(&config)?;
            if !params.tensors().iter().any(|t| &t.name == name) {
                let names: Vec<&str> = params.tensors().iter().map(|t| t.name.as_str()).collect();
                return Err(CliError::Usage(format!(
                    "no parameter array `{name}`; arrays: {}",
                    names.join(", ")
                )));
            }
            gradient_check_with(&config, a.trials, a.seed, negate_array(&params, name))?
        }
    };
    for (name, err) in &report.per_array {
        println!("array\t{name}\t{err:.3e}");
    }
    println!(
        "checked={} skipped_kinks={} zero_step_reproduces={}",
        report.checked, report.skipped_kinks, report.zero_step_reproduces
    );
    println!("max_relative_error={:.3e}", report.max_relative_error);
    if !report.passes(a.threshold as f64) {
        let worst = report
            .worst
            .as_ref()
            .map_or(String::new(), |(n, i)| format!(" at {n}[{i}]"));
        return Err(CliError::Runtime(format!(
            "gradient check failed: max relative error {:.3e}{worst} is not below {:.1e}",
            report.max_relative_error, a.threshold
        )));
    }
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult {
    let bind: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .or_else(|_| {
            std::net::ToSocketAddrs::to_socket_addrs(&(a.host.as_str(), a.port))
                .ok()
                .and_then(|mut it| it.next())
                .ok_or(())
        })
        .map_err(|_| CliError::Usage(format!("cannot resolve host `{}`", a.host)))?;
    if a.max_steps < 2 {
        return Err(CliError::Usage(format!("--max-steps must be at least 2, got {}", a.max_steps)));
    }
    let config = ServiceConfig {
        checkpoint: a.checkpoint,
        catalog: a.catalog,
        source_font: a.source_font,
        bind,
        limits: Limits {
            max_chars: a.max_chars,
            max_steps: a.max_steps,
        },
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime
        .block_on(glyphforge_service::run(
            config,
            async {
                let _ = tokio::signal::ctrl_c().await;
            },
            |addr| eprintln!("listening on http://{addr}"),
        ))
        .map_err(|e| CliError::Runtime(e.to_string()))
}
