use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use seedsched::config::{CampaignFile, ExperimentKind, ExperimentSpec};
use seedsched::experiment::{effectiveness, feature_importance, reusability, transferability, TRAINING_REPETITION};
use seedsched::learning::{load_model, save_model, ModelBundle};
use seedsched::program::{preset, preset_names, save_program, ProgramModel, ProgramSource};
use seedsched::sim::{derive_campaign_seed, write_dispatch_csv, write_stats_csv, write_training_csv};
use seedsched::{run_campaign, CampaignStats, PolicyKind, FEATURE_NAMES};
use serde_json::json;

/// Learned seed scheduling for hybrid fuzzing, on simulated campaigns.
#[derive(Parser, Debug)]
#[command(name = "seedsched", version, about)]
struct Cli {
    /// Campaign seed for `run`, base seed for `experiment`, generator seed
    /// for `gen`
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Worker threads for parallel campaigns (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a program model file and print its summary
    Gen(GenArgs),
    /// Run one campaign
    Run(RunArgs),
    /// Run an experiment battery
    Experiment(ExperimentArgs),
    /// Inspect or check model files
    #[command(subcommand)]
    Model(ModelCommand),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Named preset
    #[arg(long, conflicts_with = "source")]
    preset: Option<String>,

    /// Program source string (`preset:<name>[@seed]`, `gen:k=v,...@seed` or a path)
    #[arg(long)]
    source: Option<String>,

    /// Output file (default: `<out>/<name>.toml`)
    #[arg(long)]
    file: Option<PathBuf>,

    /// List the presets and exit
    #[arg(long)]
    list: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Program source: a model file, `preset:<name>[@seed]` or `gen:...@seed`
    #[arg(long)]
    program: Option<String>,

    /// random, afl, meuzz-ol, meuzz-rf or meuzz-en
    #[arg(long)]
    policy: Option<PolicyKind>,

    #[arg(long)]
    ticks: Option<u64>,

    /// Campaign TOML file; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,

    /// Model file to start from
    #[arg(long)]
    init_model: Option<PathBuf>,

    #[arg(long)]
    repetition: Option<u32>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// effectiveness, reusability, transferability or feature-importance
    kind: Option<ExperimentKind>,

    /// Experiment TOML file; flags override its fields
    #[arg(long)]
    spec: Option<PathBuf>,

    /// Program sources, space-separated
    #[arg(long, num_args = 1..)]
    programs: Vec<String>,

    /// Comma-separated policies
    #[arg(long, value_delimiter = ',')]
    policies: Vec<PolicyKind>,

    #[arg(long)]
    reps: Option<u32>,

    #[arg(long)]
    ticks: Option<u64>,

    /// Baseline policy for effectiveness p-values
    #[arg(long)]
    baseline: Option<PolicyKind>,

    /// Directory of pre-trained `<program>.model` files for transfer runs
    #[arg(long)]
    models_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum ModelCommand {
    /// Print a model file's contents
    Inspect { path: PathBuf },
    /// Check that a model file decodes
    Validate { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Gen(args) => gen(args, cli.seed, &cli.out),
        Command::Run(args) => run(args, cli.seed, &cli.out),
        Command::Experiment(args) => experiment(args, cli.seed, &cli.out),
        Command::Model(cmd) => model(cmd),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn gen(args: GenArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    if args.list {
        for name in preset_names() {
            let p = preset(name)?;
            println!("{name:<18} {}", p.description);
        }
        return Ok(());
    }
    let source = match (&args.preset, &args.source) {
        (Some(name), None) => {
            preset(name)?;
            ProgramSource::Preset {
                name: name.clone(),
                seed,
            }
        }
        (None, Some(s)) => match s.parse()? {
            ProgramSource::Preset { name, seed: own } => ProgramSource::Preset {
                name,
                seed: seed.or(own),
            },
            ProgramSource::Generated { params, seed: own } => ProgramSource::Generated {
                params,
                seed: seed.unwrap_or(own),
            },
            path => path,
        },
        _ => bail!("give one of --preset or --source"),
    };
    let model = source.resolve()?;
    let path = args.file.unwrap_or_else(|| out.join(format!("{}.toml", model.name())));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_program(&model, &path).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    println!("{}", model.summary().to_string().trim_end());
    Ok(())
}

fn run(args: RunArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut file = match &args.config {
        Some(p) => CampaignFile::load(p)?,
        None => CampaignFile::default(),
    };
    if args.program.is_some() {
        file.program = args.program;
    }
    if args.policy.is_some() {
        file.policy = args.policy;
    }
    if let Some(t) = args.ticks {
        file.ticks = t;
    }
    if let Some(r) = args.repetition {
        file.repetition = r;
    }
    if seed.is_some() {
        file.seed = seed;
    }
    if args.init_model.is_some() {
        file.init_model = args.init_model;
    }
    let cfg = file.resolve()?;
    if let (Some(path), Some(m)) = (&file.init_model, &cfg.init_model) {
        eprintln!(
            "loaded model {} ({} model, {} features)",
            path.display(),
            m.kind(),
            m.dim()
        );
    }
    let stats = run_campaign(&cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = create(&out.join("stats.csv"))?;
    write_stats_csv(&mut w, std::slice::from_ref(&stats))?;
    w.flush()?;
    let mut w = create(&out.join("dispatch.csv"))?;
    write_dispatch_csv(&mut w, &stats)?;
    w.flush()?;
    let mut w = create(&out.join("training.csv"))?;
    write_training_csv(&mut w, &stats)?;
    w.flush()?;
    write_json(&out.join("summary.json"), &serde_json::to_value(stats.summary())?)?;
    if let Some(m) = &stats.models {
        save_model(m, out.join("model.bin"))?;
    }
    println!(
        "{} on {}: covered {} of {} branches after {} ticks ({} dispatches, {} concolic imports)",
        stats.policy,
        stats.program,
        stats.final_coverage(),
        cfg.program.branch_count(),
        stats.coverage.len(),
        stats.dispatches.len(),
        stats.concolic_imports,
    );
    Ok(())
}

fn experiment(args: ExperimentArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let mut spec: ExperimentSpec = toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            if let Some(k) = args.kind {
                spec.kind = k;
            }
            spec
        }
        None => ExperimentSpec {
            kind: args.kind.context("give an experiment kind or --spec")?,
            programs: Vec::new(),
            policies: Vec::new(),
            repetitions: 5,
            seed: 0,
            baseline: None,
            models_dir: None,
            campaign: Default::default(),
        },
    };
    if !args.programs.is_empty() {
        spec.programs = args.programs;
    }
    if !args.policies.is_empty() {
        spec.policies = args.policies;
    }
    if let Some(r) = args.reps {
        spec.repetitions = r;
    }
    if let Some(t) = args.ticks {
        spec.campaign.ticks = t;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    if args.baseline.is_some() {
        spec.baseline = args.baseline;
    }
    if args.models_dir.is_some() {
        spec.models_dir = args.models_dir;
    }
    if let Some(b) = spec.baseline {
        if !spec.policies.contains(&b) {
            spec.policies.push(b);
        }
    }
    spec.validate()?;
    let programs = spec
        .programs
        .iter()
        .map(|s| Ok(Arc::new(s.parse::<ProgramSource>()?.resolve()?)))
        .collect::<Result<Vec<Arc<ProgramModel>>>>()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match spec.kind {
        ExperimentKind::Effectiveness => run_effectiveness(&spec, &programs, out),
        ExperimentKind::Reusability => run_reusability(&spec, &programs, out),
        ExperimentKind::Transferability => run_transferability(&spec, &programs, out),
        ExperimentKind::FeatureImportance => run_importance(&spec, &programs, out),
    }
}

fn run_records(runs: &[CampaignStats]) -> Vec<serde_json::Value> {
    runs.iter()
        .map(|r| {
            json!({
                "program": r.program,
                "policy": r.policy,
                "repetition": r.repetition,
                "rng_seed": r.rng_seed,
                "final_coverage": r.final_coverage(),
            })
        })
        .collect()
}

fn learned_policy(spec: &ExperimentSpec, fallback: PolicyKind) -> Result<PolicyKind> {
    match spec.policies.iter().find(|p| p.is_learned()) {
        Some(p) => Ok(*p),
        None if spec.policies.is_empty() => Ok(fallback),
        None => bail!("{:?} experiments need a learned policy", spec.kind),
    }
}

fn run_effectiveness(spec: &ExperimentSpec, programs: &[Arc<ProgramModel>], out: &Path) -> Result<()> {
    let report = effectiveness(programs, &spec.policies, spec.repetitions, &spec.campaign, spec.seed)?;
    let comparisons: Vec<_> = report
        .comparisons
        .iter()
        .filter(|c| spec.baseline.is_none_or(|b| c.baseline == b))
        .collect();
    let mut w = create(&out.join("stats.csv"))?;
    write_stats_csv(&mut w, &report.runs)?;
    w.flush()?;
    let mut w = csv::Writer::from_writer(create(&out.join("comparisons.csv"))?);
    w.write_record([
        "program",
        "policy",
        "baseline",
        "mean_coverage",
        "baseline_mean_coverage",
        "wins",
        "u",
        "z",
        "p",
    ])?;
    for c in &comparisons {
        w.write_record([
            c.program.clone(),
            c.policy.to_string(),
            c.baseline.to_string(),
            c.mean_coverage.to_string(),
            c.baseline_mean_coverage.to_string(),
            c.wins.to_string(),
            c.test.u_a.to_string(),
            c.test.z.to_string(),
            c.test.p_two_sided.to_string(),
        ])?;
        println!(
            "{:<16} {:<9} vs {:<7} mean {:>8.1} vs {:>8.1}  wins {}/{}  p = {:.4}",
            c.program,
            c.policy,
            c.baseline,
            c.mean_coverage,
            c.baseline_mean_coverage,
            c.wins,
            spec.repetitions,
            c.test.p_two_sided
        );
    }
    w.flush()?;
    write_json(
        &out.join("report.json"),
        &json!({
            "kind": spec.kind,
            "base_seed": spec.seed,
            "spec": spec,
            "runs": run_records(&report.runs),
            "comparisons": comparisons,
        }),
    )?;
    println!("{} campaigns; results in {}", report.runs.len(), out.display());
    Ok(())
}

fn run_reusability(spec: &ExperimentSpec, programs: &[Arc<ProgramModel>], out: &Path) -> Result<()> {
    let policy = learned_policy(spec, PolicyKind::MeuzzOl)?;
    let mut w = csv::Writer::from_writer(create(&out.join("reuse.csv"))?);
    w.write_record([
        "program",
        "policy",
        "repetition",
        "rng_seed",
        "fresh",
        "reused",
        "improvement",
    ])?;
    let mut reports = Vec::new();
    for p in programs {
        let (model, r) = reusability(p, policy, spec.repetitions, &spec.campaign, spec.seed)?;
        save_model_file(&model, out, p.name())?;
        for (i, (f, u)) in r.fresh.iter().zip(&r.reused).enumerate() {
            w.write_record([
                r.program.clone(),
                policy.to_string(),
                f.repetition.to_string(),
                f.rng_seed.to_string(),
                f.final_coverage().to_string(),
                u.final_coverage().to_string(),
                r.improvements[i].to_string(),
            ])?;
        }
        println!(
            "{:<16} fresh {:>8.1}  reused {:>8.1}  mean improvement {:+.2}%",
            r.program,
            r.fresh_mean(),
            r.reused_mean(),
            r.mean_improvement
        );
        reports.push(json!({
            "program": r.program,
            "training_seed": derive_campaign_seed(spec.seed, p.name(), TRAINING_REPETITION),
            "fresh": run_records(&r.fresh),
            "reused": run_records(&r.reused),
            "improvements": r.improvements,
            "mean_improvement": r.mean_improvement,
        }));
    }
    w.flush()?;
    write_json(
        &out.join("report.json"),
        &json!({ "kind": spec.kind, "base_seed": spec.seed, "policy": policy, "spec": spec, "programs": reports }),
    )
}

fn save_model_file(model: &ModelBundle, out: &Path, program: &str) -> Result<()> {
    let dir = out.join("models");
    fs::create_dir_all(&dir)?;
    save_model(model, dir.join(format!("{program}.model")))?;
    Ok(())
}

fn run_transferability(spec: &ExperimentSpec, programs: &[Arc<ProgramModel>], out: &Path) -> Result<()> {
    let policy = learned_policy(spec, PolicyKind::MeuzzOl)?;
    let given = match &spec.models_dir {
        Some(dir) => Some(
            programs
                .iter()
                .map(|p| {
                    let path = dir.join(format!("{}.model", p.name()));
                    load_model(&path).with_context(|| format!("missing or unreadable model file {}", path.display()))
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let trained_here = given.is_none();
    let (models, matrix) = transferability(programs, policy, spec.repetitions, &spec.campaign, spec.seed, given)?;
    if trained_here {
        for (m, p) in models.iter().zip(programs) {
            save_model_file(m, out, p.name())?;
        }
    }
    let mut w = csv::Writer::from_writer(create(&out.join("transfer.csv"))?);
    let mut header = vec!["trained_on".to_string()];
    header.extend(matrix.programs.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in matrix.programs.iter().zip(&matrix.cells) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
        println!(
            "{name:<16} {}",
            row.iter().map(|v| format!("{v:>+8.2}")).collect::<String>()
        );
    }
    w.flush()?;
    let seeds: Vec<_> = programs
        .iter()
        .map(|p| {
            json!({
                "program": p.name(),
                "training_seed": trained_here.then(|| derive_campaign_seed(spec.seed, p.name(), TRAINING_REPETITION)),
                "campaign_seeds": (0..spec.repetitions).map(|r| derive_campaign_seed(spec.seed, p.name(), r)).collect::<Vec<_>>(),
            })
        })
        .collect();
    write_json(
        &out.join("report.json"),
        &json!({ "kind": spec.kind, "base_seed": spec.seed, "spec": spec, "matrix": matrix, "seeds": seeds }),
    )
}

fn run_importance(spec: &ExperimentSpec, programs: &[Arc<ProgramModel>], out: &Path) -> Result<()> {
    let policy = learned_policy(spec, PolicyKind::MeuzzEn)?;
    let rows = feature_importance(
        programs,
        policy,
        &spec.campaign,
        &spec.campaign.learning.forest,
        spec.seed,
    )?;
    let mut w = csv::Writer::from_writer(create(&out.join("importance.csv"))?);
    let mut header = vec!["program", "examples"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for r in &rows {
        let mut rec = vec![r.program.clone(), r.examples.to_string()];
        rec.extend(r.importance.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
        let top = r
            .importance
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| format!("{} ({v:.3})", FEATURE_NAMES[i]))
            .unwrap_or_default();
        println!("{:<16} {} examples, top feature {top}", r.program, r.examples);
    }
    w.flush()?;
    let seeds: Vec<_> = programs
        .iter()
        .map(|p| json!({ "program": p.name(), "campaign_seed": derive_campaign_seed(spec.seed, p.name(), 0) }))
        .collect();
    write_json(
        &out.join("report.json"),
        &json!({ "kind": spec.kind, "base_seed": spec.seed, "policy": policy, "spec": spec, "rows": rows, "seeds": seeds }),
    )
}

fn model(cmd: ModelCommand) -> Result<()> {
    match cmd {
        ModelCommand::Validate { path } => {
            let m = load_model(&path).with_context(|| format!("{}", path.display()))?;
            println!("{}: ok ({} model, {} features)", path.display(), m.kind(), m.dim());
        }
        ModelCommand::Inspect { path } => {
            let m = load_model(&path).with_context(|| format!("{}", path.display()))?;
            println!("file:       {}", path.display());
            println!("kind:       {}", m.kind());
            println!("features:   {}", m.dim());
            if let Some(log) = m.training_log_ref() {
                println!("training:   {log}");
            }
            if let Some(l) = m.linear() {
                println!("linear:     lambda {}, {} updates", l.lambda(), l.updates());
                for (name, w) in FEATURE_NAMES.iter().zip(l.weights()) {
                    println!("  {name:<24} {w:+.6}");
                }
            }
            if let Some(f) = m.forest() {
                let p = f.params();
                println!(
                    "forest:     {} trees, fitted {}, min leaf {}, features per split {}, bootstrap {}",
                    f.trees().len(),
                    f.is_fitted(),
                    p.min_samples_leaf,
                    p.features_for(f.dim()),
                    p.bootstrap
                );
                if let Ok(imp) = f.feature_importance() {
                    for (name, v) in FEATURE_NAMES.iter().zip(imp) {
                        println!("  {name:<24} {v:.4}");
                    }
                }
            }
        }
    }
    Ok(())
}
