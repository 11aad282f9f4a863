//! `maxsat`: dataset generation, labeling, training, evaluation and self-checks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::builder::RangedU64ValueParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use maxsat_cli::checks::{self, Check};
use maxsat_core::cnf::parse_dimacs;
use maxsat_core::dla::{run_dla, PickPolicy};
use maxsat_core::exact::{label_dataset, label_path, solve_branch_bound};
use maxsat_core::generator::{generate_dataset, DatasetManifest, GenSpec, Split};
use maxsat_core::CnfFormula;
use maxsat_gnn::checkpoint::Checkpoint;
use maxsat_gnn::data::{LabeledDataset, LabeledInstance};
use maxsat_gnn::experiments::{cross_eval, layer_sweep, render_sweep, sweep_tsv};
use maxsat_gnn::metrics::{evaluate, evaluate_baseline, Baseline};
use maxsat_gnn::model::{ModelConfig, ModelKind};
use maxsat_gnn::train::{render_log, train, TrainConfig, LOG_HEADER};

#[derive(Parser, Debug)]
#[command(
    name = "maxsat",
    version,
    about = "Learned MaxSAT solution prediction on factor graphs"
)]
struct Cli {
    /// Worker threads for parallel sections (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random Max-kSAT dataset with train/val/test splits.
    Gen {
        #[arg(long, value_parser = positive())]
        k: usize,
        #[arg(long, value_parser = positive())]
        n: usize,
        #[arg(long, value_parser = positive())]
        m: usize,
        #[arg(long, value_parser = positive())]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve every instance of a dataset exactly and write labels.txt.
    Label {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train a model on a labeled dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint and the fixed baselines on a labeled dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long, default_value_t = 0)]
        eval_seed: u64,
        #[arg(long, default_value_t = 4000, value_parser = positive())]
        node_cap: usize,
    },
    /// Run the one-round local algorithm on a DIMACS file.
    Dla {
        #[arg(long)]
        cnf: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::First)]
        policy: PolicyArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve a DIMACS file exactly.
    Exact {
        #[arg(long)]
        cnf: PathBuf,
    },
    /// Train one model per message-passing depth and compare on the test split.
    Sweep {
        #[command(flatten)]
        train: TrainArgsNoDepth,
        #[arg(long = "T-list", value_delimiter = ',', required = true, value_parser = positive())]
        layers: Vec<usize>,
        /// Also write the table as TSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate every checkpoint on every dataset.
    Cross {
        #[arg(long, value_delimiter = ',', required = true)]
        ckpts: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long, default_value_t = 0)]
        eval_seed: u64,
        #[arg(long, default_value_t = 4000, value_parser = positive())]
        node_cap: usize,
        /// Also write the grid as TSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suites at reduced size.
    Selftest,
}

fn positive() -> RangedU64ValueParser<usize> {
    RangedU64ValueParser::new().range(1..)
}

#[derive(Args, Debug, Clone)]
struct TrainArgsNoDepth {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long = "d", default_value_t = 64, value_parser = positive())]
    dim: usize,
    #[arg(long, default_value_t = 2e-5)]
    lr: f32,
    #[arg(long, default_value_t = 1e-10)]
    wd: f32,
    #[arg(long, default_value_t = 150, value_parser = positive())]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    eval_seed: u64,
    #[arg(long, default_value_t = 4000, value_parser = positive())]
    node_cap: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: TrainArgsNoDepth,
    #[arg(long = "T", default_value_t = 10, value_parser = positive())]
    layers: usize,
    /// Checkpoint of the best-validation epoch.
    #[arg(long)]
    out: PathBuf,
    /// Training log (defaults to `<out>.log.tsv`).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Nsfg,
    Esfg,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Nsfg => ModelKind::Nsfg,
            ModelArg::Esfg => ModelKind::Esfg,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl SplitArg {
    fn select(self, ds: &LabeledDataset) -> Vec<LabeledInstance> {
        match self {
            SplitArg::Train => ds.split(Split::Train),
            SplitArg::Val => ds.split(Split::Val),
            SplitArg::Test => ds.split(Split::Test),
            SplitArg::All => ds.instances.clone(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Val => "val",
            SplitArg::Test => "test",
            SplitArg::All => "all",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    First,
    Random,
}

impl TrainArgsNoDepth {
    fn config(&self, layers: usize) -> Result<TrainConfig> {
        let model = ModelConfig::new(self.model.into(), self.dim, layers, self.seed)?;
        let cfg = TrainConfig {
            model,
            lr: self.lr,
            weight_decay: self.wd,
            epochs: self.epochs,
            node_cap: self.node_cap,
            seed: self.seed,
            eval_seed: self.eval_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn describe(&self) -> String {
        format!(
            "manifest={} model={} d={} lr={:e} wd={:e} epochs={} seed={} eval_seed={} node_cap={}",
            self.manifest.display(),
            ModelKind::from(self.model),
            self.dim,
            self.lr,
            self.wd,
            self.epochs,
            self.seed,
            self.eval_seed,
            self.node_cap
        )
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("configuring the thread pool")?;
    match cli.command {
        Command::Gen {
            k,
            n,
            m,
            count,
            seed,
            out,
        } => cmd_gen(k, n, m, count, seed, &out),
        Command::Label { manifest } => cmd_label(&manifest),
        Command::Train(args) => cmd_train(&args),
        Command::Eval {
            ckpt,
            manifest,
            split,
            eval_seed,
            node_cap,
        } => cmd_eval(&ckpt, &manifest, split, eval_seed, node_cap),
        Command::Dla { cnf, policy, seed } => cmd_dla(&cnf, policy, seed),
        Command::Exact { cnf } => cmd_exact(&cnf),
        Command::Sweep { train, layers, out } => cmd_sweep(&train, &layers, out.as_deref()),
        Command::Cross {
            ckpts,
            manifests,
            split,
            eval_seed,
            node_cap,
            out,
        } => cmd_cross(&ckpts, &manifests, split, eval_seed, node_cap, out.as_deref()),
        Command::Selftest => cmd_selftest(),
    }
}

fn read_cnf(path: &Path) -> Result<CnfFormula> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_dimacs(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    LabeledDataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen(k: usize, n: usize, m: usize, count: usize, seed: u64, out: &Path) -> Result<()> {
    println!(
        "# gen k={k} n={n} m={m} count={count} seed={seed} out={}",
        out.display()
    );
    let spec = GenSpec::new(k, n, m, seed)?;
    let manifest = generate_dataset(&spec, count, out)?;
    let (train, val, test) = manifest.split_counts();
    println!(
        "wrote {count} instances of {} to {} (train {train}, val {val}, test {test})",
        spec.label(),
        out.display()
    );
    Ok(())
}

fn cmd_label(path: &Path) -> Result<()> {
    println!("# label manifest={}", path.display());
    let manifest = DatasetManifest::load(path)?;
    let start = Instant::now();
    let records = label_dataset(&manifest)?;
    let mean = records.iter().map(|r| r.optimum as f64).sum::<f64>() / records.len().max(1) as f64;
    println!(
        "labeled {} instances of {}; mean optimum {mean:.2}; labels in {}",
        records.len(),
        manifest.spec.label(),
        label_path(&manifest).display()
    );
    eprintln!("label time {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.log.tsv", args.out.display())));
    println!(
        "# train {} T={} out={} log={}",
        args.common.describe(),
        args.layers,
        args.out.display(),
        log_path.display()
    );
    let config = args.common.config(args.layers)?;
    let ds = load_dataset(&args.common.manifest)?;
    let train_set = ds.split(Split::Train);
    let val_set = ds.split(Split::Val);
    let test_set = ds.split(Split::Test);
    println!(
        "dataset {}: train {}, val {}, test {}",
        ds.name,
        train_set.len(),
        val_set.len(),
        test_set.len()
    );
    println!("{LOG_HEADER}");
    let start = Instant::now();
    let outcome = train(&config, &train_set, &val_set, |r| {
        println!("{}", r.render());
        eprintln!("epoch {} done at {:.1}s", r.epoch, start.elapsed().as_secs_f64());
    })?;
    outcome.best.save(&args.out)?;
    write_file(&log_path, &render_log(&outcome.log))?;
    println!("best epoch {}", outcome.best_epoch);
    if !test_set.is_empty() {
        let model = evaluate(
            &outcome.best.params,
            &outcome.best.config,
            &test_set,
            config.eval_seed,
            config.node_cap,
        )?;
        let dla = evaluate_baseline(&test_set, Baseline::Dla);
        println!("test {}: {}", config.model.kind.display_name(), model.cell());
        println!("test DLA: {}", dla.cell());
    }
    Ok(())
}

fn cmd_eval(ckpt: &Path, manifest: &Path, split: SplitArg, eval_seed: u64, node_cap: usize) -> Result<()> {
    println!(
        "# eval ckpt={} manifest={} split={} eval_seed={eval_seed} node_cap={node_cap}",
        ckpt.display(),
        manifest.display(),
        split.name()
    );
    let ck = Checkpoint::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let ds = load_dataset(manifest)?;
    let insts = split.select(&ds);
    if insts.is_empty() {
        bail!("split `{}` of {} is empty", split.name(), manifest.display());
    }
    println!(
        "model {} d={} T={} on {} {} ({} instances)",
        ck.config.kind.display_name(),
        ck.config.dim,
        ck.config.layers,
        ds.name,
        split.name(),
        insts.len()
    );
    println!("{:<12} gap (ratio) / accuracy", "solver");
    let model = evaluate(&ck.params, &ck.config, &insts, eval_seed, node_cap)?;
    println!("{:<12} {}", ck.config.kind.display_name(), model.cell());
    for b in [Baseline::Dla, Baseline::AllTrue, Baseline::Random(eval_seed)] {
        println!("{:<12} {}", b.to_string(), evaluate_baseline(&insts, b).cell());
    }
    Ok(())
}

fn cmd_dla(cnf: &Path, policy: PolicyArg, seed: u64) -> Result<()> {
    let name = match policy {
        PolicyArg::First => "first",
        PolicyArg::Random => "random",
    };
    println!("# dla cnf={} policy={name} seed={seed}", cnf.display());
    let f = read_cnf(cnf)?;
    let pick = match policy {
        PolicyArg::First => PickPolicy::FirstLiteral,
        PolicyArg::Random => PickPolicy::SeededRandom(seed),
    };
    let out = run_dla(&f, pick);
    let eval = f.eval(&out.assignment)?;
    println!("assignment {}", out.assignment.to_bits());
    println!("satisfied {}/{}", eval.satisfied, f.num_clauses());
    Ok(())
}

fn cmd_exact(cnf: &Path) -> Result<()> {
    println!("# exact cnf={}", cnf.display());
    let f = read_cnf(cnf)?;
    let r = solve_branch_bound(&f);
    println!("optimum {}", r.optimum);
    println!("witness {}", r.witness.to_bits());
    println!("clauses {}", f.num_clauses());
    Ok(())
}

fn cmd_sweep(args: &TrainArgsNoDepth, layers: &[usize], out: Option<&Path>) -> Result<()> {
    let list: Vec<String> = layers.iter().map(usize::to_string).collect();
    println!(
        "# sweep {} T-list={} out={}",
        args.describe(),
        list.join(","),
        out.map_or("-".into(), |p| p.display().to_string())
    );
    let base = args.config(layers.first().copied().unwrap_or(1))?;
    for &t in layers {
        ModelConfig {
            layers: t,
            ..base.model
        }
        .validate()?;
    }
    let ds = load_dataset(&args.manifest)?;
    let test = ds.split(Split::Test);
    let rows = layer_sweep(
        &base,
        &ds.split(Split::Train),
        &ds.split(Split::Val),
        &test,
        layers,
        |t, r| {
            eprintln!("T={t} {}", r.render());
        },
    )?;
    print!("{}", render_sweep(&rows));
    println!(
        "DLA baseline on {} test: {}",
        ds.name,
        evaluate_baseline(&test, Baseline::Dla).cell()
    );
    if let Some(path) = out {
        write_file(path, &sweep_tsv(&rows))?;
    }
    Ok(())
}

fn cmd_cross(
    ckpts: &[PathBuf],
    manifests: &[PathBuf],
    split: SplitArg,
    eval_seed: u64,
    node_cap: usize,
    out: Option<&Path>,
) -> Result<()> {
    let join = |ps: &[PathBuf]| ps.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",");
    println!(
        "# cross ckpts={} manifests={} split={} eval_seed={eval_seed} node_cap={node_cap}",
        join(ckpts),
        join(manifests),
        split.name()
    );
    let models = ckpts
        .iter()
        .map(|p| {
            let ck = Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?;
            let stem = p
                .file_stem()
                .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            Ok((stem, ck))
        })
        .collect::<Result<Vec<_>>>()?;
    let datasets = manifests
        .iter()
        .map(|p| {
            let ds = load_dataset(p)?;
            let insts = split.select(&ds);
            if insts.is_empty() {
                bail!("split `{}` of {} is empty", split.name(), p.display());
            }
            Ok((ds.name.clone(), insts))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = cross_eval(&models, &datasets, eval_seed, node_cap)?;
    print!("{}", table.render());
    if let Some(path) = out {
        write_file(path, &table.tsv())?;
    }
    Ok(())
}

fn cmd_selftest() -> Result<()> {
    println!("# selftest");
    let mut results: Vec<Check> = Vec::new();
    let mut record = |c: Check| {
        println!("{}", c.line());
        results.push(c);
    };

    let small = checks::dla_exhaustive(3, 3, &[1, 2], 1);
    let random = checks::dla_random(2000, 1);
    record(Check::new(
        "dla half bound",
        small.violations + random.violations == 0,
        format!(
            "{} exhaustive + {} random formulas, {} violations",
            small.formulas,
            random.formulas,
            small.violations + random.violations
        ),
    ));

    let oracle = checks::oracle_equivalence(200, 1)?;
    record(Check::new(
        "oracle equivalence",
        oracle.mismatches == 0 && oracle.bad_witnesses == 0,
        format!(
            "{} instances, {} mismatches, {} bad witnesses",
            oracle.instances, oracle.mismatches, oracle.bad_witnesses
        ),
    ));

    for kind in [ModelKind::Nsfg, ModelKind::Esfg] {
        let (err, name) = checks::gradient_check(kind, 2)?;
        record(Check::new(
            format!("gradient check {}", kind.display_name()),
            err < 1e-4,
            format!("max relative error {err:.2e} ({name})"),
        ));
        let diff = checks::batch_equivalence(kind, 8)?;
        record(Check::new(
            format!("batch equivalence {}", kind.display_name()),
            diff <= 1e-5,
            format!("max |Δlogit| {diff:.2e}"),
        ));
        let ok = checks::checkpoint_round_trip(kind).map_err(|e| anyhow::anyhow!(e))?;
        record(Check::new(
            format!("checkpoint round trip {}", kind.display_name()),
            ok,
            if ok { "bit-exact" } else { "mismatch" },
        ));
    }

    let (bce, adam) = (checks::bce_oracle_error(), checks::adam_oracle_error());
    record(Check::new(
        "loss and optimizer oracles",
        bce < 1e-6 && adam < 1e-6,
        format!("|bce - ln2| {bce:.1e}, |adam - 0.9| {adam:.1e}"),
    ));

    let failed = results.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", results.len());
    if failed > 0 {
        bail!("{failed} self-checks failed");
    }
    Ok(())
}
