//! `ising-scan`: sampling, scan tests, estimation and risk sweeps from the command line.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ising_scan::adaptive::{fit_beta_pseudolikelihood, regime_classifier, DependenceRegime};
use ising_scan::classes::apply_signal;
use ising_scan::detectors::TestDecision;
use ising_scan::mean_field::figure1_table;
use ising_scan::model::read_graph;
use ising_scan::oracle::invariant_suite;
use ising_scan::risk::{build_class, build_graph, sweep_phase_diagram, ClassKind, ClassPlan, ExperimentPlan, Family, ModelPlan, PreparedTest, TestName, TestPlan};
use ising_scan::samplers::{read_samples_csv, sample_model, write_samples_csv, SamplerKind};
use ising_scan::susceptibility::{beta_c_2d, chi_monotonicity_sweep, estimate_chi, write_sweep_csv, ChiConfig, SweepRow};
use ising_scan::{rng, Boundary, CouplingGraph, GraphKind, ModelSpec, SignalSpec};

#[derive(Parser)]
#[command(name = "ising-scan", version, about = "Scan tests for sparse signals in Ising-model data")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw configurations from a model and write them as CSV.
    Sample(SampleArgs),
    /// Apply a test to every configuration of a sample file.
    Test(TestArgs),
    /// Pseudo-likelihood estimate of beta for every configuration of a sample file.
    EstimateBeta(EstimateArgs),
    /// Susceptibility of a lattice at a list of inverse temperatures.
    Susceptibility(SusceptibilityArgs),
    /// Monte Carlo risk over the (beta, c) grid of a plan file.
    Sweep(SweepArgs),
    /// Magnetization and sharp constant on a beta grid.
    Figure1(Figure1Args),
    /// Run the exact-enumeration inequality suite.
    OracleCheck(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    CurieWeiss,
    ErdosRenyi,
    RandomRegular,
    Lattice,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Free,
    Plus,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Free => Boundary::Free,
            BoundaryArg::Plus => Boundary::Plus,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Graph file (overrides --family).
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long)]
    n: Option<usize>,
    /// Edge probability for erdos-renyi.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    side: Option<usize>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, value_enum, default_value = "free")]
    boundary: BoundaryArg,
    /// auto, glauber, sw or exact.
    #[arg(long, default_value = "auto")]
    sampler: SamplerKind,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thinning: Option<usize>,
}

impl ModelArgs {
    fn plan(&self) -> anyhow::Result<ModelPlan> {
        let Some(family) = self.family else { bail!(Usage("give --graph or --family".into())) };
        let family = match family {
            FamilyArg::CurieWeiss => Family::CurieWeiss,
            FamilyArg::ErdosRenyi => Family::ErdosRenyi,
            FamilyArg::RandomRegular => Family::RandomRegular,
            FamilyArg::Lattice => Family::Lattice,
        };
        let missing = match family {
            Family::CurieWeiss => [("--n", self.n.is_none()), ("", false)],
            Family::ErdosRenyi => [("--n", self.n.is_none()), ("--p", self.p.is_none())],
            Family::RandomRegular => [("--n", self.n.is_none()), ("--degree", self.degree.is_none())],
            Family::Lattice => [("--side", self.side.is_none()), ("", false)],
        };
        if let Some((flag, _)) = missing.iter().find(|(_, absent)| *absent) {
            bail!(Usage(format!("this model family needs {flag}")));
        }
        Ok(ModelPlan {
            family,
            n: self.n,
            p: self.p,
            degree: self.degree,
            side: self.side,
            dim: Some(self.dim),
            boundary: Some(self.boundary.into()),
            sampler: self.sampler,
            burn_in: self.burn_in,
            thinning: self.thinning,
        })
    }

    /// Random graph families need `seed`; the others ignore it.
    fn graph(&self, seed: Option<u64>) -> anyhow::Result<CouplingGraph> {
        if let Some(path) = &self.graph {
            return Ok(read_graph(BufReader::new(open(path)?))?);
        }
        let plan = self.plan()?;
        let random = matches!(plan.family, Family::ErdosRenyi | Family::RandomRegular);
        let seed = match (random, seed) {
            (true, None) => bail!(Usage("random graph families need --seed".into())),
            (_, s) => s.unwrap_or(0),
        };
        Ok(build_graph(&plan, seed)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    ContiguousBlocks,
    Disjoint,
    ScanGrid,
    Rectangle,
    File,
}

#[derive(Args)]
struct ClassArgs {
    #[arg(long = "class", value_enum, default_value = "contiguous-blocks")]
    kind: ClassArg,
    /// Candidate size.
    #[arg(long, default_value_t = 0)]
    s: usize,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    cover_eps: Option<f64>,
    #[arg(long)]
    class_file: Option<PathBuf>,
}

impl ClassArgs {
    fn plan(&self) -> ClassPlan {
        ClassPlan {
            kind: match self.kind {
                ClassArg::ContiguousBlocks => ClassKind::ContiguousBlocks,
                ClassArg::Disjoint => ClassKind::Disjoint,
                ClassArg::ScanGrid => ClassKind::ScanGrid,
                ClassArg::Rectangle => ClassKind::Rectangle,
                ClassArg::File => ClassKind::File,
            },
            s: self.s,
            count: self.count,
            eta: self.eta,
            cover_eps: self.cover_eps,
            path: self.class_file.as_ref().map(|p| p.display().to_string()),
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    beta: f64,
    /// Field strength on the signal support.
    #[arg(long, default_value_t = 0.0)]
    signal_a: f64,
    /// Signal support as comma-separated sites.
    #[arg(long, value_delimiter = ',')]
    signal_sites: Vec<u32>,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    HighTempScan,
    LowTempRandomizedScan,
    LatticeScan,
    CenteredSum,
    Bonferroni,
    AdaptiveMeanField,
}

#[derive(Args)]
struct TestArgs {
    /// Sample CSV, one configuration per line.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    class: ClassArgs,
    #[arg(long = "test", value_enum)]
    test: TestArg,
    /// Inverse temperature the test is calibrated for (ignored by the adaptive test).
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    #[arg(long)]
    chi: Option<f64>,
    #[arg(long)]
    multiplier: Option<f64>,
    #[arg(long, default_value_t = 200)]
    centering_draws: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Sites held at +1 and left out of the score.
    #[arg(long, value_delimiter = ',')]
    pin: Vec<usize>,
    /// Needed only for random graph families.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SusceptibilityArgs {
    #[arg(long)]
    side: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, value_enum, default_value = "free")]
    boundary: BoundaryArg,
    #[arg(long, value_delimiter = ',', required = true)]
    betas: Vec<f64>,
    /// Block size; the block is the smallest cube holding at least this many sites.
    #[arg(long)]
    s: usize,
    #[arg(long, default_value_t = 20)]
    replications: usize,
    #[arg(long, default_value_t = 100)]
    draws: usize,
    /// Critical point, required for dim != 2.
    #[arg(long)]
    beta_c: Option<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML plan file.
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Figure1Args {
    #[arg(long, default_value_t = 3.0)]
    beta_max: f64,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 8)]
    max_n: usize,
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Configuration mistakes caught after parsing; reported with the usage exit code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn sample(a: &SampleArgs) -> anyhow::Result<()> {
    let graph = Arc::new(a.model.graph(Some(a.seed))?);
    let field = if a.signal_sites.is_empty() {
        if a.signal_a != 0.0 {
            bail!(Usage("--signal-a needs --signal-sites".into()));
        }
        SignalSpec::null(graph.n())
    } else {
        apply_signal(graph.n(), &a.signal_sites, a.signal_a)?
    };
    let model = ModelSpec::new(graph, a.beta, field)?;
    let kind = a.model.sampler.resolve(&model);
    let mut chain = kind.default_chain();
    if let Some(b) = a.model.burn_in {
        chain.burn_in_sweeps = b;
    }
    if let Some(t) = a.model.thinning {
        chain.thinning_sweeps = t;
    }
    let mut gen = rng::replication_stream(a.seed, rng::cell_tag("sample"), 0);
    let draws = sample_model(&model, kind, &chain, a.count, &mut gen)?;
    let mut out = output(&a.out)?;
    write_samples_csv(&draws, &mut out)?;
    out.flush()?;
    Ok(())
}

fn test(a: &TestArgs) -> anyhow::Result<()> {
    let samples = read_samples_csv(BufReader::new(open(&a.input)?))?;
    let graph = Arc::new(a.model.graph(Some(a.seed))?);
    let class = build_class(&a.class.plan(), &graph)?;
    let name = match a.test {
        TestArg::HighTempScan => TestName::HighTempScan,
        TestArg::LowTempRandomizedScan => TestName::LowTempRandomizedScan,
        TestArg::LatticeScan => TestName::LatticeScan,
        TestArg::CenteredSum => TestName::CenteredSum,
        TestArg::Bonferroni => TestName::Bonferroni,
        TestArg::AdaptiveMeanField => TestName::AdaptiveMeanField,
    };
    let plan = TestPlan { name, delta: a.delta, chi: a.chi, multiplier: a.multiplier, centering_draws: a.centering_draws };
    let model_plan = match &a.model.graph {
        Some(_) => ModelPlan {
            family: match graph.kind() {
                GraphKind::Complete => Family::CurieWeiss,
                GraphKind::ErdosRenyi { .. } => Family::ErdosRenyi,
                GraphKind::RandomRegular { .. } => Family::RandomRegular,
                GraphKind::Lattice { .. } => Family::Lattice,
            },
            n: Some(graph.n()),
            p: None,
            degree: None,
            side: None,
            dim: None,
            boundary: Some(graph.boundary()),
            sampler: a.model.sampler,
            burn_in: a.model.burn_in,
            thinning: a.model.thinning,
        },
        None => a.model.plan()?,
    };
    let null = ModelSpec::null(graph, a.beta)?;
    let prepared = PreparedTest::new(&plan, &model_plan, &null, &class, a.seed)?;
    let tag = rng::cell_tag("test");
    let mut out = output(&a.out)?;
    writeln!(out, "index,{}", TestDecision::CSV_HEADER)?;
    for (k, x) in samples.iter().enumerate() {
        let decision = prepared.decide(x, &class, a.delta, &mut rng::replication_stream(a.seed, tag, k as u64))?;
        writeln!(out, "{k},{}", decision.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

fn estimate_beta(a: &EstimateArgs) -> anyhow::Result<()> {
    let samples = read_samples_csv(BufReader::new(open(&a.input)?))?;
    let graph = a.model.graph(a.seed)?;
    let mut out = output(&a.out)?;
    writeln!(out, "index,beta_hat,residual,iterations,clamp,regime")?;
    for (k, x) in samples.iter().enumerate() {
        let fit = fit_beta_pseudolikelihood(x, &graph, &a.pin)?;
        let clamp = fit.clamp.map_or("none".to_string(), |c| format!("{c:?}").to_lowercase());
        let regime = if graph.is_complete() {
            match regime_classifier(x)? {
                DependenceRegime::LowOrCritical => "low_or_critical".to_string(),
                DependenceRegime::HighDependence => "high_dependence".to_string(),
            }
        } else {
            "NA".to_string()
        };
        writeln!(out, "{k},{:.6},{:.3e},{},{clamp},{regime}", fit.beta_hat, fit.residual, fit.iterations)?;
    }
    out.flush()?;
    Ok(())
}

fn susceptibility(a: &SusceptibilityArgs) -> anyhow::Result<()> {
    let config = ChiConfig { replications: a.replications, draws_per_replication: a.draws, ..ChiConfig::default() };
    let critical = a.beta_c.or((a.dim == 2).then(beta_c_2d));
    let boundary: Boundary = a.boundary.into();
    let rows = if critical.is_some_and(|bc| a.betas.iter().all(|&b| b < bc)) {
        let rows = chi_monotonicity_sweep(a.side, a.dim, boundary, &a.betas, a.s, &config, a.seed, critical)?;
        for pair in rows.windows(2).filter(|p| p[1].violation) {
            eprintln!("warning: chi falls from beta {} to {}", pair[0].estimate.beta, pair[1].estimate.beta);
        }
        rows
    } else {
        // Above the critical point the monotonicity check does not apply.
        let graph = Arc::new(ising_scan::model::build_lattice(a.side, a.dim, boundary)?);
        a.betas
            .iter()
            .map(|&beta| {
                let model = ModelSpec::null(graph.clone(), beta)?;
                Ok(SweepRow { estimate: estimate_chi(&model, a.s, &config, a.seed)?, violation: false })
            })
            .collect::<ising_scan::Result<Vec<_>>>()?
    };
    let mut out = output(&a.out)?;
    write_sweep_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&a.plan).with_context(|| format!("cannot read {}", a.plan.display()))?;
    let plan = ExperimentPlan::from_toml(&text)?;
    let mut out = output(&a.out)?;
    let (report, flags) = sweep_phase_diagram(&plan, a.seed, &mut out)?;
    out.flush()?;
    for r in report.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("cell beta={} c={}: {}", r.beta, r.c, r.error.as_deref().unwrap_or_default());
    }
    for f in &flags {
        eprintln!("trend: at c={} risk falls from {:.3} (beta {}) to {:.3} (beta {})", f.c, f.risk_from, f.beta_from, f.risk_to, f.beta_to);
    }
    eprintln!("{} cells in {:.1}s", report.rows.len(), report.runtime_secs);
    Ok(())
}

fn figure1(a: &Figure1Args) -> anyhow::Result<()> {
    let rows = figure1_table(0.0, a.beta_max, a.steps)?;
    let mut out = output(&a.out)?;
    writeln!(out, "beta,m,constant")?;
    for r in rows {
        writeln!(out, "{:.6},{:.12},{:.12}", r.beta, r.m, r.constant)?;
    }
    out.flush()?;
    Ok(())
}

fn oracle_check(a: &OracleArgs) -> anyhow::Result<()> {
    let checks = invariant_suite(a.max_n, a.instances, a.seed)?;
    let mut out = output(&a.out)?;
    writeln!(out, "check,instances,worst_violation,tolerance,passed")?;
    for c in &checks {
        writeln!(out, "{},{},{:.3e},{:.1e},{}", c.name, c.instances, c.worst_violation, c.tolerance, c.passed() as u8)?;
    }
    out.flush()?;
    if let Some(c) = checks.iter().find(|c| !c.passed()) {
        bail!("invariant {} violated by {:.3e}", c.name, c.worst_violation);
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(k) = cli.threads {
        if k == 0 {
            bail!(Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    }
    match &cli.command {
        Command::Sample(a) => sample(a),
        Command::Test(a) => test(a),
        Command::EstimateBeta(a) => estimate_beta(a),
        Command::Susceptibility(a) => susceptibility(a),
        Command::Sweep(a) => sweep(a),
        Command::Figure1(a) => figure1(a),
        Command::OracleCheck(a) => oracle_check(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
