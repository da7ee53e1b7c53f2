//! `qpm`: distances and two-sample tests between CSV point clouds, a
//! complexity benchmark, and the built-in verification suites.
//!
//! JSON goes to stdout, human-readable progress to stderr. Every output
//! document echoes the fully resolved configuration so a run can be
//! reproduced from its own report.

mod io;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qpm_core::{
    median_heuristic, mmd, qpm, verify, KernelSpec, PointSet, QpmOptions, StatisticKind,
};
use serde_json::{json, Value};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qpm", version, about = "Kernel distances between finitely supported measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distance between two CSV point clouds.
    Distance(DistanceArgs),
    /// Permutation two-sample test between two CSV point clouds.
    Test(TestArgs),
    /// Timing sweep with fitted log-log exponents.
    Bench(BenchArgs),
    /// Built-in verification suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

impl Toggle {
    fn on(self) -> bool {
        self == Toggle::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StatArg {
    Mmd,
    Qpm,
}

impl From<StatArg> for StatisticKind {
    fn from(s: StatArg) -> Self {
        match s {
            StatArg::Mmd => StatisticKind::Mmd,
            StatArg::Qpm => StatisticKind::Qpm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelArg {
    Auto,
    Gaussian,
    Laplacian,
    Imq,
    Mixture,
}

#[derive(Args, Debug)]
struct KernelFlags {
    /// Kernel family; `auto` is a Gaussian with the median-distance heuristic.
    #[arg(long, value_enum, default_value_t = KernelArg::Auto)]
    kernel: KernelArg,
    /// Length scale: the Gaussian evaluates exp(-||x-y||^2 / length_scale).
    #[arg(long)]
    length_scale: Option<f64>,
    /// Gaussian bandwidth sigma; sets length_scale = sigma^2.
    #[arg(long)]
    sigma: Option<f64>,
    /// Exponent of the generalized inverse-multiquadric kernel.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Mixture components as sigma^2 values (equal weights,
    /// length_scale = 2 * sigma^2 each).
    #[arg(long, value_delimiter = ',', default_value = "2,5,10,20,40,80")]
    mixture_sigma2: Vec<f64>,
}

#[derive(Args, Debug)]
struct InputFlags {
    /// First input file (CSV, one sample per row).
    #[arg(long)]
    a: PathBuf,
    /// Second input file.
    #[arg(long)]
    b: PathBuf,
    /// Treat the last column as per-row weights.
    #[arg(long)]
    weights_last_column: bool,
    /// Skip one header row.
    #[arg(long)]
    skip_header: bool,
}

#[derive(Args, Debug)]
struct DistanceArgs {
    #[command(flatten)]
    input: InputFlags,
    #[arg(long, value_enum, default_value_t = StatArg::Qpm)]
    statistic: StatArg,
    #[command(flatten)]
    kernel: KernelFlags,
    /// Build the QPM Gram matrix from the kernel's closed-form square root.
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    sqrt_kernel: Toggle,
    /// Scale the QPM by sqrt(2) to match the squared-kernel MMD on point masses.
    #[arg(long, value_enum, default_value_t = Toggle::Off)]
    isometric: Toggle,
    /// Initial regularization for the Cholesky ladder.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    input: InputFlags,
    #[arg(long, value_enum, default_value_t = StatArg::Qpm)]
    statistic: StatArg,
    #[command(flatten)]
    kernel: KernelFlags,
    /// Number of random permutations.
    #[arg(long, default_value_t = 1000)]
    permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Ascending joined-support sizes, each at most 8192.
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048")]
    sizes: Vec<usize>,
    /// Timing runs per size; the median is reported.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Also write the records as CSV to this path.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Fock,
    Escape,
    Properties,
    All,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Distance(args) => cmd_distance(args),
        Command::Test(args) => cmd_test(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let doc = json!({ "error": { "message": e.to_string() } });
            println!("{}", serde_json::to_string_pretty(&doc).unwrap());
            ExitCode::from(1)
        }
    }
}

type CmdResult = Result<ExitCode, Box<dyn std::error::Error>>;

/// Resolves the kernel flags against the data. `auto` is a Gaussian with
/// length_scale = sigma^2 where sigma is half the median pairwise distance
/// of the pooled rows.
fn resolve_kernel(
    flags: &KernelFlags,
    pooled: &PointSet,
) -> Result<KernelSpec, Box<dyn std::error::Error>> {
    let scale = || -> Result<f64, Box<dyn std::error::Error>> {
        match (flags.length_scale, flags.sigma) {
            (Some(ls), None) => Ok(ls),
            (None, Some(s)) => Ok(s * s),
            (None, None) => Err("give --length-scale or --sigma for this kernel".into()),
            (Some(_), Some(_)) => Err("--length-scale and --sigma are exclusive".into()),
        }
    };
    let spec = match flags.kernel {
        KernelArg::Auto => {
            let sigma = median_heuristic(pooled, 0.5)?;
            let ls = sigma * sigma;
            eprintln!(
                "auto kernel: gaussian, sigma = {sigma} (half median distance), length_scale = sigma^2 = {ls}"
            );
            KernelSpec::gaussian(ls)?
        }
        KernelArg::Gaussian => KernelSpec::gaussian(scale()?)?,
        KernelArg::Laplacian => KernelSpec::laplacian(scale()?)?,
        KernelArg::Imq => KernelSpec::generalized_imq(scale()?, flags.alpha)?,
        KernelArg::Mixture => {
            let components: Vec<(f64, f64)> = flags
                .mixture_sigma2
                .iter()
                .map(|s2| (1.0, 2.0 * s2))
                .collect();
            KernelSpec::gaussian_mixture(components)?
        }
    };
    Ok(spec)
}

fn pooled_rows(a: &PointSet, b: &PointSet) -> Result<PointSet, Box<dyn std::error::Error>> {
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Ok(PointSet::new(data, a.dim())?)
}

fn tool_header() -> Value {
    json!({ "name": "qpm", "version": env!("CARGO_PKG_VERSION") })
}

fn emit(doc: &Value) {
    println!("{}", serde_json::to_string_pretty(doc).unwrap());
}

fn cmd_distance(args: DistanceArgs) -> CmdResult {
    let a = io::load_measure(
        &args.input.a,
        args.input.skip_header,
        args.input.weights_last_column,
    )?;
    let b = io::load_measure(
        &args.input.b,
        args.input.skip_header,
        args.input.weights_last_column,
    )?;
    let pooled = pooled_rows(a.points(), b.points())?;
    let spec = resolve_kernel(&args.kernel, &pooled)?;

    let statistic: StatisticKind = args.statistic.into();
    let report = match statistic {
        StatisticKind::Mmd => mmd(&a, &b, &spec)?,
        StatisticKind::Qpm => {
            let opts = QpmOptions {
                use_sqrt_kernel: args.sqrt_kernel.on(),
                isometric_scaling: args.isometric.on(),
                epsilon: args.epsilon,
                ..QpmOptions::default()
            };
            qpm(&a, &b, &spec, &opts)?
        }
    };

    let config = json!({
        "command": "distance",
        "a": args.input.a, "b": args.input.b,
        "weights_last_column": args.input.weights_last_column,
        "skip_header": args.input.skip_header,
        "statistic": statistic, "kernel": spec,
        "sqrt_kernel": args.sqrt_kernel.on(), "isometric": args.isometric.on(),
        "epsilon": args.epsilon, "seed": args.seed,
    });
    let eigenvalues = report.spectrum.as_ref().map(|s| s.eigenvalues.clone());
    emit(&json!({
        "tool": tool_header(),
        "config": config,
        "result": {
            "statistic": statistic,
            "kind": report.kind,
            "value": report.value,
            "eigenvalues": eigenvalues,
            "epsilon_used": report.epsilon_used,
            "kernel_used": report.kernel_used,
            "clamped": report.clamped,
            "seed": args.seed,
        }
    }));
    Ok(ExitCode::SUCCESS)
}

fn histogram_summary(values: &[f64]) -> Value {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |q: f64| -> f64 {
        if v.is_empty() {
            return f64::NAN;
        }
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        v[lo] * (1.0 - frac) + v[hi] * frac
    };
    let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
    let (lo, hi) = (
        v.first().copied().unwrap_or(0.0),
        v.last().copied().unwrap_or(0.0),
    );
    let mut bins = vec![0usize; 10];
    let width = ((hi - lo) / 10.0).max(f64::MIN_POSITIVE);
    for x in &v {
        let k = (((x - lo) / width) as usize).min(9);
        bins[k] += 1;
    }
    json!({
        "min": lo, "q25": quantile(0.25), "median": quantile(0.5),
        "q75": quantile(0.75), "max": hi, "mean": mean, "bins": bins,
    })
}

fn cmd_test(args: TestArgs) -> CmdResult {
    let (a, _) = io::load_points(
        &args.input.a,
        args.input.skip_header,
        args.input.weights_last_column,
    )?;
    let (b, _) = io::load_points(
        &args.input.b,
        args.input.skip_header,
        args.input.weights_last_column,
    )?;
    let pooled = pooled_rows(&a, &b)?;
    let spec = resolve_kernel(&args.kernel, &pooled)?;
    let statistic: StatisticKind = args.statistic.into();

    eprintln!(
        "running {} permutations with the {} statistic",
        args.permutations, statistic
    );
    let result =
        qpm_core::permutation_test(&a, &b, &spec, statistic, args.permutations, args.seed)?;

    let config = json!({
        "command": "test",
        "a": args.input.a, "b": args.input.b,
        "weights_last_column": args.input.weights_last_column,
        "skip_header": args.input.skip_header,
        "statistic": statistic, "kernel": spec,
        "permutations": args.permutations, "seed": args.seed,
    });
    emit(&json!({
        "tool": tool_header(),
        "config": config,
        "result": {
            "baseline": result.baseline,
            "exceed_count": result.exceed_count,
            "p_value": result.p_value,
            "permutations": args.permutations,
            "histogram": histogram_summary(&result.permutation_values),
            "seed": result.seed,
            "statistic": result.statistic,
        }
    }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    if args.sizes.is_empty() || args.sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err("--sizes must be ascending".into());
    }
    if args.sizes.iter().any(|n| *n > 8192) {
        return Err("--sizes entries must be at most 8192".into());
    }
    eprintln!(
        "benchmarking sizes {:?}, {} repeats",
        args.sizes, args.repeats
    );
    let sweep = verify::bench_sweep(&args.sizes, args.repeats, args.seed)?;

    if let Some(path) = &args.csv {
        let mut text = String::from("n,statistic,wall_time_s,fitted_exponent\n");
        for r in &sweep.records {
            let exponent = match r.statistic {
                StatisticKind::Mmd => sweep.mmd_exponent,
                StatisticKind::Qpm => sweep.qpm_exponent,
            };
            let field = exponent.map(|e| e.to_string()).unwrap_or_default();
            text.push_str(&format!(
                "{},{},{},{}\n",
                r.n, r.statistic, r.wall_time_s, field
            ));
        }
        std::fs::write(path, text)?;
        eprintln!("wrote {}", path.display());
    }

    let config = json!({
        "command": "bench",
        "sizes": args.sizes, "repeats": args.repeats,
        "csv": args.csv, "seed": args.seed,
    });
    emit(&json!({
        "tool": tool_header(),
        "config": config,
        "result": sweep,
    }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let mut checks = Vec::new();
    let mut escape_records = None;
    if matches!(args.suite, Suite::Fock | Suite::All) {
        eprintln!("running fock suite (dense oracle, cutoff 40)");
        checks.extend(verify::fock_suite(50, 40, args.seed));
    }
    if matches!(args.suite, Suite::Escape | Suite::All) {
        eprintln!("running escape suite (spreading grids up to n = 200)");
        let (records, escape_checks) = verify::escape_suite(200, 10.0);
        checks.extend(escape_checks);
        escape_records = Some(records);
    }
    if matches!(args.suite, Suite::Properties | Suite::All) {
        eprintln!("running properties suite (closed forms and metric axioms)");
        checks.extend(verify::point_mass_closed_form_checks(100, args.seed, 1e-12));
        checks.extend(verify::metric_axiom_checks(1000, args.seed));
    }

    let all_pass = verify::all_pass(&checks);
    for c in &checks {
        eprintln!(
            "{} {}: measured {:.3e}, tolerance {:.3e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance
        );
    }
    let config = json!({
        "command": "verify",
        "suite": format!("{:?}", args.suite).to_lowercase(),
        "seed": args.seed,
    });
    emit(&json!({
        "tool": tool_header(),
        "config": config,
        "result": { "checks": checks, "all_pass": all_pass, "escape_records": escape_records },
    }));
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
