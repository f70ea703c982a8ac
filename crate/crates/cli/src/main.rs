mod target;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fracspan::approximator::{
    approximate_polynomial, eigenpairs_for, error_grid, logistic_resource, sample_residuals, ApproxOptions, ErrorDomain,
};
use fracspan::eigen::EigenConfig;
use fracspan::eigen::{principal_eigenpair, verify_distributional_derivatives, verify_eigen_boundary, TestBump};
use fracspan::field::{FnField, Sphere};
use fracspan::fracop::OperatorSpec;
use fracspan::green::{GreenKernel, LimitTable};
use fracspan::quad::{tanh_sinh, QuadConfig};
use fracspan::table::Table;
use fracspan::{FracOrder, ScalarField};

#[derive(Parser, Debug)]
#[command(name = "fracspan", version, about = "Fractional Green kernels, eigenpairs and Lambda-harmonic approximation")]
struct Cli {
    /// TOML file with [quad], [eigen] and [approx] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Boundary limit of the Green potential and the closed-form kernel check.
    GreenVerify(GreenArgs),
    /// Principal eigenpair, its boundary law and distributional limits.
    Eigen(EigenArgs),
    /// Dirichlet problem with a built-in datum.
    Solve(SolveArgs),
    /// Lambda-harmonic approximation of a polynomial target.
    Approximate(ApproxArgs),
}

#[derive(Args, Debug, Serialize)]
struct EpsArgs {
    #[arg(long, default_value_t = 1e-4)]
    eps_min: f64,
    #[arg(long, default_value_t = 1e-2)]
    eps_max: f64,
    #[arg(long, default_value_t = 3)]
    eps_count: usize,
}

impl EpsArgs {
    /// Geometric sequence from eps_max down to eps_min.
    fn sequence(&self) -> Result<Vec<f64>, UsageError> {
        if !(self.eps_min > 0.0 && self.eps_max >= self.eps_min && self.eps_count >= 1) {
            return Err(UsageError("need 0 < eps-min <= eps-max and eps-count >= 1".into()));
        }
        if self.eps_count == 1 {
            return Ok(vec![self.eps_min]);
        }
        let (hi, lo) = (self.eps_max.log10(), self.eps_min.log10());
        let step = (lo - hi) / (self.eps_count - 1) as f64;
        Ok((0..self.eps_count).map(|i| 10f64.powf(hi + step * i as f64)).collect())
    }
}

#[derive(Args, Debug, Serialize)]
struct GreenArgs {
    #[arg(long)]
    n: u32,
    #[arg(long)]
    s: f64,
    #[command(flatten)]
    eps: EpsArgs,
    /// Random interior pairs for the closed-form check (n = 1, s = 1/2 only).
    #[arg(long, default_value_t = 100)]
    pairs: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Allowed |ratio - 1| at the smallest eps.
    #[arg(long, default_value_t = 0.02)]
    tol: f64,
}

#[derive(Args, Debug, Serialize)]
struct EigenArgs {
    #[arg(long)]
    n: u32,
    #[arg(long)]
    s: f64,
    /// Number of radial basis functions (overrides the config file).
    #[arg(long)]
    basis: Option<usize>,
    /// Also solve with twice the basis and report the eigenvalue shift.
    #[arg(long)]
    refine: bool,
    #[arg(long)]
    check_distributional: bool,
    /// Multi-index for the distributional check, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    alpha: Vec<u32>,
    #[command(flatten)]
    eps: EpsArgs,
    #[arg(long, default_value_t = 0.03)]
    tol_boundary: f64,
    #[arg(long, default_value_t = 0.05)]
    tol_distributional: f64,
}

#[derive(Args, Debug, Serialize)]
struct SolveArgs {
    #[arg(long)]
    n: u32,
    #[arg(long)]
    s: f64,
    /// `one` (indicator of the ball) or `bump`.
    #[arg(long, default_value = "one")]
    datum: String,
    /// Sample points along the first axis in [0, 1).
    #[arg(long, default_value_t = 21)]
    points: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args, Debug, Serialize)]
struct ApproxArgs {
    /// Operator d_t + (-Delta)^s with variables (t, x) on the box [-1, 1]^{1+n}.
    #[arg(long)]
    caloric: bool,
    /// Treat the target as a resource profile sigma and report the logistic check.
    #[arg(long)]
    logistic: bool,
    #[arg(long)]
    s: f64,
    #[arg(long, default_value_t = 1)]
    n: u32,
    /// Polynomial in t, x (or x1, x2 for n = 2), e.g. `1 + x^2/4`.
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 0)]
    k: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 1e-3)]
    residual_tol: f64,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    quad: QuadConfig,
    eigen: EigenConfig,
    approx: ApproxOptions,
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Serialize)]
struct OutputFile {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    parameters: serde_json::Value,
    config: serde_json::Value,
    seed: Option<u64>,
    /// Digest of command, parameters and config; repeated in every CSV header.
    digest: String,
    tolerances: BTreeMap<String, f64>,
    summary: BTreeMap<String, serde_json::Value>,
    outputs: Vec<OutputFile>,
    passed: bool,
    wall_clock_seconds: f64,
}

struct Run {
    out: PathBuf,
    manifest: Manifest,
    started: Instant,
}

impl Run {
    fn new(out: &Path, command: &str, params: &impl Serialize, config: &Config, seed: Option<u64>) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let parameters = serde_json::to_value(params)?;
        let config = serde_json::to_value(config)?;
        let canon = serde_json::to_string(&(command, &parameters, &config, seed))?;
        let digest = hex::encode(Sha256::digest(canon.as_bytes()));
        Ok(Run {
            out: out.to_path_buf(),
            manifest: Manifest {
                command: command.into(),
                parameters,
                config,
                seed,
                digest,
                tolerances: BTreeMap::new(),
                summary: BTreeMap::new(),
                outputs: Vec::new(),
                passed: false,
                wall_clock_seconds: 0.0,
            },
            started: Instant::now(),
        })
    }

    fn write(&mut self, name: &str, content: &[u8]) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(OutputFile { path: name.into(), sha256: hex::encode(Sha256::digest(content)) });
        Ok(())
    }

    fn table(&mut self, name: &str, table: Table) -> Result<()> {
        let t = table.meta("command", &self.manifest.command).meta("manifest_digest", &self.manifest.digest);
        self.write(name, t.render().as_bytes())
    }

    fn summary(&mut self, key: &str, v: impl Serialize) {
        self.manifest.summary.insert(key.into(), serde_json::to_value(v).unwrap_or(serde_json::Value::Null));
    }

    fn finish(mut self, passed: bool) -> Result<ExitCode> {
        self.manifest.passed = passed;
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        let json = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(self.out.join("manifest.json"), json)?;
        println!("{}: {}", self.manifest.command, if passed { "PASS" } else { "FAIL" });
        for (k, v) in &self.manifest.summary {
            println!("  {k} = {v}");
        }
        Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
    }
}

fn limit_table(t: &LimitTable) -> Table {
    let mut out = Table::new(["eps", "lhs", "rhs", "ratio"]);
    for r in &t.rows {
        out.push(vec![r.eps, r.lhs, r.rhs, r.ratio]);
    }
    out
}

fn check_ns(n: u32, s: f64) -> Result<FracOrder, UsageError> {
    if !(1..=2).contains(&n) {
        return Err(UsageError(format!("n must be 1 or 2, got {n}")));
    }
    FracOrder::new(s).map_err(|e| UsageError(e.to_string()))
}

fn unit(n: u32) -> Vec<f64> {
    let mut e = vec![0.0; n as usize];
    e[0] = 1.0;
    e
}

fn cmd_green(args: &GreenArgs, cfg: &Config, out: &Path) -> Result<ExitCode> {
    let s = check_ns(args.n, args.s)?;
    let eps = args.eps.sequence()?;
    let mut run = Run::new(out, "green-verify", args, cfg, Some(args.seed))?;
    let kernel = GreenKernel::new(args.n, s);
    let datum = FnField::bump(vec![0.0; args.n as usize], 0.5);
    let e = unit(args.n);
    let omega: Vec<f64> = e.iter().map(|v| -v).collect();
    let t = kernel.verify_goa_limit(&datum, &e, &omega, &eps, &cfg.quad)?;
    let last = t.rows.last().map(|r| r.ratio).unwrap_or(f64::NAN);
    let mut passed = (last - 1.0).abs() <= args.tol;
    run.manifest.tolerances.insert("ratio".into(), args.tol);
    run.summary("ratio_at_smallest_eps", last);
    run.summary("budget_exceeded", t.budget_exceeded);
    run.table("goa.csv", limit_table(&t))?;

    if args.n == 1 && args.s == 0.5 && args.pairs > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let mut table = Table::new(["x", "z", "quadrature", "closed_form", "rel_err"]);
        let mut worst: f64 = 0.0;
        while table.rows.len() < args.pairs {
            let x: f64 = rng.gen_range(-0.99..0.99);
            let z: f64 = rng.gen_range(-0.99..0.99);
            if (x - z).abs() < 1e-6 {
                continue;
            }
            let q = kernel.value_quadrature(&[x], &[z])?;
            let closed = 2.0 * ((1.0 - x * z + ((1.0 - x * x) * (1.0 - z * z)).sqrt()) / (z - x).abs()).ln();
            let rel = ((q - closed) / closed).abs();
            worst = worst.max(rel);
            table.push(vec![x, z, q, closed, rel]);
        }
        passed &= worst <= 1e-8;
        run.manifest.tolerances.insert("closed_form_rel_err".into(), 1e-8);
        run.summary("closed_form_max_rel_err", worst);
        run.table("footnote.csv", table)?;
    }
    run.finish(passed)
}

fn cmd_eigen(args: &EigenArgs, cfg: &Config, out: &Path) -> Result<ExitCode> {
    let s = check_ns(args.n, args.s)?;
    let eps = args.eps.sequence()?;
    if args.check_distributional && args.alpha.len() != args.n as usize {
        return Err(UsageError(format!("--alpha needs {} entries", args.n)).into());
    }
    let mut run = Run::new(out, "eigen", args, cfg, None)?;
    let mut ecfg = cfg.eigen;
    if let Some(b) = args.basis {
        ecfg.basis = b;
    }
    let pair = principal_eigenpair(args.n, s, &ecfg)?;
    let mut passed = true;
    run.summary("lambda_star", pair.lambda_star);
    run.summary("kappa_star", pair.kappa_star);
    run.summary("iterations", pair.rayleigh_history.len());

    // Unit L2 norm by radial quadrature, independent of the Galerkin mass matrix.
    let area = if args.n == 1 { 2.0 } else { 2.0 * std::f64::consts::PI };
    let nq = tanh_sinh(|r| pair.phi(r).powi(2) * r.powi(args.n as i32 - 1), 0.0, 1.0, &cfg.quad);
    run.summary("l2_norm", (area * nq.value).sqrt());

    let mut profile = Table::new(["r", "phi"]);
    for &(r, v) in &pair.profile {
        profile.push(vec![r, v]);
    }
    run.table("profile.csv", profile)?;

    let e = unit(args.n);
    let omega: Vec<f64> = e.iter().map(|v| -v).collect();
    let t = verify_eigen_boundary(&pair, &e, &omega, &eps);
    let last = t.rows.last().map(|r| r.ratio).unwrap_or(f64::NAN);
    passed &= (last - 1.0).abs() <= args.tol_boundary;
    run.manifest.tolerances.insert("boundary_ratio".into(), args.tol_boundary);
    run.summary("boundary_ratio_at_smallest_eps", last);
    run.table("boundary.csv", limit_table(&t))?;
    let outward = verify_eigen_boundary(&pair, &e, &e, &eps);
    let exterior_zero = outward.rows.iter().all(|r| r.lhs == 0.0);
    passed &= exterior_zero;
    run.summary("exterior_zero", exterior_zero);
    run.summary("decay_slope", pair.boundary_decay_slope(&[1e-4, 1e-3, 1e-2]));

    if args.refine {
        let fine = principal_eigenpair(args.n, s, &ecfg.doubled())?;
        let shift = ((fine.lambda_star - pair.lambda_star) / pair.lambda_star).abs();
        passed &= shift < 1e-4;
        run.manifest.tolerances.insert("refine_shift".into(), 1e-4);
        run.summary("refine_shift", shift);
    }
    if args.check_distributional {
        let psi = TestBump { center: omega.clone(), radius: 0.5 };
        let t = verify_distributional_derivatives(&pair, &e, &args.alpha, &psi, &eps, &cfg.quad)?;
        let last = t.rows.last().ok_or_else(|| anyhow!("empty eps sequence"))?;
        // A vanishing limit (odd derivative of a symmetric bump) is compared absolutely.
        let err = if last.rhs == 0.0 { last.lhs.abs() } else { ((last.lhs - last.rhs) / last.rhs).abs() };
        passed &= err <= args.tol_distributional;
        run.manifest.tolerances.insert("distributional_error".into(), args.tol_distributional);
        run.summary("distributional_ratio_at_smallest_eps", last.ratio);
        run.summary("distributional_error_at_smallest_eps", err);
        run.table("distributional.csv", limit_table(&t))?;
    }
    run.finish(passed)
}

fn cmd_solve(args: &SolveArgs, cfg: &Config, out: &Path) -> Result<ExitCode> {
    let s = check_ns(args.n, args.s)?;
    let n = args.n as usize;
    let datum: Arc<dyn ScalarField> = match args.datum.as_str() {
        "one" => Arc::new(FnField::unit_ball_indicator(n)),
        "bump" => Arc::new(FnField::bump(vec![0.0; n], 0.5)),
        other => return Err(UsageError(format!("unknown datum `{other}` (one, bump)")).into()),
    };
    let mut run = Run::new(out, "solve", args, cfg, None)?;
    let u = fracspan::poisson::solve(args.n, s, datum, cfg.quad)?;
    let pts: Vec<Vec<f64>> = (0..args.points)
        .map(|i| {
            let mut p = vec![0.0; n];
            p[0] = i as f64 / args.points as f64;
            p
        })
        .collect();
    let vals = u.values(&pts)?;
    let torsion = fracspan::constants::torsion_constant(args.n, args.s);
    let mut table = Table::new(["r", "u", "quad_error"]);
    let mut worst: f64 = 0.0;
    let mut exceeded = false;
    for (p, q) in pts.iter().zip(&vals) {
        exceeded |= q.exceeded;
        if args.datum == "one" {
            let exact = (1.0 - p[0] * p[0]).powf(args.s) / torsion;
            worst = worst.max(((q.value - exact) / exact).abs());
        }
        table.push(vec![p[0], q.value, q.error]);
    }
    run.table("solution.csv", table)?;
    run.summary("budget_exceeded", exceeded);
    let mut passed = !exceeded;
    if args.datum == "one" {
        run.manifest.tolerances.insert("torsion_rel_err".into(), args.tol);
        run.summary("torsion_max_rel_err", worst);
        passed &= worst <= args.tol;
    }
    run.finish(passed)
}

fn cmd_approximate(args: &ApproxArgs, cfg: &Config, out: &Path) -> Result<ExitCode> {
    check_ns(args.n, args.s)?;
    if !(args.eps > 0.0) {
        return Err(UsageError("--eps must be positive".into()).into());
    }
    if args.logistic && !args.caloric {
        return Err(UsageError("--logistic requires --caloric".into()).into());
    }
    let mut vars: Vec<String> = Vec::new();
    if args.caloric {
        vars.push("t".into());
    }
    if args.n == 1 {
        vars.push("x".into());
    } else {
        vars.extend((1..=args.n).map(|i| format!("x{i}")));
    }
    let names: Vec<&str> = vars.iter().map(String::as_str).collect();
    let poly = target::parse_polynomial(&args.target, &names).map_err(|e| UsageError(format!("{e:#}")))?;
    let spec =
        if args.caloric { OperatorSpec::caloric(args.s, args.n)? } else { OperatorSpec::fractional(args.s, args.n)? };
    let mut options = cfg.approx.clone();
    options.quad = cfg.quad;
    options.eigen = cfg.eigen;
    if args.caloric {
        options.domain = ErrorDomain::Box;
    }
    let mut run = Run::new(out, "approximate", args, cfg, None)?;
    run.manifest.tolerances.insert("eps".into(), args.eps);
    run.manifest.tolerances.insert("residual".into(), args.residual_tol);

    let poly_eval = {
        let poly = poly.clone();
        move |y: &[f64]| -> f64 {
            poly.iter().map(|(c, i)| c * y.iter().zip(i).map(|(v, &p)| v.powi(p as i32)).product::<f64>()).sum()
        }
    };

    let result = if args.logistic {
        let sigma = FnField::new(spec.dim(), Sphere::centered(spec.dim(), 1e3), poly_eval.clone());
        match logistic_resource(&sigma, args.s, args.k, args.eps, &options) {
            Ok(rep) => {
                run.summary("min_u", rep.min_u);
                run.summary("positive", rep.positive);
                run.summary("caloric_residual", rep.caloric_residual);
                run.summary("logistic_residual", rep.logistic_residual);
                if !rep.positive {
                    eprintln!("warning: u_eps is not positive on the box (min {:e})", rep.min_u);
                }
                Ok((rep.result, rep.positive))
            }
            Err(e) => Err(e),
        }
    } else {
        let pairs = eigenpairs_for(&spec, &options.eigen)?;
        approximate_polynomial(&spec, &poly, args.k, args.eps, &pairs, &options).map(|r| (r, true))
    };
    let (result, positive) = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            run.summary("error", e.to_string());
            if let fracspan::Error::EtaUnderflow { best, .. } = e {
                run.summary("best_error", best);
            }
            return run.finish(false);
        }
    };
    run.summary("achieved_ck_error", result.achieved_ck_error);
    run.summary("lambda_residual", result.lambda_residual);
    run.summary("region_radius", result.region_radius);
    run.summary("monomials", result.terms.len());
    run.summary("dictionary_size", result.elements.len());

    let field = result.evaluator()?;
    let grid = error_grid(spec.dim(), options.grid_points, options.domain);
    let mut cols: Vec<String> = vars.clone();
    cols.extend(["u".into(), "f".into(), "abs_err".into()]);
    let mut errors = Table::new(cols);
    for y in &grid {
        let u = field.eval(y);
        let f = poly_eval(y);
        errors.push([y.clone(), vec![u, f, (u - f).abs()]].concat());
    }
    run.table("errors.csv", errors)?;
    let mut cols: Vec<String> = vars.clone();
    cols.push("residual".into());
    let mut residuals = Table::new(cols);
    for (p, r) in sample_residuals(&field, options.residual_points, result.region_radius, &options.quad)? {
        residuals.push([p, vec![r]].concat());
    }
    run.table("residual.csv", residuals)?;
    run.write("result.json", serde_json::to_string_pretty(&result)?.as_bytes())?;
    let passed = result.achieved_ck_error <= args.eps && result.lambda_residual <= args.residual_tol && positive;
    run.finish(passed)
}

fn load_config(path: Option<&Path>) -> Result<Config, UsageError> {
    let Some(p) = path else { return Ok(Config::default()) };
    let text = fs::read_to_string(p).map_err(|e| UsageError(format!("reading {}: {e}", p.display())))?;
    toml::from_str(&text).map_err(|e| UsageError(format!("parsing {}: {e}", p.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = load_config(cli.config.as_deref()).map_err(anyhow::Error::from).and_then(|cfg| match &cli.command {
        Command::GreenVerify(a) => cmd_green(a, &cfg, &cli.out),
        Command::Eigen(a) => cmd_eigen(a, &cfg, &cli.out),
        Command::Solve(a) => cmd_solve(a, &cfg, &cli.out),
        Command::Approximate(a) => cmd_approximate(a, &cfg, &cli.out),
    });
    match outcome {
        Ok(code) => code,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
