//! `diqkd` command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
//! failure (solver error, missing sign change, or a duality gap above the
//! certification threshold).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use diqkd::bound::{
    compute_curve, uncertainty_region, BoundCurve, CurveBank, HullMode, LipschitzMode, NetConfig,
};
use diqkd::io::{self, Provenance};
use diqkd::keyrate::{
    self, critical_chsh, evaluate_experiments, feasibility_grid, lambda_grid, optimize_basis_bias,
    KeyRateInputs,
};
use diqkd::protocol::{predicted_rate, run_protocol, ProtocolConfig};
use diqkd::quantum::{werner_state, ChannelPoint, DensityMatrix};
use diqkd::Error;

/// Largest duality gap accepted for a certified output.
const GAP_LIMIT: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(
    name = "diqkd",
    version,
    about = "Certified DIQKD entropy bounds, key rates and protocol simulation"
)]
struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads.
    #[arg(long, global = true, env = "DIQKD_WORKERS")]
    parallelism: Option<usize>,
    /// Directory holding computed bound curves for reuse.
    #[arg(long, global = true)]
    curve_cache: Option<PathBuf>,
    #[command(flatten)]
    net: NetArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Lipschitz {
    Certified,
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Hull {
    Interpolated,
    Staircase,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NetArgs {
    /// Vertices of the `b` polygon on the full circle.
    #[arg(long, global = true)]
    b_vertices: Option<usize>,
    /// Points of the `φ` net on [0, π/2].
    #[arg(long, global = true)]
    phi_points: Option<usize>,
    /// Points of the `S` grid on [2, 2√2].
    #[arg(long, global = true)]
    s_grid: Option<usize>,
    #[arg(long, global = true, value_enum)]
    lipschitz: Option<Lipschitz>,
    #[arg(long, global = true, value_enum)]
    hull: Option<Hull>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bound curve C*(S) for one basis weight.
    Bound(BoundArgs),
    /// Key rate at one channel point.
    Keyrate(KeyrateArgs),
    /// Critical CHSH value and QBER under depolarising noise.
    Critical(CriticalArgs),
    /// λ-optimised key rate on an (S, QBER) grid.
    Feasibility(FeasibilityArgs),
    /// Admissible entropy pairs at one CHSH value.
    Region(RegionArgs),
    /// Key rates for a table of experiments.
    Experiments(ExperimentsArgs),
    /// Simulated protocol run.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct BoundArgs {
    #[arg(long)]
    lambda: Option<f64>,
    /// Also report the envelope at this CHSH value.
    #[arg(long)]
    s: Option<f64>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct KeyrateArgs {
    #[arg(long)]
    s: Option<f64>,
    /// QBER of both bases; depolarising value when absent.
    #[arg(long)]
    qber: Option<f64>,
    #[arg(long)]
    q00: Option<f64>,
    #[arg(long)]
    q11: Option<f64>,
    /// Basis weight; optimised over the λ grid when neither it nor `p` is set.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CriticalArgs {
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Bisection tolerance in S.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct FeasibilityArgs {
    #[arg(long)]
    s_min: Option<f64>,
    #[arg(long)]
    s_max: Option<f64>,
    #[arg(long)]
    q_min: Option<f64>,
    #[arg(long)]
    q_max: Option<f64>,
    #[arg(long)]
    s_steps: Option<usize>,
    #[arg(long)]
    q_steps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Zero-contour output file.
    #[arg(long)]
    contour: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RegionArgs {
    #[arg(long)]
    s: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ExperimentsArgs {
    /// CSV with columns label,year,S,qber,source.
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SimulateArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Werner visibility of the shared state; 1 is the singlet.
    #[arg(long)]
    visibility: Option<f64>,
    #[arg(long)]
    s_tol: Option<f64>,
    #[arg(long)]
    ec_efficiency: Option<f64>,
    #[arg(long)]
    verify_bits: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Transcript output file.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RunConfig {
    output: Option<PathBuf>,
    format: Option<Format>,
    parallelism: Option<usize>,
    curve_cache: Option<PathBuf>,
    #[serde(default)]
    net: NetArgs,
    #[serde(default)]
    bound: BoundArgs,
    #[serde(default)]
    keyrate: KeyrateArgs,
    #[serde(default)]
    critical: CriticalArgs,
    #[serde(default)]
    feasibility: FeasibilityArgs,
    #[serde(default)]
    region: RegionArgs,
    #[serde(default)]
    experiments: ExperimentsArgs,
    #[serde(default)]
    simulate: SimulateArgs,
}

/// Fill every unset field of `$cli` from `$file`.
macro_rules! fill {
    ($cli:expr, $file:expr, $($f:ident),+) => {
        $( if $cli.$f.is_none() { $cli.$f = $file.$f.clone(); } )+
    };
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Solver(_) | Error::NoSignChange { .. } | Error::Unattainable => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

struct Ctx {
    output: Option<PathBuf>,
    format: Format,
    net: NetConfig,
    hull: HullMode,
    cache: Option<PathBuf>,
    /// Effective configuration echoed into every output.
    echo: serde_json::Value,
    uncertified: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(ctx) if ctx.uncertified.is_empty() => ExitCode::SUCCESS,
        Ok(ctx) => {
            for u in &ctx.uncertified {
                eprintln!("uncertified: {u}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Path) -> Outcome<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn run(mut cli: Cli) -> Outcome<Ctx> {
    let file = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    fill!(cli, file, output, format, parallelism, curve_cache);
    fill!(cli.net, file.net, b_vertices, phi_points, s_grid, lipschitz, hull);
    if let Some(n) = cli.parallelism {
        if n == 0 {
            return Err(Failure::Invalid("parallelism must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Invalid(e.to_string()))?;
    }
    let d = NetConfig::default();
    let net = NetConfig::new(
        cli.net.b_vertices.unwrap_or(d.b_vertices),
        cli.net.phi_points.unwrap_or(d.phi_points),
        cli.net.s_grid.unwrap_or(d.s_grid),
        match cli.net.lipschitz.unwrap_or(Lipschitz::Certified) {
            Lipschitz::Certified => LipschitzMode::Certified,
            Lipschitz::Empirical => LipschitzMode::Empirical,
        },
    )?;
    let hull = match cli.net.hull.unwrap_or(Hull::Interpolated) {
        Hull::Interpolated => HullMode::Interpolated,
        Hull::Staircase => HullMode::Staircase,
    };
    let mut ctx = Ctx {
        output: cli.output.clone(),
        format: cli.format.unwrap_or(Format::Csv),
        net,
        hull,
        cache: cli.curve_cache.clone(),
        echo: serde_json::Value::Null,
        uncertified: Vec::new(),
    };
    match cli.command {
        Command::Bound(mut a) => {
            fill!(a, file.bound, lambda, s);
            bound_cmd(&mut ctx, a)?
        }
        Command::Keyrate(mut a) => {
            fill!(a, file.keyrate, s, qber, q00, q11, lambda, p);
            keyrate_cmd(&mut ctx, a)?
        }
        Command::Critical(mut a) => {
            fill!(a, file.critical, lambda, tol);
            critical_cmd(&mut ctx, a)?
        }
        Command::Feasibility(mut a) => {
            fill!(
                a,
                file.feasibility,
                s_min,
                s_max,
                q_min,
                q_max,
                s_steps,
                q_steps,
                lambdas,
                contour
            );
            feasibility_cmd(&mut ctx, a)?
        }
        Command::Region(mut a) => {
            fill!(a, file.region, s, lambdas);
            region_cmd(&mut ctx, a)?
        }
        Command::Experiments(mut a) => {
            fill!(a, file.experiments, file, lambdas);
            experiments_cmd(&mut ctx, a)?
        }
        Command::Simulate(mut a) => {
            fill!(
                a,
                file.simulate,
                n,
                p,
                q,
                visibility,
                s_tol,
                ec_efficiency,
                verify_bits,
                seed,
                transcript
            );
            simulate_cmd(&mut ctx, a)?
        }
    }
    Ok(ctx)
}

impl Ctx {
    fn provenance(&self, command: &str) -> Provenance {
        Provenance::new(command, self.echo.clone()).with_net(self.net)
    }

    fn emit(&self, path: Option<&Path>, bytes: &[u8]) -> Outcome {
        match path {
            Some(p) => io::write_file(p, bytes).map_err(Failure::from),
            None => {
                use std::io::Write;
                std::io::stdout()
                    .write_all(bytes)
                    .map_err(|e| Failure::Invalid(e.to_string()))
            }
        }
    }

    fn cache_path(&self, weight: f64) -> Option<PathBuf> {
        let n = &self.net;
        let mode = match n.lipschitz_mode {
            LipschitzMode::Certified => "certified",
            LipschitzMode::Empirical => "empirical",
        };
        let hull = match self.hull {
            HullMode::Interpolated => "interpolated",
            HullMode::Staircase => "staircase",
        };
        self.cache.as_ref().map(|d| {
            d.join(format!(
                "curve_l{}_b{}_p{}_s{}_{mode}_{hull}_v{}.json",
                io::fmt_float(weight),
                n.b_vertices,
                n.phi_points,
                n.s_grid,
                env!("CARGO_PKG_VERSION")
            ))
        })
    }

    fn curve_for_weight(&mut self, weight: f64) -> Outcome<BoundCurve<f64>> {
        let path = self.cache_path(weight);
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())))?;
            if let Ok(c) = serde_json::from_str::<BoundCurve<f64>>(&text) {
                return Ok(c);
            }
        }
        eprintln!(
            "computing bound curve λ={} on a {}×{} net with {} S points",
            io::fmt_float(weight),
            self.net.b_vertices,
            self.net.phi_points,
            self.net.s_grid
        );
        let curve = compute_curve::<f64>(weight, &self.net, self.hull)?;
        if let Some(p) = path {
            let bytes = serde_json::to_vec(&curve).map_err(|e| Failure::Invalid(e.to_string()))?;
            io::write_file(&p, &bytes)?;
        }
        Ok(curve)
    }

    /// Curves for `lambdas`; weights `λ` and `1−λ` share one computation.
    fn bank(&mut self, lambdas: &[f64]) -> Outcome<CurveBank<f64>> {
        for &l in lambdas {
            if !(0.0..=1.0).contains(&l) {
                return Err(Failure::Invalid(format!(
                    "lambda = {l} out of range [0, 1]"
                )));
            }
        }
        let mut curves = Vec::new();
        let mut done: Vec<(f64, BoundCurve<f64>)> = Vec::new();
        for &l in lambdas {
            let w = l.max(1.0 - l);
            let base = match done.iter().find(|(dw, _)| (dw - w).abs() < 1e-12) {
                Some((_, c)) => c.clone(),
                None => {
                    let c = self.curve_for_weight(w)?;
                    done.push((w, c.clone()));
                    c
                }
            };
            self.check_gap(&base);
            curves.push(base.relabeled(l));
        }
        Ok(CurveBank::from_curves(curves)?)
    }

    fn check_gap(&mut self, c: &BoundCurve<f64>) {
        let g = c.max_gap();
        let msg = format!(
            "curve λ={} has duality gap {g:e} > {GAP_LIMIT:e}",
            io::fmt_float(c.lambda)
        );
        if g > GAP_LIMIT && !self.uncertified.contains(&msg) {
            self.uncertified.push(msg);
        }
    }

    fn gap_notes(&self, bank: &CurveBank<f64>) -> Vec<(&'static str, String)> {
        let gap = bank.curves().iter().fold(0.0f64, |m, c| m.max(c.max_gap()));
        let slack = bank
            .curves()
            .iter()
            .flat_map(|c| c.points.iter().map(|p| p.slack_used))
            .fold(0.0f64, f64::max);
        vec![
            ("maxDualityGap", io::fmt_float(gap)),
            ("maxSlack", io::fmt_float(slack)),
        ]
    }
}

fn echo<A: Serialize>(ctx: &mut Ctx, command: &str, args: &A) {
    ctx.echo = serde_json::json!({
        "command": command,
        "args": args,
        "format": ctx.format,
        "hull": match ctx.hull { HullMode::Interpolated => "interpolated", HullMode::Staircase => "staircase" },
    });
}

fn bound_cmd(ctx: &mut Ctx, a: BoundArgs) -> Outcome {
    let lambda = a.lambda.unwrap_or(0.5);
    echo(ctx, "bound", &a);
    let bank = ctx.bank(&[lambda])?;
    let curve = &bank.curves()[0];
    let prov = ctx.provenance("bound");
    let bytes = match ctx.format {
        Format::Csv => io::curve_csv(curve, &prov)?,
        Format::Json => io::json_document(&prov, curve)?,
    };
    ctx.emit(ctx.output.as_deref(), &bytes)?;
    if let Some(s) = a.s {
        if !(2.0..=2.0 * std::f64::consts::SQRT_2 + 1e-6).contains(&s) {
            return Err(Failure::Invalid(format!("S = {s} out of range [2, 2√2]")));
        }
        eprintln!(
            "S={} c_hull={}",
            io::fmt_float(s),
            io::fmt_float(curve.evaluate(s))
        );
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct KeyrateRow {
    s: f64,
    q00: f64,
    q11: f64,
    lambda: f64,
    p: f64,
    p_s: f64,
    c_star: f64,
    secret_fraction: f64,
    key_rate: f64,
    max_duality_gap: f64,
}

fn keyrate_cmd(ctx: &mut Ctx, a: KeyrateArgs) -> Outcome {
    echo(ctx, "keyrate", &a);
    let s =
        a.s.ok_or_else(|| Failure::Invalid("--s is required".into()))?;
    let channel = match (a.qber, a.q00, a.q11) {
        (None, None, None) => ChannelPoint::depolarizing(s)?,
        (Some(q), None, None) => ChannelPoint::new(s, q, q)?,
        (None, Some(q0), Some(q1)) => ChannelPoint::new(s, q0, q1)?,
        _ => {
            return Err(Failure::Invalid(
                "give either --qber or both --q00 and --q11".into(),
            ))
        }
    };
    let lambda = match (a.lambda, a.p) {
        (Some(_), Some(_)) => {
            return Err(Failure::Invalid(
                "give at most one of --lambda and --p".into(),
            ))
        }
        (Some(l), None) => Some(l),
        (None, Some(p)) => Some(keyrate::lambda_from_p(p)?),
        (None, None) => None,
    };
    let lambda = match lambda {
        Some(l) => l,
        None => optimize_basis_bias(channel, &ctx.bank(&lambda_grid())?)?.best_lambda,
    };
    let bank = ctx.bank(&[lambda])?;
    let curve = &bank.curves()[0];
    let inputs = KeyRateInputs::from_lambda(lambda, channel)?;
    let c_star = curve.evaluate(s);
    let row = KeyrateRow {
        s,
        q00: channel.q00,
        q11: channel.q11,
        lambda,
        p: inputs.p,
        p_s: inputs.p_s,
        c_star,
        secret_fraction: keyrate::secret_fraction(&inputs, c_star),
        key_rate: keyrate::key_rate(&inputs, c_star),
        max_duality_gap: curve.max_gap(),
    };
    let prov = ctx.provenance("keyrate");
    let bytes = match ctx.format {
        Format::Json => io::json_document(&prov, &row)?,
        Format::Csv => {
            let f = io::fmt_float;
            let mut out = prov.header();
            out += "S,q00,q11,lambda,p,p_s,c_star,secret_fraction,key_rate,gap\n";
            out += &[
                row.s,
                row.q00,
                row.q11,
                row.lambda,
                row.p,
                row.p_s,
                row.c_star,
                row.secret_fraction,
                row.key_rate,
                row.max_duality_gap,
            ]
            .map(f)
            .join(",");
            out.push('\n');
            out.into_bytes()
        }
    };
    ctx.emit(ctx.output.as_deref(), &bytes)
}

fn critical_cmd(ctx: &mut Ctx, a: CriticalArgs) -> Outcome {
    echo(ctx, "critical", &a);
    let lambdas = a.lambda.clone().unwrap_or_else(|| vec![0.5, 1.0]);
    let tol = a.tol.unwrap_or(1e-4);
    if !(tol > 0.0) {
        return Err(Failure::Invalid("--tol must be positive".into()));
    }
    let bank = ctx.bank(&lambdas)?;
    let mut points = Vec::new();
    for &l in &lambdas {
        let curve = bank.get(l).expect("curve computed");
        let cp = critical_chsh(curve, tol)?;
        eprintln!(
            "lambda={} S*={} Q*={}",
            io::fmt_float(l),
            io::fmt_float(cp.s_star),
            io::fmt_float(cp.q_star)
        );
        points.push(cp);
    }
    let prov = ctx.provenance("critical");
    let notes = ctx.gap_notes(&bank);
    let bytes = match ctx.format {
        Format::Csv => io::critical_csv(&points, &prov, &notes)?,
        Format::Json => io::json_document(&prov, &points)?,
    };
    ctx.emit(ctx.output.as_deref(), &bytes)
}

fn feasibility_cmd(ctx: &mut Ctx, a: FeasibilityArgs) -> Outcome {
    echo(ctx, "feasibility", &a);
    let lambdas = a.lambdas.clone().unwrap_or_else(lambda_grid);
    let bank = ctx.bank(&lambdas)?;
    let grid = feasibility_grid(
        (
            a.s_min.unwrap_or(2.0),
            a.s_max.unwrap_or(2.0 * std::f64::consts::SQRT_2),
        ),
        (a.q_min.unwrap_or(0.0), a.q_max.unwrap_or(0.15)),
        (a.s_steps.unwrap_or(41), a.q_steps.unwrap_or(31)),
        &bank,
    )?;
    let prov = ctx.provenance("feasibility");
    let notes = ctx.gap_notes(&bank);
    let bytes = match ctx.format {
        Format::Csv => io::grid_csv(&grid, &prov, &notes)?,
        Format::Json => io::json_document(&prov, &grid)?,
    };
    ctx.emit(ctx.output.as_deref(), &bytes)?;
    if let Some(path) = &a.contour {
        ctx.emit(Some(path), &io::contour_csv(&grid, &prov, &notes)?)?;
    }
    Ok(())
}

fn region_cmd(ctx: &mut Ctx, a: RegionArgs) -> Outcome {
    echo(ctx, "region", &a);
    let s =
        a.s.ok_or_else(|| Failure::Invalid("--s is required".into()))?;
    if !(2.0..=2.0 * std::f64::consts::SQRT_2 + 1e-6).contains(&s) {
        return Err(Failure::Invalid(format!("S = {s} out of range [2, 2√2]")));
    }
    let lambdas = a.lambdas.clone().unwrap_or_else(lambda_grid);
    let bank = ctx.bank(&lambdas)?;
    let region = uncertainty_region(s, &bank);
    let prov = ctx.provenance("region");
    let notes = ctx.gap_notes(&bank);
    let bytes = match ctx.format {
        Format::Csv => io::region_csv(&region, &prov, &notes)?,
        Format::Json => io::json_document(&prov, &region)?,
    };
    ctx.emit(ctx.output.as_deref(), &bytes)
}

fn experiments_cmd(ctx: &mut Ctx, a: ExperimentsArgs) -> Outcome {
    echo(ctx, "experiments", &a);
    let path = a
        .file
        .clone()
        .ok_or_else(|| Failure::Invalid("--file is required".into()))?;
    let table = io::load_experiments(&path)?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    for e in &table.row_errors {
        eprintln!("line {}: {}: {}", e.line, e.label, e.message);
    }
    let lambdas = a.lambdas.clone().unwrap_or_else(lambda_grid);
    let bank = ctx.bank(&lambdas)?;
    let rates = evaluate_experiments(&table.records, &bank);
    let mut rows: Vec<(usize, String, diqkd::Result<_>)> = table
        .record_lines
        .iter()
        .zip(&table.records)
        .zip(rates)
        .map(|((&line, r), rate)| (line, r.label.clone(), rate))
        .collect();
    rows.extend(table.row_errors.iter().map(|e| {
        (
            e.line,
            e.label.clone(),
            Err(Error::Invalid(e.message.clone())),
        )
    }));
    rows.sort_by_key(|r| r.0);
    let rows: Vec<(String, diqkd::Result<_>)> = rows.into_iter().map(|(_, l, r)| (l, r)).collect();
    let prov = ctx.provenance("experiments");
    let notes = ctx.gap_notes(&bank);
    let bytes = match ctx.format {
        Format::Csv => io::experiments_csv(&rows, &prov, &notes)?,
        Format::Json => {
            let doc: Vec<serde_json::Value> = rows
                .iter()
                .map(|(label, r)| match r {
                    Ok(e) => serde_json::json!({ "status": "ok", "rate": e }),
                    Err(err) => serde_json::json!({ "status": err.to_string(), "label": label }),
                })
                .collect();
            io::json_document(&prov, &doc)?
        }
    };
    ctx.emit(ctx.output.as_deref(), &bytes)
}

fn simulate_cmd(ctx: &mut Ctx, a: SimulateArgs) -> Outcome {
    echo(ctx, "simulate", &a);
    let mut cfg = ProtocolConfig::<f64>::new(
        a.n.unwrap_or(200_000),
        a.p.unwrap_or(0.5),
        a.q.unwrap_or(0.95),
        a.s_tol.unwrap_or(2.7),
        a.seed.unwrap_or(1),
    );
    let v = a.visibility.unwrap_or(1.0);
    cfg.state = if v == 1.0 {
        DensityMatrix::singlet()
    } else {
        werner_state(v)?
    };
    if let Some(e) = a.ec_efficiency {
        cfg.ec_efficiency = e;
    }
    if let Some(t) = a.verify_bits {
        cfg.verify_bits = t;
    }
    cfg.validate()?;
    let lambda = keyrate::lambda_from_p(cfg.p)?;
    let bank = ctx.bank(&[lambda])?;
    let curve = &bank.curves()[0];
    let run = run_protocol(&cfg, curve)?;
    let prov = ctx.provenance("simulate").with_seed(cfg.seed);
    let r = &run.result;
    match &r.abort_reason {
        Some(why) => eprintln!("aborted: {why}"),
        None => eprintln!(
            "final key {} bits, empirical rate {} (predicted {})",
            r.final_key_a.len(),
            io::fmt_float(r.empirical_rate),
            io::fmt_float(predicted_rate(&cfg, curve))
        ),
    }
    ctx.emit(ctx.output.as_deref(), &io::json_document(&prov, r)?)?;
    if let Some(path) = &a.transcript {
        ctx.emit(Some(path), &io::transcript_csv(&run.transcript, &prov)?)?;
    }
    Ok(())
}
