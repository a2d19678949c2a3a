use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ifsthermo_core::dimension::{measure_dimension, BowenConfig, DIMENSION_HEADER};
use ifsthermo_core::family::{bind, validate, IfsInstance};
use ifsthermo_core::measure::{chaos_game, depth_n_measure, EvolveConfig};
use ifsthermo_core::rng::RNG_ALGORITHM;
use ifsthermo_core::sweep::{
    default_ladder, evaluate, evaluate_row, plan_for, Engine, Evaluation, Grid, Quantity, SweepParameter,
    SweepRow, SweepSpec, DIAGNOSTIC_HEADER, SWEEP_HEADER,
};
use ifsthermo_core::symbolic::{
    cylinder_rows, gibbs_cylinder, gibbs_cylinder_for, pressure_periodic, pressure_transfer, TransferOptions,
};
use ifsthermo_core::{Error, Piecewise, Potential, PressureMethod, DEFAULT_GRID};

mod config;

use config::{resolve, ConfigDocument};

#[derive(Parser)]
#[command(name = "ifsthermo", version, about = "Stationary measures, pressure and dimension of weighted IFS on [0, 1]")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the contraction, normalisation and separation hypotheses.
    Validate(Common),
    /// Dump a discrete approximation of the stationary measure.
    Measure(Common),
    /// Integrate a function against the stationary measure.
    Integrate {
        #[command(flatten)]
        common: Common,
        /// Integrand in `x` (`p` is lambda).
        #[arg(long, default_value = "x")]
        f: String,
    },
    /// Topological pressure of a potential.
    Pressure {
        #[command(flatten)]
        common: Common,
        /// `weight_log`, `derivative_log`, `constant(c)`, `scaled(t, P)` or `sum(P, Q)`.
        #[arg(long, default_value = "weight_log")]
        potential: String,
    },
    /// Bowen root and dimension of the stationary measure.
    Dimension {
        #[command(flatten)]
        common: Common,
        /// Cylinder length for entropy and Lyapunov exponent.
        #[arg(long, default_value_t = 12)]
        cylinders: usize,
    },
    /// Evaluate a quantity along a parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Finite-difference smoothness diagnostic of a swept quantity.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        probe: Option<f64>,
        #[arg(long, default_value_t = 2)]
        order: usize,
        /// Comma-separated step sizes; default is a dyadic ladder.
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<f64>>,
    },
    /// Gibbs weights of all cylinders of length `--depth`.
    Cylinders {
        #[command(flatten)]
        common: Common,
        /// Potential; default is the normalised weight potential.
        #[arg(long)]
        potential: Option<String>,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    tol: Option<f64>,
    /// Output path, `-` for stdout.
    #[arg(long)]
    out: Option<String>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Print the resolved configuration document and exit.
    #[arg(long)]
    emit_config: bool,
}

#[derive(Args, Clone)]
struct GridArgs {
    #[arg(long, value_enum)]
    parameter: Option<Parameter>,
    #[arg(long, allow_negative_numbers = true)]
    lo: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    hi: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// `integral`, `bowen_dimension`, `measure_dimension` or `pressure`.
    #[arg(long)]
    quantity: Option<String>,
    /// Integrand for `--quantity integral`.
    #[arg(long)]
    f: Option<String>,
    /// Potential for `--quantity pressure`.
    #[arg(long)]
    potential: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Depth,
    Chaos,
    Transfer,
    Periodic,
}

impl From<Method> for Engine {
    fn from(m: Method) -> Engine {
        match m {
            Method::Depth => Engine::Depth,
            Method::Chaos => Engine::Chaos,
            Method::Transfer => Engine::Transfer,
            Method::Periodic => Engine::Periodic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Parameter {
    Lambda,
    Theta,
    Tied,
}

/// A failed verdict rather than a bad invocation.
#[derive(Debug)]
struct DomainFailure(String);

impl std::fmt::Display for DomainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DomainFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<DomainFailure>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Parse(_) | Error::InvalidSpec(_) | Error::InvalidArgument(_) | Error::ParameterOutOfRange { .. } => 2,
                _ => 1,
            };
        }
    }
    2
}

/// Resolved invocation: spec with flag overrides applied.
struct Invocation {
    spec: SweepSpec,
    source: String,
    out: String,
    threads: usize,
    lambda: f64,
    theta: f64,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<Invocation> {
        let (mut spec, doc_out, source) = resolve(self.preset.as_deref(), self.config.as_deref())?;
        let e = &mut spec.engine;
        if let Some(m) = self.method {
            e.engine = m.into();
        }
        e.depth = self.depth.unwrap_or(e.depth);
        e.samples = self.samples.unwrap_or(e.samples);
        e.seed = self.seed.unwrap_or(e.seed);
        e.tol = self.tol.unwrap_or(e.tol);
        if self.threads == 0 {
            bail!(Error::InvalidArgument("--threads must be >= 1".into()));
        }
        let lambda = self.lambda.unwrap_or(spec.lambda);
        let theta = self.theta.unwrap_or(spec.theta);
        spec.lambda = lambda;
        spec.theta = theta;
        Ok(Invocation {
            spec,
            source,
            out: self.out.clone().or(doc_out).unwrap_or_else(|| "-".into()),
            threads: self.threads,
            lambda,
            theta,
        })
    }
}

impl Invocation {
    fn instance(&self) -> anyhow::Result<IfsInstance> {
        Ok(bind(&self.spec.family, self.lambda, self.theta)?)
    }

    fn metadata(&self, command: &str, method: &str, extra: &[(&str, String)]) -> Vec<String> {
        let e = &self.spec.engine;
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut lines = vec![
            format!("# ifsthermo {}", env!("CARGO_PKG_VERSION")),
            format!("# command={command} source={} lambda={} theta={}", self.source, self.lambda, self.theta),
            format!(
                "# method={method} depth={} samples={} seed={} tol={:e} x0={} extrapolate={} rng={RNG_ALGORITHM}",
                e.depth, e.samples, e.seed, e.tol, e.x0, e.extrapolate
            ),
        ];
        for (k, v) in extra {
            lines.push(format!("# {k}={v}"));
        }
        lines.push(format!("# timestamp={stamp}"));
        lines
    }

    fn write(&self, lines: &[String]) -> anyhow::Result<()> {
        let mut text = lines.join("\n");
        text.push('\n');
        if self.out == "-" {
            std::io::stdout().lock().write_all(text.as_bytes()).context("writing stdout")
        } else {
            std::fs::write(&self.out, text).with_context(|| format!("writing {}", self.out))
        }
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn parse_expr_arg(src: &str) -> anyhow::Result<Piecewise> {
    let e = ifsthermo_core::expr::parse_expr(src).with_context(|| format!("in expression \"{src}\""))?;
    Ok(Piecewise::single(e))
}

/// `f(i)` for `i < n` on `threads` workers; results in index order.
fn par_map<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if threads <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let f = &f;
        let handles: Vec<_> = (0..threads.min(n))
            .map(|t| scope.spawn(move || (t..n).step_by(threads).map(|i| (i, f(i))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, v) in h.join().expect("worker panicked") {
                slots[i] = Some(v);
            }
        }
    });
    slots.into_iter().map(|v| v.expect("every index evaluated")).collect()
}

fn cmd_validate(c: &Common) -> anyhow::Result<()> {
    let ctx = c.resolve()?;
    let inst = ctx.instance()?;
    let report = validate(&inst, DEFAULT_GRID)?;
    let mut lines = ctx.metadata("validate", "grid", &[("grid_n", DEFAULT_GRID.to_string())]);
    lines.extend(report.lines());
    ctx.write(&lines)?;
    let failed: Vec<&str> = [
        ("contraction", report.is_contraction()),
        ("normalization", report.is_normalized()),
        ("maps_into_unit", report.maps_into_unit),
        ("weights_positive", report.weights_positive),
    ]
    .into_iter()
    .filter(|(_, ok)| !ok)
    .map(|(name, _)| name)
    .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(DomainFailure(format!("failed: {}", failed.join(", "))).into())
    }
}

/// Depth expansion unless `--method` or the configuration chose the chaos game.
fn measure_engine(c: &Common, ctx: &mut Invocation) {
    if c.method.is_none() && !matches!(ctx.spec.engine.engine, Engine::Depth | Engine::Chaos) {
        ctx.spec.engine.engine = Engine::Depth;
        ctx.spec.engine.depth = c.depth.unwrap_or(16);
    }
}

fn cmd_measure(c: &Common) -> anyhow::Result<()> {
    let mut ctx = c.resolve()?;
    measure_engine(c, &mut ctx);
    let inst = ctx.instance()?;
    validate(&inst, DEFAULT_GRID)?.require_stationary()?;
    let e = &ctx.spec.engine;
    let nu = match e.engine {
        Engine::Depth => depth_n_measure(&inst, e.x0, e.depth, &EvolveConfig::default())?,
        Engine::Chaos => chaos_game(&inst, e.x0, e.burn_in, e.samples, e.seed)?,
        other => bail!(Error::InvalidArgument(format!("measure needs depth or chaos, got {}", other.name()))),
    };
    let mut lines = ctx.metadata("measure", e.engine.name(), &[("atoms", nu.len().to_string())]);
    lines.push("position,weight".into());
    lines.extend(nu.atoms().map(|(x, w)| format!("{x:.16e},{w:.16e}")));
    ctx.write(&lines)
}

fn single_point(ctx: &Invocation, quantity: Quantity) -> anyhow::Result<Evaluation> {
    let mut spec = ctx.spec.clone();
    spec.parameter = SweepParameter::Lambda;
    spec.theta = ctx.theta;
    spec.quantity = quantity;
    Ok(evaluate(&spec, ctx.lambda, spec.engine.seed)?)
}

fn cmd_integrate(c: &Common, f: &str) -> anyhow::Result<()> {
    let mut ctx = c.resolve()?;
    measure_engine(c, &mut ctx);
    let f = parse_expr_arg(f)?;
    let e = ctx.spec.engine;
    if !matches!(e.engine, Engine::Depth | Engine::Chaos) {
        bail!(Error::InvalidArgument(format!("integrate needs depth or chaos, got {}", e.engine.name())));
    }
    let ev = single_point(&ctx, Quantity::Integral(f.clone()))?;
    let mut lines = ctx.metadata("integrate", e.engine.name(), &[("f", f.pieces()[0].to_string())]);
    lines.push("lambda,theta,value,err_estimate,method,depth_or_samples,seed".into());
    lines.push(format!(
        "{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
        ctx.lambda,
        ctx.theta,
        ev.value,
        ev.err_estimate,
        e.engine.name(),
        e.depth_or_samples(),
        e.seed
    ));
    ctx.write(&lines)
}

fn transfer_method(c: &Common, ctx: &mut Invocation) -> anyhow::Result<PressureMethod> {
    let method = match c.method.map(Engine::from).unwrap_or(Engine::Transfer) {
        Engine::Transfer => PressureMethod::Transfer,
        Engine::Periodic => PressureMethod::Periodic,
        other => bail!(Error::InvalidArgument(format!("needs transfer or periodic, got {}", other.name()))),
    };
    ctx.spec.engine.engine = match method {
        PressureMethod::Transfer => Engine::Transfer,
        PressureMethod::Periodic => Engine::Periodic,
    };
    ctx.spec.engine.depth = c.depth.unwrap_or(8);
    Ok(method)
}

fn cmd_pressure(c: &Common, potential: &str) -> anyhow::Result<()> {
    let mut ctx = c.resolve()?;
    let phi: Potential = potential.parse()?;
    let method = transfer_method(c, &mut ctx)?;
    let inst = ctx.instance()?;
    let depth = ctx.spec.engine.depth;
    let est = match method {
        PressureMethod::Transfer => pressure_transfer(
            &inst,
            &phi,
            &TransferOptions {
                depth,
                ..TransferOptions::default()
            },
        )?,
        PressureMethod::Periodic => pressure_periodic(&inst, &phi, depth, 1 << 24)?,
    };
    let mut lines = ctx.metadata("pressure", method.name(), &[]);
    lines.push("lambda,theta,potential,pressure,method,depth,gap".into());
    lines.push(format!(
        "{:.16e},{:.16e},{},{:.16e},{},{},{}",
        ctx.lambda,
        ctx.theta,
        csv_quote(&phi.to_string()),
        est.value,
        method.name(),
        depth,
        est.gap.map(|g| format!("{g:.16e}")).unwrap_or_default()
    ));
    ctx.write(&lines)
}

fn cmd_dimension(c: &Common, cylinders: usize) -> anyhow::Result<()> {
    let mut ctx = c.resolve()?;
    let method = transfer_method(c, &mut ctx)?;
    let inst = ctx.instance()?;
    let cfg = BowenConfig {
        method,
        depth: ctx.spec.engine.depth,
        tol: ctx.spec.engine.tol,
        transfer: TransferOptions::default(),
    };
    let result = measure_dimension(&inst, cylinders, &cfg)?;
    let mut lines = ctx.metadata(
        "dimension",
        method.name(),
        &[("cylinders", cylinders.to_string()), ("iterations", result.bowen.iterations.to_string())],
    );
    lines.push(DIMENSION_HEADER.into());
    lines.push(result.row(ctx.lambda, ctx.theta));
    ctx.write(&lines)
}

impl GridArgs {
    fn apply(&self, spec: &mut SweepSpec) -> anyhow::Result<()> {
        if let Some(p) = self.parameter {
            spec.parameter = match p {
                Parameter::Lambda => SweepParameter::Lambda,
                Parameter::Theta => SweepParameter::Theta,
                Parameter::Tied => SweepParameter::Tied,
            };
            if let Some(r) = match spec.parameter {
                SweepParameter::Theta => spec.family.theta_range,
                _ => spec.family.lambda_range,
            } {
                spec.grid = Grid { lo: r.lo, hi: r.hi, ..spec.grid };
            }
        }
        spec.grid = Grid {
            lo: self.lo.unwrap_or(spec.grid.lo),
            hi: self.hi.unwrap_or(spec.grid.hi),
            points: self.points.unwrap_or(spec.grid.points),
        };
        if let Some(q) = &self.quantity {
            spec.quantity = match q.as_str() {
                "integral" => Quantity::Integral(parse_expr_arg(self.f.as_deref().unwrap_or("x"))?),
                "bowen_dimension" => Quantity::BowenDimension,
                "measure_dimension" => Quantity::MeasureDimension,
                "pressure" => Quantity::Pressure(self.potential.as_deref().unwrap_or("weight_log").parse()?),
                other => bail!(Error::InvalidArgument(format!("unknown quantity '{other}'"))),
            };
        } else if let Some(f) = &self.f {
            spec.quantity = Quantity::Integral(parse_expr_arg(f)?);
        } else if let Some(p) = &self.potential {
            spec.quantity = Quantity::Pressure(p.parse()?);
        }
        Ok(())
    }
}

fn sweep_extra(spec: &SweepSpec) -> Vec<(&'static str, String)> {
    let what = match &spec.quantity {
        Quantity::Integral(f) => format!("integral f={}", f.pieces().iter().map(|e| e.to_string()).collect::<Vec<_>>().join(" | ")),
        Quantity::Pressure(phi) => format!("pressure potential={phi}"),
        q => q.name().to_string(),
    };
    vec![
        ("parameter", spec.parameter.name().to_string()),
        ("grid", format!("{}:{}:{}", spec.grid.lo, spec.grid.hi, spec.grid.points)),
        ("quantity", what),
    ]
}

fn cmd_sweep(c: &Common, grid: &GridArgs) -> anyhow::Result<()> {
    let mut ctx = c.resolve()?;
    grid.apply(&mut ctx.spec)?;
    ctx.spec.check()?;
    let spec = &ctx.spec;
    let rows: Vec<SweepRow> = par_map(spec.grid.points, ctx.threads, |i| evaluate_row(spec, i));
    let mut lines = ctx.metadata("sweep", spec.engine.engine.name(), &sweep_extra(spec));
    lines.push(SWEEP_HEADER.into());
    lines.extend(rows.iter().map(SweepRow::csv));
    ctx.write(&lines)
}

fn cmd_diagnose(c: &Common, grid: &GridArgs, probe: Option<f64>, order: usize, ladder: Option<&[f64]>) -> anyhow::Result<()> {
    let mut ctx = c.resolve()?;
    grid.apply(&mut ctx.spec)?;
    let spec = &ctx.spec;
    let probe = probe
        .or(spec.probe)
        .unwrap_or(0.5 * (spec.grid.lo + spec.grid.hi));
    let ladder = ladder.map(<[f64]>::to_vec).unwrap_or_else(|| default_ladder(spec.grid.length()));
    let plan = plan_for(spec, probe, order, &ladder)?;
    let params = plan.parameters();
    let evals = par_map(params.len(), ctx.threads, |i| evaluate(spec, params[i], spec.engine.seed))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let d = plan.finish(&evals)?;
    let mut extra = sweep_extra(spec);
    extra.push(("ladder", ladder.iter().map(|h| format!("{h:e}")).collect::<Vec<_>>().join(";")));
    let mut lines = ctx.metadata("diagnose", spec.engine.engine.name(), &extra);
    lines.extend(d.summary().into_iter().map(|s| format!("# {s}")));
    lines.push(DIAGNOSTIC_HEADER.into());
    lines.extend(d.csv_rows());
    ctx.write(&lines)
}

fn cmd_cylinders(c: &Common, potential: Option<&str>) -> anyhow::Result<()> {
    let mut ctx = c.resolve()?;
    let n = c.depth.unwrap_or(4);
    ctx.spec.engine.depth = n;
    let inst = ctx.instance()?;
    let x0 = ctx.spec.engine.x0;
    let (cyl, label) = match potential {
        None => {
            validate(&inst, DEFAULT_GRID)?.require_stationary()?;
            (gibbs_cylinder(&inst, n, x0, 1 << 24)?, "weight_log".to_string())
        }
        Some(p) => {
            let phi: Potential = p.parse()?;
            (gibbs_cylinder_for(&inst, &phi, n, x0, &TransferOptions::default())?, phi.to_string())
        }
    };
    let mut lines = ctx.metadata("cylinders", "products", &[("potential", label)]);
    lines.push("word,weight".into());
    lines.extend(cylinder_rows(&cyl));
    ctx.write(&lines)
}

fn emit_config(c: &Common, grid: Option<&GridArgs>) -> anyhow::Result<()> {
    let mut ctx = c.resolve()?;
    if let Some(g) = grid {
        g.apply(&mut ctx.spec)?;
    }
    let text = serde_json::to_string_pretty(&ConfigDocument::from_spec(&ctx.spec))?;
    ctx.write(&[text])
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (common, grid) = match &cli.command {
        Command::Validate(c) | Command::Measure(c) => (c, None),
        Command::Integrate { common, .. }
        | Command::Pressure { common, .. }
        | Command::Dimension { common, .. }
        | Command::Cylinders { common, .. } => (common, None),
        Command::Sweep { common, grid } | Command::Diagnose { common, grid, .. } => (common, Some(grid)),
    };
    if common.emit_config {
        return emit_config(common, grid);
    }
    match &cli.command {
        Command::Validate(c) => cmd_validate(c),
        Command::Measure(c) => cmd_measure(c),
        Command::Integrate { common, f } => cmd_integrate(common, f),
        Command::Pressure { common, potential } => cmd_pressure(common, potential),
        Command::Dimension { common, cylinders } => cmd_dimension(common, *cylinders),
        Command::Sweep { common, grid } => cmd_sweep(common, grid),
        Command::Diagnose {
            common,
            grid,
            probe,
            order,
            ladder,
        } => cmd_diagnose(common, grid, *probe, *order, ladder.as_deref()),
        Command::Cylinders { common, potential } => cmd_cylinders(common, potential.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
