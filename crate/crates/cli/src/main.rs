use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use ecsw::charforms::{euler_form_at, generating_form_at};
use ecsw::curvature::CurvaturePack;
use ecsw::dynamics::integrate_geodesic;
use ecsw::metric::{fd_jet_oracle, jet_discrepancy, MetricProvider};
use ecsw::olszak::{olszak_distribution, phi_and_recover_a};
use ecsw::suite::{finite_pack, run_suite, SuiteConfig};
use ecsw::{ChartPoint, GeomError, Tensor};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ecsw",
    version,
    about = "Curvature checks for essentially conformally symmetric metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured checks and write a JSON report.
    Verify {
        #[command(flatten)]
        config: ConfigArg,
        /// report path; stdout when omitted
        #[arg(long)]
        report: Option<PathBuf>,
        /// worker threads (0 = all cores)
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// print elapsed time to stderr
        #[arg(long)]
        timings: bool,
    },
    /// Print metric, Ricci, scalar and nonzero Weyl components at a point.
    Curvature {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        point: PointArg,
    },
    /// Print the Olszak distribution, Φ and the recovered A at a point.
    Olszak {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        point: PointArg,
    },
    /// Evaluate the Euler and first generating form on the coordinate basis.
    Charforms {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        point: PointArg,
    },
    /// Integrate a geodesic and export it as CSV.
    Geodesic {
        #[command(flatten)]
        config: ConfigArg,
        /// start point, comma separated; origin when omitted
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        /// initial velocity, comma separated
        #[arg(long, allow_hyphen_values = true)]
        v0: String,
        /// parameter span `a,b`
        #[arg(long, default_value = "0,10", allow_hyphen_values = true)]
        span: String,
        #[arg(long, default_value_t = ecsw::dynamics::DEFAULT_STEP)]
        step: f64,
        /// CSV path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic metric jets with finite differences at the sample points.
    Oracle {
        #[command(flatten)]
        config: ConfigArg,
    },
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct PointArg {
    /// coordinates `t,s,v1,...`; `pi`, `pi/2`, `3*pi/4` are accepted
    #[arg(long, allow_hyphen_values = true)]
    point: String,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numerical(String),
}

impl From<GeomError> for Failure {
    fn from(e: GeomError) -> Self {
        match e {
            GeomError::Numerical(m) => Failure::Numerical(m),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load_config(path: &Path) -> CliResult<SuiteConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = SuiteConfig::from_json(&text)?;
    if let Ok(seed) = std::env::var("ECSW_SEED") {
        config.seed = seed.trim().parse().map_err(|_| {
            Failure::Config(format!(
                "ECSW_SEED must be an unsigned integer, got `{seed}`"
            ))
        })?;
    }
    Ok(config)
}

fn parse_number(token: &str) -> Option<f64> {
    let token = token.trim();
    if let Ok(x) = token.parse() {
        return Some(x);
    }
    let (num, den) = match token.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim().parse::<f64>().ok()?),
        None => (token, 1.0),
    };
    let (sign, body) = match num.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, num),
    };
    let factor = match body.strip_suffix("pi") {
        Some("") => 1.0,
        Some(rest) => rest.strip_suffix('*')?.parse::<f64>().ok()?,
        None => return None,
    };
    Some(sign * factor * std::f64::consts::PI / den)
}

fn parse_list(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|t| {
            parse_number(t)
                .ok_or_else(|| Failure::Config(format!("cannot parse {what} component `{t}`")))
        })
        .collect()
}

fn parse_point(text: &str, n: usize) -> CliResult<ChartPoint> {
    let c = parse_list(text, "point")?;
    if c.len() != n {
        return Err(Failure::Config(format!(
            "point has {} coordinates, the metric needs {n}",
            c.len()
        )));
    }
    Ok(ChartPoint::new(c))
}

fn axis_name(i: usize) -> String {
    match i {
        0 => "t".into(),
        1 => "s".into(),
        k => format!("v{}", k - 1),
    }
}

fn fmt_index(idx: &[usize]) -> String {
    idx.iter()
        .map(|&i| axis_name(i))
        .collect::<Vec<_>>()
        .join(",")
}

/// Components with `|x| > threshold` as `name[i,j,...] = x` lines.
fn write_components(out: &mut String, name: &str, t: &Tensor, threshold: f64) {
    let n = t.dim();
    let rank = t.rank();
    let total = n.pow(rank as u32);
    let mut idx = vec![0usize; rank];
    for flat in 0..total {
        let mut r = flat;
        for slot in (0..rank).rev() {
            idx[slot] = r % n;
            r /= n;
        }
        let x = t.get(&idx);
        if x.abs() > threshold {
            let _ = writeln!(out, "{name}[{}] = {x:.16e}", fmt_index(&idx));
        }
    }
}

fn cmd_verify(config: &Path, report: Option<&Path>, jobs: usize, timings: bool) -> CliResult<u8> {
    let config = load_config(config)?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Config(format!("cannot start worker pool: {e}")))?;
    let result = pool.install(|| run_suite(&config))?;
    let json = result.to_json();
    match report {
        Some(path) => fs::write(path, &json)?,
        None => io::stdout().write_all(json.as_bytes())?,
    }
    for r in &result.records {
        eprintln!(
            "{} {:<30} residual {:>24} tolerance {:.3e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            format!("{:.6e}", r.residual),
            r.tolerance
        );
    }
    let s = &result.summary;
    eprintln!("{} of {} checks passed", s.passed, s.total);
    if timings {
        eprintln!("elapsed {:.3} s", start.elapsed().as_secs_f64());
    }
    Ok(if s.numerical_abort {
        EXIT_NUMERICAL
    } else if s.all_passed {
        0
    } else {
        EXIT_CHECK_FAILED
    })
}

fn cmd_curvature(config: &Path, point: &str) -> CliResult<u8> {
    let config = load_config(config)?;
    let spec = &config.spec;
    let p = parse_point(point, spec.n())?;
    let pack = finite_pack(spec, &p, 2)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "point = [{}]",
        p.coords()
            .iter()
            .map(|c| format!("{c:.16e}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    write_components(&mut out, "g", &pack.metric, 0.0);
    write_components(&mut out, "ricci", &pack.ricci, 1e-14);
    let _ = writeln!(out, "ricci_tt = {:.16e}", pack.ricci.get(&[0, 0]));
    let _ = writeln!(out, "scalar = {:.16e}", pack.scalar);
    write_components(&mut out, "weyl", &pack.weyl, 1e-14);
    print!("{out}");
    Ok(0)
}

fn format_vector(v: &DVector<f64>) -> String {
    format!(
        "[{}]",
        v.iter()
            .map(|x| format!("{x:.16e}"))
            .collect::<Vec<_>>()
            .join(", ")
    )
}

fn cmd_olszak(config: &Path, point: &str) -> CliResult<u8> {
    let config = load_config(config)?;
    let spec = &config.spec;
    let p = parse_point(point, spec.n())?;
    let pack = finite_pack(spec, &p, 2)?;
    let db = olszak_distribution(&pack.weyl, &pack.metric, &p)?;
    let mut out = String::new();
    let _ = writeln!(out, "dim_D = {}", db.dim_d);
    for b in &db.basis_d {
        let _ = writeln!(out, "D: {}", format_vector(b));
    }
    for b in &db.basis_dperp {
        let _ = writeln!(out, "D_perp: {}", format_vector(b));
    }
    if db.dim_d == 1 {
        let (phi, a) = phi_and_recover_a(&pack, &db, spec)?;
        for i in 0..phi.matrix.nrows() {
            let _ = writeln!(
                out,
                "phi row {i}: {}",
                format_vector(&phi.matrix.row(i).transpose())
            );
        }
        let _ = writeln!(out, "norm_factor = {:.16e}", phi.norm_factor);
        for i in 0..a.nrows() {
            let _ = writeln!(out, "A row {i}: {}", format_vector(&a.row(i).transpose()));
        }
    }
    print!("{out}");
    Ok(0)
}

fn cmd_charforms(config: &Path, point: &str) -> CliResult<u8> {
    let config = load_config(config)?;
    let spec = &config.spec;
    let n = spec.n();
    let p = parse_point(point, n)?;
    let pack: CurvaturePack = finite_pack(spec, &p, 2)?;
    let basis: Vec<DVector<f64>> = (0..n)
        .map(|i| DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 }))
        .collect();
    if n % 2 == 0 {
        println!("euler = {:.16e}", euler_form_at(&pack, &basis)?);
    } else {
        println!("euler = 0 (odd dimension)");
    }
    println!(
        "generating_1 = {:.16e}",
        generating_form_at(&pack, 1, &basis[..4])?
    );
    Ok(0)
}

fn cmd_geodesic(
    config: &Path,
    x0: Option<&str>,
    v0: &str,
    span: &str,
    step: f64,
    out: Option<&Path>,
) -> CliResult<u8> {
    let config = load_config(config)?;
    let spec = &config.spec;
    let n = spec.n();
    let x0 = match x0 {
        Some(text) => parse_point(text, n)?,
        None => ChartPoint::new(vec![0.0; n]),
    };
    let v = parse_list(v0, "velocity")?;
    if v.len() != n {
        return Err(Failure::Config(format!(
            "velocity has {} components, the metric needs {n}",
            v.len()
        )));
    }
    let span = parse_list(span, "span")?;
    if span.len() != 2 {
        return Err(Failure::Config("span must be `a,b`".into()));
    }
    let traj = integrate_geodesic(spec, &x0, &DVector::from_vec(v), (span[0], span[1]), step)?;
    match out {
        Some(path) => {
            let mut file = io::BufWriter::new(fs::File::create(path)?);
            traj.write_csv(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            traj.write_csv(&mut lock)?;
        }
    }
    eprintln!(
        "norm drift {:.3e}, ds drift {:.3e}, t-affinity deviation {:.3e}",
        traj.norm_drift(),
        traj.ds_drift(),
        traj.t_affinity_deviation()
    );
    Ok(0)
}

fn cmd_oracle(config: &Path) -> CliResult<u8> {
    let config = load_config(config)?;
    let spec = &config.spec;
    println!(
        "{:>5} {:>12} {:>12} {:>12} {:>12}",
        "point", "order0", "order1", "order2", "order3"
    );
    let mut worst = 0.0f64;
    for (k, p) in config.points().iter().enumerate() {
        let exact = spec.jet(p, 3)?;
        let fd = fd_jet_oracle(spec, p, 5e-3)?;
        let d = jet_discrepancy(&exact, &fd);
        if d.iter().any(|x| !x.is_finite()) {
            return Err(Failure::Numerical(format!(
                "non-finite jet discrepancy at sample {k}"
            )));
        }
        worst = d.iter().fold(worst, |m, &x| m.max(x));
        println!(
            "{k:>5} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e}",
            d[0], d[1], d[2], d[3]
        );
    }
    println!("max relative discrepancy {worst:.3e}");
    Ok(if worst < 1e-6 { 0 } else { EXIT_CHECK_FAILED })
}

fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Verify {
            config,
            report,
            jobs,
            timings,
        } => cmd_verify(&config.config, report.as_deref(), jobs, timings),
        Command::Curvature { config, point } => cmd_curvature(&config.config, &point.point),
        Command::Olszak { config, point } => cmd_olszak(&config.config, &point.point),
        Command::Charforms { config, point } => cmd_charforms(&config.config, &point.point),
        Command::Geodesic {
            config,
            x0,
            v0,
            span,
            step,
            out,
        } => cmd_geodesic(
            &config.config,
            x0.as_deref(),
            &v0,
            &span,
            step,
            out.as_deref(),
        ),
        Command::Oracle { config } => cmd_oracle(&config.config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical abort: {m}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_with_pi() {
        let pi = std::f64::consts::PI;
        assert_eq!(parse_number("1.5"), Some(1.5));
        assert_eq!(parse_number("pi"), Some(pi));
        assert_eq!(parse_number("pi/2"), Some(pi / 2.0));
        assert_eq!(parse_number("-3*pi/4"), Some(-3.0 * pi / 4.0));
        assert_eq!(parse_number("x"), None);
    }

    #[test]
    fn axis_names() {
        assert_eq!(fmt_index(&[0, 1, 3]), "t,s,v2");
    }
}
