//! Command-line front end. Every command prints (or writes) a deterministic
//! report that embeds the resolved configuration and a SHA-256 hash of all
//! inputs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::curve::{CurveK, CurveReport, CurveSpec};
use crate::error::{Error, Result};
use crate::field::{graph_residual, CertifyOptions, ExtendMode, FieldG, HExtension, Which};
use crate::io::{read_gridmap, to_csv, write_gridmap, FieldGrid};
use crate::pde::{residual_div_cof, solve_pair, Grid2D, GridMap, SolveOptions, SolveReport};
use crate::rigidity::{amplitude_sweep, Generator, TestMapSpec};
use crate::t4::laminate::{non_compactness_demo, DemoOptions, DemoReport};
use crate::t4::{verify, VerificationReport};

#[derive(Debug, Parser, Serialize)]
#[command(name = "elliptic-rigidity", version, about = "Rigidity experiments for elliptic curves of matrices")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct Common {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Proceed past failed upstream gates, with a warning.
    #[arg(long, global = true)]
    pub force: bool,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub dump_config: bool,
    /// Report destination (default: stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Check ellipticity, rank-one freedom and the conformal projection of a curve.
    AnalyzeCurve(CurveArgs),
    /// Extend H and certify both monotone fields.
    BuildField(FieldArgs),
    /// Solve div G1(Du1) = div G2(Du2) = 0 with prescribed boundary values.
    SolvePde(SolveArgs),
    /// Amplitude sweep of the rigidity ratio q*/eps.
    Rigidity(RigidityArgs),
    /// Verify the 3x3 counterexample and run the laminate sweep.
    T4(T4Args),
}

#[derive(Debug, Args, Serialize)]
pub struct CurveArgs {
    /// `builtin:<so2|kc|winding2>[:c=..,r=..]` or a CSV path.
    #[arg(long, default_value = "builtin:so2")]
    pub curve: String,
    #[arg(long, default_value_t = 2048)]
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Auto,
    ClosedForm,
    McshaneGrid,
}

#[derive(Debug, Args, Serialize)]
pub struct FieldArgs {
    #[command(flatten)]
    pub curve: CurveArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    pub mode: ModeArg,
    /// Nodes per side of the extension grid.
    #[arg(long, default_value_t = 512)]
    pub grid_n: usize,
    /// Half-width of the extension grid (default: twice the curve radius).
    #[arg(long)]
    pub grid_extent: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub eps_mol: f64,
    /// Random pairs used to certify monotonicity.
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
    /// Also tabulate G1 on a grid and write it in `fieldgrid v1` format.
    #[arg(long)]
    pub fieldgrid: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    /// `harmonic:x2-y2`, `harmonic:xy`, `affine[:t=..]` or `gridmap:<path>`.
    #[arg(long, default_value = "harmonic:x2-y2")]
    pub boundary: String,
    #[arg(long, default_value_t = 65)]
    pub n: usize,
    /// Half-width of the square domain.
    #[arg(long, default_value_t = 1.0)]
    pub extent: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_iter: usize,
    /// Write the solution in `gridmap v1` format.
    #[arg(long)]
    pub map_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RigidityArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[arg(long = "gen", default_value = "affine_plus_bump")]
    pub generator: String,
    /// Comma-separated amplitudes.
    #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3")]
    pub amps: Vec<f64>,
    #[arg(long, default_value_t = 129)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub extent: f64,
    #[arg(long, default_value_t = 0.3)]
    pub t0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub freq: f64,
    /// Map for the `user_file` generator.
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// JSON report with the configuration and per-amplitude traces.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct T4Args {
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    #[arg(long, default_value_t = 0.02)]
    pub eps: f64,
    /// Pair grid of the rank-one scan; the ellipticity scan uses twice as many points.
    #[arg(long, default_value_t = 2048)]
    pub grid: usize,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    /// Write the laminate sweep as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    config: &'a Cli,
    input_sha256: String,
    result: T,
}

fn is_file_spec(curve: &str) -> bool {
    !curve.starts_with("builtin:")
}

impl Cli {
    fn input_files(&self) -> Vec<PathBuf> {
        let mut files = Vec::new();
        let curve = match &self.command {
            Command::AnalyzeCurve(c) => Some(&c.curve),
            Command::BuildField(f) => Some(&f.curve.curve),
            Command::SolvePde(s) => {
                if let Some(p) = s.boundary.strip_prefix("gridmap:") {
                    files.push(PathBuf::from(p));
                }
                Some(&s.field.curve.curve)
            }
            Command::Rigidity(r) => {
                files.extend(r.file.clone());
                Some(&r.field.curve.curve)
            }
            Command::T4(_) => None,
        };
        if let Some(c) = curve.filter(|c| is_file_spec(c)) {
            files.push(PathBuf::from(c));
        }
        files
    }

    pub fn config_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    /// SHA-256 of the configuration and the bytes of every input file.
    pub fn input_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.config_json().as_bytes());
        for f in self.input_files() {
            h.update(std::fs::read(&f)?);
        }
        Ok(hex::encode(h.finalize()))
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("--{name} must be positive, got {v}")))
            }
        };
        match &self.command {
            Command::SolvePde(s) => {
                positive("tol", s.tol)?;
                positive("extent", s.extent)
            }
            Command::Rigidity(r) => {
                if r.amps.is_empty() {
                    return Err(Error::InvalidArgument("--amps needs at least one value".into()));
                }
                positive("extent", r.extent)
            }
            Command::T4(t) => {
                positive("a", t.a)?;
                positive("eps", t.eps)
            }
            _ => Ok(()),
        }
    }
}

fn emit<T: Serialize>(cli: &Cli, path: Option<&Path>, result: T) -> Result<()> {
    let env = Envelope { tool: "elliptic-rigidity", version: env!("CARGO_PKG_VERSION"), config: cli, input_sha256: cli.input_hash()?, result };
    let text = serde_json::to_string_pretty(&env).map_err(|e| Error::Parse(e.to_string()))? + "\n";
    write_text(path, &text)
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => Ok(std::fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_curve(args: &CurveArgs) -> Result<CurveK> {
    CurveK::build(&CurveSpec::parse(&args.curve)?, args.samples)
}

/// Curve gates, skippable with `--force`.
fn gate(k: &CurveK, force: bool) -> Result<()> {
    match k.check_gates() {
        Ok(_) => Ok(()),
        Err(e) if force => {
            eprintln!("warning: curve gate failed ({e}); continuing because of --force");
            Ok(())
        }
        Err(e) => Err(e),
    }
}

fn extend(k: &CurveK, f: &FieldArgs) -> Result<HExtension> {
    let has_closed = k.family().and_then(|(fam, _)| fam.closed_form_h()).is_some();
    let mode = match f.mode {
        ModeArg::ClosedForm => ExtendMode::ClosedForm,
        ModeArg::McshaneGrid => ExtendMode::McshaneGrid,
        ModeArg::Auto if has_closed => ExtendMode::ClosedForm,
        ModeArg::Auto => ExtendMode::McshaneGrid,
    };
    HExtension::extend(k, mode, f.grid_extent.unwrap_or(2.0 * k.radius()), f.grid_n, f.eps_mol)
}

fn fields(k: &CurveK, f: &FieldArgs, seed: u64) -> Result<(Arc<HExtension>, FieldG, FieldG)> {
    let h = Arc::new(extend(k, f)?);
    let opts = CertifyOptions { n_pairs: f.pairs, seed, ..CertifyOptions::default() };
    let g1 = FieldG::new(h.clone(), Which::G1, opts)?;
    let g2 = FieldG::new(h.clone(), Which::G2, opts)?;
    Ok((h, g1, g2))
}

#[derive(Serialize)]
struct FieldSummary {
    lambda: f64,
    big_lambda: f64,
    theoretical: (f64, f64),
}

impl From<&FieldG> for FieldSummary {
    fn from(g: &FieldG) -> Self {
        FieldSummary { lambda: g.lambda, big_lambda: g.big_lambda, theoretical: g.theoretical_bounds() }
    }
}

#[derive(Serialize)]
struct FieldReport {
    k_measured: f64,
    k_ext: f64,
    eps_mol: f64,
    agreement: f64,
    g1: FieldSummary,
    g2: FieldSummary,
    graph_residual: f64,
    diameter: f64,
}

fn field_report(k: &CurveK, h: &HExtension, g1: &FieldG, g2: &FieldG) -> Result<FieldReport> {
    Ok(FieldReport {
        k_measured: h.k_measured,
        k_ext: h.k_ext,
        eps_mol: h.eps_mol,
        agreement: h.agreement,
        g1: g1.into(),
        g2: g2.into(),
        graph_residual: graph_residual(g1, g2, k)?,
        diameter: k.diameter(),
    })
}

/// Boundary data for `solve-pde`; the harmonic choices are also the exact
/// solution whenever both fields are multiples of the identity.
pub fn boundary_map(spec: &str, k: &CurveK, grid: Grid2D) -> Result<(GridMap, bool)> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    Ok(match (kind, arg) {
        ("harmonic", "x2-y2") => (GridMap::from_fn(grid, |x, y| [x * x - y * y, 2.0 * x * y]), true),
        ("harmonic", "xy") => (GridMap::from_fn(grid, |x, y| [x * y, 0.5 * (y * y - x * x)]), true),
        ("affine", rest) => {
            let t = match rest.strip_prefix("t=") {
                Some(v) => v.parse().map_err(|_| Error::Parse(format!("bad parameter in `{spec}`")))?,
                None if rest.is_empty() => 0.0,
                None => return Err(Error::Parse(format!("bad boundary `{spec}`"))),
            };
            (GridMap::affine(grid, k.eval(t), [0.0, 0.0]), true)
        }
        ("gridmap", path) => {
            let u = read_gridmap(path)?;
            if u.grid != grid {
                return Err(Error::InvalidArgument(format!("{path}: grid does not match --n/--extent")));
            }
            (u, false)
        }
        _ => return Err(Error::Parse(format!("unknown boundary `{spec}`"))),
    })
}

#[derive(Serialize)]
struct SolveSummary {
    grid_n: usize,
    extent: f64,
    h: f64,
    tol: f64,
    reports: [SolveReport; 2],
    final_residual: f64,
    /// Max nodal distance to the boundary map, meaningful when it is an exact solution.
    deviation_from_boundary_map: Option<f64>,
    div_cof_max_interior: f64,
    field: FieldReport,
}

#[derive(Serialize)]
struct RigidityReport {
    delta0: f64,
    rows: Vec<crate::rigidity::RigidityResult>,
    ratio_spread: f64,
}

#[derive(Serialize)]
struct T4Report {
    verification: VerificationReport,
    laminate: DemoReport,
    eps_decreasing: bool,
    m_bounded_below: bool,
}

pub fn execute(cli: &Cli) -> Result<()> {
    cli.validate()?;
    if cli.common.dump_config {
        println!("{}", cli.config_json());
        return Ok(());
    }
    if let Some(t) = cli.common.threads {
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    let out = cli.common.out.as_deref();
    let (seed, force) = (cli.common.seed, cli.common.force);
    match &cli.command {
        Command::AnalyzeCurve(c) => {
            let k = load_curve(c)?;
            let report: CurveReport = k.analyze();
            emit(cli, out, &report)?;
            if report.passed() {
                Ok(())
            } else {
                k.check_gates().map(|_| ())
            }
        }
        Command::BuildField(f) => {
            let k = load_curve(&f.curve)?;
            gate(&k, force)?;
            let (h, g1, g2) = fields(&k, f, seed)?;
            if let Some(path) = &f.fieldgrid {
                let grid = Grid2D::new(h_extent(&k, f), f.grid_n.clamp(17, 257))?;
                std::fs::write(path, FieldGrid::tabulate(grid, |a| g1.eval(a))?.to_text())?;
            }
            emit(cli, out, field_report(&k, &h, &g1, &g2)?)
        }
        Command::SolvePde(s) => {
            let k = load_curve(&s.field.curve)?;
            gate(&k, force)?;
            let (h, g1, g2) = fields(&k, &s.field, seed)?;
            let grid = Grid2D::new(s.extent, s.n)?;
            let (b, exact) = boundary_map(&s.boundary, &k, grid)?;
            // start from zero in the interior so only the boundary values are used
            let mut start = b.clone();
            for i in 0..grid.len() {
                if !grid.is_boundary(i) {
                    start.u1[i] = 0.0;
                    start.u2[i] = 0.0;
                }
            }
            let (u, reports) = solve_pair(&g1, &g2, &start, SolveOptions { tol: s.tol, max_iter: s.max_iter })?;
            if let Some(p) = &s.map_out {
                write_gridmap(p, &u)?;
            }
            let deviation = exact.then(|| {
                u.u1.iter().zip(&b.u1).chain(u.u2.iter().zip(&b.u2)).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
            });
            let summary = SolveSummary {
                grid_n: s.n,
                extent: s.extent,
                h: grid.h(),
                tol: s.tol,
                final_residual: reports[0].final_residual.max(reports[1].final_residual),
                reports,
                deviation_from_boundary_map: deviation,
                div_cof_max_interior: residual_div_cof(&u).max_interior(),
                field: field_report(&k, &h, &g1, &g2)?,
            };
            emit(cli, out, summary)
        }
        Command::Rigidity(r) => {
            let k = load_curve(&r.field.curve)?;
            gate(&k, force)?;
            let generator: Generator = r.generator.parse()?;
            let grid = Grid2D::new(r.extent, r.n)?;
            let base = TestMapSpec { generator, t0: r.t0, amp: 0.0, freq: r.freq, seed, file: r.file.clone() };
            let built = if generator == Generator::PdeProjected { Some(fields(&k, &r.field, seed)?) } else { None };
            let pair = built.as_ref().map(|(_, g1, g2)| (g1, g2));
            let results = amplitude_sweep(&k, &base, &r.amps, grid, pair)?;
            let rows: Vec<_> = results.iter().map(|(row, _)| row.clone()).collect();
            write_text(out, &to_csv(&rows)?)?;
            if let Some(p) = &r.report {
                let ratios = rows.iter().map(|x| x.ratio);
                let spread = ratios.clone().fold(0.0, f64::max) / ratios.fold(f64::INFINITY, f64::min);
                let report = RigidityReport { delta0: k.reach_estimate(), rows: results.into_iter().map(|x| x.1).collect(), ratio_spread: spread };
                emit(cli, Some(p), report)?;
            }
            Ok(())
        }
        Command::T4(t) => {
            let (pi3, verification) = verify(t.a, t.eps, seed, 2 * t.grid, t.grid)?;
            let laminate = non_compactness_demo(&pi3, t.depth, DemoOptions::default())?;
            if let Some(p) = &t.csv {
                std::fs::write(p, to_csv(&laminate.rows)?)?;
            }
            let report = T4Report {
                eps_decreasing: laminate.eps_decreasing(0.15),
                m_bounded_below: laminate.m_bounded_below(),
                verification,
                laminate,
            };
            emit(cli, out, report)
        }
    }
}

fn h_extent(k: &CurveK, f: &FieldArgs) -> f64 {
    f.grid_extent.unwrap_or(2.0 * k.radius())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
