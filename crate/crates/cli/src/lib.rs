//! Command-line harness around the `lieicp` library: scenario generation,
//! single registrations, parameter sweeps and tensor dumps.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lieicp::dataset::{
    add_noise, default_hole_center, load_cloud, load_scenario, make_rotated_scenario, punch_hole,
    save_scenario, subsample_step, NoiseSpec, Scenario,
};
use lieicp::matching::MatchDirection;
use lieicp::pipeline::correspondence_mrms;
use lieicp::similarity::{descriptors, DescriptorConfig};
use lieicp::voting::{VotingConfig, DEFAULT_PHI_MAX};
use lieicp::{register, rotation_geodesic_error, Algorithm, Error, Point3, RegistrationConfig, RunReport};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Neighbourhood sizes swept by default, in percent.
pub const DEFAULT_K_PERCENTS: [f64; 5] = [5.0, 10.0, 25.0, 50.0, 75.0];

/// The six shape-driven algorithms compared in the benchmark table.
pub const PAPER_ALGORITHMS: [Algorithm; 6] = [
    Algorithm::IcpCtsf,
    Algorithm::SwcIcp,
    Algorithm::IcpLie0,
    Algorithm::IcpLie1,
    Algorithm::SwcLie0,
    Algorithm::SwcLie1,
];

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "lieicp", version, about = "Rigid point-cloud registration experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build rotated, hole and noise scenarios from a cloud file.
    Scenario(ScenarioArgs),
    /// Run one algorithm on one scenario manifest.
    Register(RegisterArgs),
    /// Run every algorithm × k × scenario combination.
    Sweep(SweepArgs),
    /// Dump per-point tensor eigenvalues and log embeddings as CSV.
    InspectTensors(InspectArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Input cloud (.ply ascii or whitespace-separated xyz).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep every step-th vertex.
    #[arg(long, default_value_t = 45)]
    pub step: usize,
    /// Rotation angle in degrees.
    #[arg(long, default_value_t = 45.0)]
    pub angle: f64,
    /// Rotation axis: x, y, z or three comma-separated components.
    #[arg(long, default_value = "y")]
    pub axis: String,
    /// Also write a hole scenario with this radius.
    #[arg(long)]
    pub hole_radius: Option<f64>,
    /// Hole centre as x,y,z (default: target point nearest the centroid).
    #[arg(long)]
    pub hole_center: Option<String>,
    /// Also write a noise scenario; ν as a percentage of the target
    /// bounding-box diagonal.
    #[arg(long, conflicts_with = "noise_absolute")]
    pub noise_percent: Option<f64>,
    /// Also write a noise scenario with ν in model units.
    #[arg(long)]
    pub noise_absolute: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Literal,
    Target,
}

/// Registration settings shared by `register` and `sweep`. Unset flags fall
/// back to the manifest's optional `config` object, then to defaults.
#[derive(Debug, Clone, Args, Default)]
pub struct ConfigArgs {
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub w0: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Vote cut-off angle in degrees.
    #[arg(long)]
    pub phi_max_deg: Option<f64>,
    #[arg(long)]
    pub eps_rel: Option<f64>,
    #[arg(long)]
    pub tensor_prescale: bool,
    #[arg(long)]
    pub reverse_votes: bool,
    #[arg(long)]
    pub trace_normalize: bool,
    #[arg(long)]
    pub refresh_field: bool,
    /// Score the SWC-LIE shape relation with CTSF instead of the Lie score.
    #[arg(long)]
    pub ctsf_shape_relation: bool,
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub algorithm: String,
    /// Neighbourhood size in percent.
    #[arg(long)]
    pub k: Option<f64>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Per-iteration CSV output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON summary output (stdout when omitted).
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Scenario manifests (repeatable).
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    /// Comma-separated algorithm tags.
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Vec<String>,
    /// Comma-separated neighbourhood sizes in percent.
    #[arg(long = "k", value_delimiter = ',')]
    pub k_percents: Vec<f64>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Maximum concurrent runs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV output (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    pub k: f64,
    #[arg(long)]
    pub phi_max_deg: Option<f64>,
    #[arg(long)]
    pub eps_rel: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Formats with 15 significant digits, switching to exponent notation for
/// very small or very large magnitudes.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&mag) {
        return format!("{x:.14e}");
    }
    let decimals = (14 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

fn parse_vec3(s: &str) -> CliResult<Vector3<f64>> {
    match s.trim().to_ascii_lowercase().as_str() {
        "x" => return Ok(Vector3::x()),
        "y" => return Ok(Vector3::y()),
        "z" => return Ok(Vector3::z()),
        _ => {}
    }
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("expected x,y,z but got '{s}'")))?;
    if parts.len() != 3 {
        return Err(CliError::Usage(format!("expected three components, got '{s}'")));
    }
    Ok(Vector3::new(parts[0], parts[1], parts[2]))
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

pub fn cmd_scenario(args: &ScenarioArgs) -> CliResult<Vec<PathBuf>> {
    let cloud = load_cloud(&args.input, None)?;
    let cloud = subsample_step(&cloud, args.step)?;
    let axis = parse_vec3(&args.axis)?;
    let base = make_rotated_scenario(&cloud, args.angle, &axis)?;
    let mut written = vec![save_scenario(&base, &args.out, "original")?];
    if let Some(radius) = args.hole_radius {
        let center = match &args.hole_center {
            Some(c) => parse_vec3(c)?,
            None => default_hole_center(&base.target)?,
        };
        written.push(save_scenario(&punch_hole(&base, &center, radius)?, &args.out, "hole")?);
    }
    let spec = match (args.noise_percent, args.noise_absolute) {
        (Some(p), _) => Some(NoiseSpec::from_percent(&base.target, p, args.seed)),
        (None, Some(nu)) => Some(NoiseSpec { nu, seed: args.seed }),
        (None, None) => None,
    };
    if let Some(spec) = spec {
        written.push(save_scenario(&add_noise(&base, &spec)?, &args.out, "noise")?);
    }
    Ok(written)
}

fn manifest_config(path: &Path) -> CliResult<Value> {
    let v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(v.get("config").cloned().unwrap_or(Value::Null))
}

/// Resolves the configuration: flags, then the manifest's `config` object,
/// then built-in defaults.
pub fn build_config(
    algorithm: Algorithm,
    k: Option<f64>,
    flags: &ConfigArgs,
    manifest: &Value,
) -> CliResult<RegistrationConfig> {
    let num = |key: &str| manifest.get(key).and_then(Value::as_f64);
    let flag = |key: &str| manifest.get(key).and_then(Value::as_bool).unwrap_or(false);
    let mut cfg = RegistrationConfig::new(algorithm);
    if let Some(v) = k.or(num("k_percent")) {
        cfg.k_percent = v;
    }
    if let Some(v) = flags.tau.or(num("tau")) {
        cfg.tau = v;
    }
    cfg.w0 = flags.w0.or(num("w0"));
    if let Some(v) = flags.b.or(num("b")) {
        cfg.b = v;
    }
    if let Some(v) = flags.max_iterations.or(num("max_iterations").map(|x| x as usize)) {
        cfg.max_iterations = v;
    }
    if let Some(v) = flags.phi_max_deg.or(num("phi_max_deg")) {
        cfg.phi_max = v.to_radians();
    }
    if let Some(v) = flags.eps_rel.or(num("eps_rel")) {
        cfg.eps_rel = v;
    }
    cfg.tensor_prescale = flags.tensor_prescale || flag("tensor_prescale");
    cfg.reverse_votes = flags.reverse_votes || flag("reverse_votes");
    cfg.trace_normalize = flags.trace_normalize || flag("trace_normalize");
    cfg.refresh_field = flags.refresh_field || flag("refresh_field");
    cfg.lie_shape_relation = !(flags.ctsf_shape_relation || flag("ctsf_shape_relation"));
    let direction = match flags.direction {
        Some(d) => d,
        None => match manifest.get("direction").and_then(Value::as_str) {
            Some("target") => DirectionArg::Target,
            _ => DirectionArg::Literal,
        },
    };
    cfg.direction = match direction {
        DirectionArg::Literal => MatchDirection::Literal,
        DirectionArg::Target => MatchDirection::TargetClaimsSource,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Outcome of one registration judged against the scenario's ground truth.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub algorithm: String,
    /// MRMS over the ground-truth correspondence when available, otherwise
    /// over the final matched pairs.
    pub final_mrms: f64,
    pub match_mrms: f64,
    pub rotation_error_deg: f64,
    pub translation_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate_steps: usize,
    pub w0: f64,
}

pub fn evaluate(scn: &Scenario, cfg: &RegistrationConfig) -> CliResult<(RunReport, Summary)> {
    let report = register(&scn.source, &scn.target, cfg)?;
    let t = &report.final_transform;
    let final_mrms = match &scn.correspondence {
        Some(pairs) if !pairs.is_empty() => correspondence_mrms(&scn.source, &scn.target, pairs, t)?,
        _ => report.final_mrms,
    };
    let rotation_error = rotation_geodesic_error(&t.rotation, &scn.ground_truth.rotation)?;
    let summary = Summary {
        algorithm: cfg.algorithm.tag().to_string(),
        final_mrms,
        match_mrms: report.final_mrms,
        rotation_error_deg: rotation_error.to_degrees(),
        translation_error: (t.translation - scn.ground_truth.translation).norm(),
        iterations: report.iterations_used,
        converged: report.converged,
        degenerate_steps: report.degenerate_steps,
        w0: report.w0,
    };
    Ok((report, summary))
}

pub fn iteration_csv(report: &RunReport) -> String {
    let mut s = String::from("iteration,mrms,w_m,matches\n");
    for r in &report.per_iteration {
        let _ = writeln!(s, "{},{},{},{}", r.iteration, fmt_num(r.mrms), fmt_num(r.w_m), r.matches);
    }
    s
}

fn config_echo(cfg: &RegistrationConfig) -> Value {
    json!({
        "algorithm": cfg.algorithm.tag(),
        "tau": cfg.tau,
        "k_percent": cfg.k_percent,
        "w0": cfg.w0,
        "b": cfg.b,
        "zero_cutoff": cfg.zero_cutoff,
        "max_iterations": cfg.max_iterations,
        "phi_max_deg": cfg.phi_max.to_degrees(),
        "eps_rel": cfg.eps_rel,
        "tensor_prescale": cfg.tensor_prescale,
        "reverse_votes": cfg.reverse_votes,
        "trace_normalize": cfg.trace_normalize,
        "refresh_field": cfg.refresh_field,
        "lie_shape_relation": cfg.lie_shape_relation,
        "direction": match cfg.direction {
            MatchDirection::Literal => "literal",
            MatchDirection::TargetClaimsSource => "target",
        },
    })
}

fn parse_algorithm(tag: &str) -> CliResult<Algorithm> {
    tag.parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

pub fn cmd_register(args: &RegisterArgs) -> CliResult<Summary> {
    let algorithm = parse_algorithm(&args.algorithm)?;
    let cfg = build_config(algorithm, args.k, &args.config, &manifest_config(&args.manifest)?)?;
    let scn = load_scenario(&args.manifest)?;
    let (report, summary) = evaluate(&scn, &cfg)?;
    if let Some(csv) = &args.csv {
        write_output(Some(csv), &iteration_csv(&report))?;
    }
    let mut doc = serde_json::to_value(&summary)?;
    doc["config"] = config_echo(&cfg);
    doc["manifest"] = json!(args.manifest.display().to_string());
    write_output(args.json.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub scenario: String,
    pub algorithm: Algorithm,
    pub k: f64,
    pub outcome: std::result::Result<Summary, String>,
    pub best: bool,
}

fn scenario_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn run_sweep(args: &SweepArgs) -> CliResult<Vec<SweepRow>> {
    let algorithms: Vec<Algorithm> = if args.algorithms.is_empty() {
        PAPER_ALGORITHMS.to_vec()
    } else {
        args.algorithms.iter().map(|a| parse_algorithm(a)).collect::<CliResult<_>>()?
    };
    let ks: Vec<f64> = if args.k_percents.is_empty() {
        DEFAULT_K_PERCENTS.to_vec()
    } else {
        args.k_percents.clone()
    };
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }

    let mut scenarios = Vec::new();
    for m in &args.manifests {
        scenarios.push((scenario_name(m), load_scenario(m)?, manifest_config(m)?));
    }
    let mut combos = Vec::new();
    for (si, _) in scenarios.iter().enumerate() {
        for &a in &algorithms {
            for &k in &ks {
                combos.push((si, a, k));
            }
        }
    }
    // Validate every configuration up front so usage errors abort the sweep.
    let configs = combos
        .iter()
        .map(|&(si, a, k)| build_config(a, Some(k), &args.config, &scenarios[si].2))
        .collect::<CliResult<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut rows: Vec<SweepRow> = pool.install(|| {
        combos
            .par_iter()
            .zip(configs.par_iter())
            .map(|(&(si, a, k), cfg)| SweepRow {
                scenario: scenarios[si].0.clone(),
                algorithm: a,
                k,
                outcome: evaluate(&scenarios[si].1, cfg).map(|(_, s)| s).map_err(|e| e.to_string()),
                best: false,
            })
            .collect()
    });
    rows.sort_by(|a, b| {
        a.scenario
            .cmp(&b.scenario)
            .then(a.algorithm.cmp(&b.algorithm))
            .then(a.k.total_cmp(&b.k))
    });
    mark_best(&mut rows);
    Ok(rows)
}

/// Flags the k with the smallest final MRMS within each (scenario,
/// algorithm) group.
fn mark_best(rows: &mut [SweepRow]) {
    let mut start = 0;
    while start < rows.len() {
        let mut end = start;
        while end < rows.len()
            && rows[end].scenario == rows[start].scenario
            && rows[end].algorithm == rows[start].algorithm
        {
            end += 1;
        }
        let best = (start..end)
            .filter_map(|i| rows[i].outcome.as_ref().ok().map(|s| (i, s.final_mrms)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, _)) = best {
            rows[i].best = true;
        }
        start = end;
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("strategy,scenario,algorithm,k,final_mrms,rotation_error_deg,iterations,status,best\n");
    for r in rows {
        let strategy = r
            .algorithm
            .lie_strategy()
            .map(|st| st.index().to_string())
            .unwrap_or_else(|| "-".into());
        let (mrms, rot, iters, status) = match &r.outcome {
            Ok(sm) => (
                fmt_num(sm.final_mrms),
                fmt_num(sm.rotation_error_deg),
                sm.iterations.to_string(),
                "ok".to_string(),
            ),
            Err(e) => (String::new(), String::new(), String::new(), format!("\"failed: {}\"", e.replace('"', "'"))),
        };
        let _ = writeln!(
            s,
            "{strategy},{},{},{},{mrms},{rot},{iters},{status},{}",
            r.scenario,
            r.algorithm.tag(),
            r.k,
            if r.best { "*" } else { "" }
        );
    }
    s
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let rows = run_sweep(args)?;
    write_output(args.out.as_deref(), &sweep_csv(&rows))
}

pub fn cmd_inspect(args: &InspectArgs) -> CliResult<()> {
    let cloud = load_cloud(&args.input, None)?;
    let mut dcfg = DescriptorConfig {
        voting: VotingConfig::new(args.k),
        ..DescriptorConfig::new(args.k)
    };
    dcfg.voting.phi_max = args.phi_max_deg.map(f64::to_radians).unwrap_or(DEFAULT_PHI_MAX);
    if let Some(e) = args.eps_rel {
        dcfg.eps_rel = e;
    }
    let desc = descriptors(&cloud, &dcfg)?;
    let mut s = String::from(
        "index,x,y,z,lambda1,lambda2,lambda3,t11_00,t11_01,t11_02,t11_11,t11_12,t11_22,t12_x,t12_y,t12_z\n",
    );
    for (i, d) in desc.iter().enumerate() {
        let t = &d.embedding.t11;
        let p: &Point3 = &d.point;
        let vals = [
            p.x,
            p.y,
            p.z,
            d.eigenvalues[0],
            d.eigenvalues[1],
            d.eigenvalues[2],
            t[(0, 0)],
            t[(0, 1)],
            t[(0, 2)],
            t[(1, 1)],
            t[(1, 2)],
            t[(2, 2)],
            d.embedding.t12.x,
            d.embedding.t12.y,
            d.embedding.t12.z,
        ];
        let row: Vec<String> = vals.iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(s, "{i},{}", row.join(","));
    }
    write_output(args.out.as_deref(), &s)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Scenario(a) => {
            for p in cmd_scenario(a)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Register(a) => cmd_register(a).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(a),
        Command::InspectTensors(a) => cmd_inspect(a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
