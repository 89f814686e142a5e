//! Command-line front end. Every run writes its data (to `--output` or
//! stdout) and a JSON metadata sidecar next to it.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Value, json};

use crate::channel::{
    DVector, DephasingSpec, ProcessMatrix, dephasing_channel, fidelity_up_to_rotations, process_fidelity,
};
use crate::crystal::{WavePlateAngles, four_crystal_channel};
use crate::error::{Error, Result};
use crate::io;
use crate::polarization::{BasisLabel, basis_state};
use crate::reachability::{self, SweepConfig};
use crate::sbc::{self, SPEED_OF_LIGHT_NM_PER_FS, WavePacket};
use crate::tomography::{self, AcquisitionConfig, CountMode, MleOptions};

#[derive(Debug, Parser)]
#[command(name = "polchan", version, about = "Controllable unital channels for polarization qubits")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker thread cap; all cores when omitted.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Data file; stdout when omitted.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Metadata sidecar path; defaults to `<output>.meta.json`, or
    /// `polchan-<subcommand>.meta.json` when writing to stdout.
    #[arg(long, global = true)]
    pub meta: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reachable D vectors over a wave-plate angle grid.
    Sweep(SweepArgs),
    /// χ eigenvalues along the dephasing locus.
    Locus(LocusArgs),
    /// Angle search for a target D vector.
    Target(TargetArgs),
    /// Simulated tomography counts for a named channel.
    QptSim(QptSimArgs),
    /// Maximum-likelihood process tomography with Monte-Carlo errors.
    Reconstruct(ReconstructArgs),
    /// Dephasing probability and χ eigenvalues of the Soleil-Babinet dephaser.
    SbcCurve(SbcCurveArgs),
    /// Wavelength fit of an S2 oscillation.
    FitS2(FitS2Args),
    /// Process fidelity between two χ files.
    Fidelity(FidelityArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sweep(_) => "sweep",
            Command::Locus(_) => "locus",
            Command::Target(_) => "target",
            Command::QptSim(_) => "qpt-sim",
            Command::Reconstruct(_) => "reconstruct",
            Command::SbcCurve(_) => "sbc-curve",
            Command::FitS2(_) => "fit-s2",
            Command::Fidelity(_) => "fidelity",
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    /// `lo,hi` in degrees; the upper end is excluded.
    #[arg(long, value_parser = parse_pair, default_value = "0,180")]
    pub angle_range: [f64; 2],
    #[arg(long)]
    pub symmetry_extension: bool,
    #[arg(long, default_value_t = reachability::DEFAULT_COVERAGE_RESOLUTION)]
    pub coverage_resolution: usize,
}

#[derive(Debug, Args)]
pub struct LocusArgs {
    #[arg(long, default_value_t = 10.0)]
    pub theta1_max: f64,
    #[arg(long, default_value_t = 101)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Target D vector `d1,d2,d3`.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    pub d: [f64; 3],
    #[arg(long, default_value_t = reachability::DEFAULT_RESTARTS)]
    pub restarts: usize,
}

#[derive(Debug, Args)]
pub struct ChannelArgs {
    /// `identity`, `dephasing:P`, `locus:THETA1`, `angles:T1,T2,T3` or
    /// `sbc:T_FS[:PRESET]`.
    #[arg(long, default_value = "identity", conflicts_with = "chi")]
    pub channel: String,
    /// χ JSON file instead of a named channel.
    #[arg(long)]
    pub chi: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QptSimArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[arg(long, value_enum, default_value = "coincidence")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 10.0)]
    pub integration_time: f64,
    #[arg(long, default_value_t = 20_000.0)]
    pub singles_rate: f64,
    #[arg(long, default_value_t = 1_000.0)]
    pub coincidence_rate: f64,
    #[arg(long, default_value_t = 2_000.0)]
    pub background_rate: f64,
    /// Write the simulated channel's χ here as well.
    #[arg(long)]
    pub chi_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Singles,
    Coincidence,
}

impl From<ModeArg> for CountMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Singles => CountMode::Singles,
            ModeArg::Coincidence => CountMode::Coincidence,
        }
    }
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Count CSV (`input,projector,mode,integration_s,counts`).
    #[arg(long)]
    pub counts: PathBuf,
    /// χ JSON of the expected channel, for the fidelity report.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Stray-light rate removed from singles records before fitting.
    #[arg(long, default_value_t = 2_000.0)]
    pub background_rate: f64,
    #[arg(long, default_value_t = 1e6)]
    pub penalty_weight: f64,
}

#[derive(Debug, Args)]
pub struct PacketArgs {
    #[arg(long, default_value = "quantum")]
    pub packet: String,
    /// Overrides the preset's coherence time.
    #[arg(long)]
    pub coherence_time: Option<f64>,
    /// Overrides the preset's center wavelength.
    #[arg(long)]
    pub wavelength: Option<f64>,
}

impl PacketArgs {
    fn packet(&self) -> Result<WavePacket> {
        let base = WavePacket::preset(&self.packet)?;
        WavePacket::new(
            self.wavelength.unwrap_or(base.center_wavelength_nm()),
            self.coherence_time.unwrap_or(base.coherence_time_fs()),
        )
    }
}

#[derive(Debug, Args)]
pub struct SbcCurveArgs {
    #[command(flatten)]
    pub packet: PacketArgs,
    #[arg(long, default_value_t = 900.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 91)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct FitS2Args {
    /// Curve CSV (`t_fs,value`); synthetic data is generated when omitted.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[command(flatten)]
    pub packet: PacketArgs,
    /// Standard deviation of the additive noise on synthetic data.
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long, default_value_t = 4.0)]
    pub periods: f64,
    #[arg(long, default_value_t = 60)]
    pub points: usize,
    /// Write the synthetic samples here.
    #[arg(long)]
    pub samples_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FidelityArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Compare rotation-stripped channels.
    #[arg(long)]
    pub strip_rotations: bool,
}

fn parse_floats(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err("values must be finite".into());
    }
    Ok(v)
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let v = parse_floats(s, 2)?;
    Ok([v[0], v[1]])
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    let v = parse_floats(s, 3)?;
    Ok([v[0], v[1], v[2]])
}

/// Resolves `identity`, `dephasing:P`, `locus:THETA1`, `angles:T1,T2,T3` and
/// `sbc:T_FS[:PRESET]`.
pub fn named_channel(spec: &str) -> Result<ProcessMatrix> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let number = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad number `{s}` in channel `{spec}`")))
    };
    match kind {
        "identity" => Ok(ProcessMatrix::identity()),
        "depolarizing" => Ok(ProcessMatrix::depolarizing()),
        "dephasing" => Ok(dephasing_channel(DephasingSpec::new(number(arg)?)?)),
        "locus" => Ok(four_crystal_channel(&reachability::dephasing_locus_angles(number(arg)?)?)),
        "angles" => {
            let v = parse_triple(arg).map_err(Error::Parse)?;
            Ok(four_crystal_channel(&WavePlateAngles::from(v)))
        }
        "sbc" => {
            let (t, preset) = arg.split_once(':').unwrap_or((arg, "quantum"));
            Ok(sbc::sbc_channel(number(t)?, &WavePacket::preset(preset)?))
        }
        other => Err(Error::InvalidArgument(format!("unknown channel `{other}`"))),
    }
}

struct Output {
    data: Vec<u8>,
    extra: Vec<(PathBuf, Vec<u8>)>,
    metadata: Value,
    /// Printed to stdout when the data goes to a file.
    summary: Option<String>,
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes(v: &impl serde::Serialize) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn side_path(output: Option<&Path>, suffix: &str, command: &str) -> PathBuf {
    match output {
        Some(p) => {
            let mut s = p.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        }
        None => PathBuf::from(format!("polchan-{command}{suffix}")),
    }
}

fn run_command(cli: &Cli) -> Result<Output> {
    let name = cli.command.name();
    match &cli.command {
        Command::Sweep(a) => {
            let config = SweepConfig {
                grid_points_per_angle: a.grid,
                angle_range: a.angle_range,
                symmetry_extension: a.symmetry_extension,
            };
            let cloud = reachability::sweep(&config, cli.seed)?;
            let coverage = reachability::coverage_fraction(&cloud, a.coverage_resolution)?;
            let data = match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => csv_bytes(|b| io::write_cloud(b, &cloud.points))?,
                Format::Json => json_bytes(&json!({ "points": cloud.points }))?,
            };
            Ok(Output {
                data,
                extra: vec![],
                metadata: json!({
                    "sweep": cloud.metadata,
                    "points": cloud.points.len(),
                    "coverage_fraction": coverage,
                    "coverage_resolution": a.coverage_resolution,
                }),
                summary: Some(format!("{} points, coverage {coverage:.4}", cloud.points.len())),
            })
        }
        Command::Locus(a) => {
            let scan = reachability::locus_scan(a.theta1_max, a.steps)?;
            let data = match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => csv_bytes(|b| io::write_locus(b, &scan))?,
                Format::Json => json_bytes(&scan.iter().map(io::LocusRow::from).collect::<Vec<_>>())?,
            };
            Ok(Output {
                data,
                extra: vec![],
                metadata: json!({ "theta1_max_deg": a.theta1_max, "steps": a.steps }),
                summary: None,
            })
        }
        Command::Target(a) => {
            let target = DVector::from_array(a.d);
            let sol = reachability::find_angles_for_target(&target, a.restarts, cli.seed)?;
            let result = json!({
                "target": target,
                "angles_deg": sol.angles.degrees(),
                "angles_rad": sol.angles.radians(),
                "achieved": sol.achieved,
                "fidelity": sol.fidelity,
            });
            let data = match cli.format.unwrap_or(Format::Json) {
                Format::Json => json_bytes(&result)?,
                Format::Csv => {
                    let [t1, t2, t3] = sol.angles.degrees();
                    let [d1, d2, d3] = sol.achieved.to_array();
                    format!(
                        "theta1_deg,theta2_deg,theta3_deg,d1,d2,d3,fidelity\n{t1},{t2},{t3},{d1},{d2},{d3},{}\n",
                        sol.fidelity
                    )
                    .into_bytes()
                }
            };
            Ok(Output {
                data,
                extra: vec![],
                metadata: json!({ "restarts": a.restarts, "result": result }),
                summary: Some(format!(
                    "angles {:?} deg, fidelity {:.9}",
                    sol.angles.degrees(),
                    sol.fidelity
                )),
            })
        }
        Command::QptSim(a) => {
            let chi = match &a.channel.chi {
                Some(p) => io::read_chi(p)?,
                None => named_channel(&a.channel.channel)?,
            };
            let config = AcquisitionConfig {
                singles_rate: a.singles_rate,
                coincidence_rate: a.coincidence_rate,
                background_rate: a.background_rate,
                integration_time: a.integration_time,
                mode: a.mode.into(),
                seed: cli.seed,
            };
            let records = tomography::simulate_counts(&chi, &config)?;
            let data = match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => csv_bytes(|b| io::write_counts(b, &records))?,
                Format::Json => json_bytes(&records)?,
            };
            let extra = match &a.chi_out {
                Some(p) => vec![(p.clone(), io::chi_to_json(&chi).into_bytes())],
                None => vec![],
            };
            Ok(Output {
                data,
                extra,
                metadata: json!({
                    "channel": a.channel.chi.as_ref().map(|p| p.display().to_string()).unwrap_or(a.channel.channel.clone()),
                    "acquisition": config,
                    "chi": io::ChiDocument::from_chi(&chi),
                }),
                summary: None,
            })
        }
        Command::Reconstruct(a) => {
            let records = io::read_counts(std::fs::File::open(&a.counts)?)?;
            let records = tomography::subtract_background(&records, a.background_rate);
            let model = a.model.as_deref().map(io::read_chi).transpose()?;
            let opts = MleOptions { penalty_weight: a.penalty_weight, ..MleOptions::default() };
            let result = tomography::monte_carlo_errors(&records, model.as_ref(), a.samples, cli.seed, &opts)?;
            let data = match cli.format.unwrap_or(Format::Json) {
                Format::Json => json_bytes(&result)?,
                Format::Csv => {
                    let mut s = String::from("index,eigenvalue,error\n");
                    for (i, (e, d)) in result.eigenvalues.iter().zip(&result.eigenvalue_errors).enumerate() {
                        s.push_str(&format!("{i},{e},{d}\n"));
                    }
                    s.into_bytes()
                }
            };
            Ok(Output {
                data,
                extra: vec![],
                metadata: json!({
                    "counts": a.counts.display().to_string(),
                    "model": a.model.as_ref().map(|p| p.display().to_string()),
                    "background_rate": a.background_rate,
                    "mle": opts,
                    "mc_samples": a.samples,
                    "iterations": result.iterations,
                }),
                summary: result.fidelity_to_model.map(|f| {
                    format!("fidelity {f:.6} ± {:.6}", result.fidelity_error.unwrap_or(0.0))
                }),
            })
        }
        Command::SbcCurve(a) => {
            let packet = a.packet.packet()?;
            if a.steps < 2 || !(a.t_max > 0.0) {
                return Err(Error::InvalidArgument("need steps ≥ 2 and t_max > 0".into()));
            }
            let ts: Vec<f64> = (0..a.steps).map(|k| a.t_max * k as f64 / (a.steps - 1) as f64).collect();
            let rows: Vec<(f64, f64, [f64; 4])> = ts
                .iter()
                .map(|&t| (t, sbc::sbc_dephasing_probability(t, &packet), sbc::sbc_channel(t, &packet).eigenvalues()))
                .collect();
            let (data, extra) = match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let curve: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
                    let mut eig = String::from("t_fs,eig0,eig1,eig2,eig3\n");
                    for (t, _, e) in &rows {
                        eig.push_str(&format!("{t},{},{},{},{}\n", e[0], e[1], e[2], e[3]));
                    }
                    (
                        csv_bytes(|b| io::write_curve(b, &curve))?,
                        vec![(side_path(cli.output.as_deref(), ".eigenvalues.csv", name), eig.into_bytes())],
                    )
                }
                Format::Json => (
                    json_bytes(
                        &rows
                            .iter()
                            .map(|(t, p, e)| json!({ "t_fs": t, "p": p, "eigenvalues": e }))
                            .collect::<Vec<_>>(),
                    )?,
                    vec![],
                ),
            };
            Ok(Output {
                data,
                extra,
                metadata: json!({
                    "packet": packet,
                    "coherence_convention": "|gamma(tau)| = exp(-1/2), gaussian",
                    "t_max_fs": a.t_max,
                    "steps": a.steps,
                }),
                summary: None,
            })
        }
        Command::FitS2(a) => {
            let (samples, synthetic) = match &a.samples {
                Some(p) => (io::read_curve(std::fs::File::open(p)?)?, false),
                None => (synthetic_s2(a, cli.seed)?, true),
            };
            let fit = sbc::fit_wavelength(&samples)?;
            let data = match cli.format.unwrap_or(Format::Json) {
                Format::Json => json_bytes(&fit)?,
                Format::Csv => format!(
                    "wavelength_nm,uncertainty_nm\n{},{}\n",
                    fit.wavelength_nm, fit.uncertainty_nm
                )
                .into_bytes(),
            };
            let extra = match &a.samples_out {
                Some(p) => vec![(p.clone(), csv_bytes(|b| io::write_curve(b, &samples))?)],
                None => vec![],
            };
            Ok(Output {
                data,
                extra,
                metadata: json!({
                    "samples": a.samples.as_ref().map(|p| p.display().to_string()),
                    "synthetic": synthetic.then(|| json!({
                        "packet": a.packet.packet().ok(),
                        "noise": a.noise,
                        "periods": a.periods,
                        "points": a.points,
                    })),
                }),
                summary: Some(format!("wavelength {:.3} ± {:.3} nm", fit.wavelength_nm, fit.uncertainty_nm)),
            })
        }
        Command::Fidelity(a) => {
            let chi_a = io::read_chi(&a.a)?;
            let chi_b = io::read_chi(&a.b)?;
            let f = if a.strip_rotations {
                fidelity_up_to_rotations(&chi_a, &chi_b)
            } else {
                process_fidelity(&chi_a, &chi_b)
            };
            let data = match cli.format.unwrap_or(Format::Json) {
                Format::Json => json_bytes(&json!({ "fidelity": f }))?,
                Format::Csv => format!("fidelity\n{f}\n").into_bytes(),
            };
            Ok(Output {
                data,
                extra: vec![],
                metadata: json!({
                    "a": a.a.display().to_string(),
                    "b": a.b.display().to_string(),
                    "strip_rotations": a.strip_rotations,
                }),
                summary: Some(format!("fidelity {f:.9}")),
            })
        }
    }
}

/// S2 samples of a `p` input over `periods` optical periods with Gaussian
/// additive noise.
fn synthetic_s2(a: &FitS2Args, seed: u64) -> Result<Vec<(f64, f64)>> {
    use rand_distr::{Distribution, Normal};
    let packet = a.packet.packet()?;
    if a.points < 2 || !(a.periods > 0.0) || !(a.noise >= 0.0) {
        return Err(Error::InvalidArgument("need points ≥ 2, periods > 0 and noise ≥ 0".into()));
    }
    let period = packet.center_wavelength_nm() / SPEED_OF_LIGHT_NM_PER_FS;
    let ts: Vec<f64> = (0..a.points)
        .map(|i| i as f64 * a.periods * period / (a.points - 1) as f64)
        .collect();
    let mut rng = tomography::stream_rng(seed, 0);
    let normal = Normal::new(0.0, a.noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(sbc::s2_curve(&ts, &packet, &basis_state(BasisLabel::P))
        .into_iter()
        .map(|(t, s)| (t, s + normal.sample(&mut rng)))
        .collect())
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be positive".into()));
        }
        // A second configuration in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let name = cli.command.name();
    let out = run_command(cli)?;
    match &cli.output {
        Some(p) => {
            std::fs::write(p, &out.data)?;
            if let Some(s) = &out.summary {
                println!("{s}");
            }
        }
        None => std::io::stdout().write_all(&out.data)?,
    }
    let mut files = vec![cli.output.as_ref().map(|p| p.display().to_string())];
    for (path, bytes) in &out.extra {
        std::fs::write(path, bytes)?;
        files.push(Some(path.display().to_string()));
    }
    let meta_path = cli.meta.clone().unwrap_or_else(|| side_path(cli.output.as_deref(), ".meta.json", name));
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let metadata = json!({
        "subcommand": name,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cli.seed,
        "threads": cli.threads,
        "format": cli.format.map(|f| format!("{f:?}").to_lowercase()),
        "outputs": files,
        "timestamp": timestamp,
        "config": out.metadata,
    });
    io::write_string(&meta_path, &serde_json::to_string_pretty(&metadata)?)?;
    Ok(())
}

/// Parses `args` and runs the command, returning the process exit code:
/// 0 on success, 2 on usage or validation errors, 3 on numerical failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            if e.is_validation() { 2 } else { 3 }
        }
    }
}
