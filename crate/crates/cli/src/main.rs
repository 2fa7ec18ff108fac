//! `csqpt`: simulate, reconstruct and analyze coherent-state process tomography.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use csqpt::basis::{
    display_indices, gellmann_set, logical_ordered_basis, logical_ptm, population_transfer_matrix,
    transfer_matrix, TransferMatrix,
};
use csqpt::channel::{compose, unitary_channel, Channel, CoherenceTimes, KrausSet};
use csqpt::fock::FockDim;
use csqpt::gates::{
    compose_unitary, ideal_logical_x, noisy_gate_process, x_gate_sequence, BinomialCode,
    GateProcess, GateSequence,
};
use csqpt::metrics::{
    avg_gate_fidelity, decoder_study, error_budget, leakage_injection_channel, truncation_sweep,
    AncillaPrep,
};
use csqpt::reconstruct::{reconstruct, ReconstructionConfig, ReconstructionResult};
use csqpt::tomography::{simulate_dataset, ProbeGrid, TomographyDataset, WignerGrid};
use csqpt::Error;

const DEFAULT_DIM: usize = 32;
const FIDELITY_SCHEMA: &str = "csqpt-fidelity-v1";
/// Basis states shown by `--emit gtm` and `--emit poptm`.
const DISPLAY_LEVELS: usize = 6;
const SWEEP_MAX_CUT: usize = 12;

#[derive(Parser)]
#[command(
    name = "csqpt",
    version,
    about = "Coherent-state process tomography of bosonic gates"
)]
struct Cli {
    /// JSON file with per-command settings, e.g. {"simulate": {"shots": 1000}}.
    /// Command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a Wigner tomography dataset for a gate.
    Simulate(SimulateArgs),
    /// Reconstruct Kraus operators from a dataset.
    Reconstruct(ReconstructArgs),
    /// Emit transfer matrices and fidelities of a reconstruction.
    Analyze(AnalyzeArgs),
    /// Split the gate infidelity into cavity decoherence contributions.
    Budget(BudgetArgs),
    /// Compare decoded and direct logical PTMs of a leaky gate.
    DecodeStudy(DecodeStudyArgs),
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
struct SimulateArgs {
    /// "x-gate", a gate-sequence JSON file or a Kraus JSON file.
    #[arg(long)]
    gate: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Shots per Wigner point; 0 gives exact values.
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// n,alpha_max
    #[arg(long)]
    probe_grid: Option<String>,
    /// n,beta_max
    #[arg(long)]
    wigner_grid: Option<String>,
    /// T1,T2 in microseconds ("inf" disables a mechanism).
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateConfig {
    gate: String,
    dim: usize,
    shots: u64,
    seed: u64,
    probe_grid: String,
    wigner_grid: String,
    noise: String,
    out: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
struct ReconstructArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// One value, or a comma-separated list to sweep.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ReconstructRunConfig {
    data: PathBuf,
    gammas: Vec<f64>,
    out: PathBuf,
    reconstruction: ReconstructionConfig,
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
struct AnalyzeArgs {
    #[arg(long)]
    result: Option<PathBuf>,
    /// "x-gate" or a Kraus JSON file.
    #[arg(long)]
    target: Option<String>,
    /// Comma-separated subset of gtm, ptm, poptm, fidelity, sweep (default all).
    #[arg(long)]
    emit: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct AnalyzeConfig {
    result: PathBuf,
    target: String,
    emit: Vec<String>,
    out_dir: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
struct BudgetArgs {
    /// "x-gate" or a gate-sequence JSON file.
    #[arg(long)]
    gate: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct BudgetConfig {
    gate: String,
    dim: usize,
    noise: String,
    out: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
struct DecodeStudyArgs {
    #[arg(long)]
    gate: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    noise: Option<String>,
    /// Probability of moving logical population onto the error space.
    #[arg(long)]
    leakage: Option<f64>,
    /// Ancilla preparation: "input" or "ground".
    #[arg(long)]
    prep: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct DecodeStudyConfig {
    gate: String,
    dim: usize,
    noise: String,
    leakage: f64,
    prep: String,
    out_dir: PathBuf,
}

enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                Error::Numerical(_)
                | Error::NotAChannel(_)
                | Error::Retraction(_)
                | Error::Linalg(_) => 4,
                _ => 3,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Overlays the flags given on the command line onto the config-file section.
fn merge<T: Serialize + DeserializeOwned>(
    file: Option<&Value>,
    section: &str,
    flags: &T,
) -> CliResult<T> {
    let mut base = match file.and_then(|f| f.get(section)) {
        Some(Value::Object(m)) => m.clone(),
        Some(_) => {
            return Err(usage(format!(
                "config section '{section}' must be an object"
            )))
        }
        None => serde_json::Map::new(),
    };
    let Value::Object(over) = serde_json::to_value(flags).map_err(|e| usage(e.to_string()))? else {
        unreachable!("argument structs serialize to objects")
    };
    for (k, v) in over {
        if !v.is_null() {
            base.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(base))
        .map_err(|e| usage(format!("config section '{section}': {e}")))
}

fn print_resolved<T: Serialize>(command: &str, cfg: &T) {
    let text = serde_json::to_string_pretty(cfg).expect("resolved config serializes");
    println!("{command} resolved config:\n{text}");
}

fn fock_dim(d: usize) -> CliResult<FockDim> {
    FockDim::new(d).map_err(|e| usage(e.to_string()))
}

fn parse_pair(s: &str, flag: &str) -> CliResult<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b] = parts.as_slice() else {
        return Err(usage(format!(
            "{flag} expects two comma-separated values, got '{s}'"
        )));
    };
    let p = |x: &str| {
        x.parse::<f64>()
            .map_err(|_| usage(format!("{flag}: cannot parse '{x}'")))
    };
    Ok((p(a)?, p(b)?))
}

fn parse_grid(s: &str, flag: &str) -> CliResult<(usize, f64)> {
    let (n, extent) = parse_pair(s, flag)?;
    if n < 1.0 || n.fract() != 0.0 {
        return Err(usage(format!(
            "{flag}: grid size must be a positive integer, got {n}"
        )));
    }
    Ok((n as usize, extent))
}

fn parse_noise(s: &str) -> CliResult<CoherenceTimes> {
    let (t1, t2) = parse_pair(s, "--noise")?;
    CoherenceTimes::new(t1, t2).map_err(|e| usage(e.to_string()))
}

fn noise_label(t: &CoherenceTimes) -> String {
    format!("{},{}", t.t1_us, t.t2_us)
}

enum GateSpec {
    Sequence(GateSequence),
    Kraus(KrausSet),
}

fn load_gate(spec: &str) -> CliResult<GateSpec> {
    if spec == "x-gate" {
        return Ok(GateSpec::Sequence(x_gate_sequence()));
    }
    let text = fs::read_to_string(spec).map_err(|e| CliError::Core(Error::Io(e)))?;
    let value: Value = serde_json::from_str(&text).map_err(Error::Json)?;
    if value.get("steps").is_some() {
        Ok(GateSpec::Sequence(GateSequence::from_json(&text)?))
    } else {
        Ok(GateSpec::Kraus(KrausSet::from_json_value(value)?))
    }
}

enum GateChannel {
    Kraus(KrausSet),
    Process(GateProcess),
}

fn is_noiseless(t: &CoherenceTimes) -> bool {
    t.t1_us.is_infinite() && t.t2_us.is_infinite()
}

fn checked_kraus(k: KrausSet, dim: FockDim, noise: &CoherenceTimes) -> CliResult<KrausSet> {
    if !is_noiseless(noise) {
        return Err(usage(
            "--noise applies to gate sequences, not to Kraus files",
        ));
    }
    if k.dim() != dim {
        return Err(CliError::Core(Error::Dimension(format!(
            "Kraus file has dimension {}, but --dim is {dim}",
            k.dim()
        ))));
    }
    Ok(k)
}

/// The gate channel at dimension `dim`, optionally with cavity decoherence.
fn gate_channel(spec: GateSpec, dim: FockDim, noise: &CoherenceTimes) -> CliResult<GateChannel> {
    match spec {
        GateSpec::Sequence(seq) if is_noiseless(noise) => Ok(GateChannel::Kraus(unitary_channel(
            &compose_unitary(&seq, dim)?,
        )?)),
        GateSpec::Sequence(seq) => Ok(GateChannel::Process(GateProcess::new(&seq, noise, dim)?)),
        GateSpec::Kraus(k) => Ok(GateChannel::Kraus(checked_kraus(k, dim, noise)?)),
    }
}

/// Like [`gate_channel`], but always in Kraus form.
fn gate_kraus(spec: GateSpec, dim: FockDim, noise: &CoherenceTimes) -> CliResult<KrausSet> {
    match spec {
        GateSpec::Sequence(seq) => Ok(noisy_gate_process(&seq, noise, dim)?),
        GateSpec::Kraus(k) => checked_kraus(k, dim, noise),
    }
}

fn gate_dim(spec: &GateSpec, requested: Option<usize>) -> usize {
    match (spec, requested) {
        (_, Some(d)) => d,
        (GateSpec::Kraus(k), None) => k.dim().get(),
        (GateSpec::Sequence(_), None) => DEFAULT_DIM,
    }
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let gate_name = args.gate.unwrap_or_else(|| "x-gate".into());
    let spec = load_gate(&gate_name)?;
    let cfg = SimulateConfig {
        dim: gate_dim(&spec, args.dim),
        gate: gate_name,
        shots: args.shots.unwrap_or(0),
        seed: args.seed.unwrap_or(0),
        probe_grid: args.probe_grid.unwrap_or_else(|| "5,1.5".into()),
        wigner_grid: args.wigner_grid.unwrap_or_else(|| "21,2.62".into()),
        noise: args.noise.unwrap_or_else(|| "inf,inf".into()),
        out: args.out.unwrap_or_else(|| "dataset.json".into()),
    };
    print_resolved("simulate", &cfg);
    println!("seed: {}", cfg.seed);

    let (np, amax) = parse_grid(&cfg.probe_grid, "--probe-grid")?;
    let (nb, bmax) = parse_grid(&cfg.wigner_grid, "--wigner-grid")?;
    let probes = ProbeGrid::square(np, amax).map_err(|e| usage(e.to_string()))?;
    let grid = WignerGrid::square(nb, bmax).map_err(|e| usage(e.to_string()))?;
    let noise = parse_noise(&cfg.noise)?;
    let ds = match gate_channel(spec, fock_dim(cfg.dim)?, &noise)? {
        GateChannel::Kraus(k) => simulate_dataset(&k, &probes, &grid, cfg.shots, cfg.seed)?,
        GateChannel::Process(p) => simulate_dataset(&p, &probes, &grid, cfg.shots, cfg.seed)?,
    };
    ds.save(&cfg.out)?;
    let mean_abs = ds.values.iter().map(|w| w.abs()).sum::<f64>() / ds.values.len() as f64;
    println!("n_probes: {}", ds.probes.len());
    println!("n_betas: {}", ds.grid.len());
    println!("mean |W|: {mean_abs:.6}");
    println!("wrote {}", cfg.out.display());
    Ok(())
}

fn parse_gammas(s: &str) -> CliResult<Vec<f64>> {
    let gammas = s
        .split(',')
        .map(|g| {
            g.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("--gamma: cannot parse '{g}'")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(usage("--gamma values must be finite and non-negative"));
    }
    Ok(gammas)
}

/// `result.json` -> `result.gamma-0.0004.json` when sweeping.
fn sweep_path(out: &Path, gamma: f64) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "result".into());
    out.with_file_name(format!("{stem}.gamma-{gamma}.json"))
}

fn cmd_reconstruct(args: ReconstructArgs) -> CliResult<()> {
    let data = args
        .data
        .ok_or_else(|| usage("reconstruct requires --data"))?;
    let defaults = ReconstructionConfig::default();
    let gammas = match &args.gamma {
        Some(s) => parse_gammas(s)?,
        None => vec![defaults.gamma],
    };
    let base = ReconstructionConfig {
        rank: args.rank.unwrap_or(defaults.rank),
        dim: fock_dim(args.dim.unwrap_or(DEFAULT_DIM))?,
        gamma: gammas[0],
        max_iters: args.iters.unwrap_or(defaults.max_iters),
        seed: args.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    base.validate().map_err(|e| usage(e.to_string()))?;
    let run = ReconstructRunConfig {
        data,
        gammas: gammas.clone(),
        out: args.out.unwrap_or_else(|| "result.json".into()),
        reconstruction: base.clone(),
    };
    print_resolved("reconstruct", &run);
    println!("seed: {}", base.seed);

    let ds = TomographyDataset::load(&run.data)?;
    let sweep = gammas.len() > 1;
    if sweep {
        println!("gamma,l2,l1,total,iters,converged");
    }
    for gamma in gammas {
        let cfg = ReconstructionConfig {
            gamma,
            ..base.clone()
        };
        let (kraus, report) = reconstruct(&ds, &cfg)?;
        let out = if sweep {
            sweep_path(&run.out, gamma)
        } else {
            run.out.clone()
        };
        if let Some(w) = &report.warning {
            println!("warning (gamma {gamma}): {w}");
        }
        if sweep {
            println!(
                "{gamma},{:.6e},{:.6e},{:.6e},{},{}",
                report.l2, report.l1, report.total, report.iters_used, report.converged
            );
        } else {
            println!(
                "l2 = {:.6e}, l1 = {:.6e}, iterations = {}, converged = {}, CPTP defect = {:.2e}",
                report.l2,
                report.l1,
                report.iters_used,
                report.converged,
                kraus.cptp_defect()
            );
        }
        ReconstructionResult {
            config: cfg,
            kraus,
            report,
        }
        .save(&out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

const EMIT_KINDS: [&str; 5] = ["gtm", "ptm", "poptm", "fidelity", "sweep"];

fn write_matrix(m: &TransferMatrix, path: &Path) -> CliResult<()> {
    m.write_csv(fs::File::create(path)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> CliResult<()> {
    let result = args
        .result
        .ok_or_else(|| usage("analyze requires --result"))?;
    let emit: Vec<String> = match &args.emit {
        Some(s) => s.split(',').map(|e| e.trim().to_string()).collect(),
        None => EMIT_KINDS.iter().map(|s| s.to_string()).collect(),
    };
    if let Some(bad) = emit.iter().find(|e| !EMIT_KINDS.contains(&e.as_str())) {
        return Err(usage(format!(
            "unknown --emit kind '{bad}' (expected one of {})",
            EMIT_KINDS.join(", ")
        )));
    }
    let cfg = AnalyzeConfig {
        result,
        target: args.target.unwrap_or_else(|| "x-gate".into()),
        emit,
        out_dir: args.out_dir.unwrap_or_else(|| ".".into()),
    };
    print_resolved("analyze", &cfg);

    let res = ReconstructionResult::load(&cfg.result)?;
    let kraus = res.kraus;
    let dim = kraus.dim();
    let code = BinomialCode::new(dim)?;
    // Reference channel for the truncation sweep.
    let reference = match cfg.target.as_str() {
        "x-gate" => unitary_channel(&compose_unitary(&x_gate_sequence(), dim)?)?,
        path => {
            let k = KrausSet::from_json(&fs::read_to_string(path)?)?;
            if k.dim() != dim {
                return Err(CliError::Core(Error::Dimension(format!(
                    "result has dimension {dim}, target has {}",
                    k.dim()
                ))));
            }
            k
        }
    };
    fs::create_dir_all(&cfg.out_dir)?;
    let out = |name: &str| cfg.out_dir.join(name);

    for kind in &cfg.emit {
        match kind.as_str() {
            "gtm" => {
                let gm = gellmann_set(&logical_ordered_basis(&code)?);
                let idx = display_indices(DISPLAY_LEVELS.min(dim.get()));
                write_matrix(&transfer_matrix(&kraus, &gm, Some(&idx))?, &out("gtm.csv"))?;
            }
            "ptm" => write_matrix(&logical_ptm(&kraus, &code)?, &out("ptm.csv"))?,
            "poptm" => {
                let basis = logical_ordered_basis(&code)?;
                write_matrix(
                    &population_transfer_matrix(&kraus, &basis, DISPLAY_LEVELS)?,
                    &out("poptm.csv"),
                )?;
            }
            "fidelity" => {
                let report = avg_gate_fidelity(&kraus, &ideal_logical_x(&code), &code)?;
                println!(
                    "f_avg = {:.6}, f_pro = {:.6}, leakage = {:.6}",
                    report.f_avg, report.f_pro, report.leakage
                );
                let mut v = json!({ "schema": FIDELITY_SCHEMA, "target": cfg.target });
                if let (Value::Object(m), Value::Object(r)) =
                    (&mut v, serde_json::to_value(&report).map_err(Error::Json)?)
                {
                    m.extend(r);
                }
                let path = out("fidelity.json");
                fs::write(
                    &path,
                    serde_json::to_string_pretty(&v).map_err(Error::Json)?,
                )?;
                println!("wrote {}", path.display());
            }
            "sweep" => {
                let cuts: Vec<usize> = (0..dim.get().min(SWEEP_MAX_CUT + 1)).collect();
                let path = out("sweep.csv");
                let mut text = String::from("cut,f_pro\n");
                for (c, f) in truncation_sweep(&kraus, &reference, &cuts)? {
                    text.push_str(&format!("{c},{f:.12e}\n"));
                }
                fs::write(&path, text)?;
                println!("wrote {}", path.display());
            }
            _ => unreachable!("emit kinds are validated above"),
        }
    }
    Ok(())
}

fn cmd_budget(args: BudgetArgs) -> CliResult<()> {
    let cfg = BudgetConfig {
        gate: args.gate.unwrap_or_else(|| "x-gate".into()),
        dim: args.dim.unwrap_or(DEFAULT_DIM),
        noise: args
            .noise
            .unwrap_or_else(|| noise_label(&CoherenceTimes::MEASURED)),
        out: args.out.unwrap_or_else(|| "budget.csv".into()),
    };
    print_resolved("budget", &cfg);
    let GateSpec::Sequence(seq) = load_gate(&cfg.gate)? else {
        return Err(usage("budget needs a gate sequence, not a Kraus file"));
    };
    let times = parse_noise(&cfg.noise)?;
    let code = BinomialCode::new(fock_dim(cfg.dim)?)?;
    let budget = error_budget(&seq, &times, &code)?;
    println!("baseline infidelity: {:.6}", budget.baseline_infidelity);
    println!("all-on infidelity: {:.6}", budget.all_on_infidelity);
    for e in &budget.entries {
        println!(
            "{}: {:.6}{}",
            e.channel,
            e.contribution,
            if e.clipped { " (clipped)" } else { "" }
        );
    }
    budget.write_csv(fs::File::create(&cfg.out)?)?;
    println!("wrote {}", cfg.out.display());
    Ok(())
}

fn cmd_decode_study(args: DecodeStudyArgs) -> CliResult<()> {
    let gate_name = args.gate.unwrap_or_else(|| "x-gate".into());
    let spec = load_gate(&gate_name)?;
    let cfg = DecodeStudyConfig {
        dim: gate_dim(&spec, args.dim),
        gate: gate_name,
        noise: args.noise.unwrap_or_else(|| "inf,inf".into()),
        leakage: args.leakage.unwrap_or(0.05),
        prep: args.prep.unwrap_or_else(|| "input".into()),
        out_dir: args.out_dir.unwrap_or_else(|| ".".into()),
    };
    print_resolved("decode-study", &cfg);
    let prep = match cfg.prep.as_str() {
        "input" => AncillaPrep::Input,
        "ground" => AncillaPrep::Ground,
        other => {
            return Err(usage(format!(
                "--prep must be 'input' or 'ground', got '{other}'"
            )))
        }
    };
    let dim = fock_dim(cfg.dim)?;
    let code = BinomialCode::new(dim)?;
    let gate = gate_kraus(spec, dim, &parse_noise(&cfg.noise)?)?;
    let leaky = compose(
        &leakage_injection_channel(&code, cfg.leakage).map_err(|e| usage(e.to_string()))?,
        &gate,
    )?;
    let (decoded, direct) = decoder_study(&leaky, &code, prep)?;
    println!("decoded trace row: {:?}", decoded.elements.row(0).to_vec());
    println!(
        "direct trace-block deficit: {:.6}",
        1.0 - direct.elements[[0, 0]]
    );
    fs::create_dir_all(&cfg.out_dir)?;
    write_matrix(&decoded, &cfg.out_dir.join("decoded_ptm.csv"))?;
    write_matrix(&direct, &cfg.out_dir.join("direct_ptm.csv"))?;
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("CSQPT_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        usage(format!(
            "CSQPT_THREADS must be a positive integer, got '{v}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("cannot configure thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let file: Option<Value> = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| usage(format!("invalid config {}: {e}", p.display())))?,
            )
        }
        None => None,
    };
    let file = file.as_ref();
    match cli.command {
        Command::Simulate(a) => cmd_simulate(merge(file, "simulate", &a)?),
        Command::Reconstruct(a) => cmd_reconstruct(merge(file, "reconstruct", &a)?),
        Command::Analyze(a) => cmd_analyze(merge(file, "analyze", &a)?),
        Command::Budget(a) => cmd_budget(merge(file, "budget", &a)?),
        Command::DecodeStudy(a) => cmd_decode_study(merge(file, "decode-study", &a)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("usage error: {m}"),
                CliError::Core(err) => eprintln!("error: {err}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
