use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use wbwf_core::codec::{self, field_listing};
use wbwf_core::sim::{self, Scenario, ScenarioError, SimError};
use wbwf_core::tdma::{self, config_from_doc, config_to_doc};
use wbwf_core::{Execution, PlannerInput, SlotKind, TdmaConfig};

#[derive(Parser)]
#[command(name = "wbwf", version, about = "TDMA wideband waveform planner, frame inspector and network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate frame plans for a planner input file.
    Plan {
        /// Print the three reference configurations instead of searching.
        #[arg(long, conflicts_with = "input")]
        reference: bool,
        /// Planner input (TOML). Defaults are used for missing keys.
        #[arg(long, short)]
        input: Option<PathBuf>,
        /// Emit each configuration as a `key = value` document.
        #[arg(long)]
        docs: bool,
        /// Search on the calling thread only
        #[arg(long)]
        sequential: bool,
    },
    /// Run one scenario.
    Run {
        scenario: PathBuf,
        /// Overrides the seed of the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        /// JSONL event trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Metrics output; printed to stdout when absent.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Decode a hex-encoded frame and list its fields.
    Inspect {
        /// `1`, `2`, `3` or a configuration document.
        #[arg(long, short)]
        config: String,
        /// Slot kind; inferred from the frame length when absent.
        #[arg(long)]
        kind: Option<SlotKind>,
        /// Frame bytes in hex, or `-` to read stdin.
        hex: String,
    },
    /// Run a scenario over a seed range and aggregate the metrics.
    Sweep {
        scenario: PathBuf,
        /// Half-open range `a..b`, or `a..=b`.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Range<u64>,
        /// Summary output; printed to stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Run the seeds one after another
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

enum Failure {
    Io(anyhow::Error),
    Validation(anyhow::Error),
    Protocol(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Protocol(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Io(e) | Failure::Validation(e) | Failure::Protocol(e) => e,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Scenario(ScenarioError::Io(_)) => Failure::Io(e.into()),
            SimError::Scenario(_) => Failure::Validation(e.into()),
            SimError::ProtocolViolation { .. } | SimError::Encode { .. } => Failure::Protocol(e.into()),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        SimError::from(e).into()
    }
}

fn io_err<E: Into<anyhow::Error>>(ctx: String) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Io(e.into().context(ctx))
}

fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let (a, b, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b, false)
    } else {
        return Err(format!("expected `a..b`, got `{s}`"));
    };
    let a: u64 = a.trim().parse().map_err(|e| format!("start `{a}`: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("end `{b}`: {e}"))?;
    let end = if inclusive { b.checked_add(1).ok_or("range end overflows")? } else { b };
    if end <= a {
        return Err(format!("empty seed range `{s}`"));
    }
    Ok(a..end)
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_err(format!("cannot create {}", p.display())))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn plan(reference_only: bool, input: Option<&Path>, docs: bool, sequential: bool) -> Result<(), Failure> {
    let (configs, reference) = if reference_only {
        (tdma::reference_plans(), PlannerInput::default())
    } else {
        let input = match input {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(io_err(format!("cannot read {}", p.display())))?;
                toml::from_str::<PlannerInput>(&text)
                    .with_context(|| format!("malformed planner input {}", p.display()))
                    .map_err(Failure::Validation)?
            }
            None => PlannerInput::default(),
        };
        let configs = tdma::plan_configurations_with(&input, exec(sequential))
            .map_err(|e| Failure::Validation(anyhow!("invalid planner input: {e}")))?;
        (configs, input)
    };

    let mut out = io::stdout().lock();
    let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(io_err("stdout".into()));
    if docs {
        for (i, cfg) in configs.iter().enumerate() {
            if i > 0 {
                w(&mut out, String::new())?;
            }
            let doc = config_to_doc(cfg).map_err(|e| Failure::Validation(e.into()))?;
            write!(out, "{doc}").map_err(io_err("stdout".into()))?;
        }
        return Ok(());
    }
    w(
        &mut out,
        format!(
            "{:>3} {:>8} {:>5} {:>4} {:>4} {:>8} {:>6} {:>6} {:>7} {:>8} {}",
            "#", "frame_ms", "mgmt", "rt", "be", "mgmt_us", "rt_us", "be_us", "be_B", "voice/rt", "checks"
        ),
    )?;
    for (i, cfg) in configs.iter().enumerate() {
        let report = tdma::validate_config(cfg, &reference);
        let checks = if report.is_ok() {
            "ok".to_string()
        } else {
            report.failures().map(|c| c.name).collect::<Vec<_>>().join(",")
        };
        w(
            &mut out,
            format!(
                "{:>3} {:>8} {:>5} {:>4} {:>4} {:>8} {:>6} {:>6} {:>7} {:>8} {}",
                i + 1,
                cfg.frame_length_ms(),
                cfg.mgmt_slots,
                cfg.rt_slots,
                cfg.be_slots,
                cfg.slot_duration_us(SlotKind::Mgmt),
                cfg.slot_duration_us(SlotKind::Rt),
                cfg.slot_duration_us(SlotKind::Be),
                cfg.be_payload_bytes,
                cfg.rt_voice_frames_per_slot,
                checks
            ),
        )?;
    }
    Ok(())
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    let mut scenario = Scenario::load(path).map_err(|e| match e {
        ScenarioError::Io(e) => Failure::Io(anyhow::Error::new(e).context(format!("cannot read {}", path.display()))),
        other => Failure::Validation(anyhow::Error::new(other).context(path.display().to_string())),
    })?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn run(
    path: &Path,
    seed: Option<u64>,
    trace: Option<&Path>,
    metrics: Option<&Path>,
    format: Format,
) -> Result<(), Failure> {
    let scenario = load_scenario(path, seed)?;
    let out = sim::run_with(&scenario, sim::RunOptions { keep_trace: trace.is_some() })?;
    if let Some(p) = trace {
        sim::write_jsonl(&out.trace, writer(Some(p))?).map_err(io_err(format!("cannot write {}", p.display())))?;
    }
    let w = writer(metrics)?;
    let target = metrics.map_or("stdout".to_string(), |p| p.display().to_string());
    match format {
        Format::Csv => out.metrics.write_csv(w),
        Format::Jsonl => out.metrics.write_jsonl(w),
    }
    .map_err(io_err(format!("cannot write {target}")))
}

fn load_config(spec: &str) -> Result<TdmaConfig, Failure> {
    if let Ok(n) = spec.parse::<usize>() {
        return TdmaConfig::solution(n)
            .ok_or_else(|| Failure::Validation(anyhow!("no built-in configuration {n} (expected 1, 2 or 3)")));
    }
    let text = fs::read_to_string(spec).map_err(io_err(format!("cannot read {spec}")))?;
    config_from_doc(&text).with_context(|| spec.to_string()).map_err(Failure::Validation)
}

fn parse_hex(text: &str) -> anyhow::Result<Vec<u8>> {
    let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let cleaned = cleaned.strip_prefix("0x").unwrap_or(&cleaned);
    Ok(hex::decode(cleaned)?)
}

fn inspect(config: &str, kind: Option<SlotKind>, hex_arg: &str) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let text = if hex_arg == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).map_err(io_err("cannot read stdin".into()))?;
        s
    } else {
        hex_arg.to_string()
    };
    let bytes = parse_hex(&text).context("frame is not valid hex").map_err(Failure::Validation)?;
    let kind = match kind {
        Some(k) => k,
        None => {
            let matching: Vec<SlotKind> =
                SlotKind::ALL.into_iter().filter(|&k| cfg.slot_capacity_bits(k).div_ceil(8) == bytes.len()).collect();
            match matching[..] {
                [k] => k,
                [] => {
                    return Err(Failure::Validation(anyhow!(
                        "{} bytes match no slot of this configuration (MGMT {}, RT {}, BE {} bits)",
                        bytes.len(),
                        cfg.slot_capacity_bits(SlotKind::Mgmt),
                        cfg.slot_capacity_bits(SlotKind::Rt),
                        cfg.slot_capacity_bits(SlotKind::Be)
                    )))
                }
                _ => return Err(Failure::Validation(anyhow!("frame length is ambiguous; pass --kind"))),
            }
        }
    };
    let capacity = cfg.slot_capacity_bits(kind);
    let pdu = codec::bits_from_bytes(&bytes, capacity)
        .and_then(|bits| codec::decode(&bits, &cfg, kind))
        .with_context(|| format!("cannot decode {kind} frame"))
        .map_err(Failure::Validation)?;
    print!("{}", field_listing(&pdu));
    Ok(())
}

fn sweep(
    path: &Path,
    seeds: Range<u64>,
    output: Option<&Path>,
    format: Format,
    sequential: bool,
) -> Result<(), Failure> {
    let scenario = load_scenario(path, None)?;
    let seeds: Vec<u64> = seeds.collect();
    let report = sim::sweep(&scenario, &seeds, exec(sequential))?;
    let w = writer(output)?;
    let target = output.map_or("stdout".to_string(), |p| p.display().to_string());
    match format {
        Format::Csv => report.write_csv(w),
        Format::Jsonl => report.write_jsonl(w),
    }
    .map_err(io_err(format!("cannot write {target}")))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Plan { reference, input, docs, sequential } => plan(reference, input.as_deref(), docs, sequential),
        Command::Run { scenario, seed, trace, metrics, format } => {
            run(&scenario, seed, trace.as_deref(), metrics.as_deref(), format)
        }
        Command::Inspect { config, kind, hex } => inspect(&config, kind, &hex),
        Command::Sweep { scenario, seeds, output, format, sequential } => {
            sweep(&scenario, seeds, output.as_deref(), format, sequential)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
