use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmc_core::analysis::harmonic_report;
use mmc_core::engine::PlantKind;
use mmc_core::trajectory::Signal;
use mmc_sim::freqresp::{format_csv, probe_frequencies, sweep};
use mmc_sim::output::{emit_outputs, read_csv};
use mmc_sim::scenario::Mode;
use mmc_sim::runner::run_many;
use mmc_sim::{parse_scenario_with, run_scenario, Overrides, RunOutput, Scenario};

const OUT_ENV: &str = "MMC_SIM_OUT";

#[derive(Parser)]
#[command(name = "mmc-sim", version, about = "Simulate an arm inductor-less MMC from scenario files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trajectory and reports.
    Run(RunArgs),
    /// Run the switched and averaged plants on the same open-loop schedule.
    CompareModels(RunArgs),
    /// Compare the closed-form outer-loop response with a simulated probe.
    Freqresp(FreqArgs),
    /// 2nd and 4th harmonic content of a trajectory CSV column.
    Harmonics(HarmonicArgs),
}

#[derive(Args)]
struct Source {
    /// Scenario file.
    config: Option<PathBuf>,
    /// Start from a built-in scenario (fig3, fig6a, fig6b, fig6c, fig9, fig12c).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory [default: $MMC_SIM_OUT/<name>, else out/<name>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Integration step in seconds, replacing the file's `dt_s`.
    #[arg(long)]
    dt_override: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum)]
    plant: Option<PlantArg>,
    /// Run every `*.scn` file in a directory, in parallel.
    #[arg(long, conflicts_with_all = ["config", "preset"])]
    batch: Option<PathBuf>,
}

#[derive(Args)]
struct FreqArgs {
    #[command(flatten)]
    source: Source,
    /// Number of log-spaced frequencies.
    #[arg(long, default_value_t = 9)]
    points: usize,
    /// Lowest frequency [Hz]; the highest is the AC frequency.
    #[arg(long, default_value_t = 10.0)]
    f_min: f64,
}

#[derive(Args)]
struct HarmonicArgs {
    csv: PathBuf,
    /// AC fundamental [Hz].
    #[arg(long)]
    f_ac: f64,
    #[arg(long, default_value = "i_dc")]
    signal: String,
    /// Window start [s]; with --to. Default: last ten periods.
    #[arg(long, requires = "to")]
    from: Option<f64>,
    #[arg(long, requires = "from")]
    to: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlantArg {
    Switched,
    Averaged,
}

impl From<PlantArg> for PlantKind {
    fn from(p: PlantArg) -> Self {
        match p {
            PlantArg::Switched => PlantKind::Switched,
            PlantArg::Averaged => PlantKind::Averaged,
        }
    }
}

enum Failure {
    Config(String),
    Sim(String),
    Io(String),
}

impl Failure {
    fn report(self) -> ExitCode {
        let (code, msg) = match self {
            Failure::Config(m) => (1, m),
            Failure::Sim(m) => (2, m),
            Failure::Io(m) => (3, m),
        };
        eprintln!("error: {msg}");
        ExitCode::from(code)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, None),
        Command::CompareModels(a) => cmd_run(a, Some(Mode::Compare)),
        Command::Freqresp(a) => cmd_freqresp(a),
        Command::Harmonics(a) => cmd_harmonics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

fn load(source: &Source, overrides: &Overrides) -> Result<Scenario, Failure> {
    let mut text = match &source.preset {
        Some(name) => format!("preset = {name}\n"),
        None => String::new(),
    };
    match &source.config {
        Some(path) => {
            let body = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            text.push_str(&body);
        }
        None if source.preset.is_none() => return Err(Failure::Config("give a scenario file or --preset".into())),
        None => {}
    }
    parse_scenario_with(&text, overrides).map_err(|e| {
        let origin = source.config.as_ref().map_or_else(|| "preset".into(), |p| p.display().to_string());
        Failure::Config(format!("{origin}: {e}"))
    })
}

fn out_dir(explicit: Option<&Path>, name: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from).join(name),
    }
}

fn execute(s: &Scenario, dir: &Path) -> Result<String, Failure> {
    let out = run_scenario(s).map_err(|e| Failure::Sim(format!("{}: {e}", s.name)))?;
    summarize(s, &out, dir)
}

/// Writes the outputs and returns a one-line-per-report summary.
fn summarize(s: &Scenario, out: &RunOutput, dir: &Path) -> Result<String, Failure> {
    let w = emit_outputs(s, out, dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let mut summary = format!("{}: wrote {} files to {}", s.name, w.files.len(), w.dir.display());
    for r in out.reports.iter().filter(|r| r.kind != "run") {
        let fields: Vec<String> = r
            .fields
            .iter()
            .filter(|(k, _)| !k.ends_with("_s") && *k != "signal")
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        summary.push_str(&format!("\n  {}: {}", r.heading(), fields.join(" ")));
    }
    Ok(summary)
}

fn cmd_run(a: RunArgs, mode: Option<Mode>) -> Result<(), Failure> {
    let overrides = Overrides {
        plant: a.plant.map(Into::into),
        dt: a.source.dt_override,
        mode,
    };
    let Some(batch) = a.batch else {
        let s = load(&a.source, &overrides)?;
        println!("{}", execute(&s, &out_dir(a.source.out.as_deref(), &s.name))?);
        return Ok(());
    };

    let mut files: Vec<PathBuf> = std::fs::read_dir(&batch)
        .map_err(|e| Failure::Io(format!("{}: {e}", batch.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scn"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Config(format!("no .scn files in {}", batch.display())));
    }
    // Parse everything first so a bad file stops the batch before any run.
    let mut scenarios = Vec::new();
    let mut problems = Vec::new();
    for f in &files {
        let src = Source {
            config: Some(f.clone()),
            preset: None,
            out: None,
            dt_override: a.source.dt_override,
        };
        match load(&src, &overrides) {
            Ok(s) => scenarios.push((f.file_stem().unwrap_or_default().to_string_lossy().into_owned(), s)),
            Err(Failure::Config(m) | Failure::Io(m) | Failure::Sim(m)) => problems.push(m),
        }
    }
    if !problems.is_empty() {
        return Err(Failure::Config(problems.join("\n")));
    }

    let root = a.source.out.clone().unwrap_or_else(|| out_dir(None, ""));
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let list: Vec<Scenario> = scenarios.iter().map(|(_, s)| s.clone()).collect();
    let results = run_many(&list, threads);
    let mut failed = 0;
    let mut io = false;
    for ((stem, s), r) in scenarios.iter().zip(results) {
        let outcome = r
            .map_err(|e| Failure::Sim(format!("{}: {e}", s.name)))
            .and_then(|out| summarize(s, &out, &root.join(stem)));
        match outcome {
            Ok(msg) => println!("{msg}"),
            Err(Failure::Config(m) | Failure::Sim(m)) => {
                eprintln!("error: {m}");
                failed += 1;
            }
            Err(Failure::Io(m)) => {
                eprintln!("error: {m}");
                failed += 1;
                io = true;
            }
        }
    }
    match failed {
        0 => Ok(()),
        n if io => Err(Failure::Io(format!("{n} of {} scenarios failed", scenarios.len()))),
        n => Err(Failure::Sim(format!("{n} of {} scenarios failed", scenarios.len()))),
    }
}

fn cmd_freqresp(a: FreqArgs) -> Result<(), Failure> {
    let overrides = Overrides {
        dt: a.source.dt_override,
        ..Overrides::default()
    };
    let s = load(&a.source, &overrides)?;
    if a.points == 0 || !(a.f_min > 0.0 && a.f_min <= s.params.f_ac) {
        return Err(Failure::Config(format!("need at least one point and 0 < f_min <= {} Hz", s.params.f_ac)));
    }
    let freqs = probe_frequencies(a.f_min, s.params.f_ac, a.points);
    let pts = sweep(&s, &freqs).map_err(|e| Failure::Sim(e.to_string()))?;
    let dir = out_dir(a.source.out.as_deref(), &format!("{}_freqresp", s.name));
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Io(e.to_string()))?;
    let csv = format_csv(&pts);
    std::fs::write(dir.join("freqresp.csv"), &csv).map_err(|e| Failure::Io(e.to_string()))?;
    print!("{csv}");
    let worst_db = pts.iter().fold(0.0f64, |m, p| m.max(p.delta_db().abs()));
    let worst_deg = pts.iter().fold(0.0f64, |m, p| m.max(p.delta_deg().abs()));
    println!("worst |delta| = {worst_db:.3} dB, {worst_deg:.3} deg");
    Ok(())
}

fn cmd_harmonics(a: HarmonicArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.csv).map_err(|e| Failure::Io(format!("{}: {e}", a.csv.display())))?;
    let t = read_csv(&text).map_err(|e| Failure::Config(format!("{}: {e}", a.csv.display())))?;
    let signal = Signal::from_name(&a.signal).ok_or_else(|| Failure::Config(format!("unknown signal `{}`", a.signal)))?;
    let window = a.from.zip(a.to);
    let h = harmonic_report(&t, signal, a.f_ac, window).map_err(|e| Failure::Sim(e.to_string()))?;
    println!("signal = {}", signal.name());
    println!("from_s = {}", h.window.0);
    println!("to_s = {}", h.window.1);
    println!("dc = {}", h.dc_component);
    println!("h2_pct = {}", h.h2_pct);
    println!("h4_pct = {}", h.h4_pct);
    Ok(())
}
