//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use super::{
    apply_overrides, assess_model, bench, export_report, export_trajectory, load_config_file, run_comparison, simulate,
    write_trajectory_csv, ExportFormat, ModelKind, ScenarioConfig, Variant,
};
use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lsor", version, about = "Full and reduced-order simulation of composite-load components")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one model variant and write its trajectory.
    Simulate(CommonArgs),
    /// Run full and reduced models and report their differences.
    Compare(CommonArgs),
    /// Print the reduction decision for a model.
    Assess(CommonArgs),
    /// Repeat the comparison and report median timings.
    Bench(CommonArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    MotorA,
    MotorB,
    MotorC,
    Dera,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    Reduced,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Nonstiff,
    Stiff,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Output grid step in seconds.
    #[arg(long)]
    grid: Option<f64>,
    /// Sag parameters `a,b,c,d`.
    #[arg(long, value_name = "A,B,C,D", value_parser = parse_sag)]
    sag: Option<[f64; 4]>,
    /// Flat JSON file of dotted-key overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, default_value_t = 5)]
    repeat: usize,
}

fn parse_sag(s: &str) -> std::result::Result<[f64; 4], String> {
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 4 comma-separated values, got {}", v.len()))
}

impl CommonArgs {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut overrides: BTreeMap<String, Value> = match &self.config {
            Some(p) => load_config_file(p)?,
            None => BTreeMap::new(),
        };
        if let Some(m) = self.model {
            let kind = match m {
                ModelArg::MotorA => ModelKind::MotorA,
                ModelArg::MotorB => ModelKind::MotorB,
                ModelArg::MotorC => ModelKind::MotorC,
                ModelArg::Dera => ModelKind::Dera,
            };
            overrides.insert("model".into(), Value::from(kind.name()));
        }
        if let Some(v) = self.variant {
            let name = match v {
                VariantArg::Full => "full",
                VariantArg::Reduced => "reduced",
                VariantArg::Both => "both",
            };
            overrides.insert("variant".into(), Value::from(name));
        }
        if let Some(s) = self.solver {
            let name = match s {
                SolverArg::Nonstiff => "nonstiff",
                SolverArg::Stiff => "stiff",
            };
            overrides.insert("solver.method".into(), Value::from(name));
        }
        if let Some(t) = self.t_end {
            overrides.insert("t_end".into(), Value::from(t));
        }
        if let Some(g) = self.grid {
            overrides.insert("grid".into(), Value::from(g));
        }
        if let Some(s) = &self.sag {
            for (k, v) in ["a", "b", "c", "d"].iter().zip(s) {
                overrides.insert(format!("sag.{k}"), Value::from(*v));
            }
        }
        let model = match overrides.get("model").and_then(Value::as_str) {
            Some(name) => name.parse()?,
            None => ModelKind::MotorA,
        };
        apply_overrides(&ScenarioConfig::new(model), &overrides)
    }

    fn format(&self) -> ExportFormat {
        match self.format {
            Some(FormatArg::Json) => ExportFormat::Json,
            Some(FormatArg::Csv) => ExportFormat::Csv,
            None => match self.out.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
                Some("json") => ExportFormat::Json,
                _ => ExportFormat::Csv,
            },
        }
    }
}

fn emit_json<T: serde::Serialize>(value: &T, out: &mut dyn Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out).map_err(|source| Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn run(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Simulate(args) => {
            let cfg = args.scenario()?;
            let variant = match cfg.variant {
                Variant::Both => Variant::Full,
                v => v,
            };
            let (sim, _) = simulate(&cfg, variant)?;
            match &args.out {
                Some(p) => export_trajectory(&sim, Some(&cfg), p, args.format()),
                None => write_trajectory_csv(&sim, &mut *out),
            }
        }
        Command::Compare(args) => {
            let cfg = args.scenario()?;
            let cmp = run_comparison(&cfg)?;
            if let Some(p) = &args.out {
                export_report(&cmp.report, p)?;
            }
            emit_json(&cmp.report, out)
        }
        Command::Assess(args) => {
            let cfg = args.scenario()?;
            emit_json(&assess_model(&cfg)?, out)
        }
        Command::Bench(args) => {
            let cfg = args.scenario()?;
            let report = bench(&cfg, args.repeat)?;
            emit_json(&report, out)
        }
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn cli_main<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match run(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            }
        }
    }
}
