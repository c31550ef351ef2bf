use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oscbound::report::{
    decay_csv, measure_csv, profile_csv, run_bound, run_measure, run_oracle, run_profile, run_verify_partial,
    to_json_string, ProblemDocument, ReportError,
};

/// Verify explicit bounds for trigonometric integrals with polynomial phase.
#[derive(Parser)]
#[command(name = "oscbound", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and report every verdict.
    Verify(Common),
    /// Oscillatory integral (and decay rows for t_grid).
    Oracle(Common),
    /// Level profile, monotone pieces and co-area reconstruction.
    Profile(Common),
    /// Surface measures and bounds over the H grid.
    Measure(Common),
    /// Spectral quantities and bound values only.
    Bound(Common),
    /// Print the bundled sample document.
    Sample,
}

#[derive(Args)]
struct Common {
    /// Problem document (JSON); the bundled sample when omitted.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV plot data: a directory for `verify`, a file otherwise.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Grid points of the level profile.
    #[arg(long)]
    grid: Option<usize>,
    /// Marching resolution for surface measures.
    #[arg(long)]
    resolution: Option<usize>,
    /// Oracle target error.
    #[arg(long)]
    tol: Option<f64>,
}

impl Common {
    fn document(&self) -> Result<ProblemDocument, ReportError> {
        let mut doc = match &self.input {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| ReportError::Input(format!("cannot read {}: {e}", p.display())))?;
                ProblemDocument::from_json(&text)?
            }
            None => ProblemDocument::sample(),
        };
        let s = &mut doc.sampling;
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.samples {
            s.samples = v;
        }
        if let Some(v) = self.grid {
            s.grid_points = v;
        }
        if let Some(v) = self.resolution {
            s.resolution = v;
        }
        if let Some(v) = self.tol {
            s.oracle_tol = v;
        }
        Ok(doc)
    }

    fn emit(&self, json: &str) -> Result<(), ReportError> {
        match &self.out {
            Some(p) => fs::write(p, json)?,
            None => print!("{json}"),
        }
        Ok(())
    }

    fn emit_csv(&self, csv: &str) -> Result<(), ReportError> {
        if let Some(p) = &self.csv {
            fs::write(p, csv)?;
        }
        Ok(())
    }
}

fn write_csv_dir(dir: &Path, name: &str, csv: Option<String>) -> Result<(), ReportError> {
    if let Some(csv) = csv {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), csv)?;
    }
    Ok(())
}

fn verify(c: &Common) -> Result<i32, ReportError> {
    let (report, err) = run_verify_partial(c.document()?);
    if let Some(e @ ReportError::Input(_)) = err {
        return Err(e);
    }
    c.emit(&to_json_string(&report))?;
    if let Some(dir) = &c.csv {
        write_csv_dir(dir, "decay.csv", report.oracle.as_ref().map(decay_csv))?;
        write_csv_dir(dir, "profile.csv", report.coarea.as_ref().map(|s| profile_csv(&s.profile, &s.pieces)))?;
        write_csv_dir(dir, "measure.csv", report.measure.as_ref().map(measure_csv))?;
    }
    if let Some(e) = err {
        return Err(e);
    }
    for v in report.verdicts.iter().filter(|v| !v.holds) {
        eprintln!("verdict failed: {} (bound {}, measured {})", v.check, v.bound, v.measured);
    }
    Ok(report.exit_code())
}

fn run(cli: Cli) -> Result<i32, ReportError> {
    match cli.command {
        Command::Verify(c) => verify(&c),
        Command::Oracle(c) => {
            c.emit(&to_json_string(&run_oracle(c.document()?)?))?;
            Ok(0)
        }
        Command::Profile(c) => {
            let section = run_profile(c.document()?)?;
            c.emit(&to_json_string(&section))?;
            c.emit_csv(&profile_csv(&section.profile, &section.pieces))?;
            Ok(0)
        }
        Command::Measure(c) => {
            let section = run_measure(c.document()?)?;
            c.emit(&to_json_string(&section))?;
            c.emit_csv(&measure_csv(&section))?;
            Ok(0)
        }
        Command::Bound(c) => {
            c.emit(&to_json_string(&run_bound(c.document()?)?))?;
            Ok(0)
        }
        Command::Sample => {
            print!("{}", oscbound::report::SAMPLE_DOCUMENT);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("oscbound: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
