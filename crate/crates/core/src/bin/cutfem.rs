use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cutfem::geometry::{CutGeometry, RigidDisk};
use cutfem::mesh::BackgroundMesh;
use cutfem::study::{
    cut_robustness_sweep, default_shifts, run_log_csv, run_study, sweep_csv, StudyConfig,
};

#[derive(Parser)]
#[command(name = "cutfem", version, about = "Space-time cut finite element flow solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the convergence study and write the error table.
    Study(StudyArgs),
    /// Solve one level for a set of disk shifts, with and without stabilization.
    Sweep(SweepArgs),
    /// Print the background mesh, one `i j x y size` line per cell.
    Mesh {
        #[arg(long, default_value_t = 0)]
        level: u32,
    },
    /// Print the quadrature points of the fluid domain and the interface as CSV.
    Geometry {
        #[arg(long, default_value_t = 0)]
        level: u32,
        #[arg(long, default_value_t = 6)]
        q: usize,
    },
}

#[derive(Args)]
struct Overrides {
    /// Plain-text `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    gamma1: Option<f64>,
    #[arg(long)]
    gamma2: Option<f64>,
    #[arg(long)]
    gv: Option<f64>,
    #[arg(long)]
    gp: Option<f64>,
    #[arg(long = "radius-mult")]
    radius_mult: Option<f64>,
    /// `full` or `active`.
    #[arg(long = "jump-domain")]
    jump_domain: Option<String>,
    /// `strong` or `nitsche`.
    #[arg(long)]
    outer: Option<String>,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    common: Overrides,
    /// `a..b` (inclusive) or a comma list.
    #[arg(long)]
    levels: Option<String>,
    /// Error table (CSV).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-slab solver log (CSV).
    #[arg(long)]
    log: Option<PathBuf>,
    /// End-time point values of the finest level (CSV).
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[arg(long = "snapshot-grid", default_value_t = 101)]
    snapshot_grid: usize,
    /// Run the levels concurrently.
    #[arg(long = "parallel-levels")]
    parallel_levels: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long, default_value_t = 2)]
    level: u32,
    /// Disk-center shifts along x; defaults to 0, h/10, h/100 and h/2 - 1e-6.
    #[arg(long, value_delimiter = ',')]
    shifts: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(o: &Overrides) -> cutfem::Result<StudyConfig> {
    let mut cfg = match &o.config {
        Some(p) => StudyConfig::from_file(p)?,
        None => StudyConfig::default(),
    };
    let num = |v: Option<f64>| v.map(|x| format!("{x:e}"));
    let pairs = [
        ("k", o.k.map(|x| x.to_string())),
        ("r", o.r.map(|x| x.to_string())),
        ("nu", num(o.nu)),
        ("gamma1", num(o.gamma1)),
        ("gamma2", num(o.gamma2)),
        ("gv", num(o.gv)),
        ("gp", num(o.gp)),
        ("radius_multiplier", num(o.radius_mult)),
        ("jump_domain", o.jump_domain.clone()),
        ("outer", o.outer.clone()),
    ];
    for (key, value) in pairs {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    Ok(cfg)
}

fn fail(kind: &str, msg: &str) -> ExitCode {
    eprintln!("status=error kind={kind} message=\"{}\"", msg.replace('"', "'"));
    ExitCode::FAILURE
}

fn study(args: StudyArgs) -> ExitCode {
    let mut cfg = match load_config(&args.common) {
        Ok(c) => c,
        Err(e) => return fail("config", &e.to_string()),
    };
    if let Some(l) = &args.levels {
        if let Err(e) = cfg.set("levels", l) {
            return fail("config", &e.to_string());
        }
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if args.snapshot.is_some() {
        cfg.snapshot_grid = Some(args.snapshot_grid);
    }
    if !cfg.is_reference_pairing() && !args.quiet {
        eprintln!("note: (k, r) = ({}, {}) is not one of the reference pairings (1, 2), (2, 3)", cfg.k, cfg.r);
    }
    let quiet = args.quiet;
    let outcome = match run_study(&cfg, args.parallel_levels, &|level, log| {
        if !quiet {
            eprintln!("level {level}: {}", log.line());
        }
    }) {
        Ok(o) => o,
        Err(e) => return fail("study", &e.to_string()),
    };
    if let Some(path) = &args.log {
        if let Err(e) = std::fs::write(path, run_log_csv(&outcome.levels)) {
            return fail("io", &e.to_string());
        }
    }
    if let Some(path) = &args.snapshot {
        let finest = outcome.levels.iter().rev().find_map(|l| l.snapshot.as_ref());
        if let Some(s) = finest {
            if let Err(e) = std::fs::write(path, s) {
                return fail("io", &e.to_string());
            }
        }
    }
    if cfg.out.is_none() {
        print!("{}", outcome.report.to_csv());
    }
    if outcome.report.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for (level, msg) in &outcome.report.failures {
            eprintln!("status=error kind=level level={level} message=\"{}\"", msg.replace('"', "'"));
        }
        ExitCode::FAILURE
    }
}

fn sweep(args: SweepArgs) -> ExitCode {
    let cfg = match load_config(&args.common) {
        Ok(c) => c,
        Err(e) => return fail("config", &e.to_string()),
    };
    let shifts = args.shifts.clone().unwrap_or_else(|| default_shifts(args.level));
    let mut runs = match cut_robustness_sweep(&cfg, args.level, &shifts) {
        Ok(r) => r,
        Err(e) => return fail("sweep", &e.to_string()),
    };
    let mut off = cfg.clone();
    off.gv = 0.0;
    off.gp = 0.0;
    match cut_robustness_sweep(&off, args.level, &shifts) {
        Ok(r) => runs.extend(r),
        Err(e) => return fail("sweep", &e.to_string()),
    }
    let csv = sweep_csv(&runs);
    match &args.out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, csv) {
                return fail("io", &e.to_string());
            }
        }
        None => print!("{csv}"),
    }
    let stabilized_failures: Vec<_> = runs.iter().filter(|r| r.gv > 0.0 && r.result.is_err()).collect();
    if stabilized_failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for r in stabilized_failures {
            let msg = r.result.as_ref().err().cloned().unwrap_or_default();
            eprintln!("status=error kind=sweep shift={:e} message=\"{}\"", r.shift, msg.replace('"', "'"));
        }
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Study(a) => study(a),
        Command::Sweep(a) => sweep(a),
        Command::Mesh { level } => match BackgroundMesh::new(level) {
            Ok(m) => {
                print!("{}", m.dump());
                ExitCode::SUCCESS
            }
            Err(e) => fail("mesh", &e.to_string()),
        },
        Command::Geometry { level, q } => {
            let run = || -> cutfem::Result<String> {
                let mesh = BackgroundMesh::new(level)?;
                let geo = CutGeometry::new(&mesh, Some(RigidDisk::default()), q, q)?;
                Ok(geo.dump_csv(&mesh))
            };
            match run() {
                Ok(s) => {
                    print!("{s}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail("geometry", &e.to_string()),
            }
        }
    }
}
