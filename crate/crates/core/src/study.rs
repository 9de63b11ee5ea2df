//! Convergence study on the manufactured flow: errors, orders and reports.

use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::forms::{GhostPenaltyParams, NitscheParams, OuterBoundary};
use crate::geometry::{CellClass, CutGeometry, RigidDisk};
use crate::manufactured::ExactSolution;
use crate::quadrature::GaussRule;
use crate::spacetime::{
    advance_with, JumpDomain, NewtonSettings, ProblemConfig, SlabLog, SpatialProblem, Trajectory,
};

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub k: usize,
    pub r: usize,
    pub levels: Vec<u32>,
    pub nu: f64,
    /// Interface penalties; `None` uses `20 r^2` and `2 r^2`.
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub gv: f64,
    pub gp: f64,
    pub radius_multiplier: f64,
    pub center: [f64; 2],
    pub radius: f64,
    /// Slab length at level 0; level `l` uses `tau0 / 2^l`.
    pub tau0: f64,
    pub end_time: f64,
    /// Assembly quadrature degrees; `None` uses `2 r + 2`.
    pub q_vol: Option<usize>,
    pub q_surf: Option<usize>,
    pub newton: NewtonSettings,
    pub jump_domain: JumpDomain,
    pub outer: OuterBoundary,
    pub out: Option<PathBuf>,
    /// Grid size of the end-time point dump of every level, if wanted.
    pub snapshot_grid: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let disk = RigidDisk::default();
        Self {
            k: 1,
            r: 2,
            levels: vec![0, 1, 2, 3],
            nu: 1.0,
            gamma1: None,
            gamma2: None,
            gv: 0.05,
            gp: 0.05,
            radius_multiplier: 2.0,
            center: disk.center,
            radius: disk.radius,
            tau0: 1.0,
            end_time: 1.0,
            q_vol: None,
            q_surf: None,
            newton: NewtonSettings::default(),
            jump_domain: JumpDomain::Full,
            outer: OuterBoundary::Strong,
            out: None,
            snapshot_grid: None,
        }
    }
}

/// Parses `"0..3"` (inclusive) or `"0,1,2"`.
pub fn parse_levels(s: &str) -> Result<Vec<u32>> {
    let s = s.trim();
    let bad = || Error::Config(format!("invalid level list '{s}'"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        Ok((a..=b).collect())
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

impl StudyConfig {
    /// Reads `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one parameter by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "k" => self.k = parse_num(key, value)?,
            "r" => self.r = parse_num(key, value)?,
            "levels" => self.levels = parse_levels(value)?,
            "nu" => self.nu = parse_num(key, value)?,
            "gamma1" => self.gamma1 = Some(parse_num(key, value)?),
            "gamma2" => self.gamma2 = Some(parse_num(key, value)?),
            "gv" => self.gv = parse_num(key, value)?,
            "gp" => self.gp = parse_num(key, value)?,
            "radius_multiplier" | "radius_mult" => self.radius_multiplier = parse_num(key, value)?,
            "center_x" => self.center[0] = parse_num(key, value)?,
            "center_y" => self.center[1] = parse_num(key, value)?,
            "radius" => self.radius = parse_num(key, value)?,
            "tau0" => self.tau0 = parse_num(key, value)?,
            "end_time" => self.end_time = parse_num(key, value)?,
            "q_vol" => self.q_vol = Some(parse_num(key, value)?),
            "q_surf" => self.q_surf = Some(parse_num(key, value)?),
            "newton_abs_tol" => self.newton.abs_tol = parse_num(key, value)?,
            "newton_rel_tol" => self.newton.rel_tol = parse_num(key, value)?,
            "newton_max_iter" => self.newton.max_iterations = parse_num(key, value)?,
            "newton_damping" => self.newton.damping = parse_num(key, value)?,
            "jump_domain" => {
                self.jump_domain = match value {
                    "full" => JumpDomain::Full,
                    "active" => JumpDomain::Active,
                    _ => return Err(Error::Config(format!("jump_domain must be 'full' or 'active', got '{value}'"))),
                }
            }
            "outer" => {
                self.outer = match value {
                    "strong" => OuterBoundary::Strong,
                    "nitsche" => OuterBoundary::Nitsche,
                    _ => return Err(Error::Config(format!("outer must be 'strong' or 'nitsche', got '{value}'"))),
                }
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "snapshot_grid" => self.snapshot_grid = Some(parse_num(key, value)?),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k > 2 {
            return Err(Error::Config(format!("k = {} not in {{0, 1, 2}}", self.k)));
        }
        if !(2..=3).contains(&self.r) {
            return Err(Error::Config(format!("r = {} not in {{2, 3}}", self.r)));
        }
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("levels {:?} must be non-empty and strictly increasing", self.levels)));
        }
        if !(self.nu > 0.0 && self.tau0 > 0.0 && self.end_time > 0.0) {
            return Err(Error::Config("nu, tau0 and end_time must be positive".into()));
        }
        let ratio = self.end_time / self.tau0;
        if (ratio - ratio.round()).abs() > 1e-12 || ratio.round() < 1.0 {
            return Err(Error::Config("end_time must be a positive multiple of tau0".into()));
        }
        self.nitsche()?;
        GhostPenaltyParams::new(self.gv, self.gp)?;
        RigidDisk::new(self.center, self.radius)?;
        if !(self.radius_multiplier >= 1.0) {
            return Err(Error::Config("radius_multiplier must be >= 1".into()));
        }
        self.newton.validate()
    }

    /// Whether `(k, r)` is one of the two space-time pairings of the reference study.
    pub fn is_reference_pairing(&self) -> bool {
        matches!((self.k, self.r), (1, 2) | (2, 3))
    }

    pub fn nitsche(&self) -> Result<NitscheParams> {
        let d = NitscheParams::for_degree(self.r);
        NitscheParams::new(self.gamma1.unwrap_or(d.gamma1), self.gamma2.unwrap_or(d.gamma2))
    }

    pub fn slabs_at(&self, level: u32) -> usize {
        ((self.end_time / self.tau0).round() as usize) << level
    }

    pub fn problem_config(&self, level: u32) -> Result<ProblemConfig> {
        let mut p = ProblemConfig::new(level, self.k, self.r);
        p.nu = self.nu;
        p.disk = Some(RigidDisk::new(self.center, self.radius)?);
        p.radius_multiplier = self.radius_multiplier;
        p.nitsche = self.nitsche()?;
        p.ghost = GhostPenaltyParams::new(self.gv, self.gp)?;
        p.outer = self.outer;
        p.jump_domain = self.jump_domain;
        p.q_vol = self.q_vol.unwrap_or(2 * self.r + 2);
        p.q_surf = self.q_surf.unwrap_or(2 * self.r + 2);
        Ok(p)
    }

    /// Canonical `key = value` text of every parameter.
    pub fn to_text(&self) -> String {
        let n = self.nitsche().unwrap_or(NitscheParams::for_degree(self.r));
        let levels: Vec<String> = self.levels.iter().map(u32::to_string).collect();
        let mut s = String::new();
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "r = {}", self.r);
        let _ = writeln!(s, "levels = {}", levels.join(","));
        let _ = writeln!(s, "nu = {:e}", self.nu);
        let _ = writeln!(s, "gamma1 = {:e}", n.gamma1);
        let _ = writeln!(s, "gamma2 = {:e}", n.gamma2);
        let _ = writeln!(s, "gv = {:e}", self.gv);
        let _ = writeln!(s, "gp = {:e}", self.gp);
        let _ = writeln!(s, "radius_multiplier = {:e}", self.radius_multiplier);
        let _ = writeln!(s, "center_x = {:e}", self.center[0]);
        let _ = writeln!(s, "center_y = {:e}", self.center[1]);
        let _ = writeln!(s, "radius = {:e}", self.radius);
        let _ = writeln!(s, "tau0 = {:e}", self.tau0);
        let _ = writeln!(s, "end_time = {:e}", self.end_time);
        let _ = writeln!(s, "q_vol = {}", self.q_vol.unwrap_or(2 * self.r + 2));
        let _ = writeln!(s, "q_surf = {}", self.q_surf.unwrap_or(2 * self.r + 2));
        let _ = writeln!(s, "newton_abs_tol = {:e}", self.newton.abs_tol);
        let _ = writeln!(s, "newton_rel_tol = {:e}", self.newton.rel_tol);
        let _ = writeln!(s, "newton_max_iter = {}", self.newton.max_iterations);
        let _ = writeln!(s, "newton_damping = {:e}", self.newton.damping);
        let jd = match self.jump_domain {
            JumpDomain::Full => "full",
            JumpDomain::Active => "active",
        };
        let _ = writeln!(s, "jump_domain = {jd}");
        let outer = match self.outer {
            OuterBoundary::Strong => "strong",
            OuterBoundary::Nitsche => "nitsche",
        };
        let _ = writeln!(s, "outer = {outer}");
        s
    }

    pub fn hash(&self) -> String {
        let mut h = DefaultHasher::new();
        self.to_text().hash(&mut h);
        format!("{:016x}", h.finish())
    }
}

/// Pointwise exact velocity and pressure.
pub type ExactFields<'a> = &'a dyn Fn([f64; 2], f64) -> ([f64; 2], f64);

/// `L2(0, T; L2(fluid))` errors of velocity and pressure. The pressure error
/// is taken after removing the fluid mean of the difference at every
/// temporal quadrature point.
pub fn compute_l2l2_error(problem: &SpatialProblem, traj: &Trajectory, exact: ExactFields) -> Result<(f64, f64)> {
    let size = problem.slab_dofs();
    if traj.states.len() != traj.slabs.len() || traj.states.iter().any(|u| u.len() != size) {
        return Err(Error::DimensionMismatch("trajectory does not match the discretization".into()));
    }
    let cfg = &problem.config;
    let geo = CutGeometry::new(&problem.mesh, cfg.disk, cfg.q_vol + 2, cfg.q_surf)?;
    let time_rule = GaussRule::new(cfg.k + 3);
    let space = &problem.space;
    let mut ev2 = 0.0;
    let mut ep2 = 0.0;
    let mut diffs: Vec<(f64, f64)> = Vec::new();
    for (slab, u) in traj.slabs.iter().zip(&traj.states) {
        for (&s, &wt) in time_rule.points.iter().zip(&time_rule.weights) {
            let t = slab.time(s);
            let uh = problem.state_at(u, s);
            diffs.clear();
            let mut vel = 0.0;
            for (cell, rule) in geo.fluid_cells() {
                for (p, &w) in rule.points.iter().zip(&rule.weights) {
                    let (vh, _, ph) = space.evaluate(&uh, cell, *p);
                    let (ve, pe) = exact(*p, t);
                    vel += w * ((ve[0] - vh[0]).powi(2) + (ve[1] - vh[1]).powi(2));
                    diffs.push((w, pe - ph));
                }
            }
            let area: f64 = diffs.iter().map(|d| d.0).sum();
            let mean = diffs.iter().map(|d| d.0 * d.1).sum::<f64>() / area;
            let pre: f64 = diffs.iter().map(|d| d.0 * (d.1 - mean).powi(2)).sum();
            ev2 += slab.tau * wt * vel;
            ep2 += slab.tau * wt * pre;
        }
    }
    Ok((ev2.sqrt(), ep2.sqrt()))
}

/// Order between two errors whose levels differ by `gap`; `None` unless both are positive.
pub fn eoc_between(coarse: f64, fine: f64, gap: u32) -> Option<f64> {
    (coarse > 0.0 && fine > 0.0 && gap > 0).then(|| (coarse / fine).log2() / gap as f64)
}

/// `log2(e[l-1] / e[l])` for consecutive levels; the first entry is `None`.
pub fn compute_eoc(errors: &[f64]) -> Vec<Option<f64>> {
    std::iter::once(None)
        .chain(errors.windows(2).map(|w| eoc_between(w[0], w[1], 1)))
        .take(errors.len())
        .collect()
}

/// One row of the error table.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub level: u32,
    pub tau: f64,
    pub h: f64,
    /// `None` when the level failed.
    pub ev: Option<f64>,
    pub eoc_v: Option<f64>,
    pub ep: Option<f64>,
    pub eoc_p: Option<f64>,
    pub k: usize,
    pub r: usize,
    pub radius_multiplier: f64,
    pub nu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub rows: Vec<ReportRow>,
    pub config_hash: String,
    pub wall_time: f64,
    /// `(level, message)` for every failed level.
    pub failures: Vec<(u32, String)>,
}

pub const CSV_HEADER: &str = "tau,h,ev,eoc_v,ep,eoc_p,k,r,radius_multiplier,nu";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl ErrorReport {
    /// CSV table preceded by `#` metadata lines.
    pub fn to_csv(&self) -> String {
        let levels: Vec<String> = self.rows.iter().map(|r| r.level.to_string()).collect();
        let mut s = String::new();
        let _ = writeln!(s, "# config_hash = {}", self.config_hash);
        let _ = writeln!(s, "# wall_time = {:e}", self.wall_time);
        let _ = writeln!(s, "# levels = {}", levels.join(","));
        for (level, msg) in &self.failures {
            let _ = writeln!(s, "# failure = {level}: {}", msg.replace('\n', " "));
        }
        let _ = writeln!(s, "{CSV_HEADER}");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:e},{:e},{},{},{},{},{},{},{:e},{:e}",
                r.tau,
                r.h,
                opt(r.ev),
                opt(r.eoc_v),
                opt(r.ep),
                opt(r.eoc_p),
                r.k,
                r.r,
                r.radius_multiplier,
                r.nu
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut config_hash = String::new();
        let mut wall_time = 0.0;
        let mut levels: Vec<u32> = Vec::new();
        let mut failures = Vec::new();
        let mut rows = Vec::new();
        let mut header_seen = false;
        for line in text.lines() {
            if let Some(meta) = line.strip_prefix('#') {
                let Some((key, value)) = meta.split_once('=') else { continue };
                let value = value.trim();
                match key.trim() {
                    "config_hash" => config_hash = value.to_string(),
                    "wall_time" => wall_time = parse_num("wall_time", value)?,
                    "levels" if !value.is_empty() => levels = parse_levels(value)?,
                    "failure" => {
                        let (lv, msg) = value
                            .split_once(": ")
                            .ok_or_else(|| Error::Config(format!("bad failure line '{value}'")))?;
                        failures.push((parse_num("failure", lv)?, msg.to_string()));
                    }
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                if line.trim() != CSV_HEADER {
                    return Err(Error::Config(format!("unexpected CSV header '{line}'")));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(Error::Config(format!("expected 10 fields in '{line}'")));
            }
            let o = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    parse_num("csv", s).map(Some)
                }
            };
            let level = *levels
                .get(rows.len())
                .ok_or_else(|| Error::Config("more rows than levels".into()))?;
            rows.push(ReportRow {
                level,
                tau: parse_num("tau", f[0])?,
                h: parse_num("h", f[1])?,
                ev: o(f[2])?,
                eoc_v: o(f[3])?,
                ep: o(f[4])?,
                eoc_p: o(f[5])?,
                k: parse_num("k", f[6])?,
                r: parse_num("r", f[7])?,
                radius_multiplier: parse_num("radius_multiplier", f[8])?,
                nu: parse_num("nu", f[9])?,
            });
        }
        if !header_seen {
            return Err(Error::Config("missing CSV header".into()));
        }
        Ok(Self {
            rows,
            config_hash,
            wall_time,
            failures,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn row(&self, level: u32) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.level == level)
    }
}

/// Result of one level.
#[derive(Clone, Debug)]
pub struct LevelOutcome {
    pub level: u32,
    pub tau: f64,
    pub h: f64,
    pub result: std::result::Result<(f64, f64), String>,
    pub logs: Vec<SlabLog>,
    pub snapshot: Option<String>,
}

/// Solves one level of the study and measures its errors.
pub fn run_level(cfg: &StudyConfig, level: u32, on_slab: &mut dyn FnMut(u32, &SlabLog)) -> LevelOutcome {
    let slabs = cfg.slabs_at(level);
    let tau = cfg.end_time / slabs as f64;
    let mut logs = Vec::new();
    let mut h = f64::NAN;
    let mut snapshot = None;
    let result = (|| -> Result<(f64, f64)> {
        let problem = SpatialProblem::new(cfg.problem_config(level)?)?;
        h = problem.mesh.h();
        let exact = ExactSolution::new(cfg.nu)?;
        let traj = advance_with(&problem, &exact, cfg.end_time, slabs, &cfg.newton, |log| {
            on_slab(level, log);
            logs.push(log.clone());
        })?;
        if let Some(n) = cfg.snapshot_grid {
            snapshot = Some(snapshot_csv(&problem, &traj, n)?);
        }
        compute_l2l2_error(&problem, &traj, &|x, t| {
            let e = exact.eval(x, t);
            (e.velocity, e.pressure)
        })
    })();
    if h.is_nan() {
        h = std::f64::consts::SQRT_2 / (4usize << level) as f64;
    }
    LevelOutcome {
        level,
        tau,
        h,
        result: result.map_err(|e| e.to_string()),
        logs,
        snapshot,
    }
}

/// Assembles the report from per-level outcomes in level order.
pub fn build_report(cfg: &StudyConfig, outcomes: &[LevelOutcome], wall_time: f64) -> ErrorReport {
    let mut rows: Vec<ReportRow> = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for o in outcomes {
        let (ev, ep) = match &o.result {
            Ok((v, p)) => (Some(*v), Some(*p)),
            Err(msg) => {
                failures.push((o.level, msg.clone()));
                (None, None)
            }
        };
        let prev = rows.last();
        let eoc = |cur: Option<f64>, pick: fn(&ReportRow) -> Option<f64>| -> Option<f64> {
            let p = prev?;
            eoc_between(pick(p)?, cur?, o.level - p.level)
        };
        let row = ReportRow {
            level: o.level,
            tau: o.tau,
            h: o.h,
            ev,
            eoc_v: eoc(ev, |r| r.ev),
            ep,
            eoc_p: eoc(ep, |r| r.ep),
            k: cfg.k,
            r: cfg.r,
            radius_multiplier: cfg.radius_multiplier,
            nu: cfg.nu,
        };
        rows.push(row);
    }
    ErrorReport {
        rows,
        config_hash: cfg.hash(),
        wall_time,
        failures,
    }
}

/// Report plus the solver logs of every level.
#[derive(Clone, Debug)]
pub struct StudyOutcome {
    pub report: ErrorReport,
    pub levels: Vec<LevelOutcome>,
}

/// Runs every level, one after another (or concurrently when `parallel`),
/// and writes the CSV when an output path is configured.
pub fn run_study(
    cfg: &StudyConfig,
    parallel: bool,
    on_slab: &(dyn Fn(u32, &SlabLog) + Sync),
) -> Result<StudyOutcome> {
    cfg.validate()?;
    let clock = Instant::now();
    let levels: Vec<LevelOutcome> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = cfg
                .levels
                .iter()
                .map(|&l| scope.spawn(move || run_level(cfg, l, &mut |lv, log| on_slab(lv, log))))
                .collect();
            handles.into_iter().map(|h| h.join().expect("level worker panicked")).collect()
        })
    } else {
        cfg.levels
            .iter()
            .map(|&l| run_level(cfg, l, &mut |lv, log| on_slab(lv, log)))
            .collect()
    };
    let report = build_report(cfg, &levels, clock.elapsed().as_secs_f64());
    if let Some(path) = &cfg.out {
        report.write_csv(path)?;
    }
    Ok(StudyOutcome { report, levels })
}

/// Machine-readable run log: one line per slab.
pub fn run_log_csv(levels: &[LevelOutcome]) -> String {
    let mut s = String::from("level,slab,newton_iters,residual,linear_residual,solve_time\n");
    for o in levels {
        for l in &o.logs {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{:e},{:e}",
                o.level, l.slab, l.newton_iterations, l.residual, l.linear_residual, l.solve_time
            );
        }
    }
    s
}

/// One run of the small-cut sweep.
#[derive(Clone, Debug)]
pub struct SweepRun {
    pub shift: f64,
    pub gv: f64,
    pub gp: f64,
    /// Smallest fluid fraction among the cut cells.
    pub min_cut_fraction: f64,
    pub result: std::result::Result<(f64, f64), String>,
    pub max_newton_iterations: usize,
    pub max_linear_residual: f64,
}

/// Shifts of the disk center used by the sweep at `level`: none, a tenth and a
/// hundredth of the cell diameter, and just under half of it.
pub fn default_shifts(level: u32) -> Vec<f64> {
    let h = std::f64::consts::SQRT_2 / (4usize << level) as f64;
    vec![0.0, h / 10.0, h / 100.0, h / 2.0 - 1e-6]
}

/// Moves the disk center along `x` by every shift and solves one level.
pub fn cut_robustness_sweep(cfg: &StudyConfig, level: u32, shifts: &[f64]) -> Result<Vec<SweepRun>> {
    let mut out = Vec::with_capacity(shifts.len());
    for &shift in shifts {
        let mut c = cfg.clone();
        c.center[0] += shift;
        c.levels = vec![level];
        c.out = None;
        c.validate()?;
        let problem_cfg = c.problem_config(level)?;
        let min_cut_fraction = {
            let mesh = crate::mesh::BackgroundMesh::new(level)?;
            let geo = CutGeometry::new(&mesh, problem_cfg.disk, problem_cfg.q_vol, problem_cfg.q_surf)?;
            let cell_area = mesh.cell_size() * mesh.cell_size();
            mesh.cells()
                .filter(|&cl| geo.class(cl) == CellClass::Cut)
                .map(|cl| geo.volume_rule(cl).map_or(0.0, |r| r.measure()) / cell_area)
                .fold(f64::INFINITY, f64::min)
        };
        let o = run_level(&c, level, &mut |_, _| {});
        out.push(SweepRun {
            shift,
            gv: c.gv,
            gp: c.gp,
            min_cut_fraction,
            max_newton_iterations: o.logs.iter().map(|l| l.newton_iterations).max().unwrap_or(0),
            max_linear_residual: o.logs.iter().map(|l| l.linear_residual).fold(0.0, f64::max),
            result: o.result,
        });
    }
    Ok(out)
}

pub fn sweep_csv(runs: &[SweepRun]) -> String {
    let mut s = String::from("shift,gv,gp,min_cut_fraction,ev,ep,max_newton_iters,max_linear_residual,status\n");
    for r in runs {
        let (ev, ep, status) = match &r.result {
            Ok((v, p)) => (format!("{v:e}"), format!("{p:e}"), "ok".to_string()),
            Err(m) => (String::new(), String::new(), format!("\"{}\"", m.replace('"', "'"))),
        };
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{ev},{ep},{},{:e},{status}",
            r.shift, r.gv, r.gp, r.min_cut_fraction, r.max_newton_iterations, r.max_linear_residual
        );
    }
    s
}

/// Point values of the discrete solution at the end of a trajectory on a
/// uniform `n x n` grid, with a flag for points in the fluid.
pub fn snapshot_csv(problem: &SpatialProblem, traj: &Trajectory, n: usize) -> Result<String> {
    let last = traj
        .states
        .last()
        .ok_or_else(|| Error::InvalidParameter("empty trajectory".into()))?;
    let u = problem.state_at(last, 1.0);
    let mut s = String::from("x,y,vx,vy,p,fluid\n");
    for j in 0..n {
        for i in 0..n {
            let p = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
            let cell = problem.mesh.locate(p).expect("grid point inside the square");
            let (v, _, pr) = problem.space.evaluate(&u, cell, p);
            let fluid = problem.config.disk.map_or(true, |d| d.signed_distance(p) > 0.0);
            let _ = writeln!(s, "{:e},{:e},{:e},{:e},{:e},{}", p[0], p[1], v[0], v[1], pr, u8::from(fluid));
        }
    }
    Ok(s)
}
