//! Configuration and subcommands of the `ffd` driver. Every command writes a
//! CSV table with a header row to the supplied writer.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use ffd_core::analysis::{
    convergence_study, defect, mode_scan, run_branch_experiment, run_zero_experiment,
    ExperimentConfig, StepRule,
};
use ffd_core::params::{check_consistency, check_stability};
use ffd_core::reference::{
    envelope_trajectory, nls_initial_envelopes, EnvelopeOptions, InitialProfiles,
};
use ffd_core::{Branch, FilterParams, PhysicalSetup};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("parameter solve failed: {0}")]
    Solve(ffd_core::Error),
    #[error("instability: {0}")]
    Blowup(ffd_core::Error),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solve(_) => 3,
            CliError::Blowup(_) => 4,
            CliError::Output(_) => 1,
        }
    }
}

impl From<ffd_core::Error> for CliError {
    fn from(e: ffd_core::Error) -> Self {
        use ffd_core::Error as E;
        match e {
            E::NonFinite { .. } => CliError::Blowup(e),
            E::InvalidInput(msg) | E::GridMismatch(msg) => CliError::Config(msg),
            E::ZeroWaveVector => CliError::Config(e.to_string()),
            _ => CliError::Solve(e),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Two co-moving branches, or the single `μ = 0` run for moderate `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    TwoBranch,
    MuZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profiles {
    Gaussian,
    Zero,
}

impl Profiles {
    pub fn build(self) -> InitialProfiles {
        match self {
            Profiles::Gaussian => InitialProfiles::gaussian(),
            Profiles::Zero => InitialProfiles::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub epsilon: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub rho: f64,
    pub r: f64,
    pub t_final: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub h_target: f64,
    pub tau_target: f64,
    pub mode: Mode,
    pub profiles: Profiles,
    pub ref_modes: usize,
    pub ref_dt: f64,
    pub ref_tol: f64,
    pub kg_dt: f64,
    pub strict: bool,
    /// Sweep lists for `converge`.
    pub eps_list: Vec<f64>,
    pub h_list: Vec<f64>,
    /// `τ = tau_coeff · h^tau_power` in sweeps.
    pub tau_coeff: f64,
    pub tau_power: f64,
    /// Mode range for `stabmap`; `None` means the full mode set of the grid.
    pub k_min: Option<i64>,
    pub k_max: Option<i64>,
    /// Level stride of the `defect` scan.
    pub defect_stride: usize,
    pub output: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            epsilon: 1e-2,
            kappa: 1.0,
            lambda: 1.0,
            rho: 1.0,
            r: 0.9,
            t_final: 1.0,
            x_min: -4.0,
            x_max: 4.0,
            h_target: 0.2,
            tau_target: 0.04,
            mode: Mode::TwoBranch,
            profiles: Profiles::Gaussian,
            ref_modes: 2048,
            ref_dt: 1e-3,
            ref_tol: 1e-8,
            kg_dt: 5e-4,
            strict: true,
            eps_list: vec![1e-2, 1e-3, 1e-4],
            h_list: vec![0.4, 0.2, 0.1, 0.05],
            tau_coeff: 1.0,
            tau_power: 2.0,
            k_min: None,
            k_max: None,
            defect_stride: 1,
            output: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value for {key}: {value:?}")))
}

fn parse_list(key: &str, value: &str) -> CliResult<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(CliError::Config(format!("invalid value for {key}: {other:?}"))),
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        match key.trim() {
            "epsilon" => self.epsilon = parse_num(key, v)?,
            "kappa" => self.kappa = parse_num(key, v)?,
            "lambda" => self.lambda = parse_num(key, v)?,
            "rho" => self.rho = parse_num(key, v)?,
            "r" => self.r = parse_num(key, v)?,
            "t_final" => self.t_final = parse_num(key, v)?,
            "x_min" => self.x_min = parse_num(key, v)?,
            "x_max" => self.x_max = parse_num(key, v)?,
            "h_target" => self.h_target = parse_num(key, v)?,
            "tau_target" => self.tau_target = parse_num(key, v)?,
            "mode" => {
                self.mode = match v {
                    "two-branch" => Mode::TwoBranch,
                    "mu-zero" => Mode::MuZero,
                    _ => return Err(CliError::Config(format!("unknown mode {v:?}"))),
                }
            }
            "profiles" => {
                self.profiles = match v {
                    "gaussian" => Profiles::Gaussian,
                    "zero" => Profiles::Zero,
                    _ => return Err(CliError::Config(format!("unknown profiles {v:?}"))),
                }
            }
            "ref_modes" => self.ref_modes = parse_num(key, v)?,
            "ref_dt" => self.ref_dt = parse_num(key, v)?,
            "ref_tol" => self.ref_tol = parse_num(key, v)?,
            "kg_dt" => self.kg_dt = parse_num(key, v)?,
            "strict" => self.strict = parse_bool(key, v)?,
            "eps_list" => self.eps_list = parse_list(key, v)?,
            "h_list" => self.h_list = parse_list(key, v)?,
            "tau_coeff" => self.tau_coeff = parse_num(key, v)?,
            "tau_power" => self.tau_power = parse_num(key, v)?,
            "k_min" => self.k_min = Some(parse_num(key, v)?),
            "k_max" => self.k_max = Some(parse_num(key, v)?),
            "defect_stride" => self.defect_stride = parse_num(key, v)?,
            "output" => self.output = Some(v.to_string()),
            other => return Err(CliError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a flat `key = value` text; `#` starts a comment.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut config = RunConfig::default();
        config.apply(text)?;
        Ok(config)
    }

    pub fn apply(&mut self, text: &str) -> CliResult<()> {
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            if let Some(prev) = seen.insert(key.trim().to_string(), lineno + 1) {
                return Err(CliError::Config(format!(
                    "line {}: {} already set on line {prev}",
                    lineno + 1,
                    key.trim()
                )));
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    /// Applies a `key=value` command-line override.
    pub fn override_with(&mut self, assignment: &str) -> CliResult<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(key, value)
    }

    pub fn validate(&self) -> CliResult<()> {
        let scalars = [
            ("epsilon", self.epsilon),
            ("kappa", self.kappa),
            ("lambda", self.lambda),
            ("rho", self.rho),
            ("r", self.r),
            ("t_final", self.t_final),
            ("x_min", self.x_min),
            ("x_max", self.x_max),
            ("h_target", self.h_target),
            ("tau_target", self.tau_target),
            ("ref_dt", self.ref_dt),
            ("ref_tol", self.ref_tol),
            ("kg_dt", self.kg_dt),
            ("tau_coeff", self.tau_coeff),
            ("tau_power", self.tau_power),
        ];
        if let Some((k, _)) = scalars.iter().find(|(_, v)| !v.is_finite()) {
            return Err(CliError::Config(format!("{k} must be finite")));
        }
        let positive = [
            ("h_target", self.h_target),
            ("tau_target", self.tau_target),
            ("ref_dt", self.ref_dt),
            ("ref_tol", self.ref_tol),
            ("kg_dt", self.kg_dt),
            ("tau_coeff", self.tau_coeff),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v <= 0.0) {
            return Err(CliError::Config(format!("{k} must be positive")));
        }
        if self.x_max <= self.x_min {
            return Err(CliError::Config("x_max must exceed x_min".into()));
        }
        if self.r >= 1.0 {
            return Err(CliError::Config("stability margin r must be below 1".into()));
        }
        if self.ref_modes < 2 || self.defect_stride == 0 {
            return Err(CliError::Config("ref_modes >= 2 and defect_stride >= 1 required".into()));
        }
        if self.eps_list.iter().chain(&self.h_list).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(CliError::Config("sweep lists must hold positive numbers".into()));
        }
        Ok(())
    }

    pub fn setup(&self) -> CliResult<PhysicalSetup> {
        self.setup_for(self.epsilon)
    }

    fn setup_for(&self, epsilon: f64) -> CliResult<PhysicalSetup> {
        PhysicalSetup::new(epsilon, self.kappa, self.lambda, self.t_final).map_err(|e| match e {
            ffd_core::Error::ZeroWaveVector | ffd_core::Error::InvalidInput(_) => {
                CliError::Config(e.to_string())
            }
            other => other.into(),
        })
    }

    pub fn experiment(&self) -> CliResult<ExperimentConfig> {
        self.validate()?;
        Ok(ExperimentConfig {
            setup: self.setup()?,
            rho: self.rho,
            r: self.r,
            h_target: self.h_target,
            tau_target: self.tau_target,
            x_min: self.x_min,
            length: self.x_max - self.x_min,
            ref_modes: self.ref_modes,
            envelope: EnvelopeOptions {
                max_dt: self.ref_dt,
                tolerance: self.ref_tol,
                ..EnvelopeOptions::default()
            },
            kg_dt: self.kg_dt,
            strict: self.strict && self.mode == Mode::TwoBranch,
        })
    }

    fn branches(&self) -> &'static [Branch] {
        match self.mode {
            Mode::TwoBranch => &[Branch::Plus, Branch::Minus],
            Mode::MuZero => &[Branch::Zero],
        }
    }
}

/// Floats with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Solved parameters, consistency residuals and stability verdict per branch.
pub fn cmd_params(config: &RunConfig, out: impl Write) -> CliResult<()> {
    let exp = config.experiment()?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "branch", "epsilon", "kappa", "rho", "r", "alpha", "beta", "tau", "h", "n_steps", "res1",
        "res2", "stab_lhs", "stable", "leapfrog_limit",
    ])?;
    for &branch in config.branches() {
        let p = exp.solve_params(branch)?;
        let (res1, res2) = check_consistency(&exp.setup, &p)?;
        let stab = check_stability(&exp.setup, &p)?;
        w.write_record([
            branch.name().to_string(),
            fmt_f64(exp.setup.epsilon),
            fmt_f64(exp.setup.kappa),
            fmt_f64(p.rho),
            fmt_f64(p.r),
            fmt_f64(p.alpha()),
            fmt_f64(p.beta()),
            fmt_f64(p.tau),
            fmt_f64(p.h),
            exp.n_steps().to_string(),
            fmt_f64(res1),
            fmt_f64(res2),
            fmt_f64(stab.lhs),
            stab.satisfied.to_string(),
            p.is_leapfrog_limit().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-step max norms of each branch followed by one `final` row per branch
/// with the errors at `t_N`.
pub fn cmd_solve(config: &RunConfig, out: impl Write) -> CliResult<()> {
    let exp = config.experiment()?;
    let profiles = config.profiles.build();
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "kind", "branch", "n", "t", "max_norm", "err_linf", "err_wiener", "err_velocity",
    ])?;
    for &branch in config.branches() {
        let (params, trajectory, report) = match branch {
            Branch::Zero => {
                let run = run_zero_experiment(&exp, &profiles)?;
                (run.params, run.trajectory, run.report)
            }
            _ => {
                let run = run_branch_experiment(&exp, branch, &profiles)?;
                (run.params, run.trajectory, run.report)
            }
        };
        let n_steps = trajectory.n_steps();
        for n in 0..=n_steps {
            w.write_record([
                "step".to_string(),
                branch.name().to_string(),
                n.to_string(),
                fmt_f64(n as f64 * params.tau),
                fmt_f64(trajectory.max_norms[n + 1]),
                String::new(),
                String::new(),
                String::new(),
            ])?;
        }
        w.write_record([
            "final".to_string(),
            branch.name().to_string(),
            n_steps.to_string(),
            fmt_f64(report.t),
            fmt_f64(trajectory.max_norms[n_steps + 1]),
            fmt_f64(report.err_linf),
            fmt_f64(report.err_wiener),
            fmt_f64(report.err_velocity),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `(ε, h)` sweep with per-`ε` fitted slopes of `err_linf` against `h`.
pub fn cmd_converge(config: &RunConfig, out: impl Write) -> CliResult<()> {
    let exp = config.experiment()?;
    let branch = config.branches()[0];
    let rule = StepRule {
        coeff: config.tau_coeff,
        power: config.tau_power,
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "epsilon", "h", "tau", "alpha", "beta", "stab_lhs", "err_linf", "err_wiener",
        "err_velocity", "slope", "reason",
    ])?;
    if config.eps_list.is_empty() || config.h_list.is_empty() {
        w.flush()?;
        return Ok(());
    }
    for &eps in &config.eps_list {
        config.setup_for(eps)?;
    }
    let table = convergence_study(
        &exp,
        branch,
        &config.eps_list,
        &config.h_list,
        rule,
        &config.profiles.build(),
    );
    for row in &table.rows {
        let slope = table
            .slopes
            .iter()
            .find(|s| s.epsilon == row.epsilon)
            .map(|s| s.linf)
            .filter(|s| s.is_finite());
        let p = row.params;
        let rep = row.report;
        w.write_record([
            fmt_f64(row.epsilon),
            p.map(|p| fmt_f64(p.h)).unwrap_or_else(|| fmt_f64(row.h_target)),
            opt(p.map(|p| p.tau)),
            opt(p.map(|p| p.alpha())),
            opt(p.map(|p| p.beta())),
            opt(row.stab_lhs),
            opt(rep.map(|r| r.err_linf)),
            opt(rep.map(|r| r.err_wiener)),
            opt(rep.map(|r| r.err_velocity)),
            opt(slope),
            row.skipped.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-mode amplification data of the first configured branch.
pub fn cmd_stabmap(config: &RunConfig, out: impl Write) -> CliResult<()> {
    let exp = config.experiment()?;
    let branch = config.branches()[0];
    let params: FilterParams = exp.solve_params(branch)?;
    let m = exp.grid_for(params.h)?.len();
    let half = (m / 2) as i64;
    let k_min = config.k_min.unwrap_or(-half);
    let k_max = config.k_max.unwrap_or(m as i64 - half - 1);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "c1", "c2", "abs_lambda_plus", "abs_lambda_minus", "cond_p"])?;
    let modes = mode_scan(m, &exp.setup, &params)?;
    for k in k_min..=k_max {
        let mode = if (-half..m as i64 - half).contains(&k) {
            modes[(k + half) as usize]
        } else {
            ffd_core::analysis::amplification(k, m, &exp.setup, &params)?
        };
        w.write_record([
            k.to_string(),
            fmt_f64(mode.c1),
            fmt_f64(mode.c2),
            fmt_f64(mode.lambda_plus.norm()),
            fmt_f64(mode.lambda_minus.norm()),
            fmt_f64(mode.cond_p),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Max and Wiener norms of the defect of `A⁺` over the levels `1..N`.
pub fn cmd_defect(config: &RunConfig, out: impl Write) -> CliResult<()> {
    let exp = config.experiment()?;
    if config.mode == Mode::MuZero {
        return Err(CliError::Config("defect scan needs mode = two-branch".into()));
    }
    let params = exp.solve_params(Branch::Plus)?;
    let n_steps = exp.n_steps();
    let grid = ffd_core::PeriodicGrid::new(exp.x_min, exp.length, exp.ref_modes)?;
    let (a0, _) = nls_initial_envelopes(&config.profiles.build(), exp.setup.omega, grid);
    let env = envelope_trajectory(Branch::Plus, &exp.setup, params.tau, n_steps, &a0, exp.envelope)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "t", "defect_linf", "defect_wiener"])?;
    for n in (1..=n_steps).step_by(config.defect_stride) {
        let d = defect(&env, n as i64, &exp.setup, &params)?;
        w.write_record([
            n.to_string(),
            fmt_f64(n as f64 * params.tau),
            fmt_f64(d.max_norm()),
            fmt_f64(d.wiener_norm()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
