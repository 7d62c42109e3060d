//! Per-mode amplification analysis, the defect of the dominant term, error
//! reports against reference solutions, and convergence studies.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{GridField, PeriodicGrid, Spectral, WaveField};
use crate::params::{check_stability, Branch, FilterParams, PhysicalSetup};
use crate::reference::{
    carrier, dominant_term_at_level, envelope_trajectory, kg_reference, nls_initial_envelopes,
    resample, EnvelopeOptions, EnvelopeTrajectory, InitialProfiles,
};
use crate::scheme::{
    build_coefficients, run_branch, startup, startup_from_velocity, Trajectory,
};

/// One Fourier mode of the linearised scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeAnalysis {
    pub k: i64,
    pub c1: f64,
    pub c2: f64,
    /// Row-major one-step map `(ŵ^{n+1}, ŵ^n) = G (ŵ^n, ŵ^{n−1})`.
    pub g: [[Complex64; 2]; 2],
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
    /// Spectral condition number of the eigenvector matrix `[(λ+, 1), (λ−, 1)]`.
    pub cond_p: f64,
}

/// Amplification data of mode `k` on a grid of `m` nodes.
pub fn amplification(
    k: i64,
    m: usize,
    setup: &PhysicalSetup,
    params: &FilterParams,
) -> Result<ModeAnalysis> {
    if m == 0 {
        return Err(Error::InvalidInput("empty grid".into()));
    }
    let eps = setup.epsilon;
    let (tau, h, mu) = (params.tau, params.h, params.mu);
    let (alpha, beta) = (params.alpha, params.beta);
    let kh = std::f64::consts::TAU * k as f64 / m as f64;
    let psi1 = alpha.psi1();
    let c1 = mu * tau * kh.sin() * psi1 / (eps * h * alpha.sinc() * beta.sinc());
    let c2 = 2.0 * tau * tau * (mu * mu - 1.0) * (kh.cos() - beta.phi2()?) * psi1
        / (eps * eps * h * h * beta.psi2()?)
        + tau * tau * psi1 / eps.powi(4);
    let b = 2.0 * alpha.phi1() - c2;
    let den = Complex64::new(1.0, -c1);
    let g = [
        [Complex64::from(b) / den, -Complex64::new(1.0, c1) / den],
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
    ];
    let disc = 4.0 * (1.0 + c1 * c1) - b * b;
    let root = if disc >= 0.0 {
        Complex64::new(0.0, disc.sqrt())
    } else {
        Complex64::new((-disc).sqrt(), 0.0)
    };
    let lambda_plus = (b + root) / (2.0 * den);
    let lambda_minus = (b - root) / (2.0 * den);

    // P*P = [[|λ+|²+1, conj(λ+)λ− + 1], [.., |λ−|²+1]]
    let d1 = lambda_plus.norm_sqr() + 1.0;
    let d2 = lambda_minus.norm_sqr() + 1.0;
    let off = (lambda_plus.conj() * lambda_minus + 1.0).norm();
    let half_tr = 0.5 * (d1 + d2);
    let spread = (0.25 * (d1 - d2) * (d1 - d2) + off * off).sqrt();
    let (s_max, s_min) = (half_tr + spread, half_tr - spread);
    let cond_p = if s_min > 0.0 {
        (s_max / s_min).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(ModeAnalysis {
        k,
        c1,
        c2,
        g,
        lambda_plus,
        lambda_minus,
        cond_p,
    })
}

/// Amplification data for every mode of an `m`-node grid.
pub fn mode_scan(m: usize, setup: &PhysicalSetup, params: &FilterParams) -> Result<Vec<ModeAnalysis>> {
    let half = (m / 2) as i64;
    (-half..m as i64 - half)
        .map(|k| amplification(k, m, setup, params))
        .collect()
}

/// Defect of the dominant term `A` at level `n` inserted into the scheme
/// (multiplied through by `ε²`), returned as a profile: the carrier
/// `e^{iκξ/ε}e^{inα}` is divided out.
///
/// Time shifts take envelope snapshots at `n ± 1` with the exact phase
/// `e^{±iα}`; space shifts by `±h` are applied spectrally to the envelope with
/// the exact carrier factor `e^{±iβ}`.
pub fn defect(
    env: &EnvelopeTrajectory,
    n: i64,
    setup: &PhysicalSetup,
    params: &FilterParams,
) -> Result<GridField> {
    if params.branch != env.branch {
        return Err(Error::InvalidInput("parameters and envelope on different branches".into()));
    }
    if ((env.tau - params.tau) / params.tau).abs() > 1e-14 {
        return Err(Error::InvalidInput("envelope snapshots are not spaced by tau".into()));
    }
    let get = |m: i64| {
        env.level(m)
            .ok_or_else(|| Error::InvalidInput(format!("envelope level {m} missing")))
    };
    let (am, a0, ap) = (get(n - 1)?, get(n)?, get(n + 1)?);
    let grid = a0.grid;
    let spectral = Spectral::new(grid.len());
    let right = |f: &GridField| spectral.shifted(f, params.h).values;
    let left = |f: &GridField| spectral.shifted(f, -params.h).values;

    let eps = setup.epsilon;
    let eps2 = eps * eps;
    let (tau, h, mu) = (params.tau, params.h, params.mu);
    let (alpha, beta) = (params.alpha, params.beta);
    let tanc_b = beta.tanc()?;
    let w_tt = eps2 * eps2 / (tau * tau * alpha.psi1());
    let w_mix = 2.0 * eps2 * eps * mu / (4.0 * alpha.sinc() * beta.sinc() * tau * h);
    let w_xx = eps2 * (mu * mu - 1.0) / (h * h * beta.psi2()?);
    let w_nl = eps2 * setup.lambda / (tanc_b * tanc_b);
    let (phi1, phi2) = (alpha.phi1(), beta.phi2()?);

    let ea = Complex64::from_polar(1.0, alpha.offset());
    let eb = Complex64::from_polar(1.0, beta.offset());
    let (ap_r, ap_l) = (right(ap), left(ap));
    let (am_r, am_l) = (right(am), left(am));
    let (a0_r, a0_l) = (right(a0), left(a0));

    let values = (0..grid.len())
        .map(|j| {
            let a = a0.values[j];
            let tt = ea * ap.values[j] - 2.0 * phi1 * a + ea.conj() * am.values[j];
            let mix = eb * (ea * ap_r[j] - ea.conj() * am_r[j])
                - eb.conj() * (ea * ap_l[j] - ea.conj() * am_l[j]);
            let xx = eb * a0_r[j] - 2.0 * phi2 * a + eb.conj() * a0_l[j];
            w_tt * tt - w_mix * mix + w_xx * xx + a + w_nl * a.norm_sqr() * a
        })
        .collect();
    GridField::new(grid, values, a0.time)
}

/// Errors of a numerical level against a reference at the same time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub err_linf: f64,
    pub err_wiener: f64,
    /// Max-norm error of `ε² v` (zero when no velocity was supplied).
    pub err_velocity: f64,
    pub t: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub h: f64,
}

/// Compares `w^n` (and optionally `v^n`) with the dominant term `A` built
/// from the envelope trajectory; the velocity reference is `−iω_b A/ε²`.
pub fn error_report(
    w: &WaveField,
    v: Option<&WaveField>,
    env: &EnvelopeTrajectory,
    n: i64,
    setup: &PhysicalSetup,
    params: &FilterParams,
) -> Result<ErrorReport> {
    let a = env
        .level(n)
        .ok_or_else(|| Error::InvalidInput(format!("envelope level {n} missing")))?;
    if !(a.grid.same_as(&w.grid)
        || ((a.grid.length() - w.grid.length()).abs() <= 1e-12 * w.grid.length()
            && (a.grid.x_min() - w.grid.x_min()).abs() <= 1e-12 * w.grid.length()))
    {
        return Err(Error::GridMismatch("envelope and level cover different cells".into()));
    }
    let reference = dominant_term_at_level(&resample(a, w.grid), n, params, setup);
    let diff = w.difference(&reference)?;
    let err_velocity = match v {
        Some(v) => {
            let eps2 = setup.epsilon * setup.epsilon;
            let factor = Complex64::new(0.0, -setup.omega_for(params.branch));
            let scaled = GridField {
                values: v.values.iter().map(|z| z * eps2).collect(),
                ..v.clone()
            };
            let target = GridField {
                values: reference.values.iter().map(|z| z * factor).collect(),
                ..reference.clone()
            };
            scaled.difference(&target)?.max_norm()
        }
        None => 0.0,
    };
    Ok(ErrorReport {
        err_linf: diff.max_norm(),
        err_wiener: diff.wiener_norm(),
        err_velocity,
        t: w.time,
        epsilon: setup.epsilon,
        tau: params.tau,
        h: params.h,
    })
}

/// Settings shared by single runs and sweeps.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentConfig {
    pub setup: PhysicalSetup,
    pub rho: f64,
    pub r: f64,
    pub h_target: f64,
    pub tau_target: f64,
    pub x_min: f64,
    pub length: f64,
    /// Fourier modes of the reference solvers (rounded up to a multiple of
    /// the scheme's node count).
    pub ref_modes: usize,
    pub envelope: EnvelopeOptions,
    /// Step of the resolved Klein–Gordon reference (`μ = 0` mode).
    pub kg_dt: f64,
    /// Reject parameters violating the stability condition.
    pub strict: bool,
}

impl ExperimentConfig {
    /// κ = 1, λ = 1, T = 1, ρ = 1, r = 0.9 on `[−4, 4]`.
    pub fn standard(epsilon: f64, h_target: f64, tau_target: f64) -> Result<Self> {
        Ok(ExperimentConfig {
            setup: PhysicalSetup::new(epsilon, 1.0, 1.0, 1.0)?,
            rho: 1.0,
            r: 0.9,
            h_target,
            tau_target,
            x_min: -4.0,
            length: 8.0,
            ref_modes: 2048,
            envelope: EnvelopeOptions::default(),
            kg_dt: 5e-4,
            strict: true,
        })
    }

    /// Number of steps reaching `T`.
    pub fn n_steps(&self) -> usize {
        ((self.setup.t_final / self.tau_target).round() as usize).max(1)
    }

    /// Solved parameters for `branch` with `τ` aimed at `T/N`.
    pub fn solve_params(&self, branch: Branch) -> Result<FilterParams> {
        let tau = self.setup.t_final / self.n_steps() as f64;
        match branch {
            Branch::Zero => {
                let m = self.node_count(self.h_target)?;
                FilterParams::from_steps(&self.setup, branch, tau, self.length / m as f64, self.r)
            }
            _ => FilterParams::solve(&self.setup, branch, self.rho, self.r, self.h_target, tau),
        }
    }

    fn node_count(&self, h: f64) -> Result<usize> {
        let m = (self.length / h).round() as usize;
        if m < 2 {
            return Err(Error::InvalidInput(format!("mesh {h} too coarse for the domain")));
        }
        Ok(m)
    }

    /// Scheme grid with spacing exactly `h`, centred on the configured cell.
    pub fn grid_for(&self, h: f64) -> Result<PeriodicGrid> {
        let m = self.node_count(h)?;
        let centre = self.x_min + 0.5 * self.length;
        PeriodicGrid::with_spacing(centre - 0.5 * m as f64 * h, h, m)
    }

    /// Reference grid over the same cell as `grid` whose nodes contain the
    /// scheme nodes.
    pub fn reference_grid(&self, grid: &PeriodicGrid) -> Result<PeriodicGrid> {
        let stride = self.ref_modes.div_ceil(grid.len()).max(1);
        PeriodicGrid::with_spacing(grid.x_min(), grid.h() / stride as f64, grid.len() * stride)
    }
}

/// One branch run with its envelope reference and final-time errors.
#[derive(Debug, Clone)]
pub struct BranchExperiment {
    pub params: FilterParams,
    pub trajectory: Trajectory,
    pub envelope: EnvelopeTrajectory,
    pub report: ErrorReport,
}

/// Runs the `+` or `−` branch to `t_N ≈ T` and measures `w^N − A(t_N)`.
pub fn run_branch_experiment(
    config: &ExperimentConfig,
    branch: Branch,
    profiles: &InitialProfiles,
) -> Result<BranchExperiment> {
    if branch == Branch::Zero {
        return Err(Error::InvalidInput("use run_zero_experiment for the mu = 0 mode".into()));
    }
    let setup = &config.setup;
    let params = config.solve_params(branch)?;
    let n_steps = config.n_steps();
    let grid = config.grid_for(params.h)?;
    let coeffs = build_coefficients(setup, &params, grid, config.strict)?;
    let pick = |(p, m): (GridField, GridField)| if branch == Branch::Plus { p } else { m };
    let a0 = pick(nls_initial_envelopes(profiles, setup.omega, grid));
    let (w0, w1) = startup(&a0, setup, &params)?;
    let trajectory = run_branch(setup, &params, &coeffs, w0, w1, n_steps)?;

    let ref_grid = config.reference_grid(&grid)?;
    let a0_ref = pick(nls_initial_envelopes(profiles, setup.omega, ref_grid));
    let envelope = envelope_trajectory(branch, setup, params.tau, n_steps, &a0_ref, config.envelope)?;
    let n = n_steps as i64;
    let report = error_report(
        trajectory.level(n).expect("level N"),
        trajectory.velocity(n_steps),
        &envelope,
        n,
        setup,
        &params,
    )?;
    Ok(BranchExperiment {
        params,
        trajectory,
        envelope,
        report,
    })
}

/// The `μ = 0` mode (moderate `ε`) against the resolved Klein–Gordon
/// reference, sampled at the scheme nodes.
#[derive(Debug, Clone)]
pub struct ZeroExperiment {
    pub params: FilterParams,
    pub trajectory: Trajectory,
    pub report: ErrorReport,
}

pub fn run_zero_experiment(
    config: &ExperimentConfig,
    profiles: &InitialProfiles,
) -> Result<ZeroExperiment> {
    let setup = &config.setup;
    let params = config.solve_params(Branch::Zero)?;
    let n_steps = config.n_steps();
    let grid = config.grid_for(params.h)?;
    let coeffs = build_coefficients(setup, &params, grid, config.strict)?;
    let initial = |g: PeriodicGrid| {
        let car = carrier(setup, &g);
        let eps2 = setup.epsilon * setup.epsilon;
        let u0 = GridField::from_fn(g, 0.0, |x| (profiles.a0)(x));
        let v0 = GridField::from_fn(g, 0.0, |x| (profiles.b0)(x) / eps2);
        let modulate = |f: GridField| GridField {
            values: f.values.iter().zip(&car).map(|(a, c)| a * c).collect(),
            ..f
        };
        (modulate(u0), modulate(v0))
    };
    let (u0, v0) = initial(grid);
    let (w0, w1) = startup_from_velocity(&u0, &v0, setup, &params, &coeffs)?;
    let trajectory = run_branch(setup, &params, &coeffs, w0, w1, n_steps)?;

    let ref_grid = config.reference_grid(&grid)?;
    let stride = ref_grid.len() / grid.len();
    let (ru0, rv0) = initial(ref_grid);
    let t_end = n_steps as f64 * params.tau;
    let (u_ref, ut_ref) = kg_reference(setup, &ru0, &rv0, config.kg_dt, t_end)?;
    let sample = |f: &GridField| {
        GridField::new(grid, f.values.iter().step_by(stride).copied().collect(), t_end)
    };
    let (u_ref, ut_ref) = (sample(&u_ref)?, sample(&ut_ref)?);
    let w = trajectory.level(n_steps as i64).expect("level N");
    let v = trajectory.velocity(n_steps).expect("velocity N");
    let diff = w.difference(&u_ref)?;
    let eps2 = setup.epsilon * setup.epsilon;
    let report = ErrorReport {
        err_linf: diff.max_norm(),
        err_wiener: diff.wiener_norm(),
        err_velocity: v.difference(&ut_ref)?.max_norm() * eps2,
        t: t_end,
        epsilon: setup.epsilon,
        tau: params.tau,
        h: params.h,
    };
    Ok(ZeroExperiment {
        params,
        trajectory,
        report,
    })
}

/// One `(ε, h)` entry of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub h_target: f64,
    pub params: Option<FilterParams>,
    pub stab_lhs: Option<f64>,
    pub report: Option<ErrorReport>,
    /// Self-convergence of the envelope reference (`±` branches only).
    pub reference_check: Option<f64>,
    /// Why the row has no errors.
    pub skipped: Option<String>,
}

/// Least-squares slopes of `log err` against `log h` for one `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub epsilon: f64,
    pub linf: f64,
    pub wiener: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub slopes: Vec<SlopeFit>,
}

/// How `τ` follows `h` in a sweep: `τ = coeff·h^power`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRule {
    pub coeff: f64,
    pub power: f64,
}

impl StepRule {
    pub fn tau(&self, h: f64) -> f64 {
        self.coeff * h.powf(self.power)
    }
}

/// Least-squares slope of `ys` against `xs` (both already logarithms).
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return f64::NAN;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let sxy: f64 = xs[..n].iter().zip(&ys[..n]).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs[..n].iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Runs `branch` for every `(ε, h)` pair (in parallel, rows in input order)
/// and fits convergence slopes per `ε` in the solved `h`.
pub fn convergence_study(
    base: &ExperimentConfig,
    branch: Branch,
    epsilons: &[f64],
    hs: &[f64],
    rule: StepRule,
    profiles: &InitialProfiles,
) -> ConvergenceTable {
    let jobs: Vec<(f64, f64)> = epsilons
        .iter()
        .flat_map(|&e| hs.iter().map(move |&h| (e, h)))
        .collect();
    let rows: Vec<ConvergenceRow> = jobs
        .par_iter()
        .map(|&(epsilon, h_target)| study_row(base, branch, epsilon, h_target, rule, profiles))
        .collect();
    let slopes = epsilons
        .iter()
        .map(|&epsilon| {
            let done: Vec<&ErrorReport> = rows
                .iter()
                .filter(|r| r.epsilon == epsilon)
                .filter_map(|r| r.report.as_ref())
                .collect();
            let lh: Vec<f64> = done.iter().map(|r| r.h.ln()).collect();
            let fit = |f: fn(&ErrorReport) -> f64| {
                fit_slope(&lh, &done.iter().map(|r| f(r).ln()).collect::<Vec<_>>())
            };
            SlopeFit {
                epsilon,
                linf: fit(|r| r.err_linf),
                wiener: fit(|r| r.err_wiener),
                velocity: fit(|r| r.err_velocity),
            }
        })
        .collect();
    ConvergenceTable { rows, slopes }
}

fn study_row(
    base: &ExperimentConfig,
    branch: Branch,
    epsilon: f64,
    h_target: f64,
    rule: StepRule,
    profiles: &InitialProfiles,
) -> ConvergenceRow {
    let mut row = ConvergenceRow {
        epsilon,
        h_target,
        params: None,
        stab_lhs: None,
        report: None,
        reference_check: None,
        skipped: None,
    };
    let mut config = *base;
    config.h_target = h_target;
    config.tau_target = rule.tau(h_target);
    config.setup = match PhysicalSetup::new(
        epsilon,
        base.setup.kappa,
        base.setup.lambda,
        base.setup.t_final,
    ) {
        Ok(s) => s,
        Err(e) => {
            row.skipped = Some(e.to_string());
            return row;
        }
    };
    let outcome = config.solve_params(branch).and_then(|p| {
        row.params = Some(p);
        let stab = check_stability(&config.setup, &p)?;
        row.stab_lhs = Some(stab.lhs);
        match branch {
            Branch::Zero => run_zero_experiment(&config, profiles).map(|e| (e.report, None)),
            _ => run_branch_experiment(&config, branch, profiles)
                .map(|e| (e.report, Some(e.envelope.self_convergence))),
        }
    });
    match outcome {
        Ok((report, check)) => {
            row.report = Some(report);
            row.reference_check = check;
        }
        Err(e) => row.skipped = Some(e.to_string()),
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::nls_initial_envelopes;

    fn setup(eps: f64, lambda: f64) -> PhysicalSetup {
        PhysicalSetup::new(eps, 1.0, lambda, 1.0).unwrap()
    }

    fn mat_vec(g: &[[Complex64; 2]; 2], v: [Complex64; 2]) -> [Complex64; 2] {
        [g[0][0] * v[0] + g[0][1] * v[1], g[1][0] * v[0] + g[1][1] * v[1]]
    }

    #[test]
    fn eigenpairs_and_determinant() {
        let s = setup(1e-3, 1.0);
        let p = FilterParams::solve(&s, Branch::Plus, 1.0, 0.9, 0.2, 0.04).unwrap();
        for mode in mode_scan(40, &s, &p).unwrap() {
            for lam in [mode.lambda_plus, mode.lambda_minus] {
                let gv = mat_vec(&mode.g, [lam, Complex64::new(1.0, 0.0)]);
                assert!((gv[0] - lam * lam).norm() < 1e-12);
                assert!((gv[1] - lam).norm() < 1e-12);
                assert!((lam.norm() - 1.0).abs() < 1e-12);
            }
            let det = mode.g[0][0] * mode.g[1][1] - mode.g[0][1] * mode.g[1][0];
            let expect = Complex64::new(1.0, mode.c1) / Complex64::new(1.0, -mode.c1);
            assert!((det - expect).norm() < 1e-13);
            assert!((det.norm() - 1.0).abs() < 1e-13);
            assert!((mode.lambda_plus * mode.lambda_minus - det).norm() < 1e-12);
        }
    }

    #[test]
    fn tuned_symmetric_case() {
        // b = 0 makes the eigenvalues ±i√((1 + ic1)/(1 − ic1))
        let s = setup(1e-2, 1.0);
        let p = FilterParams::solve(&s, Branch::Zero, 1.0, 0.9, 0.2, 0.04).unwrap();
        let mode = amplification(0, 40, &s, &p).unwrap();
        let b = 2.0 * p.alpha.phi1() - mode.c2;
        let ratio = (Complex64::new(1.0, mode.c1) / Complex64::new(1.0, -mode.c1)).sqrt();
        if b.abs() < 1e-3 {
            assert!((mode.lambda_plus - Complex64::i() * ratio).norm() < 1e-2);
        }
        assert_eq!(mode.c1, 0.0);
        assert!((mode.lambda_plus.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn condition_number_closed_form() {
        let s = setup(1e-3, 1.0);
        let p = FilterParams::solve(&s, Branch::Minus, 1.0, 0.9, 0.1, 0.01).unwrap();
        for mode in mode_scan(80, &s, &p).unwrap() {
            let b = 2.0 * p.alpha.phi1() - mode.c2;
            let q = b.abs() / (2.0 * (1.0 + mode.c1 * mode.c1).sqrt());
            let closed = ((1.0 + q) / (1.0 - q)).sqrt();
            assert!((mode.cond_p - closed).abs() < 1e-10 * closed);
            assert!(mode.cond_p <= 2.0 / (2.0 * (1.0 - p.r)).sqrt() + 1e-9);
        }
    }

    #[test]
    fn unstable_mode_has_growing_eigenvalue() {
        let s = setup(1.0, 1.0);
        let p = FilterParams::from_steps(&s, Branch::Zero, 0.5, 0.1, 0.9).unwrap();
        let mode = amplification(20, 40, &s, &p).unwrap();
        assert!(mode.lambda_plus.norm().max(mode.lambda_minus.norm()) > 1.0 + 1e-6);
    }

    fn envelope(s: &PhysicalSetup, p: &FilterParams, profile: impl Fn(f64) -> Complex64) -> EnvelopeTrajectory {
        let g = PeriodicGrid::new(-4.0, 8.0, 256).unwrap();
        let a0 = GridField::from_fn(g, 0.0, profile);
        envelope_trajectory(p.branch, s, p.tau, 3, &a0, EnvelopeOptions::default()).unwrap()
    }

    #[test]
    fn defect_of_zero_envelope_vanishes() {
        let s = setup(1e-2, 1.0);
        let p = FilterParams::solve(&s, Branch::Plus, 1.0, 0.9, 0.2, 0.04).unwrap();
        let env = envelope(&s, &p, |_| Complex64::new(0.0, 0.0));
        assert_eq!(defect(&env, 1, &s, &p).unwrap().max_norm(), 0.0);
    }

    #[test]
    fn defect_is_linear_without_nonlinearity() {
        let s = setup(1e-2, 0.0);
        let p = FilterParams::solve(&s, Branch::Plus, 1.0, 0.9, 0.2, 0.04).unwrap();
        let fa = |x: f64| Complex64::new((-x * x).exp(), 0.0);
        let fb = |x: f64| Complex64::new(0.0, x * (-2.0 * x * x).exp());
        let da = defect(&envelope(&s, &p, fa), 1, &s, &p).unwrap();
        let db = defect(&envelope(&s, &p, fb), 1, &s, &p).unwrap();
        let dab = defect(&envelope(&s, &p, move |x| fa(x) + fb(x)), 1, &s, &p).unwrap();
        for j in 0..dab.values.len() {
            assert!((dab.values[j] - da.values[j] - db.values[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn defect_rejects_wrong_branch() {
        let s = setup(1e-2, 1.0);
        let p = FilterParams::solve(&s, Branch::Plus, 1.0, 0.9, 0.2, 0.04).unwrap();
        let env = envelope(&s, &p, |_| Complex64::new(0.0, 0.0));
        assert!(defect(&env, 1, &s, &p.for_branch(&s, Branch::Minus)).is_err());
    }

    #[test]
    fn error_report_examples() {
        let s = setup(1e-2, 1.0);
        let p = FilterParams::solve(&s, Branch::Plus, 1.0, 0.9, 0.2, 0.04).unwrap();
        let m = (8.0 / p.h).round() as usize;
        let g = PeriodicGrid::with_spacing(-0.5 * m as f64 * p.h, p.h, m).unwrap();
        let (a0, _) = nls_initial_envelopes(&InitialProfiles::gaussian(), s.omega, g);
        let env = envelope_trajectory(Branch::Plus, &s, p.tau, 2, &a0, EnvelopeOptions::default()).unwrap();
        let exact = dominant_term_at_level(env.level(2).unwrap(), 2, &p, &s);
        let vel = GridField {
            values: exact.values.iter().map(|z| z * Complex64::new(0.0, -s.omega) / (s.epsilon * s.epsilon)).collect(),
            ..exact.clone()
        };
        let rep = error_report(&exact, Some(&vel), &env, 2, &s, &p).unwrap();
        assert!(rep.err_linf == 0.0 && rep.err_wiener == 0.0 && rep.err_velocity < 1e-14);
        let mut bumped = exact.clone();
        bumped.values[3] += 1e-3;
        let rep = error_report(&bumped, None, &env, 2, &s, &p).unwrap();
        assert!((rep.err_linf - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let xs: Vec<f64> = [0.4f64, 0.2, 0.1, 0.05].iter().map(|h| h.ln()).collect();
        let ys: Vec<f64> = [0.4f64, 0.2, 0.1, 0.05].iter().map(|h| (3.0 * h * h).ln()).collect();
        assert!((fit_slope(&xs, &ys) - 2.0).abs() < 1e-12);
        assert!(fit_slope(&xs[..1], &ys[..1]).is_nan());
    }

    #[test]
    fn empty_study_is_empty() {
        let base = ExperimentConfig::standard(1e-2, 0.2, 0.04).unwrap();
        let rule = StepRule { coeff: 1.0, power: 2.0 };
        let t = convergence_study(&base, Branch::Plus, &[1e-2], &[], rule, &InitialProfiles::gaussian());
        assert!(t.rows.is_empty());
        assert!(t.slopes[0].linf.is_nan());
    }

    #[test]
    fn zero_profiles_give_zero_errors() {
        let base = ExperimentConfig::standard(1e-2, 0.4, 0.16).unwrap();
        let run = run_branch_experiment(&base, Branch::Plus, &InitialProfiles::zero()).unwrap();
        assert_eq!(run.report.err_linf, 0.0);
        assert!(run.trajectory.max_norms.iter().all(|&n| n == 0.0));
    }
}
