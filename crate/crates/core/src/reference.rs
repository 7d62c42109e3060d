//! Reference solutions: the envelope Schrödinger equations solved by Strang
//! splitting with Fourier collocation, the dominant oscillatory term built
//! from them, and a resolved Klein–Gordon solver for moderate `ε`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{EnvelopeField, GridField, PeriodicGrid, Spectral, TrigInterpolant, WaveField};
use crate::filters::Angle;
use crate::params::{Branch, FilterParams, PhysicalSetup};

/// Initial profiles `u(0,x) = a0(x) e^{iκx/ε}`, `∂_t u(0,x) = b0(x) e^{iκx/ε}/ε²`.
pub struct InitialProfiles {
    pub a0: Box<dyn Fn(f64) -> Complex64 + Send + Sync>,
    pub b0: Box<dyn Fn(f64) -> Complex64 + Send + Sync>,
}

impl std::fmt::Debug for InitialProfiles {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("InitialProfiles { .. }")
    }
}

impl InitialProfiles {
    pub fn new(
        a0: impl Fn(f64) -> Complex64 + Send + Sync + 'static,
        b0: impl Fn(f64) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        InitialProfiles {
            a0: Box::new(a0),
            b0: Box::new(b0),
        }
    }

    /// `a0 = e^{−x²}`, `b0 = i e^{−x²}`.
    pub fn gaussian() -> Self {
        InitialProfiles::new(
            |x| Complex64::new((-x * x).exp(), 0.0),
            |x| Complex64::new(0.0, (-x * x).exp()),
        )
    }

    pub fn zero() -> Self {
        InitialProfiles::new(|_| Complex64::new(0.0, 0.0), |_| Complex64::new(0.0, 0.0))
    }

    /// Largest `|a0|`, `|b0|` at the cell boundary; a check that the profiles
    /// effectively fit in the periodic cell.
    pub fn boundary_tail(&self, grid: &PeriodicGrid) -> f64 {
        let (xl, xr) = (grid.x_min(), grid.x_min() + grid.length());
        [xl, xr]
            .iter()
            .map(|&x| (self.a0)(x).norm().max((self.b0)(x).norm()))
            .fold(0.0, f64::max)
    }
}

/// `a±(0) = (a0 ± i b0/ω)/2` sampled on `grid`.
pub fn nls_initial_envelopes(
    profiles: &InitialProfiles,
    omega: f64,
    grid: PeriodicGrid,
) -> (EnvelopeField, EnvelopeField) {
    let i = Complex64::i();
    let plus = GridField::from_fn(grid, 0.0, |x| {
        0.5 * ((profiles.a0)(x) + i * (profiles.b0)(x) / omega)
    });
    let minus = GridField::from_fn(grid, 0.0, |x| {
        0.5 * ((profiles.a0)(x) - i * (profiles.b0)(x) / omega)
    });
    (plus, minus)
}

/// Strang splitting for `±2iω ∂_t a = −(1 − c_g²) ∂²a + λ|a|²a` on a fixed
/// grid: exact pointwise phase rotation for the nonlinear part and exact
/// Fourier multipliers for the dispersive part.
#[derive(Debug, Clone)]
pub struct NlsStepper {
    spectral: Spectral,
    grid: PeriodicGrid,
    omega: f64,
    dispersion: f64,
    lambda: f64,
}

impl NlsStepper {
    pub fn new(grid: PeriodicGrid, branch: Branch, setup: &PhysicalSetup) -> Self {
        NlsStepper {
            spectral: Spectral::new(grid.len()),
            grid,
            omega: setup.omega_for(branch),
            dispersion: 1.0 - setup.c_g * setup.c_g,
            lambda: setup.lambda,
        }
    }

    fn nonlinear(&self, values: &mut [Complex64], dt: f64) {
        if self.lambda == 0.0 {
            return;
        }
        let rate = -self.lambda * dt / (2.0 * self.omega);
        for a in values.iter_mut() {
            *a *= Complex64::from_polar(1.0, rate * a.norm_sqr());
        }
    }

    fn linear(&self, values: &mut [Complex64], dt: f64) {
        let grid = self.grid;
        let rate = -self.dispersion * dt / (2.0 * self.omega);
        self.spectral.apply_multiplier(values, |idx| {
            let k = grid.wavenumber(idx);
            Complex64::from_polar(1.0, rate * k * k)
        });
    }

    /// One Strang step of size `dt` (negative `dt` steps backwards).
    pub fn step(&self, values: &mut [Complex64], dt: f64) {
        self.nonlinear(values, 0.5 * dt);
        self.linear(values, dt);
        self.nonlinear(values, 0.5 * dt);
    }
}

pub fn nls_strang_step(
    a: &EnvelopeField,
    dt: f64,
    branch: Branch,
    setup: &PhysicalSetup,
) -> EnvelopeField {
    let mut out = a.clone();
    NlsStepper::new(a.grid, branch, setup).step(&mut out.values, dt);
    out.time = a.time + dt;
    out
}

/// Envelope snapshots at `t_n = nτ` for `n = −1, 0, …, n_max + 1`.
#[derive(Debug, Clone)]
pub struct EnvelopeTrajectory {
    pub branch: Branch,
    pub tau: f64,
    pub grid: PeriodicGrid,
    snapshots: Vec<EnvelopeField>,
    /// Internal Strang steps per `τ`.
    pub substeps: usize,
    /// Max-norm difference to the run with half the internal step.
    pub self_convergence: f64,
}

impl EnvelopeTrajectory {
    /// Snapshot at `t_n`, `n ≥ −1`.
    pub fn level(&self, n: i64) -> Option<&EnvelopeField> {
        if n < -1 {
            return None;
        }
        self.snapshots.get((n + 1) as usize)
    }

    pub fn last_level(&self) -> i64 {
        self.snapshots.len() as i64 - 2
    }

    pub fn snapshots(&self) -> &[EnvelopeField] {
        &self.snapshots
    }
}

/// Options for [`envelope_trajectory`].
#[derive(Debug, Clone, Copy)]
pub struct EnvelopeOptions {
    /// Upper bound on the internal Strang step.
    pub max_dt: f64,
    /// Target for the self-convergence check (max norm).
    pub tolerance: f64,
    /// Refinement stops after this many halvings even if the target is missed.
    pub max_refinements: usize,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions {
            max_dt: 1e-3,
            tolerance: 1e-8,
            max_refinements: 6,
        }
    }
}

fn integrate_levels(
    a0: &EnvelopeField,
    stepper: &NlsStepper,
    tau: f64,
    n_max: usize,
    substeps: usize,
) -> Result<Vec<EnvelopeField>> {
    let dt = tau / substeps as f64;
    let mut back = a0.values.clone();
    for _ in 0..substeps {
        stepper.step(&mut back, -dt);
    }
    let mut snapshots = Vec::with_capacity(n_max + 3);
    snapshots.push(GridField::new(a0.grid, back, -tau)?);
    snapshots.push(GridField { time: 0.0, ..a0.clone() });
    let mut cur = a0.values.clone();
    for n in 1..=n_max + 1 {
        for _ in 0..substeps {
            stepper.step(&mut cur, dt);
        }
        let snap = GridField::new(a0.grid, cur.clone(), n as f64 * tau)?;
        if !snap.is_finite() {
            return Err(Error::NonFinite { step: n });
        }
        snapshots.push(snap);
    }
    Ok(snapshots)
}

fn max_deviation(a: &[EnvelopeField], b: &[EnvelopeField]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.values.iter().zip(&y.values).map(|(p, q)| (p - q).norm()))
        .fold(0.0, f64::max)
}

/// Dense envelope trajectory covering `[−τ, (n_max + 1)τ]`, refined until two
/// successive internal step sizes agree to `options.tolerance`.
pub fn envelope_trajectory(
    branch: Branch,
    setup: &PhysicalSetup,
    tau: f64,
    n_max: usize,
    a0: &EnvelopeField,
    options: EnvelopeOptions,
) -> Result<EnvelopeTrajectory> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidInput("tau must be positive".into()));
    }
    let stepper = NlsStepper::new(a0.grid, branch, setup);
    let mut substeps = (tau / options.max_dt).ceil().max(1.0) as usize;
    let mut coarse = integrate_levels(a0, &stepper, tau, n_max, substeps)?;
    let mut deviation = f64::INFINITY;
    for _ in 0..=options.max_refinements {
        let fine = integrate_levels(a0, &stepper, tau, n_max, 2 * substeps)?;
        deviation = max_deviation(&coarse, &fine);
        coarse = fine;
        substeps *= 2;
        if deviation <= options.tolerance {
            break;
        }
    }
    Ok(EnvelopeTrajectory {
        branch,
        tau,
        grid: a0.grid,
        snapshots: coarse,
        substeps,
        self_convergence: deviation,
    })
}

/// Carrier `e^{iκx/ε}` at the nodes of `grid`.
pub fn carrier(setup: &PhysicalSetup, grid: &PeriodicGrid) -> Vec<Complex64> {
    grid.nodes()
        .map(|x| Complex64::from_polar(1.0, setup.kappa * x / setup.epsilon))
        .collect()
}

/// `A±(t, ξ) = a±(t, ξ) e^{iκξ/ε} e^{±i(κc_g − ω)t/ε²}` on the grid of `a`.
pub fn dominant_term(
    a: &EnvelopeField,
    t: f64,
    branch: Branch,
    setup: &PhysicalSetup,
) -> WaveField {
    let phase = Angle::new(setup.phase_rate(branch) * t / (setup.epsilon * setup.epsilon));
    with_phase(a, &carrier(setup, &a.grid), phase.offset(), t)
}

/// `A±(t_n, ·)` with the time phase taken as `n α` exactly.
pub fn dominant_term_at_level(
    a: &EnvelopeField,
    n: i64,
    params: &FilterParams,
    setup: &PhysicalSetup,
) -> WaveField {
    let phase = n as f64 * params.alpha.offset();
    with_phase(a, &carrier(setup, &a.grid), phase, n as f64 * params.tau)
}

fn with_phase(a: &EnvelopeField, carrier: &[Complex64], phase: f64, t: f64) -> WaveField {
    let rot = Complex64::from_polar(1.0, phase);
    GridField {
        grid: a.grid,
        values: a
            .values
            .iter()
            .zip(carrier)
            .map(|(v, c)| v * c * rot)
            .collect(),
        time: t,
    }
}

/// Resamples a smooth field onto another grid by trigonometric interpolation.
pub fn resample(field: &GridField, target: PeriodicGrid) -> GridField {
    if field.grid.same_as(&target) {
        return field.clone();
    }
    let interp = TrigInterpolant::new(field);
    GridField::from_fn(target, field.time, |x| interp.eval(x))
}

/// `u_app(t_n, x) = Σ± a±(t_n, x ∓ c_g t_n/ε) e^{iκ(x ∓ c_g t_n/ε)/ε} e^{±inα}`.
pub fn u_app(
    plus: &EnvelopeTrajectory,
    minus: &EnvelopeTrajectory,
    n: i64,
    params: &FilterParams,
    setup: &PhysicalSetup,
    xs: &[f64],
) -> Result<Vec<Complex64>> {
    let mut out = vec![Complex64::new(0.0, 0.0); xs.len()];
    for traj in [plus, minus] {
        let a = traj
            .level(n)
            .ok_or_else(|| Error::InvalidInput(format!("level {n} outside trajectory")))?;
        let interp = TrigInterpolant::new(a);
        let alpha = params.for_branch(setup, traj.branch).alpha;
        let t = n as f64 * params.tau;
        let shift = setup.c_g_for(traj.branch) * t / setup.epsilon;
        let rot = Complex64::from_polar(1.0, n as f64 * alpha.offset());
        for (o, &x) in out.iter_mut().zip(xs) {
            let xi = x - shift;
            *o += interp.eval(xi) * Complex64::from_polar(1.0, setup.kappa * xi / setup.epsilon) * rot;
        }
    }
    Ok(out)
}

/// Resolved solution of the Klein–Gordon equation by Strang splitting of the
/// first-order system in `(u, ε² ∂_t u)`.
pub fn kg_reference(
    setup: &PhysicalSetup,
    u0: &WaveField,
    ut0: &WaveField,
    dt_ref: f64,
    t_end: f64,
) -> Result<(WaveField, WaveField)> {
    if !u0.grid.same_as(&ut0.grid) {
        return Err(Error::GridMismatch("u0 and ut0 on different grids".into()));
    }
    if !(dt_ref.is_finite() && dt_ref > 0.0) || t_end < 0.0 {
        return Err(Error::InvalidInput("dt_ref must be positive, t_end non-negative".into()));
    }
    let grid = u0.grid;
    let eps2 = setup.epsilon * setup.epsilon;
    let steps = (t_end / dt_ref).ceil() as usize;
    let dt = if steps == 0 { 0.0 } else { t_end / steps as f64 };
    let spectral = Spectral::new(grid.len());

    // Per-mode rotation of (û, p̂) with Ω_k = √(k² + ε⁻²)/ε.
    let rotations: Vec<[f64; 4]> = (0..grid.len())
        .map(|idx| {
            let k = grid.wavenumber(idx);
            let freq = (k * k + 1.0 / eps2).sqrt() / setup.epsilon;
            let (s, c) = (freq * dt).sin_cos();
            [c, s / (eps2 * freq), -eps2 * freq * s, c]
        })
        .collect();

    let mut u = u0.values.clone();
    let mut p: Vec<Complex64> = ut0.values.iter().map(|v| v * eps2).collect();
    let kick = |u: &[Complex64], p: &mut [Complex64], h: f64| {
        if setup.lambda != 0.0 {
            for (pj, uj) in p.iter_mut().zip(u) {
                *pj -= setup.lambda * uj.norm_sqr() * uj * h;
            }
        }
    };
    for step in 0..steps {
        kick(&u, &mut p, 0.5 * dt);
        spectral.forward(&mut u);
        spectral.forward(&mut p);
        for idx in 0..grid.len() {
            let [a, b, c, d] = rotations[idx];
            let (uh, ph) = (u[idx], p[idx]);
            u[idx] = a * uh + b * ph;
            p[idx] = c * uh + d * ph;
        }
        spectral.inverse(&mut u);
        spectral.inverse(&mut p);
        kick(&u, &mut p, 0.5 * dt);
        if u.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { step: step + 1 });
        }
    }
    let ut = p.iter().map(|v| v / eps2).collect();
    Ok((
        GridField::new(grid, u, t_end)?,
        GridField::new(grid, ut, t_end)?,
    ))
}
