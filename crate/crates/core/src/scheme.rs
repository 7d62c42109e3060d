//! The filtered two-step scheme in co-moving coordinates, its startup and
//! velocity recovery, and the recombination of the two branches.
//!
//! The scheme is stored multiplied through by `ε²`:
//!
//! ```text
//! c_tt (w^{n+1} − 2φ1 w^n + w^{n−1})
//!   − c_mix [(w^{n+1}_{j+1} − w^{n−1}_{j+1}) − (w^{n+1}_{j−1} − w^{n−1}_{j−1})]
//!   + c_xx (w^n_{j+1} − 2φ2 w^n_j + w^n_{j−1}) + c_pot w^n + c_nl |w^n|² w^n = 0
//! ```
//!
//! The mixed term couples neighbours at the new level, so each step solves a
//! circulant system by FFT.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{GridField, PeriodicGrid, Spectral, TrigInterpolant, WaveField};
use crate::params::{check_stability, Branch, FilterParams, PhysicalSetup};
use crate::reference::{carrier, nls_strang_step};

#[derive(Debug, Clone)]
pub struct SchemeCoefficients {
    pub c_tt: f64,
    pub c_mix: f64,
    pub c_xx: f64,
    pub c_pot: f64,
    pub c_nl: f64,
    pub phi1a: f64,
    pub phi2b: f64,
    /// `D_k = c_tt − 2i c_mix sin(kh)`, the factor of `ŵ^{n+1}_k`, in FFT order.
    pub divisors: Vec<Complex64>,
    pub grid: PeriodicGrid,
    spectral: Spectral,
}

/// Builds the scheme weights for `params` on `grid`.
///
/// With `strict`, parameters violating the stability condition are rejected.
pub fn build_coefficients(
    setup: &PhysicalSetup,
    params: &FilterParams,
    grid: PeriodicGrid,
    strict: bool,
) -> Result<SchemeCoefficients> {
    if ((grid.h() - params.h) / params.h).abs() > 1e-12 {
        return Err(Error::GridMismatch(format!(
            "grid spacing {} differs from h = {}",
            grid.h(),
            params.h
        )));
    }
    if strict {
        let report = check_stability(setup, params)?;
        if !report.satisfied {
            return Err(Error::UnstableParameters {
                lhs: report.lhs,
                r: report.r,
            });
        }
    }
    let eps = setup.epsilon;
    let eps2 = eps * eps;
    let (tau, h, mu) = (params.tau, params.h, params.mu);
    let tanc_b = params.beta.tanc()?;
    let c_tt = eps2 * eps2 / (tau * tau * params.alpha.psi1());
    let c_mix = 2.0 * eps2 * eps * mu / (4.0 * params.alpha.sinc() * params.beta.sinc() * tau * h);
    let c_xx = eps2 * (mu * mu - 1.0) / (h * h * params.beta.psi2()?);
    let c_nl = eps2 * setup.lambda / (tanc_b * tanc_b);

    let divisors: Vec<Complex64> = (0..grid.len())
        .map(|idx| Complex64::new(c_tt, -2.0 * c_mix * (grid.wavenumber(idx) * h).sin()))
        .collect();
    if let Some(idx) = divisors
        .iter()
        .position(|d| d.norm() == 0.0 || !d.re.is_finite() || !d.im.is_finite())
    {
        return Err(Error::SingularMode {
            mode: grid.mode(idx),
        });
    }
    Ok(SchemeCoefficients {
        c_tt,
        c_mix,
        c_xx,
        c_pot: 1.0,
        c_nl,
        phi1a: params.alpha.phi1(),
        phi2b: params.beta.phi2()?,
        divisors,
        grid,
        spectral: Spectral::new(grid.len()),
    })
}

impl SchemeCoefficients {
    /// Everything in the scheme except the `c_tt w^{n+1}` and mixed
    /// `w^{n+1}` contributions, i.e. the explicit right-hand side.
    fn explicit_part(&self, prev: &[Complex64], curr: &[Complex64], mixed_sign: f64) -> Vec<Complex64> {
        let m = curr.len();
        (0..m)
            .map(|j| {
                let (jp, jm) = ((j + 1) % m, (j + m - 1) % m);
                let w = curr[j];
                let lap = curr[jp] - 2.0 * self.phi2b * w + curr[jm];
                self.c_tt * (2.0 * self.phi1a * w - prev[j])
                    - mixed_sign * self.c_mix * (prev[jp] - prev[jm])
                    - self.c_xx * lap
                    - self.c_pot * w
                    - self.c_nl * w.norm_sqr() * w
            })
            .collect()
    }

    fn solve_circulant(&self, rhs: &mut [Complex64], conjugate: bool) {
        self.spectral.forward(rhs);
        for (z, d) in rhs.iter_mut().zip(&self.divisors) {
            *z /= if conjugate { d.conj() } else { *d };
        }
        self.spectral.inverse(rhs);
    }

    /// `w^{n+1}` from `(w^{n−1}, w^n)`.
    pub fn next(&self, prev: &[Complex64], curr: &[Complex64]) -> Vec<Complex64> {
        let mut rhs = self.explicit_part(prev, curr, 1.0);
        self.solve_circulant(&mut rhs, false);
        rhs
    }

    /// `w^{n−1}` from `(w^n, w^{n+1})`: the scheme is symmetric in time up to
    /// the sign of the mixed term.
    pub fn previous(&self, curr: &[Complex64], next: &[Complex64]) -> Vec<Complex64> {
        let mut rhs = self.explicit_part(next, curr, -1.0);
        self.solve_circulant(&mut rhs, true);
        rhs
    }

    /// Pointwise residual of the scheme and the largest term magnitude.
    pub fn residual(
        &self,
        prev: &[Complex64],
        curr: &[Complex64],
        next: &[Complex64],
    ) -> (Vec<Complex64>, f64) {
        let m = curr.len();
        let mut scale = 0.0f64;
        let res = (0..m)
            .map(|j| {
                let (jp, jm) = ((j + 1) % m, (j + m - 1) % m);
                let w = curr[j];
                let terms = [
                    self.c_tt * (next[j] - 2.0 * self.phi1a * w + prev[j]),
                    -self.c_mix * ((next[jp] - prev[jp]) - (next[jm] - prev[jm])),
                    self.c_xx * (curr[jp] - 2.0 * self.phi2b * w + curr[jm]),
                    self.c_pot * w,
                    self.c_nl * w.norm_sqr() * w,
                ];
                for t in &terms {
                    scale = scale.max(t.norm());
                }
                terms.iter().sum()
            })
            .collect();
        (res, scale)
    }
}

/// Two consecutive levels of one branch.
#[derive(Debug, Clone)]
pub struct BranchState {
    pub branch: Branch,
    pub mu: f64,
    pub prev: WaveField,
    pub curr: WaveField,
    pub n: usize,
}

impl BranchState {
    pub fn new(params: &FilterParams, w0: WaveField, w1: WaveField) -> Result<Self> {
        if !w0.grid.same_as(&w1.grid) {
            return Err(Error::GridMismatch("startup levels on different grids".into()));
        }
        Ok(BranchState {
            branch: params.branch,
            mu: params.mu,
            prev: w0,
            curr: w1,
            n: 1,
        })
    }

    /// Advances one step in place and returns the new level.
    pub fn advance(&mut self, coeffs: &SchemeCoefficients) -> Result<&WaveField> {
        let next = step(self, coeffs)?;
        self.prev = std::mem::replace(&mut self.curr, next);
        self.n += 1;
        Ok(&self.curr)
    }
}

/// The level `w^{n+1}` following `state`.
pub fn step(state: &BranchState, coeffs: &SchemeCoefficients) -> Result<WaveField> {
    if !state.curr.grid.same_as(&coeffs.grid) {
        return Err(Error::GridMismatch("state and coefficients on different grids".into()));
    }
    let dt = state.curr.time - state.prev.time;
    let values = coeffs.next(&state.prev.values, &state.curr.values);
    let out = GridField::new(coeffs.grid, values, state.curr.time + dt)?;
    if !out.is_finite() {
        return Err(Error::NonFinite { step: state.n + 1 });
    }
    Ok(out)
}

/// `(w⁰, w¹)` for the `±` branches: the envelope is carried over one step
/// `τ` by a single Strang step and modulated by the carrier and `e^{iα}`.
pub fn startup(
    a0: &GridField,
    setup: &PhysicalSetup,
    params: &FilterParams,
) -> Result<(WaveField, WaveField)> {
    if params.branch == Branch::Zero {
        return Err(Error::InvalidInput(
            "the mu = 0 mode starts from the original data, see startup_from_velocity".into(),
        ));
    }
    let a1 = nls_strang_step(a0, params.tau, params.branch, setup);
    let car = carrier(setup, &a0.grid);
    let rot = Complex64::from_polar(1.0, params.alpha.offset());
    let w0 = GridField {
        grid: a0.grid,
        values: a0.values.iter().zip(&car).map(|(a, c)| a * c).collect(),
        time: 0.0,
    };
    let w1 = GridField {
        grid: a0.grid,
        values: a1.values.iter().zip(&car).map(|(a, c)| a * c * rot).collect(),
        time: params.tau,
    };
    Ok((w0, w1))
}

/// `(w⁰, w¹)` from a level and its velocity: the scheme at `n = 0` fixes
/// `w¹ + w⁻¹` and the velocity formula fixes `w¹ − w⁻¹`.
pub fn startup_from_velocity(
    u0: &WaveField,
    v0: &WaveField,
    setup: &PhysicalSetup,
    params: &FilterParams,
    coeffs: &SchemeCoefficients,
) -> Result<(WaveField, WaveField)> {
    if !u0.grid.same_as(&v0.grid) || !u0.grid.same_as(&coeffs.grid) {
        return Err(Error::GridMismatch("startup data on different grids".into()));
    }
    if coeffs.c_mix != 0.0 {
        return Err(Error::InvalidInput(
            "velocity startup needs a scheme without mixed term (mu = 0)".into(),
        ));
    }
    let zero = vec![Complex64::new(0.0, 0.0); u0.grid.len()];
    // explicit part with w^{n−1} = 0 gives c_tt·(w¹ + w⁻¹)
    let sum = coeffs.explicit_part(&zero, &u0.values, 1.0);
    let diff_scale = 2.0 * params.tau * params.alpha.sinc() / velocity_prefactor(setup, params);
    let values = sum
        .iter()
        .zip(&v0.values)
        .map(|(s, v)| 0.5 * (s / coeffs.c_tt + diff_scale * v))
        .collect();
    Ok((
        GridField { time: 0.0, ..u0.clone() },
        GridField::new(u0.grid, values, params.tau)?,
    ))
}

/// `−ω/(κμ − ω)` with the branch-signed `ω`.
pub fn velocity_prefactor(setup: &PhysicalSetup, params: &FilterParams) -> f64 {
    let omega = setup.omega_for(params.branch);
    -omega / (setup.kappa * params.mu - omega)
}

/// `v^n = −ω/(κμ − ω) · (w^{n+1} − w^{n−1})/(2τ sinc α)`.
pub fn velocity(
    w_prev: &WaveField,
    w_next: &WaveField,
    setup: &PhysicalSetup,
    params: &FilterParams,
) -> Result<WaveField> {
    if !w_prev.grid.same_as(&w_next.grid) {
        return Err(Error::GridMismatch("velocity levels on different grids".into()));
    }
    let scale = velocity_prefactor(setup, params) / (2.0 * params.tau * params.alpha.sinc());
    Ok(GridField {
        grid: w_prev.grid,
        values: w_next
            .values
            .iter()
            .zip(&w_prev.values)
            .map(|(a, b)| (a - b) * scale)
            .collect(),
        time: 0.5 * (w_prev.time + w_next.time),
    })
}

/// Levels `w^{−1} … w^{N+1}` of one branch and velocities `v^0 … v^N`.
///
/// `w^{−1}` and `w^{N+1}` are auxiliary levels used only by the centred
/// velocity formula.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: FilterParams,
    pub levels: Vec<WaveField>,
    pub velocities: Vec<WaveField>,
    pub max_norms: Vec<f64>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.velocities.len().saturating_sub(1)
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.levels[0].grid
    }

    /// `w^n` for `−1 ≤ n ≤ N + 1`.
    pub fn level(&self, n: i64) -> Option<&WaveField> {
        if n < -1 {
            return None;
        }
        self.levels.get((n + 1) as usize)
    }

    /// `v^n` for `0 ≤ n ≤ N`.
    pub fn velocity(&self, n: usize) -> Option<&WaveField> {
        self.velocities.get(n)
    }
}

/// Runs `n_steps` steps from the startup pair.
pub fn run_branch(
    setup: &PhysicalSetup,
    params: &FilterParams,
    coeffs: &SchemeCoefficients,
    w0: WaveField,
    w1: WaveField,
    n_steps: usize,
) -> Result<Trajectory> {
    let back = coeffs.previous(&w0.values, &w1.values);
    let w_minus = GridField::new(w0.grid, back, w0.time - params.tau)?;
    let mut levels = Vec::with_capacity(n_steps + 3);
    levels.push(w_minus);
    let mut state = BranchState::new(params, w0, w1)?;
    levels.push(state.prev.clone());
    levels.push(state.curr.clone());
    for _ in 1..=n_steps {
        state.advance(coeffs)?;
        levels.push(state.curr.clone());
    }
    let velocities = (0..=n_steps)
        .map(|n| velocity(&levels[n], &levels[n + 2], setup, params))
        .collect::<Result<Vec<_>>>()?;
    let max_norms = levels.iter().map(GridField::max_norm).collect();
    Ok(Trajectory {
        params: *params,
        levels,
        velocities,
        max_norms,
    })
}

/// Time from which the two packets are treated as separated: `εL/(4|c_g|)`.
pub fn separation_time(setup: &PhysicalSetup, grid: &PeriodicGrid) -> f64 {
    setup.epsilon * grid.length() / (4.0 * setup.c_g.abs())
}

fn branch_value(
    interp: &TrigInterpolant,
    field: &WaveField,
    xi: f64,
    separated: bool,
) -> Complex64 {
    let grid = field.grid;
    if !separated {
        return interp.eval(xi);
    }
    let s = (xi - grid.x_min()) / grid.h();
    if s < -1e-9 || s >= grid.len() as f64 - 1e-9 {
        return Complex64::new(0.0, 0.0);
    }
    let j = s.round();
    if (s - j).abs() <= 1e-9 {
        return field.values[(j as usize).min(grid.len() - 1)];
    }
    interp.eval(xi)
}

/// Physical `u` and `∂_t u` at `t_n` and points `xs` from the two branches.
///
/// Before separation both periodic branch fields are interpolated at
/// `x ∓ c_g t_n/ε`; afterwards each branch contributes only over its own
/// translated cell, taking node values exactly where `x` hits a node.
pub fn combine(
    plus: &Trajectory,
    minus: &Trajectory,
    n: usize,
    setup: &PhysicalSetup,
    xs: &[f64],
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let mut u = vec![Complex64::new(0.0, 0.0); xs.len()];
    let mut v = u.clone();
    for traj in [plus, minus] {
        let w = traj
            .level(n as i64)
            .ok_or_else(|| Error::InvalidInput(format!("level {n} not in trajectory")))?;
        let vel = traj
            .velocity(n)
            .ok_or_else(|| Error::InvalidInput(format!("velocity {n} not in trajectory")))?;
        let t = n as f64 * traj.params.tau;
        let separated = n > 0 && t >= separation_time(setup, &w.grid);
        let shift = traj.params.mu * t / setup.epsilon;
        let (iw, iv) = (TrigInterpolant::new(w), TrigInterpolant::new(vel));
        for (k, &x) in xs.iter().enumerate() {
            let xi = x - shift;
            let xi = if separated { xi } else { w.grid.wrap(xi) };
            u[k] += branch_value(&iw, w, xi, separated);
            v[k] += branch_value(&iv, vel, xi, separated);
        }
    }
    Ok((u, v))
}
