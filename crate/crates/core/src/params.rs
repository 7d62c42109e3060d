//! Problem constants, discretisation parameters, and the consistency and
//! stability conditions tying them together.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::filters::{Angle, POLE_GUARD};
use crate::roots::newton_bisect;

/// Which co-moving frame a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `μ = c_g`, right-moving packet.
    Plus,
    /// `μ = −c_g`, obtained by flipping the signs of `ω` and `c_g`.
    Minus,
    /// `μ = 0`: the plain filtered leapfrog method for moderate `ε`.
    Zero,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
            Branch::Zero => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Plus => "plus",
            Branch::Minus => "minus",
            Branch::Zero => "zero",
        }
    }
}

/// `ω = √(1 + κ²)` and `c_g = κ/ω`.
pub fn derive_dispersion(kappa: f64) -> Result<(f64, f64)> {
    if kappa == 0.0 || !kappa.is_finite() {
        return Err(Error::ZeroWaveVector);
    }
    let omega = kappa.hypot(1.0);
    Ok((omega, kappa / omega))
}

/// Constants of the continuous problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalSetup {
    pub epsilon: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub t_final: f64,
    pub omega: f64,
    pub c_g: f64,
}

impl PhysicalSetup {
    pub fn new(epsilon: f64, kappa: f64, lambda: f64, t_final: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidInput("lambda must be finite".into()));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        let (omega, c_g) = derive_dispersion(kappa)?;
        Ok(PhysicalSetup {
            epsilon,
            kappa,
            lambda,
            t_final,
            omega,
            c_g,
        })
    }

    /// `ω` with the branch sign convention (`−ω` on the minus branch).
    pub fn omega_for(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Minus => -self.omega,
            _ => self.omega,
        }
    }

    /// `c_g` with the branch sign convention.
    pub fn c_g_for(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Minus => -self.c_g,
            _ => self.c_g,
        }
    }

    /// `κ c_g − ω` for the branch; equals `∓1/ω`.
    pub fn phase_rate(&self, branch: Branch) -> f64 {
        self.kappa * self.c_g_for(branch) - self.omega_for(branch)
    }
}

/// Discretisation parameters of one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub tau: f64,
    pub h: f64,
    pub alpha: Angle,
    pub beta: Angle,
    pub rho: f64,
    pub r: f64,
    pub mu: f64,
    pub branch: Branch,
}

impl FilterParams {
    /// Solves the consistency condition for `β` (hence `h`) and `α` (hence
    /// `τ`), picking the roots nearest the targets.
    pub fn solve(
        setup: &PhysicalSetup,
        branch: Branch,
        rho: f64,
        r: f64,
        h_target: f64,
        tau_target: f64,
    ) -> Result<Self> {
        let (beta, h) = solve_beta(setup.epsilon, rho, setup.kappa, h_target)?;
        let (alpha, tau) = solve_alpha(setup, rho, tau_target)?;
        let plus = FilterParams {
            tau,
            h,
            alpha,
            beta,
            rho,
            r,
            mu: setup.c_g,
            branch: Branch::Plus,
        };
        Ok(plus.for_branch(setup, branch))
    }

    /// Parameters from explicit `τ` and `h` without enforcing consistency;
    /// `ρ` is set from the `β` relation so that the nonlinear weight matches.
    /// Used for the `μ = 0` mode at moderate `ε`.
    pub fn from_steps(
        setup: &PhysicalSetup,
        branch: Branch,
        tau: f64,
        h: f64,
        r: f64,
    ) -> Result<Self> {
        if !(tau > 0.0 && h > 0.0) {
            return Err(Error::InvalidInput("tau and h must be positive".into()));
        }
        let eps2 = setup.epsilon * setup.epsilon;
        let alpha = Angle::new(setup.phase_rate(Branch::Plus) * tau / eps2);
        let beta = Angle::new(setup.kappa * h / setup.epsilon);
        let tanc_b = beta.tanc()?;
        let plus = FilterParams {
            tau,
            h,
            alpha,
            beta,
            rho: eps2 / (tanc_b * tanc_b),
            r,
            mu: setup.c_g,
            branch: Branch::Plus,
        };
        Ok(plus.for_branch(setup, branch))
    }

    /// The same discretisation viewed from another branch: `α` flips sign on
    /// the minus branch and `μ` follows the branch.
    pub fn for_branch(&self, setup: &PhysicalSetup, branch: Branch) -> Self {
        let alpha_plus = match self.branch {
            Branch::Minus => -self.alpha,
            _ => self.alpha,
        };
        FilterParams {
            alpha: match branch {
                Branch::Minus => -alpha_plus,
                _ => alpha_plus,
            },
            mu: match branch {
                Branch::Plus => setup.c_g,
                Branch::Minus => -setup.c_g,
                Branch::Zero => 0.0,
            },
            branch,
            ..*self
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.value()
    }

    pub fn beta(&self) -> f64 {
        self.beta.value()
    }

    /// Rough regime label: both filter arguments small means the scheme is a
    /// perturbation of classical leapfrog.
    pub fn is_leapfrog_limit(&self) -> bool {
        self.alpha().abs() < 1e-2 && self.beta().abs() < 1e-2
    }
}

/// `mπ + s` as an [`Angle`], for `m ≥ 0` and `|s| ≤ π/2`.
fn half_turns(m: i64, s: f64) -> Angle {
    if m % 2 == 0 {
        Angle::from_parts(m / 2, s)
    } else if s >= 0.0 {
        Angle::from_parts((m + 1) / 2, s - PI)
    } else {
        Angle::from_parts((m - 1) / 2, s + PI)
    }
}

const SAMPLES_PER_INTERVAL: usize = 64;
const MAX_INTERVAL_SEARCH: i64 = 256;
const ROOT_XTOL: f64 = 1e-15;

/// Searches for roots of `f(m, s)` with `s ∈ [lo, hi]` on half-period
/// intervals `m = m0, m0 ± 1, …`, returning the root (as `(m, s)`) nearest
/// `target`. `f` must be smooth in `s` on each interval.
fn nearest_root<F>(mut f: F, target: f64, lo: f64, hi: f64, exclude_zero: bool) -> Option<(i64, f64)>
where
    F: FnMut(i64, f64) -> (f64, f64),
{
    let m0 = (target / PI).round().max(0.0) as i64;
    let mut best: Option<(f64, i64, f64)> = None;
    for radius in 0..=MAX_INTERVAL_SEARCH {
        let mut ms = vec![m0 + radius];
        if radius > 0 && m0 - radius >= 0 {
            ms.push(m0 - radius);
        }
        for m in ms {
            let mut prev_s = lo;
            let mut prev_f = f(m, lo).0;
            for i in 1..=SAMPLES_PER_INTERVAL {
                let s = lo + (hi - lo) * i as f64 / SAMPLES_PER_INTERVAL as f64;
                let fs = f(m, s).0;
                if prev_f.signum() != fs.signum() && prev_f.is_finite() && fs.is_finite() {
                    if let Some(root) = newton_bisect(|x| f(m, x), prev_s, s, ROOT_XTOL) {
                        let value = m as f64 * PI + root;
                        let degenerate = exclude_zero && value.abs() < 1e-8;
                        if !degenerate {
                            let dist = (value - target).abs();
                            if best.is_none_or(|(d, _, _)| dist < d) {
                                best = Some((dist, m, root));
                            }
                        }
                    }
                }
                prev_s = s;
                prev_f = fs;
            }
        }
        // Intervals further out than the best root cannot contain a closer one.
        if let Some((d, _, _)) = best {
            if radius as f64 * PI >= d {
                break;
            }
        }
    }
    best.map(|(_, m, s)| (m, s))
}

/// Solves `ε²/tanc²(β) = ρ` for the root nearest `β₀ = κ h_target/ε`, and
/// returns `β` with the matching mesh size `h = β ε/κ`.
pub fn solve_beta(epsilon: f64, rho: f64, kappa: f64, h_target: f64) -> Result<(Angle, f64)> {
    if !(epsilon > 0.0 && rho > 0.0 && h_target > 0.0) || kappa == 0.0 {
        return Err(Error::InvalidInput(
            "solve_beta needs epsilon, rho, h_target > 0 and kappa != 0".into(),
        ));
    }
    let beta0 = (kappa * h_target / epsilon).abs();
    // tanc(β) = ±ε/√ρ  ⇔  sin β ∓ (ε/√ρ) β cos β = 0; both factors are pole-free.
    let c = epsilon / rho.sqrt();
    let lo = -FRAC_PI_2 + POLE_GUARD;
    let hi = FRAC_PI_2 - POLE_GUARD;
    let mut found: Option<(f64, i64, f64)> = None;
    for sign in [1.0, -1.0] {
        let g = |m: i64, s: f64| {
            let b = m as f64 * PI + s;
            let (sn, cs) = s.sin_cos();
            (
                sn - sign * c * b * cs,
                cs - sign * c * (cs - b * sn),
            )
        };
        if let Some((m, s)) = nearest_root(g, beta0, lo, hi, true) {
            let dist = (m as f64 * PI + s - beta0).abs();
            if found.is_none_or(|(d, _, _)| dist < d) {
                found = Some((dist, m, s));
            }
        }
    }
    let (_, m, s) = found.ok_or(Error::NoBracket {
        what: "beta",
        guess: beta0,
    })?;
    let mut beta = half_turns(m, s);
    beta.tanc()?;
    if kappa < 0.0 {
        beta = -beta;
    }
    let h = beta.value() * epsilon / kappa;
    Ok((beta, h))
}

/// Solves `ε² sinc(α)/ψ1(α) = −ωρ/(κc_g − ω)` for the nonzero root nearest
/// `α₀ = (κc_g − ω) τ_target/ε²` and returns `α` with `τ = α ε²/(κc_g − ω)`.
pub fn solve_alpha(setup: &PhysicalSetup, rho: f64, tau_target: f64) -> Result<(Angle, f64)> {
    if rho == 0.0 || !(tau_target.is_finite() && tau_target > 0.0) {
        return Err(Error::InvalidInput(
            "solve_alpha needs rho != 0 and tau_target > 0".into(),
        ));
    }
    let eps2 = setup.epsilon * setup.epsilon;
    let rate = setup.phase_rate(Branch::Plus);
    let rhs = -setup.omega * rho / rate;
    let alpha0 = rate * tau_target / eps2;
    // The relation is even in α; solve for |α| and restore the sign of α₀.
    let g_angle = |a: Angle| {
        (
            eps2 * a.sinc() - rhs * a.psi1(),
            eps2 * a.sinc_derivative() - rhs * a.psi1_derivative(),
        )
    };
    let g = |m: i64, s: f64| g_angle(half_turns(m, s));
    let (m, s) = nearest_root(g, alpha0.abs(), -FRAC_PI_2, FRAC_PI_2, true).ok_or(
        Error::NoBracket {
            what: "alpha",
            guess: alpha0,
        },
    )?;
    let mut alpha = half_turns(m, s);
    // Near odd multiples of π/2 the relation is so sensitive that the nearest
    // double offset leaves a visible residual; one Newton step resolves the
    // remaining sub-ulp correction.
    let (value, slope) = g_angle(alpha);
    let correction = -value / slope;
    if correction.is_finite() && correction.abs() <= 4.0 * f64::EPSILON * s.abs().max(1.0) {
        alpha = alpha.with_tail(correction);
    }
    if alpha0 < 0.0 {
        alpha = -alpha;
    }
    let tau = alpha.value() * eps2 / rate;
    Ok((alpha, tau))
}

/// Residuals of the two equalities `−ε⁴ sin α/(ωτψ1(α)) = ρ` and
/// `ε²/tanc²(β) = ρ`.
pub fn check_consistency(setup: &PhysicalSetup, params: &FilterParams) -> Result<(f64, f64)> {
    let eps2 = setup.epsilon * setup.epsilon;
    let omega = setup.omega_for(params.branch);
    let res1 = -eps2 * eps2 * params.alpha.sin() / (omega * params.tau * params.alpha.psi1())
        - params.rho;
    let tanc_b = params.beta.tanc()?;
    let res2 = eps2 / (tanc_b * tanc_b) - params.rho;
    Ok((res1, res2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub lhs: f64,
    pub r: f64,
    pub satisfied: bool,
    pub per_term: [f64; 3],
}

/// Left-hand side of the stability condition against the margin `r`.
pub fn check_stability(setup: &PhysicalSetup, params: &FilterParams) -> Result<StabilityReport> {
    let eps2 = setup.epsilon * setup.epsilon;
    let tau2 = params.tau * params.tau;
    let h2 = params.h * params.h;
    let phi1 = params.alpha.phi1();
    let psi1 = params.alpha.psi1();
    let phi2 = params.beta.phi2()?;
    let psi2 = params.beta.psi2()?;
    let terms = [
        phi1.abs(),
        tau2 * (params.mu * params.mu - 1.0).abs() / (eps2 * h2) * (1.0 + phi2.abs())
            / psi2.abs()
            * psi1.abs(),
        tau2 / (2.0 * eps2 * eps2) * psi1.abs(),
    ];
    let lhs = terms.iter().sum::<f64>();
    Ok(StabilityReport {
        lhs,
        r: params.r,
        satisfied: lhs <= params.r,
        per_term: terms,
    })
}
