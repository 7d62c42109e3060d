//! Filter functions of the scheme.
//!
//! All of `sinc`, `tanc`, `φ1`, `ψ1`, `φ2`, `ψ2` have removable singularities
//! at the origin and are evaluated there by truncated Taylor series.
//!
//! Arguments are carried as [`Angle`]: the filtered regime routinely needs
//! `α = O(τ/ε²)` in the 1e9 range, where a plain `f64` no longer pins down
//! `sin α`. An `Angle` stores `2π·turns + offset` with the offset reduced to
//! `(-π, π]`, so trigonometric values come from the offset alone while
//! magnitudes (the `1/z` factors) come from the full value.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};

/// Below this magnitude the removable singularities are evaluated by series.
pub const SERIES_SWITCH: f64 = 1e-4;
/// `ψ1` suffers cancellation in `sinc − cos` well beyond `SERIES_SWITCH`,
/// so its series branch is used on a wider interval.
pub const PSI1_SERIES_SWITCH: f64 = 0.5;
/// Minimal admissible distance from a pole of `tan`.
pub const POLE_GUARD: f64 = 1e-6;

/// A real angle `2π·turns + offset + tail` with `offset ∈ (-π, π]`.
///
/// `tail` is a sub-ulp correction of the offset, nonzero only for roots that
/// were refined beyond double precision; trigonometric values include it to
/// first order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angle {
    turns: i64,
    offset: f64,
    tail: f64,
}

impl Angle {
    pub const ZERO: Angle = Angle {
        turns: 0,
        offset: 0.0,
        tail: 0.0,
    };

    /// Reduces a finite `f64`. Reduction is exact up to the rounding of the
    /// remainder because `sin`/`cos` reduce their argument exactly.
    pub fn new(x: f64) -> Self {
        if x.abs() <= PI {
            return Angle { turns: 0, offset: x, tail: 0.0 };
        }
        let offset = x.sin().atan2(x.cos());
        let turns = ((x - offset) / TAU).round() as i64;
        Angle { turns, offset, tail: 0.0 }
    }

    /// Builds `2π·turns + offset`, renormalising the offset if needed.
    pub fn from_parts(turns: i64, offset: f64) -> Self {
        if offset > -PI && offset <= PI {
            return Angle { turns, offset, tail: 0.0 };
        }
        let reduced = Angle::new(offset);
        Angle {
            turns: turns + reduced.turns,
            offset: reduced.offset,
            tail: 0.0,
        }
    }

    pub fn turns(self) -> i64 {
        self.turns
    }

    pub fn offset(self) -> f64 {
        self.offset
    }

    pub fn tail(self) -> f64 {
        self.tail
    }

    /// The same angle shifted by a correction far below one ulp of the offset.
    pub(crate) fn with_tail(self, tail: f64) -> Self {
        Angle { tail, ..self }
    }

    pub fn value(self) -> f64 {
        self.turns as f64 * TAU + self.offset + self.tail
    }

    pub fn sin(self) -> f64 {
        let (s, c) = self.offset.sin_cos();
        s + c * self.tail
    }

    pub fn cos(self) -> f64 {
        let (s, c) = self.offset.sin_cos();
        c - s * self.tail
    }

    fn is_small(self, threshold: f64) -> bool {
        self.turns == 0 && self.offset.abs() < threshold
    }

    fn check_pole(self) -> Result<()> {
        if (self.offset.abs() - FRAC_PI_2).abs() < POLE_GUARD {
            return Err(Error::PoleProximity {
                arg: self.value(),
                guard: POLE_GUARD,
            });
        }
        Ok(())
    }

    pub fn tan(self) -> Result<f64> {
        self.check_pole()?;
        if self.tail == 0.0 {
            return Ok(self.offset.tan());
        }
        Ok(self.sin() / self.cos())
    }

    pub fn sinc(self) -> f64 {
        if self.is_small(SERIES_SWITCH) {
            let z2 = self.offset * self.offset;
            return 1.0 - z2 / 6.0 + z2 * z2 / 120.0;
        }
        self.sin() / self.value()
    }

    pub fn tanc(self) -> Result<f64> {
        if self.is_small(SERIES_SWITCH) {
            let z2 = self.offset * self.offset;
            return Ok(1.0 + z2 / 3.0 + 2.0 * z2 * z2 / 15.0);
        }
        Ok(self.tan()? / self.value())
    }

    /// `φ1(z) = 3/2 sinc(z) − 1/2 cos(z)`.
    pub fn phi1(self) -> f64 {
        if self.is_small(SERIES_SWITCH) {
            let z2 = self.offset * self.offset;
            return 1.0 - z2 * z2 / 120.0;
        }
        1.5 * self.sinc() - 0.5 * self.cos()
    }

    /// `ψ1(z) = (φ1(z) − cos z)/(z²/2) = 3 (sinc z − cos z)/z²`.
    pub fn psi1(self) -> f64 {
        if self.is_small(PSI1_SERIES_SWITCH) {
            return psi1_series(self.offset).0;
        }
        let z = self.value();
        3.0 * (self.sinc() - self.cos()) / (z * z)
    }

    /// `φ2(z) = cos z + 1/2 sin z tan z`.
    pub fn phi2(self) -> Result<f64> {
        if self.is_small(SERIES_SWITCH) {
            let z2 = self.offset * self.offset;
            return Ok(1.0 + z2 * z2 / 8.0);
        }
        Ok(self.cos() + 0.5 * self.sin() * self.tan()?)
    }

    /// `ψ2(z) = (φ2(z) − cos z)/(z²/2)`, evaluated as `sinc z · tanc z`.
    pub fn psi2(self) -> Result<f64> {
        Ok(self.sinc() * self.tanc()?)
    }

    pub(crate) fn sinc_derivative(self) -> f64 {
        if self.is_small(SERIES_SWITCH) {
            let z = self.offset;
            return -z / 3.0 + z * z * z / 30.0;
        }
        (self.cos() - self.sinc()) / self.value()
    }

    pub(crate) fn psi1_derivative(self) -> f64 {
        if self.is_small(PSI1_SERIES_SWITCH) {
            return psi1_series(self.offset).1;
        }
        let z = self.value();
        3.0 * (self.sinc_derivative() + self.sin()) / (z * z) - 2.0 * self.psi1() / z
    }
}

impl std::ops::Neg for Angle {
    type Output = Angle;

    fn neg(self) -> Angle {
        Angle::from_parts(-self.turns, -self.offset).with_tail(-self.tail)
    }
}

impl From<f64> for Angle {
    fn from(x: f64) -> Self {
        Angle::new(x)
    }
}

/// `ψ1` and its derivative from `ψ1(z) = 3 Σ_{n≥1} (−1)^{n+1} 2n z^{2n−2}/(2n+1)!`.
fn psi1_series(z: f64) -> (f64, f64) {
    let z2 = z * z;
    let mut value = 0.0;
    let mut deriv = 0.0;
    // power = z^{2n-2}, fact = (2n+1)!
    let mut power = 1.0;
    let mut fact = 6.0;
    for n in 1..=12 {
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        let coeff = sign * 6.0 * n as f64 / fact;
        value += coeff * power;
        if n > 1 {
            deriv += coeff * (2 * n - 2) as f64 * power / z;
        }
        power *= z2;
        fact *= ((2 * n + 2) * (2 * n + 3)) as f64;
    }
    if z == 0.0 {
        deriv = 0.0;
    }
    (value, deriv)
}

pub fn sinc(z: f64) -> f64 {
    Angle::new(z).sinc()
}

pub fn tanc(z: f64) -> Result<f64> {
    Angle::new(z).tanc()
}

pub fn phi1(z: f64) -> f64 {
    Angle::new(z).phi1()
}

pub fn psi1(z: f64) -> f64 {
    Angle::new(z).psi1()
}

pub fn phi2(z: f64) -> Result<f64> {
    Angle::new(z).phi2()
}

pub fn psi2(z: f64) -> Result<f64> {
    Angle::new(z).psi2()
}

/// Filter values at the time argument `α` and the space argument `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterValues {
    pub sinc_a: f64,
    pub sinc_b: f64,
    pub tanc_b: f64,
    pub phi1_a: f64,
    pub psi1_a: f64,
    pub phi2_b: f64,
    pub psi2_b: f64,
}

impl FilterValues {
    pub fn evaluate(alpha: Angle, beta: Angle) -> Result<Self> {
        Ok(FilterValues {
            sinc_a: alpha.sinc(),
            sinc_b: beta.sinc(),
            tanc_b: beta.tanc()?,
            phi1_a: alpha.phi1(),
            psi1_a: alpha.psi1(),
            phi2_b: beta.phi2()?,
            psi2_b: beta.psi2()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn removable_singularities() {
        assert_eq!(sinc(0.0), 1.0);
        assert_eq!(tanc(0.0).unwrap(), 1.0);
        assert_eq!(phi1(0.0), 1.0);
        assert_eq!(psi1(0.0), 1.0);
        assert_eq!(phi2(0.0).unwrap(), 1.0);
        assert_eq!(psi2(0.0).unwrap(), 1.0);
    }

    #[test]
    fn angle_tail_is_first_order_correction() {
        let base = Angle::from_parts(3, 0.7);
        let t = 1e-17;
        let a = base.with_tail(t);
        assert_eq!(a.tail(), t);
        assert_eq!(a.sin(), 0.7f64.sin() + 0.7f64.cos() * t);
        assert_eq!(a.cos(), 0.7f64.cos() - 0.7f64.sin() * t);
        assert_eq!(a.value(), base.value() + t);
        let n = -a;
        assert_eq!(n.tail(), -t);
        assert_eq!(n.sin(), -a.sin());
        assert_eq!(n.cos(), a.cos());
        assert!(rel(a.tan().unwrap(), a.sin() / a.cos()) < 1e-15);
    }

    #[test]
    fn closed_form_examples() {
        assert!(sinc(PI).abs() < 1e-15);
        assert!(rel(sinc(FRAC_PI_2), 2.0 / PI) < 1e-15);
        assert!(rel(tanc(PI / 4.0).unwrap(), 4.0 / PI) < 1e-15);
        assert!(tanc(PI).unwrap().abs() < 1e-15);
        assert!(rel(phi1(PI), 0.5) < 1e-15);
        assert!(rel(psi1(PI), 3.0 / (PI * PI)) < 1e-14);
        assert!(rel(phi2(PI / 4.0).unwrap(), 3.0 * 2f64.sqrt() / 4.0) < 1e-15);
        // defining quotient of ψ2 at π/4
        let z = PI / 4.0;
        let quotient = (phi2(z).unwrap() - z.cos()) / (z * z / 2.0);
        assert!(rel(psi2(z).unwrap(), quotient) < 1e-13);
        assert!(rel(psi2(z).unwrap(), 8.0 * 2f64.sqrt() / (PI * PI)) < 1e-15);
    }

    #[test]
    fn tan_poles_are_rejected() {
        for z in [FRAC_PI_2, -FRAC_PI_2, 3.0 * FRAC_PI_2 + 1e-8, 1e6 * PI + FRAC_PI_2] {
            assert!(matches!(tanc(z), Err(Error::PoleProximity { .. })), "{z}");
            assert!(phi2(z).is_err());
            assert!(psi2(z).is_err());
        }
        assert!(tanc(FRAC_PI_2 - 1e-5).is_ok());
    }

    #[test]
    fn series_matches_closed_form_at_switch() {
        for &t in &[SERIES_SWITCH, -SERIES_SWITCH] {
            let below = Angle::new(t * (1.0 - 1e-12));
            let z = t;
            assert!(rel(below.sinc(), z.sin() / z) < 1e-13);
            assert!(rel(below.tanc().unwrap(), z.tan() / z) < 1e-13);
            assert!(rel(below.phi1(), 1.5 * z.sin() / z - 0.5 * z.cos()) < 1e-13);
            assert!(rel(below.phi2().unwrap(), z.cos() + 0.5 * z.sin() * z.tan()) < 1e-13);
        }
        // ψ1 at its own switch point, against the closed form (cancellation is
        // mild there).
        let z = PSI1_SERIES_SWITCH;
        let closed = 3.0 * (z.sin() / z - z.cos()) / (z * z);
        assert!(rel(psi1(z * (1.0 - 1e-12)), closed) < 1e-13);
        assert!(rel(psi1(z * (1.0 + 1e-12)), closed) < 1e-13);
    }

    #[test]
    fn large_arguments_use_reduced_offset() {
        let a = Angle::from_parts(1_000_000_000, 0.3);
        assert!(rel(a.sinc(), 0.3f64.sin() / a.value()) < 1e-15);
        assert!(rel(a.phi1(), 1.5 * 0.3f64.sin() / a.value() - 0.5 * 0.3f64.cos()) < 1e-15);
        let b = Angle::new(1e5);
        assert!(rel(b.sin(), 1e5f64.sin()) < 1e-12);
        assert!(rel(b.value(), 1e5) < 1e-15);
        assert_eq!((-a).turns(), -1_000_000_000);
        assert_eq!((-a).offset(), -0.3);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for &z in &[1e-5f64, 0.01, 0.3, 0.7, 2.0, 7.5, 40.0] {
            let d = 1e-6 * z.max(1e-3);
            let fd_sinc = (sinc(z + d) - sinc(z - d)) / (2.0 * d);
            let fd_psi1 = (psi1(z + d) - psi1(z - d)) / (2.0 * d);
            let a = Angle::new(z);
            assert!((a.sinc_derivative() - fd_sinc).abs() < 1e-6, "sinc' at {z}");
            assert!((a.psi1_derivative() - fd_psi1).abs() < 1e-6, "psi1' at {z}");
        }
    }

    proptest! {
        #[test]
        fn small_argument_orders(z in 1e-12f64..1e-4) {
            prop_assert!((psi1(z) - 1.0).abs() <= z * z);
            prop_assert!((psi2(z).unwrap() - 1.0).abs() <= z * z);
            prop_assert!((phi1(z) - 1.0).abs() <= z.powi(4));
            prop_assert!((phi2(z).unwrap() - 1.0).abs() <= z.powi(4));
        }

        #[test]
        fn psi2_quotient_identity(z in 0.05f64..20.0) {
            prop_assume!(((z % PI) - FRAC_PI_2).abs() > 0.05);
            let lhs = psi2(z).unwrap() * z * z / 2.0;
            let rhs = phi2(z).unwrap() - z.cos();
            prop_assert!((lhs - rhs).abs() <= 1e-13 * rhs.abs().max(1.0));
        }

        #[test]
        fn filters_are_even(z in -50.0f64..50.0) {
            prop_assume!(((z.abs() % PI) - FRAC_PI_2).abs() > 1e-3);
            prop_assert!(rel(sinc(-z), sinc(z)) < 1e-14 || sinc(z).abs() < 1e-15);
            prop_assert!((psi1(-z) - psi1(z)).abs() <= 1e-14 * psi1(z).abs().max(1e-3));
            prop_assert!((tanc(-z).unwrap() - tanc(z).unwrap()).abs() <= 1e-13 * tanc(z).unwrap().abs().max(1.0));
        }
    }
}
