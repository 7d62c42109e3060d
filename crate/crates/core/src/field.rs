//! Periodic grids, complex grid functions and their Fourier representation.
//!
//! Coefficients follow `f(ξ_j) = Σ_q c_q e^{i k_q ξ_j}` with `k_q = 2πq/L` and
//! `q` in the symmetric range `[-M/2, M/2)`; they are stored in FFT order.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    x_min: f64,
    h: f64,
    m: usize,
}

impl PeriodicGrid {
    /// `m` nodes covering the period `[x_min, x_min + length)`.
    pub fn new(x_min: f64, length: f64, m: usize) -> Result<Self> {
        if m == 0 || !(length.is_finite() && length > 0.0) || !x_min.is_finite() {
            return Err(Error::InvalidInput(format!(
                "grid needs m >= 1 and a positive period (m = {m}, length = {length})"
            )));
        }
        Ok(PeriodicGrid {
            x_min,
            h: length / m as f64,
            m,
        })
    }

    /// `m` nodes with prescribed spacing; the period becomes `m·h`.
    pub fn with_spacing(x_min: f64, h: f64, m: usize) -> Result<Self> {
        if m == 0 || !(h.is_finite() && h > 0.0) || !x_min.is_finite() {
            return Err(Error::InvalidInput(format!(
                "grid needs m >= 1 and positive spacing (m = {m}, h = {h})"
            )));
        }
        Ok(PeriodicGrid { x_min, h, m })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn length(&self) -> f64 {
        self.h * self.m as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(move |j| self.node(j))
    }

    /// Signed mode number of FFT slot `idx`.
    pub fn mode(&self, idx: usize) -> i64 {
        if idx < self.m.div_ceil(2) {
            idx as i64
        } else {
            idx as i64 - self.m as i64
        }
    }

    /// Physical wavenumber `2πq/L` of FFT slot `idx`.
    pub fn wavenumber(&self, idx: usize) -> f64 {
        TAU * self.mode(idx) as f64 / self.length()
    }

    /// Maps `x` into `[x_min, x_min + L)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.length();
        let y = (x - self.x_min).rem_euclid(l);
        self.x_min + y
    }

    pub fn same_as(&self, other: &PeriodicGrid) -> bool {
        self.m == other.m
            && (self.h - other.h).abs() <= 1e-14 * self.h
            && (self.x_min - other.x_min).abs() <= 1e-14 * self.length()
    }
}

/// A complex grid function at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: PeriodicGrid,
    pub values: Vec<Complex64>,
    pub time: f64,
}

/// One level of the oscillatory unknown `w` (or of a velocity `v`).
pub type WaveField = GridField;
/// A slowly varying envelope `a±(t, ·)`.
pub type EnvelopeField = GridField;

impl GridField {
    pub fn zeros(grid: PeriodicGrid, time: f64) -> Self {
        GridField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            time,
        }
    }

    pub fn from_fn(grid: PeriodicGrid, time: f64, f: impl FnMut(f64) -> Complex64) -> Self {
        GridField {
            grid,
            values: grid.nodes().map(f).collect(),
            time,
        }
    }

    pub fn new(grid: PeriodicGrid, values: Vec<Complex64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridField { grid, values, time })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_norm(&self) -> f64 {
        max_norm(self)
    }

    pub fn wiener_norm(&self) -> f64 {
        wiener_norm(self)
    }

    /// `self − other` on a common grid.
    pub fn difference(&self, other: &GridField) -> Result<GridField> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        Ok(GridField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
            time: self.time,
        })
    }
}

/// Cached forward/inverse FFT plans of one size.
#[derive(Clone)]
pub struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("len", &self.forward.len()).finish()
    }
}

impl Spectral {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Spectral {
            forward,
            inverse,
            scratch_len,
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.len() == 0
    }

    /// Unnormalised forward transform `Σ_j f_j e^{-2πi jq/M}`, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        self.forward.process_with_scratch(data, &mut scratch);
    }

    /// Inverse transform including the `1/M` factor, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        self.inverse.process_with_scratch(data, &mut scratch);
        let scale = 1.0 / data.len() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    /// Applies a Fourier multiplier `symbol(slot)` to grid values.
    pub fn apply_multiplier(
        &self,
        data: &mut [Complex64],
        symbol: impl Fn(usize) -> Complex64,
    ) {
        self.forward(data);
        for (idx, z) in data.iter_mut().enumerate() {
            *z *= symbol(idx);
        }
        self.inverse(data);
    }

    /// `f(ξ + s)` for a grid function, exact for band-limited data.
    pub fn shifted(&self, field: &GridField, s: f64) -> GridField {
        let grid = field.grid;
        let mut values = field.values.clone();
        self.apply_multiplier(&mut values, |idx| {
            Complex64::from_polar(1.0, grid.wavenumber(idx) * s)
        });
        GridField {
            grid,
            values,
            time: field.time,
        }
    }
}

/// Fourier coefficients `c_q` in FFT order.
pub fn dft(field: &GridField) -> Vec<Complex64> {
    let grid = field.grid;
    let mut data = field.values.clone();
    Spectral::new(grid.len()).forward(&mut data);
    let scale = 1.0 / grid.len() as f64;
    for (idx, z) in data.iter_mut().enumerate() {
        *z *= Complex64::from_polar(scale, -grid.wavenumber(idx) * grid.x_min());
    }
    data
}

/// Grid values from coefficients in FFT order.
pub fn idft(grid: PeriodicGrid, coeffs: &[Complex64], time: f64) -> Result<GridField> {
    if coeffs.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} coefficients for {} nodes",
            coeffs.len(),
            grid.len()
        )));
    }
    let mut data: Vec<Complex64> = coeffs
        .iter()
        .enumerate()
        .map(|(idx, c)| c * Complex64::from_polar(grid.len() as f64, grid.wavenumber(idx) * grid.x_min()))
        .collect();
    Spectral::new(grid.len()).inverse(&mut data);
    Ok(GridField {
        grid,
        values: data,
        time,
    })
}

/// Discrete Wiener-algebra norm: `Σ_q |c_q|`.
pub fn wiener_norm(field: &GridField) -> f64 {
    dft(field).iter().map(|c| c.norm()).sum()
}

pub fn max_norm(field: &GridField) -> f64 {
    field.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Trigonometric interpolant of a grid function, reusable across many
/// evaluation points.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    grid: PeriodicGrid,
    coeffs: Vec<Complex64>,
}

impl TrigInterpolant {
    pub fn new(field: &GridField) -> Self {
        TrigInterpolant {
            grid: field.grid,
            coeffs: dft(field),
        }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        let x = self.grid.wrap(x);
        let k0 = TAU / self.grid.length();
        let base = Complex64::from_polar(1.0, k0 * x);
        let m = self.grid.len();
        let mut sum = Complex64::new(0.0, 0.0);
        // ascending non-negative modes, then negative ones, by recurrence with
        // a fresh anchor every 32 modes
        let mut acc = Complex64::new(1.0, 0.0);
        for idx in 0..m.div_ceil(2) {
            if idx % 32 == 0 {
                acc = Complex64::from_polar(1.0, k0 * idx as f64 * x);
            }
            sum += self.coeffs[idx] * acc;
            acc *= base;
        }
        let inv = base.conj();
        let mut acc = Complex64::new(1.0, 0.0);
        for (n, idx) in (m.div_ceil(2)..m).rev().enumerate() {
            let q = n + 1;
            if n % 32 == 0 {
                acc = Complex64::from_polar(1.0, -k0 * q as f64 * x);
            }
            sum += self.coeffs[idx] * acc;
            acc *= inv;
        }
        sum
    }
}

/// Value of the trigonometric interpolant of `field` at `x`.
pub fn trig_interpolate(field: &GridField, x: f64) -> Complex64 {
    TrigInterpolant::new(field).eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn grid(m: usize) -> PeriodicGrid {
        PeriodicGrid::new(-4.0, 8.0, m).unwrap()
    }

    fn plane_wave(g: PeriodicGrid, q: i64) -> GridField {
        let k = TAU * q as f64 / g.length();
        GridField::from_fn(g, 0.0, |x| Complex64::from_polar(1.0, k * x))
    }

    fn random_field(g: PeriodicGrid, seed: u64) -> GridField {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        GridField::from_fn(g, 0.0, |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn grid_geometry() {
        let g = grid(40);
        assert!((g.h() * 40.0 - 8.0).abs() < 1e-14);
        assert_eq!(g.nodes().count(), 40);
        assert_eq!(g.mode(19), 19);
        assert_eq!(g.mode(20), -20);
        assert_eq!(grid(5).mode(2), 2);
        assert_eq!(grid(5).mode(3), -2);
        assert!((g.wrap(4.5) - (-3.5)).abs() < 1e-14);
    }

    #[test]
    fn constant_field_has_only_the_mean() {
        let g = grid(16);
        let c = Complex64::new(0.3, -1.2);
        let coeffs = dft(&GridField::from_fn(g, 0.0, |_| c));
        assert!((coeffs[0] - c).norm() < 1e-15);
        assert!(coeffs[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn plane_wave_has_single_unit_coefficient() {
        let g = grid(32);
        for q in [-16, -3, 0, 5, 15] {
            let coeffs = dft(&plane_wave(g, q));
            for (idx, c) in coeffs.iter().enumerate() {
                let expect = if g.mode(idx) == q { 1.0 } else { 0.0 };
                assert!((c - expect).norm() < 1e-14, "q = {q}, slot {idx}");
            }
            assert!((wiener_norm(&plane_wave(g, q)) - 1.0).abs() < 1e-13);
            assert!((max_norm(&plane_wave(g, q)) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn roundtrip() {
        for m in [1, 7, 64, 100] {
            let f = random_field(grid(m), m as u64);
            let back = idft(f.grid, &dft(&f), 0.0).unwrap();
            let err = f.difference(&back).unwrap().max_norm();
            assert!(err <= 1e-13 * f.max_norm(), "m = {m}: {err}");
        }
    }

    #[test]
    fn zero_field_norms() {
        let f = GridField::zeros(grid(8), 0.0);
        assert_eq!(max_norm(&f), 0.0);
        assert_eq!(wiener_norm(&f), 0.0);
    }

    #[test]
    fn interpolation_is_exact_at_nodes() {
        let f = random_field(grid(33), 3);
        let interp = TrigInterpolant::new(&f);
        for (j, x) in f.grid.nodes().enumerate() {
            assert!((interp.eval(x) - f.values[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn interpolation_of_band_limited_fields() {
        let g = grid(64);
        let c = Complex64::new(2.0, 1.0);
        let constant = GridField::from_fn(g, 0.0, |_| c);
        let wave = plane_wave(g, 7);
        let k = TAU * 7.0 / g.length();
        for x in [-3.91, 0.0, 0.123, 2.5, 3.99, 11.7, -20.3] {
            assert!((trig_interpolate(&constant, x) - c).norm() < 1e-12);
            let expect = Complex64::from_polar(1.0, k * x);
            assert!((trig_interpolate(&wave, x) - expect).norm() < 1e-12, "{x}");
        }
    }

    #[test]
    fn spectral_shift_matches_interpolation() {
        let g = grid(48);
        let f = GridField::from_fn(g, 0.0, |x| Complex64::new((-x * x).exp(), 0.5 * (-x * x).exp() * x));
        let shifted = Spectral::new(48).shifted(&f, 0.37);
        let interp = TrigInterpolant::new(&f);
        for (j, x) in g.nodes().enumerate() {
            assert!((shifted.values[j] - interp.eval(x + 0.37)).norm() < 1e-12);
        }
    }

    #[test]
    fn mismatched_values_rejected() {
        assert!(GridField::new(grid(4), vec![Complex64::new(0.0, 0.0); 3], 0.0).is_err());
    }

    fn trig_poly(g: PeriodicGrid, coeffs: &[(i64, f64, f64)]) -> GridField {
        let l = g.length();
        GridField::from_fn(g, 0.0, |x| {
            coeffs
                .iter()
                .map(|&(q, re, im)| Complex64::new(re, im) * Complex64::from_polar(1.0, TAU * q as f64 * x / l))
                .sum()
        })
    }

    proptest! {
        #[test]
        fn wiener_norm_axioms(
            a in proptest::collection::vec((-6i64..6, -1.0f64..1.0, -1.0f64..1.0), 1..5),
            b in proptest::collection::vec((-6i64..6, -1.0f64..1.0, -1.0f64..1.0), 1..5),
        ) {
            // degree ≤ 5 each, so products stay below the Nyquist mode of 32 nodes
            let g = grid(32);
            let f = trig_poly(g, &a);
            let h = trig_poly(g, &b);
            let sum = GridField { values: f.values.iter().zip(&h.values).map(|(x, y)| x + y).collect(), ..f.clone() };
            let prod = GridField { values: f.values.iter().zip(&h.values).map(|(x, y)| x * y).collect(), ..f.clone() };
            prop_assert!(wiener_norm(&sum) <= wiener_norm(&f) + wiener_norm(&h) + 1e-12);
            prop_assert!(wiener_norm(&prod) <= wiener_norm(&f) * wiener_norm(&h) + 1e-12);
            prop_assert!(max_norm(&f) <= wiener_norm(&f) + 1e-12);
        }
    }
}
