//! Scalar abstraction shared by every numeric module.
//!
//! All of the array math, waveform synthesis and measurement code is written
//! against [`Real`], so the same pipeline runs in `f32` (cheap sweeps) or
//! `f64` (reference results). Physical quantities in the mmWave regime span
//! twenty decades (28 GHz carriers, 5 ps taps), so `f64` is the default used by
//! the CLI and the acceptance suite.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftNum;

/// Floating point scalar usable throughout the simulator: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + FftNum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Draw one standard normal variate.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Lossy conversion of an `f64` constant into the working scalar.
#[inline]
pub fn cst<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}

/// Conversion of an index or count into the working scalar.
#[inline]
pub fn idx<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// `exp(j * phase)`.
#[inline]
pub fn cis<T: Real>(phase: T) -> Complex<T> {
    Complex::new(phase.cos(), phase.sin())
}

/// Mean of `|x|^2` over a slice; zero for an empty slice.
pub fn mean_power<T: Real>(x: &[Complex<T>]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    let sum = x.iter().fold(T::zero(), |acc, v| acc + v.norm_sqr());
    sum / idx(x.len())
}

/// Power ratio to decibels. Non-positive ratios map to `-inf`.
#[inline]
pub fn db<T: Real>(ratio: T) -> T {
    if ratio <= T::zero() {
        T::neg_infinity()
    } else {
        cst::<T>(10.0) * ratio.log10()
    }
}

#[inline]
pub fn from_db<T: Real>(value_db: T) -> T {
    cst::<T>(10.0).powf(value_db / cst(10.0))
}

/// Wrap a phase into `[0, 2π)`.
#[inline]
pub fn wrap_phase<T: Real>(phase: T) -> T {
    let two_pi = T::TAU();
    let r = phase % two_pi;
    if r < T::zero() {
        r + two_pi
    } else {
        r
    }
}

/// Evenly spaced grid of `n` points over `[start, stop]`, endpoints included.
pub fn linspace<T: Real>(start: T, stop: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / idx(n - 1);
            (0..n).map(|i| start + step * idx(i)).collect()
        }
    }
}

/// Angle grid in radians from `start_deg` to `stop_deg` (inclusive) at
/// `step_deg` spacing.
pub fn degree_grid<T: Real>(start_deg: f64, stop_deg: f64, step_deg: f64) -> Vec<T> {
    let n = ((stop_deg - start_deg) / step_deg).round() as usize + 1;
    (0..n)
        .map(|i| cst::<T>((start_deg + step_deg * i as f64).to_radians()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_phase_range() {
        for &p in &[-7.0, -0.1, 0.0, 3.0, 6.3, 100.0] {
            let w = wrap_phase(p);
            assert!((0.0..std::f64::consts::TAU).contains(&w), "{p} -> {w}");
            let turns = (p - w) / std::f64::consts::TAU;
            assert!((turns - turns.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn db_round_trip() {
        assert_eq!(db(1.0f64), 0.0);
        assert!((from_db(db(16.0f64)) - 16.0).abs() < 1e-12);
        assert_eq!(db(0.0f32), f32::NEG_INFINITY);
    }

    #[test]
    fn degree_grid_endpoints() {
        let g: Vec<f64> = degree_grid(-85.0, 85.0, 1.0);
        assert_eq!(g.len(), 171);
        assert!((g[0].to_degrees() + 85.0).abs() < 1e-12);
        assert!((g[170].to_degrees() - 85.0).abs() < 1e-12);
    }
}
