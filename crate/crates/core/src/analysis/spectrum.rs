use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::timeint::fmt_num;

/// Share of the horizon, taken from the end, used for frequency analysis.
pub const TAIL_FRACTION: f64 = 0.4;

/// Default power-spectrum level separating periodic from non-periodic
/// responses.
pub const DEFAULT_PERIODIC_THRESHOLD: f64 = 0.3;

/// Fluctuations smaller than this, relative to the reference level, are
/// treated as a steady response with zero spectral power.
pub const STEADY_RELATIVE_AMPLITUDE: f64 = 1e-9;

/// Normalized discrete Fourier transform of a sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub omega_cyc_hr: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl Spectrum {
    /// Mean squared modulus times 100.
    pub fn power(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        100.0 * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Number of bins whose modulus exceeds `fraction` of the peak.
    pub fn bins_above(&self, fraction: f64) -> usize {
        self.values.iter().filter(|v| v.norm() > fraction).count()
    }

    /// CSV with columns `omega_cyc_hr,re,im,modulus`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "omega_cyc_hr,re,im,modulus")?;
        for (f, v) in self.omega_cyc_hr.iter().zip(&self.values) {
            writeln!(w, "{},{},{},{}", fmt_num(*f), fmt_num(v.re), fmt_num(v.im), fmt_num(v.norm()))?;
        }
        Ok(())
    }
}

/// Normalized DFT of `psi[0..=m]` sampled every `dt_hr` hours, evaluated at
/// `omega_n = n / (m dt)` for `n = 0..=m`.
///
/// The last sample closes the period, so its kernel is 1 at every grid
/// frequency and the sum reduces to an `m`-point FFT plus `psi[m]`.
pub fn dft_normalized(psi: &[f64], dt_hr: f64) -> Result<Spectrum> {
    if psi.len() < 2 {
        return Err(Error::Interval(format!("need at least 2 samples, got {}", psi.len())));
    }
    if !(dt_hr > 0.0) {
        return Err(Error::Interval(format!("sample spacing must be positive, got {dt_hr}")));
    }
    let m = psi.len() - 1;
    let mut buf: Vec<Complex64> = psi[..m].iter().map(|v| Complex64::new(*v, 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut buf);
    let last = psi[m];
    let raw: Vec<Complex64> = (0..=m).map(|n| buf[n % m] + last).collect();
    let peak = raw.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::ZeroSignal);
    }
    let span = m as f64 * dt_hr;
    Ok(Spectrum {
        omega_cyc_hr: (0..=m).map(|n| n as f64 / span).collect(),
        values: raw.into_iter().map(|v| v / peak).collect(),
    })
}

/// Tail of a full-horizon series on a uniform grid: the samples from
/// `(1 - TAIL_FRACTION) N` to `N`, where `N + 1` is the sample count.
pub fn tail(series: &[f64]) -> Result<&[f64]> {
    if series.len() < 3 {
        return Err(Error::Interval(format!("series too short for tail extraction ({} samples)", series.len())));
    }
    let n = series.len() - 1;
    let start = ((1.0 - TAIL_FRACTION) * n as f64).round() as usize;
    Ok(&series[start..])
}

/// Spectrum of the tail of `series - reference`.
pub fn tail_spectrum(series: &[f64], reference: f64, dt_hr: f64) -> Result<Spectrum> {
    let shifted: Vec<f64> = tail(series)?.iter().map(|v| v - reference).collect();
    dft_normalized(&shifted, dt_hr)
}

/// Average power spectrum of the tail of an outlet pressure series shifted
/// by its initial steady value. A tail that stays within
/// `STEADY_RELATIVE_AMPLITUDE` of the reference is a steady response and
/// has zero power.
pub fn power_spectrum_measure(series: &[f64], reference: f64, dt_hr: f64) -> Result<f64> {
    let amp = tail(series)?.iter().map(|v| (v - reference).abs()).fold(0.0, f64::max);
    if amp <= STEADY_RELATIVE_AMPLITUDE * reference.abs() {
        return Ok(0.0);
    }
    Ok(tail_spectrum(series, reference, dt_hr)?.power())
}
