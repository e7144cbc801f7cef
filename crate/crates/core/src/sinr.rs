//! Matched-filter SINR, its interference decomposition, and spectral efficiency.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LisError, Result};
use crate::linalg::{dot, norm_sqr};

/// Achievable rate `log2(1 + gamma)` in bits/s/Hz. Every rate in the crate goes through here.
pub fn rate(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

/// Fraction `1 - t/T` of the block left for data.
pub fn prelog(t: f64, coherence_len: f64) -> f64 {
    1.0 - t / coherence_len
}

/// `S = |h^L|^4`.
pub fn desired_power(h_los: &[Complex64]) -> f64 {
    let g = norm_sqr(h_los);
    g * g
}

/// An interfering device's data SNR and channel into the unit.
#[derive(Debug, Clone, Copy)]
pub struct DataInterferer<'a> {
    pub data_snr: f64,
    pub channel: &'a [Complex64],
}

/// Interference terms of one unit: `I = rho X + sum rho_j Y_j + Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceBreakdown {
    pub s: f64,
    pub x: f64,
    /// `(rho_j, Y_j)` for devices of the same LIS.
    pub y_intra: Vec<(f64, f64)>,
    /// `(rho_lj, Y_lj)` for devices of other LISs.
    pub y_inter: Vec<(f64, f64)>,
    pub z: f64,
    pub data_snr: f64,
    pub i: f64,
}

impl InterferenceBreakdown {
    pub fn reassemble(&self) -> f64 {
        let y: f64 = self.y_intra.iter().chain(&self.y_inter).map(|(r, y)| r * y).sum();
        self.data_snr * self.x + y + self.z
    }
}

/// Evaluates `X = |e^H h^L|^2`, `Y_j = |h_hat^H h_j|^2`, `Z = |h^L + e|^2` and their weighted sum.
pub fn interference_power(
    h_los: &[Complex64],
    error: &[Complex64],
    data_snr: f64,
    intra: &[DataInterferer<'_>],
    inter: &[DataInterferer<'_>],
) -> Result<InterferenceBreakdown> {
    let m = h_los.len();
    if error.len() != m || intra.iter().chain(inter).any(|d| d.channel.len() != m) {
        return Err(LisError::DimensionMismatch("interference inputs differ in antenna count".into()));
    }
    let est: Vec<Complex64> = h_los.iter().zip(error).map(|(a, b)| a + b).collect();
    let x = dot(error, h_los).norm_sqr();
    let terms = |set: &[DataInterferer<'_>]| -> Vec<(f64, f64)> {
        set.iter().map(|d| (d.data_snr, dot(&est, d.channel).norm_sqr())).collect()
    };
    let y_intra = terms(intra);
    let y_inter = terms(inter);
    let z = norm_sqr(&est);
    let mut out = InterferenceBreakdown { s: desired_power(h_los), x, y_intra, y_inter, z, data_snr, i: 0.0 };
    out.i = out.reassemble();
    Ok(out)
}

/// `gamma = rho S / I`.
pub fn instantaneous_sinr(s: f64, i: f64, data_snr: f64) -> Result<f64> {
    if !(i > 0.0) {
        return Err(LisError::Degenerate(format!("interference power must be positive, got {i}")));
    }
    Ok(data_snr * s / i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SseResult {
    pub gamma: Vec<f64>,
    pub per_device_se: Vec<f64>,
    pub prelog: f64,
    pub sse: f64,
}

/// `(1 - t/T) sum_k log2(1 + gamma_k)`.
pub fn instantaneous_sse(gammas: &[f64], t: usize, coherence_len: usize) -> Result<SseResult> {
    if t > coherence_len {
        return Err(LisError::config("pilot_len", format!("pilot length {t} exceeds the coherence block {coherence_len}")));
    }
    let pre = prelog(t as f64, coherence_len as f64);
    let per_device_se: Vec<f64> = gammas.iter().map(|g| pre * rate(*g)).collect();
    let sse = pre * gammas.iter().map(|g| rate(*g)).sum::<f64>();
    Ok(SseResult { gamma: gammas.to_vec(), per_device_se, prelog: pre, sse })
}
