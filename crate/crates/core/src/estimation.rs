//! Orthogonal pilot books, the received pilot block under pilot reuse, and LS estimation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{LisError, Result};
use crate::linalg::CMatrix;
use crate::rng::{complex_normal, complex_normal_vec};

/// `t x K` matrix with orthonormal columns; device `k` of every LIS sends column `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    matrix: CMatrix,
}

impl PilotBook {
    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn devices(&self) -> usize {
        self.matrix.cols()
    }

    pub fn column(&self, k: usize) -> &[Complex64] {
        self.matrix.column(k)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn gram(&self) -> CMatrix {
        self.matrix.adjoint_mul(&self.matrix)
    }
}

/// First `K` columns of the normalized `t`-point DFT matrix.
pub fn pilot_book(t: usize, k: usize) -> Result<PilotBook> {
    if t < k || k == 0 {
        return Err(LisError::config("pilot_len", format!("need t >= K >= 1, got t = {t}, K = {k}")));
    }
    let norm = 1.0 / (t as f64).sqrt();
    let mut matrix = CMatrix::zeros(t, k);
    for c in 0..k {
        for (i, v) in matrix.column_mut(c).iter_mut().enumerate() {
            *v = Complex64::from_polar(norm, -2.0 * PI * (i * c) as f64 / t as f64);
        }
    }
    Ok(PilotBook { matrix })
}

/// One device's contribution to a unit's received pilot block.
#[derive(Debug, Clone, Copy)]
pub struct PilotTransmitter<'a> {
    pub pilot: usize,
    pub pilot_snr: f64,
    pub channel: &'a [Complex64],
}

/// `Y_p = sum_i sqrt(t rho_i) h_i psi_{k_i}^H + N`; `rng = None` omits the noise.
pub fn received_pilot<R: Rng + ?Sized>(
    book: &PilotBook,
    transmitters: &[PilotTransmitter<'_>],
    antennas: usize,
    rng: Option<&mut R>,
) -> Result<CMatrix> {
    let t = book.len();
    let mut y = CMatrix::zeros(antennas, t);
    for tx in transmitters {
        if tx.channel.len() != antennas {
            return Err(LisError::DimensionMismatch(format!(
                "channel has {} entries, expected {antennas}",
                tx.channel.len()
            )));
        }
        if tx.pilot >= book.devices() {
            return Err(LisError::IndexOutOfRange { what: "pilot", index: tx.pilot, limit: book.devices() });
        }
        let amp = (t as f64 * tx.pilot_snr).sqrt();
        let psi = book.column(tx.pilot);
        for (s, p) in psi.iter().enumerate() {
            let w = p.conj() * amp;
            for (dst, h) in y.column_mut(s).iter_mut().zip(tx.channel) {
                *dst += h * w;
            }
        }
    }
    if let Some(rng) = rng {
        for s in 0..t {
            for v in y.column_mut(s) {
                *v += complex_normal(rng);
            }
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub estimate: Vec<Complex64>,
    pub error: Vec<Complex64>,
}

/// `h_hat = Y_p psi_k / sqrt(t rho_p)`, with the error taken against the desired LOS channel.
pub fn ls_estimate(y: &CMatrix, book: &PilotBook, k: usize, pilot_snr: f64, desired: &[Complex64]) -> Result<ChannelEstimate> {
    if !(pilot_snr > 0.0) {
        return Err(LisError::Degenerate(format!("pilot SNR must be positive, got {pilot_snr}")));
    }
    if y.cols() != book.len() || y.rows() != desired.len() {
        return Err(LisError::DimensionMismatch(format!(
            "pilot block is {}x{}, expected {}x{}",
            y.rows(),
            y.cols(),
            desired.len(),
            book.len()
        )));
    }
    let scale = 1.0 / (book.len() as f64 * pilot_snr).sqrt();
    let estimate: Vec<Complex64> = y.mul_vec(book.column(k)).into_iter().map(|v| v * scale).collect();
    let error = estimate.iter().zip(desired).map(|(a, b)| a - b).collect();
    Ok(ChannelEstimate { estimate, error })
}

/// A pilot contaminator seen by one unit: its pilot SNR ratio and channel parts.
#[derive(Debug, Clone, Copy)]
pub struct Contaminator<'a> {
    pub ratio: f64,
    pub mean: &'a [Complex64],
    pub fluctuation: &'a [Complex64],
}

/// Estimation error split into its contamination and noise parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDraw {
    pub error: Vec<Complex64>,
    pub los_part: Vec<Complex64>,
    pub nlos_part: Vec<Complex64>,
    pub noise_part: Vec<Complex64>,
}

/// Draws `e = sum_l sqrt(r_l) (mean_l + fluct_l) + w / sqrt(t rho_p)` without forming `Y_p`.
pub fn synthesize_error_direct<R: Rng + ?Sized>(
    contaminators: &[Contaminator<'_>],
    antennas: usize,
    t: usize,
    pilot_snr: f64,
    rng: &mut R,
) -> ErrorDraw {
    let zero = Complex64::new(0.0, 0.0);
    let mut los_part = vec![zero; antennas];
    let mut nlos_part = vec![zero; antennas];
    for c in contaminators {
        let a = c.ratio.sqrt();
        for m in 0..antennas {
            los_part[m] += c.mean[m] * a;
            nlos_part[m] += c.fluctuation[m] * a;
        }
    }
    let s = 1.0 / (t as f64 * pilot_snr).sqrt();
    let noise_part: Vec<Complex64> = complex_normal_vec(rng, antennas).into_iter().map(|v| v * s).collect();
    let error = (0..antennas).map(|m| los_part[m] + nlos_part[m] + noise_part[m]).collect();
    ErrorDraw { error, los_part, nlos_part, noise_part }
}
