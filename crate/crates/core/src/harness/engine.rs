//! Monte Carlo evaluation of one unit's SINR from per-block sufficient statistics.
//!
//! For a fixed block (angles, gating, fading and noise drawn), the estimate is
//! `h^L + e_c + w / sqrt(t rho_p)` where `e_c` collects the contaminating
//! channels and `w ~ CN(0, I)` is the despread noise, whose law does not depend
//! on `t`. A handful of inner products therefore gives the exact SINR for any
//! pilot length, CSI mode, LIS scope or scheduled-device prefix.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{fading_draw, noise_draw, BlockKey, UnitChannels};
use crate::linalg::{dot, norm_sqr};
use crate::rng::complex_normal_vec;

/// Channel-state knowledge at the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Csi {
    /// LS estimate under pilot contamination and noise.
    Imperfect,
    /// Receiver combines with `h^L` itself.
    Perfect,
}

/// Which devices take part in the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// All LISs: inter-LIS interference and pilot contamination.
    Multi,
    /// Only the unit's own LIS.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfererSample {
    pub lis: usize,
    pub device: usize,
    pub data_snr: f64,
    /// `h^L^H h_j`
    pub p: Complex64,
    /// `e_c^H h_j`
    pub q: Complex64,
    /// `w^H h_j`
    pub b: Complex64,
}

/// Sufficient statistics of one unit in one block.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSample {
    pub lis: usize,
    pub device: usize,
    pub pilot_snr: f64,
    pub data_snr: f64,
    pub antennas: usize,
    /// `|h^L|^2`
    pub hl2: f64,
    /// `|e_c|^2`
    pub ec2: f64,
    /// `h^L^H e_c`
    pub hl_ec: Complex64,
    /// `w^H h^L`
    pub w_hl: Complex64,
    /// `e_c^H w`
    pub ec_w: Complex64,
    /// `|w|^2`
    pub w2: f64,
    pub interferers: Vec<InterfererSample>,
}

/// Interference terms evaluated from a [`UnitSample`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub s: f64,
    pub x: f64,
    /// `sum_j rho_j Y_j`
    pub y: f64,
    pub z: f64,
    pub i: f64,
    pub gamma: f64,
}

impl UnitSample {
    /// Builds the statistics from explicit draws: `g[i]` for `u.links[i]` and noise `w`.
    pub fn from_draws(u: &UnitChannels, g: &[Vec<Complex64>], w: Vec<Complex64>) -> UnitSample {
        let m = u.antennas();
        let channels: Vec<Vec<Complex64>> = u.links.iter().zip(g).map(|(l, gi)| l.realize(gi)).collect();
        let mut ec = vec![Complex64::new(0.0, 0.0); m];
        for i in u.contaminators() {
            let a = u.pilot_ratio(&u.links[i]).sqrt();
            for (dst, v) in ec.iter_mut().zip(&channels[i]) {
                *dst += v * a;
            }
        }
        let interferers = u
            .links
            .iter()
            .zip(&channels)
            .map(|(l, h)| InterfererSample {
                lis: l.lis,
                device: l.device,
                data_snr: l.snr.data,
                p: dot(&u.desired, h),
                q: dot(&ec, h),
                b: dot(&w, h),
            })
            .collect();
        UnitSample {
            lis: u.lis,
            device: u.device,
            pilot_snr: u.snr.pilot,
            data_snr: u.snr.data,
            antennas: m,
            hl2: norm_sqr(&u.desired),
            ec2: norm_sqr(&ec),
            hl_ec: dot(&u.desired, &ec),
            w_hl: dot(&w, &u.desired),
            ec_w: dot(&ec, &w),
            w2: norm_sqr(&w),
            interferers,
        }
    }

    /// Draws fading and noise from the block's keyed substreams.
    pub fn keyed(u: &UnitChannels, key: BlockKey) -> UnitSample {
        let g: Vec<Vec<Complex64>> = u
            .links
            .iter()
            .map(|l| fading_draw(key, l.scatter.cols(), l.lis, l.device, u.lis, u.device))
            .collect();
        let w = noise_draw(key, u.antennas(), u.lis, u.device);
        UnitSample::from_draws(u, &g, w)
    }

    /// Draws fading and noise sequentially from `rng` (links in order, then noise).
    pub fn draw<R: Rng + ?Sized>(u: &UnitChannels, rng: &mut R) -> UnitSample {
        let g: Vec<Vec<Complex64>> = u.links.iter().map(|l| complex_normal_vec(rng, l.scatter.cols())).collect();
        let w = complex_normal_vec(rng, u.antennas());
        UnitSample::from_draws(u, &g, w)
    }

    /// Interference and SINR at pilot length `t` with devices `< devices` scheduled.
    pub fn evaluate(&self, t: f64, csi: Csi, scope: Scope, devices: usize) -> Evaluation {
        let s = self.hl2 * self.hl2;
        let active = |j: &&InterfererSample| j.device < devices && (scope == Scope::Multi || j.lis == self.lis);
        let (x, y, z) = match csi {
            Csi::Perfect => {
                let y = self.interferers.iter().filter(active).map(|j| j.data_snr * j.p.norm_sqr()).sum();
                (0.0, y, self.hl2)
            }
            Csi::Imperfect => {
                let inv = 1.0 / (t * self.pilot_snr).sqrt();
                let multi = scope == Scope::Multi;
                let c = if multi { 1.0 } else { 0.0 };
                let x = (self.hl_ec.conj() * c + self.w_hl * inv).norm_sqr();
                let y = self
                    .interferers
                    .iter()
                    .filter(active)
                    .map(|j| j.data_snr * (j.p + j.q * c + j.b * inv).norm_sqr())
                    .sum();
                let z = self.hl2
                    + c * (self.ec2 + 2.0 * self.hl_ec.re)
                    + self.w2 * inv * inv
                    + 2.0 * inv * (self.w_hl.re + c * self.ec_w.re);
                (x, y, z)
            }
        };
        let i = self.data_snr * x + y + z;
        Evaluation { s, x, y, z, i, gamma: self.data_snr * s / i }
    }
}
