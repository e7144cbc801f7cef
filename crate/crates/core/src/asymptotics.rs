//! Closed-form moments of the interference terms and the large-array SSE.
//!
//! Moments are conditional on one coherence block: path angles, LOS gating and
//! Rician factors are frozen in a [`UnitChannels`], and the expectation runs
//! over the small-scale fading and receiver noise. Every variance splits into a
//! pilot-length-independent part and a part scaling as `1/t`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{link_los_probability, los_channel, rician_weights, UnitChannels};
use crate::error::{LisError, Result};
use crate::linalg::{dot, norm_sqr};
use crate::scenario::{rician_factor, AntennaLattice, Deployment, DeviceSnr, SystemConfig};
use crate::sinr::{prelog, rate};

/// `fixed + per_inv_t / t`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Variance {
    pub fixed: f64,
    pub per_inv_t: f64,
}

impl Variance {
    pub fn at(&self, t: f64) -> f64 {
        self.fixed + self.per_inv_t / t
    }
}

/// `q_bar = h^L + sum_l sqrt(r_l) h_bar_l` over the pilot contaminators.
pub fn q_bar(u: &UnitChannels) -> Vec<Complex64> {
    let mut q = u.desired.clone();
    for i in u.contaminators() {
        let link = &u.links[i];
        let a = u.pilot_ratio(link).sqrt();
        for (dst, v) in q.iter_mut().zip(&link.mean) {
            *dst += v * a;
        }
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XMoments {
    pub mu_x: Complex64,
    pub var_x: Variance,
}

impl XMoments {
    /// `E[X] = sigma_x^2 + |mu_x|^2`.
    pub fn mean(&self, t: f64) -> f64 {
        self.var_x.at(t) + self.mu_x.norm_sqr()
    }
}

/// Mean and variance of the beam-projected estimation error `e^H h^L`.
pub fn signal_moments(u: &UnitChannels) -> XMoments {
    let mut mu_x = Complex64::new(0.0, 0.0);
    let mut fixed = 0.0;
    for i in u.contaminators() {
        let link = &u.links[i];
        let r = u.pilot_ratio(link);
        mu_x += dot(&link.mean, &u.desired) * r.sqrt();
        fixed += r * link.scatter.adjoint_norm_sqr(&u.desired);
    }
    let per_inv_t = norm_sqr(&u.desired) / u.snr.pilot;
    XMoments { mu_x, var_x: Variance { fixed, per_inv_t } }
}

/// Moments of `h_hat^H h_j` for one interfering device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YMoments {
    pub lis: usize,
    pub device: usize,
    pub data_snr: f64,
    pub mu_y: Complex64,
    /// Variance from the estimate's randomness against the interferer's LOS mean.
    pub var_el: Variance,
    /// Variance from the interferer's own fading.
    pub var_en: Variance,
}

impl YMoments {
    pub fn mean(&self, t: f64) -> f64 {
        self.var_el.at(t) + self.var_en.at(t) + self.mu_y.norm_sqr()
    }
}

/// Per-interferer moments of `Y`, treating the estimate and the interferer's
/// channel as independent (exact unless the interferer is itself a contaminator).
pub fn interferer_moments(u: &UnitChannels) -> Vec<YMoments> {
    let q = q_bar(u);
    let cont: Vec<(f64, &crate::linalg::CMatrix)> =
        u.contaminators().map(|i| (u.pilot_ratio(&u.links[i]), &u.links[i].scatter)).collect();
    let rho_p = u.snr.pilot;
    u.links
        .iter()
        .map(|link| {
            let mut el_fixed = 0.0;
            let mut en_cross = 0.0;
            for (r, s) in &cont {
                el_fixed += r * s.adjoint_norm_sqr(&link.mean);
                en_cross += r * s.cross_frobenius_sqr(&link.scatter);
            }
            YMoments {
                lis: link.lis,
                device: link.device,
                data_snr: link.snr.data,
                mu_y: dot(&q, &link.mean),
                var_el: Variance { fixed: el_fixed, per_inv_t: norm_sqr(&link.mean) / rho_p },
                var_en: Variance {
                    fixed: link.scatter.adjoint_norm_sqr(&q) + en_cross,
                    per_inv_t: link.scatter.frobenius_sqr() / rho_p,
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZMoments {
    /// Per-antenna means of `conj(h^L_m + e_m)`.
    pub mu_z: Vec<Complex64>,
    /// Per-antenna variances.
    pub var_z: Vec<Variance>,
}

impl ZMoments {
    /// `E[Z] = sum_m (sigma_m^2 + |mu_m|^2)`.
    pub fn mean(&self, t: f64) -> f64 {
        self.mu_z.iter().zip(&self.var_z).map(|(m, v)| v.at(t) + m.norm_sqr()).sum()
    }
}

pub fn noise_moments(u: &UnitChannels) -> ZMoments {
    let q = q_bar(u);
    let m = q.len();
    let mut fixed = vec![0.0; m];
    for i in u.contaminators() {
        let link = &u.links[i];
        let r = u.pilot_ratio(link);
        for (row, f) in fixed.iter_mut().enumerate() {
            *f += r * link.scatter.row_norm_sqr(row);
        }
    }
    let per_inv_t = 1.0 / u.snr.pilot;
    ZMoments {
        mu_z: q.iter().map(|v| v.conj()).collect(),
        var_z: fixed.into_iter().map(|f| Variance { fixed: f, per_inv_t }).collect(),
    }
}

/// All closed-form moments of one unit for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub lis: usize,
    pub device: usize,
    pub snr: DeviceSnr,
    pub x: XMoments,
    pub y: Vec<YMoments>,
    pub z: ZMoments,
    pub q_bar: Vec<Complex64>,
}

pub fn moment_set(u: &UnitChannels) -> MomentSet {
    MomentSet {
        lis: u.lis,
        device: u.device,
        snr: u.snr,
        x: signal_moments(u),
        y: interferer_moments(u),
        z: noise_moments(u),
        q_bar: q_bar(u),
    }
}

impl MomentSet {
    fn active(&self, devices: usize) -> impl Iterator<Item = &YMoments> {
        self.y.iter().filter(move |y| y.device < devices)
    }

    /// Mean interference `rho E[X] + sum_j rho_j E[Y_j] + E[Z]` at pilot length `t`.
    pub fn mu_i_bar(&self, t: f64) -> f64 {
        self.mu_i_bar_limited(t, usize::MAX)
    }

    /// As [`Self::mu_i_bar`] with only devices of index `< devices` scheduled.
    pub fn mu_i_bar_limited(&self, t: f64, devices: usize) -> f64 {
        let y: f64 = self.active(devices).map(|y| y.data_snr * y.mean(t)).sum();
        self.snr.data * self.x.mean(t) + y + self.z.mean(t)
    }

    /// Interference kept by the performance bound: the LOS-mean terms only.
    pub fn mu_i_hat(&self) -> f64 {
        self.mu_i_hat_limited(usize::MAX)
    }

    pub fn mu_i_hat_limited(&self, devices: usize) -> f64 {
        let y: f64 = self.active(devices).map(|y| y.data_snr * y.mu_y.norm_sqr()).sum();
        self.snr.data * self.x.mu_x.norm_sqr() + y
    }

    /// `(mean, variance)` tables for reports.
    pub fn report(&self, t: f64) -> MomentReport {
        MomentReport {
            lis: self.lis,
            device: self.device,
            t,
            mu_x: [self.x.mu_x.re, self.x.mu_x.im],
            var_x: self.x.var_x.at(t),
            mean_x: self.x.mean(t),
            y: self
                .y
                .iter()
                .map(|y| YReport {
                    lis: y.lis,
                    device: y.device,
                    mu_y: [y.mu_y.re, y.mu_y.im],
                    var_el: y.var_el.at(t),
                    var_en: y.var_en.at(t),
                    mean_y: y.mean(t),
                })
                .collect(),
            mean_z: self.z.mean(t),
            mu_i_bar: self.mu_i_bar(t),
            mu_i_hat: self.mu_i_hat(),
        }
    }
}

/// `mu_I_bar(t)` of a unit.
pub fn mu_i(moments: &MomentSet, t: f64) -> f64 {
    moments.mu_i_bar(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YReport {
    pub lis: usize,
    pub device: usize,
    pub mu_y: [f64; 2],
    pub var_el: f64,
    pub var_en: f64,
    pub mean_y: f64,
}

/// JSON-friendly moment table of one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub lis: usize,
    pub device: usize,
    pub t: f64,
    pub mu_x: [f64; 2],
    pub var_x: f64,
    pub mean_x: f64,
    pub y: Vec<YReport>,
    pub mean_z: f64,
    pub mu_i_bar: f64,
    pub mu_i_hat: f64,
}

/// Half side of the area actually covered by the lattice, `sqrt(M) spacing / 2`.
pub fn effective_half_side(cfg: &SystemConfig) -> f64 {
    (cfg.antennas as f64).sqrt() * cfg.spacing() / 2.0
}

/// Solid-angle factor `arctan(L^2 / (z sqrt(2L^2 + z^2)))` of a device at height `z`.
pub fn p_nk(z: f64, half_side: f64) -> f64 {
    let l2 = half_side * half_side;
    (l2 / (z * (2.0 * l2 + z * z).sqrt())).atan()
}

/// Large-array limit of the desired power, `M^2 p^2 / (16 pi^2 L^4)`.
pub fn p_bar(antennas: usize, p: f64, half_side: f64) -> f64 {
    let m = antennas as f64;
    m * m * p * p / (16.0 * PI * PI * half_side.powi(4))
}

/// Deterministic SINRs and SSE of one LIS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSse {
    pub t: f64,
    pub prelog: f64,
    pub p: Vec<f64>,
    pub p_bar: Vec<f64>,
    pub mu_i_bar: Vec<f64>,
    pub mu_i_hat: Vec<f64>,
    pub gamma_bar: Vec<f64>,
    pub sse_bar: f64,
    pub gamma_hat: Vec<f64>,
    /// Infinite when some device sees no LOS interference at all (`unbounded`).
    pub sse_hat: f64,
    pub unbounded: bool,
}

/// Deterministic SSE from per-device heights, data SNRs and interference means.
pub fn sse_from_interference(
    cfg: &SystemConfig,
    heights: &[f64],
    data_snrs: &[f64],
    mu_i_bar: &[f64],
    mu_i_hat: &[f64],
    t: f64,
) -> Result<AsymptoticSse> {
    let l = effective_half_side(cfg);
    let pre = prelog(t, cfg.coherence_len as f64);
    if !(pre >= 0.0) {
        return Err(LisError::config("pilot_len", format!("pilot length {t} exceeds the coherence block")));
    }
    let p: Vec<f64> = heights.iter().map(|&z| p_nk(z, l)).collect();
    let pb: Vec<f64> = p.iter().map(|&v| p_bar(cfg.antennas, v, l)).collect();
    let gamma = |mu: &[f64]| -> Vec<f64> {
        pb.iter().zip(data_snrs).zip(mu).map(|((s, r), i)| if *i > 0.0 { r * s / i } else { f64::INFINITY }).collect()
    };
    let gamma_bar = gamma(mu_i_bar);
    let gamma_hat = gamma(mu_i_hat);
    if let Some(g) = gamma_bar.iter().find(|g| !g.is_finite()) {
        return Err(LisError::NonFinite { at: *g });
    }
    let unbounded = gamma_hat.iter().any(|g| g.is_infinite());
    let sse_bar = pre * gamma_bar.iter().map(|g| rate(*g)).sum::<f64>();
    let sse_hat = if unbounded {
        f64::INFINITY
    } else {
        pre * gamma_hat.iter().map(|g| rate(*g)).sum::<f64>()
    };
    Ok(AsymptoticSse {
        t,
        prelog: pre,
        p,
        p_bar: pb,
        mu_i_bar: mu_i_bar.to_vec(),
        mu_i_hat: mu_i_hat.to_vec(),
        gamma_bar,
        sse_bar,
        gamma_hat,
        sse_hat,
        unbounded,
    })
}

/// Deterministic SSE and performance bound of the LIS whose units' moments are given.
pub fn asymptotic_sse(cfg: &SystemConfig, dep: &Deployment, moments: &[MomentSet], t: f64) -> Result<AsymptoticSse> {
    let heights: Vec<f64> = moments.iter().map(|m| dep.device(m.lis, m.device)[2]).collect();
    let rho: Vec<f64> = moments.iter().map(|m| m.snr.data).collect();
    let bar: Vec<f64> = moments.iter().map(|m| m.mu_i_bar(t)).collect();
    let hat: Vec<f64> = moments.iter().map(|m| m.mu_i_hat()).collect();
    sse_from_interference(cfg, &heights, &rho, &bar, &hat, t)
}

/// Deterministic SSE `mu_bar^SSE` and the per-device `gamma_bar`.
pub fn deterministic_sse(cfg: &SystemConfig, dep: &Deployment, moments: &[MomentSet], t: f64) -> Result<(f64, Vec<f64>)> {
    let a = asymptotic_sse(cfg, dep, moments, t)?;
    Ok((a.sse_bar, a.gamma_bar))
}

/// `(mu_hat_I per device, mu_hat^SSE, gamma_hat per device)`.
pub fn los_bound(cfg: &SystemConfig, dep: &Deployment, moments: &[MomentSet], t: f64) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let a = asymptotic_sse(cfg, dep, moments, t)?;
    Ok((a.mu_i_hat, a.sse_hat, a.gamma_hat))
}

/// `E|sum_a c_a 1[S_a]|^2` for independent indicator events with probabilities `prob`.
fn gated_power(terms: &[(Complex64, &[usize])], prob: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (ca, sa) in terms {
        for (cb, sb) in terms {
            let mut events: Vec<usize> = sa.iter().chain(sb.iter()).copied().collect();
            events.sort_unstable();
            events.dedup();
            let pr: f64 = events.iter().map(|&i| prob[i]).product();
            acc += (ca * cb.conj()).re * pr;
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
struct BoundLink {
    device: usize,
    data_snr: f64,
    /// `h^L^H m_j` with `m_j` the link's LOS mean when LOS is present.
    own: Complex64,
    /// `sqrt(r_c) m_c^H m_j` for each contaminator `c`.
    via: Vec<Complex64>,
}

/// LOS-mean inner products of one unit, from which the bound interference
/// averaged over LOS gating follows for any number of scheduled devices.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundTable {
    pub lis: usize,
    pub device: usize,
    pub snr: DeviceSnr,
    /// Height of the unit's device above its LIS.
    pub height: f64,
    prob: Vec<f64>,
    /// `(link index, sqrt(r))` of the contaminators.
    contaminators: Vec<(usize, f64)>,
    links: Vec<BoundLink>,
}

impl BoundTable {
    pub fn new(
        cfg: &SystemConfig,
        dep: &Deployment,
        snrs: &[Vec<DeviceSnr>],
        lattice: &AntennaLattice,
        n: usize,
        k: usize,
    ) -> Result<BoundTable> {
        let lambda = cfg.wavelength();
        let center = dep.unit_center(n, k);
        let desired = los_channel(dep.device(n, k), center, lattice, lambda)?.vector;
        let own = snrs[n][k];
        let mut means = Vec::new();
        let mut prob = Vec::new();
        let mut meta = Vec::new();
        for l in 0..dep.lis_count() {
            for j in 0..dep.devices_per_lis() {
                if l == n && j == k {
                    continue;
                }
                let los = los_channel(dep.device_in_frame(n, l, j), center, lattice, lambda)?.vector;
                let (wm, _) = rician_weights(rician_factor(dep.center_distance(l, j, n, k)));
                means.push(los.into_iter().map(|v| v * wm).collect::<Vec<_>>());
                prob.push(link_los_probability(cfg, dep, l, j, n, k));
                meta.push((l, j));
            }
        }
        let contaminators: Vec<(usize, f64)> = meta
            .iter()
            .enumerate()
            .filter(|(_, (l, j))| *j == k && *l != n)
            .map(|(i, (l, j))| (i, (snrs[*l][*j].pilot / own.pilot).sqrt()))
            .collect();
        let links = meta
            .iter()
            .zip(&means)
            .map(|(&(l, j), m)| BoundLink {
                device: j,
                data_snr: snrs[l][j].data,
                own: dot(&desired, m),
                via: contaminators.iter().map(|&(c, a)| dot(&means[c], m) * a).collect(),
            })
            .collect();
        Ok(BoundTable { lis: n, device: k, snr: own, height: dep.device(n, k)[2], prob, contaminators, links })
    }

    /// Bound interference `mu_hat_I` averaged over LOS gating with devices `< devices` scheduled.
    pub fn mu_i_hat(&self, devices: usize) -> f64 {
        let singles: Vec<[usize; 1]> = self.contaminators.iter().map(|&(c, _)| [c]).collect();
        let x_terms: Vec<(Complex64, &[usize])> = self
            .contaminators
            .iter()
            .zip(&singles)
            .map(|(&(c, a), set)| (self.links[c].own.conj() * a, &set[..]))
            .collect();
        let mut total = self.snr.data * gated_power(&x_terms, &self.prob);
        for (idx, link) in self.links.iter().enumerate() {
            if link.device >= devices {
                continue;
            }
            let own_set = [idx];
            let pairs: Vec<[usize; 2]> = self.contaminators.iter().map(|&(c, _)| [c, idx]).collect();
            let mut terms: Vec<(Complex64, &[usize])> = vec![(link.own, &own_set[..])];
            terms.extend(link.via.iter().zip(&pairs).map(|(v, set)| (*v, &set[..])));
            total += link.data_snr * gated_power(&terms, &self.prob);
        }
        total
    }
}

/// Bound interference of unit `(n, k)` averaged over LOS gating, with only
/// devices of index `< devices` scheduled. Depends on geometry only.
pub fn expected_bound_interference(
    cfg: &SystemConfig,
    dep: &Deployment,
    snrs: &[Vec<DeviceSnr>],
    lattice: &AntennaLattice,
    n: usize,
    k: usize,
    devices: usize,
) -> Result<f64> {
    Ok(BoundTable::new(cfg, dep, snrs, lattice, n, k)?.mu_i_hat(devices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{unit_channels, BlockKey, Link};
    use crate::linalg::CMatrix;
    use crate::rng::{complex_normal_vec, substream, tag};
    use crate::scenario::{place_devices, InterLisFading, Layout};

    fn instance(m: usize, k: usize, n: usize, seed: u64) -> (SystemConfig, Deployment, UnitChannels) {
        let cfg = SystemConfig { antennas: m, devices: k, lis_count: n, nlos_paths: 4, seed, ..SystemConfig::default() };
        let dep = place_devices(&cfg, &Layout::default(), &mut substream(seed, &[tag::PLACEMENT])).unwrap();
        let snrs = dep.snrs(&cfg).unwrap();
        let lat = AntennaLattice::new(&cfg).unwrap();
        let u = unit_channels(&cfg, &dep, &snrs, &lat, BlockKey { seed, placement: 0, block: 0 }, 0, 0).unwrap();
        (cfg, dep, u)
    }

    #[test]
    fn single_lis_closed_forms() {
        let (_, _, u) = instance(16, 1, 1, 3);
        let x = signal_moments(&u);
        let g = norm_sqr(&u.desired);
        assert_eq!(x.mu_x, Complex64::new(0.0, 0.0));
        assert!((x.var_x.at(4.0) - g / (4.0 * u.snr.pilot)).abs() < 1e-15);
        assert!((x.var_x.at(8.0) * 2.0 - x.var_x.at(4.0)).abs() < 1e-15);
        let z = noise_moments(&u);
        assert!((z.mean(2.0) - (g + 16.0 / (2.0 * u.snr.pilot))).abs() < 1e-12);
        assert!((z.mean(1e12) - g).abs() < 1e-9);
        let ms = moment_set(&u);
        assert!((ms.mu_i_bar(1e15) - g).abs() < 1e-6);
        assert_eq!(ms.mu_i_hat(), 0.0);
    }

    fn synthetic_link(mean_scale: f64, rng: &mut crate::rng::StreamRng) -> Link {
        let m = 4;
        let cols: Vec<Vec<Complex64>> = (0..2).map(|_| complex_normal_vec(rng, m)).collect();
        let los = complex_normal_vec(rng, m);
        Link {
            lis: 0,
            device: 1,
            snr: DeviceSnr { pilot: 1.0, data: 1.0 },
            kappa: 0.0,
            mean: los.iter().map(|v| v * mean_scale).collect(),
            los,
            scatter: CMatrix::from_columns(m, &cols).unwrap(),
        }
    }

    #[test]
    fn interferer_moments_rician_limits() {
        let mut rng = substream(8, &[tag::SAMPLE]);
        let desired = complex_normal_vec(&mut rng, 4);
        let mut link = synthetic_link(0.0, &mut rng);
        let u = UnitChannels { lis: 0, device: 0, snr: DeviceSnr { pilot: 2.0, data: 3.0 }, desired: desired.clone(), links: vec![link.clone()] };
        let y = &interferer_moments(&u)[0];
        assert_eq!(y.mu_y, Complex64::new(0.0, 0.0));
        assert_eq!(y.var_el.at(3.0), 0.0);
        let expect = link.scatter.adjoint_norm_sqr(&desired) + link.scatter.frobenius_sqr() / (3.0 * 2.0);
        assert!((y.var_en.at(3.0) - expect).abs() < 1e-12);
        // infinite Rician factor: no fading left
        link.mean = link.los.clone();
        link.scatter = CMatrix::zeros(4, 2);
        let u = UnitChannels { links: vec![link], ..u };
        let y = &interferer_moments(&u)[0];
        assert_eq!(y.var_en.at(1.0), 0.0);
        assert!((y.mean(1e15) - y.mu_y.norm_sqr()).abs() < 1e-6);
    }

    #[test]
    fn interference_means_fall_with_pilot_length_and_dominate_bound() {
        let (_, _, u) = instance(16, 2, 4, 5);
        let ms = moment_set(&u);
        let v: Vec<f64> = [2.0, 4.0, 8.0].iter().map(|t| ms.mu_i_bar(*t)).collect();
        assert!(v[0] > v[1] && v[1] > v[2]);
        assert!(ms.mu_i_hat() <= v[2]);
        let r = ms.report(2.0);
        assert_eq!(r.y.len(), 7);
        assert!(serde_json::to_string(&r).unwrap().contains("mu_i_bar"));
    }

    #[test]
    fn p_bar_matches_gain_sum() {
        let cfg = SystemConfig { antennas: 2500, devices: 1, lis_count: 1, ..SystemConfig::default() };
        let lat = AntennaLattice::new(&cfg).unwrap();
        for z in [0.5, 1.0, 1.8] {
            let g = los_channel([0.0, 0.0, z], [0.0, 0.0], &lat, cfg.wavelength()).unwrap().gain_sum();
            let p = p_nk(z, cfg.half_side);
            assert!(p > 0.0 && p < PI / 2.0);
            assert!((p_bar(2500, p, cfg.half_side) / (g * g) - 1.0).abs() < 0.02, "z = {z}");
        }
    }

    #[test]
    fn zero_prelog_and_unbounded_bound() {
        let (cfg, dep, u) = instance(16, 1, 1, 6);
        let ms = vec![moment_set(&u)];
        let a = asymptotic_sse(&cfg, &dep, &ms, cfg.coherence_len as f64).unwrap();
        assert_eq!(a.sse_bar, 0.0);
        let a = asymptotic_sse(&cfg, &dep, &ms, 1.0).unwrap();
        assert!(a.unbounded && a.sse_hat.is_infinite() && a.sse_bar.is_finite());
    }

    #[test]
    fn nlos_neighbours_leave_single_lis_bound() {
        let cfg = SystemConfig {
            antennas: 16,
            devices: 2,
            lis_count: 4,
            nlos_paths: 4,
            inter_lis: InterLisFading::Nlos,
            los_gating: false,
            ..SystemConfig::default()
        };
        let dep = place_devices(&cfg, &Layout::default(), &mut substream(7, &[tag::PLACEMENT])).unwrap();
        let snrs = dep.snrs(&cfg).unwrap();
        let lat = AntennaLattice::new(&cfg).unwrap();
        let key = BlockKey { seed: 7, placement: 0, block: 0 };
        let multi = moment_set(&unit_channels(&cfg, &dep, &snrs, &lat, key, 0, 0).unwrap());
        let single_cfg = SystemConfig { lis_count: 1, ..cfg.clone() };
        let single_dep = dep.restrict_lis(1);
        let single = moment_set(&unit_channels(&single_cfg, &single_dep, &snrs, &lat, key, 0, 0).unwrap());
        assert!((multi.mu_i_hat() / single.mu_i_hat() - 1.0).abs() < 1e-12);
        assert!(multi.mu_i_bar(2.0) > single.mu_i_bar(2.0));
    }

    #[test]
    fn expected_bound_matches_block_average() {
        let cfg = SystemConfig { antennas: 16, devices: 3, lis_count: 4, nlos_paths: 2, ..SystemConfig::default() };
        let dep = place_devices(&cfg, &Layout::default(), &mut substream(9, &[tag::PLACEMENT])).unwrap();
        let snrs = dep.snrs(&cfg).unwrap();
        let lat = AntennaLattice::new(&cfg).unwrap();
        let blocks = 3000;
        let mut acc = 0.0;
        for b in 0..blocks {
            let key = BlockKey { seed: 9, placement: 0, block: b };
            let u = unit_channels(&cfg, &dep, &snrs, &lat, key, 0, 1).unwrap();
            acc += moment_set(&u).mu_i_hat();
        }
        let expect = expected_bound_interference(&cfg, &dep, &snrs, &lat, 0, 1, 3).unwrap();
        assert!((acc / blocks as f64 / expect - 1.0).abs() < 0.05, "{} vs {expect}", acc / blocks as f64);
        let fewer = expected_bound_interference(&cfg, &dep, &snrs, &lat, 0, 1, 2).unwrap();
        assert!(fewer <= expect);
    }
}
