//! LOS channels, correlated NLOS roots and Rician channel realizations.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LisError, Result};
use crate::linalg::CMatrix;
use crate::rng::{complex_normal_vec, substream, tag};
use crate::scenario::{
    los_probability, rician_factor, AntennaLattice, Deployment, DeviceSnr, InterLisFading, Point3, SystemConfig,
};

/// LOS amplitude gain `sqrt(z/d) / sqrt(4 pi d^2)` of an antenna at distance `d`
/// from a device at perpendicular distance `z`.
pub fn los_amplitude(z: f64, d: f64) -> f64 {
    (z / d).sqrt() / (4.0 * PI * d * d).sqrt()
}

fn antenna_distances(device: Point3, center: [f64; 2], lattice: &AntennaLattice) -> Vec<f64> {
    lattice
        .offsets
        .iter()
        .map(|o| {
            let dx = device[0] - center[0] - o[0];
            let dy = device[1] - center[1] - o[1];
            (dx * dx + dy * dy + device[2] * device[2]).sqrt()
        })
        .collect()
}

/// Deterministic line-of-sight channel between a device and one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct LosChannel {
    pub amplitudes: Vec<f64>,
    pub phases: Vec<Complex64>,
    pub vector: Vec<Complex64>,
}

impl LosChannel {
    pub fn gain_sum(&self) -> f64 {
        self.amplitudes.iter().map(|b| b * b).sum()
    }
}

/// LOS channel from `device` (in the unit's LIS frame) to the unit centered at `center`.
pub fn los_channel(device: Point3, center: [f64; 2], lattice: &AntennaLattice, wavelength: f64) -> Result<LosChannel> {
    let z = device[2];
    if !(z > 0.0) {
        return Err(LisError::Geometry(format!("device is not in front of the LIS plane (z = {z})")));
    }
    let dist = antenna_distances(device, center, lattice);
    let amplitudes: Vec<f64> = dist.iter().map(|&d| los_amplitude(z, d)).collect();
    let phases: Vec<Complex64> = dist.iter().map(|&d| Complex64::from_polar(1.0, -2.0 * PI * d / wavelength)).collect();
    let vector = amplitudes.iter().zip(&phases).map(|(a, h)| h * *a).collect();
    Ok(LosChannel { amplitudes, phases, vector })
}

fn phase_ramp(side: usize, step: f64) -> Vec<Complex64> {
    (0..side).map(|i| Complex64::from_polar(1.0, step * i as f64)).collect()
}

/// Planar-array response `(1/sqrt(M)) d_v (x) d_h` in row-major order, rows
/// following the vertical ramp and columns the horizontal ramp.
pub fn steering_vector(phi_v: f64, phi_h: f64, side: usize, spacing: f64, wavelength: f64) -> Vec<Complex64> {
    let k = 2.0 * PI * spacing / wavelength;
    let dv = phase_ramp(side, k * phi_v);
    let dh = phase_ramp(side, k * phi_h);
    let norm = 1.0 / side as f64;
    let mut out = Vec::with_capacity(side * side);
    for a in &dv {
        for b in &dh {
            out.push(a * b * norm);
        }
    }
    out
}

/// Steering vector for an `antennas`-element lattice; fails if the count is not square.
pub fn steering_vector_checked(phi_v: f64, phi_h: f64, antennas: usize, spacing: f64, wavelength: f64) -> Result<Vec<Complex64>> {
    let side = crate::scenario::lattice_side(antennas)?;
    Ok(steering_vector(phi_v, phi_h, side, spacing, wavelength))
}

/// Elevation/azimuth pair of one NLOS path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathAngles {
    pub vertical: f64,
    pub horizontal: f64,
}

impl PathAngles {
    pub fn phi_v(&self) -> f64 {
        self.vertical.sin()
    }

    pub fn phi_h(&self) -> f64 {
        self.horizontal.sin() * self.horizontal.cos()
    }

    /// Element gain `sqrt(cos(theta_v) cos(theta_h))`.
    pub fn gain(&self) -> f64 {
        (self.vertical.cos() * self.horizontal.cos()).max(0.0).sqrt()
    }
}

pub fn draw_angles<R: Rng + ?Sized>(paths: usize, rng: &mut R) -> Vec<PathAngles> {
    (0..paths)
        .map(|_| PathAngles {
            vertical: (rng.random::<f64>() - 0.5) * PI,
            horizontal: (rng.random::<f64>() - 0.5) * PI,
        })
        .collect()
}

/// Square root of the NLOS correlation matrix, `diag(l) D`, of size `M x P`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRoot {
    pub matrix: CMatrix,
    pub angles: Vec<PathAngles>,
    pub nlos_gains: Vec<f64>,
    pub nlos_pathloss: Vec<f64>,
}

impl CorrelationRoot {
    pub fn column(&self, p: usize) -> &[Complex64] {
        self.matrix.column(p)
    }

    pub fn row(&self, m: usize) -> Vec<Complex64> {
        self.matrix.row(m)
    }
}

pub fn correlation_root_from_angles(
    device: Point3,
    center: [f64; 2],
    lattice: &AntennaLattice,
    cfg: &SystemConfig,
    angles: Vec<PathAngles>,
) -> CorrelationRoot {
    let lambda = cfg.wavelength();
    let nlos_pathloss: Vec<f64> = antenna_distances(device, center, lattice)
        .iter()
        .map(|d| d.powf(-cfg.pathloss_exp / 2.0))
        .collect();
    let nlos_gains: Vec<f64> = angles.iter().map(PathAngles::gain).collect();
    let m = lattice.len();
    let mut matrix = CMatrix::zeros(m, angles.len());
    for (p, a) in angles.iter().enumerate() {
        let d = steering_vector(a.phi_v(), a.phi_h(), lattice.side, lattice.spacing, lambda);
        let g = nlos_gains[p];
        for (dst, (s, l)) in matrix.column_mut(p).iter_mut().zip(d.iter().zip(&nlos_pathloss)) {
            *dst = s * (g * l);
        }
    }
    CorrelationRoot { matrix, angles, nlos_gains, nlos_pathloss }
}

/// Draws `P` path angles uniformly on `[-pi/2, pi/2]^2` and builds the root.
pub fn correlation_root<R: Rng + ?Sized>(
    device: Point3,
    center: [f64; 2],
    lattice: &AntennaLattice,
    cfg: &SystemConfig,
    rng: &mut R,
) -> CorrelationRoot {
    let angles = draw_angles(cfg.nlos_paths, rng);
    correlation_root_from_angles(device, center, lattice, cfg, angles)
}

/// `sqrt(kappa/(kappa+1))` and `sqrt(1/(kappa+1))`, with `kappa = inf` as pure LOS.
pub fn rician_weights(kappa: f64) -> (f64, f64) {
    if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (kappa + 1.0)).sqrt(), (1.0 / (kappa + 1.0)).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub mean: Vec<Complex64>,
    pub fluctuation: Vec<Complex64>,
    pub total: Vec<Complex64>,
    pub kappa: f64,
}

impl ChannelRealization {
    /// Realization for a given small-scale draw `g`.
    pub fn from_draw(los: &[Complex64], root: &CMatrix, kappa: f64, g: &[Complex64]) -> Self {
        let (wm, wf) = rician_weights(kappa);
        let mean: Vec<Complex64> = los.iter().map(|h| h * wm).collect();
        let fluctuation: Vec<Complex64> = if wf == 0.0 {
            vec![Complex64::new(0.0, 0.0); los.len()]
        } else {
            root.mul_vec(g).into_iter().map(|v| v * wf).collect()
        };
        let total = mean.iter().zip(&fluctuation).map(|(a, b)| a + b).collect();
        ChannelRealization { mean, fluctuation, total, kappa }
    }
}

pub fn rician_channel<R: Rng + ?Sized>(los: &LosChannel, root: &CorrelationRoot, kappa: f64, rng: &mut R) -> Result<ChannelRealization> {
    if !(kappa >= 0.0) {
        return Err(LisError::Degenerate(format!("negative Rician factor {kappa}")));
    }
    let g = complex_normal_vec(rng, root.matrix.cols());
    Ok(ChannelRealization::from_draw(&los.vector, &root.matrix, kappa, &g))
}

/// Frozen statistics of one link `(l, j) -> (n, k)` within a coherence block.
///
/// `mean` is the LOS part `sqrt(kappa/(kappa+1)) h^L` and `scatter` is
/// `R^{1/2} / sqrt(kappa+1)`, so the channel is `mean + scatter * g`.
#[derive(Debug, Clone)]
pub struct Link {
    pub lis: usize,
    pub device: usize,
    pub snr: DeviceSnr,
    pub kappa: f64,
    pub los: Vec<Complex64>,
    pub mean: Vec<Complex64>,
    pub scatter: CMatrix,
}

impl Link {
    pub fn realize(&self, g: &[Complex64]) -> Vec<Complex64> {
        let mut h = self.scatter.mul_vec(g);
        for (a, b) in h.iter_mut().zip(&self.mean) {
            *a += b;
        }
        h
    }
}

/// Everything random about the channels into unit `(n, k)` that is frozen for a block.
#[derive(Debug, Clone)]
pub struct UnitChannels {
    pub lis: usize,
    pub device: usize,
    pub snr: DeviceSnr,
    /// Desired LOS channel `h^L`.
    pub desired: Vec<Complex64>,
    /// All links from devices other than `(n, k)`, ordered by `(l, j)`.
    pub links: Vec<Link>,
}

impl UnitChannels {
    /// Indices into `links` of the pilot contaminators (same pilot, other LIS).
    pub fn contaminators(&self) -> impl Iterator<Item = usize> + '_ {
        self.links
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.device == self.device && l.lis != self.lis)
            .map(|(i, _)| i)
    }

    /// Pilot SNR ratio of a link relative to the unit's own device.
    pub fn pilot_ratio(&self, link: &Link) -> f64 {
        link.snr.pilot / self.snr.pilot
    }

    pub fn antennas(&self) -> usize {
        self.desired.len()
    }

    /// The same unit with all other LISs removed.
    pub fn single_lis(&self) -> UnitChannels {
        UnitChannels {
            links: self.links.iter().filter(|l| l.lis == self.lis).cloned().collect(),
            ..self.clone()
        }
    }

    /// The same unit with devices of index `>= devices` removed.
    pub fn scheduled(&self, devices: usize) -> UnitChannels {
        UnitChannels {
            links: self.links.iter().filter(|l| l.device < devices).cloned().collect(),
            ..self.clone()
        }
    }
}

/// Identifies one coherence block of one placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockKey {
    pub seed: u64,
    pub placement: u64,
    pub block: u64,
}

impl BlockKey {
    pub fn stream(&self, stream: u64, ids: &[u64]) -> crate::rng::StreamRng {
        let mut tags = vec![stream, self.placement, self.block];
        tags.extend_from_slice(ids);
        substream(self.seed, &tags)
    }
}

/// Rician factor of link `(l, j) -> (n, k)` for a block, including LOS gating.
pub fn link_kappa(cfg: &SystemConfig, dep: &Deployment, key: BlockKey, l: usize, j: usize, n: usize, k: usize) -> f64 {
    if l != n && cfg.inter_lis == InterLisFading::Nlos {
        return 0.0;
    }
    let d = dep.center_distance(l, j, n, k);
    if cfg.los_gating {
        let p = los_probability(d, cfg.los_cutoff);
        let mut rng = key.stream(tag::GATING, &[l as u64, j as u64, n as u64, k as u64]);
        if rng.random::<f64>() >= p {
            return 0.0;
        }
    }
    rician_factor(d)
}

/// Probability that link `(l, j) -> (n, k)` carries a LOS component in a block.
pub fn link_los_probability(cfg: &SystemConfig, dep: &Deployment, l: usize, j: usize, n: usize, k: usize) -> f64 {
    if l != n && cfg.inter_lis == InterLisFading::Nlos {
        0.0
    } else if cfg.los_gating {
        los_probability(dep.center_distance(l, j, n, k), cfg.los_cutoff)
    } else {
        1.0
    }
}

/// Builds the frozen statistics of every link into unit `(n, k)` for one block.
/// Devices beyond `devices` are ignored.
pub fn unit_channels(
    cfg: &SystemConfig,
    dep: &Deployment,
    snrs: &[Vec<DeviceSnr>],
    lattice: &AntennaLattice,
    key: BlockKey,
    n: usize,
    k: usize,
) -> Result<UnitChannels> {
    let lambda = cfg.wavelength();
    let center = dep.unit_center(n, k);
    let desired = los_channel(dep.device(n, k), center, lattice, lambda)?.vector;
    let kk = dep.devices_per_lis();
    let mut links = Vec::with_capacity(dep.lis_count() * kk - 1);
    for l in 0..dep.lis_count() {
        for j in 0..kk {
            if l == n && j == k {
                continue;
            }
            let pos = dep.device_in_frame(n, l, j);
            if !(pos[2] > 0.0) {
                return Err(LisError::Geometry(format!(
                    "device {j} of LIS {l} lies behind LIS {n}; the layout cannot be used"
                )));
            }
            let los = los_channel(pos, center, lattice, lambda)?;
            let ids = [l as u64, j as u64, n as u64, k as u64];
            let angles = draw_angles(cfg.nlos_paths, &mut key.stream(tag::ANGLES, &ids));
            let root = correlation_root_from_angles(pos, center, lattice, cfg, angles);
            let kappa = link_kappa(cfg, dep, key, l, j, n, k);
            let (wm, wf) = rician_weights(kappa);
            let mut scatter = root.matrix;
            for c in 0..scatter.cols() {
                for v in scatter.column_mut(c) {
                    *v *= wf;
                }
            }
            let mean = los.vector.iter().map(|h| h * wm).collect();
            links.push(Link { lis: l, device: j, snr: snrs[l][j], kappa, los: los.vector, mean, scatter });
        }
    }
    Ok(UnitChannels { lis: n, device: k, snr: snrs[n][k], desired, links })
}

/// Small-scale fading draw `g` of a link for a block.
pub fn fading_draw(key: BlockKey, paths: usize, l: usize, j: usize, n: usize, k: usize) -> Vec<Complex64> {
    let mut rng = key.stream(tag::FADING, &[l as u64, j as u64, n as u64, k as u64]);
    complex_normal_vec(&mut rng, paths)
}

/// Despread receiver noise `N psi_k ~ CN(0, I_M)` of unit `(n, k)` for a block.
pub fn noise_draw(key: BlockKey, antennas: usize, n: usize, k: usize) -> Vec<Complex64> {
    let mut rng = key.stream(tag::NOISE, &[n as u64, k as u64]);
    complex_normal_vec(&mut rng, antennas)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpRecord {
    pub lis_from: usize,
    pub device: usize,
    pub lis_to: usize,
    pub unit: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpSidecar {
    pub antennas: usize,
    pub dtype: String,
    pub layout: String,
    pub records: Vec<DumpRecord>,
}

/// Writes channel vectors as interleaved little-endian `f64` (re, im) pairs to
/// `<stem>.bin`, one record of `M` complex values after another, with a JSON
/// sidecar `<stem>.json` describing the records.
pub fn write_channel_dump(stem: &Path, antennas: usize, records: &[(DumpRecord, Vec<Complex64>)]) -> Result<()> {
    let mut bin = std::io::BufWriter::new(std::fs::File::create(stem.with_extension("bin"))?);
    for (_, h) in records {
        if h.len() != antennas {
            return Err(LisError::DimensionMismatch(format!("record has {} entries, expected {antennas}", h.len())));
        }
        for v in h {
            bin.write_all(&v.re.to_le_bytes())?;
            bin.write_all(&v.im.to_le_bytes())?;
        }
    }
    bin.flush()?;
    let sidecar = DumpSidecar {
        antennas,
        dtype: "f64le".into(),
        layout: "interleaved re,im; records in order".into(),
        records: records.iter().map(|(r, _)| r.clone()).collect(),
    };
    std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_channel_dump(stem: &Path) -> Result<(DumpSidecar, Vec<Vec<Complex64>>)> {
    let sidecar: DumpSidecar = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
    let bytes = std::fs::read(stem.with_extension("bin"))?;
    let per = sidecar.antennas * 16;
    if bytes.len() != per * sidecar.records.len() {
        return Err(LisError::DimensionMismatch(format!(
            "dump holds {} bytes, sidecar expects {}",
            bytes.len(),
            per * sidecar.records.len()
        )));
    }
    let f = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
    let data = bytes
        .chunks(per)
        .map(|rec| rec.chunks(16).map(|c| Complex64::new(f(&c[..8]), f(&c[8..]))).collect())
        .collect();
    Ok((sidecar, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sqr;
    use crate::rng::{substream, tag};
    use crate::scenario::Layout;

    fn cfg(m: usize) -> SystemConfig {
        SystemConfig { antennas: m, devices: 1, lis_count: 1, ..SystemConfig::default() }
    }

    #[test]
    fn single_antenna_broadside_closed_form() {
        let c = cfg(1);
        let lat = AntennaLattice::new(&c).unwrap();
        let d = 1.7;
        let los = los_channel([0.2, 0.1, d], [0.2, 0.1], &lat, c.wavelength()).unwrap();
        assert!((los.amplitudes[0] - 1.0 / (4.0 * PI * d * d).sqrt()).abs() < 1e-15);
        let expect = Complex64::from_polar(1.0, -2.0 * PI * d / c.wavelength());
        assert!((los.phases[0] - expect).norm() < 1e-12);
    }

    #[test]
    fn los_gains_fall_with_distance() {
        let c = cfg(64);
        let lat = AntennaLattice::new(&c).unwrap();
        let near = los_channel([0.1, 0.0, 0.5], [0.0, 0.0], &lat, c.wavelength()).unwrap();
        let far = los_channel([0.1, 0.0, 1.0], [0.0, 0.0], &lat, c.wavelength()).unwrap();
        assert!(near.amplitudes.iter().zip(&far.amplitudes).all(|(a, b)| a > b));
        assert!(near.phases.iter().all(|h| (h.norm() - 1.0).abs() < 1e-12));
        assert!(los_channel([0.0, 0.0, 0.0], [0.0, 0.0], &lat, c.wavelength()).is_err());
    }

    #[test]
    fn gain_sum_grows_with_antennas() {
        let mut prev = 0.0;
        for m in [16, 100, 400, 900] {
            let c = cfg(m);
            let lat = AntennaLattice::new(&c).unwrap();
            let s = los_channel([0.0, 0.0, 1.0], [0.0, 0.0], &lat, c.wavelength()).unwrap().gain_sum();
            assert!(s > prev);
            prev = s;
        }
    }

    #[test]
    fn steering_examples() {
        let v = steering_vector(0.0, 0.0, 3, 0.05, 0.1);
        assert!(v.iter().all(|x| (x - Complex64::new(1.0 / 3.0, 0.0)).norm() < 1e-15));
        let v = steering_vector(1.0, 0.0, 2, 0.5, 1.0);
        let e = [1.0, 1.0, -1.0, -1.0];
        for (a, b) in v.iter().zip(e) {
            assert!((a - Complex64::new(b / 2.0, 0.0)).norm() < 1e-12);
        }
        assert!(steering_vector_checked(0.3, 0.2, 10, 0.05, 0.1).is_err());
    }

    #[test]
    fn steering_matches_lattice_double_loop() {
        let c = SystemConfig { antenna_spacing: Some(0.03), ..cfg(25) };
        let lat = AntennaLattice::new(&c).unwrap();
        let (pv, ph) = (0.37, -0.21);
        let v = steering_vector(pv, ph, lat.side, lat.spacing, c.wavelength());
        let k = 2.0 * PI / c.wavelength();
        for (m, off) in lat.offsets.iter().enumerate() {
            let (row, col) = lat.index(m);
            // offsets differ from index*spacing by a constant shift, which is a common phase
            let phase = k * (row as f64 * lat.spacing * pv + col as f64 * lat.spacing * ph);
            assert!((v[m] - Complex64::from_polar(0.2, phase)).norm() < 1e-12);
            assert!((off[1] - (row as f64 - 2.0) * lat.spacing).abs() < 1e-15);
            assert!((off[0] - (col as f64 - 2.0) * lat.spacing).abs() < 1e-15);
        }
    }

    #[test]
    fn correlation_root_examples() {
        let c = SystemConfig { nlos_paths: 3, ..cfg(16) };
        let lat = AntennaLattice::new(&c).unwrap();
        let dev = [0.3, -0.2, 0.8];
        let flat = vec![PathAngles { vertical: 0.0, horizontal: 0.0 }; 3];
        let root = correlation_root_from_angles(dev, [0.0, 0.0], &lat, &c, flat);
        for p in 0..3 {
            assert_eq!(root.nlos_gains[p], 1.0);
            for m in 0..16 {
                let e = root.nlos_pathloss[m] / 4.0;
                assert!((root.matrix.get(m, p) - Complex64::new(e, 0.0)).norm() < 1e-15);
            }
        }
        let dead = vec![PathAngles { vertical: PI / 2.0, horizontal: 0.3 }];
        let root = correlation_root_from_angles(dev, [0.0, 0.0], &lat, &c, dead);
        assert!(root.nlos_gains[0] < 1e-7);

        let mut rng = substream(5, &[tag::SAMPLE]);
        let root = correlation_root(dev, [0.0, 0.0], &lat, &c, &mut rng);
        let expect: f64 = root.nlos_pathloss.iter().map(|l| l * l).sum::<f64>()
            * root.nlos_gains.iter().map(|a| a * a).sum::<f64>()
            / 16.0;
        assert!((root.matrix.frobenius_sqr() / expect - 1.0).abs() < 1e-12);
        for m in 0..16 {
            for p in 0..3 {
                assert_eq!(root.row(m)[p], root.column(p)[m]);
            }
        }
    }

    #[test]
    fn rician_limits() {
        let c = SystemConfig { nlos_paths: 4, ..cfg(16) };
        let lat = AntennaLattice::new(&c).unwrap();
        let dev = [0.3, -0.2, 0.8];
        let los = los_channel(dev, [0.0, 0.0], &lat, c.wavelength()).unwrap();
        let mut rng = substream(9, &[tag::SAMPLE]);
        let root = correlation_root(dev, [0.0, 0.0], &lat, &c, &mut rng);
        let h = rician_channel(&los, &root, f64::INFINITY, &mut rng).unwrap();
        assert_eq!(h.total, los.vector);
        let g = complex_normal_vec(&mut rng, 4);
        let h = ChannelRealization::from_draw(&los.vector, &root.matrix, 0.0, &g);
        let direct = root.matrix.mul_vec(&g);
        assert!(h.total.iter().zip(&direct).all(|(a, b)| (a - b).norm() < 1e-15));
        let h = rician_channel(&los, &root, 3.0, &mut rng).unwrap();
        for m in 0..16 {
            assert!((h.total[m] - h.mean[m] - h.fluctuation[m]).norm() < 1e-15);
        }
        assert!(rician_channel(&los, &root, -1.0, &mut rng).is_err());
    }

    #[test]
    fn fluctuation_covariance_matches_root() {
        let c = SystemConfig { nlos_paths: 4, ..cfg(16) };
        let lat = AntennaLattice::new(&c).unwrap();
        let dev = [0.1, 0.2, 0.6];
        let los = los_channel(dev, [0.0, 0.0], &lat, c.wavelength()).unwrap();
        let mut rng = substream(21, &[tag::SAMPLE]);
        let root = correlation_root(dev, [0.0, 0.0], &lat, &c, &mut rng);
        let kappa = 2.0;
        let draws = 10_000;
        let mut cov = vec![Complex64::new(0.0, 0.0); 256];
        for _ in 0..draws {
            let h = rician_channel(&los, &root, kappa, &mut rng).unwrap();
            for a in 0..16 {
                for b in 0..16 {
                    cov[a * 16 + b] += h.fluctuation[a] * h.fluctuation[b].conj();
                }
            }
        }
        let r = &root.matrix;
        for a in 0..16 {
            for b in 0..16 {
                let mut e = Complex64::new(0.0, 0.0);
                for p in 0..4 {
                    e += r.get(a, p) * r.get(b, p).conj();
                }
                e /= kappa + 1.0;
                let s = cov[a * 16 + b] / draws as f64;
                let scale = (r.row_norm_sqr(a) * r.row_norm_sqr(b)).sqrt() / (kappa + 1.0);
                assert!((s - e).norm() <= 0.05 * scale, "entry ({a},{b}): {s} vs {e}");
            }
        }
    }

    #[test]
    fn gating_beyond_cutoff_removes_los() {
        let base = SystemConfig { antennas: 4, devices: 2, lis_count: 4, ..SystemConfig::default() };
        let dep = crate::scenario::place_devices(&base, &Layout::default(), &mut substream(2, &[tag::PLACEMENT])).unwrap();
        for block in 0..20 {
            let key = BlockKey { seed: 2, placement: 0, block };
            for l in 0..4 {
                let d = dep.center_distance(l, 0, 0, 1);
                let kappa = link_kappa(&base, &dep, key, l, 0, 0, 1);
                if d >= base.los_cutoff {
                    assert_eq!(kappa, 0.0);
                }
                assert!(kappa == 0.0 || (kappa - rician_factor(d)).abs() < 1e-12);
            }
        }
        let nlos = SystemConfig { inter_lis: InterLisFading::Nlos, ..base.clone() };
        let key = BlockKey { seed: 2, placement: 0, block: 0 };
        for l in 1..4 {
            assert_eq!(link_kappa(&nlos, &dep, key, l, 0, 0, 0), 0.0);
        }
        let ungated = SystemConfig { los_gating: false, ..base };
        let d = dep.center_distance(0, 0, 0, 1);
        assert!((link_kappa(&ungated, &dep, key, 0, 0, 0, 1) - rician_factor(d)).abs() < 1e-12);
    }

    #[test]
    fn unit_channels_cover_every_other_device() {
        let c = SystemConfig { antennas: 16, devices: 3, lis_count: 4, nlos_paths: 4, ..SystemConfig::default() };
        let dep = crate::scenario::place_devices(&c, &Layout::default(), &mut substream(4, &[tag::PLACEMENT])).unwrap();
        let snrs = dep.snrs(&c).unwrap();
        let lat = AntennaLattice::new(&c).unwrap();
        let key = BlockKey { seed: 4, placement: 0, block: 0 };
        let u = unit_channels(&c, &dep, &snrs, &lat, key, 1, 2).unwrap();
        assert_eq!(u.links.len(), 11);
        assert_eq!(u.contaminators().count(), 3);
        assert!(u.contaminators().all(|i| u.links[i].device == 2 && u.links[i].lis != 1));
        let again = unit_channels(&c, &dep, &snrs, &lat, key, 1, 2).unwrap();
        assert_eq!(u.links[5].scatter, again.links[5].scatter);
        // desired channel gain is the LOS gain sum of the own device
        let own = los_channel(dep.device(1, 2), dep.unit_center(1, 2), &lat, c.wavelength()).unwrap();
        assert!((norm_sqr(&u.desired) - own.gain_sum()).abs() < 1e-15);
    }

    #[test]
    fn channel_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("dump");
        let recs = vec![
            (DumpRecord { lis_from: 0, device: 1, lis_to: 0, unit: 0, kappa: 2.0 }, vec![Complex64::new(1.5, -2.0); 4]),
            (DumpRecord { lis_from: 1, device: 0, lis_to: 0, unit: 0, kappa: 0.0 }, vec![Complex64::new(0.25, 3.0); 4]),
        ];
        write_channel_dump(&stem, 4, &recs).unwrap();
        let (side, data) = read_channel_dump(&stem).unwrap();
        assert_eq!(side.records.len(), 2);
        assert_eq!(data[1], recs[1].1);
        assert_eq!(std::fs::metadata(stem.with_extension("bin")).unwrap().len(), 2 * 4 * 16);
    }
}
