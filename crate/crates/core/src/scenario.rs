//! System parameters, multi-LIS geometry, device placement and power control.
//!
//! Every LIS lies in the `z = 0` plane of its own local frame and serves
//! devices located in front of it (`z > 0`). A device's LIS unit is the
//! `2L x 2L` square centered on the device's `(x, y)` projection; its `M`
//! antennas form a `sqrt(M) x sqrt(M)` lattice inside that square.

use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::channel::los_amplitude;
use crate::error::{LisError, Result};
use crate::rng::StreamRng;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Rejection-sampling budget per device.
pub const PLACEMENT_ATTEMPTS: usize = 10_000;

pub type Point3 = [f64; 3];

/// Fading law for links between a device and a unit of a different LIS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterLisFading {
    /// Distance-dependent Rician fading with probabilistic LOS.
    #[default]
    Rician,
    /// Correlated Rayleigh fading (no LOS component).
    Nlos,
}

/// Scalar system parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Antennas per LIS unit, `M` (perfect square).
    pub antennas: usize,
    /// Devices (and units) per LIS, `K`.
    pub devices: usize,
    /// Number of LISs, `N`.
    pub lis_count: usize,
    /// Coherence block length `T` in symbols.
    pub coherence_len: usize,
    /// Pilot training length `t` in symbols; `None` uses `t = K`.
    pub pilot_len: Option<usize>,
    /// Half side length `L` of a unit in meters.
    pub half_side: f64,
    /// Carrier frequency in Hz.
    pub carrier_freq: f64,
    /// Antenna spacing in meters; `None` spreads the lattice over the unit (`2L / sqrt(M)`).
    pub antenna_spacing: Option<f64>,
    /// Dominant NLOS path count `P`.
    pub nlos_paths: usize,
    /// NLOS path-loss exponent.
    pub pathloss_exp: f64,
    /// LOS cutoff distance in meters.
    pub los_cutoff: f64,
    /// Pilot target SNR (linear).
    pub pilot_snr: f64,
    /// Data target SNR (linear).
    pub data_snr: f64,
    pub inter_lis: InterLisFading,
    /// Draw LOS existence of interference links from the distance law.
    pub los_gating: bool,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            antennas: 900,
            devices: 20,
            lis_count: 4,
            coherence_len: 500,
            pilot_len: None,
            half_side: 0.25,
            carrier_freq: 3.0e9,
            antenna_spacing: None,
            nlos_paths: 20,
            pathloss_exp: 3.7,
            los_cutoff: 10.0,
            pilot_snr: 1.0,
            data_snr: db_to_linear(3.0),
            inter_lis: InterLisFading::Rician,
            los_gating: true,
            seed: 1,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl SystemConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    pub fn pilot_length(&self) -> usize {
        self.pilot_len.unwrap_or(self.devices)
    }

    /// `sqrt(M)`, or an error if `M` is not a perfect square.
    pub fn lattice_side(&self) -> Result<usize> {
        lattice_side(self.antennas)
    }

    pub fn spacing(&self) -> f64 {
        match self.antenna_spacing {
            Some(s) => s,
            None => 2.0 * self.half_side / (self.antennas as f64).sqrt(),
        }
    }

    pub fn with_antennas(&self, m: usize) -> Self {
        SystemConfig {
            antennas: m,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let side = lattice_side(self.antennas).map_err(|_| {
            LisError::config("antennas", format!("{} is not a positive perfect square", self.antennas))
        })?;
        if self.devices == 0 {
            return Err(LisError::config("devices", "must be at least 1"));
        }
        if self.lis_count == 0 {
            return Err(LisError::config("lis_count", "must be at least 1"));
        }
        let t = self.pilot_length();
        if t < self.devices {
            return Err(LisError::config(
                "pilot_len",
                format!("pilot length {t} is shorter than the device count {}", self.devices),
            ));
        }
        if t > self.coherence_len {
            return Err(LisError::config(
                "pilot_len",
                format!("pilot length {t} exceeds the coherence block {}", self.coherence_len),
            ));
        }
        positive("half_side", self.half_side)?;
        positive("carrier_freq", self.carrier_freq)?;
        positive("los_cutoff", self.los_cutoff)?;
        positive("pilot_snr", self.pilot_snr)?;
        positive("data_snr", self.data_snr)?;
        if !(self.pathloss_exp.is_finite() && self.pathloss_exp >= 0.0) {
            return Err(LisError::config("pathloss_exp", "must be finite and non-negative"));
        }
        if self.nlos_paths == 0 {
            return Err(LisError::config("nlos_paths", "must be at least 1"));
        }
        if let Some(s) = self.antenna_spacing {
            positive("antenna_spacing", s)?;
        }
        if side as f64 * self.spacing() > 2.0 * self.half_side * (1.0 + 1e-12) {
            return Err(LisError::config(
                "antenna_spacing",
                "lattice does not fit inside the 2L x 2L unit",
            ));
        }
        Ok(())
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(LisError::config(key, format!("must be positive and finite, got {v}")))
    }
}

pub fn lattice_side(m: usize) -> Result<usize> {
    let s = (m as f64).sqrt().round() as usize;
    if m == 0 || s * s != m {
        return Err(LisError::Geometry(format!("{m} antennas do not form a square lattice")));
    }
    Ok(s)
}

/// Orientation of an LIS plane's normal in global coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facing {
    /// Normal along `+z`; local and global axes coincide.
    Up,
    /// Normal along `-z`; the local frame is rotated by pi about the `y` axis.
    Down,
}

/// Anchor point and orientation of one LIS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LisPose {
    pub origin: Point3,
    pub facing: Facing,
}

impl LisPose {
    pub fn to_global(&self, p: Point3) -> Point3 {
        let o = self.origin;
        match self.facing {
            Facing::Up => [o[0] + p[0], o[1] + p[1], o[2] + p[2]],
            Facing::Down => [o[0] - p[0], o[1] + p[1], o[2] - p[2]],
        }
    }

    pub fn to_local(&self, g: Point3) -> Point3 {
        let o = self.origin;
        match self.facing {
            Facing::Up => [g[0] - o[0], g[1] - o[1], g[2] - o[2]],
            Facing::Down => [o[0] - g[0], g[1] - o[1], o[2] - g[2]],
        }
    }
}

/// Multi-LIS geometry and the per-LIS device region.
///
/// Without `custom` poses, the built-in "quad" arrangement is used: a target
/// LIS at the origin, a facing LIS `facing_distance` in front of it, and two
/// side LISs separated from the target by `side_gap`. The first `N` of
/// `[target, facing, left, right]` are used, so `N <= 4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Layout {
    /// LIS surface extent `[x_L, y_L]` in meters.
    pub surface: [f64; 2],
    /// Gap between side-by-side LISs (`d_x`) in meters.
    pub side_gap: f64,
    /// Distance between facing LIS planes (`d_z`) in meters.
    pub facing_distance: f64,
    /// Device region `[width, depth, height]` in front of each LIS, meters.
    pub region: [f64; 3],
    pub custom: Option<Vec<LisPose>>,
}

impl Default for Layout {
    fn default() -> Self {
        Layout {
            surface: [4.0, 4.0],
            side_gap: 4.0,
            facing_distance: 6.0,
            region: [4.0, 4.0, 2.0],
            custom: None,
        }
    }
}

impl Layout {
    pub fn poses(&self, n: usize) -> Result<Vec<LisPose>> {
        if let Some(custom) = &self.custom {
            if custom.len() < n {
                return Err(LisError::config(
                    "layout.custom",
                    format!("{} poses given for {n} LISs", custom.len()),
                ));
            }
            return Ok(custom[..n].to_vec());
        }
        if n > 4 {
            return Err(LisError::config(
                "lis_count",
                format!("the quad layout holds at most 4 LISs, got {n}"),
            ));
        }
        let pitch = self.surface[0] + self.side_gap;
        let quad = [
            LisPose { origin: [0.0, 0.0, 0.0], facing: Facing::Up },
            LisPose { origin: [0.0, 0.0, self.facing_distance], facing: Facing::Down },
            LisPose { origin: [-pitch, 0.0, 0.0], facing: Facing::Up },
            LisPose { origin: [pitch, 0.0, 0.0], facing: Facing::Up },
        ];
        Ok(quad[..n].to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.region.iter().enumerate() {
            positive(&format!("layout.region[{i}]"), *v)?;
        }
        for (i, v) in self.surface.iter().enumerate() {
            positive(&format!("layout.surface[{i}]"), *v)?;
        }
        if !(self.side_gap.is_finite() && self.side_gap >= 0.0) {
            return Err(LisError::config("layout.side_gap", "must be finite and non-negative"));
        }
        positive("layout.facing_distance", self.facing_distance)
    }
}

/// Antenna offsets of one unit relative to its center, row-major over
/// `(row, col)` with the row index along `y` and the column index along `x`.
#[derive(Debug, Clone)]
pub struct AntennaLattice {
    pub side: usize,
    pub spacing: f64,
    pub offsets: Vec<[f64; 2]>,
}

impl AntennaLattice {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        let side = cfg.lattice_side()?;
        let spacing = cfg.spacing();
        let half = (side as f64 - 1.0) / 2.0;
        let mut offsets = Vec::with_capacity(side * side);
        for row in 0..side {
            for col in 0..side {
                offsets.push([(col as f64 - half) * spacing, (row as f64 - half) * spacing]);
            }
        }
        Ok(AntennaLattice { side, spacing, offsets })
    }

    /// `(row, col)` of antenna `m`.
    pub fn index(&self, m: usize) -> (usize, usize) {
        (m / self.side, m % self.side)
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// LIS anchors and device positions.
///
/// Device coordinates are stored in the local frame of the serving LIS, so the
/// unit center of device `(n, k)` is simply its `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    poses: Vec<LisPose>,
    devices: Vec<Vec<Point3>>,
}

impl Deployment {
    pub fn new(poses: Vec<LisPose>, devices: Vec<Vec<Point3>>) -> Result<Self> {
        if poses.len() != devices.len() || poses.is_empty() {
            return Err(LisError::DimensionMismatch(format!(
                "{} poses for {} device groups",
                poses.len(),
                devices.len()
            )));
        }
        let k = devices[0].len();
        for (n, group) in devices.iter().enumerate() {
            if group.len() != k {
                return Err(LisError::DimensionMismatch(format!(
                    "LIS {n} has {} devices, LIS 0 has {k}",
                    group.len()
                )));
            }
            for (j, d) in group.iter().enumerate() {
                if !(d[2] > 0.0) {
                    return Err(LisError::Geometry(format!(
                        "device {j} of LIS {n} is not in front of its LIS (z = {})",
                        d[2]
                    )));
                }
            }
        }
        Ok(Deployment { poses, devices })
    }

    pub fn lis_count(&self) -> usize {
        self.poses.len()
    }

    pub fn devices_per_lis(&self) -> usize {
        self.devices[0].len()
    }

    pub fn poses(&self) -> &[LisPose] {
        &self.poses
    }

    pub fn lis_origins(&self) -> Vec<Point3> {
        self.poses.iter().map(|p| p.origin).collect()
    }

    /// Position of device `(l, j)` in its own LIS frame.
    pub fn device(&self, l: usize, j: usize) -> Point3 {
        self.devices[l][j]
    }

    pub fn device_global(&self, l: usize, j: usize) -> Point3 {
        self.poses[l].to_global(self.devices[l][j])
    }

    /// Position of device `(l, j)` in the frame of LIS `n`.
    pub fn device_in_frame(&self, n: usize, l: usize, j: usize) -> Point3 {
        if n == l {
            self.devices[l][j]
        } else {
            self.poses[n].to_local(self.device_global(l, j))
        }
    }

    pub fn unit_center(&self, n: usize, k: usize) -> [f64; 2] {
        let d = self.devices[n][k];
        [d[0], d[1]]
    }

    /// Antenna `m` of unit `(n, k)` in the frame of LIS `n`.
    pub fn antenna_position(&self, cfg: &SystemConfig, n: usize, k: usize, m: usize) -> Result<Point3> {
        if n >= self.lis_count() {
            return Err(LisError::IndexOutOfRange { what: "lis", index: n, limit: self.lis_count() });
        }
        if k >= self.devices_per_lis() {
            return Err(LisError::IndexOutOfRange { what: "unit", index: k, limit: self.devices_per_lis() });
        }
        if m >= cfg.antennas {
            return Err(LisError::IndexOutOfRange { what: "antenna", index: m, limit: cfg.antennas });
        }
        let lattice = AntennaLattice::new(cfg)?;
        let c = self.unit_center(n, k);
        let o = lattice.offsets[m];
        Ok([c[0] + o[0], c[1] + o[1], 0.0])
    }

    /// Distance from device `(l, j)` to the center of unit `(n, k)`.
    pub fn center_distance(&self, l: usize, j: usize, n: usize, k: usize) -> f64 {
        let p = self.device_in_frame(n, l, j);
        let c = self.unit_center(n, k);
        ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + p[2] * p[2]).sqrt()
    }

    /// The first `n` LISs only.
    pub fn restrict_lis(&self, n: usize) -> Deployment {
        let n = n.min(self.lis_count()).max(1);
        Deployment {
            poses: self.poses[..n].to_vec(),
            devices: self.devices[..n].to_vec(),
        }
    }

    /// The first `k` devices of every LIS (the scheduling priority order).
    pub fn truncate_devices(&self, k: usize) -> Deployment {
        Deployment {
            poses: self.poses.clone(),
            devices: self.devices.iter().map(|g| g[..k.min(g.len())].to_vec()).collect(),
        }
    }

    /// True when every pair of units of the same LIS is disjoint.
    pub fn units_disjoint(&self, half_side: f64) -> bool {
        let side = 2.0 * half_side;
        self.devices.iter().all(|g| {
            g.iter().enumerate().all(|(a, p)| g[..a].iter().all(|q| squares_disjoint(*p, *q, side)))
        })
    }

    /// Pilot and data transmit SNRs of every device.
    pub fn snrs(&self, cfg: &SystemConfig) -> Result<Vec<Vec<DeviceSnr>>> {
        self.devices
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&p| {
                        let c = [p[0], p[1]];
                        Ok(DeviceSnr {
                            pilot: transmit_snr(p, c, cfg.pilot_snr)?,
                            data: transmit_snr(p, c, cfg.data_snr)?,
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

fn squares_disjoint(a: Point3, b: Point3, side: f64) -> bool {
    (a[0] - b[0]).abs() >= side || (a[1] - b[1]).abs() >= side
}

fn sample_device<R: Rng>(region: [f64; 3], rng: &mut R) -> Point3 {
    let x = (rng.random::<f64>() - 0.5) * region[0];
    let y = (rng.random::<f64>() - 0.5) * region[1];
    // (0, h]: strictly in front of the surface
    let z = (1.0 - rng.random::<f64>()) * region[2];
    [x, y, z]
}

/// Places devices of one LIS in priority order; returns early when the budget runs out.
fn place_group<R: Rng>(
    region: [f64; 3],
    side: f64,
    count: usize,
    rng: &mut R,
) -> std::result::Result<Vec<Point3>, (Vec<Point3>, usize)> {
    let mut placed: Vec<Point3> = Vec::with_capacity(count);
    while placed.len() < count {
        let mut accepted = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let cand = sample_device(region, rng);
            if placed.iter().all(|q| squares_disjoint(cand, *q, side)) {
                accepted = Some(cand);
                break;
            }
        }
        match accepted {
            Some(p) => placed.push(p),
            None => {
                let failed = placed.len();
                return Err((placed, failed));
            }
        }
    }
    Ok(placed)
}

/// Draws `K` devices per LIS uniformly in the device region, rejection-resampling
/// until all units of the same LIS are disjoint.
///
/// Each LIS uses its own child stream drawn from `rng` in LIS order, so the
/// devices of the first LISs do not depend on how many LISs follow.
pub fn place_devices<R: RngCore>(cfg: &SystemConfig, layout: &Layout, rng: &mut R) -> Result<Deployment> {
    cfg.validate()?;
    layout.validate()?;
    let poses = layout.poses(cfg.lis_count)?;
    let side = 2.0 * cfg.half_side;
    let mut devices = Vec::with_capacity(poses.len());
    for lis in 0..poses.len() {
        let mut child = StreamRng::seed_from_u64(rng.next_u64());
        match place_group(layout.region, side, cfg.devices, &mut child) {
            Ok(g) => devices.push(g),
            Err((_, device)) => {
                return Err(LisError::InfeasiblePlacement { lis, device, attempts: PLACEMENT_ATTEMPTS })
            }
        }
    }
    Deployment::new(poses, devices)
}

/// Places up to `max_devices` per LIS, stopping at the first device the budget
/// cannot fit. All LISs are truncated to the smallest count reached, and the
/// prefix of any pool is itself a valid deployment.
pub fn place_pool<R: RngCore>(
    cfg: &SystemConfig,
    layout: &Layout,
    max_devices: usize,
    rng: &mut R,
) -> Result<Deployment> {
    layout.validate()?;
    let poses = layout.poses(cfg.lis_count)?;
    let side = 2.0 * cfg.half_side;
    let mut groups = Vec::with_capacity(poses.len());
    for _ in 0..poses.len() {
        let mut child = StreamRng::seed_from_u64(rng.next_u64());
        let g = match place_group(layout.region, side, max_devices, &mut child) {
            Ok(g) => g,
            Err((g, _)) => g,
        };
        groups.push(g);
    }
    let k = groups.iter().map(Vec::len).min().unwrap_or(0);
    if k == 0 {
        return Err(LisError::InfeasiblePlacement { lis: 0, device: 0, attempts: PLACEMENT_ATTEMPTS });
    }
    for g in &mut groups {
        g.truncate(k);
    }
    Deployment::new(poses, groups)
}

/// Probability that a link of length `d` has a LOS component.
pub fn los_probability(d: f64, cutoff: f64) -> f64 {
    if d <= 0.0 {
        1.0
    } else if d < cutoff {
        (cutoff - d) / cutoff
    } else {
        0.0
    }
}

pub fn rician_factor_db(d: f64) -> f64 {
    13.0 - 0.03 * d
}

/// Linear Rician factor of a link of length `d` meters.
pub fn rician_factor(d: f64) -> f64 {
    db_to_linear(rician_factor_db(d))
}

/// Transmit SNRs of one device after power control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceSnr {
    pub pilot: f64,
    pub data: f64,
}

/// SNR that delivers `target` at the center point of the device's unit:
/// `rho * (beta_center)^2 = target`.
pub fn transmit_snr(device: Point3, unit_center: [f64; 2], target: f64) -> Result<f64> {
    let z = device[2];
    let d = ((device[0] - unit_center[0]).powi(2) + (device[1] - unit_center[1]).powi(2) + z * z).sqrt();
    if !(z > 0.0) {
        return Err(LisError::Degenerate(format!("device on or behind the LIS plane (z = {z})")));
    }
    let gain = los_amplitude(z, d);
    Ok(target / (gain * gain))
}
