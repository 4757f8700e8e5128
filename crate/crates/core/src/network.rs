//! Hexagonal multi-cell network model.
//!
//! Sites sit on a hex grid with three sectors each. Received power combines a
//! log-distance path loss with a parabolic sectored antenna pattern, users
//! attach to the strongest cell, and per-cell KPIs are aggregated over the
//! attached users. Everything is a pure function of its inputs and a seed.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{child_seed, seeded};

/// SINR value reported for cells without attached users, in dB.
pub const EMPTY_CELL_SINR_DB: f64 = -300.0;

/// Path loss is evaluated at no less than this distance, in meters.
pub const MIN_PATHLOSS_DISTANCE_M: f64 = 10.0;

const SECTORS_PER_SITE: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("n_rings must be >= 0, got {0}")]
    InvalidRings(i64),
    #[error("inter-site distance must be positive and finite, got {0}")]
    InvalidIsd(f64),
    #[error("n_users must be >= 1")]
    NoUsers,
    #[error("invalid propagation parameter {name}: {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("invalid tilt bounds [{min}, {max}]")]
    InvalidTiltBounds { min: f64, max: f64 },
    #[error("cell {0} does not exist")]
    UnknownCell(usize),
}

/// Allowed range of electrical downtilt, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for TiltBounds {
    fn default() -> Self {
        Self { min: 0.0, max: 16.0 }
    }
}

impl TiltBounds {
    pub fn validate(&self) -> Result<(), NetworkError> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(NetworkError::InvalidTiltBounds {
                min: self.min,
                max: self.max,
            });
        }
        Ok(())
    }

    pub fn clamp(&self, tilt: f64) -> f64 {
        tilt.clamp(self.min, self.max)
    }
}

/// One sector antenna.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub cell_id: usize,
    pub site_index: usize,
    /// Boresight azimuth in degrees, counter-clockwise from the +x axis.
    pub azimuth: f64,
    /// Electrical downtilt in degrees; positive points below the horizon.
    pub tilt: f64,
    pub tx_power_dbm: f64,
    /// Antenna height in meters.
    pub height: f64,
}

/// Per-cell radio settings applied when a layout is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellDefaults {
    pub tx_power_dbm: f64,
    pub height: f64,
    pub tilt_bounds: TiltBounds,
    /// Site-wide rotation added to the 0/120/240 sector azimuths.
    pub site_rotation: f64,
}

impl Default for CellDefaults {
    fn default() -> Self {
        Self {
            tx_power_dbm: 46.0,
            height: 25.0,
            tilt_bounds: TiltBounds::default(),
            site_rotation: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub sites: Vec<[f64; 2]>,
    pub cells: Vec<CellConfig>,
    pub inter_site_distance: f64,
    pub n_rings: u32,
    pub tilt_bounds: TiltBounds,
}

/// Number of cells in a layout with `n_rings` rings around the center site.
pub fn cell_count(n_rings: u32) -> usize {
    let n = n_rings as usize;
    SECTORS_PER_SITE * (1 + 3 * n * (n + 1))
}

/// Builds a hex layout with default cell settings.
///
/// The seed draws each cell's initial tilt uniformly from the integer
/// degrees inside the tilt bounds.
pub fn build_layout(n_rings: i64, isd: f64, seed: u64) -> Result<NetworkLayout, NetworkError> {
    build_layout_with(n_rings, isd, seed, &CellDefaults::default())
}

pub fn build_layout_with(
    n_rings: i64,
    isd: f64,
    seed: u64,
    defaults: &CellDefaults,
) -> Result<NetworkLayout, NetworkError> {
    if n_rings < 0 {
        return Err(NetworkError::InvalidRings(n_rings));
    }
    if !(isd.is_finite() && isd > 0.0) {
        return Err(NetworkError::InvalidIsd(isd));
    }
    defaults.tilt_bounds.validate()?;
    let n_rings = u32::try_from(n_rings).map_err(|_| NetworkError::InvalidRings(n_rings))?;

    let sites = hex_sites(n_rings, isd);
    let mut rng = seeded(child_seed(seed, 0x7117));
    let bounds = defaults.tilt_bounds;
    let lo = bounds.min.ceil() as i64;
    let hi = bounds.max.floor() as i64;
    let mut cells = Vec::with_capacity(sites.len() * SECTORS_PER_SITE);
    for site_index in 0..sites.len() {
        for sector in 0..SECTORS_PER_SITE {
            let tilt = if lo <= hi {
                rng.random_range(lo..=hi) as f64
            } else {
                0.5 * (bounds.min + bounds.max)
            };
            cells.push(CellConfig {
                cell_id: site_index * SECTORS_PER_SITE + sector,
                site_index,
                azimuth: wrap_degrees_360(defaults.site_rotation + 120.0 * sector as f64),
                tilt,
                tx_power_dbm: defaults.tx_power_dbm,
                height: defaults.height,
            });
        }
    }
    Ok(NetworkLayout {
        sites,
        cells,
        inter_site_distance: isd,
        n_rings,
        tilt_bounds: bounds,
    })
}

/// Site centers ring by ring, starting with the origin.
fn hex_sites(n_rings: u32, isd: f64) -> Vec<[f64; 2]> {
    // axial hex directions
    const DIRS: [(i64, i64); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];
    let to_xy = |q: i64, r: i64| -> [f64; 2] {
        let (q, r) = (q as f64, r as f64);
        [isd * (q + 0.5 * r), isd * r * 3f64.sqrt() / 2.0]
    };
    let mut sites = vec![[0.0, 0.0]];
    for ring in 1..=n_rings as i64 {
        // start at the ring corner in direction 4 and walk each side
        let (mut q, mut r) = (DIRS[4].0 * ring, DIRS[4].1 * ring);
        for &(dq, dr) in &DIRS {
            for _ in 0..ring {
                sites.push(to_xy(q, r));
                q += dq;
                r += dr;
            }
        }
    }
    sites
}

impl NetworkLayout {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn site_of(&self, cell_id: usize) -> Result<[f64; 2], NetworkError> {
        self.cells
            .get(cell_id)
            .map(|c| self.sites[c.site_index])
            .ok_or(NetworkError::UnknownCell(cell_id))
    }

    /// Radius of the disc in which users are dropped.
    pub fn deployment_radius(&self) -> f64 {
        self.n_rings as f64 * self.inter_site_distance + self.inter_site_distance / 3f64.sqrt()
    }

    pub fn tilts(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.tilt).collect()
    }

    /// Sets a cell's tilt, clamped into the layout's bounds.
    pub fn set_tilt(&mut self, cell_id: usize, tilt: f64) -> Result<(), NetworkError> {
        let bounds = self.tilt_bounds;
        let cell = self
            .cells
            .get_mut(cell_id)
            .ok_or(NetworkError::UnknownCell(cell_id))?;
        cell.tilt = bounds.clamp(tilt);
        Ok(())
    }

    /// Other cells ordered by distance between their sites and the site of
    /// `cell_id`, ties broken by cell id. Co-sited cells come first.
    pub fn neighbors(&self, cell_id: usize) -> Result<Vec<usize>, NetworkError> {
        let own = self.site_of(cell_id)?;
        let mut keyed: Vec<(i64, usize)> = self
            .cells
            .iter()
            .filter(|c| c.cell_id != cell_id)
            .map(|c| {
                let s = self.sites[c.site_index];
                let d = (s[0] - own[0]).hypot(s[1] - own[1]);
                // micrometer grid so symmetric sites tie exactly
                ((d * 1e6).round() as i64, c.cell_id)
            })
            .collect();
        keyed.sort_unstable();
        Ok(keyed.into_iter().map(|(_, id)| id).collect())
    }
}

fn wrap_degrees_360(a: f64) -> f64 {
    a.rem_euclid(360.0)
}

fn wrap_degrees_180(a: f64) -> f64 {
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

/// Macro-cell propagation and antenna parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    pub pl_intercept_db: f64,
    pub pl_slope: f64,
    pub hpbw_v: f64,
    pub sla_v: f64,
    pub max_horiz_atten_db: f64,
    pub hpbw_h: f64,
    pub noise_dbm: f64,
    pub ue_height: f64,
    /// Users at or above this SINR count as covered.
    pub sinr_threshold_db: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            pl_intercept_db: 128.1,
            pl_slope: 37.6,
            hpbw_v: 10.0,
            sla_v: 20.0,
            max_horiz_atten_db: 25.0,
            hpbw_h: 65.0,
            noise_dbm: -95.0,
            ue_height: 1.5,
            sinr_threshold_db: -6.0,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let checks: [(&'static str, f64, bool); 9] = [
            ("pl_intercept_db", self.pl_intercept_db, true),
            ("pl_slope", self.pl_slope, self.pl_slope > 0.0),
            ("hpbw_v", self.hpbw_v, self.hpbw_v > 0.0 && self.hpbw_v <= 90.0),
            ("sla_v", self.sla_v, self.sla_v > 0.0),
            ("max_horiz_atten_db", self.max_horiz_atten_db, self.max_horiz_atten_db > 0.0),
            ("hpbw_h", self.hpbw_h, self.hpbw_h > 0.0 && self.hpbw_h <= 90.0),
            ("noise_dbm", self.noise_dbm, true),
            ("ue_height", self.ue_height, self.ue_height >= 0.0),
            ("sinr_threshold_db", self.sinr_threshold_db, true),
        ];
        for (name, value, ok) in checks {
            if !value.is_finite() || !ok {
                return Err(NetworkError::InvalidParam { name, value });
            }
        }
        Ok(())
    }
}

/// Vertical antenna attenuation in dB for elevation `theta` (degrees below
/// the horizon) and electrical `tilt`; lies in `[-sla_v, 0]`.
pub fn vertical_gain(theta: f64, tilt: f64, params: &PropagationParams) -> f64 {
    let x = (theta - tilt) / params.hpbw_v;
    -(12.0 * x * x).min(params.sla_v)
}

/// Horizontal antenna attenuation in dB for an off-boresight angle `phi`.
pub fn horizontal_gain(phi: f64, params: &PropagationParams) -> f64 {
    let x = phi / params.hpbw_h;
    -(12.0 * x * x).min(params.max_horiz_atten_db)
}

/// Log-distance path loss in dB, with the distance floored at 10 m.
pub fn pathloss_db(distance: f64, params: &PropagationParams) -> f64 {
    let d = distance.max(MIN_PATHLOSS_DISTANCE_M);
    params.pl_intercept_db + params.pl_slope * (d / 1000.0).log10()
}

/// Received power in dBm at `ue` from `cell` located at `site`.
pub fn received_power_dbm(
    cell: &CellConfig,
    site: [f64; 2],
    ue: [f64; 2],
    params: &PropagationParams,
) -> f64 {
    let dx = ue[0] - site[0];
    let dy = ue[1] - site[1];
    let d2 = dx.hypot(dy);
    let dh = cell.height - params.ue_height;
    let d3 = d2.hypot(dh);
    let theta = dh.atan2(d2).to_degrees();
    let bearing = dy.atan2(dx).to_degrees();
    let phi = wrap_degrees_180(bearing - cell.azimuth);
    let pattern = -(-(vertical_gain(theta, cell.tilt, params) + horizontal_gain(phi, params)))
        .min(params.max_horiz_atten_db);
    cell.tx_power_dbm + pattern - pathloss_db(d3, params)
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn lin_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Per-cell key performance indicators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiVector {
    pub coverage: f64,
    pub capacity: f64,
    pub mean_sinr_db: f64,
    pub edge_sinr_db: f64,
    pub load: usize,
}

impl KpiVector {
    pub const LEN: usize = 5;

    pub fn empty() -> Self {
        Self {
            coverage: 0.0,
            capacity: 0.0,
            mean_sinr_db: EMPTY_CELL_SINR_DB,
            edge_sinr_db: EMPTY_CELL_SINR_DB,
            load: 0,
        }
    }

    /// `(coverage, capacity, mean_sinr_db, edge_sinr_db, load)`.
    pub fn to_array(&self) -> [f64; 5] {
        [
            self.coverage,
            self.capacity,
            self.mean_sinr_db,
            self.edge_sinr_db,
            self.load as f64,
        ]
    }
}

/// One snapshot of dropped users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDrop {
    pub positions: Vec<[f64; 2]>,
    /// Serving cell id per user.
    pub attachment: Vec<usize>,
    pub sinr_db: Vec<f64>,
}

/// Draws `n_users` uniformly in the deployment disc.
pub fn drop_users(layout: &NetworkLayout, n_users: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = seeded(seed);
    let radius = layout.deployment_radius();
    (0..n_users)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let a = std::f64::consts::TAU * rng.random::<f64>();
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}

/// Drops users and measures every cell.
pub fn evaluate_network(
    layout: &NetworkLayout,
    params: &PropagationParams,
    n_users: usize,
    seed: u64,
) -> Result<(UserDrop, Vec<KpiVector>), NetworkError> {
    if n_users < 1 {
        return Err(NetworkError::NoUsers);
    }
    params.validate()?;
    let positions = drop_users(layout, n_users, seed);
    evaluate_positions(layout, params, positions)
}

/// Measures a given set of user positions.
pub fn evaluate_positions(
    layout: &NetworkLayout,
    params: &PropagationParams,
    positions: Vec<[f64; 2]>,
) -> Result<(UserDrop, Vec<KpiVector>), NetworkError> {
    if positions.is_empty() {
        return Err(NetworkError::NoUsers);
    }
    let rx_mw: Vec<Vec<f64>> = positions
        .iter()
        .map(|&ue| {
            layout
                .cells
                .iter()
                .map(|c| dbm_to_mw(received_power_dbm(c, layout.sites[c.site_index], ue, params)))
                .collect()
        })
        .collect();
    let (attachment, sinr_db) = attach_users(&rx_mw, dbm_to_mw(params.noise_dbm));
    let kpis = cell_kpis(layout.n_cells(), &attachment, &sinr_db, params.sinr_threshold_db);
    Ok((
        UserDrop {
            positions,
            attachment,
            sinr_db,
        },
        kpis,
    ))
}

/// Strongest-power attachment and SINR from a users × cells power matrix
/// in milliwatts. Ties go to the lower cell id.
pub fn attach_users(rx_mw: &[Vec<f64>], noise_mw: f64) -> (Vec<usize>, Vec<f64>) {
    let mut attachment = Vec::with_capacity(rx_mw.len());
    let mut sinr_db = Vec::with_capacity(rx_mw.len());
    for row in rx_mw {
        let mut best = 0;
        for (i, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = i;
            }
        }
        let total: f64 = row.iter().sum();
        let interference = (total - row[best]).max(0.0);
        let sinr = row[best] / (noise_mw + interference);
        attachment.push(best);
        sinr_db.push(lin_to_db(sinr).max(EMPTY_CELL_SINR_DB));
    }
    (attachment, sinr_db)
}

/// Aggregates per-user SINR into per-cell KPIs.
pub fn cell_kpis(
    n_cells: usize,
    attachment: &[usize],
    sinr_db: &[f64],
    threshold_db: f64,
) -> Vec<KpiVector> {
    let mut per_cell: Vec<Vec<f64>> = vec![Vec::new(); n_cells];
    for (&cell, &s) in attachment.iter().zip(sinr_db) {
        per_cell[cell].push(s);
    }
    per_cell
        .into_iter()
        .map(|mut samples| {
            if samples.is_empty() {
                return KpiVector::empty();
            }
            let n = samples.len() as f64;
            let covered = samples.iter().filter(|&&s| s >= threshold_db).count() as f64;
            let capacity = samples
                .iter()
                .map(|&s| (1.0 + 10f64.powf(s / 10.0)).log2())
                .sum::<f64>()
                / n;
            let mean = samples.iter().sum::<f64>() / n;
            samples.sort_by(f64::total_cmp);
            KpiVector {
                coverage: covered / n,
                capacity,
                mean_sinr_db: mean,
                edge_sinr_db: percentile_sorted(&samples, 5.0),
                load: samples.len(),
            }
        })
        .collect()
}

/// Linear-interpolated percentile of an ascending, nonempty slice.
pub fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    let pos = (pct / 100.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
