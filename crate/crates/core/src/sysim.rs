//! Rural-macro system-level drops: a 19-site, 3-sector hexagonal network
//! with TR 38.901 RMa pathloss, sector antenna patterns, exponentially
//! correlated log-normal shadowing and strongest-SINR attachment.
//!
//! Conventions: angles in degrees measured counter-clockwise from east;
//! sector `3s + j` of site `s` points at `90° + 120°·j`, so sector 0 is the
//! north-facing sector of the central site, where users are measured.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelStats, DEFAULT_TIE_EPSILON};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, mix64, stream};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Sector measured by the experiments.
pub const MEASURED_SECTOR: usize = 0;
const MAX_REDROPS: usize = 1000;

/// What the per-user channel quality handed to the allocator is referenced to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkMetric {
    /// Serving power over thermal noise.
    #[default]
    Snr,
    /// Serving power over noise plus all other sectors at full power.
    Sinr,
}

/// Scenario parameters. Defaults reproduce the RMa evaluation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkScenario {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub isd_m: f64,
    pub n_sites: usize,
    pub sectors_per_site: usize,
    pub tx_power_dbm: f64,
    pub bs_height_m: f64,
    pub ue_height_m: f64,
    pub bs_gain_dbi: f64,
    pub ue_gain_dbi: f64,
    pub ue_noise_figure_db: f64,
    pub shadow_sigma_db: f64,
    pub shadow_corr_dist_m: f64,
    pub indoor_fraction: f64,
    pub n_subchannels: usize,
    pub indoor_loss_db: f64,
    pub in_car_loss_db: f64,
    pub building_height_m: f64,
    pub street_width_m: f64,
    pub h_beamwidth_deg: f64,
    pub v_beamwidth_deg: f64,
    pub max_attenuation_db: f64,
    pub side_lobe_db: f64,
    pub electrical_tilt_deg: f64,
    pub link_metric: LinkMetric,
}

impl Default for NetworkScenario {
    fn default() -> Self {
        Self {
            carrier_freq_hz: 700e6,
            bandwidth_hz: 10e6,
            isd_m: 1732.0,
            n_sites: 19,
            sectors_per_site: 3,
            tx_power_dbm: 46.0,
            bs_height_m: 35.0,
            ue_height_m: 1.5,
            bs_gain_dbi: 8.0,
            ue_gain_dbi: 0.0,
            ue_noise_figure_db: 7.0,
            shadow_sigma_db: 7.0,
            shadow_corr_dist_m: 120.0,
            indoor_fraction: 0.5,
            n_subchannels: 10,
            indoor_loss_db: 10.0,
            in_car_loss_db: 9.0,
            building_height_m: 5.0,
            street_width_m: 20.0,
            h_beamwidth_deg: 65.0,
            v_beamwidth_deg: 65.0,
            max_attenuation_db: 30.0,
            side_lobe_db: 30.0,
            electrical_tilt_deg: 6.0,
            link_metric: LinkMetric::Snr,
        }
    }
}

impl NetworkScenario {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.carrier_freq_hz,
            self.bandwidth_hz,
            self.isd_m,
            self.bs_height_m,
            self.ue_height_m,
            self.shadow_corr_dist_m,
            self.building_height_m,
            self.street_width_m,
            self.h_beamwidth_deg,
            self.v_beamwidth_deg,
            self.max_attenuation_db,
            self.side_lobe_db,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("scenario values must be positive".into()));
        }
        if ![1, 7, 19].contains(&self.n_sites) || self.sectors_per_site != 3 {
            return Err(Error::InvalidInput(format!(
                "layout supports 1, 7 or 19 sites with 3 sectors, got {} x {}",
                self.n_sites, self.sectors_per_site
            )));
        }
        if !(0.0..=1.0).contains(&self.indoor_fraction) || self.n_subchannels == 0 || !(self.shadow_sigma_db >= 0.0) {
            return Err(Error::InvalidInput(
                "indoor fraction, subchannels or shadowing out of range".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// `−174 dBm/Hz + 10·log₁₀(BW) + NF`.
    pub fn noise_floor_dbm(&self) -> f64 {
        -174.0 + 10.0 * self.bandwidth_hz.log10() + self.ue_noise_figure_db
    }
}

/// One sector of the layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub id: usize,
    pub site: usize,
    pub position: [f64; 2],
    pub boresight_deg: f64,
}

/// Site centres (central site first, then ring by ring) and their sectors.
pub fn layout_sites(scenario: &NetworkScenario) -> Vec<Sector> {
    let rings: i64 = match scenario.n_sites {
        1 => 0,
        7 => 1,
        _ => 2,
    };
    let mut axial = Vec::new();
    for ring in 0..=rings {
        for q in -rings..=rings {
            for r in -rings..=rings {
                let dist = q.abs().max(r.abs()).max((q + r).abs());
                if dist == ring {
                    axial.push((q, r));
                }
            }
        }
    }
    let mut sectors = Vec::with_capacity(axial.len() * 3);
    for (site, (q, r)) in axial.into_iter().enumerate() {
        let x = scenario.isd_m * (q as f64 + r as f64 / 2.0);
        let y = scenario.isd_m * (r as f64 * 3f64.sqrt() / 2.0);
        for j in 0..3 {
            sectors.push(Sector {
                id: 3 * site + j,
                site,
                position: [x, y],
                boresight_deg: 90.0 + 120.0 * j as f64,
            });
        }
    }
    sectors
}

/// Sector antenna gain (dBi) for horizontal and vertical offsets from the
/// boresight and electrical tilt.
pub fn sector_gain(h_offset_deg: f64, v_offset_deg: f64, scenario: &NetworkScenario) -> f64 {
    let h = wrap_deg(h_offset_deg);
    let a_h = -(12.0 * (h / scenario.h_beamwidth_deg).powi(2)).min(scenario.max_attenuation_db);
    let a_v = -(12.0 * (v_offset_deg / scenario.v_beamwidth_deg).powi(2)).min(scenario.side_lobe_db);
    scenario.bs_gain_dbi - (-(a_h + a_v)).min(scenario.max_attenuation_db)
}

fn wrap_deg(a: f64) -> f64 {
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

/// RMa pathloss in dB for a 2-D distance in `[10 m, 10 km]`.
pub fn pathloss_rma(d_2d: f64, scenario: &NetworkScenario, los: bool) -> Result<f64> {
    if !(10.0..=10_000.0).contains(&d_2d) {
        return Err(Error::InvalidInput(format!(
            "RMa pathloss valid on [10, 10000] m, got {d_2d}"
        )));
    }
    let h_bs = scenario.bs_height_m;
    let h_ut = scenario.ue_height_m;
    let h = scenario.building_height_m;
    let w = scenario.street_width_m;
    let fc_ghz = scenario.carrier_freq_hz / 1e9;
    let d_3d = (d_2d * d_2d + (h_bs - h_ut).powi(2)).sqrt();
    let d_bp = 2.0 * PI * h_bs * h_ut * scenario.carrier_freq_hz / SPEED_OF_LIGHT;

    let pl1 = |d: f64| {
        20.0 * (40.0 * PI * d * fc_ghz / 3.0).log10() + (0.03 * h.powf(1.72)).min(10.0) * d.log10()
            - (0.044 * h.powf(1.72)).min(14.77)
            + 0.002 * h.log10() * d
    };
    let pl_los = if d_2d <= d_bp {
        pl1(d_3d)
    } else {
        pl1(d_bp) + 40.0 * (d_3d / d_bp).log10()
    };
    if los {
        return Ok(pl_los);
    }
    let pl_nlos = 161.04 - 7.1 * w.log10() + 7.5 * h.log10() - (24.37 - 3.7 * (h / h_bs).powi(2)) * h_bs.log10()
        + (43.42 - 3.1 * h_bs.log10()) * (d_3d.log10() - 3.0)
        + 20.0 * fc_ghz.log10()
        - (3.2 * (11.75 * h_ut).log10().powi(2) - 4.97);
    Ok(pl_los.max(pl_nlos))
}

/// RMa line-of-sight probability.
pub fn los_probability(d_2d: f64) -> f64 {
    if d_2d <= 10.0 {
        1.0
    } else {
        (-(d_2d - 10.0) / 1000.0).exp()
    }
}

/// Jointly Gaussian shadowing (dB) over `positions` with covariance
/// `σ²·exp(−d/d_corr)`; one independent field per site, indexed `[site][user]`.
pub fn shadowing_field(
    positions: &[[f64; 2]],
    n_sites: usize,
    sigma_db: f64,
    d_corr: f64,
    seed: u64,
    key: u64,
) -> Result<Vec<Vec<f64>>> {
    let n = positions.len();
    if positions.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("positions must be finite".into()));
    }
    if n == 0 || sigma_db == 0.0 {
        return Ok(vec![vec![0.0; n]; n_sites]);
    }
    let var = sigma_db * sigma_db;
    let mut cov = DMatrix::from_fn(n, n, |a, b| {
        let d = ((positions[a][0] - positions[b][0]).powi(2) + (positions[a][1] - positions[b][1]).powi(2)).sqrt();
        var * (-d / d_corr).exp()
    });
    for a in 0..n {
        cov[(a, a)] += 1e-9 * var;
    }
    let l = cov
        .cholesky()
        .ok_or_else(|| Error::NonConvergence {
            solver: "shadowing covariance",
            iterations: 0,
            detail: format!("Cholesky failed for {n} positions"),
        })?
        .unpack();
    Ok((0..n_sites)
        .map(|site| {
            let mut rng = keyed_rng(seed, stream::SHADOW, mix64(key) ^ site as u64);
            let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            (0..n).map(|a| (0..=a).map(|b| l[(a, b)] * z[b]).sum()).collect()
        })
        .collect())
}

/// Users of one drop. Candidates are dropped uniformly around the central
/// site; the first `K` attached to the measured sector are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drop {
    pub seed: u64,
    pub drop_index: u64,
    pub positions: Vec<[f64; 2]>,
    pub indoor: Vec<bool>,
    pub serving_sector: Vec<usize>,
    /// Wideband link quality towards the serving sector (linear).
    pub snr: Vec<f64>,
    /// Candidate indices attached to the measured sector, in drop order.
    pub measured: Vec<usize>,
}

impl Drop {
    /// Wideband SNRs of the measured users.
    pub fn measured_snr(&self) -> Vec<f64> {
        self.measured.iter().map(|&u| self.snr[u]).collect()
    }

    /// CSV with `user_id,x_m,y_m,sector_id,snr_db` for every candidate.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["user_id", "x_m", "y_m", "sector_id", "snr_db"])
            .map_err(|e| Error::Parse(e.to_string()))?;
        for u in 0..self.positions.len() {
            w.write_record([
                u.to_string(),
                format!("{:.3}", self.positions[u][0]),
                format!("{:.3}", self.positions[u][1]),
                self.serving_sector[u].to_string(),
                format!("{:.4}", 10.0 * self.snr[u].log10()),
            ])
            .map_err(|e| Error::Parse(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Received power (dBm) of each user from every sector, `[user][sector]`.
pub fn received_power(
    positions: &[[f64; 2]],
    indoor: &[bool],
    los: &[Vec<bool>],
    shadow: &[Vec<f64>],
    sectors: &[Sector],
    scenario: &NetworkScenario,
) -> Result<Vec<Vec<f64>>> {
    positions
        .iter()
        .enumerate()
        .map(|(u, p)| {
            sectors
                .iter()
                .map(|s| {
                    let dx = p[0] - s.position[0];
                    let dy = p[1] - s.position[1];
                    let d = (dx * dx + dy * dy).sqrt().max(10.0);
                    let azimuth = dy.atan2(dx).to_degrees();
                    let elevation = ((scenario.bs_height_m - scenario.ue_height_m) / d).atan().to_degrees();
                    let gain = sector_gain(
                        azimuth - s.boresight_deg,
                        elevation - scenario.electrical_tilt_deg,
                        scenario,
                    );
                    let pl = pathloss_rma(d, scenario, los[u][s.site])?;
                    let penetration = if indoor[u] {
                        scenario.indoor_loss_db
                    } else {
                        scenario.in_car_loss_db
                    };
                    Ok(scenario.tx_power_dbm + gain + scenario.ue_gain_dbi - pl - shadow[s.site][u] - penetration)
                })
                .collect()
        })
        .collect()
}

/// Attaches each user to the sector with the strongest wideband SINR
/// (all other sectors interfering at full power; ties go to the lowest
/// index) and returns `(serving sector, link quality in linear scale)`,
/// where the quality follows `scenario.link_metric`.
pub fn attach_and_link_budget(rx_dbm: &[Vec<f64>], scenario: &NetworkScenario) -> Vec<(usize, f64)> {
    let noise_mw = 10f64.powf(scenario.noise_floor_dbm() / 10.0);
    rx_dbm
        .iter()
        .map(|row| {
            let mw: Vec<f64> = row.iter().map(|p| 10f64.powf(p / 10.0)).collect();
            let total: f64 = mw.iter().sum();
            let mut best = 0;
            let mut best_sinr = f64::NEG_INFINITY;
            for (j, &p) in mw.iter().enumerate() {
                let sinr = p / (noise_mw + total - p);
                if sinr > best_sinr {
                    best_sinr = sinr;
                    best = j;
                }
            }
            let q = match scenario.link_metric {
                LinkMetric::Snr => mw[best] / noise_mw,
                LinkMetric::Sinr => best_sinr,
            };
            (best, q)
        })
        .collect()
}

/// Generates drop `drop_index` with at least `k` users attached to the
/// measured sector, re-dropping the whole batch when too few attach.
pub fn generate_drop(scenario: &NetworkScenario, k: usize, seed: u64, drop_index: u64) -> Result<Drop> {
    scenario.validate()?;
    if k == 0 {
        return Err(Error::InvalidInput("need at least one user".into()));
    }
    let sectors = layout_sites(scenario);
    let n_sites = sectors.len() / 3;
    // disk slightly wider than the central cell's circumradius
    let radius = 1.2 * scenario.isd_m / 3f64.sqrt();
    let n_candidates = 8 * k + 20;
    for attempt in 0..MAX_REDROPS as u64 {
        let key = (drop_index << 20) | attempt;
        let mut rng = keyed_rng(seed, stream::DROP, key);
        let mut positions = Vec::with_capacity(n_candidates);
        let mut indoor = Vec::with_capacity(n_candidates);
        let mut los = Vec::with_capacity(n_candidates);
        for _ in 0..n_candidates {
            let r = radius * rng.random::<f64>().sqrt();
            let t = 2.0 * PI * rng.random::<f64>();
            let p = [r * t.cos(), r * t.sin()];
            indoor.push(rng.random::<f64>() < scenario.indoor_fraction);
            let row: Vec<bool> = (0..n_sites)
                .map(|s| {
                    let c = sectors[3 * s].position;
                    let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
                    rng.random::<f64>() < los_probability(d)
                })
                .collect();
            los.push(row);
            positions.push(p);
        }
        let shadow = shadowing_field(
            &positions,
            n_sites,
            scenario.shadow_sigma_db,
            scenario.shadow_corr_dist_m,
            seed,
            key,
        )?;
        let rx = received_power(&positions, &indoor, &los, &shadow, &sectors, scenario)?;
        let attached = attach_and_link_budget(&rx, scenario);
        let measured: Vec<usize> = attached
            .iter()
            .enumerate()
            .filter(|(_, (s, _))| *s == MEASURED_SECTOR)
            .map(|(u, _)| u)
            .take(k)
            .collect();
        if measured.len() == k {
            return Ok(Drop {
                seed,
                drop_index,
                positions,
                indoor,
                serving_sector: attached.iter().map(|a| a.0).collect(),
                snr: attached.iter().map(|a| a.1).collect(),
                measured,
            });
        }
    }
    Err(Error::ResourceLimit(format!(
        "fewer than {k} users attached to the measured sector after {MAX_REDROPS} re-drops"
    )))
}

/// `σ²ᵢ,ₖ = σ²_H,k / ηᵢ` with `ηᵢ = 1/M` on every subchannel.
pub fn snr_to_channel_stats(snr: &[f64], n_subchannels: usize) -> Result<ChannelStats> {
    if n_subchannels == 0 {
        return Err(Error::InvalidInput("need at least one subchannel".into()));
    }
    if snr.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidInput("wideband SNRs must be positive and finite".into()));
    }
    let eta = 1.0 / n_subchannels as f64;
    let row: Vec<f64> = snr.iter().map(|s| s / eta).collect();
    ChannelStats::build(vec![row; n_subchannels], vec![eta; n_subchannels], DEFAULT_TIE_EPSILON)
}

/// Channel statistics of the measured users of a drop.
pub fn drop_to_channel_stats(drop: &Drop, scenario: &NetworkScenario, k: usize) -> Result<ChannelStats> {
    if drop.measured.len() < k {
        return Err(Error::InvalidInput(format!(
            "drop has {} measured users, {k} requested",
            drop.measured.len()
        )));
    }
    snr_to_channel_stats(&drop.measured_snr()[..k], scenario.n_subchannels)
}
