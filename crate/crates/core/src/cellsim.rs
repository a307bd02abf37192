//! System-level cell simulation: round-robin scheduling, wideband SINR from
//! free-space path loss, per-slot fading and aggregated jamming, MCS
//! selection, HARQ retransmissions and throughput/goodput accounting.
//!
//! Throughput counts the bits of every transmitted transport block, new or
//! retransmitted. Goodput counts only the bits of transport blocks sent for
//! the first time.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{fspl_db, noise_power_re_dbm, FadingProfile};
use crate::error::{Error, Result};
use crate::jammer::{JammerKind, JammerSpec, MAX_TX_POWER_DBM, MIN_TX_POWER_DBM};
use crate::mobility::{steps_step, StepsConfig, StepsState};
use crate::receiver::{sinr_to_bler, McsTable};
use crate::rng::stream_rng;
use crate::units::{dbm_to_watts, linear_to_db};
use crate::waveform::{build_numerology, Numerology};

const STREAM_PLACEMENT: u64 = 1;
const STREAM_MOBILITY: u64 = 1 << 16;
const STREAM_FADING: u64 = 2 << 16;
const STREAM_ERRORS: u64 = 3 << 16;
const STREAM_TRAFFIC: u64 = 4 << 16;
const STREAM_JAM_FADING: u64 = 1 << 32;

/// Links shorter than this are evaluated at this distance.
pub const MIN_LINK_DISTANCE_M: f64 = 1.0;
/// Distance used when jammers are added along the jammer-count axis.
pub const DEFAULT_JAMMER_DISTANCE_M: f64 = 224.0;
/// Azimuths (degrees) taken in order by jammers added along the
/// jammer-count axis.
pub const JAMMER_AZIMUTHS_DEG: [f64; 8] = [0.0, 90.0, 45.0, 180.0, 270.0, 135.0, 225.0, 315.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Traffic {
    /// Every UE always has data queued.
    FullBuffer,
    /// Constant-rate arrivals of `sdu_bits` SDUs per UE.
    Cbr { rate_bps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub cell_radius_m: f64,
    pub gnb_power_dbm: f64,
    pub gnb_gain_db: f64,
    pub ue_gain_db: f64,
    pub n_ue: usize,
    pub scs_hz: u32,
    pub n_rb: usize,
    pub n_rb_ssb: usize,
    pub carrier_hz: f64,
    pub noise_figure_db: f64,
    pub jammers: Vec<JammerSpec>,
    pub mobility: StepsConfig,
    pub mobility_enabled: bool,
    pub traffic: Traffic,
    pub sdu_bits: usize,
    /// PDSCH REs per slot after DM-RS and control overhead.
    pub data_res_per_slot: usize,
    pub harq_max_attempts: usize,
    pub mcs_table: McsTable,
    pub mcs_backoff_db: f64,
    /// CDL-A per-slot fading when true.
    pub fading: bool,
    pub delay_spread_ns: f64,
    pub frames: usize,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            cell_radius_m: 500.0,
            gnb_power_dbm: 32.0,
            gnb_gain_db: 0.0,
            ue_gain_db: 0.0,
            n_ue: 20,
            scs_hz: 30_000,
            n_rb: 51,
            n_rb_ssb: 20,
            carrier_hz: 2.635e9,
            noise_figure_db: 7.0,
            jammers: Vec::new(),
            mobility: StepsConfig::default(),
            mobility_enabled: true,
            traffic: Traffic::FullBuffer,
            sdu_bits: 9_000,
            data_res_per_slot: 12 * 51 * 12,
            harq_max_attempts: 4,
            mcs_table: McsTable::default(),
            mcs_backoff_db: 3.0,
            fading: true,
            delay_spread_ns: 30.0,
            frames: 200,
            seed: 1,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.n_ue < 1 {
            return bad("n_ue must be at least 1".into());
        }
        if !(self.cell_radius_m > 0.0 && self.cell_radius_m.is_finite()) {
            return bad(format!("cell radius {} m", self.cell_radius_m));
        }
        if !(MIN_TX_POWER_DBM..=MAX_TX_POWER_DBM).contains(&self.gnb_power_dbm) {
            return Err(Error::OutOfRange {
                what: "gNB tx power (dBm)",
                value: self.gnb_power_dbm.to_string(),
            });
        }
        if !(self.carrier_hz > 0.0) {
            return Err(Error::NonPositiveCarrier(self.carrier_hz));
        }
        build_numerology(self.scs_hz, self.n_rb)?;
        if self.n_rb_ssb > self.n_rb {
            return bad(format!("SSB needs {} RBs but the carrier has {}", self.n_rb_ssb, self.n_rb));
        }
        for j in &self.jammers {
            j.validate()?;
        }
        self.mobility.validate()?;
        if let Traffic::Cbr { rate_bps } = self.traffic {
            if !(rate_bps >= 0.0 && rate_bps.is_finite()) {
                return bad(format!("traffic rate {rate_bps} bit/s"));
            }
        }
        if self.sdu_bits == 0 || self.data_res_per_slot == 0 {
            return bad("SDU size and data REs per slot must be positive".into());
        }
        if self.harq_max_attempts < 1 {
            return bad("HARQ needs at least one attempt".into());
        }
        self.mcs_table.validate()?;
        if !self.mcs_backoff_db.is_finite() || !(self.delay_spread_ns >= 0.0) {
            return bad("MCS backoff must be finite and delay spread non-negative".into());
        }
        if self.frames < 1 {
            return bad("at least one frame is required".into());
        }
        Ok(())
    }

    fn numerology(&self) -> Result<Numerology> {
        build_numerology(self.scs_hz, self.n_rb)
    }

    fn link_gain_db(&self, from: [f64; 2], to: [f64; 2], tx_gain_db: f64) -> Result<f64> {
        let d = (from[0] - to[0]).hypot(from[1] - to[1]).max(MIN_LINK_DISTANCE_M);
        Ok(tx_gain_db + self.ue_gain_db - fspl_db(self.carrier_hz, d)?)
    }

    /// Per-RE desired power (W) at `pos`, fading excluded.
    pub fn signal_re_w(&self, pos: [f64; 2]) -> Result<f64> {
        let g = self.link_gain_db([0.0, 0.0], pos, self.gnb_gain_db)?;
        Ok(dbm_to_watts(self.gnb_power_dbm) / (12 * self.n_rb) as f64 * 10f64.powf(g / 10.0))
    }

    /// Per-RE PDSCH jamming power (W) from each jammer at `pos`. Smart
    /// jammers stay on SSB REs, which never carry PDSCH, and contribute 0.
    pub fn jam_re_w(&self, pos: [f64; 2]) -> Result<Vec<f64>> {
        self.jammers
            .iter()
            .map(|j| {
                if j.kind != JammerKind::Barrage {
                    return Ok(0.0);
                }
                let g = self.link_gain_db(j.position, pos, j.gain_db)?;
                Ok(dbm_to_watts(j.tx_power_dbm) / (12 * self.n_rb) as f64 * 10f64.powf(g / 10.0))
            })
            .collect()
    }

    pub fn noise_re_w(&self) -> f64 {
        dbm_to_watts(noise_power_re_dbm(self.scs_hz as f64, self.noise_figure_db))
    }

    /// Long-term wideband SINR (dB) at `pos`.
    pub fn wideband_sinr_db(&self, pos: [f64; 2]) -> Result<f64> {
        let j: f64 = self.jam_re_w(pos)?.iter().sum();
        Ok(linear_to_db(self.signal_re_w(pos)? / (j + self.noise_re_w())))
    }
}

pub fn select_mcs(wideband_sinr_db: f64, table: &McsTable, backoff_db: f64) -> Result<usize> {
    if table.entries.is_empty() {
        return Err(Error::EmptyMcsTable);
    }
    Ok(table.select(wideband_sinr_db, backoff_db))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarqProcess {
    pub sdu_id: Option<u64>,
    pub attempts: usize,
    pub max_attempts: usize,
    pub pending: bool,
    pub tb_bits: u64,
    pub mcs: usize,
}

impl HarqProcess {
    pub fn new(max_attempts: usize) -> Self {
        Self {
            sdu_id: None,
            attempts: 0,
            max_attempts,
            pending: false,
            tb_bits: 0,
            mcs: 0,
        }
    }

    /// Loads a new transport block. Errors if one is still pending.
    pub fn load(&mut self, id: u64, tb_bits: u64, mcs: usize) -> Result<()> {
        if self.pending {
            return Err(Error::InvalidScenario("HARQ process already holds a block".into()));
        }
        *self = Self {
            sdu_id: Some(id),
            attempts: 0,
            max_attempts: self.max_attempts,
            pending: true,
            tb_bits,
            mcs,
        };
        Ok(())
    }

    /// Records one attempt; returns true when the block leaves the process
    /// (delivered or dropped).
    pub fn attempt(&mut self, success: bool) -> bool {
        self.attempts += 1;
        if success || self.attempts >= self.max_attempts {
            self.pending = false;
        }
        !self.pending
    }
}

/// One transmitted transport block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TbRecord {
    pub bits: u64,
    pub retransmission: bool,
}

/// `(throughput_bps, goodput_bps)` of a transmission log.
pub fn account(log: &[TbRecord], duration_s: f64) -> (f64, f64) {
    let all: u64 = log.iter().map(|t| t.bits).sum();
    let new: u64 = log.iter().filter(|t| !t.retransmission).map(|t| t.bits).sum();
    (all as f64 / duration_s, new as f64 / duration_s)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UeLog {
    pub mean_sinr_db: f64,
    pub mean_bler: f64,
    pub tx_count: u64,
    pub retx_count: u64,
    pub delivered_bits: u64,
    pub dropped_blocks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub throughput_bps: f64,
    pub goodput_bps: f64,
    /// Mean instantaneous SINR over all transmissions, dB.
    pub mean_sinr_db: f64,
    pub retx_fraction: f64,
    pub ue: Vec<UeLog>,
}

struct Ue {
    state: StepsState,
    rng_mobility: rand_chacha::ChaCha8Rng,
    rng_fading: rand_chacha::ChaCha8Rng,
    rng_errors: rand_chacha::ChaCha8Rng,
    jam_fading: Vec<rand_chacha::ChaCha8Rng>,
    harq: HarqProcess,
    queue_bits: f64,
    log: UeLog,
    sinr_sum: f64,
    bler_sum: f64,
}

/// Uniform point in the disk of radius `r`.
fn uniform_in_disk<R: Rng + ?Sized>(rng: &mut R, r: f64) -> [f64; 2] {
    let rho = r * rng.random::<f64>().sqrt();
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    [rho * phi.cos(), rho * phi.sin()]
}

fn fading_gain<R: Rng + ?Sized>(profile: Option<&FadingProfile>, num: &Numerology, rng: &mut R) -> f64 {
    profile.map_or(1.0, |p| p.draw(num, rng).power())
}

pub fn run_cell(scenario: &Scenario) -> Result<CellMetrics> {
    scenario.validate()?;
    let sc = scenario;
    let num = sc.numerology()?;
    let profile = sc.fading.then(|| FadingProfile::cdl_a(sc.delay_spread_ns));
    let seed = sc.seed;
    let mut placement = stream_rng(seed, STREAM_PLACEMENT);
    let mut traffic = stream_rng(seed, STREAM_TRAFFIC);
    let mob = &sc.mobility;
    let mut ues: Vec<Ue> = (0..sc.n_ue)
        .map(|u| {
            let pos = uniform_in_disk(&mut placement, sc.cell_radius_m);
            let zone = mob.zone_of(pos);
            let mut rng_mobility = stream_rng(seed, STREAM_MOBILITY + u as u64);
            let mut state = StepsState::initial(mob, zone, &mut rng_mobility)?;
            state.position_m = pos;
            Ok(Ue {
                state,
                rng_mobility,
                rng_fading: stream_rng(seed, STREAM_FADING + u as u64),
                rng_errors: stream_rng(seed, STREAM_ERRORS + u as u64),
                jam_fading: (0..sc.jammers.len())
                    .map(|j| stream_rng(seed, STREAM_JAM_FADING + ((j as u64) << 16) + u as u64))
                    .collect(),
                harq: HarqProcess::new(sc.harq_max_attempts),
                queue_bits: if matches!(sc.traffic, Traffic::Cbr { .. }) {
                    // Random arrival phase.
                    -(traffic.random::<f64>() * sc.sdu_bits as f64)
                } else {
                    0.0
                },
                log: UeLog::default(),
                sinr_sum: 0.0,
                bler_sum: 0.0,
            })
        })
        .collect::<Result<_>>()?;

    let slot_s = num.slot_duration_s();
    let slots_per_epoch = ((mob.epoch_duration_s / slot_s).round() as usize).max(1);
    let n_slots = sc.frames * num.slots_per_frame;
    let noise = sc.noise_re_w();
    let mut log = Vec::new();
    let mut next_id = 0u64;
    let mut sinr_db_sum = 0.0;

    for slot in 0..n_slots {
        if slot > 0 && slot % slots_per_epoch == 0 && sc.mobility_enabled {
            for ue in ues.iter_mut() {
                ue.state = steps_step(&ue.state, mob, &mut ue.rng_mobility);
            }
        }
        if let Traffic::Cbr { rate_bps } = sc.traffic {
            // SDUs arrive whole; the queue holds whole SDUs.
            for ue in ues.iter_mut() {
                ue.queue_bits += rate_bps * slot_s;
            }
        }
        let u = slot % sc.n_ue;
        let ue = &mut ues[u];
        let pos = ue.state.position_m;
        if !ue.harq.pending {
            let bits = match sc.traffic {
                Traffic::FullBuffer => None,
                Traffic::Cbr { .. } => {
                    let whole = (ue.queue_bits / sc.sdu_bits as f64).floor().max(0.0) * sc.sdu_bits as f64;
                    Some(whole)
                }
            };
            if bits == Some(0.0) {
                continue;
            }
            let mcs = select_mcs(sc.wideband_sinr_db(pos)?, &sc.mcs_table, sc.mcs_backoff_db)?;
            let cap = (sc.data_res_per_slot as f64 * sc.mcs_table.entry(mcs)?.bits_per_re()).floor();
            let tb = bits.map_or(cap, |b| b.min(cap));
            if let Traffic::Cbr { .. } = sc.traffic {
                ue.queue_bits -= tb;
            }
            ue.harq.load(next_id, tb as u64, mcs)?;
            next_id += 1;
        }
        let s = sc.signal_re_w(pos)? * fading_gain(profile.as_ref(), &num, &mut ue.rng_fading);
        let jam = sc.jam_re_w(pos)?;
        let mut j_total = 0.0;
        for (jw, rng) in jam.iter().zip(ue.jam_fading.iter_mut()) {
            let f = fading_gain(profile.as_ref(), &num, rng);
            j_total += jw * f;
        }
        let sinr_db = linear_to_db(s / (j_total + noise));
        let bler = sinr_to_bler(sinr_db, ue.harq.mcs, &sc.mcs_table)?;
        let success = ue.rng_errors.random::<f64>() >= bler;
        let retransmission = ue.harq.attempts > 0;
        log.push(TbRecord {
            bits: ue.harq.tb_bits,
            retransmission,
        });
        ue.log.tx_count += 1;
        ue.log.retx_count += retransmission as u64;
        ue.sinr_sum += sinr_db;
        ue.bler_sum += bler;
        sinr_db_sum += sinr_db;
        let tb_bits = ue.harq.tb_bits;
        if ue.harq.attempt(success) {
            if success {
                ue.log.delivered_bits += tb_bits;
            } else {
                ue.log.dropped_blocks += 1;
            }
        }
    }

    let duration = n_slots as f64 * slot_s;
    let (throughput_bps, goodput_bps) = account(&log, duration);
    let n_tx = log.len();
    let n_retx = log.iter().filter(|t| t.retransmission).count();
    Ok(CellMetrics {
        throughput_bps,
        goodput_bps,
        mean_sinr_db: if n_tx > 0 { sinr_db_sum / n_tx as f64 } else { 0.0 },
        retx_fraction: if n_tx > 0 { n_retx as f64 / n_tx as f64 } else { 0.0 },
        ue: ues
            .into_iter()
            .map(|ue| {
                let n = ue.log.tx_count.max(1) as f64;
                UeLog {
                    mean_sinr_db: ue.sinr_sum / n,
                    mean_bler: ue.bler_sum / n,
                    ..ue.log
                }
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SweepAxis {
    JamPower,
    JamDistance,
    NJammers,
}

/// Template for jammers added along the jammer-count axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JammerTemplate {
    pub kind: JammerKind,
    pub tx_power_dbm: f64,
    pub gain_db: f64,
    pub distance_m: f64,
}

impl Default for JammerTemplate {
    fn default() -> Self {
        Self {
            kind: JammerKind::Barrage,
            tx_power_dbm: 20.0,
            gain_db: 0.0,
            distance_m: DEFAULT_JAMMER_DISTANCE_M,
        }
    }
}

/// `n` jammers at `distance_m`, azimuths taken from [`JAMMER_AZIMUTHS_DEG`]
/// and then evenly spread once those run out.
pub fn place_jammers(template: &JammerTemplate, n: usize) -> Vec<JammerSpec> {
    (0..n)
        .map(|i| {
            let az = JAMMER_AZIMUTHS_DEG
                .get(i)
                .copied()
                .unwrap_or(360.0 * i as f64 / n as f64)
                .to_radians();
            JammerSpec {
                kind: template.kind,
                tx_power_dbm: template.tx_power_dbm,
                gain_db: template.gain_db,
                position: [template.distance_m * az.cos(), template.distance_m * az.sin()],
            }
        })
        .collect()
}

/// Scenario for one sweep point.
pub fn apply_axis(base: &Scenario, axis: SweepAxis, value: f64, template: &JammerTemplate) -> Result<Scenario> {
    let mut sc = base.clone();
    match axis {
        SweepAxis::JamPower => {
            if sc.jammers.is_empty() {
                sc.jammers = place_jammers(template, 1);
            }
            sc.jammers.iter_mut().for_each(|j| j.tx_power_dbm = value);
        }
        SweepAxis::JamDistance => {
            if !(value > 0.0) {
                return Err(Error::NonPositiveDistance(value));
            }
            if sc.jammers.is_empty() {
                sc.jammers = place_jammers(template, 1);
            }
            for j in sc.jammers.iter_mut() {
                let az = j.position[1].atan2(j.position[0]);
                j.position = [value * az.cos(), value * az.sin()];
            }
        }
        SweepAxis::NJammers => {
            if !(value >= 0.0 && value.fract() == 0.0) {
                return Err(Error::OutOfRange {
                    what: "jammer count",
                    value: value.to_string(),
                });
            }
            sc.jammers = place_jammers(template, value as usize);
        }
    }
    Ok(sc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub seed: u64,
    pub throughput_bps: f64,
    pub goodput_bps: f64,
    pub mean_sinr_db: f64,
    pub retx_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub axis_value: f64,
    pub runs: usize,
    pub throughput_mean: f64,
    pub throughput_std: f64,
    pub goodput_mean: f64,
    pub goodput_std: f64,
    pub retx_fraction_mean: f64,
}

/// One run per `(value, seed)`, value-major. The same seed is reused at
/// every value, so points share placement, mobility and fading draws.
pub fn sweep(
    base: &Scenario,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    template: &JammerTemplate,
) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(f64, u64)> = values.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    jobs.par_iter()
        .map(|&(v, seed)| {
            let mut sc = apply_axis(base, axis, v, template)?;
            sc.seed = seed;
            let m = run_cell(&sc)?;
            Ok(SweepRow {
                axis_value: v,
                seed,
                throughput_bps: m.throughput_bps,
                goodput_bps: m.goodput_bps,
                mean_sinr_db: m.mean_sinr_db,
                retx_fraction: m.retx_fraction,
            })
        })
        .collect()
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 {
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v.sqrt())
}

/// Mean and sample standard deviation per axis value, in first-seen order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut values: Vec<f64> = Vec::new();
    for r in rows {
        if !values.contains(&r.axis_value) {
            values.push(r.axis_value);
        }
    }
    values
        .into_iter()
        .map(|v| {
            let pts: Vec<&SweepRow> = rows.iter().filter(|r| r.axis_value == v).collect();
            let tp: Vec<f64> = pts.iter().map(|r| r.throughput_bps).collect();
            let gp: Vec<f64> = pts.iter().map(|r| r.goodput_bps).collect();
            let (tm, ts) = mean_std(&tp);
            let (gm, gs) = mean_std(&gp);
            SweepSummary {
                axis_value: v,
                runs: pts.len(),
                throughput_mean: tm,
                throughput_std: ts,
                goodput_mean: gm,
                goodput_std: gs,
                retx_fraction_mean: pts.iter().map(|r| r.retx_fraction).sum::<f64>() / pts.len() as f64,
            }
        })
        .collect()
}
