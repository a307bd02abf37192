//! Cell-search receiver: PSS correlation, SSS identification, DM-RS based
//! channel and SJNR estimation, PBCH/PSS/PDSCH EVM and the SINR to BLER
//! proxy used by the system-level simulation.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssb::{
    dmrs_positions, pbch_data_positions, pbch_dmrs, pbch_payload, pss_positions, pss_sequence, sss_positions,
    sss_sequence, ssb_subcarrier_offset, CellIdentity, SSB_SUBCARRIERS, SSB_SYMBOLS, SYNC_FIRST_SUBCARRIER,
};
use crate::units::linear_to_db;
use crate::waveform::{measure_evm_rms, ModScheme, Numerology, OfdmEngine, ResourceGrid};

pub const DEFAULT_PSS_THRESHOLD: f64 = 8.0;
pub const DEFAULT_EVM_DECODE_THRESHOLD: f64 = 35.0;
pub const SJNR_FLOOR_DB: f64 = -30.0;
pub const SJNR_CEILING_DB: f64 = 60.0;
const SJNR_WINDOW: usize = 12;
const N_ID_1_COUNT: u16 = 336;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PssDetection {
    pub n_id_2: u8,
    /// Sample index of the first post-CP sample of the PSS symbol.
    pub timing_offset: usize,
    /// Correlation peak over the local median floor.
    pub peak_metric: f64,
    pub detected: bool,
}

impl PssDetection {
    /// True when detected with the expected `n_id_2` within `tolerance`
    /// samples of one of `pss_starts`.
    pub fn matches(&self, n_id_2: u8, pss_starts: &[usize], tolerance: usize) -> bool {
        self.detected && self.n_id_2 == n_id_2 && pss_starts.iter().any(|&s| s.abs_diff(self.timing_offset) <= tolerance)
    }
}

/// Time-domain useful part of the PSS for `n_id_2`, placed on the SSB
/// subcarriers at the center of the carrier.
pub fn pss_replica(engine: &OfdmEngine, n_id_2: u8) -> Result<Vec<Complex64>> {
    let num = engine.numerology();
    let mut sym = vec![Complex64::new(0.0, 0.0); num.n_subcarriers()];
    let base = ssb_subcarrier_offset(num) + SYNC_FIRST_SUBCARRIER;
    for (i, d) in pss_sequence(n_id_2)?.into_iter().enumerate() {
        sym[base + i] = Complex64::new(d, 0.0);
    }
    Ok(engine.symbol_to_time(&sym))
}

/// Matched filter bank over the three PSS candidates, evaluated with
/// overlap-save FFT correlation.
#[derive(Clone)]
pub struct PssDetector {
    replica_len: usize,
    block: usize,
    /// Conjugated spectra of the zero-padded replicas.
    replica_spectra: Vec<Vec<Complex64>>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    pub threshold: f64,
}

impl PssDetector {
    pub fn new(numerology: &Numerology, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) {
            return Err(Error::NonPositiveThreshold);
        }
        let engine = OfdmEngine::new(numerology)?;
        let n = numerology.fft_size;
        let block = (8 * n).max(8192);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(block);
        let ifft = planner.plan_fft_inverse(block);
        let replica_spectra = (0..3u8)
            .map(|id| {
                let mut buf = pss_replica(&engine, id)?;
                buf.resize(block, Complex64::new(0.0, 0.0));
                fft.process(&mut buf);
                Ok(buf.into_iter().map(|z| z.conj() / block as f64).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            replica_len: n,
            block,
            replica_spectra,
            fft,
            ifft,
            threshold,
        })
    }

    /// `|Σ r[τ+n] p*[n]|` for every candidate and every full-overlap lag τ.
    pub fn correlate(&self, samples: &[Complex64]) -> Result<Vec<Vec<f64>>> {
        let n = self.replica_len;
        if samples.len() < n {
            return Err(Error::InsufficientSamples {
                needed: n,
                got: samples.len(),
            });
        }
        let n_lags = samples.len() - n + 1;
        let step = self.block - n + 1;
        let mut out: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(n_lags)).collect();
        let mut spec = vec![Complex64::new(0.0, 0.0); self.block];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.block];
        let mut start = 0;
        while start < n_lags {
            let end = (start + self.block).min(samples.len());
            spec[..end - start].copy_from_slice(&samples[start..end]);
            spec[end - start..].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            self.fft.process(&mut spec);
            let valid = step.min(n_lags - start);
            for (c, rep) in self.replica_spectra.iter().enumerate() {
                for ((b, s), r) in buf.iter_mut().zip(&spec).zip(rep) {
                    *b = s * r;
                }
                self.ifft.process(&mut buf);
                out[c].extend(buf[..valid].iter().map(|z| z.norm()));
            }
            start += step;
        }
        Ok(out)
    }

    pub fn detect(&self, samples: &[Complex64]) -> Result<PssDetection> {
        let corr = self.correlate(samples)?;
        let peak = corr.iter().flatten().copied().fold(0.0, f64::max);
        let level = peak * (1.0 - 1e-6);
        // Earliest lag reaching the peak; repeated bursts give equal peaks.
        let mut best: Option<(usize, u8)> = None;
        for (c, v) in corr.iter().enumerate() {
            if let Some(lag) = v.iter().position(|&x| x >= level) {
                if best.is_none_or(|(b, _)| lag < b) {
                    best = Some((lag, c as u8));
                }
            }
        }
        let (lag, id) = best.unwrap_or((0, 0));
        let winner = &corr[id as usize];
        let floor = local_floor(winner, lag, self.replica_len);
        let metric = if floor > 0.0 {
            winner[lag] / floor
        } else if winner[lag] > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        Ok(PssDetection {
            n_id_2: id,
            timing_offset: lag,
            peak_metric: metric,
            detected: metric >= self.threshold,
        })
    }
}

/// Median of `corr` over lags within half a replica length of `peak`,
/// leaving out the main lobe.
fn local_floor(corr: &[f64], peak: usize, n: usize) -> f64 {
    let guard = n / 32;
    let span = n / 2;
    let lo = peak.saturating_sub(span);
    let hi = (peak + span).min(corr.len() - 1);
    let mut vals: Vec<f64> = (lo..=hi).filter(|&i| i.abs_diff(peak) > guard).map(|i| corr[i]).collect();
    if vals.is_empty() {
        vals = corr.iter().enumerate().filter(|(i, _)| i.abs_diff(peak) > guard).map(|(_, &v)| v).collect();
    }
    if vals.is_empty() {
        return 0.0;
    }
    let mid = vals.len() / 2;
    let (_, m, _) = vals.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

pub fn detect_pss(samples: &[Complex64], numerology: &Numerology, threshold: f64) -> Result<PssDetection> {
    PssDetector::new(numerology, threshold)?.detect(samples)
}

/// Where one SSB sits in a resource grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SsbLocation {
    /// Grid subcarrier of SSB subcarrier 0.
    pub subcarrier: usize,
    /// Grid symbol of SSB symbol 0 (the PSS).
    pub symbol: usize,
}

impl SsbLocation {
    pub fn centered(numerology: &Numerology, symbol: usize) -> Self {
        Self {
            subcarrier: ssb_subcarrier_offset(numerology),
            symbol,
        }
    }

    fn check(&self, grid: &ResourceGrid) -> Result<()> {
        if self.subcarrier + SSB_SUBCARRIERS > grid.n_subcarriers() || self.symbol + SSB_SYMBOLS > grid.n_symbols() {
            return Err(Error::OutOfRange {
                what: "SSB location",
                value: format!("{self:?}"),
            });
        }
        Ok(())
    }

    fn get(&self, grid: &ResourceGrid, k: usize, l: usize) -> Complex64 {
        grid.get(self.subcarrier + k, self.symbol + l)
    }
}

/// Demodulates the four SSB symbols whose PSS useful part starts at
/// `pss_useful_start`. SSB symbols never use the long CP.
pub fn extract_ssb_grid(engine: &OfdmEngine, samples: &[Complex64], pss_useful_start: usize) -> Result<ResourceGrid> {
    let num = engine.numerology();
    let cp = num.cp_len(2);
    if pss_useful_start < cp {
        return Err(Error::InsufficientSamples {
            needed: cp,
            got: pss_useful_start,
        });
    }
    engine.demodulate_symbols(samples, pss_useful_start - cp, 2, SSB_SYMBOLS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SssDetection {
    pub n_id_1: u16,
    /// Normalized coherent correlation per `n_id_1` candidate.
    pub scores: Vec<f64>,
}

impl SssDetection {
    /// Best score over the runner-up.
    pub fn margin(&self) -> f64 {
        let mut s = self.scores.clone();
        s.sort_by(|a, b| b.total_cmp(a));
        if s[1] > 0.0 {
            s[0] / s[1]
        } else {
            f64::INFINITY
        }
    }
}

/// Identifies `n_id_1` by correlating the SSS REs, phase-referenced on the
/// PSS REs, against all 336 candidates.
pub fn detect_sss(grid: &ResourceGrid, n_id_2: u8, loc: SsbLocation) -> Result<SssDetection> {
    loc.check(grid)?;
    let pss = pss_sequence(n_id_2)?;
    let z: Vec<Complex64> = pss_positions()
        .zip(sss_positions())
        .zip(&pss)
        .map(|(((kp, lp), (ks, ls)), d)| loc.get(grid, ks, ls) * (loc.get(grid, kp, lp) * d).conj())
        .collect();
    let norm: f64 = z.iter().map(|v| v.norm()).sum();
    let scores = (0..N_ID_1_COUNT)
        .map(|id1| {
            let s = sss_sequence(id1, n_id_2)?;
            let c: Complex64 = z.iter().zip(&s).map(|(v, d)| v * d).sum();
            Ok(if norm > 0.0 { c.norm() / norm } else { 0.0 })
        })
        .collect::<Result<Vec<f64>>>()?;
    let n_id_1 = scores
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc })
        .0 as u16;
    Ok(SssDetection { n_id_1, scores })
}

/// Least-squares DM-RS channel estimate of one SSB.
#[derive(Debug, Clone, PartialEq)]
pub struct SsbChannelEstimate {
    /// Per SSB subcarrier, shared by all four symbols.
    pub h: Vec<Complex64>,
    /// Raw LS values `(k, l, h)` in DM-RS order.
    pub pilots: Vec<(usize, usize, Complex64)>,
}

pub fn estimate_ssb_channel(grid: &ResourceGrid, loc: SsbLocation, pci: CellIdentity, ssb_index: u8) -> Result<SsbChannelEstimate> {
    loc.check(grid)?;
    let dmrs = pbch_dmrs(pci, ssb_index)?;
    let pilots: Vec<(usize, usize, Complex64)> = dmrs_positions(pci)
        .into_iter()
        .zip(&dmrs)
        .map(|((k, l), d)| (k, l, loc.get(grid, k, l) / d))
        .collect();
    let mut acc = vec![(Complex64::new(0.0, 0.0), 0usize); SSB_SUBCARRIERS];
    for &(k, _, h) in &pilots {
        acc[k].0 += h;
        acc[k].1 += 1;
    }
    let (pos, val): (Vec<usize>, Vec<Complex64>) = acc
        .iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(k, (s, n))| (k, s / *n as f64))
        .unzip();
    Ok(SsbChannelEstimate {
        h: interpolate_linear(&pos, &val, SSB_SUBCARRIERS),
        pilots,
    })
}

/// Linear interpolation of `values` known at sorted `positions` onto
/// `0..n`, held flat beyond the outermost points.
pub fn interpolate_linear(positions: &[usize], values: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if positions.is_empty() {
        return out;
    }
    let mut seg = 0;
    for (k, o) in out.iter_mut().enumerate() {
        if k <= positions[0] {
            *o = values[0];
            continue;
        }
        if k >= positions[positions.len() - 1] {
            *o = values[values.len() - 1];
            continue;
        }
        while positions[seg + 1] < k {
            seg += 1;
        }
        let (a, b) = (positions[seg], positions[seg + 1]);
        let t = (k - a) as f64 / (b - a) as f64;
        *o = values[seg] * (1.0 - t) + values[seg + 1] * t;
    }
    out
}

/// DM-RS SJNR of one SSB in dB.
///
/// The LS pilots of each contiguous DM-RS run are smoothed with a centered
/// window of up to 12 pilots. The residual power, corrected for the window's
/// own noise share, estimates the noise-plus-jamming level; the smoothed
/// power minus that share estimates the signal. Clamped to [-30, 60] dB.
pub fn estimate_dmrs_sjnr(grid: &ResourceGrid, loc: SsbLocation, pci: CellIdentity, ssb_index: u8) -> Result<f64> {
    let est = estimate_ssb_channel(grid, loc, pci, ssb_index)?;
    let mut runs: Vec<Vec<Complex64>> = Vec::new();
    let mut prev: Option<(usize, usize)> = None;
    for &(k, l, h) in &est.pilots {
        match prev {
            Some((pk, pl)) if pl == l && k == pk + 4 => runs.last_mut().expect("run").push(h),
            _ => runs.push(vec![h]),
        }
        prev = Some((k, l));
    }
    let mut resid = 0.0;
    let mut dof = 0.0;
    let mut smoothed = Vec::new();
    for run in &runs {
        for i in 0..run.len() {
            let half = SJNR_WINDOW / 2;
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(run.len());
            let w = (hi - lo) as f64;
            let s: Complex64 = run[lo..hi].iter().sum::<Complex64>() / w;
            resid += (run[i] - s).norm_sqr();
            dof += 1.0 - 1.0 / w;
            smoothed.push((s, w));
        }
    }
    let noise = if dof > 0.0 { resid / dof } else { 0.0 };
    let signal = smoothed.iter().map(|(s, w)| s.norm_sqr() - noise / w).sum::<f64>() / smoothed.len() as f64;
    let db = if noise <= 0.0 {
        SJNR_CEILING_DB
    } else if signal <= 0.0 {
        SJNR_FLOOR_DB
    } else {
        linear_to_db(signal / noise)
    };
    Ok(db.clamp(SJNR_FLOOR_DB, SJNR_CEILING_DB))
}

/// Cell-search outcome and per-burst quality of one received SSB window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsbMeasurement {
    pub pci_detected: Option<CellIdentity>,
    /// DM-RS SJNR per received burst, dB.
    pub sjnr_db: Vec<f64>,
    /// PBCH EVM per received burst, percent.
    pub burst_pbch_evm: Vec<f64>,
    /// PBCH EVM of the best burst, the one a UE would decode from.
    pub pbch_evm_rms: f64,
    /// PSS EVM averaged (RMS) over the received bursts.
    pub pss_evm_rms: f64,
    pub mib_decodable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PbchDecode {
    pub evm_rms_percent: f64,
    pub mib_decodable: bool,
}

/// Zero-forcing equalization of the PBCH data REs and EVM against the
/// transmitted QPSK symbols.
pub fn decode_pbch(
    grid: &ResourceGrid,
    loc: SsbLocation,
    pci: CellIdentity,
    mib_bits: u32,
    estimate: &SsbChannelEstimate,
    evm_threshold: f64,
) -> Result<PbchDecode> {
    let eq = equalize_pbch(grid, loc, pci, estimate)?;
    let evm = finite_evm(&eq, &pbch_payload(pci, mib_bits))?;
    Ok(PbchDecode {
        evm_rms_percent: evm,
        mib_decodable: evm <= evm_threshold,
    })
}

/// Zero-forced PBCH data symbols in mapping order.
pub fn equalize_pbch(grid: &ResourceGrid, loc: SsbLocation, pci: CellIdentity, estimate: &SsbChannelEstimate) -> Result<Vec<Complex64>> {
    loc.check(grid)?;
    Ok(pbch_data_positions(pci)
        .into_iter()
        .map(|(k, l)| loc.get(grid, k, l) / estimate.h[k])
        .collect())
}

/// EVM of the equalized PSS REs against the known sequence.
pub fn pss_evm(grid: &ResourceGrid, loc: SsbLocation, n_id_2: u8, estimate: &SsbChannelEstimate) -> Result<f64> {
    loc.check(grid)?;
    let reference: Vec<Complex64> = pss_sequence(n_id_2)?.into_iter().map(|d| Complex64::new(d, 0.0)).collect();
    let eq: Vec<Complex64> = pss_positions().map(|(k, l)| loc.get(grid, k, l) / estimate.h[k]).collect();
    finite_evm(&eq, &reference)
}

/// EVM with non-finite equalizer outputs (zero channel estimate) counted as
/// a 100% error on that RE.
fn finite_evm(eq: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    let cleaned: Vec<Complex64> = eq
        .iter()
        .zip(reference)
        .map(|(e, _)| if e.is_finite() { *e } else { Complex64::new(0.0, 0.0) })
        .collect();
    measure_evm_rms(&cleaned, reference)
}

/// Grid-shaped channel estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridChannelEstimate {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    h: Vec<Complex64>,
}

impl GridChannelEstimate {
    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.h[l * self.n_subcarriers + k]
    }
}

/// LS estimate from one pilot symbol per slot, linearly interpolated across
/// subcarriers and held over the slot. `pilots` holds `(k, l, x)` with `l`
/// the pilot symbol; slots without pilots get a zero estimate.
pub fn estimate_slot_channel(grid: &ResourceGrid, pilots: &[(usize, usize, Complex64)]) -> GridChannelEstimate {
    let n_sc = grid.n_subcarriers();
    let n_sym = grid.n_symbols();
    let per_slot = grid.numerology().symbols_per_slot;
    let n_slots = n_sym.div_ceil(per_slot);
    let mut by_slot: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n_slots];
    for &(k, l, x) in pilots {
        by_slot[l / per_slot].push((k, grid.get(k, l) / x));
    }
    let mut h = vec![Complex64::new(0.0, 0.0); n_sc * n_sym];
    for (s, mut p) in by_slot.into_iter().enumerate() {
        p.sort_by_key(|(k, _)| *k);
        let (pos, val): (Vec<usize>, Vec<Complex64>) = p.into_iter().unzip();
        let row = interpolate_linear(&pos, &val, n_sc);
        for l in s * per_slot..((s + 1) * per_slot).min(n_sym) {
            h[l * n_sc..(l + 1) * n_sc].copy_from_slice(&row);
        }
    }
    GridChannelEstimate {
        n_subcarriers: n_sc,
        n_symbols: n_sym,
        h,
    }
}

/// Zero-forced values of the REs listed in `reference`.
pub fn equalize_pdsch(grid: &ResourceGrid, reference: &[(usize, usize, Complex64)], estimate: &GridChannelEstimate) -> Vec<Complex64> {
    reference.iter().map(|&(k, l, _)| grid.get(k, l) / estimate.get(k, l)).collect()
}

/// Equalizes the PDSCH REs listed in `reference` and returns the EVM.
pub fn pdsch_evm(grid: &ResourceGrid, reference: &[(usize, usize, Complex64)], estimate: &GridChannelEstimate) -> Result<f64> {
    let eq = equalize_pdsch(grid, reference, estimate);
    let tx: Vec<Complex64> = reference.iter().map(|r| r.2).collect();
    finite_evm(&eq, &tx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsEntry {
    pub scheme: ModScheme,
    pub code_rate: f64,
    /// SINR at which the BLER is 50%.
    pub threshold_db: f64,
}

impl McsEntry {
    pub fn bits_per_re(&self) -> f64 {
        self.scheme.bits_per_symbol() as f64 * self.code_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McsTable {
    pub entries: Vec<McsEntry>,
    /// Logistic slope per dB.
    pub slope: f64,
}

impl Default for McsTable {
    fn default() -> Self {
        Self {
            entries: vec![
                McsEntry {
                    scheme: ModScheme::Qpsk,
                    code_rate: 0.5,
                    threshold_db: 0.0,
                },
                McsEntry {
                    scheme: ModScheme::Qam16,
                    code_rate: 0.5,
                    threshold_db: 10.0,
                },
                McsEntry {
                    scheme: ModScheme::Qam64,
                    code_rate: 0.75,
                    threshold_db: 18.0,
                },
            ],
            slope: 2.0,
        }
    }
}

impl McsTable {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::EmptyMcsTable);
        }
        if !(self.slope > 0.0 && self.slope.is_finite()) {
            return Err(Error::OutOfRange {
                what: "BLER slope",
                value: self.slope.to_string(),
            });
        }
        if self.entries.iter().any(|e| !(e.code_rate > 0.0 && e.code_rate <= 1.0) || !e.threshold_db.is_finite()) {
            return Err(Error::InvalidConfig("MCS entries need a code rate in (0, 1] and a finite threshold".into()));
        }
        Ok(())
    }

    pub fn entry(&self, mcs: usize) -> Result<&McsEntry> {
        self.entries.get(mcs).ok_or(Error::UnknownMcs(mcs))
    }

    /// Highest MCS whose threshold plus `backoff_db` does not exceed
    /// `sinr_db`; the lowest MCS otherwise.
    pub fn select(&self, sinr_db: f64, backoff_db: f64) -> usize {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.threshold_db + backoff_db <= sinr_db)
            .max_by(|a, b| a.1.threshold_db.total_cmp(&b.1.threshold_db))
            .map_or(0, |(i, _)| i)
    }
}

/// Block error probability `1 / (1 + exp(k (sinr - s_th)))`.
pub fn sinr_to_bler(sinr_db: f64, mcs: usize, table: &McsTable) -> Result<f64> {
    let e = table.entry(mcs)?;
    let x = table.slope * (sinr_db - e.threshold_db);
    // Stable for large |x|.
    Ok(if x >= 0.0 {
        let t = (-x).exp();
        t / (1.0 + t)
    } else {
        1.0 / (1.0 + x.exp())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssb::{map_burst_set, schedule_burst_set, SsbBurstSet};
    use crate::waveform::build_numerology;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn num() -> Numerology {
        build_numerology(30_000, 51).unwrap()
    }

    fn cgauss<R: Rng>(rng: &mut R, var: f64) -> Complex64 {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * (var / 2.0).sqrt()
    }

    fn ssb_signal(pci: u16, n_bursts: usize) -> (Vec<Complex64>, SsbBurstSet, Numerology) {
        let n = num();
        let bs = schedule_burst_set(CellIdentity::from_pci(pci).unwrap(), n_bursts, 0, 0.0, 0x00ab_cdef).unwrap();
        let mut g = ResourceGrid::new(&n, 4 * 14);
        map_burst_set(&mut g, &bs, 1.0);
        let x = OfdmEngine::new(&n).unwrap().modulate(&g);
        (x, bs, n)
    }

    #[test]
    fn clean_ssb_is_found_at_exact_offset() {
        let (x, bs, n) = ssb_signal(350, 8);
        let det = detect_pss(&x, &n, DEFAULT_PSS_THRESHOLD).unwrap();
        assert!(det.detected);
        assert_eq!(det.n_id_2, 2);
        assert_eq!(det.timing_offset, n.useful_start(bs.blocks[0].start_symbol));
    }

    #[test]
    fn short_input_is_rejected() {
        let n = num();
        let x = vec![Complex64::new(0.0, 0.0); 100];
        assert!(matches!(detect_pss(&x, &n, 8.0), Err(Error::InsufficientSamples { .. })));
        assert!(matches!(PssDetector::new(&n, 0.0), Err(Error::NonPositiveThreshold)));
    }

    #[test]
    fn correlation_matches_direct_sum() {
        let n = num();
        let det = PssDetector::new(&n, 8.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Complex64> = (0..20_000).map(|_| cgauss(&mut rng, 1.0)).collect();
        let corr = det.correlate(&x).unwrap();
        assert_eq!(corr[0].len(), x.len() - n.fft_size + 1);
        let rep = pss_replica(&OfdmEngine::new(&n).unwrap(), 1).unwrap();
        for lag in [0usize, 5_000, 8_000, 8_193, 18_976] {
            let direct: Complex64 = (0..rep.len()).map(|i| x[lag + i] * rep[i].conj()).sum();
            assert!((direct.norm() - corr[1][lag]).abs() < 1e-9 * direct.norm().max(1.0));
        }
    }

    #[test]
    fn noise_rarely_triggers_detection() {
        let n = num();
        let det = PssDetector::new(&n, DEFAULT_PSS_THRESHOLD).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let alarms = (0..200)
            .filter(|_| {
                let x: Vec<Complex64> = (0..16_384).map(|_| cgauss(&mut rng, 1.0)).collect();
                det.detect(&x).unwrap().detected
            })
            .count();
        assert!(alarms <= 2, "{alarms}");
    }

    fn ssb_grid(pci: u16) -> (ResourceGrid, SsbLocation, SsbBurstSet) {
        let (x, bs, n) = ssb_signal(pci, 1);
        let eng = OfdmEngine::new(&n).unwrap();
        let g = extract_ssb_grid(&eng, &x, n.useful_start(2)).unwrap();
        (g, SsbLocation::centered(&n, 0), bs)
    }

    #[test]
    fn sss_identifies_pci_350() {
        let (g, loc, _) = ssb_grid(350);
        let det = detect_sss(&g, 2, loc).unwrap();
        assert_eq!(det.n_id_1, 116);
        assert_eq!(det.scores.len(), 336);
        assert!(det.margin() >= 2.0);
        assert!(detect_sss(&g, 2, SsbLocation { subcarrier: 500, symbol: 0 }).is_err());
    }

    #[test]
    fn noiseless_pbch_and_pss_evm_are_tiny() {
        let (g, loc, bs) = ssb_grid(350);
        let pci = bs.pci();
        let est = estimate_ssb_channel(&g, loc, pci, 0).unwrap();
        let dec = decode_pbch(&g, loc, pci, 0x00ab_cdef, &est, DEFAULT_EVM_DECODE_THRESHOLD).unwrap();
        assert!(dec.evm_rms_percent < 1.0 && dec.mib_decodable);
        assert!(pss_evm(&g, loc, 2, &est).unwrap() < 1.0);
        assert!(estimate_dmrs_sjnr(&g, loc, pci, 0).unwrap() >= 40.0);
    }

    #[test]
    fn decode_threshold_separates_reported_evms() {
        let decodable = |evm: f64| evm <= DEFAULT_EVM_DECODE_THRESHOLD;
        assert!(!decodable(51.59));
        assert!(decodable(23.36));
    }

    fn noisy_ssb_grid(snr_db: f64, gain_db: f64, seed: u64) -> (ResourceGrid, SsbLocation, CellIdentity) {
        let n = num();
        let pci = CellIdentity::from_pci(17).unwrap();
        let bs = schedule_burst_set(pci, 1, 0, gain_db, 5).unwrap();
        let mut g = ResourceGrid::new(&n, 4);
        let mut bs0 = bs.clone();
        bs0.blocks[0].start_symbol = 0;
        map_burst_set(&mut g, &bs0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let var = 10f64.powf(-snr_db / 10.0);
        let data: Vec<Complex64> = g.data().iter().map(|z| z + cgauss(&mut rng, var)).collect();
        (ResourceGrid::from_data(&n, 4, data).unwrap(), SsbLocation::centered(&n, 0), pci)
    }

    #[test]
    fn sjnr_estimate_tracks_injected_snr() {
        let mean = (0..200)
            .map(|s| {
                let (g, loc, pci) = noisy_ssb_grid(20.0, 0.0, s);
                estimate_dmrs_sjnr(&g, loc, pci, 0).unwrap()
            })
            .sum::<f64>()
            / 200.0;
        assert!((mean - 20.0).abs() <= 1.5, "{mean}");
    }

    #[test]
    fn boosted_burst_sjnr_rises_by_boost() {
        let avg = |gain: f64| {
            (0..100)
                .map(|s| {
                    let (g, loc, pci) = noisy_ssb_grid(5.0, gain, 1000 + s);
                    estimate_dmrs_sjnr(&g, loc, pci, 0).unwrap()
                })
                .sum::<f64>()
                / 100.0
        };
        let diff = avg(9.0) - avg(0.0);
        assert!((diff - 9.0).abs() <= 2.0, "{diff}");
    }

    #[test]
    fn pbch_evm_falls_with_noise() {
        let evms: Vec<f64> = [0.0, 4.0, 8.0, 12.0, 16.0]
            .iter()
            .map(|&snr| {
                (0..50)
                    .map(|s| {
                        let (g, loc, pci) = noisy_ssb_grid(snr, 0.0, 77 + s);
                        let est = estimate_ssb_channel(&g, loc, pci, 0).unwrap();
                        decode_pbch(&g, loc, pci, 5, &est, 35.0).unwrap().evm_rms_percent
                    })
                    .sum::<f64>()
                    / 50.0
            })
            .collect();
        assert!(evms.windows(2).all(|w| w[1] < w[0]), "{evms:?}");
    }

    #[test]
    fn interpolation_is_exact_on_lines() {
        let pos = [2usize, 6, 10];
        let val: Vec<Complex64> = pos.iter().map(|&p| Complex64::new(p as f64, -(p as f64))).collect();
        let out = interpolate_linear(&pos, &val, 13);
        for (k, v) in out.iter().enumerate().take(11).skip(2) {
            assert!((v - Complex64::new(k as f64, -(k as f64))).norm() < 1e-12);
        }
        assert_eq!(out[0], val[0]);
        assert_eq!(out[12], val[2]);
    }

    #[test]
    fn slot_estimate_recovers_flat_channel() {
        let n = num();
        let mut g = ResourceGrid::new(&n, 28);
        let h = Complex64::from_polar(0.5, 0.7);
        let mut pilots = Vec::new();
        for s in 0..2 {
            for k in (0..n.n_subcarriers()).step_by(2) {
                let x = Complex64::new(FRAC, -FRAC);
                g.set(k, 14 * s + 2, x * h);
                pilots.push((k, 14 * s + 2, x));
            }
        }
        let x = Complex64::new(-0.3, 0.9);
        g.set(5, 20, x * h);
        let est = estimate_slot_channel(&g, &pilots);
        assert!((est.get(5, 20) - h).norm() < 1e-12);
        assert!(pdsch_evm(&g, &[(5, 20, x)], &est).unwrap() < 1e-9);
    }

    const FRAC: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn bler_examples() {
        let t = McsTable::default();
        assert!((sinr_to_bler(10.0, 1, &t).unwrap() - 0.5).abs() < 1e-15);
        assert!(sinr_to_bler(20.0, 1, &t).unwrap() < 1e-8);
        assert!(matches!(sinr_to_bler(0.0, 9, &t), Err(Error::UnknownMcs(9))));
        assert_eq!(t.select(25.0, 3.0), 2);
        assert_eq!(t.select(14.0, 3.0), 1);
        assert_eq!(t.select(-5.0, 3.0), 0);
    }

    proptest! {
        #[test]
        fn bler_is_monotone(a in -40.0f64..60.0, b in -40.0f64..60.0, mcs in 0usize..3) {
            let t = McsTable::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(sinr_to_bler(hi, mcs, &t).unwrap() <= sinr_to_bler(lo, mcs, &t).unwrap());
        }
    }
}
