//! Single-link waveform pipeline for SSB attacks: one gNB, one UE and any
//! number of jammers, simulated at sample level over the slots that carry
//! the SSB burst set.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, noise_power_re_dbm, ChannelRealization, FadingProfile, LinkBudget};
use crate::error::{Error, Result};
use crate::jammer::{jammer_link_gain_db, synthesize_jam_grid, JammerKind, JammerSpec, MAX_TX_POWER_DBM, MIN_TX_POWER_DBM};
use crate::receiver::{
    decode_pbch, detect_sss, equalize_pbch, equalize_pdsch, estimate_dmrs_sjnr, estimate_slot_channel,
    estimate_ssb_channel, extract_ssb_grid, pdsch_evm, pss_evm, PssDetection, PssDetector, SsbLocation,
    SsbMeasurement, SssDetection, DEFAULT_EVM_DECODE_THRESHOLD, DEFAULT_PSS_THRESHOLD,
};
use crate::rng::stream_rng;
use crate::ssb::{gold_sequence, map_burst_set, schedule_burst_set, ssb_block_mask, CellIdentity, SsbBurstSet};
use crate::units::{dbm_to_watts, db_to_amplitude};
use crate::waveform::{build_numerology, modulate, ModScheme, Numerology, OfdmEngine, ResourceGrid};

const STREAM_DATA: u64 = 1;
const STREAM_GNB_FADING: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_JAMMER: u64 = 16;
const STREAM_JAMMER_FADING: u64 = 1 << 20;

/// PDSCH DM-RS symbol within each slot.
pub const PDSCH_DMRS_SYMBOL: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub scs_hz: u32,
    pub n_rb: usize,
    pub carrier_hz: f64,
    pub gnb_power_dbm: f64,
    pub gnb_gain_db: f64,
    pub gnb_position: [f64; 2],
    pub ue_position: [f64; 2],
    pub ue_gain_db: f64,
    pub noise_figure_db: f64,
    pub thermal_noise: bool,
    pub pci: u16,
    pub n_bursts: usize,
    pub boost_index: usize,
    pub boost_db: f64,
    /// 24-bit MIB stand-in.
    pub mib_bits: u32,
    pub jammers: Vec<JammerSpec>,
    /// CDL-A tapped delay line per link when true, flat otherwise.
    pub fading: bool,
    pub delay_spread_ns: f64,
    pub pss_threshold: f64,
    pub evm_decode_threshold: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            scs_hz: 30_000,
            n_rb: 51,
            carrier_hz: 2.635e9,
            gnb_power_dbm: 32.0,
            gnb_gain_db: 0.0,
            gnb_position: [0.0, 0.0],
            ue_position: [60.0, 60.0],
            ue_gain_db: 0.0,
            noise_figure_db: 7.0,
            thermal_noise: true,
            pci: 350,
            n_bursts: 8,
            boost_index: 0,
            boost_db: 0.0,
            mib_bits: 0x00a5_3c96,
            jammers: vec![JammerSpec {
                kind: JammerKind::Barrage,
                tx_power_dbm: 30.0,
                gain_db: 0.0,
                position: [100.0, 100.0],
            }],
            fading: false,
            delay_spread_ns: 30.0,
            pss_threshold: DEFAULT_PSS_THRESHOLD,
            evm_decode_threshold: DEFAULT_EVM_DECODE_THRESHOLD,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        build_numerology(self.scs_hz, self.n_rb)?;
        if !(MIN_TX_POWER_DBM..=MAX_TX_POWER_DBM).contains(&self.gnb_power_dbm) {
            return Err(Error::OutOfRange {
                what: "gNB tx power (dBm)",
                value: self.gnb_power_dbm.to_string(),
            });
        }
        if !(self.carrier_hz > 0.0) {
            return Err(Error::NonPositiveCarrier(self.carrier_hz));
        }
        CellIdentity::from_pci(self.pci)?;
        if self.mib_bits >= 1 << 24 {
            return Err(Error::OutOfRange {
                what: "MIB bits",
                value: format!("{:#x}", self.mib_bits),
            });
        }
        if !(self.delay_spread_ns >= 0.0) || !(self.pss_threshold > 0.0) || !(self.evm_decode_threshold > 0.0) {
            return Err(Error::InvalidConfig(
                "delay spread must be non-negative and thresholds positive".into(),
            ));
        }
        for j in &self.jammers {
            j.validate()?;
        }
        self.gnb_link()?.net_gain_db()?;
        schedule_burst_set(CellIdentity::from_pci(self.pci)?, self.n_bursts, self.boost_index, self.boost_db, self.mib_bits)?;
        Ok(())
    }

    fn gnb_link(&self) -> Result<LinkBudget> {
        Ok(LinkBudget {
            tx_power_dbm: self.gnb_power_dbm,
            tx_gain_db: self.gnb_gain_db,
            rx_gain_db: self.ue_gain_db,
            carrier_hz: self.carrier_hz,
            distance_m: (self.ue_position[0] - self.gnb_position[0]).hypot(self.ue_position[1] - self.gnb_position[1]),
        })
    }

    /// Received power per RE of the unboosted downlink at the UE, watts.
    pub fn signal_re_power_w(&self) -> Result<f64> {
        let num = build_numerology(self.scs_hz, self.n_rb)?;
        Ok(dbm_to_watts(self.gnb_power_dbm) / num.n_subcarriers() as f64
            * 10f64.powf(self.gnb_link()?.net_gain_db()? / 10.0))
    }

    pub fn noise_re_power_w(&self) -> f64 {
        if self.thermal_noise {
            dbm_to_watts(noise_power_re_dbm(self.scs_hz as f64, self.noise_figure_db))
        } else {
            0.0
        }
    }
}

/// Transmitted resource grid with the references the receiver needs.
#[derive(Debug, Clone)]
pub struct DownlinkFrame {
    pub numerology: Numerology,
    pub burst_set: SsbBurstSet,
    /// Unit-power-per-RE grid; scale by the per-RE amplitude on air.
    pub grid: ResourceGrid,
    pub pdsch_dmrs: Vec<(usize, usize, Complex64)>,
    pub pdsch_data: Vec<(usize, usize, Complex64)>,
}

/// SSB burst set plus 16-QAM PDSCH on every remaining RE of the slots that
/// carry the bursts. Each slot has one comb-2 PDSCH DM-RS symbol that
/// skips SSB REs.
pub fn build_downlink<R: Rng + ?Sized>(cfg: &LinkConfig, rng: &mut R) -> Result<DownlinkFrame> {
    let num = build_numerology(cfg.scs_hz, cfg.n_rb)?;
    let pci = CellIdentity::from_pci(cfg.pci)?;
    let bs = schedule_burst_set(pci, cfg.n_bursts, cfg.boost_index, cfg.boost_db, cfg.mib_bits)?;
    let n_sym = bs.slots_spanned(&num) * num.symbols_per_slot;
    let n_sc = num.n_subcarriers();
    let mut grid = ResourceGrid::new(&num, n_sym);
    let ssb_mask = ssb_block_mask(n_sc, n_sym, &num, &bs);
    let mut pdsch_dmrs = Vec::new();
    let mut pdsch_data = Vec::new();
    let n_slots = n_sym / num.symbols_per_slot;
    for slot in 0..n_slots {
        let l = slot * num.symbols_per_slot + PDSCH_DMRS_SYMBOL;
        let bits = gold_sequence(((slot as u32) << 10) ^ cfg.pci as u32, n_sc);
        let qpsk = modulate(&bits, ModScheme::Qpsk)?;
        for (i, k) in (0..n_sc).step_by(2).enumerate() {
            if !ssb_mask[l * n_sc + k] {
                pdsch_dmrs.push((k, l, qpsk[i]));
            }
        }
    }
    let is_dmrs_symbol = |l: usize| l % num.symbols_per_slot == PDSCH_DMRS_SYMBOL;
    let data_res: Vec<(usize, usize)> = (0..n_sym)
        .flat_map(|l| (0..n_sc).map(move |k| (k, l)))
        .filter(|&(k, l)| !ssb_mask[l * n_sc + k] && !(is_dmrs_symbol(l) && k % 2 == 0))
        .collect();
    let bps = ModScheme::Qam16.bits_per_symbol();
    let bits: Vec<u8> = (0..data_res.len() * bps).map(|_| rng.random_range(0..2u8)).collect();
    let symbols = modulate(&bits, ModScheme::Qam16)?;
    for (&(k, l), x) in data_res.iter().zip(symbols) {
        pdsch_data.push((k, l, x));
    }
    for &(k, l, x) in pdsch_dmrs.iter().chain(&pdsch_data) {
        grid.set(k, l, x);
    }
    map_burst_set(&mut grid, &bs, 1.0);
    Ok(DownlinkFrame {
        numerology: num,
        burst_set: bs,
        grid,
        pdsch_dmrs,
        pdsch_data,
    })
}

/// Everything measured on one received window.
#[derive(Debug, Clone)]
pub struct LinkOutcome {
    pub pss: PssDetection,
    /// PSS useful-part start of every burst in the window.
    pub pss_starts: Vec<usize>,
    pub sss: Option<SssDetection>,
    pub measurement: SsbMeasurement,
    /// PSS EVM per received burst, percent.
    pub burst_pss_evm: Vec<f64>,
    pub pdsch_evm: f64,
    pub capture: Option<LinkCapture>,
}

impl LinkOutcome {
    /// Correct `n_id_2` detected within half a CP of a burst's PSS.
    pub fn pss_ok(&self, numerology: &Numerology, n_id_2: u8) -> bool {
        self.pss.matches(n_id_2, &self.pss_starts, numerology.cp_len(1) / 2)
    }
}

/// Bulky per-run data kept for export.
#[derive(Debug, Clone)]
pub struct LinkCapture {
    /// `|correlation|` per PSS candidate and lag.
    pub pss_correlation: Vec<Vec<f64>>,
    /// Equalized PBCH data symbols per burst.
    pub pbch_constellation: Vec<Vec<Complex64>>,
    pub pdsch_constellation: Vec<Complex64>,
}

fn complex_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, var: f64) -> Vec<Complex64> {
    let s = (var / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * s
        })
        .collect()
}

/// Reusable simulator for one link configuration.
pub struct LinkSimulator {
    cfg: LinkConfig,
    num: Numerology,
    engine: OfdmEngine,
    detector: PssDetector,
    profile: FadingProfile,
}

impl LinkSimulator {
    pub fn new(cfg: &LinkConfig) -> Result<Self> {
        cfg.validate()?;
        let num = build_numerology(cfg.scs_hz, cfg.n_rb)?;
        Ok(Self {
            engine: OfdmEngine::new(&num)?,
            detector: PssDetector::new(&num, cfg.pss_threshold)?,
            profile: FadingProfile::cdl_a(cfg.delay_spread_ns),
            cfg: cfg.clone(),
            num,
        })
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    pub fn numerology(&self) -> &Numerology {
        &self.num
    }

    fn draw_channel(&self, seed: u64, stream: u64) -> ChannelRealization {
        if self.cfg.fading {
            let mut ch = self.profile.draw(&self.num, &mut stream_rng(seed, stream));
            ch.seed = Some(seed);
            ch
        } else {
            ChannelRealization::identity()
        }
    }

    /// Received samples of the downlink window for `seed`.
    pub fn receive(&self, seed: u64) -> Result<(DownlinkFrame, Vec<Complex64>)> {
        let cfg = &self.cfg;
        let frame = build_downlink(cfg, &mut stream_rng(seed, STREAM_DATA))?;
        let amp = re_amplitude(cfg)?;
        let tx: Vec<Complex64> = self.engine.modulate(&frame.grid).into_iter().map(|z| z * amp).collect();
        let gain = cfg.gnb_link()?.net_gain_db()?;
        let mut rx = apply_channel(&tx, &self.draw_channel(seed, STREAM_GNB_FADING), gain);
        let n_sym = frame.grid.n_symbols();
        for (j, spec) in cfg.jammers.iter().enumerate() {
            let g = jammer_link_gain_db(spec, cfg.ue_position, cfg.carrier_hz, cfg.ue_gain_db)?;
            let jg = synthesize_jam_grid(spec, &self.num, Some(&frame.burst_set), n_sym, &mut stream_rng(seed, STREAM_JAMMER + j as u64))?;
            let jx = self.engine.modulate(&jg);
            let jr = apply_channel(&jx, &self.draw_channel(seed, STREAM_JAMMER_FADING + j as u64), g);
            rx.iter_mut().zip(jr).for_each(|(a, b)| *a += b);
        }
        let nv = cfg.noise_re_power_w();
        if nv > 0.0 {
            let noise = complex_noise(&mut stream_rng(seed, STREAM_NOISE), rx.len(), nv);
            rx.iter_mut().zip(noise).for_each(|(a, b)| *a += b);
        }
        Ok((frame, rx))
    }

    /// Cell search only: PSS detection on one received window.
    pub fn search(&self, seed: u64) -> Result<(PssDetection, Vec<usize>)> {
        let (frame, rx) = self.receive(seed)?;
        let starts = self.pss_starts(&frame);
        Ok((self.detector.detect(&rx)?, starts))
    }

    fn pss_starts(&self, frame: &DownlinkFrame) -> Vec<usize> {
        frame
            .burst_set
            .occurrences(&self.num, frame.grid.n_symbols())
            .into_iter()
            .map(|(_, s)| self.num.useful_start(s))
            .collect()
    }

    /// Full pipeline: search, SSS, per-burst DM-RS SJNR and EVMs, PDSCH EVM.
    pub fn run(&self, seed: u64, capture: bool) -> Result<LinkOutcome> {
        let cfg = &self.cfg;
        let (frame, rx) = self.receive(seed)?;
        let pci = CellIdentity::from_pci(cfg.pci)?;
        let pss_starts = self.pss_starts(&frame);
        let corr = self.detector.correlate(&rx)?;
        let pss = self.detector.detect(&rx)?;
        let sss = if pss.detected {
            let g = extract_ssb_grid(&self.engine, &rx, pss.timing_offset)?;
            Some(detect_sss(&g, pss.n_id_2, SsbLocation::centered(&self.num, 0))?)
        } else {
            None
        };
        let pci_detected = sss.as_ref().and_then(|s| CellIdentity::new(s.n_id_1, pss.n_id_2).ok());

        let rx_grid = self.engine.demodulate(&rx, 0)?;
        let mut sjnr_db = Vec::new();
        let mut burst_pbch_evm = Vec::new();
        let mut burst_pss_evm = Vec::new();
        let mut pbch_constellation = Vec::new();
        for (i, start) in frame.burst_set.occurrences(&self.num, rx_grid.n_symbols()) {
            let loc = SsbLocation::centered(&self.num, start);
            let est = estimate_ssb_channel(&rx_grid, loc, pci, i as u8)?;
            sjnr_db.push(estimate_dmrs_sjnr(&rx_grid, loc, pci, i as u8)?);
            burst_pbch_evm.push(decode_pbch(&rx_grid, loc, pci, cfg.mib_bits, &est, cfg.evm_decode_threshold)?.evm_rms_percent);
            burst_pss_evm.push(pss_evm(&rx_grid, loc, pci.n_id_2(), &est)?);
            if capture {
                pbch_constellation.push(equalize_pbch(&rx_grid, loc, pci, &est)?);
            }
        }
        let pbch_evm_rms = burst_pbch_evm.iter().copied().fold(f64::INFINITY, f64::min);
        let pss_evm_rms = (burst_pss_evm.iter().map(|e| e * e).sum::<f64>() / burst_pss_evm.len() as f64).sqrt();
        let pdsch_est = estimate_slot_channel(&rx_grid, &frame.pdsch_dmrs);
        let pdsch = pdsch_evm(&rx_grid, &frame.pdsch_data, &pdsch_est)?;
        let capture = capture.then(|| LinkCapture {
            pss_correlation: corr,
            pbch_constellation,
            pdsch_constellation: equalize_pdsch(&rx_grid, &frame.pdsch_data, &pdsch_est),
        });
        Ok(LinkOutcome {
            pss,
            pss_starts,
            sss,
            measurement: SsbMeasurement {
                pci_detected,
                sjnr_db,
                burst_pbch_evm,
                pbch_evm_rms,
                pss_evm_rms,
                mib_decodable: pbch_evm_rms <= cfg.evm_decode_threshold,
            },
            burst_pss_evm,
            pdsch_evm: pdsch,
            capture,
        })
    }

    /// Fraction of `trials` windows (seeds `base_seed..`) where the PSS is
    /// found with the right identity and timing.
    pub fn detection_rate(&self, trials: usize, base_seed: u64) -> Result<f64> {
        let id2 = CellIdentity::from_pci(self.cfg.pci)?.n_id_2();
        let tol = self.num.cp_len(1) / 2;
        let mut ok = 0usize;
        for t in 0..trials {
            let (det, starts) = self.search(base_seed + t as u64)?;
            ok += det.matches(id2, &starts, tol) as usize;
        }
        Ok(ok as f64 / trials as f64)
    }
}

/// Smallest total power of a single jammer of `kind` (placed as the first
/// jammer in `cfg`) that pushes the PSS detection rate below one half.
/// Bisection over `[lo_dbm, hi_dbm]` to `tol_db`, with common random numbers
/// across power levels.
pub fn min_denial_power_dbm(
    cfg: &LinkConfig,
    kind: JammerKind,
    trials: usize,
    base_seed: u64,
    lo_dbm: f64,
    hi_dbm: f64,
    tol_db: f64,
) -> Result<f64> {
    let template = cfg.jammers.first().copied().ok_or_else(|| Error::InvalidConfig("no jammer to scale".into()))?;
    let denied = |p: f64| -> Result<bool> {
        let mut c = cfg.clone();
        c.jammers = vec![JammerSpec {
            kind,
            tx_power_dbm: p,
            ..template
        }];
        Ok(LinkSimulator::new(&c)?.detection_rate(trials, base_seed)? < 0.5)
    };
    if !denied(hi_dbm)? {
        return Err(Error::InvalidScenario(format!("detection survives {hi_dbm} dBm")));
    }
    if denied(lo_dbm)? {
        return Ok(lo_dbm);
    }
    let (mut lo, mut hi) = (lo_dbm, hi_dbm);
    while hi - lo > tol_db {
        let mid = 0.5 * (lo + hi);
        if denied(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Amplitude of one unit grid value on air: the gNB power split evenly
/// over the occupied subcarriers.
pub fn re_amplitude(cfg: &LinkConfig) -> Result<f64> {
    let num = build_numerology(cfg.scs_hz, cfg.n_rb)?;
    Ok(db_to_amplitude(cfg.gnb_power_dbm - 30.0) / (num.n_subcarriers() as f64).sqrt())
}
