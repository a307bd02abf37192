//! Jammer power mathematics, waveform synthesis and multi-jammer
//! aggregation.
//!
//! A jammer's `tx_power_dbm` is the power it radiates while ON. It is split
//! evenly over the REs it targets in each active OFDM symbol:
//!
//! * barrage: every occupied subcarrier of every symbol;
//! * smart SSB: the 240 SSB subcarriers during the 4 symbols of each burst;
//! * smart PBCH: only the PBCH data and DM-RS REs of each burst.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::LinkBudget;
use crate::error::{Error, Result};
use crate::ssb::{dmrs_positions, pbch_data_positions, ssb_subcarrier_offset, SsbBurstSet, SSB_SUBCARRIERS, SSB_SYMBOLS};
use crate::units::{dbm_to_watts, watts_to_dbm};
use crate::waveform::{Numerology, OfdmEngine, ResourceGrid};

pub const MIN_TX_POWER_DBM: f64 = 0.0;
pub const MAX_TX_POWER_DBM: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JammerKind {
    Barrage,
    SmartSsb,
    SmartPbch,
}

impl JammerKind {
    pub fn is_smart(self) -> bool {
        !matches!(self, JammerKind::Barrage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JammerSpec {
    pub kind: JammerKind,
    pub tx_power_dbm: f64,
    #[serde(default)]
    pub gain_db: f64,
    /// Position in meters, gNB at the origin.
    pub position: [f64; 2],
}

impl JammerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_TX_POWER_DBM..=MAX_TX_POWER_DBM).contains(&self.tx_power_dbm) {
            return Err(Error::OutOfRange {
                what: "jammer tx power (dBm)",
                value: self.tx_power_dbm.to_string(),
            });
        }
        if !self.gain_db.is_finite() || self.position.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("jammer gain and position must be finite".into()));
        }
        Ok(())
    }

    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        (self.position[0] - p[0]).hypot(self.position[1] - p[1])
    }
}

/// Signal-to-jamming-plus-noise ratio per RE (linear).
pub fn sjnr(p_re_rx: f64, p_j_re: f64, p_n_re: f64) -> Result<f64> {
    if !(p_n_re > 0.0) {
        return Err(Error::NonPositiveNoise);
    }
    Ok(p_re_rx / (p_j_re + p_n_re))
}

/// Per-RE jamming power that pulls the SJNR down to `gamma_th`; zero when
/// noise alone already does.
pub fn min_jam_re_power(p_re_rx: f64, gamma_th: f64, p_n_re: f64) -> Result<f64> {
    if !(gamma_th > 0.0) {
        return Err(Error::NonPositiveThreshold);
    }
    Ok((p_re_rx / gamma_th - p_n_re).max(0.0))
}

/// Total jammer power needed to put `p_min_re` on each targeted RE.
pub fn total_jam_power(kind: JammerKind, n_rb: usize, n_rb_ssb: usize, p_min_re: f64) -> f64 {
    match kind {
        JammerKind::Barrage => 12.0 * n_rb as f64 * p_min_re,
        JammerKind::SmartSsb | JammerKind::SmartPbch => 12.0 * n_rb_ssb as f64 * p_min_re,
    }
}

/// Grid-shaped mask of the REs `kind` transmits on over `n_symbols`.
pub fn target_mask(
    kind: JammerKind,
    numerology: &Numerology,
    n_symbols: usize,
    burst_set: Option<&SsbBurstSet>,
) -> Result<Vec<bool>> {
    let n_sc = numerology.n_subcarriers();
    if kind == JammerKind::Barrage {
        return Ok(vec![true; n_sc * n_symbols]);
    }
    let bs = burst_set.ok_or(Error::MissingBurstSchedule)?;
    let offset = ssb_subcarrier_offset(numerology);
    let mut mask = vec![false; n_sc * n_symbols];
    let pci = bs.pci();
    let pbch: Vec<(usize, usize)> = dmrs_positions(pci).into_iter().chain(pbch_data_positions(pci)).collect();
    for (_, start) in bs.occurrences(numerology, n_symbols) {
        match kind {
            JammerKind::SmartSsb => {
                for l in 0..SSB_SYMBOLS {
                    for k in 0..SSB_SUBCARRIERS {
                        mask[(start + l) * n_sc + offset + k] = true;
                    }
                }
            }
            JammerKind::SmartPbch => {
                for &(k, l) in &pbch {
                    mask[(start + l) * n_sc + offset + k] = true;
                }
            }
            JammerKind::Barrage => unreachable!(),
        }
    }
    Ok(mask)
}

/// REs targeted per active symbol, averaged over the active symbols.
fn targeted_per_active_symbol(mask: &[bool], n_sc: usize) -> f64 {
    let mut active = 0usize;
    let mut total = 0usize;
    for sym in mask.chunks(n_sc) {
        let c = sym.iter().filter(|&&m| m).count();
        if c > 0 {
            active += 1;
            total += c;
        }
    }
    if active == 0 {
        0.0
    } else {
        total as f64 / active as f64
    }
}

/// Per-RE transmit power (W) for `spec` together with its target mask.
pub fn per_re_tx_power(
    spec: &JammerSpec,
    numerology: &Numerology,
    n_symbols: usize,
    burst_set: Option<&SsbBurstSet>,
) -> Result<(f64, Vec<bool>)> {
    let mask = target_mask(spec.kind, numerology, n_symbols, burst_set)?;
    let per_symbol = targeted_per_active_symbol(&mask, numerology.n_subcarriers());
    let p = if per_symbol > 0.0 {
        dbm_to_watts(spec.tx_power_dbm) / per_symbol
    } else {
        0.0
    };
    Ok((p, mask))
}

/// Frequency-domain jamming grid at the jammer's antenna.
pub fn synthesize_jam_grid<R: Rng + ?Sized>(
    spec: &JammerSpec,
    numerology: &Numerology,
    burst_set: Option<&SsbBurstSet>,
    n_symbols: usize,
    rng: &mut R,
) -> Result<ResourceGrid> {
    let (p_re, mask) = per_re_tx_power(spec, numerology, n_symbols, burst_set)?;
    let sigma = (p_re / 2.0).sqrt();
    let mut grid = ResourceGrid::new(numerology, n_symbols);
    let n_sc = numerology.n_subcarriers();
    for (idx, m) in mask.iter().enumerate() {
        if *m {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            grid.set(idx % n_sc, idx / n_sc, Complex64::new(re, im) * sigma);
        }
    }
    Ok(grid)
}

/// Band-limited complex Gaussian jamming waveform spanning `n_slots` slots.
pub fn synthesize_jam_waveform(
    spec: &JammerSpec,
    numerology: &Numerology,
    burst_set: Option<&SsbBurstSet>,
    n_slots: usize,
    seed: u64,
) -> Result<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = synthesize_jam_grid(spec, numerology, burst_set, n_slots * numerology.symbols_per_slot, &mut rng)?;
    Ok(OfdmEngine::new(numerology)?.modulate(&grid))
}

/// Common receiver-side context for footprint computation.
#[derive(Debug, Clone)]
pub struct JamContext<'a> {
    pub numerology: &'a Numerology,
    pub carrier_hz: f64,
    pub rx_gain_db: f64,
    pub n_symbols: usize,
    pub burst_set: Option<&'a SsbBurstSet>,
}

/// Expected jamming power per RE at a UE.
#[derive(Debug, Clone, PartialEq)]
pub struct JamFootprint {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    /// Symbol-major, watts.
    pub per_re_power_w: Vec<f64>,
    pub total_rx_power_dbm: f64,
}

impl JamFootprint {
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.per_re_power_w[l * self.n_subcarriers + k]
    }

    /// Mean per-RE power over the REs selected by `mask`.
    pub fn mean_over(&self, mask: &[bool]) -> f64 {
        let (sum, n) = self
            .per_re_power_w
            .iter()
            .zip(mask)
            .filter(|(_, m)| **m)
            .fold((0.0, 0usize), |(s, n), (p, _)| (s + p, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Net gain (dB) from a jammer's output to the UE antenna.
pub fn jammer_link_gain_db(spec: &JammerSpec, ue_position: [f64; 2], carrier_hz: f64, rx_gain_db: f64) -> Result<f64> {
    let d = spec.distance_to(ue_position);
    if d <= 0.0 {
        return Err(Error::CoincidentJammer(ue_position[0], ue_position[1]));
    }
    LinkBudget {
        tx_power_dbm: spec.tx_power_dbm,
        tx_gain_db: spec.gain_db,
        rx_gain_db,
        carrier_hz,
        distance_m: d,
    }
    .net_gain_db()
}

/// Sums the FSPL-attenuated per-RE powers of every jammer at `ue_position`.
pub fn aggregate_jammers(specs: &[JammerSpec], ue_position: [f64; 2], ctx: &JamContext<'_>) -> Result<JamFootprint> {
    let n_sc = ctx.numerology.n_subcarriers();
    let mut per_re = vec![0.0; n_sc * ctx.n_symbols];
    let mut total_w = 0.0;
    for spec in specs {
        let gain_db = jammer_link_gain_db(spec, ue_position, ctx.carrier_hz, ctx.rx_gain_db)?;
        let g = 10f64.powf(gain_db / 10.0);
        let (p_re, mask) = per_re_tx_power(spec, ctx.numerology, ctx.n_symbols, ctx.burst_set)?;
        for (acc, m) in per_re.iter_mut().zip(&mask) {
            if *m {
                *acc += p_re * g;
            }
        }
        total_w += dbm_to_watts(spec.tx_power_dbm) * g;
    }
    Ok(JamFootprint {
        n_subcarriers: n_sc,
        n_symbols: ctx.n_symbols,
        per_re_power_w: per_re,
        total_rx_power_dbm: watts_to_dbm(total_w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssb::{schedule_burst_set, CellIdentity};
    use crate::units::linear_to_db;
    use crate::waveform::{build_numerology, ofdm_demodulate};
    use proptest::prelude::*;

    const FC: f64 = 2.635e9;

    fn num() -> Numerology {
        build_numerology(30_000, 51).unwrap()
    }

    fn bursts() -> SsbBurstSet {
        schedule_burst_set(CellIdentity::from_pci(350).unwrap(), 8, 0, 0.0, 0).unwrap()
    }

    fn spec(kind: JammerKind, p: f64) -> JammerSpec {
        JammerSpec {
            kind,
            tx_power_dbm: p,
            gain_db: 0.0,
            position: [224.0, 0.0],
        }
    }

    #[test]
    fn sjnr_examples() {
        assert!((sjnr(1e-9, 0.0, 1e-12).unwrap() - 1000.0).abs() < 1e-9);
        assert!((sjnr(1e-9, 1e-9, 1e-30).unwrap() - 1.0).abs() < 1e-12);
        assert!((sjnr(1e-10, 9e-11, 1e-11).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(sjnr(1.0, 0.0, 0.0), Err(Error::NonPositiveNoise)));
    }

    #[test]
    fn min_jam_examples() {
        assert!((min_jam_re_power(1e-10, 1.0, 1e-13).unwrap() - 9.99e-11).abs() < 1e-24);
        assert_eq!(min_jam_re_power(1e-13, 10.0, 1e-13).unwrap(), 0.0);
        assert!(matches!(min_jam_re_power(1.0, 0.0, 1.0), Err(Error::NonPositiveThreshold)));
        let p = min_jam_re_power(1e-10, 2.0, 1e-12).unwrap();
        assert!((sjnr(1e-10, p, 1e-12).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn total_power_examples() {
        let b = total_jam_power(JammerKind::Barrage, 51, 20, 1e-3);
        let s = total_jam_power(JammerKind::SmartSsb, 51, 20, 1e-3);
        assert!((linear_to_db(s / b) + 4.07).abs() < 0.01);
        assert_eq!(total_jam_power(JammerKind::Barrage, 51, 20, 0.0), 0.0);
        assert_eq!(
            total_jam_power(JammerKind::Barrage, 20, 20, 1.0),
            total_jam_power(JammerKind::SmartPbch, 20, 20, 1.0)
        );
    }

    proptest! {
        #[test]
        fn sjnr_inverts_min_jam(p in 1e-14f64..1e-6, gamma_db in -10.0f64..30.0, n_frac in 1e-6f64..0.99) {
            let gamma = 10f64.powf(gamma_db / 10.0);
            let n = n_frac * p / gamma;
            let j = min_jam_re_power(p, gamma, n).unwrap();
            let back = sjnr(p, j, n).unwrap();
            prop_assert!(((back - gamma) / gamma).abs() < 1e-12);
        }
    }

    #[test]
    fn smart_kinds_need_schedule() {
        let n = num();
        assert!(matches!(
            synthesize_jam_waveform(&spec(JammerKind::SmartSsb, 20.0), &n, None, 1, 0),
            Err(Error::MissingBurstSchedule)
        ));
        assert!(synthesize_jam_waveform(&spec(JammerKind::Barrage, 20.0), &n, None, 1, 0).is_ok());
    }

    fn measured_power(grid: &ResourceGrid) -> f64 {
        let (sum, active) = (0..grid.n_symbols()).fold((0.0, 0usize), |(s, a), l| {
            let e: f64 = grid.symbol(l).iter().map(|z| z.norm_sqr()).sum();
            if e > 0.0 {
                (s + e, a + 1)
            } else {
                (s, a)
            }
        });
        sum / active as f64
    }

    #[test]
    fn barrage_is_flat_and_power_normalized() {
        let n = num();
        let s = spec(JammerKind::Barrage, 30.0);
        // 72 slots = 1008 symbols
        let x = synthesize_jam_waveform(&s, &n, None, 72, 7).unwrap();
        let g = ofdm_demodulate(&x, &n, 0).unwrap();
        let per_sc: Vec<f64> = (0..g.n_subcarriers())
            .map(|k| (0..g.n_symbols()).map(|l| g.get(k, l).norm_sqr()).sum::<f64>() / g.n_symbols() as f64)
            .collect();
        let mean = per_sc.iter().sum::<f64>() / per_sc.len() as f64;
        for p in &per_sc {
            assert!(linear_to_db(p / mean).abs() < 1.0);
        }
        assert!((watts_to_dbm(measured_power(&g)) - 30.0).abs() < 0.1);
    }

    #[test]
    fn smart_ssb_is_confined_and_power_normalized() {
        let n = num();
        let bs = bursts();
        let s = spec(JammerKind::SmartSsb, 25.0);
        // two 20 ms periods
        let x = synthesize_jam_waveform(&s, &n, Some(&bs), 80, 3).unwrap();
        let g = ofdm_demodulate(&x, &n, 0).unwrap();
        let mask = target_mask(JammerKind::SmartSsb, &n, g.n_symbols(), Some(&bs)).unwrap();
        let inside: f64 = g.data().iter().zip(&mask).filter(|(_, m)| **m).map(|(z, _)| z.norm_sqr()).sum();
        let outside: f64 = g.data().iter().zip(&mask).filter(|(_, m)| !**m).map(|(z, _)| z.norm_sqr()).sum();
        assert!(outside / inside < 1e-10);
        assert!((watts_to_dbm(measured_power(&g)) - 25.0).abs() < 0.1);
    }

    #[test]
    fn smart_pbch_targets_only_pbch_res() {
        let n = num();
        let bs = bursts();
        let mask = target_mask(JammerKind::SmartPbch, &n, 56, Some(&bs)).unwrap();
        assert_eq!(mask.iter().filter(|m| **m).count(), 8 * 576);
        let off = ssb_subcarrier_offset(&n);
        let nsc = n.n_subcarriers();
        // PSS symbol of burst 0 untouched
        assert!((0..nsc).all(|k| !mask[2 * nsc + k]));
        // SSS REs untouched
        assert!(!mask[4 * nsc + off + 100]);
        let (p_re, _) = per_re_tx_power(&spec(JammerKind::SmartPbch, 30.0), &n, 56, Some(&bs)).unwrap();
        assert!((p_re - 1.0 / 192.0).abs() < 1e-12);
    }

    #[test]
    fn footprint_examples() {
        let n = num();
        let ctx = JamContext {
            numerology: &n,
            carrier_hz: FC,
            rx_gain_db: 0.0,
            n_symbols: 14,
            burst_set: None,
        };
        let ue = [0.0, 0.0];
        let empty = aggregate_jammers(&[], ue, &ctx).unwrap();
        assert!(empty.per_re_power_w.iter().all(|&p| p == 0.0));

        let one = aggregate_jammers(&[spec(JammerKind::Barrage, 20.0)], ue, &ctx).unwrap();
        let expected = 20.0 - 87.87 - 10.0 * 612f64.log10();
        assert!((watts_to_dbm(one.get(10, 3)) - expected).abs() < 0.1);

        let two = aggregate_jammers(&[spec(JammerKind::Barrage, 20.0); 2], ue, &ctx).unwrap();
        assert!((linear_to_db(two.get(0, 0) / one.get(0, 0)) - linear_to_db(2.0)).abs() < 1e-9);
        assert!((two.total_rx_power_dbm - one.total_rx_power_dbm - 3.0103).abs() < 1e-4);

        let at_jammer = aggregate_jammers(&[spec(JammerKind::Barrage, 20.0)], [224.0, 0.0], &ctx);
        assert!(matches!(at_jammer, Err(Error::CoincidentJammer(..))));
    }

    #[test]
    fn aggregation_is_permutation_invariant() {
        let n = num();
        let bs = bursts();
        let ctx = JamContext {
            numerology: &n,
            carrier_hz: FC,
            rx_gain_db: 0.0,
            n_symbols: 56,
            burst_set: Some(&bs),
        };
        let a = JammerSpec {
            position: [100.0, 100.0],
            ..spec(JammerKind::SmartSsb, 25.0)
        };
        let b = JammerSpec {
            position: [-50.0, 30.0],
            ..spec(JammerKind::Barrage, 10.0)
        };
        let c = spec(JammerKind::SmartPbch, 17.0);
        let ue = [60.0, 60.0];
        let f1 = aggregate_jammers(&[a, b, c], ue, &ctx).unwrap();
        let f2 = aggregate_jammers(&[c, a, b], ue, &ctx).unwrap();
        let fa = aggregate_jammers(&[a], ue, &ctx).unwrap();
        let fb = aggregate_jammers(&[b], ue, &ctx).unwrap();
        let fc = aggregate_jammers(&[c], ue, &ctx).unwrap();
        for i in 0..f1.per_re_power_w.len() {
            let sum = fa.per_re_power_w[i] + fb.per_re_power_w[i] + fc.per_re_power_w[i];
            assert!((f1.per_re_power_w[i] - f2.per_re_power_w[i]).abs() <= 1e-12 * sum.max(1e-300));
            assert!((f1.per_re_power_w[i] - sum).abs() <= 1e-12 * sum.max(1e-300));
        }
    }
}
