//! Synchronization signal block generation and burst-set scheduling.
//!
//! Sequence construction and resource-element mapping follow the public NR
//! physical-layer definitions. The PBCH payload is not polar coded: the
//! 24-bit MIB stand-in is repeated over all PBCH data REs, scrambled with a
//! PCI-seeded Gold sequence and QPSK mapped.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::db_to_amplitude;
use crate::waveform::{modulate, ModScheme, Numerology, ResourceGrid};

pub const SSB_SUBCARRIERS: usize = 240;
pub const SSB_SYMBOLS: usize = 4;
pub const SEQ_LEN: usize = 127;
/// First subcarrier of PSS/SSS inside the SSB.
pub const SYNC_FIRST_SUBCARRIER: usize = 56;
pub const DMRS_PER_SSB: usize = 144;
pub const PBCH_DATA_PER_SSB: usize = 432;
pub const MIB_BITS: usize = 24;
pub const SSB_PERIOD_MS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellIdentity {
    n_id_1: u16,
    n_id_2: u8,
}

impl CellIdentity {
    pub fn new(n_id_1: u16, n_id_2: u8) -> Result<Self> {
        if n_id_1 > 335 {
            return Err(Error::OutOfRange {
                what: "N_ID_1",
                value: n_id_1.to_string(),
            });
        }
        if n_id_2 > 2 {
            return Err(Error::OutOfRange {
                what: "N_ID_2",
                value: n_id_2.to_string(),
            });
        }
        Ok(Self { n_id_1, n_id_2 })
    }

    pub fn from_pci(pci: u16) -> Result<Self> {
        if pci > 1007 {
            return Err(Error::OutOfRange {
                what: "PCI",
                value: pci.to_string(),
            });
        }
        Ok(Self {
            n_id_1: pci / 3,
            n_id_2: (pci % 3) as u8,
        })
    }

    pub fn n_id_1(self) -> u16 {
        self.n_id_1
    }

    pub fn n_id_2(self) -> u8 {
        self.n_id_2
    }

    pub fn pci(self) -> u16 {
        3 * self.n_id_1 + self.n_id_2 as u16
    }
}

/// Length-127 m-sequence generated by `x(i+7) = x(i+taps..) ^ x(i)`.
fn m_sequence(init: [u8; 7], feedback: impl Fn(&[u8], usize) -> u8) -> [u8; SEQ_LEN] {
    let mut x = [0u8; SEQ_LEN + 7];
    x[..7].copy_from_slice(&init);
    for i in 0..SEQ_LEN {
        x[i + 7] = feedback(&x, i);
    }
    let mut out = [0u8; SEQ_LEN];
    out.copy_from_slice(&x[..SEQ_LEN]);
    out
}

/// PSS BPSK sequence for `n_id_2`.
pub fn pss_sequence(n_id_2: u8) -> Result<Vec<f64>> {
    if n_id_2 > 2 {
        return Err(Error::OutOfRange {
            what: "N_ID_2",
            value: n_id_2.to_string(),
        });
    }
    let x = m_sequence([0, 1, 1, 0, 1, 1, 1], |x, i| (x[i + 4] + x[i]) % 2);
    Ok((0..SEQ_LEN)
        .map(|n| 1.0 - 2.0 * x[(n + 43 * n_id_2 as usize) % SEQ_LEN] as f64)
        .collect())
}

/// SSS BPSK sequence for `(n_id_1, n_id_2)`.
pub fn sss_sequence(n_id_1: u16, n_id_2: u8) -> Result<Vec<f64>> {
    let id = CellIdentity::new(n_id_1, n_id_2)?;
    let x0 = m_sequence([1, 0, 0, 0, 0, 0, 0], |x, i| (x[i + 4] + x[i]) % 2);
    let x1 = m_sequence([1, 0, 0, 0, 0, 0, 0], |x, i| (x[i + 1] + x[i]) % 2);
    let n1 = id.n_id_1 as usize;
    let m0 = 15 * (n1 / 112) + 5 * id.n_id_2 as usize;
    let m1 = n1 % 112;
    Ok((0..SEQ_LEN)
        .map(|n| {
            (1.0 - 2.0 * x0[(n + m0) % SEQ_LEN] as f64) * (1.0 - 2.0 * x1[(n + m1) % SEQ_LEN] as f64)
        })
        .collect())
}

/// Length-31 Gold sequence with the NR `Nc = 1600` offset.
pub fn gold_sequence(c_init: u32, len: usize) -> Vec<u8> {
    const NC: usize = 1600;
    let total = NC + len;
    let mut x1 = vec![0u8; total + 31];
    let mut x2 = vec![0u8; total + 31];
    x1[0] = 1;
    for (i, b) in x2.iter_mut().take(31).enumerate() {
        *b = ((c_init >> i) & 1) as u8;
    }
    for n in 0..total {
        x1[n + 31] = (x1[n + 3] + x1[n]) % 2;
        x2[n + 31] = (x2[n + 3] + x2[n + 2] + x2[n + 1] + x2[n]) % 2;
    }
    (0..len).map(|n| (x1[n + NC] + x2[n + NC]) % 2).collect()
}

fn qpsk_from_bits(bits: &[u8]) -> Vec<Complex64> {
    modulate(bits, ModScheme::Qpsk).expect("even bit count")
}

/// PBCH DM-RS QPSK symbols for `pci` and SSB index.
pub fn pbch_dmrs(pci: CellIdentity, ssb_index: u8) -> Result<Vec<Complex64>> {
    if ssb_index > 7 {
        return Err(Error::OutOfRange {
            what: "SSB index",
            value: ssb_index.to_string(),
        });
    }
    let n_id = pci.pci() as u32;
    let i_ssb = ssb_index as u32;
    let c_init = (1 << 11) * (i_ssb + 1) * (n_id / 4 + 1) + (1 << 6) * (i_ssb + 1) + (n_id % 4);
    Ok(qpsk_from_bits(&gold_sequence(c_init, 2 * DMRS_PER_SSB)))
}

/// PBCH data symbols carrying the repeated, scrambled MIB stand-in.
pub fn pbch_payload(pci: CellIdentity, mib_bits: u32) -> Vec<Complex64> {
    let n_bits = 2 * PBCH_DATA_PER_SSB;
    let scramble = gold_sequence(pci.pci() as u32, n_bits);
    let bits: Vec<u8> = (0..n_bits)
        .map(|i| ((mib_bits >> (MIB_BITS - 1 - i % MIB_BITS)) & 1) as u8 ^ scramble[i])
        .collect();
    qpsk_from_bits(&bits)
}

/// DM-RS `(subcarrier, symbol)` positions in sequence-mapping order.
pub fn dmrs_positions(pci: CellIdentity) -> Vec<(usize, usize)> {
    let nu = (pci.pci() % 4) as usize;
    let mut out = Vec::with_capacity(DMRS_PER_SSB);
    out.extend((0..60).map(|m| (4 * m + nu, 1)));
    out.extend((0..12).map(|m| (4 * m + nu, 2)));
    out.extend((0..12).map(|m| (192 + 4 * m + nu, 2)));
    out.extend((0..60).map(|m| (4 * m + nu, 3)));
    out
}

/// PBCH data `(subcarrier, symbol)` positions in mapping order.
pub fn pbch_data_positions(pci: CellIdentity) -> Vec<(usize, usize)> {
    let nu = (pci.pci() % 4) as usize;
    let mut out = Vec::with_capacity(PBCH_DATA_PER_SSB);
    for l in 1..=3 {
        for k in 0..SSB_SUBCARRIERS {
            let is_pbch = l != 2 || !(48..192).contains(&k);
            if is_pbch && k % 4 != nu {
                out.push((k, l));
            }
        }
    }
    out
}

pub fn pss_positions() -> impl Iterator<Item = (usize, usize)> {
    (0..SEQ_LEN).map(|n| (SYNC_FIRST_SUBCARRIER + n, 0))
}

pub fn sss_positions() -> impl Iterator<Item = (usize, usize)> {
    (0..SEQ_LEN).map(|n| (SYNC_FIRST_SUBCARRIER + n, 2))
}

/// One 240 x 4 SSB, symbol-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SsbBlock {
    symbols: Vec<Complex64>,
    pub pci: CellIdentity,
    pub ssb_index: u8,
    pub mib_bits: u32,
}

impl SsbBlock {
    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.symbols[l * SSB_SUBCARRIERS + k]
    }

    fn set(&mut self, k: usize, l: usize, v: Complex64) {
        self.symbols[l * SSB_SUBCARRIERS + k] = v;
    }

    pub fn energy(&self) -> f64 {
        self.symbols.iter().map(|z| z.norm_sqr()).sum()
    }
}

pub fn assemble_ssb(pci: CellIdentity, ssb_index: u8, mib_bits: u32) -> Result<SsbBlock> {
    let mut block = SsbBlock {
        symbols: vec![Complex64::new(0.0, 0.0); SSB_SUBCARRIERS * SSB_SYMBOLS],
        pci,
        ssb_index,
        mib_bits: mib_bits & ((1 << MIB_BITS) - 1),
    };
    let pss = pss_sequence(pci.n_id_2)?;
    let sss = sss_sequence(pci.n_id_1, pci.n_id_2)?;
    for ((k, l), v) in pss_positions().zip(&pss) {
        block.set(k, l, Complex64::new(*v, 0.0));
    }
    for ((k, l), v) in sss_positions().zip(&sss) {
        block.set(k, l, Complex64::new(*v, 0.0));
    }
    for ((k, l), v) in dmrs_positions(pci).into_iter().zip(pbch_dmrs(pci, ssb_index)?) {
        block.set(k, l, v);
    }
    for ((k, l), v) in pbch_data_positions(pci).into_iter().zip(pbch_payload(pci, block.mib_bits)) {
        block.set(k, l, v);
    }
    Ok(block)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledSsb {
    pub block: SsbBlock,
    /// Grid symbol index (from the start of the 20 ms period) of SSB symbol 0.
    pub start_symbol: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsbBurstSet {
    pub blocks: Vec<ScheduledSsb>,
    pub periodicity_ms: f64,
    pub beam_gains_db: Vec<f64>,
}

impl SsbBurstSet {
    pub fn pci(&self) -> CellIdentity {
        self.blocks[0].block.pci
    }

    /// Symbols in one burst-set period for this numerology.
    pub fn period_symbols(&self, numerology: &Numerology) -> usize {
        let slots = (self.periodicity_ms * numerology.slots_per_frame as f64 / 10.0).round() as usize;
        slots * numerology.symbols_per_slot
    }

    /// Slot count that covers every burst of one period.
    pub fn slots_spanned(&self, numerology: &Numerology) -> usize {
        let last = self.blocks.iter().map(|b| b.start_symbol + SSB_SYMBOLS).max().unwrap_or(0);
        last.div_ceil(numerology.symbols_per_slot)
    }

    /// `(burst index, start symbol)` of every burst that starts inside the
    /// first `n_symbols` symbols, repeating with the burst-set period.
    pub fn occurrences(&self, numerology: &Numerology, n_symbols: usize) -> Vec<(usize, usize)> {
        let period = self.period_symbols(numerology);
        let mut out = Vec::new();
        let mut base = 0;
        while base < n_symbols {
            for (i, b) in self.blocks.iter().enumerate() {
                let s = base + b.start_symbol;
                if s + SSB_SYMBOLS <= n_symbols {
                    out.push((i, s));
                }
            }
            base += period;
        }
        out
    }
}

/// First symbols of the 8-candidate SSB pattern for 15 kHz (case A) and
/// 30 kHz (case C): `{2, 8} + 14 n`.
pub fn burst_start_symbols(n_bursts: usize) -> Vec<usize> {
    (0..n_bursts).map(|i| [2, 8][i % 2] + 14 * (i / 2)).collect()
}

/// Schedules `n_bursts` SSBs of one cell with burst `boost_index` carrying
/// an extra `boost_db` beam gain.
pub fn schedule_burst_set(
    pci: CellIdentity,
    n_bursts: usize,
    boost_index: usize,
    boost_db: f64,
    mib_bits: u32,
) -> Result<SsbBurstSet> {
    if n_bursts == 0 || n_bursts > 8 {
        return Err(Error::OutOfRange {
            what: "burst count",
            value: n_bursts.to_string(),
        });
    }
    if boost_index >= n_bursts {
        return Err(Error::OutOfRange {
            what: "boost index",
            value: boost_index.to_string(),
        });
    }
    let blocks = burst_start_symbols(n_bursts)
        .into_iter()
        .enumerate()
        .map(|(i, start_symbol)| {
            Ok(ScheduledSsb {
                block: assemble_ssb(pci, i as u8, mib_bits)?,
                start_symbol,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut beam_gains_db = vec![0.0; n_bursts];
    beam_gains_db[boost_index] = boost_db;
    Ok(SsbBurstSet {
        blocks,
        periodicity_ms: SSB_PERIOD_MS,
        beam_gains_db,
    })
}

/// First grid subcarrier of an SSB centered in the carrier.
pub fn ssb_subcarrier_offset(numerology: &Numerology) -> usize {
    (numerology.n_subcarriers() - SSB_SUBCARRIERS) / 2
}

/// Writes every burst that fits in `grid` with amplitude
/// `amplitude * 10^(beam_gain/20)`, overwriting what was there.
pub fn map_burst_set(grid: &mut ResourceGrid, burst_set: &SsbBurstSet, amplitude: f64) {
    let offset = ssb_subcarrier_offset(grid.numerology());
    let occ = burst_set.occurrences(grid.numerology(), grid.n_symbols());
    for (i, start) in occ {
        let gain = amplitude * db_to_amplitude(burst_set.beam_gains_db[i]);
        let block = &burst_set.blocks[i].block;
        for l in 0..SSB_SYMBOLS {
            for k in 0..SSB_SUBCARRIERS {
                grid.set(offset + k, start + l, block.get(k, l) * gain);
            }
        }
    }
}

/// Grid mask of REs occupied by a burst (the full 240 x 4 block).
pub fn ssb_block_mask(grid_sc: usize, n_symbols: usize, numerology: &Numerology, burst_set: &SsbBurstSet) -> Vec<bool> {
    let offset = ssb_subcarrier_offset(numerology);
    let mut mask = vec![false; grid_sc * n_symbols];
    for (_, start) in burst_set.occurrences(numerology, n_symbols) {
        for l in start..start + SSB_SYMBOLS {
            for k in offset..offset + SSB_SUBCARRIERS {
                mask[l * grid_sc + k] = true;
            }
        }
    }
    mask
}
