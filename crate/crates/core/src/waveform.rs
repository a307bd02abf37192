//! OFDM numerology, resource grid, constellation mapping and EVM.
//!
//! Grid values are complex amplitudes whose squared magnitude is the power
//! carried by that resource element. The OFDM transforms are unitary, so a
//! complex Gaussian time-domain process with per-sample variance `s` lands on
//! every resource element with variance `s` after demodulation.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resource blocks occupied by one SSB.
pub const SSB_RESOURCE_BLOCKS: usize = 20;
pub const SYMBOLS_PER_SLOT: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Numerology {
    pub scs_hz: u32,
    pub n_rb: usize,
    pub fft_size: usize,
    /// Cyclic-prefix length of each symbol position within a slot.
    pub cp_lengths: Vec<usize>,
    pub sample_rate: f64,
    pub symbols_per_slot: usize,
    pub slots_per_frame: usize,
}

/// Builds the normal-CP numerology for `scs_hz` and `n_rb` resource blocks.
///
/// The FFT is the smallest power of two covering the occupied band. CP
/// lengths are 144 samples per 2048 FFT points; the first symbol of every
/// 0.5 ms carries 16 extra samples at 30.72 MHz so that each half-subframe
/// lasts exactly 0.5 ms.
pub fn build_numerology(scs_hz: u32, n_rb: usize) -> Result<Numerology> {
    let mu = match scs_hz {
        15_000 => 0u32,
        30_000 => 1,
        other => return Err(Error::UnsupportedScs(other)),
    };
    if n_rb < SSB_RESOURCE_BLOCKS {
        return Err(Error::TooFewResourceBlocks {
            n_rb,
            min: SSB_RESOURCE_BLOCKS,
        });
    }
    let fft_size = (12 * n_rb).next_power_of_two();
    let normal_cp = 144 * fft_size / 2048;
    // 16 samples at 30.72 MHz, independent of numerology
    let long_extra = 16 * fft_size * scs_hz as usize / 30_720_000;
    let symbols_per_half_subframe = 7 << mu;
    let cp_lengths = (0..SYMBOLS_PER_SLOT)
        .map(|l| {
            if l % symbols_per_half_subframe == 0 {
                normal_cp + long_extra
            } else {
                normal_cp
            }
        })
        .collect();
    Ok(Numerology {
        scs_hz,
        n_rb,
        fft_size,
        cp_lengths,
        sample_rate: scs_hz as f64 * fft_size as f64,
        symbols_per_slot: SYMBOLS_PER_SLOT,
        slots_per_frame: 10 << mu,
    })
}

impl Numerology {
    pub fn n_subcarriers(&self) -> usize {
        12 * self.n_rb
    }

    pub fn cp_len(&self, symbol: usize) -> usize {
        self.cp_lengths[symbol % self.symbols_per_slot]
    }

    pub fn symbol_len(&self, symbol: usize) -> usize {
        self.fft_size + self.cp_len(symbol)
    }

    pub fn slot_len(&self) -> usize {
        (0..self.symbols_per_slot).map(|l| self.symbol_len(l)).sum()
    }

    /// Sample index at which symbol `symbol` (CP included) starts.
    pub fn symbol_start(&self, symbol: usize) -> usize {
        let slot = symbol / self.symbols_per_slot;
        let within = symbol % self.symbols_per_slot;
        slot * self.slot_len() + (0..within).map(|l| self.symbol_len(l)).sum::<usize>()
    }

    /// Sample index of the first post-CP sample of `symbol`.
    pub fn useful_start(&self, symbol: usize) -> usize {
        self.symbol_start(symbol) + self.cp_len(symbol)
    }

    pub fn slot_duration_s(&self) -> f64 {
        self.slot_len() as f64 / self.sample_rate
    }

    pub fn slots_per_second(&self) -> f64 {
        self.slots_per_frame as f64 * 100.0
    }

    /// FFT bin carrying occupied subcarrier `k` (band centered on DC).
    pub fn fft_bin(&self, k: usize) -> usize {
        let offset = k as isize - (self.n_subcarriers() / 2) as isize;
        offset.rem_euclid(self.fft_size as isize) as usize
    }

    fn validate(&self) -> Result<()> {
        if self.fft_size < self.n_subcarriers() || self.cp_lengths.len() != self.symbols_per_slot {
            return Err(Error::InvalidConfig(format!(
                "inconsistent numerology: fft {} for {} subcarriers",
                self.fft_size,
                self.n_subcarriers()
            )));
        }
        Ok(())
    }
}

/// Complex symbol matrix, subcarrier x OFDM symbol. Subcarrier 0 is the
/// lowest frequency of the occupied band. Storage is symbol-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    n_sc: usize,
    n_sym: usize,
    data: Vec<Complex64>,
    numerology: Numerology,
}

impl ResourceGrid {
    pub fn new(numerology: &Numerology, n_symbols: usize) -> Self {
        let n_sc = numerology.n_subcarriers();
        Self {
            n_sc,
            n_sym: n_symbols,
            data: vec![Complex64::new(0.0, 0.0); n_sc * n_symbols],
            numerology: numerology.clone(),
        }
    }

    /// Wraps symbol-major data; rejects wrong sizes and non-finite values.
    pub fn from_data(numerology: &Numerology, n_symbols: usize, data: Vec<Complex64>) -> Result<Self> {
        let n_sc = numerology.n_subcarriers();
        if data.len() != n_sc * n_symbols {
            return Err(Error::LengthMismatch(format!(
                "grid data has {} entries, expected {}",
                data.len(),
                n_sc * n_symbols
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidConfig("grid contains non-finite values".into()));
        }
        Ok(Self {
            n_sc,
            n_sym: n_symbols,
            data,
            numerology: numerology.clone(),
        })
    }

    pub fn numerology(&self) -> &Numerology {
        &self.numerology
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_sc
    }

    pub fn n_symbols(&self) -> usize {
        self.n_sym
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.data[l * self.n_sc + k]
    }

    #[inline]
    pub fn set(&mut self, k: usize, l: usize, v: Complex64) {
        self.data[l * self.n_sc + k] = v;
    }

    pub fn symbol(&self, l: usize) -> &[Complex64] {
        &self.data[l * self.n_sc..(l + 1) * self.n_sc]
    }

    pub fn symbol_mut(&mut self, l: usize) -> &mut [Complex64] {
        &mut self.data[l * self.n_sc..(l + 1) * self.n_sc]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModScheme {
    Qpsk,
    Qam16,
    Qam64,
}

impl ModScheme {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            ModScheme::Qpsk => 2,
            ModScheme::Qam16 => 4,
            ModScheme::Qam64 => 6,
        }
    }

    /// Every constellation point, indexed by the bit pattern (MSB first).
    pub fn constellation(self) -> Vec<Complex64> {
        let m = self.bits_per_symbol();
        (0..1usize << m)
            .map(|word| {
                let bits: Vec<u8> = (0..m).map(|i| ((word >> (m - 1 - i)) & 1) as u8).collect();
                map_symbol(&bits, self)
            })
            .collect()
    }
}

#[inline]
fn pm(b: u8) -> f64 {
    1.0 - 2.0 * b as f64
}

// Gray mappings of the NR modulation mapper.
fn map_symbol(b: &[u8], scheme: ModScheme) -> Complex64 {
    match scheme {
        ModScheme::Qpsk => Complex64::new(pm(b[0]), pm(b[1])) * FRAC_1_SQRT_2,
        ModScheme::Qam16 => {
            let s = 1.0 / 10f64.sqrt();
            Complex64::new(pm(b[0]) * (2.0 - pm(b[2])), pm(b[1]) * (2.0 - pm(b[3]))) * s
        }
        ModScheme::Qam64 => {
            let s = 1.0 / 42f64.sqrt();
            Complex64::new(
                pm(b[0]) * (4.0 - pm(b[2]) * (2.0 - pm(b[4]))),
                pm(b[1]) * (4.0 - pm(b[3]) * (2.0 - pm(b[5]))),
            ) * s
        }
    }
}

/// Gray-maps `bits` (values 0/1) onto unit-average-power constellation points.
pub fn modulate(bits: &[u8], scheme: ModScheme) -> Result<Vec<Complex64>> {
    let m = scheme.bits_per_symbol();
    if !bits.len().is_multiple_of(m) {
        return Err(Error::LengthMismatch(format!(
            "{} bits is not a multiple of {m}",
            bits.len()
        )));
    }
    Ok(bits.chunks_exact(m).map(|c| map_symbol(c, scheme)).collect())
}

/// Reusable FFT plans for one numerology.
#[derive(Clone)]
pub struct OfdmEngine {
    numerology: Numerology,
    ifft: Arc<dyn Fft<f64>>,
    fft: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl OfdmEngine {
    pub fn new(numerology: &Numerology) -> Result<Self> {
        numerology.validate()?;
        let mut planner = FftPlanner::new();
        let n = numerology.fft_size;
        Ok(Self {
            numerology: numerology.clone(),
            ifft: planner.plan_fft_inverse(n),
            fft: planner.plan_fft_forward(n),
            scale: 1.0 / (n as f64).sqrt(),
        })
    }

    pub fn numerology(&self) -> &Numerology {
        &self.numerology
    }

    /// Time-domain useful part (no CP) of one frequency-domain symbol.
    pub fn symbol_to_time(&self, subcarriers: &[Complex64]) -> Vec<Complex64> {
        let num = &self.numerology;
        let mut buf = vec![Complex64::new(0.0, 0.0); num.fft_size];
        for (k, &v) in subcarriers.iter().enumerate() {
            buf[num.fft_bin(k)] = v;
        }
        self.ifft.process(&mut buf);
        buf.iter_mut().for_each(|z| *z *= self.scale);
        buf
    }

    pub fn modulate(&self, grid: &ResourceGrid) -> Vec<Complex64> {
        let num = &self.numerology;
        let mut out = Vec::with_capacity(num.symbol_start(grid.n_symbols()));
        for l in 0..grid.n_symbols() {
            let useful = self.symbol_to_time(grid.symbol(l));
            let cp = num.cp_len(l);
            out.extend_from_slice(&useful[num.fft_size - cp..]);
            out.extend_from_slice(&useful);
        }
        out
    }

    /// Demodulates `n_symbols` symbols, the first of which sits at slot
    /// position `first_symbol` and starts (CP included) at `start_offset`.
    pub fn demodulate_symbols(
        &self,
        samples: &[Complex64],
        start_offset: usize,
        first_symbol: usize,
        n_symbols: usize,
    ) -> Result<ResourceGrid> {
        let num = &self.numerology;
        let span = num.symbol_start(first_symbol + n_symbols) - num.symbol_start(first_symbol);
        let needed = start_offset + span;
        if n_symbols == 0 || samples.len() < needed {
            return Err(Error::InsufficientSamples {
                needed: needed.max(start_offset + num.symbol_len(first_symbol)),
                got: samples.len(),
            });
        }
        let n = num.fft_size;
        let mut grid = ResourceGrid::new(num, n_symbols);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut pos = start_offset;
        for i in 0..n_symbols {
            let l = first_symbol + i;
            pos += num.cp_len(l);
            buf.copy_from_slice(&samples[pos..pos + n]);
            self.fft.process(&mut buf);
            let sym = grid.symbol_mut(i);
            for (k, v) in sym.iter_mut().enumerate() {
                *v = buf[num.fft_bin(k)] * self.scale;
            }
            pos += n;
        }
        Ok(grid)
    }

    pub fn demodulate(&self, samples: &[Complex64], start_offset: usize) -> Result<ResourceGrid> {
        let num = &self.numerology;
        let avail = samples.len().saturating_sub(start_offset);
        let mut n_symbols = 0;
        while num.symbol_start(n_symbols + 1) <= avail {
            n_symbols += 1;
        }
        if n_symbols == 0 {
            return Err(Error::InsufficientSamples {
                needed: start_offset + num.symbol_len(0),
                got: samples.len(),
            });
        }
        self.demodulate_symbols(samples, start_offset, 0, n_symbols)
    }
}

/// OFDM-modulates every symbol of `grid`, CP first.
pub fn ofdm_modulate(grid: &ResourceGrid) -> Result<Vec<Complex64>> {
    Ok(OfdmEngine::new(grid.numerology())?.modulate(grid))
}

/// Demodulates all whole symbols found after `start_offset`, assuming the
/// first one is slot symbol 0.
pub fn ofdm_demodulate(samples: &[Complex64], numerology: &Numerology, start_offset: usize) -> Result<ResourceGrid> {
    OfdmEngine::new(numerology)?.demodulate(samples, start_offset)
}

/// RMS error vector magnitude in percent.
pub fn measure_evm_rms(rx: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    if rx.is_empty() || reference.is_empty() {
        return Err(Error::EmptyInput);
    }
    if rx.len() != reference.len() {
        return Err(Error::LengthMismatch(format!(
            "rx has {} symbols, reference {}",
            rx.len(),
            reference.len()
        )));
    }
    let ref_power: f64 = reference.iter().map(|z| z.norm_sqr()).sum();
    if ref_power == 0.0 {
        return Err(Error::ZeroReferencePower);
    }
    let err_power: f64 = rx.iter().zip(reference).map(|(r, s)| (r - s).norm_sqr()).sum();
    Ok(100.0 * (err_power / ref_power).sqrt())
}
