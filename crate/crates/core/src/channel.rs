//! Link budget, thermal noise and a tapped-delay-line fading channel.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{db_to_amplitude, db_to_linear};
use crate::waveform::Numerology;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

/// Free-space path loss `20 log10(4 pi d / lambda)` in dB.
pub fn fspl_db(carrier_hz: f64, distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::NonPositiveDistance(distance_m));
    }
    if !(carrier_hz > 0.0) {
        return Err(Error::NonPositiveCarrier(carrier_hz));
    }
    let lambda = SPEED_OF_LIGHT / carrier_hz;
    Ok(20.0 * (4.0 * std::f64::consts::PI * distance_m / lambda).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub tx_gain_db: f64,
    pub rx_gain_db: f64,
    pub carrier_hz: f64,
    pub distance_m: f64,
}

impl LinkBudget {
    /// Net gain from transmitter output to receiver input.
    pub fn net_gain_db(&self) -> Result<f64> {
        Ok(self.tx_gain_db + self.rx_gain_db - fspl_db(self.carrier_hz, self.distance_m)?)
    }
}

pub fn received_power_dbm(b: &LinkBudget) -> Result<f64> {
    Ok(b.tx_power_dbm + b.net_gain_db()?)
}

/// Thermal noise power in one subcarrier.
pub fn noise_power_re_dbm(scs_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_HZ + 10.0 * scs_hz.log10() + noise_figure_db
}

/// Power-delay profile with delays normalized to the delay spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingProfile {
    pub normalized_delays: Vec<f64>,
    pub tap_powers_db: Vec<f64>,
    pub delay_spread_ns: f64,
}

// CDL-A cluster delays (normalized) and powers (dB).
const CDL_A: [(f64, f64); 23] = [
    (0.0000, -13.4),
    (0.3819, 0.0),
    (0.4025, -2.2),
    (0.5868, -4.0),
    (0.4610, -6.0),
    (0.5375, -8.2),
    (0.6708, -9.9),
    (0.5750, -10.5),
    (0.7618, -7.5),
    (1.5375, -15.9),
    (1.8978, -6.6),
    (2.2242, -16.7),
    (2.1718, -12.4),
    (2.4942, -15.2),
    (2.5119, -10.8),
    (3.0582, -11.3),
    (4.0810, -12.7),
    (4.4579, -16.2),
    (4.5695, -18.3),
    (4.7966, -18.9),
    (5.0066, -16.6),
    (5.3043, -19.9),
    (9.6586, -29.7),
];

impl FadingProfile {
    /// Builds a profile with taps sorted by delay and powers normalized to
    /// unit total.
    pub fn new(normalized_delays: Vec<f64>, tap_powers_db: Vec<f64>, delay_spread_ns: f64) -> Result<Self> {
        if normalized_delays.is_empty() || normalized_delays.len() != tap_powers_db.len() {
            return Err(Error::InvalidProfile(format!(
                "{} delays vs {} powers",
                normalized_delays.len(),
                tap_powers_db.len()
            )));
        }
        if normalized_delays.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidProfile("delays must be finite and non-negative".into()));
        }
        if tap_powers_db.iter().any(|p| !p.is_finite()) || !(delay_spread_ns >= 0.0) {
            return Err(Error::InvalidProfile("powers and delay spread must be finite".into()));
        }
        let mut taps: Vec<(f64, f64)> = normalized_delays.into_iter().zip(tap_powers_db).collect();
        taps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = taps.iter().map(|t| db_to_linear(t.1)).sum();
        let norm = 10.0 * total.log10();
        Ok(Self {
            normalized_delays: taps.iter().map(|t| t.0).collect(),
            tap_powers_db: taps.iter().map(|t| t.1 - norm).collect(),
            delay_spread_ns,
        })
    }

    pub fn cdl_a(delay_spread_ns: f64) -> Self {
        Self::new(
            CDL_A.iter().map(|t| t.0).collect(),
            CDL_A.iter().map(|t| t.1).collect(),
            delay_spread_ns,
        )
        .expect("static profile is valid")
    }

    pub fn single_tap() -> Self {
        Self::new(vec![0.0], vec![0.0], 0.0).expect("static profile is valid")
    }

    /// Re-validates a deserialized profile and renormalizes it.
    pub fn normalized(self) -> Result<Self> {
        Self::new(self.normalized_delays, self.tap_powers_db, self.delay_spread_ns)
    }

    /// Draws one quasi-static realization from `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, numerology: &Numerology, rng: &mut R) -> ChannelRealization {
        let ts_ns = 1e9 / numerology.sample_rate;
        let delays: Vec<usize> = self
            .normalized_delays
            .iter()
            .map(|d| (d * self.delay_spread_ns / ts_ns).round() as usize)
            .collect();
        let len = delays.iter().max().map_or(1, |m| m + 1);
        let mut taps = vec![Complex64::new(0.0, 0.0); len];
        for (d, p_db) in delays.iter().zip(&self.tap_powers_db) {
            let amp = (db_to_linear(*p_db) / 2.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            taps[*d] += Complex64::new(re, im) * amp;
        }
        ChannelRealization { taps, seed: None }
    }
}

/// Sample-spaced channel impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<Complex64>,
    pub seed: Option<u64>,
}

impl ChannelRealization {
    pub fn identity() -> Self {
        Self {
            taps: vec![Complex64::new(1.0, 0.0)],
            seed: None,
        }
    }

    pub fn power(&self) -> f64 {
        self.taps.iter().map(|h| h.norm_sqr()).sum()
    }
}

pub fn realize_fading(profile: &FadingProfile, numerology: &Numerology, seed: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ch = profile.draw(numerology, &mut rng);
    ch.seed = Some(seed);
    ch
}

/// Linear convolution with `ch` (tail truncated) followed by a power gain.
pub fn apply_channel(samples: &[Complex64], ch: &ChannelRealization, net_gain_db: f64) -> Vec<Complex64> {
    let g = db_to_amplitude(net_gain_db);
    let taps: Vec<Complex64> = ch.taps.iter().map(|h| h * g).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); samples.len()];
    convolve_into(samples, &taps, 0, samples.len(), &mut out);
    out
}

/// Applies a different realization to each slot-long segment. Samples of
/// earlier segments feed the delay line of later ones.
pub fn apply_channel_per_slot(
    samples: &[Complex64],
    slot_channels: &[ChannelRealization],
    numerology: &Numerology,
    net_gain_db: f64,
) -> Vec<Complex64> {
    let g = db_to_amplitude(net_gain_db);
    let slot_len = numerology.slot_len();
    let mut out = vec![Complex64::new(0.0, 0.0); samples.len()];
    for (s, ch) in slot_channels.iter().enumerate() {
        let start = s * slot_len;
        if start >= samples.len() {
            break;
        }
        let end = (start + slot_len).min(samples.len());
        let taps: Vec<Complex64> = ch.taps.iter().map(|h| h * g).collect();
        convolve_into(samples, &taps, start, end, &mut out);
    }
    out
}

fn convolve_into(x: &[Complex64], taps: &[Complex64], start: usize, end: usize, out: &mut [Complex64]) {
    for n in start..end {
        let mut acc = Complex64::new(0.0, 0.0);
        for (d, h) in taps.iter().enumerate() {
            if d > n {
                break;
            }
            acc += h * x[n - d];
        }
        out[n] = acc;
    }
}
