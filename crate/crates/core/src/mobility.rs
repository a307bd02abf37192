//! STEPS mobility: power-law zone attraction and staying time on a square
//! grid of zones, with random-waypoint motion inside the current zone.
//!
//! The grid covers the square `[-L/2, L/2]²` with `L = grid_size * zone_side_m`
//! and is clipped at its border, so nodes never leave the cell area.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepsConfig {
    /// Zones per side.
    pub grid_size: usize,
    pub zone_side_m: f64,
    /// Spatial attraction exponent.
    pub alpha: f64,
    /// Temporal preference exponent.
    pub tau: f64,
    /// Longest stay, in epochs.
    pub t_max: usize,
    pub epoch_duration_s: f64,
    pub speed_mps: f64,
}

impl Default for StepsConfig {
    fn default() -> Self {
        Self {
            grid_size: 5,
            zone_side_m: 200.0,
            alpha: 2.0,
            tau: 1.5,
            t_max: 500,
            epoch_duration_s: 0.01,
            speed_mps: 10.0,
        }
    }
}

impl StepsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &'static str, v: String| Err(Error::OutOfRange { what, value: v });
        if self.grid_size < 1 {
            return bad("grid_size", self.grid_size.to_string());
        }
        if !(self.zone_side_m > 0.0 && self.zone_side_m.is_finite()) {
            return bad("zone_side_m", self.zone_side_m.to_string());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha", self.alpha.to_string());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau", self.tau.to_string());
        }
        if self.t_max < 1 {
            return bad("t_max", self.t_max.to_string());
        }
        if !(self.epoch_duration_s > 0.0 && self.epoch_duration_s.is_finite()) {
            return bad("epoch_duration_s", self.epoch_duration_s.to_string());
        }
        if !(self.speed_mps >= 0.0 && self.speed_mps.is_finite()) {
            return bad("speed_mps", self.speed_mps.to_string());
        }
        Ok(())
    }

    pub fn side_m(&self) -> f64 {
        self.grid_size as f64 * self.zone_side_m
    }

    /// Lower-left corner of `zone`.
    pub fn zone_origin(&self, zone: [usize; 2]) -> [f64; 2] {
        let half = self.side_m() / 2.0;
        [
            zone[0] as f64 * self.zone_side_m - half,
            zone[1] as f64 * self.zone_side_m - half,
        ]
    }

    pub fn zone_of(&self, p: [f64; 2]) -> [usize; 2] {
        let half = self.side_m() / 2.0;
        let idx = |v: f64| (((v + half) / self.zone_side_m).floor().max(0.0) as usize).min(self.grid_size - 1);
        [idx(p[0]), idx(p[1])]
    }

    pub fn contains(&self, zone: [usize; 2], p: [f64; 2]) -> bool {
        let o = self.zone_origin(zone);
        (0..2).all(|i| p[i] >= o[i] && p[i] <= o[i] + self.zone_side_m)
    }

    fn random_point<R: Rng + ?Sized>(&self, zone: [usize; 2], rng: &mut R) -> [f64; 2] {
        let o = self.zone_origin(zone);
        [
            o[0] + rng.random::<f64>() * self.zone_side_m,
            o[1] + rng.random::<f64>() * self.zone_side_m,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepsState {
    pub preferred_zone: [usize; 2],
    pub current_zone: [usize; 2],
    pub position_m: [f64; 2],
    /// Epochs left before the next zone transition.
    pub stay_remaining: usize,
    /// Current random-waypoint target inside the current zone.
    pub waypoint_m: [f64; 2],
}

impl StepsState {
    /// Node starting in its preferred zone at a uniform position.
    pub fn initial<R: Rng + ?Sized>(cfg: &StepsConfig, preferred_zone: [usize; 2], rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if preferred_zone.iter().any(|&z| z >= cfg.grid_size) {
            return Err(Error::OutOfRange {
                what: "preferred zone",
                value: format!("{preferred_zone:?}"),
            });
        }
        let stay = sample_pmf(&stay_time_pmf(cfg.tau, cfg.t_max), rng) + 1;
        Ok(Self {
            preferred_zone,
            current_zone: preferred_zone,
            position_m: cfg.random_point(preferred_zone, rng),
            stay_remaining: stay - 1,
            waypoint_m: cfg.random_point(preferred_zone, rng),
        })
    }
}

/// `P[D = d] ∝ 1/(1+d)^alpha` over `d = 0..=d_max`.
pub fn zone_distance_pmf(alpha: f64, d_max: usize) -> Vec<f64> {
    normalize((0..=d_max).map(|d| (1.0 + d as f64).powf(-alpha)).collect())
}

/// `P[T = t] ∝ 1/t^tau` over `t = 1..=t_max`.
pub fn stay_time_pmf(tau: f64, t_max: usize) -> Vec<f64> {
    normalize((1..=t_max.max(1)).map(|t| (t as f64).powf(-tau)).collect())
}

fn normalize(w: Vec<f64>) -> Vec<f64> {
    // Weights underflow for huge exponents; the leading term is always 1.
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn sample_pmf<R: Rng + ?Sized>(pmf: &[f64], rng: &mut R) -> usize {
    match WeightedIndex::new(pmf) {
        Ok(dist) => dist.sample(rng),
        Err(_) => 0,
    }
}

pub fn chebyshev(a: [usize; 2], b: [usize; 2]) -> usize {
    a[0].abs_diff(b[0]).max(a[1].abs_diff(b[1]))
}

/// Largest Chebyshev distance from `zone` to any zone of the grid.
pub fn max_zone_distance(zone: [usize; 2], grid_size: usize) -> usize {
    let far = |z: usize| z.max(grid_size - 1 - z);
    far(zone[0]).max(far(zone[1]))
}

/// Zones of the grid at Chebyshev distance exactly `d` from `center`.
pub fn zones_at_distance(center: [usize; 2], d: usize, grid_size: usize) -> Vec<[usize; 2]> {
    let lo = |c: usize| c.saturating_sub(d);
    let hi = |c: usize| (c + d).min(grid_size - 1);
    let mut out = Vec::new();
    for x in lo(center[0])..=hi(center[0]) {
        for y in lo(center[1])..=hi(center[1]) {
            if chebyshev(center, [x, y]) == d {
                out.push([x, y]);
            }
        }
    }
    out
}

/// Advances one node by one epoch.
pub fn steps_step<R: Rng + ?Sized>(state: &StepsState, cfg: &StepsConfig, rng: &mut R) -> StepsState {
    let mut next = state.clone();
    if state.stay_remaining > 0 {
        next.stay_remaining -= 1;
        let mut budget = cfg.speed_mps * cfg.epoch_duration_s;
        // Walk through as many waypoints as the epoch's travel distance covers.
        for _ in 0..64 {
            let dx = next.waypoint_m[0] - next.position_m[0];
            let dy = next.waypoint_m[1] - next.position_m[1];
            let dist = dx.hypot(dy);
            if dist > budget {
                next.position_m[0] += dx / dist * budget;
                next.position_m[1] += dy / dist * budget;
                break;
            }
            next.position_m = next.waypoint_m;
            budget -= dist;
            next.waypoint_m = cfg.random_point(next.current_zone, rng);
            if budget <= 0.0 {
                break;
            }
        }
        return next;
    }
    let d_max = max_zone_distance(state.preferred_zone, cfg.grid_size);
    let d = sample_pmf(&zone_distance_pmf(cfg.alpha, d_max), rng);
    let candidates = zones_at_distance(state.preferred_zone, d, cfg.grid_size);
    let zone = candidates[rng.random_range(0..candidates.len())];
    next.current_zone = zone;
    next.position_m = cfg.random_point(zone, rng);
    next.waypoint_m = cfg.random_point(zone, rng);
    next.stay_remaining = sample_pmf(&stay_time_pmf(cfg.tau, cfg.t_max), rng);
    next
}

/// Random stream for `node`: independent of every other node.
pub fn node_rng(seed: u64, node: usize) -> ChaCha8Rng {
    stream_rng(seed, node as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub node_id: usize,
    pub x_m: f64,
    pub y_m: f64,
}

/// Number of epochs in `duration_s`; errors unless it is a whole number.
pub fn epochs_in(cfg: &StepsConfig, duration_s: f64) -> Result<usize> {
    let n = duration_s / cfg.epoch_duration_s;
    let r = n.round();
    if !(duration_s > 0.0) || (n - r).abs() > 1e-6 * r.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "duration {duration_s} s is not a multiple of the {} s epoch",
            cfg.epoch_duration_s
        )));
    }
    Ok(r as usize)
}

/// Mobility of `n_nodes` nodes; rows are epoch-major, node-minor.
///
/// Epoch 0 is the initial position. Preferred zones are uniform over the
/// grid.
pub fn generate_trace(cfg: &StepsConfig, n_nodes: usize, duration_s: f64, seed: u64) -> Result<Vec<TraceRow>> {
    cfg.validate()?;
    let n_epochs = epochs_in(cfg, duration_s)?;
    let per_node: Vec<Vec<[f64; 2]>> = (0..n_nodes)
        .map(|node| node_positions(cfg, n_epochs, seed, node))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(n_nodes * n_epochs);
    for epoch in 0..n_epochs {
        for (node_id, p) in per_node.iter().enumerate() {
            rows.push(TraceRow {
                epoch,
                node_id,
                x_m: p[epoch][0],
                y_m: p[epoch][1],
            });
        }
    }
    Ok(rows)
}

/// Positions of one node over `n_epochs`, drawn from its own stream.
pub fn node_positions(cfg: &StepsConfig, n_epochs: usize, seed: u64, node: usize) -> Result<Vec<[f64; 2]>> {
    let mut rng = node_rng(seed, node);
    let pref = [rng.random_range(0..cfg.grid_size), rng.random_range(0..cfg.grid_size)];
    let mut state = StepsState::initial(cfg, pref, &mut rng)?;
    let mut out = Vec::with_capacity(n_epochs);
    for e in 0..n_epochs {
        if e > 0 {
            state = steps_step(&state, cfg, &mut rng);
        }
        out.push(state.position_m);
    }
    Ok(out)
}
