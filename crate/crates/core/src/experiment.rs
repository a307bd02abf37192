//! Experiment configuration, orchestration and CSV export.
//!
//! A configuration is one JSON document. Every field is optional; an empty
//! file yields the default scenario (20 UEs, 500 m cell, 32 dBm gNB,
//! 51 RBs at 30 kHz, 2.635 GHz, CDL-A with 30 ns delay spread).
//!
//! Every CSV starts with `#` comment lines carrying the schema version, the
//! SHA-256 of the resolved configuration and the seed(s) it was produced
//! with. The resolved configuration is written next to the results.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cellsim::{summarize, sweep, JammerTemplate, Scenario, SweepAxis, SweepRow};
use crate::error::{Error, Result};
use crate::link::{LinkConfig, LinkOutcome, LinkSimulator};
use crate::mobility::generate_trace;

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExperimentKind {
    SsbAttack,
    CellSweep,
    MobilityTrace,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SsbAttack => "ssb-attack",
            ExperimentKind::CellSweep => "cell-sweep",
            ExperimentKind::MobilityTrace => "mobility-trace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Jammers created when the scenario has none or the axis is the
    /// jammer count.
    pub jammer: JammerTemplate,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::JamPower,
            values: (0..=12).map(|i| 5.0 * i as f64).collect(),
            jammer: JammerTemplate::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceConfig {
    pub n_nodes: usize,
    pub duration_s: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            n_nodes: 20,
            duration_s: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsbAttackConfig {
    pub link: LinkConfig,
    /// Write correlation profiles and constellations.
    pub capture: bool,
}

impl Default for SsbAttackConfig {
    fn default() -> Self {
        Self {
            link: LinkConfig::default(),
            capture: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Optional; the command line decides when absent.
    pub kind: Option<ExperimentKind>,
    pub seeds: Vec<u64>,
    pub scenario: Scenario,
    pub sweep: SweepConfig,
    pub trace: TraceConfig,
    pub ssb_attack: SsbAttackConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            seeds: vec![1],
            scenario: Scenario::default(),
            sweep: SweepConfig::default(),
            trace: TraceConfig::default(),
            ssb_attack: SsbAttackConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Errors for invalid settings; warnings for suspicious but usable ones.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seed list is empty".into()));
        }
        self.scenario.validate()?;
        self.ssb_attack.link.validate()?;
        if self.sweep.values.is_empty() {
            return Err(Error::InvalidConfig("sweep has no values".into()));
        }
        if self.trace.n_nodes == 0 {
            return Err(Error::InvalidConfig("trace needs at least one node".into()));
        }
        let mut warnings = Vec::new();
        let half = self.scenario.mobility.side_m() / 2.0;
        for (i, j) in self.scenario.jammers.iter().enumerate() {
            if j.position[0].abs() > half || j.position[1].abs() > half {
                warnings.push(format!(
                    "scenario jammer {i} at ({}, {}) lies outside the simulated area",
                    j.position[0], j.position[1]
                ));
            }
        }
        if 2.0 * self.scenario.cell_radius_m > self.scenario.mobility.side_m() + 1e-9 {
            warnings.push("mobility grid is smaller than the cell; UEs are confined to the grid".into());
        }
        Ok(warnings)
    }

    /// SHA-256 (hex) of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
}

/// Parses a configuration document; blank text gives the defaults.
pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let config: ExperimentConfig = if text.trim().is_empty() {
        ExperimentConfig::default()
    } else {
        serde_json::from_str(text).map_err(|e| Error::ConfigParse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?
    };
    let warnings = config.validate()?;
    Ok(LoadedConfig { config, warnings })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// Files produced by one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub files: Vec<PathBuf>,
}

struct CsvOut<'a> {
    dir: &'a Path,
    hash: String,
    kind: ExperimentKind,
    files: Vec<PathBuf>,
}

impl CsvOut<'_> {
    fn write(&mut self, name: &str, seeds: &str, header: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path)?;
        writeln!(f, "# jamcell {} csv v{}", self.kind.name(), CSV_SCHEMA_VERSION)?;
        writeln!(f, "# config_hash: {}", self.hash)?;
        writeln!(f, "# seed: {seeds}")?;
        writeln!(f, "{header}")?;
        f.write_all(body.as_bytes())?;
        self.files.push(path);
        Ok(())
    }
}

fn seeds_text(seeds: &[u64]) -> String {
    seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

/// Runs `cfg` as `kind`, writing results under `out_dir`. `parallel`
/// bounds the worker threads (0 = one per core).
pub fn run_experiment(cfg: &ExperimentConfig, kind: ExperimentKind, out_dir: &Path, parallel: usize) -> Result<ExperimentReport> {
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(Error::InvalidConfig(format!(
                "config is for {} but {} was requested",
                k.name(),
                kind.name()
            )));
        }
    }
    let mut cfg = cfg.clone();
    cfg.kind = Some(kind);
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let hash = cfg.hash();
    let resolved = serde_json::json!({
        "config_hash": hash,
        "seeds": cfg.seeds,
        "config": cfg,
    });
    let resolved_path = out_dir.join("resolved_config.json");
    fs::write(&resolved_path, serde_json::to_string_pretty(&resolved)? + "\n")?;
    let mut out = CsvOut {
        dir: out_dir,
        hash,
        kind,
        files: vec![resolved_path],
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| match kind {
        ExperimentKind::SsbAttack => run_ssb_attack(&cfg, &mut out),
        ExperimentKind::CellSweep => run_cell_sweep(&cfg, &mut out),
        ExperimentKind::MobilityTrace => run_mobility_trace(&cfg, &mut out),
    })?;
    Ok(ExperimentReport { kind, files: out.files })
}

fn run_cell_sweep(cfg: &ExperimentConfig, out: &mut CsvOut<'_>) -> Result<()> {
    let sw = &cfg.sweep;
    log::info!("cell sweep over {:?}: {} values x {} seeds", sw.axis, sw.values.len(), cfg.seeds.len());
    let rows = sweep(&cfg.scenario, sw.axis, &sw.values, &cfg.seeds, &sw.jammer)?;
    out.write(
        "cell_sweep.csv",
        &seeds_text(&cfg.seeds),
        "axis_value,seed,throughput_bps,goodput_bps,mean_sinr_db,retx_fraction",
        &sweep_rows_csv(&rows),
    )?;
    let mut body = String::new();
    for s in summarize(&rows) {
        let _ = writeln!(
            body,
            "{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.axis_value, s.runs, s.throughput_mean, s.throughput_std, s.goodput_mean, s.goodput_std, s.retx_fraction_mean
        );
    }
    out.write(
        "cell_sweep_summary.csv",
        &seeds_text(&cfg.seeds),
        "axis_value,runs,throughput_mean_bps,throughput_std_bps,goodput_mean_bps,goodput_std_bps,retx_fraction_mean",
        &body,
    )
}

fn sweep_rows_csv(rows: &[SweepRow]) -> String {
    let mut body = String::new();
    for r in rows {
        let _ = writeln!(
            body,
            "{:.6},{},{:.6},{:.6},{:.6},{:.6}",
            r.axis_value, r.seed, r.throughput_bps, r.goodput_bps, r.mean_sinr_db, r.retx_fraction
        );
    }
    body
}

fn run_mobility_trace(cfg: &ExperimentConfig, out: &mut CsvOut<'_>) -> Result<()> {
    for &seed in &cfg.seeds {
        let rows = generate_trace(&cfg.scenario.mobility, cfg.trace.n_nodes, cfg.trace.duration_s, seed)?;
        let mut body = String::new();
        for r in rows {
            let _ = writeln!(body, "{},{},{:.6},{:.6}", r.epoch, r.node_id, r.x_m, r.y_m);
        }
        out.write(&format!("mobility_trace_seed{seed}.csv"), &seed.to_string(), "epoch,node_id,x_m,y_m", &body)?;
    }
    Ok(())
}

fn run_ssb_attack(cfg: &ExperimentConfig, out: &mut CsvOut<'_>) -> Result<()> {
    let sa = &cfg.ssb_attack;
    let sim = LinkSimulator::new(&sa.link)?;
    let outcomes: Vec<(u64, LinkOutcome)> = cfg
        .seeds
        .par_iter()
        .map(|&s| Ok((s, sim.run(s, sa.capture)?)))
        .collect::<Result<_>>()?;
    let num = sim.numerology();
    let id2 = crate::ssb::CellIdentity::from_pci(sa.link.pci)?.n_id_2();
    let all = seeds_text(&cfg.seeds);

    let mut summary = String::new();
    let mut bursts = String::new();
    for (seed, o) in &outcomes {
        let m = &o.measurement;
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{:.6},{},{:.6},{:.6},{:.6},{:.6},{}",
            seed,
            o.pss.detected as u8,
            o.pss.n_id_2,
            o.pss.timing_offset,
            o.pss_ok(num, id2) as u8,
            o.pss.peak_metric,
            m.pci_detected.map_or("".to_string(), |c| c.pci().to_string()),
            o.sss.as_ref().map_or(0.0, |s| s.margin()),
            m.pss_evm_rms,
            m.pbch_evm_rms,
            o.pdsch_evm,
            m.mib_decodable as u8
        );
        for (i, ((sj, pb), ps)) in m.sjnr_db.iter().zip(&m.burst_pbch_evm).zip(&o.burst_pss_evm).enumerate() {
            let _ = writeln!(bursts, "{seed},{i},{sj:.6},{pb:.6},{ps:.6}");
        }
    }
    out.write(
        "ssb_summary.csv",
        &all,
        "seed,pss_detected,n_id_2,timing_offset,pss_ok,peak_metric,pci_detected,sss_margin,pss_evm_pct,pbch_evm_pct,pdsch_evm_pct,mib_decodable",
        &summary,
    )?;
    out.write("ssb_bursts.csv", &all, "seed,burst,dmrs_sjnr_db,pbch_evm_pct,pss_evm_pct", &bursts)?;

    for (seed, o) in &outcomes {
        if let Some(sss) = &o.sss {
            let mut body = String::new();
            for (i, s) in sss.scores.iter().enumerate() {
                let _ = writeln!(body, "{i},{s:.6}");
            }
            out.write(&format!("sss_scores_seed{seed}.csv"), &seed.to_string(), "n_id_1,score", &body)?;
        }
        let Some(cap) = &o.capture else { continue };
        let mut body = String::new();
        for lag in 0..cap.pss_correlation[0].len() {
            let _ = writeln!(
                body,
                "{lag},{:.6e},{:.6e},{:.6e}",
                cap.pss_correlation[0][lag], cap.pss_correlation[1][lag], cap.pss_correlation[2][lag]
            );
        }
        out.write(&format!("pss_correlation_seed{seed}.csv"), &seed.to_string(), "lag,n_id_2_0,n_id_2_1,n_id_2_2", &body)?;
        let mut body = String::new();
        for (b, syms) in cap.pbch_constellation.iter().enumerate() {
            write_points(&mut body, Some(b), syms);
        }
        out.write(&format!("pbch_constellation_seed{seed}.csv"), &seed.to_string(), "burst,index,re,im", &body)?;
        let mut body = String::new();
        write_points(&mut body, None, &cap.pdsch_constellation);
        out.write(&format!("pdsch_constellation_seed{seed}.csv"), &seed.to_string(), "index,re,im", &body)?;
    }
    Ok(())
}

fn write_points(body: &mut String, group: Option<usize>, syms: &[Complex64]) {
    for (i, z) in syms.iter().enumerate() {
        let _ = match group {
            Some(g) => writeln!(body, "{g},{i},{:.6},{:.6}", z.re, z.im),
            None => writeln!(body, "{i},{:.6},{:.6}", z.re, z.im),
        };
    }
}
