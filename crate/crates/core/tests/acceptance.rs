//! Acceptance suite: one PASS/FAIL line per criterion.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use jamcell::cellsim::{summarize, sweep, JammerTemplate, Scenario, SweepAxis, SweepSummary};
use jamcell::channel::fspl_db;
use jamcell::experiment::{run_experiment, ExperimentConfig, ExperimentKind};
use jamcell::jammer::{jammer_link_gain_db, min_jam_re_power, sjnr, JammerKind, JammerSpec};
use jamcell::link::{min_denial_power_dbm, LinkConfig, LinkSimulator};
use jamcell::mobility::{chebyshev, steps_step, StepsConfig, StepsState};
use jamcell::rng::stream_rng;
use jamcell::units::{dbm_to_watts, linear_to_db};
use rand::Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn within_budget(t: Instant, budget: Duration, detail: String) -> Check {
    let el = t.elapsed();
    ensure(el <= budget, format!("{detail}; {:.1} s (budget {} s)", el.as_secs_f64(), budget.as_secs()))
}

fn quiet_link() -> LinkConfig {
    LinkConfig {
        jammers: vec![],
        thermal_noise: false,
        ..LinkConfig::default()
    }
}

fn pci_round_trip() -> Check {
    let t = Instant::now();
    let mut failures = Vec::new();
    for pci in 0..1008u16 {
        let cfg = LinkConfig { pci, ..quiet_link() };
        let sim = LinkSimulator::new(&cfg).map_err(err)?;
        let o = sim.run(u64::from(pci), false).map_err(err)?;
        let pci_ok = o.measurement.pci_detected.map(|c| c.pci()) == Some(pci);
        let timing_ok = o.pss.detected && o.pss_starts.contains(&o.pss.timing_offset);
        if !(pci_ok && timing_ok) {
            failures.push(pci);
        }
    }
    let detail = format!("{}/1008 PCIs recovered with exact timing", 1008 - failures.len());
    if !failures.is_empty() {
        return Err(format!("{detail}; first failures {:?}", &failures[..failures.len().min(5)]));
    }
    within_budget(t, Duration::from_secs(120), detail)
}

fn fspl_oracle() -> Check {
    let mut worst = 0.0f64;
    for i in 0..10 {
        let f_hz = 100e6 * 10f64.powf(i as f64 * 3.0 / 9.0);
        for j in 0..10 {
            let d_m = 10f64.powf(j as f64 * 4.0 / 9.0);
            let oracle = 32.45 + 20.0 * (f_hz / 1e6).log10() + 20.0 * (d_m / 1e3).log10();
            worst = worst.max((fspl_db(f_hz, d_m).map_err(err)? - oracle).abs());
        }
    }
    ensure(worst <= 0.05, format!("max |error| {worst:.4} dB over 100 (f, d) points"))
}

fn inverse_identity() -> Check {
    let mut rng = stream_rng(2024, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = 10f64.powf(rng.random_range(-15.0..0.0));
        let gamma = 10f64.powf(rng.random_range(-2.0..4.0));
        // Noise below p/gamma keeps the required jamming power positive.
        let n = p / gamma * rng.random_range(0.0..0.99);
        let pj = min_jam_re_power(p, gamma, n).map_err(err)?;
        let back = sjnr(p, pj, n).map_err(err)?;
        worst = worst.max(((back - gamma) / gamma).abs());
    }
    ensure(worst <= 1e-12, format!("max relative error {worst:.2e} over 1000 triples"))
}

fn smart_power_advantage() -> Check {
    let t = Instant::now();
    let cfg = LinkConfig::default();
    let (barrage, smart) = rayon::join(
        || min_denial_power_dbm(&cfg, JammerKind::Barrage, 100, 0, 0.0, 60.0, 0.05),
        || min_denial_power_dbm(&cfg, JammerKind::SmartSsb, 100, 0, 0.0, 60.0, 0.05),
    );
    let (barrage, smart) = (barrage.map_err(err)?, smart.map_err(err)?);
    let gap = barrage - smart;
    let detail = format!("barrage {barrage:.2} dBm, smart-SSB {smart:.2} dBm, gap {gap:.2} dB");
    if !(2.0..=5.0).contains(&gap) {
        return Err(detail);
    }
    within_budget(t, Duration::from_secs(600), detail)
}

fn evm_ordering() -> Check {
    let mut cfg = LinkConfig::default();
    cfg.jammers[0].tx_power_dbm = 20.0;
    let sim = LinkSimulator::new(&cfg).map_err(err)?;
    let (mut pdsch, mut pss) = (0.0, 0.0);
    let n = 50;
    for seed in 0..n {
        let o = sim.run(seed, false).map_err(err)?;
        pdsch += o.pdsch_evm;
        pss += o.measurement.pss_evm_rms;
    }
    let (pdsch, pss) = (pdsch / n as f64, pss / n as f64);
    ensure(pdsch > pss, format!("mean PDSCH EVM {pdsch:.2}% vs PSS EVM {pss:.2}% over {n} seeds (barrage 20 dBm)"))
}

fn beam_sweeping() -> Check {
    let boosted = 3;
    let mut cfg = LinkConfig {
        boost_index: boosted,
        boost_db: 9.0,
        ..LinkConfig::default()
    };
    cfg.jammers[0].kind = JammerKind::SmartSsb;
    cfg.jammers[0].tx_power_dbm = 20.0;
    let sim = LinkSimulator::new(&cfg).map_err(err)?;
    let (mut boost_evm, mut other_evm) = (0.0, 0.0);
    let n = 50;
    for seed in 0..n {
        let evm = sim.run(seed, false).map_err(err)?.measurement.burst_pbch_evm;
        boost_evm += evm[boosted];
        other_evm += evm.iter().enumerate().filter(|(i, _)| *i != boosted).map(|(_, e)| e).sum::<f64>() / (evm.len() - 1) as f64;
    }
    let (b, o) = (boost_evm / n as f64, other_evm / n as f64);
    let reduction = 1.0 - b / o;
    ensure(
        reduction >= 0.40,
        format!("PBCH EVM {o:.2}% -> {b:.2}% on the +9 dB burst, reduction {:.1}% over {n} seeds", 100.0 * reduction),
    )
}

const DESK_SEEDS: [u64; 3] = [1, 2, 3];

fn harq_saturation() -> Check {
    let t = Instant::now();
    let values: Vec<f64> = (0..=14).map(|i| 5.0 * i as f64).collect();
    let rows = sweep(&Scenario::default(), SweepAxis::JamPower, &values, &DESK_SEEDS, &JammerTemplate::default()).map_err(err)?;
    let s = summarize(&rows);
    let at = |p: f64| -> Option<&SweepSummary> { s.iter().find(|x| (x.axis_value - p).abs() < 1e-9) };
    let star = s.iter().find(|x| x.retx_fraction_mean >= 0.3).ok_or("retx fraction never reaches 0.3")?;
    let far = at(star.axis_value + 10.0).ok_or("P* + 10 dB lies outside the sweep")?;
    let tp = far.throughput_mean / star.throughput_mean;
    let gp = far.goodput_mean / star.goodput_mean;
    let detail = format!(
        "P* = {} dBm (retx {:.3}); throughput ratio {tp:.3}, goodput ratio {gp:.3}",
        star.axis_value, star.retx_fraction_mean
    );
    if !((0.9..=1.1).contains(&tp) && gp <= 0.9) {
        return Err(detail);
    }
    within_budget(t, Duration::from_secs(300), detail)
}

fn diminishing_returns() -> Check {
    let rows = sweep(
        &Scenario::default(),
        SweepAxis::NJammers,
        &[0.0, 1.0, 2.0, 3.0],
        &DESK_SEEDS,
        &JammerTemplate::default(),
    )
    .map_err(err)?;
    let tp: Vec<f64> = summarize(&rows).iter().map(|s| s.throughput_mean).collect();
    let d: Vec<f64> = tp.windows(2).map(|w| w[0] - w[1]).collect();
    ensure(
        d[0] > d[1] && d[1] > d[2] && d[2] >= 0.0,
        format!(
            "throughput drops {:.1} / {:.1} / {:.1} kbps ({:.1}% / {:.1}% / {:.1}%)",
            d[0] / 1e3,
            d[1] / 1e3,
            d[2] / 1e3,
            100.0 * d[0] / tp[0],
            100.0 * d[1] / tp[1],
            100.0 * d[2] / tp[2]
        ),
    )
}

fn power_law_pmf(support: impl Iterator<Item = f64>, exponent: f64) -> Vec<f64> {
    let w: Vec<f64> = support.map(|x| x.powf(-exponent)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn total_variation(counts: &[usize], pmf: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    0.5 * counts.iter().zip(pmf).map(|(&c, &p)| (c as f64 / n as f64 - p).abs()).sum::<f64>()
}

fn steps_fit() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for (alpha, tau) in [(1.0, 1.5), (2.0, 2.0)] {
        let cfg = StepsConfig {
            alpha,
            tau,
            ..StepsConfig::default()
        };
        let pref = [cfg.grid_size / 2, cfg.grid_size / 2];
        let d_max = cfg.grid_size / 2;
        let mut rng = stream_rng(99, alpha.to_bits() ^ tau.to_bits());
        let mut state = StepsState::initial(&cfg, pref, &mut rng).map_err(err)?;
        let mut dist = vec![0usize; d_max + 1];
        let mut stay = vec![0usize; cfg.t_max];
        let (mut transitions, mut since) = (0usize, None::<usize>);
        while transitions < 100_000 {
            let jump = state.stay_remaining == 0;
            if jump {
                if let Some(len) = since {
                    stay[len - 1] += 1;
                }
            }
            state = steps_step(&state, &cfg, &mut rng);
            if jump {
                dist[chebyshev(pref, state.current_zone)] += 1;
                transitions += 1;
                since = Some(1);
            } else if let Some(len) = since.as_mut() {
                *len += 1;
            }
        }
        let tv_d = total_variation(&dist, &power_law_pmf((1..=d_max + 1).map(|x| x as f64), alpha));
        let tv_t = total_variation(&stay, &power_law_pmf((1..=cfg.t_max).map(|x| x as f64), tau));
        ok &= tv_d <= 0.02 && tv_t <= 0.02;
        details.push(format!("(α={alpha}, τ={tau}): TV zone {tv_d:.4}, stay {tv_t:.4}"));
    }
    ensure(ok, details.join("; "))
}

fn sjnr_calibration() -> Check {
    let base = LinkConfig::default();
    let s = base.signal_re_power_w().map_err(err)?;
    let noise = base.noise_re_power_w();
    let n_sc = LinkSimulator::new(&base).map_err(err)?.numerology().n_subcarriers() as f64;
    let template = base.jammers[0];
    let gain = jammer_link_gain_db(&template, base.ue_position, base.carrier_hz, base.ue_gain_db).map_err(err)?;
    let (mut worst_mean, mut worst_burst) = (0.0f64, 0.0f64);
    let mut parts = Vec::new();
    for target in [0.0, 5.0, 10.0, 15.0, 20.0, 25.0] {
        let j_re = s / 10f64.powf(target / 10.0) - noise;
        let tx_dbm = linear_to_db(j_re * n_sc / dbm_to_watts(0.0)) - gain;
        let cfg = LinkConfig {
            jammers: vec![JammerSpec {
                tx_power_dbm: tx_dbm,
                ..template
            }],
            ..base.clone()
        };
        let sim = LinkSimulator::new(&cfg).map_err(err)?;
        let mut est = Vec::new();
        for seed in 0..13 {
            est.extend(sim.run(seed, false).map_err(err)?.measurement.sjnr_db);
        }
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        worst_mean = worst_mean.max((mean - target).abs());
        worst_burst = est.iter().fold(worst_burst, |w, e| w.max((e - target).abs()));
        let sd = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / est.len() as f64).sqrt();
        parts.push(format!("{target}->{mean:.2} (sd {sd:.2})"));
        if est.len() < 100 {
            return Err(format!("only {} bursts at {target} dB", est.len()));
        }
    }
    ensure(
        worst_mean <= 1.5,
        format!(
            "mean estimate per injected SJNR (dB) {}; worst bias {worst_mean:.2} dB, worst single burst {worst_burst:.2} dB",
            parts.join(", ")
        ),
    )
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut cfg = ExperimentConfig {
        seeds: vec![5, 6],
        ..ExperimentConfig::default()
    };
    cfg.sweep.values = vec![10.0, 40.0];
    cfg.scenario.frames = 50;
    cfg.trace.duration_s = 0.5;
    let mut summary = Vec::new();
    for kind in [ExperimentKind::SsbAttack, ExperimentKind::CellSweep, ExperimentKind::MobilityTrace] {
        let a = tmp.path().join(format!("{}-a", kind.name()));
        let b = tmp.path().join(format!("{}-b", kind.name()));
        run_experiment(&cfg, kind, &a, 1).map_err(err)?;
        run_experiment(&cfg, kind, &b, 2).map_err(err)?;
        let (ta, tb) = (read_tree(&a), read_tree(&b));
        if ta != tb {
            return Err(format!("{} outputs differ between reruns", kind.name()));
        }
        summary.push(format!("{} ({} files)", kind.name(), ta.len()));
    }
    ensure(true, format!("byte-identical reruns: {}", summary.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("PCI exhaustive round trip", pci_round_trip),
        ("FSPL oracle", fspl_oracle),
        ("SJNR inverse identity", inverse_identity),
        ("smart-vs-barrage power advantage", smart_power_advantage),
        ("EVM vulnerability ordering", evm_ordering),
        ("beam-sweeping mitigation", beam_sweeping),
        ("HARQ saturation", harq_saturation),
        ("multi-jammer diminishing returns", diminishing_returns),
        ("STEPS distribution fit", steps_fit),
        ("SJNR estimator calibration", sjnr_calibration),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
