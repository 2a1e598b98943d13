//! Scenario configuration, runs, result files and plot scripts.

mod config;
mod plots;
mod record;

pub use config::{
    AnalysisSection, ChannelKind, ChannelSection, ClockSection, EnabledEstimators, EstimatorSection, PllArrival,
    PsdMode, ScenarioConfig, TrafficKind, TrafficSection,
};
pub use plots::{emit_plots, noise_from_records, noise_spectra, NoiseSpectra, PlotOptions};
pub use record::{read_records, records_to_csv, write_records, RunRecord, CSV_HEADER};

use std::fmt;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{bias_test, convergence_time, freq_error_ppm, AnalysisError, BiasTest, MIN_BIAS_SAMPLES};
use crate::channel::{drop_packets, transmit, ChannelError, ScenarioGroundTruth};
use crate::clock::{ClockError, ClockModel, PacketObservation};
use crate::estimators::{CrState, EstimatorError, IrState, PllState, RatioEstimator, RlsState, RtoTracker};
use crate::traffic::{
    generate_onoff_stream, generate_periodic_stream, generate_spread_stream, load_frame_trace,
    mean_bytes_for_interdeparture, stamp_departures, synthesize_vbr_trace, DepartureSchedule, FrameTrace, TrafficError,
};

/// Every problem found in one or more configurations.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}", .0.join("\n"))]
pub struct ConfigError(pub Vec<String>);

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration:\n{0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("csv line {line}: {message}")]
    BadCsv { line: usize, message: String },
    #[error("no records to plot")]
    EmptyRecords,
}

impl ExperimentError {
    /// True for problems with the inputs rather than with the run.
    pub fn is_validation(&self) -> bool {
        matches!(self, ExperimentError::Config(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub name: &'static str,
    pub final_estimate: Option<f64>,
    pub final_error_ppm: Option<f64>,
    /// Arrival index at which the error first stays within the threshold
    /// for the hold count.
    pub convergence: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub packets_sent: usize,
    pub packets_received: usize,
    pub no_data: bool,
    pub true_ratio: f64,
    pub source_hz: f64,
    pub receiver_hz: f64,
    pub clipped_delays: u64,
    /// PLL updates skipped because two arrivals shared a time stamp.
    pub pll_skipped: u64,
    pub estimators: Vec<EstimatorSummary>,
    /// IR values against the true ratio, when there are enough of them.
    pub ir_bias: Option<BiasTest>,
    pub runtime: Duration,
}

impl RunSummary {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.name == name)
    }
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.no_data {
            return writeln!(
                f,
                "no data: {} packets sent, {} received",
                self.packets_sent, self.packets_received
            );
        }
        writeln!(
            f,
            "packets: {} sent, {} received; true ratio {:.9}; {} delays clipped",
            self.packets_sent, self.packets_received, self.true_ratio, self.clipped_delays
        )?;
        for e in &self.estimators {
            writeln!(
                f,
                "{:>4}: final {} ({} ppm), converged at {}",
                e.name,
                opt(e.final_estimate.map(|v| format!("{v:.9}"))),
                opt(e.final_error_ppm.map(|v| format!("{v:.4}"))),
                opt(e.convergence),
            )?;
        }
        if let Some(b) = &self.ir_bias {
            writeln!(
                f,
                "  ir bias: deviation {:.6e}, std error {:.3e}, z {:.2}",
                b.deviation, b.std_error, b.z
            )?;
        }
        writeln!(f, "runtime: {:.3} s", self.runtime.as_secs_f64())
    }
}

/// Everything produced by one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub records: Vec<RunRecord>,
    pub observations: Vec<PacketObservation>,
    /// Absent when nothing was sent.
    pub truth: Option<ScenarioGroundTruth>,
    pub summary: RunSummary,
}

fn clock(section: &ClockSection) -> Result<ClockModel, ClockError> {
    ClockModel::new(section.nominal_hz, section.offset_ppm, section.width_bits)
}

fn frames(config: &ScenarioConfig, n_frames: usize) -> Result<FrameTrace, ExperimentError> {
    let t = &config.traffic;
    if let Some(path) = &t.trace_file {
        return Ok(load_frame_trace(path)?);
    }
    let mean = mean_bytes_for_interdeparture(t.mean_interdeparture_s, t.fps, t.payload_bytes, t.dispersion)?;
    Ok(synthesize_vbr_trace(config.seed, n_frames, mean, t.dispersion, t.fps)?)
}

/// Departure schedule for the configured traffic, cut to the packet count
/// and duration.
pub fn build_schedule(config: &ScenarioConfig) -> Result<DepartureSchedule, ExperimentError> {
    let t = &config.traffic;
    let want = t.packets as usize;
    let horizon = |s: &DepartureSchedule| s.departures.last().map(|d| d.time.as_secs_f64());
    let mut schedule = match t.kind {
        TrafficKind::Periodic => {
            let mut n = want;
            if let Some(d) = t.duration_s {
                n = n.min((d / t.mean_interdeparture_s).floor() as usize + 1);
            }
            generate_periodic_stream(t.mean_interdeparture_s, n, t.payload_bytes as u32)?
        }
        kind => {
            let packetize = |trace: &FrameTrace| match kind {
                TrafficKind::OnOff => generate_onoff_stream(trace, t.payload_bytes, t.tx_rate_hz),
                _ => generate_spread_stream(trace, t.payload_bytes),
            };
            let mut n_frames = (want as f64 * t.mean_interdeparture_s * t.fps * 1.2).ceil() as usize + 8;
            if let Some(d) = t.duration_s {
                n_frames = n_frames.min((d * t.fps).ceil() as usize + 1);
            }
            loop {
                let trace = frames(config, n_frames)?;
                let s = packetize(&trace)?;
                let long_enough = s.len() >= want || t.duration_s.is_some_and(|d| horizon(&s).is_some_and(|h| h >= d));
                // a trace file cannot grow; synthesized traces extend with the same prefix
                if long_enough || t.trace_file.is_some() || want == 0 {
                    break s;
                }
                n_frames *= 2;
            }
        }
    };
    if let Some(d) = t.duration_s {
        schedule.departures.retain(|dep| dep.time.as_secs_f64() < d);
    }
    schedule.truncate(want);
    if t.tick_aligned {
        schedule = schedule.align_to_ticks(&clock(&config.source)?);
    }
    Ok(schedule)
}

/// Runs one scenario end to end: traffic, channel, loss, and every enabled
/// estimator over the received stream.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun, ExperimentError> {
    let started = Instant::now();
    config.validate()?;
    let source = clock(&config.source)?;
    let receiver = clock(&config.receiver)?;
    let (f_s, f_r) = (source.effective_hz(), receiver.effective_hz());
    let true_ratio = receiver.effective_micro_hz() as f64 / source.effective_micro_hz() as f64;

    let schedule = build_schedule(config)?;
    let empty_summary = |sent: usize| RunSummary {
        packets_sent: sent,
        packets_received: 0,
        no_data: true,
        true_ratio,
        source_hz: f_s,
        receiver_hz: f_r,
        clipped_delays: 0,
        pll_skipped: 0,
        estimators: Vec::new(),
        ir_bias: None,
        runtime: started.elapsed(),
    };
    if schedule.is_empty() {
        return Ok(ScenarioRun {
            records: Vec::new(),
            observations: Vec::new(),
            truth: None,
            summary: empty_summary(0),
        });
    }

    let stamped = stamp_departures(&schedule, &source, config.source.initial_ticks)?;
    let ch = &config.channel;
    let (observations, truth) = transmit(
        &stamped,
        &ch.delay_model(),
        &source,
        &receiver,
        config.receiver.initial_ticks,
        ch.offset_s,
        config.seed,
    )?;
    let observations = drop_packets(&observations, ch.loss_rate, config.seed)?;

    let en = config.estimators.enabled;
    let est = &config.estimators;
    let mut tracker = RtoTracker::new(config.source.width_bits, config.receiver.width_bits)?;
    let mut cr = CrState::new();
    let mut rls = RlsState::new(est.rls_r0, est.rls_p0)?;
    let mut ir = IrState::new();
    let mut pll = PllState::new(est.pll_config(config.source.width_bits))?;
    let mut pll_skipped = 0;
    let first_arrival = observations.first().map(|o| truth.arrival_times[o.seq as usize]);
    let ppm = |r: Option<f64>| r.map(|r| freq_error_ppm(f_r / r, f_s));

    let mut records = Vec::with_capacity(observations.len());
    for obs in &observations {
        let sample = tracker.push(obs)?;
        let mut rec = RunRecord {
            k: obs.seq,
            ts_ticks: obs.ts_ticks,
            arrival_ticks: obs.arrival_ticks,
            idt: sample.map(|s| s.idt),
            iat: sample.map(|s| s.iat),
            tilde_ts: sample.map_or(0, |s| s.tilde_ts),
            tilde_tr: sample.map_or(0, |s| s.tilde_tr),
            delay: truth.delays[obs.seq as usize],
            r_cr: None,
            r_ls: None,
            r_ir: None,
            f_pll: None,
            err_ppm_cr: None,
            err_ppm_ls: None,
            err_ppm_ir: None,
            err_ppm_pll: None,
        };
        if let Some(s) = sample {
            if en.cr {
                rec.r_cr = cr.update(&s);
            }
            if en.rls {
                rec.r_ls = rls.update(&s);
            }
            if en.ir {
                rec.r_ir = ir.update(&s);
            }
        }
        if en.pll {
            let t = match est.pll_arrival {
                PllArrival::Counter => rec.tilde_tr as f64 / f_r,
                PllArrival::Real => {
                    let first = first_arrival.expect("at least one observation");
                    (truth.arrival_times[obs.seq as usize] - first).as_secs_f64()
                }
            };
            rec.f_pll = match pll.update(t, obs.ts_ticks) {
                Ok(v) => v,
                Err(EstimatorError::NonIncreasingArrival { .. }) => {
                    pll_skipped += 1;
                    pll.estimate()
                }
                Err(e) => return Err(e.into()),
            };
        }
        rec.err_ppm_cr = ppm(rec.r_cr);
        rec.err_ppm_ls = ppm(rec.r_ls);
        rec.err_ppm_ir = ppm(rec.r_ir);
        rec.err_ppm_pll = rec.f_pll.map(|f| freq_error_ppm(f, f_s));
        records.push(rec);
    }

    let an = &config.analysis;
    let mut estimators = Vec::new();
    for (name, on, value, error) in [
        (
            "cr",
            en.cr,
            (|r: &RunRecord| r.r_cr) as fn(&RunRecord) -> Option<f64>,
            (|r: &RunRecord| r.err_ppm_cr) as fn(&RunRecord) -> Option<f64>,
        ),
        ("rls", en.rls, |r| r.r_ls, |r| r.err_ppm_ls),
        ("ir", en.ir, |r| r.r_ir, |r| r.err_ppm_ir),
        ("pll", en.pll, |r| r.f_pll, |r| r.err_ppm_pll),
    ] {
        if !on {
            continue;
        }
        let errors: Vec<f64> = records.iter().map(|r| error(r).unwrap_or(f64::NAN)).collect();
        estimators.push(EstimatorSummary {
            name,
            final_estimate: records.last().and_then(value),
            final_error_ppm: records.last().and_then(error),
            convergence: convergence_time(&errors, an.convergence_threshold_ppm, an.convergence_hold)?,
        });
    }
    let ir_values: Vec<f64> = records.iter().filter_map(|r| r.r_ir).collect();
    let ir_bias = if ir_values.len() >= MIN_BIAS_SAMPLES {
        Some(bias_test(&ir_values, true_ratio)?)
    } else {
        None
    };

    let summary = RunSummary {
        packets_sent: schedule.len(),
        packets_received: records.len(),
        no_data: records.len() < 2,
        true_ratio,
        source_hz: f_s,
        receiver_hz: f_r,
        clipped_delays: truth.clipped,
        pll_skipped,
        estimators,
        ir_bias,
        runtime: started.elapsed(),
    };
    Ok(ScenarioRun {
        records,
        observations,
        truth: Some(truth),
        summary,
    })
}

/// Validates every configuration, then runs them in parallel. Results are
/// in input order and independent of the thread count.
pub fn run_matrix(configs: &[ScenarioConfig]) -> Result<Vec<ScenarioRun>, ExperimentError> {
    let problems: Vec<String> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            c.violations()
                .into_iter()
                .map(move |v| format!("scenario {}: {v}", i + 1))
        })
        .collect();
    if !problems.is_empty() {
        return Err(ConfigError(problems).into());
    }
    configs.par_iter().map(run_scenario).collect()
}

/// One row per scenario: final errors, convergence indices and IR z-score.
pub fn comparison_table(rows: &[(String, &RunSummary)]) -> String {
    let mut out = format!(
        "{:<20} {:>8} {:>12} {:>12} {:>12} {:>12} {:>8} {:>8} {:>8} {:>8}\n",
        "scenario", "packets", "cr_ppm", "rls_ppm", "ir_ppm", "pll_ppm", "conv_cr", "conv_rls", "conv_pll", "ir_z"
    );
    for (label, s) in rows {
        let err = |n: &str| {
            opt(s
                .estimator(n)
                .and_then(|e| e.final_error_ppm)
                .map(|v| format!("{v:.4}")))
        };
        let conv = |n: &str| opt(s.estimator(n).and_then(|e| e.convergence));
        out.push_str(&format!(
            "{:<20} {:>8} {:>12} {:>12} {:>12} {:>12} {:>8} {:>8} {:>8} {:>8}\n",
            label,
            s.packets_received,
            err("cr"),
            err("rls"),
            err("ir"),
            err("pll"),
            conv("cr"),
            conv("rls"),
            conv("pll"),
            opt(s.ir_bias.map(|b| format!("{:.2}", b.z))),
        ));
    }
    out
}
