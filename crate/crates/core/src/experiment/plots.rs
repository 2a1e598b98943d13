//! Noise spectra of recorded runs and self-contained matplotlib scripts.

use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{noise_from_delays, welch_psd, welch_psd_resampled, NoiseSeries, PsdReport};

use super::{write_records, AnalysisSection, ExperimentError, PsdMode, RunRecord};

/// Rebuilds the delay noise series from recorded delays and timestamp
/// gaps. `source_hz` converts `idt` ticks to seconds.
pub fn noise_from_records(records: &[RunRecord], source_hz: f64) -> NoiseSeries {
    let delays: Vec<f64> = records.iter().map(|r| r.delay).collect();
    let gaps: Vec<f64> = records
        .iter()
        .skip(1)
        .map(|r| r.idt.unwrap_or(0) as f64 / source_hz)
        .collect();
    noise_from_delays(&delays, &gaps)
}

/// Spectra of `d(k) − d(0)` and of `Δd / Δt_s`.
#[derive(Debug, Clone)]
pub struct NoiseSpectra {
    pub relative_delay: PsdReport,
    /// Missing when fewer than two rate samples exist.
    pub delay_rate: Option<PsdReport>,
}

/// Welch spectra of both noise series. The segment length is shortened
/// to the series length when needed so that short runs still produce an
/// estimate; `None` when there are fewer than two samples.
pub fn noise_spectra(
    records: &[RunRecord],
    source_hz: f64,
    analysis: &AnalysisSection,
) -> Result<Option<NoiseSpectra>, ExperimentError> {
    let noise = noise_from_records(records, source_hz);
    let mut params = analysis.welch_params();
    let psd = |values: &[f64], times: &[f64], params| -> Result<PsdReport, ExperimentError> {
        Ok(match analysis.psd_mode {
            PsdMode::Index => welch_psd(values, 1.0, &params)?,
            PsdMode::Time => welch_psd_resampled(times, values, analysis.psd_resample_hz, &params)?,
        })
    };
    let len = |values: &[f64], times: &[f64]| match analysis.psd_mode {
        PsdMode::Index => values.len(),
        PsdMode::Time => match (times.first(), times.last()) {
            (Some(a), Some(b)) => ((b - a) * analysis.psd_resample_hz).floor() as usize + 1,
            _ => 0,
        },
    };
    let delay_len = len(&noise.relative_delay, &noise.source_time);
    let rate_len = len(&noise.delay_rate, &noise.delay_rate_time);
    if delay_len < 2 {
        return Ok(None);
    }
    params.segment_len = params.segment_len.min(delay_len);
    if rate_len >= 2 {
        params.segment_len = params.segment_len.min(rate_len);
    }
    let relative_delay = psd(&noise.relative_delay, &noise.source_time, params)?;
    let delay_rate = if rate_len >= 2 {
        Some(psd(&noise.delay_rate, &noise.delay_rate_time, params)?)
    } else {
        None
    };
    Ok(Some(NoiseSpectra {
        relative_delay,
        delay_rate,
    }))
}

#[derive(Debug, Clone)]
pub struct PlotOptions {
    /// Source clock frequency used to turn `idt` into seconds.
    pub source_hz: f64,
    pub analysis: AnalysisSection,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: PathBuf, contents: &str, written: &mut Vec<PathBuf>) -> Result<(), ExperimentError> {
    fs::write(&path, contents).map_err(io_err(&path))?;
    written.push(path);
    Ok(())
}

fn psd_csv(spectra: &NoiseSpectra) -> String {
    let mut s = String::from("frequency,relative_delay,delay_rate\n");
    let rd = &spectra.relative_delay;
    for (i, (f, d)) in rd.frequencies.iter().zip(&rd.density).enumerate() {
        let rate = spectra
            .delay_rate
            .as_ref()
            .and_then(|r| r.density.get(i))
            .map(|v| v.to_string())
            .unwrap_or_default();
        s.push_str(&format!("{f},{d},{rate}\n"));
    }
    s
}

fn py_list(items: &[(String, String)]) -> String {
    let body: Vec<String> = items.iter().map(|(a, b)| format!("    ({a:?}, {b:?}),")).collect();
    format!("[\n{}\n]", body.join("\n"))
}

const ERROR_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Frequency estimation error of each estimator against packet index."""
import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
RUNS = @RUNS@
ESTIMATORS = [
    ("err_ppm_cr", "CR"),
    ("err_ppm_ls", "RLS-RTO"),
    ("err_ppm_ir", "IR"),
    ("err_ppm_pll", "PLL"),
]


def load(name):
    with open(os.path.join(HERE, name), newline="") as f:
        return list(csv.DictReader(f))


fig, axes = plt.subplots(len(RUNS), 1, figsize=(8, 3.2 * len(RUNS)), squeeze=False)
for ax, (label, name) in zip(axes[:, 0], RUNS):
    rows = load(name)
    for col, title in ESTIMATORS:
        pts = [(int(r["k"]), float(r[col])) for r in rows if r[col] != ""]
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], label=title, linewidth=0.8)
    ax.set_yscale("symlog", linthresh=1.0)
    ax.set_xlabel("packet index k")
    ax.set_ylabel("frequency error (ppm)")
    ax.set_title(label)
    ax.grid(True, alpha=0.3)
    ax.legend()
fig.tight_layout()
out = os.path.join(HERE, "error_curves.png")
fig.savefig(out, dpi=150)
print(out)
"#;

const PSD_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Noise spectra overlay: (a) relative delay, (b) delay change per unit source time."""
import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
RUNS = @RUNS@
AXIS = "@AXIS@"


def load(name):
    with open(os.path.join(HERE, name), newline="") as f:
        return list(csv.DictReader(f))


fig, (ax_a, ax_b) = plt.subplots(2, 1, figsize=(8, 7))
for label, name in RUNS:
    rows = load(name)[1:]
    freq = [float(r["frequency"]) for r in rows]
    ax_a.semilogy(freq, [float(r["relative_delay"]) for r in rows], label=label, linewidth=0.8)
    rate = [(f, float(r["delay_rate"])) for f, r in zip(freq, rows) if r["delay_rate"] != ""]
    if rate:
        ax_b.semilogy([p[0] for p in rate], [p[1] for p in rate], label=label, linewidth=0.8)
ax_a.set_title("(a) d(k) - d(0)")
ax_b.set_title("(b) (d(k) - d(k-1)) / (t_s(k) - t_s(k-1))")
for ax in (ax_a, ax_b):
    ax.set_xlabel("frequency (" + AXIS + ")")
    ax.set_ylabel("power spectral density")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
fig.tight_layout()
out = os.path.join(HERE, "psd_overlay.png")
fig.savefig(out, dpi=150)
print(out)
"#;

/// Writes each run's records as `<label>.csv`, its noise spectra as
/// `<label>_psd.csv`, and two scripts that render the figures from those
/// files alone: `error_curves.py` and `psd_overlay.py`. Returns the paths
/// written.
pub fn emit_plots(
    runs: &[(String, &[RunRecord])],
    out_dir: &Path,
    options: &PlotOptions,
) -> Result<Vec<PathBuf>, ExperimentError> {
    if runs.is_empty() || runs.iter().any(|(_, r)| r.is_empty()) {
        return Err(ExperimentError::EmptyRecords);
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    let mut error_runs = Vec::new();
    let mut psd_runs = Vec::new();
    let mut axis = None;
    for (label, records) in runs {
        let name = format!("{label}.csv");
        let path = out_dir.join(&name);
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        write_records(std::io::BufWriter::new(file), records)?;
        written.push(path);
        error_runs.push((label.clone(), name));

        if let Some(spectra) = noise_spectra(records, options.source_hz, &options.analysis)? {
            let name = format!("{label}_psd.csv");
            write_file(out_dir.join(&name), &psd_csv(&spectra), &mut written)?;
            axis = Some(spectra.relative_delay.axis.label());
            psd_runs.push((label.clone(), name));
        }
    }
    let script = ERROR_SCRIPT.replace("@RUNS@", &py_list(&error_runs));
    write_file(out_dir.join("error_curves.py"), &script, &mut written)?;
    if let Some(axis) = axis {
        let script = PSD_SCRIPT
            .replace("@RUNS@", &py_list(&psd_runs))
            .replace("@AXIS@", axis);
        write_file(out_dir.join("psd_overlay.py"), &script, &mut written)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::super::{run_scenario, ScenarioConfig, TrafficKind};
    use super::*;

    fn run(kind: TrafficKind) -> Vec<RunRecord> {
        run_n(kind, 3000)
    }

    fn run_n(kind: TrafficKind, packets: u64) -> Vec<RunRecord> {
        let mut c = ScenarioConfig::default();
        c.traffic.packets = packets;
        c.traffic.kind = kind;
        c.channel.model = super::super::ChannelKind::FifoQueue;
        run_scenario(&c).unwrap().records
    }

    fn options() -> PlotOptions {
        PlotOptions {
            source_hz: 90_018.0,
            analysis: ScenarioConfig::default().analysis,
        }
    }

    #[test]
    fn one_run_gets_an_error_script() {
        let dir = tempfile::tempdir().unwrap();
        let recs = run(TrafficKind::Spread);
        let files = emit_plots(&[("spread".into(), &recs)], dir.path(), &options()).unwrap();
        let script = fs::read_to_string(dir.path().join("error_curves.py")).unwrap();
        assert!(script.contains("(\"spread\", \"spread.csv\")"));
        assert!(files.contains(&dir.path().join("spread.csv")));
        let back = super::super::read_records(fs::File::open(dir.path().join("spread.csv")).unwrap()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn pair_gets_a_two_trace_psd_overlay() {
        let dir = tempfile::tempdir().unwrap();
        let spread = run(TrafficKind::Spread);
        let onoff = run(TrafficKind::OnOff);
        emit_plots(
            &[("spread".into(), &spread), ("onoff".into(), &onoff)],
            dir.path(),
            &options(),
        )
        .unwrap();
        let script = fs::read_to_string(dir.path().join("psd_overlay.py")).unwrap();
        assert!(script.contains("(\"spread\", \"spread_psd.csv\")"));
        assert!(script.contains("(\"onoff\", \"onoff_psd.csv\")"));
        assert!(script.contains("(a) d(k) - d(0)"));
        assert!(script.contains("cycles/packet"));
        let psd = fs::read_to_string(dir.path().join("onoff_psd.csv")).unwrap();
        assert_eq!(psd.lines().next().unwrap(), "frequency,relative_delay,delay_rate");
        assert_eq!(psd.lines().count(), 1 + 513);
    }

    #[test]
    fn empty_records_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_plots(&[("x".into(), &[])], dir.path(), &options()),
            Err(ExperimentError::EmptyRecords)
        ));
        assert!(matches!(
            emit_plots(&[], dir.path(), &options()),
            Err(ExperimentError::EmptyRecords)
        ));
    }

    #[test]
    fn spectra_satisfy_parseval() {
        // the identity holds statistically; a full-length run is needed
        let recs = run_n(TrafficKind::OnOff, 100_000);
        let mut an = ScenarioConfig::default().analysis;
        for mode in [PsdMode::Index, PsdMode::Time] {
            an.psd_mode = mode;
            let s = noise_spectra(&recs, 90_018.0, &an).unwrap().unwrap();
            assert!(s.relative_delay.parseval_residual() < 0.01);
            assert!(s.delay_rate.unwrap().parseval_residual() < 0.01);
        }
        assert!(noise_spectra(&recs[..1], 90_018.0, &an).unwrap().is_none());
    }

    #[test]
    fn unwritable_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let recs = run(TrafficKind::Spread);
        let err = emit_plots(&[("s".into(), &recs)], &blocker.join("sub"), &options()).unwrap_err();
        assert!(matches!(err, ExperimentError::Io { .. }), "{err}");
    }
}
