//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints its own PASS/FAIL line; exits non-zero if any fails.

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use scfr_core::analysis::{
    convergence_time, freq_error_ppm, settles_at, welch_psd, Detrend, PsdReport, WelchParams, Window,
};
use scfr_core::estimators::{rls_batch_oracle, CrState, RatioEstimator, RlsState, RtoSample, RtoTracker};
use scfr_core::experiment::{
    noise_spectra, records_to_csv, run_matrix, run_scenario, ChannelKind, EnabledEstimators, PllArrival, PsdMode,
    RunRecord, ScenarioConfig, ScenarioRun, TrafficKind,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

/// Gamma jitter with a 1 ms mean plus a load-dependent term.
fn jittery(seed: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig {
        seed,
        ..Default::default()
    };
    c.channel.model = ChannelKind::LoadCorrelated;
    c.channel.base_s = 0.005;
    c.channel.shape = 64.0;
    c.channel.scale_s = 1e-3 / 64.0;
    c.channel.gain_s = 0.15e-3;
    c.channel.reference_interval_s = 0.0059026;
    c
}

fn column(records: &[RunRecord], f: impl Fn(&RunRecord) -> Option<f64>) -> Vec<f64> {
    records.iter().map(|r| f(r).unwrap_or(f64::NAN)).collect()
}

fn within_runtime(started: Instant, limit: Duration) -> (bool, String) {
    let t = started.elapsed();
    (t < limit, format!("{:.2} s of {} s", t.as_secs_f64(), limit.as_secs()))
}

fn rls_matches_batch_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    let mut prefixes = 0usize;
    for _ in 0..100 {
        let ratio = rng.gen_range(0.5..500.0);
        let n = rng.gen_range(10..=1000);
        let mean_gap = rng.gen_range(10.0..5000.0);
        let gap = Exp::new(1.0 / mean_gap).unwrap();
        let jitter_ticks = ratio * rng.gen_range(0.0..200.0);
        let r0 = ratio * (1.0 + rng.gen_range(-1e-3..1e-3));
        let p0 = 10f64.powf(rng.gen_range(-3.0..3.0));

        let (mut ts, mut samples) = (0i64, Vec::with_capacity(n));
        let jitter =
            |rng: &mut ChaCha8Rng| jitter_ticks * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        let j0 = jitter(&mut rng);
        let mut tr_prev = 0i64;
        for _ in 0..n {
            let idt = 1 + gap.sample(&mut rng) as i64;
            ts += idt;
            let tr = (ratio * ts as f64 + jitter(&mut rng) - j0).round() as i64;
            samples.push(RtoSample {
                tilde_ts: ts,
                tilde_tr: tr,
                iat: tr - tr_prev,
                idt,
            });
            tr_prev = tr;
        }

        let mut rls = RlsState::new(r0, p0).unwrap();
        for (i, s) in samples.iter().enumerate() {
            let recursive = rls.update(s).unwrap();
            let batch = rls_batch_oracle(&samples[..=i], r0, p0).unwrap();
            worst = worst.max(((recursive - batch) / batch).abs());
            prefixes += 1;
        }
    }
    let (fast, time) = within_runtime(started, Duration::from_secs(5));
    Outcome::check(
        worst <= 1e-9 && fast,
        format!("{prefixes} prefixes, worst relative gap {worst:.2e}, {time}"),
    )
}

/// Unwraps a stream of counter readings with the half-range rule, using
/// 128-bit arithmetic independent of the library's tick helpers.
fn unwrap_sums(values: &[u64], width: u32) -> Vec<i128> {
    let modulus = 1i128 << width;
    let mut acc = 0i128;
    let mut out = vec![0i128];
    for w in values.windows(2) {
        let mut d = (i128::from(w[1]) - i128::from(w[0])).rem_euclid(modulus);
        if d > modulus / 2 {
            d -= modulus;
        }
        acc += d;
        out.push(acc);
    }
    out
}

fn cr_matches_closed_form() -> Outcome {
    let started = Instant::now();
    let mut c = jittery(11);
    c.traffic.kind = TrafficKind::OnOff;
    c.traffic.packets = 1_000_000;
    c.source.initial_ticks = (1 << 32) - 5_000;
    c.receiver.initial_ticks = (1u64 << 48) - 3_000_000;
    c.estimators.enabled = EnabledEstimators {
        cr: true,
        rls: false,
        ir: false,
        pll: false,
    };
    let run = run_scenario(&c).unwrap();
    let obs = &run.observations;
    let ts: Vec<u64> = obs.iter().map(|o| o.ts_ticks).collect();
    let tr: Vec<u64> = obs.iter().map(|o| o.arrival_ticks).collect();
    let sum_idt = unwrap_sums(&ts, 32);
    let sum_iat = unwrap_sums(&tr, 48);

    let mut tracker = RtoTracker::new(32, 48).unwrap();
    let mut cr = CrState::new();
    let mut mismatches = 0usize;
    let mut compared = 0usize;
    for (k, o) in obs.iter().enumerate() {
        let Some(s) = tracker.push(o).unwrap() else { continue };
        let est = cr.update(&s);
        let (a, d) = cr.fraction();
        let exact = (i128::from(a), i128::from(d)) == (sum_iat[k], sum_idt[k]);
        let value = est.map(f64::to_bits) == Some((sum_iat[k] as f64 / sum_idt[k] as f64).to_bits());
        let recorded = run.records[k].r_cr.map(f64::to_bits) == est.map(f64::to_bits);
        if !(exact && value && recorded) {
            mismatches += 1;
        }
        compared += 1;
    }
    let (fast, time) = within_runtime(started, Duration::from_secs(5));
    Outcome::check(
        mismatches == 0 && compared + 1 == 1_000_000 && fast,
        format!("{compared} estimates, {mismatches} mismatches, {time}"),
    )
}

fn noiseless_exactness() -> Outcome {
    let mut c = ScenarioConfig::default();
    c.traffic.packets = 20_000;
    c.channel.model = ChannelKind::Constant;
    let run = run_scenario(&c).unwrap();
    let (fs, fr) = (90_018_000_000i128, 15_996_800_000_000i128);
    let mut bound_violations = 0;
    let mut worst_ppm_after_100 = 0.0f64;
    for (k, r) in run.records.iter().enumerate().skip(1) {
        // |A/D − fr/fs| ≤ 1/D  ⇔  |A·fs − fr·D| ≤ fs
        let (a, d) = (i128::from(r.tilde_tr), i128::from(r.tilde_ts));
        if (a * fs - fr * d).abs() > fs {
            bound_violations += 1;
        }
        if k >= 100 {
            let f_hat = 15_996_800.0 / r.r_cr.unwrap();
            worst_ppm_after_100 = worst_ppm_after_100.max(freq_error_ppm(f_hat, 90_018.0).abs());
        }
    }
    Outcome::check(
        bound_violations == 0 && worst_ppm_after_100 < 0.1,
        format!(
            "{} packets, {bound_violations} bound violations, worst error after 100 packets {worst_ppm_after_100:.4} ppm",
            run.records.len()
        ),
    )
}

/// Counts packets where the CR error exceeds `max|d̃|·f_r/t̃_s`, strictly
/// and with one receiver tick of counter quantization allowed.
fn cr_bound_violations(run: &ScenarioRun) -> (usize, usize, usize) {
    let truth = run.truth.as_ref().unwrap();
    let (ratio, fr) = (truth.ratio_r, truth.receiver_hz);
    let d0 = run.records[0].delay;
    let mut max_dev = 0.0f64;
    let (mut strict, mut quantized, mut checked) = (0, 0, 0);
    for r in &run.records[1..] {
        max_dev = max_dev.max((r.delay - d0).abs());
        let (Some(est), true) = (r.r_cr, r.tilde_ts > 0) else {
            continue;
        };
        let err = (est - ratio).abs();
        let d = r.tilde_ts as f64;
        // floating slack for the f64 ratio and quotient
        let slack = 1e-12 * ratio;
        if err > max_dev * fr / d + slack {
            strict += 1;
        }
        if err > (max_dev * fr + 1.0) / d + slack {
            quantized += 1;
        }
        checked += 1;
    }
    (strict, quantized, checked)
}

fn cr_error_bound() -> Outcome {
    let mut runs = 0;
    let (mut strict, mut quantized, mut checked) = (0, 0, 0);
    for model in [
        ChannelKind::IidGamma,
        ChannelKind::Ar1Gaussian,
        ChannelKind::FifoQueue,
        ChannelKind::LoadCorrelated,
    ] {
        for kind in [TrafficKind::Spread, TrafficKind::OnOff] {
            for seed in 0..3 {
                let mut c = ScenarioConfig {
                    seed,
                    ..Default::default()
                };
                c.traffic.kind = kind;
                c.traffic.packets = 30_000;
                c.channel.model = model;
                if seed == 2 {
                    c.channel.loss_rate = 0.05;
                }
                let (s, q, n) = cr_bound_violations(&run_scenario(&c).unwrap());
                strict += s;
                quantized += q;
                checked += n;
                runs += 1;
            }
        }
    }
    Outcome::check(
        quantized == 0,
        format!(
            "{runs} runs, {checked} packets; over max|d̃|·f_r/t̃_s: {strict}, over (max|d̃|·f_r + 1 tick)/t̃_s: {quantized}"
        ),
    )
}

fn ordering_against_pll() -> Outcome {
    let started = Instant::now();
    let configs: Vec<ScenarioConfig> = (0..10).map(jittery).collect();
    let runs = run_matrix(&configs).unwrap();
    let (mut settled, mut faster, mut smaller) = (0, 0, 0);
    let mut notes = Vec::new();
    for run in &runs {
        let cr = column(&run.records, |r| r.err_ppm_cr);
        let ls = column(&run.records, |r| r.err_ppm_ls);
        let pll = column(&run.records, |r| r.err_ppm_pll);
        if settles_at(&cr, 5.0).is_some() && settles_at(&ls, 5.0).is_some() {
            settled += 1;
        }
        let conv = |v: &[f64]| convergence_time(v, 5.0, 100).unwrap();
        let never_last = |t: Option<usize>| t.unwrap_or(usize::MAX);
        let (c_cr, c_ls, c_pll) = (conv(&cr), conv(&ls), conv(&pll));
        if never_last(c_cr) < never_last(c_pll) && never_last(c_ls) < never_last(c_pll) {
            faster += 1;
        }
        let last = run.records.len() - 1;
        if cr[last].abs() < pll[last].abs() && ls[last].abs() < pll[last].abs() {
            smaller += 1;
        }
        notes.push(format!("{:?}/{:?}/{:?}", c_cr, c_ls, c_pll));
    }
    let (fast, time) = within_runtime(started, Duration::from_secs(60));
    Outcome::check(
        settled == 10 && faster >= 9 && smaller >= 9 && fast,
        format!(
            "settled within 5 ppm {settled}/10, faster than PLL {faster}/10, smaller residual {smaller}/10, {time}; convergence cr/rls/pll {}",
            notes[..3].join(" ")
        ),
    )
}

fn ir_bias() -> Outcome {
    let mut c = jittery(21);
    c.traffic.packets = 100_000;
    let run = run_scenario(&c).unwrap();
    let bias = run.summary.ir_bias.unwrap();
    let (_, cr_violations, _) = cr_bound_violations(&run);

    let mut calm = 0;
    let mut zs = Vec::new();
    for seed in 0..10 {
        let mut c = ScenarioConfig {
            seed,
            ..Default::default()
        };
        c.channel.model = ChannelKind::IidGamma;
        c.channel.base_s = 0.005;
        c.channel.shape = 64.0;
        c.channel.scale_s = 1e-3 / 64.0;
        let z = run_scenario(&c).unwrap().summary.ir_bias.unwrap().z;
        if z.abs() < 4.0 {
            calm += 1;
        }
        zs.push(format!("{z:.2}"));
    }
    Outcome::check(
        bias.n >= 10_000 && bias.z.abs() > 5.0 && cr_violations == 0 && calm >= 9,
        format!(
            "load-correlated: n {}, z {:.2} (deviation {:+.4e}), CR bound violations {cr_violations}; iid |z| < 4 in {calm}/10 [{}]",
            bias.n,
            bias.z,
            bias.deviation,
            zs.join(", ")
        ),
    )
}

fn wrap_invariance() -> Outcome {
    let mut worst = 0.0f64;
    let mut differing_shape = false;
    for (seed, arrival) in [(5, PllArrival::Real), (6, PllArrival::Counter)] {
        let mut base = jittery(seed);
        base.traffic.packets = 50_000;
        base.estimators.pll_arrival = arrival;
        let mut wrapped = base.clone();
        wrapped.source.initial_ticks = (1 << 32) - 1000;
        wrapped.receiver.initial_ticks = (1u64 << 48) - 1_000_000;
        let a = run_scenario(&base).unwrap().records;
        let b = run_scenario(&wrapped).unwrap().records;
        if a.len() != b.len() {
            differing_shape = true;
            continue;
        }
        for (x, y) in a.iter().zip(&b) {
            for (p, q) in [(x.r_cr, y.r_cr), (x.r_ls, y.r_ls), (x.r_ir, y.r_ir), (x.f_pll, y.f_pll)] {
                match (p, q) {
                    (Some(p), Some(q)) => worst = worst.max(((p - q) / p).abs()),
                    (None, None) => {}
                    _ => differing_shape = true,
                }
            }
        }
    }
    Outcome::check(
        !differing_shape && worst <= 1e-12,
        format!("worst relative difference {worst:.2e} over two runs that both wrap"),
    )
}

fn spectra(kind: TrafficKind, seed: u64, mode: PsdMode) -> (PsdReport, PsdReport) {
    let mut c = ScenarioConfig {
        seed,
        ..Default::default()
    };
    c.traffic.kind = kind;
    c.channel.model = ChannelKind::FifoQueue;
    c.analysis.psd_mode = mode;
    let run = run_scenario(&c).unwrap();
    let s = noise_spectra(&run.records, run.summary.source_hz, &c.analysis)
        .unwrap()
        .unwrap();
    (s.relative_delay, s.delay_rate.unwrap())
}

fn spreading_lowers_low_frequencies() -> Outcome {
    let mut detail = String::new();
    let mut pass = true;
    for seed in [1, 2] {
        let (spread, _) = spectra(TrafficKind::Spread, seed, PsdMode::Index);
        let (onoff, _) = spectra(TrafficKind::OnOff, seed, PsdMode::Index);
        let (s, o) = (spread.low_band_mean(0.1), onoff.low_band_mean(0.1));
        pass &= s <= o;
        let _ = write!(detail, "seed {seed}: spread {s:.3e} vs on-off {o:.3e}; ");
    }
    Outcome::check(pass, format!("{detail}lowest-decile mean density of d(k) − d(0)"))
}

fn parseval() -> Outcome {
    let mut reports = Vec::new();
    for kind in [TrafficKind::Spread, TrafficKind::OnOff] {
        for mode in [PsdMode::Index, PsdMode::Time] {
            let (a, b) = spectra(kind, 1, mode);
            reports.push(a);
            reports.push(b);
        }
    }
    let worst = reports.iter().map(PsdReport::parseval_residual).fold(0.0, f64::max);

    // pure tone, rectangular window, integer periods
    let n = 512;
    let tone: Vec<f64> = (0..n * 16)
        .map(|i| (2.0 * std::f64::consts::PI * 37.0 * i as f64 / n as f64).sin())
        .collect();
    let rect = WelchParams {
        segment_len: n,
        overlap: 0.0,
        window: Window::Rectangular,
        detrend: Detrend::None,
    };
    let t = welch_psd(&tone, 1.0, &rect).unwrap();
    let share = t.density[37] * t.bin_width() / t.total_power();

    // white noise, Hann, ≥ 64 segments
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let sigma = 0.3;
    let noise: Vec<f64> = (0..256 * 100)
        .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let w = welch_psd(
        &noise,
        1.0,
        &WelchParams {
            segment_len: 256,
            ..WelchParams::default()
        },
    )
    .unwrap();
    let level = 2.0 * w.series_power;
    let flat = w.density[1..w.density.len() - 1]
        .iter()
        .all(|d| (10.0 * (d / level).log10()).abs() < 3.0);

    Outcome::check(
        worst <= 0.01 && share >= 0.99 && t.parseval_residual() <= 0.01 && flat && w.segments >= 64 && w.parseval_residual() <= 0.01,
        format!(
            "{} run spectra, worst residual {worst:.4}; tone share {share:.4}; white noise flat within 3 dB: {flat} over {} segments, residual {:.4}",
            reports.len(),
            w.segments,
            w.parseval_residual()
        ),
    )
}

fn determinism_and_golden() -> Outcome {
    let mut c = jittery(42);
    c.traffic.packets = 20_000;
    let configs = vec![c.clone(), c.clone(), c];
    let csv_with_threads = |threads: usize| -> Vec<String> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_matrix(&configs).unwrap())
            .iter()
            .map(|r| records_to_csv(&r.records).unwrap())
            .collect()
    };
    let one = csv_with_threads(1);
    let four = csv_with_threads(4);
    let identical = one.iter().chain(&four).all(|s| s == &one[0]);

    let golden_path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/default_seed1_500.csv");
    let mut small = ScenarioConfig::default();
    small.traffic.packets = 500;
    let fresh = records_to_csv(&run_scenario(&small).unwrap().records).unwrap();
    if std::env::var_os("SCFR_UPDATE_GOLDEN").is_some() {
        std::fs::write(golden_path, &fresh).unwrap();
    }
    let golden_ok = match std::fs::read_to_string(golden_path) {
        Ok(g) => g == fresh,
        Err(e) => {
            println!("  cannot read {golden_path}: {e}");
            false
        }
    };

    let d = ScenarioConfig::default();
    let defaults_ok = d.source.nominal_hz == 90_000.0
        && d.source.offset_ppm == 200.0
        && d.source.width_bits == 32
        && d.receiver.nominal_hz == 16_000_000.0
        && d.receiver.offset_ppm == -200.0
        && d.receiver.width_bits == 48
        && d.traffic.fps == 30.0
        && d.traffic.payload_bytes == 1460
        && (d.traffic.tx_rate_hz - 1800.36).abs() < 1e-9
        && d.estimators.rls_r0 == 16_000_000.0 / 90_000.0
        && d.estimators.rls_p0 == 10.0
        && d.estimators.pll_kp == 0.0001
        && d.estimators.pll_ki == 0.000001
        && d.estimators.pll_free_run_hz == 89_982.0
        && d.estimators.pll_arrival == PllArrival::Real;
    Outcome::check(
        identical && golden_ok && defaults_ok,
        format!("CSV identical across 1 and 4 threads: {identical}; golden CSV matches: {golden_ok}; defaults match: {defaults_ok}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (
            "RLS equals batch least squares on every prefix",
            rls_matches_batch_oracle,
        ),
        (
            "CR recursion equals cumulative sums bit-exactly",
            cr_matches_closed_form,
        ),
        ("noiseless CR exact to one tick", noiseless_exactness),
        ("CR error within delay-noise bound", cr_error_bound),
        ("CR and RLS beat the PLL", ordering_against_pll),
        ("IR bias under load-correlated delay", ir_bias),
        ("counter wrap-around invariance", wrap_invariance),
        (
            "frame spreading lowers low-frequency noise",
            spreading_lowers_low_frequencies,
        ),
        ("PSD Parseval and oracles", parseval),
        ("determinism and golden files", determinism_and_golden),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Outcome::check(false, "panicked"));
        if !outcome.pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {} [{:.2} s] {name}: {}",
            i + 1,
            if outcome.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
