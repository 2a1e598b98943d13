//! Network channel: turns stamped departures into receiver observations by
//! adding a per-packet delay and sampling the receiver counter at arrival.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};
use thiserror::Error;

use crate::clock::{ClockError, ClockModel, PacketObservation, SimTime};
use crate::traffic::StampedDeparture;

/// RNG stream used for delay sampling.
const DELAY_STREAM: u64 = 1;
/// RNG stream used for packet loss.
const LOSS_STREAM: u64 = 2;

/// Upper bound on the relative load term of [`DelayModel::LoadCorrelated`].
pub const MAX_LOAD_FACTOR: f64 = 100.0;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid delay model: {0}")]
    InvalidModel(String),
    #[error("loss rate must be in [0, 1), got {0}")]
    InvalidLossRate(f64),
    #[error("cannot transmit an empty schedule")]
    EmptySchedule,
    #[error("packet {seq} would arrive before time zero")]
    NegativeArrival { seq: u64 },
    #[error(transparent)]
    Clock(#[from] ClockError),
}

/// Per-packet delay process. All times are in seconds.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayModel {
    /// Every packet sees the same delay.
    Constant { delay_s: f64 },
    /// `base + Gamma(shape, scale)`, independent per packet.
    IidGamma { base_s: f64, shape: f64, scale_s: f64 },
    /// `d(k) = μ + ρ(d(k−1) − μ) + ε(k)`, ε ~ N(0, σ²), clipped at zero.
    Ar1Gaussian { mean_s: f64, rho: f64, sigma_s: f64 },
    /// Single FIFO server shared with Poisson cross traffic of fixed-size
    /// packets. The delay includes the packet's own service time.
    FifoQueue {
        base_s: f64,
        service_bytes_per_s: f64,
        cross_rate_pps: f64,
        cross_bytes: u32,
    },
    /// Gamma jitter plus a term proportional to the instantaneous packet
    /// rate: `base + Gamma(shape, scale) + gain · min(ref / idt(k), 100)`,
    /// where `idt(k)` is the true gap since the previous departure. The
    /// first packet uses a load factor of one.
    LoadCorrelated {
        base_s: f64,
        shape: f64,
        scale_s: f64,
        gain_s: f64,
        reference_interval_s: f64,
    },
}

impl DelayModel {
    pub fn kind(&self) -> &'static str {
        match self {
            DelayModel::Constant { .. } => "constant",
            DelayModel::IidGamma { .. } => "iid_gamma",
            DelayModel::Ar1Gaussian { .. } => "ar1_gaussian",
            DelayModel::FifoQueue { .. } => "fifo_queue",
            DelayModel::LoadCorrelated { .. } => "load_correlated",
        }
    }

    /// Every parameter problem, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut non_negative = |name: &str, x: f64| {
            if !(x.is_finite() && x >= 0.0) {
                v.push(format!("{name} must be finite and >= 0, got {x}"));
            }
        };
        match *self {
            DelayModel::Constant { delay_s } => non_negative("delay_s", delay_s),
            DelayModel::IidGamma { base_s, shape, scale_s } => {
                non_negative("base_s", base_s);
                non_negative("shape", shape);
                non_negative("scale_s", scale_s);
                if shape == 0.0 {
                    v.push("shape must be > 0".into());
                }
            }
            DelayModel::Ar1Gaussian { mean_s, rho, sigma_s } => {
                non_negative("sigma_s", sigma_s);
                if !mean_s.is_finite() {
                    v.push(format!("mean_s must be finite, got {mean_s}"));
                }
                if !(rho.is_finite() && rho.abs() < 1.0) {
                    v.push(format!("rho must satisfy |rho| < 1, got {rho}"));
                }
            }
            DelayModel::FifoQueue {
                base_s,
                service_bytes_per_s,
                cross_rate_pps,
                ..
            } => {
                non_negative("base_s", base_s);
                non_negative("cross_rate_pps", cross_rate_pps);
                if !(service_bytes_per_s.is_finite() && service_bytes_per_s > 0.0) {
                    v.push(format!("service_bytes_per_s must be > 0, got {service_bytes_per_s}"));
                }
            }
            DelayModel::LoadCorrelated {
                base_s,
                shape,
                scale_s,
                gain_s,
                reference_interval_s,
            } => {
                non_negative("base_s", base_s);
                non_negative("shape", shape);
                non_negative("scale_s", scale_s);
                non_negative("gain_s", gain_s);
                non_negative("reference_interval_s", reference_interval_s);
                if shape == 0.0 {
                    v.push("shape must be > 0".into());
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ChannelError::InvalidModel(v.join("; ")))
        }
    }
}

#[derive(Debug, Clone)]
struct QueueState {
    workload_s: f64,
    last_s: f64,
    next_cross_s: f64,
}

/// Stateful sampler for one realization of a [`DelayModel`].
#[derive(Debug, Clone)]
pub struct DelayProcess {
    model: DelayModel,
    rng: ChaCha8Rng,
    gamma: Option<Gamma<f64>>,
    ar_latent: f64,
    queue: Option<QueueState>,
    cross_gap: Option<Exp<f64>>,
    prev_departure: Option<SimTime>,
    clipped: u64,
}

impl DelayProcess {
    pub fn new(model: DelayModel, seed: u64) -> Result<Self, ChannelError> {
        model.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(DELAY_STREAM);
        let gamma = match model {
            DelayModel::IidGamma { shape, scale_s, .. } | DelayModel::LoadCorrelated { shape, scale_s, .. } => {
                Some(Gamma::new(shape, scale_s).map_err(|e| ChannelError::InvalidModel(e.to_string()))?)
            }
            _ => None,
        };
        let ar_latent = match model {
            DelayModel::Ar1Gaussian { mean_s, .. } => mean_s,
            _ => 0.0,
        };
        let (queue, cross_gap) = match model {
            DelayModel::FifoQueue { cross_rate_pps, .. } if cross_rate_pps > 0.0 => {
                let exp = Exp::new(cross_rate_pps).map_err(|e| ChannelError::InvalidModel(e.to_string()))?;
                let first = exp.sample(&mut rng);
                (
                    Some(QueueState {
                        workload_s: 0.0,
                        last_s: 0.0,
                        next_cross_s: first,
                    }),
                    Some(exp),
                )
            }
            DelayModel::FifoQueue { .. } => (
                Some(QueueState {
                    workload_s: 0.0,
                    last_s: 0.0,
                    next_cross_s: f64::INFINITY,
                }),
                None,
            ),
            _ => (None, None),
        };
        Ok(DelayProcess {
            model,
            rng,
            gamma,
            ar_latent,
            queue,
            cross_gap,
            prev_departure: None,
            clipped: 0,
        })
    }

    /// Number of negative raw samples that were clipped to zero so far.
    pub fn clipped(&self) -> u64 {
        self.clipped
    }

    /// Delay in seconds for a packet of `bytes` leaving at `departure`.
    /// Departures must be fed in non-decreasing order.
    pub fn sample(&mut self, departure: SimTime, bytes: u32) -> f64 {
        let raw = match self.model {
            DelayModel::Constant { delay_s } => delay_s,
            DelayModel::IidGamma { base_s, .. } => base_s + self.gamma.as_ref().expect("gamma").sample(&mut self.rng),
            DelayModel::Ar1Gaussian { mean_s, rho, sigma_s } => {
                let eps = if sigma_s > 0.0 {
                    Normal::new(0.0, sigma_s).expect("normal").sample(&mut self.rng)
                } else {
                    0.0
                };
                self.ar_latent = mean_s + rho * (self.ar_latent - mean_s) + eps;
                self.ar_latent
            }
            DelayModel::FifoQueue {
                base_s,
                service_bytes_per_s,
                cross_bytes,
                ..
            } => {
                let t = departure.as_secs_f64();
                let q = self.queue.as_mut().expect("queue state");
                while q.next_cross_s <= t {
                    q.workload_s = (q.workload_s - (q.next_cross_s - q.last_s)).max(0.0);
                    q.workload_s += f64::from(cross_bytes) / service_bytes_per_s;
                    q.last_s = q.next_cross_s;
                    let gap = self.cross_gap.as_ref().expect("cross traffic").sample(&mut self.rng);
                    q.next_cross_s += gap;
                }
                q.workload_s = (q.workload_s - (t - q.last_s)).max(0.0) + f64::from(bytes) / service_bytes_per_s;
                q.last_s = t;
                base_s + q.workload_s
            }
            DelayModel::LoadCorrelated {
                base_s,
                gain_s,
                reference_interval_s,
                ..
            } => {
                let load = match self.prev_departure {
                    None => 1.0,
                    Some(prev) => {
                        let gap = (departure - prev).as_secs_f64();
                        if gap > 0.0 {
                            (reference_interval_s / gap).min(MAX_LOAD_FACTOR)
                        } else {
                            MAX_LOAD_FACTOR
                        }
                    }
                };
                let jitter = self.gamma.as_ref().expect("gamma").sample(&mut self.rng);
                base_s + jitter + gain_s * load
            }
        };
        self.prev_departure = Some(departure);
        if raw < 0.0 {
            self.clipped += 1;
            0.0
        } else {
            raw
        }
    }
}

/// True parameters of a realized run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGroundTruth {
    /// `f_r / f_s` from the effective clock frequencies.
    pub ratio_r: f64,
    /// Receiver counter ticks per second.
    pub receiver_hz: f64,
    /// Source counter ticks per second.
    pub source_hz: f64,
    /// Constant part of the delay (seconds).
    pub offset_a: f64,
    /// `d(k)` in seconds, indexed by departure sequence number.
    pub delays: Vec<f64>,
    /// `a + min d(k)`.
    pub alpha: f64,
    /// `e(k) = d(k) − min d(k)`.
    pub noise_e: Vec<f64>,
    /// Departure instants, indexed by sequence number.
    pub departure_times: Vec<SimTime>,
    /// Arrival instants, indexed by sequence number.
    pub arrival_times: Vec<SimTime>,
    /// Delay samples that came out negative and were clipped to zero.
    pub clipped: u64,
}

impl ScenarioGroundTruth {
    /// `d̃(k) = d(k) − d(0)` for packet `seq`, relative to `reference`.
    pub fn relative_delay(&self, seq: u64, reference: u64) -> f64 {
        self.delays[seq as usize] - self.delays[reference as usize]
    }
}

/// Applies `model` to every departure, adds the offset `offset_a` seconds,
/// and samples the receiver counter (started at `receiver_initial` at time
/// zero) at each arrival. Observations come out in arrival order; ties keep
/// departure order.
pub fn transmit(
    departures: &[StampedDeparture],
    model: &DelayModel,
    source_clock: &ClockModel,
    receiver_clock: &ClockModel,
    receiver_initial: u64,
    offset_a: f64,
    seed: u64,
) -> Result<(Vec<PacketObservation>, ScenarioGroundTruth), ChannelError> {
    if departures.is_empty() {
        return Err(ChannelError::EmptySchedule);
    }
    let mut process = DelayProcess::new(model.clone(), seed)?;
    let offset = SimTime::from_secs_f64(offset_a)?;
    let mut delays = Vec::with_capacity(departures.len());
    let mut arrivals = Vec::with_capacity(departures.len());
    for dep in departures {
        let d = process.sample(dep.time, dep.bytes);
        let arrival = dep.time + offset + SimTime::from_secs_f64(d)?;
        if arrival < SimTime::ZERO {
            return Err(ChannelError::NegativeArrival { seq: dep.seq });
        }
        delays.push(d);
        arrivals.push(arrival);
    }

    let mut order: Vec<usize> = (0..departures.len()).collect();
    order.sort_by_key(|&i| (arrivals[i], i));

    let mut counter = receiver_clock.counter_at(receiver_initial)?;
    let mut now = SimTime::ZERO;
    let mut observations = Vec::with_capacity(order.len());
    for &i in &order {
        counter.advance_by(receiver_clock, arrivals[i] - now)?;
        now = arrivals[i];
        observations.push(PacketObservation {
            seq: departures[i].seq,
            ts_ticks: departures[i].ts_ticks,
            arrival_ticks: receiver_clock.snapshot_timestamp(&counter),
        });
    }

    let min_d = delays.iter().copied().fold(f64::INFINITY, f64::min);
    let truth = ScenarioGroundTruth {
        ratio_r: receiver_clock.effective_micro_hz() as f64 / source_clock.effective_micro_hz() as f64,
        receiver_hz: receiver_clock.effective_hz(),
        source_hz: source_clock.effective_hz(),
        offset_a,
        alpha: offset_a + min_d,
        noise_e: delays.iter().map(|d| d - min_d).collect(),
        delays,
        departure_times: departures.iter().map(|d| d.time).collect(),
        arrival_times: arrivals,
        clipped: process.clipped(),
    };
    Ok((observations, truth))
}

/// Removes each observation independently with probability `loss_rate`.
pub fn drop_packets(
    observations: &[PacketObservation],
    loss_rate: f64,
    seed: u64,
) -> Result<Vec<PacketObservation>, ChannelError> {
    if !(0.0..1.0).contains(&loss_rate) {
        return Err(ChannelError::InvalidLossRate(loss_rate));
    }
    if loss_rate == 0.0 {
        return Ok(observations.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(LOSS_STREAM);
    Ok(observations
        .iter()
        .filter(|_| !rng.gen_bool(loss_rate))
        .copied()
        .collect())
}
