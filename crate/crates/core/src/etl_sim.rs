//! Discrete-event simulation of a sensor pub/sub pipeline: Poisson publishers,
//! one FIFO service queue, and a store stage that loads served messages into
//! the spatial index.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::geometry::{BoundingBox, Point, SiteId};
use crate::spatial_index::{IndexError, OrderedIndex, DEFAULT_PAGE_CAPACITY};
use crate::zcurve::{GridQuantizer, ZCurveError, DEFAULT_BITS};

/// Smallest expected count per chi-square bin; sparser bins are pooled.
pub const MIN_EXPECTED_PER_BIN: f64 = 5.0;
pub const MIN_FIT_INTERVALS: usize = 30;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("utilization {0} is at or above 1")]
    UtilizationAtOrAboveOne(f64),
    #[error("invalid traffic parameter {0}")]
    InvalidParams(String),
    #[error("count {0} is negative")]
    NegativeCount(i64),
    #[error("aggregate utilization {0} is at or above 1")]
    ConfigUtilizationTooHigh(f64),
    #[error("invalid config field {0}")]
    InvalidConfig(String),
    #[error("need at least {need} unit intervals for a fit, got {got}")]
    InsufficientSamples { got: usize, need: usize },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Grid(#[from] ZCurveError),
}

/// Inputs to the sojourn approximation. Times in seconds, variances in s².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficParams {
    pub rho: f64,
    pub t_bar: f64,
    pub a_bar: f64,
    pub var_a: f64,
    pub var_s: f64,
}

impl TrafficParams {
    /// M/M/1 parameterisation: exponential gaps and service.
    pub fn mm1(lambda: f64, t_bar: f64) -> Self {
        let a_bar = 1.0 / lambda;
        Self {
            rho: lambda * t_bar,
            t_bar,
            a_bar,
            var_a: a_bar * a_bar,
            var_s: t_bar * t_bar,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |name: &str, v: f64| Err(SimError::InvalidParams(format!("{name} = {v}")));
        if !(self.rho >= 0.0) {
            return bad("rho", self.rho);
        }
        if self.rho >= 1.0 {
            return Err(SimError::UtilizationAtOrAboveOne(self.rho));
        }
        if !(self.t_bar > 0.0 && self.t_bar.is_finite()) {
            return bad("t_bar", self.t_bar);
        }
        if !(self.a_bar > 0.0 && self.a_bar.is_finite()) {
            return bad("a_bar", self.a_bar);
        }
        if !(self.var_a >= 0.0 && self.var_a.is_finite()) {
            return bad("var_a", self.var_a);
        }
        if !(self.var_s >= 0.0 && self.var_s.is_finite()) {
            return bad("var_s", self.var_s);
        }
        Ok(())
    }
}

/// Which denominator the third factor of the sojourn formula uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KingmanForm {
    /// `a_bar² + var_s`.
    #[default]
    AsPrinted,
    /// `a_bar² + var_a`.
    ArrivalVariance,
}

/// Mean sojourn (waiting plus service) of a single-server queue:
///
/// `ρ·t̄ / (2(1−ρ)) · (σa² + σs²)/t̄² · (t̄² + σs²)/(ā² + σs²) + t̄`
pub fn kingman_sojourn(p: &TrafficParams) -> Result<f64, SimError> {
    kingman_sojourn_with(p, KingmanForm::AsPrinted)
}

pub fn kingman_sojourn_with(p: &TrafficParams, form: KingmanForm) -> Result<f64, SimError> {
    p.validate()?;
    let t2 = p.t_bar * p.t_bar;
    let denom = p.a_bar * p.a_bar
        + match form {
            KingmanForm::AsPrinted => p.var_s,
            KingmanForm::ArrivalVariance => p.var_a,
        };
    let wait = p.rho * p.t_bar / (2.0 * (1.0 - p.rho))
        * ((p.var_a + p.var_s) / t2)
        * ((t2 + p.var_s) / denom);
    Ok(wait + p.t_bar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalModel {
    pub lambda: f64,
}

impl ArrivalModel {
    pub fn new(lambda: f64) -> Result<Self, SimError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(SimError::InvalidParams(format!("lambda = {lambda}")));
        }
        Ok(Self { lambda })
    }
}

/// `e^{−λ} λ^x / x!`, evaluated in log space.
pub fn poisson_pmf(model: ArrivalModel, x: i64) -> Result<f64, SimError> {
    if x < 0 {
        return Err(SimError::NegativeCount(x));
    }
    let lambda = model.lambda;
    if x == 0 {
        return Ok((-lambda).exp());
    }
    let xf = x as f64;
    Ok((xf * lambda.ln() - lambda - statrs::function::gamma::ln_gamma(xf + 1.0)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PublisherKind {
    #[default]
    Poisson,
    /// Fixed gaps of `1/lambda` with a seeded phase.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublisherConfig {
    pub site_id: SiteId,
    pub x: f64,
    pub y: f64,
    pub lambda: f64,
    #[serde(default)]
    pub kind: PublisherKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceDist {
    Exponential { mean: f64 },
    Deterministic { value: f64 },
    Lognormal { mean: f64, variance: f64 },
}

impl ServiceDist {
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { mean } | Self::Lognormal { mean, .. } => mean,
            Self::Deterministic { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Exponential { mean } => mean * mean,
            Self::Deterministic { .. } => 0.0,
            Self::Lognormal { variance, .. } => variance,
        }
    }

    fn sampler(&self) -> Result<ServiceSampler, SimError> {
        let bad = |f: &str| SimError::InvalidConfig(format!("service.{f}: must be positive"));
        match *self {
            Self::Exponential { mean } => {
                if !(mean > 0.0 && mean.is_finite()) {
                    return Err(bad("mean"));
                }
                Ok(ServiceSampler::Exp(
                    Exp::new(1.0 / mean).map_err(|_| bad("mean"))?,
                ))
            }
            Self::Deterministic { value } => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(bad("value"));
                }
                Ok(ServiceSampler::Fixed(value))
            }
            Self::Lognormal { mean, variance } => {
                if !(mean > 0.0 && mean.is_finite()) {
                    return Err(bad("mean"));
                }
                if !(variance >= 0.0 && variance.is_finite()) {
                    return Err(SimError::InvalidConfig(
                        "service.variance: must be non-negative".into(),
                    ));
                }
                let s2 = (1.0 + variance / (mean * mean)).ln();
                let mu = mean.ln() - s2 / 2.0;
                Ok(ServiceSampler::LogNormal(
                    LogNormal::new(mu, s2.sqrt()).map_err(|_| bad("variance"))?,
                ))
            }
        }
    }
}

enum ServiceSampler {
    Exp(Exp<f64>),
    Fixed(f64),
    LogNormal(LogNormal<f64>),
}

impl ServiceSampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Exp(d) => d.sample(rng),
            Self::Fixed(v) => *v,
            Self::LogNormal(d) => d.sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "box")]
    pub world_box: [f64; 4],
    #[serde(default = "default_bits")]
    pub bits: u8,
    #[serde(default = "default_capacity")]
    pub page_capacity: usize,
}

fn default_bits() -> u8 {
    DEFAULT_BITS
}
fn default_capacity() -> usize {
    DEFAULT_PAGE_CAPACITY
}
fn default_version() -> u32 {
    1
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            world_box: [0.0, 0.0, 1000.0, 1000.0],
            bits: DEFAULT_BITS,
            page_capacity: DEFAULT_PAGE_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub publishers: Vec<PublisherConfig>,
    pub service: ServiceDist,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    /// Spacing of queue-length samples; defaults to a hundredth of the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_sample_interval_s: Option<f64>,
    #[serde(default)]
    pub kingman_form: KingmanForm,
}

impl PipelineConfig {
    /// One Poisson publisher at the box centre with exponential service.
    pub fn mm1(lambda: f64, t_bar: f64, duration_s: f64, seed: u64) -> Self {
        let grid = GridConfig::default();
        let [x0, y0, x1, y1] = grid.world_box;
        Self {
            version: 1,
            publishers: vec![PublisherConfig {
                site_id: 0,
                x: (x0 + x1) / 2.0,
                y: (y0 + y1) / 2.0,
                lambda,
                kind: PublisherKind::Poisson,
            }],
            service: ServiceDist::Exponential { mean: t_bar },
            duration_s,
            seed,
            grid,
            queue_sample_interval_s: None,
            kingman_form: KingmanForm::AsPrinted,
        }
    }

    pub fn aggregate_lambda(&self) -> f64 {
        self.publishers.iter().map(|p| p.lambda).sum()
    }

    /// Queue parameters implied by the config: `ρ = Λ·t̄`, `ā = 1/Λ`. The
    /// merged stream counts as Poisson unless it is one periodic publisher.
    pub fn traffic_params(&self) -> TrafficParams {
        let lambda = self.aggregate_lambda();
        let a_bar = 1.0 / lambda;
        let single_periodic =
            self.publishers.len() == 1 && self.publishers[0].kind == PublisherKind::Periodic;
        TrafficParams {
            rho: lambda * self.service.mean(),
            t_bar: self.service.mean(),
            a_bar,
            var_a: if single_periodic { 0.0 } else { a_bar * a_bar },
            var_s: self.service.variance(),
        }
    }

    pub fn quantizer(&self) -> Result<GridQuantizer, SimError> {
        let [x0, y0, x1, y1] = self.grid.world_box;
        let b = BoundingBox::from_coords(x0, y0, x1, y1)
            .map_err(|e| SimError::InvalidConfig(format!("grid.box: {e}")))?;
        Ok(GridQuantizer::new(b, self.grid.bits)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.version != 1 {
            return Err(SimError::InvalidConfig(format!(
                "version: unsupported value {}",
                self.version
            )));
        }
        if self.publishers.is_empty() {
            return Err(SimError::InvalidConfig(
                "publishers: at least one required".into(),
            ));
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err(SimError::InvalidConfig(
                "duration_s: must be non-negative".into(),
            ));
        }
        if let Some(dt) = self.queue_sample_interval_s {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(SimError::InvalidConfig(
                    "queue_sample_interval_s: must be positive".into(),
                ));
            }
        }
        let q = self.quantizer()?;
        for (i, p) in self.publishers.iter().enumerate() {
            if !(p.lambda > 0.0 && p.lambda.is_finite()) {
                return Err(SimError::InvalidConfig(format!(
                    "publishers[{i}].lambda: must be positive"
                )));
            }
            if !q.world_box.contains(Point::new(p.x, p.y)) {
                return Err(SimError::InvalidConfig(format!(
                    "publishers[{i}]: position ({}, {}) outside grid.box",
                    p.x, p.y
                )));
            }
        }
        self.service.sampler()?;
        let rho = self.traffic_params().rho;
        if rho >= 1.0 {
            return Err(SimError::ConfigUtilizationTooHigh(rho));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueSample {
    pub t: f64,
    pub in_system: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub duration_s: f64,
    pub published: u64,
    pub served: u64,
    pub stored: u64,
    pub in_queue_at_end: u64,
    pub mean_sojourn_s: f64,
    pub kingman_prediction_s: f64,
    pub rho: f64,
    /// Time-averaged number of messages in the system.
    pub mean_in_system: f64,
    /// Entry `x` counts the unit intervals that saw exactly `x` arrivals.
    pub arrival_histogram: Vec<u64>,
    /// Stored records per Morton cell key.
    pub per_cell_counts: BTreeMap<u64, u64>,
    pub queue_series: Vec<QueueSample>,
}

impl SimReport {
    pub fn intervals(&self) -> u64 {
        self.arrival_histogram.iter().sum()
    }
}

#[derive(Debug)]
pub struct SimRun {
    pub report: SimReport,
    pub index: OrderedIndex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    t: f64,
    /// Departures sort before arrivals at the same instant.
    class: u8,
    seq: u64,
    publisher: usize,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.class.cmp(&other.class))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const DEPARTURE: u8 = 0;
const ARRIVAL: u8 = 1;

struct Message {
    seq: u64,
    publisher: usize,
    arrived: f64,
}

pub fn run_simulation(config: &PipelineConfig) -> Result<SimReport, SimError> {
    simulate(config).map(|r| r.report)
}

/// Runs the pipeline and returns the report together with the loaded index.
pub fn simulate(config: &PipelineConfig) -> Result<SimRun, SimError> {
    config.validate()?;
    let quantizer = config.quantizer()?;
    let mut index = OrderedIndex::with_capacity(quantizer, config.grid.page_capacity)?;
    let params = config.traffic_params();
    let prediction = kingman_sojourn_with(&params, config.kingman_form)?;
    let service = config.service.sampler()?;
    let duration = config.duration_s;

    let mut service_rng = ChaCha8Rng::seed_from_u64(config.seed);
    service_rng.set_stream(1);
    let mut pub_rngs: Vec<ChaCha8Rng> = (0..config.publishers.len())
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(config.seed);
            r.set_stream(2 + i as u64);
            r
        })
        .collect();
    let gaps: Vec<Exp<f64>> = config
        .publishers
        .iter()
        .map(|p| Exp::new(p.lambda).expect("validated lambda"))
        .collect();

    let mut heap: BinaryHeap<Reverse<Event>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |heap: &mut BinaryHeap<Reverse<Event>>, t: f64, class: u8, publisher: usize| {
        seq += 1;
        heap.push(Reverse(Event {
            t,
            class,
            seq,
            publisher,
        }));
    };
    for (i, p) in config.publishers.iter().enumerate() {
        let first = match p.kind {
            PublisherKind::Poisson => gaps[i].sample(&mut pub_rngs[i]),
            PublisherKind::Periodic => pub_rngs[i].random::<f64>() / p.lambda,
        };
        if first < duration {
            push(&mut heap, first, ARRIVAL, i);
        }
    }

    let n_intervals = duration.floor() as usize;
    let mut interval_counts = vec![0u64; n_intervals];
    let sample_dt = config.queue_sample_interval_s.unwrap_or(if duration > 0.0 {
        duration / 100.0
    } else {
        1.0
    });
    let mut queue_series = Vec::new();
    let mut next_sample = 0usize;

    let mut waiting: VecDeque<Message> = VecDeque::new();
    let mut in_service: Option<Message> = None;
    let mut published = 0u64;
    let mut served = 0u64;
    let mut sojourn_sum = 0.0;
    let mut area = 0.0;
    let mut last_t = 0.0;
    let mut per_cell: BTreeMap<u64, u64> = BTreeMap::new();

    let in_system = |w: &VecDeque<Message>, s: &Option<Message>| w.len() + usize::from(s.is_some());

    while let Some(Reverse(ev)) = heap.pop() {
        if ev.t > duration {
            break;
        }
        let n = in_system(&waiting, &in_service);
        while (next_sample as f64) * sample_dt < ev.t {
            queue_series.push(QueueSample {
                t: next_sample as f64 * sample_dt,
                in_system: n,
            });
            next_sample += 1;
        }
        area += n as f64 * (ev.t - last_t);
        last_t = ev.t;

        if ev.class == ARRIVAL {
            let i = ev.publisher;
            published += 1;
            let bucket = ev.t.floor() as usize;
            if bucket < n_intervals {
                interval_counts[bucket] += 1;
            }
            let msg = Message {
                seq: published,
                publisher: i,
                arrived: ev.t,
            };
            if in_service.is_none() {
                in_service = Some(msg);
                push(
                    &mut heap,
                    ev.t + service.sample(&mut service_rng),
                    DEPARTURE,
                    0,
                );
            } else {
                waiting.push_back(msg);
            }
            let p = &config.publishers[i];
            let gap = match p.kind {
                PublisherKind::Poisson => gaps[i].sample(&mut pub_rngs[i]),
                PublisherKind::Periodic => 1.0 / p.lambda,
            };
            let next = ev.t + gap;
            if next < duration {
                push(&mut heap, next, ARRIVAL, i);
            }
        } else {
            let msg = in_service
                .take()
                .expect("departure without a message in service");
            served += 1;
            sojourn_sum += ev.t - msg.arrived;
            let p = &config.publishers[msg.publisher];
            let key = index.insert_reading(
                p.site_id,
                Point::new(p.x, p.y),
                (msg.arrived * 1e6).round() as u64,
                msg.seq.to_le_bytes().to_vec(),
            )?;
            *per_cell.entry(key.0).or_default() += 1;
            if let Some(next) = waiting.pop_front() {
                in_service = Some(next);
                push(
                    &mut heap,
                    ev.t + service.sample(&mut service_rng),
                    DEPARTURE,
                    0,
                );
            }
        }
    }

    let n = in_system(&waiting, &in_service);
    while (next_sample as f64) * sample_dt <= duration {
        queue_series.push(QueueSample {
            t: next_sample as f64 * sample_dt,
            in_system: n,
        });
        next_sample += 1;
    }
    area += n as f64 * (duration - last_t);

    let mut arrival_histogram = Vec::new();
    for &c in &interval_counts {
        let c = c as usize;
        if c >= arrival_histogram.len() {
            arrival_histogram.resize(c + 1, 0);
        }
        arrival_histogram[c] += 1;
    }

    let report = SimReport {
        seed: config.seed,
        duration_s: duration,
        published,
        served,
        stored: index.len() as u64,
        in_queue_at_end: published - served,
        mean_sojourn_s: if served > 0 {
            sojourn_sum / served as f64
        } else {
            0.0
        },
        kingman_prediction_s: prediction,
        rho: params.rho,
        mean_in_system: if duration > 0.0 { area / duration } else { 0.0 },
        arrival_histogram,
        per_cell_counts: per_cell,
        queue_series,
    };
    Ok(SimRun { report, index })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub intervals: u64,
    /// Pooled bins as `[first_count, last_count]`; the last bin is open-ended.
    pub bins: Vec<[u64; 2]>,
}

impl FitResult {
    pub fn rejected_at(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

pub fn arrival_fit(report: &SimReport, model: ArrivalModel) -> Result<FitResult, SimError> {
    arrival_fit_histogram(&report.arrival_histogram, model)
}

/// Pearson chi-square of a count histogram against the Poisson pmf. Adjacent
/// bins are pooled until each expects at least five intervals, the top bin
/// absorbs the upper tail, and `df = bins − 1`.
pub fn arrival_fit_histogram(
    histogram: &[u64],
    model: ArrivalModel,
) -> Result<FitResult, SimError> {
    let n: u64 = histogram.iter().sum();
    if (n as usize) < MIN_FIT_INTERVALS {
        return Err(SimError::InsufficientSamples {
            got: n as usize,
            need: MIN_FIT_INTERVALS,
        });
    }
    let nf = n as f64;
    let observed = |x: usize| histogram.get(x).copied().unwrap_or(0);

    // (first, last, expected, observed); the final bin stays open-ended.
    let mut bins: Vec<(u64, u64, f64, u64)> = Vec::new();
    let mut cur = (0u64, 0.0f64, 0u64);
    let mut cdf = 0.0;
    let mut x = 0usize;
    loop {
        let p = poisson_pmf(model, x as i64)?;
        cdf += p;
        cur.1 += nf * p;
        cur.2 += observed(x);
        let tail = nf * (1.0 - cdf).max(0.0);
        let beyond_data = x + 1 >= histogram.len();
        if cur.1 >= MIN_EXPECTED_PER_BIN && tail >= MIN_EXPECTED_PER_BIN {
            bins.push((cur.0, x as u64, cur.1, cur.2));
            cur = (x as u64 + 1, 0.0, 0);
        } else if tail < MIN_EXPECTED_PER_BIN && beyond_data {
            let rest: u64 = histogram.iter().skip(x + 1).sum();
            bins.push((cur.0, u64::MAX, cur.1 + tail, cur.2 + rest));
            break;
        }
        x += 1;
    }
    // A final bin that still expects too little merges into its neighbour.
    while bins.len() > 1 && bins[bins.len() - 1].2 < MIN_EXPECTED_PER_BIN {
        let last = bins.pop().expect("non-empty");
        let prev = bins.last_mut().expect("non-empty");
        prev.1 = last.1;
        prev.2 += last.2;
        prev.3 += last.3;
    }

    let statistic: f64 = bins
        .iter()
        .map(|&(_, _, e, o)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum();
    let df = bins.len().saturating_sub(1);
    let p_value = if df == 0 {
        1.0
    } else {
        ChiSquared::new(df as f64)
            .expect("positive df")
            .sf(statistic)
    };
    Ok(FitResult {
        statistic,
        degrees_of_freedom: df,
        p_value,
        intervals: n,
        bins: bins.iter().map(|&(a, b, _, _)| [a, b]).collect(),
    })
}
