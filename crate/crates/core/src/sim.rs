//! Slotted Monte-Carlo engine.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{update_queues, ChannelState, EnvSample, NetState, SlotDecision, SlotFlows};
use crate::policy::{Algorithm, Policy};
use crate::rate::RateKind;
use crate::scalar::Scalar;
use crate::scenario::Scenario;
use crate::utility::Utility;

/// Identifies the random-number generator and substream layout in output
/// metadata.
pub const RNG_DESCRIPTION: &str =
    "ChaCha8 (rand_chacha 0.9); stream = kind << 32 | entity, word offset = 2 * slot";

/// Source of per-slot harvest and channel states. Implementations may
/// look at the current state, which lets tests play adversary.
pub trait Environment<T: Scalar> {
    fn sample(&mut self, slot: u64, state: &NetState<T>) -> EnvSample<T>;
}

/// I.i.d. environment: each node harvests `0` or `e_max` with equal
/// probability, each channel entry is uniform over the domain levels.
///
/// Every `(quantity, entity, slot)` draw has its own position in the
/// generator's output, so samples do not depend on evaluation order.
#[derive(Debug, Clone)]
pub struct EnvProcess<T> {
    seed: u64,
    num_nodes: usize,
    harvest_max: T,
    levels: Vec<T>,
    /// Channel entries that are drawn; others stay zero.
    entries: Vec<(usize, usize)>,
}

const STREAM_HARVEST: u64 = 1;
const STREAM_CHANNEL: u64 = 2;

impl<T: Scalar> EnvProcess<T> {
    pub fn new(scenario: &Scenario<T>, seed: u64) -> Self {
        let net = &scenario.net;
        let n = net.num_nodes();
        let entries = if scenario.rate.kind == RateKind::InterferenceLog {
            // cross gains enter the interference term
            (0..n)
                .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
                .collect()
        } else {
            net.links().iter().map(|l| (l.from, l.to)).collect()
        };
        Self {
            seed,
            num_nodes: n,
            harvest_max: scenario.sys.harvest_max,
            levels: scenario.rate.domain.levels().to_vec(),
            entries,
        }
    }

    fn draw(&self, kind: u64, entity: u64, slot: u64) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(kind << 32 | entity);
        rng.set_word_pos(u128::from(slot) * 2);
        rng.next_u64()
    }
}

impl<T: Scalar> Environment<T> for EnvProcess<T> {
    fn sample(&mut self, slot: u64, _state: &NetState<T>) -> EnvSample<T> {
        let harvest = (0..self.num_nodes)
            .map(|n| {
                if self.draw(STREAM_HARVEST, n as u64, slot) >> 63 == 1 {
                    self.harvest_max
                } else {
                    T::zero()
                }
            })
            .collect();
        let mut channel = ChannelState::zeros(self.num_nodes);
        let k = self.levels.len() as u128;
        for &(a, b) in &self.entries {
            let entity = (a * self.num_nodes + b) as u64;
            let x = self.draw(STREAM_CHANNEL, entity, slot);
            let idx = ((u128::from(x) * k) >> 64) as usize;
            channel.set(a, b, self.levels[idx]);
        }
        EnvSample { harvest, channel }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSpec {
    pub horizon: u64,
    pub seed: u64,
    /// Keep per-slot records (needed for trace export).
    pub record: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord<T> {
    /// State at the start of the slot.
    pub state: NetState<T>,
    pub env: EnvSample<T>,
    pub decision: SlotDecision<T>,
    pub flows: SlotFlows<T>,
}

/// Final metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub horizon: u64,
    /// Sum of utilities of the time-average admitted rates.
    pub utility: f64,
    /// Time average of the per-slot utility sum.
    pub mean_slot_utility: f64,
    /// Stored over offered harvest energy at transmitting nodes, net of
    /// battery overflow. 1 when nothing was offered.
    pub energy_utilization: f64,
    /// Time-average admitted rate per utility pair, in iteration order of
    /// the scenario's utilities.
    pub admitted_rates: Vec<f64>,
    pub delivered: f64,
    pub max_backlog: f64,
    pub mean_backlog: f64,
    pub max_energy: f64,
}

#[derive(Debug, Clone)]
pub struct RunTrace<T> {
    pub algorithm: &'static str,
    pub metrics: RunMetrics,
    /// Empty unless recording was requested.
    pub records: Vec<SlotRecord<T>>,
    pub final_state: NetState<T>,
}

/// Runs `algorithm` on the scenario's i.i.d. environment.
pub fn run<T: Scalar>(
    scenario: &Scenario<T>,
    algorithm: &Algorithm,
    spec: RunSpec,
) -> Result<RunTrace<T>> {
    let mut policy = algorithm.build(scenario)?;
    let mut env = EnvProcess::new(scenario, spec.seed);
    run_with(scenario, policy.as_mut(), &mut env, spec)
}

/// The slot loop: sample, decide, check, update, record.
pub fn run_with<T: Scalar>(
    scenario: &Scenario<T>,
    policy: &mut dyn Policy<T>,
    env: &mut dyn Environment<T>,
    spec: RunSpec,
) -> Result<RunTrace<T>> {
    let (net, sys) = (&scenario.net, &scenario.sys);
    let f = net.num_flows();
    let bound = policy.queue_bound();
    let mut state = NetState::initial(net);
    let mut records = Vec::new();

    let pairs: Vec<(usize, usize)> = scenario.utility.iter().map(|(n, k, _)| (n, k)).collect();
    let mut admitted = vec![0.0; pairs.len()];
    let mut slot_utility = 0.0;
    let mut delivered = 0.0;
    let mut offered = 0.0;
    let mut kept = 0.0;
    let mut max_backlog: f64 = 0.0;
    let mut backlog_sum = 0.0;
    let mut max_energy: f64 = 0.0;
    let transmitters: Vec<usize> = (0..net.num_nodes())
        .filter(|&n| !net.out_links(n).is_empty())
        .collect();

    for slot in 0..spec.horizon {
        state.slot = slot;
        let sample = env.sample(slot, &state);
        let dec = policy.decide(&state, &sample)?;
        check_decision(scenario, &state, &dec)?;
        let (next, flows) = update_queues(net, sys, &state, &dec, &sample)?;

        let fail = |what: String| Error::Invariant {
            slot,
            what,
            dump: format!("{state:?}\n{dec:?}\n{sample:?}"),
        };
        if policy.keeps_battery_in_range() {
            for &n in &transmitters {
                if flows.overflow[n] > T::zero() {
                    return Err(fail(format!(
                        "battery of node {} would exceed capacity by {}",
                        net.label(n),
                        flows.overflow[n]
                    )));
                }
            }
        }
        if let Some(b) = bound {
            let tol = T::noise() * b.max(T::one());
            for (i, &q) in next.queues.iter().enumerate() {
                if q > b + tol {
                    return Err(fail(format!(
                        "backlog {q} at node {} flow {} exceeds bound {b}",
                        net.label(i / f),
                        net.label(net.flow_dest(i % f))
                    )));
                }
            }
        }

        for (i, &(n, k)) in pairs.iter().enumerate() {
            admitted[i] += dec.admit[n * f + k].as_f64();
        }
        slot_utility += scenario.utility.total(&dec.admit).as_f64();
        delivered += flows.delivered.iter().map(|x| x.as_f64()).sum::<f64>();
        for &n in &transmitters {
            offered += (sys.xi * sample.harvest[n]).as_f64();
            kept += (sys.xi * dec.harvest[n] - flows.overflow[n]).as_f64();
        }
        let total = next.total_backlog().as_f64();
        backlog_sum += total;
        for &q in &next.queues {
            max_backlog = max_backlog.max(q.as_f64());
        }
        for &e in &next.energy {
            max_energy = max_energy.max(e.as_f64());
        }

        if spec.record {
            records.push(SlotRecord {
                state: state.clone(),
                env: sample,
                decision: dec,
                flows,
            });
        }
        state = next;
    }

    let horizon = spec.horizon as f64;
    let (utility, mean_slot_utility, admitted_rates, mean_backlog) = if spec.horizon == 0 {
        (0.0, 0.0, vec![0.0; pairs.len()], 0.0)
    } else {
        let rates: Vec<f64> = admitted.iter().map(|a| a / horizon).collect();
        let u = scenario
            .utility
            .iter()
            .zip(&rates)
            .map(|((_, _, u), &r)| u.value(T::lit(r)).as_f64())
            .sum();
        (u, slot_utility / horizon, rates, backlog_sum / horizon)
    };
    Ok(RunTrace {
        algorithm: policy.name(),
        metrics: RunMetrics {
            seed: spec.seed,
            horizon: spec.horizon,
            utility,
            mean_slot_utility,
            energy_utilization: if offered > 0.0 { kept / offered } else { 1.0 },
            admitted_rates,
            delivered,
            max_backlog,
            mean_backlog,
            max_energy,
        },
        records,
        final_state: state,
    })
}

/// Structural checks on a decision before it is applied: admission and
/// peak-power ranges, energy availability, and scheduled rates within the
/// link rate.
fn check_decision<T: Scalar>(
    scenario: &Scenario<T>,
    state: &NetState<T>,
    dec: &SlotDecision<T>,
) -> Result<()> {
    let (net, sys) = (&scenario.net, &scenario.sys);
    let f = net.num_flows();
    let slack = |x: T| T::noise() * x.abs().max(T::one());
    let fail = |what: String| Error::Invariant {
        slot: state.slot,
        what,
        dump: format!("{state:?}\n{dec:?}"),
    };
    for (i, &r) in dec.admit.iter().enumerate() {
        if r < T::zero() || r > sys.r_max + slack(sys.r_max) {
            return Err(fail(format!(
                "admission {r} at node {} outside [0, R_max]",
                net.label(i / f)
            )));
        }
    }
    if dec.power.iter().any(|&p| p < T::zero()) {
        return Err(fail("negative power".into()));
    }
    for n in 0..net.num_nodes() {
        let spend = dec.node_power(net, n);
        if spend > sys.p_max + slack(sys.p_max) {
            return Err(fail(format!(
                "node {} transmits {spend} > P_max = {}",
                net.label(n),
                sys.p_max
            )));
        }
        let avail = sys.xi * sys.eta * state.energy[n];
        if spend > avail + slack(avail) {
            return Err(fail(format!(
                "node {} transmits {spend} with only {avail} available",
                net.label(n)
            )));
        }
    }
    for l in 0..net.num_links() {
        let sum = (0..f).fold(T::zero(), |a, k| a + dec.rate(l, k, f));
        if sum > dec.link_rate[l] + slack(dec.link_rate[l]) {
            return Err(fail(format!(
                "link {l} schedules {sum} over a rate of {}",
                dec.link_rate[l]
            )));
        }
    }
    Ok(())
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self {
                mean: 0.0,
                std: 0.0,
            };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub algorithm: Algorithm,
    pub horizon: u64,
    pub runs: usize,
    pub base_seed: u64,
    pub rng: String,
    pub utility: Stat,
    pub mean_slot_utility: Stat,
    pub energy_utilization: Stat,
    pub delivered: Stat,
    pub max_backlog: f64,
    pub per_run: Vec<RunMetrics>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnsembleOptions {
    /// Worker cap; `None` uses rayon's default.
    pub threads: Option<usize>,
    pub record: bool,
}

/// Runs `runs` independent replications with seeds `base_seed + i`.
/// Traces come back in run order.
pub fn run_ensemble<T: Scalar>(
    scenario: &Scenario<T>,
    algorithm: &Algorithm,
    horizon: u64,
    runs: usize,
    base_seed: u64,
    opts: EnsembleOptions,
) -> Result<(EnsembleSummary, Vec<RunTrace<T>>)> {
    if runs == 0 {
        return Err(Error::Param("an ensemble needs at least one run".into()));
    }
    // surface configuration errors once, before fanning out
    algorithm.build(scenario)?;
    let one = |i: usize| {
        let spec = RunSpec {
            horizon,
            seed: base_seed.wrapping_add(i as u64),
            record: opts.record,
        };
        run(scenario, algorithm, spec).map_err(|e| Error::Run {
            run: i,
            source: Box::new(e),
        })
    };
    let results: Vec<Result<RunTrace<T>>> = match opts.threads {
        Some(1) => (0..runs).map(one).collect(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Param(format!("thread pool: {e}")))?
            .install(|| (0..runs).into_par_iter().map(one).collect()),
        None => (0..runs).into_par_iter().map(one).collect(),
    };
    let traces = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((summarize(algorithm, horizon, base_seed, &traces), traces))
}

fn summarize<T>(
    algorithm: &Algorithm,
    horizon: u64,
    base_seed: u64,
    traces: &[RunTrace<T>],
) -> EnsembleSummary {
    let col =
        |f: fn(&RunMetrics) -> f64| -> Vec<f64> { traces.iter().map(|t| f(&t.metrics)).collect() };
    EnsembleSummary {
        algorithm: *algorithm,
        horizon,
        runs: traces.len(),
        base_seed,
        rng: RNG_DESCRIPTION.to_string(),
        utility: Stat::of(&col(|m| m.utility)),
        mean_slot_utility: Stat::of(&col(|m| m.mean_slot_utility)),
        energy_utilization: Stat::of(&col(|m| m.energy_utilization)),
        delivered: Stat::of(&col(|m| m.delivered)),
        max_backlog: col(|m| m.max_backlog).into_iter().fold(0.0, f64::max),
        per_run: traces.iter().map(|t| t.metrics.clone()).collect(),
    }
}
