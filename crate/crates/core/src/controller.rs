//! Per-slot online control: admission, perturbed-backpressure power
//! allocation and MaxWeight scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    AlgorithmParams, ChannelState, EnvSample, NetState, NetworkSpec, SlotDecision, SystemParams,
};
use crate::policy::Policy;
use crate::rate::{RateKind, RatePowerModel};
use crate::scalar::Scalar;
use crate::scenario::Scenario;
use crate::utility::{Utility, UtilitySpec};

/// Perturbed backpressure weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkWeights<T> {
    /// `[Q_n^c - Q_m^c - Theta]^+`, row-major `(link, flow)`.
    pub per_flow: Vec<T>,
    /// Max over flows.
    pub link: Vec<T>,
    /// Flow attaining the max (smallest index on ties).
    pub best_flow: Vec<usize>,
    num_flows: usize,
}

impl<T: Scalar> LinkWeights<T> {
    pub fn flow_weight(&self, l: usize, k: usize) -> T {
        self.per_flow[l * self.num_flows + k]
    }

    pub fn num_flows(&self) -> usize {
        self.num_flows
    }
}

/// Solves `max V U(R) - Q R` on `[0, R_max]` for every `(node, flow)` with a
/// utility. Returns admissions row-major `(node, flow)`.
pub fn admit_data<T: Scalar>(
    net: &NetworkSpec,
    state: &NetState<T>,
    util: &UtilitySpec<T>,
    v: T,
    r_max: T,
) -> Result<Vec<T>> {
    if !(v > T::zero()) {
        return Err(Error::Param(format!("V must be positive, got {v}")));
    }
    let f = net.num_flows();
    let mut admit = vec![T::zero(); net.num_nodes() * f];
    for (n, k, u) in util.iter() {
        admit[n * f + k] = u
            .best_admission(v, state.q(n, k), r_max)
            .ok_or(Error::NonConcaveUtility { node: n, flow: k })?;
    }
    Ok(admit)
}

pub fn compute_weights<T: Scalar>(
    net: &NetworkSpec,
    state: &NetState<T>,
    theta: T,
) -> LinkWeights<T> {
    let f = net.num_flows();
    let mut per_flow = vec![T::zero(); net.num_links() * f];
    let mut link = vec![T::zero(); net.num_links()];
    let mut best_flow = vec![0; net.num_links()];
    for (l, lk) in net.links().iter().enumerate() {
        for k in 0..f {
            let w = (state.q(lk.from, k) - state.q(lk.to, k) - theta).pos();
            per_flow[l * f + k] = w;
            if w > link[l] {
                link[l] = w;
                best_flow[l] = k;
            }
        }
    }
    LinkWeights {
        per_flow,
        link,
        best_flow,
        num_flows: f,
    }
}

/// Per-node price `(eta/xi)(E_n - Gamma)` on transmit power.
pub fn energy_prices<T: Scalar>(
    energy: &[T],
    alg: &AlgorithmParams<T>,
    sys: &SystemParams<T>,
) -> Vec<T> {
    let w = sys.eta / sys.xi;
    energy.iter().map(|&e| w * (e - alg.gamma)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation<T> {
    pub power: Vec<T>,
    pub rates: Vec<T>,
}

/// `sum_l W_l mu_l(P) + sum_n price_n * sum_{l out of n} P_l`.
pub fn power_objective<T: Scalar>(
    net: &NetworkSpec,
    model: &RatePowerModel<T>,
    channel: &ChannelState<T>,
    link_weights: &[T],
    prices: &[T],
    power: &[T],
) -> T {
    let rates = model.rates_unchecked(net, channel, power);
    net.links()
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (l, lk)| {
            acc + link_weights[l] * rates[l] + prices[lk.from] * power[l]
        })
}

/// Power allocation of the proposed controller. The energy-availability
/// constraint is not part of the feasible set; only the per-node peak
/// power constraint is.
pub fn allocate_power<T: Scalar>(
    net: &NetworkSpec,
    model: &RatePowerModel<T>,
    channel: &ChannelState<T>,
    weights: &LinkWeights<T>,
    energy: &[T],
    alg: &AlgorithmParams<T>,
    sys: &SystemParams<T>,
) -> Result<PowerAllocation<T>> {
    let prices = energy_prices(energy, alg, sys);
    allocate_power_priced(net, model, channel, &weights.link, &prices, sys.p_max)
}

/// Maximizes [`power_objective`] subject to `0 <= sum_{l out of n} P_l <= p_max`.
pub fn allocate_power_priced<T: Scalar>(
    net: &NetworkSpec,
    model: &RatePowerModel<T>,
    channel: &ChannelState<T>,
    link_weights: &[T],
    prices: &[T],
    p_max: T,
) -> Result<PowerAllocation<T>> {
    let mut power = vec![T::zero(); net.num_links()];
    match model.kind {
        RateKind::LinearGain => {
            for n in 0..net.num_nodes() {
                let mut best: Option<(usize, T)> = None;
                for &l in net.out_links(n) {
                    let lk = net.link(l);
                    let kappa = link_weights[l] * channel.gain(lk.from, lk.to) + prices[n];
                    if best.is_none_or(|(_, b)| kappa > b) {
                        best = Some((l, kappa));
                    }
                }
                if let Some((l, kappa)) = best {
                    if kappa > T::zero() {
                        power[l] = p_max;
                    }
                }
            }
        }
        RateKind::OrthogonalLog => {
            for n in 0..net.num_nodes() {
                let outs = net.out_links(n);
                if outs.is_empty() {
                    continue;
                }
                let w: Vec<T> = outs.iter().map(|&l| link_weights[l]).collect();
                let a: Vec<T> = outs
                    .iter()
                    .map(|&l| {
                        let lk = net.link(l);
                        channel.gain(lk.from, lk.to) / model.noise_variance
                    })
                    .collect();
                for (&l, p) in outs.iter().zip(water_fill(&w, &a, prices[n], p_max)) {
                    power[l] = p;
                }
            }
        }
        RateKind::InterferenceLog => {
            power = coordinate_ascent(net, model, channel, link_weights, prices, p_max)?;
        }
    }
    let rates = model.rates_unchecked(net, channel, &power);
    Ok(PowerAllocation { power, rates })
}

/// Maximizes `sum_i w_i ln(1 + a_i p_i) + c sum_i p_i` over the simplex
/// `{p >= 0, sum p <= p_max}` by bisection on the budget multiplier.
fn water_fill<T: Scalar>(w: &[T], a: &[T], c: T, p_max: T) -> Vec<T> {
    let mut p = vec![T::zero(); w.len()];
    let active: Vec<usize> = (0..w.len())
        .filter(|&i| w[i] > T::zero() && a[i] > T::zero())
        .collect();
    if active.is_empty() {
        if c > T::zero() && !p.is_empty() {
            p[0] = p_max;
        }
        return p;
    }
    let fill = |lambda: T, p: &mut [T]| -> T {
        let gap = lambda - c;
        let mut total = T::zero();
        for &i in &active {
            p[i] = (w[i] / gap - T::one() / a[i]).pos();
            total = total + p[i];
        }
        total
    };
    if c < T::zero() && fill(T::zero(), &mut p) <= p_max {
        return p;
    }
    let mut lo = c.max(T::zero());
    let peak = active.iter().map(|&i| w[i] * a[i]).fold(T::zero(), T::max);
    let mut hi = lo + peak;
    for _ in 0..300 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if fill(mid, &mut p) > p_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let total = fill(hi, &mut p);
    // the budget binds here; hand the bisection residue to the active links
    if total > T::zero() {
        let scale = p_max / total;
        for &i in &active {
            p[i] = p[i] * scale;
        }
    } else {
        p[active[0]] = p_max;
    }
    p
}

const CA_RESTARTS: usize = 8;
const CA_MAX_SWEEPS: usize = 500;
const CA_TOL: f64 = 1e-8;
const CA_SEED: u64 = 0x00c0_0d1a_7e5e_ed00;

/// Multi-start coordinate ascent for the coupled (interference) objective.
/// Moves are single-link updates within the node's remaining budget and
/// pairwise transfers between two out-links of the same node.
fn coordinate_ascent<T: Scalar>(
    net: &NetworkSpec,
    model: &RatePowerModel<T>,
    channel: &ChannelState<T>,
    link_weights: &[T],
    prices: &[T],
    p_max: T,
) -> Result<Vec<T>> {
    let objective = |p: &[T]| power_objective(net, model, channel, link_weights, prices, p);
    let mut rng = ChaCha8Rng::seed_from_u64(CA_SEED);
    let nl = net.num_links();

    let mut starts = vec![vec![T::zero(); nl]];
    let mut even = vec![T::zero(); nl];
    for n in 0..net.num_nodes() {
        let outs = net.out_links(n);
        for &l in outs {
            even[l] = p_max / T::from_usize(outs.len()).unwrap();
        }
    }
    starts.push(even);
    for _ in 0..CA_RESTARTS {
        let mut p = vec![T::zero(); nl];
        for n in 0..net.num_nodes() {
            let outs = net.out_links(n);
            if outs.is_empty() {
                continue;
            }
            let total = p_max * T::lit(rng.random::<f64>());
            let w: Vec<f64> = outs.iter().map(|_| rng.random::<f64>()).collect();
            let sum: f64 = w.iter().sum::<f64>().max(1e-12);
            for (&l, wi) in outs.iter().zip(&w) {
                p[l] = total * T::lit(wi / sum);
            }
        }
        starts.push(p);
    }

    let mut best: Option<(T, Vec<T>)> = None;
    for mut p in starts {
        let mut value = objective(&p);
        let mut converged = false;
        let mut last_gain = T::zero();
        for _ in 0..CA_MAX_SWEEPS {
            let before = value;
            for l in 0..nl {
                let n = net.link(l).from;
                let others = net
                    .out_links(n)
                    .iter()
                    .filter(|&&o| o != l)
                    .fold(T::zero(), |acc, &o| acc + p[o]);
                let room = (p_max - others).pos();
                let (t, v) = maximize_1d(room, |t| {
                    let mut q = p.clone();
                    q[l] = t;
                    objective(&q)
                });
                if v > value {
                    p[l] = t;
                    value = v;
                }
            }
            for n in 0..net.num_nodes() {
                let outs = net.out_links(n);
                for (i, &a) in outs.iter().enumerate() {
                    for &b in &outs[i + 1..] {
                        let s = p[a] + p[b];
                        let (t, v) = maximize_1d(s, |t| {
                            let mut q = p.clone();
                            q[a] = t;
                            q[b] = (s - t).pos();
                            objective(&q)
                        });
                        if v > value {
                            p[a] = t;
                            p[b] = (s - t).pos();
                            value = v;
                        }
                    }
                }
            }
            last_gain = value - before;
            if last_gain <= T::lit(CA_TOL) * value.abs().max(T::one()) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Solver {
                solver: "coordinate-ascent",
                iterations: CA_MAX_SWEEPS,
                detail: format!("objective {value}, last sweep gain {last_gain}"),
            });
        }
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, p));
        }
    }
    Ok(best.map(|(_, p)| p).unwrap_or_else(|| vec![T::zero(); nl]))
}

/// Grid scan followed by golden-section refinement around the best cell.
fn maximize_1d<T: Scalar, F: Fn(T) -> T>(hi: T, f: F) -> (T, T) {
    if hi <= T::zero() {
        return (T::zero(), f(T::zero()));
    }
    const CELLS: usize = 24;
    let at = |i: usize| hi * T::from_usize(i).unwrap() / T::from_usize(CELLS).unwrap();
    let mut best = (T::zero(), f(T::zero()));
    let mut best_i = 0;
    for i in 1..=CELLS {
        let t = at(i);
        let v = f(t);
        if v > best.1 {
            best = (t, v);
            best_i = i;
        }
    }
    let (mut a, mut b) = (at(best_i.saturating_sub(1)), at((best_i + 1).min(CELLS)));
    let r = T::lit(0.618_033_988_749_894_9);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if b - a <= T::epsilon() * hi.max(T::one()) * T::lit(4.0) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// MaxWeight: each link's whole rate goes to its heaviest flow, provided
/// that flow's weight is positive. Returns rates row-major `(link, flow)`.
pub fn schedule<T: Scalar>(weights: &LinkWeights<T>, rates: &[T]) -> Vec<T> {
    let f = weights.num_flows;
    let mut out = vec![T::zero(); rates.len() * f];
    for (l, &r) in rates.iter().enumerate() {
        if weights.link[l] > T::zero() {
            out[l * f + weights.best_flow[l]] = r;
        }
    }
    out
}

/// The proposed online controller.
#[derive(Debug, Clone)]
pub struct Proposed<'a, T: Scalar> {
    scenario: &'a Scenario<T>,
    params: AlgorithmParams<T>,
}

impl<'a, T: Scalar> Proposed<'a, T> {
    /// `gamma = None` selects `Gamma_min(V)`.
    pub fn new(scenario: &'a Scenario<T>, v: T, gamma: Option<T>) -> Result<Self> {
        let params = AlgorithmParams::new(&scenario.sys, scenario.net.d_max(), v, gamma)?;
        Ok(Self { scenario, params })
    }

    pub fn params(&self) -> &AlgorithmParams<T> {
        &self.params
    }

    /// One slot: admission, weights, power, scheduling.
    pub fn step(&self, state: &NetState<T>, env: &EnvSample<T>) -> Result<SlotDecision<T>> {
        let sc = self.scenario;
        let (net, sys) = (&sc.net, &sc.sys);
        let admit = admit_data(net, state, &sc.utility, self.params.v, sys.r_max)?;
        let weights = compute_weights(net, state, self.params.theta);
        let alloc = allocate_power(
            net,
            &sc.rate,
            &env.channel,
            &weights,
            &state.energy,
            &self.params,
            sys,
        )?;
        let flow_rate = schedule(&weights, &alloc.rates);
        let dec = SlotDecision {
            admit,
            power: alloc.power,
            link_rate: alloc.rates,
            flow_rate,
            harvest: env.harvest.clone(),
        };
        for n in 0..net.num_nodes() {
            let spend = dec.node_power(net, n);
            if sys.xi * sys.eta * state.energy[n] < sys.p_max && spend > T::zero() {
                return Err(Error::Invariant {
                    slot: state.slot,
                    what: format!(
                        "node {} transmits {spend} with only {} stored (needs {} before any transmission)",
                        net.label(n),
                        state.energy[n],
                        sys.p_max / (sys.xi * sys.eta)
                    ),
                    dump: format!("{state:?}"),
                });
            }
        }
        Ok(dec)
    }
}

impl<T: Scalar> Policy<T> for Proposed<'_, T> {
    fn name(&self) -> &'static str {
        "proposed"
    }

    fn decide(&mut self, state: &NetState<T>, env: &EnvSample<T>) -> Result<SlotDecision<T>> {
        self.step(state, env)
    }

    fn queue_bound(&self) -> Option<T> {
        Some(self.scenario.sys.queue_bound(self.params.v))
    }

    fn keeps_battery_in_range(&self) -> bool {
        true
    }
}
