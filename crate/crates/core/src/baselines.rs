//! Comparison schemes: a perfect-battery design with harvest admission
//! (ESA) and a backlog-first greedy scheduler.

use crate::controller::{admit_data, allocate_power_priced, compute_weights, schedule};
use crate::error::{Error, Result};
use crate::model::{EnvSample, NetState, SlotDecision};
use crate::policy::Policy;
use crate::scalar::Scalar;
use crate::scenario::Scenario;

/// Backpressure controller designed for an ideal battery. It stops
/// harvesting once the battery reaches `harvest_cutoff` and prices power
/// by `E_n - harvest_cutoff`. Decisions that would overdraw the real
/// battery are scaled down.
#[derive(Debug, Clone)]
pub struct Esa<'a, T: Scalar> {
    scenario: &'a Scenario<T>,
    v: T,
    theta: T,
    harvest_cutoff: T,
}

impl<'a, T: Scalar> Esa<'a, T> {
    pub fn new(scenario: &'a Scenario<T>, v: T) -> Result<Self> {
        if !(v > T::zero()) {
            return Err(Error::Param(format!("V must be positive, got {v}")));
        }
        let sys = &scenario.sys;
        Ok(Self {
            scenario,
            v,
            theta: sys.theta(scenario.net.d_max()),
            harvest_cutoff: sys.delta1 * sys.g_max * v + sys.p_max,
        })
    }

    pub fn harvest_cutoff(&self) -> T {
        self.harvest_cutoff
    }

    pub fn step(&self, state: &NetState<T>, env: &EnvSample<T>) -> Result<SlotDecision<T>> {
        let sc = self.scenario;
        let (net, sys) = (&sc.net, &sc.sys);
        let admit = admit_data(net, state, &sc.utility, self.v, sys.r_max)?;
        let weights = compute_weights(net, state, self.theta);
        let prices: Vec<T> = state
            .energy
            .iter()
            .map(|&e| e - self.harvest_cutoff)
            .collect();
        let mut alloc = allocate_power_priced(
            net,
            &sc.rate,
            &env.channel,
            &weights.link,
            &prices,
            sys.p_max,
        )?;

        let mut clipped = false;
        for n in 0..net.num_nodes() {
            let outs = net.out_links(n);
            let spend = outs.iter().fold(T::zero(), |a, &l| a + alloc.power[l]);
            let budget = sys.xi * sys.eta * state.energy[n];
            if spend > budget {
                let scale = budget / spend;
                for &l in outs {
                    alloc.power[l] = alloc.power[l] * scale;
                }
                clipped = true;
            }
        }
        if clipped {
            alloc.rates = sc.rate.rates_unchecked(net, &env.channel, &alloc.power);
        }
        let flow_rate = schedule(&weights, &alloc.rates);

        let harvest = env
            .harvest
            .iter()
            .zip(&state.energy)
            .map(|(&e, &stored)| {
                let room = (self.harvest_cutoff - stored).pos();
                (sys.xi * e).min(room) / sys.xi
            })
            .collect();
        Ok(SlotDecision {
            admit,
            power: alloc.power,
            link_rate: alloc.rates,
            flow_rate,
            harvest,
        })
    }
}

impl<T: Scalar> Policy<T> for Esa<'_, T> {
    fn name(&self) -> &'static str {
        "esa"
    }

    fn decide(&mut self, state: &NetState<T>, env: &EnvSample<T>) -> Result<SlotDecision<T>> {
        self.step(state, env)
    }
}

/// Backlog-first scheduler: nodes are visited by decreasing total backlog
/// and each grabs its best free out-link at the highest affordable power.
#[derive(Debug, Clone)]
pub struct Greedy<'a, T: Scalar> {
    scenario: &'a Scenario<T>,
}

impl<'a, T: Scalar> Greedy<'a, T> {
    pub fn new(scenario: &'a Scenario<T>) -> Self {
        Self { scenario }
    }

    pub fn step(&self, state: &NetState<T>, env: &EnvSample<T>) -> Result<SlotDecision<T>> {
        let sc = self.scenario;
        let (net, sys) = (&sc.net, &sc.sys);
        let f = net.num_flows();
        let mut dec = SlotDecision::idle(net, env);

        let mut order: Vec<usize> = (0..net.num_nodes())
            .filter(|&n| state.node_backlog(n) > T::zero() && !net.out_links(n).is_empty())
            .collect();
        // stable sort keeps smaller node ids first among equal backlogs
        order.sort_by(|&a, &b| {
            state
                .node_backlog(b)
                .partial_cmp(&state.node_backlog(a))
                .unwrap_or(std::cmp::Ordering::Equal)
        });

        let mut busy = vec![false; net.num_nodes()];
        let mut selected: Vec<(usize, usize)> = Vec::new();
        for n in order {
            let power = sys.p_max.min(sys.xi * sys.eta * state.energy[n]);
            if busy[n] || power <= T::zero() {
                continue;
            }
            let mut best: Option<(usize, T)> = None;
            for &l in net.out_links(n) {
                let to = net.link(l).to;
                if busy[to] {
                    continue;
                }
                let g = env.channel.gain(n, to);
                if best.is_none_or(|(_, b)| g > b) {
                    best = Some((l, g));
                }
            }
            if let Some((l, _)) = best {
                busy[n] = true;
                busy[net.link(l).to] = true;
                dec.power[l] = power;
                selected.push((n, l));
            }
        }

        dec.link_rate = sc.rate.rates_unchecked(net, &env.channel, &dec.power);
        let mut sent = vec![None; net.num_nodes()];
        for &(n, l) in &selected {
            let mut k_best = 0;
            for k in 1..f {
                if state.q(n, k) > state.q(n, k_best) {
                    k_best = k;
                }
            }
            dec.flow_rate[l * f + k_best] = dec.link_rate[l];
            sent[n] = Some((k_best, dec.link_rate[l]));
        }

        for (n, k, _) in sc.utility.iter() {
            dec.admit[n * f + k] = if state.q(n, k) == T::zero() {
                sys.r_max
            } else {
                match sent[n] {
                    Some((kk, r)) if kk == k => r.min(sys.r_max),
                    _ => T::zero(),
                }
            };
        }
        Ok(dec)
    }
}

impl<T: Scalar> Policy<T> for Greedy<'_, T> {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn decide(&mut self, state: &NetState<T>, env: &EnvSample<T>) -> Result<SlotDecision<T>> {
        self.step(state, env)
    }
}
