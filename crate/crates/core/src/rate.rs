//! Rate-power functions and their sensitivity constants.
//!
//! Three models are provided:
//!
//! * `interference-log`: `ln(1 + g[n,m] P[n,m] / (sum of g[n',m] P[n',m'] over other links + sigma^2))`
//! * `orthogonal-log`: `ln(1 + g[n,m] P[n,m] / sigma^2)`
//! * `linear-gain`: `S[n,m] * P[n,m]`
//!
//! `g` and `S` are entries of a [`ChannelState`]; every entry takes values in
//! a finite set of levels ([`ChannelDomain`]). Logarithms are natural.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChannelState, NetworkSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateKind {
    InterferenceLog,
    OrthogonalLog,
    LinearGain,
}

impl RateKind {
    pub fn name(self) -> &'static str {
        match self {
            RateKind::InterferenceLog => "interference-log",
            RateKind::OrthogonalLog => "orthogonal-log",
            RateKind::LinearGain => "linear-gain",
        }
    }
}

/// Finite set of values each channel entry may take.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDomain<T> {
    levels: Vec<T>,
}

impl<T: Scalar> ChannelDomain<T> {
    pub fn new(mut levels: Vec<T>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Param("channel domain is empty".into()));
        }
        if levels.iter().any(|g| !g.is_finite()) {
            return Err(Error::Param(
                "unbounded channel gain: rates would not be bounded".into(),
            ));
        }
        if levels.iter().any(|&g| g < T::zero()) {
            return Err(Error::Param("negative channel gain".into()));
        }
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        levels.dedup();
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[T] {
        &self.levels
    }

    pub fn max_level(&self) -> T {
        *self.levels.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePowerModel<T> {
    pub kind: RateKind,
    /// Noise variance; ignored by `linear-gain`.
    pub noise_variance: T,
    pub domain: ChannelDomain<T>,
}

impl<T: Scalar> RatePowerModel<T> {
    pub fn new(kind: RateKind, noise_variance: T, domain: ChannelDomain<T>) -> Result<Self> {
        if kind != RateKind::LinearGain && !(noise_variance > T::zero()) {
            return Err(Error::Param(format!(
                "noise variance must be positive for {}",
                kind.name()
            )));
        }
        if !noise_variance.is_finite() {
            return Err(Error::NonFinite("noise_variance"));
        }
        Ok(Self {
            kind,
            noise_variance,
            domain,
        })
    }

    pub fn linear_gain(levels: Vec<T>) -> Result<Self> {
        Self::new(RateKind::LinearGain, T::one(), ChannelDomain::new(levels)?)
    }

    /// Whether the power-allocation objective separates across nodes.
    pub fn is_separable(&self) -> bool {
        self.kind != RateKind::InterferenceLog
    }

    /// Rate of every link for the given per-link power vector.
    pub fn rates(
        &self,
        net: &NetworkSpec,
        channel: &ChannelState<T>,
        power: &[T],
    ) -> Result<Vec<T>> {
        if power.len() != net.num_links() {
            return Err(Error::Param(format!(
                "power vector has {} entries for {} links",
                power.len(),
                net.num_links()
            )));
        }
        if let Some(p) = power.iter().find(|p| !(**p >= T::zero()) || !p.is_finite()) {
            return Err(Error::Param(format!("invalid power {p}")));
        }
        Ok(self.rates_unchecked(net, channel, power))
    }

    /// [`rates`](Self::rates) without input validation, for solver inner loops.
    pub fn rates_unchecked(
        &self,
        net: &NetworkSpec,
        channel: &ChannelState<T>,
        power: &[T],
    ) -> Vec<T> {
        let links = net.links();
        match self.kind {
            RateKind::LinearGain => links
                .iter()
                .zip(power)
                .map(|(l, &p)| channel.gain(l.from, l.to) * p)
                .collect(),
            RateKind::OrthogonalLog => links
                .iter()
                .zip(power)
                .map(|(l, &p)| (channel.gain(l.from, l.to) * p / self.noise_variance).ln_1p())
                .collect(),
            RateKind::InterferenceLog => links
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let interference = links
                        .iter()
                        .zip(power)
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .fold(T::zero(), |acc, (_, (o, &p))| {
                            acc + channel.gain(o.from, l.to) * p
                        });
                    (channel.gain(l.from, l.to) * power[i] / (interference + self.noise_variance))
                        .ln_1p()
                })
                .collect(),
        }
    }

    /// Sensitivity constants `(delta1, delta2)` over the declared domain.
    ///
    /// `delta1` bounds the slope of a link's own rate in its power;
    /// `delta2` bounds the aggregate rate loss at other nodes per unit of
    /// extra power at one node.
    pub fn sensitivity_constants(&self, net: &NetworkSpec) -> Result<(T, T)> {
        let g = self.domain.max_level();
        if !g.is_finite() {
            return Err(Error::Param("unbounded channel gain".into()));
        }
        Ok(match self.kind {
            RateKind::LinearGain => (g, T::zero()),
            RateKind::OrthogonalLog => (g / self.noise_variance, T::zero()),
            RateKind::InterferenceLog => {
                // node n disturbs every link [n', m'] with n' != n through g[n, m']
                let l = net.num_links();
                let worst = (0..net.num_nodes())
                    .filter(|&n| !net.out_links(n).is_empty())
                    .map(|n| l - net.out_links(n).len())
                    .max()
                    .unwrap_or(0);
                (
                    g / self.noise_variance,
                    T::from_usize(worst).unwrap() * g / self.noise_variance,
                )
            }
        })
    }

    /// Largest rate a single link can reach with `p_max` on it.
    pub fn peak_rate(&self, p_max: T) -> T {
        let g = self.domain.max_level();
        match self.kind {
            RateKind::LinearGain => g * p_max,
            _ => (g * p_max / self.noise_variance).ln_1p(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Property {
    /// Zeroing one link's power does not lower other links' rates.
    MonotoneInterference,
    /// Own-rate drop from zeroing a link is within `[0, delta1 * P]`.
    SlopeBound,
    /// Spreading extra power over a node's out-links raises each of them.
    SpreadingMonotone,
    /// Rate loss at other nodes from spreading `dP` is within `[0, delta2 * dP]`.
    SpreadingBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub property: Property,
    pub trial: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub trials: usize,
    pub violations: Vec<(Property, usize)>,
    /// First few counterexamples, in discovery order.
    pub examples: Vec<Counterexample>,
}

impl PropertyReport {
    pub fn count(&self, p: Property) -> usize {
        self.violations
            .iter()
            .find(|(q, _)| *q == p)
            .map_or(0, |(_, c)| *c)
    }

    pub fn all_pass(&self) -> bool {
        self.violations.iter().all(|(_, c)| *c == 0)
    }
}

const KEEP_EXAMPLES: usize = 16;

/// Randomized check of the two rate-power properties with the declared
/// constants. Trials draw channel states from the domain and per-node
/// power splits within `p_max`; a quarter of the trials concentrate all
/// power on a single link.
pub fn check_properties<T: Scalar>(
    model: &RatePowerModel<T>,
    net: &NetworkSpec,
    p_max: T,
    delta1: T,
    delta2: T,
    trials: usize,
    seed: u64,
) -> PropertyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = net.num_nodes();
    let levels = model.domain.levels();
    let mut counts = [0usize; 4];
    let mut examples = Vec::new();
    let props = [
        Property::MonotoneInterference,
        Property::SlopeBound,
        Property::SpreadingMonotone,
        Property::SpreadingBound,
    ];
    let tol = |x: T| T::noise() * x.abs().max(T::one());

    let senders: Vec<usize> = (0..n).filter(|&v| !net.out_links(v).is_empty()).collect();
    if senders.is_empty() {
        return PropertyReport {
            trials,
            violations: props.iter().map(|&p| (p, 0)).collect(),
            examples,
        };
    }

    for trial in 0..trials {
        let mut channel = ChannelState::zeros(n);
        for a in 0..n {
            for b in 0..n {
                channel.set(a, b, levels[rng.random_range(0..levels.len())]);
            }
        }
        let mut power = vec![T::zero(); net.num_links()];
        if trial % 4 == 3 {
            let l = rng.random_range(0..net.num_links());
            power[l] = p_max * T::lit(rng.random::<f64>());
        } else {
            for &v in &senders {
                let outs = net.out_links(v);
                let total = p_max * T::lit(rng.random::<f64>());
                let w: Vec<f64> = outs.iter().map(|_| rng.random::<f64>() + 1e-3).collect();
                let sum: f64 = w.iter().sum();
                for (&l, wi) in outs.iter().zip(&w) {
                    power[l] = total * T::lit(wi / sum);
                }
            }
        }
        let base = model.rates_unchecked(net, &channel, &power);
        let mut record = |p: Property, detail: String, counts: &mut [usize; 4]| {
            counts[props.iter().position(|&q| q == p).unwrap()] += 1;
            if examples.len() < KEEP_EXAMPLES {
                examples.push(Counterexample {
                    property: p,
                    trial,
                    detail,
                });
            }
        };

        // Property 1: zero one link
        let l = rng.random_range(0..net.num_links());
        let mut zeroed = power.clone();
        zeroed[l] = T::zero();
        let after = model.rates_unchecked(net, &channel, &zeroed);
        for (j, (&b, &a)) in base.iter().zip(&after).enumerate() {
            if j != l && b > a + tol(a) {
                record(
                    Property::MonotoneInterference,
                    format!("link {j}: {b} with link {l} on, {a} with it off"),
                    &mut counts,
                );
            }
        }
        let drop = base[l] - after[l];
        if drop < -tol(base[l]) || drop > delta1 * power[l] + tol(drop) {
            record(
                Property::SlopeBound,
                format!("link {l}: drop {drop} vs delta1*P = {}", delta1 * power[l]),
                &mut counts,
            );
        }

        // Property 2: spread dP over one node's out-links
        let v = senders[rng.random_range(0..senders.len())];
        let outs = net.out_links(v);
        let dp = p_max * T::lit(rng.random::<f64>());
        let mut spread = power.clone();
        let share = dp / T::from_usize(outs.len()).unwrap();
        for &o in outs {
            spread[o] = spread[o] + share;
        }
        let after = model.rates_unchecked(net, &channel, &spread);
        for &o in outs {
            if base[o] > after[o] + tol(after[o]) {
                record(
                    Property::SpreadingMonotone,
                    format!("link {o}: {} -> {} after spreading {dp}", base[o], after[o]),
                    &mut counts,
                );
            }
        }
        let loss = (0..net.num_links())
            .filter(|&j| net.link(j).from != v)
            .fold(T::zero(), |acc, j| acc + base[j] - after[j]);
        if loss < -tol(loss) || loss > delta2 * dp + tol(loss) {
            record(
                Property::SpreadingBound,
                format!(
                    "node {}: loss {loss} vs delta2*dP = {}",
                    net.label(v),
                    delta2 * dp
                ),
                &mut counts,
            );
        }
    }

    PropertyReport {
        trials,
        violations: props.iter().copied().zip(counts).collect(),
        examples,
    }
}
