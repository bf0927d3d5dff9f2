//! Concave rate utilities and the per-slot admission problem.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::NetworkSpec;
use crate::scalar::Scalar;

/// An increasing, concave, differentiable utility of admitted rate.
pub trait Utility<T: Scalar>: Debug + Send + Sync {
    fn value(&self, r: T) -> T;

    fn derivative(&self, r: T) -> T;

    /// Maximizer of `v * U(r) - q * r` over `[0, r_max]`, or `None` when the
    /// derivative is found to increase somewhere on the interval.
    ///
    /// The default solves `v * U'(r) = q` by bisection, which only relies on
    /// `U'` being non-increasing.
    fn best_admission(&self, v: T, q: T, r_max: T) -> Option<T> {
        let slope = |r: T| v * self.derivative(r) - q;
        let probes = 16;
        let mut prev = slope(T::zero());
        for i in 1..=probes {
            let r = r_max * T::from_usize(i).unwrap() / T::from_usize(probes).unwrap();
            let s = slope(r);
            if s > prev + T::noise() * prev.abs().max(T::one()) {
                return None;
            }
            prev = s;
        }
        if slope(T::zero()) <= T::zero() {
            return Some(T::zero());
        }
        if slope(r_max) >= T::zero() {
            return Some(r_max);
        }
        let (mut lo, mut hi) = (T::zero(), r_max);
        for _ in 0..200 {
            let mid = (lo + hi) / T::lit(2.0);
            if slope(mid) > T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * r_max.max(T::one()) {
                break;
            }
        }
        Some((lo + hi) / T::lit(2.0))
    }
}

/// Built-in utility forms plus an escape hatch for user-supplied ones.
#[derive(Debug, Clone)]
pub enum UtilityFn<T: Scalar> {
    /// `scale * ln(1 + r)`
    Log1p {
        scale: T,
    },
    /// `scale * ((1 + r)^alpha - 1) / alpha`, `0 < alpha < 1`
    Power {
        scale: T,
        alpha: T,
    },
    Custom(Arc<dyn Utility<T>>),
}

impl<T: Scalar> UtilityFn<T> {
    pub fn log1p() -> Self {
        UtilityFn::Log1p { scale: T::one() }
    }

    /// Parses `log1p`, `log1p:<scale>` or `power:<alpha>[:<scale>]`.
    pub fn parse(form: &str) -> Result<Self> {
        let mut parts = form.split(':');
        let kind = parts.next().unwrap_or_default().trim();
        let num =
            |s: Option<&str>, default: Option<f64>| -> Result<T> {
                match s {
                    Some(s) => s.trim().parse::<f64>().map(T::lit).map_err(|_| {
                        Error::Config(format!("bad number `{s}` in utility `{form}`"))
                    }),
                    None => default.map(T::lit).ok_or_else(|| {
                        Error::Config(format!("utility `{form}` needs a parameter"))
                    }),
                }
            };
        let u = match kind {
            "log1p" => UtilityFn::Log1p {
                scale: num(parts.next(), Some(1.0))?,
            },
            "power" => {
                let alpha = num(parts.next(), None)?;
                let scale = num(parts.next(), Some(1.0))?;
                UtilityFn::Power { scale, alpha }
            }
            _ => return Err(Error::Config(format!("unknown utility form `{form}`"))),
        };
        if parts.next().is_some() {
            return Err(Error::Config(format!(
                "trailing fields in utility `{form}`"
            )));
        }
        match u {
            UtilityFn::Log1p { scale } if scale <= T::zero() => Err(Error::Config(format!(
                "utility `{form}`: scale must be positive"
            ))),
            UtilityFn::Power { scale, alpha }
                if scale <= T::zero() || alpha <= T::zero() || alpha >= T::one() =>
            {
                Err(Error::Config(format!(
                    "utility `{form}`: need scale > 0 and 0 < alpha < 1"
                )))
            }
            u => Ok(u),
        }
    }
}

impl<T: Scalar> Utility<T> for UtilityFn<T> {
    fn value(&self, r: T) -> T {
        match self {
            UtilityFn::Log1p { scale } => *scale * r.ln_1p(),
            UtilityFn::Power { scale, alpha } => {
                *scale * ((T::one() + r).powf(*alpha) - T::one()) / *alpha
            }
            UtilityFn::Custom(u) => u.value(r),
        }
    }

    fn derivative(&self, r: T) -> T {
        match self {
            UtilityFn::Log1p { scale } => *scale / (T::one() + r),
            UtilityFn::Power { scale, alpha } => *scale * (T::one() + r).powf(*alpha - T::one()),
            UtilityFn::Custom(u) => u.derivative(r),
        }
    }

    fn best_admission(&self, v: T, q: T, r_max: T) -> Option<T> {
        let clamp = |r: T| r.max(T::zero()).min(r_max);
        match self {
            // stationary point of v*s*ln(1+r) - q*r
            UtilityFn::Log1p { scale } => Some(if q <= T::zero() {
                r_max
            } else {
                clamp(v * *scale / q - T::one())
            }),
            UtilityFn::Power { scale, alpha } => Some(if q <= T::zero() {
                r_max
            } else {
                clamp((v * *scale / q).powf(T::one() / (T::one() - *alpha)) - T::one())
            }),
            UtilityFn::Custom(u) => u.best_admission(v, q, r_max),
        }
    }
}

/// Utility assignment per `(node, flow)`; unassigned pairs never admit.
#[derive(Debug, Clone)]
pub struct UtilitySpec<T: Scalar> {
    entries: Vec<Option<UtilityFn<T>>>,
    num_flows: usize,
    g_max: T,
}

impl<T: Scalar> UtilitySpec<T> {
    /// `pairs` are `(node index, flow index, utility)`.
    pub fn new(net: &NetworkSpec, pairs: Vec<(usize, usize, UtilityFn<T>)>) -> Result<Self> {
        let f = net.num_flows();
        let mut entries = vec![None; net.num_nodes() * f];
        let mut g_max = T::zero();
        for (n, k, u) in pairs {
            if n >= net.num_nodes() || k >= f {
                return Err(Error::Config(format!(
                    "utility index ({n}, {k}) out of range"
                )));
            }
            if net.flow_dest(k) == n {
                return Err(Error::Config(format!(
                    "node {} cannot admit traffic destined to itself",
                    net.label(n)
                )));
            }
            if !net.reaches(n, net.flow_dest(k)) {
                return Err(Error::Network(format!(
                    "no path from node {} to flow destination {}",
                    net.label(n),
                    net.label(net.flow_dest(k))
                )));
            }
            if entries[n * f + k].is_some() {
                return Err(Error::Config(format!(
                    "duplicate utility for node {}, flow {}",
                    net.label(n),
                    net.label(net.flow_dest(k))
                )));
            }
            g_max = g_max.max(u.derivative(T::zero()));
            entries[n * f + k] = Some(u);
        }
        Ok(Self {
            entries,
            num_flows: f,
            g_max,
        })
    }

    pub fn get(&self, n: usize, k: usize) -> Option<&UtilityFn<T>> {
        self.entries[n * self.num_flows + k].as_ref()
    }

    /// `(node, flow, utility)` for every assigned pair.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &UtilityFn<T>)> {
        let f = self.num_flows;
        self.entries
            .iter()
            .enumerate()
            .filter_map(move |(i, u)| u.as_ref().map(|u| (i / f, i % f, u)))
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest first derivative over all assigned utilities.
    pub fn g_max(&self) -> T {
        self.g_max
    }

    /// Midpoint-concavity spot check on a 33-point grid over `[0, r_max]`.
    pub fn check_concavity(&self, r_max: T) -> Result<()> {
        let grid: Vec<T> = (0..=32)
            .map(|i| r_max * T::from_usize(i).unwrap() / T::lit(32.0))
            .collect();
        for (n, k, u) in self.iter() {
            for (i, &a) in grid.iter().enumerate() {
                for &b in &grid[i + 1..] {
                    let mid = u.value((a + b) / T::lit(2.0));
                    let chord = (u.value(a) + u.value(b)) / T::lit(2.0);
                    if mid < chord - T::noise() * chord.abs().max(T::one()) {
                        return Err(Error::NonConcaveUtility { node: n, flow: k });
                    }
                }
            }
            if u.derivative(r_max) < T::zero() {
                return Err(Error::Param(format!(
                    "utility at node {n}, flow {k} decreases on [0, R_max]"
                )));
            }
        }
        Ok(())
    }

    /// Sum of utilities evaluated at per-pair rates (row-major `(node, flow)`).
    pub fn total(&self, rates: &[T]) -> T {
        self.iter().fold(T::zero(), |acc, (n, k, u)| {
            acc + u.value(rates[n * self.num_flows + k])
        })
    }
}
