//! The control-policy interface shared by the proposed controller and the
//! baselines.

use serde::{Deserialize, Serialize};

use crate::baselines::{Esa, Greedy};
use crate::controller::Proposed;
use crate::error::Result;
use crate::model::{EnvSample, NetState, SlotDecision};
use crate::scalar::Scalar;
use crate::scenario::Scenario;

pub trait Policy<T: Scalar> {
    fn name(&self) -> &'static str;

    fn decide(&mut self, state: &NetState<T>, env: &EnvSample<T>) -> Result<SlotDecision<T>>;

    /// Bound every data queue must respect, if the policy promises one.
    fn queue_bound(&self) -> Option<T> {
        None
    }

    /// Whether the policy promises never to fill a transmitting node's
    /// battery past capacity.
    fn keeps_battery_in_range(&self) -> bool {
        false
    }
}

/// Which policy to run, with its knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Algorithm {
    /// `gamma = None` means `Gamma_min(V)`.
    Proposed {
        v: f64,
        gamma: Option<f64>,
    },
    Esa {
        v: f64,
    },
    Greedy,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Proposed { .. } => "proposed",
            Algorithm::Esa { .. } => "esa",
            Algorithm::Greedy => "greedy",
        }
    }

    /// Builds the policy for `scenario`; window violations surface here.
    pub fn build<'a, T: Scalar>(
        &self,
        scenario: &'a Scenario<T>,
    ) -> Result<Box<dyn Policy<T> + 'a>> {
        Ok(match *self {
            Algorithm::Proposed { v, gamma } => {
                Box::new(Proposed::new(scenario, T::lit(v), gamma.map(T::lit))?)
            }
            Algorithm::Esa { v } => Box::new(Esa::new(scenario, T::lit(v))?),
            Algorithm::Greedy => Box::new(Greedy::new(scenario)),
        })
    }
}
