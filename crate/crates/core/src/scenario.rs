//! A complete network description: topology, constants, rate model and
//! utilities.

use crate::error::{Error, Result};
use crate::model::{
    leq, param_window, validate_system, NetworkSpec, SystemParams, ValidationReport,
};
use crate::rate::RatePowerModel;
use crate::scalar::Scalar;
use crate::utility::UtilitySpec;

#[derive(Debug, Clone)]
pub struct Scenario<T: Scalar> {
    pub net: NetworkSpec,
    pub sys: SystemParams<T>,
    pub rate: RatePowerModel<T>,
    pub utility: UtilitySpec<T>,
}

impl<T: Scalar> Scenario<T> {
    pub fn new(
        net: NetworkSpec,
        sys: SystemParams<T>,
        rate: RatePowerModel<T>,
        utility: UtilitySpec<T>,
    ) -> Result<Self> {
        if utility.is_empty() {
            return Err(Error::Config("no (node, flow) pair has a utility".into()));
        }
        Ok(Self {
            net,
            sys,
            rate,
            utility,
        })
    }

    /// `(g_max, delta1, delta2)` implied by the utilities and the rate model.
    pub fn derived_constants(
        net: &NetworkSpec,
        rate: &RatePowerModel<T>,
        utility: &UtilitySpec<T>,
    ) -> Result<(T, T, T)> {
        let (d1, d2) = rate.sensitivity_constants(net)?;
        Ok((utility.g_max(), d1, d2))
    }

    /// Copy with a different harvest bound.
    pub fn with_harvest_max(&self, e_max: T) -> Self {
        let mut s = self.clone();
        s.sys.harvest_max = e_max;
        s
    }

    /// Battery-sizing checks plus consistency of the declared constants
    /// with the utilities and the rate model.
    pub fn validate(&self) -> Result<ValidationReport> {
        let mut report = validate_system(&self.sys)?;
        let (g, d1, d2) = Self::derived_constants(&self.net, &self.rate, &self.utility)?;
        let sys = &self.sys;
        let ok = leq(g, sys.g_max);
        report.push(
            "g_max",
            ok,
            format!(
                "largest utility slope {g} {} g_max = {}",
                if ok { "<=" } else { ">" },
                sys.g_max
            ),
        );
        let ok = leq(d1, sys.delta1) && leq(d2, sys.delta2);
        report.push(
            "delta",
            ok,
            format!(
                "rate model needs delta1 >= {d1}, delta2 >= {d2}; declared {}, {}",
                sys.delta1, sys.delta2
            ),
        );
        let concave = self.utility.check_concavity(sys.r_max);
        report.push(
            "concavity",
            concave.is_ok(),
            match concave {
                Ok(()) => format!("{} utilities concave on [0, R_max]", self.utility.len()),
                Err(e) => e.to_string(),
            },
        );
        let window = param_window(sys)?;
        let ok = window.v_max > T::zero();
        report.push("window", ok, format!("V_max = {}", window.v_max));
        let peak = self.rate.peak_rate(sys.p_max);
        if peak > sys.mu_max {
            report.warnings.push(format!(
                "a link can carry {peak} per slot at peak power, above mu_max = {}; \
                 the data-queue bound then relies on backlog limiting actual transfers",
                sys.mu_max
            ));
        }
        Ok(report)
    }
}
