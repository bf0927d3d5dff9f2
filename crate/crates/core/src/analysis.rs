//! Optimality-gap constants, the gap-minimizing `(V, Gamma)` choice, and
//! parameter sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{param_window, ParamWindow, SystemParams};
use crate::policy::Algorithm;
use crate::scalar::Scalar;
use crate::scenario::Scenario;
use crate::sim::{run_ensemble, EnsembleOptions, EnsembleSummary};

/// Additive constant of the utility-gap bound, evaluated at `(V, Gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBound<T> {
    /// Data-queue part, scaled by `N^2`.
    pub b1: T,
    /// Energy-perturbation part, scaled by `N`.
    pub b2: T,
    /// Leakage part, scaled by `N`.
    pub b3: T,
    pub b: T,
    pub v: T,
    pub gamma: T,
    /// `b / v`.
    pub gap: T,
}

/// `2 d^2 mu^2 + R^2/2 + 2 d mu R`.
pub fn b1<T: Scalar>(sys: &SystemParams<T>, d_max: usize) -> T {
    let dm = T::from_usize(d_max).unwrap() * sys.mu_max;
    let two = T::lit(2.0);
    two * dm * dm + sys.r_max * sys.r_max / two + two * dm * sys.r_max
}

/// `(B2, B3)` as functions of `Gamma`.
pub fn b2_b3<T: Scalar>(sys: &SystemParams<T>, gamma: T) -> (T, T) {
    let leak = T::one() - sys.eta;
    let hi = sys.p_max / sys.xi + leak * gamma;
    let lo = -sys.xi * sys.harvest_max + leak * gamma;
    let b2 = (hi * hi).max(lo * lo) / T::lit(2.0);
    let top = sys.battery_capacity - gamma;
    let b3 = sys.eta * leak * (top * top).max(gamma * gamma);
    (b2, b3)
}

/// Evaluates the bound; `(V, Gamma)` must lie in the admissible window.
pub fn gap_bound<T: Scalar>(
    sys: &SystemParams<T>,
    d_max: usize,
    num_nodes: usize,
    v: T,
    gamma: T,
) -> Result<GapBound<T>> {
    param_window(sys)?.check(v, gamma)?;
    Ok(gap_bound_unchecked(sys, d_max, num_nodes, v, gamma))
}

fn gap_bound_unchecked<T: Scalar>(
    sys: &SystemParams<T>,
    d_max: usize,
    num_nodes: usize,
    v: T,
    gamma: T,
) -> GapBound<T> {
    let n = T::from_usize(num_nodes).unwrap();
    let b1 = b1(sys, d_max);
    let (b2, b3) = b2_b3(sys, gamma);
    let b = n * n * b1 + n * (b2 + b3);
    GapBound {
        b1,
        b2,
        b3,
        b,
        v,
        gamma,
        gap: b / v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapOptimum<T> {
    pub v: T,
    pub gamma: T,
    pub gap: T,
}

struct GapProblem<T: Scalar> {
    sys: SystemParams<T>,
    window: ParamWindow<T>,
    d_max: usize,
    n: usize,
    v_cap: T,
}

impl<T: Scalar> GapProblem<T> {
    fn new(sys: &SystemParams<T>, d_max: usize, num_nodes: usize, v_cap: T) -> Result<Self> {
        let window = param_window(sys)?;
        if !(v_cap > T::zero()) {
            return Err(Error::Param(format!("V cap must be positive, got {v_cap}")));
        }
        if !(window.v_max > T::zero()) {
            return Err(Error::Param(format!(
                "empty parameter window: V_max = {}",
                window.v_max
            )));
        }
        let tol = T::epsilon() * T::lit(16.0) * window.v_max.max(T::one());
        if v_cap > window.v_max + tol {
            return Err(Error::Param(format!(
                "V cap {v_cap} exceeds V_max = {}",
                window.v_max
            )));
        }
        Ok(Self {
            sys: *sys,
            window,
            d_max,
            n: num_nodes,
            v_cap: v_cap.min(window.v_max),
        })
    }

    fn gamma_range(&self, v: T) -> (T, T) {
        let lo = self.window.gamma_min(v);
        (lo, self.window.gamma_max(v).max(lo))
    }

    fn objective(&self, v: T, gamma: T) -> T {
        gap_bound_unchecked(&self.sys, self.d_max, self.n, v, gamma).gap
    }

    /// Exact minimizer of `B2 + B3` over `[lo, hi]`. The function is a
    /// convex piecewise quadratic, so the minimum is at an endpoint, a kink
    /// or a stationary point of one of the pieces.
    fn best_gamma(&self, lo: T, hi: T) -> T {
        let s = &self.sys;
        let two = T::lit(2.0);
        let leak = T::one() - s.eta;
        let mut cands = vec![lo, hi, s.battery_capacity / two];
        if leak > T::zero() {
            cands.push((s.xi * s.harvest_max - s.p_max / s.xi) / (two * leak));
            // piece: (alpha + leak*G)^2 / 2 + eta*leak*(G - anchor)^2
            for alpha in [s.p_max / s.xi, -s.xi * s.harvest_max] {
                for anchor in [s.battery_capacity, T::zero()] {
                    cands.push((two * s.eta * anchor - alpha) / (T::one() + s.eta));
                }
            }
        }
        let h = |g: T| {
            let (b2, b3) = b2_b3(s, g);
            b2 + b3
        };
        cands
            .into_iter()
            .filter(|g| g.is_finite())
            .map(|g| g.max(lo).min(hi))
            .fold((lo, h(lo)), |(bg, bh), g| {
                let hg = h(g);
                if hg < bh {
                    (g, hg)
                } else {
                    (bg, bh)
                }
            })
            .0
    }

    /// Gap after minimizing over `Gamma` at fixed `V`.
    fn profile(&self, v: T) -> (T, T) {
        let (lo, hi) = self.gamma_range(v);
        let g = self.best_gamma(lo, hi);
        (g, self.objective(v, g))
    }
}

/// Minimizes the gap bound over `0 < V <= v_cap` and the `Gamma` window.
///
/// The objective is jointly convex on a convex set, so its profile in `V`
/// (minimized over `Gamma` exactly) is convex; a golden-section search on
/// `V` finishes the job.
pub fn minimize_gap<T: Scalar>(
    sys: &SystemParams<T>,
    d_max: usize,
    num_nodes: usize,
    v_cap: T,
) -> Result<GapOptimum<T>> {
    let p = GapProblem::new(sys, d_max, num_nodes, v_cap)?;
    let at = |v: T| {
        let (gamma, gap) = p.profile(v);
        GapOptimum { v, gamma, gap }
    };
    if sys.eta >= T::one() {
        // without leakage the gap only shrinks with V
        return Ok(at(p.v_cap));
    }
    let r = T::lit(0.618_033_988_749_894_9);
    let mut a = p.v_cap * T::lit(1e-9);
    let mut b = p.v_cap;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (p.profile(x1).1, p.profile(x2).1);
    let mut iterations = 0;
    while b - a > T::lit(1e-12) * p.v_cap.max(T::one()) && b - a > T::epsilon() * b * T::lit(4.0) {
        iterations += 1;
        if iterations > 500 {
            return Err(Error::Solver {
                solver: "gap golden-section",
                iterations,
                detail: format!("bracket [{a}, {b}] did not shrink"),
            });
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = p.profile(x1).1;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = p.profile(x2).1;
        }
    }
    let best = [at((a + b) / T::lit(2.0)), at(p.v_cap)]
        .into_iter()
        .fold(None::<GapOptimum<T>>, |acc, c| match acc {
            Some(o) if o.gap <= c.gap => Some(o),
            _ => Some(c),
        })
        .unwrap();
    Ok(best)
}

/// Coarse cross-check of [`minimize_gap`]: best point on a `steps x steps`
/// grid over `V` in `(0, v_cap]` and `Gamma` spanning each `V`'s window.
pub fn grid_min_gap<T: Scalar>(
    sys: &SystemParams<T>,
    d_max: usize,
    num_nodes: usize,
    v_cap: T,
    steps: usize,
) -> Result<GapOptimum<T>> {
    let p = GapProblem::new(sys, d_max, num_nodes, v_cap)?;
    let steps = steps.max(2);
    let mut best: Option<GapOptimum<T>> = None;
    for i in 1..=steps {
        let v = p.v_cap * T::from_usize(i).unwrap() / T::from_usize(steps).unwrap();
        let (lo, hi) = p.gamma_range(v);
        for j in 0..steps {
            let gamma =
                lo + (hi - lo) * T::from_usize(j).unwrap() / T::from_usize(steps - 1).unwrap();
            let gap = p.objective(v, gamma);
            if best.is_none_or(|b| gap < b.gap) {
                best = Some(GapOptimum { v, gamma, gap });
            }
        }
    }
    Ok(best.unwrap())
}

/// Which knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Gamma,
    V,
    EMax,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::V => "v",
            SweepParam::EMax => "e_max",
        }
    }
}

/// A sweep value; `GammaMin` stands for `Gamma_min(V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SweepValue {
    GammaMin,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    Proposed,
    Esa,
    Greedy,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Proposed => "proposed",
            AlgorithmKind::Esa => "esa",
            AlgorithmKind::Greedy => "greedy",
        }
    }

    pub fn with(self, v: f64, gamma: Option<f64>) -> Algorithm {
        match self {
            AlgorithmKind::Proposed => Algorithm::Proposed { v, gamma },
            AlgorithmKind::Esa => Algorithm::Esa { v },
            AlgorithmKind::Greedy => Algorithm::Greedy,
        }
    }
}

/// Common settings of a sweep or comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    /// `V` used when the sweep does not vary it.
    pub v: f64,
    /// `Gamma` used when the sweep does not vary it; `None` means `Gamma_min`.
    pub gamma: Option<f64>,
    pub horizon: u64,
    pub runs: usize,
    pub base_seed: u64,
    pub ensemble: EnsembleOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param_value: f64,
    pub algorithm: AlgorithmKind,
    pub summary: Option<EnsembleSummary>,
    /// Why the point was skipped.
    pub error: Option<String>,
}

/// Runs one ensemble per `(value, algorithm)`. Points whose parameters are
/// inadmissible are reported and skipped; runtime failures abort.
pub fn sweep<T: Scalar>(
    scenario: &Scenario<T>,
    param: SweepParam,
    values: &[SweepValue],
    algorithms: &[AlgorithmKind],
    settings: &SweepSettings,
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::new();
    for &value in values {
        let mut sc = scenario.clone();
        let (mut v, mut gamma) = (settings.v, settings.gamma);
        let shown = match (param, value) {
            (SweepParam::Gamma, SweepValue::GammaMin) => {
                gamma = None;
                param_window(&sc.sys)?.gamma_min(T::lit(v)).as_f64()
            }
            (_, SweepValue::GammaMin) => {
                return Err(Error::Param(format!(
                    "`min` is only meaningful when sweeping gamma, not {}",
                    param.name()
                )))
            }
            (SweepParam::Gamma, SweepValue::Value(x)) => {
                gamma = Some(x);
                x
            }
            (SweepParam::V, SweepValue::Value(x)) => {
                v = x;
                x
            }
            (SweepParam::EMax, SweepValue::Value(x)) => {
                sc = scenario.with_harvest_max(T::lit(x));
                x
            }
        };
        let inadmissible = sc.validate().ok().filter(|r| !r.passed()).map(|r| {
            r.checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("{}: {}", c.name, c.detail))
                .collect::<Vec<_>>()
                .join("; ")
        });
        for &kind in algorithms {
            let algorithm = kind.with(v, gamma);
            let point = |summary, error| SweepPoint {
                param_value: shown,
                algorithm: kind,
                summary,
                error,
            };
            if let Some(msg) = &inadmissible {
                out.push(point(None, Some(msg.clone())));
                continue;
            }
            match run_ensemble(
                &sc,
                &algorithm,
                settings.horizon,
                settings.runs,
                settings.base_seed,
                settings.ensemble,
            ) {
                Ok((summary, _)) => out.push(point(Some(summary), None)),
                Err(e @ (Error::Window { .. } | Error::Param(_))) => {
                    out.push(point(None, Some(e.to_string())))
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// One harvest level of an algorithm comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub e_max: f64,
    pub proposed: EnsembleSummary,
    pub esa: EnsembleSummary,
    pub greedy: EnsembleSummary,
}

/// Proposed, ESA and greedy at each harvest bound in `e_max_list`.
pub fn compare_algorithms<T: Scalar>(
    scenario: &Scenario<T>,
    settings: &SweepSettings,
    e_max_list: &[f64],
) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for &e in e_max_list {
        let sc = scenario.with_harvest_max(T::lit(e));
        let go = |a: Algorithm| {
            run_ensemble(
                &sc,
                &a,
                settings.horizon,
                settings.runs,
                settings.base_seed,
                settings.ensemble,
            )
            .map(|(s, _)| s)
        };
        rows.push(ComparisonRow {
            e_max: e,
            proposed: go(Algorithm::Proposed {
                v: settings.v,
                gamma: settings.gamma,
            })?,
            esa: go(Algorithm::Esa { v: settings.v })?,
            greedy: go(Algorithm::Greedy)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1(eta: f64) -> SystemParams<f64> {
        SystemParams {
            r_max: 3.0,
            p_max: 2.0,
            mu_max: 2.0,
            battery_capacity: 160.0,
            xi: 1.0,
            eta,
            harvest_max: 5.0,
            g_max: 1.0,
            delta1: 2.0,
            delta2: 0.0,
        }
    }

    #[test]
    fn b1_for_table1() {
        assert_eq!(b1(&table1(0.98), 2), 60.5);
    }

    #[test]
    fn ideal_battery_bound() {
        let sys = SystemParams {
            harvest_max: 2.0,
            eta: 1.0,
            ..table1(1.0)
        };
        let g = gap_bound(&sys, 2, 7, 30.0, 62.0).unwrap();
        assert_eq!(g.b3, 0.0);
        assert_eq!(g.b2, 2.0);
        assert_eq!(g.b, 49.0 * 60.5 + 7.0 * 2.0);
    }

    #[test]
    fn outside_window_rejected() {
        assert!(matches!(
            gap_bound(&table1(0.98), 2, 7, 30.0, 10.0),
            Err(Error::Window { .. })
        ));
    }

    #[test]
    fn ideal_battery_optimum_at_cap() {
        let sys = SystemParams {
            harvest_max: 2.0,
            eta: 1.0,
            ..table1(1.0)
        };
        let o = minimize_gap(&sys, 2, 7, 50.0).unwrap();
        assert_eq!(o.v, 50.0);
    }

    #[test]
    fn solver_not_worse_than_grid() {
        let sys = table1(0.98);
        let o = minimize_gap(&sys, 2, 7, 76.5).unwrap();
        let g = grid_min_gap(&sys, 2, 7, 76.5, 400).unwrap();
        assert!(o.gap <= g.gap * (1.0 + 1e-12), "{o:?} vs {g:?}");
        assert!(param_window(&sys).unwrap().contains(o.v, o.gamma));
    }

    #[test]
    fn cap_above_v_max_rejected() {
        assert!(minimize_gap(&table1(0.98), 2, 7, 100.0).is_err());
    }
}
