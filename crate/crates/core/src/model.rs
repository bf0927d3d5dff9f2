//! Network, battery and queue model.
//!
//! Nodes carry external integer labels (as written in config files) and are
//! addressed internally by dense indices sorted by label. Links are sorted by
//! `(sender, receiver)`, so iterating a node's out-links visits receivers in
//! ascending order. Flows (commodities) are identified by their destination
//! node and sorted the same way.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Link {
    pub from: usize,
    pub to: usize,
}

/// Static topology: directed links and flow destinations.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    labels: Vec<u32>,
    links: Vec<Link>,
    flows: Vec<usize>,
    out_links: Vec<Vec<usize>>,
    in_links: Vec<Vec<usize>>,
    d_max: usize,
}

impl NetworkSpec {
    /// Builds a network from external node labels, labelled links and flow
    /// destinations.
    pub fn new(nodes: &[u32], links: &[(u32, u32)], flows: &[u32]) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Network("no nodes".into()));
        }
        let mut labels = nodes.to_vec();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Network("duplicate node id".into()));
        }
        let index = |id: u32| -> Result<usize> {
            labels
                .binary_search(&id)
                .map_err(|_| Error::Network(format!("unknown node {id}")))
        };

        let mut link_set = BTreeSet::new();
        for &(a, b) in links {
            if a == b {
                return Err(Error::Network(format!("self-link [{a},{a}]")));
            }
            let l = (index(a)?, index(b)?);
            if !link_set.insert(l) {
                return Err(Error::Network(format!("duplicate link [{a},{b}]")));
            }
        }
        let links: Vec<Link> = link_set
            .into_iter()
            .map(|(from, to)| Link { from, to })
            .collect();

        let mut flow_idx = Vec::with_capacity(flows.len());
        for &c in flows {
            flow_idx.push(index(c)?);
        }
        flow_idx.sort_unstable();
        if flow_idx.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Network("duplicate flow destination".into()));
        }
        if flow_idx.is_empty() {
            return Err(Error::Network("no flows".into()));
        }

        let n = labels.len();
        let mut out_links = vec![Vec::new(); n];
        let mut in_links = vec![Vec::new(); n];
        for (i, l) in links.iter().enumerate() {
            out_links[l.from].push(i);
            in_links[l.to].push(i);
        }
        let d_max = out_links
            .iter()
            .zip(&in_links)
            .map(|(o, i)| o.len().max(i.len()))
            .max()
            .unwrap_or(0);

        Ok(Self {
            labels,
            links,
            flows: flow_idx,
            out_links,
            in_links,
            d_max,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn num_flows(&self) -> usize {
        self.flows.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, l: usize) -> Link {
        self.links[l]
    }

    /// Destination node index of flow `k`.
    pub fn flow_dest(&self, k: usize) -> usize {
        self.flows[k]
    }

    pub fn flows(&self) -> &[usize] {
        &self.flows
    }

    /// Out-link indices of node `n`, ascending by receiver.
    pub fn out_links(&self, n: usize) -> &[usize] {
        &self.out_links[n]
    }

    pub fn in_links(&self, n: usize) -> &[usize] {
        &self.in_links[n]
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn label(&self, n: usize) -> u32 {
        self.labels[n]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn node_index(&self, label: u32) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    pub fn flow_index(&self, dest_label: u32) -> Option<usize> {
        let n = self.node_index(dest_label)?;
        self.flows.binary_search(&n).ok()
    }

    pub fn link_index(&self, from: usize, to: usize) -> Option<usize> {
        self.links.binary_search(&Link { from, to }).ok()
    }

    /// Whether a directed path leads from `src` to `dst`.
    pub fn reaches(&self, src: usize, dst: usize) -> bool {
        let mut seen = vec![false; self.num_nodes()];
        let mut queue = VecDeque::from([src]);
        seen[src] = true;
        while let Some(n) = queue.pop_front() {
            if n == dst {
                return true;
            }
            for &l in &self.out_links[n] {
                let m = self.links[l].to;
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        false
    }
}

impl PartialOrd for Link {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Link {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.from, self.to).cmp(&(other.from, other.to))
    }
}

/// Physical constants and bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams<T> {
    /// Admission cap per (node, flow) and slot.
    pub r_max: T,
    /// Peak transmit power per node.
    pub p_max: T,
    /// Link rate bound used in the backpressure offset.
    pub mu_max: T,
    /// Battery capacity.
    pub battery_capacity: T,
    /// (Dis-)charging efficiency.
    pub xi: T,
    /// Storage efficiency (fraction retained per slot).
    pub eta: T,
    /// Bound on harvested energy per slot.
    pub harvest_max: T,
    /// Largest utility derivative.
    pub g_max: T,
    pub delta1: T,
    pub delta2: T,
}

impl<T: Scalar> SystemParams<T> {
    fn fields(&self) -> [(&'static str, T); 10] {
        [
            ("r_max", self.r_max),
            ("p_max", self.p_max),
            ("mu_max", self.mu_max),
            ("battery_capacity", self.battery_capacity),
            ("xi", self.xi),
            ("eta", self.eta),
            ("harvest_max", self.harvest_max),
            ("g_max", self.g_max),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
        ]
    }

    /// Backpressure offset `R_max + d_max * mu_max`.
    pub fn theta(&self, d_max: usize) -> T {
        self.r_max + T::from_usize(d_max).unwrap() * self.mu_max
    }

    /// Upper bound on every data queue under the proposed controller.
    pub fn queue_bound(&self, v: T) -> T {
        self.g_max * v + self.r_max
    }
}

/// One line of a [`ValidationReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Human-readable inequality with both sides evaluated.
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub(crate) fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag}  {:<10} {}", c.name, c.detail)?;
        }
        for w in &self.warnings {
            writeln!(f, "WARN  {w}")?;
        }
        Ok(())
    }
}

pub(crate) fn leq<T: Scalar>(lhs: T, rhs: T) -> bool {
    lhs <= rhs + T::epsilon() * T::lit(16.0) * lhs.abs().max(rhs.abs()).max(T::one())
}

/// Checks positivity and the two battery-sizing conditions.
///
/// Only non-finite inputs are hard errors; everything else is reported.
pub fn validate_system<T: Scalar>(sys: &SystemParams<T>) -> Result<ValidationReport> {
    for (name, v) in sys.fields() {
        if !v.is_finite() {
            return Err(Error::NonFinite(name));
        }
    }
    let mut report = ValidationReport::default();

    let mut bad = Vec::new();
    for (name, v) in sys.fields() {
        let ok = match name {
            // rate sensitivities may legitimately be zero
            "delta1" | "delta2" => v >= T::zero(),
            _ => v > T::zero(),
        };
        if !ok {
            bad.push(format!("{name} = {v}"));
        }
    }
    if sys.xi > T::one() {
        bad.push(format!("xi = {} > 1", sys.xi));
    }
    if sys.eta > T::one() {
        bad.push(format!("eta = {} > 1", sys.eta));
    }
    if bad.is_empty() {
        report.push(
            "positivity",
            true,
            "all bounds positive, xi and eta in (0,1]".into(),
        );
    } else {
        report.push("positivity", false, bad.join(", "));
    }

    let (xi, eta) = (sys.xi, sys.eta);
    let a1_lhs = xi * sys.harvest_max;
    let a1_rhs = (T::one() - eta) * sys.battery_capacity + sys.p_max / xi;
    let a1 = leq(a1_lhs, a1_rhs);
    report.push(
        "A1",
        a1,
        format!(
            "xi*e_max = {a1_lhs} {} (1-eta)*E_max + P_max/xi = {a1_rhs}",
            if a1 { "<=" } else { ">" }
        ),
    );

    let a2_lhs = sys.battery_capacity;
    let a2_rhs = sys.p_max / xi + xi * sys.harvest_max;
    let a2 = leq(a2_rhs, a2_lhs);
    report.push(
        "A2",
        a2,
        format!(
            "E_max = {a2_lhs} {} P_max/xi + xi*e_max = {a2_rhs}",
            if a2 { ">=" } else { "<" }
        ),
    );
    Ok(report)
}

/// Admissible `(V, Gamma)` region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamWindow<T> {
    pub v_max: T,
    sys: SystemParams<T>,
}

impl<T: Scalar> ParamWindow<T> {
    pub fn system(&self) -> &SystemParams<T> {
        &self.sys
    }

    pub fn gamma_min(&self, v: T) -> T {
        let s = &self.sys;
        s.p_max / (s.xi * s.eta) + s.xi / s.eta * s.delta1 * s.g_max * v
    }

    pub fn gamma_max(&self, v: T) -> T {
        let s = &self.sys;
        (s.battery_capacity - s.xi * s.harvest_max) / s.eta - s.xi / s.eta * s.delta2 * s.g_max * v
    }

    /// `0 < V <= V_max` and `Gamma_min(V) <= Gamma <= Gamma_max(V)`, with a
    /// relative slack of a few ulps on every comparison.
    pub fn contains(&self, v: T, gamma: T) -> bool {
        v > T::zero()
            && leq(v, self.v_max)
            && leq(self.gamma_min(v), gamma)
            && leq(gamma, self.gamma_max(v))
    }

    pub fn check(&self, v: T, gamma: T) -> Result<()> {
        if self.contains(v, gamma) {
            Ok(())
        } else {
            Err(Error::Window {
                v: v.as_f64(),
                gamma: gamma.as_f64(),
                v_max: self.v_max.as_f64(),
                gamma_min: self.gamma_min(v).as_f64(),
                gamma_max: self.gamma_max(v).as_f64(),
            })
        }
    }
}

/// Returns the `(V, Gamma)` window for `sys`.
pub fn param_window<T: Scalar>(sys: &SystemParams<T>) -> Result<ParamWindow<T>> {
    let denom_rate = sys.delta1 + sys.delta2;
    if denom_rate == T::zero() && sys.g_max == T::zero() {
        return Err(Error::Param(
            "delta1 + delta2 and g_max are both zero; V_max undefined".into(),
        ));
    }
    let num = sys.battery_capacity - sys.xi * sys.harvest_max - sys.p_max / sys.xi;
    let den = sys.xi * denom_rate * sys.g_max;
    let v_max = if den == T::zero() {
        T::infinity()
    } else {
        num / den
    };
    Ok(ParamWindow { v_max, sys: *sys })
}

/// Control knobs of the proposed algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmParams<T> {
    pub v: T,
    pub gamma: T,
    pub theta: T,
}

impl<T: Scalar> AlgorithmParams<T> {
    /// Validates `(V, Gamma)` against the window; `gamma = None` selects
    /// `Gamma_min(V)`.
    pub fn new(sys: &SystemParams<T>, d_max: usize, v: T, gamma: Option<T>) -> Result<Self> {
        let window = param_window(sys)?;
        let gamma = gamma.unwrap_or_else(|| window.gamma_min(v));
        window.check(v, gamma)?;
        Ok(Self {
            v,
            gamma,
            theta: sys.theta(d_max),
        })
    }
}

/// Per-slot queue state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetState<T> {
    pub slot: u64,
    /// Data backlog, row-major `(node, flow)`.
    pub queues: Vec<T>,
    /// Stored energy per node.
    pub energy: Vec<T>,
    num_flows: usize,
}

impl<T: Scalar> NetState<T> {
    /// Empty queues and batteries at slot 0.
    pub fn initial(net: &NetworkSpec) -> Self {
        Self {
            slot: 0,
            queues: vec![T::zero(); net.num_nodes() * net.num_flows()],
            energy: vec![T::zero(); net.num_nodes()],
            num_flows: net.num_flows(),
        }
    }

    pub fn num_flows(&self) -> usize {
        self.num_flows
    }

    #[inline]
    pub fn q(&self, n: usize, k: usize) -> T {
        self.queues[n * self.num_flows + k]
    }

    #[inline]
    pub fn q_mut(&mut self, n: usize, k: usize) -> &mut T {
        &mut self.queues[n * self.num_flows + k]
    }

    /// Total backlog at node `n` summed over flows.
    pub fn node_backlog(&self, n: usize) -> T {
        self.queues[n * self.num_flows..(n + 1) * self.num_flows]
            .iter()
            .fold(T::zero(), |a, &b| a + b)
    }

    pub fn total_backlog(&self) -> T {
        self.queues.iter().fold(T::zero(), |a, &b| a + b)
    }
}

/// Dense `N x N` matrix of channel gains (`S_[n,m]` or `|h_[n,m]|^2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState<T> {
    n: usize,
    gains: Vec<T>,
}

impl<T: Scalar> ChannelState<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            gains: vec![T::zero(); n * n],
        }
    }

    /// Every ordered pair set to `g`.
    pub fn uniform(n: usize, g: T) -> Self {
        Self {
            n,
            gains: vec![g; n * n],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn gain(&self, from: usize, to: usize) -> T {
        self.gains[from * self.n + to]
    }

    #[inline]
    pub fn set(&mut self, from: usize, to: usize, g: T) {
        self.gains[from * self.n + to] = g;
    }

    /// Gain of every link, in link order.
    pub fn link_gains(&self, net: &NetworkSpec) -> Vec<T> {
        net.links()
            .iter()
            .map(|l| self.gain(l.from, l.to))
            .collect()
    }
}

/// Random state observed at the start of a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSample<T> {
    /// Energy offered by the harvester at each node.
    pub harvest: Vec<T>,
    pub channel: ChannelState<T>,
}

/// One slot's control output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDecision<T> {
    /// Admitted packets, row-major `(node, flow)`.
    pub admit: Vec<T>,
    /// Power per link.
    pub power: Vec<T>,
    /// Total rate per link.
    pub link_rate: Vec<T>,
    /// Rate per `(link, flow)`, row-major.
    pub flow_rate: Vec<T>,
    /// Harvested energy the node accepts into its battery (before the
    /// charging loss). Equal to the offered energy unless the policy
    /// performs harvest admission.
    pub harvest: Vec<T>,
}

impl<T: Scalar> SlotDecision<T> {
    /// Admission-only decision: no power, no rates, full harvest.
    pub fn idle(net: &NetworkSpec, env: &EnvSample<T>) -> Self {
        let (n, l, f) = (net.num_nodes(), net.num_links(), net.num_flows());
        Self {
            admit: vec![T::zero(); n * f],
            power: vec![T::zero(); l],
            link_rate: vec![T::zero(); l],
            flow_rate: vec![T::zero(); l * f],
            harvest: env.harvest.clone(),
        }
    }

    pub fn node_power(&self, net: &NetworkSpec, n: usize) -> T {
        net.out_links(n)
            .iter()
            .fold(T::zero(), |a, &l| a + self.power[l])
    }

    #[inline]
    pub fn rate(&self, l: usize, k: usize, num_flows: usize) -> T {
        self.flow_rate[l * num_flows + k]
    }
}

/// Data that actually moved during one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotFlows<T> {
    /// Packets moved per `(link, flow)`.
    pub moved: Vec<T>,
    /// Packets absorbed at each flow's destination.
    pub delivered: Vec<T>,
    /// Stored energy lost per node because the battery was full.
    pub overflow: Vec<T>,
}

/// Advances queues and batteries by one slot.
///
/// Each sender serves its out-links in ascending receiver order, moving
/// `min(remaining backlog, allocated rate)` of the scheduled flow; any unused
/// rate is padding. Batteries pay for the full allocated power regardless.
/// Arrivals at a flow's destination are delivered and never queued.
pub fn update_queues<T: Scalar>(
    net: &NetworkSpec,
    sys: &SystemParams<T>,
    state: &NetState<T>,
    dec: &SlotDecision<T>,
    env: &EnvSample<T>,
) -> Result<(NetState<T>, SlotFlows<T>)> {
    let f = net.num_flows();
    let tol = T::noise();
    let violation = |what: String| Error::Invariant {
        slot: state.slot,
        what,
        dump: format!("{state:?}\n{dec:?}"),
    };

    let mut next = state.clone();
    next.slot += 1;
    let mut moved = vec![T::zero(); net.num_links() * f];
    let mut delivered = vec![T::zero(); f];

    // departures come out of the backlog present at the start of the slot
    let mut remaining = state.queues.clone();
    for (l, link) in net.links().iter().enumerate() {
        for k in 0..f {
            let alloc = dec.flow_rate[l * f + k];
            if alloc <= T::zero() {
                continue;
            }
            let avail = &mut remaining[link.from * f + k];
            let x = alloc.min(*avail);
            *avail = *avail - x;
            moved[l * f + k] = x;
        }
    }
    for n in 0..net.num_nodes() {
        for k in 0..f {
            *next.q_mut(n, k) = remaining[n * f + k];
        }
    }
    for (l, link) in net.links().iter().enumerate() {
        for k in 0..f {
            let x = moved[l * f + k];
            if x == T::zero() {
                continue;
            }
            if link.to == net.flow_dest(k) {
                delivered[k] = delivered[k] + x;
            } else {
                *next.q_mut(link.to, k) = next.q(link.to, k) + x;
            }
        }
    }
    for n in 0..net.num_nodes() {
        for k in 0..f {
            if n == net.flow_dest(k) {
                // the sink absorbs anything admitted for itself
                delivered[k] = delivered[k] + dec.admit[n * f + k];
                *next.q_mut(n, k) = T::zero();
            } else {
                *next.q_mut(n, k) = next.q(n, k) + dec.admit[n * f + k];
            }
            if next.q(n, k) < T::zero() {
                return Err(violation(format!(
                    "negative backlog {} at node {} flow {}",
                    next.q(n, k),
                    net.label(n),
                    net.label(net.flow_dest(k))
                )));
            }
        }
    }

    let cap = sys.battery_capacity;
    let mut overflow = vec![T::zero(); net.num_nodes()];
    for n in 0..net.num_nodes() {
        let offered = env.harvest[n];
        let accepted = dec.harvest[n];
        if accepted < -tol || accepted > offered + tol {
            return Err(violation(format!(
                "node {} accepts {accepted} of {offered} harvested energy",
                net.label(n)
            )));
        }
        let spent = dec.node_power(net, n);
        let e = sys.eta * state.energy[n] - spent / sys.xi + sys.xi * accepted;
        let e = if e < T::zero() {
            if e < -tol {
                return Err(violation(format!(
                    "battery of node {} drops to {e} < 0",
                    net.label(n)
                )));
            }
            T::zero()
        } else if e > cap {
            // a full battery sheds the excess; policies that promise to
            // stay below capacity check `overflow` themselves
            if e > cap + tol {
                overflow[n] = e - cap;
            }
            cap
        } else {
            e
        };
        next.energy[n] = e;
    }

    Ok((
        next,
        SlotFlows {
            moved,
            delivered,
            overflow,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn table1(eta: f64, xi: f64, e_max: f64) -> SystemParams<f64> {
        SystemParams {
            r_max: 3.0,
            p_max: 2.0,
            mu_max: 2.0,
            battery_capacity: 160.0,
            xi,
            eta,
            harvest_max: e_max,
            g_max: 1.0,
            delta1: 2.0,
            delta2: 0.0,
        }
    }

    fn line() -> NetworkSpec {
        NetworkSpec::new(&[1, 2, 3], &[(1, 2), (2, 3)], &[3]).unwrap()
    }

    #[test]
    fn network_rejects_bad_topologies() {
        assert!(NetworkSpec::new(&[1, 2], &[(1, 1)], &[2]).is_err());
        assert!(NetworkSpec::new(&[1, 2], &[(1, 3)], &[2]).is_err());
        assert!(NetworkSpec::new(&[1, 2], &[(1, 2)], &[5]).is_err());
        assert!(NetworkSpec::new(&[1, 2], &[(1, 2), (1, 2)], &[2]).is_err());
        assert!(NetworkSpec::new(&[1, 1], &[], &[1]).is_err());
    }

    #[test]
    fn degrees_and_ordering() {
        let net = NetworkSpec::new(
            &[7, 1, 2, 3, 4, 5, 6],
            &[(6, 7), (1, 5), (2, 5), (3, 6), (4, 6), (5, 7)],
            &[7],
        )
        .unwrap();
        assert_eq!(net.d_max(), 2);
        assert_eq!(net.labels(), &[1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(net.link(0), Link { from: 0, to: 4 });
        assert!(net.reaches(0, 6));
        assert!(!net.reaches(6, 0));
        assert_eq!(net.flow_index(7), Some(0));
    }

    #[test]
    fn table1_conditions_hold() {
        let r = validate_system(&table1(0.98, 1.0, 5.0)).unwrap();
        assert!(r.passed(), "{r}");
        assert!(r.check("A1").unwrap().detail.contains("5.2"));
    }

    #[test]
    fn a1_fails_without_leakage() {
        let mut s = table1(1.0, 1.0, 3.0);
        s.battery_capacity = 100.0;
        let r = validate_system(&s).unwrap();
        assert!(!r.check("A1").unwrap().passed);
        assert!(r.check("A2").unwrap().passed);
    }

    #[test]
    fn a2_fails_for_small_battery() {
        let mut s = table1(0.5, 1.0, 1.0);
        s.battery_capacity = 4.0;
        assert!(validate_system(&s).unwrap().passed());
        s.battery_capacity = 2.5;
        let r = validate_system(&s).unwrap();
        assert!(!r.check("A2").unwrap().passed);
        assert!(r.check("A1").unwrap().passed);
    }

    #[test]
    fn nonfinite_is_hard_error() {
        let mut s = table1(0.98, 1.0, 5.0);
        s.p_max = f64::NAN;
        assert!(matches!(
            validate_system(&s),
            Err(Error::NonFinite("p_max"))
        ));
    }

    #[test]
    fn window_values() {
        let w = param_window(&table1(0.98, 1.0, 5.0)).unwrap();
        assert_abs_diff_eq!(w.v_max, 76.5, epsilon = 1e-12);
        assert_abs_diff_eq!(w.gamma_min(30.0), 2.0 / 0.98 + 60.0 / 0.98, epsilon = 1e-12);
        assert_abs_diff_eq!(w.gamma_min(30.0), 63.265306122448976, epsilon = 1e-9);
        assert_abs_diff_eq!(w.gamma_max(30.0), 155.0 / 0.98, epsilon = 1e-12);
        assert_abs_diff_eq!(w.gamma_min(w.v_max), w.gamma_max(w.v_max), epsilon = 1e-9);
        assert!(w.contains(30.0, 100.0));
        assert!(!w.contains(30.0, 60.0));
        assert!(!w.contains(80.0, 150.0));
    }

    #[test]
    fn degenerate_window_rejected() {
        let mut s = table1(0.98, 1.0, 5.0);
        s.delta1 = 0.0;
        s.g_max = 0.0;
        assert!(param_window(&s).is_err());
        s.g_max = 1.0;
        assert!(param_window(&s).unwrap().v_max.is_infinite());
    }

    #[test]
    fn theta_matches_table1() {
        let s = table1(0.98, 1.0, 5.0);
        assert_eq!(s.theta(2), 7.0);
        let p = AlgorithmParams::new(&s, 2, 30.0, None).unwrap();
        assert_eq!(p.theta, 7.0);
        assert!(AlgorithmParams::new(&s, 2, 30.0, Some(50.0)).is_err());
    }

    fn env(net: &NetworkSpec, h: f64) -> EnvSample<f64> {
        EnvSample {
            harvest: vec![h; net.num_nodes()],
            channel: ChannelState::uniform(net.num_nodes(), 1.0),
        }
    }

    #[test]
    fn harvest_only_slot() {
        let net = line();
        let sys = table1(0.98, 1.0, 5.0);
        let s0 = NetState::initial(&net);
        let e = env(&net, 2.0);
        let d = SlotDecision::idle(&net, &e);
        let (s1, _) = update_queues(&net, &sys, &s0, &d, &e).unwrap();
        assert_eq!(s1.energy, vec![2.0; 3]);
        assert_eq!(s1.queues, s0.queues);
        assert_eq!(s1.slot, 1);
    }

    #[test]
    fn battery_discharge() {
        let net = line();
        let sys = table1(0.98, 1.0, 5.0);
        let mut s0 = NetState::initial(&net);
        s0.energy[0] = 10.0;
        let e = env(&net, 0.0);
        let mut d = SlotDecision::idle(&net, &e);
        d.power[0] = 2.0;
        let (s1, _) = update_queues(&net, &sys, &s0, &d, &e).unwrap();
        assert_abs_diff_eq!(s1.energy[0], 7.8, epsilon = 1e-12);
    }

    #[test]
    fn idle_fill_moves_only_backlog() {
        let net = line();
        let sys = table1(0.98, 1.0, 5.0);
        let mut s0 = NetState::initial(&net);
        *s0.q_mut(0, 0) = 1.0;
        s0.energy[0] = 10.0;
        let e = env(&net, 0.0);
        let mut d = SlotDecision::idle(&net, &e);
        d.power[0] = 1.0;
        d.link_rate[0] = 2.0;
        d.flow_rate[0] = 2.0;
        let (s1, flows) = update_queues(&net, &sys, &s0, &d, &e).unwrap();
        assert_eq!(s1.q(0, 0), 0.0);
        assert_eq!(s1.q(1, 0), 1.0);
        assert_eq!(flows.moved[0], 1.0);
        // energy is charged for the padded transmission too
        assert_abs_diff_eq!(s1.energy[0], 8.8, epsilon = 1e-12);
    }

    #[test]
    fn relay_forwards_old_backlog_only() {
        let net = line();
        let sys = table1(0.98, 1.0, 5.0);
        let mut s0 = NetState::initial(&net);
        *s0.q_mut(0, 0) = 3.0;
        s0.energy = vec![10.0; 3];
        let e = env(&net, 0.0);
        let mut d = SlotDecision::idle(&net, &e);
        d.power = vec![1.0, 1.0];
        d.flow_rate = vec![2.0, 2.0];
        d.link_rate = vec![2.0, 2.0];
        let (s1, flows) = update_queues(&net, &sys, &s0, &d, &e).unwrap();
        assert_eq!(s1.q(0, 0), 1.0);
        assert_eq!(s1.q(1, 0), 2.0);
        assert_eq!(flows.delivered[0], 0.0);
    }

    #[test]
    fn overdraw_is_an_invariant_violation() {
        let net = line();
        let sys = table1(0.98, 1.0, 5.0);
        let s0 = NetState::initial(&net);
        let e = env(&net, 0.0);
        let mut d = SlotDecision::idle(&net, &e);
        d.power[0] = 1.0;
        assert!(matches!(
            update_queues(&net, &sys, &s0, &d, &e),
            Err(Error::Invariant { slot: 0, .. })
        ));
    }

    #[test]
    fn tiny_overshoot_is_clamped() {
        let net = line();
        let sys = table1(1.0, 1.0, 5.0);
        let mut s0 = NetState::initial(&net);
        s0.energy[0] = 160.0;
        let e = env(&net, 1e-12);
        let d = SlotDecision::idle(&net, &e);
        let (s1, flows) = update_queues(&net, &sys, &s0, &d, &e).unwrap();
        assert_eq!(s1.energy[0], 160.0);
        assert_eq!(flows.overflow[0], 0.0);
    }

    #[test]
    fn full_battery_sheds_excess() {
        let net = line();
        let sys = table1(1.0, 1.0, 5.0);
        let mut s0 = NetState::initial(&net);
        s0.energy[2] = 158.0;
        let e = env(&net, 5.0);
        let d = SlotDecision::idle(&net, &e);
        let (s1, flows) = update_queues(&net, &sys, &s0, &d, &e).unwrap();
        assert_eq!(s1.energy[2], 160.0);
        assert_eq!(flows.overflow[2], 3.0);
    }
}
