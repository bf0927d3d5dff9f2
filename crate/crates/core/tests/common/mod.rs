//! Brute-force reference implementations. They share no code with the
//! library's solvers and exist only to check them.

#![allow(dead_code)]

use ehnet::model::{ChannelState, NetworkSpec, SystemParams};
use ehnet::rate::{RateKind, RatePowerModel};
use ehnet::scenario::Scenario;
use ehnet::Config;

pub const FIG1: &str = include_str!("../../../../configs/paper_fig1.cfg");

pub fn fig1(overrides: &[&str]) -> Config {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    Config::parse(FIG1, &o).unwrap()
}

pub fn fig1_scenario(overrides: &[&str]) -> Scenario<f64> {
    fig1(overrides).scenario
}

/// Rate of every link, written out from the model definitions.
pub fn oracle_rates(
    net: &NetworkSpec,
    model: &RatePowerModel<f64>,
    ch: &ChannelState<f64>,
    p: &[f64],
) -> Vec<f64> {
    let links = net.links();
    let sigma2 = model.noise_variance;
    (0..links.len())
        .map(|i| {
            let (s, r) = (links[i].from, links[i].to);
            let own = ch.gain(s, r) * p[i];
            match model.kind {
                RateKind::LinearGain => own,
                RateKind::OrthogonalLog => (1.0 + own / sigma2).ln(),
                RateKind::InterferenceLog => {
                    let mut noise = sigma2;
                    for (j, lj) in links.iter().enumerate() {
                        if j != i {
                            noise += ch.gain(lj.from, r) * p[j];
                        }
                    }
                    (1.0 + own / noise).ln()
                }
            }
        })
        .collect()
}

/// Weighted rate sum plus priced power.
pub fn oracle_objective(
    net: &NetworkSpec,
    model: &RatePowerModel<f64>,
    ch: &ChannelState<f64>,
    w: &[f64],
    prices: &[f64],
    p: &[f64],
) -> f64 {
    let mu = oracle_rates(net, model, ch, p);
    let mut total = 0.0;
    for (i, l) in net.links().iter().enumerate() {
        total += w[i] * mu[i] + prices[l.from] * p[i];
    }
    total
}

/// Points of the simplex `{x >= 0, sum x <= p_max}` in `dim` coordinates on
/// a grid of `steps` cells per unit.
fn simplex_grid(dim: usize, steps: usize, p_max: f64) -> Vec<Vec<f64>> {
    fn rec(dim: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == dim {
            out.push(cur.clone());
            return;
        }
        for i in 0..=left {
            cur.push(i);
            rec(dim, left - i, cur, out);
            cur.pop();
        }
    }
    let mut idx = Vec::new();
    rec(dim, steps, &mut Vec::new(), &mut idx);
    idx.into_iter()
        .map(|v| {
            v.into_iter()
                .map(|i| p_max * i as f64 / steps as f64)
                .collect()
        })
        .collect()
}

/// Exhaustive search over per-node power simplices on a grid of step
/// `p_max / steps`. Separable models are searched node by node; the
/// interference model is searched jointly.
///
/// Refuses instances with more than 3 senders or more than 2 out-links per
/// sender, and joint grids above five million points.
pub fn grid_power_oracle(
    net: &NetworkSpec,
    model: &RatePowerModel<f64>,
    ch: &ChannelState<f64>,
    w: &[f64],
    prices: &[f64],
    p_max: f64,
    steps: usize,
) -> Result<(Vec<f64>, f64), String> {
    if steps < 50 {
        return Err(format!("grid of {steps} steps is too coarse"));
    }
    let senders: Vec<usize> = (0..net.num_nodes())
        .filter(|&n| !net.out_links(n).is_empty())
        .collect();
    if senders.len() > 3 || senders.iter().any(|&n| net.out_links(n).len() > 2) {
        return Err("instance too large".into());
    }
    let grids: Vec<Vec<Vec<f64>>> = senders
        .iter()
        .map(|&n| simplex_grid(net.out_links(n).len(), steps, p_max))
        .collect();
    let mut best = vec![0.0; net.num_links()];

    if model.kind != RateKind::InterferenceLog {
        for (s, &n) in senders.iter().enumerate() {
            let mut best_val = f64::NEG_INFINITY;
            let mut best_pt = grids[s][0].clone();
            for pt in &grids[s] {
                let mut p = vec![0.0; net.num_links()];
                for (&l, &x) in net.out_links(n).iter().zip(pt) {
                    p[l] = x;
                }
                let v = oracle_objective(net, model, ch, w, prices, &p);
                if v > best_val {
                    best_val = v;
                    best_pt = pt.clone();
                }
            }
            for (&l, &x) in net.out_links(n).iter().zip(&best_pt) {
                best[l] = x;
            }
        }
        let v = oracle_objective(net, model, ch, w, prices, &best);
        return Ok((best, v));
    }

    let size: usize = grids.iter().map(|g| g.len()).product();
    if size > 5_000_000 {
        return Err(format!("joint grid of {size} points"));
    }
    let mut best_val = f64::NEG_INFINITY;
    let mut idx = vec![0usize; senders.len()];
    let mut p = vec![0.0; net.num_links()];
    loop {
        for (s, &n) in senders.iter().enumerate() {
            for (&l, &x) in net.out_links(n).iter().zip(&grids[s][idx[s]]) {
                p[l] = x;
            }
        }
        let v = oracle_objective(net, model, ch, w, prices, &p);
        if v > best_val {
            best_val = v;
            best.clone_from(&p);
        }
        let mut s = 0;
        loop {
            if s == senders.len() {
                return Ok((best, best_val));
            }
            idx[s] += 1;
            if idx[s] < grids[s].len() {
                break;
            }
            idx[s] = 0;
            s += 1;
        }
    }
}

/// Golden-section maximization of a unimodal function. A 65-point scan
/// first rejects functions that go down and then up again.
pub fn golden_section_oracle<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, String> {
    let n = 64;
    let ys: Vec<f64> = (0..=n)
        .map(|i| f(lo + (hi - lo) * i as f64 / n as f64))
        .collect();
    let slack = 1e-12 * ys.iter().fold(1.0_f64, |m, y| m.max(y.abs()));
    let mut falling = false;
    for pair in ys.windows(2) {
        if pair[1] < pair[0] - slack {
            falling = true;
        } else if falling && pair[1] > pair[0] + slack {
            return Err("not unimodal".into());
        }
    }
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
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
    let mid = (a + b) / 2.0;
    // boundary maxima: the bracket collapses onto an end point
    let best = [lo, mid, hi]
        .into_iter()
        .max_by(|x, y| f(*x).partial_cmp(&f(*y)).unwrap())
        .unwrap();
    Ok(best)
}

/// Gap objective written out term by term.
pub fn oracle_gap(sys: &SystemParams<f64>, d_max: f64, n: f64, v: f64, gamma: f64) -> f64 {
    let (d, mu, r) = (d_max, sys.mu_max, sys.r_max);
    let b1 = 2.0 * d * d * mu * mu + 0.5 * r * r + 2.0 * d * mu * r;
    let b2a = sys.p_max / sys.xi + (1.0 - sys.eta) * gamma;
    let b2b = -sys.xi * sys.harvest_max + (1.0 - sys.eta) * gamma;
    let b2 = 0.5 * f64::max(b2a * b2a, b2b * b2b);
    let b3 =
        sys.eta * (1.0 - sys.eta) * f64::max((sys.battery_capacity - gamma).powi(2), gamma * gamma);
    (n * n * b1 + n * (b2 + b3)) / v
}

/// Best gap on a `steps x steps` grid over the rectangle
/// `(0, v_cap] x [Gamma_min(0), Gamma_max(0)]`, keeping only points that
/// satisfy the window constraints.
pub fn grid_gap_oracle(
    sys: &SystemParams<f64>,
    d_max: usize,
    n: usize,
    v_cap: f64,
    steps: usize,
) -> (f64, f64, f64) {
    let gmin =
        |v: f64| sys.p_max / (sys.xi * sys.eta) + sys.xi / sys.eta * sys.delta1 * sys.g_max * v;
    let gmax = |v: f64| {
        (sys.battery_capacity - sys.xi * sys.harvest_max) / sys.eta
            - sys.xi / sys.eta * sys.delta2 * sys.g_max * v
    };
    let (g_lo, g_hi) = (gmin(0.0), gmax(0.0));
    let mut best = (f64::NAN, f64::NAN, f64::INFINITY);
    for i in 1..=steps {
        let v = v_cap * i as f64 / steps as f64;
        for j in 0..=steps {
            let g = g_lo + (g_hi - g_lo) * j as f64 / steps as f64;
            if g < gmin(v) || g > gmax(v) {
                continue;
            }
            let val = oracle_gap(sys, d_max as f64, n as f64, v, g);
            if val < best.2 {
                best = (v, g, val);
            }
        }
    }
    best
}
