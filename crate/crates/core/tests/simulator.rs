mod common;

use common::*;
use ehnet::model::{param_window, ChannelState, EnvSample, NetState};
use ehnet::sim::{run, run_ensemble, run_with, EnsembleOptions, EnvProcess, Environment, RunSpec};
use ehnet::Algorithm;

fn spec(horizon: u64, seed: u64) -> RunSpec {
    RunSpec {
        horizon,
        seed,
        record: true,
    }
}

const PROPOSED: Algorithm = Algorithm::Proposed {
    v: 30.0,
    gamma: None,
};

/// Flips between starving and flooding the network: full harvest and
/// good channels while batteries are low, nothing and bad channels once
/// they fill up, with periodic bursts that ignore the state.
struct Adversary {
    n: usize,
    e_max: f64,
    levels: [f64; 2],
    links: Vec<(usize, usize)>,
    threshold: f64,
}

impl Environment<f64> for Adversary {
    fn sample(&mut self, slot: u64, state: &NetState<f64>) -> EnvSample<f64> {
        let burst = (slot / 97).is_multiple_of(3);
        let harvest = state
            .energy
            .iter()
            .map(|&e| {
                if burst || e < self.threshold {
                    self.e_max
                } else {
                    0.0
                }
            })
            .collect();
        let mut channel = ChannelState::zeros(self.n);
        for (i, &(a, b)) in self.links.iter().enumerate() {
            let good = state.energy[a] > self.threshold || (slot + i as u64).is_multiple_of(5);
            channel.set(a, b, if good { self.levels[1] } else { self.levels[0] });
        }
        EnvSample { harvest, channel }
    }
}

#[test]
fn same_seed_same_trace() {
    let sc = fig1_scenario(&[]);
    for alg in [PROPOSED, Algorithm::Esa { v: 30.0 }, Algorithm::Greedy] {
        let a = run(&sc, &alg, spec(300, 9)).unwrap();
        let b = run(&sc, &alg, spec(300, 9)).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.metrics, b.metrics);
        let c = run(&sc, &alg, spec(300, 10)).unwrap();
        assert_ne!(a.records, c.records);
    }
}

#[test]
fn env_samples_respect_bounds_and_are_order_free() {
    let sc = fig1_scenario(&[]);
    let mut a = EnvProcess::new(&sc, 5);
    let mut b = EnvProcess::new(&sc, 5);
    let s = NetState::initial(&sc.net);
    let forward: Vec<_> = (0..50).map(|t| a.sample(t, &s)).collect();
    for t in (0..50).rev() {
        assert_eq!(b.sample(t, &s), forward[t as usize]);
    }
    let mut harvests = 0;
    for x in &forward {
        for &h in &x.harvest {
            assert!(h == 0.0 || h == 5.0);
            harvests += (h > 0.0) as usize;
        }
        for l in sc.net.links() {
            let g = x.channel.gain(l.from, l.to);
            assert!(g == 1.0 || g == 2.0);
        }
    }
    // 350 fair coin flips
    assert!((125..=225).contains(&harvests), "{harvests}");
}

#[test]
fn zero_horizon_gives_empty_trace() {
    let sc = fig1_scenario(&[]);
    let t = run(&sc, &PROPOSED, spec(0, 1)).unwrap();
    assert!(t.records.is_empty());
    assert_eq!(t.metrics.utility, 0.0);
    assert_eq!(t.final_state, NetState::initial(&sc.net));
}

#[test]
fn trace_slots_are_monotone() {
    let sc = fig1_scenario(&[]);
    let t = run(&sc, &PROPOSED, spec(120, 1)).unwrap();
    assert_eq!(t.records.len(), 120);
    for (i, r) in t.records.iter().enumerate() {
        assert_eq!(r.state.slot, i as u64);
    }
}

#[test]
fn proposed_stays_in_bounds_on_table_one() {
    let sc = fig1_scenario(&[]);
    let w = param_window(&sc.sys).unwrap();
    let bound = sc.sys.queue_bound(30.0);
    assert_eq!(bound, 33.0);
    assert!(w.gamma_min(30.0) > 0.0);
    for seed in 1..=10 {
        let t = run(&sc, &PROPOSED, spec(1200, seed)).unwrap();
        for r in &t.records {
            for &q in &r.state.queues {
                assert!((0.0..=bound).contains(&q));
            }
            for &e in &r.state.energy {
                assert!((0.0..=160.0).contains(&e));
            }
        }
    }
}

#[test]
fn every_algorithm_respects_energy_availability() {
    for eta in ["system.eta=0.98", "system.eta=0.96"] {
        let sc = fig1_scenario(&[eta, "system.xi=0.95"]);
        for alg in [PROPOSED, Algorithm::Esa { v: 30.0 }, Algorithm::Greedy] {
            let t = run(&sc, &alg, spec(1200, 3)).unwrap();
            for r in &t.records {
                for n in 0..sc.net.num_nodes() {
                    let spend = r.decision.node_power(&sc.net, n);
                    let avail = sc.sys.xi * sc.sys.eta * r.state.energy[n];
                    assert!(
                        spend <= avail * (1.0 + 1e-12) + 1e-12,
                        "{} {spend} > {avail}",
                        alg.name()
                    );
                }
            }
        }
    }
}

#[test]
fn proposed_survives_adversarial_environment() {
    // an ideal battery only stays stable when harvest is below peak spend
    for (eta, e_max) in [(0.98, 5.0), (0.96, 5.0), (1.0, 2.0)] {
        let o = [
            format!("system.eta={eta}"),
            format!("system.harvest_max={e_max}"),
        ];
        let sc = fig1_scenario(&[&o[0], &o[1]]);
        assert!(sc.validate().unwrap().passed());
        let w = param_window(&sc.sys).unwrap();
        for (v, gamma) in [(30.0, None), (10.0, Some(w.gamma_max(10.0)))] {
            let mut ctl = Algorithm::Proposed { v, gamma }.build(&sc).unwrap();
            let mut env = Adversary {
                n: 7,
                e_max: sc.sys.harvest_max,
                levels: [1.0, 2.0],
                links: sc.net.links().iter().map(|l| (l.from, l.to)).collect(),
                threshold: gamma.unwrap_or(w.gamma_min(v)),
            };
            // the run itself aborts on any bound violation
            let t = run_with(&sc, ctl.as_mut(), &mut env, spec(10_000, 0)).unwrap();
            assert!(t.metrics.max_backlog <= sc.sys.queue_bound(v) + 1e-9);
            assert!(t.metrics.max_energy <= 160.0);
            assert!(ctl.keeps_battery_in_range());
        }
    }
}

#[test]
fn ensemble_of_one_equals_single_run() {
    let sc = fig1_scenario(&[]);
    let (s, traces) = run_ensemble(&sc, &PROPOSED, 200, 1, 42, EnsembleOptions::default()).unwrap();
    let t = run(
        &sc,
        &PROPOSED,
        RunSpec {
            horizon: 200,
            seed: 42,
            record: false,
        },
    )
    .unwrap();
    assert_eq!(s.utility.mean, t.metrics.utility);
    assert_eq!(s.utility.std, 0.0);
    assert_eq!(s.per_run, vec![t.metrics.clone()]);
    assert_eq!(traces[0].metrics, t.metrics);
}

#[test]
fn ensemble_is_thread_count_independent() {
    let sc = fig1_scenario(&[]);
    let one = EnsembleOptions {
        threads: Some(1),
        record: false,
    };
    let four = EnsembleOptions {
        threads: Some(4),
        record: false,
    };
    let (a, _) = run_ensemble(&sc, &PROPOSED, 300, 6, 3, one).unwrap();
    let (b, _) = run_ensemble(&sc, &PROPOSED, 300, 6, 3, four).unwrap();
    assert_eq!(a, b);
    assert!(run_ensemble(&sc, &PROPOSED, 300, 0, 3, one).is_err());
}

#[test]
fn base_seeds_give_consistent_means() {
    let sc = fig1_scenario(&[]);
    let (a, _) = run_ensemble(&sc, &PROPOSED, 1200, 10, 1, EnsembleOptions::default()).unwrap();
    let (b, _) = run_ensemble(&sc, &PROPOSED, 1200, 10, 1001, EnsembleOptions::default()).unwrap();
    assert_ne!(a.utility.mean, b.utility.mean);
    let spread = 3.0 * a.utility.std.max(b.utility.std);
    assert!(
        (a.utility.mean - b.utility.mean).abs() <= spread,
        "{:?} vs {:?}",
        a.utility,
        b.utility
    );
}

#[test]
fn bad_parameters_fail_before_running() {
    let sc = fig1_scenario(&[]);
    let err = run_ensemble(
        &sc,
        &Algorithm::Proposed {
            v: 30.0,
            gamma: Some(1.0),
        },
        10,
        3,
        1,
        EnsembleOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, ehnet::Error::Window { .. }), "{err}");
}

#[test]
fn runs_in_single_precision() {
    let cfg = ehnet::config::Config::<f32>::parse(FIG1, &[]).unwrap();
    let t = run(&cfg.scenario, &PROPOSED, spec(1200, 1)).unwrap();
    let d = run(&fig1_scenario(&[]), &PROPOSED, spec(1200, 1)).unwrap();
    assert!(t.metrics.max_backlog <= 33.0 + 1e-3);
    assert!(
        (t.metrics.utility - d.metrics.utility).abs() < 0.05 * d.metrics.utility.abs().max(0.1)
    );
}

#[test]
fn utility_of_average_dominates_average_utility() {
    let sc = fig1_scenario(&[]);
    for alg in [PROPOSED, Algorithm::Esa { v: 30.0 }, Algorithm::Greedy] {
        let (s, _) = run_ensemble(&sc, &alg, 1200, 4, 1, EnsembleOptions::default()).unwrap();
        for m in &s.per_run {
            assert!(
                m.utility >= m.mean_slot_utility - 1e-12,
                "{}: {m:?}",
                alg.name()
            );
        }
    }
}
