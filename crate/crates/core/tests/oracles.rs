//! The reference implementations are themselves checked on cases with
//! known answers.

mod common;

use common::*;
use ehnet::model::{ChannelState, NetworkSpec};
use ehnet::rate::RatePowerModel;

#[test]
fn golden_section_known_vertex() {
    let x = golden_section_oracle(|x| -(x - 1.0) * (x - 1.0), 0.0, 3.0, 1e-9).unwrap();
    assert!((x - 1.0).abs() < 1e-8);
}

#[test]
fn golden_section_boundary_maximum() {
    assert_eq!(golden_section_oracle(|x| x, 0.0, 3.0, 1e-9).unwrap(), 3.0);
    assert_eq!(golden_section_oracle(|x| -x, 0.0, 3.0, 1e-9).unwrap(), 0.0);
}

#[test]
fn golden_section_rejects_bimodal() {
    assert!(golden_section_oracle(|x| (3.0 * x).cos(), 0.0, 6.0, 1e-9).is_err());
}

#[test]
fn grid_single_link_exact() {
    let net = NetworkSpec::new(&[1, 2], &[(1, 2)], &[2]).unwrap();
    let model = RatePowerModel::linear_gain(vec![1.0, 2.0]).unwrap();
    let ch = ChannelState::uniform(2, 2.0);
    let (p, v) = grid_power_oracle(&net, &model, &ch, &[1.0], &[-1.0, 0.0], 2.0, 200).unwrap();
    assert_eq!(p, vec![2.0]);
    assert_eq!(v, 2.0);
    let (p, v) = grid_power_oracle(&net, &model, &ch, &[0.0], &[-1.0, 0.0], 2.0, 200).unwrap();
    assert_eq!(p, vec![0.0]);
    assert_eq!(v, 0.0);
}

#[test]
fn grid_refuses_large_instances() {
    let net = NetworkSpec::new(&[1, 2, 3, 4, 5], &[(1, 5), (2, 5), (3, 5), (4, 5)], &[5]).unwrap();
    let model = RatePowerModel::linear_gain(vec![1.0]).unwrap();
    let ch = ChannelState::uniform(5, 1.0);
    assert!(grid_power_oracle(&net, &model, &ch, &[0.0; 4], &[0.0; 5], 2.0, 200).is_err());
    let small = NetworkSpec::new(&[1, 2], &[(1, 2)], &[2]).unwrap();
    assert!(grid_power_oracle(&small, &model, &ch, &[0.0], &[0.0; 2], 2.0, 10).is_err());
}

#[test]
fn refining_the_grid_never_hurts() {
    let net = NetworkSpec::new(&[1, 2, 3], &[(1, 2), (1, 3)], &[3]).unwrap();
    let model = RatePowerModel::new(
        ehnet::RateKind::OrthogonalLog,
        1.0,
        ehnet::rate::ChannelDomain::new(vec![0.7, 1.3]).unwrap(),
    )
    .unwrap();
    let mut ch = ChannelState::zeros(3);
    ch.set(0, 1, 1.3);
    ch.set(0, 2, 0.7);
    let w = [3.0, 2.0];
    let prices = [-0.8, 0.0, 0.0];
    let coarse = grid_power_oracle(&net, &model, &ch, &w, &prices, 2.0, 50)
        .unwrap()
        .1;
    let fine = grid_power_oracle(&net, &model, &ch, &w, &prices, 2.0, 200)
        .unwrap()
        .1;
    assert!(fine >= coarse);
    let f = |x: f64| 30.0 * (1.0 + x).ln() - 10.0 * x;
    let a = golden_section_oracle(f, 0.0, 3.0, 1e-3).unwrap();
    let b = golden_section_oracle(f, 0.0, 3.0, 1e-9).unwrap();
    assert!(f(b) >= f(a) - 1e-12);
}

#[test]
fn gap_grid_finds_feasible_points() {
    let sys = fig1_scenario(&[]).sys;
    let (v, g, val) = grid_gap_oracle(&sys, 2, 7, 76.5, 100);
    assert!(val.is_finite());
    let w = ehnet::model::param_window(&sys).unwrap();
    assert!(w.contains(v, g));
}
