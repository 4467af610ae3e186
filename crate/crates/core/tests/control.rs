mod common;

use std::f64::consts::FRAC_PI_2;

use common::{fill_window, mission, models, opposing_steps, DT};
use sharedwalk::control::*;
use sharedwalk::features::Manoeuvre;
use sharedwalk::geometry::{Point2, Pose2};

#[test]
fn quarter_circle_at_constant_turn_rate() {
    let p = PlantParams::default();
    let omega = FRAC_PI_2;
    let alpha = (omega * p.wheelbase).atan();
    let mut s = WalkerState::at(Pose2::new(0.0, 0.0, 0.0));
    s.alpha_r = alpha;
    s.alpha_l = alpha;
    let human = HumanInput {
        v: 1.0,
        tau_r: 0.0,
        tau_l: 0.0,
    };
    for _ in 0..1000 {
        s = step_plant(&s, human, (0.0, 0.0), &p, 0.001);
    }
    let r = 1.0 / omega;
    assert!((s.pose.theta - FRAC_PI_2).abs() < 0.01 * FRAC_PI_2);
    assert!((s.pose.x - r).abs() < 0.01 * r, "x {}", s.pose.x);
    assert!((s.pose.y - r).abs() < 0.01 * r, "y {}", s.pose.y);
}

#[test]
fn inverse_ackermann_matches_turning_centre_geometry() {
    let p = PlantParams::default();
    for kappa in [0.5, 1.2, 0.05] {
        let (ar, al) = inverse_ackermann(kappa, &p);
        // turning centre on the rear axle line, 1/κ to the left
        let r = 1.0 / kappa;
        assert!((ar - p.wheelbase.atan2(r + p.track / 2.0)).abs() < 1e-12);
        assert!((al - p.wheelbase.atan2(r - p.track / 2.0)).abs() < 1e-12);
        // mirror image for the right turn
        let (mr, ml) = inverse_ackermann(-kappa, &p);
        assert!((mr + al).abs() < 1e-12 && (ml + ar).abs() < 1e-12);
    }
    let (ar, al) = inverse_ackermann(0.5, &p);
    let centre = (p.wheelbase * 0.5f64).atan();
    assert!((centre - 0.3f64.atan()).abs() < 1e-15);
    assert!(ar < centre && centre < al);
    assert_eq!(inverse_ackermann(0.0, &p), (0.0, 0.0));
}

#[test]
fn gain_sweep_reproduces_the_schedule() {
    for i in 0..=10 {
        let eps = i as f64 / 10.0;
        let lambda = 1.0 - eps;
        let g = GainConstants::STEERING_ANGLE.schedule(eps);
        assert_eq!(g.lambda, lambda);
        assert_eq!(g.a, 25.0 + 15.0 * lambda);
        assert_eq!(g.b, 15.0 + 10.0 * lambda);
        assert!((0.0..=1.0).contains(&g.lambda));
        assert!((25.0..=40.0).contains(&g.a) && (15.0..=25.0).contains(&g.b));
        let d = GainConstants::STEERING_DIRECTION.schedule(eps);
        assert_eq!((d.a, d.b), (25.0, 25.0));
    }
    let hi = GainConstants::STEERING_ANGLE.schedule(1.0);
    assert_eq!((hi.lambda, hi.a, hi.b), (0.0, 25.0, 15.0));
    let lo = GainConstants::STEERING_ANGLE.schedule(0.0);
    assert_eq!((lo.lambda, lo.a, lo.b), (1.0, 40.0, 25.0));
}

#[test]
fn confidence_outside_the_unit_interval_is_clamped() {
    assert_eq!(GainConstants::STEERING_ANGLE.schedule(1.7).lambda, 0.0);
    assert_eq!(GainConstants::STEERING_ANGLE.schedule(-0.2).lambda, 1.0);
}

#[test]
fn zero_error_gives_zero_torque() {
    for i in 0..=10 {
        let g = GainConstants::STEERING_ANGLE.schedule(i as f64 / 10.0);
        assert_eq!(viscoelastic(0.0, 0.0, &g), 0.0);
    }
    let t = TorqueCommand::combine(0.4, (0.0, 0.0), (0.0, 0.0));
    assert_eq!(t.robot(), (0.0, 0.0));
}

#[test]
fn lower_confidence_never_weakens_the_angle_branch() {
    let (e, e_dot) = (0.2, -0.05);
    let mut last = 0.0;
    for i in (0..=10).rev() {
        let g = GainConstants::STEERING_ANGLE.schedule(i as f64 / 10.0);
        let t = TorqueCommand::combine(g.lambda, (viscoelastic(e, e_dot, &g), 0.0), (0.0, 0.0));
        assert!(t.tau_r.abs() >= last);
        last = t.tau_r.abs();
    }
}

#[test]
fn no_torque_until_the_window_is_full() {
    let (ae, head) = models();
    let m = mission(0.0, Manoeuvre::Straight, 0.0);
    let mut ctrl = Controller::new(
        ControlConfig::default(),
        Pose2::new(0.0, 0.0, 0.0),
        ae.config().window,
    );
    let mut state = WalkerState::at(Pose2::new(0.0, 0.0, 0.3));
    state.alpha_r = 0.2;
    let out = ctrl.step(&m, &ae, &head, &state, DT).unwrap();
    assert!(!out.torque.engaged);
    assert_eq!(out.torque.robot(), (0.0, 0.0));
    assert!(out.confidence.is_none());
}

#[test]
fn going_straight_where_left_is_expected_pushes_left() {
    let (ae, head) = models();
    let m = mission(0.5, Manoeuvre::Left, 0.0);
    let mut ctrl = Controller::new(
        ControlConfig::default(),
        Pose2::new(0.0, 0.0, 0.0),
        ae.config().window,
    );
    let (_, out) = fill_window(&mut ctrl, &m, &ae, &head);
    assert!(out.refs.alpha_r > 0.0 && out.refs.alpha_l > out.refs.alpha_r);
    assert!(out.torque.tau_alpha_r > 0.0 && out.torque.tau_alpha_l > 0.0);
    assert!(out.torque.tau_r > 0.0 && out.torque.tau_l > 0.0);
    let c = out.confidence.unwrap();
    assert!((c.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(out.eps_hat, c.of(Manoeuvre::Left));
}

#[test]
fn on_reference_with_matching_heading_torque_vanishes() {
    let (ae, head) = models();
    let m = mission(0.0, Manoeuvre::Straight, 0.0);
    let mut ctrl = Controller::new(
        ControlConfig::default(),
        Pose2::new(0.0, 0.0, 0.0),
        ae.config().window,
    );
    let (state, _) = fill_window(&mut ctrl, &m, &ae, &head);
    // a few more steps so the rate filter only sees constant errors
    let mut out = None;
    for _ in 0..6 {
        out = Some(ctrl.step(&m, &ae, &head, &state, DT).unwrap());
    }
    let out = out.unwrap();
    assert!(out.torque.engaged);
    assert_eq!(out.torque.robot(), (0.0, 0.0));
}

#[test]
fn angle_error_decays_without_human_torque() {
    let (ae, head) = models();
    let m = mission(0.5, Manoeuvre::Left, 0.0);
    let cfg = ControlConfig::default();
    let plant = cfg.plant;
    let mut ctrl = Controller::new(cfg, Pose2::new(0.0, 0.0, 0.0), ae.config().window);
    let (mut state, _) = fill_window(&mut ctrl, &m, &ae, &head);
    // stand still facing the reference direction; only α has to move
    state.v = 0.0;
    let human = HumanInput::default();
    let mut errors = Vec::new();
    for _ in 0..400 {
        let out = ctrl.step(&m, &ae, &head, &state, DT).unwrap();
        errors.push(out.errors.alpha_r.abs().max(out.errors.alpha_l.abs()));
        state = step_plant(&state, human, out.torque.robot(), &plant, DT);
    }
    let transient = 10;
    for w in errors[transient..].windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} then {}", w[0], w[1]);
    }
    assert!(errors[errors.len() - 1] < 1e-3 * errors[0]);
}

#[test]
fn sustained_opposition_disengages_in_a_safe_zone() {
    let (ae, head) = models();
    let m = mission(0.5, Manoeuvre::Left, 0.0);
    let cfg = ControlConfig::default();
    let duration = cfg.disengage.duration;
    let mut ctrl = Controller::new(cfg, Pose2::new(0.0, 0.0, 0.0), ae.config().window);
    let (state, _) = fill_window(&mut ctrl, &m, &ae, &head);
    let outs = opposing_steps(&mut ctrl, &m, &ae, &head, &state, 60);
    let first = outs
        .iter()
        .position(|o| o.disengage.active)
        .expect("disengaged");
    assert!(outs[..first].iter().all(|o| o.torque.engaged));
    let ds = outs[first].disengage;
    assert!(ds.remaining > duration - 2.0 * DT && ds.remaining <= duration);
    for o in &outs[first..] {
        assert!(!o.torque.engaged);
        assert_eq!(o.torque.robot(), (0.0, 0.0));
    }
}

#[test]
fn danger_zone_keeps_guidance_engaged() {
    let (ae, head) = models();
    let m = mission(0.5, Manoeuvre::Left, 0.0);
    let cfg = ControlConfig {
        danger_zones: vec![Zone {
            min: Point2::new(-1.0, -1.0),
            max: Point2::new(10.0, 1.0),
        }],
        ..Default::default()
    };
    let mut ctrl = Controller::new(cfg, Pose2::new(0.0, 0.0, 0.0), ae.config().window);
    let (state, _) = fill_window(&mut ctrl, &m, &ae, &head);
    let outs = opposing_steps(&mut ctrl, &m, &ae, &head, &state, 600);
    assert!(outs
        .iter()
        .all(|o| o.torque.engaged && !o.disengage.active && o.disengage.danger_zone));
    ctrl.request_disengage();
    assert!(!ctrl.disengage_state().active);
}

#[test]
fn disengage_request_outside_danger() {
    let (ae, head) = models();
    let m = mission(0.5, Manoeuvre::Left, 0.0);
    let mut ctrl = Controller::new(
        ControlConfig::default(),
        Pose2::new(0.0, 0.0, 0.0),
        ae.config().window,
    );
    let (state, _) = fill_window(&mut ctrl, &m, &ae, &head);
    ctrl.request_disengage();
    let out = ctrl.step(&m, &ae, &head, &state, DT).unwrap();
    assert!(out.disengage.active && !out.torque.engaged);
}

#[test]
fn closed_loop_is_bitwise_reproducible() {
    let run = || {
        let (ae, head) = models();
        let m = mission(0.3, Manoeuvre::Left, 0.2);
        let cfg = ControlConfig::default();
        let plant = cfg.plant;
        let mut ctrl = Controller::new(cfg, Pose2::new(0.0, 0.0, 0.0), ae.config().window);
        let mut state = WalkerState::at(Pose2::new(0.0, 0.0, 0.0));
        let mut trace = Vec::new();
        for k in 0..300 {
            let out = ctrl.step(&m, &ae, &head, &state, DT).unwrap();
            let human = HumanInput {
                v: 0.8,
                tau_r: (k as f64 * 0.1).sin(),
                tau_l: 0.5,
            };
            ctrl.record_opposition((human.tau_r, human.tau_l), out.torque.robot(), DT);
            state = step_plant(&state, human, out.torque.robot(), &plant, DT);
            trace.push([
                state.pose.x,
                state.pose.y,
                state.pose.theta,
                state.alpha_r,
                state.alpha_l,
                out.torque.tau_r,
                out.torque.tau_l,
            ]);
        }
        trace
    };
    let a = run();
    let b = run();
    let bits = |t: &Vec<[f64; 7]>| {
        t.iter()
            .flat_map(|r| r.map(f64::to_bits))
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
}
