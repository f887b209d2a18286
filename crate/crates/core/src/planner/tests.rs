use nalgebra::Vector2;
use proptest::prelude::*;

use super::*;
use crate::color::{ColorClass, ColorDistribution};
use crate::cone::ConeEstimate;
use crate::gaussian::Gaussian2;
use crate::local_map::MapMode;

fn snapshot(ego: Pose2, cones: &[(f64, f64, ColorClass)]) -> LocalMapSnapshot {
    let cones: Vec<ConeEstimate> = cones
        .iter()
        .enumerate()
        .map(|(i, &(x, y, c))| {
            let mut e = ConeEstimate::new(i as u64 + 100, Gaussian2::isotropic(Vector2::new(x, y), 0.01), 0.9, 0.0);
            e.color = ColorDistribution::certain(c);
            e.hits = 3;
            e
        })
        .collect();
    LocalMapSnapshot {
        timestamp: 0.0,
        ego,
        mode: MapMode::Fusion,
        observed_ids: Vec::new(),
        cones,
    }
}

fn ladder(n: usize, stagger: f64) -> Vec<(f64, f64, ColorClass)> {
    (0..n)
        .flat_map(|k| {
            let x = 4.5 * k as f64 - 2.0;
            [(x, 1.75, ColorClass::Blue), (x + stagger, -1.75, ColorClass::Yellow)]
        })
        .collect()
}

#[test]
fn partial_prior_keeps_planner_defaults() {
    let c: PlannerConfig = serde_json::from_str(r#"{"prior": {"w_prior": 3.0}}"#).unwrap();
    assert_eq!(c.prior.w_prior, 3.0);
    assert_eq!(c.prior.terms, PlannerConfig::default().prior.terms);
    assert_eq!(c.prior.n_desired, PlannerConfig::default().prior.n_desired);
}

#[test]
fn single_corridor_has_one_maximal_path() {
    let s = snapshot(Pose2::new(0.0, 0.0, 0.0), &ladder(6, 2.25));
    let mut cfg = PlannerConfig::default();
    cfg.limits.max_length_m = 100.0;
    let plan = plan(&s, &cfg);
    assert_eq!(plan.candidates.len(), 1);
    let best = plan.best().unwrap();
    assert!(best.left_cones.iter().all(|&i| plan.input.colors[i].p_blue == 1.0));
    assert!(best.right_cones.iter().all(|&i| plan.input.colors[i].p_yellow == 1.0));
    assert_eq!(best.log_likelihood, 0.0);
}

#[test]
fn y_junction_branches() {
    let u = ColorClass::Unknown;
    let cones = [
        (-1.0, 2.0, u),
        (-1.0, -2.0, u),
        (3.0, 2.5, u),
        (3.0, -2.5, u),
        (7.0, 0.0, u),
        (8.0, 6.0, u),
        (8.0, -6.0, u),
        (11.0, 3.0, u),
        (11.0, -3.0, u),
    ];
    let plan = plan(&snapshot(Pose2::IDENTITY, &cones), &PlannerConfig::default());
    assert!(plan.candidates.len() >= 2, "{}", plan.candidates.len());
}

#[test]
fn straight_track_follows_centerline() {
    let s = snapshot(Pose2::IDENTITY, &ladder(9, 0.0));
    let plan = plan(&s, &PlannerConfig::default());
    let best = plan.best().unwrap();
    assert!(best.length() >= 15.0);
    for w in &best.waypoints {
        assert!(w.y.abs() < 1e-6, "{w:?}");
    }
}

#[test]
fn color_contradiction_loses() {
    let ego = Pose2::IDENTITY;
    let input = PlanningInput {
        positions: vec![Vector2::new(2.0, 1.5), Vector2::new(2.0, -1.5)],
        colors: vec![ColorDistribution::certain(ColorClass::Blue), ColorDistribution::certain(ColorClass::Yellow)],
    };
    let make = |l: usize, r: usize| {
        let mut c = CandidatePath {
            waypoints: vec![Vector2::new(2.0, 0.0)],
            crossed_edges: vec![(l, r)],
            left_cones: vec![l],
            right_cones: vec![r],
            features: [0.0; 6],
            log_prior: 0.0,
            log_likelihood: 0.0,
            log_posterior: 0.0,
        };
        score_path(&mut c, &input, &ego, &PriorConfig::default(), 1e-6);
        c
    };
    let cands = vec![make(1, 0), make(0, 1)];
    assert_eq!(cands[0].log_prior, cands[1].log_prior);
    assert_eq!(select_path(&cands), Some(1));
    assert_eq!(select_path(&cands[..1]), Some(0));
    assert_eq!(select_path(&[]), None);
}

#[test]
fn too_few_cones_gives_no_path() {
    let s = snapshot(Pose2::IDENTITY, &[(1.0, 1.0, ColorClass::Blue), (1.0, -1.0, ColorClass::Yellow)]);
    assert!(plan(&s, &PlannerConfig::default()).best().is_none());
}

#[test]
fn output_record_round_trips() {
    let s = snapshot(Pose2::IDENTITY, &ladder(6, 2.25));
    let p = plan(&s, &PlannerConfig::default());
    let out = PlannerOutput::from_plan(1.5, &p, true);
    assert_eq!(out.left_cone_ids.len() + out.right_cone_ids.len(), p.best().unwrap().crossed_edges.len() + 1);
    let back: PlannerOutput = serde_json::from_str(&serde_json::to_string(&out).unwrap()).unwrap();
    assert_eq!(out, back);
    assert!((out.path_length() - p.best().unwrap().length()).abs() < 1e-12);
}

fn random_scene() -> impl Strategy<Value = Vec<(f64, f64, [f64; 3])>> {
    prop::collection::vec(
        (-2.0..16.0f64, -6.0..6.0f64, (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64)),
        3..14,
    )
    .prop_map(|v| v.into_iter().map(|(x, y, (a, b, c))| (x, y, [a, b, c + 1e-3])).collect())
}

fn scene_input(v: &[(f64, f64, [f64; 3])]) -> PlanningInput {
    PlanningInput {
        positions: v.iter().map(|c| Vector2::new(c.0, c.1)).collect(),
        colors: v.iter().map(|c| ColorDistribution::from_weights(c.2)).collect(),
    }
}

proptest! {
    #[test]
    fn posterior_decomposes_and_paths_are_consistent(scene in random_scene()) {
        let input = scene_input(&scene);
        let Ok(tri) = triangulate(&input.positions) else { return Ok(()) };
        let limits = SearchLimits { max_edges: 6, beam_width: None, ..Default::default() };
        for c in enumerate_paths(&tri, &input, &Pose2::IDENTITY, &limits, &PriorConfig::default(), 1e-6) {
            prop_assert!((c.log_posterior - (c.log_prior + c.log_likelihood)).abs() <= 1e-12);
            prop_assert_eq!(c.waypoints.len(), c.crossed_edges.len());
            prop_assert!(c.left_cones.iter().all(|l| !c.right_cones.contains(l)));
        }
    }

    #[test]
    fn evidence_scaling_keeps_selection(scene in random_scene(), k in 0.01..100.0f64) {
        let input = scene_input(&scene);
        let scaled: Vec<_> = scene.iter().map(|&(x, y, w)| (x, y, w.map(|e| e * k))).collect();
        let input2 = scene_input(&scaled);
        let Ok(tri) = triangulate(&input.positions) else { return Ok(()) };
        let lim = SearchLimits::default();
        let a = enumerate_paths(&tri, &input, &Pose2::IDENTITY, &lim, &PriorConfig::default(), 1e-6);
        let b = enumerate_paths(&tri, &input2, &Pose2::IDENTITY, &lim, &PriorConfig::default(), 1e-6);
        let (sa, sb) = (select_path(&a), select_path(&b));
        prop_assert_eq!(sa.map(|i| &a[i].crossed_edges), sb.map(|i| &b[i].crossed_edges));
    }

    #[test]
    fn prior_is_monotone_in_feature_error(f in prop::array::uniform6(-20.0..20.0f64), j in 0usize..6, extra in 0.0..5.0f64) {
        let cfg = PriorConfig::default();
        let mut g = f;
        let s = cfg.terms[j].setpoint;
        g[j] = s + (f[j] - s).signum() * ((f[j] - s).abs() + extra);
        prop_assert!(log_prior(&g, &cfg) <= log_prior(&f, &cfg));
    }
}
