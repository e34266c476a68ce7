use legtwin::kinematics::{
    forward_kinematics, inverse_kinematics, jacobian, knee_points, manipulability, workspace_area_compare,
    FootPoint, JointPair, LegGeometry,
};
use proptest::prelude::*;

fn geom(d: f64) -> LegGeometry<f64> {
    LegGeometry::default().with_spacing(d).unwrap()
}

/// In-limit joint pairs, uncrossed.
fn joint_pair() -> impl Strategy<Value = JointPair<f64>> {
    let lim = LegGeometry::<f64>::default().limits[0];
    (lim.min..lim.max, lim.min..lim.max)
        .prop_filter("uncrossed", |(a, b)| a >= b)
        .prop_map(|(a, b)| JointPair::new(a, b))
}

fn spacing() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 0.0..0.03]
}

/// Circle intersection below the knees, written out independently of the crate.
fn lower_intersection(k1: FootPoint<f64>, k2: FootPoint<f64>, r: f64) -> Option<FootPoint<f64>> {
    let (dx, dy) = (k2.x - k1.x, k2.y - k1.y);
    let dist = (dx * dx + dy * dy).sqrt();
    if dist > 2.0 * r || dist < 1e-12 {
        return None;
    }
    let h = (r * r - dist * dist / 4.0).sqrt();
    let (mx, my) = (k1.x + dx / 2.0, k1.y + dy / 2.0);
    let (px, py) = (-dy / dist * h, dx / dist * h);
    let a = FootPoint::new(mx + px, my + py);
    let b = FootPoint::new(mx - px, my - py);
    Some(if a.y >= b.y { a } else { b })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn ik_of_fk_reproduces_the_foot(d in spacing(), q in joint_pair()) {
        let g = geom(d);
        let Ok(p) = forward_kinematics(&g, q) else { return Ok(()) };
        let Ok(j) = jacobian(&g, q) else { return Ok(()) };
        prop_assume!(!j.singular);
        let q2 = inverse_kinematics(&g, p).unwrap();
        let p2 = forward_kinematics(&g, q2).unwrap();
        prop_assert!(p.distance(p2) < 1e-9, "{p:?} vs {p2:?}");
        prop_assert!(g.limits[0].contains(q2.theta1) && g.limits[1].contains(q2.theta2));
    }

    #[test]
    fn feet_stay_within_reach_of_both_motors(d in spacing(), q in joint_pair()) {
        let g = geom(d);
        let Ok(p) = forward_kinematics(&g, q) else { return Ok(()) };
        let reach = g.proximal_len + g.distal_len + 1e-9;
        for m in g.motors() {
            prop_assert!(p.distance(m) <= reach);
        }
        prop_assert!(p.y > 0.0);
    }

    #[test]
    fn fk_takes_the_lower_intersection(d in spacing(), q in joint_pair()) {
        let g = geom(d);
        let Ok(p) = forward_kinematics(&g, q) else { return Ok(()) };
        let [k1, k2] = knee_points(&g, q).unwrap();
        if let Some(o) = lower_intersection(k1, k2, g.distal_len) {
            prop_assert!(p.distance(o) < 1e-9, "{p:?} vs {o:?}");
        }
    }

    #[test]
    fn jacobian_matches_central_differences(d in spacing(), q in joint_pair()) {
        let g = geom(d);
        let Ok(j) = jacobian(&g, q) else { return Ok(()) };
        prop_assume!(!j.singular);
        let h = 1e-6;
        let fk = |a: f64, b: f64| forward_kinematics(&g, JointPair::new(a, b));
        let (Ok(a1), Ok(b1), Ok(a2), Ok(b2)) = (
            fk(q.theta1 + h, q.theta2),
            fk(q.theta1 - h, q.theta2),
            fk(q.theta1, q.theta2 + h),
            fk(q.theta1, q.theta2 - h),
        ) else {
            return Ok(());
        };
        let num = [
            [(a1.x - b1.x) / (2.0 * h), (a2.x - b2.x) / (2.0 * h)],
            [(a1.y - b1.y) / (2.0 * h), (a2.y - b2.y) / (2.0 * h)],
        ];
        let norm = |m: [[f64; 2]; 2]| m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        let diff = [
            [j.m[0][0] - num[0][0], j.m[0][1] - num[0][1]],
            [j.m[1][0] - num[1][0], j.m[1][1] - num[1][1]],
        ];
        prop_assert!(norm(diff) / norm(j.m) < 1e-5, "{:?} vs {num:?}", j.m);
    }

    #[test]
    fn coaxial_manipulability_is_mirror_symmetric(q in joint_pair()) {
        let g = geom(0.0);
        let m = q.mirrored();
        let (Ok(a), Ok(b)) = (manipulability(&g, q), manipulability(&g, m)) else { return Ok(()) };
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
    }
}

#[test]
fn ten_thousand_round_trips() {
    use rand::{Rng, SeedableRng};
    let g = geom(0.02);
    let lim = g.limits[0];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 10_000 {
        let q = JointPair::new(rng.random_range(lim.min..lim.max), rng.random_range(lim.min..lim.max));
        let (Ok(p), Ok(j)) = (forward_kinematics(&g, q), jacobian(&g, q)) else { continue };
        if j.singular {
            continue;
        }
        let p2 = forward_kinematics(&g, inverse_kinematics(&g, p).unwrap()).unwrap();
        worst = worst.max(p.distance(p2));
        checked += 1;
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn manipulability_falls_toward_full_extension() {
    // From past the dexterity peak toward straight legs under the midline.
    let g = geom(0.02);
    let mid = g.midline_x();
    let reach = (g.proximal_len + g.distal_len).powi(2) - (g.motor_spacing / 2.0).powi(2);
    let y_max = reach.sqrt();
    let values: Vec<f64> = (0..10)
        .map(|i| {
            let y = 0.08 + (y_max - 1e-5 - 0.08) * i as f64 / 9.0;
            let q = inverse_kinematics(&g, FootPoint::new(mid, y)).unwrap();
            manipulability(&g, q).unwrap()
        })
        .collect();
    assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
    assert!(*values.last().unwrap() < 0.05 * values[0]);
}

#[test]
fn workspace_area_does_not_grow_with_spacing() {
    let coax = geom(0.0);
    let areas: Vec<f64> = [0.0, 0.005, 0.01, 0.02, 0.03]
        .iter()
        .map(|&d| workspace_area_compare(&geom(d), &coax, 200).unwrap().area_sbs)
        .collect();
    assert!(areas.windows(2).all(|w| w[1] <= w[0]), "{areas:?}");
    let same = workspace_area_compare(&coax, &coax, 200).unwrap();
    assert_eq!(same.ratio, 1.0);
    assert!(workspace_area_compare(&geom(0.02), &coax, 200).unwrap().ratio < 1.0);
}

#[test]
fn deterministic() {
    let g = geom(0.013);
    let q = JointPair::new(2.1, 0.9);
    let a = (forward_kinematics(&g, q).unwrap(), jacobian(&g, q).unwrap().m);
    let b = (forward_kinematics(&g, q).unwrap(), jacobian(&g, q).unwrap().m);
    assert_eq!(a.0.x.to_bits(), b.0.x.to_bits());
    assert_eq!(a.1, b.1);
}
