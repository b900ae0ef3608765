mod common;

use common::otsu_oracle;
use dyn4d::cues::{gram_similarity, otsu_threshold, suppress_keys, TokenGrid};
use dyn4d::fusion::{fuse_confidence, fusion_weight, hard_replace, partition_regions};
use dyn4d::geometry::{
    epipolar_residual, essential_matrix, fundamental_matrix, se3_exp, warp, CameraPose, Intrinsics,
    PixelCorrespondence, Vec2, Vec3,
};
use dyn4d::metrics::{ate, chamfer_with, NeighborSearch, PointCloud};
use dyn4d::pose::{geometric_loss, weighted_pose_solve, Trajectory, WeightedCorrespondenceSet};
use dyn4d::synthscene::{corrupt_pass, generate_scene, NoiseProfile, PassId, SceneConfig};
use dyn4d::{DenseMap, MapRole};
use nalgebra::{DMatrix, SVD};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn rigid(max_angle: f64, max_t: f64) -> impl Strategy<Value = CameraPose> {
    (vec3(max_angle), vec3(max_t)).prop_map(|(w, t)| CameraPose::new(se3_exp(w, Vec3::zeros(), 0).rotation, t, 0))
}

fn cloud(max_len: usize) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(vec3(1.0), 1..=max_len)
}

fn map(h: usize, w: usize, role: MapRole, lo: f64, hi: f64) -> impl Strategy<Value = DenseMap> {
    prop::collection::vec(lo..hi, h * w).prop_map(move |d| DenseMap::from_vec(h, w, role, d).unwrap())
}

fn small_scene() -> SceneConfig {
    SceneConfig {
        num_frames: 4,
        num_static_points: 600,
        num_dynamic_points: 80,
        ..SceneConfig::default()
    }
}

// geometry

proptest! {
    #[test]
    fn static_warp_satisfies_epipolar_constraint(
        rel in rigid(0.1, 0.5),
        u in 0.0..48.0f64,
        v in 0.0..40.0f64,
        depth in 1.0..10.0f64,
    ) {
        let k = Intrinsics::centered(48.0, 48, 40);
        let corr = PixelCorrespondence::new(Vec2::new(u, v), depth, Vec3::zeros());
        let w = warp(&corr, &rel, &k).unwrap();
        let f = fundamental_matrix(&essential_matrix(&rel).matrix, &k);
        prop_assert!(epipolar_residual(&corr.x_r, &w.pixel, &f).abs() < 1e-9);
    }

    #[test]
    fn essential_matrix_has_rank_two(rel in rigid(3.0, 1.0)) {
        prop_assume!(rel.translation.norm() > 1e-3);
        let unit = CameraPose::new(rel.rotation, rel.translation.normalize(), 0);
        let s = SVD::new(essential_matrix(&unit).matrix, false, false).singular_values;
        let mut s: Vec<f64> = s.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        prop_assert!(s[2].abs() < 1e-7);
        prop_assert!((s[0] - s[1]).abs() < 1e-7);
        let s = SVD::new(essential_matrix(&rel).matrix, false, false).singular_values;
        prop_assert!(s.min() < 1e-7 * s.max().max(1.0));
    }

    #[test]
    fn warp_is_inverse_consistent(
        rel in rigid(0.1, 0.3),
        u in 0.0..48.0f64,
        v in 0.0..40.0f64,
        depth in 1.0..10.0f64,
    ) {
        let k = Intrinsics::centered(48.0, 48, 40);
        let fwd = warp(&PixelCorrespondence::new(Vec2::new(u, v), depth, Vec3::zeros()), &rel, &k).unwrap();
        let back = warp(&PixelCorrespondence::new(fwd.pixel, fwd.depth, Vec3::zeros()), &rel.inverse(), &k).unwrap();
        prop_assert!((back.pixel - Vec2::new(u, v)).norm() < 1e-6);
    }
}

// synthscene

#[test]
fn scene_and_passes_are_reproducible() {
    let c = small_scene();
    let (a, b) = (generate_scene(&c).unwrap(), generate_scene(&c).unwrap());
    assert_eq!(a, b);
    let profile = NoiseProfile::default();
    for pass in [PassId::First, PassId::MaskAware] {
        let (pa, pb) = (
            corrupt_pass(&a, pass, &profile, 9).unwrap(),
            corrupt_pass(&b, pass, &profile, 9).unwrap(),
        );
        for (x, y) in pa.iter().zip(&pb) {
            let bits = |m: &DenseMap| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&x.depth), bits(&y.depth));
            assert_eq!(bits(&x.confidence), bits(&y.confidence));
        }
    }
}

#[test]
fn ground_truth_depth_unprojects_to_scene_points() {
    for seed in 0..4 {
        let truth = generate_scene(&SceneConfig { seed, ..small_scene() }).unwrap();
        let k = *truth.intrinsics();
        let mut checked = 0;
        for f in &truth.frames {
            let pose = &truth.trajectory[f.frame_id];
            for o in &f.observations {
                let z = f.depth.get(o.row, o.col);
                let p = pose.transform_point(&k.backproject(&o.projection, z));
                let err = (p - truth.point_world(o.point, f.frame_id)).norm();
                assert!(
                    err < 1e-6,
                    "seed {seed} frame {} point {}: {err:e}",
                    f.frame_id,
                    o.point
                );
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }
}

#[test]
fn pass_noise_has_zero_mean_difference_across_seeds() {
    let truth = generate_scene(&small_scene()).unwrap();
    let profile = NoiseProfile::default();
    for (sa, sb) in [(1, 2), (3, 4), (10, 77), (123, 456)] {
        for pass in [PassId::First, PassId::MaskAware] {
            let a = corrupt_pass(&truth, pass, &profile, sa).unwrap();
            let b = corrupt_pass(&truth, pass, &profile, sb).unwrap();
            let diffs: Vec<f64> = a
                .iter()
                .zip(&b)
                .flat_map(|(x, y)| x.depth.data().iter().zip(y.depth.data()))
                .filter(|(x, y)| **x > 0.0 && **y > 0.0)
                .map(|(x, y)| x - y)
                .collect();
            let n = diffs.len() as f64;
            let mean = diffs.iter().sum::<f64>() / n;
            let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!(
                mean.abs() <= 3.0 * sd / n.sqrt(),
                "seeds {sa},{sb}: mean {mean:e}, sd {sd:e}, n {n}"
            );
        }
    }
}

// cues

fn token_grid(h: usize, w: usize, layers: usize, dim: usize) -> impl Strategy<Value = TokenGrid> {
    let n = h * w;
    let mat = move || prop::collection::vec(prop_oneof![3 => -1.0..1.0f64, 1 => Just(0.0)], n * dim);
    (
        prop::collection::vec(mat(), layers),
        prop::collection::vec(mat(), layers),
    )
        .prop_map(move |(q, k)| TokenGrid {
            frame_id: 0,
            tokens_h: h,
            tokens_w: w,
            patch_size: 1,
            image_height: h,
            image_width: w,
            queries: q.into_iter().map(|d| DMatrix::from_row_slice(n, dim, &d)).collect(),
            keys: k.into_iter().map(|d| DMatrix::from_row_slice(n, dim, &d)).collect(),
        })
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(prop_oneof![4 => -2.0..2.0f64, 1 => Just(0.0)], rows * cols)
        .prop_map(move |d| DMatrix::from_row_slice(rows, cols, &d))
}

fn saliency_values() -> impl Strategy<Value = Vec<f64>> {
    let value = prop_oneof![
        4 => 0.0..0.3f64,
        2 => 0.5..1.0f64,
        1 => (0usize..=256).prop_map(|k| k as f64 / 256.0),
    ];
    prop::collection::vec(value, 0..400)
}

proptest! {
    #[test]
    fn gram_is_bounded_and_transposes(
        (a, b) in (1usize..8, 1usize..8, 1usize..6).prop_flat_map(|(n, m, d)| (matrix(n, d), matrix(m, d))),
    ) {
        let g = gram_similarity(&a, &b).unwrap();
        prop_assert!(g.iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert_eq!(g.transpose(), gram_similarity(&b, &a).unwrap());
    }

    #[test]
    fn suppress_keys_is_idempotent(
        (grid, mask, l_mask) in (1usize..5, 1usize..5, 1usize..4, 1usize..5).prop_flat_map(|(h, w, layers, dim)| (
            token_grid(h, w, layers, dim),
            map(h, w, MapRole::Saliency, -1.0, 1.0),
            0..=layers,
        )),
        tau in 0.0..1.0f64,
    ) {
        let once = suppress_keys(&grid, &mask, tau, l_mask).unwrap();
        let twice = suppress_keys(&once, &mask, tau, l_mask).unwrap();
        let bits = |g: &TokenGrid| g.keys.iter().chain(&g.queries).flat_map(|m| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&once), bits(&twice));
        prop_assert_eq!(&once.queries, &grid.queries);
    }

    #[test]
    fn otsu_matches_exhaustive_scan(values in saliency_values(), bins in prop_oneof![Just(256usize), 2usize..64]) {
        prop_assert_eq!(otsu_threshold(&values, bins).to_bits(), otsu_oracle(&values, bins).to_bits());
    }
}

// pose

fn correspondences() -> impl Strategy<Value = (Vec<Vec3>, Vec<Vec3>, Vec<f64>, CameraPose)> {
    (10usize..60)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(vec3(2.0), n),
                prop::collection::vec(vec3(0.02), n),
                prop::collection::vec(0.05..1.0f64, n),
                rigid(1.0, 1.0),
            )
        })
        .prop_map(|(pr, noise, w, truth)| {
            let pt = pr
                .iter()
                .zip(&noise)
                .map(|(p, e)| truth.transform_point(p) + e)
                .collect();
            (pr, pt, w, truth)
        })
}

fn close(a: &CameraPose, b: &CameraPose, tol: f64) -> bool {
    (a.rotation - b.rotation).abs().max() < tol && (a.translation - b.translation).abs().max() < tol
}

proptest! {
    #[test]
    fn weighted_solve_is_a_local_minimum((pr, pt, w, _) in correspondences(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let set = WeightedCorrespondenceSet::new(pr, pt, w).unwrap();
        let t = weighted_pose_solve(&set).unwrap();
        let base = geometric_loss(&t, &set);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let xi: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            let s = 1e-3 / norm;
            let step = se3_exp(Vec3::new(xi[0], xi[1], xi[2]) * s, Vec3::new(xi[3], xi[4], xi[5]) * s, 0);
            prop_assert!(base <= geometric_loss(&t.compose(&step), &set));
        }
    }

    #[test]
    fn weight_scaling_leaves_solution_unchanged((pr, pt, w, _) in correspondences(), c in 0.01..1.0f64) {
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        let a = weighted_pose_solve(&WeightedCorrespondenceSet::new(pr.clone(), pt.clone(), w).unwrap()).unwrap();
        let b = weighted_pose_solve(&WeightedCorrespondenceSet::new(pr, pt, scaled).unwrap()).unwrap();
        prop_assert!(close(&a, &b, 1e-12));
    }

    #[test]
    fn weighted_solve_is_equivariant((pr, pt, w, _) in correspondences(), g in rigid(3.0, 2.0)) {
        let t = weighted_pose_solve(&WeightedCorrespondenceSet::new(pr.clone(), pt.clone(), w.clone()).unwrap()).unwrap();
        let gpr = pr.iter().map(|p| g.transform_point(p)).collect();
        let gpt = pt.iter().map(|p| g.transform_point(p)).collect();
        let tg = weighted_pose_solve(&WeightedCorrespondenceSet::new(gpr, gpt, w).unwrap()).unwrap();
        prop_assert!(close(&tg, &g.compose(&t).compose(&g.inverse()), 1e-9));
    }
}

// fusion

const EPS: f64 = 1e-6;

fn fusion_inputs() -> impl Strategy<Value = [DenseMap; 5]> {
    (1usize..12, 1usize..12).prop_flat_map(|(h, w)| {
        (
            map(h, w, MapRole::Depth, 0.5, 8.0),
            map(h, w, MapRole::Depth, 0.5, 8.0),
            map(h, w, MapRole::Confidence, 0.1, 1e4),
            map(h, w, MapRole::Confidence, 0.1, 1e4),
            map(h, w, MapRole::Saliency, -0.2, 1.0),
        )
            .prop_map(|(a, b, c, d, e)| [a, b, c, d, e])
    })
}

proptest! {
    #[test]
    fn fused_static_depth_minimizes_weighted_error([d1, d2, c1, c2, mask] in fusion_inputs(), tau in 0.0..1.0f64) {
        let part = partition_regions(&mask, tau);
        let f = fuse_confidence(&d1, &d2, &c1, &c2, &part, EPS).unwrap();
        for i in (0..mask.len()).filter(|i| part.is_static(*i)) {
            let (a, b, ca, cb) = (d1.data()[i], d2.data()[i], c1.data()[i], c2.data()[i]);
            let obj = |d: f64| ca * (d - a).powi(2) + cb * (d - b).powi(2);
            let x = f.depth.data()[i];
            prop_assert!(obj(x) <= obj(x + 1e-3) && obj(x) <= obj(x - 1e-3));
            prop_assert!(x >= a.min(b) && x <= a.max(b));
            let p = f.fused_precision.data()[i];
            prop_assert!((p - (ca + cb)).abs() <= 1e-12 * (ca + cb));
            prop_assert!(p >= ca.max(cb));
        }
    }

    #[test]
    fn partition_is_complementary([_, _, _, _, mask] in fusion_inputs(), tau in 0.0..1.0f64) {
        let part = partition_regions(&mask, tau);
        for i in 0..mask.len() {
            let defined = mask.data()[i] >= 0.0;
            prop_assert!(!(part.is_static(i) && part.is_dynamic(i)));
            prop_assert_eq!(part.is_static(i) || part.is_dynamic(i), defined);
        }
    }

    #[test]
    fn all_dynamic_mask_returns_pass_one([d1, d2, c1, c2, _] in fusion_inputs()) {
        let all = DenseMap::filled(d1.height(), d1.width(), MapRole::Saliency, 1.0);
        let part = partition_regions(&all, 0.5);
        let h = hard_replace(&d1, &d2, &c1, &c2, &part).unwrap();
        let f = fuse_confidence(&d1, &d2, &c1, &c2, &part, EPS).unwrap();
        prop_assert_eq!(&h.depth, &f.depth);
        prop_assert_eq!(h.depth.data(), d1.data());
    }

    #[test]
    fn zero_pass_two_confidence_returns_pass_one([d1, d2, c1, _, mask] in fusion_inputs(), tau in 0.0..1.0f64) {
        let zero = DenseMap::filled(d1.height(), d1.width(), MapRole::Confidence, 0.0);
        let mask = DenseMap::from_vec(mask.height(), mask.width(), MapRole::Saliency, mask.data().iter().map(|v| v.abs()).collect()).unwrap();
        let f = fuse_confidence(&d1, &d2, &c1, &zero, &partition_regions(&mask, tau), EPS).unwrap();
        prop_assert_eq!(f.depth.data(), d1.data());
    }

    #[test]
    fn weight_is_invariant_to_common_confidence_scale([_, _, c1, c2, _] in fusion_inputs(), c in 0.1..100.0f64) {
        let scale = |m: &DenseMap| DenseMap::from_vec(m.height(), m.width(), MapRole::Confidence, m.data().iter().map(|v| v * c).collect()).unwrap();
        let w = fusion_weight(&c1, &c2, EPS).unwrap();
        let ws = fusion_weight(&scale(&c1), &scale(&c2), EPS).unwrap();
        for i in 0..w.len() {
            let sum = c1.data()[i] + c2.data()[i];
            let tol = 2.0 * EPS / (sum * c.min(1.0)) + 1e-15;
            prop_assert!((w.data()[i] - ws.data()[i]).abs() <= tol);
        }
    }
}

// metrics

proptest! {
    #[test]
    fn chamfer_swap_exchanges_directions(a in cloud(200), b in cloud(200)) {
        let (pa, pb) = (PointCloud::new(a), PointCloud::new(b));
        let x = chamfer_with(&pa, &pb, NeighborSearch::Auto).unwrap();
        let y = chamfer_with(&pb, &pa, NeighborSearch::Auto).unwrap();
        prop_assert_eq!((x.acc_mean, x.acc_median), (y.comp_mean, y.comp_median));
        prop_assert_eq!((x.comp_mean, x.comp_median), (y.acc_mean, y.acc_median));
        prop_assert_eq!((x.dist_mean, x.dist_median), (y.dist_mean, y.dist_median));
        prop_assert!(x.dist_mean >= x.acc_mean.min(x.comp_mean) && x.dist_mean <= x.acc_mean.max(x.comp_mean));
    }

    #[test]
    fn chamfer_ignores_point_order(
        (a, a_perm) in cloud(200).prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle())),
        (b, b_perm) in cloud(200).prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle())),
    ) {
        for search in [NeighborSearch::Grid, NeighborSearch::BruteForce] {
            let x = chamfer_with(&PointCloud::new(a.clone()), &PointCloud::new(b.clone()), search).unwrap();
            let y = chamfer_with(&PointCloud::new(a_perm.clone()), &PointCloud::new(b_perm.clone()), search).unwrap();
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn grid_search_equals_brute_force(a in cloud(200), b in cloud(200)) {
        let (pa, pb) = (PointCloud::new(a), PointCloud::new(b));
        let g = chamfer_with(&pa, &pb, NeighborSearch::Grid).unwrap();
        let f = chamfer_with(&pa, &pb, NeighborSearch::BruteForce).unwrap();
        prop_assert_eq!(g, f);
    }

    #[test]
    fn ate_is_invariant_to_rigid_transforms(
        steps in prop::collection::vec(rigid(0.1, 0.3), 2..15),
        noise in prop::collection::vec(rigid(0.02, 0.05), 15),
        g in rigid(3.0, 5.0),
    ) {
        let mut poses = vec![CameraPose::identity(0)];
        for (i, s) in steps.iter().enumerate() {
            poses.push(poses[i].compose(s).with_frame_id(i + 1));
        }
        let gt = Trajectory::new(poses.clone()).unwrap();
        let pred: Vec<CameraPose> = poses.iter().zip(&noise).map(|(p, e)| p.compose(e)).collect();
        let moved: Vec<CameraPose> = pred.iter().map(|p| g.compose(p).with_frame_id(p.frame_id)).collect();
        let a = ate(&Trajectory::from_poses_unchecked(pred), &gt).unwrap();
        let b = ate(&Trajectory::from_poses_unchecked(moved), &gt).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }
}
