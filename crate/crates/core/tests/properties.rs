use chartblender_core::chart::{parse_dataset, revealed_records, temporal_opacity, ChartKind, ChartSpec, Enter, Exit, Mapping, StyleSpec, TemporalBehavior};
use chartblender_core::compositor::{apply_homography, homography};
use chartblender_core::eval::{apd3d, PointTrack3D, DEFAULT_APD_THRESHOLDS};
use chartblender_core::geometry::{Intrinsics, RigidTransform};
use chartblender_core::object_tracker::{smooth_columns, smoothing_objective};
use nalgebra::{Point2, Point3, Rotation3, Vector3};
use proptest::prelude::*;

fn rigid() -> impl Strategy<Value = RigidTransform> {
    (prop::array::uniform3(-3.0..3.0f64), prop::array::uniform3(-4.0..4.0f64))
        .prop_map(|(r, t)| RigidTransform::from_parts(&Rotation3::new(Vector3::from(r)), Vector3::from(t)))
}

fn close(a: &RigidTransform, b: &RigidTransform, tol: f64) -> bool {
    (a.to_homogeneous() - b.to_homogeneous()).abs().max() <= tol
}

fn smooth(y: &[f64], mu: f64, lambda: f64) -> Vec<f64> {
    let cols: Vec<[f64; 1]> = y.iter().map(|v| [*v]).collect();
    smooth_columns(&cols, mu, lambda).unwrap().into_iter().map(|c| c[0]).collect()
}

proptest! {
    #[test]
    fn composition_is_associative(a in rigid(), b in rigid(), c in rigid()) {
        prop_assert!(close(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c)), 1e-9));
    }

    #[test]
    fn inverse_cancels(a in rigid(), p in prop::array::uniform3(-5.0..5.0f64)) {
        prop_assert!(close(&a.compose(&a.inverse()), &RigidTransform::identity(), 1e-12));
        let p = Point3::from(p);
        prop_assert!((a.inverse().transform_point(&a.transform_point(&p)) - p).norm() < 1e-12);
    }

    #[test]
    fn projection_round_trip(
        f in 100.0..2000.0f64,
        aspect in 0.8..1.25f64,
        u in 0.0..1919.0f64,
        v in 0.0..1079.0f64,
        depth in 0.05..100.0f64,
    ) {
        let k = Intrinsics::new(f, f * aspect, 959.5, 539.5, 1920, 1080).unwrap();
        let px = Point2::new(u, v);
        let p = k.back_project(&px, depth).unwrap();
        prop_assert!((p.z - depth).abs() < 1e-12 * depth.max(1.0));
        prop_assert!((k.project(&p).unwrap() - px).norm() < 1e-9);
    }

    #[test]
    fn smoothing_is_optimal_and_shift_equivariant(
        y in prop::collection::vec(-2.0..2.0f64, 3..60),
        mu in 0.1..100.0f64,
        lambda in 0.0..100.0f64,
        shift in -10.0..10.0f64,
        bump in 0usize..60,
    ) {
        let x = smooth(&y, mu, lambda);
        let best = smoothing_objective(&x, &y, mu, lambda);
        prop_assert!(best <= smoothing_objective(&y, &y, mu, lambda) + 1e-9);
        let mut nudged = x.clone();
        nudged[bump % y.len()] += 1e-3;
        prop_assert!(best <= smoothing_objective(&nudged, &y, mu, lambda));

        let shifted: Vec<f64> = y.iter().map(|v| v + shift).collect();
        for (a, b) in smooth(&shifted, mu, lambda).iter().zip(&x) {
            prop_assert!((a - b - shift).abs() < 1e-9);
        }
    }

    #[test]
    fn apd3d_ignores_track_order(
        tracks in prop::collection::vec(prop::collection::vec((prop::array::uniform3(-1.0..1.0f64), prop::array::uniform3(-0.2..0.2f64)), 4), 1..6),
        rotate in 0usize..6,
    ) {
        let gt: Vec<PointTrack3D> = tracks.iter().map(|t| PointTrack3D::all_visible(t.iter().map(|(p, _)| Point3::from(*p)).collect())).collect();
        let pred: Vec<PointTrack3D> = tracks
            .iter()
            .map(|t| PointTrack3D::all_visible(t.iter().map(|(p, n)| Point3::from(*p) + Vector3::from(*n)).collect()))
            .collect();
        let score = apd3d(&pred, &gt, &DEFAULT_APD_THRESHOLDS).unwrap().score;
        let (mut gt2, mut pred2) = (gt.clone(), pred.clone());
        let r = rotate % gt.len();
        gt2.rotate_left(r);
        pred2.rotate_left(r);
        prop_assert_eq!(score, apd3d(&pred2, &gt2, &DEFAULT_APD_THRESHOLDS).unwrap().score);
        prop_assert!((0.0..=1.0).contains(&score));
    }

    #[test]
    fn temporal_opacity_is_bounded_and_continuous(
        start in 0usize..50,
        len in 1usize..200,
        enter_frames in 0u32..40,
        exit_frames in 0u32..40,
        enter in prop::sample::select(vec![Enter::Fade, Enter::Unveil, Enter::None]),
        exit in prop::sample::select(vec![Exit::Fade, Exit::None]),
    ) {
        let b = TemporalBehavior { enter, exit, enter_frames, exit_frames };
        let end = start + len - 1;
        let step = 1.0 / enter_frames.max(1).min(exit_frames.max(1)) as f64 + 1e-12;
        let mut prev: Option<(f64, f64)> = None;
        for f in start..=end {
            let s = temporal_opacity(&b, (start, end), f);
            prop_assert!((0.0..=1.0).contains(&s.opacity) && (0.0..=1.0).contains(&s.unveil));
            if let Some((o, u)) = prev {
                if enter != Enter::None && exit != Exit::None {
                    prop_assert!((s.opacity - o).abs() <= step);
                }
                prop_assert!(s.unveil >= u);
            }
            prev = Some((s.opacity, s.unveil));
        }
    }

    #[test]
    fn reveal_is_monotone_in_time(t1 in 2015.0..2030.0f64, dt in 0.0..10.0f64) {
        let table = parse_dataset("date,value\n2018-01-01,1\n2019-06-30,2\n2019-07-01,3\n2021-03-15,4\n2024-12-31,5\n").unwrap();
        let spec = ChartSpec {
            kind: ChartKind::Line,
            mapping: Mapping { x: Some("date".into()), y: Some("value".into()), timestamp: Some("date".into()), ..Default::default() },
            style: StyleSpec::default(),
            size: [0.4, 0.3],
        };
        let year = |y: f64| (y - 1970.0) * 365.2425 * 86400.0;
        prop_assert!(revealed_records(&spec, &table, year(t1)) <= revealed_records(&spec, &table, year(t1 + dt)));
    }

    #[test]
    fn homography_maps_its_correspondences(
        jitter in prop::array::uniform8(-40.0..40.0f64),
        x0 in 50.0..200.0f64,
        y0 in 50.0..200.0f64,
    ) {
        let src = [Point2::new(0.0, 0.0), Point2::new(300.0, 0.0), Point2::new(300.0, 200.0), Point2::new(0.0, 200.0)];
        let dst = [
            Point2::new(x0 + jitter[0], y0 + jitter[1]),
            Point2::new(x0 + 400.0 + jitter[2], y0 + jitter[3]),
            Point2::new(x0 + 400.0 + jitter[4], y0 + 300.0 + jitter[5]),
            Point2::new(x0 + jitter[6], y0 + 300.0 + jitter[7]),
        ];
        let h = homography(&src, &dst).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            prop_assert!((apply_homography(&h, s).unwrap() - d).norm() < 1e-7);
        }
    }
}
