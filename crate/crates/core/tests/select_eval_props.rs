use binpose::bopeval::*;
use binpose::geometry::*;
use binpose::pipeline::{PoseEstimate, TranslationKind};
use binpose::render::{DepthImage, Image, Mask, RenderConfig};
use binpose::scenegen::*;
use binpose::select_refine::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    Rotation::random(rng).rotate(&Vec3::x())
}

fn perturb<R: Rng>(rng: &mut R, p: &Pose, max_deg: f64, max_mm: f64) -> Pose {
    let r = Rotation::from_axis_angle(&random_unit(rng), rng.random_range(0.0..=max_deg.to_radians()));
    let t = random_unit(rng) * rng.random_range(0.0..=max_mm);
    Pose::new(r.compose(&p.rotation), p.translation + t).unwrap().canonicalized()
}

fn estimate(i: usize, score: f64, similarity: f64) -> PoseEstimate {
    PoseEstimate {
        image_id: 0,
        detection_index: i,
        object_id: "bracket".into(),
        pose: (&Pose::identity()).into(),
        similarity,
        score,
        mode: TranslationKind::DepthCenter,
        refined: false,
        codebook_index: 0,
    }
}

fn depth_map(w: u32, h: u32) -> impl Strategy<Value = DepthImage> {
    prop::collection::vec(prop_oneof![Just(0u16), 95u16..110], (w * h) as usize)
        .prop_map(move |v| Image::from_vec(w, h, v).unwrap())
}

proptest! {
    #[test]
    fn selection_score_bounds(
        obs in depth_map(8, 6),
        rendered in depth_map(8, 6),
        mask in prop::collection::vec(any::<bool>(), 48),
        margin in 0.5..20.0f64,
    ) {
        let mask = Mask::from_vec(8, 6, mask).unwrap();
        let cfg = SelectionConfig { margin, ..SelectionConfig::default() };
        let s = score_depth_maps(&obs, &rendered, &mask, &cfg).unwrap();
        prop_assert!(s.e_sum >= 0.0);
        prop_assert!(s.e_sum <= margin * s.n_intersection as f64);
        if s.n_intersection > 0 {
            prop_assert!(s.e_sum < margin * s.n_intersection as f64);
        }
        prop_assert!((0.0..=1.0).contains(&s.coverage));
        prop_assert_eq!(s.disqualified, s.n_rendered == 0 || s.coverage < cfg.min_coverage);
    }

    #[test]
    fn top_k_ignores_input_order(
        raw in prop::collection::vec((0u8..4, 0u8..4, 0u8..4, 0.0..1.0f64), 1..25),
        seed in any::<u64>(),
        k in 1usize..10,
    ) {
        let items: Vec<ScoredEstimate> = raw
            .iter()
            .enumerate()
            .map(|(i, &(sc, cos, err, cov))| ScoredEstimate {
                estimate: estimate(i, sc as f64 / 4.0, cos as f64 / 4.0),
                selection: Some(SelectionScore {
                    e_sum: err as f64,
                    n_intersection: 1,
                    n_rendered: 1,
                    mean_error: err as f64,
                    coverage: cov,
                    disqualified: cov < 0.3,
                }),
            })
            .collect();
        let mut shuffled = items.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        for m in SortMethod::ALL {
            for v in [ErrorVariant::Mean, ErrorVariant::Sum] {
                let a: Vec<usize> = select_top_k(&items, m, v, k).unwrap().iter().map(|&j| items[j].estimate.detection_index).collect();
                let b: Vec<usize> = select_top_k(&shuffled, m, v, k).unwrap().iter().map(|&j| shuffled[j].estimate.detection_index).collect();
                prop_assert_eq!(&a, &b);
                prop_assert_eq!(a.len(), k.min(items.len()));
            }
        }
    }

    #[test]
    fn mssd_invariant_under_symmetry(seed in any::<u64>(), i in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = shapes::cuboid(40.0, 40.0, 20.0);
        let cloud = PointCloud::from_vertices(&mesh);
        let sym = SymmetrySet::new((0..4).map(|k| Rotation::from_axis_angle(&Vec3::z(), k as f64 * std::f64::consts::FRAC_PI_2)));
        let gt = Pose::new(Rotation::random(&mut rng), Vec3::new(0.0, 0.0, 300.0)).unwrap();
        let est = perturb(&mut rng, &gt, 40.0, 20.0);
        let s = Pose { rotation: sym.rotations()[i], translation: Vec3::zeros() };
        let a = mssd(&est, &gt, &sym, &cloud).unwrap();
        let b = mssd(&est.compose(&s), &gt, &sym, &cloud).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        prop_assert!(mssd(&gt.compose(&s), &gt, &sym, &cloud).unwrap() < 1e-9);
    }

    #[test]
    fn ar_is_mean_of_components(errs in prop::collection::vec((0.0..1.0f64, 0.0..200.0f64, 0.0..80.0f64), 1..30)) {
        let cfg = EvalConfig::default();
        let errors: Vec<Option<PoseError>> = errs
            .iter()
            .map(|&(v, s, p)| Some(PoseError { vsd: vec![v; cfg.vsd_taus.len()], mssd: s, mspd: p }))
            .collect();
        let ar = average_recall(&errors, &cfg, 100.0, 640).unwrap().unwrap();
        prop_assert!((ar.ar - (ar.ar_vsd + ar.ar_mssd + ar.ar_mspd) / 3.0).abs() <= 1e-12);
        for x in [ar.ar, ar.ar_vsd, ar.ar_mssd, ar.ar_mspd] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }
}

#[test]
fn exact_estimates_have_zero_error() {
    let mesh = shapes::bracket();
    let rcfg = RenderConfig::default();
    let sym = SymmetrySet::trivial();
    let obj = EvalObject::new(&mesh, &sym);
    let cfg = EvalConfig::default();
    let scene = generate_scene(&SceneConfig::default(), &mesh, &rcfg, 0).unwrap();
    let poses: Vec<Pose> = scene
        .gt
        .instances
        .iter()
        .filter(|i| i.visible_fraction >= cfg.visibility_threshold)
        .map(|i| Pose::try_from(&i.pose).unwrap())
        .collect();
    let errors = image_errors(&poses, &scene.gt, &obj, &scene.render.depth, &rcfg, &cfg).unwrap();
    for e in &errors {
        let e = e.as_ref().unwrap();
        assert!(e.vsd.iter().all(|&v| v == 0.0));
        assert_eq!(e.mssd, 0.0);
        assert_eq!(e.mspd, 0.0);
    }
    assert_eq!(average_recall(&errors, &cfg, mesh.diameter(), 640).unwrap().unwrap().ar, 1.0);
}

#[test]
fn ar_non_increasing_over_noise_ladder() {
    let mesh = shapes::bracket();
    let rcfg = RenderConfig::default();
    let sym = SymmetrySet::trivial();
    let obj = EvalObject::new(&mesh, &sym);
    let cfg = EvalConfig::default();
    let scenes: Vec<Scene> = (0..3).map(|i| generate_scene(&SceneConfig::default(), &mesh, &rcfg, i).unwrap()).collect();
    let targets: Vec<(usize, Pose)> = scenes
        .iter()
        .enumerate()
        .flat_map(|(si, s)| {
            s.gt.instances
                .iter()
                .filter(|i| i.visible_fraction >= 0.5)
                .map(move |i| (si, Pose::try_from(&i.pose).unwrap()))
        })
        .take(50)
        .collect();
    assert_eq!(targets.len(), 50);
    let mut last = f64::INFINITY;
    let mut ladder = Vec::new();
    for (level, mag) in [0.0, 3.0, 8.0, 15.0, 30.0].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(level as u64);
        let errors: Vec<Option<PoseError>> = targets
            .iter()
            .map(|(si, gt)| {
                // Fixed-magnitude noise along a random axis and direction.
                let r = Rotation::from_axis_angle(&random_unit(&mut rng), f64::to_radians(mag));
                let est = Pose::new(r.compose(&gt.rotation), gt.translation + random_unit(&mut rng) * mag).unwrap();
                Some(pose_error(&est, gt, &obj, &scenes[*si].render.depth, &rcfg, &cfg).unwrap())
            })
            .collect();
        let ar = average_recall(&errors, &cfg, mesh.diameter(), 640).unwrap().unwrap().ar;
        ladder.push(ar);
        assert!(ar <= last, "AR ladder {ladder:?}");
        last = ar;
    }
    assert_eq!(ladder[0], 1.0);
}

#[test]
fn depth_ranking_separates_corrupted_estimates() {
    let mesh = shapes::bracket();
    let rcfg = RenderConfig::default();
    let selcfg = SelectionConfig::default();
    let mut good_trials = 0;
    let trials = 50;
    for t in 0..trials {
        let scene = generate_scene(&SceneConfig::default(), &mesh, &rcfg, t).unwrap();
        let dets = gt_detections(&scene.render.instances, &scene.gt, 0.1, None);
        assert!(dets.detections.len() >= 20, "scene {t} has {} detections", dets.detections.len());
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + t as u64);
        let mut items = Vec::new();
        let mut corrupted = Vec::new();
        for (i, d) in dets.detections.iter().take(20).enumerate() {
            let gt = Pose::try_from(&scene.gt.instance(d.instance_id.unwrap()).unwrap().pose).unwrap();
            let mut pose = perturb(&mut rng, &gt, 2.0, 1.0);
            let bad = i % 2 == 1;
            if bad {
                let angle = rng.random_range(30f64.to_radians()..=std::f64::consts::PI);
                pose.rotation = Rotation::from_axis_angle(&random_unit(&mut rng), angle).compose(&pose.rotation);
            }
            corrupted.push(bad);
            let mask = d.mask.decode().unwrap();
            let mut e = estimate(i, rng.random(), rng.random());
            e.pose = (&pose).into();
            let s = depth_error(&scene.render.depth, &pose, &mesh, &mask, &rcfg, &selcfg).unwrap();
            items.push(ScoredEstimate { estimate: e, selection: Some(s) });
        }
        let top = select_top_k(&items, SortMethod::DepthError, selcfg.variant, 10).unwrap();
        let clean = top.iter().filter(|&&j| !corrupted[j]).count();
        if clean >= 8 {
            good_trials += 1;
        }
    }
    assert!(good_trials * 10 >= trials * 9, "{good_trials}/{trials} trials");
}

#[test]
fn icp_residual_never_increases() {
    let mesh = shapes::bracket();
    let rcfg = RenderConfig::default();
    let cfg = IcpConfig::default();
    let model = IcpModel::new(&mesh, &cfg).unwrap();
    let scene = generate_scene(&SceneConfig::default(), &mesh, &rcfg, 4).unwrap();
    let dets = gt_detections(&scene.render.instances, &scene.gt, 0.1, None);
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for d in &dets.detections {
        let gt = Pose::try_from(&scene.gt.instance(d.instance_id.unwrap()).unwrap().pose).unwrap();
        let init = perturb(&mut rng, &gt, 15.0, 10.0);
        let obs = observation_cloud(&scene.render.depth, &d.mask.decode().unwrap(), &rcfg.intrinsics).unwrap();
        let res = icp_refine_with(&model, &obs, &init, &cfg).unwrap();
        assert!(res.history.windows(2).all(|w| w[1] <= w[0]), "{:?}", res.history);
        assert_eq!(*res.history.last().unwrap(), res.rms);
    }
}
