use std::sync::OnceLock;

use binpose::codebook::*;
use binpose::geometry::*;
use binpose::pipeline::*;
use binpose::render::{render_scene, RenderConfig, RenderInstance, SceneRender};
use binpose::scenegen::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Fixture {
    mesh: TriangleMesh,
    render: RenderConfig,
    embedder: PixelTemplate,
    crop: CropSpec,
    codebook: Codebook,
    spacing: f64,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let mesh = shapes::bracket();
        let render = RenderConfig::default();
        let embedder = EmbedderSpec::default().build().unwrap();
        let crop = CropSpec::default();
        let rots = sample_rotations(4096, 0).unwrap();
        let codebook = build_codebook("bracket", &mesh, &rots, &embedder, &crop, &render, 300.0).unwrap().codebook;
        let spacing = mean_nearest_spacing(&codebook.rotations());
        Fixture {
            mesh,
            render,
            embedder,
            crop,
            codebook,
            spacing,
        }
    })
}

fn solo(f: &Fixture, pose: Pose) -> (SceneRender, SceneGt) {
    let render = render_scene(&[RenderInstance { mesh: &f.mesh, pose, id: 1 }], &f.render);
    let gt = SceneGt {
        image_id: 0,
        intrinsics: f.render.intrinsics,
        camera_to_world: (&Pose::identity()).into(),
        instances: vec![GtInstance {
            instance_id: 1,
            object_id: "bracket".into(),
            pose: (&pose).into(),
            visible_fraction: 1.0,
        }],
    };
    (render, gt)
}

fn run(f: &Fixture, render: &SceneRender, dets: &ImageDetections, mode: &TranslationMode) -> ImageEstimates {
    let ctx = EstimationContext {
        codebook: &f.codebook,
        embedder: &f.embedder,
        crop: &f.crop,
        mode,
        intrinsics: &f.render.intrinsics,
    };
    estimate_poses(&render.gray, Some(&render.depth), dets, &ctx).unwrap()
}

fn face_on() -> Pose {
    Pose::new(Rotation::from_axis_angle(&Vec3::z(), 0.7), Vec3::new(15.0, -10.0, 310.0)).unwrap()
}

#[test]
fn single_instance_round_trip() {
    let f = fixture();
    let truth = face_on();
    let (render, gt) = solo(f, truth);
    let dets = gt_detections(&render.instances, &gt, 0.0, None);
    let est = run(f, &render, &dets, &TranslationMode::depth_center(&f.mesh));
    assert_eq!(est.estimates.len(), 1);
    assert!(est.skipped.is_empty());
    let p = est.estimates[0].pose().unwrap();
    let rot_err = symmetric_geodesic_distance(&p.rotation, &truth.rotation, &SymmetrySet::trivial());
    let t_err = (p.translation - truth.translation).norm();
    assert!(rot_err <= 2.5 * f.spacing, "rotation error {} deg", rot_err.to_degrees());
    assert!(t_err <= 5.0, "translation error {t_err} mm");
}

#[test]
fn duplicate_detections_give_identical_poses() {
    let f = fixture();
    let (render, gt) = solo(f, face_on());
    let mut dets = gt_detections(&render.instances, &gt, 0.0, None);
    dets.detections.push(dets.detections[0].clone());
    for mode in [TranslationMode::depth_center(&f.mesh), TranslationMode::rgb_scale()] {
        let est = run(f, &render, &dets, &mode);
        assert_eq!(est.estimates.len(), 2);
        assert_eq!(est.estimates[0].pose, est.estimates[1].pose);
        assert_eq!(est.estimates[0].similarity, est.estimates[1].similarity);
        assert_eq!(est.estimates[1].detection_index, 1);
    }
}

#[test]
fn estimation_is_deterministic_across_threads() {
    let f = fixture();
    let scene = generate_scene(&SceneConfig::default(), &f.mesh, &f.render, 2).unwrap();
    let dets = gt_detections(&scene.render.instances, &scene.gt, 0.1, None);
    let mode = TranslationMode::depth_center(&f.mesh);
    let a = run(f, &scene.render, &dets, &mode);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| run(f, &scene.render, &dets, &mode));
    assert_eq!(a, b);
    let order: Vec<usize> = a.estimates.iter().map(|e| e.detection_index).collect();
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(order, sorted);
}

#[test]
fn centered_views_pick_the_full_scan_argmax() {
    let f = fixture();
    let mode = TranslationMode::depth_center(&f.mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let truth = Pose::new(Rotation::random(&mut rng), Vec3::new(0.0, 0.0, f.codebook.z_ref)).unwrap();
        let (render, gt) = solo(f, truth);
        let dets = gt_detections(&render.instances, &gt, 0.0, None);
        let est = run(f, &render, &dets, &mode);
        let d = &dets.detections[0];
        let crop = extract_crop(&render.gray, &d.bbox, Some(&d.mask.decode().unwrap()), &f.crop).unwrap();
        let z = f.embedder.embed(&crop).unwrap();
        let sims = f.codebook.similarities(&z).unwrap();
        let best = (0..sims.len()).fold(0, |b, i| if sims[i] > sims[b] { i } else { b });
        assert_eq!(est.estimates[0].codebook_index, best);
        assert_eq!(est.estimates[0].similarity, sims[best]);
    }
}

#[test]
fn rgb_scale_depth_tracks_distance() {
    let f = fixture();
    let truth = face_on();
    let (render, gt) = solo(f, truth);
    let dets = gt_detections(&render.instances, &gt, 0.0, None);
    let p = run(f, &render, &dets, &TranslationMode::rgb_scale()).estimates[0].pose().unwrap();
    assert!((p.translation.z - truth.translation.z).abs() < 0.1 * truth.translation.z);
}

#[test]
fn object_mismatch_is_an_error() {
    let f = fixture();
    let (render, gt) = solo(f, face_on());
    let mut dets = gt_detections(&render.instances, &gt, 0.0, None);
    dets.detections[0].object_id = "other".into();
    let mode = TranslationMode::depth_center(&f.mesh);
    let ctx = EstimationContext {
        codebook: &f.codebook,
        embedder: &f.embedder,
        crop: &f.crop,
        mode: &mode,
        intrinsics: &f.render.intrinsics,
    };
    let err = estimate_poses(&render.gray, Some(&render.depth), &dets, &ctx).unwrap_err();
    assert!(matches!(err, binpose::Error::ObjectMismatch { .. }));
}
