use binpose::codebook::*;
use binpose::formats::{pnm, rle::RleMask};
use binpose::geometry::*;
use binpose::pipeline::CropSpec;
use binpose::render::*;
use binpose::scenegen::*;
use proptest::prelude::*;

fn small_render() -> RenderConfig {
    RenderConfig::with_intrinsics(CameraIntrinsics::new(300.0, 300.0, 80.0, 60.0, 160, 120).unwrap())
}

fn small_scene(instances: usize) -> SceneConfig {
    SceneConfig {
        instance_count: instances,
        ..SceneConfig::default()
    }
}

#[test]
fn scene_depth_is_min_of_solo_renders() {
    let mesh = shapes::bracket();
    let cfg = small_render();
    let scene = generate_scene(&small_scene(12), &mesh, &cfg, 3).unwrap();
    let poses = scene.gt.poses().unwrap();
    let solos: Vec<DepthImage> = poses.iter().map(|p| render_single(&mesh, p, &cfg).0).collect();
    for y in 0..cfg.intrinsics.height {
        for x in 0..cfg.intrinsics.width {
            let best = solos
                .iter()
                .enumerate()
                .filter(|(_, d)| d.get(x, y) > 0)
                .min_by(|a, b| a.1.get(x, y).cmp(&b.1.get(x, y)).then(a.0.cmp(&b.0)));
            match best {
                None => {
                    assert_eq!(scene.render.depth.get(x, y), 0);
                    assert_eq!(scene.render.instances.get(x, y), 0);
                }
                Some((i, d)) => {
                    let got = scene.render.depth.get(x, y) as i32;
                    assert!((got - d.get(x, y) as i32).abs() <= 1, "pixel ({x},{y})");
                    let id = scene.render.instances.get(x, y);
                    let owner = &solos[id as usize - 1];
                    assert!((owner.get(x, y) as i32 - d.get(x, y) as i32).abs() <= 1);
                    if got == d.get(x, y) as i32 {
                        assert!(id as usize - 1 >= i || owner.get(x, y) == d.get(x, y));
                    }
                }
            }
        }
    }
}

#[test]
fn gt_rerender_and_visibility() {
    let mesh = shapes::bracket();
    let cfg = small_render();
    let scene = generate_scene(&small_scene(15), &mesh, &cfg, 7).unwrap();
    let again = render_poses(&mesh, &scene.gt.poses().unwrap(), &cfg);
    assert_eq!(again, scene.render);
    for inst in &scene.gt.instances {
        let pose = Pose::try_from(&inst.pose).unwrap();
        let solo = render_single_window(&mesh, &pose, &cfg).pixel_count();
        let visible = scene.render.instances.mask_of(inst.instance_id).count();
        assert!((0.0..=1.0).contains(&inst.visible_fraction));
        if solo > 0 {
            assert_eq!(inst.visible_fraction, (visible as f64 / solo as f64).min(1.0));
        }
    }
    let ids: std::collections::BTreeSet<u16> = scene.gt.instances.iter().map(|i| i.instance_id).collect();
    assert_eq!(ids.len(), scene.gt.instances.len());
}

#[test]
fn detection_masks_are_instance_pixels() {
    let mesh = shapes::bracket();
    let cfg = small_render();
    let scene = generate_scene(&small_scene(15), &mesh, &cfg, 11).unwrap();
    let dets = gt_detections(&scene.render.instances, &scene.gt, 0.0, None);
    dets.validate().unwrap();
    assert!(!dets.detections.is_empty());
    for d in &dets.detections {
        let mask = d.mask.decode().unwrap();
        let inst = scene.render.instances.mask_of(d.instance_id.unwrap());
        assert!(mask.data().iter().zip(inst.data()).all(|(&m, &i)| !m || i));
        assert_eq!(mask.bounds(), Some(d.bbox));
    }
}

#[test]
fn scenes_independent_of_order_and_threads() {
    let mesh = shapes::bracket();
    let cfg = small_render();
    let sc = small_scene(10);
    let forward: Vec<Scene> = (0..3).map(|i| generate_scene(&sc, &mesh, &cfg, i).unwrap()).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let backward: Vec<Scene> = pool.install(|| (0..3).rev().map(|i| generate_scene(&sc, &mesh, &cfg, i).unwrap()).collect());
    for (a, b) in forward.iter().zip(backward.iter().rev()) {
        assert_eq!(a, b);
    }
}

#[test]
fn codebook_build_independent_of_threads() {
    let mesh = shapes::bracket();
    let cfg = RenderConfig::default();
    let emb = EmbedderSpec::default().build().unwrap();
    let rots = sample_rotations(128, 0).unwrap();
    let build = |n| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        pool.install(|| build_codebook("bracket", &mesh, &rots, &emb, &CropSpec::default(), &cfg, 300.0).unwrap().codebook)
    };
    let (a, b) = (build(1), build(4));
    assert_eq!(a, b);
    assert_eq!(a.to_text(), b.to_text());
}

#[test]
fn codebook_text_round_trip() {
    let mesh = shapes::bracket();
    let emb = EmbedderSpec {
        grid: 8,
        crop_size: 32,
        ..EmbedderSpec::default()
    }
    .build()
    .unwrap();
    let rots = sample_rotations(64, 3).unwrap();
    let cb = build_codebook("bracket", &mesh, &rots, &emb, &CropSpec { output_size: 32, ..CropSpec::default() }, &RenderConfig::default(), 300.0)
        .unwrap()
        .codebook;
    let back = Codebook::from_text(&cb.to_text()).unwrap();
    assert_eq!(back, cb);
}

fn brute_knn(cb: &Codebook, q: &[f32], k: usize) -> Vec<usize> {
    let qn = q.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
    let mut s: Vec<(f64, usize)> = cb
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let en = e.embedding.0.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
            let dot: f64 = e.embedding.0.iter().zip(q).map(|(&a, &b)| a as f64 * b as f64).sum();
            ((dot / (en * qn)).clamp(-1.0, 1.0), i)
        })
        .collect();
    s.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    s.into_iter().take(k).map(|x| x.1).collect()
}

fn small_codebook(vecs: &[Vec<i8>]) -> Codebook {
    let rots = sample_rotations(vecs.len(), 0).unwrap();
    let entries = vecs
        .iter()
        .zip(rots)
        .map(|(v, r)| {
            let mut e: Vec<f32> = v.iter().map(|&x| x as f32).collect();
            if e.iter().all(|&x| x == 0.0) {
                e[0] = 1.0;
            }
            CodebookEntry {
                rotation: r,
                embedding: Embedding(e),
                view_diagonal: 1.0,
            }
        })
        .collect();
    Codebook::new("o", "manual", "", "", 300.0, entries).unwrap()
}

proptest! {
    #[test]
    fn knn_equals_brute_force(
        vecs in prop::collection::vec(prop::collection::vec(-2i8..=2, 6), 1..60),
        q in prop::collection::vec(-2i8..=2, 6),
        k in 1usize..60,
    ) {
        let cb = small_codebook(&vecs);
        let mut q: Vec<f32> = q.iter().map(|&x| x as f32).collect();
        if q.iter().all(|&x| x == 0.0) {
            q[1] = 1.0;
        }
        let k = k.min(cb.len());
        let got: Vec<usize> = cb.knn_lookup(&Embedding(q.clone()), k).unwrap().iter().map(|s| s.index).collect();
        prop_assert_eq!(got, brute_knn(&cb, &q, k));
    }

    #[test]
    fn knn_invariant_to_query_scaling(
        vecs in prop::collection::vec(prop::collection::vec(-2i8..=2, 6), 2..40),
        q in prop::collection::vec(-1.0f32..1.0, 6),
        alpha in prop::sample::select(vec![0.5f32, 2.0, 4.0, 8.0]),
    ) {
        prop_assume!(q.iter().any(|&x| x != 0.0));
        let cb = small_codebook(&vecs);
        let a = cb.knn_lookup(&Embedding(q.clone()), cb.len()).unwrap();
        let b = cb.knn_lookup(&Embedding(q.iter().map(|x| x * alpha).collect()), cb.len()).unwrap();
        let ia: Vec<usize> = a.iter().map(|s| s.index).collect();
        let ib: Vec<usize> = b.iter().map(|s| s.index).collect();
        prop_assert_eq!(ia, ib);
        prop_assert!(a.iter().all(|s| (-1.0..=1.0).contains(&s.similarity)));
    }

    #[test]
    fn rle_round_trip(w in 1u32..40, h in 1u32..40, bits in prop::collection::vec(any::<bool>(), 1600)) {
        let data: Vec<bool> = bits[..(w * h) as usize].to_vec();
        let mask = Image::from_vec(w, h, data).unwrap();
        let rle = RleMask::encode(&mask);
        prop_assert_eq!(rle.area(), mask.count() as u64);
        prop_assert_eq!(rle.decode().unwrap(), mask);
    }

    #[test]
    fn pgm_u16_round_trip(w in 1u32..30, h in 1u32..30, vals in prop::collection::vec(any::<u16>(), 900)) {
        let img = Image::from_vec(w, h, vals[..(w * h) as usize].to_vec()).unwrap();
        prop_assert_eq!(pnm::decode_u16(&pnm::encode_u16(&img)).unwrap(), img);
    }

    #[test]
    fn gray8_round_trip_is_quantized(w in 1u32..30, h in 1u32..30, vals in prop::collection::vec(0.0f32..=1.0, 900)) {
        let img = Image::from_vec(w, h, vals[..(w * h) as usize].to_vec()).unwrap();
        let back = pnm::decode_gray(&pnm::encode_gray8(&img)).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn embedding_text_round_trip(v in prop::collection::vec(-1.0f32..1.0, 1..50)) {
        let e = Embedding(v);
        prop_assert_eq!(Embedding::from_text(&e.to_text()).unwrap(), e);
    }
}
