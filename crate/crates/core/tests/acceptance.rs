//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion; exits non-zero if any criterion fails.
//!
//! `cargo test -p bevgeom --test acceptance`

#![allow(clippy::needless_range_loop)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use bevgeom::bench::{run_bench, BenchConfig, Method};
use bevgeom::geometry::{DepthBinSpec, OrientedBox, Point3};
use bevgeom::io::{encode_labels, encode_tensor};
use bevgeom::labels::{
    apply_background_labels, apply_mask_correction, apply_occlusion_correction, build_labels,
    pseudo_point_grid, vanilla_inbox_label, BackgroundMode, LabelConfig, LabelState, LabelVolume,
};
use bevgeom::loss::{
    attach_cai_weights, cai_focal_grad, cai_focal_loss, cai_weight, ce_depth_loss, Activation,
    LossConfig, Reduction, ScoreVolume,
};
use bevgeom::scene::{scene_to_json, DepthMap, InstanceMask, Scene, BACKGROUND};
use bevgeom::synth::{synth_features, synth_scene, DepthMode, SynthParams};
use bevgeom::tensor::{Dim, FeatureTensor};
use bevgeom::transform::{
    lss_pool, oracle_pipeline, radial_bev, radial_bev_oracle, rc_pipeline,
    upsample_depth_scores_2x, vacancy_ratio, voxel_sampling, BevGridSpec, CameraView, Fusion,
};
use common::*;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($msg)+)),
        }
    };
}

fn views<'a, T>(
    feats: &'a [(FeatureTensor<T>, FeatureTensor<T>)],
    scene: &'a Scene<T>,
) -> Vec<CameraView<'a, T>> {
    feats
        .iter()
        .zip(&scene.cameras)
        .map(|((image, depth), camera)| CameraView {
            image,
            depth,
            camera,
        })
        .collect()
}

fn to_f64<T: bevgeom::Real>(t: &FeatureTensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.to_f64().unwrap()).collect()
}

fn rc_oracle_equivalence() -> Outcome {
    let (mut worst32, mut worst64, mut worst_naive) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..100u64 {
        let mut r = rng(seed);
        let (c, d, h, w) = (
            r.gen_range(1..=32),
            r.gen_range(1..=64),
            r.gen_range(1..=32),
            r.gen_range(1..=64),
        );
        let img: FeatureTensor<f64> =
            tensor(&[(Dim::C, c), (Dim::H, h), (Dim::W, w)], &mut r, -1.0, 1.0);
        let dep: FeatureTensor<f64> =
            tensor(&[(Dim::D, d), (Dim::H, h), (Dim::W, w)], &mut r, 0.0, 1.0);
        let (rc, _) = radial_bev(&img, &dep).map_err(|e| e.to_string())?;
        let (or, _) = radial_bev_oracle(&img, &dep).map_err(|e| e.to_string())?;
        let e64 = rc.max_rel_diff(&or).unwrap();
        let naive = naive_radial(img.data(), dep.data(), c, d, h, w);
        let en = max_rel(rc.data(), &naive);

        let (img32, dep32) = (img.cast::<f32>(), dep.cast::<f32>());
        let (rc32, _) = radial_bev(&img32, &dep32).map_err(|e| e.to_string())?;
        let (or32, _) = radial_bev_oracle(&img32, &dep32).map_err(|e| e.to_string())?;
        let e32 = rc32.max_rel_diff(&or32).unwrap() as f64;
        let naive32 = naive_radial(&to_f64(&img32), &to_f64(&dep32), c, d, h, w);
        let e32n = max_rel(&to_f64(&rc32), &naive32);

        ensure!(
            e64 <= 1e-12,
            "seed {seed} ({c},{d},{h},{w}): f64 rc vs oracle {e64:e}"
        );
        ensure!(en <= 1e-12, "seed {seed}: f64 rc vs naive {en:e}");
        ensure!(
            e32 <= 1e-5 && e32n <= 1e-5,
            "seed {seed}: f32 rel {e32:e}, vs naive {e32n:e}"
        );
        worst64 = worst64.max(e64);
        worst32 = worst32.max(e32.max(e32n));
        worst_naive = worst_naive.max(en);
    }
    Ok(format!(
        "100 instances; max rel f32 {worst32:.2e} (<= 1e-5), f64 {worst64:.2e} / vs naive {worst_naive:.2e} (<= 1e-12)"
    ))
}

fn memory_ratio() -> Outcome {
    let mut notes = Vec::new();
    for (seed, h) in [(1u64, 16usize), (2, 1), (3, 7), (4, 32)] {
        let mut r = rng(seed);
        let (c, d, w) = (80, 118, 44);
        let img: FeatureTensor<f32> =
            tensor(&[(Dim::C, c), (Dim::H, h), (Dim::W, w)], &mut r, -1.0, 1.0);
        let dep: FeatureTensor<f32> =
            tensor(&[(Dim::D, d), (Dim::H, h), (Dim::W, w)], &mut r, 0.0, 1.0);
        let (_, rc) = radial_bev(&img, &dep).map_err(|e| e.to_string())?;
        let (_, or) = radial_bev_oracle(&img, &dep).map_err(|e| e.to_string())?;
        ensure!(
            or.intermediate_floats == h as u64 * rc.intermediate_floats,
            "H={h}: oracle {} vs rc {}",
            or.intermediate_floats,
            rc.intermediate_floats
        );
        ensure!(
            rc.intermediate_floats == (c * d * w) as u64,
            "rc accounting is not C*D*W"
        );
        notes.push(format!(
            "H={h}: {}/{}",
            or.intermediate_floats, rc.intermediate_floats
        ));
    }
    // the same identity over the default six-camera rig, through the pipelines
    let p = SynthParams {
        n_boxes: 0,
        ..Default::default()
    };
    let scene = synth_scene(&p).map_err(|e| e.to_string())?;
    let feats = synth_features::<f32>(&p, &scene).map_err(|e| e.to_string())?;
    let scene32 = scene.cast::<f32>();
    let v = views(&feats, &scene32);
    let grid = BevGridSpec::centered(40.0f32, 32).unwrap();
    let (_, rc) = rc_pipeline(&v, &grid, 0.0, Fusion::Sum).map_err(|e| e.to_string())?;
    let (_, or) = oracle_pipeline(&v, &grid, 0.0, Fusion::Sum).map_err(|e| e.to_string())?;
    ensure!(
        or.intermediate_floats == 16 * rc.intermediate_floats,
        "pipeline ratio is not 16"
    );
    let reduction = 1.0 - rc.intermediate_floats as f64 / or.intermediate_floats as f64;
    ensure!(reduction == 0.9375, "reduction {reduction}");
    Ok(format!(
        "oracle/rc = H exactly ({}); six-camera rig at H=16: {:.2}% reduction",
        notes.join(", "),
        reduction * 100.0
    ))
}

fn latency_ratio() -> Outcome {
    let cfg = BenchConfig {
        methods: vec![Method::Rc, Method::Voxel],
        sizes: vec![256],
        repetitions: 5,
        voxel_heights: vec![20],
        ..Default::default()
    };
    let rep = run_bench(&cfg).map_err(|e| e.to_string())?;
    let rc = rep.row(Method::Rc, 256).ok_or("no rc row")?;
    let vx = rep.row(Method::Voxel, 256).ok_or("no voxel row")?;
    let ratio = rc.seconds.median / vx.seconds.median;
    let msg = format!(
        "rc median {:.2} ms, voxel(z=20) median {:.2} ms, ratio {ratio:.4} (<= 0.2), threads {}",
        rc.seconds.median * 1e3,
        vx.seconds.median * 1e3,
        rep.environment.threads
    );
    ensure!(ratio <= 0.2, "{msg}");
    Ok(msg)
}

fn non_vacancy() -> Outcome {
    let p = SynthParams {
        depth_mode: DepthMode::UniformPositive,
        ..Default::default()
    };
    let scene = synth_scene(&p).map_err(|e| e.to_string())?;
    let feats = synth_features::<f32>(&p, &scene).map_err(|e| e.to_string())?;
    ensure!(
        feats.iter().all(|(_, d)| d.data().iter().all(|v| *v > 0.0)),
        "scores not strictly positive"
    );
    let scene32 = scene.cast::<f32>();
    let v = views(&feats, &scene32);
    let mut lss = Vec::new();
    for n in [128, 256] {
        let grid = BevGridSpec::centered(40.0f32, n).unwrap();
        let (bev, rep) = rc_pipeline(&v, &grid, 0.0, Fusion::Sum).map_err(|e| e.to_string())?;
        let vac = vacancy_ratio(&bev).unwrap();
        ensure!(
            rep.uncovered_cells == Some(0),
            "{n}^2: {:?} cells uncovered",
            rep.uncovered_cells
        );
        ensure!(vac == 0.0, "{n}^2: rc vacancy {vac}");
        let (pooled, _) = lss_pool(&v, &grid).map_err(|e| e.to_string())?;
        lss.push(vacancy_ratio(&pooled).unwrap());
    }
    ensure!(
        lss[1] >= lss[0],
        "lss vacancy 256^2 {} < 128^2 {}",
        lss[1],
        lss[0]
    );
    Ok(format!(
        "rc vacancy 0 at 128^2 and 256^2; lss vacancy {:.4} (128^2) <= {:.4} (256^2)",
        lss[0], lss[1]
    ))
}

fn label_oracle() -> Outcome {
    let (mut points, mut positives, mut overlaps) = (0usize, 0usize, 0usize);
    for seed in 0..10u64 {
        let n = 1 + (seed as usize * 7) % 10;
        let p = SynthParams {
            seed: 500 + seed,
            n_boxes: n.min(9),
            box_range: [4.0, 25.0],
            ..Default::default()
        };
        let mut scene = synth_scene(&p).map_err(|e| e.to_string())?;
        // an overlapping twin exercises the nearest-center tie rule
        let b0 = scene.boxes[0];
        scene.boxes.push(
            OrientedBox::new(
                b0.center + Point3::new(0.6, 0.3, 0.1),
                b0.size,
                b0.yaw + 0.3,
            )
            .unwrap(),
        );
        ensure!(scene.boxes.len() <= 10, "too many boxes");
        let mut scene_points = 0;
        for cam in 0..scene.cameras.len() {
            let labels =
                build_labels(&scene, cam, LabelConfig::default()).map_err(|e| e.to_string())?;
            let (states, ids) = brute_labels(&scene.cameras[cam], &scene.boxes);
            ensure!(
                labels.states() == states.as_slice(),
                "seed {seed} cam {cam}: states differ"
            );
            ensure!(
                labels.box_ids() == ids.as_slice(),
                "seed {seed} cam {cam}: box ids differ"
            );
            scene_points += states.len();
            positives += labels.counts().positive;
            overlaps += ids
                .iter()
                .filter(|i| **i as usize == scene.boxes.len() - 1)
                .count();
        }
        ensure!(scene_points <= 500_000, "{scene_points} pseudo-points");
        points += scene_points;
    }
    ensure!(positives > 0 && overlaps > 0, "degenerate sweep");
    Ok(format!("10 scenes, {points} pseudo-points, {positives} positives ({overlaps} on overlap twins), exact match"))
}

fn occlusion_fixture() -> Scene<f64> {
    let bins = DepthBinSpec {
        d_min: 1.0,
        d_step: 0.5,
        count: 80,
    };
    let cam = forward_camera(8.0, 9, 9, bins);
    let a = OrientedBox::new(Point3::new(10.0, 0.0, 0.0), Point3::new(2.0, 3.0, 3.0), 0.0).unwrap();
    let b = OrientedBox::new(
        Point3::new(20.0, 0.0, 0.0),
        Point3::new(4.0, 10.0, 10.0),
        0.0,
    )
    .unwrap();
    Scene {
        cameras: vec![cam],
        boxes: vec![a, b],
        surface_depth: None,
        instance_mask: None,
    }
}

fn transitions_ok(before: &LabelVolume, after: &LabelVolume, negatives_may_change: bool) -> bool {
    before
        .states()
        .iter()
        .zip(after.states())
        .all(|(b, a)| match b {
            LabelState::Ignore => *a == LabelState::Ignore,
            LabelState::Positive => *a != LabelState::Negative,
            LabelState::Negative => negatives_may_change || *a == LabelState::Negative,
        })
}

fn correction_semantics() -> Outcome {
    let scene = occlusion_fixture();
    let cam = &scene.cameras[0];
    let (d, h, w) = (80, 9, 9);
    let vanilla = vanilla_inbox_label(&pseudo_point_grid(cam), &scene.boxes);

    // occlusion: far-box positives on rays through the near box
    let occ = apply_occlusion_correction(vanilla.clone(), cam, &scene.boxes)
        .map_err(|e| e.to_string())?;
    let (mut hidden, mut visible_far) = (0, 0);
    for hi in 0..h {
        for wi in 0..w {
            let (o, dir) = cam.pixel_ray(wi as f64, hi as f64);
            let blocked = slab_hits(&o, &dir, &scene.boxes[0]);
            for di in 0..d {
                let k = vanilla.index(di, hi, wi);
                let far = vanilla.states()[k] == LabelState::Positive && vanilla.box_ids()[k] == 1;
                let want = if far && blocked {
                    LabelState::Ignore
                } else {
                    vanilla.states()[k]
                };
                ensure!(occ.states()[k] == want, "occlusion at ({di},{hi},{wi})");
                hidden += (far && blocked) as usize;
                visible_far += (far && !blocked) as usize;
            }
        }
    }
    ensure!(
        hidden > 0 && visible_far > 0,
        "fixture does not exercise occlusion"
    );

    // mask: columns left of center show box 0, the center column background, the rest box 1
    let mask = InstanceMask {
        height: h,
        width: w,
        data: (0..h * w)
            .map(|k| match (k % w).cmp(&4) {
                std::cmp::Ordering::Less => 0,
                std::cmp::Ordering::Equal => BACKGROUND,
                std::cmp::Ordering::Greater => 1,
            })
            .collect(),
    };
    let masked = apply_mask_correction(vanilla.clone(), Some(&mask)).map_err(|e| e.to_string())?;
    let mut mismatched = 0;
    for k in 0..vanilla.len() {
        let pix = k % (h * w);
        let pos = vanilla.states()[k] == LabelState::Positive;
        let bad = pos && vanilla.box_ids()[k] != mask.data[pix];
        let want = if bad {
            LabelState::Ignore
        } else {
            vanilla.states()[k]
        };
        ensure!(masked.states()[k] == want, "mask at element {k}");
        mismatched += bad as usize;
    }
    ensure!(mismatched > 0, "fixture does not exercise the mask");

    // behind-surface: no boxes, random surface depths (some out of range, some missing)
    let bins = DepthBinSpec {
        d_min: 1.0,
        d_step: 0.5,
        count: 40,
    };
    let cam_c = forward_camera(4.0, 4, 5, bins);
    let mut r = rng(77);
    let surf: Vec<f64> = (0..20)
        .map(|k| {
            if k % 7 == 3 {
                0.0
            } else {
                r.gen_range(0.5..25.0)
            }
        })
        .collect();
    let scene_c = Scene {
        cameras: vec![cam_c],
        boxes: vec![],
        surface_depth: Some(vec![DepthMap {
            height: 4,
            width: 5,
            data: surf.clone(),
        }]),
        instance_mask: None,
    };
    let lidar = LabelConfig {
        use_lidar: true,
        ..Default::default()
    };
    let oc = LabelConfig {
        use_lidar: true,
        behind_surface: true,
        ..Default::default()
    };
    let plain = build_labels(&scene_c, 0, lidar).map_err(|e| e.to_string())?;
    let with_oc = build_labels(&scene_c, 0, oc).map_err(|e| e.to_string())?;
    let mut behind = 0;
    for (pix, &s) in surf.iter().enumerate() {
        let hit = ((s - 1.0) / 0.5).floor();
        for di in 0..40 {
            let k = di * 20 + pix;
            let j = di as f64;
            let (want_plain, want_oc) = if s == 0.0 {
                (LabelState::Ignore, LabelState::Ignore)
            } else if j == hit {
                (LabelState::Positive, LabelState::Positive)
            } else if j > hit {
                behind += 1;
                (LabelState::Negative, LabelState::Ignore)
            } else {
                (LabelState::Negative, LabelState::Negative)
            };
            ensure!(
                plain.states()[k] == want_plain,
                "lidar labels at bin {di} pixel {pix} (surface {s})"
            );
            ensure!(
                with_oc.states()[k] == want_oc,
                "O_C labels at bin {di} pixel {pix} (surface {s})"
            );
        }
    }
    ensure!(
        with_oc.counts().negative <= plain.counts().negative,
        "O_C added negatives"
    );

    // monotonicity over random scenes
    let mut transitions = 0usize;
    for seed in 0..50u64 {
        let p = SynthParams {
            seed: 900 + seed,
            n_boxes: 10,
            image_height: 8,
            image_width: 22,
            box_range: [4.0, 22.0],
            ..Default::default()
        };
        let scene = synth_scene(&p).map_err(|e| e.to_string())?;
        let ci = seed as usize % scene.cameras.len();
        let cam = &scene.cameras[ci];
        let v = vanilla_inbox_label(&pseudo_point_grid(cam), &scene.boxes);
        let a =
            apply_occlusion_correction(v.clone(), cam, &scene.boxes).map_err(|e| e.to_string())?;
        let b = apply_mask_correction(a.clone(), Some(&scene.instance_mask.as_ref().unwrap()[ci]))
            .map_err(|e| e.to_string())?;
        let c = apply_background_labels(
            b.clone(),
            Some(&scene.surface_depth.as_ref().unwrap()[ci]),
            &cam.depth_bins,
            BackgroundMode::Lidar {
                ignore_behind_surface: true,
            },
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            transitions_ok(&v, &a, false),
            "seed {seed}: occlusion broke monotonicity"
        );
        ensure!(
            transitions_ok(&a, &b, false),
            "seed {seed}: mask broke monotonicity"
        );
        ensure!(
            transitions_ok(&b, &c, true),
            "seed {seed}: background broke monotonicity"
        );
        ensure!(
            a.counts().positive <= v.counts().positive,
            "seed {seed}: occlusion added positives"
        );
        let all = LabelConfig {
            use_lidar: true,
            occlusion: true,
            mask: true,
            behind_surface: true,
        };
        ensure!(
            build_labels(&scene, ci, all).map_err(|e| e.to_string())? == c,
            "seed {seed}: pipeline differs"
        );
        transitions += v
            .states()
            .iter()
            .zip(c.states())
            .filter(|(x, y)| x != y)
            .count();
    }
    Ok(format!(
        "occlusion {hidden} hidden / {visible_far} visible far positives; mask {mismatched} mismatches; \
         O_C {behind} behind-surface bins; 50 scenes monotone ({transitions} transitions)"
    ))
}

fn dyadic(r: &mut rand_chacha::ChaCha8Rng, lo: i64, hi: i64, denom: f64) -> f64 {
    r.gen_range(lo..=hi) as f64 / denom
}

fn cai_properties() -> Outcome {
    let mut r = rng(7);
    let n = 10_000;
    let (mut worst_inv, mut worst_mono) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let b = random_box(&mut r);
        // centroid
        ensure!(
            cai_weight(&b.center, &b).unwrap() == 1.0,
            "centroid weight != 1 for {b:?}"
        );

        // range and strict positivity inside
        let p = point_in(&b, &mut r, 0.999);
        let wt = cai_weight(&p, &b).unwrap();
        ensure!(
            wt > 0.0 && wt <= 1.0,
            "weight {wt} outside (0, 1] at interior point"
        );

        // monotone toward the centroid along each axis
        let axis = r.gen_range(0..3);
        let (a, bb) = (r.gen_range(0.0..0.5), r.gen_range(0.0..0.5));
        let (near, far) = if a < bb { (a, bb) } else { (bb, a) };
        let at = |t: f64| {
            let mut l = [0.0; 3];
            l[axis] = t * [b.size.x, b.size.y, b.size.z][axis];
            cai_weight(&local_to_world(&b, l), &b).unwrap()
        };
        let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        let drop = at(sign * far) - at(sign * near);
        worst_mono = worst_mono.max(drop);
        ensure!(
            drop <= 1e-12,
            "weight rises away from the centroid by {drop:e}"
        );

        // joint rigid motion and uniform scale
        let q = point_in(&b, &mut r, 0.9);
        let (phi, s) = (r.gen_range(-3.1..3.1), r.gen_range(0.1..10.0));
        let t = Point3::new(
            r.gen_range(-20.0..20.0),
            r.gen_range(-20.0..20.0),
            r.gen_range(-2.0..2.0),
        );
        let (sp, cp) = f64::sin_cos(phi);
        let mv = |v: &Point3<f64>| {
            Point3::new(
                s * (cp * v.x - sp * v.y) + t.x,
                s * (sp * v.x + cp * v.y) + t.y,
                s * v.z + t.z,
            )
        };
        let b2 = OrientedBox::new(mv(&b.center), b.size * s, b.yaw + phi).unwrap();
        let w1 = cai_weight(&q, &b).unwrap();
        let w2 = cai_weight(&mv(&q), &b2).unwrap();
        worst_inv = worst_inv.max((w1 - w2).abs());
        ensure!(
            (w1 - w2).abs() <= 1e-12,
            "invariance broken by {:e}",
            (w1 - w2).abs()
        );
    }
    // faces: axis-aligned boxes on a dyadic lattice keep face points exact
    for _ in 0..n {
        let c = Point3::new(
            dyadic(&mut r, -2048, 2048, 64.0),
            dyadic(&mut r, -2048, 2048, 64.0),
            dyadic(&mut r, -128, 128, 64.0),
        );
        let size = Point3::new(
            dyadic(&mut r, 8, 256, 32.0),
            dyadic(&mut r, 8, 128, 32.0),
            dyadic(&mut r, 8, 96, 32.0),
        );
        let b = OrientedBox::new(c, size, 0.0).unwrap();
        let half = [size.x / 2.0, size.y / 2.0, size.z / 2.0];
        let mut l = [0.0; 3];
        for (i, hl) in half.iter().enumerate() {
            l[i] = (r.gen_range(-64..=64) as f64 / 64.0) * hl;
        }
        let axis = r.gen_range(0..3);
        l[axis] = if r.gen_bool(0.5) {
            half[axis]
        } else {
            -half[axis]
        };
        let p = Point3::new(c.x + l[0], c.y + l[1], c.z + l[2]);
        ensure!(cai_weight(&p, &b).unwrap() == 0.0, "face point weight != 0");
    }
    Ok(format!(
        "{n} pairs each: centroid 1 and face 0 exact, range (0,1], monotone (worst rise {worst_mono:.1e}), \
         rigid+scale invariant (worst {worst_inv:.1e})"
    ))
}

fn random_labels(
    r: &mut rand_chacha::ChaCha8Rng,
    dims: (usize, usize, usize),
    p_ignore: f64,
) -> LabelVolume {
    let n = dims.0 * dims.1 * dims.2;
    let mut states = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = r.gen();
        if u < p_ignore {
            states.push(LabelState::Ignore);
            weights.push(0.0);
            ids.push(-1);
        } else if u < p_ignore + (1.0 - p_ignore) * 0.4 {
            states.push(LabelState::Positive);
            weights.push(r.gen_range(0.05f32..1.0));
            ids.push(0);
        } else {
            states.push(LabelState::Negative);
            weights.push(0.0);
            ids.push(-1);
        }
    }
    LabelVolume::from_parts(dims, states, weights, ids).unwrap()
}

fn loss_and_gradient() -> Outcome {
    // hand values
    let sum_cfg = LossConfig {
        reduction: Reduction::Sum,
        ..Default::default()
    };
    let one = |state: LabelState, w: f32| {
        let id = if state == LabelState::Positive { 0 } else { -1 };
        let labels = LabelVolume::from_parts((1, 1, 1), vec![state], vec![w], vec![id]).unwrap();
        let s = ScoreVolume::new((1, 1, 1), vec![0.0f64], Activation::Sigmoid).unwrap();
        cai_focal_loss(&s, &labels, &sum_cfg).unwrap()
    };
    let (lp, ln) = (
        one(LabelState::Positive, 1.0),
        one(LabelState::Negative, 0.0),
    );
    ensure!((lp - 0.0433217).abs() <= 1e-6, "y=1 loss {lp}");
    ensure!((ln - 0.1299651).abs() <= 1e-6, "y=0 loss {ln}");

    // gradient against central differences; the loss is separable, so each
    // element is differenced on its own single-element volume and scaled by
    // the reduction's normaliser, keeping roundoff relative to that element
    let dims = (5, 3, 4);
    let n = dims.0 * dims.1 * dims.2;
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut r = rng(1000 + seed);
        let labels = random_labels(&mut r, dims, 0.2);
        let logits: Vec<f64> = (0..n).map(|_| r.gen_range(-4.0..4.0)).collect();
        let supervised = labels
            .states()
            .iter()
            .filter(|s| **s != LabelState::Ignore)
            .count() as f64;
        for (cfg, scale) in [(sum_cfg, 1.0), (LossConfig::default(), supervised)] {
            let s = ScoreVolume::new(dims, logits.clone(), Activation::Sigmoid).unwrap();
            let g = cai_focal_grad(&s, &labels, &cfg).unwrap();
            for k in 0..n {
                let single = LabelVolume::from_parts(
                    (1, 1, 1),
                    vec![labels.states()[k]],
                    vec![labels.cai_weights()[k]],
                    vec![labels.box_ids()[k]],
                )
                .unwrap();
                let eval = |dx: f64| {
                    let s1 = ScoreVolume::new((1, 1, 1), vec![logits[k] + dx], Activation::Sigmoid)
                        .unwrap();
                    cai_focal_loss(&s1, &single, &sum_cfg).unwrap()
                };
                let fd = (eval(1e-5) - eval(-1e-5)) / 2e-5 / scale;
                let a = g.data()[k];
                if labels.states()[k] == LabelState::Ignore {
                    ensure!(
                        a == 0.0 && fd == 0.0,
                        "ignore element {k} has gradient {a} / fd {fd}"
                    );
                    continue;
                }
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-10);
                worst = worst.max(rel);
                ensure!(
                    rel <= 1e-4,
                    "seed {seed} element {k}: analytic {a:e} vs fd {fd:e}"
                );
            }
        }
    }

    // ignore elements are inert
    let mut r = rng(2024);
    let labels = random_labels(&mut r, dims, 0.3);
    let logits: Vec<f64> = (0..n).map(|_| r.gen_range(-4.0..4.0)).collect();
    let mut shaken = logits.clone();
    for k in 0..n {
        if labels.states()[k] == LabelState::Ignore {
            shaken[k] += r.gen_range(-20.0..20.0);
        }
    }
    let cfg = LossConfig::default();
    let s1 = ScoreVolume::new(dims, logits, Activation::Sigmoid).unwrap();
    let s2 = ScoreVolume::new(dims, shaken, Activation::Sigmoid).unwrap();
    ensure!(
        cai_focal_loss(&s1, &labels, &cfg).unwrap().to_bits()
            == cai_focal_loss(&s2, &labels, &cfg).unwrap().to_bits(),
        "loss moved under ignore-only perturbation"
    );
    ensure!(
        cai_focal_grad(&s1, &labels, &cfg).unwrap() == cai_focal_grad(&s2, &labels, &cfg).unwrap(),
        "gradient moved under ignore-only perturbation"
    );

    // unit weights and no ignores reduce to the standard focal loss
    let mut worst_std = 0.0f64;
    for seed in 0..20u64 {
        let mut r = rng(3000 + seed);
        let mut labels = random_labels(&mut r, dims, 0.0);
        let pos: Vec<bool> = labels
            .states()
            .iter()
            .map(|s| *s == LabelState::Positive)
            .collect();
        labels = LabelVolume::from_parts(
            dims,
            labels.states().to_vec(),
            pos.iter().map(|p| if *p { 1.0 } else { 0.0 }).collect(),
            labels.box_ids().to_vec(),
        )
        .unwrap();
        let logits: Vec<f64> = (0..n).map(|_| r.gen_range(-6.0..6.0)).collect();
        let reference: f64 = logits
            .iter()
            .zip(&pos)
            .map(|(x, p)| standard_focal(*x, *p, 0.25, 2.0))
            .sum();
        let s = ScoreVolume::new(dims, logits, Activation::Sigmoid).unwrap();
        let total = cai_focal_loss(&s, &labels, &sum_cfg).unwrap();
        let mean = cai_focal_loss(&s, &labels, &LossConfig::default()).unwrap();
        worst_std = worst_std
            .max((total - reference).abs())
            .max((mean - reference / n as f64).abs());
        ensure!(
            worst_std <= 1e-12,
            "seed {seed}: differs from standard focal loss by {worst_std:e}"
        );
    }
    Ok(format!(
        "hand values {lp:.7} / {ln:.7}; fd worst rel {worst:.1e} (<= 1e-4); ignore inert; standard focal diff {worst_std:.1e}"
    ))
}

fn fingerprint() -> Vec<Vec<u8>> {
    let p = SynthParams {
        seed: 42,
        image_height: 8,
        image_width: 22,
        channels: 16,
        depth_bins: DepthBinSpec {
            d_min: 1.0,
            d_step: 1.0,
            count: 60,
        },
        lidar_keep_fraction: 0.7,
        ..Default::default()
    };
    let mut out = Vec::new();
    let scene = synth_scene(&p).unwrap();
    out.push(scene_to_json(&scene).into_bytes());
    for m in scene.surface_depth.as_ref().unwrap() {
        out.push(encode_tensor(&m.to_tensor()));
    }
    for m in scene.instance_mask.as_ref().unwrap() {
        out.push(m.data.iter().flat_map(|v| v.to_le_bytes()).collect());
    }
    let feats = synth_features::<f32>(&p, &scene).unwrap();
    let soft = synth_features::<f64>(
        &SynthParams {
            depth_mode: DepthMode::GeometryAware,
            ..p.clone()
        },
        &scene,
    )
    .unwrap();
    for (i, d) in &feats {
        out.push(encode_tensor(i));
        out.push(encode_tensor(d));
        out.push(encode_tensor(&radial_bev(i, d).unwrap().0));
        out.push(encode_tensor(&radial_bev_oracle(i, d).unwrap().0));
        out.push(encode_tensor(&upsample_depth_scores_2x(d).unwrap()));
    }
    let scene32 = scene.cast::<f32>();
    let v = views(&feats, &scene32);
    let grid = BevGridSpec::centered(40.0f32, 64).unwrap();
    out.push(encode_tensor(
        &rc_pipeline(&v, &grid, 0.0, Fusion::Sum).unwrap().0,
    ));
    out.push(encode_tensor(
        &rc_pipeline(&v, &grid, 0.0, Fusion::Mean).unwrap().0,
    ));
    out.push(encode_tensor(
        &oracle_pipeline(&v, &grid, 0.0, Fusion::Sum).unwrap().0,
    ));
    out.push(encode_tensor(
        &voxel_sampling(&v, &grid, &[-0.5, 0.5, 1.5, 2.5]).unwrap().0,
    ));
    out.push(encode_tensor(&lss_pool(&v, &grid).unwrap().0));
    let all = LabelConfig {
        use_lidar: true,
        occlusion: true,
        mask: true,
        behind_surface: true,
    };
    for ci in 0..scene.cameras.len() {
        let labels = build_labels(&scene, ci, all).unwrap();
        let labels =
            attach_cai_weights(labels, &pseudo_point_grid(&scene.cameras[ci]), &scene.boxes)
                .unwrap();
        out.push(encode_labels(&labels));
        let logits =
            ScoreVolume::from_tensor(&soft[ci].1.cast::<f64>(), Activation::Sigmoid).unwrap();
        out.push(
            cai_focal_loss(&logits, &labels, &LossConfig::default())
                .unwrap()
                .to_le_bytes()
                .to_vec(),
        );
        out.push(encode_tensor(
            &cai_focal_grad(&logits, &labels, &LossConfig::default()).unwrap(),
        ));
        let one_hot = build_labels(
            &scene,
            ci,
            LabelConfig {
                use_lidar: true,
                ..Default::default()
            },
        )
        .unwrap();
        if let Ok(ce) = ce_depth_loss(
            &ScoreVolume::from_tensor(&soft[ci].1, Activation::Softmax).unwrap(),
            &one_hot,
        ) {
            out.push(ce.to_le_bytes().to_vec());
        }
    }
    out
}

fn determinism() -> Outcome {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(fingerprint)
    };
    let base = run(1);
    ensure!(base == run(1), "two single-thread runs differ");
    for t in [4, 8] {
        let other = run(t);
        ensure!(
            other.len() == base.len(),
            "{t} threads: stage count differs"
        );
        for (i, (a, b)) in base.iter().zip(&other).enumerate() {
            ensure!(a == b, "{t} threads: stage {i} differs");
        }
    }
    let bytes: usize = base.iter().map(|b| b.len()).sum();
    Ok(format!(
        "{} stage outputs ({bytes} bytes) bitwise identical across runs and 1/4/8 threads",
        base.len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1", "RC-Sampling correctness", rc_oracle_equivalence),
        ("2", "Memory claim", memory_ratio),
        ("3", "Latency claim (scaled)", latency_ratio),
        ("4", "Non-vacancy", non_vacancy),
        ("5", "In-Box label oracle", label_oracle),
        ("6", "Correction semantics", correction_semantics),
        ("7", "CAI weight properties", cai_properties),
        ("8", "Loss and gradient", loss_and_gradient),
        ("9", "Determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    println!();
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| x == id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] criterion {id:>2} {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] criterion {id:>2} {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    if filter.is_empty() || filter.iter().any(|x| x == "10") {
        println!("[N/A ] criterion 10 Detection accuracy: mAP/NDS/mATE need full-scale training on real driving data; out of scope, covered by criteria 1-9 instead");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
