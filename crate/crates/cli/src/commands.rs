use std::path::{Path, PathBuf};

use bevgeom::bench::Method;
use bevgeom::bench::{run_bench, BenchConfig};
use bevgeom::io::{read_labels, read_tensor, write_bytes, write_labels, write_tensor, RawTensor};
use bevgeom::labels::{build_labels, pseudo_point_grid, LabelConfig};
use bevgeom::loss::{
    attach_cai_weights, cai_focal_grad, cai_focal_loss, ce_depth_loss, Activation, LossConfig,
    Reduction, ScoreVolume,
};
use bevgeom::render::render_bev;
use bevgeom::scene::{load_scene, save_scene};
use bevgeom::synth::{synth_features, synth_scene, Precision, SynthParams};
use bevgeom::transform::{
    lss_pool, oracle_pipeline, radial_bev, radial_bev_oracle, rc_pipeline, vacancy_ratio,
    voxel_sampling, CameraView, Fusion,
};
use bevgeom::{AllocationReport, BevGridSpec, Dim, Error, FeatureTensor, Real, Result, Scene};
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{
    BenchArgs, DtypeArg, LabelArgs, LossArgs, LossKind, RenderArgs, SynthArgs, TransformArgs,
};

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn image_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("cam{k}_image.bevt"))
}

pub fn depth_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("cam{k}_depth.bevt"))
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut params: SynthParams = match &a.params {
        Some(p) => read_json(p)?,
        None => SynthParams::default(),
    };
    if let Some(seed) = a.seed {
        params.seed = seed;
    }
    if let Some(mode) = &a.depth_mode {
        params.depth_mode = super::parse_depth_mode(mode)?;
    }
    if let Some(d) = a.dtype {
        params.dtype = d.into();
    }
    let scene = synth_scene(&params)?;
    let mut written = save_scene(&scene, &a.out, "scene")?;
    match params.dtype {
        Precision::F32 => written.extend(write_features::<f32>(&params, &scene, &a.out)?),
        Precision::F64 => written.extend(write_features::<f64>(&params, &scene, &a.out)?),
    }
    let params_path = a.out.join("params.json");
    write_json(&params_path, &params)?;
    written.push(params_path);

    let mut entries = Vec::with_capacity(written.len());
    for p in &written {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        entries.push(ManifestEntry {
            path: p.strip_prefix(&a.out).unwrap_or(p).display().to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    write_json(&a.out.join("manifest.json"), &entries)?;
    for e in &entries {
        println!("{}  {:>10}  {}", e.sha256, e.bytes, e.path);
    }
    Ok(())
}

fn write_features<T: Real>(
    params: &SynthParams,
    scene: &Scene<f64>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for (k, (img, depth)) in synth_features::<T>(params, scene)?.iter().enumerate() {
        let (pi, pd) = (image_path(dir, k), depth_path(dir, k));
        write_tensor(&pi, img)?;
        write_tensor(&pd, depth)?;
        out.push(pi);
        out.push(pd);
    }
    Ok(out)
}

#[derive(Serialize)]
struct TransformReport {
    method: &'static str,
    output: String,
    shape: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vacancy_ratio: Option<f64>,
    allocation: AllocationReport,
}

pub fn transform(a: TransformArgs) -> Result<()> {
    match a.dtype {
        DtypeArg::F32 => transform_typed::<f32>(&a),
        DtypeArg::F64 => transform_typed::<f64>(&a),
    }
}

fn as_validation(context: String) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Contract(m) | Error::Validation(m) => Error::Validation(format!("{context}: {m}")),
        Error::Format { kind, reason } => Error::Format {
            kind,
            reason: format!("{reason} ({context})"),
        },
        other => other,
    }
}

fn transform_typed<T: Real>(a: &TransformArgs) -> Result<()> {
    let scene: Scene<T> = load_scene(&a.scene)?;
    if scene.cameras.is_empty() {
        return Err(Error::Validation("scene has no cameras".into()));
    }
    let mut tensors = Vec::with_capacity(scene.cameras.len());
    for k in 0..scene.cameras.len() {
        let img = read_tensor(&image_path(&a.features, k))
            .and_then(|t| t.into_tensor::<T>(&[Dim::C, Dim::H, Dim::W]))
            .map_err(as_validation(format!("camera {k} image")))?;
        let depth = read_tensor(&depth_path(&a.features, k))
            .and_then(|t| t.into_tensor::<T>(&[Dim::D, Dim::H, Dim::W]))
            .map_err(as_validation(format!("camera {k} depth scores")))?;
        tensors.push((img, depth));
    }
    let views: Vec<CameraView<'_, T>> = tensors
        .iter()
        .zip(&scene.cameras)
        .map(|((image, depth), camera)| CameraView {
            image,
            depth,
            camera,
        })
        .collect();
    let mut channels = None;
    for (k, v) in views.iter().enumerate() {
        let (c, ..) = v.validate().map_err(as_validation(format!("camera {k}")))?;
        if *channels.get_or_insert(c) != c {
            return Err(Error::Validation(format!(
                "camera {k} has {c} channels, camera 0 has {}",
                channels.unwrap()
            )));
        }
    }
    let grid = BevGridSpec::centered(T::lit(a.half_extent), a.size)?;
    let z_ref = T::lit(a.z_ref);
    let fusion = if a.mean { Fusion::Mean } else { Fusion::Sum };
    let heights: Option<Vec<T>> = a.heights.map(|n| {
        let (lo, hi) = (a.z_range[0], a.z_range[1]);
        let step = (hi - lo) / n as f64;
        (0..n)
            .map(|k| T::lit(lo + (k as f64 + 0.5) * step))
            .collect()
    });
    if a.method == Method::Voxel && heights.as_ref().is_none_or(|h| h.is_empty()) {
        return Err(Error::Config(
            "method voxel needs --heights with at least one height".into(),
        ));
    }
    if a.radial && a.cam >= views.len() {
        return Err(Error::Validation(format!(
            "camera {} out of range ({} cameras)",
            a.cam,
            views.len()
        )));
    }

    let (out, report): (FeatureTensor<T>, AllocationReport) = match (a.method, a.radial) {
        (Method::Rc, true) => radial_bev(views[a.cam].image, views[a.cam].depth)?,
        (Method::Oracle, true) => radial_bev_oracle(views[a.cam].image, views[a.cam].depth)?,
        (_, true) => {
            return Err(Error::Config(
                "--radial applies to rc and oracle only".into(),
            ))
        }
        (Method::Rc, false) => rc_pipeline(&views, &grid, z_ref, fusion)?,
        (Method::Oracle, false) => oracle_pipeline(&views, &grid, z_ref, fusion)?,
        (Method::Voxel, false) => {
            voxel_sampling(&views, &grid, heights.as_deref().unwrap_or_default())?
        }
        (Method::Lss, false) => lss_pool(&views, &grid)?,
    };
    write_tensor(&a.out, &out)?;
    let vacancy = if a.radial {
        None
    } else {
        Some(vacancy_ratio(&out)?)
    };
    let rep = TransformReport {
        method: a.method.name(),
        output: a.out.display().to_string(),
        shape: out.shape(),
        vacancy_ratio: vacancy,
        allocation: report,
    };
    let report_path = a.report.clone().unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".report.json");
        PathBuf::from(s)
    });
    write_json(&report_path, &rep)?;
    println!("method: {}", rep.method);
    println!("shape: {:?}", rep.shape);
    if let Some(v) = vacancy {
        println!("vacancy_ratio: {v:.6}");
    }
    println!(
        "intermediate_floats: {}",
        rep.allocation.intermediate_floats
    );
    println!("output_floats: {}", rep.allocation.output_floats);
    println!("wall_time_s: {:.6}", rep.allocation.wall_time);
    Ok(())
}

pub fn label(a: LabelArgs) -> Result<()> {
    let scene: Scene<f64> = load_scene(&a.scene)?;
    let config = LabelConfig {
        use_lidar: a.use_lidar,
        occlusion: a.oa,
        mask: a.ob,
        behind_surface: a.oc,
    };
    let labels = build_labels(&scene, a.cam, config)?;
    let points = pseudo_point_grid(scene.camera(a.cam)?);
    let labels = attach_cai_weights(labels, &points, &scene.boxes)?;
    write_labels(&a.out, &labels)?;
    let c = labels.counts();
    println!("positive: {}", c.positive);
    println!("negative: {}", c.negative);
    println!("ignore: {}", c.ignore);
    println!("positive_fraction: {:.6}", c.positive_fraction());
    Ok(())
}

pub fn loss(a: LossArgs) -> Result<()> {
    let labels = read_labels(&a.labels)?;
    let logits = read_tensor(&a.scores)?
        .into_tensor::<f64>(&[Dim::D, Dim::H, Dim::W])
        .map_err(as_validation("scores".into()))?;
    match a.kind {
        LossKind::Cai => {
            let cfg = LossConfig {
                alpha: a.alpha,
                gamma: a.gamma,
                activation: Activation::Sigmoid,
                reduction: if a.sum {
                    Reduction::Sum
                } else {
                    Reduction::MeanOverSupervised
                },
            };
            let scores = ScoreVolume::from_tensor(&logits, Activation::Sigmoid)?;
            let value =
                cai_focal_loss(&scores, &labels, &cfg).map_err(as_validation("labels".into()))?;
            println!("cai_focal_loss: {value:.9}");
            if let Some(p) = &a.grad_out {
                write_tensor(p, &cai_focal_grad(&scores, &labels, &cfg)?)?;
            }
        }
        LossKind::Ce => {
            if a.grad_out.is_some() {
                return Err(Error::Config(
                    "--grad-out is available for the cai loss only".into(),
                ));
            }
            let scores = ScoreVolume::from_tensor(&logits, Activation::Softmax)?;
            let value = ce_depth_loss(&scores, &labels).map_err(as_validation("labels".into()))?;
            println!("ce_depth_loss: {value:.9}");
        }
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let mut cfg: BenchConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => BenchConfig::default(),
    };
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    if let Some(s) = a.sizes {
        cfg.sizes = s;
    }
    if let Some(m) = a.methods {
        cfg.methods = m;
    }
    if let Some(h) = a.voxel_heights {
        cfg.voxel_heights = h;
    }
    if let Some(d) = a.dtype {
        cfg.scene.dtype = d.into();
    }
    let report = run_bench(&cfg)?;
    print!("{}", report.to_table());
    match &a.json {
        Some(p) => write_json(p, &report)?,
        None => println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        ),
    }
    Ok(())
}

pub fn render(a: RenderArgs) -> Result<()> {
    let bev = read_tensor(&a.bev)?
        .into_tensor::<f64>(&[Dim::C, Dim::X, Dim::Y])
        .map_err(as_validation("BEV tensor".into()))?;
    let mask = match &a.mask {
        None => None,
        Some(p) => {
            let raw = read_tensor(p)?;
            let (shape, keep): (Vec<usize>, Vec<bool>) = match raw {
                RawTensor::I32(s, d) => (s, d.into_iter().map(|v| v != 0).collect()),
                RawTensor::F32(s, d) => (s, d.into_iter().map(|v| v != 0.0).collect()),
                RawTensor::F64(s, d) => (s, d.into_iter().map(|v| v != 0.0).collect()),
            };
            let want = [
                bev.extent(Dim::X).unwrap_or(0),
                bev.extent(Dim::Y).unwrap_or(0),
            ];
            if shape != want {
                return Err(Error::Validation(format!(
                    "mask is {shape:?} but the BEV grid is {want:?}"
                )));
            }
            Some(keep)
        }
    };
    let img = render_bev(&bev, mask.as_deref())?;
    img.write_pgm(&a.out)?;
    println!(
        "{}x{} image written to {}",
        img.width,
        img.height,
        a.out.display()
    );
    Ok(())
}
