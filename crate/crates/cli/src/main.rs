//! Command-line front end: weave map generation, dataset generation, training,
//! encoding, rendering, image comparison and material editing.
//!
//! Common options can come from a TOML config file (`--config`); explicit
//! flags override file values. The worker thread count is taken from the
//! `WOVEN_THREADS` environment variable when set.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use woven_core::dataset::{self, MaterialSpec};
use woven_core::nn::{self, EncoderConfig, NetworkWeights, TrainConfig, TrainMaterial};
use woven_core::oracle::Kernel;
use woven_core::pattern::{build_weave_matrix, MapParams, WeaveKind};
use woven_core::render::{
    error_map, image_mse, render, FloatImage, LatentCache, MaterialEdit, RenderMode, Scene,
};

#[derive(Parser)]
#[command(name = "woven", about = "Multi-scale woven fabric appearance toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize weave geometry maps and write them as a .wwgm blob.
    GenPattern(GenPatternArgs),
    /// Compute a material's ground-truth dataset.
    GenDataset(GenDatasetArgs),
    /// Train the network on one or more dataset files.
    Train(TrainArgs),
    /// Encode a material into its 64-float latent vector.
    Encode(EncodeArgs),
    /// Render a scene with the neural decoder or the Monte-Carlo oracle.
    Render(RenderArgs),
    /// Compare two float images: prints MSE, optionally writes a heat map.
    Compare(CompareArgs),
    /// Apply a material-edit file to a scene and re-render.
    Edit(EditArgs),
}

#[derive(Args)]
struct MaterialFlags {
    /// Weave pattern (plain, twill3, twill5, twill8, satin5, satin8, satin5x10).
    #[arg(long, default_value = "plain")]
    pattern: String,
    /// Twist angle in degrees (-30, 0 or 30).
    #[arg(long, default_value_t = 0.0)]
    twist: f64,
    /// Inclination angle in degrees (15..45).
    #[arg(long, default_value_t = 30.0)]
    incline: f64,
    /// Roughness (0.1..1).
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Height field scaling (0..2).
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Gap ratio of the yarn band.
    #[arg(long, default_value_t = 0.2)]
    gap: f64,
    /// Diffuse blend weight (run constant).
    #[arg(long, default_value_t = 0.5)]
    w: f64,
}

impl MaterialFlags {
    fn to_spec(&self) -> Result<MaterialSpec> {
        let spec = MaterialSpec {
            pattern: WeaveKind::parse(&self.pattern)?,
            twist_deg: self.twist,
            incline_deg: self.incline,
            alpha: self.alpha,
            beta: self.beta,
            gap: self.gap,
            w: self.w,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct GenPatternArgs {
    #[command(flatten)]
    material: MaterialFlags,
    /// Texels per repeat edge (rounded up to a repeat multiple).
    #[arg(long, default_value_t = 512)]
    resolution: u32,
    /// Output .wwgm path.
    #[arg(long)]
    out: PathBuf,
    /// Optional normal-map PNG for inspection.
    #[arg(long)]
    png: Option<PathBuf>,
}

#[derive(Args)]
struct GenDatasetArgs {
    #[command(flatten)]
    material: MaterialFlags,
    /// Optional TOML config supplying defaults for the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Query budget per material.
    #[arg(long)]
    count: Option<usize>,
    /// Fraction of the budget drawn as randomized augmentation queries.
    #[arg(long)]
    augment: Option<f64>,
    /// Ground-truth samples per query.
    #[arg(long)]
    samples: Option<u32>,
    /// Footprint kernel: box or gaussian.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Map resolution target.
    #[arg(long)]
    resolution: Option<u32>,
    /// Output .wwds path.
    #[arg(long)]
    out: PathBuf,
    /// Draw the material from the sampling tables instead of the flags.
    #[arg(long, default_value_t = false)]
    random_material: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset files (.wwds), one per material.
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output weight file.
    #[arg(long)]
    out: PathBuf,
    /// Metrics CSV path (defaults next to the weights).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Per-epoch checkpoint directory.
    #[arg(long)]
    checkpoints: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    material: MaterialFlags,
    /// Trained weight file.
    #[arg(long)]
    weights: PathBuf,
    /// Output path for the latent (64 little-endian f32 values).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Scene TOML file.
    #[arg(long)]
    scene: PathBuf,
    /// neural or reference.
    #[arg(long, default_value = "neural")]
    mode: String,
    /// Samples per pixel in reference mode.
    #[arg(long, default_value_t = 256)]
    spp: u32,
    /// Trained weight file (required for neural mode).
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output stem: writes <out>.pfm and <out>.png.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    /// Optional error heat-map PNG.
    #[arg(long)]
    heatmap: Option<PathBuf>,
}

#[derive(Args)]
struct EditArgs {
    #[arg(long)]
    scene: PathBuf,
    /// TOML file of material edits.
    #[arg(long)]
    changes: PathBuf,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value = "neural")]
    mode: String,
    #[arg(long, default_value_t = 256)]
    spp: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Optional config-file values for dataset generation and training.
#[derive(Deserialize, Default)]
struct FileConfig {
    #[serde(default)]
    count: Option<usize>,
    #[serde(default)]
    augment: Option<f64>,
    #[serde(default)]
    samples: Option<u32>,
    #[serde(default)]
    kernel: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    resolution: Option<u32>,
    #[serde(default)]
    epochs: Option<usize>,
    #[serde(default)]
    batch: Option<usize>,
    #[serde(default)]
    lr: Option<f64>,
    #[serde(default)]
    weight_decay: Option<f64>,
}

fn load_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            Ok(toml::from_str(&text)?)
        }
    }
}

fn parse_kernel(name: &str) -> Result<Kernel> {
    match name {
        "box" => Ok(Kernel::Box),
        "gaussian" => Ok(Kernel::Gaussian),
        other => bail!("unknown kernel '{other}' (expected box or gaussian)"),
    }
}

fn init_threads() {
    if let Ok(v) = std::env::var("WOVEN_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn load_trained_weights(path: &Path) -> Result<NetworkWeights> {
    let mut net = NetworkWeights::init(0, EncoderConfig::default());
    nn::load_weights(&mut net, path)
        .with_context(|| format!("loading weights {}", path.display()))?;
    Ok(net)
}

fn main() -> Result<()> {
    init_threads();
    let cli = Cli::parse();
    match cli.command {
        Command::GenPattern(a) => gen_pattern(a),
        Command::GenDataset(a) => gen_dataset(a),
        Command::Train(a) => train_cmd(a),
        Command::Encode(a) => encode_cmd(a),
        Command::Render(a) => render_cmd(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Edit(a) => edit_cmd(a),
    }
}

fn gen_pattern(a: GenPatternArgs) -> Result<()> {
    let spec = a.material.to_spec()?;
    let weave = build_weave_matrix(spec.pattern)?;
    let maps = woven_core::pattern::synthesize_geometry_maps(
        &weave,
        &MapParams {
            twist_deg: spec.twist_deg,
            incline_deg: spec.incline_deg,
            gap: spec.gap,
            beta: spec.beta,
            resolution: spec.pattern.default_resolution(a.resolution),
        },
    )?;
    maps.save(&a.out)?;
    println!(
        "wrote {} ({} x {} texels, pattern {})",
        a.out.display(),
        maps.resolution,
        maps.resolution,
        spec.pattern.name()
    );
    if let Some(png) = a.png {
        maps.export_normal_png(&png)?;
        println!("wrote {}", png.display());
    }
    Ok(())
}

fn gen_dataset(a: GenDatasetArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let spec = if a.random_material {
        dataset::sample_material_seeded(seed, a.material.w)
    } else {
        a.material.to_spec()?
    };
    let count = a.count.or(cfg.count).unwrap_or(50_000);
    let augment = a.augment.or(cfg.augment).unwrap_or(0.2);
    let samples = a.samples.or(cfg.samples).unwrap_or(dataset::DEFAULT_GT_SAMPLES);
    let kernel = parse_kernel(&a.kernel.or(cfg.kernel).unwrap_or_else(|| "box".into()))?;
    let resolution = a.resolution.or(cfg.resolution).unwrap_or(512);

    println!(
        "material: {} twist {} incline {:.1} alpha {:.3} beta {:.3}",
        spec.pattern.name(),
        spec.twist_deg,
        spec.incline_deg,
        spec.alpha,
        spec.beta
    );
    let header = dataset::generate_dataset_file(
        &a.out,
        &spec,
        count,
        augment,
        kernel,
        samples,
        seed,
        resolution,
        4096,
        |done, total| {
            println!("chunk {done}/{total}");
        },
    )?;
    println!(
        "wrote {} ({} records, {} samples/query)",
        a.out.display(),
        header.record_count,
        header.gt_samples
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg_file = load_config(&a.config)?;
    let mut materials = Vec::new();
    let mut headers = Vec::new();
    for path in &a.data {
        let (header, records) = dataset::read_dataset(path)
            .with_context(|| format!("reading dataset {}", path.display()))?;
        println!(
            "loaded {}: {} records, pattern {}",
            path.display(),
            records.len(),
            header.material.pattern.name()
        );
        let maps = header.material.build_maps(header.resolution)?;
        headers.push(header.clone());
        materials.push(TrainMaterial::new(header, &maps, records, nn::ENCODER_INPUT_RES)?);
    }
    dataset::check_merge_compatible(&headers)?;

    let train_cfg = TrainConfig {
        epochs: a.epochs.or(cfg_file.epochs).unwrap_or(10),
        batch_size: a.batch.or(cfg_file.batch).unwrap_or(512),
        lr: a.lr.or(cfg_file.lr).unwrap_or(5e-2),
        weight_decay: a.weight_decay.or(cfg_file.weight_decay).unwrap_or(1e-5),
        seed: a.seed.or(cfg_file.seed).unwrap_or(0),
        metrics_path: Some(a.log.unwrap_or_else(|| a.out.with_extension("metrics.csv"))),
        checkpoint_dir: a.checkpoints,
        ..TrainConfig::default()
    };
    let mut net = NetworkWeights::init(train_cfg.seed, EncoderConfig::default());
    let report = nn::train(&mut net, &materials, &train_cfg)?;
    nn::save_weights(&net, &a.out)?;
    println!(
        "trained {} iterations; first-window loss {:.6}, final epoch loss {:.6}",
        report.iterations, report.first_window_mean_loss, report.final_epoch_mean_loss
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn encode_cmd(a: EncodeArgs) -> Result<()> {
    let spec = a.material.to_spec()?;
    let net = load_trained_weights(&a.weights)?;
    let maps = spec.build_maps(512)?;
    let z = nn::encode(&net, &maps, spec.alpha, spec.beta)?;
    let mut bytes = Vec::with_capacity(z.len() * 4);
    for v in &z {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::write(&a.out, bytes)?;
    println!("wrote {} ({} floats)", a.out.display(), z.len());
    Ok(())
}

fn parse_mode(mode: &str, spp: u32) -> Result<RenderMode> {
    match mode {
        "neural" => Ok(RenderMode::Neural),
        "reference" => Ok(RenderMode::Reference { spp }),
        other => bail!("unknown mode '{other}' (expected neural or reference)"),
    }
}

fn write_outputs(img: &FloatImage, stem: &Path) -> Result<()> {
    let pfm = stem.with_extension("pfm");
    let png = stem.with_extension("png");
    img.save_pfm(&pfm)?;
    img.save_png(&png)?;
    println!("wrote {} and {}", pfm.display(), png.display());
    Ok(())
}

fn render_cmd(a: RenderArgs) -> Result<()> {
    let scene = Scene::load(&a.scene)?;
    let mode = parse_mode(&a.mode, a.spp)?;
    let net = match (&mode, &a.weights) {
        (RenderMode::Neural, Some(p)) => Some(load_trained_weights(p)?),
        (RenderMode::Neural, None) => bail!("neural mode needs --weights"),
        _ => None,
    };
    let cache = LatentCache::build(&scene, net.as_ref())?;
    let (img, stats) = render(&scene, &cache, net.as_ref(), mode, a.seed)?;
    if stats.fallback_footprints > 0 {
        eprintln!(
            "note: {} footprints used the distance heuristic",
            stats.fallback_footprints
        );
    }
    write_outputs(&img, &a.out)
}

fn compare_cmd(a: CompareArgs) -> Result<()> {
    let ia = FloatImage::load_pfm(&a.a)?;
    let ib = FloatImage::load_pfm(&a.b)?;
    let mse = image_mse(&ia, &ib)?;
    println!("mse {mse:.8e}");
    if let Some(path) = a.heatmap {
        error_map(&ia, &ib)?.save_png(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Material edits as TOML: `[[edits]]` entries with a material id and any of
/// the editable fields.
#[derive(Deserialize)]
struct EditFile {
    edits: Vec<EditEntry>,
}

#[derive(Deserialize)]
struct EditEntry {
    material: String,
    #[serde(default)]
    pattern: Option<String>,
    #[serde(default)]
    twist_deg: Option<f64>,
    #[serde(default)]
    incline_deg: Option<f64>,
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default)]
    beta: Option<f64>,
    #[serde(default)]
    kd_warp: Option<[f64; 3]>,
    #[serde(default)]
    kd_weft: Option<[f64; 3]>,
    #[serde(default)]
    ks_warp: Option<[f64; 3]>,
    #[serde(default)]
    ks_weft: Option<[f64; 3]>,
}

fn edit_cmd(a: EditArgs) -> Result<()> {
    let mut scene = Scene::load(&a.scene)?;
    let mode = parse_mode(&a.mode, a.spp)?;
    let net = match (&mode, &a.weights) {
        (RenderMode::Neural, Some(p)) => Some(load_trained_weights(p)?),
        (RenderMode::Neural, None) => bail!("neural mode needs --weights"),
        _ => None,
    };
    let text = std::fs::read_to_string(&a.changes)?;
    let file: EditFile = toml::from_str(&text)?;
    let mut cache = LatentCache::build(&scene, net.as_ref())?;
    cache.reset_encode_count();
    for e in &file.edits {
        let rgb = |a: [f64; 3]| woven_core::math::Rgb::new(a[0], a[1], a[2]);
        let edit = MaterialEdit {
            pattern: e.pattern.as_deref().map(WeaveKind::parse).transpose()?,
            twist_deg: e.twist_deg,
            incline_deg: e.incline_deg,
            alpha: e.alpha,
            beta: e.beta,
            kd_warp: e.kd_warp.map(rgb),
            kd_weft: e.kd_weft.map(rgb),
            ks_warp: e.ks_warp.map(rgb),
            ks_weft: e.ks_weft.map(rgb),
        };
        let path = cache.edit_material(&mut scene, net.as_ref(), &e.material, &edit)?;
        println!("edit {}: {:?}", e.material, path);
    }
    println!("encoder executions: {}", cache.encode_count());
    let (img, _) = render(&scene, &cache, net.as_ref(), mode, a.seed)?;
    write_outputs(&img, &a.out)
}
