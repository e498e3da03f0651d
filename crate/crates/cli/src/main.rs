//! Command-line pipeline for semantic scene reconstruction. Stages talk to
//! each other only through files (datasets, VXG1 volumes, NET1 checkpoints,
//! images, meshes), so each stage can be run, inspected, and reproduced on
//! its own. Exit codes: 0 success, 2 usage, 3 I/O error, 4 domain error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semvox::eval::{eval_sg, eval_ssc, EvalReport, Protocol};
use semvox::fusion::{cube_mask, fuse, subset_view_indices, MaskSchedule};
use semvox::grid::marching_cubes;
use semvox::io;
use semvox::render::RenderConfig;
use semvox::synth;
use semvox::train::{self, Corruption, FileBackedPredictor, MockPredictor, Predictor, TrainConfig, TrainMode};
use semvox::SemvoxError;

#[derive(Parser)]
#[command(
    name = "semvox",
    version,
    about = "Semantic scene reconstruction from posed RGB-D scans",
    max_term_width = 100
)]
struct Cli {
    /// Seed for all randomness in the invoked stage.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for rendering (1 = fully sequential reference mode).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Force sequential reductions regardless of --threads.
    #[arg(long, global = true, default_value_t = false)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or load a synthetic scene and write its RGB-D dataset.
    Synth(SynthArgs),
    /// Fuse a dataset directory into a TSDF volume.
    Fuse(FuseArgs),
    /// Corrupt a volume (cube masking) or refuse from a view subset.
    Corrupt(CorruptArgs),
    /// Render depth/color/label images from a volume.
    Render(RenderArgs),
    /// Run a training loop described by a key=value config file.
    Train(TrainArgs),
    /// Complete a corrupted volume with a trained network checkpoint.
    Infer(InferArgs),
    /// Evaluate a predicted volume against ground truth.
    Eval(EvalArgs),
    /// Export the zero isosurface as a colored, labeled PLY mesh.
    ExportMesh(ExportMeshArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scene manifest to load (mutually exclusive with --generate).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Generate a seeded bench room instead of loading a manifest.
    #[arg(long)]
    generate: Option<u64>,
    /// Write the (loaded or generated) scene manifest here.
    #[arg(long)]
    scene_out: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also bake the exact ground-truth volume to this path.
    #[arg(long)]
    gt_out: Option<PathBuf>,
    /// Voxel size for the dataset grid spec and baked volume (meters).
    #[arg(long, default_value_t = 0.02)]
    voxel_size: f64,
}

#[derive(Args)]
struct FuseArgs {
    /// Dataset directory (scene.json + cam/ + depth/ + color/ [+ label/]).
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Fuse only a random fraction of the views.
    #[arg(long)]
    subset: Option<f64>,
}

#[derive(Args)]
struct CorruptArgs {
    /// Input volume (cubes mode).
    input: Option<PathBuf>,
    /// cubes | views
    #[arg(long, default_value = "cubes")]
    mode: String,
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory (views mode).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// View fraction to keep (views mode).
    #[arg(long, default_value_t = 0.4)]
    fraction: f64,
    /// Cube edge lengths in voxels (cubes mode).
    #[arg(long, value_delimiter = ',', default_values_t = [50usize, 25, 10])]
    cube_sizes: Vec<usize>,
    /// Per-scale mask probabilities (cubes mode).
    #[arg(long, value_delimiter = ',', default_values_t = [0.2f64, 0.2, 0.2])]
    probs: Vec<f64>,
    /// Write the removed-voxel mask as a 1-channel volume.
    #[arg(long)]
    mask_out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    grid: PathBuf,
    /// Trajectory file; the camera with --cam-index is used.
    #[arg(long)]
    cam: PathBuf,
    #[arg(long, default_value_t = 0)]
    cam_index: usize,
    /// Output prefix; writes <prefix>_depth.pfm, _color.ppm, _label.pgm.
    #[arg(long)]
    out_prefix: PathBuf,
    #[arg(long, default_value_t = 320)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 6.0)]
    max_depth: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// key=value run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for loss.csv and checkpoints.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Chunk stride; defaults to the checkpoint's chunk dims.
    #[arg(long, value_delimiter = ',')]
    stride: Option<Vec<usize>>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth volume (ssc protocol).
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Input volume whose surface voxels are evaluated (sg protocols).
    #[arg(long)]
    input: Option<PathBuf>,
    /// ssc | sg_raw | sg_comp
    #[arg(long, default_value = "ssc")]
    protocol: String,
    /// Write the report as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Class names for the table (comma separated).
    #[arg(long, value_delimiter = ',')]
    class_names: Option<Vec<String>>,
}

#[derive(Args)]
struct ExportMeshArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = if cli.deterministic { 1 } else { cli.threads.max(1) };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: failed to build thread pool: {e}");
        return ExitCode::from(4);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> semvox::Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a, cli.seed),
        Command::Fuse(a) => cmd_fuse(a, cli.seed),
        Command::Corrupt(a) => cmd_corrupt(a, cli.seed),
        Command::Render(a) => cmd_render(a),
        Command::Train(a) => cmd_train(a, cli.seed),
        Command::Infer(a) => cmd_infer(a),
        Command::Eval(a) => cmd_eval(a),
        Command::ExportMesh(a) => cmd_export_mesh(a),
    }
}

fn cmd_synth(a: SynthArgs, seed: u64) -> semvox::Result<()> {
    let scene = match (&a.spec, a.generate) {
        (Some(path), None) => io::read_scene_text(&std::fs::read_to_string(path)?)?,
        (None, Some(s)) => synth::generate_scene(s, &format!("room{s}")),
        (None, None) => synth::generate_scene(seed, &format!("room{seed}")),
        (Some(_), Some(_)) => {
            return Err(SemvoxError::InvalidConfig("--spec and --generate are mutually exclusive".into()))
        }
    };
    scene.validate()?;
    if let Some(path) = &a.scene_out {
        std::fs::write(path, io::scene_to_text(&scene))?;
        println!("wrote scene manifest {}", path.display());
    }
    if let Some(dir) = &a.out {
        let cams = scene.cameras()?;
        let frames = synth::render_oracle_frames(&scene, &cams);
        let manifest = io::SceneManifest {
            grid: scene.grid_spec(a.voxel_size)?,
            n_sem: scene.n_sem,
            class_names: synth::BENCH_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        };
        io::write_dataset(dir, &manifest, &frames)?;
        std::fs::write(dir.join("scene.txt"), io::scene_to_text(&scene))?;
        println!("wrote {} frames to {}", frames.len(), dir.display());
    }
    if let Some(path) = &a.gt_out {
        let spec = scene.grid_spec(a.voxel_size)?;
        let gt = synth::bake_gt_grid(&scene, &spec);
        io::write_vxg(path, &gt)?;
        println!("baked ground-truth volume {}", path.display());
    }
    Ok(())
}

fn cmd_fuse(a: FuseArgs, seed: u64) -> semvox::Result<()> {
    let ds = io::read_dataset(&a.dataset)?;
    let frames = match a.subset {
        None => ds.frames,
        Some(fraction) => {
            let idx = subset_view_indices(ds.frames.len(), fraction, seed)?;
            idx.into_iter().map(|i| ds.frames[i].clone()).collect()
        }
    };
    let grid = fuse(&frames, &ds.manifest.grid, ds.manifest.n_sem)?;
    io::write_vxg(&a.out, &grid)?;
    println!(
        "fused {} frames: {} of {} voxels known",
        frames.len(),
        grid.known_count(),
        grid.spec.num_voxels()
    );
    Ok(())
}

fn cmd_corrupt(a: CorruptArgs, seed: u64) -> semvox::Result<()> {
    match a.mode.as_str() {
        "cubes" => {
            let input = a.input.as_ref().ok_or_else(|| {
                SemvoxError::InvalidConfig("cubes mode needs an input volume".into())
            })?;
            let grid = io::read_vxg(input)?;
            let keep = 1.0 - a.probs.iter().sum::<f64>();
            let schedule = MaskSchedule {
                cube_sizes: a.cube_sizes.clone(),
                probs: a.probs.clone(),
                keep_prob: keep,
                rng_seed: seed,
            };
            let (masked, removed) = cube_mask(&grid, &schedule)?;
            io::write_vxg(&a.out, &masked)?;
            if let Some(mask_path) = &a.mask_out {
                // Store the removed mask as a weight-only volume.
                let mut m = semvox::grid::VoxelGrid::new(grid.spec.clone(), 0);
                for (i, &r) in removed.iter().enumerate() {
                    if r {
                        m.tsdf_raw_mut()[i] = 1.0;
                        m.weight_raw_mut()[i] = 1.0;
                    }
                }
                io::write_vxg(mask_path, &m)?;
            }
            let frac = removed.iter().filter(|&&r| r).count() as f64
                / grid.known_count().max(1) as f64;
            println!("masked {:.1}% of known voxels", 100.0 * frac);
        }
        "views" => {
            let dir = a.dataset.as_ref().ok_or_else(|| {
                SemvoxError::InvalidConfig("views mode needs --dataset".into())
            })?;
            let ds = io::read_dataset(dir)?;
            let idx = subset_view_indices(ds.frames.len(), a.fraction, seed)?;
            let subset: Vec<_> = idx.iter().map(|&i| ds.frames[i].clone()).collect();
            let grid = fuse(&subset, &ds.manifest.grid, ds.manifest.n_sem)?;
            io::write_vxg(&a.out, &grid)?;
            println!("kept {} of {} views", subset.len(), ds.frames.len());
        }
        other => {
            return Err(SemvoxError::InvalidConfig(format!("unknown corrupt mode {other}")));
        }
    }
    Ok(())
}

fn cmd_render(a: RenderArgs) -> semvox::Result<()> {
    let grid = io::read_vxg(&a.grid)?;
    let cams = io::cameras_from_text(&std::fs::read_to_string(&a.cam)?)?;
    let cam = cams
        .iter()
        .find(|(id, _)| *id == a.cam_index)
        .map(|(_, c)| c.clone())
        .ok_or_else(|| SemvoxError::InvalidConfig(format!("no camera {} in file", a.cam_index)))?;
    let cfg = RenderConfig {
        image_size: (a.width, a.height),
        max_depth: a.max_depth,
        ..RenderConfig::default()
    };
    let views = semvox::render::render(&grid, &cam, &cfg)?;
    let prefix = a.out_prefix.as_os_str().to_string_lossy().to_string();
    if let Some(parent) = a.out_prefix.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    io::write_pfm(&PathBuf::from(format!("{prefix}_depth.pfm")), &views.depth)?;
    io::write_ppm(&PathBuf::from(format!("{prefix}_color.ppm")), &views.color)?;
    let one_hot = semvox::render::semantic_one_hot(&views);
    let mut labels = semvox::image::LabelImage::ignored(views.width(), views.height());
    for j in 0..views.height() {
        for i in 0..views.width() {
            if views.hits[j * views.width() + i].is_some() {
                labels.set(i, j, one_hot.argmax(i, j) as u16);
            }
        }
    }
    io::write_pgm16(&PathBuf::from(format!("{prefix}_label.pgm")), &labels)?;
    println!("rendered {} valid of {} pixels", views.valid_count(), a.width * a.height);
    Ok(())
}

fn parse_dims(s: &str) -> semvox::Result<[usize; 3]> {
    let parts: Vec<usize> = s
        .split(['x', ','])
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| SemvoxError::InvalidConfig(format!("bad dims {s}")))?;
    if parts.len() != 3 {
        return Err(SemvoxError::InvalidConfig(format!("dims need 3 components: {s}")));
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn cmd_train(a: TrainArgs, cli_seed: u64) -> semvox::Result<()> {
    let kv = io::KeyValues::load(&a.config)?;
    let ds = io::read_dataset(&PathBuf::from(kv.require("dataset")?))?;
    let mode: TrainMode = kv.require("mode")?.parse()?;
    let chunk_dims = parse_dims(kv.get("chunk_dims").unwrap_or("64x32x32"))?;
    let mut cfg = TrainConfig::new(mode, chunk_dims);
    if let Some(s) = kv.get("chunk_stride") {
        cfg.chunk_stride = parse_dims(s)?;
    }
    cfg.steps = kv.get_or("steps", 100usize)?;
    cfg.lr0 = kv.get_or("lr0", 0.01f64)?;
    cfg.decay_rate = kv.get_or("decay_rate", 1.0f64)?;
    cfg.decay_steps = kv.get_or("decay_steps", 1000usize)?;
    cfg.rng_seed = kv.get_or("seed", cli_seed)?;
    cfg.depth_only = kv.get_or("depth_only", 0u8)? != 0;
    cfg.k_views = kv.get_or("k_views", 5usize)?;
    cfg.n_virtual_views = kv.get_or("n_virtual_views", 5usize)?;
    cfg.render_size = (
        kv.get_or("render_width", 80usize)?,
        kv.get_or("render_height", 64usize)?,
    );
    cfg.base_channels = kv.get_or("base_channels", 8usize)?;
    cfg.levels = kv.get_or("levels", 3usize)?;
    cfg.code_channels = kv.get_or("code_channels", 32usize)?;
    cfg.geo3d = kv.get_or("geo3d", 1u8)? != 0;
    cfg.corruption = match kv.get("corruption").unwrap_or("none") {
        "none" => Corruption::None,
        "views" => Corruption::SubsetViews { fraction: kv.get_or("view_fraction", 0.4f64)? },
        "cubes" => Corruption::Cubes(MaskSchedule {
            rng_seed: kv.get_or("cube_seed", cfg.rng_seed)?,
            ..MaskSchedule::default()
        }),
        other => return Err(SemvoxError::InvalidConfig(format!("unknown corruption {other}"))),
    };

    let predictor: Option<Box<dyn Predictor>> = match kv.get("predictor") {
        None => None,
        Some(spec) => match spec.split_once(':') {
            Some(("mock", rate)) => {
                let scene = ds.scene.clone().ok_or_else(|| {
                    SemvoxError::InvalidConfig("mock predictor needs a dataset with scene.txt".into())
                })?;
                Some(Box::new(MockPredictor {
                    scene,
                    corruption: rate.parse().map_err(|_| {
                        SemvoxError::InvalidConfig(format!("bad mock corruption {rate}"))
                    })?,
                    seed: cfg.rng_seed,
                }))
            }
            Some(("files", dir)) => Some(Box::new(FileBackedPredictor { dir: PathBuf::from(dir) })),
            _ => {
                return Err(SemvoxError::InvalidConfig(format!(
                    "predictor must be mock:<rate> or files:<dir>, got {spec}"
                )))
            }
        },
    };

    std::fs::create_dir_all(&a.out_dir)?;
    let outcome = train::train_run(&ds, &cfg, predictor.as_deref())?;
    io::append_loss_csv(&a.out_dir.join("loss.csv"), 0, &outcome.losses)?;

    match &outcome.model {
        train::Model::Network(params) => {
            io::write_net1(&a.out_dir.join("model.net1"), params)?;
            println!(
                "trained {} steps; {} parameters -> {}",
                outcome.losses.len(),
                params.total_count(),
                a.out_dir.join("model.net1").display()
            );
        }
        train::Model::DirectField(_) => {
            let grid = outcome
                .model
                .direct_field_grid(&outcome.samples, &ds.manifest.grid, ds.manifest.n_sem)
                .unwrap();
            io::write_vxg(&a.out_dir.join("refined.vxg"), &grid)?;
            println!(
                "refined field over {} steps -> {}",
                outcome.losses.len(),
                a.out_dir.join("refined.vxg").display()
            );
        }
    }
    if let (Some(first), Some(last)) = (outcome.losses.first(), outcome.losses.last()) {
        println!("loss: {:.6} -> {:.6}", first.total, last.total);
    }
    Ok(())
}

fn cmd_infer(a: InferArgs) -> semvox::Result<()> {
    let params = io::read_net1(&a.checkpoint)?;
    let input = io::read_vxg(&a.input)?;
    let stride = match &a.stride {
        Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
        Some(_) => return Err(SemvoxError::InvalidConfig("stride needs 3 components".into())),
        None => params.cfg().chunk_dims,
    };
    let out = train::infer(&params, &input, stride)?;
    io::write_vxg(&a.out, &out)?;
    println!("completed volume -> {}", a.out.display());
    Ok(())
}

fn print_report(report: &EvalReport, class_names: Option<&[String]>) {
    println!("protocol: {}", report.protocol);
    println!(
        "m-IoU {:.4}  m-Acc {:.4}  acc(micro) {:.4}  geo-IoU {:.4}  geo-recall {:.4}",
        report.m_iou, report.m_acc, report.acc_micro, report.geo_iou, report.geo_recall
    );
    println!("{:<12} {:>8} {:>8}", "class", "IoU", "Acc");
    for (c, (iou, acc)) in report.per_class_iou.iter().zip(&report.per_class_acc).enumerate() {
        let name = class_names
            .and_then(|n| n.get(c).cloned())
            .unwrap_or_else(|| format!("class{c}"));
        let fmt = |v: &Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!("{:<12} {:>8} {:>8}", name, fmt(iou), fmt(acc));
    }
}

fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("metric,value\n");
    out.push_str(&format!("protocol,{}\n", report.protocol));
    out.push_str(&format!("m_iou,{}\n", report.m_iou));
    out.push_str(&format!("m_acc,{}\n", report.m_acc));
    out.push_str(&format!("acc_micro,{}\n", report.acc_micro));
    out.push_str(&format!("geo_iou,{}\n", report.geo_iou));
    out.push_str(&format!("geo_recall,{}\n", report.geo_recall));
    out.push_str(&format!("n_eval_voxels,{}\n", report.n_eval_voxels));
    for (c, iou) in report.per_class_iou.iter().enumerate() {
        if let Some(v) = iou {
            out.push_str(&format!("iou_class{c},{v}\n"));
        }
    }
    out
}

fn cmd_eval(a: EvalArgs) -> semvox::Result<()> {
    let pred = io::read_vxg(&a.pred)?;
    let report = match a.protocol.as_str() {
        "ssc" => {
            let gt_path = a.gt.as_ref().ok_or_else(|| {
                SemvoxError::InvalidConfig("ssc protocol needs --gt".into())
            })?;
            let gt = io::read_vxg(gt_path)?;
            eval_ssc(&pred, &gt)?
        }
        proto @ ("sg_raw" | "sg_comp") => {
            let in_path = a.input.as_ref().or(a.gt.as_ref()).ok_or_else(|| {
                SemvoxError::InvalidConfig("sg protocols need --input".into())
            })?;
            let input = io::read_vxg(in_path)?;
            let protocol = if proto == "sg_raw" { Protocol::SgRaw } else { Protocol::SgComp };
            eval_sg(&pred, &input, protocol)?
        }
        other => return Err(SemvoxError::InvalidConfig(format!("unknown protocol {other}"))),
    };
    print_report(&report, a.class_names.as_deref());
    if let Some(out) = &a.out {
        std::fs::write(out, report_csv(&report))?;
    }
    Ok(())
}

fn cmd_export_mesh(a: ExportMeshArgs) -> semvox::Result<()> {
    let grid = io::read_vxg(&a.grid)?;
    let mesh = marching_cubes(&grid);
    io::write_ply(&a.out, &mesh)?;
    println!(
        "exported {} vertices / {} triangles -> {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        a.out.display()
    );
    Ok(())
}
