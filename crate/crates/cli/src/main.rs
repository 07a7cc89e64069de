//! `icosweep`: all-around depth estimation from multiple fisheye cameras on
//! icosahedral grids.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use icosweep_core::camera::{load_rig, save_ico_image, save_rig, CameraRig, Image};
use icosweep_core::chart::build_chart;
use icosweep_core::config::{load_config, RunConfig};
use icosweep_core::erp::{colorize_indices, erp_resample, indices_to_meters};
use icosweep_core::icosphere::build_icosphere;
use icosweep_core::pfm::write_pfm;
use icosweep_core::pipeline::{evaluate_scenes, prepare_scene, Pipeline};
use icosweep_core::regress::Metrics;
use icosweep_core::scenegen::{generate, gt_depth_ico, rotate_rig};
use icosweep_core::sweep::{build_sweep_cache, cache_key, read_cache, sphere_radii, write_cache};
use icosweep_core::train::{restore, rig_from_config, train};
use icosweep_core::weights::{load_params, save_depth_map, save_params, DepthIndexFile};
use icosweep_core::Error;

#[derive(Parser)]
#[command(name = "icosweep", version, about = "Omnidirectional multi-fisheye depth estimation on icosahedral grids")]
struct Cli {
    /// Run configuration file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Force deterministic single-threaded execution.
    #[arg(long, global = true)]
    serial: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Project fisheye images onto the icosphere, one output file per camera.
    Project(ProjectArgs),
    /// Build (and persist) the sweep interpolation cache for a rig.
    SweepCache(SweepCacheArgs),
    /// Train the network on synthetic scenes from the config.
    Train(TrainArgs),
    /// Run inference on a set of images and write a depth-index map.
    Infer(InferArgs),
    /// Evaluate trained weights over a list of rig pitch angles.
    Eval(EvalArgs),
    /// Resample a depth-index map into an equirectangular PFM/PNG.
    ExportErp(ExportErpArgs),
}

#[derive(Args)]
struct ProjectArgs {
    /// Rig file.
    #[arg(long)]
    rig: PathBuf,
    /// Comma-separated input images, one per rig camera, in rig order.
    #[arg(long, value_delimiter = ',')]
    images: Vec<PathBuf>,
    /// Icosphere subdivision level.
    #[arg(long)]
    level: Option<usize>,
    /// Output directory for per-camera `.ico` files.
    #[arg(long)]
    out: PathBuf,
    /// Re-check a sample of vertices against direct recomputation.
    #[arg(long)]
    verify: bool,
    /// Also export the icosphere mesh as ASCII OBJ.
    #[arg(long)]
    dump_mesh: Option<PathBuf>,
    /// Also export the unfold chart as CSV.
    #[arg(long)]
    dump_chart: Option<PathBuf>,
}

#[derive(Args)]
struct SweepCacheArgs {
    #[arg(long)]
    rig: PathBuf,
    /// Output path; defaults to `$ICOSWEEP_CACHE_DIR/<key>.swpc`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Where to write the best (lowest validation error) weights.
    #[arg(long, default_value = "weights.crwn")]
    out: PathBuf,
    /// Per-iteration loss log CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Dump rendered training images, ground truth, and the rig here.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
    /// Augmentation: color jitter amplitude (0 disables).
    #[arg(long)]
    color_jitter: Option<f64>,
    /// Augmentation: random shift in pixels (0 disables).
    #[arg(long)]
    random_shift: Option<f64>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    rig: PathBuf,
    #[arg(long, value_delimiter = ',')]
    images: Vec<PathBuf>,
    #[arg(long, default_value = "depth.crwn")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Comma-separated pitch angles in degrees.
    #[arg(long, value_delimiter = ',', default_value = "0,15,30,45")]
    pitch: Vec<f64>,
    /// Metrics CSV output.
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
    /// Evaluate on the training scenes instead of the held-out ones.
    #[arg(long)]
    train_scenes: bool,
    /// Model name column for the CSV.
    #[arg(long, default_value = "icosweep")]
    model_name: String,
    /// Dump rendered evaluation inputs and ground truth here.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ExportErpArgs {
    /// Depth-index map from `infer`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    /// Override the minimum sweep distance stored in the map.
    #[arg(long)]
    d_min: Option<f64>,
    /// Override the sphere count stored in the map.
    #[arg(long)]
    spheres: Option<usize>,
    /// Metric depth PFM output.
    #[arg(long)]
    out_pfm: Option<PathBuf>,
    /// Inverse-depth colormap PNG output.
    #[arg(long)]
    out_png: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if cli.serial {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build_global()
            .ok();
    }
    let code = match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<Error>() {
                Some(Error::Numeric(_)) => 3,
                _ => 2,
            }
        }
    };
    std::process::exit(code);
}

fn effective_config(cli_config: &Option<PathBuf>, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut cfg = match cli_config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = effective_config(&cli.config, cli.seed)?;
    match cli.command {
        Command::Project(args) => cmd_project(args, &cfg),
        Command::SweepCache(args) => cmd_sweep_cache(args, &cfg),
        Command::Train(args) => cmd_train(args, cfg),
        Command::Infer(args) => cmd_infer(args, &cfg),
        Command::Eval(args) => cmd_eval(args, &cfg),
        Command::ExportErp(args) => cmd_export_erp(args),
    }
}

fn load_images(paths: &[PathBuf]) -> anyhow::Result<Vec<Image>> {
    paths
        .iter()
        .map(|p| Image::load_png(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn cmd_project(args: ProjectArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let rig = load_rig(&args.rig)?;
    if args.images.len() != rig.len() {
        bail!(
            "{} images supplied for {} cameras",
            args.images.len(),
            rig.len()
        );
    }
    let level = args.level.unwrap_or(cfg.level);
    let ico = build_icosphere(level)?;
    let images = load_images(&args.images)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(&args.out, e))?;

    for (cam, img) in rig.cameras.iter().zip(&images) {
        let ii = icosweep_core::camera::project_to_icosphere(
            img,
            &cam.intrinsics,
            &cam.extrinsics,
            &ico,
        );
        let path = args.out.join(format!("{}.ico", cam.name));
        save_ico_image(&ii, &path)?;
        println!("wrote {}", path.display());

        if args.verify {
            let mut checked = 0usize;
            for i in (0..ico.num_vertices()).step_by(17) {
                let d_cam = cam.extrinsics.rotate_world_dir(&ico.vertex(i));
                let expect = cam
                    .intrinsics
                    .project(&d_cam)
                    .and_then(|(u, v)| icosweep_core::camera::bilinear_sample(img, u, v));
                let got = &ii.values.data()[i * 3..i * 3 + 3];
                match expect {
                    Some(rgb) => {
                        if !ii.valid[i] || got != rgb {
                            bail!("verify failed: vertex {i} of {}", cam.name);
                        }
                    }
                    None => {
                        if ii.valid[i] || got.iter().any(|&x| x != 0.0) {
                            bail!("verify failed: vertex {i} of {} should be invalid", cam.name);
                        }
                    }
                }
                checked += 1;
            }
            println!("verify ok ({checked} vertices re-checked for {})", cam.name);
        }
    }

    if let Some(path) = args.dump_mesh {
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        ico.write_obj(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(&path, e))?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = args.dump_chart {
        let chart = build_chart(&ico);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        chart
            .write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(&path, e))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn default_cache_path(key: &str) -> PathBuf {
    let dir = std::env::var_os("ICOSWEEP_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    dir.join(format!("{key}.swpc"))
}

fn cmd_sweep_cache(args: SweepCacheArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let rig = load_rig(&args.rig)?;
    let ico = build_icosphere(cfg.level - 2)?;
    let spheres = sphere_radii(cfg.num_spheres, cfg.d_min, cfg.eps);
    let cache = build_sweep_cache(&rig, &ico, &spheres);
    let path = args
        .out
        .unwrap_or_else(|| default_cache_path(&cache_key(&rig, ico.level(), &spheres)));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).ok();
    }
    write_cache(&cache, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_loss_log(path: &Path, log: &[icosweep_core::train::LossRecord]) -> anyhow::Result<()> {
    let mut text = String::from("iteration,loss,lr\n");
    for r in log {
        text.push_str(&format!("{},{:.8e},{:.1e}\n", r.iteration, r.loss, r.lr));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn dump_scene_data(
    dir: &Path,
    tag: &str,
    rig: &CameraRig,
    pipe: &Pipeline,
    scenes: &[icosweep_core::pipeline::SceneData],
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_rig(rig, &dir.join(format!("{tag}.rig")))?;
    for (si, sd) in scenes.iter().enumerate() {
        for (cam, img) in rig.cameras.iter().zip(&sd.images) {
            img.save_png(&dir.join(format!("{tag}_scene{si}_{}.png", cam.name)))?;
        }
        let center = rig.center();
        let gt = gt_depth_ico(&sd.scene, &center, &pipe.ico_out);
        write_pfm(
            &dir.join(format!("{tag}_scene{si}_gt_depth.pfm")),
            gt.len(),
            1,
            &gt,
        )?;
    }
    Ok(())
}

fn cmd_train(args: TrainArgs, mut cfg: RunConfig) -> anyhow::Result<()> {
    if let Some(j) = args.color_jitter {
        cfg.color_jitter = j;
    }
    if let Some(s) = args.random_shift {
        cfg.random_shift = s;
    }
    let mut last_print = std::time::Instant::now();
    let (mut pipe, report) = train(&cfg, |r| {
        if last_print.elapsed().as_secs_f64() > 2.0 {
            println!("iter {:>5}  loss {:.5}  lr {:.0e}", r.iteration, r.loss, r.lr);
            last_print = std::time::Instant::now();
        }
    })?;

    println!(
        "train MAE: initial {:.4} -> final {:.4}",
        report.initial_train.mae, report.final_train.mae
    );
    println!(
        "val MAE: initial {:.4} -> best {:.4} (iteration {})",
        report.initial_val.mae, report.best_val.mae, report.best_iteration
    );

    restore(&mut pipe.params, &report.best_params);
    save_params(&pipe.params, &args.out)?;
    println!("wrote {}", args.out.display());
    if let Some(log) = args.log {
        write_loss_log(&log, &report.loss_log)?;
        println!("wrote {}", log.display());
    }
    if let Some(dir) = args.dump_dir {
        let rig = rig_from_config(&cfg)?;
        let scenes: Vec<_> = icosweep_core::train::train_scenes_from_config(&cfg)?
            .iter()
            .map(|s| prepare_scene(s, &rig, &pipe))
            .collect();
        dump_scene_data(&dir, "train", &rig, &pipe, &scenes)?;
        println!("dumped training data to {}", dir.display());
    }
    Ok(())
}

fn cmd_infer(args: InferArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let rig = load_rig(&args.rig)?;
    if args.images.len() != rig.len() {
        bail!(
            "{} images supplied for {} cameras",
            args.images.len(),
            rig.len()
        );
    }
    let mut pipe = Pipeline::new(cfg, rig.len())?;
    load_params(&mut pipe.params, &args.weights)?;
    let cache = Arc::new(pipe.build_cache(&rig));
    let images = load_images(&args.images)?;
    let (pred, timings) = pipe.infer_images(&rig, &images, &cache);
    if pred.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite prediction".into()).into());
    }
    println!("timing {}", timings.report());
    save_depth_map(
        &DepthIndexFile {
            level: pipe.ico_out.level(),
            indices: pred,
            d_min: cfg.d_min,
            num_spheres: cfg.num_spheres,
            mask: None,
        },
        &args.out,
    )?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let base_rig = rig_from_config(cfg)?;
    let mut pipe = Pipeline::new(cfg, base_rig.len())?;
    load_params(&mut pipe.params, &args.weights)?;

    let scene_seeds = if args.train_scenes {
        cfg.scene_seeds.clone()
    } else {
        cfg.val_scene_seeds.clone()
    };
    if scene_seeds.is_empty() {
        bail!("no scenes to evaluate (check scene_seeds / val_scene_seeds)");
    }
    let scenes: Vec<_> = scene_seeds.iter().map(|&s| generate(s)).collect();

    let mut csv = String::from(Metrics::CSV_HEADER);
    csv.push('\n');
    for &pitch in &args.pitch {
        let rig = rotate_rig(&base_rig, pitch);
        let spheres = sphere_radii(cfg.num_spheres, cfg.d_min, cfg.eps);
        let key = cache_key(&rig, pipe.ico_out.level(), &spheres);
        let cache_path = default_cache_path(&key);
        let cache = if std::env::var_os("ICOSWEEP_CACHE_DIR").is_some() {
            match read_cache(&cache_path, &pipe.ico_out) {
                Ok(c) if c.rig_hash == icosweep_core::sweep::rig_content_hash(&rig) => c,
                _ => {
                    eprintln!(
                        "notice: rebuilding sweep cache for pitch {pitch} (missing or stale at {})",
                        cache_path.display()
                    );
                    let c = pipe.build_cache(&rig);
                    write_cache(&c, &cache_path).ok();
                    c
                }
            }
        } else {
            pipe.build_cache(&rig)
        };
        let cache = Arc::new(cache);
        let data: Vec<_> = scenes.iter().map(|s| prepare_scene(s, &rig, &pipe)).collect();
        let metrics = evaluate_scenes(&pipe, &data, &cache);
        println!("pitch {pitch}: {}", metrics.report().replace('\n', " "));
        csv.push_str(&metrics.csv_row(pitch, &args.model_name));
        csv.push('\n');
        if let Some(dir) = &args.dump_dir {
            dump_scene_data(dir, &format!("pitch{pitch}"), &rig, &pipe, &data)?;
        }
    }
    std::fs::write(&args.out, csv).map_err(|e| Error::io(&args.out, e))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_export_erp(args: ExportErpArgs) -> anyhow::Result<()> {
    let map = icosweep_core::weights::load_depth_map(&args.input)?;
    let d_min = args.d_min.unwrap_or(map.d_min);
    let n = args.spheres.unwrap_or(map.num_spheres);
    let ico = build_icosphere(map.level)?;
    let erp = erp_resample(&map.indices, &ico, args.width, args.height);
    if args.out_pfm.is_none() && args.out_png.is_none() {
        bail!("choose at least one of --out-pfm / --out-png");
    }
    if let Some(path) = args.out_pfm {
        let meters = indices_to_meters(&erp, d_min, n);
        write_pfm(&path, args.width, args.height, &meters)?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = args.out_png {
        let img = colorize_indices(&erp, n, args.width, args.height);
        img.save_png(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
