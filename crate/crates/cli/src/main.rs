use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use probewarp::imaging::{read_depth, read_frame, write_depth, write_frame};
use probewarp::motion::{Intrinsics, Vector3};
use probewarp::pipeline::{frame_file_name, ClampSettings, RansacSettings};
use probewarp::synth::{synthetic_ball, DEFAULT_SEQUENCE_LEN};
use probewarp::{
    fit_pair, propagate, render_sequence, DampAnchor, Error, MotionScript, PipelineConfig,
    RunReport, SceneSpec, Settings,
};

#[derive(Parser)]
#[command(
    name = "probewarp",
    version,
    about = "Propagate a chrome-ball light probe through a video"
)]
struct Cli {
    /// Worker threads for per-frame parallel work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate camera motion over a sequence and warp the ball into every frame.
    Propagate(PropagateArgs),
    /// Fit the motion between two frames and print the log entry as JSON.
    Fit(FitArgs),
    /// Re-apply logged transforms to a ball image.
    Warp(WarpArgs),
    /// Render a synthetic sequence with known camera motion.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AnchorArg {
    Identity,
    Previous,
}

#[derive(Args)]
struct EstimationArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "identity")]
    damp_anchor: AnchorArg,
    #[arg(long, default_value_t = 200)]
    max_corners: usize,
    #[arg(long, default_value_t = 200)]
    ransac_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inlier threshold as a fraction of the median correspondence depth.
    #[arg(long, default_value_t = 0.02)]
    ransac_threshold: f64,
    /// Per-frame rotation bound in radians.
    #[arg(long, default_value_t = 0.1)]
    max_angle: f64,
    /// Per-frame translation bound as a fraction of the mean depth.
    #[arg(long, default_value_t = 0.1)]
    max_trans: f64,
    /// Warp with the inverse of the estimated motion.
    #[arg(long)]
    invert_motion: bool,
}

impl EstimationArgs {
    fn settings(&self) -> Settings {
        Settings {
            alpha: self.alpha,
            damp_anchor: match self.damp_anchor {
                AnchorArg::Identity => DampAnchor::Identity,
                AnchorArg::Previous => DampAnchor::Previous,
            },
            max_corners: self.max_corners,
            ransac: RansacSettings {
                threshold_scale: self.ransac_threshold,
                iters: self.ransac_iters,
                seed: self.seed,
            },
            clamp: ClampSettings {
                max_angle: self.max_angle,
                trans_scale: self.max_trans,
            },
            invert_motion: self.invert_motion,
            ..Settings::default()
        }
    }
}

#[derive(Args)]
struct PropagateArgs {
    /// Directory of frame_NNNNN.png files.
    #[arg(long)]
    frames: PathBuf,
    /// Directory of depth_NNNNN.pfm files.
    #[arg(long)]
    depth: PathBuf,
    /// Reference ball image from frame 0.
    #[arg(long)]
    ball: PathBuf,
    /// Key-value file with fx, fy, cx, cy.
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    estimation: EstimationArgs,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    frame0: PathBuf,
    #[arg(long)]
    depth0: PathBuf,
    #[arg(long)]
    frame1: PathBuf,
    #[arg(long)]
    depth1: PathBuf,
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    #[command(flatten)]
    estimation: EstimationArgs,
}

#[derive(Args)]
struct WarpArgs {
    /// A transforms.json written by `propagate`.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    ball: PathBuf,
    /// Output directory for ball_NNNNN.png files.
    #[arg(long)]
    out: PathBuf,
    /// Only replay this frame index.
    #[arg(long)]
    frame: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthMotion {
    Identity,
    Translate,
    Screw,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEQUENCE_LEN)]
    frames: usize,
    #[arg(long, default_value_t = 360)]
    width: usize,
    #[arg(long, default_value_t = 240)]
    height: usize,
    /// Distance of the textured plane.
    #[arg(long, default_value_t = 5.0)]
    plane_depth: f64,
    #[arg(long, value_enum, default_value = "translate")]
    motion: SynthMotion,
    /// Per-frame camera translation along x as a fraction of the plane depth.
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    /// Per-frame rotation in radians for screw motion.
    #[arg(long, default_value_t = 0.002)]
    step_angle: f64,
    #[arg(long, default_value_t = 32)]
    ball_size: usize,
    #[arg(long, default_value_t = 0)]
    texture_seed: u64,
}

fn load_intrinsics(path: Option<&Path>, dims: (usize, usize)) -> probewarp::Result<Intrinsics> {
    let k = match path {
        Some(p) => Intrinsics::read(p)?,
        None => Intrinsics::default_for(dims.0, dims.1),
    };
    k.validate_for(dims.0, dims.1)?;
    Ok(k)
}

fn run_propagate(args: PropagateArgs) -> probewarp::Result<()> {
    let cfg = PipelineConfig {
        frames_dir: args.frames,
        depth_dir: args.depth,
        ball_path: args.ball,
        intrinsics_path: args.intrinsics,
        out_dir: args.out,
        settings: args.estimation.settings(),
    };
    let report = propagate(&cfg)?;
    let t = &report.totals;
    eprintln!(
        "processed {} frames, {} fallbacks, {:.1} mean inliers, {:.4} clamped fraction",
        t.frames_processed, t.fallbacks_used, t.mean_inliers, t.clamped_fraction
    );
    Ok(())
}

fn run_fit(args: FitArgs) -> probewarp::Result<()> {
    let frame0 = read_frame(&args.frame0)?;
    let depth0 = read_depth(&args.depth0)?;
    let frame1 = read_frame(&args.frame1)?;
    let depth1 = read_depth(&args.depth1)?;
    let k = load_intrinsics(args.intrinsics.as_deref(), frame0.dims())?;
    let log = fit_pair(
        &frame0,
        &depth0,
        &frame1,
        &depth1,
        &k,
        &args.estimation.settings(),
    )?;
    println!(
        "{}",
        serde_json::to_string_pretty(&log).expect("log serializes")
    );
    Ok(())
}

fn run_warp(args: WarpArgs) -> probewarp::Result<()> {
    let report = RunReport::read(&args.log)?;
    let ball = read_frame(&args.ball)?;
    let expected = (report.ball_dims[0], report.ball_dims[1]);
    if ball.dims() != expected {
        return Err(Error::Config(format!(
            "ball is {:?} but the log was recorded for {expected:?}",
            ball.dims()
        )));
    }
    if let Some(i) = args.frame {
        if i != 0 && !report.frames.iter().any(|f| f.frame_index == i) {
            return Err(Error::Config(format!(
                "frame {i} is not in {}",
                args.log.display()
            )));
        }
    }
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let wanted = |i: usize| args.frame.is_none_or(|f| f == i);
    if wanted(0) {
        write_frame(args.out.join(frame_file_name("ball_", 0, "png")), &ball)?;
    }
    for entry in report.frames.iter().filter(|f| wanted(f.frame_index)) {
        let warped = report.replay(&ball, entry)?;
        write_frame(
            args.out
                .join(frame_file_name("ball_", entry.frame_index, "png")),
            &warped.image,
        )?;
    }
    Ok(())
}

fn run_synth(args: SynthArgs) -> probewarp::Result<()> {
    if args.frames == 0 {
        return Err(Error::Config("--frames must be at least 1".into()));
    }
    let mut scene = SceneSpec::plane(args.plane_depth);
    scene.texture.noise_seed = args.texture_seed;
    let dims = (args.width, args.height);
    let k = Intrinsics::default_for(dims.0, dims.1);
    let step = Vector3::new(args.step * args.plane_depth, 0.0, 0.0);
    let script = match args.motion {
        SynthMotion::Identity => MotionScript::identity(args.frames),
        SynthMotion::Translate => MotionScript::linear_translation(args.frames, step),
        SynthMotion::Screw => MotionScript::screw(args.frames, Vector3::y(), args.step_angle, step),
    };
    let seq = render_sequence(&scene, &script, &k, dims)?;

    let frames_dir = args.out.join("frames");
    let depth_dir = args.out.join("depth");
    for dir in [&frames_dir, &depth_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for (i, (frame, depth)) in seq.frames.iter().zip(&seq.depths).enumerate() {
        write_frame(frames_dir.join(frame_file_name("frame_", i, "png")), frame)?;
        write_depth(depth_dir.join(frame_file_name("depth_", i, "pfm")), depth)?;
    }
    write_frame(
        args.out.join("ball.png"),
        &synthetic_ball(args.ball_size, args.ball_size)?,
    )?;
    let k_path = args.out.join("intrinsics.txt");
    fs::write(&k_path, k.to_text()).map_err(|e| Error::io(&k_path, e))?;
    let gt: Vec<_> = seq
        .ground_truth
        .iter()
        .enumerate()
        .map(|(i, p)| {
            serde_json::json!({
                "frame_index": i,
                "R": p.rotation_row_major(),
                "t": p.translation_array(),
            })
        })
        .collect();
    let gt_path = args.out.join("ground_truth.json");
    let text = serde_json::to_string_pretty(&gt).expect("ground truth serializes");
    fs::write(&gt_path, text).map_err(|e| Error::io(&gt_path, e))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Propagate(a) => run_propagate(a),
        Command::Fit(a) => run_fit(a),
        Command::Warp(a) => run_warp(a),
        Command::Synth(a) => run_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
