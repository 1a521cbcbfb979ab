//! `camgeom` command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input (parse, validation,
//! I/O), 3 degenerate geometry or numerical failure.
//! Set `CAMGEOM_LOG` (e.g. `debug`) for log output on stderr.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use camgeom::dropout::{dropout_schedule, DropoutPolicy};
use camgeom::epipolar::keep_count;
use camgeom::io::{self, write_atomic, PoseFile, TensorFile};
use camgeom::selfcheck::run_selfcheck;
use camgeom::{
    evaluate, fundamental_matrix, plucker_trajectory, relative_pose, view_mask, Error,
    FundamentalForm, MaskOptions, ResidualKind, TauMode, DEFAULT_MASK_RATIO,
};
use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use log::{debug, info};

#[derive(Parser, Debug)]
#[command(
    name = "camgeom",
    version,
    about = "Camera-conditioning geometry toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum TauArg {
    PerRow,
    Global,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ResidualArg {
    Algebraic,
    Sampson,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the Plücker embedding of one view's trajectory as a tensor file.
    Plucker {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        view: String,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        /// Express poses relative to the first frame.
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        normalize_first_frame: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the fundamental matrix mapping neighbor pixels to local epipolar lines.
    Fundamental {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        local: String,
        #[arg(long)]
        neighbor: String,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// Use the alternative closed form (fails the projection check for general poses).
        #[arg(long = "paper-literal-F")]
        literal_f: bool,
    },
    /// Write the cross-view attention mask of a rig view.
    Mask {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        view: String,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, default_value_t = DEFAULT_MASK_RATIO)]
        ratio: f64,
        #[arg(long, value_enum, default_value_t = TauArg::PerRow)]
        tau_mode: TauArg,
        #[arg(long, value_enum, default_value_t = ResidualArg::Algebraic)]
        residual: ResidualArg,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long = "paper-literal-F")]
        literal_f: bool,
        #[arg(long)]
        out: PathBuf,
        /// Also write a graymap rendition.
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Print the pose of the neighbor camera relative to the local camera.
    Relpose {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        local: String,
        #[arg(long)]
        neighbor: String,
        #[arg(long, default_value_t = 0)]
        frame: usize,
    },
    /// Score estimated trajectories against ground truth.
    Eval {
        #[arg(long)]
        gen: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print the condition-dropout decisions for a run of training steps as CSV.
    DropoutSchedule {
        #[arg(long, default_value_t = 1000)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print per-condition drop frequencies instead of every step.
        #[arg(long)]
        summary: bool,
    },
    /// Run the built-in numerical checks.
    Selfcheck,
}

enum Failure {
    Lib(Error),
    Checks(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CmdResult = Result<String, Failure>;

fn form(literal: bool) -> FundamentalForm {
    if literal {
        FundamentalForm::Literal
    } else {
        FundamentalForm::Geometric
    }
}

fn load_poses(path: &Path) -> Result<PoseFile, Error> {
    let pf = io::read_pose_file(path).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{message} (in {})", path.display()),
        },
        other => other,
    })?;
    debug!("{}: {} views", path.display(), pf.views.len());
    Ok(pf)
}

fn fmt_matrix(m: &camgeom::nalgebra::Matrix3<f64>) -> String {
    let mut s = String::new();
    for i in 0..3 {
        let _ = writeln!(s, "{} {} {}", m[(i, 0)], m[(i, 1)], m[(i, 2)]);
    }
    s
}

fn cmd_plucker(
    poses: &Path,
    view: &str,
    h: usize,
    w: usize,
    normalize: bool,
    out: &Path,
) -> CmdResult {
    let pf = load_poses(poses)?;
    let traj = pf.trajectory(view)?;
    let t = plucker_trajectory(&traj, h, w, normalize)?;
    let file = TensorFile::from_plucker(&t);
    io::write_tensor(out, &file)?;
    info!("wrote {}", out.display());
    Ok(format!("wrote {} shape {:?}\n", out.display(), file.dims()))
}

fn cmd_fundamental(poses: &Path, local: &str, nb: &str, frame: usize, literal: bool) -> CmdResult {
    let pf = load_poses(poses)?;
    let f = fundamental_matrix(&pf.pose(local, frame)?, &pf.pose(nb, frame)?, form(literal))?;
    Ok(fmt_matrix(f.matrix()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_mask(
    poses: &Path,
    view: &str,
    h: usize,
    w: usize,
    opts: MaskOptions,
    frame: usize,
    out: &Path,
    pgm: Option<&Path>,
) -> CmdResult {
    let pf = load_poses(poses)?;
    let rig = pf.rig()?;
    let mask = view_mask(&rig, &pf.poses_at(frame), view, h, w, &opts)?;
    io::write_mask(out, &mask)?;
    if let Some(p) = pgm {
        io::write_mask_pgm(p, &mask)?;
    }
    let counts: Vec<usize> = (0..mask.rows()).map(|q| mask.row_popcount(q)).collect();
    let (lo, hi) = (
        counts.iter().min().copied().unwrap_or(0),
        counts.iter().max().copied().unwrap_or(0),
    );
    Ok(format!(
        "wrote {} rows={} cols={} keep={} row_popcount_min={lo} row_popcount_max={hi}\n",
        out.display(),
        mask.rows(),
        mask.cols(),
        keep_count(opts.ratio, mask.cols()),
    ))
}

fn cmd_relpose(poses: &Path, local: &str, nb: &str, frame: usize) -> CmdResult {
    let pf = load_poses(poses)?;
    let rel = relative_pose(
        &pf.pose(local, frame)?.extrinsics,
        &pf.pose(nb, frame)?.extrinsics,
    );
    let t = rel.translation();
    Ok(format!(
        "R\n{}t\n{} {} {}\n",
        fmt_matrix(rel.rotation()),
        t.x,
        t.y,
        t.z
    ))
}

fn cmd_eval(gen: &Path, gt: &Path, json: Option<&Path>) -> CmdResult {
    let est = io::read_estimated(gen)?;
    let truth = io::read_ground_truth(gt)?;
    if est.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} has {} samples but {} has {}",
            gen.display(),
            est.len(),
            gt.display(),
            truth.len()
        ))
        .into());
    }
    for (e, (id, _)) in est.iter().zip(&truth) {
        if &e.sample_id != id {
            return Err(
                Error::Invalid(format!("sample order differs: {} vs {id}", e.sample_id)).into(),
            );
        }
    }
    let gt_poses: Vec<_> = truth.into_iter().map(|(_, p)| p).collect();
    let report = evaluate(&est, &gt_poses)?;
    if let Some(path) = json {
        let doc = serde_json::to_vec_pretty(&report)
            .map_err(|e| Error::Format(format!("json encoding: {e}")))?;
        write_atomic(path, &doc)?;
    }
    let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| x.to_string());
    let mut s = String::new();
    let _ = writeln!(s, "rot_err={}", opt(report.rot_err));
    let _ = writeln!(
        s,
        "rot_err_deg={}",
        opt(report.rot_err.map(f64::to_degrees))
    );
    let _ = writeln!(s, "trans_err={}", opt(report.trans_err));
    let _ = writeln!(s, "success_rate={}", report.success_rate);
    let _ = writeln!(s, "n_samples={}", report.n_samples);
    let _ = writeln!(s, "n_success={}", report.n_success);
    for w in &report.warnings {
        let _ = writeln!(s, "warning={w}");
    }
    Ok(s)
}

fn cmd_dropout(steps: u64, seed: u64, summary: bool) -> CmdResult {
    let policy = DropoutPolicy::with_seed(seed);
    let sched: BTreeMap<String, Vec<bool>> = dropout_schedule(&policy, steps);
    let names: Vec<&String> = sched.keys().collect();
    let mut s = String::new();
    if summary {
        for (name, drops) in &sched {
            let n = drops.iter().filter(|&&d| d).count();
            let _ = writeln!(
                s,
                "{name} prob={} freq={}",
                policy.conditions()[name.as_str()],
                n as f64 / steps.max(1) as f64
            );
        }
        return Ok(s);
    }
    let _ = writeln!(
        s,
        "step,{}",
        names
            .iter()
            .map(|n| n.as_str())
            .collect::<Vec<_>>()
            .join(",")
    );
    let columns: Vec<&Vec<bool>> = sched.values().collect();
    for step in 0..steps as usize {
        s.push_str(&step.to_string());
        for col in &columns {
            s.push_str(if col[step] { ",1" } else { ",0" });
        }
        s.push('\n');
    }
    Ok(s)
}

fn cmd_selfcheck() -> CmdResult {
    let results = run_selfcheck();
    let mut s = String::new();
    for r in &results {
        let _ = writeln!(s, "{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        print!("{s}");
        return Err(Failure::Checks(failed));
    }
    Ok(s)
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Plucker {
            poses,
            view,
            height,
            width,
            normalize_first_frame,
            out,
        } => cmd_plucker(&poses, &view, height, width, normalize_first_frame, &out),
        Command::Fundamental {
            poses,
            local,
            neighbor,
            frame,
            literal_f,
        } => cmd_fundamental(&poses, &local, &neighbor, frame, literal_f),
        Command::Mask {
            poses,
            view,
            height,
            width,
            ratio,
            tau_mode,
            residual,
            frame,
            literal_f,
            out,
            pgm,
        } => {
            let opts = MaskOptions {
                ratio,
                tau_mode: match tau_mode {
                    TauArg::PerRow => TauMode::PerRow,
                    TauArg::Global => TauMode::Global,
                },
                residual: match residual {
                    ResidualArg::Algebraic => ResidualKind::Algebraic,
                    ResidualArg::Sampson => ResidualKind::Sampson,
                },
                form: form(literal_f),
            };
            cmd_mask(
                &poses,
                &view,
                height,
                width,
                opts,
                frame,
                &out,
                pgm.as_deref(),
            )
        }
        Command::Relpose {
            poses,
            local,
            neighbor,
            frame,
        } => cmd_relpose(&poses, &local, &neighbor, frame),
        Command::Eval { gen, gt, json } => cmd_eval(&gen, &gt, json.as_deref()),
        Command::DropoutSchedule {
            steps,
            seed,
            summary,
        } => cmd_dropout(steps, seed, summary),
        Command::Selfcheck => cmd_selfcheck(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CAMGEOM_LOG", "warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Checks(n)) => {
            eprintln!("error: {n} selfcheck suite(s) failed");
            ExitCode::from(3)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
