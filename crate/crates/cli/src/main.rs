use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::warn;

use hoi_labelforge::candidates::{
    BackgroundMode, DetectionsFile, DEFAULT_NMS_IOU, DEFAULT_SCORE_THRESHOLD,
};
use hoi_labelforge::eval::DEFAULT_IOU_THRESHOLD;
use hoi_labelforge::fixtures::{synthesize, FixtureSpec};
use hoi_labelforge::inference::LabelsFile;
use hoi_labelforge::pipeline::{self, PairingParams};
use hoi_labelforge::{KnowledgeBase, Real};

#[derive(Parser)]
#[command(
    name = "hoi-labelforge",
    version,
    about = "Training-free HOI pseudo-label generation"
)]
struct Cli {
    /// Worker threads for per-pair work; 0 picks the number of cores.
    #[arg(
        long,
        env = "HOI_LABELFORGE_THREADS",
        default_value_t = 0,
        global = true
    )]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Background {
    Retain,
    Delete,
}

impl From<Background> for BackgroundMode {
    fn from(b: Background) -> Self {
        match b {
            Background::Retain => BackgroundMode::Retain,
            Background::Delete => BackgroundMode::Delete,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render both prompt templates of every HOI category as JSON lines.
    EmitTemplates {
        kb: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Denoise detections and write one crop-spec file per image.
    Pair {
        detections: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SCORE_THRESHOLD)]
        score_threshold: f64,
        #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
        nms_iou: f64,
        /// Also pair humans with other persons.
        #[arg(long)]
        allow_person_objects: bool,
        #[arg(long, value_enum, default_value = "delete")]
        background: Background,
        /// Detector category of humans; defaults to the object named "person".
        #[arg(long)]
        person_category: Option<usize>,
    },
    /// Fuse similarities and infer labels for every image of a run manifest.
    Generate { manifest: PathBuf },
    /// Score a labels file against ground truth.
    Evaluate {
        labels: PathBuf,
        ground_truth: PathBuf,
        /// Report file (JSON).
        #[arg(short, long)]
        out: PathBuf,
        /// Knowledge base for category names and id validation.
        #[arg(long)]
        kb: Option<PathBuf>,
        /// Directory for per-image SVG overlays of the labels; needs --kb.
        #[arg(long, requires = "kb")]
        overlays: Option<PathBuf>,
        /// Detections file supplying image sizes for overlays.
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
    },
    /// Load a knowledge base and report its size and any repairs.
    ValidateKb { kb: PathBuf },
    /// Draw SVG overlays for a labels or ground-truth file.
    Render {
        labels: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        detections: Option<PathBuf>,
    },
    /// Write a seeded synthetic fixture with a ready-to-run manifest.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        /// Fixture description (JSON); the bundled reference fixture when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise: Option<f64>,
    },
}

fn load_detections(path: Option<&Path>) -> Result<Option<DetectionsFile<Real>>> {
    Ok(match path {
        Some(p) => Some(DetectionsFile::load(p)?),
        None => None,
    })
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("configuring the worker pool")?;

    match cli.command {
        Command::EmitTemplates { kb, out } => {
            let kb = KnowledgeBase::load(&kb)?;
            let text = pipeline::templates_jsonl(&kb);
            match out {
                Some(path) => pipeline::write_text(&path, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Pair {
            detections,
            kb,
            out_dir,
            score_threshold,
            nms_iou,
            allow_person_objects,
            background,
            person_category,
        } => {
            let kb = KnowledgeBase::load(&kb)?;
            let dets = DetectionsFile::load(&detections)?;
            let params = PairingParams {
                score_threshold,
                nms_iou,
                allow_person_objects,
                background_mode: background.into(),
                person_category,
            };
            let docs = pipeline::pair_detections(&dets, &kb, &params)?;
            let mut total = 0;
            for doc in &docs {
                doc.save(pipeline::crop_spec_path(&out_dir, &doc.image_id))?;
                println!("{}\t{} pairs", doc.image_id, doc.pairs.len());
                total += doc.pairs.len();
            }
            println!("{} images, {total} pairs", docs.len());
        }
        Command::Generate { manifest } => {
            let (out, s) = pipeline::generate_from_manifest(&manifest)?;
            println!(
                "{} images, {} pairs in, {} labels out, interacting fraction {:.4}",
                s.images, s.pairs_in, s.labels_out, s.interacting_fraction
            );
            println!("wrote {}", out.display());
        }
        Command::Evaluate {
            labels,
            ground_truth,
            out,
            kb,
            overlays,
            detections,
            iou,
        } => {
            let kb = kb.map(KnowledgeBase::load).transpose()?;
            let report = pipeline::evaluate_paths(&labels, &ground_truth, kb.as_ref(), iou)?;
            report.save(&out)?;
            print!("{}", report.to_table(kb.as_ref()));
            if let (Some(dir), Some(kb)) = (overlays, kb.as_ref()) {
                let file: LabelsFile<Real> = LabelsFile::load(&labels)?;
                let dets = load_detections(detections.as_deref())?;
                let written = pipeline::render_overlays(&file, kb, dets.as_ref(), &dir)?;
                println!("{} overlays in {}", written.len(), dir.display());
            }
        }
        Command::ValidateKb { kb } => {
            let kb = KnowledgeBase::load(&kb)?;
            for w in kb.warnings() {
                warn!("{w}");
            }
            println!(
                "ok: {} actions, {} objects, {} HOI categories, {} repairs",
                kb.num_actions(),
                kb.num_objects(),
                kb.num_hoi(),
                kb.warnings().len()
            );
        }
        Command::Render {
            labels,
            kb,
            out_dir,
            detections,
        } => {
            let kb = KnowledgeBase::load(&kb)?;
            let file: LabelsFile<Real> = LabelsFile::load(&labels)?;
            let dets = load_detections(detections.as_deref())?;
            let written = pipeline::render_overlays(&file, &kb, dets.as_ref(), &out_dir)?;
            println!("{} overlays in {}", written.len(), out_dir.display());
        }
        Command::Synth {
            out_dir,
            spec,
            seed,
            noise,
        } => {
            let mut spec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|source| {
                        hoi_labelforge::Error::Io {
                            path: path.clone(),
                            source,
                        }
                    })?;
                    serde_json::from_str(&text).map_err(|source| hoi_labelforge::Error::Json {
                        context: path.display().to_string(),
                        source,
                    })?
                }
                None => FixtureSpec::reference(),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            if let Some(noise) = noise {
                spec.noise = noise;
            }
            let manifest = synthesize(&spec)?.write_to(&out_dir)?;
            println!("wrote {}", manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = err
                .downcast_ref::<hoi_labelforge::Error>()
                .map_or(1, hoi_labelforge::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
