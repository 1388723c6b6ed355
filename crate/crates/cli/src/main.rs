use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rpntrack::config::RunConfig;
use rpntrack::evalbench::{
    auc, precision_at_20, precision_curve, render_otb_table, render_vot_table, success_curve, OtbRow, VotRow,
};
use rpntrack::geometry::{label_map, match_anchors, MatchScheme, SampleClass};
use rpntrack::image::{resize_chw, Image};
use rpntrack::io_util::write_atomic;
use rpntrack::netspec::{distill, surgery, Network, NetworkSpec, SCORE_LAYER, STUDENT_INPUT_SIZE};
use rpntrack::results::Results;
use rpntrack::runner;
use rpntrack::sequence::Sequence;
use rpntrack::synthseq;
use rpntrack::tensor::{Rng, Tensor, WeightSet};
use rpntrack::{Error, Result};

#[derive(Parser)]
#[command(name = "rpntrack", version, about = "Anchor-based discriminative tracker and benchmark tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// `key = value` config file applied over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single override `key=value`, applied after the config file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Clone)]
struct BackboneArgs {
    /// Backbone weights; random weights from `backbone.init_seed` otherwise.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Track one sequence directory and write a results file.
    Track {
        seq_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Groundtruth is 1-based (OTB files).
        #[arg(long)]
        one_based: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        backbone: BackboneArgs,
    },
    /// Precision/success curves and AUC. Pass results files (`.json`) and
    /// sequence directories; the n-th results file is scored against the
    /// n-th directory.
    EvalOtb {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Write `<name>_precision.csv` and `<name>_success.csv` here.
        #[arg(long)]
        csv_dir: Option<PathBuf>,
        #[arg(long)]
        one_based: bool,
    },
    /// Re-initialising evaluation: ACC / ROB / EAO.
    EvalVot {
        tracker_config: PathBuf,
        #[arg(required = true)]
        seq_dirs: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        one_based: bool,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[command(flatten)]
        backbone: BackboneArgs,
    },
    /// Paired runs of two configurations on a suite (preset name or a
    /// directory of sequence directories).
    Ablate {
        suite: String,
        #[arg(long)]
        config_a: PathBuf,
        #[arg(long)]
        config_b: PathBuf,
        /// Seed for generating a preset suite.
        #[arg(long, default_value_t = 0)]
        suite_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        backbone: BackboneArgs,
    },
    /// Train a surgery-derived student to mimic a teacher's features.
    Distill {
        /// Teacher weights.
        #[arg(long)]
        teacher: PathBuf,
        /// Teacher spec file; defaults to the `tiny-teacher` preset.
        #[arg(long)]
        teacher_spec: Option<PathBuf>,
        /// Directory of PNG images, each resized to the teacher's input.
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Images (taken from the end of the sorted list) kept for evaluation.
        #[arg(long, default_value_t = 8)]
        heldout: usize,
        /// Loss curve and held-out losses as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Derive the low-resolution student spec from a teacher spec.
    Surgery {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = STUDENT_INPUT_SIZE)]
        input: usize,
        /// Teacher weights to check against the student and copy unchanged.
        #[arg(long, requires = "weights_out")]
        weights: Option<PathBuf>,
        #[arg(long)]
        weights_out: Option<PathBuf>,
    },
    /// Receptive field, jump and grid size of every layer.
    Rf {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Print a built-in network spec.
    Spec { preset: String },
    /// Write seeded random weights for a built-in network spec.
    Init {
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the label map of the centred target.
    Labelmap {
        /// Anchor IoU threshold; ignored with `--scheme all`.
        #[arg(long, default_value_t = 0.7)]
        tau: f64,
        /// `anchor` or `all`.
        #[arg(long, default_value = "anchor")]
        scheme: String,
        /// `positive` or `negative`.
        #[arg(long, default_value = "positive")]
        class: String,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate a synthetic suite as sequence directories.
    Synth {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the fully resolved configuration.
    Config {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn resolve(config: Option<&Path>, set: &[String]) -> Result<RunConfig> {
    let mut c = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        c.set(k, v)?;
    }
    c.validate()?;
    Ok(c)
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        resolve(self.config.as_deref(), &self.set)
    }
}

fn backbone(cfg: &RunConfig, args: &BackboneArgs) -> Result<Arc<Network>> {
    let weights = args.weights.as_deref().map(WeightSet::load).transpose()?;
    Ok(Arc::new(cfg.backbone.build(weights)?))
}

fn load_spec(path: &Path) -> Result<NetworkSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    NetworkSpec::parse(&text)
}

fn load_suite(suite: &str, seed: u64) -> Result<Vec<Sequence>> {
    let dir = Path::new(suite);
    if !dir.is_dir() {
        return synthseq::generate_suite(suite, seed);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| Sequence::load(d, false)).collect()
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Track { seq_dir, out, one_based, cfg, backbone: b } => {
            let cfg = cfg.resolve()?;
            let seq = Sequence::load(&seq_dir, one_based)?;
            let r = runner::track(&cfg, backbone(&cfg, &b)?, &seq)?;
            r.save(&out)?;
            for (k, v) in &r.metrics {
                println!("{k} {v:.6}");
            }
        }
        Cmd::EvalOtb { paths, csv_dir, one_based } => {
            let (results, dirs): (Vec<_>, Vec<_>) =
                paths.into_iter().partition(|p| p.extension().is_some_and(|e| e == "json"));
            if results.len() != dirs.len() {
                return Err(Error::Config(format!(
                    "{} results files but {} sequence directories",
                    results.len(),
                    dirs.len()
                )));
            }
            let mut rows = Vec::new();
            for (rp, dir) in results.iter().zip(&dirs) {
                let r = Results::load(rp)?;
                let seq = Sequence::load(dir, one_based)?;
                let boxes = r.rects();
                let p = precision_curve(&boxes, &seq.groundtruth)?;
                let s = success_curve(&boxes, &seq.groundtruth)?;
                let name = file_stem(rp);
                if let Some(d) = &csv_dir {
                    std::fs::create_dir_all(d)?;
                    write_atomic(&d.join(format!("{name}_precision.csv")), p.to_csv("threshold_px").as_bytes())?;
                    write_atomic(&d.join(format!("{name}_success.csv")), s.to_csv("threshold_iou").as_bytes())?;
                }
                rows.push(OtbRow { tracker: name, precision_20: precision_at_20(&p), auc: auc(&s) });
            }
            let n = rows.len() as f64;
            let mean = OtbRow {
                tracker: "mean".into(),
                precision_20: rows.iter().map(|r| r.precision_20).sum::<f64>() / n,
                auc: rows.iter().map(|r| r.auc).sum::<f64>() / n,
            };
            rows.push(mean);
            print!("{}", render_otb_table(&rows));
        }
        Cmd::EvalVot { tracker_config, seq_dirs, repeats, out, one_based, set, backbone: b } => {
            if repeats == 0 {
                return Err(Error::Config("--repeats must be positive".into()));
            }
            let cfg = resolve(Some(&tracker_config), &set)?;
            let seqs = seq_dirs
                .iter()
                .map(|d| Sequence::load(d, one_based))
                .collect::<Result<Vec<_>>>()?;
            let report = runner::vot_suite(&cfg, backbone(&cfg, &b)?, &seqs, repeats)?;
            if let Some(o) = out {
                let mut s = serde_json::to_string_pretty(&report)?;
                s.push('\n');
                write_atomic(&o, s.as_bytes())?;
            }
            print!(
                "{}",
                render_vot_table(&[VotRow { tracker: file_stem(&tracker_config), scores: report.scores }])
            );
        }
        Cmd::Ablate { suite, config_a, config_b, suite_seed, out, backbone: b } => {
            let a = RunConfig::load(&config_a)?;
            let bcfg = RunConfig::load(&config_b)?;
            if a.backbone != bcfg.backbone {
                return Err(Error::Config("both arms must use the same backbone".into()));
            }
            let seqs = load_suite(&suite, suite_seed)?;
            let ab = runner::ablate(&a, &bcfg, backbone(&a, &b)?, &seqs)?;
            if let Some(o) = out {
                let mut s = serde_json::to_string_pretty(&ab)?;
                s.push('\n');
                write_atomic(&o, s.as_bytes())?;
            }
            print!("{}", ab.render(&file_stem(&config_a), &file_stem(&config_b)));
        }
        Cmd::Distill { teacher, teacher_spec, images, out, heldout, report, cfg } => {
            let cfg = cfg.resolve()?;
            let tspec = match teacher_spec {
                Some(p) => load_spec(&p)?,
                None => NetworkSpec::tiny_teacher(),
            };
            let tw = WeightSet::load(&teacher)?;
            let t = Network::new(tspec.clone(), tw.clone())?;
            let mut student = Network::new(surgery(&tspec, STUDENT_INPUT_SIZE)?, tw)?;
            let mut files: Vec<PathBuf> = std::fs::read_dir(&images)
                .map_err(|e| Error::Data(format!("{}: {e}", images.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
                .collect();
            files.sort();
            if files.len() <= heldout {
                return Err(Error::Data(format!(
                    "{} images in {}, need more than the {heldout} held out",
                    files.len(),
                    images.display()
                )));
            }
            let patches = files
                .iter()
                .map(|f| resize_chw(&Image::load_png(f)?.to_tensor(), tspec.input_size))
                .collect::<Result<Vec<Tensor>>>()?;
            let (train, held) = patches.split_at(patches.len() - heldout);
            let rep = distill(&t, &mut student, train, held, &cfg.distill)?;
            student.weights().save(&out)?;
            if let Some(p) = report {
                let mut s = serde_json::to_string_pretty(&rep)?;
                s.push('\n');
                write_atomic(&p, s.as_bytes())?;
            }
            println!(
                "heldout_initial {:.6e} heldout_final {:.6e} reduction {:.4}",
                rep.heldout_initial,
                rep.heldout_final,
                rep.heldout_reduction()
            );
        }
        Cmd::Surgery { spec, out, input, weights, weights_out } => {
            let teacher = load_spec(&spec)?;
            let student = surgery(&teacher, input)?;
            write_atomic(&out, student.to_text().as_bytes())?;
            if let (Some(w), Some(wo)) = (weights, weights_out) {
                let net = Network::new(student, WeightSet::load(&w)?)?;
                net.weights().save(&wo)?;
            }
        }
        Cmd::Rf { spec } => {
            let s = load_spec(&spec)?;
            let sizes = s.layer_sizes(s.input_size)?;
            for (l, size) in s.layers.iter().zip(&sizes) {
                let rf = s.receptive_field(&l.name)?;
                println!("{:<8} rf={} jump={} size@{}={size}", l.name, rf.rf, rf.jump, s.input_size);
            }
            let scored = if s.index_of(SCORE_LAYER).is_ok() { s.clone() } else { s.with_score_layer(1) };
            let rf = scored.receptive_field(SCORE_LAYER)?;
            println!("score rf={} jump={} size@{}={}", rf.rf, rf.jump, s.input_size, rf.size);
        }
        Cmd::Spec { preset } => print!("{}", NetworkSpec::preset(&preset)?.to_text()),
        Cmd::Init { preset, seed, out } => {
            let net = Network::init(NetworkSpec::preset(&preset)?, &mut Rng::new(seed))?;
            net.weights().save(&out)?;
        }
        Cmd::Labelmap { tau, scheme, class, csv, cfg } => {
            let cfg = cfg.resolve()?;
            let scheme = match scheme.as_str() {
                "anchor" => MatchScheme::AnchorMatched(tau),
                "all" => MatchScheme::AllPositions,
                s => return Err(Error::Config(format!("unknown scheme `{s}` (expected anchor or all)"))),
            };
            let class = match class.as_str() {
                "positive" | "pos" => SampleClass::Positive,
                "negative" | "neg" => SampleClass::Negative,
                c => return Err(Error::Config(format!("unknown class `{c}` (expected positive or negative)"))),
            };
            let matched = match_anchors(&cfg.anchors.centered_target(), &cfg.anchors, scheme)?;
            let map = label_map(class, &matched, &cfg.anchors)?;
            print!("{}", map.render_text());
            if let Some(p) = csv {
                write_atomic(&p, map.to_csv().as_bytes())?;
            }
        }
        Cmd::Synth { preset, out, seed } => {
            for s in synthseq::generate_suite(&preset, seed)? {
                s.save(&out.join(&s.name))?;
            }
        }
        Cmd::Config { cfg } => print!("{}", cfg.resolve()?.to_text()),
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_usage() {
        1
    } else if e.is_numeric() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
