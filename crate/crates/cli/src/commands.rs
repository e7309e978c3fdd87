use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use fecg::analysis::{
    compare_hrv, engzee_detect_with, eval_extraction, hrv_report, match_peaks_in, HrvReport, PeakList,
    SegmentMetrics, DEFAULT_TOLERANCE_MS,
};
use fecg::cyclegan::{checkpoint, CycleGanModel, PairedSegments};
use fecg::io::{
    atomic_write, emit_plot, load_config, make_folds, peaks_from_text, peaks_to_text, read_batch, read_record,
    save_config, write_batch, write_record, FoldUnit, RecordFile, RecordFormat, RunConfig, DEFAULT_FOLDS,
};
use fecg::nn::count_params;
use fecg::preprocess::{preprocess_fecg, preprocess_mecg};
use fecg::signal::{SegmentBatch, Signal};
use fecg::synth::{gen_coincidence_stress, gen_recording};

use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Fetal ECG extraction from four-channel abdominal recordings.
#[derive(Debug, Parser)]
#[command(name = "fecg", version)]
pub struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML run configuration; missing sections use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if needed.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Bin,
    Csv,
}

impl From<Format> for RecordFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Bin => RecordFormat::Bin,
            Format::Csv => RecordFormat::Csv,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic abdominal recording with its fetal ground truth.
    ///
    /// Writes abdominal.<ext> (4 channels, fetal R peaks as annotations),
    /// fetal.<ext>, fetal_peaks.txt, maternal_peaks.txt and synth.toml.
    Synth {
        #[arg(long)]
        duration: Option<f64>,
        /// Sample rate in Hz.
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long, value_enum, default_value = "bin")]
        format: Format,
        /// Phase-lock fetal beats onto maternal ones.
        #[arg(long)]
        stress: bool,
    },
    /// Condition and window records into segment batches.
    ///
    /// Writes mecg.seg, fecg.seg (when fetal records are given) and
    /// groups.txt, the source record of every segment.
    Preprocess {
        /// Four-channel abdominal record; repeatable.
        #[arg(long, required = true)]
        mecg: Vec<PathBuf>,
        /// Fetal reference record paired with each --mecg, in order.
        #[arg(long)]
        fecg: Vec<PathBuf>,
    },
    /// Train the CycleGAN on paired segment batches.
    ///
    /// Writes model.ckpt (best validation epoch), epochs.csv and
    /// fold.txt.
    Train {
        #[arg(long, required_unless_present = "dry_run")]
        mecg: Option<PathBuf>,
        #[arg(long, required_unless_present = "dry_run")]
        fecg: Option<PathBuf>,
        /// groups.txt from `preprocess`; folds then split whole records
        /// when there are at least five.
        #[arg(long)]
        groups: Option<PathBuf>,
        /// Held-out fold, 1 to 5.
        #[arg(long, default_value_t = 1)]
        fold: usize,
        #[arg(long)]
        epochs: Option<usize>,
        /// Print parameter counts and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run G1 over abdominal segments (.seg) or a record (.bin/.csv).
    ///
    /// Writes <name>.seg, and for record input also <name>.<ext>, the
    /// segments stitched back into one channel.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mecg: PathBuf,
        #[arg(long, default_value = "extracted")]
        name: String,
    },
    /// Score extracted segments against ground truth; writes eval.csv.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Abdominal segments, the reference for the spectral correlation.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Detect R peaks; writes peaks.txt and scores against annotations.
    Qrs {
        #[arg(long)]
        record: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        /// Reference peaks; defaults to the record's own annotations.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE_MS)]
        tolerance_ms: f64,
    },
    /// HRV statistics of a peak list (peaks.txt or an annotated record).
    Hrv {
        #[arg(long)]
        peaks: PathBuf,
        /// Reference peaks; adds percent errors per metric.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// SVG with ground truth on top and the extracted signal below.
    Plot {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        extracted: PathBuf,
        /// Segment index for .seg inputs.
        #[arg(long, default_value_t = 0)]
        segment: usize,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        #[arg(long, default_value = "plot.svg")]
        file: String,
    },
}

fn existing(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingFile(path.to_path_buf()))
    }
}

fn load_run_config(g: &Global) -> Result<RunConfig> {
    let mut cfg: RunConfig = match &g.config {
        Some(p) => load_config(existing(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.synth.seed = s;
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn is_seg(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "seg")
}

fn record_as_batch(r: &RecordFile) -> Result<SegmentBatch> {
    let c = r.channels.len();
    let data = r.channels.iter().flatten().map(|&v| v as f64).collect();
    Ok(SegmentBatch::new(data, (1, r.len(), c), r.sample_rate_hz, false, vec![0], vec![false; c])?)
}

fn read_batch_or_record(path: &Path) -> Result<SegmentBatch> {
    let path = existing(path)?;
    if is_seg(path) {
        Ok(read_batch(path)?)
    } else {
        record_as_batch(&read_record(path)?)
    }
}

/// Maps peaks onto a timeline at `rate` whose first sample lies `origin`
/// samples in, dropping peaks that fall outside `len` samples.
fn rescale_peaks(p: &PeakList, rate: f64, origin: usize, len: usize) -> Result<PeakList> {
    let ratio = rate / p.sample_rate_hz();
    let idx = p
        .indices()
        .iter()
        .map(|&i| (i as f64 * ratio).round() as i64 - origin as i64)
        .filter(|&i| i >= 0 && (i as usize) < len)
        .map(|i| i as usize)
        .collect();
    Ok(PeakList::new(idx, rate)?)
}

fn read_peaks(path: &Path) -> Result<PeakList> {
    let path = existing(path)?;
    if RecordFormat::from_path(path).is_ok() {
        return read_record(path)?
            .peaks()?
            .ok_or_else(|| CliError::Core(fecg::error::Error::InvalidArgument(format!("{} has no annotations", path.display()))));
    }
    Ok(peaks_from_text(&fs::read_to_string(path)?)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    Ok(atomic_write(path, text.as_bytes())?)
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let cfg = load_run_config(g)?;
    fs::create_dir_all(&g.out)?;
    let out = |name: &str| g.out.join(name);
    match cli.command {
        Command::Synth {
            duration,
            rate,
            format,
            stress,
        } => {
            let mut spec = cfg.synth.clone();
            if let Some(d) = duration {
                spec.duration_s = d;
            }
            if let Some(r) = rate {
                spec.rate_hz = r;
            }
            let rec = if stress { gen_coincidence_stress(&spec)? } else { gen_recording(&spec)? };
            let ext = RecordFormat::from(format).extension();
            let abd = RecordFile::from_multi("abdominal", &rec.abdominal, None, Some(&rec.fetal_peaks))?;
            let fetal = RecordFile::from_signal("fetal", &rec.fetal_truth, "fecg", Some(&rec.fetal_peaks))?;
            write_record(&out(&format!("abdominal.{ext}")), &abd)?;
            write_record(&out(&format!("fetal.{ext}")), &fetal)?;
            write_text(&out("fetal_peaks.txt"), &peaks_to_text(&rec.fetal_peaks))?;
            write_text(&out("maternal_peaks.txt"), &peaks_to_text(&rec.maternal_peaks))?;
            save_config(&out("synth.toml"), &rec.spec)?;
            println!("samples={}", rec.abdominal.len());
            println!("fetal_peaks={}", rec.fetal_peaks.len());
            println!("maternal_peaks={}", rec.maternal_peaks.len());
            println!("coincidence={}", rec.coincidence);
        }
        Command::Preprocess { mecg, fecg } => {
            if !fecg.is_empty() && fecg.len() != mecg.len() {
                return Err(CliError::Usage(format!(
                    "{} --mecg records but {} --fecg records",
                    mecg.len(),
                    fecg.len()
                )));
            }
            for p in mecg.iter().chain(&fecg) {
                existing(p)?;
            }
            let pc = &cfg.preprocess;
            let parts = (0..mecg.len())
                .into_par_iter()
                .map(|i| -> Result<(SegmentBatch, Option<SegmentBatch>)> {
                    let xm = preprocess_mecg(&read_record(&mecg[i])?.to_multi()?, pc)?;
                    match fecg.get(i) {
                        None => Ok((xm, None)),
                        Some(fp) => {
                            let xf = preprocess_fecg(&read_record(fp)?.channel_signal(0)?, pc)?;
                            let keep: Vec<usize> = (0..xm.len().min(xf.len())).collect();
                            Ok((xm.select(&keep), Some(xf.select(&keep))))
                        }
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let mut groups = String::new();
            for (i, (xm, _)) in parts.iter().enumerate() {
                for _ in 0..xm.len() {
                    let _ = writeln!(groups, "{i}");
                }
            }
            let m: Vec<SegmentBatch> = parts.iter().map(|(x, _)| x.clone()).collect();
            let m = SegmentBatch::concat(&m)?;
            write_batch(&out("mecg.seg"), &m)?;
            if !fecg.is_empty() {
                let f: Vec<SegmentBatch> = parts.into_iter().filter_map(|(_, f)| f).collect();
                write_batch(&out("fecg.seg"), &SegmentBatch::concat(&f)?)?;
            }
            write_text(&out("groups.txt"), &groups)?;
            let (n, l, c) = m.shape();
            println!("segments={n}\nsegment_len={l}\nchannels={c}");
        }
        Command::Train {
            mecg,
            fecg,
            groups,
            fold,
            epochs,
            dry_run,
        } => {
            let mut tc = cfg.train.clone();
            if let Some(e) = epochs {
                tc.epochs = e;
            }
            cfg.arch.validate()?;
            tc.validate()?;
            let mut model = CycleGanModel::<f32>::new(cfg.arch, tc.seed)?;
            println!("generator_params={}", count_params(&model.g1));
            println!("discriminator_params={}", count_params(&model.d1));
            println!(
                "total_params={}",
                count_params(&model.g1) + count_params(&model.g2) + count_params(&model.d1) + count_params(&model.d2)
            );
            if dry_run {
                return Ok(());
            }
            let (mecg, fecg) = (mecg.expect("required by clap"), fecg.expect("required by clap"));
            let data = PairedSegments::new(read_batch(existing(&mecg)?)?, read_batch(existing(&fecg)?)?)?;
            if !(1..=DEFAULT_FOLDS).contains(&fold) {
                return Err(CliError::Usage(format!("--fold must lie in 1..={DEFAULT_FOLDS}")));
            }
            let owner: Vec<usize> = match &groups {
                Some(p) => fs::read_to_string(existing(p)?)?
                    .lines()
                    .map(|l| l.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| CliError::Core(fecg::error::Error::Malformed { what: "groups file", msg: e.to_string() }))?,
                None => (0..data.len()).collect(),
            };
            if owner.len() != data.len() {
                return Err(CliError::Core(fecg::error::Error::Shape(format!(
                    "groups file lists {} segments, batches hold {}",
                    owner.len(),
                    data.len()
                ))));
            }
            let records = owner.iter().max().map_or(0, |m| m + 1);
            let unit = if groups.is_some() { FoldUnit::choose(records, DEFAULT_FOLDS) } else { FoldUnit::Segment };
            let (items, of): (usize, Box<dyn Fn(usize) -> usize>) = match unit {
                FoldUnit::Record => (records, Box::new(|i| owner[i])),
                FoldUnit::Segment => (data.len(), Box::new(|i| i)),
            };
            let plan = make_folds(items, DEFAULT_FOLDS, tc.seed)?;
            let held: std::collections::HashSet<usize> = plan.test(fold - 1).iter().copied().collect();
            let (val_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| held.contains(&of(i)));
            let history = model.train(
                &data.select(&train_idx),
                &data.select(&val_idx),
                &tc,
                Some(&out("model.ckpt")),
            )?;
            write_text(&out("epochs.csv"), &history.to_csv())?;
            let unit_name = match unit {
                FoldUnit::Record => "record",
                FoldUnit::Segment => "segment",
            };
            write_text(&out("fold.txt"), &format!("unit={unit_name}\n{}", plan.manifest(fold - 1)))?;
            let best = &history.epochs[history.best_epoch - 1];
            println!("train_segments={}\nval_segments={}", train_idx.len(), val_idx.len());
            println!("best_epoch={}\nbest_val_pcc={}", history.best_epoch, best.val_pcc);
        }
        Command::Extract { model, mecg, name } => {
            let model: CycleGanModel<f32> = checkpoint::load(existing(&model)?)?;
            let input = existing(&mecg)?;
            let t0 = Instant::now();
            let (batch, source) = if is_seg(input) {
                (read_batch(input)?, None)
            } else {
                let rec = read_record(input)?;
                let batch = preprocess_mecg(&rec.to_multi()?, &cfg.preprocess)?;
                (batch, Some((RecordFormat::from_path(input)?, rec)))
            };
            let y = model.extract(&batch)?;
            let elapsed = t0.elapsed().as_secs_f64();
            write_batch(&out(&format!("{name}.seg")), &y)?;
            let mut seconds = batch.len() as f64 * batch.segment_len() as f64 / batch.sample_rate_hz();
            if let Some((f, rec)) = source {
                let stitched = y.stitch(0)?;
                // Input annotations carried over onto the stitched time axis.
                let origin = batch.starts().iter().copied().min().unwrap_or(0);
                let peaks = rec
                    .peaks()?
                    .map(|p| rescale_peaks(&p, stitched.sample_rate_hz(), origin, stitched.len()))
                    .transpose()?;
                let r = RecordFile::from_signal(name.clone(), &stitched, "fecg", peaks.as_ref())?;
                write_record(&out(&format!("{name}.{}", f.extension())), &r)?;
                seconds = rec.channels[0].len() as f64 / rec.sample_rate_hz;
            }
            println!("segments={}\nsignal_s={seconds}\nelapsed_s={elapsed}", batch.len());
            println!("signal_s_per_s={}", seconds / elapsed.max(1e-12));
        }
        Command::Eval { truth, pred, input } => {
            let t = read_batch_or_record(&truth)?;
            let p = read_batch_or_record(&pred)?;
            let x = input.as_deref().map(read_batch_or_record).transpose()?;
            let report = eval_extraction(&t, &p, x.as_ref())?;
            let row = |m: &SegmentMetrics| m.values().iter().map(f64::to_string).collect::<Vec<_>>().join(",");
            let mut csv = format!("segment,{}\n", SegmentMetrics::CSV_COLUMNS);
            for (i, m) in report.per_segment.iter().enumerate() {
                let _ = writeln!(csv, "{i},{}", row(m));
            }
            let _ = writeln!(csv, "mean,{}", row(&report.mean));
            write_text(&out("eval.csv"), &csv)?;
            print!("{}", report.to_kv());
        }
        Command::Qrs {
            record,
            channel,
            annotations,
            tolerance_ms,
        } => {
            let rec = read_record(existing(&record)?)?;
            let signal = rec.channel_signal(channel)?;
            let found = engzee_detect_with(&signal, &cfg.engzee)?;
            write_text(&out("peaks.txt"), &peaks_to_text(&found))?;
            println!("peaks={}", found.len());
            let truth = match &annotations {
                Some(p) => Some(rescale_peaks(&read_peaks(p)?, signal.sample_rate_hz(), 0, signal.len())?),
                None => rec.peaks()?,
            };
            if let Some(truth) = truth {
                let s = match_peaks_in(&found, &truth, tolerance_ms, signal.len())?;
                println!("tp={}\nfp={}\nfn={}\ntn={}", s.tp, s.fp, s.fn_, s.tn);
                println!("precision={}\nrecall={}\nf1={}\naccuracy={}", s.precision, s.recall, s.f1, s.accuracy);
            }
        }
        Command::Hrv { peaks, truth } => {
            let report = hrv_report(&read_peaks(&peaks)?)?;
            let mut text = report.to_kv();
            if let Some(t) = truth {
                let errs = compare_hrv(&hrv_report(&read_peaks(&t)?)?, &report);
                for (k, e) in HrvReport::FIELDS.iter().zip(errs) {
                    let _ = writeln!(text, "{k}_error_pct={}", e.map_or("undefined".to_string(), |v| v.to_string()));
                }
            }
            write_text(&out("hrv.txt"), &text)?;
            print!("{text}");
        }
        Command::Plot {
            truth,
            extracted,
            segment,
            channel,
            file,
        } => {
            let pick = |path: &Path| -> Result<Signal> {
                let path = existing(path)?;
                if is_seg(path) {
                    let b = read_batch(path)?;
                    if segment >= b.len() || channel >= b.channel_count() {
                        return Err(CliError::Core(fecg::error::Error::InvalidArgument(format!(
                            "{} has {} segments of {} channels",
                            path.display(),
                            b.len(),
                            b.channel_count()
                        ))));
                    }
                    Ok(Signal::new(b.channel(segment, channel).to_vec(), b.sample_rate_hz())?)
                } else {
                    Ok(read_record(path)?.channel_signal(channel)?)
                }
            };
            let (t, e) = (pick(&truth)?, pick(&extracted)?);
            let path = out(&file);
            emit_plot(&t, &e, &path)?;
            println!("plot={}", path.display());
        }
    }
    Ok(())
}
