//! Subcommand implementations. Each resolves its settings (flags > config
//! file > preset), writes a RunManifest, then delegates to the library.

use crate::config::FileConfig;
use crate::manifest::RunManifest;
use clap::Args;
use mvsense::codec::{decode as codec_decode, encode as codec_encode, CodecConfig, EncodedVideo};
use mvsense::datagen::{
    build_dataset, materialize, read_manifest, DatasetConfig, ManifestRecord, Split,
};
use mvsense::eval::{
    accuracy, cohens_kappa, fuse, kappa_matrix, predict_spatial, predict_temporal,
    recall_difference, write_predictions_csv, ClassScores, Rater,
};
use mvsense::metrics::{
    bench as run_bench, ssim_curve as run_ssim_curve, table7, write_bench_csv, write_cost_csv,
    write_ssim_curve_csv, BenchTask, TABLE7_FRAMES,
};
use mvsense::nn::{
    load_checkpoint, save_checkpoint, train as run_train, transfer_weights, Network,
    NetworkConfig, TrainConfig,
};
use mvsense::pipeline::{
    augment_temporal, collect_p_frames, prepare_spatial_train_input, SpatialInputConfig,
    TemporalInputConfig,
};
use mvsense::sensor::{
    activity_map, extract_mv_fields, selective_decode, write_mv_csv, write_mvf,
    SelectiveDecodeConfig,
};
use mvsense::tensor::Tensor;
use mvsense::video::{write_pgm_bool, write_ppm, VideoSequence};
use mvsense::{svg, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub struct Ctx {
    pub seed: u64,
    pub jobs: usize,
    pub file: FileConfig,
}

impl Ctx {
    fn manifest(&self, subcommand: &str, config: serde_json::Value) -> RunManifest {
        RunManifest::new(subcommand, self.seed, self.jobs, config)
    }
}

// --- shared flag groups and helpers ------------------------------------

#[derive(Args, Debug)]
pub struct CodecFlags {
    /// Frames between I-frames.
    #[arg(long)]
    gop: Option<u16>,
    /// Quantizer step; 1 is lossless.
    #[arg(long)]
    q: Option<u8>,
    /// Motion search range in pixels.
    #[arg(long)]
    s: Option<u8>,
}

impl CodecFlags {
    fn resolve(&self, ctx: &Ctx) -> Result<CodecConfig> {
        let d = CodecConfig::default();
        let cfg = CodecConfig {
            gop_length: ctx.file.resolve(self.gop, "gop", d.gop_length)?,
            q: ctx.file.resolve(self.q, "q", d.q)?,
            s: ctx.file.resolve(self.s, "s", d.s)?,
            intra_sad_threshold: d.intra_sad_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_corpus(dir: &Path) -> Result<Vec<(String, EncodedVideo)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "mvb"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!("no .mvb files in {}", dir.display())));
    }
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            Ok((name, EncodedVideo::read_file(&p)?))
        })
        .collect()
}

fn load_records(dir: &Path, split: Option<Split>) -> Result<Vec<ManifestRecord>> {
    let path = dir.join("manifest.jsonl");
    let records = read_manifest(BufReader::new(File::open(&path)?))?;
    Ok(records
        .into_iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .collect())
}

fn parse_split(s: &str) -> Result<Option<Split>> {
    match s {
        "train" => Ok(Some(Split::Train)),
        "test" => Ok(Some(Split::Test)),
        "all" => Ok(None),
        other => Err(Error::InvalidConfig(format!("unknown split '{other}'"))),
    }
}

fn read_record_video(dir: &Path, r: &ManifestRecord) -> Result<VideoSequence> {
    let mut f = File::open(dir.join(format!("{}.rgb", r.name)))?;
    VideoSequence::read_raw(&mut f, r.spec.width, r.spec.height, 30)
}

// --- gen ----------------------------------------------------------------

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Directory receiving <name>.mvb, <name>.rgb and manifest.jsonl.
    out_dir: PathBuf,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    /// Fraction of each class assigned to the train split.
    #[arg(long)]
    split_ratio: Option<f32>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[command(flatten)]
    codec: CodecFlags,
}

pub fn gen(ctx: &Ctx, a: GenArgs) -> Result<()> {
    let d = DatasetConfig::default();
    let cfg = DatasetConfig {
        n_classes: ctx.file.resolve(a.classes, "classes", d.n_classes)?,
        videos_per_class: ctx.file.resolve(a.per_class, "per_class", d.videos_per_class)?,
        split_ratio: ctx.file.resolve(a.split_ratio, "split_ratio", d.split_ratio)?,
        seed: ctx.seed,
        width: ctx.file.resolve(a.width, "width", d.width)?,
        height: ctx.file.resolve(a.height, "height", d.height)?,
        num_frames: ctx.file.resolve(a.frames, "frames", d.num_frames)?,
    };
    let codec = a.codec.resolve(ctx)?;
    let records = build_dataset(&cfg)?;

    std::fs::create_dir_all(&a.out_dir)?;
    let mut m = ctx.manifest("gen", json!({ "dataset": cfg, "codec": codec }));
    for r in &records {
        m.output(&a.out_dir.join(format!("{}.mvb", r.name)));
    }
    m.output(&a.out_dir.join("manifest.jsonl"));
    m.write(&a.out_dir.join("run-manifest.json"))?;

    materialize(&records, &a.out_dir, &codec)?;
    println!("generated {} videos into {}", records.len(), a.out_dir.display());
    Ok(())
}

// --- encode / decode ----------------------------------------------------

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Raw planar RGB input (frame-major R, G, B planes).
    input: PathBuf,
    /// MVB1 output path.
    output: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long, default_value_t = 30)]
    fps: u8,
    #[command(flatten)]
    codec: CodecFlags,
}

pub fn encode(ctx: &Ctx, a: EncodeArgs) -> Result<()> {
    let codec = a.codec.resolve(ctx)?;
    let mut m = ctx.manifest(
        "encode",
        json!({ "width": a.width, "height": a.height, "fps": a.fps, "codec": codec }),
    );
    m.hash_input(&a.input)?;
    m.output(&a.output);
    m.write(&a.output.with_extension("manifest.json"))?;

    let mut f = File::open(&a.input)?;
    let video = VideoSequence::read_raw(&mut f, a.width, a.height, a.fps)?;
    let enc = codec_encode(&video, &codec)?;
    enc.write_file(&a.output)?;
    println!(
        "encoded {} frames, {} bytes",
        video.frame_count(),
        enc.as_bytes().len()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    /// MVB1 input path.
    input: PathBuf,
    /// Raw planar RGB output path.
    output: PathBuf,
    /// Also write every frame as PPM into this directory.
    #[arg(long)]
    ppm_dir: Option<PathBuf>,
}

pub fn decode(ctx: &Ctx, a: DecodeArgs) -> Result<()> {
    let mut m = ctx.manifest("decode", json!({ "ppm_dir": a.ppm_dir }));
    m.hash_input(&a.input)?;
    m.output(&a.output);
    m.write(&a.output.with_extension("manifest.json"))?;

    let enc = EncodedVideo::read_file(&a.input)?;
    let video = codec_decode(&enc)?;
    let mut out = BufWriter::new(File::create(&a.output)?);
    video.write_raw(&mut out)?;
    out.flush()?;
    if let Some(dir) = &a.ppm_dir {
        std::fs::create_dir_all(dir)?;
        for (i, frame) in video.frames.iter().enumerate() {
            write_ppm(frame, &dir.join(format!("frame_{i:05}.ppm")))?;
        }
    }
    println!("decoded {} frames", video.frame_count());
    Ok(())
}

// --- extract-mv / render / activity -------------------------------------

#[derive(Args, Debug)]
pub struct ExtractMvArgs {
    /// MVB1 input path.
    input: PathBuf,
    /// Binary MVF1 output path.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV dump (frame,row,col,dx,dy).
    #[arg(long)]
    csv: Option<PathBuf>,
}

pub fn extract_mv(ctx: &Ctx, a: ExtractMvArgs) -> Result<()> {
    let mut m = ctx.manifest("extract-mv", json!({ "csv": a.csv }));
    m.hash_input(&a.input)?;
    m.output(&a.out);
    m.write(&a.out.with_extension("manifest.json"))?;

    let enc = EncodedVideo::read_file(&a.input)?;
    let (fields, counter) = extract_mv_fields(&enc)?;
    let mut out = BufWriter::new(File::create(&a.out)?);
    write_mvf(&fields, &mut out)?;
    out.flush()?;
    if let Some(csv) = &a.csv {
        let mut w = BufWriter::new(File::create(csv)?);
        write_mv_csv(&fields, &mut w)?;
        w.flush()?;
    }
    println!(
        "{} P-frame fields; residual bytes read {}, skipped {}",
        fields.len(),
        counter.residual_bytes_read,
        counter.residual_bytes_skipped
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// MVB1 input path.
    input: PathBuf,
    /// Directory receiving rendered PPM frames.
    out_dir: PathBuf,
    /// Full-decode interval in frames.
    #[arg(long, default_value_t = 10)]
    x: u32,
    /// Render interval in frames.
    #[arg(long, default_value_t = 1)]
    r: u32,
    /// Activity threshold on MV components.
    #[arg(long, default_value_t = 0.0)]
    a: f32,
}

pub fn render(ctx: &Ctx, args: RenderArgs) -> Result<()> {
    let cfg = SelectiveDecodeConfig { x: args.x, r: args.r, a: args.a };
    cfg.validate()?;
    std::fs::create_dir_all(&args.out_dir)?;
    let mut m = ctx.manifest("render", json!({ "x": cfg.x, "r": cfg.r, "a": cfg.a }));
    m.hash_input(&args.input)?;
    m.output(&args.out_dir);
    m.write(&args.out_dir.join("run-manifest.json"))?;

    let enc = EncodedVideo::read_file(&args.input)?;
    let (frames, counter) = selective_decode(&enc, &cfg)?;
    for (idx, frame) in &frames {
        write_ppm(frame, &args.out_dir.join(format!("frame_{idx:05}.ppm")))?;
    }
    println!(
        "rendered {} frames; residual bytes read {}, skipped {}",
        frames.len(),
        counter.residual_bytes_read,
        counter.residual_bytes_skipped
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ActivityArgs {
    /// MVB1 input path.
    input: PathBuf,
    /// Directory receiving per-P-frame activity PGMs.
    out_dir: PathBuf,
    /// Activity threshold on MV components.
    #[arg(long, default_value_t = 0.0)]
    a: f32,
}

pub fn activity(ctx: &Ctx, args: ActivityArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)?;
    let mut m = ctx.manifest("activity", json!({ "a": args.a }));
    m.hash_input(&args.input)?;
    m.output(&args.out_dir);
    m.write(&args.out_dir.join("run-manifest.json"))?;

    let enc = EncodedVideo::read_file(&args.input)?;
    let (fields, _) = extract_mv_fields(&enc)?;
    let mut active_total = 0usize;
    let mut mb_total = 0usize;
    for field in &fields {
        let map = activity_map(field, args.a);
        active_total += map.active.iter().filter(|&&b| b).count();
        mb_total += map.active.len();
        write_pgm_bool(
            &map.active,
            map.cols,
            map.rows,
            &args.out_dir.join(format!("activity_{:05}.pgm", field.frame_index)),
        )?;
    }
    println!(
        "{} fields; {active_total}/{mb_total} macroblocks active at A={}",
        fields.len(),
        args.a
    );
    Ok(())
}

// --- bench / ssim-curve -------------------------------------------------

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Directory of .mvb files.
    corpus: PathBuf,
    /// all | extract-mv | full-decode | selective-decode
    #[arg(long, default_value = "all")]
    task: String,
    #[arg(long, default_value_t = 10)]
    x: u32,
    #[arg(long, default_value_t = 1)]
    r: u32,
    #[arg(long, default_value_t = 0.0)]
    a: f32,
    /// Timing repetitions; the median is reported.
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

pub fn bench(ctx: &Ctx, args: BenchArgs) -> Result<()> {
    let sel = SelectiveDecodeConfig { x: args.x, r: args.r, a: args.a };
    let tasks: Vec<BenchTask> = match args.task.as_str() {
        "all" => vec![
            BenchTask::ExtractMv,
            BenchTask::SelectiveDecode(sel),
            BenchTask::FullDecode,
        ],
        "extract-mv" => vec![BenchTask::ExtractMv],
        "full-decode" => vec![BenchTask::FullDecode],
        "selective-decode" => vec![BenchTask::SelectiveDecode(sel)],
        other => return Err(Error::InvalidConfig(format!("unknown bench task '{other}'"))),
    };
    let mut m = ctx.manifest(
        "bench",
        json!({ "task": args.task, "x": args.x, "r": args.r, "a": args.a, "reps": args.reps }),
    );
    m.output(&args.out);
    m.write(&args.out.with_extension("manifest.json"))?;

    let corpus = load_corpus(&args.corpus)?;
    let encoded: Vec<EncodedVideo> = corpus.into_iter().map(|(_, e)| e).collect();
    let mut results = Vec::new();
    for task in &tasks {
        let r = run_bench(&encoded, task, args.reps)?;
        println!("{:>16}: {:>10.1} fps over {} frames", task.name(), r.fps, r.frames);
        results.push(r);
    }
    let mut w = BufWriter::new(File::create(&args.out)?);
    write_bench_csv(&results, &mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct SsimCurveArgs {
    /// Directory of .mvb files.
    corpus: PathBuf,
    /// Comma-separated decode intervals to sweep.
    #[arg(long, default_value = "1,2,5,10,25,50,100")]
    xs: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional SVG line plot of the curve.
    #[arg(long)]
    svg: Option<PathBuf>,
}

pub fn ssim_curve(ctx: &Ctx, args: SsimCurveArgs) -> Result<()> {
    let xs: Vec<u32> = args
        .xs
        .split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|e| Error::InvalidConfig(format!("bad X value '{t}': {e}")))
        })
        .collect::<Result<_>>()?;
    let mut m = ctx.manifest("ssim-curve", json!({ "xs": xs, "svg": args.svg }));
    m.output(&args.out);
    m.write(&args.out.with_extension("manifest.json"))?;

    let corpus = load_corpus(&args.corpus)?;
    let encoded: Vec<EncodedVideo> = corpus.into_iter().map(|(_, e)| e).collect();
    let curve = run_ssim_curve(&encoded, &xs)?;
    let mut w = BufWriter::new(File::create(&args.out)?);
    write_ssim_curve_csv(&curve, &mut w)?;
    w.flush()?;
    for (x, s) in &curve {
        println!("X={x:>4}: mean SSIM {s:.6}");
    }
    if let Some(svg_path) = &args.svg {
        let points: Vec<(f64, f64)> = curve.iter().map(|&(x, s)| (x as f64, s)).collect();
        let plot = svg::line_plot(
            "Mean SSIM vs decode interval",
            "X",
            "SSIM",
            &[("ssim".to_string(), points)],
        );
        std::fs::write(svg_path, plot)?;
    }
    Ok(())
}

// --- train / eval / fuse-eval -------------------------------------------

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Corpus directory with manifest.jsonl.
    corpus: PathBuf,
    /// temporal | spatial
    #[arg(long)]
    stream: String,
    /// Network preset; defaults to the desk-scale preset of the stream.
    #[arg(long)]
    preset: Option<String>,
    /// Class count; inferred from the manifest when omitted.
    #[arg(long)]
    classes: Option<usize>,
    /// Temporal window length T (P-frames per volume).
    #[arg(long)]
    t: Option<usize>,
    /// Spatial network input side N_S.
    #[arg(long)]
    n_s: Option<usize>,
    /// Short side of the resized frame for the spatial stream.
    #[arg(long)]
    resize_short: Option<usize>,
    /// Augmented samples drawn per training video.
    #[arg(long)]
    augment: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Iterations between tenfold learning-rate drops.
    #[arg(long)]
    lr_step: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Warm-start from a compatible checkpoint (shape-matching tensors copy).
    #[arg(long)]
    init_from: Option<PathBuf>,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
}

pub fn train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let records = load_records(&a.corpus, Some(Split::Train))?;
    let inferred = records.iter().map(|r| r.class_id + 1).max().unwrap_or(0);
    let classes = ctx.file.resolve(a.classes, "classes", inferred)?;
    let augment = ctx.file.resolve(a.augment, "augment", 4)?;
    let train_cfg = TrainConfig {
        batch_size: ctx.file.resolve(a.batch_size, "batch_size", 16)?,
        lr_initial: ctx.file.resolve(a.lr, "lr", 1e-2)?,
        lr_step_interval: ctx.file.resolve(a.lr_step, "lr_step", 200)?,
        total_iters: ctx.file.resolve(a.iters, "iters", 300)?,
        seed: ctx.seed,
        ..TrainConfig::default()
    };
    let weight_decay = ctx.file.resolve(a.weight_decay, "weight_decay", 1e-4)?;

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let (mut config, dataset): (NetworkConfig, Vec<(Tensor, usize)>) = match a.stream.as_str() {
        "temporal" => {
            let preset = ctx
                .file
                .resolve(a.preset.clone(), "preset", "temporal3d-desk".to_string())?;
            let mut config = NetworkConfig::preset(&preset, classes)?;
            let mut input_cfg = TemporalInputConfig::desk();
            input_cfg.t = ctx.file.resolve(a.t, "t", input_cfg.t)?;
            config.input_shape[3] = input_cfg.t;
            let mut dataset = Vec::new();
            for r in &records {
                let enc = EncodedVideo::read_file(&a.corpus.join(format!("{}.mvb", r.name)))?;
                let (all, _) = extract_mv_fields(&enc)?;
                if all.is_empty() {
                    return Err(Error::NoTemporalData);
                }
                for _ in 0..augment {
                    let start = rng.gen_range(0..all.len());
                    let fields = collect_p_frames(&enc, start, input_cfg.t)?;
                    dataset.push((augment_temporal(&fields, &input_cfg, &mut rng)?, r.class_id));
                }
            }
            (config, dataset)
        }
        "spatial" => {
            let mut input_cfg = SpatialInputConfig::default();
            input_cfg.n_s = ctx.file.resolve(a.n_s, "n_s", 64)?;
            input_cfg.resize_short_side =
                ctx.file.resolve(a.resize_short, "resize_short", 72)?;
            let config = NetworkConfig::spatial2d_desk(input_cfg.n_s, classes);
            let mut dataset = Vec::new();
            for r in &records {
                let video = read_record_video(&a.corpus, r)?;
                for _ in 0..augment {
                    let frame = &video.frames[rng.gen_range(0..video.frames.len())];
                    dataset.push((
                        prepare_spatial_train_input(frame, &input_cfg, &mut rng)?,
                        r.class_id,
                    ));
                }
            }
            (config, dataset)
        }
        other => return Err(Error::InvalidConfig(format!("unknown stream '{other}'"))),
    };
    config.weight_decay = weight_decay;

    let mut m = ctx.manifest(
        "train",
        json!({
            "stream": a.stream,
            "network": config,
            "train": train_cfg,
            "augment": augment,
            "samples": dataset.len(),
            "init_from": a.init_from,
        }),
    );
    m.output(&a.out);
    m.write(&a.out.with_extension("manifest.json"))?;

    let mut net = Network::build(config, &mut rng)?;
    if let Some(init) = &a.init_from {
        let src = load_checkpoint(&mut BufReader::new(File::open(init)?))?;
        let copied = transfer_weights(&mut net, &src);
        println!("warm start: {copied} tensors copied from {}", init.display());
    }
    let report = run_train(&mut net, &dataset, &train_cfg)?;
    let mut w = BufWriter::new(File::create(&a.out)?);
    save_checkpoint(&net, &mut w)?;
    w.flush()?;
    let last = report.losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} iters over {} samples; final batch loss {last:.4}",
        train_cfg.total_iters,
        dataset.len()
    );
    Ok(())
}

fn eval_stream(
    corpus: &Path,
    records: &[ManifestRecord],
    net: &Network,
    stream: &str,
    t: usize,
    n_s: usize,
    resize_short: usize,
    fast: bool,
) -> Result<Vec<(ClassScores, usize)>> {
    let mut rows = Vec::new();
    match stream {
        "temporal" => {
            let mut cfg = TemporalInputConfig::desk();
            cfg.t = t;
            for r in records {
                let enc = EncodedVideo::read_file(&corpus.join(format!("{}.mvb", r.name)))?;
                rows.push((predict_temporal(net, &enc, &cfg, &r.name, fast)?, r.class_id));
            }
        }
        "spatial" => {
            let cfg = SpatialInputConfig {
                n_s,
                resize_short_side: resize_short,
                ..Default::default()
            };
            for r in records {
                let video = read_record_video(corpus, r)?;
                rows.push((predict_spatial(net, &video.frames, &cfg, &r.name)?, r.class_id));
            }
        }
        other => return Err(Error::InvalidConfig(format!("unknown stream '{other}'"))),
    }
    Ok(rows)
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Corpus directory with manifest.jsonl.
    corpus: PathBuf,
    /// Checkpoint produced by `train`.
    #[arg(long)]
    ckpt: PathBuf,
    /// temporal | spatial
    #[arg(long)]
    stream: String,
    /// train | test | all
    #[arg(long, default_value = "test")]
    split: String,
    /// Temporal: single center crop instead of the 12-input protocol.
    #[arg(long)]
    fast: bool,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    n_s: Option<usize>,
    #[arg(long)]
    resize_short: Option<usize>,
    /// Predictions CSV output path.
    #[arg(long)]
    out: PathBuf,
}

pub fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let t = ctx.file.resolve(a.t, "t", 32)?;
    let n_s = ctx.file.resolve(a.n_s, "n_s", 64)?;
    let resize_short = ctx.file.resolve(a.resize_short, "resize_short", 72)?;
    let mut m = ctx.manifest(
        "eval",
        json!({ "stream": a.stream, "split": a.split, "fast": a.fast, "t": t, "n_s": n_s }),
    );
    m.hash_input(&a.ckpt)?;
    m.output(&a.out);
    m.write(&a.out.with_extension("manifest.json"))?;

    let records = load_records(&a.corpus, parse_split(&a.split)?)?;
    let net = load_checkpoint(&mut BufReader::new(File::open(&a.ckpt)?))?;
    let rows = eval_stream(&a.corpus, &records, &net, &a.stream, t, n_s, resize_short, a.fast)?;
    let mut w = BufWriter::new(File::create(&a.out)?);
    write_predictions_csv(&rows, &mut w)?;
    w.flush()?;
    let predicted: Vec<usize> = rows.iter().map(|(s, _)| s.predicted()).collect();
    let truth: Vec<usize> = rows.iter().map(|&(_, t)| t).collect();
    println!(
        "{} stream accuracy on {} videos: {:.4}",
        a.stream,
        rows.len(),
        accuracy(&predicted, &truth)?
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct FuseEvalArgs {
    /// Corpus directory with manifest.jsonl.
    corpus: PathBuf,
    /// Temporal-stream checkpoint.
    #[arg(long)]
    temporal: PathBuf,
    /// Spatial-stream checkpoint.
    #[arg(long)]
    spatial: PathBuf,
    /// train | test | all
    #[arg(long, default_value = "test")]
    split: String,
    /// Single center crop for the temporal stream.
    #[arg(long)]
    fast: bool,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    n_s: Option<usize>,
    #[arg(long)]
    resize_short: Option<usize>,
    /// Directory receiving predictions.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn fuse_eval(ctx: &Ctx, a: FuseEvalArgs) -> Result<()> {
    let t = ctx.file.resolve(a.t, "t", 32)?;
    let n_s = ctx.file.resolve(a.n_s, "n_s", 64)?;
    let resize_short = ctx.file.resolve(a.resize_short, "resize_short", 72)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let mut m = ctx.manifest(
        "fuse-eval",
        json!({ "split": a.split, "fast": a.fast, "t": t, "n_s": n_s }),
    );
    m.hash_input(&a.temporal)?;
    m.hash_input(&a.spatial)?;
    let csv_path = a.out_dir.join("predictions.csv");
    m.output(&csv_path);
    m.write(&a.out_dir.join("run-manifest.json"))?;

    let records = load_records(&a.corpus, parse_split(&a.split)?)?;
    let t_net = load_checkpoint(&mut BufReader::new(File::open(&a.temporal)?))?;
    let s_net = load_checkpoint(&mut BufReader::new(File::open(&a.spatial)?))?;
    let t_rows =
        eval_stream(&a.corpus, &records, &t_net, "temporal", t, n_s, resize_short, a.fast)?;
    let s_rows =
        eval_stream(&a.corpus, &records, &s_net, "spatial", t, n_s, resize_short, a.fast)?;

    let n_classes = t_rows[0].0.scores.len();
    let mut rows = Vec::new();
    for ((ts, truth), (ss, _)) in t_rows.iter().zip(&s_rows) {
        let fused = fuse(ts, ss)?;
        let mut one_hot = vec![0.0; n_classes];
        one_hot[*truth] = 1.0;
        rows.push((ts.clone(), *truth));
        rows.push((ss.clone(), *truth));
        rows.push((fused, *truth));
        rows.push((
            ClassScores {
                video_id: ts.video_id.clone(),
                rater: Rater::GroundTruth,
                scores: one_hot,
                inputs_used: 0,
            },
            *truth,
        ));
    }
    let mut w = BufWriter::new(File::create(&csv_path)?);
    write_predictions_csv(&rows, &mut w)?;
    w.flush()?;

    let truth: Vec<usize> = t_rows.iter().map(|&(_, t)| t).collect();
    for rater in [Rater::Temporal, Rater::Spatial, Rater::Fused] {
        let predicted: Vec<usize> = rows
            .iter()
            .filter(|(s, _)| s.rater == rater)
            .map(|(s, _)| s.predicted())
            .collect();
        println!(
            "{:>9}: accuracy {:.4}, kappa vs truth {:.4}",
            rater.name(),
            accuracy(&predicted, &truth)?,
            cohens_kappa(&predicted, &truth)?
        );
    }
    Ok(())
}

// --- cost ---------------------------------------------------------------

#[derive(Args, Debug)]
pub struct CostArgs {
    /// Only `table7` is built in.
    #[arg(long, default_value = "table7")]
    preset: String,
    /// Total frames to price; defaults to the published corpus size.
    #[arg(long)]
    frames: Option<f64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

pub fn cost(ctx: &Ctx, a: CostArgs) -> Result<()> {
    if a.preset != "table7" {
        return Err(Error::InvalidConfig(format!("unknown cost preset '{}'", a.preset)));
    }
    let frames = ctx.file.resolve(a.frames, "frames", TABLE7_FRAMES)?;
    let mut m = ctx.manifest("cost", json!({ "preset": a.preset, "frames": frames }));
    m.output(&a.out);
    m.write(&a.out.with_extension("manifest.json"))?;

    let rows = if frames == TABLE7_FRAMES {
        table7()?
    } else {
        mvsense::metrics::table7_inputs()
            .into_iter()
            .map(|(name, mut inputs)| {
                inputs.frames = frames;
                mvsense::metrics::cost_row(name, &inputs)
            })
            .collect::<Result<_>>()?
    };
    let mut w = BufWriter::new(File::create(&a.out)?);
    write_cost_csv(&rows, &mut w)?;
    w.flush()?;
    for r in &rows {
        println!(
            "{:<16} flow {:.3}  decode {:.3}  t {:.3}  s {:.3}  total {:.3}",
            r.framework, r.c_flow, r.c_decode, r.c_t, r.c_s, r.c_tot
        );
    }
    Ok(())
}

// --- report -------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// predictions.csv produced by `eval` or `fuse-eval`.
    predictions: PathBuf,
    /// Directory receiving the kappa and recall-difference CSVs and SVGs.
    out_dir: PathBuf,
}

pub fn report(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out_dir)?;
    let mut m = ctx.manifest("report", json!({}));
    m.hash_input(&a.predictions)?;
    for name in ["kappa.csv", "kappa.svg", "recall_diff.csv", "recall_diff.svg"] {
        m.output(&a.out_dir.join(name));
    }
    m.write(&a.out_dir.join("run-manifest.json"))?;

    // rater -> ordered (video_id, predicted); truth keyed per video.
    let mut by_rater: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
    let mut truth_by_video: BTreeMap<String, usize> = BTreeMap::new();
    let file = BufReader::new(File::open(&a.predictions)?);
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if i == 0 {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() < 4 {
            return Err(Error::Parse { offset: i, msg: "short predictions row".into() });
        }
        let bad = |what: &str| Error::Parse {
            offset: i,
            msg: format!("bad {what} in predictions row"),
        };
        let predicted: usize = parts[2].parse().map_err(|_| bad("predicted"))?;
        let truth: usize = parts[3].parse().map_err(|_| bad("truth"))?;
        by_rater.entry(parts[1].to_string()).or_default().push((parts[0].to_string(), predicted));
        truth_by_video.insert(parts[0].to_string(), truth);
    }
    if by_rater.is_empty() {
        return Err(Error::InvalidInput("no prediction rows".into()));
    }

    // Align every rater on the first rater's video order; the ground truth
    // joins as its own rater if not present as rows.
    let order: Vec<String> =
        by_rater.values().next().unwrap().iter().map(|(v, _)| v.clone()).collect();
    let truth: Vec<usize> = order
        .iter()
        .map(|v| {
            truth_by_video
                .get(v)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("video {v} has no truth label")))
        })
        .collect::<Result<_>>()?;
    let mut labels: Vec<String> = by_rater.keys().cloned().collect();
    let mut vectors: Vec<Vec<usize>> = Vec::new();
    for label in &labels {
        let rows = &by_rater[label];
        let map: BTreeMap<&str, usize> =
            rows.iter().map(|(v, p)| (v.as_str(), *p)).collect();
        if map.len() != order.len() {
            return Err(Error::DimensionMismatch(format!(
                "rater {label} covers {} of {} videos",
                map.len(),
                order.len()
            )));
        }
        vectors.push(order.iter().map(|v| map[v.as_str()]).collect());
    }
    if !labels.iter().any(|l| l == "ground-truth") {
        labels.push("ground-truth".to_string());
        vectors.push(truth.clone());
    }

    let matrix = kappa_matrix(&vectors)?;
    let mut w = BufWriter::new(File::create(a.out_dir.join("kappa.csv"))?);
    writeln!(w, "rater,{}", labels.join(","))?;
    for (label, row) in labels.iter().zip(&matrix) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        writeln!(w, "{label},{}", cells.join(","))?;
    }
    w.flush()?;
    std::fs::write(
        a.out_dir.join("kappa.svg"),
        svg::heatmap("Cohen's kappa between raters", &labels, &matrix),
    )?;

    let temporal = labels.iter().position(|l| l == "temporal");
    let spatial = labels.iter().position(|l| l == "spatial");
    if let (Some(ti), Some(si)) = (temporal, spatial) {
        let n_classes = truth.iter().max().unwrap() + 1;
        let diff = recall_difference(&vectors[ti], &vectors[si], &truth, n_classes)?;
        let mut w = BufWriter::new(File::create(a.out_dir.join("recall_diff.csv"))?);
        writeln!(w, "class,temporal_minus_spatial")?;
        for (c, d) in diff.iter().enumerate() {
            writeln!(w, "{c},{d:.4}")?;
        }
        w.flush()?;
        let class_labels: Vec<String> = (0..n_classes).map(|c| format!("class {c}")).collect();
        std::fs::write(
            a.out_dir.join("recall_diff.svg"),
            svg::bar_chart("Per-class recall: temporal minus spatial", &class_labels, &diff),
        )?;
    } else {
        println!("temporal or spatial rater missing; recall-difference figure skipped");
    }
    println!("report written to {}", a.out_dir.display());
    Ok(())
}
