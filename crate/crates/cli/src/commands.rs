use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::parser::ValueSource;
use clap::ArgMatches;
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use trn_core::dataio::{
    generate, load_dataset, load_video_streams, write_dataset, ClassMap, GroundTruth, Manifest,
    ManifestVideo, Split, StreamFile, SyntheticSpec,
};
use trn_core::eval::{
    render_report, score_dump, DumpHeader, EvalOptions, PredictionDump, ReportRow, REFERENCE_ROWS,
};
use trn_core::model::{trn_forward, FusionVariant, Stream, StreamDims};
use trn_core::numeric::grad_check;
use trn_core::training::{
    read_checkpoint, sequence_loss, sequence_loss_and_gradient, train_with, write_checkpoint,
    LossWeights,
};
use trn_core::{
    Checkpoint, ChunkInput, DetectionOutput, OnlineDetector, TrainConfig, TrnConfig, TrnParams,
    TrnState,
};

use crate::args::{EvalArgs, GradcheckArgs, ReportArgs, StreamArgs, SynthArgs, TrainArgs};

/// Frame rate of the videos behind the published tables.
const REFERENCE_FPS: f64 = 30.0;

fn given(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config serializes")
}

/// Copies each listed flag into `$target.$field` when it was given on the command line.
macro_rules! apply_flags {
    ($m:expr, $args:expr, $target:expr, { $($flag:ident => $field:ident),* $(,)? }) => {
        $(
            if given($m, stringify!($flag)) {
                $target.$field = $args.$flag.clone();
            }
        )*
    };
}

pub fn synth(a: SynthArgs, m: &ArgMatches) -> Result<ExitCode> {
    let mut spec: SyntheticSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => SyntheticSpec::default(),
    };
    apply_flags!(m, a, spec, {
        seed => seed,
        num_actions => num_actions,
        appearance_dim => appearance_dim,
        motion_dim => motion_dim,
        pose => pose,
        sigma_ratio => sigma_ratio,
        mean_segment_len => mean_segment_len,
        background_prior => background_prior,
        train_videos => train_videos,
        test_videos => test_videos,
        video_len => video_len,
        chunk_size => chunk_size,
        fps => fps,
    });
    info!("effective spec: {}", to_json(&spec));
    let ds = generate(&spec)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let manifest = write_dataset(&ds, &a.out)?;
    info!(
        "wrote {} videos ({} classes) to {}",
        ds.videos.len(),
        ds.classmap.len(),
        manifest.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub fusion: FusionVariant,
    pub hidden_size: usize,
    /// Stream fed to ONE_STREAM models.
    pub one_stream: Stream,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            fusion: FusionVariant::TwoStream,
            hidden_size: TrnConfig::new(FusionVariant::TwoStream, StreamDims::default())
                .hidden_size,
            one_stream: Stream::Appearance,
        }
    }
}

impl ModelSection {
    fn streams(&self) -> Vec<Stream> {
        match self.fusion {
            FusionVariant::OneStream => vec![self.one_stream],
            FusionVariant::TwoStream => vec![Stream::Appearance, Stream::Motion],
            FusionVariant::FusedTwoStream => Stream::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    model: ModelSection,
    train: TrainConfig,
}

pub fn train(a: TrainArgs, m: &ArgMatches) -> Result<ExitCode> {
    let mut run: RunConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    apply_flags!(m, a, run.train, {
        epochs => epochs,
        seed => seed,
        lr => learning_rate,
        weight_decay => weight_decay,
        batch_size => batch_size,
        seq_len => seq_len,
        decoder_steps => decoder_steps,
    });
    apply_flags!(m, a, run.model, {
        hidden_size => hidden_size,
        fusion => fusion,
        one_stream => one_stream,
    });
    run.train.validate()?;

    let manifest = Manifest::read(&a.manifest)?;
    let (chunk_size, fps) = manifest.timing()?;
    let mut streams = StreamDims::default();
    for s in run.model.streams() {
        let dim = manifest.stream_dim(s)?.ok_or_else(|| {
            anyhow!(
                "{} needs the {s} stream, which the manifest lacks",
                run.model.fusion
            )
        })?;
        match s {
            Stream::Appearance => streams.appearance = Some(dim),
            Stream::Motion => streams.motion = Some(dim),
            Stream::Pose => streams.pose = Some(dim),
        }
    }
    let mut model = TrnConfig::new(run.model.fusion, streams);
    model.hidden_size = run.model.hidden_size;
    model.decoder_steps = run.train.decoder_steps;
    model.seq_len = run.train.seq_len;
    model.chunk_size = chunk_size;
    model.fps = fps;

    let ds = load_dataset(&a.manifest, &model.required_streams())?;
    model.num_actions = ds.classmap.num_actions();
    model.validate()?;
    info!("effective config: {}", to_json(&run));
    info!("model: {}", to_json(&model));

    let train_set = ds.labeled(Split::Train)?;
    let held_out = ds.labeled(Split::Test)?;
    info!(
        "{} training videos, {} held-out videos",
        train_set.len(),
        held_out.len()
    );

    let metrics_path = a.metrics.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".metrics.jsonl");
        PathBuf::from(p)
    });
    let mut log = BufWriter::new(
        File::create(&metrics_path)
            .with_context(|| format!("creating {}", metrics_path.display()))?,
    );
    let mut write_err = None;
    let outcome = train_with(&train_set, &held_out, &model, &run.train, |em| {
        let line = to_json(em);
        match writeln!(log, "{line}").and_then(|_| log.flush()) {
            Ok(()) => ControlFlow::Continue(()),
            Err(e) => {
                write_err = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(anyhow::Error::new(e).context(format!("writing {}", metrics_path.display())));
    }

    let ckpt = Checkpoint {
        model,
        train: run.train,
        params: outcome.params,
        adam: Some(outcome.adam),
    };
    write_checkpoint(&a.out, &ckpt)?;
    info!(
        "wrote checkpoint {} and metrics {}",
        a.out.display(),
        metrics_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn video_id_from(path: &Path, stream: Stream) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".into());
    stem.strip_suffix(&format!(".{stream}"))
        .map(str::to_string)
        .unwrap_or(stem)
}

fn feature_video(config: &TrnConfig, a: &StreamArgs) -> Result<(String, Vec<ChunkInput>)> {
    let mut files = BTreeMap::new();
    for (s, p) in &a.features {
        let dim = config
            .streams
            .get(*s)
            .ok_or_else(|| anyhow!("checkpoint model does not use the {s} stream"))?;
        let path = p
            .to_str()
            .ok_or_else(|| anyhow!("non-UTF-8 path {}", p.display()))?;
        if files
            .insert(
                *s,
                StreamFile {
                    path: path.into(),
                    dim,
                },
            )
            .is_some()
        {
            bail!("--features lists {s} twice");
        }
    }
    let (first_stream, first_path) = &a.features[0];
    let id = a
        .video_id
        .clone()
        .unwrap_or_else(|| video_id_from(first_path, *first_stream));
    let video = ManifestVideo {
        id: id.clone(),
        fps: config.fps,
        chunk_size: config.chunk_size,
        split: Split::Test,
        streams: files,
    };
    let chunks = load_video_streams(Path::new(""), &video, &config.required_streams())?;
    Ok((id, chunks))
}

fn manifest_videos(
    config: &TrnConfig,
    manifest: &Path,
    split: Split,
) -> Result<Vec<(String, Vec<ChunkInput>)>> {
    let ds = load_dataset(manifest, &config.required_streams())?;
    if ds.classmap.len() != config.classes() {
        bail!(
            "manifest has {} classes, checkpoint model {}",
            ds.classmap.len(),
            config.classes()
        );
    }
    ds.videos
        .into_iter()
        .filter(|v| v.split == split)
        .map(|v| {
            if v.chunk_size != config.chunk_size || v.fps != config.fps {
                bail!(
                    "video {} has chunk_size/fps {}/{}, checkpoint model {}/{}",
                    v.id,
                    v.chunk_size,
                    v.fps,
                    config.chunk_size,
                    config.fps
                );
            }
            Ok((v.id, v.chunks))
        })
        .collect()
}

pub fn stream(a: StreamArgs) -> Result<ExitCode> {
    let ckpt = read_checkpoint(&a.ckpt)?;
    let config = ckpt.model;
    let videos = match &a.manifest {
        Some(path) => manifest_videos(&config, path, a.split)?,
        None => vec![feature_video(&config, &a)?],
    };
    info!(
        "{} {} video(s), mode {}",
        config.fusion,
        videos.len(),
        if a.batch { "batch" } else { "streaming" }
    );
    let params = Arc::new(ckpt.params);
    let mut detector = OnlineDetector::new(config.clone(), Arc::clone(&params))?;
    let mut dump = PredictionDump::new(DumpHeader::from_config(&config));
    for (id, chunks) in videos {
        let outputs: Vec<DetectionOutput> = if a.batch {
            trn_forward(
                &params,
                &config,
                &chunks,
                &TrnState::zeros(config.hidden_size),
            )?
            .0
        } else {
            detector.reset();
            chunks
                .iter()
                .map(|c| detector.push_chunk(c))
                .collect::<Result<_, _>>()?
        };
        info!("{id}: {} chunks", outputs.len());
        dump.push_video(id, outputs)?;
    }
    dump.write(&a.out)?;
    Ok(ExitCode::SUCCESS)
}

pub fn eval(a: EvalArgs) -> Result<ExitCode> {
    let classmap = ClassMap::read(&a.classmap)?;
    let gt = GroundTruth::read(&a.gt, &classmap)?;
    let dump = PredictionDump::read(&a.dump)?;
    if dump.header.classes != classmap.len() {
        bail!(
            "dump has {} classes, class map {}",
            dump.header.classes,
            classmap.len()
        );
    }
    let opts = EvalOptions {
        exclude_ambiguous: !a.keep_ambiguous,
        expand_frames: a.frames,
    };
    info!("eval options: {}", to_json(&opts));
    let scores = score_dump(&dump, &gt, opts)?;
    let row = ReportRow::from_scores(a.label, &scores);
    let chunk_seconds = dump.header.chunk_size as f64 / dump.header.fps;
    print!("{}", render_report(&[row], chunk_seconds));
    Ok(ExitCode::SUCCESS)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub fusion: FusionVariant,
    pub hidden_size: usize,
    pub seq_len: usize,
    pub decoder_steps: usize,
    pub num_actions: usize,
    pub appearance_dim: usize,
    pub motion_dim: usize,
    pub pose_dim: usize,
    pub fd_step: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            fusion: FusionVariant::FusedTwoStream,
            hidden_size: 4,
            seq_len: 3,
            decoder_steps: 2,
            num_actions: 2,
            appearance_dim: 5,
            motion_dim: 3,
            pose_dim: 4,
            fd_step: trn_core::numeric::DEFAULT_FD_STEP,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

/// Name and row/column of flat parameter index `k`.
fn locate(params: &TrnParams, mut k: usize) -> String {
    for t in params.tensors() {
        if k < t.data.len() {
            return format!("{}[{},{}]", t.name, k / t.cols.max(1), k % t.cols.max(1));
        }
        k -= t.data.len();
    }
    format!("index {k}")
}

pub fn gradcheck(a: GradcheckArgs, m: &ArgMatches) -> Result<ExitCode> {
    let mut g: GradcheckConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => GradcheckConfig::default(),
    };
    apply_flags!(m, a, g, {
        seed => seed,
        fusion => fusion,
        hidden_size => hidden_size,
        seq_len => seq_len,
        decoder_steps => decoder_steps,
        num_actions => num_actions,
        fd_step => fd_step,
        tolerance => tolerance,
    });
    info!("effective config: {}", to_json(&g));
    if g.seq_len == 0 {
        bail!("seq_len must be at least 1");
    }
    let streams = StreamDims {
        appearance: Some(g.appearance_dim),
        motion: (g.fusion != FusionVariant::OneStream).then_some(g.motion_dim),
        pose: (g.fusion == FusionVariant::FusedTwoStream).then_some(g.pose_dim),
    };
    let mut cfg = TrnConfig::new(g.fusion, streams);
    cfg.hidden_size = g.hidden_size;
    cfg.decoder_steps = g.decoder_steps;
    cfg.num_actions = g.num_actions;
    cfg.validate()?;

    let params = TrnParams::init(&cfg, g.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed.wrapping_add(1));
    let seq: Vec<ChunkInput> = (0..g.seq_len)
        .map(|_| {
            let mut c = ChunkInput::default();
            for s in cfg.streams.active() {
                let d = cfg.streams.get(s).unwrap_or(0);
                c.set(s, (0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
            }
            c
        })
        .collect();
    let labels: Vec<usize> = (0..g.seq_len)
        .map(|_| rng.random_range(0..cfg.classes()))
        .collect();
    let w = LossWeights::default();

    let (_, grads) = sequence_loss_and_gradient(&params, &cfg, &seq, &labels, w)?;
    let mut analytic = grads.to_flat();
    if a.corrupt_gradient {
        analytic[0] += 1.0;
    }
    let mut probe = params.clone();
    let report = grad_check(
        |theta| {
            probe
                .assign_flat(theta)
                .ok()
                .and_then(|_| sequence_loss(&probe, &cfg, &seq, &labels, w).ok())
                .unwrap_or(f64::NAN)
        },
        &params.to_flat(),
        &analytic,
        g.fd_step,
    )?;
    let pass = report.max_rel_error < g.tolerance;
    println!(
        "max relative error {:.3e} at {} (analytic {:.6e}, numeric {:.6e}) over {} coordinates",
        report.max_rel_error,
        locate(&params, report.worst_index),
        report.analytic_at_worst,
        report.numeric_at_worst,
        report.coordinates
    );
    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(crate::EXIT_VALIDATION)
    })
}

pub fn report(a: ReportArgs) -> Result<ExitCode> {
    let mut tables: Vec<&str> = Vec::new();
    for r in &REFERENCE_ROWS {
        if !tables.contains(&r.table) {
            tables.push(r.table);
        }
    }
    if let Some(t) = &a.table {
        if !tables.contains(&t.as_str()) {
            bail!(
                "unknown table '{t}' (expected one of {})",
                tables.join(", ")
            );
        }
        tables.retain(|x| x == t);
    }
    for (i, t) in tables.iter().enumerate() {
        let rows: Vec<_> = REFERENCE_ROWS.iter().filter(|r| r.table == *t).collect();
        let chunk_size = rows[0].chunk_size;
        if i > 0 {
            println!();
        }
        println!("Table {t} (chunk size {chunk_size})");
        let report_rows: Vec<ReportRow> = rows.iter().map(|r| r.to_row()).collect();
        print!(
            "{}",
            render_report(&report_rows, chunk_size as f64 / REFERENCE_FPS)
        );
    }
    Ok(ExitCode::SUCCESS)
}
