use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use roadgraph::bridge::{serve, Handshake, HostSession, OracleHandler, RemotePolicy, PORT_ENV};
use roadgraph::engine::{run_detection_with_maps, DetectionResult, ExpertPolicy};
use roadgraph::expert::{sample_training_set, ExpertConfig, LabelMode};
use roadgraph::geometry::Point2;
use roadgraph::graph::RoadGraph;
use roadgraph::imaging::{rasterize_disks, rasterize_graph, render_synthetic_world, Tile};
use roadgraph::matchloss::{focal_loss, total_loss, vertex_losses, LossComponents};
use roadgraph::metrics::{full_report, MetricReport};

use crate::config::RunConfig;
use crate::graph_io::{load_graph_auto, save_graph, write_json};
use crate::raster_io::{load_gray, load_rgb, save_mask, save_png};

pub const IMAGE_FILE: &str = "image.png";
pub const GT_FILE: &str = "gt.json";
pub const ROAD_MASK_FILE: &str = "road_mask.png";
pub const INT_MASK_FILE: &str = "int_mask.png";
pub const PRED_FILE: &str = "pred.json";
pub const RUN_FILE: &str = "run.json";
pub const SAMPLES_FILE: &str = "samples.jsonl";

/// Runs `f` over `items` on a pool of `jobs` threads (0 = all cores),
/// keeping input order in the results.
pub fn par_map<I: Sync, O: Send>(
    items: &[I],
    jobs: usize,
    f: impl Fn(&I) -> anyhow::Result<O> + Sync + Send,
) -> anyhow::Result<Vec<O>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    pool.install(|| items.par_iter().map(&f).collect())
}

/// A world directory as written by `synth`.
#[derive(Debug, Clone)]
pub struct World {
    pub image: Tile<f64>,
    pub graph: RoadGraph<f64>,
    pub road_mask: Tile<f64>,
    pub intersection_mask: Tile<f64>,
}

impl World {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let image = load_rgb(&dir.join(IMAGE_FILE))?;
        let graph = load_graph_auto(&dir.join(GT_FILE))?;
        let road_mask = load_gray(&dir.join(ROAD_MASK_FILE))?;
        let intersection_mask = load_gray(&dir.join(INT_MASK_FILE))?;
        for (name, m) in [
            (ROAD_MASK_FILE, &road_mask),
            (INT_MASK_FILE, &intersection_mask),
        ] {
            if (m.width(), m.height()) != (image.width(), image.height()) {
                bail!(
                    "{}: {name} is {}x{}, image is {}x{}",
                    dir.display(),
                    m.width(),
                    m.height(),
                    image.width(),
                    image.height()
                );
            }
        }
        Ok(Self {
            image,
            graph,
            road_mask,
            intersection_mask,
        })
    }
}

/// Output directory for one of several inputs: `out` itself for a single
/// input, `out/<input name>` otherwise.
fn out_dir_for(out: &Path, input: &Path, several: bool) -> PathBuf {
    if several {
        out.join(input.file_name().unwrap_or(input.as_os_str()))
    } else {
        out.to_path_buf()
    }
}

fn create_dir(p: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

#[derive(Debug, Serialize)]
struct WorldMeta {
    seed: u64,
    width: usize,
    height: usize,
    style: roadgraph::imaging::WorldStyle,
}

pub fn synth(
    cfg: &RunConfig,
    seed: u64,
    count: usize,
    out_dir: &Path,
    jobs: usize,
) -> anyhow::Result<Vec<PathBuf>> {
    create_dir(out_dir)?;
    let idx: Vec<usize> = (0..count).collect();
    par_map(&idx, jobs, |&i| {
        let s = seed.wrapping_add(i as u64);
        let w =
            render_synthetic_world::<f64>(s, cfg.synth.width, cfg.synth.height, cfg.synth.style)?;
        let dir = out_dir.join(format!("world_{i:04}"));
        create_dir(&dir)?;
        save_png(&w.image, &dir.join(IMAGE_FILE))?;
        save_graph(&w.graph, &dir.join(GT_FILE))?;
        save_mask(&w.road_mask, &dir.join(ROAD_MASK_FILE))?;
        save_mask(&w.intersection_mask, &dir.join(INT_MASK_FILE))?;
        write_json(
            &WorldMeta {
                seed: s,
                width: cfg.synth.width,
                height: cfg.synth.height,
                style: cfg.synth.style,
            },
            &dir.join("world.json"),
        )?;
        Ok(dir)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offset {
    pub dx: f64,
    pub dy: f64,
}

/// One persisted training sample. Crop files are relative to the record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub step: usize,
    pub center: [f64; 2],
    pub mode: LabelMode,
    pub labels: Vec<Offset>,
    pub rotation_deg: f64,
    pub corrected: bool,
    pub roi: String,
    pub road: String,
    pub intersection: String,
    pub history: String,
}

pub fn labels(
    cfg: &RunConfig,
    seed: u64,
    worlds: &[PathBuf],
    out: &Path,
    limit: Option<usize>,
    jobs: usize,
) -> anyhow::Result<usize> {
    let several = worlds.len() > 1;
    let counts = par_map(worlds, jobs, |dir| {
        let w = World::load(dir)?;
        let out = out_dir_for(out, dir, several);
        let crops = out.join("crops");
        create_dir(&crops)?;
        let sampler = sample_training_set(
            &w.graph,
            &w.image,
            (&w.road_mask, &w.intersection_mask),
            &cfg.expert,
            &cfg.engine,
            seed,
        )?;
        let path = out.join(SAMPLES_FILE);
        let mut file = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        let mut n = 0;
        for s in sampler.take(limit.unwrap_or(usize::MAX)) {
            let name = |kind: &str| format!("crops/{:06}_{kind}.png", s.step);
            let rec = SampleRecord {
                step: s.step,
                center: [s.center.x, s.center.y],
                mode: s.mode,
                labels: s
                    .labels
                    .iter()
                    .map(|l| Offset { dx: l.x, dy: l.y })
                    .collect(),
                rotation_deg: s.rotation_deg,
                corrected: s.corrected,
                roi: name("roi"),
                road: name("road"),
                intersection: name("int"),
                history: name("hist"),
            };
            save_png(&s.roi_rgb, &out.join(&rec.roi))?;
            save_mask(&s.road, &out.join(&rec.road))?;
            save_mask(&s.intersection, &out.join(&rec.intersection))?;
            save_mask(&s.history, &out.join(&rec.history))?;
            serde_json::to_writer(&mut file, &rec)?;
            file.write_all(b"\n")?;
            n += 1;
        }
        file.flush()?;
        Ok(n)
    })?;
    Ok(counts.into_iter().sum())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySpec {
    Oracle,
    NoisyOracle,
    Bridge(String),
}

impl FromStr for PolicySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle" => Ok(PolicySpec::Oracle),
            "noisy-oracle" => Ok(PolicySpec::NoisyOracle),
            _ => match s.strip_prefix("bridge:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(PolicySpec::Bridge(cmd.to_string())),
                _ => Err(format!(
                    "unknown policy {s:?}; expected oracle, noisy-oracle or bridge:<cmd>"
                )),
            },
        }
    }
}

impl std::fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicySpec::Oracle => f.write_str("oracle"),
            PolicySpec::NoisyOracle => f.write_str("noisy-oracle"),
            PolicySpec::Bridge(c) => write!(f, "bridge:{c}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub policy: String,
    pub seed: u64,
    pub steps: usize,
    pub probes: usize,
    pub seeds: usize,
    pub truncated: bool,
    pub policy_errors: usize,
    pub vertices: usize,
    pub edges: usize,
    pub elapsed_secs: f64,
}

/// Expert settings for an oracle run: `oracle` is noiseless, `noisy-oracle`
/// uses the configured noise.
pub fn oracle_expert_config(cfg: &RunConfig, policy: &PolicySpec) -> ExpertConfig {
    match policy {
        PolicySpec::Oracle => ExpertConfig {
            noise_sigma: 0.0,
            ..cfg.expert.clone()
        },
        _ => cfg.expert.clone(),
    }
}

pub fn detect_world(
    cfg: &RunConfig,
    seed: u64,
    policy: &PolicySpec,
    w: &World,
) -> anyhow::Result<DetectionResult<f64>> {
    match policy {
        PolicySpec::Oracle | PolicySpec::NoisyOracle => {
            let mut p = ExpertPolicy::new(&w.graph, oracle_expert_config(cfg, policy), seed)?;
            Ok(run_detection_with_maps(
                Some(&w.image),
                &w.intersection_mask,
                &mut p,
                &cfg.engine,
            )?)
        }
        PolicySpec::Bridge(cmd) => {
            let mut ext = serde_json::Map::new();
            // clients mirroring the expert answer with its noise-free labels
            ext.insert(
                "expert".into(),
                serde_json::to_value(oracle_expert_config(cfg, &PolicySpec::Oracle))?,
            );
            ext.insert("engine".into(), serde_json::to_value(&cfg.engine)?);
            ext.insert("seed".into(), seed.into());
            let hello = Handshake {
                roi_side: cfg.engine.roi_side,
                extensions: ext,
            };
            let session = HostSession::spawn(cmd, hello, &cfg.bridge)
                .with_context(|| format!("starting bridge client {cmd:?}"))?;
            let mut remote = RemotePolicy::new(session);
            let r = remote.detect(&w.image, &cfg.engine)?;
            if let Err(e) = remote.into_session().close() {
                log::warn!("closing bridge session: {e}");
            }
            Ok(r)
        }
    }
}

/// Runs detection on each world and writes `pred.json` and `run.json`.
/// Returns whether any run was truncated.
pub fn detect(
    cfg: &RunConfig,
    seed: u64,
    policy: &PolicySpec,
    worlds: &[PathBuf],
    out: &Path,
    jobs: usize,
) -> anyhow::Result<bool> {
    let several = worlds.len() > 1;
    let truncated = par_map(worlds, jobs, |dir| {
        let w = World::load(dir)?;
        let t0 = Instant::now();
        let r = detect_world(cfg, seed, policy, &w)?;
        let out = out_dir_for(out, dir, several);
        create_dir(&out)?;
        save_graph(&r.graph, &out.join(PRED_FILE))?;
        let meta = RunMeta {
            policy: policy.to_string(),
            seed,
            steps: r.steps,
            probes: r.probes,
            seeds: r.seeds,
            truncated: r.truncated,
            policy_errors: r.policy_errors,
            vertices: r.graph.vertex_count(),
            edges: r.graph.edge_count(),
            elapsed_secs: t0.elapsed().as_secs_f64(),
        };
        write_json(&meta, &out.join(RUN_FILE))?;
        if r.truncated {
            log::warn!("{}: run truncated after {} steps", dir.display(), r.steps);
        }
        Ok(r.truncated)
    })?;
    Ok(truncated.into_iter().any(|t| t))
}

/// Tile size covering both graphs when none is given.
pub fn covering_size(a: &RoadGraph<f64>, b: &RoadGraph<f64>) -> (usize, usize) {
    let mut w = 1.0f64;
    let mut h = 1.0f64;
    for g in [a, b] {
        for (_, _, poly) in g.edges() {
            for p in poly {
                w = w.max(p.x.floor() + 2.0);
                h = h.max(p.y.floor() + 2.0);
            }
        }
        for (_, p) in g.vertices() {
            w = w.max(p.x.floor() + 2.0);
            h = h.max(p.y.floor() + 2.0);
        }
    }
    (w as usize, h as usize)
}

pub fn eval(
    cfg: &RunConfig,
    gt: &Path,
    pred: &Path,
    size: Option<(usize, usize)>,
    out: Option<&Path>,
) -> anyhow::Result<MetricReport> {
    let g = load_graph_auto(gt)?;
    let p = load_graph_auto(pred)?;
    let (w, h) = size.unwrap_or_else(|| covering_size(&g, &p));
    let report = full_report(&g, &p, w, h, &cfg.metrics);
    if let Some(out) = out {
        create_dir(out)?;
        write_json(&report, &out.join("report.json"))?;
        std::fs::write(out.join("table.txt"), report.to_table())?;
    }
    Ok(report)
}

pub fn overlay(image: &Path, graph: &Path, out: &Path) -> anyhow::Result<()> {
    let mut canvas = image::open(image)
        .with_context(|| format!("reading {}", image.display()))?
        .to_rgb8();
    let g = load_graph_auto(graph)?;
    let (w, h) = (canvas.width() as usize, canvas.height() as usize);
    let edges = rasterize_graph(&g, w, h, 3);
    let junction: Vec<Point2<f64>> = g
        .vertices()
        .filter(|(id, _)| g.degree(*id) >= 3)
        .map(|(_, p)| p)
        .collect();
    let other: Vec<Point2<f64>> = g
        .vertices()
        .filter(|(id, _)| g.degree(*id) < 3)
        .map(|(_, p)| p)
        .collect();
    let layers = [
        (edges, [255, 40, 40]),
        (rasterize_disks(&other, w, h, 3.0), [255, 220, 0]),
        (rasterize_disks(&junction, w, h, 4.0), [40, 120, 255]),
    ];
    for (mask, color) in &layers {
        for (i, on) in mask.to_mask().into_iter().enumerate() {
            if on {
                canvas.put_pixel((i % w) as u32, (i / w) as u32, image::Rgb(*color));
            }
        }
    }
    canvas
        .save(out)
        .with_context(|| format!("writing {}", out.display()))
}

/// Model output for one recorded sample, as read by `audit-loss`.
/// Map files are relative to the predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredRecord {
    pub step: usize,
    pub predictions: Vec<PredVertex>,
    #[serde(default)]
    pub road: Option<String>,
    #[serde(default)]
    pub intersection: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredVertex {
    pub dx: f64,
    pub dy: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub step: usize,
    pub matched: usize,
    pub components: LossComponents<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossAudit {
    pub steps: Vec<StepLoss>,
    pub mean: LossComponents<f64>,
    pub mean_total: f64,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .with_context(|| format!("{}: line {}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

/// Losses of recorded model outputs against recorded expert samples.
/// `samples` is a `labels` output directory or its samples file.
pub fn audit_loss(cfg: &RunConfig, samples: &Path, preds: &Path) -> anyhow::Result<LossAudit> {
    let samples_file = if samples.is_dir() {
        samples.join(SAMPLES_FILE)
    } else {
        samples.to_path_buf()
    };
    let sample_dir = samples_file
        .parent()
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let pred_dir = preds.parent().unwrap_or(Path::new(".")).to_path_buf();
    let records: Vec<SampleRecord> = read_jsonl(&samples_file)?;
    let outputs: Vec<PredRecord> = read_jsonl(preds)?;
    let w = &cfg.loss;
    let mut steps = Vec::new();
    for o in &outputs {
        let s = records
            .iter()
            .find(|s| s.step == o.step)
            .ok_or_else(|| anyhow!("{}: no sample with step {}", preds.display(), o.step))?;
        let labels: Vec<Point2<f64>> = s.labels.iter().map(|l| Point2::new(l.dx, l.dy)).collect();
        let pts: Vec<Point2<f64>> = o
            .predictions
            .iter()
            .map(|p| Point2::new(p.dx, p.dy))
            .collect();
        let probs: Vec<f64> = o.predictions.iter().map(|p| p.prob).collect();
        let (a, mut c) = vertex_losses(&pts, &probs, &labels)?;
        for (map, gt, slot) in [
            (&o.road, &s.road, &mut c.road_focal),
            (&o.intersection, &s.intersection, &mut c.intersection_focal),
        ] {
            if let Some(m) = map {
                let pred = load_gray(&pred_dir.join(m))?;
                let truth = load_gray(&sample_dir.join(gt))?;
                *slot = focal_loss(&pred, &truth, w.focal_alpha, w.focal_gamma)
                    .with_context(|| format!("step {}: map {m}", o.step))?;
            }
        }
        steps.push(StepLoss {
            step: o.step,
            matched: a.pairs.len(),
            total: total_loss(&c, w),
            components: c,
        });
    }
    let n = steps.len().max(1) as f64;
    let mut mean = LossComponents::<f64>::default();
    for s in &steps {
        mean.road_focal += s.components.road_focal / n;
        mean.intersection_focal += s.components.intersection_focal / n;
        mean.coord += s.components.coord / n;
        mean.valid += s.components.valid / n;
    }
    let mean_total = steps.iter().map(|s| s.total).sum::<f64>() / n;
    Ok(LossAudit {
        steps,
        mean,
        mean_total,
    })
}

/// Reference ground-truth client for `detect --policy bridge:...`. Talks
/// over stdin/stdout, or over TCP when a port is given or set in the
/// environment.
pub fn bridge_oracle(gt: &Path, port: Option<u16>) -> anyhow::Result<()> {
    let g = load_graph_auto(gt)?;
    let mut handler = OracleHandler::new(g);
    let port = match port {
        Some(p) => Some(p),
        None => match std::env::var(PORT_ENV) {
            Ok(v) => Some(v.parse().with_context(|| format!("{PORT_ENV}={v:?}"))?),
            Err(_) => None,
        },
    };
    match port {
        Some(p) => {
            let stream = std::net::TcpStream::connect(("127.0.0.1", p))?;
            let mut r = stream.try_clone()?;
            let mut w = stream;
            serve(&mut r, &mut w, &mut handler)?;
        }
        None => {
            let mut r = std::io::stdin().lock();
            let mut w = std::io::stdout().lock();
            serve(&mut r, &mut w, &mut handler)?;
        }
    }
    Ok(())
}
