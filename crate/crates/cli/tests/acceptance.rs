//! Acceptance suite: one PASS/FAIL line per criterion.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roadgraph::engine::{run_detection_with_maps, EngineConfig, ExpertPolicy};
use roadgraph::expert::{replay_exploration, ExpertConfig};
use roadgraph::geometry::Point2;
use roadgraph::graph::RoadGraph;
use roadgraph::imaging::{rasterize_graph, render_synthetic_world, Tile, WorldStyle};
use roadgraph::matchloss::{bce_map_loss, focal_loss, match_vertices};
use roadgraph::metrics::{apls, pixel_metrics, MetricReport};
use roadgraph_cli::commands::World;

const BIN: &str = env!("CARGO_BIN_EXE_roadgraph");
const WORLDS: u64 = 10;
const SIDE: usize = 1024;

type P = Point2<f64>;
type G = RoadGraph<f64>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let o = Command::new(BIN)
        .current_dir(dir)
        .env_remove("ROADGRAPH_CONFIG")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {} {}",
            o.status,
            String::from_utf8_lossy(&o.stderr)
        ))
    }
}

fn world_dirs(root: &Path) -> Vec<PathBuf> {
    (0..WORLDS)
        .map(|i| root.join(format!("w/world_{i:04}")))
        .collect()
}

fn oracle_closed_loop(root: &Path) -> Result<Outcome, String> {
    let side = SIDE.to_string();
    let mut min_apls = f64::INFINITY;
    let mut min_pf = f64::INFINITY;
    let mut max_secs = 0.0f64;
    let mut pass = true;
    for (i, dir) in world_dirs(root).iter().enumerate() {
        let w = dir.display().to_string();
        let out = format!("oracle/{i}");
        let t0 = Instant::now();
        cli(
            root,
            &["detect", "--world", &w, "--policy", "oracle", "--out", &out],
        )?;
        cli(
            root,
            &[
                "eval",
                "--gt",
                &format!("{w}/gt.json"),
                "--pred",
                &format!("{out}/pred.json"),
                "--width",
                &side,
                "--height",
                &side,
                "--out",
                &out,
            ],
        )?;
        let secs = t0.elapsed().as_secs_f64();
        let text = std::fs::read(root.join(&out).join("report.json")).map_err(|e| e.to_string())?;
        let r: MetricReport = serde_json::from_slice(&text).map_err(|e| e.to_string())?;
        let pf = r.pixel_at(5.0).ok_or("no delta 5")?.f1;
        pass &= r.apls >= 0.95 && pf >= 0.98 && secs < 60.0;
        min_apls = min_apls.min(r.apls);
        min_pf = min_pf.min(pf);
        max_secs = max_secs.max(secs);
    }
    Ok(outcome(
        pass,
        format!("min APLS {min_apls:.4} (>= 0.95), min P-F@5 {min_pf:.4} (>= 0.98), max {max_secs:.2} s/world (< 60)"),
    ))
}

fn noise_robustness(worlds: &[World]) -> Result<Outcome, String> {
    let engine = EngineConfig::default();
    let run = |sigma: f64, fc: bool| -> Result<Vec<f64>, String> {
        let cfg = ExpertConfig {
            noise_sigma: sigma,
            force_correction: fc,
            ..ExpertConfig::default()
        };
        worlds
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let r = replay_exploration(&w.graph, &w.intersection_mask, &cfg, &engine, i as u64)
                    .map_err(|e| e.to_string())?;
                Ok(apls(&w.graph, &r.detection.graph, 500, 15.0, 0, false).value)
            })
            .collect()
    };
    let corrected = run(5.0, true)?;
    let loose = run(15.0, false)?;
    let min_c = corrected.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean_c = corrected.iter().sum::<f64>() / corrected.len() as f64;
    let mean_l = loose.iter().sum::<f64>() / loose.len() as f64;
    Ok(outcome(
        min_c >= 0.90 && mean_l < mean_c,
        format!("sigma 5 + correction: min APLS {min_c:.4} (>= 0.90), mean {mean_c:.4}; sigma 15 uncorrected: mean {mean_l:.4} (< {mean_c:.4})"),
    ))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn hungarian_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let perms: Vec<Vec<Vec<usize>>> = (0..=8).map(permutations).collect();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let np = rng.random_range(1..=8);
        let nl = rng.random_range(1..=8);
        let mut pts = |n: usize| -> Vec<P> {
            (0..n)
                .map(|_| {
                    P::new(
                        rng.random_range(-128.0..128.0),
                        rng.random_range(-128.0..128.0),
                    )
                })
                .collect()
        };
        let preds = pts(np);
        let labels = pts(nl);
        let got = match_vertices(&preds, &labels).total_cost;
        // terms summed in prediction order, as match_vertices does
        let mut best = f64::INFINITY;
        if np <= nl {
            for perm in &perms[nl] {
                let s: f64 = (0..np).map(|i| preds[i].dist(labels[perm[i]])).sum();
                best = best.min(s);
            }
        } else {
            for perm in &perms[np] {
                let mut pairs: Vec<(usize, usize)> = (0..nl).map(|l| (perm[l], l)).collect();
                pairs.sort_unstable();
                let s: f64 = pairs.iter().map(|(p, l)| preds[*p].dist(labels[*l])).sum();
                best = best.min(s);
            }
        }
        if got != best {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches}/1000 instances differ from brute force"),
    )
}

fn random_graph(rng: &mut ChaCha8Rng, side: f64) -> G {
    let mut g = G::new();
    let n = rng.random_range(2..14);
    let ids: Vec<_> = (0..n)
        .map(|_| {
            g.add_vertex(P::new(
                rng.random_range(0.0..side).round(),
                rng.random_range(0.0..side).round(),
            ))
        })
        .collect();
    for _ in 0..rng.random_range(1..2 * n) {
        let a = ids[rng.random_range(0..n)];
        let b = ids[rng.random_range(0..n)];
        if a != b && !g.has_edge(a, b) && g.position(a) != g.position(b) {
            g.add_edge(a, b).unwrap();
        }
    }
    g
}

fn metric_anchors(worlds: &[World]) -> Outcome {
    let empty = G::new();
    let mut anchors_ok = true;
    for w in worlds {
        anchors_ok &= apls(&w.graph, &w.graph, 500, 15.0, 0, false).value == 1.0;
        anchors_ok &= apls(&w.graph, &empty, 500, 15.0, 0, false).value == 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut duality = 0;
    let mut monotone = 0;
    for _ in 0..100 {
        let a = random_graph(&mut rng, 128.0);
        let b = random_graph(&mut rng, 128.0);
        let mut prev = (0.0, 0.0);
        let mut dual_ok = true;
        let mut mono_ok = true;
        for delta in [1.0, 2.0, 3.0, 5.0, 10.0, 20.0] {
            let ab = pixel_metrics(&a, &b, 128, 128, delta);
            let ba = pixel_metrics(&b, &a, 128, 128, delta);
            dual_ok &= ab.precision == ba.recall && ab.recall == ba.precision;
            mono_ok &= ab.precision >= prev.0 && ab.recall >= prev.1;
            prev = (ab.precision, ab.recall);
        }
        duality += dual_ok as usize;
        monotone += mono_ok as usize;
    }
    outcome(
        anchors_ok && duality == 100 && monotone == 100,
        format!(
            "APLS(g,g)=1 and APLS(g,empty)=0 on {} worlds: {anchors_ok}; duality {duality}/100; delta-monotonicity {monotone}/100",
            worlds.len()
        ),
    )
}

fn loss_anchors() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..400);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 })
            .collect();
        let pt = Tile::from_vec(n, 1, 1, p).unwrap();
        let yt = Tile::from_vec(n, 1, 1, y).unwrap();
        let f = focal_loss(&pt, &yt, 0.5, 0.0).unwrap();
        let b = bce_map_loss(&pt, &yt).unwrap();
        worst = worst.max((f - 0.5 * b).abs());
    }
    let one = |v: f64| Tile::from_vec(1, 1, 1, vec![v]).unwrap();
    let single = focal_loss(&one(0.5), &one(1.0), 0.25, 2.0).unwrap();
    let err = (single - 0.043322).abs();
    outcome(
        worst <= 1e-12 && err <= 1e-6,
        format!("max |focal - BCE/2| {worst:.1e} (<= 1e-12); single pixel {single:.9} (0.043322 +- 1e-6)"),
    )
}

fn expert_coverage(grid: &[World], rings: &[World]) -> Result<Outcome, String> {
    let engine = EngineConfig::default();
    let mut min_cov = f64::INFINITY;
    for (i, w) in grid.iter().chain(rings).enumerate() {
        let r = replay_exploration(
            &w.graph,
            &w.intersection_mask,
            &ExpertConfig::noiseless(),
            &engine,
            i as u64,
        )
        .map_err(|e| e.to_string())?;
        min_cov = min_cov.min(r.coverage);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut idem = 0;
    let mut raster = 0;
    for _ in 0..500 {
        let g = random_graph(&mut rng, 200.0);
        let s = g.simplified();
        idem += (s.simplified() == s) as usize;
        raster += (rasterize_graph(&g, 200, 200, 1) == rasterize_graph(&s, 200, 200, 1)) as usize;
    }
    let n = grid.len() + rings.len();
    Ok(outcome(
        min_cov >= 1.0 - 1e-9 && idem == 500 && raster == 500,
        format!("min coverage {min_cov:.12} over {n} worlds; simplify idempotent {idem}/500; raster-equal {raster}/500"),
    ))
}

fn engine_termination(rings: &[World]) -> Result<Outcome, String> {
    let engine = EngineConfig::default();
    let mut pass = true;
    let mut worst_ratio = 0.0f64;
    let mut truncated = 0;
    for (i, w) in rings.iter().enumerate() {
        let mut p = ExpertPolicy::new(&w.graph, ExpertConfig::noiseless(), i as u64)
            .map_err(|e| e.to_string())?;
        let r = run_detection_with_maps(Some(&w.image), &w.intersection_mask, &mut p, &engine)
            .map_err(|e| e.to_string())?;
        let ratio = r.steps as f64 / r.history.vertex_count().max(1) as f64;
        truncated += r.truncated as usize;
        pass &= !r.truncated && r.steps <= 2 * r.history.vertex_count();
        worst_ratio = worst_ratio.max(ratio);
    }
    Ok(outcome(
        pass,
        format!(
            "{} ring worlds: {truncated} truncated; max steps/vertices {worst_ratio:.3} (<= 2)",
            rings.len()
        ),
    ))
}

fn rings(seed0: u64) -> Vec<World> {
    (0..WORLDS)
        .map(|i| {
            let w =
                render_synthetic_world::<f64>(seed0 + i, SIDE, SIDE, WorldStyle::Rings).unwrap();
            World {
                image: w.image,
                graph: w.graph,
                road_mask: w.road_mask,
                intersection_mask: w.intersection_mask,
            }
        })
        .collect()
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let tmp = tempfile::tempdir().expect("tempdir");
    let root = tmp.path();
    let t0 = Instant::now();
    let setup = cli(
        root,
        &[
            "--seed",
            "0",
            "--jobs",
            "0",
            "synth",
            "--out-dir",
            "w",
            "--count",
            &WORLDS.to_string(),
        ],
    );
    let grid: Vec<World> = match setup {
        Ok(()) => world_dirs(root)
            .iter()
            .map(|d| World::load(d).expect("world"))
            .collect(),
        Err(e) => {
            println!("FAIL setup: {e}");
            return ExitCode::FAILURE;
        }
    };
    let ring_worlds = rings(100);

    let criteria: Vec<(&str, Result<Outcome, String>)> = vec![
        ("oracle closed loop", oracle_closed_loop(root)),
        ("noise robustness", noise_robustness(&grid)),
        ("hungarian exactness", Ok(hungarian_exactness())),
        ("metric trivial anchors", Ok(metric_anchors(&grid))),
        ("loss anchors", Ok(loss_anchors())),
        ("expert coverage", expert_coverage(&grid, &ring_worlds)),
        ("engine termination", engine_termination(&ring_worlds)),
    ];
    let mut failed = 0;
    println!();
    for (name, r) in &criteria {
        match r {
            Ok(o) => {
                println!(
                    "{} {name}: {}",
                    if o.pass { "PASS" } else { "FAIL" },
                    o.detail
                );
                failed += !o.pass as usize;
            }
            Err(e) => {
                println!("FAIL {name}: error: {e}");
                failed += 1;
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1} s",
        criteria.len() - failed,
        criteria.len(),
        t0.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
