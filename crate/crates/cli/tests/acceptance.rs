//! Acceptance gate. Each criterion prints one PASS/FAIL line; the target
//! exits non-zero if any criterion fails.
//!
//! Tolerances:
//! 1. precision/recall equal the published values after rounding to 4 places,
//!    accuracy within 5e-5 of 0.9995
//! 2. hold-out accuracy >= 0.99, per-class precision and recall >= 0.98,
//!    single-threaded train under 60 s
//! 3. building_count and avg_area both in the top 4 importances
//! 4. >= 99% of training points keep their label
//! 5. exact set equality for index queries, 1e-9 relative for features,
//!    exact hull vertices, exact vote tallies
//! 6. byte equality of model and map files across two runs
//! 7. 1000 strict monotonicity draws, exact swap symmetry and min rule,
//!    70.0 dB within 1e-12
//! 8. median avg_height of UHR cells above that of the other cells

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use morphomap_cli::{cmd_boundary, cmd_map, cmd_synth, cmd_train, PipelineConfig};
use morphomap_core::evalx::{confusion, metrics};
use morphomap_core::features::{compute_features, extract_training_set};
use morphomap_core::forest::{load_model, train, TrainingData, TreeNode};
use morphomap_core::geom::{convex_hull, DiskQuery, LinearScan, Spatial};
use morphomap_core::ingest::{build_city_dataset, ingest_city, load_labeled_polygons, BuildingFootprint, RoadSegment};
use morphomap_core::mapgen::{classify_points, MapCell, MorphologyMap};
use morphomap_core::pathloss::{link_loss, median_loss, Coefficients, LinkQuery, Situation};
use morphomap_core::{
    EnvironmentClass, ForestConfig, GridConfig, PathLossParams, Point, Polygon, Projection, RoadClass, SpatialIndex,
};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    format!("{e:#}")
}

struct Env {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Env {
    fn new() -> Env {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        cmd_synth(&root, 0).unwrap();
        Env { _dir: dir, root }
    }

    fn config(&self, out: &str) -> PipelineConfig {
        let mut cfg = PipelineConfig::load(&self.root.join("config.json")).unwrap();
        cfg.paths.output_dir = self.root.join(out);
        cfg
    }
}

const PUBLISHED: [[u64; 3]; 3] = [[3901, 7, 0], [5, 17893, 0], [0, 0, 913]];

fn c1_metrics() -> Check {
    let mut actual = Vec::new();
    let mut predicted = Vec::new();
    for (a, row) in PUBLISHED.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            for _ in 0..n {
                actual.push(EnvironmentClass::TRAINING[a]);
                predicted.push(EnvironmentClass::TRAINING[p]);
            }
        }
    }
    let cm = confusion(&actual, &predicted).map_err(err)?;
    ensure(cm.counts == PUBLISHED, "confusion matrix not rebuilt")?;
    let m = metrics(&cm).map_err(err)?;
    let r4 = |v: Option<f64>| (v.unwrap_or(f64::NAN) * 1e4).round() / 1e4;
    let p: Vec<f64> = m.precision.iter().map(|v| r4(*v)).collect();
    let r: Vec<f64> = m.recall.iter().map(|v| r4(*v)).collect();
    ensure(p == [0.9987, 0.9996, 1.0], format!("precision {p:?}"))?;
    ensure(r == [0.9982, 0.9997, 1.0], format!("recall {r:?}"))?;
    ensure((m.accuracy - 0.9995).abs() <= 5e-5, format!("accuracy {}", m.accuracy))?;
    Ok(format!("precision {p:?} recall {r:?} accuracy {:.4}", m.accuracy))
}

struct Trained {
    holdout_accuracy: f64,
    min_pr: f64,
    secs: f64,
    top4: Vec<String>,
}

fn train_single_threaded(env: &Env, out: &str) -> Result<Trained, String> {
    let cfg = env.config(out);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(err)?;
    let t = Instant::now();
    let o = pool.install(|| cmd_train(&cfg)).map_err(err)?;
    let secs = t.elapsed().as_secs_f64();
    let min_pr = o
        .metrics
        .precision
        .iter()
        .chain(&o.metrics.recall)
        .map(|v| v.unwrap_or(0.0))
        .fold(1.0, f64::min);
    Ok(Trained {
        holdout_accuracy: o.metrics.accuracy,
        min_pr,
        secs,
        top4: o.importances.iter().take(4).map(|(n, _)| n.clone()).collect(),
    })
}

fn c2_pipeline(t: &Trained) -> Check {
    ensure(t.holdout_accuracy >= 0.99, format!("hold-out accuracy {}", t.holdout_accuracy))?;
    ensure(t.min_pr >= 0.98, format!("lowest precision/recall {}", t.min_pr))?;
    ensure(t.secs < 60.0, format!("training took {:.1} s", t.secs))?;
    Ok(format!(
        "hold-out accuracy {:.4}, lowest precision/recall {:.4}, {:.1} s on one thread",
        t.holdout_accuracy, t.min_pr, t.secs
    ))
}

fn c3_importance(t: &Trained) -> Check {
    let has = |f: &str| t.top4.iter().any(|n| n == f);
    ensure(has("building_count") && has("avg_area"), format!("top 4 {:?}", t.top4))?;
    Ok(format!("top 4 {:?}", t.top4))
}

fn c4_labels_reproduced(env: &Env) -> Check {
    let cfg = env.config("a");
    let model = load_model(&cfg.model_path()).map_err(err)?;
    let (city, _) = ingest_city(
        cfg.paths.buildings.as_deref().unwrap(),
        cfg.paths.roads.as_deref().unwrap(),
        &cfg.projection,
    )
    .map_err(err)?;
    let labels = load_labeled_polygons(cfg.paths.labels.as_deref().unwrap(), &city.projection).map_err(err)?;
    let samples = extract_training_set(&city, &labels, &cfg.grid).map_err(err)?;
    let points: Vec<Point> = samples.iter().map(|s| s.location).collect();
    let got = classify_points(&points, &city, &model, &cfg.grid).map_err(err)?;
    let ok = got.iter().zip(&samples).filter(|(c, s)| Some(**c) == s.label).count();
    let frac = ok as f64 / samples.len() as f64;
    ensure(frac >= 0.99, format!("{ok}/{} reproduced", samples.len()))?;
    Ok(format!("{ok}/{} training labels reproduced ({:.2}%)", samples.len(), 100.0 * frac))
}

fn random_buildings(r: &mut ChaCha8Rng, n: usize) -> Vec<BuildingFootprint> {
    (0..n)
        .map(|i| {
            let (x, y) = (r.random_range(0.0..3000.0), r.random_range(0.0..3000.0));
            let (w, h) = (r.random_range(2.0..60.0), r.random_range(2.0..60.0));
            BuildingFootprint {
                id: format!("b{i:05}"),
                footprint: Polygon::rect(Point::new(x, y), Point::new(x + w, y + h)).unwrap(),
                height: (i % 9 != 0).then(|| r.random_range(2.0..90.0)),
            }
        })
        .collect()
}

fn random_roads(r: &mut ChaCha8Rng, n: usize) -> Vec<RoadSegment> {
    (0..n)
        .map(|i| RoadSegment {
            id: format!("r{i:04}"),
            path: (0..3)
                .map(|_| Point::new(r.random_range(0.0..3000.0), r.random_range(0.0..3000.0)))
                .collect(),
            road_class: RoadClass::ALL[i % RoadClass::ALL.len()],
            lanes: (i % 3 != 0).then_some(1 + (i % 4) as u32),
            maxspeed: (i % 4 != 0).then_some(30.0 + (i % 7) as f64 * 10.0),
            name: None,
        })
        .collect()
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Hull vertices by the all-triples rule: a point is a vertex iff no triangle
/// of other points contains it.
fn hull_oracle(pts: &[Point]) -> Vec<(u64, u64)> {
    let inside = |p: Point, a: Point, b: Point, c: Point| {
        let (d1, d2, d3) = (cross(a, b, p), cross(b, c, p), cross(c, a, p));
        !((d1 < 0.0 || d2 < 0.0 || d3 < 0.0) && (d1 > 0.0 || d2 > 0.0 || d3 > 0.0))
    };
    let mut out = Vec::new();
    for (i, &p) in pts.iter().enumerate() {
        let o: Vec<Point> = pts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, q)| *q).collect();
        let covered = (0..o.len()).any(|a| {
            (a + 1..o.len()).any(|b| (b + 1..o.len()).any(|c| inside(p, o[a], o[b], o[c])))
        });
        if !covered {
            out.push((p.x.to_bits(), p.y.to_bits()));
        }
    }
    out.sort_unstable();
    out
}

fn leaf_counts(nodes: &[TreeNode], x: &[f64]) -> Vec<u64> {
    let mut i = 0;
    loop {
        match &nodes[i] {
            TreeNode::Split { feature, threshold, left, right } => {
                i = if x[*feature] <= *threshold { *left } else { *right };
            }
            TreeNode::Leaf { counts } => return counts.clone(),
        }
    }
}

fn first_max(v: &[u64]) -> usize {
    (0..v.len()).fold(0, |b, c| if v[c] > v[b] { c } else { b })
}

fn c5_oracles() -> Check {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let buildings = random_buildings(&mut r, 1000);
    let index = SpatialIndex::build(&buildings);
    for k in 0..100 {
        let c = Point::new(r.random_range(-200.0..3200.0), r.random_range(-200.0..3200.0));
        let rad = r.random_range(1.0..600.0);
        let brute: Vec<usize> = (0..buildings.len())
            .filter(|&i| buildings[i].footprint.intersects_disk(c, rad))
            .collect();
        ensure(index.query_disk(c, rad) == brute, format!("(a) disk {k} differs"))?;
    }

    let city = build_city_dataset(buildings, random_roads(&mut r, 150), Projection::new(0.0, 45.0).unwrap())
        .map_err(err)?;
    let cfg = GridConfig::default();
    let (bi, ri) = (SpatialIndex::build(&city.buildings), SpatialIndex::build(&city.roads));
    let (bl, rl) = (LinearScan::new(&city.buildings), LinearScan::new(&city.roads));
    for k in 0..100 {
        let p = Point::new(r.random_range(0.0..3000.0), r.random_range(0.0..3000.0));
        let a = compute_features(p, &city, &bi, &ri, &cfg).to_array();
        let b = compute_features(p, &city, &bl, &rl, &cfg).to_array();
        let close = a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-9 * y.abs().max(1.0));
        ensure(close, format!("(b) point {k}: {a:?} vs {b:?}"))?;
    }

    for k in 0..5 {
        let pts: Vec<Point> = (0..100)
            .map(|_| Point::new(r.random_range(0.0..100.0), r.random_range(0.0..100.0)))
            .collect();
        let hull = convex_hull(&pts).map_err(err)?;
        let mut got: Vec<(u64, u64)> = hull.vertices().iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
        got.sort_unstable();
        ensure(got == hull_oracle(&pts), format!("(c) hull set {k} differs"))?;
    }

    let rows: Vec<[f64; 5]> = (0..500).map(|_| std::array::from_fn(|_| r.random())).collect();
    let labels: Vec<usize> = rows
        .iter()
        .map(|v| if v[0] > 0.6 { 2 } else if v[1] + v[3] > 1.0 { 1 } else { 0 })
        .collect();
    let data = TrainingData::from_rows(&rows, &labels, 3).map_err(err)?;
    let n_trees = 30;
    let fcfg = ForestConfig { n_trees, seed: 3, ..ForestConfig::default() };
    let model = train(&data, &fcfg, &["a", "b", "c", "d", "e"]).map_err(err)?;
    for k in 0..1000 {
        let x: Vec<f64> = (0..5).map(|_| r.random_range(-0.1..1.1)).collect();
        let mut tally = [0u64; 3];
        for t in model.trees() {
            tally[first_max(&leaf_counts(t.nodes(), &x))] += 1;
        }
        ensure(model.predict_index(&x) == first_max(&tally), format!("(d) vector {k} differs"))?;
    }
    Ok("index 100 disks, features 100 points, hull 5x100 points, forest 1000 vectors".into())
}

fn c6_determinism(env: &Env) -> Check {
    let mut files = Vec::new();
    for out in ["a", "b"] {
        let cfg = env.config(out);
        if out == "b" {
            cmd_train(&cfg).map_err(err)?;
        }
        cmd_map(&cfg).map_err(err)?;
        files.push(cfg.paths.output_dir);
    }
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).map_err(err);
    let mut msg = String::new();
    for f in ["model.json", "map.geojson", "map.svg", "metrics.txt", "samples.csv"] {
        let (a, b) = (read(&files[0], f)?, read(&files[1], f)?);
        ensure(a == b, format!("{f} differs between runs"))?;
        write!(msg, "{f} {} B, ", a.len()).unwrap();
    }
    msg.push_str("identical");
    Ok(msg)
}

fn c7_pathloss() -> Check {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let range = ((1.0, 5000.0), (0.3, 100.0));
    for k in 0..1000 {
        let c = Coefficients {
            alpha: r.random_range(0.05..6.0),
            beta: r.random_range(-30.0..80.0),
            gamma: r.random_range(0.05..4.0),
            sigma: 0.0,
        };
        let p = PathLossParams::uniform(c, range.0, range.1);
        let d = r.random_range(1.0..4000.0);
        let f = r.random_range(0.3..90.0);
        let (dd, df) = (r.random_range(0.5..1000.0), r.random_range(0.01..10.0));
        let l = |d, f| median_loss(&p, EnvironmentClass::Ulr, Situation::NLoS, d, f).map_err(err);
        let base = l(d, f)?;
        ensure(l(d + dd, f)? > base && l(d, f + df)? > base, format!("draw {k} not increasing"))?;
    }

    let c = |beta| Coefficients { alpha: 2.0, beta, gamma: 2.0, sigma: 0.0 };
    let l70 = median_loss(
        &PathLossParams::uniform(c(30.0), range.0, range.1),
        EnvironmentClass::Res,
        Situation::LoS,
        100.0,
        1.0,
    )
    .map_err(err)?;
    ensure((l70 - 70.0).abs() <= 1e-12, format!("arithmetic case gives {l70}"))?;

    let mut links = 0;
    for _ in 0..200 {
        let cells = (0..16)
            .map(|k| MapCell {
                location: Point::new(10.0 + 20.0 * (k % 4) as f64, 10.0 + 20.0 * (k / 4) as f64),
                class: EnvironmentClass::TRAINING[r.random_range(0..3)],
            })
            .collect();
        let map = MorphologyMap {
            origin: Point::new(0.0, 0.0),
            spacing: 20.0,
            cells,
            model_id: String::new(),
            crs_note: String::new(),
            projection: Projection::new(0.0, 0.0).unwrap(),
        };
        let mut p = PathLossParams::uniform(c(0.0), range.0, range.1);
        for e in EnvironmentClass::TRAINING {
            p.set(e, Situation::LoS, c(r.random_range(10.0..60.0))).map_err(err)?;
        }
        let q = LinkQuery {
            tx: Point::new(r.random_range(0.0..80.0), r.random_range(0.0..80.0)),
            rx: Point::new(r.random_range(0.0..80.0), r.random_range(0.0..80.0)),
            frequency_ghz: 2.0,
            situation: Situation::LoS,
        };
        if q.tx.distance(&q.rx) < 1.0 {
            continue;
        }
        let a = link_loss(&map, &p, &q).map_err(err)?;
        let b = link_loss(&map, &p, &LinkQuery { tx: q.rx, rx: q.tx, ..q }).map_err(err)?;
        ensure(a.loss_db == b.loss_db && a.env_used == b.env_used, "swap changes the result")?;
        let per = |e| median_loss(&p, e, Situation::LoS, a.distance_m, 2.0).map_err(err);
        ensure(a.loss_db == per(a.env_tx)?.min(per(a.env_rx)?), "cross-environment loss is not the minimum")?;
        links += 1;
    }
    Ok(format!("1000 monotonic draws, {links} links symmetric and minimal, 70.0 dB case {l70}"))
}

fn c8_boundary(env: &Env) -> Check {
    let cfg = env.config("a");
    let o = cmd_boundary(&cfg, "avg_height", "building_count", None).map_err(err)?;
    let mut rd = csv::Reader::from_path(&o.csv).map_err(err)?;
    let mut uhr = Vec::new();
    let mut other = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(err)?;
        let h: f64 = rec[0].parse().map_err(err)?;
        if &rec[2] == "UHR" {
            uhr.push(h);
        } else {
            other.push(h);
        }
    }
    ensure(!uhr.is_empty() && !other.is_empty(), format!("{} UHR cells of {}", uhr.len(), uhr.len() + other.len()))?;
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (mu, mo) = (median(&mut uhr), median(&mut other));
    ensure(mu > mo, format!("UHR median avg_height {mu:.2} not above {mo:.2}"))?;
    Ok(format!("median avg_height UHR {mu:.2} m vs other {mo:.2} m over {} UHR cells", uhr.len()))
}

fn report(id: u32, name: &str, f: impl FnOnce() -> Check) -> bool {
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match &res {
        Ok(m) => println!("ACCEPTANCE {id} PASS {name}: {m}"),
        Err(m) => println!("ACCEPTANCE {id} FAIL {name}: {m}"),
    }
    res.is_ok()
}

fn main() {
    let env = Env::new();
    let trained = train_single_threaded(&env, "a");
    let t = || trained.as_ref().map_err(Clone::clone);
    let results = [
        report(1, "published metrics", c1_metrics),
        report(2, "synthetic pipeline", || c2_pipeline(t()?)),
        report(3, "feature importance", || c3_importance(t()?)),
        report(4, "training labels on the map", || c4_labels_reproduced(&env)),
        report(5, "oracle equivalence", c5_oracles),
        report(6, "determinism", || c6_determinism(&env)),
        report(7, "path loss properties", c7_pathloss),
        report(8, "decision boundary", || c8_boundary(&env)),
    ];
    let failed: Vec<usize> = (0..8).filter(|&i| !results[i]).map(|i| i + 1).collect();
    if failed.is_empty() {
        println!("acceptance: 8/8 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
