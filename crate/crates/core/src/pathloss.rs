//! Site-general median path loss `L = 10·α·log10(d) + β + 10·γ·log10(f)` per
//! environment class, with the lowest-loss rule for links whose endpoints
//! lie in different environments.
//!
//! Coefficients come from a JSON table supplied by the user. The bundled
//! [`PLACEHOLDER_PARAMS_JSON`] only exists so the pipeline runs end to end; its
//! numbers are not taken from any recommendation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};
use crate::features::EnvironmentClass;
use crate::geom::Point;
use crate::mapgen::MorphologyMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Situation {
    LoS,
    NLoS,
}

impl Situation {
    fn index(self) -> usize {
        match self {
            Situation::LoS => 0,
            Situation::NLoS => 1,
        }
    }
}

impl fmt::Display for Situation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Situation::LoS => "LoS",
            Situation::NLoS => "NLoS",
        })
    }
}

impl FromStr for Situation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "los" => Ok(Situation::LoS),
            "nlos" => Ok(Situation::NLoS),
            _ => Err(Error::Range(format!("unknown situation {s:?} (expected LoS or NLoS)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Shadow-fading standard deviation, dB.
    pub sigma: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(default)]
    note: Option<String>,
    envs: BTreeMap<String, BTreeMap<String, Coefficients>>,
    d_range: [f64; 2],
    f_range: [f64; 2],
}

/// Lowest and highest frequency any table may declare, GHz.
pub const FREQUENCY_LIMITS_GHZ: (f64, f64) = (0.3, 100.0);

#[derive(Debug, Clone, PartialEq)]
pub struct PathLossParams {
    /// Indexed by training class, then situation.
    table: [[Option<Coefficients>; 2]; 3],
    /// Valid link distance, metres.
    pub d_range: (f64, f64),
    /// Valid frequency, GHz.
    pub f_range: (f64, f64),
    pub note: Option<String>,
}

/// Example table in the expected layout. The values are made up.
pub const PLACEHOLDER_PARAMS_JSON: &str = r#"{
  "note": "PLACEHOLDER coefficients for testing only; replace with values transcribed from the recommendation tables",
  "envs": {
    "RES": {
      "LoS":  {"alpha": 2.0, "beta": 30.0, "gamma": 2.0, "sigma": 4.0},
      "NLoS": {"alpha": 4.0, "beta": 5.0, "gamma": 2.0, "sigma": 8.0}
    },
    "ULR": {
      "LoS":  {"alpha": 2.1, "beta": 29.0, "gamma": 2.0, "sigma": 5.0},
      "NLoS": {"alpha": 4.0, "beta": 10.0, "gamma": 2.3, "sigma": 7.5}
    },
    "UHR": {
      "LoS":  {"alpha": 2.3, "beta": 28.0, "gamma": 2.0, "sigma": 3.5},
      "NLoS": {"alpha": 4.4, "beta": -6.0, "gamma": 2.3, "sigma": 7.0}
    }
  },
  "d_range": [5.0, 1000.0],
  "f_range": [0.8, 82.0]
}
"#;

fn env_slot(key: &str) -> Result<usize> {
    match key {
        "RES" => Ok(0),
        "ULR" => Ok(1),
        // Very high-rise is folded into high-rise.
        "UHR" | "UVHR" => Ok(2),
        _ => Err(Error::Range(format!("unknown environment {key:?} in path-loss table"))),
    }
}

impl PathLossParams {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawParams = serde_json::from_str(text)
            .map_err(|e| Error::Range(format!("invalid path-loss table: {e}")))?;
        let mut table = [[None; 2]; 3];
        for (env, sits) in &raw.envs {
            let slot = env_slot(env)?;
            for (sit, c) in sits {
                let s = sit.parse::<Situation>()?.index();
                if ![c.alpha, c.beta, c.gamma, c.sigma].iter().all(|v| v.is_finite()) || c.sigma < 0.0 {
                    return Err(Error::Range(format!("invalid coefficients for {env}/{sit}")));
                }
                if table[slot][s].replace(*c).is_some() {
                    return Err(Error::Range(format!("duplicate entry for {env}/{sit}")));
                }
            }
        }
        let [d0, d1] = raw.d_range;
        let [f0, f1] = raw.f_range;
        if !(d0 > 0.0 && d0 < d1 && d1.is_finite()) {
            return Err(Error::Range(format!("invalid distance range [{d0}, {d1}]")));
        }
        let (lo, hi) = FREQUENCY_LIMITS_GHZ;
        if !(f0 >= lo && f0 < f1 && f1 <= hi) {
            return Err(Error::Range(format!(
                "frequency range [{f0}, {f1}] GHz must lie within [{lo}, {hi}]"
            )));
        }
        Ok(PathLossParams {
            table,
            d_range: (d0, d1),
            f_range: (f0, f1),
            note: raw.note,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Range(format!("{} is not UTF-8", path.display())))?;
        PathLossParams::from_json(&text)
    }

    pub fn placeholder() -> Self {
        PathLossParams::from_json(PLACEHOLDER_PARAMS_JSON).expect("placeholder table is valid")
    }

    /// Single-entry table, mostly for tests.
    pub fn uniform(c: Coefficients, d_range: (f64, f64), f_range: (f64, f64)) -> Self {
        PathLossParams {
            table: [[Some(c); 2]; 3],
            d_range,
            f_range,
            note: None,
        }
    }

    pub fn set(&mut self, env: EnvironmentClass, situation: Situation, c: Coefficients) -> Result<()> {
        let e = covered(env)?;
        self.table[e][situation.index()] = Some(c);
        Ok(())
    }

    pub fn coefficients(&self, env: EnvironmentClass, situation: Situation) -> Result<Coefficients> {
        let e = covered(env)?;
        self.table[e][situation.index()].ok_or_else(|| {
            Error::NoCoverage(format!("path-loss table has no {env}/{situation} entry"))
        })
    }
}

fn covered(env: EnvironmentClass) -> Result<usize> {
    env.index()
        .ok_or_else(|| Error::NoCoverage(format!("no path-loss model for {env} cells")))
}

fn check_range(what: &str, unit: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if !(v >= lo) {
        return Err(Error::Range(format!("{what} {v} {unit} below minimum {lo} {unit}")));
    }
    if !(v <= hi) {
        return Err(Error::Range(format!("{what} {v} {unit} above maximum {hi} {unit}")));
    }
    Ok(())
}

/// Median loss in dB for distance `d` (m) and frequency `f` (GHz).
pub fn median_loss(params: &PathLossParams, env: EnvironmentClass, situation: Situation, d: f64, f: f64) -> Result<f64> {
    let c = params.coefficients(env, situation)?;
    check_range("distance", "m", d, params.d_range)?;
    check_range("frequency", "GHz", f, params.f_range)?;
    Ok(10.0 * c.alpha * d.log10() + c.beta + 10.0 * c.gamma * f.log10())
}

/// Standard normal quantile, Abramowitz & Stegun 26.2.23 (|error| < 4.5e-4).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile must be in (0, 1)");
    if p == 0.5 {
        return 0.0;
    }
    let q = p.min(1.0 - p);
    let t = (-2.0 * q.ln()).sqrt();
    let (c0, c1, c2) = (2.515517, 0.802853, 0.010328);
    let (d1, d2, d3) = (1.432788, 0.189269, 0.001308);
    let x = t - (c0 + c1 * t + c2 * t * t) / (1.0 + d1 * t + d2 * t * t + d3 * t * t * t);
    if p < 0.5 {
        -x
    } else {
        x
    }
}

/// Median loss plus `sigma · Φ⁻¹(quantile)`.
pub fn shadowed_loss(
    params: &PathLossParams,
    env: EnvironmentClass,
    situation: Situation,
    d: f64,
    f: f64,
    quantile: f64,
) -> Result<f64> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::Range(format!("quantile {quantile} outside (0, 1)")));
    }
    let median = median_loss(params, env, situation, d, f)?;
    let sigma = params.coefficients(env, situation)?.sigma;
    Ok(median + sigma * normal_quantile(quantile))
}

/// Class of the map cell nearest to `p`. Equidistant cells resolve to the
/// smallest `(x, y)`. Points outside the cell squares' bounding box are an error.
pub fn select_environment(map: &MorphologyMap, p: Point) -> Result<EnvironmentClass> {
    let bb = map.extent();
    if map.cells.is_empty() || !(p.x >= bb.min_x && p.x <= bb.max_x && p.y >= bb.min_y && p.y <= bb.max_y) {
        return Err(Error::OutOfMap { x: p.x, y: p.y });
    }
    let key = |c: &crate::mapgen::MapCell| (c.location.distance_sq(&p), c.location.x, c.location.y);
    let best = map
        .cells
        .iter()
        .min_by(|a, b| {
            let (da, xa, ya) = key(a);
            let (db, xb, yb) = key(b);
            da.total_cmp(&db).then(xa.total_cmp(&xb)).then(ya.total_cmp(&yb))
        })
        .expect("nonempty map");
    Ok(best.class)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkQuery {
    pub tx: Point,
    pub rx: Point,
    pub frequency_ghz: f64,
    pub situation: Situation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkLoss {
    pub env_tx: EnvironmentClass,
    pub env_rx: EnvironmentClass,
    pub env_used: EnvironmentClass,
    pub distance_m: f64,
    pub loss_db: f64,
}

/// Median loss of a link. When the endpoints sit in different environments
/// the one giving the lower loss is used; equal losses pick the class that
/// comes first in RES, ULR, UHR order, so swapping endpoints never matters.
pub fn link_loss(map: &MorphologyMap, params: &PathLossParams, q: &LinkQuery) -> Result<LinkLoss> {
    if q.tx == q.rx {
        return Err(Error::Range("transmitter and receiver coincide".into()));
    }
    let env_tx = select_environment(map, q.tx)?;
    let env_rx = select_environment(map, q.rx)?;
    for (end, env) in [("transmitter", env_tx), ("receiver", env_rx)] {
        if env == EnvironmentClass::Open {
            return Err(Error::NoCoverage(format!("{end} lies in an OPEN cell")));
        }
    }
    let d = q.tx.distance(&q.rx);
    let loss = |env| median_loss(params, env, q.situation, d, q.frequency_ghz);
    let (env_used, loss_db) = if env_tx == env_rx {
        (env_tx, loss(env_tx)?)
    } else {
        let mut options = [(env_tx, loss(env_tx)?), (env_rx, loss(env_rx)?)];
        options.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.index().cmp(&b.0.index())));
        options[0]
    };
    Ok(LinkLoss {
        env_tx,
        env_rx,
        env_used,
        distance_m: d,
        loss_db,
    })
}
