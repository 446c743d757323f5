//! Experiment configuration, seeded sweeps and CSV output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::{run_scheme, SchemeId, Tuning};
use crate::error::{Error, Result};
use crate::metrics::to_db;
use crate::model::{Instance, PathLossExponents, Point, SystemConfig};
use crate::report::Termination;

/// Environment variable that caps the number of sweep worker threads.
pub const THREADS_ENV: &str = "IRS_COORD_THREADS";

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Three BSs with three antennas each at `(-100, 0)`, `(100, 0)` and
/// `(0, 100)`, one user per cell at 5 m from the origin towards its BS, a
/// 20-unit IRS at `(0, -10)`, 35 dBm per BS and -80 dBm noise.
pub fn default_scenario() -> SystemConfig {
    let bs = vec![Point::new(-100.0, 0.0), Point::new(100.0, 0.0), Point::new(0.0, 100.0)];
    let mut cfg = SystemConfig {
        cells: 3,
        antennas: 3,
        irs_units: 20,
        users_per_cell: vec![1; 3],
        power_w: vec![dbm_to_watts(35.0); 3],
        weights: vec![vec![1.0]; 3],
        noise_w: vec![vec![dbm_to_watts(-80.0)]; 3],
        bs_positions: bs,
        user_positions: Vec::new(),
        irs_position: Point::new(0.0, -10.0),
        exponents: PathLossExponents {
            bs_user: 3.6,
            bs_irs: 2.0,
            irs_user: 2.5,
        },
        c0: 1e-3,
        d0: 1.0,
        rician_k: 2.0,
    };
    cfg.user_positions = edge_positions(&cfg.bs_positions, 5.0);
    cfg
}

/// One user per cell, `d` meters from the origin in the direction of its BS.
fn edge_positions(bs: &[Point], d: f64) -> Vec<Vec<Point>> {
    bs.iter()
        .map(|p| {
            let r = p.x.hypot(p.y);
            vec![Point::new(d * p.x / r, d * p.y / r)]
        })
        .collect()
}

/// How user positions are chosen for each trial.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Positions from the base configuration.
    #[default]
    Fixed,
    /// Uniform in the triangle spanned by three BSs.
    Triangle,
    /// Uniform in a disk of radius `disk_radius_m` centered 10 m from the
    /// origin towards each BS.
    CellEdge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Antennas,
    PMaxDbm,
    IrsUnits,
    DUserM,
    UsersPerCell,
    NumRandomizations,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Antennas => "antennas",
            SweepAxis::PMaxDbm => "p_max_dbm",
            SweepAxis::IrsUnits => "irs_units",
            SweepAxis::DUserM => "d_user_m",
            SweepAxis::UsersPerCell => "users_per_cell",
            SweepAxis::NumRandomizations => "num_randomizations",
        }
    }
}

/// Field-wise tuning overrides; absent fields keep the sweep default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningOverride {
    pub eps: Option<f64>,
    pub max_iters: Option<usize>,
    pub num_rand: Option<usize>,
    pub tol_rel: Option<f64>,
    pub gamma: Option<f64>,
    pub steps: Option<usize>,
    pub random_init: Option<bool>,
}

impl TuningOverride {
    fn apply(&self, t: &Tuning) -> Tuning {
        Tuning {
            eps: self.eps.unwrap_or(t.eps),
            max_iters: self.max_iters.unwrap_or(t.max_iters),
            num_rand: self.num_rand.unwrap_or(t.num_rand),
            tol_rel: self.tol_rel.unwrap_or(t.tol_rel),
            gamma: self.gamma.unwrap_or(t.gamma),
            steps: self.steps.unwrap_or(t.steps),
            random_init: self.random_init.unwrap_or(t.random_init),
        }
    }
}

fn default_disk_radius() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default = "default_disk_radius")]
    pub disk_radius_m: f64,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub schemes: Vec<SchemeId>,
    pub seed_start: u64,
    pub seed_count: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tuning: Tuning,
    /// Keyed by scheme name, e.g. `"lowcx_ao"`.
    #[serde(default)]
    pub overrides: BTreeMap<String, TuningOverride>,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let spec: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep value list is empty".into()));
        }
        if self.seed_count == 0 {
            return Err(Error::Config("seed range is empty".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes selected".into()));
        }
        for key in self.overrides.keys() {
            key.parse::<SchemeId>()?;
        }
        for &v in &self.values {
            self.config_for(v, self.seed_start)?;
            self.tuning_for(&self.schemes[0], v)?;
        }
        Ok(())
    }

    /// Configuration of one trial: the base with the axis value applied and
    /// users placed for `seed`.
    pub fn config_for(&self, value: f64, seed: u64) -> Result<SystemConfig> {
        let mut cfg = self.base.clone();
        let count = |v: f64, what: &str| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v <= 1e6 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{what} must be a positive integer, got {v}")))
            }
        };
        match self.axis {
            SweepAxis::Antennas => cfg.antennas = count(value, "antenna count")?,
            SweepAxis::PMaxDbm => {
                if !value.is_finite() {
                    return Err(Error::Config(format!("invalid power {value} dBm")));
                }
                cfg.power_w = vec![dbm_to_watts(value); cfg.cells];
            }
            SweepAxis::IrsUnits => cfg.irs_units = count(value, "IRS unit count")?,
            SweepAxis::DUserM => {
                if !(value > 0.0) || cfg.users_per_cell.iter().any(|&k| k != 1) {
                    return Err(Error::Config(
                        "user distance sweeps need one user per cell and a positive distance".into(),
                    ));
                }
                cfg.user_positions = edge_positions(&cfg.bs_positions, value);
            }
            SweepAxis::UsersPerCell => {
                let k = count(value, "users per cell")?;
                cfg.users_per_cell = vec![k; cfg.cells];
                cfg.weights = (0..cfg.cells).map(|b| vec![cfg.weights[b][0]; k]).collect();
                cfg.noise_w = (0..cfg.cells).map(|b| vec![cfg.noise_w[b][0]; k]).collect();
                cfg.user_positions = (0..cfg.cells).map(|b| vec![cfg.user_positions[b][0]; k]).collect();
                if self.placement == Placement::Fixed && k > 1 {
                    return Err(Error::Config("several users per cell need a random placement".into()));
                }
            }
            SweepAxis::NumRandomizations => {
                count(value, "randomization count")?;
            }
        }
        place_users(&mut cfg, self.placement, self.disk_radius_m, seed)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn tuning_for(&self, scheme: &SchemeId, value: f64) -> Result<Tuning> {
        let mut t = self.tuning.clone();
        if let Some(o) = self.overrides.get(&scheme.to_string()) {
            t = o.apply(&t);
        }
        if self.axis == SweepAxis::NumRandomizations {
            t.num_rand = value as usize;
        }
        if !(t.eps > 0.0 && t.tol_rel > 0.0 && t.gamma > 0.0 && t.max_iters > 0 && t.num_rand > 0) {
            return Err(Error::Config(format!("invalid tuning for {scheme}")));
        }
        Ok(t)
    }
}

fn place_users(cfg: &mut SystemConfig, placement: Placement, radius: f64, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(5 << 56);
    match placement {
        Placement::Fixed => {}
        Placement::Triangle => {
            if cfg.cells != 3 {
                return Err(Error::Config("triangle placement needs exactly three BSs".into()));
            }
            let [a, b, c] = [cfg.bs_positions[0], cfg.bs_positions[1], cfg.bs_positions[2]];
            for cell in 0..3 {
                for k in 0..cfg.users_per_cell[cell] {
                    let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
                    if r1 + r2 > 1.0 {
                        (r1, r2) = (1.0 - r1, 1.0 - r2);
                    }
                    cfg.user_positions[cell][k] = Point::new(
                        a.x + r1 * (b.x - a.x) + r2 * (c.x - a.x),
                        a.y + r1 * (b.y - a.y) + r2 * (c.y - a.y),
                    );
                }
            }
        }
        Placement::CellEdge => {
            if !(radius > 0.0) {
                return Err(Error::Config("disk radius must be positive".into()));
            }
            for cell in 0..cfg.cells {
                let p = cfg.bs_positions[cell];
                let d = p.x.hypot(p.y);
                let center = Point::new(10.0 * p.x / d, 10.0 * p.y / d);
                for k in 0..cfg.users_per_cell[cell] {
                    let r = radius * rng.random::<f64>().sqrt();
                    let th = rng.random_range(0.0..std::f64::consts::TAU);
                    cfg.user_positions[cell][k] = Point::new(center.x + r * th.cos(), center.y + r * th.sin());
                }
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub seed: u64,
    pub scheme: String,
    pub axis: String,
    pub axis_value: f64,
    pub min_sinr_db: f64,
    pub iters: usize,
    pub wall_ms: f64,
    pub termination: Termination,
}

/// Runs one trial and turns it into a row; failures become rows too.
pub fn run_trial(spec: &ExperimentSpec, scheme: &SchemeId, value: f64, seed: u64) -> ResultRow {
    let row = |min_sinr_db: f64, iters: usize, wall_ms: f64, termination: Termination| ResultRow {
        seed,
        scheme: scheme.to_string(),
        axis: spec.axis.as_str().to_string(),
        axis_value: value,
        min_sinr_db,
        iters,
        wall_ms,
        termination,
    };
    let outcome = spec
        .config_for(value, seed)
        .and_then(|cfg| Instance::sample(&cfg, seed))
        .and_then(|inst| run_scheme(scheme, &inst, seed, &spec.tuning_for(scheme, value)?));
    match outcome {
        Ok(rep) => row(to_db(rep.objective), rep.iterations, rep.wall_ms(), rep.termination),
        Err(Error::Inapplicable(_)) => row(f64::NAN, 0, 0.0, Termination::Inapplicable),
        Err(_) => row(f64::NAN, 0, 0.0, Termination::SolverFailure),
    }
}

/// Every `(value, scheme, seed)` trial of the spec, sorted by axis value,
/// scheme name and seed.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut tasks: Vec<(f64, &SchemeId, u64)> = Vec::new();
    for &v in &spec.values {
        for s in &spec.schemes {
            tasks.extend((spec.seed_start..spec.seed_start + spec.seed_count).map(|seed| (v, s, seed)));
        }
    }
    let work = || -> Vec<ResultRow> {
        tasks
            .par_iter()
            .map(|&(v, s, seed)| run_trial(spec, s, v, seed))
            .collect()
    };
    let mut rows = match std::env::var(THREADS_ENV).ok().and_then(|s| s.parse::<usize>().ok()) {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        _ => work(),
    };
    rows.sort_by(|a, b| {
        a.axis_value
            .total_cmp(&b.axis_value)
            .then_with(|| a.scheme.cmp(&b.scheme))
            .then_with(|| a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

pub const CSV_HEADER: [&str; 8] = [
    "seed",
    "scheme",
    "axis",
    "axis_value",
    "min_sinr_db",
    "iters",
    "wall_ms",
    "termination",
];

/// `x` with six significant digits in positional notation.
pub fn six_significant(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = 5 - mag;
    if decimals >= 0 {
        format!("{x:.*}", decimals as usize)
    } else {
        let unit = 10f64.powi(-decimals);
        format!("{:.0}", (x / unit).round() * unit)
    }
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let err = |source: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.scheme.clone(),
            r.axis.clone(),
            r.axis_value.to_string(),
            six_significant(r.min_sinr_db),
            r.iters.to_string(),
            format!("{:.3}", r.wall_ms),
            r.termination.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let err = |source: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let header = r.headers().map_err(err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!("{}: unexpected CSV header", path.display())));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(err)?;
            let field = |i: usize| rec.get(i).unwrap_or_default();
            let bad = |i: usize| Error::Config(format!("{}: bad {} '{}'", path.display(), CSV_HEADER[i], field(i)));
            Ok(ResultRow {
                seed: field(0).parse().map_err(|_| bad(0))?,
                scheme: field(1).to_string(),
                axis: field(2).to_string(),
                axis_value: field(3).parse().map_err(|_| bad(3))?,
                min_sinr_db: field(4).parse().map_err(|_| bad(4))?,
                iters: field(5).parse().map_err(|_| bad(5))?,
                wall_ms: field(6).parse().map_err(|_| bad(6))?,
                termination: Termination::parse(field(7)).ok_or_else(|| bad(7))?,
            })
        })
        .collect()
}
