//! Parameter sweeps over beam intensity: one row per grid point per
//! (model x detector flavor), evaluated by the streaming moment paths and
//! written as CSV or JSON in a deterministic order.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use photocond::add::{self, PdcParams};
use photocond::detectors::{DetectorFlavor, DetectorModel};
use photocond::error::{Error, Result};
use photocond::outcome::ProcessMoments;
use photocond::states::{FieldStateSpec, PhotonNumberDistribution};
use photocond::subtract::{self, BeamSplitterParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessKind {
    Subtract,
    Add,
    Sequential,
}

impl ProcessKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "subtract" => Ok(ProcessKind::Subtract),
            "add" => Ok(ProcessKind::Add),
            "sequential" => Ok(ProcessKind::Sequential),
            other => Err(Error::Domain(format!("unknown process '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Model {
    Exact,
    A,
    E,
}

impl Model {
    pub fn label(self) -> &'static str {
        match self {
            Model::Exact => "exact",
            Model::A => "A",
            Model::E => "E",
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Model>> {
        let mut models = Vec::new();
        for item in s.split(',') {
            let model = match item.trim() {
                "exact" => Model::Exact,
                "A" => Model::A,
                "E" => Model::E,
                other => return Err(Error::Domain(format!("unknown model '{other}'"))),
            };
            if !models.contains(&model) {
                models.push(model);
            }
        }
        if models.is_empty() {
            return Err(Error::Domain("at least one model is required".into()));
        }
        models.sort();
        Ok(models)
    }
}

/// State shape whose total mean is rescaled to each grid point.
#[derive(Debug, Clone, Copy)]
pub enum StateTemplate {
    Coherent,
    Thermal,
    /// Mixed light with a fixed coherent fraction n_c / (n_c + n_t).
    Mixed { coherent_fraction: f64 },
}

impl StateTemplate {
    pub fn from_spec(spec: &FieldStateSpec) -> Result<Self> {
        match spec {
            FieldStateSpec::Coherent { .. } => Ok(StateTemplate::Coherent),
            FieldStateSpec::Thermal { .. } => Ok(StateTemplate::Thermal),
            FieldStateSpec::MixedLight { coherent_mean, thermal_mean } => {
                if !(*thermal_mean > 0.0) {
                    return Err(Error::Domain(
                        "mixed-light sweeps need a positive thermal part".into(),
                    ));
                }
                Ok(StateTemplate::Mixed {
                    coherent_fraction: coherent_mean / (coherent_mean + thermal_mean),
                })
            }
            other => Err(Error::Domain(format!(
                "cannot sweep the mean photon number of a {} state",
                other.kind_name()
            ))),
        }
    }

    pub fn at(&self, n0: f64) -> FieldStateSpec {
        match self {
            StateTemplate::Coherent => FieldStateSpec::Coherent { mean: n0 },
            StateTemplate::Thermal => FieldStateSpec::Thermal { mean: n0 },
            StateTemplate::Mixed { coherent_fraction } => FieldStateSpec::MixedLight {
                coherent_mean: coherent_fraction * n0,
                thermal_mean: (1.0 - coherent_fraction) * n0,
            },
        }
    }

}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Domain(format!("unknown format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub process: ProcessKind,
    pub state: StateTemplate,
    pub detector_k: u32,
    /// Beam-splitter reflectivity R, or the down-conversion gain lambda.
    pub strength: f64,
    /// Mean photon numbers, strictly increasing, at least two points.
    pub grid: Vec<f64>,
    pub models: Vec<Model>,
    pub epsilon: f64,
    /// Emit the instantaneous-detector rows next to the sequential ones
    /// (used by the sequential-comparison preset).
    pub compare_instantaneous: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.len() < 2 {
            return Err(Error::Domain(
                "sweep grid needs at least two points; use `point` for single evaluations".into(),
            ));
        }
        if !self.grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Domain("sweep grid must be strictly increasing".into()));
        }
        if !self.grid.iter().all(|&v| v > 0.0 && v.is_finite()) {
            return Err(Error::Domain("sweep grid values must be positive".into()));
        }
        match self.process {
            ProcessKind::Add => {
                if !(self.strength > 0.0) {
                    return Err(Error::Domain("gain must be > 0".into()));
                }
            }
            _ => {
                if !(self.strength > 0.0 && self.strength < 1.0) {
                    return Err(Error::Domain("reflectivity must lie in (0, 1)".into()));
                }
            }
        }
        if self.detector_k == 0 {
            return Err(Error::Domain("detector threshold k must be >= 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Domain("epsilon must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// The abscissa scale: n0 R for subtraction, n0 r for addition.
    pub fn intensity_scale(&self) -> Result<f64> {
        match self.process {
            ProcessKind::Add => Ok(PdcParams::from_gain(self.strength)?.r()),
            _ => Ok(self.strength),
        }
    }
}

/// 60 log-spaced mean photon numbers spanning scaled intensity
/// [1e-3, 1e2] for the given R or r.
pub fn default_grid(scale: f64) -> Vec<f64> {
    log_grid(1e-3 / scale, 1e2 / scale, 60)
}

pub fn log_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    let ratio = (max / min).ln();
    (0..points)
        .map(|i| min * (ratio * i as f64 / (points - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n0: f64,
    #[serde(rename = "n0_times_R_or_r")]
    pub n0_times_r_or_r: f64,
    #[serde(rename = "P")]
    pub probability: f64,
    pub mean_n: Option<f64>,
    pub mean_n_over_n0: Option<f64>,
    pub second_factorial: Option<f64>,
    pub second_factorial_over_n0sq: Option<f64>,
    pub model: String,
    pub detector: String,
}

impl SweepRow {
    fn new(n0: f64, scaled: f64, model: &str, detector: String, moments: Result<ProcessMoments>) -> Result<Self> {
        match moments {
            Ok(m) => Ok(SweepRow {
                n0,
                n0_times_r_or_r: scaled,
                probability: m.probability,
                mean_n: Some(m.mean),
                mean_n_over_n0: Some(m.mean / n0),
                second_factorial: Some(m.second_factorial),
                second_factorial_over_n0sq: Some(m.second_factorial / (n0 * n0)),
                model: model.to_string(),
                detector,
            }),
            // A detector outcome of probability zero still gets a row.
            Err(Error::ImpossibleOutcome(_)) => Ok(SweepRow {
                n0,
                n0_times_r_or_r: scaled,
                probability: 0.0,
                mean_n: None,
                mean_n_over_n0: None,
                second_factorial: None,
                second_factorial_over_n0sq: None,
                model: model.to_string(),
                detector,
            }),
            Err(other) => Err(other),
        }
    }
}

fn point_rows(cfg: &SweepConfig, n0: f64, scale: f64) -> Result<Vec<SweepRow>> {
    let dist: PhotonNumberDistribution = cfg.state.at(n0).build(cfg.epsilon)?;
    let k = cfg.detector_k;
    let scaled = n0 * scale;
    let mut rows = Vec::new();
    // Detector-flavor order inside a model: nonresolving then resolving,
    // matching the flag spellings n:K < r:K.
    let flavors = [DetectorFlavor::Nonresolving, DetectorFlavor::Resolving];
    match cfg.process {
        ProcessKind::Subtract => {
            let bs = BeamSplitterParams::from_reflectivity(cfg.strength)?;
            for model in &cfg.models {
                match model {
                    Model::Exact => {
                        for flavor in flavors {
                            let d = DetectorModel::new(flavor, k)?;
                            rows.push(SweepRow::new(
                                n0,
                                scaled,
                                model.label(),
                                d.to_string(),
                                subtract::subtract_exact_moments(&dist, &bs, &d),
                            )?);
                        }
                    }
                    Model::A => rows.push(SweepRow::new(
                        n0,
                        scaled,
                        model.label(),
                        "-".into(),
                        subtract::subtract_model_a_moments(&dist, &bs, k),
                    )?),
                    Model::E => rows.push(SweepRow::new(
                        n0,
                        scaled,
                        model.label(),
                        "-".into(),
                        subtract::subtract_model_e_moments(&dist, k),
                    )?),
                }
            }
        }
        ProcessKind::Add => {
            let pdc = PdcParams::from_gain(cfg.strength)?;
            for model in &cfg.models {
                match model {
                    Model::Exact => {
                        for flavor in flavors {
                            let d = DetectorModel::new(flavor, k)?;
                            rows.push(SweepRow::new(
                                n0,
                                scaled,
                                model.label(),
                                d.to_string(),
                                add::add_exact_moments(&dist, &pdc, &d),
                            )?);
                        }
                    }
                    Model::A => rows.push(SweepRow::new(
                        n0,
                        scaled,
                        model.label(),
                        "-".into(),
                        add::add_model_a_moments(&dist, &pdc, k),
                    )?),
                    Model::E => rows.push(SweepRow::new(
                        n0,
                        scaled,
                        model.label(),
                        "-".into(),
                        add::add_model_e_moments(&dist, k),
                    )?),
                }
            }
        }
        ProcessKind::Sequential => {
            let bs = BeamSplitterParams::from_reflectivity(cfg.strength)?;
            if cfg.compare_instantaneous {
                for flavor in flavors {
                    let d = DetectorModel::new(flavor, k)?;
                    rows.push(SweepRow::new(
                        n0,
                        scaled,
                        "exact",
                        d.to_string(),
                        subtract::subtract_exact_moments(&dist, &bs, &d),
                    )?);
                }
            }
            rows.push(SweepRow::new(
                n0,
                scaled,
                "sequential",
                format!("s:{k}"),
                subtract::subtract_sequential_moments(&dist, &bs, k),
            )?);
        }
    }
    Ok(rows)
}

/// Run the sweep; rows come back grid-major, then model, then detector
/// flavor, independent of evaluation order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let scale = cfg.intensity_scale()?;
    // Grid points whose state vectors run to tens of millions of entries
    // are evaluated serially to keep peak memory at a single vector.
    let max_len = cfg.grid.last().copied().unwrap_or(0.0) * (1.0 / cfg.epsilon).ln();
    let nested: Vec<Result<Vec<SweepRow>>> = if max_len > 3e6 {
        cfg.grid.iter().map(|&n0| point_rows(cfg, n0, scale)).collect()
    } else {
        cfg.grid
            .par_iter()
            .map(|&n0| point_rows(cfg, n0, scale))
            .collect()
    };
    let mut rows = Vec::new();
    for chunk in nested {
        rows.extend(chunk?);
    }
    report_crossover(cfg, &rows);
    Ok(rows)
}

/// Note where the exact nonresolving curve switches from tracking the
/// A-model to tracking the E-model.
fn report_crossover(cfg: &SweepConfig, rows: &[SweepRow]) {
    let has = |m: Model| cfg.models.contains(&m);
    if cfg.process == ProcessKind::Sequential || !has(Model::Exact) || !has(Model::A) || !has(Model::E)
    {
        return;
    }
    let mut previous: Option<(f64, f64)> = None;
    for point in rows.chunks(cfg.models.len() + 1) {
        let exact = point
            .iter()
            .find(|r| r.model == "exact" && r.detector.starts_with("n:"));
        let model_a = point.iter().find(|r| r.model == "A");
        let model_e = point.iter().find(|r| r.model == "E");
        let (Some(exact), Some(a), Some(e)) = (exact, model_a, model_e) else {
            return;
        };
        let (Some(me), Some(ma), Some(mem)) = (exact.mean_n, a.mean_n, e.mean_n) else {
            continue;
        };
        let gap = (me - ma).abs() - (me - mem).abs();
        if let Some((x_prev, gap_prev)) = previous {
            if gap_prev < 0.0 && gap >= 0.0 {
                log::info!(
                    "exact nonresolving curve crosses from A-model to E-model between scaled intensity {x_prev} and {}",
                    exact.n0_times_r_or_r
                );
                return;
            }
        }
        previous = Some((exact.n0_times_r_or_r, gap));
    }
}

/// Full round-trip precision CSV with a mandatory header; empty cells mark
/// impossible outcomes.
pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(
        "n0,n0_times_R_or_r,P,mean_n,mean_n_over_n0,second_factorial,second_factorial_over_n0sq,model,detector\n",
    );
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.n0,
            r.n0_times_r_or_r,
            r.probability,
            cell(r.mean_n),
            cell(r.mean_n_over_n0),
            cell(r.second_factorial),
            cell(r.second_factorial_over_n0sq),
            r.model,
            r.detector
        );
    }
    out
}

pub fn rows_to_json(rows: &[SweepRow]) -> String {
    let mut out = serde_json::to_string_pretty(rows).expect("rows serialize");
    out.push('\n');
    out
}

/// The figure-reproduction presets.
pub fn preset(name: &str) -> Result<SweepConfig> {
    let models = vec![Model::Exact, Model::A, Model::E];
    match name {
        // Mixed light, coherent part a quarter of the thermal part.
        "fig1" => Ok(SweepConfig {
            process: ProcessKind::Subtract,
            state: StateTemplate::Mixed { coherent_fraction: 0.2 },
            detector_k: 1,
            strength: 1e-2,
            grid: default_grid(1e-2),
            models,
            epsilon: photocond::DEFAULT_EPSILON,
            compare_instantaneous: false,
        }),
        // Mixed light, coherent part ten times the thermal part.
        "fig2" => Ok(SweepConfig {
            process: ProcessKind::Subtract,
            state: StateTemplate::Mixed { coherent_fraction: 10.0 / 11.0 },
            detector_k: 1,
            strength: 1e-2,
            grid: default_grid(1e-2),
            models,
            epsilon: photocond::DEFAULT_EPSILON,
            compare_instantaneous: false,
        }),
        // Two sequential on/off detections against instantaneous two-photon
        // detection, thermal light.
        "fig3" => Ok(SweepConfig {
            process: ProcessKind::Sequential,
            state: StateTemplate::Thermal,
            detector_k: 2,
            strength: 1e-2,
            grid: default_grid(1e-2),
            models: vec![Model::Exact],
            epsilon: photocond::DEFAULT_EPSILON,
            compare_instantaneous: true,
        }),
        // Thermal-state photon addition.
        "fig4" => {
            let scale = PdcParams::from_gain(1e-2)?.r();
            Ok(SweepConfig {
                process: ProcessKind::Add,
                state: StateTemplate::Thermal,
                detector_k: 1,
                strength: 1e-2,
                grid: default_grid(scale),
                models,
                epsilon: photocond::DEFAULT_EPSILON,
                compare_instantaneous: false,
            })
        }
        other => Err(Error::Domain(format!("unknown preset '{other}'"))),
    }
}
