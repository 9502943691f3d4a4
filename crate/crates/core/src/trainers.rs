//! Non-iterative trainers.
//!
//! * [`train_pil`]: `V = X⁺`, `Y = σ(XV)`, `W = Y⁺ σ_out⁻¹(T)`.
//! * [`train_pil0`]: as `pil` but with `V` drawn uniformly from an interval.
//! * [`train_epil`]: grows layers `Wˡ = (Yˡ)⁺`, `Yˡ⁺¹ = σ(Yˡ Wˡ)` until
//!   `‖Yˡ(Yˡ)⁺ − I‖_F² < E`, then solves `W^L = (Y^L)⁺ T`.
//! * [`train_pil1`]: as `epil` with `Wˡ = (Yˡ)⁺ + G`, `G` i.i.d. Gaussian.
//!
//! No gradients are computed anywhere; every weight comes from a
//! pseudoinverse solve or a random draw.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::dataset::{Dataset, TargetEncoding};
use crate::error::{PilError, Result};
use crate::linalg::{numerical_rank, projector_residual_with, pseudoinverse, Matrix, RankInfo};
use crate::network::{BiasPolicy, NetworkMeta, PilNetwork};
use crate::rng::{gaussian_matrix, seeded, uniform_matrix, PilRng};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_STOPPING_ERROR: f64 = 1e-8;
pub const DEFAULT_MAX_DEPTH: usize = 16;
pub const DEFAULT_NOISE_STDDEV: f64 = 0.01;
pub const DEFAULT_WEIGHT_INTERVAL: (f64, f64) = (-1.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Pil,
    Pil0,
    Epil,
    Pil1,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Pil, Algorithm::Pil0, Algorithm::Epil, Algorithm::Pil1];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Pil => "pil",
            Algorithm::Pil0 => "pil0",
            Algorithm::Epil => "epil",
            Algorithm::Pil1 => "pil1",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = PilError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| PilError::Config(format!("unknown algorithm {s:?}; expected pil, pil0, epil or pil1")))
    }
}

/// Hidden layer width for the single hidden layer trainers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenWidth {
    /// One hidden neuron per training sample (`l = N`).
    Auto,
    Fixed(usize),
}

impl FromStr for HiddenWidth {
    type Err = PilError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(HiddenWidth::Auto),
            n => n
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .map(HiddenWidth::Fixed)
                .ok_or_else(|| PilError::Config(format!("hidden width must be `auto` or a positive integer, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_width: HiddenWidth,
    /// `E` in the deep trainers' stopping rule.
    pub stopping_error: f64,
    /// Cap on the number of hidden outputs examined by the deep trainers.
    pub max_depth: usize,
    pub noise_stddev: f64,
    pub seed: u64,
    /// Sampling interval for random input weights.
    pub weight_interval: (f64, f64),
    /// Hidden-layer activation.
    pub activation: Activation,
    /// Output activation. `None` means the hidden activation for `pil`/`pil0`
    /// and linear for `epil`/`pil1`.
    pub output_activation: Option<Activation>,
    /// Append a ones column to every hidden output.
    pub hidden_bias: bool,
    pub target_encoding: TargetEncoding,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_width: HiddenWidth::Auto,
            stopping_error: DEFAULT_STOPPING_ERROR,
            max_depth: DEFAULT_MAX_DEPTH,
            noise_stddev: DEFAULT_NOISE_STDDEV,
            seed: 0,
            weight_interval: DEFAULT_WEIGHT_INTERVAL,
            activation: Activation::Tanh,
            output_activation: None,
            hidden_bias: false,
            target_encoding: TargetEncoding::regression_raw(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PilError::Config(msg));
        if !(self.stopping_error > 0.0 && self.stopping_error.is_finite()) {
            return bad(format!("stopping error must be positive, got {}", self.stopping_error));
        }
        if self.max_depth == 0 {
            return bad("max depth must be at least 1".into());
        }
        if !(self.noise_stddev >= 0.0 && self.noise_stddev.is_finite()) {
            return bad(format!("noise stddev must be non-negative, got {}", self.noise_stddev));
        }
        let (lo, hi) = self.weight_interval;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("weight interval needs lo < hi, got [{lo}, {hi}]"));
        }
        if self.hidden_width == HiddenWidth::Fixed(0) {
            return bad("hidden width must be positive".into());
        }
        self.target_encoding.validate()
    }

    fn width_for(&self, n: usize) -> usize {
        match self.hidden_width {
            HiddenWidth::Auto => n,
            HiddenWidth::Fixed(l) => l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    #[serde(rename = "residual_below_E")]
    ResidualBelowE,
    MaxDepth,
    SinglePass,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::ResidualBelowE => "residual_below_E",
            StopReason::MaxDepth => "max_depth",
            StopReason::SinglePass => "single_pass",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Spectrum and projector residual of one hidden output matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
    pub rank: RankInfo,
    /// `‖Y Y⁺ − I‖_F²`.
    pub projector_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub n_samples: usize,
    /// `(1/2N)·‖O − T‖_F²` of the returned network on the training set.
    pub final_sse: f64,
    /// `‖Y W − B‖_F` for the final solve, with `B` the output-activation
    /// preimage of `T`. Equals `‖P B − B‖_F` with `P = Y Y⁺`.
    pub target_residual: f64,
    pub per_layer: Vec<LayerReport>,
    pub depth_used: usize,
    pub stop_reason: StopReason,
    pub clipped_target_count: usize,
    pub warnings: Vec<String>,
    /// Non-deterministic; excluded when comparing reports.
    pub timing: Timing,
}

impl TrainReport {
    /// Equality on everything except [`TrainReport::timing`].
    pub fn same_outcome(&self, other: &TrainReport) -> bool {
        let strip = |r: &TrainReport| TrainReport {
            timing: Timing { wall_time_secs: 0.0 },
            ..r.clone()
        };
        strip(self) == strip(other)
    }
}

/// Dispatches to the trainer for `algo`.
pub fn train(algo: Algorithm, data: &Dataset, cfg: &TrainConfig) -> Result<(PilNetwork, TrainReport)> {
    match algo {
        Algorithm::Pil => train_pil(data, cfg),
        Algorithm::Pil0 => train_pil0(data, cfg),
        Algorithm::Epil => train_epil(data, cfg),
        Algorithm::Pil1 => train_pil1(data, cfg),
    }
}

/// Maps non-finite intermediates onto [`PilError::Numerical`].
fn numeric<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        PilError::InvalidMatrix(msg) => PilError::Numerical(msg),
        other => other,
    })
}

fn layer_report(layer: usize, y: &Matrix, y_pinv: &Matrix) -> Result<LayerReport> {
    Ok(LayerReport {
        layer,
        rows: y.rows(),
        cols: y.cols(),
        rank: numerical_rank(y, None)?,
        projector_residual: numeric(projector_residual_with(y, y_pinv))?,
    })
}

fn with_hidden_bias(y: Matrix, on: bool) -> Matrix {
    if on {
        let c = y.cols();
        y.insert_constant_column(c, 1.0)
    } else {
        y
    }
}

/// Pairs of identical input rows; these make `l = N` exact learning
/// impossible whenever their targets differ.
fn duplicate_rows(x: &Matrix) -> Vec<(usize, usize)> {
    let rows: Vec<Vec<u64>> = (0..x.rows())
        .map(|i| x.row(i).into_iter().map(f64::to_bits).collect())
        .collect();
    let mut out = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            if rows[i] == rows[j] {
                out.push((i, j));
            }
        }
    }
    out
}

struct OutputSolve {
    w: Matrix,
    residual: f64,
    clipped: usize,
}

/// `W = Y⁺ B` with `B = σ_out⁻¹(T)`.
fn solve_output(y: &Matrix, y_pinv: &Matrix, t: &Matrix, out: Activation) -> Result<OutputSolve> {
    let inv = out.apply_inverse(t)?;
    let w = numeric(y_pinv.matmul(&inv.matrix))?;
    let residual = numeric(y.matmul(&w)?.sub(&inv.matrix))?.frobenius_norm();
    Ok(OutputSolve {
        w,
        residual,
        clipped: inv.clipped,
    })
}

fn single_hidden_layer(
    algo: Algorithm,
    data: &Dataset,
    cfg: &TrainConfig,
    input_weights: Matrix,
    started: Instant,
) -> Result<(PilNetwork, TrainReport)> {
    let n = data.len();
    let out = cfg.output_activation.unwrap_or(cfg.activation);
    let y = cfg.activation.apply(&numeric(data.x().matmul(&input_weights))?);
    let y = with_hidden_bias(y, cfg.hidden_bias);
    let y_pinv = numeric(pseudoinverse(&y, None))?;
    let layer = layer_report(0, &y, &y_pinv)?;
    let solve = solve_output(&y, &y_pinv, data.t(), out)?;

    let mut warnings = Vec::new();
    let l = input_weights.cols();
    if l < n {
        warnings.push(format!(
            "hidden width {l} < N = {n}: exact learning not achievable; residual is bounded below by ||PB - B||"
        ));
    } else if layer.rank.numerical_rank < n {
        warnings.push(format!(
            "hidden output rank {} < N = {n}: exact learning not achievable, using the least-squares solution",
            layer.rank.numerical_rank
        ));
    }
    duplicate_warnings(data.x(), &mut warnings);

    let net = PilNetwork::new(
        vec![input_weights, solve.w],
        cfg.activation,
        out,
        BiasPolicy {
            input: data.has_bias(),
            hidden: cfg.hidden_bias,
        },
        NetworkMeta {
            algorithm: algo.to_string(),
            seed: (algo == Algorithm::Pil0).then_some(cfg.seed),
        },
    )?;
    let final_sse = net.sse(data)?;
    let report = TrainReport {
        schema_version: REPORT_SCHEMA_VERSION,
        algorithm: algo,
        n_samples: n,
        final_sse,
        target_residual: solve.residual,
        per_layer: vec![layer],
        depth_used: 1,
        stop_reason: StopReason::SinglePass,
        clipped_target_count: solve.clipped,
        warnings,
        timing: Timing {
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    };
    Ok((net, report))
}

fn duplicate_warnings(x: &Matrix, warnings: &mut Vec<String>) {
    let dups = duplicate_rows(x);
    if let Some(&(i, j)) = dups.first() {
        warnings.push(format!(
            "{} duplicated input row pair(s), first rows {i} and {j}: hidden output cannot have full row rank",
            dups.len()
        ));
    }
}

fn check_output_invertible(cfg: &TrainConfig, default: Activation) -> Result<()> {
    let out = cfg.output_activation.unwrap_or(default);
    if !out.is_invertible() {
        return Err(PilError::Config(format!(
            "output activation {out} has no inverse; pick tanh, sigmoid or linear"
        )));
    }
    Ok(())
}

/// Pseudoinverse input weights: `V = X⁺`, truncated to the first `l`
/// columns when the hidden width is below `N`.
pub fn train_pil(data: &Dataset, cfg: &TrainConfig) -> Result<(PilNetwork, TrainReport)> {
    let started = Instant::now();
    cfg.validate()?;
    check_output_invertible(cfg, cfg.activation)?;
    let n = data.len();
    let l = cfg.width_for(n);
    if l > n {
        return Err(PilError::Config(format!(
            "pil takes its input weights from X⁺, which has N = {n} columns; hidden width {l} is too large"
        )));
    }
    let x_pinv = numeric(pseudoinverse(data.x(), None))?;
    let v = if l < n { x_pinv.leading_columns(l)? } else { x_pinv };
    single_hidden_layer(Algorithm::Pil, data, cfg, v, started)
}

/// Random input weights drawn i.i.d. uniform on `cfg.weight_interval`.
pub fn train_pil0(data: &Dataset, cfg: &TrainConfig) -> Result<(PilNetwork, TrainReport)> {
    let started = Instant::now();
    cfg.validate()?;
    check_output_invertible(cfg, cfg.activation)?;
    let v = random_input_weights(data.x().cols(), cfg.width_for(data.len()), cfg);
    single_hidden_layer(Algorithm::Pil0, data, cfg, v, started)
}

/// The input weight matrix `train_pil0` uses for the given shape and config.
pub fn random_input_weights(inputs: usize, hidden: usize, cfg: &TrainConfig) -> Matrix {
    uniform_matrix(&mut seeded(cfg.seed), inputs, hidden, cfg.weight_interval)
}

/// Dynamically deepened network; see the module docs.
pub fn train_epil(data: &Dataset, cfg: &TrainConfig) -> Result<(PilNetwork, TrainReport)> {
    grow(Algorithm::Epil, data, cfg, None)
}

/// [`train_epil`] with Gaussian perturbation of each hidden weight matrix.
pub fn train_pil1(data: &Dataset, cfg: &TrainConfig) -> Result<(PilNetwork, TrainReport)> {
    let mut rng = seeded(cfg.seed);
    grow(Algorithm::Pil1, data, cfg, Some(&mut rng))
}

fn grow(
    algo: Algorithm,
    data: &Dataset,
    cfg: &TrainConfig,
    mut noise: Option<&mut PilRng>,
) -> Result<(PilNetwork, TrainReport)> {
    let started = Instant::now();
    cfg.validate()?;
    check_output_invertible(cfg, Activation::Linear)?;
    let out = cfg.output_activation.unwrap_or(Activation::Linear);

    let mut y = data.x().clone();
    let mut weights = Vec::new();
    let mut per_layer = Vec::new();
    let stop_reason = loop {
        let y_pinv = numeric(pseudoinverse(&y, None))?;
        let report = layer_report(per_layer.len(), &y, &y_pinv)?;
        let residual = report.projector_residual;
        per_layer.push(report);
        if residual < cfg.stopping_error {
            break (StopReason::ResidualBelowE, y_pinv);
        }
        if per_layer.len() >= cfg.max_depth {
            break (StopReason::MaxDepth, y_pinv);
        }
        let w = match noise.as_deref_mut() {
            Some(rng) if cfg.noise_stddev > 0.0 => {
                let g = gaussian_matrix(rng, y_pinv.rows(), y_pinv.cols(), cfg.noise_stddev);
                numeric(y_pinv.add(&g))?
            }
            _ => y_pinv,
        };
        let z = numeric(y.matmul(&w))?;
        y = with_hidden_bias(cfg.activation.apply(&z), cfg.hidden_bias);
        weights.push(w);
    };
    let (stop_reason, y_pinv) = stop_reason;
    let solve = solve_output(&y, &y_pinv, data.t(), out)?;
    weights.push(solve.w);

    let mut warnings = Vec::new();
    if stop_reason == StopReason::MaxDepth {
        let last = per_layer.last().map_or(f64::NAN, |l| l.projector_residual);
        warnings.push(format!(
            "max depth {} reached with projector residual {last:e} >= E = {:e}",
            cfg.max_depth, cfg.stopping_error
        ));
    }
    duplicate_warnings(data.x(), &mut warnings);

    let net = PilNetwork::new(
        weights,
        cfg.activation,
        out,
        BiasPolicy {
            input: data.has_bias(),
            hidden: cfg.hidden_bias,
        },
        NetworkMeta {
            algorithm: algo.to_string(),
            seed: (algo == Algorithm::Pil1).then_some(cfg.seed),
        },
    )?;
    let final_sse = net.sse(data)?;
    let report = TrainReport {
        schema_version: REPORT_SCHEMA_VERSION,
        algorithm: algo,
        n_samples: data.len(),
        final_sse,
        target_residual: solve.residual,
        depth_used: per_layer.len(),
        per_layer,
        stop_reason,
        clipped_target_count: solve.clipped,
        warnings,
        timing: Timing {
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    };
    Ok((net, report))
}
