//! Experiments on when the hidden output matrix loses rank.
//!
//! * [`theorem1_sweep`]: bounded activations driven into saturation by input
//!   weights drawn from `(a/ε, b/ε)` collapse `H` to rank one as `ε → 0`.
//! * [`counterexample_fx`] / [`fx_rank_experiment`]: a smooth 1-D target for
//!   which random `[-1, 1]` weights already give a rank-deficient `H`.
//! * [`error_floor`]: with fewer hidden neurons than samples, no output
//!   weights beat `‖P T − T‖_F`, `P = H H⁺`.
//! * [`float_range_guard`]: flags values outside single precision range or
//!   too close to the arctanh domain boundary.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::activation::{Activation, INVERSE_CLIP_DELTA};
use crate::dataset::{Dataset, TargetEncoding};
use crate::error::{PilError, Result};
use crate::linalg::{numerical_rank, projector, Matrix, RankInfo};
use crate::rng::{seeded, uniform_matrix};
use crate::trainers::{random_input_weights, train_pil0, HiddenWidth, TrainConfig};

pub const DIAGNOSTIC_SCHEMA_VERSION: u32 = 1;

/// Entries within this distance of an activation's codomain boundary count
/// as saturated.
pub const SATURATION_TOLERANCE: f64 = 1e-12;

/// Largest finite single precision value, about `10^38.53`.
pub const SINGLE_PRECISION_LIMIT: f64 = f32::MAX as f64;

pub const DEFAULT_FX_POINTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationProbe {
    pub activation: Activation,
    /// Base interval `(a, b)`; weights and biases are drawn from `(a/ε, b/ε)`.
    pub weight_interval: (f64, f64),
    /// Strictly positive and strictly decreasing.
    pub epsilon_schedule: Vec<f64>,
    pub input_range: (f64, f64),
    /// Training samples `N`; also the hidden width, so `H` is square.
    pub n_samples: usize,
    pub n_features: usize,
    pub seed: u64,
}

impl Default for SaturationProbe {
    fn default() -> Self {
        SaturationProbe {
            activation: Activation::Sigmoid,
            weight_interval: (1.0, 2.0),
            epsilon_schedule: (0..=6).map(|k| 10f64.powi(-k)).collect(),
            input_range: (0.0, 1.0),
            n_samples: 50,
            n_features: 5,
            seed: 0,
        }
    }
}

impl SaturationProbe {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PilError::Config(m));
        if self.n_samples < 2 {
            return bad(format!("need at least 2 samples, got {}", self.n_samples));
        }
        if self.n_features == 0 {
            return bad("need at least one input feature".into());
        }
        if self.epsilon_schedule.is_empty()
            || self.epsilon_schedule.iter().any(|e| !(*e > 0.0 && e.is_finite()))
            || self.epsilon_schedule.windows(2).any(|w| w[1] >= w[0])
        {
            return bad("epsilon schedule must be positive and strictly decreasing".into());
        }
        for (name, (lo, hi)) in [("weight", self.weight_interval), ("input", self.input_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("{name} interval needs lo < hi, got [{lo}, {hi}]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub rank: RankInfo,
    pub saturated_fraction: f64,
    pub min_entry: f64,
    pub max_entry: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSweepResult {
    pub schema_version: u32,
    pub probe: SaturationProbe,
    /// False for unbounded activations, where saturation cannot occur.
    pub theorem_applicable: bool,
    pub notes: Vec<String>,
    pub per_epsilon: Vec<EpsilonRow>,
}

impl RankSweepResult {
    pub fn terminal_rank(&self) -> usize {
        self.per_epsilon.last().map_or(0, |r| r.rank.numerical_rank)
    }

    /// `epsilon,rank,saturated_fraction` rows with a header.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "epsilon,rank,saturated_fraction")?;
        for row in &self.per_epsilon {
            writeln!(w, "{},{},{}", row.epsilon, row.rank.numerical_rank, row.saturated_fraction)?;
        }
        Ok(())
    }
}

fn saturated_fraction(h: &Matrix, act: Activation) -> f64 {
    let Some((lo, hi)) = act.bounds() else {
        return 0.0;
    };
    let saturated = h
        .iter()
        .filter(|&v| v - lo <= SATURATION_TOLERANCE || hi - v <= SATURATION_TOLERANCE)
        .count();
    saturated as f64 / (h.rows() * h.cols()) as f64
}

/// Tabulates rank and saturation of `H = σ(X W/ε + 1 b/ε)` along the schedule.
///
/// `X`, the base weights `W` and base biases `b` are sampled once from the
/// seed and rescaled by `1/ε`, so each row sees weights uniform on
/// `(a/ε, b/ε)` and saturation can only grow as `ε` shrinks.
pub fn theorem1_sweep(probe: &SaturationProbe) -> Result<RankSweepResult> {
    probe.validate()?;
    let n = probe.n_samples;
    let mut rng = seeded(probe.seed);
    let x = uniform_matrix(&mut rng, n, probe.n_features, probe.input_range);
    let w = uniform_matrix(&mut rng, probe.n_features, n, probe.weight_interval);
    let b = uniform_matrix(&mut rng, 1, n, probe.weight_interval);
    let xw = x.matmul(&w)?;

    let mut per_epsilon = Vec::with_capacity(probe.epsilon_schedule.len());
    for &eps in &probe.epsilon_schedule {
        let z = Matrix::from_fn(n, n, |i, j| xw.get(i, j) / eps + b.get(0, j) / eps)?;
        let h = probe.activation.apply(&z);
        let (min_entry, max_entry) = h
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        per_epsilon.push(EpsilonRow {
            epsilon: eps,
            rank: numerical_rank(&h, None)?,
            saturated_fraction: saturated_fraction(&h, probe.activation),
            min_entry,
            max_entry,
        });
    }

    let theorem_applicable = probe.activation.bounds().is_some();
    let mut notes = Vec::new();
    if !theorem_applicable {
        notes.push(format!(
            "theorem inapplicable: unbounded activation {}",
            probe.activation
        ));
    }
    let (a, bnd) = probe.weight_interval;
    if a < 0.0 && bnd > 0.0 {
        notes.push("weight interval straddles zero; saturation need not be one-sided".into());
    }
    Ok(RankSweepResult {
        schema_version: DIAGNOSTIC_SCHEMA_VERSION,
        probe: probe.clone(),
        theorem_applicable,
        notes,
        per_epsilon,
    })
}

/// `f(x) = 0.2·exp(−(10x−4)²) + 0.5·exp(−(80x−40)²) + 0.3·exp(−(80x−20)²)`.
pub fn fx(x: f64) -> f64 {
    0.2 * (-(10.0 * x - 4.0).powi(2)).exp()
        + 0.5 * (-(80.0 * x - 40.0).powi(2)).exp()
        + 0.3 * (-(80.0 * x - 20.0).powi(2)).exp()
}

/// `n_points` equispaced samples of [`fx`] on `[0, 1]`, bias-augmented.
pub fn counterexample_fx(n_points: usize) -> Result<Dataset> {
    if n_points < 2 {
        return Err(PilError::Config(format!("need at least 2 points, got {n_points}")));
    }
    let step = 1.0 / (n_points - 1) as f64;
    let xs: Vec<f64> = (0..n_points).map(|i| i as f64 * step).collect();
    let ts: Vec<f64> = xs.iter().map(|&x| fx(x)).collect();
    Dataset::new(
        Matrix::from_row_slice(n_points, 1, &xs)?,
        Matrix::from_row_slice(n_points, 1, &ts)?,
        TargetEncoding::regression_raw(),
        format!("f(x), {n_points} equispaced points on [0, 1]"),
    )
}

/// `x,f(x)` rows with a header.
pub fn write_fx_csv(data: &Dataset, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "x,fx")?;
    let x = data.raw_features();
    for i in 0..data.len() {
        writeln!(w, "{},{}", x.get(i, 0), data.t().get(i, 0))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FxRankReport {
    pub schema_version: u32,
    pub n_points: usize,
    pub hidden_width: usize,
    pub seed: u64,
    pub activation: Activation,
    pub weight_interval: (f64, f64),
    pub rank: RankInfo,
    pub full_rank: bool,
    /// `σ_max / σ_min` over the whole spectrum; `null` when `σ_min = 0`.
    pub spectral_condition: f64,
    /// Training error of `W = H⁺ T` with a linear output layer.
    pub achieved_sse: f64,
    pub target_residual: f64,
}

/// Builds the random-weight hidden matrix for the `f(x)` samples and reports
/// its measured rank and conditioning.
pub fn fx_rank_experiment(n_points: usize, hidden_width: usize, seed: u64) -> Result<FxRankReport> {
    if hidden_width == 0 || hidden_width > n_points {
        return Err(PilError::Config(format!(
            "hidden width must be in 1..={n_points}, got {hidden_width}"
        )));
    }
    let data = counterexample_fx(n_points)?;
    let cfg = TrainConfig {
        hidden_width: HiddenWidth::Fixed(hidden_width),
        seed,
        activation: Activation::Tanh,
        output_activation: Some(Activation::Linear),
        ..TrainConfig::default()
    };
    let (_, report) = train_pil0(&data, &cfg)?;
    let rank = report.per_layer[0].rank.clone();
    let spectral_condition = match (rank.singular_values.first(), rank.singular_values.last()) {
        (Some(max), Some(min)) if *min > 0.0 => max / min,
        _ => f64::INFINITY,
    };
    Ok(FxRankReport {
        schema_version: DIAGNOSTIC_SCHEMA_VERSION,
        n_points,
        hidden_width,
        seed,
        activation: cfg.activation,
        weight_interval: cfg.weight_interval,
        full_rank: rank.numerical_rank == hidden_width.min(n_points),
        rank,
        spectral_condition,
        achieved_sse: report.final_sse,
        target_residual: report.target_residual,
    })
}

/// `‖P T − T‖_F` with `P = H H⁺`: the smallest `‖H W − T‖_F` any `W` reaches.
pub fn projection_floor(h: &Matrix, t: &Matrix) -> Result<f64> {
    let p = projector(h)?;
    Ok(p.matmul(t)?.sub(t)?.frobenius_norm())
}

/// Residual floor for the hidden matrix `train_pil0` builds with default
/// settings (tanh, weights uniform on `[-1, 1]`), the given width and seed.
pub fn error_floor(data: &Dataset, hidden_width: usize, seed: u64) -> Result<f64> {
    let n = data.len();
    if hidden_width == 0 || hidden_width >= n {
        return Err(PilError::Config(format!(
            "the error floor applies to 1 <= hidden width < N = {n}, got {hidden_width}"
        )));
    }
    let cfg = TrainConfig {
        hidden_width: HiddenWidth::Fixed(hidden_width),
        seed,
        ..TrainConfig::default()
    };
    let v = random_input_weights(data.x().cols(), hidden_width, &cfg);
    let h = cfg.activation.apply(&data.x().matmul(&v)?);
    projection_floor(&h, data.t())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloatRangeReport {
    pub max_abs: f64,
    /// Entries whose magnitude exceeds [`SINGLE_PRECISION_LIMIT`].
    pub beyond_single_precision: usize,
    /// Entries `z` for which `exp(|z|)`, and with it a naive sigmoid or tanh,
    /// overflows single precision.
    pub exp_overflow_single_precision: usize,
    /// Entries with `|t| > 1`: no real arctanh.
    pub arctanh_out_of_domain: usize,
    /// Entries with `1 − |t| <= 1e-12`: would be clipped before arctanh.
    pub arctanh_near_boundary: usize,
    pub flagged: bool,
}

pub fn float_range_guard(m: &Matrix) -> FloatRangeReport {
    let exp_limit = (f32::MAX as f64).ln();
    let mut r = FloatRangeReport {
        max_abs: 0.0,
        beyond_single_precision: 0,
        exp_overflow_single_precision: 0,
        arctanh_out_of_domain: 0,
        arctanh_near_boundary: 0,
        flagged: false,
    };
    for v in m.iter().map(f64::abs) {
        r.max_abs = r.max_abs.max(v);
        r.beyond_single_precision += usize::from(v > SINGLE_PRECISION_LIMIT);
        r.exp_overflow_single_precision += usize::from(v > exp_limit);
        r.arctanh_out_of_domain += usize::from(v > 1.0);
        r.arctanh_near_boundary += usize::from(v <= 1.0 && 1.0 - v <= INVERSE_CLIP_DELTA);
    }
    r.flagged = r.beyond_single_precision
        + r.exp_overflow_single_precision
        + r.arctanh_out_of_domain
        + r.arctanh_near_boundary
        > 0;
    r
}
