//! The feedforward model: a stack of weight matrices with a hidden and an
//! output activation, plus the versioned `.pilnet` binary format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::dataset::{augment_bias, Dataset};
use crate::error::{PilError, Result};
use crate::linalg::{frobenius_error, Matrix};

/// Where constant-one columns are inserted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasPolicy {
    /// Inputs carry a leading bias column (see [`crate::dataset::BIAS_COLUMN`]).
    pub input: bool,
    /// A ones column is appended to every hidden output before the next
    /// weight multiplication.
    pub hidden: bool,
}

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub algorithm: String,
    pub seed: Option<u64>,
}

/// Weights `[W⁰, W¹, …, W^L]` with `o = σ_out(σ(…σ(x W⁰)…) W^L)`.
///
/// A single-layer stack is a plain (optionally squashed) linear map; the
/// single hidden layer network is `[V, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilNetwork {
    layers: Vec<Matrix>,
    hidden_activation: Activation,
    output_activation: Activation,
    bias: BiasPolicy,
    meta: NetworkMeta,
}

impl PilNetwork {
    pub fn new(
        layers: Vec<Matrix>,
        hidden_activation: Activation,
        output_activation: Activation,
        bias: BiasPolicy,
        meta: NetworkMeta,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(PilError::Config("a network needs at least one layer".into()));
        }
        let extra = usize::from(bias.hidden);
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].rows() != pair[0].cols() + extra {
                return Err(PilError::shape(
                    format!("layer {} input width", i + 1),
                    pair[0].cols() + extra,
                    pair[1].rows(),
                ));
            }
        }
        Ok(PilNetwork {
            layers,
            hidden_activation,
            output_activation,
            bias,
            meta,
        })
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn bias_policy(&self) -> BiasPolicy {
        self.bias
    }

    pub fn meta(&self) -> &NetworkMeta {
        &self.meta
    }

    /// Columns expected in `x` by [`PilNetwork::forward`].
    pub fn input_width(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].cols()
    }

    /// Forward pass on an input matrix that already carries any bias column
    /// the policy asks for.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_width() {
            return Err(PilError::shape(
                "network input width",
                self.input_width(),
                x.cols(),
            ));
        }
        let last = self.layers.len() - 1;
        let mut y = x.clone();
        for (i, w) in self.layers.iter().enumerate() {
            if i > 0 && self.bias.hidden {
                y = y.insert_constant_column(y.cols(), 1.0);
            }
            let z = y.matmul(w)?;
            let act = if i == last {
                self.output_activation
            } else {
                self.hidden_activation
            };
            y = act.apply(&z);
        }
        Ok(y)
    }

    /// Forward pass on raw features; prepends the bias column when the
    /// policy says inputs are augmented.
    pub fn predict_raw(&self, x_raw: &Matrix) -> Result<Matrix> {
        if self.bias.input {
            self.forward(&augment_bias(x_raw))
        } else {
            self.forward(x_raw)
        }
    }

    /// Training error `(1/2N)·‖O − T‖_F²` on `data`.
    pub fn sse(&self, data: &Dataset) -> Result<f64> {
        frobenius_error(&self.forward(data.x())?, data.t())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|source| PilError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| PilError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

// --- .pilnet format ---------------------------------------------------------
//
// All integers and floats little-endian.
//
//   magic        8 bytes  "PILNET\0\0"
//   version      u32
//   hidden act   u8 kind, f64 param
//   output act   u8 kind, f64 param
//   bias flags   u8 (bit 0 input, bit 1 hidden)
//   algorithm    u32 length, UTF-8 bytes
//   seed         u8 present flag, u64
//   layer count  u32
//   shapes       (u32 rows, u32 cols) per layer
//   payload      f64 entries, layer by layer, row-major

pub const MAGIC: &[u8; 8] = b"PILNET\0\0";
pub const FORMAT_VERSION: u32 = 1;

fn encode_activation(out: &mut Vec<u8>, act: Activation) {
    let (kind, param) = match act {
        Activation::Tanh => (0u8, 0.0),
        Activation::Sigmoid => (1, 0.0),
        Activation::Linear => (2, 0.0),
        Activation::Step { threshold } => (3, threshold),
        Activation::Gaussian { width } => (4, width),
    };
    out.push(kind);
    out.extend_from_slice(&param.to_le_bytes());
}

impl PilNetwork {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        encode_activation(&mut out, self.hidden_activation);
        encode_activation(&mut out, self.output_activation);
        out.push(u8::from(self.bias.input) | (u8::from(self.bias.hidden) << 1));
        out.extend_from_slice(&(self.meta.algorithm.len() as u32).to_le_bytes());
        out.extend_from_slice(self.meta.algorithm.as_bytes());
        out.push(u8::from(self.meta.seed.is_some()));
        out.extend_from_slice(&self.meta.seed.unwrap_or(0).to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for w in &self.layers {
            out.extend_from_slice(&(w.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(w.cols() as u32).to_le_bytes());
        }
        for w in &self.layers {
            for v in w.to_row_major() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8, "magic")?;
        if magic != MAGIC {
            return Err(r.error_at(0, "not a .pilnet file (bad magic)"));
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(r.error_at(
                8,
                format!("unsupported version: expected {FORMAT_VERSION}, found {version}"),
            ));
        }
        let hidden_activation = r.activation()?;
        let output_activation = r.activation()?;
        let flags_at = r.pos;
        let flags = r.u8("bias flags")?;
        if flags & !0b11 != 0 {
            return Err(r.error_at(flags_at, format!("unknown bias flags {flags:#04b}")));
        }
        let bias = BiasPolicy {
            input: flags & 1 != 0,
            hidden: flags & 2 != 0,
        };
        let name_len = r.u32("algorithm length")? as usize;
        let name_at = r.pos;
        let algorithm = String::from_utf8(r.take(name_len, "algorithm name")?.to_vec())
            .map_err(|_| r.error_at(name_at, "algorithm name is not UTF-8"))?;
        let has_seed = r.u8("seed flag")? != 0;
        let seed = r.u64("seed")?;
        let count = r.u32("layer count")? as usize;
        if count == 0 {
            return Err(r.error_at(r.pos - 4, "network has no layers"));
        }
        let mut shapes = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let at = r.pos;
            let rows = r.u32("layer rows")? as usize;
            let cols = r.u32("layer cols")? as usize;
            if rows == 0 || cols == 0 {
                return Err(r.error_at(at, format!("empty layer shape {rows}x{cols}")));
            }
            shapes.push((rows, cols));
        }
        let mut layers = Vec::with_capacity(count);
        for (rows, cols) in shapes {
            let at = r.pos;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| r.error_at(at, format!("truncated {rows}x{cols} weight payload")))?;
            let data: Vec<f64> = r
                .take(n * 8, "weights")?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let m = Matrix::from_row_slice(rows, cols, &data)
                .map_err(|e| r.error_at(at, e.to_string()))?;
            layers.push(m);
        }
        if r.remaining() != 0 {
            return Err(r.error_at(r.pos, format!("{} trailing bytes", r.remaining())));
        }
        let meta = NetworkMeta {
            algorithm,
            seed: has_seed.then_some(seed),
        };
        PilNetwork::new(layers, hidden_activation, output_activation, bias, meta).map_err(|e| {
            PilError::Format {
                offset: bytes.len(),
                message: e.to_string(),
            }
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn error_at(&self, offset: usize, message: impl Into<String>) -> PilError {
        PilError::Format {
            offset,
            message: message.into(),
        }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.error_at(self.pos, format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn activation(&mut self) -> Result<Activation> {
        let at = self.pos;
        let kind = self.u8("activation kind")?;
        let param = self.f64("activation parameter")?;
        let act = match kind {
            0 => Activation::Tanh,
            1 => Activation::Sigmoid,
            2 => Activation::Linear,
            3 => Activation::Step { threshold: param },
            4 => Activation::Gaussian { width: param },
            k => return Err(self.error_at(at, format!("unknown activation kind {k}"))),
        };
        let text = act.to_string();
        text.parse::<Activation>()
            .map_err(|e| self.error_at(at, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TargetEncoding;
    use crate::rng::{seeded, uniform_matrix};
    use proptest::prelude::*;

    fn shln(v: Matrix, w: Matrix, out: Activation) -> PilNetwork {
        PilNetwork::new(
            vec![v, w],
            Activation::Tanh,
            out,
            BiasPolicy {
                input: true,
                hidden: false,
            },
            NetworkMeta::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let net = shln(Matrix::zeros(3, 4), Matrix::zeros(4, 2), Activation::Linear);
        let x = uniform_matrix(&mut seeded(1), 5, 3, (-1.0, 1.0));
        let o = net.forward(&x).unwrap();
        assert_eq!(o.shape(), (5, 2));
        assert!(o.iter().all(|v| v == 0.0));
    }

    #[test]
    fn identity_composition() {
        let net = PilNetwork::new(
            vec![Matrix::identity(3), Matrix::identity(3)],
            Activation::Linear,
            Activation::Linear,
            BiasPolicy::default(),
            NetworkMeta::default(),
        )
        .unwrap();
        let x = uniform_matrix(&mut seeded(2), 4, 3, (-3.0, 3.0));
        assert!(net.forward(&x).unwrap().bitwise_eq(&x));
    }

    #[test]
    fn width_mismatch() {
        let net = shln(Matrix::zeros(3, 4), Matrix::zeros(4, 2), Activation::Linear);
        match net.forward(&Matrix::zeros(2, 5)) {
            Err(PilError::ShapeMismatch { expected, found, .. }) => {
                assert_eq!((expected.as_str(), found.as_str()), ("3", "5"));
            }
            other => panic!("{other:?}"),
        }
        assert!(PilNetwork::new(
            vec![Matrix::zeros(3, 4), Matrix::zeros(5, 2)],
            Activation::Tanh,
            Activation::Linear,
            BiasPolicy::default(),
            NetworkMeta::default()
        )
        .is_err());
    }

    #[test]
    fn hidden_bias_appends_a_ones_column() {
        let bias = BiasPolicy {
            input: false,
            hidden: true,
        };
        // second layer sees [σ(xV) | 1]; pick W so the output is just the bias weight.
        let w = Matrix::from_rows(&[[0.0], [0.0], [2.5]]).unwrap();
        let net = PilNetwork::new(
            vec![Matrix::identity(2), w],
            Activation::Tanh,
            Activation::Linear,
            bias,
            NetworkMeta::default(),
        )
        .unwrap();
        let o = net.forward(&Matrix::from_rows(&[[0.3, -0.1]]).unwrap()).unwrap();
        assert_eq!(o.get(0, 0), 2.5);
    }

    #[test]
    fn sse_examples() {
        let net = shln(Matrix::zeros(2, 1), Matrix::from_rows(&[[1.0]]).unwrap(), Activation::Linear);
        let data = Dataset::new(
            Matrix::zeros(1, 1),
            Matrix::from_rows(&[[0.0]]).unwrap(),
            TargetEncoding::regression_raw(),
            "t",
        )
        .unwrap();
        assert_eq!(net.sse(&data).unwrap(), 0.0);
        let one = Dataset::new(
            Matrix::zeros(1, 1),
            Matrix::from_rows(&[[1.0]]).unwrap(),
            TargetEncoding::regression_raw(),
            "t",
        )
        .unwrap();
        assert_eq!(net.sse(&one).unwrap(), 0.5);
    }

    #[test]
    fn sse_matches_elementwise_double_sum() {
        let mut rng = seeded(21);
        let v = uniform_matrix(&mut rng, 4, 6, (-1.0, 1.0));
        let w = uniform_matrix(&mut rng, 6, 2, (-1.0, 1.0));
        let net = shln(v.clone(), w.clone(), Activation::Tanh);
        let x_raw = uniform_matrix(&mut rng, 7, 3, (0.0, 1.0));
        let t = uniform_matrix(&mut rng, 7, 2, (-0.5, 0.5));
        let data = Dataset::new(x_raw, t.clone(), TargetEncoding::regression_raw(), "r").unwrap();
        let x = data.x();
        let mut sum = 0.0;
        for i in 0..7 {
            let g: Vec<f64> = (0..6)
                .map(|j| (0..4).map(|k| x.get(i, k) * v.get(k, j)).sum::<f64>().tanh())
                .collect();
            for k in 0..2 {
                let o = (0..6).map(|j| g[j] * w.get(j, k)).sum::<f64>().tanh();
                sum += (o - t.get(i, k)).powi(2);
            }
        }
        let oracle = sum / (2.0 * 7.0);
        assert!((net.sse(&data).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn predict_raw_adds_bias() {
        let mut rng = seeded(3);
        let net = shln(
            uniform_matrix(&mut rng, 3, 4, (-1.0, 1.0)),
            uniform_matrix(&mut rng, 4, 1, (-1.0, 1.0)),
            Activation::Tanh,
        );
        let raw = uniform_matrix(&mut rng, 2, 2, (0.0, 1.0));
        let a = net.predict_raw(&raw).unwrap();
        let b = net.forward(&augment_bias(&raw)).unwrap();
        assert!(a.bitwise_eq(&b));
    }

    #[test]
    fn hidden_outputs_stay_inside_tanh_codomain() {
        let mut rng = seeded(4);
        let v = uniform_matrix(&mut rng, 3, 5, (-30.0, 30.0));
        let x = uniform_matrix(&mut rng, 6, 3, (-1.0, 1.0));
        let y = Activation::Tanh.apply(&x.matmul(&v).unwrap());
        assert!(y.iter().all(|e| e.abs() <= 1.0));
    }

    #[test]
    fn truncated_payload() {
        let net = shln(Matrix::identity(2), Matrix::identity(2), Activation::Linear);
        let bytes = net.to_bytes();
        for cut in [0, 5, 12, bytes.len() - 1] {
            assert!(matches!(
                PilNetwork::from_bytes(&bytes[..cut]),
                Err(PilError::Format { .. })
            ));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(PilNetwork::from_bytes(&extra).is_err());
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let net = shln(Matrix::identity(2), Matrix::identity(2), Activation::Linear);
        let mut bytes = net.to_bytes();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        match PilNetwork::from_bytes(&bytes) {
            Err(PilError::Format { offset, message }) => {
                assert_eq!(offset, 8);
                assert!(message.contains("expected 1") && message.contains("found 7"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(
            PilNetwork::from_bytes(b"NOTANET\0\x01\0\0\0"),
            Err(PilError::Format { offset: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            seed in any::<u64>(),
            d in 1usize..5,
            l in 1usize..6,
            m in 1usize..3,
            hidden_bias in any::<bool>(),
            with_seed in any::<bool>(),
        ) {
            let mut rng = seeded(seed);
            let v = uniform_matrix(&mut rng, d, l, (-1e3, 1e3));
            let w = uniform_matrix(&mut rng, l + usize::from(hidden_bias), m, (-1.0, 1.0));
            let net = PilNetwork::new(
                vec![v, w],
                Activation::Gaussian { width: 0.5 },
                Activation::Tanh,
                BiasPolicy { input: true, hidden: hidden_bias },
                NetworkMeta { algorithm: "pil0".into(), seed: with_seed.then_some(seed) },
            ).unwrap();
            let back = PilNetwork::from_bytes(&net.to_bytes()).unwrap();
            prop_assert_eq!(&back.meta, &net.meta);
            prop_assert_eq!(back.bias, net.bias);
            for (a, b) in back.layers().iter().zip(net.layers()) {
                prop_assert!(a.bitwise_eq(b));
            }
            let x = uniform_matrix(&mut rng, 3, d, (-1.0, 1.0));
            prop_assert!(back.forward(&x).unwrap().bitwise_eq(&net.forward(&x).unwrap()));
        }
    }
}
