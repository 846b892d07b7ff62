use std::io::{Read, Write};

use rand::Rng as _;

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use super::NnError;
use crate::seed::Rng;

const MAGIC: &[u8; 4] = b"BRSP";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `in x out`
    pub weight: Matrix,
    /// `1 x out`
    pub bias: Matrix,
}

/// Fully connected network with ReLU and inverted dropout after every hidden
/// layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
    dropout: f64,
}

impl Mlp {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn new(sizes: &[usize], dropout: f64, rng: &mut Rng) -> Result<Self, NnError> {
        if sizes.len() < 2 {
            return Err(NnError::Shape("an MLP needs input and output sizes".into()));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(NnError::Shape(format!("layer size {i} is zero")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(NnError::Shape(format!("dropout {dropout} outside [0, 1)")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let data = (0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)).collect();
                Linear {
                    weight: Matrix::from_vec(w[0], w[1], data),
                    bias: Matrix::zeros(1, w[1]),
                }
            })
            .collect();
        Ok(Self { layers, dropout })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.cols
    }

    fn mask(&self, rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        let keep = 1.0 - self.dropout;
        let data = (0..rows * cols)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        Matrix::from_vec(rows, cols, data)
    }

    /// Forward pass without recording. Dropout is active iff `rng` is given.
    pub fn forward(&self, x: &Matrix, mut rng: Option<&mut Rng>) -> Result<Matrix, NnError> {
        self.check_input(x.cols)?;
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = h.matmul(&l.weight);
            for r in 0..h.rows {
                for (a, b) in h.row_mut(r).iter_mut().zip(&l.bias.data) {
                    *a += b;
                }
            }
            if i < last {
                h = h.map(|v| v.max(0.0));
                if let Some(rng) = rng.as_deref_mut() {
                    if self.dropout > 0.0 {
                        let m = self.mask(h.rows, h.cols, rng);
                        h = h.zip_map(&m, |a, b| a * b);
                    }
                }
            }
        }
        Ok(h)
    }

    fn check_input(&self, cols: usize) -> Result<(), NnError> {
        if cols != self.input_dim() {
            return Err(NnError::Shape(format!(
                "input has {cols} columns, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Records every parameter as a leaf, in [`params`](Self::params) order.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|m| tape.leaf(m.clone())).collect()
    }

    /// Recorded forward pass using leaves from [`register`](Self::register).
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        x: Var,
        params: &[Var],
        mut rng: Option<&mut Rng>,
    ) -> Result<Var, NnError> {
        self.check_input(tape.value(x).cols)?;
        if params.len() != 2 * self.layers.len() {
            return Err(NnError::Shape("parameter leaf count".into()));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for i in 0..self.layers.len() {
            h = tape.matmul(h, params[2 * i]);
            h = tape.add_bias(h, params[2 * i + 1]);
            if i < last {
                h = tape.relu(h);
                if let Some(rng) = rng.as_deref_mut() {
                    if self.dropout > 0.0 {
                        let v = tape.value(h);
                        let m = self.mask(v.rows, v.cols, rng);
                        h = tape.mul_const(h, m);
                    }
                }
            }
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|m| m.data.len()).sum()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), NnError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            w.write_all(&(l.weight.rows as u32).to_le_bytes())?;
            w.write_all(&(l.weight.cols as u32).to_le_bytes())?;
            w.write_all(&self.dropout.to_le_bytes())?;
            for x in l.weight.data.iter().chain(&l.bias.data) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, NnError> {
        fn u32_le(r: &mut impl Read) -> Result<u32, NnError> {
            let mut b = [0; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        }
        fn f64_le(r: &mut impl Read) -> Result<f64, NnError> {
            let mut b = [0; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        }
        let mut magic = [0; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = u32_le(&mut r)?;
        if version != VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let n = u32_le(&mut r)? as usize;
        if n == 0 || n > 64 {
            return Err(NnError::Checkpoint(format!("implausible layer count {n}")));
        }
        let mut layers = Vec::with_capacity(n);
        let mut dropout = 0.0;
        for _ in 0..n {
            let rows = u32_le(&mut r)? as usize;
            let cols = u32_le(&mut r)? as usize;
            if rows == 0 || cols == 0 || rows * cols > 1 << 26 {
                return Err(NnError::Checkpoint(format!("implausible layer {rows}x{cols}")));
            }
            dropout = f64_le(&mut r)?;
            let weight = (0..rows * cols).map(|_| f64_le(&mut r)).collect::<Result<_, _>>()?;
            let bias = (0..cols).map(|_| f64_le(&mut r)).collect::<Result<_, _>>()?;
            if let Some(prev) = layers.last().map(|l: &Linear| l.weight.cols) {
                if prev != rows {
                    return Err(NnError::Checkpoint("layer shapes do not chain".into()));
                }
            }
            layers.push(Linear {
                weight: Matrix::from_vec(rows, cols, weight),
                bias: Matrix::from_vec(1, cols, bias),
            });
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(NnError::Checkpoint(format!("invalid dropout {dropout}")));
        }
        Ok(Self { layers, dropout })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), NnError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, NnError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
