//! Reverse-mode automatic differentiation over matrices.
//!
//! Every op records its inputs and output value; [`Tape::backward`] walks the
//! nodes in reverse and accumulates vector-Jacobian products. Ops the tape does
//! not know implement [`CustomOp`].

use super::matrix::Matrix;
use super::NnError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// A differentiable function of one or more matrices.
pub trait CustomOp {
    fn forward(&self, inputs: &[&Matrix]) -> Matrix;

    /// Gradient with respect to each input, given the gradient of the output.
    fn backward(&self, inputs: &[&Matrix], output: &Matrix, grad_out: &Matrix) -> Vec<Matrix>;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    MulConst(Var, Matrix),
    Mul(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    SoftmaxGroups(Var, Vec<usize>),
    ClampMin(Var, f64),
    Log(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Custom(Vec<Var>, Box<dyn CustomOp>),
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads[v.0].take()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!((b.rows, b.cols), (1, self.value(a).cols), "bias shape");
        let mut v = self.value(a).clone();
        for r in 0..v.rows {
            for (x, y) in v.row_mut(r).iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        self.push(v, Op::AddBias(a, bias))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    /// Elementwise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, a: Var, c: Matrix) -> Var {
        let v = self.value(a).zip_map(&c, |x, y| x * y);
        self.push(v, Op::MulConst(a, c))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x * k);
        self.push(v, Op::Scale(a, k))
    }

    pub fn softmax_groups(&mut self, a: Var, groups: &[usize]) -> Var {
        let v = self.value(a).softmax_groups(groups);
        self.push(v, Op::SoftmaxGroups(a, groups.to_vec()))
    }

    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let v = self.value(a).map(|x| x.max(floor));
        self.push(v, Op::ClampMin(a, floor))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = Matrix::scalar(m.sum() / m.data.len() as f64);
        self.push(v, Op::Mean(a))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = self.value(a).clone().reshape(rows, cols);
        self.push(v, Op::Reshape(a))
    }

    pub fn custom(&mut self, inputs: &[Var], op: Box<dyn CustomOp>) -> Var {
        let vals: Vec<&Matrix> = inputs.iter().map(|&v| self.value(v)).collect();
        let out = op.forward(&vals);
        self.push(out, Op::Custom(inputs.to_vec(), op))
    }

    /// Backpropagates from the scalar node `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients, NnError> {
        let root_val = self.value(root);
        if root_val.data.len() != 1 {
            return Err(NnError::Shape(format!(
                "loss must be scalar, got {}x{}",
                root_val.rows, root_val.cols
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::from_vec(root_val.rows, root_val.cols, vec![1.0]));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddBias(a, b) => {
                    let mut gb = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (x, y) in gb.data.iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *a, g);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(&node.value, |d, y| if y > 0.0 { d } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::MulConst(a, c) => {
                    let ga = g.zip_map(c, |d, k| d * k);
                    acc(&mut grads, *a, ga);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |d, y| d * y);
                    let gb = g.zip_map(self.value(*a), |d, x| d * x);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Scale(a, k) => {
                    let k = *k;
                    acc(&mut grads, *a, g.map(|d| d * k));
                }
                Op::SoftmaxGroups(a, groups) => {
                    let s = &node.value;
                    let mut ga = Matrix::zeros(s.rows, s.cols);
                    for r in 0..s.rows {
                        let (sr, gr) = (s.row(r), g.row(r));
                        let out = ga.row_mut(r);
                        let mut off = 0;
                        for &n in groups {
                            let dot: f64 = (off..off + n).map(|j| sr[j] * gr[j]).sum();
                            for j in off..off + n {
                                out[j] = sr[j] * (gr[j] - dot);
                            }
                            off += n;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ClampMin(a, floor) => {
                    let floor = *floor;
                    let ga = g.zip_map(self.value(*a), |d, x| if x > floor { d } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let ga = g.zip_map(self.value(*a), |d, x| d / x);
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let m = self.value(*a);
                    let d = g.data[0];
                    acc(&mut grads, *a, Matrix::from_vec(m.rows, m.cols, vec![d; m.data.len()]));
                }
                Op::Mean(a) => {
                    let m = self.value(*a);
                    let d = g.data[0] / m.data.len() as f64;
                    acc(&mut grads, *a, Matrix::from_vec(m.rows, m.cols, vec![d; m.data.len()]));
                }
                Op::Reshape(a) => {
                    let m = self.value(*a);
                    acc(&mut grads, *a, g.reshape(m.rows, m.cols));
                }
                Op::Custom(inputs, op) => {
                    let vals: Vec<&Matrix> = inputs.iter().map(|&v| self.value(v)).collect();
                    let gs = op.backward(&vals, &node.value, &g);
                    for (&v, gv) in inputs.iter().zip(gs) {
                        acc(&mut grads, v, gv);
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}
