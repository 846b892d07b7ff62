use std::cell::RefCell;
use std::sync::Arc;

use crate::distribution::ConceptDistribution;
use crate::knowledge::Reasoner;
use crate::nn::{CustomOp, Matrix};

/// `p(y_b | x_b)` for every example of a batch, from per-object concept
/// probabilities laid out as `(B·O) x width`. Output is `B x 1`.
pub struct LabelLikelihood {
    pub reasoner: Arc<Reasoner>,
    pub labels: Vec<usize>,
    grads: RefCell<Vec<Vec<f64>>>,
}

impl LabelLikelihood {
    pub fn new(reasoner: Arc<Reasoner>, labels: Vec<usize>) -> Self {
        Self {
            reasoner,
            labels,
            grads: RefCell::new(Vec::new()),
        }
    }
}

impl CustomOp for LabelLikelihood {
    fn forward(&self, inputs: &[&Matrix]) -> Matrix {
        let probs = inputs[0];
        let schema = self.reasoner.knowledge().schema();
        let per_example = schema.num_objects() * schema.object_width();
        let b = self.labels.len();
        assert_eq!(probs.data.len(), b * per_example, "likelihood input shape");
        let mut out = Vec::with_capacity(b);
        let mut grads = Vec::with_capacity(b);
        for (i, &y) in self.labels.iter().enumerate() {
            let rows = &probs.data[i * per_example..(i + 1) * per_example];
            let p = ConceptDistribution::from_object_rows(schema, rows);
            let (prob, g) = self.reasoner.label_prob_grad(&p.factors, y);
            out.push(prob);
            grads.push(ConceptDistribution::new(g).to_object_rows(schema));
        }
        *self.grads.borrow_mut() = grads;
        Matrix::from_vec(b, 1, out)
    }

    fn backward(&self, inputs: &[&Matrix], _output: &Matrix, grad_out: &Matrix) -> Vec<Matrix> {
        let probs = inputs[0];
        let grads = self.grads.borrow();
        let mut data = Vec::with_capacity(probs.data.len());
        for (g, d) in grads.iter().zip(&grad_out.data) {
            data.extend(g.iter().map(|x| x * d));
        }
        vec![Matrix::from_vec(probs.rows, probs.cols, data)]
    }
}
