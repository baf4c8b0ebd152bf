use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named block of parameters inside a flat model vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl LayerShape {
    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Flat parameter vector plus the layout needed to unflatten it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelVector {
    weights: Vec<f64>,
    layout: Vec<LayerShape>,
}

impl ModelVector {
    pub fn new(weights: Vec<f64>, layout: Vec<LayerShape>) -> Result<Self> {
        let expected: usize = layout.iter().map(LayerShape::size).sum();
        if expected != weights.len() {
            return Err(Error::Dimension { expected, actual: weights.len() });
        }
        Ok(Self { weights, layout })
    }

    /// A model with a single flat block.
    pub fn flat(weights: Vec<f64>) -> Self {
        let layout = vec![LayerShape { name: "flat".into(), shape: vec![weights.len()] }];
        Self { weights, layout }
    }

    pub fn zeros(layout: Vec<LayerShape>) -> Self {
        let dim = layout.iter().map(LayerShape::size).sum();
        Self { weights: vec![0.0; dim], layout }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn layout(&self) -> &[LayerShape] {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Same layout, new weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(weights, self.layout.clone())
    }

    /// Slice of the named block.
    pub fn block(&self, name: &str) -> Option<&[f64]> {
        let mut offset = 0;
        for l in &self.layout {
            if l.name == name {
                return Some(&self.weights[offset..offset + l.size()]);
            }
            offset += l.size();
        }
        None
    }
}

/// Fully connected classifier; no hidden layers gives softmax regression.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    Logistic { features: usize, classes: usize },
    Mlp { features: usize, hidden: Vec<usize>, classes: usize },
}

impl Architecture {
    pub fn features(&self) -> usize {
        match self {
            Architecture::Logistic { features, .. } | Architecture::Mlp { features, .. } => *features,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Architecture::Logistic { classes, .. } | Architecture::Mlp { classes, .. } => *classes,
        }
    }

    /// Layer widths from input to output.
    fn widths(&self) -> Vec<usize> {
        match self {
            Architecture::Logistic { features, classes } => vec![*features, *classes],
            Architecture::Mlp { features, hidden, classes } => {
                let mut w = vec![*features];
                w.extend(hidden);
                w.push(*classes);
                w
            }
        }
    }

    pub fn layout(&self) -> Vec<LayerShape> {
        let widths = self.widths();
        let mut out = Vec::new();
        for (i, pair) in widths.windows(2).enumerate() {
            out.push(LayerShape { name: format!("dense{i}.weight"), shape: vec![pair[1], pair[0]] });
            out.push(LayerShape { name: format!("dense{i}.bias"), shape: vec![pair[1]] });
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.layout().iter().map(LayerShape::size).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths().contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.classes() < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        Ok(())
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelVector {
        let mut weights = Vec::with_capacity(self.dim());
        for pair in self.widths().windows(2) {
            let limit = (6.0 / (pair[0] + pair[1]) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            weights.extend((0..pair[0] * pair[1]).map(|_| dist.sample(rng)));
            weights.extend(std::iter::repeat_n(0.0, pair[1]));
        }
        ModelVector { weights, layout: self.layout() }
    }

    pub fn check(&self, model: &ModelVector) -> Result<()> {
        if model.dim() != self.dim() || model.layout() != self.layout().as_slice() {
            return Err(Error::Architecture(format!(
                "model has {} parameters, architecture expects {}",
                model.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Class scores for one sample.
    pub fn logits(&self, weights: &[f64], x: &[f64]) -> Vec<f64> {
        self.forward(weights, x).pop().expect("at least one layer")
    }

    pub fn predict(&self, weights: &[f64], x: &[f64]) -> usize {
        argmax(&self.logits(weights, x))
    }

    /// Activations of every layer, input excluded; the last entry is logits.
    fn forward(&self, weights: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let widths = self.widths();
        let layers = widths.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (widths[l], widths[l + 1]);
            let input = if l == 0 { x } else { &acts[l - 1] };
            let w = &weights[offset..offset + n_in * n_out];
            let b = &weights[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let mut out: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    /// Mean cross-entropy and its gradient over the given rows.
    pub fn loss_and_grad(&self, weights: &[f64], xs: &[&[f64]], ys: &[usize]) -> (f64, Vec<f64>) {
        let widths = self.widths();
        let layers = widths.len() - 1;
        let mut grad = vec![0.0; weights.len()];
        let mut loss = 0.0;
        let offsets: Vec<usize> = widths
            .windows(2)
            .scan(0, |acc, p| {
                let o = *acc;
                *acc += p[0] * p[1] + p[1];
                Some(o)
            })
            .collect();
        for (x, &y) in xs.iter().zip(ys) {
            let acts = self.forward(weights, x);
            let probs = softmax(&acts[layers - 1]);
            loss -= probs[y].max(1e-300).ln();
            let mut delta: Vec<f64> = probs;
            delta[y] -= 1.0;
            for l in (0..layers).rev() {
                let (n_in, n_out) = (widths[l], widths[l + 1]);
                let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
                let off = offsets[l];
                for o in 0..n_out {
                    let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += delta[o] * a;
                    }
                    grad[off + n_in * n_out + o] += delta[o];
                }
                if l > 0 {
                    let w = &weights[off..off + n_in * n_out];
                    delta = (0..n_in)
                        .map(|i| {
                            if input[i] <= 0.0 {
                                0.0
                            } else {
                                (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum()
                            }
                        })
                        .collect();
                }
            }
        }
        let n = xs.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
