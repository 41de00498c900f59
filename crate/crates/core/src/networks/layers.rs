use partret_autograd::{prefixed, Module, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

/// Uniform in `±sqrt(6 / fan_in)`.
pub(crate) fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    Tensor::from_fn(shape.to_vec(), |_| dist.sample(rng))
}

pub(crate) fn normal(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor {
    let dist = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(shape.to_vec(), |_| dist.sample(rng))
}

/// `x W + b` over the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Var::param(kaiming_uniform(&[fan_in, fan_out], fan_in, rng)),
            bias: Var::param(Tensor::zeros([fan_out])),
        }
    }

    pub fn forward(&self, x: &Var) -> Var {
        x.matmul(&self.weight).add(&self.bias)
    }
}

impl Module for Linear {
    fn params_mut(&mut self) -> Vec<(String, &mut Var)> {
        vec![("w".into(), &mut self.weight), ("b".into(), &mut self.bias)]
    }
}

/// Three linear layers with ReLU after the first two.
#[derive(Clone, Debug)]
pub struct Mlp3 {
    pub layers: [Linear; 3],
}

impl Mlp3 {
    pub fn new(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            layers: [Linear::new(input, hidden, rng), Linear::new(hidden, hidden, rng), Linear::new(hidden, output, rng)],
        }
    }

    pub fn forward(&self, x: &Var) -> Var {
        let h = self.layers[0].forward(x).relu();
        let h = self.layers[1].forward(&h).relu();
        self.layers[2].forward(&h)
    }
}

impl Module for Mlp3 {
    fn params_mut(&mut self) -> Vec<(String, &mut Var)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.extend(prefixed(&format!("l{i}"), l.params_mut()));
        }
        out
    }
}

/// Grouped temporal convolution over `[B, C, T]`.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: Var,
    pub bias: Var,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv1d {
    pub fn new(c_in: usize, c_out: usize, kernel: usize, stride: usize, groups: usize, rng: &mut impl Rng) -> Self {
        assert!(c_in % groups == 0 && c_out % groups == 0, "channels must split into groups");
        let per_group = c_in / groups;
        Self {
            weight: Var::param(kaiming_uniform(&[c_out, per_group, kernel], per_group * kernel, rng)),
            bias: Var::param(Tensor::zeros([c_out])),
            stride,
            padding: (kernel - 1) / 2,
            groups,
        }
    }

    pub fn forward(&self, x: &Var) -> Var {
        x.conv1d(&self.weight, Some(&self.bias), self.stride, self.padding, self.groups)
    }
}

impl Module for Conv1d {
    fn params_mut(&mut self) -> Vec<(String, &mut Var)> {
        vec![("w".into(), &mut self.weight), ("b".into(), &mut self.bias)]
    }
}

/// Query, key and value projections of one attention layer.
#[derive(Clone, Debug)]
pub struct AttentionLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
}

impl AttentionLayer {
    pub fn new(d: usize, rng: &mut impl Rng) -> Self {
        Self { query: Linear::new(d, d, rng), key: Linear::new(d, d, rng), value: Linear::new(d, d, rng) }
    }
}

impl Module for AttentionLayer {
    fn params_mut(&mut self) -> Vec<(String, &mut Var)> {
        let mut out = prefixed("q", self.query.params_mut());
        out.extend(prefixed("k", self.key.params_mut()));
        out.extend(prefixed("v", self.value.params_mut()));
        out
    }
}
