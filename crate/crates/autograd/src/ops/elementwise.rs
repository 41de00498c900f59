use crate::tensor::{broadcast_shape, broadcast_strides, for_each_index, numel, Tensor};
use crate::var::Var;

fn broadcast_binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let shape = broadcast_shape(a.shape(), b.shape());
    let sa = broadcast_strides(a.shape(), &shape);
    let sb = broadcast_strides(b.shape(), &shape);
    let mut data = Vec::with_capacity(numel(&shape));
    for_each_index(&shape, |_, idx| {
        let (mut oa, mut ob) = (0, 0);
        for (k, &i) in idx.iter().enumerate() {
            oa += i * sa[k];
            ob += i * sb[k];
        }
        data.push(f(a.data()[oa], b.data()[ob]));
    });
    Tensor::new(shape, data)
}

impl Var {
    pub fn add(&self, other: &Var) -> Var {
        let out = broadcast_binary(self.value(), other.value(), |x, y| x + y);
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        Var::from_op(
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| vec![Some(g.sum_to_shape(&sa)), Some(g.sum_to_shape(&sb))]),
        )
    }

    pub fn sub(&self, other: &Var) -> Var {
        let out = broadcast_binary(self.value(), other.value(), |x, y| x - y);
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        Var::from_op(
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                vec![Some(g.sum_to_shape(&sa)), Some(g.map(|x| -x).sum_to_shape(&sb))]
            }),
        )
    }

    pub fn mul(&self, other: &Var) -> Var {
        let out = broadcast_binary(self.value(), other.value(), |x, y| x * y);
        let (a, b) = (self.value().clone(), other.value().clone());
        Var::from_op(
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let ga = broadcast_binary(g, &b, |g, y| g * y).sum_to_shape(a.shape());
                let gb = broadcast_binary(g, &a, |g, x| g * x).sum_to_shape(b.shape());
                vec![Some(ga), Some(gb)]
            }),
        )
    }

    pub fn div(&self, other: &Var) -> Var {
        let out = broadcast_binary(self.value(), other.value(), |x, y| x / y);
        let (a, b) = (self.value().clone(), other.value().clone());
        let shape = out.shape().to_vec();
        Var::from_op(
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let ga = broadcast_binary(g, &b, |g, y| g / y).sum_to_shape(a.shape());
                let ab = a.broadcast_to(&shape);
                let bb = b.broadcast_to(&shape);
                let gb = Tensor::from_fn(shape.clone(), |i| {
                    -g.data()[i] * ab.data()[i] / (bb.data()[i] * bb.data()[i])
                })
                .sum_to_shape(b.shape());
                vec![Some(ga), Some(gb)]
            }),
        )
    }

    /// Applies `f` elementwise with derivative `df(x, y)` where `y = f(x)`.
    fn unary(&self, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Var {
        let x = self.value().clone();
        let y = x.map(&f);
        let yc = y.clone();
        Var::from_op(
            y,
            vec![self.clone()],
            Box::new(move |g| {
                let data = g
                    .data()
                    .iter()
                    .zip(x.data().iter().zip(yc.data()))
                    .map(|(g, (&x, &y))| g * df(x, y))
                    .collect();
                vec![Some(Tensor::new(g.shape().to_vec(), data))]
            }),
        )
    }

    pub fn neg(&self) -> Var {
        self.unary(|x| -x, |_, _| -1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        self.unary(move |x| x + c, |_, _| 1.0)
    }

    pub fn mul_scalar(&self, c: f64) -> Var {
        self.unary(move |x| x * c, move |_, _| c)
    }

    pub fn sqr(&self) -> Var {
        self.unary(|x| x * x, |x, _| 2.0 * x)
    }

    pub fn sqrt(&self) -> Var {
        self.unary(f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn exp(&self) -> Var {
        self.unary(f64::exp, |_, y| y)
    }

    pub fn sin(&self) -> Var {
        self.unary(f64::sin, |x, _| x.cos())
    }

    pub fn cos(&self) -> Var {
        self.unary(f64::cos, |x, _| -x.sin())
    }

    pub fn relu(&self) -> Var {
        self.unary(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&self, slope: f64) -> Var {
        self.unary(
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn sigmoid(&self) -> Var {
        self.unary(|x| 1.0 / (1.0 + (-x).exp()), |_, y| y * (1.0 - y))
    }

    pub fn tanh(&self) -> Var {
        self.unary(f64::tanh, |_, y| 1.0 - y * y)
    }

    /// `max(x, floor)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&self, floor: f64) -> Var {
        self.unary(move |x| x.max(floor), move |x, _| if x > floor { 1.0 } else { 0.0 })
    }
}
