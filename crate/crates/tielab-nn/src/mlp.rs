//! Dense feedforward networks with hand-written backpropagation and AdamW.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tielab::rng::LabRng;

use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply<F: Real>(self, z: &mut Array2<F>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(F::zero())),
            Activation::Tanh => z.mapv_inplace(|v| v.tanh()),
            Activation::Identity => {}
        }
    }

    /// Multiply `g` by the derivative, written in terms of the output `a`.
    fn backprop<F: Real>(self, a: &Array2<F>, g: &mut Array2<F>) {
        match self {
            Activation::Relu => Zip::from(g).and(a).for_each(|g, &a| {
                if a <= F::zero() {
                    *g = F::zero();
                }
            }),
            Activation::Tanh => Zip::from(g).and(a).for_each(|g, &a| *g = *g * (F::one() - a * a)),
            Activation::Identity => {}
        }
    }
}

/// Affine layer `x ↦ x W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Real> Dense<F> {
    pub fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Dense<F>>,
    pub activations: Vec<Activation>,
}

impl<F: Real> Mlp<F> {
    /// Layers of widths `sizes`, weights and biases uniform on
    /// `(−1/√fan_in, 1/√fan_in)`.
    pub fn uniform(sizes: &[usize], activations: &[Activation], rng: &mut LabRng) -> Self {
        assert!(sizes.len() >= 2 && activations.len() == sizes.len() - 1);
        let layers = sizes
            .windows(2)
            .map(|io| {
                let bound = 1.0 / (io[0] as f64).sqrt();
                let mut draw = || F::from_f64((2.0 * rng.random::<f64>() - 1.0) * bound).unwrap();
                let w = Array2::from_shape_simple_fn((io[0], io[1]), &mut draw);
                let b = Array1::from_shape_simple_fn(io[1], &mut draw);
                Dense { w, b }
            })
            .collect();
        Self {
            layers,
            activations: activations.to_vec(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.w.ncols()).unwrap_or(0)
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        let mut h = x.to_owned();
        for (l, act) in self.layers.iter().zip(&self.activations) {
            let mut z = h.dot(&l.w) + &l.b;
            act.apply(&mut z);
            h = z;
        }
        h
    }

    /// Input followed by every layer output.
    pub fn forward_trace(&self, x: ArrayView2<F>) -> Vec<Array2<F>> {
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.to_owned());
        for (l, act) in self.layers.iter().zip(&self.activations) {
            let mut z = trace.last().unwrap().dot(&l.w) + &l.b;
            act.apply(&mut z);
            trace.push(z);
        }
        trace
    }

    /// Parameter gradients given `∂L/∂output` for the traced batch.
    pub fn backward(&self, trace: &[Array2<F>], grad_out: Array2<F>) -> Vec<Dense<F>> {
        let mut g = grad_out;
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            self.activations[i].backprop(&trace[i + 1], &mut g);
            let gw = trace[i].t().dot(&g);
            let gb = g.sum_axis(Axis(0));
            if i > 0 {
                g = g.dot(&self.layers[i].w.t());
            }
            grads.push(Dense { w: gw, b: gb });
        }
        grads.reverse();
        grads
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter().copied());
            out.extend(l.b.iter().copied());
        }
        out
    }

    pub fn set_flat_params(&mut self, p: &[F]) {
        assert_eq!(p.len(), self.param_count());
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|x| *x = it.next().unwrap());
            l.b.iter_mut().for_each(|x| *x = it.next().unwrap());
        }
    }
}

/// Flatten gradients in the same order as [`Mlp::flat_params`].
pub fn flatten(grads: &[Dense<impl Real>]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend(g.w.iter().map(|x| x.to_f64().unwrap()));
        out.extend(g.b.iter().map(|x| x.to_f64().unwrap()));
    }
    out
}

/// Adaptive moments with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW<F> {
    pub lr: F,
    pub weight_decay: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    t: i32,
    m: Vec<Dense<F>>,
    v: Vec<Dense<F>>,
}

impl<F: Real> AdamW<F> {
    pub fn new(model: &Mlp<F>, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Dense<F>> = model.layers.iter().map(Dense::zeros_like).collect();
        let c = |x: f64| F::from_f64(x).unwrap();
        Self {
            lr: c(lr),
            weight_decay: c(weight_decay),
            beta1: c(0.9),
            beta2: c(0.999),
            eps: c(1e-8),
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, model: &mut Mlp<F>, grads: &[Dense<F>]) {
        self.t += 1;
        let one = F::one();
        let bc1 = one - self.beta1.powi(self.t);
        let bc2 = one - self.beta2.powi(self.t);
        let (lr, wd, b1, b2, eps) = (self.lr, self.weight_decay, self.beta1, self.beta2, self.eps);
        let update = |p: &mut F, g: &F, m: &mut F, v: &mut F| {
            *p = *p - lr * wd * *p;
            *m = b1 * *m + (one - b1) * *g;
            *v = b2 * *v + (one - b2) * *g * *g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p = *p - lr * mh / (vh.sqrt() + eps);
        };
        for (((layer, g), m), v) in model.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut layer.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(update);
            Zip::from(&mut layer.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(update);
        }
    }
}
