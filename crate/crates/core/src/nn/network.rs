use super::ops::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2_backward,
    maxpool2_forward, sigmoid, sigmoid_derivative, softmax, softmax_cross_entropy, PoolMask,
};
use super::{NnError, Real, Result, Tensor};
use crate::rng::XorShift64;

/// One stage of a network. Convolutions are always stride 1 with valid
/// padding; pooling is always 2×2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv { kernel: usize, filters: usize },
    MaxPool,
    Dense { units: usize },
    Sigmoid,
    Softmax,
}

impl LayerSpec {
    /// conv3×3·8 → σ → pool → conv3×3·16 → σ → pool → dense 64 → σ →
    /// dense `classes` → softmax.
    pub fn default_stack(classes: usize) -> Vec<LayerSpec> {
        use LayerSpec::*;
        vec![
            Conv {
                kernel: 3,
                filters: 8,
            },
            Sigmoid,
            MaxPool,
            Conv {
                kernel: 3,
                filters: 16,
            },
            Sigmoid,
            MaxPool,
            Dense { units: 64 },
            Sigmoid,
            Dense { units: classes },
            Softmax,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layer<T> {
    Conv { kernels: Tensor<T>, bias: Tensor<T> },
    MaxPool,
    Dense { weights: Tensor<T>, bias: Tensor<T> },
    Sigmoid,
    Softmax,
}

/// Activations recorded by a forward pass. `activations[0]` is the input and
/// `activations[i + 1]` the output of layer `i`; the softmax layer passes its
/// logits through unchanged.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T = f32> {
    pub activations: Vec<Tensor<T>>,
    masks: Vec<Option<PoolMask>>,
}

impl<T: Real> ForwardTrace<T> {
    pub fn logits(&self) -> &Tensor<T> {
        self.activations.last().expect("trace holds at least the input")
    }

    /// True when every max-pool layer picked the same winners in both passes.
    pub fn same_pool_winners(&self, other: &ForwardTrace<T>) -> bool {
        self.masks == other.masks
    }
}

/// Sequential network over `H×W×C` inputs ending in a softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    input_shape: [usize; 3],
    specs: Vec<LayerSpec>,
    layers: Vec<Layer<T>>,
}

/// Parameter tensor shapes per layer, after checking the stack is
/// shape-consistent end to end.
fn plan(input_shape: [usize; 3], specs: &[LayerSpec]) -> Result<Vec<Vec<Vec<usize>>>> {
    let arch = |msg: String| Err(NnError::Architecture(msg));
    if input_shape.contains(&0) {
        return arch(format!("input shape {input_shape:?} has a zero extent"));
    }
    let mut spatial = Some((input_shape[0], input_shape[1], input_shape[2]));
    let mut flat = input_shape.iter().product::<usize>();
    let mut out = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let mut shapes = Vec::new();
        match *spec {
            LayerSpec::Conv { kernel, filters } => {
                let Some((h, w, c)) = spatial else {
                    return arch(format!("layer {i}: convolution after a flat layer"));
                };
                if kernel == 0 || filters == 0 || kernel > h || kernel > w {
                    return arch(format!(
                        "layer {i}: kernel {kernel}x{kernel}x{filters} does not fit {h}x{w}x{c}"
                    ));
                }
                shapes.push(vec![kernel, kernel, c, filters]);
                shapes.push(vec![filters]);
                let next = (h - kernel + 1, w - kernel + 1, filters);
                spatial = Some(next);
                flat = next.0 * next.1 * next.2;
            }
            LayerSpec::MaxPool => {
                let Some((h, w, c)) = spatial else {
                    return arch(format!("layer {i}: pooling after a flat layer"));
                };
                if h < 2 || w < 2 {
                    return arch(format!("layer {i}: cannot pool a {h}x{w} map"));
                }
                spatial = Some((h / 2, w / 2, c));
                flat = (h / 2) * (w / 2) * c;
            }
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return arch(format!("layer {i}: dense layer with zero units"));
                }
                shapes.push(vec![flat, units]);
                shapes.push(vec![units]);
                spatial = None;
                flat = units;
            }
            LayerSpec::Sigmoid => {}
            LayerSpec::Softmax => {
                if i + 1 != specs.len() {
                    return arch(format!("layer {i}: softmax must be the last layer"));
                }
                if spatial.is_some() || flat < 2 {
                    return arch(format!(
                        "layer {i}: softmax needs a flat input of at least 2 units"
                    ));
                }
            }
        }
        out.push(shapes);
    }
    if specs.last() != Some(&LayerSpec::Softmax) {
        return arch("the stack must end in a softmax layer".into());
    }
    Ok(out)
}

impl<T: Real> Network<T> {
    /// Builds a network from explicit parameter tensors, in layer order with
    /// weights before bias.
    pub fn from_params(
        input_shape: [usize; 3],
        specs: &[LayerSpec],
        params: Vec<Tensor<T>>,
    ) -> Result<Self> {
        let shapes = plan(input_shape, specs)?;
        let expected: usize = shapes.iter().map(Vec::len).sum();
        if params.len() != expected {
            return Err(NnError::Architecture(format!(
                "expected {expected} parameter tensors, got {}",
                params.len()
            )));
        }
        let mut it = params.into_iter();
        let mut layers = Vec::with_capacity(specs.len());
        for (spec, shapes) in specs.iter().zip(&shapes) {
            let mut take = |shape: &Vec<usize>| -> Result<Tensor<T>> {
                let t = it.next().expect("count checked above");
                if t.shape() != shape.as_slice() {
                    return Err(NnError::ShapeMismatch {
                        op: "parameter",
                        left: shape.clone(),
                        right: t.shape().to_vec(),
                    });
                }
                Ok(t)
            };
            layers.push(match spec {
                LayerSpec::Conv { .. } => Layer::Conv {
                    kernels: take(&shapes[0])?,
                    bias: take(&shapes[1])?,
                },
                LayerSpec::Dense { .. } => Layer::Dense {
                    weights: take(&shapes[0])?,
                    bias: take(&shapes[1])?,
                },
                LayerSpec::MaxPool => Layer::MaxPool,
                LayerSpec::Sigmoid => Layer::Sigmoid,
                LayerSpec::Softmax => Layer::Softmax,
            });
        }
        Ok(Self {
            input_shape,
            specs: specs.to_vec(),
            layers,
        })
    }

    /// All parameters zero; every input then yields uniform scores.
    pub fn zeros(input_shape: [usize; 3], specs: &[LayerSpec]) -> Result<Self> {
        let params = plan(input_shape, specs)?
            .into_iter()
            .flatten()
            .map(|s| Tensor::zeros(&s))
            .collect::<Result<Vec<_>>>()?;
        Self::from_params(input_shape, specs, params)
    }

    /// Weights uniform in `±√(6/(fan_in+fan_out))`, biases zero.
    pub fn init(input_shape: [usize; 3], specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = XorShift64::new(seed);
        let mut params = Vec::new();
        for shapes in plan(input_shape, specs)? {
            if shapes.is_empty() {
                continue;
            }
            let w_shape = &shapes[0];
            let (fan_in, fan_out) = match *w_shape.as_slice() {
                [k1, k2, c, f] => (k1 * k2 * c, k1 * k2 * f),
                [n, m] => (n, m),
                _ => unreachable!("parameter plans are rank 2 or 4"),
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n: usize = w_shape.iter().product();
            let w = (0..n)
                .map(|_| T::narrow(rng.uniform(-limit, limit)))
                .collect();
            params.push(Tensor::new(w_shape, w)?);
            params.push(Tensor::zeros(&shapes[1])?);
        }
        Self::from_params(input_shape, specs, params)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    /// Width of the softmax head.
    pub fn num_classes(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense { bias, .. } => Some(bias.len()),
                _ => None,
            })
            .unwrap_or_else(|| self.input_shape.iter().product())
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Conv { kernels, bias } => out.extend([kernels, bias]),
                Layer::Dense { weights, bias } => out.extend([weights, bias]),
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv { kernels, bias } => {
                    out.push(kernels);
                    out.push(bias);
                }
                Layer::Dense { weights, bias } => {
                    out.push(weights);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        let params = self.params().into_iter().map(|p| p.cast::<U>()).collect();
        Network::from_params(self.input_shape, &self.specs, params)
            .expect("shapes are unchanged by a cast")
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.shape() != self.input_shape {
            return Err(NnError::ShapeMismatch {
                op: "network input",
                left: self.input_shape.to_vec(),
                right: input.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<ForwardTrace<T>> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut masks = Vec::with_capacity(self.layers.len());
        activations.push(input.clone());
        for layer in &self.layers {
            let x = activations.last().expect("input pushed above");
            let (y, mask) = match layer {
                Layer::Conv { kernels, bias } => (conv2d_forward(x, kernels, bias)?, None),
                Layer::MaxPool => {
                    let (y, m) = maxpool2_forward(x)?;
                    (y, Some(m))
                }
                Layer::Dense { weights, bias } => (dense_forward(x, weights, bias)?, None),
                Layer::Sigmoid => (sigmoid(x), None),
                Layer::Softmax => (x.clone(), None),
            };
            activations.push(y);
            masks.push(mask);
        }
        Ok(ForwardTrace { activations, masks })
    }

    /// Softmax probabilities for one input.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Vec<f64>> {
        let trace = self.forward(input)?;
        Ok(softmax(&trace.logits().to_f64_vec()))
    }

    /// Cross-entropy loss for one labelled input, without gradients.
    pub fn loss(&self, input: &Tensor<T>, label: usize) -> Result<(f64, ForwardTrace<T>)> {
        let trace = self.forward(input)?;
        let head = softmax_cross_entropy(trace.logits(), label)?;
        Ok((head.loss, trace))
    }

    /// Cross-entropy loss for one labelled input, plus the gradient of every
    /// parameter (aligned with [`Network::params`]) and the probabilities.
    pub fn loss_and_gradients(
        &self,
        input: &Tensor<T>,
        label: usize,
    ) -> Result<(f64, Vec<Tensor<T>>, Vec<f64>)> {
        let trace = self.forward(input)?;
        let head = softmax_cross_entropy(trace.logits(), label)?;
        let mut grad = head.dlogits;
        let mut per_layer: Vec<Option<(Tensor<T>, Tensor<T>)>> = vec![None; self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.activations[i];
            match layer {
                Layer::Softmax => {}
                Layer::Sigmoid => {
                    let d = sigmoid_derivative(&trace.activations[i + 1]);
                    let mut g = grad.reshape(x.shape())?;
                    for (gv, &dv) in g.data_mut().iter_mut().zip(d.data()) {
                        *gv = *gv * dv;
                    }
                    grad = g;
                }
                Layer::MaxPool => {
                    let mask = trace.masks[i].as_ref().expect("pool layers record a mask");
                    grad = maxpool2_backward(mask, &grad)?;
                }
                Layer::Dense { weights, .. } => {
                    let (gx, gw, gb) = dense_backward(x, weights, &grad)?;
                    per_layer[i] = Some((gw, gb));
                    grad = gx;
                }
                Layer::Conv { kernels, .. } => {
                    let (gx, gk, gb) = conv2d_backward(x, kernels, &grad, i > 0)?;
                    per_layer[i] = Some((gk, gb));
                    if let Some(gx) = gx {
                        grad = gx;
                    }
                }
            }
        }
        let grads = per_layer
            .into_iter()
            .flatten()
            .flat_map(|(w, b)| [w, b])
            .collect();
        Ok((head.loss, grads, head.probs))
    }

    /// `p ← p − lr·g` for every parameter.
    pub fn apply_gradients(&mut self, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        let params = self.params_mut();
        if params.len() != grads.len() {
            return Err(NnError::InvalidArgument(format!(
                "{} gradient tensors for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (p, g) in params.into_iter().zip(grads) {
            if p.len() != g.len() {
                return Err(NnError::ShapeMismatch {
                    op: "apply_gradients",
                    left: p.shape().to_vec(),
                    right: vec![g.len()],
                });
            }
            for (pv, &gv) in p.data_mut().iter_mut().zip(g) {
                *pv = T::narrow(pv.widen() - lr * gv);
            }
        }
        Ok(())
    }

    /// One SGD step on the mean gradient of `batch`. Returns the mean loss
    /// and how many samples the pre-update model classified correctly.
    pub fn train_step(&mut self, batch: &[(&Tensor<T>, usize)], lr: f64) -> Result<(f64, usize)> {
        if batch.is_empty() {
            return Err(NnError::InvalidArgument("empty batch".into()));
        }
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(NnError::InvalidArgument(format!(
                "learning rate must be finite and nonnegative, got {lr}"
            )));
        }
        let mut acc: Vec<Vec<f64>> = self.params().iter().map(|p| vec![0.0; p.len()]).collect();
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for &(input, label) in batch {
            let (loss, grads, probs) = self.loss_and_gradients(input, label)?;
            loss_sum += loss;
            if argmax(&probs) == label {
                correct += 1;
            }
            for (a, g) in acc.iter_mut().zip(&grads) {
                for (av, gv) in a.iter_mut().zip(g.data()) {
                    *av += gv.widen();
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        for a in &mut acc {
            for v in a.iter_mut() {
                *v *= scale;
            }
        }
        self.apply_gradients(&acc, lr)?;
        let mean = loss_sum * scale;
        if !mean.is_finite() || self.params().iter().any(|p| !p.all_finite()) {
            return Err(NnError::NonFinite("train_step"));
        }
        Ok((mean, correct))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
