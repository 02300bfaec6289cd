//! Reverse-mode automatic differentiation over a recorded tape, plus the
//! trainable [`Parameter`] type and the plain SGD update.

use crate::error::{Error, Result};
use crate::tensor::{dense_dims, ConvGeometry, Tensor};

/// A named trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub gradient: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let gradient = value.zeros_like();
        Self {
            name: name.into(),
            value,
            gradient,
        }
    }

    pub fn zero_grad(&mut self) {
        self.gradient.data_mut().fill(0.0);
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param(usize),
    Conv2d {
        input: Var,
        kernels: Var,
        bias: Var,
        geom: ConvGeometry,
        cols: Vec<f64>,
    },
    Dense {
        input: Var,
        weights: Var,
        bias: Var,
    },
    Relu(Var),
    Mask {
        input: Var,
        mask: Tensor,
    },
    Reshape(Var),
    Mse {
        pred: Var,
        target: Tensor,
    },
}

struct Node {
    op: Op,
    // `None` for parameter nodes, whose value lives in the parameter slice.
    value: Option<Tensor>,
}

/// Records primitive operations in execution order so adjoints can be
/// replayed in reverse. Operands are always recorded before consumers.
pub struct Tape<'p> {
    params: &'p [Parameter],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Parameter]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Option<Tensor>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(i), _) => &self.params[*i].value,
            (_, Some(t)) => t,
            _ => unreachable!("non-parameter node without value"),
        }
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Op::Input, Some(value))
    }

    pub fn param(&mut self, index: usize) -> Var {
        assert!(index < self.params.len(), "parameter index out of range");
        self.push(Op::Param(index), None)
    }

    pub fn conv2d(&mut self, input: Var, kernels: Var, bias: Var, stride: usize) -> Result<Var> {
        let (x, k, b) = (self.value(input), self.value(kernels), self.value(bias));
        let geom = ConvGeometry::new(x, k, b, stride)?;
        let cols = geom.im2col(x.data());
        let out = geom.forward(&cols, k.data(), b.data());
        Ok(self.push(
            Op::Conv2d {
                input,
                kernels,
                bias,
                geom,
                cols,
            },
            Some(out),
        ))
    }

    pub fn dense(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var> {
        let out = crate::tensor::dense(self.value(input), self.value(weights), self.value(bias))?;
        Ok(self.push(
            Op::Dense {
                input,
                weights,
                bias,
            },
            Some(out),
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let out = crate::tensor::relu(self.value(input));
        self.push(Op::Relu(input), Some(out))
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(&mut self, input: Var, mask: Tensor) -> Result<Var> {
        let x = self.value(input);
        if x.shape() != mask.shape() {
            return Err(Error::ShapeMismatch {
                op: "mask",
                dim: "element count",
                expected: x.len(),
                found: mask.len(),
            });
        }
        let data = x.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(Op::Mask { input, mask }, Some(out)))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(input).clone().reshape(shape)?;
        Ok(self.push(Op::Reshape(input), Some(out)))
    }

    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let n = self.value(input).len();
        self.reshape(input, &[n])
    }

    pub fn mse(&mut self, pred: Var, target: Tensor) -> Result<Var> {
        let loss = crate::tensor::mse(self.value(pred), &target)?;
        Ok(self.push(Op::Mse { pred, target }, Some(Tensor::scalar(loss))))
    }

    /// Propagates `d loss / d node` back through the tape.
    pub fn backward(&self, loss: Var) -> Result<Adjoints> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params: Vec<Tensor> = self.params.iter().map(|p| p.value.zeros_like()).collect();
        adj[loss.0] = Some(Tensor::scalar(1.0));

        fn acc(slot: &mut Option<Tensor>, shape: &[usize], data: Vec<f64>) {
            match slot {
                Some(t) => {
                    for (a, b) in t.data_mut().iter_mut().zip(data) {
                        *a += b;
                    }
                }
                None => *slot = Some(Tensor::new(shape.to_vec(), data).expect("adjoint shape")),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(i) => params[*i].add_assign(&g),
                Op::Conv2d {
                    input,
                    kernels,
                    bias,
                    geom,
                    cols,
                } => {
                    let k = self.value(*kernels);
                    let (dx, dk, db) = geom.backward(cols, k.data(), g.data());
                    acc(&mut adj[input.0], self.value(*input).shape(), dx);
                    acc(&mut adj[kernels.0], k.shape(), dk);
                    acc(&mut adj[bias.0], self.value(*bias).shape(), db);
                }
                Op::Dense {
                    input,
                    weights,
                    bias,
                } => {
                    let (x, w, b) = (self.value(*input), self.value(*weights), self.value(*bias));
                    let (m, n) = dense_dims(x, w, b)?;
                    let dy = g.data();
                    let mut dw = vec![0.0; m * n];
                    let mut dx = vec![0.0; n];
                    for i in 0..m {
                        let gi = dy[i];
                        let row = &w.data()[i * n..(i + 1) * n];
                        for j in 0..n {
                            dw[i * n + j] = gi * x.data()[j];
                            dx[j] += row[j] * gi;
                        }
                    }
                    acc(&mut adj[input.0], x.shape(), dx);
                    acc(&mut adj[weights.0], w.shape(), dw);
                    acc(&mut adj[bias.0], b.shape(), dy.to_vec());
                }
                Op::Relu(input) => {
                    let x = self.value(*input);
                    let dx = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                        .collect();
                    acc(&mut adj[input.0], x.shape(), dx);
                }
                Op::Mask { input, mask } => {
                    let dx = g.data().iter().zip(mask.data()).map(|(d, m)| d * m).collect();
                    acc(&mut adj[input.0], mask.shape(), dx);
                }
                Op::Reshape(input) => {
                    let shape = self.value(*input).shape().to_vec();
                    acc(&mut adj[input.0], &shape, g.data().to_vec());
                }
                Op::Mse { pred, target } => {
                    let p = self.value(*pred);
                    let scale = 2.0 * g.data()[0] / p.len() as f64;
                    let dp = p
                        .data()
                        .iter()
                        .zip(target.data())
                        .map(|(a, t)| scale * (a - t))
                        .collect();
                    acc(&mut adj[pred.0], p.shape(), dp);
                }
            }
            adj[idx] = Some(g);
        }
        Ok(Adjoints { nodes: adj, params })
    }
}

/// Result of a backward pass: adjoints for every recorded node and
/// per-parameter gradients (zero for parameters the loss does not touch).
pub struct Adjoints {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Tensor>,
}

impl Adjoints {
    /// Gradient of the loss with respect to a recorded value, if it
    /// participates in the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    pub fn param_grads(&self) -> &[Tensor] {
        &self.params
    }

    pub fn into_param_grads(self) -> Vec<Tensor> {
        self.params
    }
}

/// Adds `grads[i] * scale` into `params[i].gradient`.
pub fn accumulate_gradients(params: &mut [Parameter], grads: &[Tensor], scale: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        for (a, b) in p.gradient.data_mut().iter_mut().zip(g.data()) {
            *a += scale * b;
        }
    }
}

/// Rescales the accumulated gradients so their global L2 norm is at most
/// `max_norm`. Returns the norm before rescaling.
pub fn clip_gradient_norm(params: &mut [Parameter], max_norm: f64) -> f64 {
    let norm = params
        .iter()
        .flat_map(|p| p.gradient.data())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = max_norm / norm;
        for p in params.iter_mut() {
            for g in p.gradient.data_mut() {
                *g *= k;
            }
        }
    }
    norm
}

/// Plain SGD: `value -= lr * gradient`, then zero the gradients.
///
/// All gradients are checked before any parameter is touched, so an error
/// leaves the parameters unchanged.
pub fn sgd_step(params: &mut [Parameter], lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidConfig(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    if let Some(p) = params.iter().find(|p| !p.gradient.all_finite()) {
        return Err(Error::NonFiniteGradient(p.name.clone()));
    }
    for p in params.iter_mut() {
        for (v, g) in p.value.data_mut().iter_mut().zip(p.gradient.data()) {
            *v -= lr * g;
        }
        p.zero_grad();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(name: &str, v: f64) -> Parameter {
        Parameter::new(name, Tensor::new(vec![1, 1], vec![v]).unwrap())
    }

    #[test]
    fn chain_rule_by_hand() {
        // loss = (w*x - t)^2 with w=2, x=3, t=5 -> dL/dw = 2*(6-5)*3 = 6
        let params = vec![scalar_param("w", 2.0), Parameter::new("b", Tensor::zeros(&[1]).unwrap())];
        let mut tape = Tape::new(&params);
        let x = tape.input(Tensor::scalar(3.0));
        let w = tape.param(0);
        let b = tape.param(1);
        let y = tape.dense(x, w, b).unwrap();
        let loss = tape.mse(y, Tensor::scalar(5.0)).unwrap();
        assert_eq!(tape.value(loss).item(), Some(1.0));
        let adj = tape.backward(loss).unwrap();
        assert_eq!(adj.param_grads()[0].data(), &[6.0]);
        assert_eq!(adj.param_grads()[1].data(), &[2.0]);
    }

    #[test]
    fn unused_parameter_gets_zero() {
        let params = vec![scalar_param("w", 2.0), scalar_param("unused", 4.0)];
        let mut tape = Tape::new(&params);
        let w = tape.param(0);
        let w = tape.flatten(w).unwrap();
        let loss = tape.mse(w, Tensor::scalar(0.0)).unwrap();
        let adj = tape.backward(loss).unwrap();
        assert_eq!(adj.param_grads()[1].data(), &[0.0]);
        assert_eq!(adj.param_grads()[0].data(), &[4.0]);
    }

    #[test]
    fn backward_before_forward() {
        let params: Vec<Parameter> = Vec::new();
        let tape = Tape::new(&params);
        assert!(matches!(tape.backward(Var(0)), Err(Error::EmptyTape)));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let params: Vec<Parameter> = Vec::new();
        let mut tape = Tape::new(&params);
        let x = tape.input(Tensor::ones(&[3]).unwrap());
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn masked_positions_get_zero_gradient() {
        let params = vec![Parameter::new("v", Tensor::from_vec(vec![1.0, -2.0, 3.0]).unwrap())];
        let mut tape = Tape::new(&params);
        let v = tape.param(0);
        let m = tape
            .mask(v, Tensor::from_vec(vec![2.0, 0.0, 2.0]).unwrap())
            .unwrap();
        let loss = tape.mse(m, Tensor::zeros(&[3]).unwrap()).unwrap();
        let adj = tape.backward(loss).unwrap();
        assert_eq!(adj.get(v).unwrap().data()[1], 0.0);
        assert_eq!(adj.param_grads()[0].data()[1], 0.0);
    }

    #[test]
    fn sgd_cases() {
        let mut p = vec![scalar_param("w", 1.0)];
        p[0].gradient.data_mut()[0] = 0.5;
        sgd_step(&mut p, 0.1).unwrap();
        assert!((p[0].value.data()[0] - 0.95).abs() < 1e-15);
        assert_eq!(p[0].gradient.data()[0], 0.0);

        sgd_step(&mut p, 0.1).unwrap();
        assert!((p[0].value.data()[0] - 0.95).abs() < 1e-15);

        p[0].gradient.data_mut()[0] = 3.0;
        sgd_step(&mut p, 0.0).unwrap();
        assert!((p[0].value.data()[0] - 0.95).abs() < 1e-15);

        p[0].gradient.data_mut()[0] = f64::NAN;
        match sgd_step(&mut p, 0.1) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "w"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
