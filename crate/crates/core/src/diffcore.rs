//! Dense reverse-mode automatic differentiation for small MLPs.
//!
//! A [`Tape`] records primitive operations on [`Tensor`] values in execution
//! order and is consumed by exactly one [`Tape::backward`] call. Gradients are
//! produced for every node that depends on a node created with
//! [`Tape::variable`]; nodes created with [`Tape::constant`] are frozen.
//! Requesting the gradient of the network input (a variable) while keeping the
//! weights constant yields the vector-Jacobian product used by the lean
//! adjoint recursion.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::bail;
use crate::math::{sigmoid, tanh};
use crate::{Error, Result};

/// Row-major dense array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            bail!(Dimension, "shape {:?} holds {} values, got {}", shape, numel, data.len());
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: Vec::new(), data: vec![value] }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                bail!(Dimension, "ragged rows: {} vs {}", r.len(), cols);
            }
            data.extend_from_slice(r);
        }
        Tensor::matrix(rows.len(), cols, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&s| s == 1)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows of a 2-D tensor (1 for scalars and vectors).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn scalar_value(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::matrix(c, r, out)
    }

    fn dims2(&self, op: &str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            bail!(Dimension, "{op} needs a 2-D tensor, got shape {:?}", self.shape);
        }
        Ok((self.shape[0], self.shape[1]))
    }
}

/// Plain (tape-free) kernels. The tape ops call exactly these, so tape and
/// tape-free forward passes agree bit for bit.
pub mod kernels {
    use super::*;

    pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (m, k) = a.dims2("matmul")?;
        let (k2, n) = b.dims2("matmul")?;
        if k != k2 {
            bail!(Dimension, "matmul inner dimensions {m}x{k} * {k2}x{n}");
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            let arow = &a.data[i * k..(i + 1) * k];
            for (p, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let brow = &b.data[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += aik * bv;
                }
            }
        }
        Tensor::matrix(m, n, out)
    }

    /// `a · bᵀ`
    pub(crate) fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = (a.rows(), a.cols());
        let n = b.rows();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &a.data[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &b.data[j * k..(j + 1) * k];
                out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            }
        }
        Tensor { shape: vec![m, n], data: out }
    }

    /// `aᵀ · b`
    pub(crate) fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = (a.rows(), a.cols());
        let n = b.cols();
        let mut out = vec![0.0; k * n];
        for i in 0..m {
            let arow = &a.data[i * k..(i + 1) * k];
            let brow = &b.data[i * n..(i + 1) * n];
            for (p, &aip) in arow.iter().enumerate() {
                if aip == 0.0 {
                    continue;
                }
                let orow = &mut out[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += aip * bv;
                }
            }
        }
        Tensor { shape: vec![k, n], data: out }
    }

    fn binary(a: &Tensor, b: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if a.shape == b.shape {
            let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
            return Ok(Tensor { shape: a.shape.clone(), data });
        }
        if b.is_scalar() {
            let y = b.data[0];
            return Ok(Tensor { shape: a.shape.clone(), data: a.data.iter().map(|&x| f(x, y)).collect() });
        }
        if a.is_scalar() {
            let x = a.data[0];
            return Ok(Tensor { shape: b.shape.clone(), data: b.data.iter().map(|&y| f(x, y)).collect() });
        }
        bail!(Dimension, "{op}: incompatible shapes {:?} and {:?}", a.shape, b.shape)
    }

    pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        binary(a, b, "add", |x, y| x + y)
    }

    pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        binary(a, b, "sub", |x, y| x - y)
    }

    pub fn scale(a: &Tensor, c: f64) -> Tensor {
        map(a, |x| c * x)
    }

    pub fn tanh(a: &Tensor) -> Tensor {
        map(a, super::tanh)
    }

    pub fn silu(a: &Tensor) -> Tensor {
        map(a, |x| x * sigmoid(x))
    }

    pub fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: a.shape.clone(), data: a.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn sum(a: &Tensor) -> Tensor {
        Tensor::scalar(a.data.iter().sum())
    }

    pub fn sum_squares(a: &Tensor) -> Tensor {
        Tensor::scalar(a.data.iter().map(|x| x * x).sum())
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let Some(first) = parts.first() else {
            bail!(Dimension, "concat of nothing");
        };
        for p in parts {
            p.dims2("concat")?;
        }
        match axis {
            0 => {
                let cols = first.cols();
                let mut data = Vec::new();
                let mut rows = 0;
                for p in parts {
                    if p.cols() != cols {
                        bail!(Dimension, "concat axis 0: {} vs {} columns", p.cols(), cols);
                    }
                    rows += p.rows();
                    data.extend_from_slice(&p.data);
                }
                Tensor::matrix(rows, cols, data)
            }
            1 => {
                let rows = first.rows();
                if let Some(p) = parts.iter().find(|p| p.rows() != rows) {
                    bail!(Dimension, "concat axis 1: {} vs {} rows", p.rows(), rows);
                }
                let cols: usize = parts.iter().map(|p| p.cols()).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for i in 0..rows {
                    for p in parts {
                        data.extend_from_slice(p.row(i));
                    }
                }
                Tensor::matrix(rows, cols, data)
            }
            _ => bail!(Dimension, "concat axis {axis} on 2-D tensors"),
        }
    }
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Silu(usize),
    Sum(usize),
    SumSquares(usize),
    Concat { parts: Vec<usize>, axis: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Single-use record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf whose gradient is wanted.
    pub fn variable(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Frozen leaf; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> Result<&Tensor> {
        self.nodes.get(id.0).map(|n| &n.value).ok_or(Error::Lookup(id.0))
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id.0).ok_or(Error::Lookup(id.0))
    }

    fn unary(&mut self, a: NodeId, f: impl FnOnce(&Tensor) -> Tensor, op: Op) -> Result<NodeId> {
        let n = self.node(a)?;
        let v = f(&n.value);
        let rg = n.requires_grad;
        Ok(self.push(v, op, rg))
    }

    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<Tensor>,
        op: Op,
    ) -> Result<NodeId> {
        let (na, nb) = (self.node(a)?, self.node(b)?);
        let v = f(&na.value, &nb.value)?;
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(v, op, rg))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, kernels::matmul, Op::MatMul(a.0, b.0))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, kernels::add, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, kernels::sub, Op::Sub(a.0, b.0))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.unary(a, |t| kernels::scale(t, c), Op::Scale(a.0, c))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, kernels::tanh, Op::Tanh(a.0))
    }

    pub fn silu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, kernels::silu, Op::Silu(a.0))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, kernels::sum, Op::Sum(a.0))
    }

    pub fn sum_squares(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, kernels::sum_squares, Op::SumSquares(a.0))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        let mut values = Vec::with_capacity(parts.len());
        let mut rg = false;
        for &p in parts {
            let n = self.node(p)?;
            rg |= n.requires_grad;
            values.push(&n.value);
        }
        let v = kernels::concat(&values, axis)?;
        let op = Op::Concat { parts: parts.iter().map(|p| p.0).collect(), axis };
        Ok(self.push(v, op, rg))
    }

    /// Reverse sweep from `output` seeded with `seed`; returns
    /// ∂⟨seed, output⟩/∂x for every recorded node that requires a gradient.
    pub fn backward(self, output: NodeId, seed: Tensor) -> Result<Gradients> {
        let out = self.node(output)?;
        if out.value.shape != seed.shape && !(out.value.len() == 1 && seed.len() == 1) {
            bail!(Dimension, "seed shape {:?} vs output shape {:?}", seed.shape, out.value.shape);
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if out.requires_grad {
            grads[output.0] = Some(Tensor { shape: out.value.shape.clone(), data: seed.data });
        }
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                &Op::MatMul(a, b) => {
                    if self.nodes[a].requires_grad {
                        let da = kernels::matmul_nt(&g, &self.nodes[b].value);
                        accumulate(&mut grads, a, da);
                    }
                    if self.nodes[b].requires_grad {
                        let db = kernels::matmul_tn(&self.nodes[a].value, &g);
                        accumulate(&mut grads, b, db);
                    }
                }
                &Op::Add(a, b) => {
                    self.pass_through(&mut grads, a, &g, 1.0);
                    self.pass_through(&mut grads, b, &g, 1.0);
                }
                &Op::Sub(a, b) => {
                    self.pass_through(&mut grads, a, &g, 1.0);
                    self.pass_through(&mut grads, b, &g, -1.0);
                }
                &Op::Scale(a, c) => {
                    self.pass_through(&mut grads, a, &g, c);
                }
                &Op::Tanh(a) => {
                    let y = &node.value;
                    let data = g.data.iter().zip(&y.data).map(|(gi, yi)| gi * (1.0 - yi * yi)).collect();
                    accumulate(&mut grads, a, Tensor { shape: g.shape.clone(), data });
                }
                &Op::Silu(a) => {
                    let x = &self.nodes[a].value;
                    let data = g
                        .data
                        .iter()
                        .zip(&x.data)
                        .map(|(gi, &xi)| {
                            let s = sigmoid(xi);
                            gi * s * (1.0 + xi * (1.0 - s))
                        })
                        .collect();
                    accumulate(&mut grads, a, Tensor { shape: g.shape.clone(), data });
                }
                &Op::Sum(a) => {
                    let s = g.data[0];
                    accumulate(&mut grads, a, Tensor::filled(&self.nodes[a].value.shape, s));
                }
                &Op::SumSquares(a) => {
                    let s = 2.0 * g.data[0];
                    accumulate(&mut grads, a, kernels::scale(&self.nodes[a].value, s));
                }
                Op::Concat { parts, axis } => {
                    let mut offset = 0;
                    for &p in parts {
                        let pv = &self.nodes[p].value;
                        let (pr, pc) = (pv.rows(), pv.cols());
                        if self.nodes[p].requires_grad {
                            let mut data = Vec::with_capacity(pr * pc);
                            if *axis == 0 {
                                data.extend_from_slice(&g.data[offset * pc..(offset + pr) * pc]);
                            } else {
                                for i in 0..pr {
                                    data.extend_from_slice(&g.row(i)[offset..offset + pc]);
                                }
                            }
                            accumulate(&mut grads, p, Tensor { shape: pv.shape.clone(), data });
                        }
                        offset += if *axis == 0 { pr } else { pc };
                    }
                }
            }
            grads[idx] = Some(g);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.requires_grad && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(&n.value.shape));
            }
        }
        Ok(Gradients { grads })
    }

    fn pass_through(&self, grads: &mut [Option<Tensor>], target: usize, g: &Tensor, c: f64) {
        let tn = &self.nodes[target];
        if !tn.requires_grad {
            return;
        }
        let contrib = if tn.value.shape == g.shape {
            if c == 1.0 { g.clone() } else { kernels::scale(g, c) }
        } else {
            // scalar operand broadcast against a tensor
            Tensor { shape: tn.value.shape.clone(), data: vec![c * g.data.iter().sum::<f64>()] }
        };
        accumulate(grads, target, contrib);
    }
}

fn accumulate(grads: &mut [Option<Tensor>], idx: usize, contrib: Tensor) {
    match &mut grads[idx] {
        Some(existing) => {
            for (e, c) in existing.data.iter_mut().zip(&contrib.data) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contrib),
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Result<&Tensor> {
        match self.grads.get(id.0) {
            Some(Some(g)) => Ok(g),
            Some(None) => Err(Error::Domain(format!("node {} does not require a gradient", id.0))),
            None => Err(Error::Lookup(id.0)),
        }
    }

    pub fn take(&mut self, id: NodeId) -> Result<Tensor> {
        match self.grads.get_mut(id.0) {
            Some(slot) => slot
                .take()
                .ok_or_else(|| Error::Domain(format!("node {} has no gradient", id.0))),
            None => Err(Error::Lookup(id.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random(rng: &mut Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let p = kernels::matmul(&Tensor::identity(2), &a).unwrap();
        assert_eq!(p, a);
    }

    #[test]
    fn annihilating_product() {
        let a = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        let b = Tensor::from_rows(&[&[0.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert!(kernels::matmul(&a, &b).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(11);
        let a = random(&mut rng, 3, 3);
        let b = random(&mut rng, 3, 3);
        let c = kernels::matmul(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a.get(i, k) * b.get(k, j);
                }
                assert!((c.get(i, j) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(kernels::matmul(&a, &b), Err(Error::Dimension(_))));
        assert!(matches!(kernels::add(&a, &Tensor::zeros(&[3, 2])), Err(Error::Dimension(_))));
        assert!(Tensor::new(vec![2, 2], vec![1.0]).is_err());
    }

    #[test]
    fn pointwise_values() {
        assert_eq!(kernels::tanh(&Tensor::scalar(0.0)).data()[0], 0.0);
        let x = Tensor::from_rows(&[&[1.5, -2.0]]).unwrap();
        assert_eq!(kernels::scale(&x, 1.0), x);
        let s = kernels::silu(&Tensor::scalar(1.0)).data()[0];
        assert!((s - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!((s - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn sum_squares_gradient() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::from_rows(&[&[1.0, 2.0]]).unwrap());
        let y = tape.sum_squares(x).unwrap();
        let g = tape.backward(y, Tensor::scalar(1.0)).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn tanh_gradient_at_zero() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::scalar(0.0));
        let y = tape.tanh(x).unwrap();
        let g = tape.backward(y, Tensor::scalar(1.0)).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0]);
    }

    #[test]
    fn unknown_node_is_lookup_error() {
        let mut other = Tape::new();
        for _ in 0..5 {
            other.constant(Tensor::scalar(0.0));
        }
        let far = other.constant(Tensor::scalar(0.0));
        let mut tape = Tape::new();
        tape.variable(Tensor::scalar(1.0));
        assert!(matches!(tape.backward(far, Tensor::scalar(1.0)), Err(Error::Lookup(5))));
    }

    #[test]
    fn constants_get_no_gradient_and_scalar_broadcast_reduces() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::from_rows(&[&[1.0, 2.0, 3.0]]).unwrap());
        let c = tape.variable(Tensor::scalar(0.5));
        let k = tape.constant(Tensor::from_rows(&[&[1.0, 1.0, 1.0]]).unwrap());
        let y = tape.add(x, c).unwrap();
        let y = tape.sub(y, k).unwrap();
        let s = tape.sum_squares(y).unwrap();
        let g = tape.backward(s, Tensor::scalar(1.0)).unwrap();
        // d/dc sum (x + c - 1)^2 = 2 * sum(x + c - 1) = 2 * (0.5 + 1.5 + 2.5)
        assert!((g.get(c).unwrap().data()[0] - 9.0).abs() < 1e-14);
        assert!(g.get(k).is_err());
    }

    #[test]
    fn concat_gradient_splits() {
        let mut tape = Tape::new();
        let a = tape.variable(Tensor::from_rows(&[&[1.0], &[2.0]]).unwrap());
        let b = tape.variable(Tensor::from_rows(&[&[3.0, 4.0], &[5.0, 6.0]]).unwrap());
        let c = tape.concat(&[a, b], 1).unwrap();
        let seed = Tensor::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let g = tape.backward(c, seed).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[1.0, 4.0]);
        assert_eq!(g.get(b).unwrap().data(), &[2.0, 3.0, 5.0, 6.0]);
    }
}
