use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Gradients, ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

/// Constant sparse matrix in compressed-row form, used as a left operand.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows {
    pub cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    SparseMatMulT(SparseRows, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    MaskedSoftmax(Var),
    Conv1d { input: Var, kernel: Var, bias: Var },
    MaxOverTime { input: Var, argmax: Vec<usize> },
    Embedding { table: Var, ids: Vec<usize> },
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Row(Var, usize),
    Pick(Var, usize),
    MaskedSum { input: Var, mask: Vec<bool>, scale: f64 },
    Sum(Var),
    Dropout { input: Var, mask: Vec<f64> },
    PadRows { input: Var, left: usize },
    SliceRows { input: Var, start: usize },
    MulScalar(Var, Var),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
}

/// Records primitive operations so that gradients can be replayed in reverse.
///
/// The tape borrows the model's [`ParamSet`]; parameter values are read in
/// place rather than copied. Nodes are appended in execution order, so the
/// node list is already a topological order.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    mode: Mode,
    recording: bool,
    consumed: bool,
    rng: ChaCha8Rng,
}

impl<'p> Tape<'p> {
    /// A recording tape. `seed` drives dropout masks in train mode.
    pub fn new(params: &'p ParamSet, mode: Mode, seed: u64) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            mode,
            recording: true,
            consumed: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A tape that only evaluates values; `backward` on it fails.
    pub fn inference(params: &'p ParamSet) -> Self {
        let mut tape = Tape::new(params, Mode::Eval, 0);
        tape.recording = false;
        tape
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.tensor(*id),
            (None, _) => unreachable!("node without value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let op = if self.recording { op } else { Op::Leaf };
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Node for a parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    /// Matrix products for rank-1/rank-2 operands: `[m,k]·[k,n]`,
    /// `[m,k]·[k]`, `[k]·[k,n]` and the dot product `[k]·[k]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let out = match (av.shape(), bv.shape()) {
            (&[m, k], &[k2, n]) if k == k2 => {
                let mut out = vec![0.0; m * n];
                let (ad, bd) = (av.data(), bv.data());
                for i in 0..m {
                    let orow = &mut out[i * n..(i + 1) * n];
                    for (p, &x) in ad[i * k..(i + 1) * k].iter().enumerate() {
                        if x != 0.0 {
                            axpy(x, &bd[p * n..(p + 1) * n], orow);
                        }
                    }
                }
                Tensor::from_parts(vec![m, n], out)
            }
            (&[m, k], &[k2]) if k == k2 => {
                let (ad, bd) = (av.data(), bv.data());
                let out = (0..m).map(|i| dot(&ad[i * k..(i + 1) * k], bd)).collect();
                Tensor::from_parts(vec![m], out)
            }
            (&[k], &[k2, n]) if k == k2 => {
                let mut out = vec![0.0; n];
                let bd = bv.data();
                for (p, &x) in av.data().iter().enumerate() {
                    axpy(x, &bd[p * n..(p + 1) * n], &mut out);
                }
                Tensor::from_parts(vec![n], out)
            }
            (&[k], &[k2]) if k == k2 => Tensor::scalar(dot(av.data(), bv.data())),
            (l, r) => return Err(Error::shape("matmul", l, r)),
        };
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    /// `a · bᵀ` where `b` is `[c, d]` and `a` is `[n, d]` or `[d]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (c, d) = match bv.shape() {
            &[c, d] => (c, d),
            r => return Err(Error::shape("matmul_t", av.shape(), r)),
        };
        let bd = bv.data();
        let out = match av.shape() {
            &[d2] if d2 == d => {
                let x = av.data();
                let out = (0..c).map(|j| dot(x, &bd[j * d..(j + 1) * d])).collect();
                Tensor::from_parts(vec![c], out)
            }
            &[n, d2] if d2 == d => {
                let ad = av.data();
                let mut out = Vec::with_capacity(n * c);
                for i in 0..n {
                    let x = &ad[i * d..(i + 1) * d];
                    out.extend((0..c).map(|j| dot(x, &bd[j * d..(j + 1) * d])));
                }
                Tensor::from_parts(vec![n, c], out)
            }
            l => return Err(Error::shape("matmul_t", l, bv.shape())),
        };
        self.push(out, Op::MatMulT(a, b), "matmul_t")
    }

    /// `x · bᵀ` for a constant sparse `x` of shape `[n, d]` and `b` of shape `[c, d]`.
    pub fn sparse_matmul_t(&mut self, x: SparseRows, b: Var) -> Result<Var> {
        let bv = self.value(b);
        let (c, d) = match bv.shape() {
            &[c, d] if d == x.cols => (c, d),
            r => return Err(Error::shape("sparse_matmul_t", &[x.rows.len(), x.cols], r)),
        };
        let bd = bv.data();
        let mut out = vec![0.0; x.rows.len() * c];
        for (i, row) in x.rows.iter().enumerate() {
            for j in 0..c {
                let w = &bd[j * d..(j + 1) * d];
                out[i * c + j] = row.iter().map(|&(col, v)| v * w[col]).sum();
            }
        }
        let t = Tensor::from_parts(vec![x.rows.len(), c], out);
        self.push(t, Op::SparseMatMulT(x, b), "sparse_matmul_t")
    }

    fn zip_with(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(name, av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        self.push(out, op, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    /// Adds a vector `b` of length `n` to every row of `a` (`[.., n]`).
    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.rank() != 1 || av.rank() == 0 || av.cols() != bv.len() {
            return Err(Error::shape("add_bias", av.shape(), bv.shape()));
        }
        let n = bv.len();
        let bd = bv.data();
        let data = av.data().iter().enumerate().map(|(i, &x)| x + bd[i % n]).collect();
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        self.push(out, Op::AddBias(a, b), "add_bias")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.map(a, |x| x * c);
        self.push(out, Op::Scale(a, c), "scale")
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let av = self.value(a);
        Tensor::from_parts(av.shape().to_vec(), av.data().iter().map(|&x| f(x)).collect())
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, f64::tanh);
        self.push(out, Op::Tanh(a), "tanh")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, sigmoid);
        self.push(out, Op::Sigmoid(a), "sigmoid")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, |x| x.max(0.0));
        self.push(out, Op::Relu(a), "relu")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, f64::exp);
        self.push(out, Op::Exp(a), "exp")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, f64::ln);
        self.push(out, Op::Log(a), "log")
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.rank() == 0 {
            return Err(Error::shape("softmax", av.shape(), &[]));
        }
        let c = av.cols();
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(c) {
            softmax_in_place(row);
        }
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        self.push(out, Op::Softmax(a), "softmax")
    }

    /// Softmax over a vector where masked-out entries (`false`) get weight 0.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let av = self.value(a);
        if av.rank() != 1 || av.len() != mask.len() {
            return Err(Error::shape("masked_softmax", av.shape(), &[mask.len()]));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::invalid("masked_softmax: every position is masked"));
        }
        let max = av
            .data()
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&x, _)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut data: Vec<f64> = av
            .data()
            .iter()
            .zip(mask)
            .map(|(&x, &m)| if m { (x - max).exp() } else { 0.0 })
            .collect();
        let total: f64 = data.iter().sum();
        data.iter_mut().for_each(|x| *x /= total);
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        self.push(out, Op::MaskedSoftmax(a), "masked_softmax")
    }

    /// Stride-1 convolution of `input` (`[len, channels]`) with `kernel`
    /// (`[width, channels, maps]`) plus `bias` (`[maps]`), giving
    /// `[len - width + 1, maps]`.
    pub fn conv1d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (xv, kv, bv) = (self.value(input), self.value(kernel), self.value(bias));
        let (len, ch) = match xv.shape() {
            &[l, c] => (l, c),
            s => return Err(Error::shape("conv1d", s, kv.shape())),
        };
        let (width, maps) = match kv.shape() {
            &[w, c, f] if c == ch => (w, f),
            s => return Err(Error::shape("conv1d", xv.shape(), s)),
        };
        if bv.shape() != [maps] {
            return Err(Error::shape("conv1d", kv.shape(), bv.shape()));
        }
        if len < width {
            return Err(Error::shape("conv1d", xv.shape(), kv.shape()));
        }
        let steps = len - width + 1;
        let span = width * ch;
        let (xd, kd, bd) = (xv.data(), kv.data(), bv.data());
        let mut out = Vec::with_capacity(steps * maps);
        for _ in 0..steps {
            out.extend_from_slice(bd);
        }
        for t in 0..steps {
            let window = &xd[t * ch..t * ch + span];
            let orow = &mut out[t * maps..(t + 1) * maps];
            for (i, &x) in window.iter().enumerate() {
                if x != 0.0 {
                    axpy(x, &kd[i * maps..(i + 1) * maps], orow);
                }
            }
        }
        let out = Tensor::from_parts(vec![steps, maps], out);
        self.push(out, Op::Conv1d { input, kernel, bias }, "conv1d")
    }

    /// Column-wise maximum of a `[time, features]` matrix.
    pub fn max_over_time(&mut self, input: Var) -> Result<Var> {
        let xv = self.value(input);
        if xv.rank() != 2 {
            return Err(Error::shape("max_over_time", xv.shape(), &[]));
        }
        let (t, f) = (xv.shape()[0], xv.shape()[1]);
        let xd = xv.data();
        let mut argmax = vec![0usize; f];
        let mut best = xd[..f].to_vec();
        for step in 1..t {
            for j in 0..f {
                let v = xd[step * f + j];
                if v > best[j] {
                    best[j] = v;
                    argmax[j] = step;
                }
            }
        }
        let out = Tensor::from_parts(vec![f], best);
        self.push(out, Op::MaxOverTime { input, argmax }, "max_over_time")
    }

    /// Rows of `table` (`[vocab, dim]`) selected by `ids`, giving `[ids.len(), dim]`.
    ///
    /// Row 0 is the padding row and never receives gradient.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if tv.rank() != 2 || ids.is_empty() {
            return Err(Error::shape("embedding", tv.shape(), &[ids.len()]));
        }
        let (v, k) = (tv.shape()[0], tv.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * k);
        for &id in ids {
            if id >= v {
                return Err(Error::shape("embedding", tv.shape(), &[id]));
            }
            out.extend_from_slice(tv.row(id));
        }
        let out = Tensor::from_parts(vec![ids.len(), k], out);
        self.push(
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            "embedding",
        )
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let pv = self.value(p);
            if pv.rank() != 1 {
                return Err(Error::shape("concat", pv.shape(), &[]));
            }
            data.extend_from_slice(pv.data());
        }
        if data.is_empty() {
            return Err(Error::invalid("concat of nothing"));
        }
        let out = Tensor::vector(data);
        self.push(out, Op::Concat(parts.to_vec()), "concat")
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::invalid("stack of nothing"));
        }
        let first = self.value(rows[0]).shape().to_vec();
        if first.len() != 1 {
            return Err(Error::shape("stack", &first, &[]));
        }
        let mut data = Vec::with_capacity(rows.len() * first[0]);
        for &r in rows {
            let rv = self.value(r);
            if rv.shape() != first.as_slice() {
                return Err(Error::shape("stack", &first, rv.shape()));
            }
            data.extend_from_slice(rv.data());
        }
        let out = Tensor::from_parts(vec![rows.len(), first[0]], data);
        self.push(out, Op::Stack(rows.to_vec()), "stack")
    }

    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let av = self.value(a);
        if av.rank() != 2 || i >= av.rows() {
            return Err(Error::shape("row", av.shape(), &[i]));
        }
        let out = Tensor::vector(av.row(i).to_vec());
        self.push(out, Op::Row(a, i), "row")
    }

    /// Element `i` of a vector as a scalar.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        let av = self.value(a);
        if av.rank() != 1 || i >= av.len() {
            return Err(Error::shape("pick", av.shape(), &[i]));
        }
        let out = Tensor::scalar(av.data()[i]);
        self.push(out, Op::Pick(a, i), "pick")
    }

    fn masked_reduce(&mut self, a: Var, mask: &[bool], mean: bool, name: &'static str) -> Result<Var> {
        let av = self.value(a);
        let rows = match av.rank() {
            1 | 2 => av.shape()[0],
            _ => return Err(Error::shape(name, av.shape(), &[mask.len()])),
        };
        if rows != mask.len() {
            return Err(Error::shape(name, av.shape(), &[mask.len()]));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::invalid(format!("{name}: every row is masked")));
        }
        let scale = if mean { 1.0 / count as f64 } else { 1.0 };
        let out = if av.rank() == 1 {
            let s: f64 = av.data().iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| x).sum();
            Tensor::scalar(s * scale)
        } else {
            let c = av.cols();
            let mut acc = vec![0.0; c];
            for (i, &m) in mask.iter().enumerate() {
                if m {
                    axpy(scale, av.row(i), &mut acc);
                }
            }
            Tensor::from_parts(vec![c], acc)
        };
        let op = Op::MaskedSum {
            input: a,
            mask: mask.to_vec(),
            scale,
        };
        self.push(out, op, name)
    }

    /// Sum over the leading axis, restricted to rows where `mask` is true.
    pub fn masked_sum(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        self.masked_reduce(a, mask, false, "masked_sum")
    }

    /// Mean over the leading axis, restricted to rows where `mask` is true.
    pub fn masked_mean(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        self.masked_reduce(a, mask, true, "masked_mean")
    }

    /// Sum of all elements.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), "sum")
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    /// Identity in eval mode.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if self.mode == Mode::Eval || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(a).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let av = self.value(a);
        let data = av.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        self.push(out, Op::Dropout { input: a, mask }, "dropout")
    }

    /// Adds `left` zero rows before and `right` after a `[len, dim]` matrix.
    pub fn pad_rows(&mut self, a: Var, left: usize, right: usize) -> Result<Var> {
        let av = self.value(a);
        if av.rank() != 2 {
            return Err(Error::shape("pad_rows", av.shape(), &[]));
        }
        if left == 0 && right == 0 {
            return Ok(a);
        }
        let (len, dim) = (av.shape()[0], av.shape()[1]);
        let mut data = vec![0.0; left * dim];
        data.extend_from_slice(av.data());
        data.resize((left + len + right) * dim, 0.0);
        let out = Tensor::from_parts(vec![left + len + right, dim], data);
        self.push(out, Op::PadRows { input: a, left }, "pad_rows")
    }

    /// Rows `start..start + len` of a `[rows, dim]` matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if av.rank() != 2 || len == 0 || start + len > av.rows() {
            return Err(Error::shape("slice_rows", av.shape(), &[start, len]));
        }
        let dim = av.cols();
        if start == 0 && len == av.rows() {
            return Ok(a);
        }
        let data = av.data()[start * dim..(start + len) * dim].to_vec();
        let out = Tensor::from_parts(vec![len, dim], data);
        self.push(out, Op::SliceRows { input: a, start }, "slice_rows")
    }

    /// Multiplies every element of `a` by the scalar node `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.len() != 1 {
            return Err(Error::shape("mul_scalar", self.value(a).shape(), sv.shape()));
        }
        let c = sv.data()[0];
        let out = self.map(a, |x| x * c);
        self.push(out, Op::MulScalar(a, s), "mul_scalar")
    }

    /// Reverse-mode pass from the scalar `loss`. Consumes the tape's
    /// recorded history; a second call fails.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if !self.recording {
            return Err(Error::NotRecording);
        }
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let loss_shape = self.value(loss).shape().to_vec();
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(loss_shape));
        }
        self.consumed = true;

        let mut out = Gradients::zeros_like(self.params);
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::filled(&loss_shape, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if let Op::Param(id) = self.nodes[idx].op {
                if self.params.get(id).trainable {
                    out.get_mut(id).add_assign(&g);
                }
                continue;
            }
            let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
            self.backprop_node(idx, &op, &g, &mut grads);
        }
        Ok(out)
    }

    fn backprop_node(
        &self,
        idx: usize,
        op: &Op,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) {
        let y = || self.nodes[idx].value.as_ref().expect("op node has value");
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (ad, bd, gd) = (av.data(), bv.data(), g.data());
                match (av.shape(), bv.shape()) {
                    (&[m, k], &[_, n]) => {
                        let mut ga = vec![0.0; m * k];
                        for i in 0..m {
                            let grow = &gd[i * n..(i + 1) * n];
                            for p in 0..k {
                                ga[i * k + p] = dot(grow, &bd[p * n..(p + 1) * n]);
                            }
                        }
                        let mut gb = vec![0.0; k * n];
                        for i in 0..m {
                            let grow = &gd[i * n..(i + 1) * n];
                            for p in 0..k {
                                let x = ad[i * k + p];
                                if x != 0.0 {
                                    axpy(x, grow, &mut gb[p * n..(p + 1) * n]);
                                }
                            }
                        }
                        accumulate(grads, *a, av.shape(), ga);
                        accumulate(grads, *b, bv.shape(), gb);
                    }
                    (&[m, k], &[_]) => {
                        let mut ga = vec![0.0; m * k];
                        let mut gb = vec![0.0; k];
                        for i in 0..m {
                            axpy(gd[i], bd, &mut ga[i * k..(i + 1) * k]);
                            axpy(gd[i], &ad[i * k..(i + 1) * k], &mut gb);
                        }
                        accumulate(grads, *a, av.shape(), ga);
                        accumulate(grads, *b, bv.shape(), gb);
                    }
                    (&[k], &[_, n]) => {
                        let ga = (0..k).map(|p| dot(&bd[p * n..(p + 1) * n], gd)).collect();
                        let mut gb = vec![0.0; k * n];
                        for p in 0..k {
                            axpy(ad[p], gd, &mut gb[p * n..(p + 1) * n]);
                        }
                        accumulate(grads, *a, av.shape(), ga);
                        accumulate(grads, *b, bv.shape(), gb);
                    }
                    _ => {
                        let s = gd[0];
                        accumulate(grads, *a, av.shape(), bd.iter().map(|x| x * s).collect());
                        accumulate(grads, *b, bv.shape(), ad.iter().map(|x| x * s).collect());
                    }
                }
            }
            Op::MatMulT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (c, d) = (bv.shape()[0], bv.shape()[1]);
                let (ad, bd, gd) = (av.data(), bv.data(), g.data());
                let n = av.len() / d;
                let mut ga = vec![0.0; n * d];
                let mut gb = vec![0.0; c * d];
                for i in 0..n {
                    let x = &ad[i * d..(i + 1) * d];
                    let gx = &mut ga[i * d..(i + 1) * d];
                    for j in 0..c {
                        let s = gd[i * c + j];
                        if s != 0.0 {
                            axpy(s, &bd[j * d..(j + 1) * d], gx);
                            axpy(s, x, &mut gb[j * d..(j + 1) * d]);
                        }
                    }
                }
                accumulate(grads, *a, av.shape(), ga);
                accumulate(grads, *b, bv.shape(), gb);
            }
            Op::SparseMatMulT(x, b) => {
                let bv = self.value(*b);
                let (c, d) = (bv.shape()[0], bv.shape()[1]);
                let gd = g.data();
                let mut gb = vec![0.0; c * d];
                for (i, row) in x.rows.iter().enumerate() {
                    for j in 0..c {
                        let s = gd[i * c + j];
                        for &(col, v) in row {
                            gb[j * d + col] += s * v;
                        }
                    }
                }
                accumulate(grads, *b, bv.shape(), gb);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.shape(), g.data().to_vec());
                accumulate(grads, *b, g.shape(), g.data().to_vec());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.shape(), g.data().to_vec());
                accumulate(grads, *b, g.shape(), g.data().iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = g.data().iter().zip(bv.data()).map(|(g, y)| g * y).collect();
                let gb = g.data().iter().zip(av.data()).map(|(g, x)| g * x).collect();
                accumulate(grads, *a, g.shape(), ga);
                accumulate(grads, *b, g.shape(), gb);
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = g.data().iter().zip(bv.data()).map(|(g, y)| g / y).collect();
                let gb = g
                    .data()
                    .iter()
                    .zip(av.data().iter().zip(bv.data()))
                    .map(|(g, (x, y))| -g * x / (y * y))
                    .collect();
                accumulate(grads, *a, g.shape(), ga);
                accumulate(grads, *b, g.shape(), gb);
            }
            Op::AddBias(a, b) => {
                let n = self.value(*b).len();
                let mut gb = vec![0.0; n];
                for row in g.data().chunks(n) {
                    axpy(1.0, row, &mut gb);
                }
                accumulate(grads, *a, g.shape(), g.data().to_vec());
                accumulate(grads, *b, &[n], gb);
            }
            Op::Scale(a, c) => {
                accumulate(grads, *a, g.shape(), g.data().iter().map(|x| x * c).collect());
            }
            Op::Tanh(a) => {
                let ga = g.data().iter().zip(y().data()).map(|(g, y)| g * (1.0 - y * y)).collect();
                accumulate(grads, *a, g.shape(), ga);
            }
            Op::Sigmoid(a) => {
                let ga = g.data().iter().zip(y().data()).map(|(g, y)| g * y * (1.0 - y)).collect();
                accumulate(grads, *a, g.shape(), ga);
            }
            Op::Relu(a) => {
                let xv = self.value(*a);
                let ga = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(grads, *a, g.shape(), ga);
            }
            Op::Exp(a) => {
                let ga = g.data().iter().zip(y().data()).map(|(g, y)| g * y).collect();
                accumulate(grads, *a, g.shape(), ga);
            }
            Op::Log(a) => {
                let xv = self.value(*a);
                let ga = g.data().iter().zip(xv.data()).map(|(g, x)| g / x).collect();
                accumulate(grads, *a, g.shape(), ga);
            }
            Op::Softmax(a) | Op::MaskedSoftmax(a) => {
                let yv = y();
                let c = yv.cols();
                let mut ga = Vec::with_capacity(yv.len());
                for (grow, yrow) in g.data().chunks(c).zip(yv.data().chunks(c)) {
                    let inner = dot(grow, yrow);
                    ga.extend(grow.iter().zip(yrow).map(|(g, y)| y * (g - inner)));
                }
                accumulate(grads, *a, g.shape(), ga);
            }
            Op::Conv1d { input, kernel, bias } => {
                let (xv, kv) = (self.value(*input), self.value(*kernel));
                let (ch, maps) = (xv.shape()[1], kv.shape()[2]);
                let span = kv.shape()[0] * ch;
                let steps = g.shape()[0];
                let (xd, kd, gd) = (xv.data(), kv.data(), g.data());
                let mut gx = vec![0.0; xv.len()];
                let mut gk = vec![0.0; kv.len()];
                let mut gbias = vec![0.0; maps];
                for t in 0..steps {
                    let grow = &gd[t * maps..(t + 1) * maps];
                    axpy(1.0, grow, &mut gbias);
                    let window = &xd[t * ch..t * ch + span];
                    let gwin = &mut gx[t * ch..t * ch + span];
                    for i in 0..span {
                        let krow = &kd[i * maps..(i + 1) * maps];
                        gwin[i] += dot(grow, krow);
                        let x = window[i];
                        if x != 0.0 {
                            axpy(x, grow, &mut gk[i * maps..(i + 1) * maps]);
                        }
                    }
                }
                accumulate(grads, *input, xv.shape(), gx);
                accumulate(grads, *kernel, kv.shape(), gk);
                accumulate(grads, *bias, &[maps], gbias);
            }
            Op::MaxOverTime { input, argmax } => {
                let xv = self.value(*input);
                let f = xv.shape()[1];
                let mut gx = vec![0.0; xv.len()];
                for (j, (&t, &gj)) in argmax.iter().zip(g.data()).enumerate() {
                    gx[t * f + j] += gj;
                }
                accumulate(grads, *input, xv.shape(), gx);
            }
            Op::Embedding { table, ids } => {
                let tv = self.value(*table);
                // Skip the full-table temporary when the table is frozen.
                if let Op::Param(id) = self.nodes[table.0].op {
                    if !self.params.get(id).trainable {
                        return;
                    }
                }
                // Rows are added in place so a large table is allocated once
                // per backward pass, not once per lookup.
                let k = tv.shape()[1];
                let slot = grads[table.0].get_or_insert_with(|| Tensor::zeros(tv.shape()));
                let gt = slot.data_mut();
                for (r, &id) in ids.iter().enumerate() {
                    if id != 0 {
                        axpy(1.0, &g.data()[r * k..(r + 1) * k], &mut gt[id * k..(id + 1) * k]);
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    accumulate(grads, p, &[n], g.data()[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            Op::Stack(rows) => {
                let n = g.cols();
                for (i, &r) in rows.iter().enumerate() {
                    accumulate(grads, r, &[n], g.data()[i * n..(i + 1) * n].to_vec());
                }
            }
            Op::Row(a, i) => {
                let av = self.value(*a);
                let n = av.cols();
                let mut ga = vec![0.0; av.len()];
                ga[i * n..(i + 1) * n].copy_from_slice(g.data());
                accumulate(grads, *a, av.shape(), ga);
            }
            Op::Pick(a, i) => {
                let av = self.value(*a);
                let mut ga = vec![0.0; av.len()];
                ga[*i] = g.item();
                accumulate(grads, *a, av.shape(), ga);
            }
            Op::MaskedSum { input, mask, scale } => {
                let av = self.value(*input);
                let n = if av.rank() == 1 { 1 } else { av.cols() };
                let mut ga = vec![0.0; av.len()];
                for (i, &m) in mask.iter().enumerate() {
                    if m {
                        for (dst, src) in ga[i * n..(i + 1) * n].iter_mut().zip(g.data()) {
                            *dst = src * scale;
                        }
                    }
                }
                accumulate(grads, *input, av.shape(), ga);
            }
            Op::Sum(a) => {
                let av = self.value(*a);
                accumulate(grads, *a, av.shape(), vec![g.item(); av.len()]);
            }
            Op::Dropout { input, mask } => {
                let ga = g.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                accumulate(grads, *input, g.shape(), ga);
            }
            Op::PadRows { input, left } => {
                let av = self.value(*input);
                let dim = av.cols();
                let ga = g.data()[left * dim..left * dim + av.len()].to_vec();
                accumulate(grads, *input, av.shape(), ga);
            }
            Op::SliceRows { input, start } => {
                let av = self.value(*input);
                let dim = av.cols();
                let mut ga = vec![0.0; av.len()];
                ga[start * dim..start * dim + g.len()].copy_from_slice(g.data());
                accumulate(grads, *input, av.shape(), ga);
            }
            Op::MulScalar(a, s) => {
                let (av, sv) = (self.value(*a), self.value(*s));
                let c = sv.data()[0];
                accumulate(grads, *a, g.shape(), g.data().iter().map(|x| x * c).collect());
                accumulate(grads, *s, sv.shape(), vec![dot(g.data(), av.data())]);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, shape: &[usize], data: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(&data) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(Tensor::from_parts(shape.to_vec(), data)),
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Logistic function, computed without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}
