//! Minimal reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Tape`] records every primitive in the order it is evaluated, so parents
//! always precede children and [`Tape::backward`] is a single reverse sweep.
//! Parameters are borrowed from a slice of [`Array`]s and are never copied onto
//! the tape; their gradients are accumulated into a [`Gradients`] map indexed by
//! [`ParamId`].
//!
//! Supported shapes are narrow: rank 0 (scalars), rank 1 (vectors)
//! and rank 2 (row-major matrices).

use crate::error::{Error, Result};

/// Dense row-major array of 64-bit reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape {
                op: "array",
                detail: format!("shape {:?} needs {} values, got {}", shape, expected, data.len()),
            });
        }
        Ok(Array { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Array {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Array {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Array {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Array::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Value of a single-element array.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Index of a parameter array in the slice a [`Tape`] borrows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Primitive tags.
#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    Log(NodeId),
    Neg(NodeId),
    Sum(NodeId),
    Affine { x: NodeId, scale: f64 },
    Concat(Vec<NodeId>),
    Stack(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    Gather { table: NodeId, row: usize },
    ScatterAdd { x: NodeId, index: Vec<usize> },
    Pick { x: NodeId, index: usize },
}

#[derive(Debug)]
struct Node {
    op: Op,
    /// `None` for parameter leaves, whose value lives in the borrowed slice.
    value: Option<Array>,
}

/// Recorded forward pass. Nodes are stored in evaluation order.
pub struct Tape<'p> {
    params: &'p [Array],
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Array]) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => &self.params[p.0],
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, op: Op, value: Option<Array>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Array) -> NodeId {
        self.push(Op::Constant, Some(value))
    }

    /// Leaf for a parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        let n = self.push(Op::Param(id), None);
        self.param_nodes[id.0] = Some(n);
        n
    }

    /// Matrix product. Accepts `[m,k]·[k,n]`, `[k]·[k,n]` and `[m,k]·[k]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        let out = match (av.shape(), bv.shape()) {
            (&[m, k], &[k2, n]) if k == k2 => {
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    let row = &mut out[i * n..(i + 1) * n];
                    for p in 0..k {
                        let x = av.data[i * k + p];
                        if x == 0.0 {
                            continue;
                        }
                        let brow = &bv.data[p * n..(p + 1) * n];
                        for (o, &w) in row.iter_mut().zip(brow) {
                            *o += x * w;
                        }
                    }
                }
                Array::new(vec![m, n], out)?
            }
            (&[k], &[k2, n]) if k == k2 => {
                let mut out = vec![0.0; n];
                for p in 0..k {
                    let x = av.data[p];
                    if x == 0.0 {
                        continue;
                    }
                    let brow = &bv.data[p * n..(p + 1) * n];
                    for (o, &w) in out.iter_mut().zip(brow) {
                        *o += x * w;
                    }
                }
                Array::vector(out)
            }
            (&[m, k], &[k2]) if k == k2 => {
                let out = (0..m)
                    .map(|i| {
                        av.data[i * k..(i + 1) * k]
                            .iter()
                            .zip(&bv.data)
                            .map(|(x, y)| x * y)
                            .sum()
                    })
                    .collect();
                Array::vector(out)
            }
            (sa, sb) => {
                return Err(shape_err(
                    "matmul",
                    format!("incompatible shapes {:?} and {:?}", sa, sb),
                ))
            }
        };
        Ok(self.push(Op::Matmul(a, b), Some(out)))
    }

    /// Elementwise sum. `b` may also be a single element, or a vector matching
    /// the last axis of a matrix `a` (row broadcast).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        let out = if av.shape == bv.shape {
            av.data.iter().zip(&bv.data).map(|(x, y)| x + y).collect()
        } else if bv.len() == 1 {
            let y = bv.data[0];
            av.data.iter().map(|x| x + y).collect()
        } else if av.rank() == 2 && bv.rank() == 1 && bv.len() == av.last_dim() {
            let n = bv.len();
            av.data.iter().enumerate().map(|(i, x)| x + bv.data[i % n]).collect()
        } else {
            return Err(shape_err(
                "add",
                format!("cannot broadcast {:?} onto {:?}", bv.shape, av.shape),
            ));
        };
        let shape = av.shape.clone();
        Ok(self.push(Op::Add(a, b), Some(Array { shape, data: out })))
    }

    /// Elementwise product; either operand may be a single element.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        let (shape, out) = if av.shape == bv.shape {
            (
                av.shape.clone(),
                av.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect(),
            )
        } else if bv.len() == 1 {
            let y = bv.data[0];
            (av.shape.clone(), av.data.iter().map(|x| x * y).collect())
        } else if av.len() == 1 {
            let x = av.data[0];
            (bv.shape.clone(), bv.data.iter().map(|y| x * y).collect())
        } else {
            return Err(shape_err(
                "mul",
                format!("incompatible shapes {:?} and {:?}", av.shape, bv.shape),
            ));
        };
        Ok(self.push(Op::Mul(a, b), Some(Array { shape, data: out })))
    }

    fn unary(&mut self, x: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let xv = self.value(x);
        let out = Array {
            shape: xv.shape.clone(),
            data: xv.data.iter().map(|&v| f(v)).collect(),
        };
        self.push(op, Some(out))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Log(x), f64::ln)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Neg(x), |v| -v)
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        self.unary(x, Op::Affine { x, scale }, |v| scale * v + shift)
    }

    pub fn scale(&mut self, x: NodeId, scale: f64) -> NodeId {
        self.affine(x, scale, 0.0)
    }

    /// Softmax over the last axis, max-subtracted.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let n = xv.last_dim().max(1);
        let mut data = xv.data.clone();
        for row in data.chunks_mut(n) {
            softmax_in_place(row);
        }
        let out = Array {
            shape: xv.shape.clone(),
            data,
        };
        self.push(Op::Softmax(x), Some(out))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total = self.value(x).data.iter().sum();
        self.push(Op::Sum(x), Some(Array::scalar(total)))
    }

    /// Concatenation of vectors.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.rank() != 1 {
                return Err(shape_err(
                    "concat",
                    format!("expected vectors, got shape {:?}", v.shape),
                ));
            }
            data.extend_from_slice(&v.data);
        }
        Ok(self.push(Op::Concat(parts.to_vec()), Some(Array::vector(data))))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        if rows.is_empty() {
            return Err(shape_err("stack", "no rows".into()));
        }
        let width = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(width * rows.len());
        for &r in rows {
            let v = self.value(r);
            if v.rank() != 1 || v.len() != width {
                return Err(shape_err(
                    "stack",
                    format!("row shape {:?} differs from [{}]", v.shape, width),
                ));
            }
            data.extend_from_slice(&v.data);
        }
        let out = Array::new(vec![rows.len(), width], data)?;
        Ok(self.push(Op::Stack(rows.to_vec()), Some(out)))
    }

    /// Contiguous sub-vector `x[start..start + len]`.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.value(x);
        if v.rank() != 1 || start + len > v.len() {
            return Err(shape_err(
                "slice",
                format!("[{}..{}] out of shape {:?}", start, start + len, v.shape),
            ));
        }
        let out = Array::vector(v.data[start..start + len].to_vec());
        Ok(self.push(Op::Slice { x, start }, Some(out)))
    }

    /// Row lookup in a matrix (embedding lookup).
    pub fn gather(&mut self, table: NodeId, row: usize) -> Result<NodeId> {
        let v = self.value(table);
        if v.rank() != 2 || row >= v.shape[0] {
            return Err(shape_err("gather", format!("row {} out of shape {:?}", row, v.shape)));
        }
        let n = v.shape[1];
        let out = Array::vector(v.data[row * n..(row + 1) * n].to_vec());
        Ok(self.push(Op::Gather { table, row }, Some(out)))
    }

    /// `out[index[i]] += x[i]` into a zero vector of length `len`.
    pub fn scatter_add(&mut self, x: NodeId, index: &[usize], len: usize) -> Result<NodeId> {
        let v = self.value(x);
        if v.rank() != 1 || v.len() != index.len() {
            return Err(shape_err(
                "scatter_add",
                format!("{} indices for shape {:?}", index.len(), v.shape),
            ));
        }
        let mut out = vec![0.0; len];
        for (&i, &val) in index.iter().zip(&v.data) {
            if i >= len {
                return Err(shape_err("scatter_add", format!("index {} out of length {}", i, len)));
            }
            out[i] += val;
        }
        Ok(self.push(
            Op::ScatterAdd {
                x,
                index: index.to_vec(),
            },
            Some(Array::vector(out)),
        ))
    }

    /// Single entry of a vector, as a scalar.
    pub fn pick(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let v = self.value(x);
        if v.rank() != 1 || index >= v.len() {
            return Err(shape_err("pick", format!("index {} out of shape {:?}", index, v.shape)));
        }
        let out = Array::scalar(v.data[index]);
        Ok(self.push(Op::Pick { x, index }, Some(out)))
    }

    /// Reverse sweep from a scalar root. Every parameter in the borrowed slice
    /// receives an entry; parameters not reached stay zero.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let root_val = self.value(root);
        if root_val.len() != 1 {
            return Err(Error::contract(format!(
                "backward root must be scalar, got shape {:?}",
                root_val.shape
            )));
        }
        let mut grads: Vec<Option<Array>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Array {
            shape: root_val.shape.clone(),
            data: vec![1.0],
        });
        let mut out = Gradients::zeros_like(self.params);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => {
                    for (o, d) in out.entries[p.0].data.iter_mut().zip(&g.data) {
                        *o += d;
                    }
                }
                Op::Matmul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (da, db) = matmul_backward(av, bv, &g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    let bv = self.value(*b);
                    let db = if bv.len() == g.len() {
                        g.data.clone()
                    } else {
                        let n = bv.len();
                        let mut db = vec![0.0; n];
                        for (i, d) in g.data.iter().enumerate() {
                            db[i % n] += d;
                        }
                        db
                    };
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *a, g.data);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (da, db) = if av.len() == bv.len() {
                        (
                            g.data.iter().zip(&bv.data).map(|(d, y)| d * y).collect(),
                            g.data.iter().zip(&av.data).map(|(d, x)| d * x).collect(),
                        )
                    } else if bv.len() == 1 {
                        let y = bv.data[0];
                        (
                            g.data.iter().map(|d| d * y).collect(),
                            vec![g.data.iter().zip(&av.data).map(|(d, x)| d * x).sum()],
                        )
                    } else {
                        let x = av.data[0];
                        (
                            vec![g.data.iter().zip(&bv.data).map(|(d, y)| d * y).sum()],
                            g.data.iter().map(|d| d * x).collect(),
                        )
                    };
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Tanh(x) => {
                    let y = node.value.as_ref().expect("tanh value");
                    let dx = g.data.iter().zip(&y.data).map(|(d, y)| d * (1.0 - y * y)).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let y = node.value.as_ref().expect("sigmoid value");
                    let dx = g.data.iter().zip(&y.data).map(|(d, y)| d * y * (1.0 - y)).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Softmax(x) => {
                    let y = node.value.as_ref().expect("softmax value");
                    let n = y.last_dim().max(1);
                    let mut dx = vec![0.0; y.len()];
                    for ((dxr, yr), gr) in dx.chunks_mut(n).zip(y.data.chunks(n)).zip(g.data.chunks(n)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((o, &yy), &gg) in dxr.iter_mut().zip(yr).zip(gr) {
                            *o = yy * (gg - dot);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Log(x) => {
                    let xv = self.value(*x);
                    let dx = g.data.iter().zip(&xv.data).map(|(d, v)| d / v).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Neg(x) => {
                    let dx = g.data.iter().map(|d| -d).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Affine { x, scale } => {
                    let dx = g.data.iter().map(|d| d * scale).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    accumulate(&mut grads, *x, vec![g.data[0]; n]);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        accumulate(&mut grads, p, g.data[offset..offset + n].to_vec());
                        offset += n;
                    }
                }
                Op::Stack(rows) => {
                    let n = self.value(rows[0]).len();
                    for (i, &r) in rows.iter().enumerate() {
                        accumulate(&mut grads, r, g.data[i * n..(i + 1) * n].to_vec());
                    }
                }
                Op::Slice { x, start } => {
                    let xv = self.value(*x);
                    let mut dx = vec![0.0; xv.len()];
                    dx[*start..*start + g.len()].copy_from_slice(&g.data);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Gather { table, row } => {
                    let tv = self.value(*table);
                    let n = tv.shape[1];
                    let slot = slot_for(&mut grads, *table, tv);
                    for (o, d) in slot.data[row * n..(row + 1) * n].iter_mut().zip(&g.data) {
                        *o += d;
                    }
                }
                Op::ScatterAdd { x, index } => {
                    let dx = index.iter().map(|&i| g.data[i]).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Pick { x, index } => {
                    let xv = self.value(*x);
                    let slot = slot_for(&mut grads, *x, xv);
                    slot.data[*index] += g.data[0];
                }
            }
        }
        Ok(out)
    }
}

fn slot_for<'a>(grads: &'a mut [Option<Array>], id: NodeId, like: &Array) -> &'a mut Array {
    grads[id.0].get_or_insert_with(|| Array::zeros(&like.shape))
}

fn accumulate(grads: &mut [Option<Array>], id: NodeId, delta: Vec<f64>) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (o, d) in existing.data.iter_mut().zip(&delta) {
                *o += d;
            }
        }
        slot @ None => {
            *slot = Some(Array {
                shape: Vec::new(),
                data: delta,
            })
        }
    }
}

fn matmul_backward(a: &Array, b: &Array, g: &Array) -> (Vec<f64>, Vec<f64>) {
    match (a.shape(), b.shape()) {
        (&[m, k], &[_, n]) => {
            let mut da = vec![0.0; m * k];
            let mut db = vec![0.0; k * n];
            for i in 0..m {
                let grow = &g.data[i * n..(i + 1) * n];
                for p in 0..k {
                    let brow = &b.data[p * n..(p + 1) * n];
                    da[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                    let x = a.data[i * k + p];
                    for (o, &d) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                        *o += x * d;
                    }
                }
            }
            (da, db)
        }
        (&[k], &[_, n]) => {
            let mut da = vec![0.0; k];
            let mut db = vec![0.0; k * n];
            for p in 0..k {
                let brow = &b.data[p * n..(p + 1) * n];
                da[p] = g.data.iter().zip(brow).map(|(x, y)| x * y).sum();
                let x = a.data[p];
                for (o, &d) in db[p * n..(p + 1) * n].iter_mut().zip(&g.data) {
                    *o += x * d;
                }
            }
            (da, db)
        }
        (&[m, k], &[_]) => {
            let mut da = vec![0.0; m * k];
            let mut db = vec![0.0; k];
            for i in 0..m {
                let d = g.data[i];
                for p in 0..k {
                    da[i * k + p] = d * b.data[p];
                    db[p] += d * a.data[i * k + p];
                }
            }
            (da, db)
        }
        _ => unreachable!("matmul shapes validated on forward"),
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Gradient for every parameter of a slice, in the slice's order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    entries: Vec<Array>,
}

impl Gradients {
    pub fn zeros_like(params: &[Array]) -> Self {
        Gradients {
            entries: params.iter().map(|p| Array::zeros(p.shape())).collect(),
        }
    }

    pub fn from_arrays(entries: Vec<Array>) -> Self {
        Gradients { entries }
    }

    pub fn get(&self, id: ParamId) -> &Array {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[Array] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|a| a.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|a| a.data.iter().all(|&v| v == 0.0))
    }

    /// `self += weight * other`.
    pub fn add_scaled(&mut self, other: &Gradients, weight: f64) {
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += weight * y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.entries {
            for x in a.data.iter_mut() {
                *x *= factor;
            }
        }
    }
}

/// Rescales all gradients when their global L2 norm exceeds `max_norm`.
pub fn clip_gradients(mut grads: Gradients, max_norm: f64) -> Result<Gradients> {
    if max_norm.is_nan() || max_norm <= 0.0 {
        return Err(Error::config(format!("max_norm must be positive, got {max_norm}")));
    }
    if let Some(bad) = grads.entries.iter().find(|a| !a.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient entry in array of shape {:?}",
            bad.shape
        )));
    }
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    Ok(grads)
}
