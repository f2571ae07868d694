use super::{check_finite, numel, Bound, ParamSet, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf {
        param: Option<usize>,
    },
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    MatVec {
        a: usize,
        x: usize,
        m: usize,
        k: usize,
    },
    Affine {
        w: usize,
        x: usize,
        b: usize,
        m: usize,
        k: usize,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Abs(usize),
    Sum(usize),
    Norm(usize),
    Dot(usize, usize),
    Softmax(usize),
    Concat(Vec<usize>),
    StackColumns {
        inputs: Vec<usize>,
        rows: usize,
    },
    Column {
        a: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation so it can be differentiated in reverse.
///
/// Nodes are appended in evaluation order, so every input precedes the
/// operation that consumes it and the backward sweep is a single reverse
/// pass over the node list.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every recorded value.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` when `var` does not influence the root or does not require grad.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn add_into(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Copies the value of `v` out as a standalone tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.data.clone()).expect("tape values are validated")
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, what: &'static str) -> Result<Var> {
        check_finite(&data, what)?;
        let needs_grad = match &op {
            Op::Leaf { .. } => false,
            Op::MatMul { a, b, .. } => self.ng(*a) || self.ng(*b),
            Op::MatVec { a, x, .. } => self.ng(*a) || self.ng(*x),
            Op::Affine { w, x, b, .. } => self.ng(*w) || self.ng(*x) || self.ng(*b),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Dot(a, b) => self.ng(*a) || self.ng(*b),
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Abs(a)
            | Op::Sum(a)
            | Op::Norm(a)
            | Op::Softmax(a)
            | Op::Column { a, .. } => self.ng(*a),
            Op::Concat(ins) | Op::StackColumns { inputs: ins, .. } => ins.iter().any(|&i| self.ng(i)),
        };
        self.nodes.push(Node {
            shape,
            data,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn ng(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    /// Records a copy of `t` as a leaf; it is differentiated iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
            op: Op::Leaf { param: None },
            needs_grad: t.requires_grad(),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        if numel(&shape) != data.len() {
            return Err(shape_err("constant", &shape, &[data.len()]));
        }
        self.push(shape, data, Op::Leaf { param: None }, "constant")
    }

    pub fn vector(&mut self, data: &[f64]) -> Result<Var> {
        self.constant(vec![data.len()], data.to_vec())
    }

    /// Records every parameter of `params` as a differentiable leaf.
    pub fn bind(&mut self, params: &ParamSet) -> Bound {
        let vars = params
            .iter()
            .enumerate()
            .map(|(i, (_, t))| {
                self.nodes.push(Node {
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                    op: Op::Leaf { param: Some(i) },
                    needs_grad: t.requires_grad(),
                });
                Var(self.nodes.len() - 1)
            })
            .collect();
        Bound(vars)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (ad, bd) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = ad[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let row = &bd[p * n..(p + 1) * n];
                for (o, bv) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *o += av * bv;
                }
            }
        }
        self.push(
            vec![m, n],
            out,
            Op::MatMul {
                a: a.0,
                b: b.0,
                m,
                k,
                n,
            },
            "matmul",
        )
    }

    /// Matrix `[m, k]` times vector `[k]`.
    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var> {
        let (sa, sx) = (&self.nodes[a.0].shape, &self.nodes[x.0].shape);
        if sa.len() != 2 || sx.len() != 1 || sa[1] != sx[0] {
            return Err(shape_err("matvec", sa, sx));
        }
        let (m, k) = (sa[0], sa[1]);
        let out = gemv(&self.nodes[a.0].data, &self.nodes[x.0].data, m, k);
        self.push(vec![m], out, Op::MatVec { a: a.0, x: x.0, m, k }, "matvec")
    }

    /// `w · x + b` for `w: [m, k]`, `x: [k]`, `b: [m]`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let (sw, sx, sb) = (&self.nodes[w.0].shape, &self.nodes[x.0].shape, &self.nodes[b.0].shape);
        if sw.len() != 2 || sx.len() != 1 || sw[1] != sx[0] {
            return Err(shape_err("affine", sw, sx));
        }
        if sb.len() != 1 || sb[0] != sw[0] {
            return Err(shape_err("affine", sw, sb));
        }
        let (m, k) = (sw[0], sw[1]);
        let mut out = gemv(&self.nodes[w.0].data, &self.nodes[x.0].data, m, k);
        out.iter_mut().zip(&self.nodes[b.0].data).for_each(|(o, b)| *o += b);
        self.push(
            vec![m],
            out,
            Op::Affine {
                w: w.0,
                x: x.0,
                b: b.0,
                m,
                k,
            },
            "affine",
        )
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if na.shape != nb.shape {
            return Err(shape_err(name, &na.shape, &nb.shape));
        }
        let out = na.data.iter().zip(&nb.data).map(|(x, y)| f(*x, *y)).collect();
        self.push(na.shape.clone(), out, op, name)
    }

    fn unary(&mut self, a: Var, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let na = &self.nodes[a.0];
        let out = na.data.iter().map(|x| f(*x)).collect();
        self.push(na.shape.clone(), out, op, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a.0, b.0))
    }

    /// Componentwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, "scale", |x| c * x, Op::Scale(a.0, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "sigmoid", sigmoid, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "tanh", f64::tanh, Op::Tanh(a.0))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "abs", f64::abs, Op::Abs(a.0))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.nodes[a.0].data.iter().sum();
        self.push(Vec::new(), vec![s], Op::Sum(a.0), "sum")
    }

    /// Euclidean (Frobenius for matrices) norm. The gradient at 0 is taken to be 0.
    pub fn norm(&mut self, a: Var) -> Result<Var> {
        let s = self.nodes[a.0].data.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.push(Vec::new(), vec![s], Op::Norm(a.0), "norm")
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if na.data.len() != nb.data.len() || na.shape.len() > 1 || nb.shape.len() > 1 {
            return Err(shape_err("dot", &na.shape, &nb.shape));
        }
        let s = na.data.iter().zip(&nb.data).map(|(x, y)| x * y).sum();
        self.push(Vec::new(), vec![s], Op::Dot(a.0, b.0), "dot")
    }

    /// Softmax over a vector, shifted by the maximum for stability.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let na = &self.nodes[a.0];
        if na.shape.len() != 1 || na.data.is_empty() {
            return Err(shape_err("softmax", &na.shape, &[]));
        }
        let max = na.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = na.data.iter().map(|x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let out = exps.into_iter().map(|e| e / total).collect();
        self.push(na.shape.clone(), out, Op::Softmax(a.0), "softmax")
    }

    /// Flattens and joins the inputs into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(TensorError::Contract("concat of nothing".into()));
        }
        let out: Vec<f64> = parts
            .iter()
            .flat_map(|p| self.nodes[p.0].data.iter().copied())
            .collect();
        let n = out.len();
        self.push(vec![n], out, Op::Concat(parts.iter().map(|p| p.0).collect()), "concat")
    }

    /// Stacks equal-length vectors as the columns of a `[rows, k]` matrix.
    pub fn stack_columns(&mut self, cols: &[Var]) -> Result<Var> {
        let first = cols
            .first()
            .ok_or_else(|| TensorError::Contract("stack of nothing".into()))?;
        let rows = self.nodes[first.0].data.len();
        for c in cols {
            let s = &self.nodes[c.0].shape;
            if s.len() != 1 || s[0] != rows {
                return Err(shape_err("stack_columns", &[rows], s));
            }
        }
        let k = cols.len();
        let mut out = vec![0.0; rows * k];
        for (j, c) in cols.iter().enumerate() {
            for (r, v) in self.nodes[c.0].data.iter().enumerate() {
                out[r * k + j] = *v;
            }
        }
        self.push(
            vec![rows, k],
            out,
            Op::StackColumns {
                inputs: cols.iter().map(|c| c.0).collect(),
                rows,
            },
            "stack_columns",
        )
    }

    pub fn column(&mut self, a: Var, col: usize) -> Result<Var> {
        let s = &self.nodes[a.0].shape;
        if s.len() != 2 || col >= s[1] {
            return Err(shape_err("column", s, &[col]));
        }
        let (rows, cols) = (s[0], s[1]);
        let d = &self.nodes[a.0].data;
        let out = (0..rows).map(|r| d[r * cols + col]).collect();
        self.push(
            vec![rows],
            out,
            Op::Column {
                a: a.0,
                col,
                rows,
                cols,
            },
            "column",
        )
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rn = &self.nodes[root.0];
        if rn.data.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                rn.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.needs_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    /// Runs [`Tape::backward`] and adds the leaf gradients of every bound
    /// parameter into `params`. Parameters unreachable from the root still
    /// receive a zero gradient.
    pub fn backward_into(&self, root: Var, params: &mut ParamSet) -> Result<()> {
        let grads = self.backward(root)?;
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { param: Some(p) } = node.op {
                if !node.needs_grad {
                    continue;
                }
                let t = params.get_mut(super::ParamId(p));
                if t.len() != node.data.len() {
                    return Err(shape_err("backward_into", t.shape(), &node.shape));
                }
                match grads.grads.get(idx).and_then(|g| g.as_deref()) {
                    Some(g) => t.accumulate_grad(g),
                    None => t.accumulate_grad(&vec![0.0; node.data.len()]),
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let ng = |i: usize| self.nodes[i].needs_grad;
        match &node.op {
            Op::Leaf { .. } => {}
            &Op::MatMul { a, b, m, k, n } => {
                let (ad, bd) = (&self.nodes[a].data, &self.nodes[b].data);
                if ng(a) {
                    let ga = add_into(&mut grads[a], m * k);
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[i * n + j] * bd[p * n + j];
                            }
                            ga[i * k + p] += s;
                        }
                    }
                }
                if ng(b) {
                    let gb = add_into(&mut grads[b], k * n);
                    for i in 0..m {
                        for p in 0..k {
                            let av = ad[i * k + p];
                            for j in 0..n {
                                gb[p * n + j] += av * g[i * n + j];
                            }
                        }
                    }
                }
            }
            &Op::MatVec { a, x, m, k } => self.gemv_back(a, x, None, m, k, g, grads),
            &Op::Affine { w, x, b, m, k } => self.gemv_back(w, x, Some(b), m, k, g, grads),
            &Op::Add(a, b) => {
                for (i, sign) in [(a, 1.0), (b, 1.0)] {
                    if ng(i) {
                        let gi = add_into(&mut grads[i], g.len());
                        gi.iter_mut().zip(g).for_each(|(o, v)| *o += sign * v);
                    }
                }
            }
            &Op::Sub(a, b) => {
                for (i, sign) in [(a, 1.0), (b, -1.0)] {
                    if ng(i) {
                        let gi = add_into(&mut grads[i], g.len());
                        gi.iter_mut().zip(g).for_each(|(o, v)| *o += sign * v);
                    }
                }
            }
            &Op::Mul(a, b) => {
                let (ad, bd) = (&self.nodes[a].data, &self.nodes[b].data);
                if ng(a) {
                    let ga = add_into(&mut grads[a], g.len());
                    for ((o, v), y) in ga.iter_mut().zip(g).zip(bd) {
                        *o += v * y;
                    }
                }
                if ng(b) {
                    let gb = add_into(&mut grads[b], g.len());
                    for ((o, v), x) in gb.iter_mut().zip(g).zip(ad) {
                        *o += v * x;
                    }
                }
            }
            &Op::Scale(a, c) => {
                let ga = add_into(&mut grads[a], g.len());
                ga.iter_mut().zip(g).for_each(|(o, v)| *o += c * v);
            }
            &Op::Sigmoid(a) => {
                let ga = add_into(&mut grads[a], g.len());
                for ((o, v), y) in ga.iter_mut().zip(g).zip(&node.data) {
                    *o += v * y * (1.0 - y);
                }
            }
            &Op::Tanh(a) => {
                let ga = add_into(&mut grads[a], g.len());
                for ((o, v), y) in ga.iter_mut().zip(g).zip(&node.data) {
                    *o += v * (1.0 - y * y);
                }
            }
            &Op::Abs(a) => {
                let ad = &self.nodes[a].data;
                let ga = add_into(&mut grads[a], g.len());
                for ((o, v), x) in ga.iter_mut().zip(g).zip(ad) {
                    let s = if *x > 0.0 {
                        1.0
                    } else if *x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    *o += v * s;
                }
            }
            &Op::Sum(a) => {
                let n = self.nodes[a].data.len();
                let ga = add_into(&mut grads[a], n);
                ga.iter_mut().for_each(|o| *o += g[0]);
            }
            &Op::Norm(a) => {
                let y = node.data[0];
                if y > 0.0 {
                    let ad = &self.nodes[a].data;
                    let ga = add_into(&mut grads[a], ad.len());
                    for (o, x) in ga.iter_mut().zip(ad) {
                        *o += g[0] * x / y;
                    }
                }
            }
            &Op::Dot(a, b) => {
                let (ad, bd) = (&self.nodes[a].data, &self.nodes[b].data);
                if ng(a) {
                    let ga = add_into(&mut grads[a], ad.len());
                    ga.iter_mut().zip(bd).for_each(|(o, y)| *o += g[0] * y);
                }
                if ng(b) {
                    let gb = add_into(&mut grads[b], bd.len());
                    gb.iter_mut().zip(ad).for_each(|(o, x)| *o += g[0] * x);
                }
            }
            &Op::Softmax(a) => {
                let y = &node.data;
                let inner: f64 = g.iter().zip(y).map(|(v, p)| v * p).sum();
                let ga = add_into(&mut grads[a], y.len());
                for ((o, v), p) in ga.iter_mut().zip(g).zip(y) {
                    *o += p * (v - inner);
                }
            }
            Op::Concat(inputs) => {
                let mut off = 0;
                for &i in inputs {
                    let n = self.nodes[i].data.len();
                    if ng(i) {
                        let gi = add_into(&mut grads[i], n);
                        gi.iter_mut().zip(&g[off..off + n]).for_each(|(o, v)| *o += v);
                    }
                    off += n;
                }
            }
            Op::StackColumns { inputs, rows } => {
                let k = inputs.len();
                for (j, &i) in inputs.iter().enumerate() {
                    if ng(i) {
                        let gi = add_into(&mut grads[i], *rows);
                        for (r, o) in gi.iter_mut().enumerate() {
                            *o += g[r * k + j];
                        }
                    }
                }
            }
            &Op::Column { a, col, rows, cols } => {
                let ga = add_into(&mut grads[a], rows * cols);
                for (r, v) in g.iter().enumerate() {
                    ga[r * cols + col] += v;
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn gemv_back(
        &self,
        a: usize,
        x: usize,
        b: Option<usize>,
        m: usize,
        k: usize,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (ad, xd) = (&self.nodes[a].data, &self.nodes[x].data);
        if self.nodes[a].needs_grad {
            let ga = add_into(&mut grads[a], m * k);
            for i in 0..m {
                let gi = g[i];
                for (o, xv) in ga[i * k..(i + 1) * k].iter_mut().zip(xd) {
                    *o += gi * xv;
                }
            }
        }
        if self.nodes[x].needs_grad {
            let gx = add_into(&mut grads[x], k);
            for i in 0..m {
                let gi = g[i];
                for (o, av) in gx.iter_mut().zip(&ad[i * k..(i + 1) * k]) {
                    *o += gi * av;
                }
            }
        }
        if let Some(b) = b {
            if self.nodes[b].needs_grad {
                let gb = add_into(&mut grads[b], m);
                gb.iter_mut().zip(g).for_each(|(o, v)| *o += v);
            }
        }
    }
}

fn gemv(a: &[f64], x: &[f64], m: usize, k: usize) -> Vec<f64> {
    (0..m)
        .map(|i| a[i * k..(i + 1) * k].iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
