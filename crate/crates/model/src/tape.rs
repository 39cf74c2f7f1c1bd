//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Graph`] records every operation of one forward pass; [`Graph::backward`]
//! walks the record in reverse and accumulates parameter gradients into a
//! [`Grads`] buffer aligned with the [`ParamStore`].

use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};

pub type Mat = Array2<f64>;

const LOG_FLOOR: f64 = 1e-300;
const LN_EPS: f64 = 1e-5;

/// Named trainable tensors, addressed by dense ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Mat)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Mat> {
        self.values.iter_mut()
    }

    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(Mat::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|m| m.iter().all(|x| x.is_finite()))
    }
}

/// Gradient buffer with one zero-initialized matrix per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Mat>);

impl Grads {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self(params.values.iter().map(|m| Mat::zeros(m.raw_dim())).collect())
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.0[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.0 {
            *a *= s;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|m| m.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Const,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    /// `a + row`, the `1 × c` row broadcast over every row of `a`.
    AddRow(Var, Var),
    Mul(Var, Var),
    /// `a * col`, the `r × 1` column broadcast over every column of `a`.
    MulCol(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Gelu(Var),
    Sigmoid(Var),
    Log(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    /// `out[i][j] = a[i][idx[i * n + j]]`
    BinGather(Var, Vec<u8>),
    /// `out[r][map[c]] += a[r][c]` into `width` columns.
    ScatterCols(Var, Vec<usize>),
    SumAll(Var),
}

struct Node {
    op: Op,
    value: Option<Mat>,
    needs_grad: bool,
}

/// One forward pass.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let inner = C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax of a plain matrix.
pub fn softmax_rows(a: &Mat) -> Mat {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn value(&self, v: Var) -> &Mat {
        match &self.nodes[v.0].op {
            Op::Param(id) => self.params.get(*id),
            _ => self.nodes[v.0].value.as_ref().expect("non-parameter nodes hold values"),
        }
    }

    fn push(&mut self, op: Op, value: Mat, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node {
            op,
            value: Some(value),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.nodes.push(Node {
            op: Op::Const,
            value: Some(value),
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// The graph node for a parameter; repeated calls share one node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(Op::MatMul(a, b), v, &[a, b])
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(Op::MatMulT(a, b), v, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), v, &[a, b])
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(Op::AddRow(a, row), v, &[a, row])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), v, &[a, b])
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let v = self.value(a) * self.value(col);
        self.push(Op::MulCol(a, col), v, &[a, col])
    }

    /// `scale * a + shift`
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(a).mapv(|x| scale * x + shift);
        self.push(Op::Scale(a, scale), v, &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(Op::Tanh(a), v, &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(Op::Gelu(a), v, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(Op::Sigmoid(a), v, &[a])
    }

    /// Natural log with the input floored at a tiny positive value.
    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(LOG_FLOOR).ln());
        self.push(Op::Log(a), v, &[a])
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(Op::Softmax(a), v, &[a])
    }

    /// Per-row normalization with learned `1 × c` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let c = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / c;
            row.mapv_inplace(|z| z - mean);
            let var = row.iter().map(|z| z * z).sum::<f64>() / c;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row *= is;
            inv_std.push(is);
        }
        let out = &xhat * self.value(gain) + self.value(bias);
        self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            out,
            &[x, gain, bias],
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(Op::ConcatCols(parts.to_vec()), v, parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        self.push(Op::ConcatRows(parts.to_vec()), v, parts)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(Op::SliceCols(a, start, len), v, &[a])
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let src = self.value(a);
        let mut v = Mat::zeros((idx.len(), src.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            v.row_mut(r).assign(&src.row(i));
        }
        self.push(Op::GatherRows(a, idx.to_vec()), v, &[a])
    }

    /// Rows of a parameter table, e.g. an embedding lookup.
    pub fn embed(&mut self, table: ParamId, ids: &[usize]) -> Var {
        let t = self.param(table);
        self.gather_rows(t, ids)
    }

    /// For an `n × k` matrix of per-bin scores, picks entry `(i, idx[i n + j])`
    /// for every pair.
    pub fn bin_gather(&mut self, a: Var, idx: &[u8]) -> Var {
        let src = self.value(a);
        let n = src.nrows();
        assert_eq!(idx.len(), n * n, "bin index must be n × n");
        let v = Mat::from_shape_fn((n, n), |(i, j)| src[[i, idx[i * n + j] as usize]]);
        self.push(Op::BinGather(a, idx.to_vec()), v, &[a])
    }

    pub fn scatter_cols(&mut self, a: Var, map: &[usize], width: usize) -> Var {
        let src = self.value(a);
        let mut v = Mat::zeros((src.nrows(), width));
        for (c, &m) in map.iter().enumerate() {
            let mut dst = v.column_mut(m);
            dst += &src.column(c);
        }
        self.push(Op::ScatterCols(a, map.to_vec()), v, &[a])
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a).sum());
        self.push(Op::SumAll(a), v, &[a])
    }

    /// Accumulates `d loss / d param` for every parameter reached from `loss`,
    /// which must be `1 × 1`.
    pub fn backward(&self, loss: Var, grads: &mut Grads) {
        assert_eq!(self.value(loss).dim(), (1, 1), "loss must be a scalar");
        let mut g: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        g[loss.0] = Some(Mat::ones((1, 1)));

        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(go) = g[idx].take() else { continue };
            let out = node.value.as_ref();
            let mut acc = Acc {
                graph: self,
                g: &mut g,
                grads: &mut *grads,
            };
            match &node.op {
                Op::Const => {}
                Op::Param(id) => grads.0[id.0] += &go,
                Op::MatMul(a, b) => {
                    if acc.wants(*a) {
                        acc.add(*a, go.dot(&self.value(*b).t()));
                    }
                    if acc.wants(*b) {
                        acc.add(*b, self.value(*a).t().dot(&go));
                    }
                }
                Op::MatMulT(a, b) => {
                    if acc.wants(*a) {
                        acc.add(*a, go.dot(self.value(*b)));
                    }
                    if acc.wants(*b) {
                        acc.add(*b, go.t().dot(self.value(*a)));
                    }
                }
                Op::Add(a, b) => {
                    acc.add_ref(*a, &go);
                    acc.add_ref(*b, &go);
                }
                Op::AddRow(a, row) => {
                    acc.add_ref(*a, &go);
                    if acc.wants(*row) {
                        acc.add(*row, go.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                }
                Op::Mul(a, b) => {
                    if acc.wants(*a) {
                        acc.add(*a, &go * self.value(*b));
                    }
                    if acc.wants(*b) {
                        acc.add(*b, &go * self.value(*a));
                    }
                }
                Op::MulCol(a, col) => {
                    if acc.wants(*a) {
                        acc.add(*a, &go * self.value(*col));
                    }
                    if acc.wants(*col) {
                        let prod = &go * self.value(*a);
                        acc.add(*col, prod.sum_axis(Axis(1)).insert_axis(Axis(1)));
                    }
                }
                Op::Scale(a, scale) => acc.add(*a, go * *scale),
                Op::Tanh(a) => {
                    let y = out.unwrap();
                    acc.add(*a, Zip::from(&go).and(y).map_collect(|&d, &y| d * (1.0 - y * y)));
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    acc.add(*a, Zip::from(&go).and(x).map_collect(|&d, &x| d * gelu_grad(x)));
                }
                Op::Sigmoid(a) => {
                    let y = out.unwrap();
                    acc.add(*a, Zip::from(&go).and(y).map_collect(|&d, &y| d * y * (1.0 - y)));
                }
                Op::Log(a) => {
                    let x = self.value(*a);
                    acc.add(
                        *a,
                        Zip::from(&go)
                            .and(x)
                            .map_collect(|&d, &x| if x > LOG_FLOOR { d / x } else { 0.0 }),
                    );
                }
                Op::Softmax(a) => {
                    let y = out.unwrap();
                    let mut ga = &go * y;
                    for (mut row, yrow) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot = row.sum();
                        Zip::from(&mut row).and(&yrow).for_each(|r, &yv| *r -= yv * dot);
                    }
                    acc.add(*a, ga);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    if acc.wants(*bias) {
                        acc.add(*bias, go.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if acc.wants(*gain) {
                        acc.add(*gain, (&go * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if acc.wants(*x) {
                        let dxhat = &go * self.value(*gain);
                        let c = xhat.ncols() as f64;
                        let mut dx = Mat::zeros(xhat.raw_dim());
                        for r in 0..xhat.nrows() {
                            let dh = dxhat.row(r);
                            let h = xhat.row(r);
                            let mean_dh = dh.sum() / c;
                            let mean_dh_h = dh.dot(&h) / c;
                            let is = inv_std[r];
                            Zip::from(dx.row_mut(r))
                                .and(&dh)
                                .and(&h)
                                .for_each(|o, &d, &hv| *o = is * (d - mean_dh - hv * mean_dh_h));
                        }
                        acc.add(*x, dx);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        if acc.wants(p) {
                            acc.add(p, go.slice(s![.., start..start + w]).to_owned());
                        }
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.value(p).nrows();
                        if acc.wants(p) {
                            acc.add(p, go.slice(s![start..start + h, ..]).to_owned());
                        }
                        start += h;
                    }
                }
                Op::SliceCols(a, start, len) => {
                    if acc.wants(*a) {
                        let src = self.value(*a);
                        let mut ga = Mat::zeros(src.raw_dim());
                        ga.slice_mut(s![.., *start..*start + *len]).assign(&go);
                        acc.add(*a, ga);
                    }
                }
                Op::GatherRows(a, ids) => {
                    if acc.wants(*a) {
                        acc.scatter_rows(*a, ids, &go);
                    }
                }
                Op::BinGather(a, idx) => {
                    if acc.wants(*a) {
                        let src = self.value(*a);
                        let n = src.nrows();
                        let mut ga = Mat::zeros(src.raw_dim());
                        for i in 0..n {
                            for j in 0..n {
                                ga[[i, idx[i * n + j] as usize]] += go[[i, j]];
                            }
                        }
                        acc.add(*a, ga);
                    }
                }
                Op::ScatterCols(a, map) => {
                    if acc.wants(*a) {
                        let mut ga = Mat::zeros((go.nrows(), map.len()));
                        for (c, &m) in map.iter().enumerate() {
                            ga.column_mut(c).assign(&go.column(m));
                        }
                        acc.add(*a, ga);
                    }
                }
                Op::SumAll(a) => {
                    let shape = self.value(*a).raw_dim();
                    acc.add(*a, Mat::from_elem(shape, go[[0, 0]]));
                }
            }
        }
    }
}

/// Gradient accumulation helper: parameter gradients go straight into the
/// [`Grads`] buffer, everything else into the per-node slots.
struct Acc<'a, 'p> {
    graph: &'a Graph<'p>,
    g: &'a mut Vec<Option<Mat>>,
    grads: &'a mut Grads,
}

impl Acc<'_, '_> {
    fn wants(&self, v: Var) -> bool {
        self.graph.nodes[v.0].needs_grad
    }

    fn add(&mut self, v: Var, delta: Mat) {
        if !self.wants(v) {
            return;
        }
        if let Op::Param(id) = self.graph.nodes[v.0].op {
            self.grads.0[id.0] += &delta;
            return;
        }
        match &mut self.g[v.0] {
            Some(existing) => *existing += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    fn add_ref(&mut self, v: Var, delta: &Mat) {
        if self.wants(v) {
            self.add(v, delta.clone());
        }
    }

    fn scatter_rows(&mut self, v: Var, ids: &[usize], delta: &Mat) {
        let target = if let Op::Param(id) = self.graph.nodes[v.0].op {
            &mut self.grads.0[id.0]
        } else {
            let shape = self.graph.value(v).raw_dim();
            self.g[v.0].get_or_insert_with(|| Mat::zeros(shape))
        };
        for (r, &i) in ids.iter().enumerate() {
            let mut dst = target.row_mut(i);
            dst += &delta.row(r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central differences of `f` around every entry of parameter `id`.
    fn numeric(params: &mut ParamStore, id: ParamId, f: &dyn Fn(&ParamStore) -> f64) -> Mat {
        let h = 1e-6;
        let shape = params.get(id).raw_dim();
        let mut out = Mat::zeros(shape);
        for idx in 0..out.len() {
            let (r, c) = (idx / out.ncols(), idx % out.ncols());
            let orig = params.get(id)[[r, c]];
            params.get_mut(id)[[r, c]] = orig + h;
            let up = f(params);
            params.get_mut(id)[[r, c]] = orig - h;
            let down = f(params);
            params.get_mut(id)[[r, c]] = orig;
            out[[r, c]] = (up - down) / (2.0 * h);
        }
        out
    }

    fn check(params: &mut ParamStore, f: &dyn Fn(&ParamStore) -> (f64, Grads)) {
        let (_, grads) = f(params);
        let ids: Vec<ParamId> = params.iter().map(|(id, _, _)| id).collect();
        for id in ids {
            let num = numeric(params, id, &|p| f(p).0);
            for (a, n) in grads.get(id).iter().zip(num.iter()) {
                let denom = a.abs().max(n.abs()).max(1e-8);
                assert!((a - n).abs() / denom < 1e-5 || (a - n).abs() < 1e-8, "{a} vs {n}");
            }
        }
    }

    #[test]
    fn composite_expression_gradients() {
        let mut p = ParamStore::default();
        let a = p.add("a", array![[0.3, -0.7, 1.1], [0.5, 0.2, -0.4]]);
        let b = p.add("b", array![[0.2, 0.1], [-0.3, 0.8], [0.6, -0.5]]);
        let gain = p.add("g", array![[1.2, 0.7]]);
        let bias = p.add("bias", array![[0.1, -0.2]]);
        let emb = p.add("emb", array![[0.4, -0.1], [0.3, 0.9], [-0.6, 0.2]]);
        let f = move |p: &ParamStore| {
            let mut g = Graph::new(p);
            let av = g.param(a);
            let bv = g.param(b);
            let ab = g.matmul(av, bv);
            let gv = g.param(gain);
            let bi = g.param(bias);
            let ln = g.layer_norm(ab, gv, bi);
            let e = g.embed(emb, &[2, 0]);
            let sum = g.add(ln, e);
            let act = g.gelu(sum);
            let t = g.tanh(act);
            let abt = g.matmul_t(t, e);
            let sm = g.softmax(abt);
            let bins = g.bin_gather(sm, &[1, 0, 1, 1]);
            let sig = g.sigmoid(bins);
            let col = g.slice_cols(sig, 0, 1);
            let mc = g.mul_col(sig, col);
            let wide = g.concat_cols(&[mc, sig]);
            let sc = g.scatter_cols(wide, &[1, 0, 0, 1], 2);
            let lg = g.log(sc);
            let cat = g.concat_cols(&[lg, sc]);
            let rows = g.concat_rows(&[cat, cat]);
            let gathered = g.gather_rows(rows, &[3, 0]);
            let prod = g.mul(gathered, gathered);
            let aff = g.affine(prod, 0.5, 1.0);
            let loss = g.sum_all(aff);
            let mut grads = Grads::zeros_like(p);
            g.backward(loss, &mut grads);
            (g.value(loss)[[0, 0]], grads)
        };
        check(&mut p, &f);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let s = softmax_rows(&array![[1.0, 2.0, 3.0], [-1000.0, 0.0, 1000.0]]);
        for row in s.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
