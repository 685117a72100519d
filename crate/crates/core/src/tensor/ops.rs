//! Forward operations and their local gradient rules.

use super::linalg;
use super::{numel, BinaryKind, CoreError, Node, Op, Result, Tape, UnaryKind, Var};

impl Tape {
    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        let (la, lb) = (na.data.len(), nb.data.len());
        let apply = |x: f64, y: f64| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
        };
        let (shape, data) = if na.shape == nb.shape {
            let data = na
                .data
                .iter()
                .zip(&nb.data)
                .map(|(&x, &y)| apply(x, y))
                .collect();
            (na.shape.clone(), data)
        } else if lb == 1 {
            let y = nb.data[0];
            (na.shape.clone(), na.data.iter().map(|&x| apply(x, y)).collect())
        } else if la == 1 {
            let x = na.data[0];
            (nb.shape.clone(), nb.data.iter().map(|&y| apply(x, y)).collect())
        } else {
            return Err(CoreError::dimension(
                format!("elementwise {kind:?} (broadcast is scalar-with-tensor only)"),
                &na.shape,
                &nb.shape,
            ));
        };
        let rg = self.parent_requires(&[a.0, b.0]);
        Ok(self.push(shape, data, rg, Op::Binary { kind, a: a.0, b: b.0 }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn add_scalar(&mut self, x: Var, value: f64) -> Result<Var> {
        let s = self.scalar(value);
        self.add(x, s)
    }

    pub fn mul_scalar(&mut self, x: Var, value: f64) -> Result<Var> {
        let s = self.scalar(value);
        self.mul(x, s)
    }

    fn unary(&mut self, kind: UnaryKind, x: Var) -> Result<Var> {
        let node = &self.nodes[x.0];
        if kind == UnaryKind::Log && node.data.iter().any(|&v| v <= 0.0) {
            return Err(CoreError::Domain(
                "log requires strictly positive inputs".into(),
            ));
        }
        let data: Vec<f64> = node
            .data
            .iter()
            .map(|&v| match kind {
                UnaryKind::Exp => v.exp(),
                UnaryKind::Log => v.ln(),
                UnaryKind::Tanh => v.tanh(),
                UnaryKind::Sigmoid => linalg::sigmoid(v),
                UnaryKind::Square => v * v,
            })
            .collect();
        let shape = node.shape.clone();
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(shape, data, rg, Op::Unary { kind, x: x.0 }))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Exp, x)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Log, x)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Sigmoid, x)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Square, x)
    }

    /// Clamp values to `[lo, hi]`; the gradient passes through the interior
    /// and is zero outside.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi {
            return Err(CoreError::Usage(format!("clamp bounds inverted: [{lo}, {hi}]")));
        }
        let node = &self.nodes[x.0];
        let data: Vec<f64> = node.data.iter().map(|&v| v.clamp(lo, hi)).collect();
        let shape = node.shape.clone();
        let rg = node.requires_grad;
        Ok(self.push(shape, data, rg, Op::Clamp { x: x.0, lo, hi }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        let (sa, sb) = (&na.shape, &nb.shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(CoreError::dimension("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = linalg::matmul(&na.data, &nb.data, m, k, n);
        let rg = self.parent_requires(&[a.0, b.0]);
        Ok(self.push(vec![m, n], data, rg, Op::Matmul { a: a.0, b: b.0 }))
    }

    fn reduce(&mut self, mean: bool, x: Var, axis: Option<usize>) -> Result<Var> {
        let node = &self.nodes[x.0];
        let shape = node.shape.clone();
        if let Some(ax) = axis {
            if ax >= shape.len() {
                return Err(CoreError::Usage(format!(
                    "reduction axis {ax} out of range for shape {shape:?}"
                )));
            }
        }
        let (out_shape, mut out) = match (axis, shape.len()) {
            (None, _) => (vec![], vec![node.data.iter().sum::<f64>()]),
            (Some(0), 1) => (vec![], vec![node.data.iter().sum::<f64>()]),
            (Some(0), 2) => {
                let (rows, cols) = (shape[0], shape[1]);
                let mut acc = vec![0.0; cols];
                for r in 0..rows {
                    for (a, &v) in acc.iter_mut().zip(&node.data[r * cols..(r + 1) * cols]) {
                        *a += v;
                    }
                }
                (vec![cols], acc)
            }
            (Some(1), 2) => {
                let (rows, cols) = (shape[0], shape[1]);
                let acc: Vec<f64> = (0..rows)
                    .map(|r| node.data[r * cols..(r + 1) * cols].iter().sum())
                    .collect();
                (vec![rows], acc)
            }
            _ => unreachable!("axis validated above"),
        };
        if mean {
            let count = (numel(&shape) / numel(&out_shape)) as f64;
            for v in &mut out {
                *v /= count;
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        let op = if mean {
            Op::Mean { x: x.0, axis }
        } else {
            Op::Sum { x: x.0, axis }
        };
        Ok(self.push(out_shape, out, rg, op))
    }

    pub fn sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(false, x, axis)
    }

    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(true, x, axis)
    }

    /// Per-row cross-entropy of `softmax(logits)` against class indices.
    pub fn softmax_ce_rows(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let node = &self.nodes[logits.0];
        if node.shape.len() != 2 {
            return Err(CoreError::dimension("softmax_ce_rows", &node.shape, &[targets.len()]));
        }
        let (rows, classes) = (node.shape[0], node.shape[1]);
        if targets.len() != rows {
            return Err(CoreError::Usage(format!(
                "{} targets for {rows} logit rows",
                targets.len()
            )));
        }
        if node.data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Numeric("non-finite logits".into()));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
            return Err(CoreError::Data(format!(
                "class index {bad} out of range for {classes} classes"
            )));
        }
        let mut probs = vec![0.0; rows * classes];
        let mut losses = vec![0.0; rows];
        for r in 0..rows {
            let row = &node.data[r * classes..(r + 1) * classes];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - m).exp();
                probs[r * classes + j] = e;
                z += e;
            }
            for p in &mut probs[r * classes..(r + 1) * classes] {
                *p /= z;
            }
            losses[r] = z.ln() - (row[targets[r]] - m);
        }
        let rg = self.nodes[logits.0].requires_grad;
        Ok(self.push(
            vec![rows],
            losses,
            rg,
            Op::SoftmaxCeRows {
                logits: logits.0,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Batch-mean softmax cross-entropy; the usual classification loss.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let rows = self.softmax_ce_rows(logits, targets)?;
        self.mean(rows, None)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(CoreError::Usage("concat of zero tensors".into()));
        }
        let first = &self.nodes[parts[0].0];
        let rank = first.shape.len().max(1);
        if axis >= rank {
            return Err(CoreError::Usage(format!(
                "concat axis {axis} out of range for rank {rank}"
            )));
        }
        let mut out_shape = first.shape.clone();
        if out_shape.is_empty() {
            out_shape = vec![1];
        }
        for part in &parts[1..] {
            let shape = &self.nodes[part.0].shape;
            let mut s = shape.clone();
            if s.is_empty() {
                s = vec![1];
            }
            if s.len() != out_shape.len() {
                return Err(CoreError::dimension("concat rank", &out_shape, shape));
            }
            for (d, (&a, &b)) in out_shape.iter().zip(&s).enumerate() {
                if d != axis && a != b {
                    return Err(CoreError::dimension("concat extents", &out_shape, &s));
                }
            }
            out_shape[axis] += s[axis];
        }

        let total = numel(&out_shape);
        let mut data = vec![0.0; total];
        if axis == 0 || out_shape.len() == 1 {
            let mut offset = 0;
            for part in parts {
                let src = &self.nodes[part.0].data;
                data[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        } else {
            // axis == 1, rank 2: interleave rows.
            let rows = out_shape[0];
            let out_cols = out_shape[1];
            let mut col_offset = 0;
            for part in parts {
                let node = &self.nodes[part.0];
                let cols = node.shape[1];
                for r in 0..rows {
                    data[r * out_cols + col_offset..r * out_cols + col_offset + cols]
                        .copy_from_slice(&node.data[r * cols..(r + 1) * cols]);
                }
                col_offset += cols;
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.parent_requires(&ids);
        Ok(self.push(out_shape, data, rg, Op::Concat { parts: ids, axis }))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let node = &self.nodes[x.0];
        let shape = node.shape.clone();
        let rank = shape.len();
        if axis >= rank {
            return Err(CoreError::Usage(format!(
                "slice axis {axis} out of range for shape {shape:?}"
            )));
        }
        if len == 0 || start + len > shape[axis] {
            return Err(CoreError::Usage(format!(
                "slice [{start}, {start}+{len}) out of range for extent {}",
                shape[axis]
            )));
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let data = if rank == 1 || axis == 0 {
            let row = if rank == 2 { shape[1] } else { 1 };
            node.data[start * row..(start + len) * row].to_vec()
        } else {
            let (rows, cols) = (shape[0], shape[1]);
            let mut out = Vec::with_capacity(rows * len);
            for r in 0..rows {
                out.extend_from_slice(&node.data[r * cols + start..r * cols + start + len]);
            }
            out
        };
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(
            out_shape,
            data,
            rg,
            Op::Slice {
                x: x.0,
                axis,
                start,
                len,
            },
        ))
    }

    /// `[n, m] + [m]` with the bias broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (nx, nb) = (&self.nodes[x.0], &self.nodes[bias.0]);
        if nx.shape.len() != 2 || nb.shape.len() != 1 || nx.shape[1] != nb.shape[0] {
            return Err(CoreError::dimension("add_bias", &nx.shape, &nb.shape));
        }
        let (rows, cols) = (nx.shape[0], nx.shape[1]);
        let mut data = nx.data.clone();
        for r in 0..rows {
            for (d, &b) in data[r * cols..(r + 1) * cols].iter_mut().zip(&nb.data) {
                *d += b;
            }
        }
        let rg = self.parent_requires(&[x.0, bias.0]);
        Ok(self.push(
            vec![rows, cols],
            data,
            rg,
            Op::AddBias { x: x.0, bias: bias.0 },
        ))
    }

    /// Look up rows of an embedding-style table.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let node = &self.nodes[table.0];
        if node.shape.len() != 2 {
            return Err(CoreError::dimension("gather_rows", &node.shape, &[indices.len()]));
        }
        if indices.is_empty() {
            return Err(CoreError::Usage("gather_rows with no indices".into()));
        }
        let (vocab, dim) = (node.shape[0], node.shape[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= vocab) {
            return Err(CoreError::Data(format!(
                "row index {bad} out of range for table with {vocab} rows"
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            data.extend_from_slice(&node.data[i * dim..(i + 1) * dim]);
        }
        let rg = self.nodes[table.0].requires_grad;
        Ok(self.push(
            vec![indices.len(), dim],
            data,
            rg,
            Op::GatherRows {
                table: table.0,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Scale each row of `x` by a constant per-row factor. Used for sequence
    /// masking; the mask itself never receives a gradient.
    pub fn mul_mask_rows(&mut self, x: Var, mask: &[f64]) -> Result<Var> {
        let node = &self.nodes[x.0];
        if node.shape.len() != 2 || node.shape[0] != mask.len() {
            return Err(CoreError::dimension("mul_mask_rows", &node.shape, &[mask.len()]));
        }
        let (rows, cols) = (node.shape[0], node.shape[1]);
        let mut data = node.data.clone();
        for (r, &m) in mask.iter().enumerate() {
            for d in &mut data[r * cols..(r + 1) * cols] {
                *d *= m;
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(
            vec![rows, cols],
            data,
            rg,
            Op::MulMaskRows {
                x: x.0,
                mask: mask.to_vec(),
            },
        ))
    }
}

/// Accumulate `delta` into the cotangent of node `id` if it participates in
/// differentiation.
fn accumulate(nodes: &[Node], cots: &mut [Option<Vec<f64>>], id: usize, delta: &[f64]) {
    if !nodes[id].requires_grad {
        return;
    }
    let len = nodes[id].data.len();
    let cot = cots[id].get_or_insert_with(|| vec![0.0; len]);
    for (g, &d) in cot.iter_mut().zip(delta) {
        *g += d;
    }
}

/// Apply the local gradient rule of node `i`, accumulating into its parents'
/// cotangents. Parents always carry smaller indices; contributions are
/// computed into temporaries so aliased parents (e.g. `mul(x, x)`)
/// accumulate correctly.
pub(super) fn apply_backward(
    nodes: &[Node],
    i: usize,
    out_grad: &[f64],
    cots: &mut [Option<Vec<f64>>],
) {
    let node = &nodes[i];
    let before = nodes;
    match &node.op {
        Op::Leaf => {}
        Op::Binary { kind, a, b } => {
            let (a, b) = (*a, *b);
            let (la, lb) = (before[a].data.len(), before[b].data.len());
            let out_len = out_grad.len();
            let reduce_to = |len: usize, full: &[f64]| -> Vec<f64> {
                if len == full.len() {
                    full.to_vec()
                } else {
                    vec![full.iter().sum()]
                }
            };
            match kind {
                BinaryKind::Add => {
                    let da = reduce_to(la, out_grad);
                    accumulate(before, cots, a, &da);
                    let db = reduce_to(lb, out_grad);
                    accumulate(before, cots, b, &db);
                }
                BinaryKind::Sub => {
                    let da = reduce_to(la, out_grad);
                    accumulate(before, cots, a, &da);
                    let mut db: Vec<f64> = out_grad.to_vec();
                    for v in &mut db {
                        *v = -*v;
                    }
                    let db = reduce_to(lb, &db);
                    accumulate(before, cots, b, &db);
                }
                BinaryKind::Mul => {
                    // d(a*b) = b dz for a, a dz for b, honouring broadcast.
                    let mut da = vec![0.0; out_len];
                    for (i, d) in da.iter_mut().enumerate() {
                        let bv = if lb == 1 {
                            before[b].data[0]
                        } else {
                            before[b].data[i]
                        };
                        *d = out_grad[i] * bv;
                    }
                    let da = reduce_to(la, &da);
                    accumulate(before, cots, a, &da);

                    let mut db = vec![0.0; out_len];
                    for (i, d) in db.iter_mut().enumerate() {
                        let av = if la == 1 {
                            before[a].data[0]
                        } else {
                            before[a].data[i]
                        };
                        *d = out_grad[i] * av;
                    }
                    let db = reduce_to(lb, &db);
                    accumulate(before, cots, b, &db);
                }
            }
        }
        Op::Unary { kind, x } => {
            let x = *x;
            let delta: Vec<f64> = match kind {
                UnaryKind::Exp => node
                    .data
                    .iter()
                    .zip(out_grad)
                    .map(|(&y, &d)| d * y)
                    .collect(),
                UnaryKind::Log => before[x]
                    .data
                    .iter()
                    .zip(out_grad)
                    .map(|(&v, &d)| d / v)
                    .collect(),
                UnaryKind::Tanh => node
                    .data
                    .iter()
                    .zip(out_grad)
                    .map(|(&y, &d)| d * (1.0 - y * y))
                    .collect(),
                UnaryKind::Sigmoid => node
                    .data
                    .iter()
                    .zip(out_grad)
                    .map(|(&y, &d)| d * y * (1.0 - y))
                    .collect(),
                UnaryKind::Square => before[x]
                    .data
                    .iter()
                    .zip(out_grad)
                    .map(|(&v, &d)| d * 2.0 * v)
                    .collect(),
            };
            accumulate(before, cots, x, &delta);
        }
        Op::Clamp { x, lo, hi } => {
            let x = *x;
            let delta: Vec<f64> = before[x]
                .data
                .iter()
                .zip(out_grad)
                .map(|(&v, &d)| if v > *lo && v < *hi { d } else { 0.0 })
                .collect();
            accumulate(before, cots, x, &delta);
        }
        Op::Matmul { a, b } => {
            let (a, b) = (*a, *b);
            let m = before[a].shape[0];
            let k = before[a].shape[1];
            let n = before[b].shape[1];
            if before[a].requires_grad {
                let mut da = vec![0.0; m * k];
                linalg::matmul_acc_bt(out_grad, &before[b].data, &mut da, m, k, n);
                accumulate(before, cots, a, &da);
            }
            if before[b].requires_grad {
                let mut db = vec![0.0; k * n];
                linalg::matmul_acc_at(&before[a].data, out_grad, &mut db, m, k, n);
                accumulate(before, cots, b, &db);
            }
        }
        Op::Sum { x, axis } | Op::Mean { x, axis } => {
            let x = *x;
            let mean = matches!(node.op, Op::Mean { .. });
            let in_shape = before[x].shape.clone();
            let in_len = before[x].data.len();
            let scale = if mean {
                numel(&node.shape) as f64 / in_len as f64
            } else {
                1.0
            };
            let mut delta = vec![0.0; in_len];
            match (axis, in_shape.len()) {
                (None, _) | (Some(0), 1) => {
                    let d = out_grad[0] * scale;
                    for v in &mut delta {
                        *v = d;
                    }
                }
                (Some(0), 2) => {
                    let cols = in_shape[1];
                    for r in 0..in_shape[0] {
                        for (v, &d) in delta[r * cols..(r + 1) * cols].iter_mut().zip(out_grad) {
                            *v = d * scale;
                        }
                    }
                }
                (Some(1), 2) => {
                    let cols = in_shape[1];
                    for (r, &d) in out_grad.iter().enumerate() {
                        for v in &mut delta[r * cols..(r + 1) * cols] {
                            *v = d * scale;
                        }
                    }
                }
                _ => unreachable!(),
            }
            accumulate(before, cots, x, &delta);
        }
        Op::SoftmaxCeRows {
            logits,
            targets,
            probs,
        } => {
            let logits = *logits;
            let classes = before[logits].shape[1];
            let mut delta = probs.clone();
            for (r, &t) in targets.iter().enumerate() {
                let row = &mut delta[r * classes..(r + 1) * classes];
                row[t] -= 1.0;
                for v in row {
                    *v *= out_grad[r];
                }
            }
            accumulate(before, cots, logits, &delta);
        }
        Op::Concat { parts, axis } => {
            if *axis == 0 || node.shape.len() == 1 {
                let mut offset = 0;
                for &p in parts {
                    let len = before[p].data.len();
                    accumulate(before, cots, p, &out_grad[offset..offset + len]);
                    offset += len;
                }
            } else {
                let rows = node.shape[0];
                let out_cols = node.shape[1];
                let mut col_offset = 0;
                for &p in parts {
                    let cols = before[p].shape[1];
                    let mut delta = vec![0.0; rows * cols];
                    for r in 0..rows {
                        delta[r * cols..(r + 1) * cols].copy_from_slice(
                            &out_grad[r * out_cols + col_offset..r * out_cols + col_offset + cols],
                        );
                    }
                    accumulate(before, cots, p, &delta);
                    col_offset += cols;
                }
            }
        }
        Op::Slice {
            x,
            axis,
            start,
            len,
        } => {
            let x = *x;
            let in_shape = &before[x].shape;
            let mut delta = vec![0.0; before[x].data.len()];
            if in_shape.len() == 1 || *axis == 0 {
                let row = if in_shape.len() == 2 { in_shape[1] } else { 1 };
                delta[start * row..(start + len) * row].copy_from_slice(out_grad);
            } else {
                let cols = in_shape[1];
                for r in 0..in_shape[0] {
                    delta[r * cols + start..r * cols + start + len]
                        .copy_from_slice(&out_grad[r * len..(r + 1) * len]);
                }
            }
            accumulate(before, cots, x, &delta);
        }
        Op::AddBias { x, bias } => {
            let (x, bias) = (*x, *bias);
            accumulate(before, cots, x, out_grad);
            let cols = before[bias].data.len();
            let mut db = vec![0.0; cols];
            for row in out_grad.chunks(cols) {
                for (d, &g) in db.iter_mut().zip(row) {
                    *d += g;
                }
            }
            accumulate(before, cots, bias, &db);
        }
        Op::GatherRows { table, indices } => {
            let table = *table;
            if !before[table].requires_grad {
                return;
            }
            let dim = before[table].shape[1];
            let mut delta = vec![0.0; before[table].data.len()];
            for (r, &i) in indices.iter().enumerate() {
                for (d, &g) in delta[i * dim..(i + 1) * dim]
                    .iter_mut()
                    .zip(&out_grad[r * dim..(r + 1) * dim])
                {
                    *d += g;
                }
            }
            accumulate(before, cots, table, &delta);
        }
        Op::MulMaskRows { x, mask } => {
            let x = *x;
            let cols = node.shape[1];
            let mut delta = vec![0.0; out_grad.len()];
            for (r, &m) in mask.iter().enumerate() {
                for (d, &g) in delta[r * cols..(r + 1) * cols]
                    .iter_mut()
                    .zip(&out_grad[r * cols..(r + 1) * cols])
                {
                    *d = g * m;
                }
            }
            accumulate(before, cots, x, &delta);
        }
    }
}
