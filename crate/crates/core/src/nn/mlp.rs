use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Batch, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Binary cross-entropy on raw logits.
    Bce,
    Mse,
}

/// Per-column affine standardization `(v - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Column statistics of `data`; near-constant columns get unit scale.
    pub fn fit(data: &Batch) -> Normalizer {
        let (n, d) = (data.rows().max(1) as f64, data.cols());
        let mut mean = vec![0.0; d];
        for r in 0..data.rows() {
            for (m, v) in mean.iter_mut().zip(data.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in 0..data.rows() {
            for ((s, v), m) in var.iter_mut().zip(data.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-9 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Normalizer { mean, std }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub(crate) fn apply(&self, row: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.std) {
            *o = (v - m) / s;
        }
    }

    pub(crate) fn invert(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }
}

/// Named slice of the output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub name: String,
    pub width: usize,
}

/// Dense network: affine layers with ReLU between them and an identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    /// `weights[l]` is `dims[l+1] x dims[l]`, row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
    feature_norm: Option<Normalizer>,
    target_norm: Option<Normalizer>,
    heads: Vec<Head>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub(crate) fn zeros_like(model: &MlpModel) -> Gradients {
        Gradients {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub(crate) fn clear(&mut self) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// Per-layer activation buffers reused across batches.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
    feature_norm: Option<Normalizer>,
    #[serde(default)]
    target_norm: Option<Normalizer>,
    #[serde(default)]
    heads: Vec<Head>,
}

#[inline]
/// `w` against four rows at once; each row sum is accumulated in the same
/// order as [`dot`].
fn dot4(w: &[f64], x: [&[f64]; 4]) -> [f64; 4] {
    let mut acc = [[0.0f64; 4]; 4];
    let n = w.len() / 4 * 4;
    let mut i = 0;
    while i < n {
        for (a, xr) in acc.iter_mut().zip(&x) {
            a[0] += w[i] * xr[i];
            a[1] += w[i + 1] * xr[i + 1];
            a[2] += w[i + 2] * xr[i + 2];
            a[3] += w[i + 3] * xr[i + 3];
        }
        i += 4;
    }
    let mut out = [0.0; 4];
    for ((o, a), xr) in out.iter_mut().zip(&acc).zip(&x) {
        let mut s = (a[0] + a[1]) + (a[2] + a[3]);
        for k in n..w.len() {
            s += w[k] * xr[k];
        }
        *o = s;
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl MlpModel {
    /// He-uniform weights, zero biases, single output head.
    pub fn new(dims: &[usize], seed: u64) -> Result<MlpModel, NnError> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(NnError::Shape(format!("invalid layer dims {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let bound = (6.0 / w[0] as f64).sqrt();
            weights.push(
                (0..w[0] * w[1])
                    .map(|_| bound * (2.0 * rng.random::<f64>() - 1.0))
                    .collect(),
            );
            biases.push(vec![0.0; w[1]]);
        }
        Ok(MlpModel {
            dims: dims.to_vec(),
            weights,
            biases,
            activation: Activation::Relu,
            feature_norm: None,
            target_norm: None,
            heads: vec![Head {
                name: "out".into(),
                width: *dims.last().unwrap(),
            }],
        })
    }

    /// Feasibility classifier: 4 weight layers, 64 hidden units, one logit.
    pub fn classifier(input_dim: usize, seed: u64) -> MlpModel {
        MlpModel::new(&[input_dim, 64, 64, 64, 1], seed).expect("valid dims")
    }

    /// Shared-body network with a next-state head and a residual head:
    /// 3 weight layers, 128 hidden units.
    pub fn dynamics(input_dim: usize, state_dim: usize, residual_dim: usize, seed: u64) -> MlpModel {
        let mut m = MlpModel::new(&[input_dim, 128, 128, state_dim + residual_dim], seed)
            .expect("valid dims");
        m.heads = vec![
            Head {
                name: super::STATE_HEAD.into(),
                width: state_dim,
            },
            Head {
                name: super::RESIDUAL_HEAD.into(),
                width: residual_dim,
            },
        ];
        m
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn set_heads(&mut self, heads: Vec<Head>) -> Result<(), NnError> {
        let total: usize = heads.iter().map(|h| h.width).sum();
        if total != self.output_dim() {
            return Err(NnError::Shape(format!(
                "heads cover {total} outputs, model has {}",
                self.output_dim()
            )));
        }
        self.heads = heads;
        Ok(())
    }

    pub fn head_range(&self, name: &str) -> Result<Range<usize>, NnError> {
        let mut start = 0;
        for h in &self.heads {
            if h.name == name {
                return Ok(start..start + h.width);
            }
            start += h.width;
        }
        Err(NnError::MissingHead(name.to_string()))
    }

    pub fn feature_norm(&self) -> Option<&Normalizer> {
        self.feature_norm.as_ref()
    }

    pub fn target_norm(&self) -> Option<&Normalizer> {
        self.target_norm.as_ref()
    }

    pub fn set_feature_norm(&mut self, n: Option<Normalizer>) -> Result<(), NnError> {
        if let Some(n) = &n {
            if n.len() != self.input_dim() || n.std.len() != n.mean.len() {
                return Err(NnError::Shape("feature normalizer width".into()));
            }
        }
        self.feature_norm = n;
        Ok(())
    }

    pub fn set_target_norm(&mut self, n: Option<Normalizer>) -> Result<(), NnError> {
        if let Some(n) = &n {
            if n.len() != self.output_dim() || n.std.len() != n.mean.len() {
                return Err(NnError::Shape("target normalizer width".into()));
            }
        }
        self.target_norm = n;
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    fn check_input(&self, input: &Batch) -> Result<(), NnError> {
        if input.cols() != self.input_dim() {
            return Err(NnError::Shape(format!(
                "input width {} but the model expects {}",
                input.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Inputs after feature standardization.
    pub(crate) fn normalize_inputs(&self, input: &Batch) -> Vec<f64> {
        match &self.feature_norm {
            None => input.data().to_vec(),
            Some(n) => {
                let mut out = vec![0.0; input.data().len()];
                for (r, o) in out.chunks_exact_mut(input.cols()).enumerate() {
                    n.apply(input.row(r), o);
                }
                out
            }
        }
    }

    /// Targets in the space the network is trained in.
    pub(crate) fn normalize_targets(&self, target: &Batch) -> Vec<f64> {
        match &self.target_norm {
            None => target.data().to_vec(),
            Some(n) => {
                let mut out = vec![0.0; target.data().len()];
                for (r, o) in out.chunks_exact_mut(target.cols()).enumerate() {
                    n.apply(target.row(r), o);
                }
                out
            }
        }
    }

    /// Affine/ReLU chain on already standardized rows; fills `ws.acts`.
    pub(crate) fn forward_into(&self, x: &[f64], rows: usize, ws: &mut Workspace) {
        let n_layers = self.weights.len();
        ws.acts.resize_with(n_layers + 1, Vec::new);
        ws.acts[0].clear();
        ws.acts[0].extend_from_slice(x);
        for l in 0..n_layers {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            let (prev, rest) = ws.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            out.clear();
            out.resize(rows * dout, 0.0);
            let w = &self.weights[l];
            let b = &self.biases[l];
            let hidden = l + 1 < n_layers;
            let act = |z: f64| if hidden && z < 0.0 { 0.0 } else { z };
            let mut xs = input.chunks_exact(4 * din);
            let mut os = out.chunks_exact_mut(4 * dout);
            for (xb, ob) in (&mut xs).zip(&mut os) {
                let (x0, x1, x2, x3) = (&xb[..din], &xb[din..2 * din], &xb[2 * din..3 * din], &xb[3 * din..]);
                for (j, (wr, bo)) in w.chunks_exact(din).zip(b).enumerate() {
                    let z = dot4(wr, [x0, x1, x2, x3]);
                    for (r, zr) in z.iter().enumerate() {
                        ob[r * dout + j] = act(bo + zr);
                    }
                }
            }
            for (xr, or) in xs.remainder().chunks_exact(din).zip(os.into_remainder().chunks_exact_mut(dout)) {
                for ((o, wr), bo) in or.iter_mut().zip(w.chunks_exact(din)).zip(b) {
                    *o = act(bo + dot(wr, xr));
                }
            }
        }
    }

    /// Raw (pre-sigmoid) outputs in target units.
    pub fn forward(&self, input: &Batch) -> Result<Batch, NnError> {
        self.check_input(input)?;
        let x = self.normalize_inputs(input);
        let mut ws = Workspace::default();
        self.forward_into(&x, input.rows(), &mut ws);
        let mut out = ws.acts.pop().unwrap_or_default();
        if let Some(n) = &self.target_norm {
            for row in out.chunks_exact_mut(self.output_dim()) {
                n.invert(row);
            }
        }
        Batch::new(input.rows(), self.output_dim(), out)
    }

    pub fn forward_row(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let b = Batch::new(1, input.len(), input.to_vec())?;
        Ok(self.forward(&b)?.into_data())
    }

    fn output_columns(&self, head: Option<&str>) -> Result<Range<usize>, NnError> {
        match head {
            None => Ok(0..self.output_dim()),
            Some(h) => self.head_range(h),
        }
    }

    fn check_pair(&self, input: &Batch, target: &Batch) -> Result<(), NnError> {
        self.check_input(input)?;
        if target.rows() != input.rows() || target.cols() != self.output_dim() {
            return Err(NnError::Shape(format!(
                "target is {}x{}, expected {}x{}",
                target.rows(),
                target.cols(),
                input.rows(),
                self.output_dim()
            )));
        }
        if input.rows() == 0 {
            return Err(NnError::EmptyDataset);
        }
        Ok(())
    }

    /// Mean loss over the batch and the selected output columns (all when
    /// `head` is `None`), in the standardized target space.
    pub fn loss(
        &self,
        input: &Batch,
        target: &Batch,
        loss: Loss,
        head: Option<&str>,
    ) -> Result<f64, NnError> {
        self.check_pair(input, target)?;
        let cols = self.output_columns(head)?;
        let x = self.normalize_inputs(input);
        let t = self.normalize_targets(target);
        let mut ws = Workspace::default();
        self.forward_into(&x, input.rows(), &mut ws);
        let out = ws.acts.last().unwrap();
        Ok(batch_loss(out, &t, self.output_dim(), cols, loss))
    }

    /// Gradients of [`loss`](Self::loss) with respect to every parameter.
    pub fn backward(
        &self,
        input: &Batch,
        target: &Batch,
        loss: Loss,
        head: Option<&str>,
    ) -> Result<(f64, Gradients), NnError> {
        self.check_pair(input, target)?;
        let cols = self.output_columns(head)?;
        let x = self.normalize_inputs(input);
        let t = self.normalize_targets(target);
        let mut ws = Workspace::default();
        let mut grads = Gradients::zeros_like(self);
        let l = self.accumulate(&x, &t, input.rows(), loss, cols, &mut ws, &mut grads);
        Ok((l, grads))
    }

    /// Forward + backward on standardized rows; adds into `grads` and
    /// returns the mean loss.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn accumulate(
        &self,
        x: &[f64],
        t: &[f64],
        rows: usize,
        loss: Loss,
        cols: Range<usize>,
        ws: &mut Workspace,
        grads: &mut Gradients,
    ) -> f64 {
        self.forward_into(x, rows, ws);
        let n_layers = self.weights.len();
        let dout = self.output_dim();
        let out = &ws.acts[n_layers];
        let value = batch_loss(out, t, dout, cols.clone(), loss);

        let scale = 1.0 / (rows * cols.len()) as f64;
        ws.deltas.resize_with(n_layers + 1, Vec::new);
        let top = &mut ws.deltas[n_layers];
        top.clear();
        top.resize(rows * dout, 0.0);
        for ((d, o), tt) in top
            .chunks_exact_mut(dout)
            .zip(out.chunks_exact(dout))
            .zip(t.chunks_exact(dout))
        {
            for c in cols.clone() {
                d[c] = match loss {
                    Loss::Mse => 2.0 * (o[c] - tt[c]) * scale,
                    Loss::Bce => (sigmoid(o[c]) - tt[c]) * scale,
                };
            }
        }

        for l in (0..n_layers).rev() {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            let (lower, upper) = ws.deltas.split_at_mut(l + 1);
            let delta = &upper[0];
            let a_prev = &ws.acts[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for (dr, ar) in delta.chunks_exact(dout).zip(a_prev.chunks_exact(din)) {
                for ((g, &d), gbo) in gw.chunks_exact_mut(din).zip(dr).zip(gb.iter_mut()) {
                    if d != 0.0 {
                        axpy(g, d, ar);
                        *gbo += d;
                    }
                }
            }
            if l > 0 {
                let w = &self.weights[l];
                let dprev = &mut lower[l];
                dprev.clear();
                dprev.resize(rows * din, 0.0);
                for ((pr, dr), ar) in dprev
                    .chunks_exact_mut(din)
                    .zip(delta.chunks_exact(dout))
                    .zip(a_prev.chunks_exact(din))
                {
                    for (wr, &d) in w.chunks_exact(din).zip(dr) {
                        if d != 0.0 {
                            axpy(pr, d, wr);
                        }
                    }
                    // ReLU derivative: the stored activation is zero where clamped
                    for (p, a) in pr.iter_mut().zip(ar) {
                        if *a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                }
            }
        }
        value
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            dims: self.dims.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
            activation: self.activation,
            feature_norm: self.feature_norm.clone(),
            target_norm: self.target_norm.clone(),
            heads: self.heads.clone(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<MlpModel, NnError> {
        let f: ModelFile =
            serde_json::from_str(text).map_err(|e| NnError::Corrupt(e.to_string()))?;
        let corrupt = |m: String| Err(NnError::Corrupt(m));
        if f.dims.len() < 2 || f.dims.iter().any(|&d| d == 0) {
            return corrupt(format!("invalid dims {:?}", f.dims));
        }
        let n_layers = f.dims.len() - 1;
        if f.weights.len() != n_layers || f.biases.len() != n_layers {
            return corrupt(format!(
                "{} weight and {} bias blocks for {n_layers} layers",
                f.weights.len(),
                f.biases.len()
            ));
        }
        for l in 0..n_layers {
            if f.weights[l].len() != f.dims[l] * f.dims[l + 1] {
                return corrupt(format!(
                    "layer {l} has {} weights, expected {}",
                    f.weights[l].len(),
                    f.dims[l] * f.dims[l + 1]
                ));
            }
            if f.biases[l].len() != f.dims[l + 1] {
                return corrupt(format!("layer {l} has {} biases", f.biases[l].len()));
            }
        }
        if f
            .weights
            .iter()
            .chain(f.biases.iter())
            .flatten()
            .any(|v| !v.is_finite())
        {
            return corrupt("non-finite parameter".into());
        }
        let out_dim = f.dims[n_layers];
        let heads = if f.heads.is_empty() {
            vec![Head {
                name: "out".into(),
                width: out_dim,
            }]
        } else {
            f.heads
        };
        if heads.iter().map(|h| h.width).sum::<usize>() != out_dim {
            return corrupt("heads do not cover the output layer".into());
        }
        let check_norm = |n: &Option<Normalizer>, width: usize, what: &str| match n {
            Some(n) if n.mean.len() != width || n.std.len() != width => {
                Err(NnError::Corrupt(format!("{what} normalizer width")))
            }
            Some(n) if n.std.iter().any(|s| !(*s > 0.0)) => {
                Err(NnError::Corrupt(format!("{what} normalizer has non-positive std")))
            }
            _ => Ok(()),
        };
        check_norm(&f.feature_norm, f.dims[0], "feature")?;
        check_norm(&f.target_norm, out_dim, "target")?;
        Ok(MlpModel {
            dims: f.dims,
            weights: f.weights,
            biases: f.biases,
            activation: f.activation,
            feature_norm: f.feature_norm,
            target_norm: f.target_norm,
            heads,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MlpModel, NnError> {
        MlpModel::from_json(&std::fs::read_to_string(path)?)
    }
}

fn batch_loss(out: &[f64], t: &[f64], width: usize, cols: Range<usize>, loss: Loss) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (o, tt) in out.chunks_exact(width).zip(t.chunks_exact(width)) {
        for c in cols.clone() {
            total += match loss {
                Loss::Mse => (o[c] - tt[c]).powi(2),
                Loss::Bce => {
                    let z = o[c];
                    z.max(0.0) - z * tt[c] + (-z.abs()).exp().ln_1p()
                }
            };
            n += 1;
        }
    }
    total / n.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> MlpModel {
        MlpModel::new(&[3, 5, 2], 1).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut m = tiny();
        m.weights.iter_mut().flatten().for_each(|w| *w = 0.0);
        let x = Batch::new(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.5, 0.5]).unwrap();
        assert!(m.forward(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut m = MlpModel::new(&[3, 3], 0).unwrap();
        m.weights[0] = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let x = Batch::new(1, 3, vec![0.3, -0.7, 2.0]).unwrap();
        assert_eq!(m.forward(&x).unwrap().data(), x.data());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m = tiny();
        let x = Batch::new(1, 4, vec![0.0; 4]).unwrap();
        assert!(matches!(m.forward(&x), Err(NnError::Shape(_))));
        let x = Batch::new(1, 3, vec![0.0; 3]).unwrap();
        let t = Batch::new(1, 1, vec![0.0]).unwrap();
        assert!(m.backward(&x, &t, Loss::Mse, None).is_err());
    }

    #[test]
    fn perfect_regression_has_zero_gradient() {
        let m = tiny();
        let x = Batch::new(2, 3, vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6]).unwrap();
        let y = m.forward(&x).unwrap();
        let (l, g) = m.backward(&x, &y, Loss::Mse, None).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.weights.iter().chain(&g.biases).flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn bce_gradient_at_zero_logit() {
        // all-zero network: logit 0 for every sample
        let mut m = MlpModel::new(&[2, 1], 0).unwrap();
        m.weights[0] = vec![0.0, 0.0];
        let x = Batch::new(4, 2, vec![1.0; 8]).unwrap();
        let y = Batch::new(4, 1, vec![1.0; 4]).unwrap();
        let (l, g) = m.backward(&x, &y, Loss::Bce, None).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        // dL/dz = (sigmoid(0) - 1) / B per sample; the bias sums B of them
        assert!((g.biases[0][0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn head_ranges() {
        let m = MlpModel::dynamics(46, 22, 12, 0);
        assert_eq!(m.head_range("state").unwrap(), 0..22);
        assert_eq!(m.head_range("residual").unwrap(), 22..34);
        assert!(m.head_range("nope").is_err());
        assert_eq!(m.n_layers(), 3);
        assert_eq!(MlpModel::classifier(46, 0).n_layers(), 4);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let m = tiny();
        let text = m.to_json();
        assert!(matches!(
            MlpModel::from_json(&text[..text.len() / 2]),
            Err(NnError::Corrupt(_))
        ));
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["weights"][0].as_array_mut().unwrap().pop();
        assert!(matches!(
            MlpModel::from_json(&v.to_string()),
            Err(NnError::Corrupt(_))
        ));
        assert_eq!(MlpModel::from_json(&text).unwrap(), m);
    }
}
