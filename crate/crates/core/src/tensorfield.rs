//! Dense tensors at a point, index gymnastics, numeric fields and their
//! finite-difference and covariant derivatives.

use serde::{Deserialize, Serialize};

use crate::chart::{for_each_multi_index, invert_spd, Chart, Domain};
use crate::error::{GeomError, Result};

/// Variance of a tensor slot in the coordinate basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variance {
    /// Covariant (subscript) slot.
    Lower,
    /// Contravariant (superscript) slot.
    Upper,
}

/// Components of a tensor at one point, row-major over the slots.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTensor {
    dim: usize,
    slots: Vec<Variance>,
    data: Vec<f64>,
}

impl PointTensor {
    pub fn zeros(dim: usize, slots: Vec<Variance>) -> PointTensor {
        let len = dim.pow(slots.len() as u32);
        PointTensor {
            dim,
            slots,
            data: vec![0.0; len],
        }
    }

    /// All-lower tensor of the given rank, filled with zeros.
    pub fn covariant(dim: usize, rank: usize) -> PointTensor {
        PointTensor::zeros(dim, vec![Variance::Lower; rank])
    }

    pub fn scalar(value: f64) -> PointTensor {
        PointTensor {
            dim: 0,
            slots: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_data(dim: usize, slots: Vec<Variance>, data: Vec<f64>) -> Result<PointTensor> {
        let len = dim.pow(slots.len() as u32);
        if data.len() != len {
            return Err(GeomError::Dimension(format!(
                "expected {len} components, got {}",
                data.len()
            )));
        }
        Ok(PointTensor { dim, slots, data })
    }

    pub fn from_fn(dim: usize, slots: Vec<Variance>, mut f: impl FnMut(&[usize]) -> f64) -> PointTensor {
        let mut data = Vec::with_capacity(dim.pow(slots.len() as u32));
        for_each_multi_index(dim, slots.len(), |idx| data.push(f(idx)));
        PointTensor { dim, slots, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[Variance] {
        &self.slots
    }

    /// (number of upper slots, number of lower slots)
    pub fn valence(&self) -> (usize, usize) {
        let up = self.slots.iter().filter(|v| **v == Variance::Upper).count();
        (up, self.slots.len() - up)
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

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.slots.len());
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    /// Value of a rank-0 tensor.
    pub fn as_scalar(&self) -> Option<f64> {
        self.slots.is_empty().then(|| self.data[0])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_same_shape(&self, other: &PointTensor) -> Result<()> {
        if self.dim != other.dim || self.slots != other.slots {
            return Err(GeomError::SlotMismatch(format!(
                "shapes {:?}/{} and {:?}/{} differ",
                self.slots, self.dim, other.slots, other.dim
            )));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &PointTensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PointTensor {
        PointTensor {
            dim: self.dim,
            slots: self.slots.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> PointTensor {
        self.map(|v| s * v)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &PointTensor) -> Result<PointTensor> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(out)
    }

    pub fn add(&self, other: &PointTensor) -> Result<PointTensor> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &PointTensor) -> Result<PointTensor> {
        self.axpy(-1.0, other)
    }

    pub fn outer(&self, other: &PointTensor) -> Result<PointTensor> {
        if !self.slots.is_empty() && !other.slots.is_empty() && self.dim != other.dim {
            return Err(GeomError::SlotMismatch("outer product of different dimensions".into()));
        }
        let dim = if self.slots.is_empty() { other.dim } else { self.dim };
        let mut slots = self.slots.clone();
        slots.extend_from_slice(&other.slots);
        let mut data = Vec::with_capacity(self.data.len() * other.data.len());
        for a in &self.data {
            for b in &other.data {
                data.push(a * b);
            }
        }
        Ok(PointTensor { dim, slots, data })
    }

    /// Reorders slots: slot `s` of the result is slot `order[s]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<PointTensor> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if order.len() != r || order.iter().any(|&s| s >= r || std::mem::replace(&mut seen[s], true)) {
            return Err(GeomError::SlotMismatch(format!("{order:?} is not a permutation of {r} slots")));
        }
        let slots = order.iter().map(|&s| self.slots[s]).collect();
        let mut src = vec![0; r];
        let out = PointTensor::from_fn(self.dim, slots, |idx| {
            for (s, &o) in order.iter().enumerate() {
                src[o] = idx[s];
            }
            self.get(&src)
        });
        Ok(out)
    }

    /// Contracts slots `a` and `b`. Mixed-variance pairs are traced directly;
    /// same-variance pairs go through the supplied metric.
    pub fn contract(&self, a: usize, b: usize, metric: Option<&MetricAt>) -> Result<PointTensor> {
        let r = self.rank();
        if a == b || a >= r || b >= r {
            return Err(GeomError::SlotMismatch(format!("cannot contract slots {a} and {b} of a rank {r} tensor")));
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let m = self.dim;
        let weights: Vec<f64> = match (self.slots[a], self.slots[b]) {
            (x, y) if x != y => {
                let mut w = vec![0.0; m * m];
                for i in 0..m {
                    w[i * m + i] = 1.0;
                }
                w
            }
            (Variance::Lower, Variance::Lower) => {
                let metric = metric.ok_or_else(|| {
                    GeomError::SlotMismatch("two lower slots need a metric to contract".into())
                })?;
                metric.inv.data.clone()
            }
            _ => {
                let metric = metric.ok_or_else(|| {
                    GeomError::SlotMismatch("two upper slots need a metric to contract".into())
                })?;
                metric.g.data.clone()
            }
        };
        if let Some(metric) = metric {
            if metric.dim() != m {
                return Err(GeomError::SlotMismatch("metric dimension differs from tensor".into()));
            }
        }
        let slots: Vec<Variance> = self
            .slots
            .iter()
            .enumerate()
            .filter(|(s, _)| *s != a && *s != b)
            .map(|(_, v)| *v)
            .collect();
        let mut full = vec![0; r];
        let out = PointTensor::from_fn(m, slots, |idx| {
            let mut pos = 0;
            for (s, slot) in full.iter_mut().enumerate() {
                if s != a && s != b {
                    *slot = idx[pos];
                    pos += 1;
                }
            }
            let mut acc = 0.0;
            for i in 0..m {
                for j in 0..m {
                    let w = weights[i * m + j];
                    if w != 0.0 {
                        full[a] = i;
                        full[b] = j;
                        acc += w * self.get(&full);
                    }
                }
            }
            acc
        });
        if out.slots.is_empty() {
            return Ok(PointTensor::scalar(out.data[0]));
        }
        Ok(out)
    }

    /// Full trace of a rank-2 tensor (through the metric if needed).
    pub fn trace(&self, metric: Option<&MetricAt>) -> Result<f64> {
        if self.rank() != 2 {
            return Err(GeomError::SlotMismatch("trace needs a rank-2 tensor".into()));
        }
        Ok(self.contract(0, 1, metric)?.data[0])
    }

    fn change_slot(&self, slot: usize, metric: &MetricAt, to: Variance) -> Result<PointTensor> {
        if slot >= self.rank() {
            return Err(GeomError::SlotMismatch(format!("no slot {slot}")));
        }
        if self.slots[slot] == to {
            return Err(GeomError::SlotMismatch(format!("slot {slot} is already {to:?}")));
        }
        let m = self.dim;
        let w = match to {
            Variance::Upper => &metric.inv,
            Variance::Lower => &metric.g,
        };
        let mut slots = self.slots.clone();
        slots[slot] = to;
        let mut src = vec![0; self.rank()];
        Ok(PointTensor::from_fn(m, slots, |idx| {
            src.copy_from_slice(idx);
            let mut acc = 0.0;
            for s in 0..m {
                src[slot] = s;
                acc += w.data[idx[slot] * m + s] * self.get(&src);
            }
            acc
        }))
    }

    pub fn raise(&self, slot: usize, metric: &MetricAt) -> Result<PointTensor> {
        self.change_slot(slot, metric, Variance::Upper)
    }

    pub fn lower(&self, slot: usize, metric: &MetricAt) -> Result<PointTensor> {
        self.change_slot(slot, metric, Variance::Lower)
    }

    /// Same tensor with every slot lowered.
    pub fn all_lower(&self, metric: &MetricAt) -> Result<PointTensor> {
        let mut t = self.clone();
        for s in 0..t.rank() {
            if t.slots[s] == Variance::Upper {
                t = t.lower(s, metric)?;
            }
        }
        Ok(t)
    }

    /// Same tensor with every slot raised.
    pub fn all_upper(&self, metric: &MetricAt) -> Result<PointTensor> {
        let mut t = self.clone();
        for s in 0..t.rank() {
            if t.slots[s] == Variance::Lower {
                t = t.raise(s, metric)?;
            }
        }
        Ok(t)
    }

    /// Squared norm by full metric contraction of the tensor with itself.
    pub fn norm2(&self, metric: &MetricAt) -> Result<f64> {
        let low = self.all_lower(metric)?;
        let up = self.all_upper(metric)?;
        Ok(low.data.iter().zip(&up.data).map(|(a, b)| a * b).sum())
    }
}

/// Metric and its inverse at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricAt {
    pub g: PointTensor,
    pub inv: PointTensor,
}

impl MetricAt {
    pub fn at(chart: &Chart, p: &[f64]) -> Result<MetricAt> {
        Ok(MetricAt {
            g: chart.metric_at(p)?,
            inv: chart.inverse_metric_at(p)?,
        })
    }

    /// From raw row-major components of a symmetric positive-definite matrix.
    pub fn from_components(dim: usize, g: Vec<f64>) -> Result<MetricAt> {
        let inv = invert_spd(dim, &g).ok_or(GeomError::NotPositiveDefinite { point: Vec::new() })?;
        Ok(MetricAt {
            g: PointTensor::from_data(dim, vec![Variance::Lower; 2], g)?,
            inv: PointTensor::from_data(dim, vec![Variance::Upper; 2], inv)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.g.dim
    }

    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.g.data[i * self.g.dim + j]
    }

    pub fn inv(&self, i: usize, j: usize) -> f64 {
        self.inv.data[i * self.g.dim + j]
    }
}

/// A tensor-valued function of the chart coordinates.
pub trait NumericField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, p: &[f64]) -> Result<PointTensor>;
}

/// Wraps a closure as a [`NumericField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64]) -> Result<PointTensor> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F> NumericField for FnField<F>
where
    F: Fn(&[f64]) -> Result<PointTensor> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, p: &[f64]) -> Result<PointTensor> {
        (self.f)(p)
    }
}

/// Finite-difference settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOptions {
    /// Step as a fraction of the coordinate's domain width.
    pub rel_step: f64,
    /// Combine steps h and h/2 to cancel the leading error term.
    pub richardson: bool,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions {
            rel_step: 1e-2,
            richardson: false,
        }
    }
}

impl FdOptions {
    pub fn with_richardson(self) -> Self {
        FdOptions {
            richardson: true,
            ..self
        }
    }
}

fn central4(field: &dyn NumericField, p: &[f64], k: usize, h: f64) -> Result<PointTensor> {
    let mut q = p.to_vec();
    let mut at = |dx: f64| {
        q[k] = p[k] + dx;
        field.eval(&q)
    };
    let f2 = at(2.0 * h)?;
    let f1 = at(h)?;
    let b1 = at(-h)?;
    let b2 = at(-2.0 * h)?;
    let mut out = f1.clone();
    for (i, o) in out.data.iter_mut().enumerate() {
        *o = (-f2.data[i] + 8.0 * f1.data[i] - 8.0 * b1.data[i] + b2.data[i]) / (12.0 * h);
    }
    Ok(out)
}

/// Fourth-order central difference of `field` along coordinate `k`.
pub fn fd_partial(
    field: &dyn NumericField,
    p: &[f64],
    k: usize,
    domain: &Domain,
    opts: FdOptions,
) -> Result<PointTensor> {
    if p.len() != domain.dim() || k >= domain.dim() {
        return Err(GeomError::Dimension(format!(
            "coordinate {k} / point of length {} on a {}-dimensional domain",
            p.len(),
            domain.dim()
        )));
    }
    let h = opts.rel_step * domain.width(k);
    let (lo, hi) = domain.interval(k);
    if p[k] - 2.0 * h < lo || p[k] + 2.0 * h > hi {
        return Err(GeomError::StencilOutOfDomain {
            coord: k,
            point: p.to_vec(),
        });
    }
    let coarse = central4(field, p, k, h)?;
    if !opts.richardson {
        return Ok(coarse);
    }
    let fine = central4(field, p, k, 0.5 * h)?;
    let mut out = fine.clone();
    for (i, o) in out.data.iter_mut().enumerate() {
        *o = (16.0 * fine.data[i] - coarse.data[i]) / 15.0;
    }
    Ok(out)
}

/// `∂_k F` for every coordinate `k`.
pub fn fd_gradient(
    field: &dyn NumericField,
    p: &[f64],
    domain: &Domain,
    opts: FdOptions,
) -> Result<Vec<PointTensor>> {
    (0..domain.dim())
        .map(|k| fd_partial(field, p, k, domain, opts))
        .collect()
}

/// Covariant derivative of a `(0,k)` tensor from its coordinate partials:
/// `T_{a..,j} = ∂_j T_{a..} − Σ Γ^s_{j a} T_{..s..}`, derivative slot last.
/// `gamma` has slots `[k, i, j]` for `Γ^k_ij`.
pub fn covariant_from_partials(
    t: &PointTensor,
    partials: &[PointTensor],
    gamma: &PointTensor,
) -> Result<PointTensor> {
    let m = t.dim.max(gamma.dim);
    if t.slots.iter().any(|v| *v == Variance::Upper) {
        return Err(GeomError::SlotMismatch("covariant derivative expects a (0,k) tensor".into()));
    }
    if partials.len() != m || partials.iter().any(|d| d.slots != t.slots) {
        return Err(GeomError::SlotMismatch("partials do not match the tensor".into()));
    }
    let r = t.rank();
    let len = t.data.len();
    let mut out = vec![0.0; len * m];
    let mut idx = vec![0usize; r];
    let strides: Vec<usize> = (0..r).map(|s| m.pow((r - 1 - s) as u32)).collect();
    for flat in 0..len {
        let mut rem = flat;
        for s in 0..r {
            idx[s] = rem / strides[s];
            rem %= strides[s];
        }
        for j in 0..m {
            let mut v = partials[j].data[flat];
            for s in 0..r {
                let base = flat - idx[s] * strides[s];
                for q in 0..m {
                    v -= gamma.data[(q * m + j) * m + idx[s]] * t.data[base + q * strides[s]];
                }
            }
            out[flat * m + j] = v;
        }
    }
    let mut slots = t.slots.clone();
    slots.push(Variance::Lower);
    PointTensor::from_data(m, slots, out)
}

/// `∇F` at `p` for a `(0,k)` field, with the derivative slot last. Partials
/// are taken by finite differences.
pub fn covariant_derivative(
    field: &dyn NumericField,
    chart: &Chart,
    p: &[f64],
    opts: FdOptions,
) -> Result<PointTensor> {
    let t = field.eval(p)?;
    let partials = fd_gradient(field, p, chart.domain(), opts)?;
    let gamma = crate::curvature::christoffel_at(chart, p)?;
    covariant_from_partials(&t, &partials, &gamma)
}
