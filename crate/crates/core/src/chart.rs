//! Coordinate charts carrying a Riemannian metric given by expressions.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GeomError, Result};
use crate::expr::{parse, Expr, Tape};
use crate::tensorfield::{PointTensor, Variance};

/// Highest order of metric partials served by a chart.
pub const MAX_PARTIAL_ORDER: usize = 3;

/// Per-coordinate closed intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    intervals: Vec<(f64, f64)>,
}

impl Domain {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Domain> {
        for (k, &(lo, hi)) in intervals.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(GeomError::InvalidChart(format!(
                    "interval {k} is [{lo}, {hi}]"
                )));
            }
        }
        Ok(Domain { intervals })
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn interval(&self, k: usize) -> (f64, f64) {
        self.intervals[k]
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn width(&self, k: usize) -> f64 {
        let (lo, hi) = self.intervals[k];
        hi - lo
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.intervals.len()
            && p
                .iter()
                .zip(&self.intervals)
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.intervals.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }
}

/// Deterministic low-discrepancy sampler: a Halton sequence with a seeded
/// random shift, kept `margin` (fraction of width) away from the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampler {
    pub seed: u64,
    pub margin: f64,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler {
            seed: 0,
            margin: 0.05,
        }
    }
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut f = inv;
    let mut acc = 0.0;
    while i > 0 {
        acc += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    inv = acc;
    inv
}

impl Sampler {
    pub fn new(seed: u64, margin: f64) -> Sampler {
        Sampler { seed, margin }
    }

    pub fn sample(&self, domain: &Domain, count: usize) -> Vec<Vec<f64>> {
        let m = domain.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let shifts: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
        let margin = self.margin.clamp(0.0, 0.49);
        (1..=count as u64)
            .map(|i| {
                (0..m)
                    .map(|k| {
                        let base = PRIMES[k % PRIMES.len()];
                        let u = (radical_inverse(i, base) + shifts[k]).fract();
                        let (lo, hi) = domain.interval(k);
                        let w = hi - lo;
                        lo + w * (margin + (1.0 - 2.0 * margin) * u)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Numeric metric data at one point: values and partials up to `order`.
///
/// Layouts (row-major): `g[i*m+j]`, `dg[(k*m+i)*m+j] = ∂_k g_ij`,
/// `d2g[((k*m+l)*m+i)*m+j] = ∂_k∂_l g_ij`, `d3g` likewise with three
/// derivative indices in front.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub dim: usize,
    pub order: usize,
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
    pub d2g: Vec<f64>,
    pub d3g: Vec<f64>,
}

struct PartialCache {
    /// Symbolic partials for each order, indexed by (packed entry, sorted multi-index).
    exprs: Vec<Expr>,
    /// Tape over the metric entries followed by all partials up to this order.
    tape: Tape,
}

/// A coordinate chart with a symmetric metric given by [`Expr`] entries.
pub struct Chart {
    coords: Vec<String>,
    metric: Vec<Expr>,
    domain: Domain,
    cache: [OnceLock<PartialCache>; MAX_PARTIAL_ORDER + 1],
}

impl std::fmt::Debug for Chart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Chart")
            .field("coords", &self.coords)
            .field("domain", &self.domain)
            .finish()
    }
}

impl Clone for Chart {
    fn clone(&self) -> Self {
        Chart::from_parts(self.coords.clone(), self.metric.clone(), self.domain.clone())
            .expect("cloned chart was valid")
    }
}

/// Packed index of the unordered pair (i, j) in upper-triangular storage.
pub fn packed_index(m: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * m - a * (a + 1) / 2 + b
}

/// Nondecreasing multi-indices of length `order` over `m` coordinates.
pub fn sorted_multi_indices(m: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..order {
        let mut next = Vec::new();
        for idx in &out {
            let start = idx.last().copied().unwrap_or(0);
            for k in start..m {
                let mut v = idx.clone();
                v.push(k);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

impl Chart {
    /// Builds a chart from a full `m x m` matrix of entries; the entries must
    /// be structurally symmetric (`g_ij == g_ji`).
    pub fn new(coords: Vec<String>, entries: Vec<Vec<Expr>>, domain: Domain) -> Result<Chart> {
        let m = coords.len();
        if entries.len() != m || entries.iter().any(|row| row.len() != m) {
            return Err(GeomError::InvalidChart(format!(
                "metric must be {m} x {m}"
            )));
        }
        let mut packed = Vec::with_capacity(m * (m + 1) / 2);
        for i in 0..m {
            for j in i..m {
                if entries[i][j] != entries[j][i] {
                    return Err(GeomError::InvalidChart(format!(
                        "metric entries ({}, {}) and ({}, {}) differ",
                        i + 1,
                        j + 1,
                        j + 1,
                        i + 1
                    )));
                }
                packed.push(entries[i][j].clone());
            }
        }
        Chart::from_parts(coords, packed, domain)
    }

    /// Builds a chart from upper-triangular entries `g_ij`, `i <= j`, row-major.
    pub fn from_parts(coords: Vec<String>, packed: Vec<Expr>, domain: Domain) -> Result<Chart> {
        let m = coords.len();
        if m == 0 {
            return Err(GeomError::InvalidChart("no coordinates".into()));
        }
        if packed.len() != m * (m + 1) / 2 {
            return Err(GeomError::InvalidChart(format!(
                "expected {} packed metric entries, got {}",
                m * (m + 1) / 2,
                packed.len()
            )));
        }
        if domain.dim() != m {
            return Err(GeomError::InvalidChart(format!(
                "domain has {} intervals for {m} coordinates",
                domain.dim()
            )));
        }
        for (k, name) in coords.iter().enumerate() {
            if coords[..k].contains(name) {
                return Err(GeomError::InvalidChart(format!("duplicate coordinate `{name}`")));
            }
        }
        if let Some(bad) = packed.iter().filter_map(Expr::max_var).find(|&v| v >= m) {
            return Err(GeomError::InvalidChart(format!(
                "metric references coordinate index {bad} beyond dimension {m}"
            )));
        }
        Ok(Chart {
            coords,
            metric: packed,
            domain,
            cache: Default::default(),
        })
    }

    /// Diagonal metric with the given entries.
    pub fn diagonal(coords: Vec<String>, diag: Vec<Expr>, domain: Domain) -> Result<Chart> {
        let m = diag.len();
        let mut entries = vec![vec![Expr::zero(); m]; m];
        for (i, d) in diag.into_iter().enumerate() {
            entries[i][i] = d;
        }
        Chart::new(coords, entries, domain)
    }

    /// Diagonal metric from formula strings.
    pub fn from_diagonal_strs(coords: &[&str], diag: &[&str], domain: Vec<(f64, f64)>) -> Result<Chart> {
        let coords: Vec<String> = coords.iter().map(|s| s.to_string()).collect();
        let diag = diag
            .iter()
            .map(|s| parse(s, &coords).map(|e| e.simplify()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Chart::diagonal(coords, diag, Domain::new(domain)?)
    }

    /// Euclidean chart on `[-1, 1]^m` with coordinates `x1..xm`.
    pub fn euclidean(m: usize) -> Chart {
        let coords = (1..=m).map(|i| format!("x{i}")).collect();
        Chart::diagonal(
            coords,
            vec![Expr::one(); m],
            Domain::new(vec![(-1.0, 1.0); m]).expect("static domain"),
        )
        .expect("static chart")
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Symbolic entry `g_ij`.
    pub fn entry(&self, i: usize, j: usize) -> &Expr {
        &self.metric[packed_index(self.dim(), i, j)]
    }

    pub fn packed_entries(&self) -> &[Expr] {
        &self.metric
    }

    /// Parses a formula over this chart's coordinates.
    pub fn parse(&self, source: &str) -> Result<Expr> {
        Ok(parse(source, &self.coords)?)
    }

    /// Same chart with a different domain.
    pub fn with_domain(&self, domain: Domain) -> Result<Chart> {
        Chart::from_parts(self.coords.clone(), self.metric.clone(), domain)
    }

    /// Chart whose metric is `factor * g` entrywise.
    pub fn conformal(&self, factor: &Expr) -> Result<Chart> {
        let packed = self
            .metric
            .iter()
            .map(|e| Expr::mul(factor.clone(), e.clone()))
            .collect();
        Chart::from_parts(self.coords.clone(), packed, self.domain.clone())
    }

    fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim() {
            return Err(GeomError::Dimension(format!(
                "point has {} coordinates, chart has {}",
                p.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn cache(&self, order: usize) -> &PartialCache {
        self.cache[order].get_or_init(|| {
            let m = self.dim();
            let exprs: Vec<Expr> = if order == 0 {
                Vec::new()
            } else {
                let prev = &self.cache(order - 1).exprs;
                let prev_idx = sorted_multi_indices(m, order - 1);
                let idx = sorted_multi_indices(m, order);
                let mut out = Vec::with_capacity(self.metric.len() * idx.len());
                for (e, base) in self.metric.iter().enumerate() {
                    for mi in &idx {
                        let (head, last) = mi.split_at(order - 1);
                        let parent = if order == 1 {
                            base.clone()
                        } else {
                            let pos = prev_idx
                                .iter()
                                .position(|p| p.as_slice() == head)
                                .expect("prefix of sorted index is sorted");
                            prev[e * prev_idx.len() + pos].clone()
                        };
                        out.push(parent.diff(last[0]));
                    }
                }
                out
            };
            let mut all: Vec<Expr> = self.metric.clone();
            for o in 1..order {
                all.extend(self.cache(o).exprs.iter().cloned());
            }
            all.extend(exprs.iter().cloned());
            PartialCache {
                tape: Tape::compile(&all),
                exprs,
            }
        })
    }

    /// Symbolic partials of the given order, laid out as
    /// `[packed entry][sorted multi-index]`.
    pub fn partial_exprs(&self, order: usize) -> &[Expr] {
        assert!(order <= MAX_PARTIAL_ORDER, "partials beyond order 3 are not cached");
        &self.cache(order).exprs
    }

    /// Freshly differentiated partial `∂_{idx} g_ij` (no cache involved).
    pub fn fresh_partial(&self, i: usize, j: usize, idx: &[usize]) -> Expr {
        idx.iter()
            .fold(self.entry(i, j).clone(), |acc, &k| acc.diff(k))
    }

    /// Evaluates the metric and its partials up to `order` at `p`.
    pub fn metric_jet_at(&self, p: &[f64], order: usize) -> Result<MetricJet> {
        assert!(order <= MAX_PARTIAL_ORDER, "partials beyond order 3 are not cached");
        self.check_point(p)?;
        let m = self.dim();
        let cache = self.cache(order);
        let mut vals = Vec::new();
        cache.tape.eval_into(p, &mut vals)?;
        if let Some(bad) = vals.iter().position(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite {
                what: format!("metric jet component {bad}"),
                point: p.to_vec(),
            });
        }
        let npacked = self.metric.len();
        let mut jet = MetricJet {
            dim: m,
            order,
            g: vec![0.0; m * m],
            dg: Vec::new(),
            d2g: Vec::new(),
            d3g: Vec::new(),
        };
        for i in 0..m {
            for j in 0..m {
                jet.g[i * m + j] = vals[packed_index(m, i, j)];
            }
        }
        let mut offset = npacked;
        for o in 1..=order {
            let idx = sorted_multi_indices(m, o);
            let block = &vals[offset..offset + npacked * idx.len()];
            offset += npacked * idx.len();
            let mut full = vec![0.0; m.pow(o as u32 + 2)];
            for_each_multi_index(m, o, |d| {
                let mut sorted = d.to_vec();
                sorted.sort_unstable();
                let pos = idx.iter().position(|x| *x == sorted).expect("sorted index");
                let mut base = 0;
                for &k in d {
                    base = base * m + k;
                }
                for i in 0..m {
                    for j in 0..m {
                        full[(base * m + i) * m + j] =
                            block[packed_index(m, i, j) * idx.len() + pos];
                    }
                }
            });
            match o {
                1 => jet.dg = full,
                2 => jet.d2g = full,
                _ => jet.d3g = full,
            }
        }
        Ok(jet)
    }

    /// `g_ij(p)`; fails when the metric is not positive definite there.
    pub fn metric_at(&self, p: &[f64]) -> Result<PointTensor> {
        let jet = self.metric_jet_at(p, 0)?;
        let m = self.dim();
        if DMatrix::from_row_slice(m, m, &jet.g).cholesky().is_none() {
            return Err(GeomError::NotPositiveDefinite { point: p.to_vec() });
        }
        PointTensor::from_data(m, vec![Variance::Lower; 2], jet.g)
    }

    /// `g^ij(p)`.
    pub fn inverse_metric_at(&self, p: &[f64]) -> Result<PointTensor> {
        let g = self.metric_at(p)?;
        let inv = invert_spd(self.dim(), g.data()).ok_or_else(|| GeomError::NotPositiveDefinite {
            point: p.to_vec(),
        })?;
        PointTensor::from_data(self.dim(), vec![Variance::Upper; 2], inv)
    }

    /// `∂g` (order 1, slots `[k, i, j]`), `∂∂g` (order 2) or `∂∂∂g` (order 3).
    pub fn metric_partials_at(&self, p: &[f64], order: usize) -> Result<PointTensor> {
        if order == 0 || order > MAX_PARTIAL_ORDER {
            return Err(GeomError::Dimension(format!(
                "metric partials of order {order} are not available (1..=3)"
            )));
        }
        let jet = self.metric_jet_at(p, order)?;
        let data = match order {
            1 => jet.dg,
            2 => jet.d2g,
            _ => jet.d3g,
        };
        PointTensor::from_data(self.dim(), vec![Variance::Lower; order + 2], data)
    }

    /// Symbolic determinant of the metric.
    pub fn determinant_expr(&self) -> Expr {
        let m = self.dim();
        let rows: Vec<usize> = (0..m).collect();
        det_expr(self, &rows, &rows)
    }

    /// Symbolic inverse metric `g^ij` (full `m x m`, row-major), by cofactors.
    pub fn inverse_metric_exprs(&self) -> Vec<Expr> {
        let m = self.dim();
        if (0..m).all(|i| (0..m).all(|j| i == j || self.entry(i, j).as_const() == Some(0.0))) {
            let mut out = vec![Expr::zero(); m * m];
            for i in 0..m {
                out[i * m + i] = Expr::div(Expr::one(), self.entry(i, i).clone());
            }
            return out;
        }
        let det = self.determinant_expr();
        let mut out = vec![Expr::zero(); m * m];
        for i in 0..m {
            for j in 0..m {
                let rows: Vec<usize> = (0..m).filter(|&r| r != j).collect();
                let cols: Vec<usize> = (0..m).filter(|&c| c != i).collect();
                let minor = det_expr(self, &rows, &cols);
                let cof = if (i + j) % 2 == 0 { minor } else { Expr::neg(minor) };
                out[i * m + j] = Expr::div(cof, det.clone());
            }
        }
        out
    }

    /// Symbolic `|∇f|² = g^ij ∂_i f ∂_j f`.
    pub fn grad_norm2_expr(&self, f: &Expr) -> Expr {
        let m = self.dim();
        let inv = self.inverse_metric_exprs();
        let d: Vec<Expr> = (0..m).map(|i| f.diff(i)).collect();
        Expr::sum((0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| {
            Expr::mul(inv[i * m + j].clone(), Expr::mul(d[i].clone(), d[j].clone()))
        }))
    }

    /// Symbolic Laplace–Beltrami operator
    /// `Δf = ∂_i(g^ij ∂_j f) + g^ij ∂_j f ∂_i log √det g`.
    pub fn laplacian_expr(&self, f: &Expr) -> Expr {
        let m = self.dim();
        let inv = self.inverse_metric_exprs();
        let half_log_det = Expr::mul(Expr::constant(0.5), self.determinant_expr().log());
        let d: Vec<Expr> = (0..m).map(|i| f.diff(i)).collect();
        let mut terms = Vec::new();
        for i in 0..m {
            let flux = Expr::sum((0..m).map(|j| Expr::mul(inv[i * m + j].clone(), d[j].clone())));
            terms.push(flux.diff(i));
            terms.push(Expr::mul(flux, half_log_det.diff(i)));
        }
        Expr::sum(terms)
    }

    /// Checks positive definiteness at each point.
    pub fn check_positive_definite(&self, points: &[Vec<f64>]) -> Result<()> {
        for p in points {
            self.metric_at(p)?;
        }
        Ok(())
    }
}

fn det_expr(chart: &Chart, rows: &[usize], cols: &[usize]) -> Expr {
    match rows.len() {
        0 => Expr::one(),
        1 => chart.entry(rows[0], cols[0]).clone(),
        _ => {
            let mut terms = Vec::new();
            for (pos, &c) in cols.iter().enumerate() {
                let e = chart.entry(rows[0], c);
                if e.as_const() == Some(0.0) {
                    continue;
                }
                let sub_cols: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
                let term = Expr::mul(e.clone(), det_expr(chart, &rows[1..], &sub_cols));
                terms.push(if pos % 2 == 0 { term } else { Expr::neg(term) });
            }
            Expr::sum(terms)
        }
    }
}

/// Calls `f` for every multi-index in `0..m` of the given length, in
/// row-major order.
pub fn for_each_multi_index(m: usize, len: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; len];
    let total = m.pow(len as u32);
    for _ in 0..total {
        f(&idx);
        for slot in (0..len).rev() {
            idx[slot] += 1;
            if idx[slot] < m {
                break;
            }
            idx[slot] = 0;
        }
    }
}

/// Inverse of a symmetric positive-definite row-major matrix.
pub fn invert_spd(m: usize, data: &[f64]) -> Option<Vec<f64>> {
    let chol = DMatrix::from_row_slice(m, m, data).cholesky()?;
    let inv = chol.inverse();
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] = 0.5 * (inv[(i, j)] + inv[(j, i)]);
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere3() -> Chart {
        Chart::from_diagonal_strs(
            &["a", "b", "c"],
            &["1", "sin(a)^2", "sin(a)^2*sin(b)^2"],
            vec![(0.3, 2.8), (0.3, 2.8), (0.3, 2.8)],
        )
        .unwrap()
    }

    #[test]
    fn euclidean_metric_is_identity() {
        let c = Chart::euclidean(3);
        let g = c.metric_at(&[0.1, -0.4, 0.9]).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let inv = c.inverse_metric_at(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(inv.data(), g.data());
    }

    #[test]
    fn sphere_metric_at_equator() {
        let c = sphere3();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let g = c.metric_at(&[half_pi, 1.0, 2.0]).unwrap();
        let s2 = 1.0f64.sin().powi(2);
        assert_eq!(g.get(&[0, 0]), 1.0);
        assert_eq!(g.get(&[1, 1]), 1.0);
        assert!((g.get(&[2, 2]) - s2).abs() < 1e-15);
        assert_eq!(g.get(&[0, 2]), 0.0);
    }

    #[test]
    fn warped_metric_at_zero_is_block_diagonal() {
        let c = Chart::from_diagonal_strs(
            &["r", "u", "v"],
            &["1", "cosh(r)^2", "cosh(r)^2*sin(u)^2"],
            vec![(-0.5, 0.5), (0.3, 2.8), (0.3, 2.8)],
        )
        .unwrap();
        let g = c.metric_at(&[0.0, 1.2, 0.7]).unwrap();
        assert_eq!(g.get(&[0, 0]), 1.0);
        assert_eq!(g.get(&[1, 1]), 1.0);
        assert!((g.get(&[2, 2]) - 1.2f64.sin().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn inverse_of_diag() {
        let c = Chart::from_diagonal_strs(&["x", "y"], &["1", "4"], vec![(-1.0, 1.0); 2]).unwrap();
        let inv = c.inverse_metric_at(&[0.0, 0.0]).unwrap();
        assert_eq!(inv.data(), &[1.0, 0.0, 0.0, 0.25]);
    }

    #[test]
    fn inverse_of_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 4;
        let a: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coords: Vec<String> = (0..m).map(|i| format!("x{i}")).collect();
        let mut entries = vec![vec![Expr::zero(); m]; m];
        for i in 0..m {
            for j in 0..m {
                let mut v: f64 = (0..m).map(|k| a[i * m + k] * a[j * m + k]).sum();
                if i == j {
                    v += 0.5;
                }
                entries[i][j] = Expr::constant(v);
            }
        }
        let c = Chart::new(coords, entries, Domain::new(vec![(-1.0, 1.0); m]).unwrap()).unwrap();
        let p = [0.0; 4];
        let g = c.metric_at(&p).unwrap();
        let inv = c.inverse_metric_at(&p).unwrap();
        for i in 0..m {
            for j in 0..m {
                let s: f64 = (0..m).map(|k| g.get(&[i, k]) * inv.get(&[k, j])).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((s - target).abs() <= 1e-12, "({i},{j}) -> {s}");
            }
        }
    }

    #[test]
    fn indefinite_metric_is_reported() {
        let c = Chart::from_diagonal_strs(&["x", "y", "z"], &["1", "x", "1"], vec![(-1.0, 1.0); 3])
            .unwrap();
        assert!(matches!(
            c.metric_at(&[-0.5, 0.0, 0.0]),
            Err(GeomError::NotPositiveDefinite { .. })
        ));
        assert!(c.metric_at(&[0.5, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn flat_partials_vanish() {
        let c = Chart::euclidean(3);
        for order in 1..=3 {
            let d = c.metric_partials_at(&[0.2, 0.3, 0.4], order).unwrap();
            assert!(d.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn exponential_entry_partial() {
        let c = Chart::from_diagonal_strs(&["r", "s"], &["exp(2*r)", "1"], vec![(-1.0, 1.0); 2]).unwrap();
        let d = c.metric_partials_at(&[0.0, 0.0], 1).unwrap();
        assert_eq!(d.get(&[0, 0, 0]), 2.0);
        assert_eq!(d.get(&[1, 0, 0]), 0.0);
    }

    #[test]
    fn partials_symmetric_and_match_fresh() {
        let c = Chart::new(
            vec!["x".into(), "y".into(), "z".into()],
            {
                let cs = ["x", "y", "z"];
                let e = |s: &str| parse(s, &cs).unwrap();
                vec![
                    vec![e("1 + x^2*y"), e("sin(x*z)/5"), Expr::zero()],
                    vec![e("sin(x*z)/5"), e("exp(y - z)"), e("x*y/10")],
                    vec![Expr::zero(), e("x*y/10"), e("2 + cos(x)")],
                ]
            },
            Domain::new(vec![(-0.5, 0.5); 3]).unwrap(),
        )
        .unwrap();
        let p = [0.1, -0.2, 0.3];
        let d2 = c.metric_partials_at(&p, 2).unwrap();
        let d3 = c.metric_partials_at(&p, 3).unwrap();
        for k in 0..3 {
            for l in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        assert_eq!(d2.get(&[k, l, i, j]), d2.get(&[l, k, i, j]));
                        assert_eq!(d2.get(&[k, l, i, j]), d2.get(&[k, l, j, i]));
                        for n in 0..3 {
                            assert_eq!(d3.get(&[k, l, n, i, j]), d3.get(&[n, k, l, i, j]));
                        }
                    }
                }
            }
        }
        // Cached partials equal freshly differentiated ones bit-for-bit.
        let idx = sorted_multi_indices(3, 3);
        let cached = c.partial_exprs(3);
        for i in 0..3 {
            for j in i..3 {
                for (pos, mi) in idx.iter().enumerate() {
                    let a = cached[packed_index(3, i, j) * idx.len() + pos].eval(&p).unwrap();
                    let b = c.fresh_partial(i, j, mi).eval(&p).unwrap();
                    assert_eq!(a.to_bits(), b.to_bits());
                    assert_eq!(d3.get(&[mi[0], mi[1], mi[2], i, j]).to_bits(), a.to_bits());
                }
            }
        }
    }

    #[test]
    fn symbolic_inverse_and_laplacian() {
        let cs = ["x", "y"];
        let e = |s: &str| parse(s, &cs).unwrap();
        let c = Chart::new(
            vec!["x".into(), "y".into()],
            vec![vec![e("2 + x^2"), e("x*y/4")], vec![e("x*y/4"), e("1 + y^2")]],
            Domain::new(vec![(-1.0, 1.0); 2]).unwrap(),
        )
        .unwrap();
        let p = [0.3, -0.6];
        let inv = c.inverse_metric_at(&p).unwrap();
        for (k, ex) in c.inverse_metric_exprs().iter().enumerate() {
            assert!((ex.eval(&p).unwrap() - inv.data()[k]).abs() < 1e-14);
        }
        // polar coordinates: Δ(r^2) = 4 in the plane
        let polar = Chart::from_diagonal_strs(&["r", "t"], &["1", "r^2"], vec![(0.5, 2.0), (0.0, 3.0)]).unwrap();
        let lap = polar.laplacian_expr(&polar.parse("r^2").unwrap());
        assert!((lap.eval(&[1.3, 0.4]).unwrap() - 4.0).abs() < 1e-12);
        let n2 = polar.grad_norm2_expr(&polar.parse("r*t").unwrap());
        assert!((n2.eval(&[2.0, 0.5]).unwrap() - (0.25 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn sampler_is_deterministic_and_inside_margin() {
        let d = Domain::new(vec![(0.0, 1.0), (-2.0, 2.0), (0.3, 2.8)]).unwrap();
        let s = Sampler::new(42, 0.05);
        let a = s.sample(&d, 64);
        let b = s.sample(&d, 64);
        assert_eq!(a, b);
        for p in &a {
            for (k, x) in p.iter().enumerate() {
                let (lo, hi) = d.interval(k);
                let w = hi - lo;
                assert!(*x >= lo + 0.05 * w - 1e-12 && *x <= hi - 0.05 * w + 1e-12);
            }
        }
        assert_ne!(a, Sampler::new(43, 0.05).sample(&d, 64));
    }

    #[test]
    fn rejects_bad_charts() {
        let d = Domain::new(vec![(-1.0, 1.0); 2]).unwrap();
        let coords = vec!["x".to_string(), "y".to_string()];
        let asym = vec![
            vec![Expr::one(), Expr::var(0)],
            vec![Expr::zero(), Expr::one()],
        ];
        assert!(Chart::new(coords.clone(), asym, d.clone()).is_err());
        assert!(Domain::new(vec![(1.0, 0.0)]).is_err());
        assert!(Chart::from_parts(vec!["x".into(), "x".into()], vec![Expr::one(); 3], d).is_err());
    }
}
