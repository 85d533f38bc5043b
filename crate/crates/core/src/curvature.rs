//! Curvature at a point: Christoffel symbols through Bach, plus the
//! commutation, Bianchi and Cotton identity suite.
//!
//! Index conventions: `R_ijkt` with `R_ij = R_itjt` (traced through `g^-1`);
//! on the unit sphere `R_ijkt = g_ik g_jt - g_it g_jk`. Covariant derivative
//! slots come last, so `R_ij,k = ∇_k R_ij`.

use crate::chart::{for_each_multi_index, sorted_multi_indices, Chart};
use crate::error::{GeomError, Result};
use crate::expr::{Expr, Tape};
use crate::report::{scaled, CheckReport, Observation, Tally, Tolerances};
use crate::tensorfield::{
    covariant_derivative, covariant_from_partials, FdOptions, FnField, MetricAt, PointTensor,
    Variance,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const L: Variance = Variance::Lower;

/// Finite-difference settings used for derivatives of curvature fields.
pub fn curvature_fd() -> FdOptions {
    FdOptions {
        rel_step: 4e-3,
        richardson: true,
    }
}

fn require_dim(m: usize, min: usize, what: &str) -> Result<()> {
    if m < min {
        return Err(GeomError::Dimension(format!("{what} needs dimension >= {min}, got {m}")));
    }
    Ok(())
}

/// `Γ^k_ij` with slots `[k, i, j]`.
pub fn christoffel_at(chart: &Chart, p: &[f64]) -> Result<PointTensor> {
    let m = chart.dim();
    let jet = chart.metric_jet_at(p, 1)?;
    let metric = MetricAt::from_components(m, jet.g.clone())
        .map_err(|_| GeomError::NotPositiveDefinite { point: p.to_vec() })?;
    let gam1 = first_kind(m, &jet.dg);
    let gi = metric.inv.data();
    let mut out = vec![0.0; m * m * m];
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                out[(k * m + i) * m + j] = (0..m).map(|s| gi[k * m + s] * gam1[(s * m + i) * m + j]).sum();
            }
        }
    }
    PointTensor::from_data(m, vec![Variance::Upper, L, L], out)
}

fn first_kind(m: usize, dg: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * m * m];
    for s in 0..m {
        for i in 0..m {
            for j in 0..m {
                out[(s * m + i) * m + j] =
                    0.5 * (dg[(i * m + s) * m + j] + dg[(j * m + s) * m + i] - dg[(s * m + i) * m + j]);
            }
        }
    }
    out
}

/// Analytic first covariant derivatives of the curvature.
#[derive(Debug, Clone)]
pub struct CurvatureDerivatives {
    /// `R_ijkt,n`
    pub riemann: PointTensor,
    /// `R_ij,k`
    pub ricci: PointTensor,
    /// `S_k`
    pub scalar: PointTensor,
}

/// Curvature at a point computed from symbolic metric partials.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    pub point: Vec<f64>,
    pub metric: MetricAt,
    /// `Γ^k_ij`, slots `[k, i, j]`.
    pub christoffel: PointTensor,
    /// `∂_l Γ^k_ij`, stored `[l][k][i][j]`.
    pub christoffel_partials: Vec<f64>,
    pub riemann: PointTensor,
    pub ricci: PointTensor,
    pub scalar: f64,
    pub derivatives: Option<CurvatureDerivatives>,
}

impl LocalGeometry {
    /// Curvature through order-2 metric partials.
    pub fn at(chart: &Chart, p: &[f64]) -> Result<LocalGeometry> {
        LocalGeometry::build(chart, p, false)
    }

    /// Also computes `∇Rm`, `∇Ric`, `∇S` by the chain rule (order-3 partials).
    pub fn with_derivatives(chart: &Chart, p: &[f64]) -> Result<LocalGeometry> {
        LocalGeometry::build(chart, p, true)
    }

    fn build(chart: &Chart, p: &[f64], deriv: bool) -> Result<LocalGeometry> {
        let m = chart.dim();
        require_dim(m, 2, "curvature")?;
        let jet = chart.metric_jet_at(p, if deriv { 3 } else { 2 })?;
        let metric = MetricAt::from_components(m, jet.g.clone())
            .map_err(|_| GeomError::NotPositiveDefinite { point: p.to_vec() })?;
        let g = &jet.g;
        let gi = metric.inv.data().to_vec();
        let (dg, d2g) = (&jet.dg, &jet.d2g);
        let i3 = |a: usize, b: usize, c: usize| (a * m + b) * m + c;
        let i4 = |a: usize, b: usize, c: usize, d: usize| ((a * m + b) * m + c) * m + d;
        let i5 = |a: usize, b: usize, c: usize, d: usize, e: usize| (((a * m + b) * m + c) * m + d) * m + e;

        let mut dgi = vec![0.0; m * m * m];
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    let mut acc = 0.0;
                    for a in 0..m {
                        for b in 0..m {
                            acc += gi[i * m + a] * dg[i3(k, a, b)] * gi[b * m + j];
                        }
                    }
                    dgi[i3(k, i, j)] = -acc;
                }
            }
        }
        let gam1 = first_kind(m, dg);
        let mut dgam1 = vec![0.0; m.pow(4)];
        for l in 0..m {
            for s in 0..m {
                for i in 0..m {
                    for j in 0..m {
                        dgam1[i4(l, s, i, j)] =
                            0.5 * (d2g[i4(l, i, s, j)] + d2g[i4(l, j, s, i)] - d2g[i4(l, s, i, j)]);
                    }
                }
            }
        }
        let mut gamma = vec![0.0; m * m * m];
        let mut dgamma = vec![0.0; m.pow(4)];
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    gamma[i3(k, i, j)] = (0..m).map(|s| gi[k * m + s] * gam1[i3(s, i, j)]).sum();
                    for l in 0..m {
                        dgamma[i4(l, k, i, j)] = (0..m)
                            .map(|s| dgi[i3(l, k, s)] * gam1[i3(s, i, j)] + gi[k * m + s] * dgam1[i4(l, s, i, j)])
                            .sum();
                    }
                }
            }
        }
        // R^a_bcd = ∂_c Γ^a_db − ∂_d Γ^a_cb + Γ^a_ce Γ^e_db − Γ^a_de Γ^e_cb
        let mut rup = vec![0.0; m.pow(4)];
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for d in 0..m {
                        let mut v = dgamma[i4(c, a, d, b)] - dgamma[i4(d, a, c, b)];
                        for e in 0..m {
                            v += gamma[i3(a, c, e)] * gamma[i3(e, d, b)] - gamma[i3(a, d, e)] * gamma[i3(e, c, b)];
                        }
                        rup[i4(a, b, c, d)] = v;
                    }
                }
            }
        }
        let mut riem = vec![0.0; m.pow(4)];
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for d in 0..m {
                        riem[i4(a, b, c, d)] = (0..m).map(|e| g[a * m + e] * rup[i4(e, b, c, d)]).sum();
                    }
                }
            }
        }
        let ric = trace_13(m, &gi, &riem);
        let scalar: f64 = (0..m * m).map(|x| gi[x] * ric[x]).sum();

        let christoffel = PointTensor::from_data(m, vec![Variance::Upper, L, L], gamma.clone())?;
        let riemann = PointTensor::from_data(m, vec![L; 4], riem)?;
        let derivatives = if deriv {
            let d3g = &jet.d3g;
            let mut d2gi = vec![0.0; m.pow(4)];
            for n in 0..m {
                for l in 0..m {
                    for i in 0..m {
                        for j in 0..m {
                            let mut acc = 0.0;
                            for a in 0..m {
                                for b in 0..m {
                                    acc += dgi[i3(n, i, a)] * dg[i3(l, a, b)] * gi[b * m + j]
                                        + gi[i * m + a] * d2g[i4(n, l, a, b)] * gi[b * m + j]
                                        + gi[i * m + a] * dg[i3(l, a, b)] * dgi[i3(n, b, j)];
                                }
                            }
                            d2gi[i4(n, l, i, j)] = -acc;
                        }
                    }
                }
            }
            let mut d2gamma = vec![0.0; m.pow(5)];
            for n in 0..m {
                for l in 0..m {
                    for k in 0..m {
                        for i in 0..m {
                            for j in 0..m {
                                let mut v = 0.0;
                                for s in 0..m {
                                    let d2g1 = 0.5
                                        * (d3g[i5(n, l, i, s, j)] + d3g[i5(n, l, j, s, i)] - d3g[i5(n, l, s, i, j)]);
                                    v += d2gi[i4(n, l, k, s)] * gam1[i3(s, i, j)]
                                        + dgi[i3(l, k, s)] * dgam1[i4(n, s, i, j)]
                                        + dgi[i3(n, k, s)] * dgam1[i4(l, s, i, j)]
                                        + gi[k * m + s] * d2g1;
                                }
                                d2gamma[i5(n, l, k, i, j)] = v;
                            }
                        }
                    }
                }
            }
            let mut partials = Vec::with_capacity(m);
            for n in 0..m {
                let mut drup = vec![0.0; m.pow(4)];
                for a in 0..m {
                    for b in 0..m {
                        for c in 0..m {
                            for d in 0..m {
                                let mut v = d2gamma[i5(n, c, a, d, b)] - d2gamma[i5(n, d, a, c, b)];
                                for e in 0..m {
                                    v += dgamma[i4(n, a, c, e)] * gamma[i3(e, d, b)]
                                        + gamma[i3(a, c, e)] * dgamma[i4(n, e, d, b)]
                                        - dgamma[i4(n, a, d, e)] * gamma[i3(e, c, b)]
                                        - gamma[i3(a, d, e)] * dgamma[i4(n, e, c, b)];
                                }
                                drup[i4(a, b, c, d)] = v;
                            }
                        }
                    }
                }
                let mut driem = vec![0.0; m.pow(4)];
                for a in 0..m {
                    for b in 0..m {
                        for c in 0..m {
                            for d in 0..m {
                                driem[i4(a, b, c, d)] = (0..m)
                                    .map(|e| dg[i3(n, a, e)] * rup[i4(e, b, c, d)] + g[a * m + e] * drup[i4(e, b, c, d)])
                                    .sum();
                            }
                        }
                    }
                }
                partials.push(PointTensor::from_data(m, vec![L; 4], driem)?);
            }
            let nabla_riem = covariant_from_partials(&riemann, &partials, &christoffel)?;
            // ∇Ric_bd,n = g^ac ∇R_abcd,n
            let nr = nabla_riem.data();
            let mut nric = vec![0.0; m * m * m];
            for b in 0..m {
                for d in 0..m {
                    for n in 0..m {
                        let mut acc = 0.0;
                        for a in 0..m {
                            for c in 0..m {
                                acc += gi[a * m + c] * nr[i5(a, b, c, d, n)];
                            }
                        }
                        nric[i3(b, d, n)] = acc;
                    }
                }
            }
            let ns: Vec<f64> = (0..m)
                .map(|n| {
                    let mut acc = 0.0;
                    for b in 0..m {
                        for d in 0..m {
                            acc += gi[b * m + d] * nric[i3(b, d, n)];
                        }
                    }
                    acc
                })
                .collect();
            Some(CurvatureDerivatives {
                riemann: nabla_riem,
                ricci: PointTensor::from_data(m, vec![L; 3], nric)?,
                scalar: PointTensor::from_data(m, vec![L], ns)?,
            })
        } else {
            None
        };
        Ok(LocalGeometry {
            point: p.to_vec(),
            metric,
            christoffel,
            christoffel_partials: dgamma,
            riemann,
            ricci: PointTensor::from_data(m, vec![L; 2], ric)?,
            scalar,
            derivatives,
        })
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    fn derivs(&self) -> Result<&CurvatureDerivatives> {
        self.derivatives
            .as_ref()
            .ok_or_else(|| GeomError::Dimension("curvature derivatives were not computed".into()))
    }

    /// `A = Ric − S/(2(m−1)) g`
    pub fn schouten(&self) -> Result<PointTensor> {
        let m = self.dim();
        require_dim(m, 3, "Schouten tensor")?;
        self.ricci.axpy(-self.scalar / (2.0 * (m as f64 - 1.0)), &self.metric.g)
    }

    /// `E = Ric − (S/2) g`
    pub fn einstein(&self) -> Result<PointTensor> {
        self.ricci.axpy(-0.5 * self.scalar, &self.metric.g)
    }

    /// Weyl tensor from Riemann, Ricci and S.
    pub fn weyl(&self) -> Result<PointTensor> {
        let m = self.dim();
        require_dim(m, 3, "Weyl tensor")?;
        Ok(weyl_from(m, &self.riemann, &self.ricci, self.scalar, &self.metric.g))
    }

    /// `∇A` with the derivative slot last.
    pub fn nabla_schouten(&self) -> Result<PointTensor> {
        let m = self.dim();
        require_dim(m, 3, "Schouten tensor")?;
        let d = self.derivs()?;
        Ok(nabla_schouten_from(m, &d.ricci, &d.scalar, &self.metric.g))
    }

    /// `C_ijk = A_ij,k − A_ik,j`
    pub fn cotton(&self) -> Result<PointTensor> {
        let m = self.dim();
        let na = self.nabla_schouten()?;
        Ok(PointTensor::from_fn(m, vec![L; 3], |x| {
            na.get(&[x[0], x[1], x[2]]) - na.get(&[x[0], x[2], x[1]])
        }))
    }

    /// `f_i, f_ij, f_ijk` of a symbolic function, via the chain rule.
    pub fn function_jet(&self, f: &ScalarFunction) -> Result<FunctionJet> {
        FunctionJet::new(self, f)
    }
}

/// `t_bd = g^ac T_abcd`
fn trace_13(m: usize, gi: &[f64], riem: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for b in 0..m {
        for d in 0..m {
            let mut acc = 0.0;
            for a in 0..m {
                for c in 0..m {
                    acc += gi[a * m + c] * riem[((a * m + b) * m + c) * m + d];
                }
            }
            out[b * m + d] = acc;
        }
    }
    out
}

fn weyl_from(m: usize, riem: &PointTensor, ric: &PointTensor, s: f64, g: &PointTensor) -> PointTensor {
    let mf = m as f64;
    let c1 = 1.0 / (mf - 2.0);
    let c2 = s / ((mf - 1.0) * (mf - 2.0));
    let (r, g) = (ric.data(), g.data());
    PointTensor::from_fn(m, vec![L; 4], |x| {
        let (i, j, k, t) = (x[0], x[1], x[2], x[3]);
        let ric_part =
            r[i * m + k] * g[j * m + t] - r[i * m + t] * g[j * m + k] + r[j * m + t] * g[i * m + k] - r[j * m + k] * g[i * m + t];
        let g_part = g[i * m + k] * g[j * m + t] - g[i * m + t] * g[j * m + k];
        riem.get(x) - c1 * ric_part + c2 * g_part
    })
}

fn nabla_schouten_from(m: usize, nric: &PointTensor, ns: &PointTensor, g: &PointTensor) -> PointTensor {
    let c = 1.0 / (2.0 * (m as f64 - 1.0));
    PointTensor::from_fn(m, vec![L; 3], |x| nric.get(x) - c * ns.data()[x[2]] * g.get(&[x[0], x[1]]))
}

/// Kulkarni–Nomizu product
/// `(h ⊘ k)_ijkl = h_ik k_jl + h_jl k_ik − h_il k_jk − h_jk k_il`.
pub fn kulkarni_nomizu(h: &PointTensor, k: &PointTensor) -> PointTensor {
    let m = h.dim();
    PointTensor::from_fn(m, vec![L; 4], |x| {
        let (i, j, a, b) = (x[0], x[1], x[2], x[3]);
        h.get(&[i, a]) * k.get(&[j, b]) + h.get(&[j, b]) * k.get(&[i, a])
            - h.get(&[i, b]) * k.get(&[j, a])
            - h.get(&[j, a]) * k.get(&[i, b])
    })
}

/// Derivatives of a symbolic scalar function at a point.
#[derive(Debug, Clone)]
pub struct FunctionJet {
    pub value: f64,
    /// `f_i`
    pub grad: PointTensor,
    /// `f_ij`
    pub hess: PointTensor,
    /// `f_ijk = ∇_k f_ij`
    pub third: PointTensor,
    /// coordinate partials `∂_i∂_j f`
    pub partial2: Vec<f64>,
}

/// A symbolic scalar function with its partials up to order 3 compiled to
/// one tape.
#[derive(Debug, Clone)]
pub struct ScalarFunction {
    expr: Expr,
    dim: usize,
    tape: Tape,
}

impl ScalarFunction {
    pub fn new(expr: Expr, dim: usize) -> ScalarFunction {
        let mut all = vec![expr.clone()];
        let d1: Vec<Expr> = (0..dim).map(|i| expr.diff(i)).collect();
        all.extend(d1.iter().cloned());
        let idx2 = sorted_multi_indices(dim, 2);
        let d2: Vec<Expr> = idx2.iter().map(|ij| d1[ij[0]].diff(ij[1])).collect();
        all.extend(d2.iter().cloned());
        for ijk in sorted_multi_indices(dim, 3) {
            let pos = idx2.iter().position(|x| x[..] == ijk[..2]).expect("sorted prefix");
            all.push(d2[pos].diff(ijk[2]));
        }
        ScalarFunction {
            tape: Tape::compile(&all),
            expr,
            dim,
        }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, p: &[f64]) -> Result<f64> {
        Ok(self.expr.eval(p)?)
    }

    /// Value, `∂_i f`, `∂_i∂_j f` (m*m) and `∂_i∂_j∂_k f` (m^3).
    pub fn partials(&self, p: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let m = self.dim;
        let mut vals = Vec::new();
        self.tape.eval_into(p, &mut vals)?;
        if let Some(bad) = vals.iter().position(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite {
                what: format!("function partial {bad}"),
                point: p.to_vec(),
            });
        }
        let d1 = vals[1..1 + m].to_vec();
        let idx2 = sorted_multi_indices(m, 2);
        let base3 = 1 + m + idx2.len();
        let idx3 = sorted_multi_indices(m, 3);
        let mut d2 = vec![0.0; m * m];
        let mut d3 = vec![0.0; m * m * m];
        for_each_multi_index(m, 2, |x| {
            let mut s = x.to_vec();
            s.sort_unstable();
            d2[x[0] * m + x[1]] = vals[1 + m + idx2.iter().position(|y| *y == s).expect("index")];
        });
        for_each_multi_index(m, 3, |x| {
            let mut s = x.to_vec();
            s.sort_unstable();
            d3[(x[0] * m + x[1]) * m + x[2]] = vals[base3 + idx3.iter().position(|y| *y == s).expect("index")];
        });
        Ok((vals[0], d1, d2, d3))
    }
}

impl FunctionJet {
    fn new(geo: &LocalGeometry, f: &ScalarFunction) -> Result<FunctionJet> {
        let m = geo.dim();
        let (value, g1, partial2, d3) = f.partials(&geo.point)?;
        let gam = geo.christoffel.data();
        let dgam = &geo.christoffel_partials;
        let i3 = |a: usize, b: usize, c: usize| (a * m + b) * m + c;
        let mut hess = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                hess[i * m + j] = partial2[i * m + j] - (0..m).map(|s| gam[i3(s, i, j)] * g1[s]).sum::<f64>();
            }
        }
        // ∂_k f_ij = ∂_k∂_j∂_i f − ∂_kΓ^s_ij f_s − Γ^s_ij ∂_k∂_s f
        let mut third = vec![0.0; m * m * m];
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let mut v = d3[i3(i, j, k)];
                    for s in 0..m {
                        v -= dgam[((k * m + s) * m + i) * m + j] * g1[s] + gam[i3(s, i, j)] * partial2[k * m + s];
                        v -= gam[i3(s, k, i)] * hess[s * m + j] + gam[i3(s, k, j)] * hess[i * m + s];
                    }
                    third[i3(i, j, k)] = v;
                }
            }
        }
        Ok(FunctionJet {
            value,
            grad: PointTensor::from_data(m, vec![L], g1)?,
            hess: PointTensor::from_data(m, vec![L; 2], hess)?,
            third: PointTensor::from_data(m, vec![L; 3], third)?,
            partial2,
        })
    }

    /// `|∇f|²`
    pub fn grad_norm2(&self, metric: &MetricAt) -> f64 {
        let m = metric.dim();
        let g = self.grad.data();
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                acc += metric.inv(i, j) * g[i] * g[j];
            }
        }
        acc
    }

    /// `Δf = g^ij f_ij`
    pub fn laplacian(&self, metric: &MetricAt) -> f64 {
        let m = metric.dim();
        (0..m * m).map(|x| metric.inv.data()[x] * self.hess.data()[x]).sum()
    }

    /// `∇f` with the index raised.
    pub fn grad_up(&self, metric: &MetricAt) -> Vec<f64> {
        let m = metric.dim();
        (0..m)
            .map(|i| (0..m).map(|j| metric.inv(i, j) * self.grad.data()[j]).sum())
            .collect()
    }
}

pub fn riemann_at(chart: &Chart, p: &[f64]) -> Result<PointTensor> {
    Ok(LocalGeometry::at(chart, p)?.riemann)
}

pub fn ricci_at(chart: &Chart, p: &[f64]) -> Result<PointTensor> {
    Ok(LocalGeometry::at(chart, p)?.ricci)
}

pub fn scalar_at(chart: &Chart, p: &[f64]) -> Result<f64> {
    Ok(LocalGeometry::at(chart, p)?.scalar)
}

pub fn weyl_at(chart: &Chart, p: &[f64]) -> Result<PointTensor> {
    LocalGeometry::at(chart, p)?.weyl()
}

pub fn schouten_at(chart: &Chart, p: &[f64]) -> Result<PointTensor> {
    LocalGeometry::at(chart, p)?.schouten()
}

pub fn einstein_at(chart: &Chart, p: &[f64]) -> Result<PointTensor> {
    LocalGeometry::at(chart, p)?.einstein()
}

pub fn cotton_at(chart: &Chart, p: &[f64]) -> Result<PointTensor> {
    LocalGeometry::with_derivatives(chart, p)?.cotton()
}

/// `∇Ric` as a numeric field (chain rule at every point).
pub fn nabla_ricci_field(chart: &Chart) -> FnField<impl Fn(&[f64]) -> Result<PointTensor> + Sync + '_> {
    FnField::new(chart.dim(), move |q: &[f64]| {
        let geo = LocalGeometry::with_derivatives(chart, q)?;
        Ok(geo.derivatives.expect("requested").ricci)
    })
}

/// `Ric` as a numeric field.
pub fn ricci_field(chart: &Chart) -> FnField<impl Fn(&[f64]) -> Result<PointTensor> + Sync + '_> {
    FnField::new(chart.dim(), move |q: &[f64]| ricci_at(chart, q))
}

/// `W` as a numeric field.
pub fn weyl_field(chart: &Chart) -> FnField<impl Fn(&[f64]) -> Result<PointTensor> + Sync + '_> {
    FnField::new(chart.dim(), move |q: &[f64]| weyl_at(chart, q))
}

/// `C_ijk = ((m−2)/(m−3)) W_tikj,t`, with `∇W` by finite differences.
pub fn cotton_from_weyl_div_at(chart: &Chart, p: &[f64]) -> Result<PointTensor> {
    let m = chart.dim();
    require_dim(m, 4, "Weyl-divergence Cotton tensor")?;
    let nw = covariant_derivative(&weyl_field(chart), chart, p, curvature_fd())?;
    let metric = MetricAt::at(chart, p)?;
    let c = (m as f64 - 2.0) / (m as f64 - 3.0);
    Ok(PointTensor::from_fn(m, vec![L; 3], |x| {
        let (i, j, k) = (x[0], x[1], x[2]);
        let mut acc = 0.0;
        for t in 0..m {
            for s in 0..m {
                acc += metric.inv(t, s) * nw.get(&[t, i, k, j, s]);
            }
        }
        c * acc
    }))
}

/// Second covariant derivatives of Ricci and the quantities derived from them.
#[derive(Debug, Clone)]
pub struct SecondOrder {
    /// `R_ij,kl`
    pub nabla2_ricci: PointTensor,
    /// `S_kl`
    pub nabla2_scalar: PointTensor,
    /// `C_ijk,l`
    pub nabla_cotton: PointTensor,
}

impl SecondOrder {
    /// `∇∇Ric` by finite differences of the chain-rule `∇Ric` field.
    pub fn at(chart: &Chart, geo: &LocalGeometry) -> Result<SecondOrder> {
        let m = chart.dim();
        require_dim(m, 3, "Cotton derivative")?;
        let n2 = covariant_derivative(&nabla_ricci_field(chart), chart, &geo.point, curvature_fd())?;
        let gi = geo.metric.inv.data();
        let n2s = PointTensor::from_fn(m, vec![L; 2], |x| {
            let mut acc = 0.0;
            for a in 0..m {
                for b in 0..m {
                    acc += gi[a * m + b] * n2.get(&[a, b, x[0], x[1]]);
                }
            }
            acc
        });
        let c = 1.0 / (2.0 * (m as f64 - 1.0));
        let g = &geo.metric.g;
        let n2a = |i: usize, j: usize, k: usize, l: usize| n2.get(&[i, j, k, l]) - c * n2s.get(&[k, l]) * g.get(&[i, j]);
        let nc = PointTensor::from_fn(m, vec![L; 4], |x| {
            let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
            n2a(i, j, k, l) - n2a(i, k, j, l)
        });
        Ok(SecondOrder {
            nabla2_ricci: n2,
            nabla2_scalar: n2s,
            nabla_cotton: nc,
        })
    }

    /// `C_ijk,k` (divergence on the last Cotton slot).
    pub fn cotton_divergence(&self, metric: &MetricAt) -> PointTensor {
        let m = metric.dim();
        PointTensor::from_fn(m, vec![L; 2], |x| {
            let mut acc = 0.0;
            for k in 0..m {
                for l in 0..m {
                    acc += metric.inv(k, l) * self.nabla_cotton.get(&[x[0], x[1], k, l]);
                }
            }
            acc
        })
    }
}

/// `B_ij = (1/(m−2))(C_jik,k + R_kt W_ikjt)`
pub fn bach_from(geo: &LocalGeometry, second: &SecondOrder) -> Result<PointTensor> {
    let m = geo.dim();
    require_dim(m, 3, "Bach tensor")?;
    let w = geo.weyl()?;
    let div_c = second.cotton_divergence(&geo.metric);
    let ric_up = geo.ricci.all_upper(&geo.metric)?;
    let c = 1.0 / (m as f64 - 2.0);
    Ok(PointTensor::from_fn(m, vec![L; 2], |x| {
        let (i, j) = (x[0], x[1]);
        let mut acc = div_c.get(&[j, i]);
        for k in 0..m {
            for t in 0..m {
                acc += ric_up.get(&[k, t]) * w.get(&[i, k, j, t]);
            }
        }
        c * acc
    }))
}

pub fn bach_at(chart: &Chart, p: &[f64]) -> Result<PointTensor> {
    let geo = LocalGeometry::with_derivatives(chart, p)?;
    let second = SecondOrder::at(chart, &geo)?;
    bach_from(&geo, &second)
}

/// The full curvature stack at a point.
#[derive(Debug, Clone)]
pub struct CurvatureBundle {
    pub christoffel: PointTensor,
    pub riemann: PointTensor,
    pub ricci: PointTensor,
    pub scalar: f64,
    pub schouten: PointTensor,
    pub einstein: PointTensor,
    pub weyl: PointTensor,
    pub cotton: PointTensor,
    pub bach: PointTensor,
    pub nabla_ricci: PointTensor,
    pub nabla_scalar: PointTensor,
}

pub fn curvature_bundle_at(chart: &Chart, p: &[f64]) -> Result<CurvatureBundle> {
    let geo = LocalGeometry::with_derivatives(chart, p)?;
    let second = SecondOrder::at(chart, &geo)?;
    let bach = bach_from(&geo, &second)?;
    let d = geo.derivs()?.clone();
    Ok(CurvatureBundle {
        schouten: geo.schouten()?,
        einstein: geo.einstein()?,
        weyl: geo.weyl()?,
        cotton: geo.cotton()?,
        bach,
        nabla_ricci: d.ricci,
        nabla_scalar: d.scalar,
        christoffel: geo.christoffel,
        riemann: geo.riemann,
        ricci: geo.ricci,
        scalar: geo.scalar,
    })
}

/// Smooth test function with seeded random coefficients: an affine part, a
/// quadratic part, a sine and an exponential of random linear forms.
pub fn random_test_function(m: usize, seed: u64) -> Expr {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = || rng.gen_range(-1.0..1.0);
    let x = |i: usize| Expr::var(i);
    let mut terms = Vec::new();
    for i in 0..m {
        terms.push(Expr::mul(Expr::constant(u()), x(i)));
        for j in i..m {
            terms.push(Expr::mul(Expr::constant(0.5 * u()), Expr::mul(x(i), x(j))));
        }
    }
    let lin = |c: &mut dyn FnMut() -> f64| Expr::sum((0..m).map(|i| Expr::mul(Expr::constant(c()), x(i))));
    let a = lin(&mut u);
    let b = lin(&mut u);
    terms.push(Expr::mul(Expr::constant(u()), a.sin()));
    terms.push(Expr::mul(Expr::constant(u()), Expr::mul(Expr::constant(0.5), b).exp()));
    Expr::sum(terms)
}

fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Residual `max|x − y| / max(1, max|x|, max|y|)` of two same-shape arrays.
pub fn rel_diff(x: &[f64], y: &[f64]) -> f64 {
    let d = x.iter().zip(y).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    scaled(d, max_abs(x.iter().chain(y).copied()))
}

/// Algebraic curvature checks at a point (order-2 data only).
pub fn algebraic_observations(geo: &LocalGeometry) -> Vec<Observation> {
    let m = geo.dim();
    let mut out = Vec::new();
    let gam = &geo.christoffel;
    let mut sym = 0.0f64;
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                sym = sym.max((gam.get(&[k, i, j]) - gam.get(&[k, j, i])).abs());
            }
        }
    }
    out.push(Observation::value("christoffel_symmetry", scaled(sym, gam.max_abs())));

    let r = &geo.riemann;
    let scale = r.max_abs();
    let mut sym = 0.0f64;
    let mut b1 = 0.0f64;
    for_each_multi_index(m, 4, |x| {
        let (i, j, k, t) = (x[0], x[1], x[2], x[3]);
        let v = r.get(x);
        sym = sym
            .max((v + r.get(&[j, i, k, t])).abs())
            .max((v + r.get(&[i, j, t, k])).abs())
            .max((v - r.get(&[k, t, i, j])).abs());
        b1 = b1.max((v + r.get(&[i, k, t, j]) + r.get(&[i, t, j, k])).abs());
    });
    out.push(Observation::value("riemann_symmetries", scaled(sym, scale)));
    out.push(Observation::value("first_bianchi", scaled(b1, scale)));

    if m >= 3 {
        let w = geo.weyl().expect("m >= 3");
        let mut tr = 0.0f64;
        for s1 in 0..4 {
            for s2 in s1 + 1..4 {
                let t = w.contract(s1, s2, Some(&geo.metric)).expect("same dim");
                tr = tr.max(t.max_abs());
            }
        }
        out.push(Observation::value("weyl_trace_free", scaled(tr, scale)));
        let a = geo.schouten().expect("m >= 3");
        let kn = kulkarni_nomizu(&a, &geo.metric.g);
        let recon = w.axpy(1.0 / (m as f64 - 2.0), &kn).expect("same shape");
        out.push(Observation::value("kulkarni_nomizu", rel_diff(recon.data(), r.data())));
        let tra = a.trace(Some(&geo.metric)).expect("rank 2");
        let mf = m as f64;
        out.push(Observation::value(
            "schouten_trace",
            scaled((tra - (mf - 2.0) * geo.scalar / (2.0 * (mf - 1.0))).abs(), geo.scalar),
        ));
    }
    out
}

/// Checks needing `∇Rm` and the test-function jet (no finite differences).
pub fn first_order_observations(geo: &LocalGeometry, f: &ScalarFunction) -> Vec<Observation> {
    let m = geo.dim();
    let mut out = Vec::new();
    let jet = match geo.function_jet(f) {
        Ok(j) => j,
        Err(e) => {
            for n in ["hessian_symmetry", "third_derivative_commutation", "traced_commutation"] {
                out.push(Observation::error(n, &e));
            }
            return out;
        }
    };
    let h = &jet.hess;
    let mut hs = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            hs = hs.max((h.get(&[i, j]) - h.get(&[j, i])).abs());
        }
    }
    out.push(Observation::value("hessian_symmetry", scaled(hs, h.max_abs())));

    let fu = jet.grad_up(&geo.metric);
    let r = &geo.riemann;
    let t3 = &jet.third;
    let mut c3 = 0.0f64;
    let mut sc3 = t3.max_abs();
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let curv: f64 = (0..m).map(|t| fu[t] * r.get(&[t, i, j, k])).sum();
                sc3 = sc3.max(curv.abs());
                c3 = c3.max((t3.get(&[i, j, k]) - t3.get(&[i, k, j]) - curv).abs());
            }
        }
    }
    out.push(Observation::value("third_derivative_commutation", scaled(c3, sc3)));

    // f_itt = f_tti + f_t R_ti
    let ric = &geo.ricci;
    let mut tc = 0.0f64;
    let mut tsc = 0.0f64;
    for i in 0..m {
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for t in 0..m {
            for s in 0..m {
                let gts = geo.metric.inv(t, s);
                lhs += gts * t3.get(&[i, t, s]);
                rhs += gts * t3.get(&[t, s, i]);
            }
            rhs += fu[t] * ric.get(&[t, i]);
        }
        tsc = tsc.max(lhs.abs()).max(rhs.abs());
        tc = tc.max((lhs - rhs).abs());
    }
    out.push(Observation::value("traced_commutation", scaled(tc, tsc)));

    match geo.derivs() {
        Ok(d) => {
            let nr = &d.riemann;
            let mut b2 = 0.0f64;
            for_each_multi_index(m, 5, |x| {
                let (i, j, k, l, t) = (x[0], x[1], x[2], x[3], x[4]);
                let v = nr.get(x) + nr.get(&[i, j, l, t, k]) + nr.get(&[i, j, t, k, l]);
                b2 = b2.max(v.abs());
            });
            out.push(Observation::value("second_bianchi", scaled(b2, nr.max_abs())));
            // S_i = 2 R_ik,k
            let mut sch = 0.0f64;
            for i in 0..m {
                let mut div = 0.0;
                for k in 0..m {
                    for l in 0..m {
                        div += geo.metric.inv(k, l) * d.ricci.get(&[i, k, l]);
                    }
                }
                sch = sch.max((d.scalar.data()[i] - 2.0 * div).abs());
            }
            out.push(Observation::value("schur", scaled(sch, d.ricci.max_abs())));
            if m >= 3 {
                let c = geo.cotton().expect("derivatives present");
                let sc = c.max_abs().max(d.ricci.max_abs());
                let mut skew = 0.0f64;
                let mut cyc = 0.0f64;
                for_each_multi_index(m, 3, |x| {
                    let (i, j, k) = (x[0], x[1], x[2]);
                    skew = skew.max((c.get(x) + c.get(&[i, k, j])).abs());
                    cyc = cyc.max((c.get(x) + c.get(&[j, k, i]) + c.get(&[k, i, j])).abs());
                });
                let tr = c
                    .contract(0, 1, Some(&geo.metric))
                    .and_then(|a| Ok(a.max_abs().max(c.contract(0, 2, Some(&geo.metric))?.max_abs())))
                    .unwrap_or(f64::NAN);
                out.push(Observation::value("cotton_skew", scaled(skew, sc)));
                out.push(Observation::value("cotton_cyclic", scaled(cyc, sc)));
                out.push(Observation::value("cotton_trace", scaled(tr, sc)));
            }
        }
        Err(e) => {
            for n in ["second_bianchi", "schur"] {
                out.push(Observation::error(n, &e));
            }
        }
    }
    out
}

/// Checks built on finite differences of the chain-rule `∇Ric` field.
pub fn second_order_observations(chart: &Chart, geo: &LocalGeometry, second: &SecondOrder) -> Vec<Observation> {
    let m = geo.dim();
    let mut out = Vec::new();
    let metric = &geo.metric;
    let n2 = &second.nabla2_ricci;
    let r = &geo.riemann;
    let ric = &geo.ricci;
    let gi = |a: usize, b: usize| metric.inv(a, b);
    // R_ij,kt − R_ij,tk = R_likt R_lj + R_ljkt R_li
    let ric_mixed: Vec<f64> = (0..m * m)
        .map(|x| {
            let (l, j) = (x / m, x % m);
            (0..m).map(|s| gi(l, s) * ric.get(&[s, j])).sum()
        })
        .collect();
    let mut rc = 0.0f64;
    let mut rsc = n2.max_abs();
    for_each_multi_index(m, 4, |x| {
        let (i, j, k, t) = (x[0], x[1], x[2], x[3]);
        let mut rhs = 0.0;
        for l in 0..m {
            rhs += r.get(&[l, i, k, t]) * ric_mixed[l * m + j] + r.get(&[l, j, k, t]) * ric_mixed[l * m + i];
        }
        rsc = rsc.max(rhs.abs());
        rc = rc.max((n2.get(x) - n2.get(&[i, j, t, k]) - rhs).abs());
    });
    out.push(Observation::value("ricci_commutation", scaled(rc, rsc)));

    if m >= 3 {
        let div = second.cotton_divergence(metric);
        let nc = &second.nabla_cotton;
        let sc = nc.max_abs().max(n2.max_abs());
        let mut dsym = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                dsym = dsym.max((div.get(&[i, j]) - div.get(&[j, i])).abs());
            }
        }
        out.push(Observation::value("cotton_divergence_symmetry", scaled(dsym, sc)));
        // C_kij,k = 0
        let mut nd = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let mut acc = 0.0;
                for k in 0..m {
                    for l in 0..m {
                        acc += gi(k, l) * nc.get(&[k, i, j, l]);
                    }
                }
                nd = nd.max(acc.abs());
            }
        }
        out.push(Observation::value("cotton_null_divergence", scaled(nd, sc)));
        // C_ijk,k = R_ij,kk − (m−2)/(2(m−1)) S_ij + R_tk R_itjk − R_it R_tj − ΔS g_ij/(2(m−1))
        let mf = m as f64;
        let ric_up = ric.all_upper(metric).expect("metric");
        let lap_s: f64 = (0..m).flat_map(|k| (0..m).map(move |l| (k, l))).map(|(k, l)| gi(k, l) * second.nabla2_scalar.get(&[k, l])).sum();
        let mut df = 0.0f64;
        let mut dsc = sc;
        for i in 0..m {
            for j in 0..m {
                let mut rhs = 0.0;
                for k in 0..m {
                    for l in 0..m {
                        rhs += gi(k, l) * n2.get(&[i, j, k, l]);
                        rhs += ric_up.get(&[k, l]) * r.get(&[i, k, j, l]);
                    }
                    rhs -= ric.get(&[i, k]) * ric_mixed[k * m + j];
                }
                rhs -= (mf - 2.0) / (2.0 * (mf - 1.0)) * second.nabla2_scalar.get(&[i, j]);
                rhs -= lap_s * metric.g(i, j) / (2.0 * (mf - 1.0));
                dsc = dsc.max(rhs.abs());
                df = df.max((div.get(&[i, j]) - rhs).abs());
            }
        }
        out.push(Observation::value("cotton_divergence_formula", scaled(df, dsc)));
        match bach_from(geo, second) {
            Ok(b) => {
                let mut bs = 0.0f64;
                for i in 0..m {
                    for j in 0..m {
                        bs = bs.max((b.get(&[i, j]) - b.get(&[j, i])).abs());
                    }
                }
                let bsc = b.max_abs().max(sc);
                out.push(Observation::value("bach_symmetry", scaled(bs, bsc)));
                let tr = b.trace(Some(metric)).unwrap_or(f64::NAN);
                // the terms of the contraction, which cancel
                let mut tsc = bsc;
                for i in 0..m {
                    for j in 0..m {
                        tsc = tsc.max((gi(i, j) * b.get(&[i, j])).abs());
                    }
                }
                out.push(Observation::value("bach_trace", scaled(tr.abs(), tsc)));
            }
            Err(e) => out.push(Observation::error("bach_symmetry", e)),
        }
    }
    // chain-rule ∇Ric against finite differences of the Ricci field
    let route = covariant_derivative(&ricci_field(chart), chart, &geo.point, curvature_fd())
        .map(|fd| {
            let chain = &geo.derivatives.as_ref().expect("with derivatives").ricci;
            rel_diff(fd.data(), chain.data())
        });
    out.push(Observation::from_result("ricci_route_agreement", route));
    out
}

/// Metric compatibility `∇g = 0` with `∂g` by finite differences.
pub fn metric_compatibility_observation(chart: &Chart, p: &[f64]) -> Observation {
    let field = FnField::new(chart.dim(), move |q: &[f64]| chart.metric_at(q));
    let r = chart.metric_partials_at(p, 1).and_then(|dg| {
        covariant_derivative(&field, chart, p, curvature_fd()).map(|t| scaled(t.max_abs(), dg.max_abs()))
    });
    Observation::from_result("metric_compatibility", r)
}

/// Cotton from Schouten against Cotton from the Weyl divergence.
pub fn cotton_weyl_observation(chart: &Chart, p: &[f64], geo: &LocalGeometry) -> Observation {
    if chart.dim() < 4 {
        return Observation::not_applicable("cotton_weyl_divergence", "m < 4");
    }
    let r = geo.cotton().and_then(|direct| {
        let via_weyl = cotton_from_weyl_div_at(chart, p)?;
        let scale = direct.max_abs().max(via_weyl.max_abs());
        Ok(scaled(direct.max_abs_diff(&via_weyl)?, scale))
    });
    Observation::from_result("cotton_weyl_divergence", r)
}

/// All identity observations at one point.
pub fn identity_observations_at(chart: &Chart, p: &[f64], f: &ScalarFunction) -> Vec<Observation> {
    let geo = match LocalGeometry::with_derivatives(chart, p) {
        Ok(g) => g,
        Err(e) => return vec![Observation::error("riemann_symmetries", e)],
    };
    let mut out = algebraic_observations(&geo);
    out.extend(first_order_observations(&geo, f));
    out.push(metric_compatibility_observation(chart, p));
    out.push(cotton_weyl_observation(chart, p, &geo));
    if chart.dim() >= 3 {
        match SecondOrder::at(chart, &geo) {
            Ok(second) => out.extend(second_order_observations(chart, &geo, &second)),
            Err(e) => out.push(Observation::error("ricci_commutation", e)),
        }
    }
    out
}

/// Vanishing checks that hold on space forms: `Ric = (S/m) g`, `W = 0`,
/// `C = 0`, `B = 0`, plus `S` against an expected value when given.
pub fn space_form_observations_at(chart: &Chart, p: &[f64], expected_scalar: Option<f64>) -> Vec<Observation> {
    let mut out = Vec::new();
    let geo = match LocalGeometry::with_derivatives(chart, p) {
        Ok(g) => g,
        Err(e) => return vec![Observation::error("einstein_constant", e)],
    };
    let m = geo.dim();
    let scale = geo.ricci.max_abs();
    if let Some(s) = expected_scalar {
        out.push(Observation::value("scalar_curvature", scaled((geo.scalar - s).abs(), s)));
    }
    out.push(Observation::from_result(
        "einstein_constant",
        geo.ricci
            .axpy(-geo.scalar / m as f64, &geo.metric.g)
            .map(|t| scaled(t.max_abs(), scale)),
    ));
    if m < 3 {
        for n in ["weyl_zero", "cotton_zero", "bach_zero"] {
            out.push(Observation::not_applicable(n, "m < 3"));
        }
        return out;
    }
    out.push(Observation::from_result("weyl_zero", geo.weyl().map(|w| scaled(w.max_abs(), scale))));
    out.push(Observation::from_result("cotton_zero", geo.cotton().map(|c| c.max_abs())));
    let bach = SecondOrder::at(chart, &geo).and_then(|second| bach_from(&geo, &second));
    out.push(Observation::from_result("bach_zero", bach.map(|b| b.max_abs())));
    out
}

/// The identity suite at one point, with default tolerances.
pub fn identity_suite_at(chart: &Chart, p: &[f64], f: &Expr) -> CheckReport {
    let f = ScalarFunction::new(f.clone(), chart.dim());
    let mut t = Tally::new();
    t.observe_all(identity_observations_at(chart, p, &f));
    t.finish(&Tolerances::default())
}

/// The identity suite over many points.
pub fn identity_suite(chart: &Chart, points: &[Vec<f64>], f: &Expr, tol: &Tolerances) -> CheckReport {
    let f = ScalarFunction::new(f.clone(), chart.dim());
    let mut t = Tally::new();
    for p in points {
        t.observe_all(identity_observations_at(chart, p, &f));
    }
    t.finish(tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Sampler;
    use crate::report::Status;

    fn sphere(m: usize) -> Chart {
        let names: Vec<String> = (1..=m).map(|i| format!("t{i}")).collect();
        let mut diag = Vec::new();
        let mut acc = String::from("1");
        for i in 0..m {
            diag.push(acc.clone());
            acc = format!("{acc}*sin(t{})^2", i + 1);
        }
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let drefs: Vec<&str> = diag.iter().map(String::as_str).collect();
        Chart::from_diagonal_strs(&refs, &drefs, vec![(0.3, std::f64::consts::PI - 0.3); m]).unwrap()
    }

    fn hyperbolic3() -> Chart {
        Chart::from_diagonal_strs(
            &["r", "a", "b"],
            &["1", "sinh(r)^2", "sinh(r)^2*sin(a)^2"],
            vec![(0.3, 1.5), (0.3, 2.8), (0.3, 2.8)],
        )
        .unwrap()
    }

    #[test]
    fn flat_christoffels_vanish() {
        let c = Chart::euclidean(3);
        let g = christoffel_at(&c, &[0.1, 0.2, 0.3]).unwrap();
        assert!(g.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn polar_christoffel() {
        let c = Chart::from_diagonal_strs(&["r", "th", "z"], &["1", "r^2", "1"], vec![(0.5, 2.0), (0.0, 3.0), (-1.0, 1.0)])
            .unwrap();
        let g = christoffel_at(&c, &[1.3, 1.0, 0.0]).unwrap();
        assert!((g.get(&[0, 1, 1]) + 1.3).abs() < 1e-14);
        assert!((g.get(&[1, 0, 1]) - 1.0 / 1.3).abs() < 1e-14);
        assert_eq!(g.get(&[1, 0, 1]), g.get(&[1, 1, 0]));
    }

    #[test]
    fn sphere_curvature_values() {
        for m in [3, 4] {
            let c = sphere(m);
            let p: Vec<f64> = (0..m).map(|i| 1.0 + 0.2 * i as f64).collect();
            let geo = LocalGeometry::at(&c, &p).unwrap();
            let mf = m as f64;
            assert!((geo.scalar - mf * (mf - 1.0)).abs() < 1e-9, "S = {}", geo.scalar);
            let diff = geo.ricci.axpy(-(mf - 1.0), &geo.metric.g).unwrap();
            assert!(diff.max_abs() < 1e-9);
            assert!(geo.weyl().unwrap().max_abs() < 1e-9);
            let rn = geo.ricci.norm2(&geo.metric).unwrap();
            assert!((rn - mf * (mf - 1.0).powi(2)).abs() < 1e-9);
        }
    }

    #[test]
    fn hyperbolic_ricci() {
        let c = hyperbolic3();
        let geo = LocalGeometry::with_derivatives(&c, &[0.8, 1.1, 1.7]).unwrap();
        let diff = geo.ricci.axpy(2.0, &geo.metric.g).unwrap();
        assert!(diff.max_abs() < 1e-9);
        assert!((geo.scalar + 6.0).abs() < 1e-9);
        assert!(geo.cotton().unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn ricci_trace_of_sphere_is_six() {
        let c = sphere(3);
        let p = [1.0, 1.2, 0.9];
        let m = MetricAt::at(&c, &p).unwrap();
        let ric = ricci_at(&c, &p).unwrap();
        assert!((ric.trace(Some(&m)).unwrap() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn flat_riemann_contracts_to_zero() {
        let c = Chart::euclidean(4);
        let r = riemann_at(&c, &[0.0; 4]).unwrap();
        let m = MetricAt::at(&c, &[0.0; 4]).unwrap();
        assert_eq!(r.contract(0, 2, Some(&m)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn weyl_needs_dimension_four_for_divergence_form() {
        assert!(matches!(cotton_from_weyl_div_at(&sphere(3), &[1.0, 1.0, 1.0]), Err(GeomError::Dimension(_))));
    }

    #[test]
    fn sphere4_bach_vanishes() {
        let c = sphere(4);
        let b = bach_at(&c, &[1.0, 1.1, 1.2, 1.3]).unwrap();
        assert!(b.max_abs() < 1e-4, "{}", b.max_abs());
    }

    #[test]
    fn suite_on_flat_is_tight() {
        let c = Chart::euclidean(3);
        let f = random_test_function(3, 7);
        let r = identity_suite_at(&c, &[0.1, -0.2, 0.3], &f);
        for e in r.entries.iter().filter(|e| e.status != Status::NotApplicable) {
            assert!(e.max.unwrap() <= 1e-12, "{} {:?}", e.name, e.max);
        }
    }

    #[test]
    fn suite_on_sphere_with_cos() {
        let c = sphere(3);
        let f = c.parse("cos(t1)").unwrap();
        let pts = Sampler::new(3, 0.05).sample(c.domain(), 4);
        let r = identity_suite(&c, &pts, &f, &Tolerances::default());
        assert!(r.all_pass(), "{:#?}", r.failures());
        assert!(r.get("third_derivative_commutation").unwrap().max.unwrap() < 1e-8);
    }

    #[test]
    fn generic_warped_suite_and_cotton_routes() {
        let c = Chart::from_diagonal_strs(
            &["r", "a", "b", "z"],
            &["1", "(1 + r^2/3)^2", "(1 + r^2/3)^2*sin(a)^2", "exp(r/2)"],
            vec![(0.2, 1.2), (0.4, 2.7), (0.4, 2.7), (-1.0, 1.0)],
        )
        .unwrap();
        let f = random_test_function(4, 1);
        let pts = Sampler::new(5, 0.05).sample(c.domain(), 3);
        let r = identity_suite(&c, &pts, &f, &Tolerances::default());
        assert!(r.all_pass(), "{:#?}", r.failures());
        for p in &pts {
            let a = cotton_at(&c, p).unwrap();
            let b = cotton_from_weyl_div_at(&c, p).unwrap();
            assert!(a.max_abs() > 1e-3);
            assert!(rel_diff(a.data(), b.data()) < 1e-5, "{}", rel_diff(a.data(), b.data()));
        }
    }
}
