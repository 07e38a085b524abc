//! Cubic lattice over a centered ball with a three-way node classification.
//!
//! Interior nodes carry the discretized equation; the boundary layer
//! receives Dirichlet data; exterior nodes take no part. The classification
//! keeps one invariant the solver relies on: every stencil neighbor
//! (axis or diagonal, Chebyshev distance 1) of an interior node is interior
//! or layer, never exterior.

use crate::poly::QuadraticPoly;
use crate::scalar::{real, Scalar};
use crate::sym::SymMatrix;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum NodeClass {
    Interior,
    Layer,
    Exterior,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("unsupported dimension {0}; this lattice covers 3 and 4")]
    UnsupportedDim(usize),
    #[error("spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("no interior nodes: radius {radius} is too small for spacing {h}")]
    NoInteriorNodes { radius: f64, h: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct ShellStat<S> {
    pub radius_mid: S,
    pub count: usize,
    pub mean: S,
    pub min: S,
    pub max: S,
}

#[derive(Debug)]
pub struct Grid<S> {
    dim: usize,
    h: S,
    radius: S,
    half_extent: i64,
    strides: [usize; 4],
    classes: Vec<NodeClass>,
    interior: Vec<u32>,
    layer: Vec<u32>,
}

impl<S: Scalar> Grid<S> {
    pub fn new(dim: usize, radius: S, h: S) -> Result<Self, GridError> {
        if !(dim == 3 || dim == 4) {
            return Err(GridError::UnsupportedDim(dim));
        }
        let h_f = h.to_f64().unwrap_or(0.0);
        let r_f = radius.to_f64().unwrap_or(0.0);
        if !(h_f > 0.0) {
            return Err(GridError::NonPositiveSpacing(h_f));
        }
        let half_extent = (r_f / h_f - 1e-9).ceil().max(1.0) as i64;
        let per_axis = (2 * half_extent + 1) as usize;
        if per_axis < 10 {
            log::warn!(
                "only {per_axis} nodes per axis at radius {r_f}, spacing {h_f}; \
                 expect coarse results"
            );
        }
        let mut strides = [0usize; 4];
        let mut acc = 1usize;
        for k in (0..dim).rev() {
            strides[k] = acc;
            acc *= per_axis;
        }
        let node_count = acc;
        debug_assert!(node_count <= u32::MAX as usize, "node ids are stored as u32");

        let sqrt_d = real::<S>((dim as f64).sqrt());
        let cutoff = radius - h * sqrt_d;
        let mut classes = vec![NodeClass::Exterior; node_count];
        let mut interior: Vec<u32> = Vec::new();
        let mut multi = [0i64; 4];
        for id in 0..node_count {
            decode(id, dim, &strides, half_extent, &mut multi);
            let mut on_edge = false;
            let mut norm_sq = S::zero();
            for &i in &multi[..dim] {
                if i.abs() >= half_extent {
                    on_edge = true;
                }
                let x = real::<S>(i as f64) * h;
                norm_sq = norm_sq + x * x;
            }
            if !on_edge && norm_sq.sqrt() < cutoff {
                classes[id] = NodeClass::Interior;
                interior.push(id as u32);
            }
        }

        // mark the layer by walking the Chebyshev ball of each interior
        // node; interior nodes avoid the lattice edge, so no bounds checks
        let offsets = chebyshev_offsets(dim, &strides);
        for &id in &interior {
            for &off in &offsets {
                let nb = (id as i64 + off) as usize;
                if classes[nb] == NodeClass::Exterior {
                    classes[nb] = NodeClass::Layer;
                }
            }
        }
        let layer: Vec<u32> = (0..node_count)
            .filter(|&id| classes[id] == NodeClass::Layer)
            .map(|id| id as u32)
            .collect();

        if interior.is_empty() {
            return Err(GridError::NoInteriorNodes {
                radius: r_f,
                h: h_f,
            });
        }
        Ok(Self {
            dim,
            h,
            radius,
            half_extent,
            strides,
            classes,
            interior,
            layer,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn spacing(&self) -> S {
        self.h
    }

    #[inline]
    pub fn radius(&self) -> S {
        self.radius
    }

    /// Lattice indices run from -half_extent to +half_extent on each axis.
    #[inline]
    pub fn half_extent(&self) -> i64 {
        self.half_extent
    }

    #[inline]
    pub fn nodes_per_axis(&self) -> usize {
        (2 * self.half_extent + 1) as usize
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.classes.len()
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    #[inline]
    pub fn class(&self, id: usize) -> NodeClass {
        self.classes[id]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    pub fn interior_nodes(&self) -> &[u32] {
        &self.interior
    }

    pub fn layer_nodes(&self) -> &[u32] {
        &self.layer
    }

    /// Node id for lattice coordinates in [-half_extent, half_extent]^dim.
    pub fn index(&self, multi: &[i64]) -> usize {
        debug_assert_eq!(multi.len(), self.dim);
        let mut id = 0usize;
        for (k, &i) in multi.iter().enumerate() {
            debug_assert!(i.abs() <= self.half_extent);
            id += (i + self.half_extent) as usize * self.strides[k];
        }
        id
    }

    pub fn decode_into(&self, id: usize, out: &mut [i64; 4]) {
        decode(id, self.dim, &self.strides, self.half_extent, out);
    }

    pub fn point_into(&self, id: usize, out: &mut [S; 4]) {
        let mut multi = [0i64; 4];
        self.decode_into(id, &mut multi);
        for k in 0..self.dim {
            out[k] = real::<S>(multi[k] as f64) * self.h;
        }
    }

    pub fn point(&self, id: usize) -> Vec<S> {
        let mut buf = [S::zero(); 4];
        self.point_into(id, &mut buf);
        buf[..self.dim].to_vec()
    }

    pub fn radius_of(&self, id: usize) -> S {
        let mut buf = [S::zero(); 4];
        self.point_into(id, &mut buf);
        let mut acc = S::zero();
        for &x in &buf[..self.dim] {
            acc = acc + x * x;
        }
        acc.sqrt()
    }

    /// Evaluates the polynomial at every node, exterior included.
    pub fn sample_poly(&self, q: &QuadraticPoly<S>) -> Vec<S> {
        assert_eq!(q.dim(), self.dim);
        let mut out = vec![S::zero(); self.node_count()];
        let mut buf = [S::zero(); 4];
        for id in 0..self.node_count() {
            self.point_into(id, &mut buf);
            out[id] = q.eval(&buf[..self.dim]);
        }
        out
    }

    /// Central-difference Hessian at an interior node. Exact on quadratics;
    /// must not be called where stencil neighbors leave the classified zone.
    pub fn hessian_at(&self, field: &[S], id: usize) -> SymMatrix<S> {
        let mut out = SymMatrix::zeros(self.dim);
        self.hessian_into(field, id, &mut out);
        out
    }

    /// Allocation-free variant of `hessian_at` for per-node hot loops.
    pub fn hessian_into(&self, field: &[S], id: usize, out: &mut SymMatrix<S>) {
        debug_assert_eq!(self.classes[id], NodeClass::Interior);
        debug_assert_eq!(out.dim(), self.dim);
        let h2 = self.h * self.h;
        let four = real::<S>(4.0);
        let two = real::<S>(2.0);
        let center = field[id];
        for k in 0..self.dim {
            let sk = self.strides[k];
            out.set(k, k, (field[id + sk] + field[id - sk] - two * center) / h2);
            for l in (k + 1)..self.dim {
                let sl = self.strides[l];
                let v = (field[id + sk + sl] + field[id - sk - sl]
                    - field[id + sk - sl]
                    - field[id - sk + sl])
                    / (four * h2);
                out.set(k, l, v);
            }
        }
    }

    /// F(D^2 u) nodewise: operator value at interior nodes, NaN elsewhere.
    pub fn apply_operator_field(
        &self,
        op: &crate::operators::Operator<S>,
        field: &[S],
    ) -> Vec<S> {
        assert_eq!(op.dim(), self.dim);
        assert_eq!(field.len(), self.node_count());
        let mut out = vec![S::nan(); self.node_count()];
        for &id in &self.interior {
            let hess = self.hessian_at(field, id as usize);
            out[id as usize] = op.eval(&hess);
        }
        out
    }

    /// Radial shell statistics over classified (non-exterior) nodes,
    /// skipping NaN entries; shells are [k w, (k+1) w) around the origin.
    pub fn shell_stats(&self, field: &[S], width: S) -> Vec<ShellStat<S>> {
        assert!(width > S::zero());
        let mut bins: Vec<(usize, S, S, S)> = Vec::new(); // count, sum, min, max
        for id in 0..self.node_count() {
            if self.classes[id] == NodeClass::Exterior {
                continue;
            }
            let v = field[id];
            if v.is_nan() {
                continue;
            }
            let r = self.radius_of(id);
            let k = (r / width).to_f64().unwrap_or(0.0).floor() as usize;
            if bins.len() <= k {
                bins.resize(k + 1, (0, S::zero(), S::infinity(), S::neg_infinity()));
            }
            let b = &mut bins[k];
            b.0 += 1;
            b.1 = b.1 + v;
            b.2 = b.2.min(v);
            b.3 = b.3.max(v);
        }
        let half = real::<S>(0.5);
        bins.iter()
            .enumerate()
            .filter(|(_, b)| b.0 > 0)
            .map(|(k, b)| ShellStat {
                radius_mid: (real::<S>(k as f64) + half) * width,
                count: b.0,
                mean: b.1 / real::<S>(b.0 as f64),
                min: b.2,
                max: b.3,
            })
            .collect()
    }
}

fn decode(id: usize, dim: usize, strides: &[usize; 4], half_extent: i64, out: &mut [i64; 4]) {
    let mut rem = id;
    for k in 0..dim {
        out[k] = (rem / strides[k]) as i64 - half_extent;
        rem %= strides[k];
    }
}

/// Signed id offsets for the 3^dim - 1 Chebyshev-distance-1 neighbors.
fn chebyshev_offsets(dim: usize, strides: &[usize; 4]) -> Vec<i64> {
    let mut out = Vec::with_capacity(3usize.pow(dim as u32) - 1);
    let mut digits = vec![-1i64; dim];
    loop {
        if digits.iter().any(|&d| d != 0) {
            let off: i64 = digits
                .iter()
                .enumerate()
                .map(|(k, &d)| d * strides[k] as i64)
                .sum();
            out.push(off);
        }
        let mut k = 0;
        loop {
            if k == dim {
                return out;
            }
            digits[k] += 1;
            if digits[k] <= 1 {
                break;
            }
            digits[k] = -1;
            k += 1;
        }
    }
}
