//! Tensor-product quadrature meshes.
//!
//! Volume meshes are polar (disk) or spherical (ball) tensor grids. Each node
//! owns a cell of the grid in `(r, colatitude, longitude)` parameter space:
//! radial cells are bounded by cumulative Gauss–Legendre weights, so every
//! radial node lies inside its cell, and angular cells are the midpoint bands.

use std::f64::consts::PI;
use std::hash::{Hash, Hasher};
use std::num::NonZeroUsize;

use fnv::FnvHasher;
use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::domain::{ModelDomain, Point};
use crate::error::{invalid, Error, Result};

pub const MIN_RADIAL: usize = 4;
pub const MIN_ANGULAR: usize = 4;

/// Gauss–Legendre rule on `[0, 1]`, nodes ascending.
pub fn gauss_unit(n: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n.max(1)).expect("nonzero");
    let mut pairs: Vec<(f64, f64)> = GaussLegendre::new(n)
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Identity of a mesh, used to check that fields and matrices line up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeshTag(pub u64);

impl MeshTag {
    fn of(parts: &[u64]) -> Self {
        let mut h = FnvHasher::default();
        parts.hash(&mut h);
        MeshTag(h.finish())
    }
}

/// Axis-aligned box in `(r, colatitude, longitude)`. Planar boxes keep the
/// colatitude fixed at `π/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl ParamBox {
    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
            0.5 * (self.lo[2] + self.hi[2]),
        ]
    }

    pub fn contains(&self, p: &[f64; 3], dim: usize) -> bool {
        let axes: &[usize] = if dim == 2 { &[0, 2] } else { &[0, 1, 2] };
        axes.iter().all(|&a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }
}

/// Spherical or polar parametrization of the mesh region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chart {
    pub dim: usize,
}

impl Chart {
    #[inline]
    pub fn point(&self, r: f64, phi: f64, theta: f64) -> Point {
        if self.dim == 2 {
            Point([r * theta.cos(), r * theta.sin(), 0.0])
        } else {
            let s = phi.sin();
            Point([r * s * theta.cos(), r * s * theta.sin(), r * phi.cos()])
        }
    }

    #[inline]
    pub fn jacobian(&self, r: f64, phi: f64) -> f64 {
        if self.dim == 2 {
            r
        } else {
            r * r * phi.sin()
        }
    }

    /// Exact measure of a parameter box.
    pub fn volume(&self, b: &ParamBox) -> f64 {
        let dtheta = b.hi[2] - b.lo[2];
        if self.dim == 2 {
            0.5 * (b.hi[0] * b.hi[0] - b.lo[0] * b.lo[0]) * dtheta
        } else {
            (b.hi[0].powi(3) - b.lo[0].powi(3)) / 3.0 * (b.lo[1].cos() - b.hi[1].cos()) * dtheta
        }
    }

    /// Physical extent of a box along each parameter axis (upper bounds).
    pub fn extents(&self, b: &ParamBox) -> [f64; 3] {
        let dr = b.hi[0] - b.lo[0];
        let dtheta = b.hi[2] - b.lo[2];
        if self.dim == 2 {
            [dr, 0.0, b.hi[0] * dtheta]
        } else {
            let sin_max = if b.lo[1] <= 0.5 * PI && b.hi[1] >= 0.5 * PI {
                1.0
            } else {
                b.lo[1].sin().max(b.hi[1].sin())
            };
            [dr, b.hi[0] * (b.hi[1] - b.lo[1]), b.hi[0] * sin_max * dtheta]
        }
    }

    pub fn diameter(&self, b: &ParamBox) -> f64 {
        let e = self.extents(b);
        (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    pub chart: Chart,
    /// Physical radius of the meshed ball.
    pub scale: f64,
    pub radial_nodes: Vec<f64>,
    pub radial_weights: Vec<f64>,
    pub radial_edges: Vec<f64>,
    /// Colatitude band edges; a single band `[π/2, π/2]` in the plane.
    pub colat_edges: Vec<f64>,
    pub n_lon: usize,
}

impl TensorGrid {
    pub fn n_radial(&self) -> usize {
        self.radial_nodes.len()
    }

    pub fn n_colat(&self) -> usize {
        self.colat_edges.len() - 1
    }

    pub fn lon_step(&self) -> f64 {
        2.0 * PI / self.n_lon as f64
    }

    pub fn len(&self) -> usize {
        self.n_radial() * self.n_colat() * self.n_lon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ir: usize, ic: usize, il: usize) -> usize {
        (ir * self.n_colat() + ic) * self.n_lon + il
    }

    #[inline]
    pub fn split(&self, i: usize) -> (usize, usize, usize) {
        let il = i % self.n_lon;
        let rest = i / self.n_lon;
        (rest / self.n_colat(), rest % self.n_colat(), il)
    }

    pub fn colat_center(&self, ic: usize) -> f64 {
        0.5 * (self.colat_edges[ic] + self.colat_edges[ic + 1])
    }

    pub fn lon_center(&self, il: usize) -> f64 {
        (il as f64 + 0.5) * self.lon_step()
    }

    /// Parameter coordinates of node `i`.
    pub fn param(&self, i: usize) -> [f64; 3] {
        let (ir, ic, il) = self.split(i);
        [self.radial_nodes[ir] * self.scale, self.colat_center(ic), self.lon_center(il)]
    }

    pub fn cell(&self, i: usize) -> ParamBox {
        let (ir, ic, il) = self.split(i);
        let step = self.lon_step();
        ParamBox {
            lo: [self.radial_edges[ir] * self.scale, self.colat_edges[ic], il as f64 * step],
            hi: [self.radial_edges[ir + 1] * self.scale, self.colat_edges[ic + 1], (il + 1) as f64 * step],
        }
    }
}

#[derive(Debug, Clone)]
pub struct VolumeMesh {
    pub domain: ModelDomain,
    pub n_radial: usize,
    pub n_angular: usize,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    delta: Option<Vec<f64>>,
    pub grid: TensorGrid,
    pub tag: MeshTag,
}

pub fn build_volume_mesh(domain: ModelDomain, n_radial: usize, n_angular: usize) -> Result<VolumeMesh> {
    if n_radial < MIN_RADIAL || n_angular < MIN_ANGULAR {
        return Err(invalid(format!(
            "resolution ({n_radial}, {n_angular}) below minimum ({MIN_RADIAL}, {MIN_ANGULAR})"
        )));
    }
    let dim = domain.dim();
    let scale = domain.mesh_radius();
    let rule = gauss_unit(n_radial);
    let radial_nodes: Vec<f64> = rule.iter().map(|p| p.0).collect();
    let radial_weights: Vec<f64> = rule.iter().map(|p| p.1).collect();
    let mut radial_edges = Vec::with_capacity(n_radial + 1);
    radial_edges.push(0.0);
    let mut acc = 0.0;
    for w in &radial_weights {
        acc += w;
        radial_edges.push(acc);
    }
    radial_edges[n_radial] = 1.0;

    let (colat_edges, n_lon) = if dim == 2 {
        (vec![0.5 * PI, 0.5 * PI], n_angular)
    } else {
        let n_colat = (n_angular / 4).max(2);
        let edges = (0..=n_colat).map(|k| PI * k as f64 / n_colat as f64).collect();
        (edges, (n_angular / 2).max(4))
    };
    let grid = TensorGrid {
        chart: Chart { dim },
        scale,
        radial_nodes,
        radial_weights,
        radial_edges,
        colat_edges,
        n_lon,
    };

    let n = grid.len();
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let dtheta = grid.lon_step();
    for ir in 0..grid.n_radial() {
        let r = grid.radial_nodes[ir] * scale;
        let wr = grid.radial_weights[ir] * scale;
        for ic in 0..grid.n_colat() {
            let phi = grid.colat_center(ic);
            let band = if dim == 2 {
                r
            } else {
                r * r * (grid.colat_edges[ic].cos() - grid.colat_edges[ic + 1].cos())
            };
            for il in 0..n_lon {
                nodes.push(grid.chart.point(r, phi, grid.lon_center(il)));
                weights.push(wr * band * dtheta);
            }
        }
    }
    let delta = domain.is_bounded().then(|| nodes.iter().map(|p| (1.0 - p.norm()).max(0.0)).collect());
    let tag = MeshTag::of(&[
        0,
        domain.kind.code() as u64,
        scale.to_bits(),
        n_radial as u64,
        n_angular as u64,
    ]);
    Ok(VolumeMesh { domain, n_radial, n_angular, nodes, weights, delta, grid, tag })
}

impl VolumeMesh {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Boundary distance at each node; unavailable on the whole space.
    pub fn delta(&self) -> Result<&[f64]> {
        self.delta
            .as_deref()
            .ok_or(Error::Unsupported { op: "boundary_distance", domain: self.domain.kind.name() })
    }

    pub fn cell(&self, i: usize) -> ParamBox {
        self.grid.cell(i)
    }

    pub fn cell_volume(&self, i: usize) -> f64 {
        self.grid.chart.volume(&self.grid.cell(i))
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn field(&self, values: Vec<f64>) -> Result<FieldVector> {
        FieldVector::new(values, self.tag, self.len())
    }

    pub fn sample(&self, f: impl Fn(&Point) -> f64) -> FieldVector {
        FieldVector { values: self.nodes.iter().map(f).collect(), tag: self.tag }
    }

    pub fn constant(&self, c: f64) -> FieldVector {
        FieldVector { values: vec![c; self.len()], tag: self.tag }
    }

    /// Width of the outermost radial cell, the finest spacing normal to the boundary.
    pub fn boundary_spacing(&self) -> f64 {
        let e = &self.grid.radial_edges;
        (e[e.len() - 1] - e[e.len() - 2]) * self.grid.scale
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryMesh {
    pub domain: ModelDomain,
    pub n_angular: usize,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    /// Colatitude and longitude counts (`1 × n` on the circle).
    pub n_colat: usize,
    pub n_lon: usize,
    pub tag: MeshTag,
}

pub fn build_boundary_mesh(domain: ModelDomain, n_angular: usize) -> Result<BoundaryMesh> {
    domain.require_bounded("build_boundary_mesh")?;
    if n_angular < MIN_ANGULAR {
        return Err(invalid(format!("boundary resolution {n_angular} below minimum {MIN_ANGULAR}")));
    }
    let n = n_angular;
    let step = 2.0 * PI / n as f64;
    let (nodes, weights, n_colat) = if domain.dim() == 2 {
        let nodes = (0..n).map(|l| {
            let t = (l as f64 + 0.5) * step;
            Point::new2(t.cos(), t.sin())
        });
        (nodes.collect(), vec![step; n], 1)
    } else {
        // Gauss–Legendre in cos(colatitude), uniform in longitude
        let rule = gauss_unit(n);
        let mut nodes = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for &(s, w) in rule.iter().rev() {
            let c = 2.0 * s - 1.0;
            let sin = (1.0 - c * c).max(0.0).sqrt();
            for l in 0..n {
                let t = (l as f64 + 0.5) * step;
                nodes.push(Point::new3(sin * t.cos(), sin * t.sin(), c));
                weights.push(2.0 * w * step);
            }
        }
        (nodes, weights, n)
    };
    let tag = MeshTag::of(&[1, domain.kind.code() as u64, n as u64]);
    Ok(BoundaryMesh { domain, n_angular: n, nodes, weights, n_colat, n_lon: n, tag })
}

impl BoundaryMesh {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn field(&self, values: Vec<f64>) -> Result<FieldVector> {
        FieldVector::new(values, self.tag, self.len())
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Values of a scalar function at the nodes of one mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldVector {
    pub values: Vec<f64>,
    pub tag: MeshTag,
}

impl FieldVector {
    pub fn new(values: Vec<f64>, tag: MeshTag, expected_len: usize) -> Result<Self> {
        if values.len() != expected_len {
            return Err(Error::MeshMismatch(format!(
                "field has {} values, mesh has {} nodes",
                values.len(),
                expected_len
            )));
        }
        Ok(FieldVector { values, tag })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FieldVector {
        FieldVector { values: self.values.iter().map(|&v| f(v)).collect(), tag: self.tag }
    }

    pub fn zip_map(&self, other: &FieldVector, f: impl Fn(f64, f64) -> f64) -> Result<FieldVector> {
        self.check_same(other)?;
        Ok(FieldVector {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            tag: self.tag,
        })
    }

    pub(crate) fn check_same(&self, other: &FieldVector) -> Result<()> {
        if self.tag != other.tag || self.len() != other.len() {
            return Err(Error::MeshMismatch("fields live on different meshes".into()));
        }
        Ok(())
    }

    pub(crate) fn check_tag(&self, tag: MeshTag, len: usize) -> Result<()> {
        if self.tag != tag || self.len() != len {
            return Err(Error::MeshMismatch(format!(
                "field of length {} does not belong to the expected mesh of {} nodes",
                self.len(),
                len
            )));
        }
        Ok(())
    }
}
