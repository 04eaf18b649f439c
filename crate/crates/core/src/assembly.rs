//! Dense kernel matrices on tensor meshes.
//!
//! Entries store `K(x_i, y_j) * w_j`, so a matrix-vector product is the
//! quadrature of `∫ K(x, y) f(y) dy` at the row nodes. For the Green matrix,
//! `K` between nearby cells is the cell-to-cell average of `G`, computed with
//! an adaptive product rule that refines towards the singularity; well
//! separated pairs use point values.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{green_kernel, green_self_cell, poisson_unchecked, ModelDomain, Point};
use crate::error::{invalid, Error, Result};
use crate::mesh::{gauss_unit, BoundaryMesh, Chart, FieldVector, MeshTag, ParamBox, VolumeMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    Green,
    Poisson,
    Iterated(u32),
    SchrodingerGreen,
}

impl KernelKind {
    pub fn code(self) -> u32 {
        match self {
            KernelKind::Green => 1,
            KernelKind::Poisson => 2,
            KernelKind::SchrodingerGreen => 3,
            KernelKind::Iterated(j) => 1000 + j,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(KernelKind::Green),
            2 => Some(KernelKind::Poisson),
            3 => Some(KernelKind::SchrodingerGreen),
            c if c > 1000 => Some(KernelKind::Iterated(c - 1000)),
            _ => None,
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelKind::Green => write!(f, "green"),
            KernelKind::Poisson => write!(f, "poisson"),
            KernelKind::Iterated(j) => write!(f, "iterated({j})"),
            KernelKind::SchrodingerGreen => write!(f, "schrodinger_green"),
        }
    }
}

/// How the singular part of the Green matrix is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalRule {
    /// Cell-averaged product integration for all nearby pairs.
    Adaptive,
    /// Point values off the diagonal, equal-volume-ball closed form on it.
    EqualVolumeBall,
    /// Point values off the diagonal, zero on it.
    Zero,
    /// Not a Green matrix.
    None,
}

impl DiagonalRule {
    pub fn name(self) -> &'static str {
        match self {
            DiagonalRule::Adaptive => "adaptive_cell_average",
            DiagonalRule::EqualVolumeBall => "equal_volume_ball",
            DiagonalRule::Zero => "zero",
            DiagonalRule::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    /// Row-major, `rows * cols`.
    pub entries: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub kind: KernelKind,
    pub row_tag: MeshTag,
    pub col_tag: MeshTag,
    pub diagonal_rule: DiagonalRule,
    pub domain: ModelDomain,
    pub n_radial: usize,
    pub n_angular: usize,
}

impl KernelMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    /// Plain product with a column vector.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        self.entries
            .par_chunks(self.cols)
            .with_min_len(16)
            .map(|row| dot(row, x))
            .collect()
    }

    pub fn apply(&self, f: &FieldVector) -> Result<FieldVector> {
        f.check_tag(self.col_tag, self.cols)?;
        Ok(FieldVector { values: self.matvec(&f.values), tag: self.row_tag })
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols && self.row_tag == self.col_tag
    }

    pub fn min_entry(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators keep the loop vectorizable
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    pub rule: DiagonalRule,
    /// Pairs farther apart than `far_factor * (diam_i + diam_j)` use point values.
    pub far_factor: f64,
    /// A box is integrated directly once its distance exceeds `separation * diam`.
    pub separation: f64,
    /// Gauss points per axis on separated boxes.
    pub inner_order: usize,
    /// Gauss points per axis for the average over the target cell; 0 evaluates
    /// at the node itself.
    pub outer_order: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            rule: DiagonalRule::Adaptive,
            far_factor: 1.5,
            separation: 1.0,
            inner_order: 3,
            outer_order: 0,
        }
    }
}

/// Adaptive product quadrature over parameter boxes.
struct BoxQuadrature {
    chart: Chart,
    rule: Vec<(f64, f64)>,
    separation: f64,
}

impl BoxQuadrature {
    fn new(chart: Chart, order: usize, separation: f64) -> Self {
        BoxQuadrature { chart, rule: gauss_unit(order), separation }
    }

    fn axes(&self) -> &'static [usize] {
        if self.chart.dim == 2 {
            &[0, 2]
        } else {
            &[0, 1, 2]
        }
    }

    /// Tensor Gauss rule on a box; `f` receives the point and its weight.
    fn for_each_node(&self, b: &ParamBox, mut f: impl FnMut(Point, f64)) {
        let w = [b.hi[0] - b.lo[0], b.hi[1] - b.lo[1], b.hi[2] - b.lo[2]];
        let one = [(0.5, 1.0)];
        let phi_rule: &[(f64, f64)] = if self.chart.dim == 2 { &one } else { &self.rule };
        for &(sr, wr) in &self.rule {
            let r = b.lo[0] + sr * w[0];
            for &(sp, wp) in phi_rule {
                let phi = b.lo[1] + sp * w[1];
                let jac = self.chart.jacobian(r, phi);
                let wphi = if self.chart.dim == 2 { 1.0 } else { wp * w[1] };
                for &(st, wt) in &self.rule {
                    let theta = b.lo[2] + st * w[2];
                    f(self.chart.point(r, phi, theta), wr * w[0] * wphi * wt * w[2] * jac);
                }
            }
        }
    }

    fn direct(&self, b: &ParamBox, g: &impl Fn(&Point) -> f64) -> f64 {
        let mut s = 0.0;
        self.for_each_node(b, |p, w| s += w * g(&p));
        s
    }

    fn split(&self, b: &ParamBox) -> (ParamBox, ParamBox) {
        let e = self.chart.extents(b);
        let axis = *self
            .axes()
            .iter()
            .max_by(|&&a, &&c| e[a].total_cmp(&e[c]))
            .expect("nonempty axes");
        let mid = 0.5 * (b.lo[axis] + b.hi[axis]);
        let mut left = *b;
        let mut right = *b;
        left.hi[axis] = mid;
        right.lo[axis] = mid;
        (left, right)
    }

    /// `∫_b g` where `g` may be singular at `x` (parameter coordinates `xp`).
    /// Boxes smaller than `tiny` that contain `xp` are handed to `near`.
    fn integrate(
        &self,
        b: &ParamBox,
        x: &Point,
        xp: Option<&[f64; 3]>,
        tiny: f64,
        g: &impl Fn(&Point) -> f64,
        near: &impl Fn(f64) -> f64,
        depth: usize,
    ) -> f64 {
        let c = b.center();
        let centre = self.chart.point(c[0], c[1], c[2]);
        let diam = self.chart.diameter(b);
        let gap = x.dist(&centre) - 0.5 * diam;
        if gap > self.separation * diam {
            return self.direct(b, g);
        }
        if diam <= tiny || depth >= 64 {
            return match xp {
                Some(p) if b.contains(p, self.chart.dim) => near(self.chart.volume(b)),
                _ => self.direct(b, g),
            };
        }
        let (l, r) = self.split(b);
        self.integrate(&l, x, xp, tiny, g, near, depth + 1) + self.integrate(&r, x, xp, tiny, g, near, depth + 1)
    }
}

fn cell_diameters(mesh: &VolumeMesh) -> Vec<f64> {
    (0..mesh.len()).map(|i| mesh.grid.chart.diameter(&mesh.cell(i))).collect()
}

/// Parameter coordinates of a physical point.
fn to_param(dim: usize, p: &Point) -> [f64; 3] {
    let r = p.norm();
    let theta = p.0[1].atan2(p.0[0]).rem_euclid(2.0 * std::f64::consts::PI);
    if dim == 2 {
        [r, 0.5 * std::f64::consts::PI, theta]
    } else {
        let phi = if r > 0.0 { (p.0[2] / r).clamp(-1.0, 1.0).acos() } else { 0.0 };
        [r, phi, theta]
    }
}

pub fn assemble_green_matrix(mesh: &VolumeMesh) -> Result<KernelMatrix> {
    assemble_green_matrix_with(mesh, &AssemblyOptions::default())
}

pub fn assemble_green_matrix_with(mesh: &VolumeMesh, opts: &AssemblyOptions) -> Result<KernelMatrix> {
    let n = mesh.len();
    let grid = &mesh.grid;
    let dom = mesh.domain;
    let n_lon = grid.n_lon;
    let diam = cell_diameters(mesh);
    let vol: Vec<f64> = (0..n).map(|i| mesh.cell_volume(i)).collect();
    let inner = BoxQuadrature::new(grid.chart, opts.inner_order, opts.separation);
    let outer = BoxQuadrature::new(grid.chart, opts.outer_order, opts.separation);
    let bounded = dom.is_bounded();

    // rows with longitude index 0; the rest follow by rotation
    let reps: Vec<usize> = (0..n).step_by(n_lon).collect();
    let rep_rows: Vec<Vec<f64>> = reps
        .par_iter()
        .map(|&i| {
            let xi = mesh.nodes[i];
            let mut outer_pts = Vec::new();
            if opts.rule == DiagonalRule::Adaptive {
                if opts.outer_order == 0 {
                    outer_pts.push((xi, 1.0));
                } else {
                    outer.for_each_node(&mesh.cell(i), |p, w| outer_pts.push((p, w)));
                }
            }
            let outer_total: f64 = outer_pts.iter().map(|p| p.1).sum();
            (0..n)
                .map(|j| {
                    let d = xi.dist(&mesh.nodes[j]);
                    if i == j && opts.rule != DiagonalRule::Adaptive {
                        return match opts.rule {
                            DiagonalRule::EqualVolumeBall => green_self_cell(&dom, &xi, mesh.weights[i]) / mesh.weights[i],
                            _ => 0.0,
                        };
                    }
                    if opts.rule != DiagonalRule::Adaptive || d > opts.far_factor * (diam[i] + diam[j]) {
                        return green_kernel(&dom, &xi, &mesh.nodes[j]);
                    }
                    let cell_j = mesh.cell(j);
                    let mut acc = 0.0;
                    for (x, w) in &outer_pts {
                        let xp = to_param(grid.chart.dim, x);
                        let tiny = if bounded {
                            (1e-2 * diam[j]).min(0.25 * (1.0 - x.norm()))
                        } else {
                            1e-2 * diam[j]
                        };
                        let g = |y: &Point| {
                            let v = green_kernel(&dom, x, y);
                            if v.is_finite() {
                                v
                            } else {
                                0.0
                            }
                        };
                        let near = |v: f64| green_self_cell(&dom, x, v);
                        acc += w * inner.integrate(&cell_j, x, Some(&xp), tiny, &g, &near, 0);
                    }
                    (acc / (outer_total * vol[j])).max(0.0)
                })
                .collect()
        })
        .collect();

    let mut entries = vec![0.0; n * n];
    for (k, &i0) in reps.iter().enumerate() {
        let rep = &rep_rows[k];
        for il in 0..n_lon {
            let row = &mut entries[(i0 + il) * n..(i0 + il + 1) * n];
            for jb in (0..n).step_by(n_lon) {
                for jl in 0..n_lon {
                    row[jb + jl] = rep[jb + (jl + n_lon - il) % n_lon];
                }
            }
        }
    }
    // collocation row sums, before symmetrization
    let row_sums: Vec<f64> = reps
        .iter()
        .zip(&rep_rows)
        .flat_map(|(_, rep)| {
            let b = dot(rep, &mesh.weights);
            std::iter::repeat_n(b, n_lon)
        })
        .collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (entries[i * n + j] + entries[j * n + i]);
            entries[i * n + j] = s;
            entries[j * n + i] = s;
        }
    }
    if opts.rule == DiagonalRule::Adaptive {
        rebalance(&mut entries, &mesh.weights, &row_sums);
    }
    for row in entries.chunks_mut(n) {
        for (e, w) in row.iter_mut().zip(&mesh.weights) {
            *e *= w;
        }
    }
    Ok(KernelMatrix {
        entries,
        rows: n,
        cols: n,
        kind: KernelKind::Green,
        row_tag: mesh.tag,
        col_tag: mesh.tag,
        diagonal_rule: opts.rule,
        domain: dom,
        n_radial: mesh.n_radial,
        n_angular: mesh.n_angular,
    })
}

/// Symmetric diagonal scaling `K <- D K D` so that the weighted row sums of
/// the symmetric kernel match those of the collocation rows.
fn rebalance(kernel: &mut [f64], weights: &[f64], targets: &[f64]) {
    let n = weights.len();
    let mut d = vec![1.0; n];
    for _ in 0..200 {
        let wd: Vec<f64> = weights.iter().zip(&d).map(|(w, x)| w * x).collect();
        let sums: Vec<f64> = kernel.par_chunks(n).map(|row| dot(row, &wd)).collect();
        let mut worst = 0.0f64;
        for i in 0..n {
            let got = d[i] * sums[i];
            if got > 0.0 && targets[i] > 0.0 {
                worst = worst.max((got / targets[i] - 1.0).abs());
                d[i] *= (targets[i] / got).sqrt();
            }
        }
        if worst < 1e-13 {
            break;
        }
    }
    kernel.par_chunks_mut(n).zip(d.par_iter()).for_each(|(row, di)| {
        for (e, dj) in row.iter_mut().zip(&d) {
            *e *= di * dj;
        }
    });
}

/// Rows are boundary nodes, columns volume nodes; `P * f` is the balayage of `f`.
pub fn assemble_poisson_matrix(vmesh: &VolumeMesh, bmesh: &BoundaryMesh) -> Result<KernelMatrix> {
    let dom = vmesh.domain;
    dom.require_bounded("assemble_poisson_matrix")?;
    if bmesh.domain.kind != dom.kind {
        return Err(invalid("volume and boundary meshes belong to different domains"));
    }
    let n = vmesh.len();
    let dim = dom.dim();
    let diam = cell_diameters(vmesh);
    let opts = AssemblyOptions::default();
    let inner = BoxQuadrature::new(vmesh.grid.chart, opts.inner_order, opts.separation);
    let rows: Vec<Vec<f64>> = bmesh
        .nodes
        .par_iter()
        .map(|z| {
            (0..n)
                .map(|i| {
                    let x = &vmesh.nodes[i];
                    let w = vmesh.weights[i];
                    if x.dist(z) > opts.far_factor * 2.0 * diam[i] {
                        return poisson_unchecked(dim, x, z) * w;
                    }
                    let cell = vmesh.cell(i);
                    let g = |y: &Point| poisson_unchecked(dim, y, z);
                    let none = |_: f64| 0.0;
                    let avg = inner.integrate(&cell, z, None, 1e-3 * diam[i], &g, &none, 0)
                        / vmesh.cell_volume(i);
                    avg * w
                })
                .collect()
        })
        .collect();
    Ok(KernelMatrix {
        entries: rows.concat(),
        rows: bmesh.len(),
        cols: n,
        kind: KernelKind::Poisson,
        row_tag: bmesh.tag,
        col_tag: vmesh.tag,
        diagonal_rule: DiagonalRule::None,
        domain: dom,
        n_radial: vmesh.n_radial,
        n_angular: vmesh.n_angular,
    })
}

/// Checks the structural invariants of a Green matrix.
pub fn check_green_invariants(m: &KernelMatrix, weights: &[f64]) -> Result<()> {
    if m.min_entry() < 0.0 {
        return Err(Error::InvariantViolation("negative kernel entry".into()));
    }
    let n = m.rows;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = m.get(i, j) / weights[j];
            let b = m.get(j, i) / weights[i];
            if (a - b).abs() > 1e-10 * a.abs().max(b.abs()) {
                return Err(Error::InvariantViolation(format!("asymmetric kernel at ({i}, {j})")));
            }
        }
    }
    Ok(())
}
