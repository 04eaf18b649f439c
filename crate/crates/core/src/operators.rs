//! Potentials, modifiers and the operators built on a Green matrix:
//! `G f`, `T f = G(f q)`, iterated kernels and quasi-metric diagnostics.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{KernelKind, KernelMatrix};
use crate::domain::{poisson_kernel, DomainKind, Point};
use crate::error::{invalid, Error, Result};
use crate::mesh::{gauss_unit, FieldVector, VolumeMesh};
use crate::riccati::TestFunction;

/// Analytic description of a potential `q ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialForm {
    Zero,
    Constant { lambda: f64 },
    /// `a δ^{-γ}`
    HardyBoundary { a: f64, gamma: f64 },
    /// `a` on the ball `|x - center| < radius`, zero outside.
    RadialBump { a: f64, radius: f64, center: [f64; 3] },
    /// `a / |x|^2` (restricted to `|x| < 1` on the whole space).
    InverseSquareOrigin { a: f64 },
    Custom,
}

impl PotentialForm {
    pub fn family(&self) -> &'static str {
        match self {
            PotentialForm::Zero => "zero",
            PotentialForm::Constant { .. } => "constant",
            PotentialForm::HardyBoundary { .. } => "hardy_boundary",
            PotentialForm::RadialBump { .. } => "radial_bump",
            PotentialForm::InverseSquareOrigin { .. } => "inverse_square_origin",
            PotentialForm::Custom => "custom",
        }
    }

    /// The two leading numeric parameters, for tabular reports.
    pub fn params(&self) -> (f64, f64) {
        match *self {
            PotentialForm::Zero | PotentialForm::Custom => (0.0, 0.0),
            PotentialForm::Constant { lambda } => (lambda, 0.0),
            PotentialForm::HardyBoundary { a, gamma } => (a, gamma),
            PotentialForm::RadialBump { a, radius, .. } => (a, radius),
            PotentialForm::InverseSquareOrigin { a } => (a, 0.0),
        }
    }

    fn unbounded_at_boundary(&self) -> bool {
        matches!(self, PotentialForm::HardyBoundary { gamma, .. } if *gamma > 0.0)
    }
}

/// A potential sampled on a volume mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub form: PotentialForm,
    pub samples: FieldVector,
    /// Samples vanish where `δ ≤ 1/k`.
    pub truncation_level: Option<u32>,
}

impl Potential {
    pub fn zero(mesh: &VolumeMesh) -> Self {
        Potential { form: PotentialForm::Zero, samples: mesh.constant(0.0), truncation_level: None }
    }

    pub fn constant(mesh: &VolumeMesh, lambda: f64) -> Result<Self> {
        Self::sample(PotentialForm::Constant { lambda }, mesh, None)
    }

    pub fn custom(samples: FieldVector) -> Result<Self> {
        if samples.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("potential samples must be finite and nonnegative"));
        }
        Ok(Potential { form: PotentialForm::Custom, samples, truncation_level: None })
    }

    /// Samples `form` on `mesh`. Discontinuous and singular forms are
    /// averaged over each node's cell rather than evaluated pointwise.
    pub fn sample(form: PotentialForm, mesh: &VolumeMesh, truncation: Option<u32>) -> Result<Self> {
        let dom = mesh.domain;
        if form.unbounded_at_boundary() && truncation.is_none() {
            return Err(invalid(format!("{} potential needs a truncation level", form.family())));
        }
        if truncation == Some(0) {
            return Err(invalid("truncation level must be positive"));
        }
        let values: Vec<f64> = match form {
            PotentialForm::Zero => vec![0.0; mesh.len()],
            PotentialForm::Custom => return Err(invalid("use Potential::custom for sampled potentials")),
            PotentialForm::Constant { lambda } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(invalid(format!("constant potential must be nonnegative, got {lambda}")));
                }
                vec![lambda; mesh.len()]
            }
            PotentialForm::HardyBoundary { a, gamma } => {
                dom.require_bounded("hardy_boundary potential")?;
                if !(a >= 0.0 && gamma.is_finite() && gamma >= 0.0) {
                    return Err(invalid("hardy_boundary needs a ≥ 0 and γ ≥ 0"));
                }
                let cutoff = truncation.map_or(0.0, |k| 1.0 / k as f64);
                radial_cell_average(mesh, |r| {
                    let d = 1.0 - r;
                    if d > cutoff {
                        a * d.powf(-gamma)
                    } else {
                        0.0
                    }
                })
            }
            PotentialForm::RadialBump { a, radius, center } => {
                if !(a >= 0.0 && radius > 0.0) {
                    return Err(invalid("radial_bump needs a ≥ 0 and radius > 0"));
                }
                let c = Point(center);
                let reach = c.norm() + radius;
                if dom.kind == DomainKind::WholeSpace3D && reach > 0.9 * dom.truncation_radius {
                    return Err(invalid(format!(
                        "support reaches |x| = {reach}, beyond 90% of the truncation radius {}",
                        dom.truncation_radius
                    )));
                }
                (0..mesh.len())
                    .map(|i| {
                        let diam = mesh.grid.chart.diameter(&mesh.cell(i));
                        let d = mesh.nodes[i].dist(&c);
                        if d + diam < radius {
                            a
                        } else if d - diam > radius {
                            0.0
                        } else {
                            a * ball_fraction(mesh, i, &c, radius)
                        }
                    })
                    .collect()
            }
            PotentialForm::InverseSquareOrigin { a } => {
                if a < 0.0 {
                    return Err(invalid("inverse_square_origin needs a ≥ 0"));
                }
                let limit = if dom.is_bounded() { f64::INFINITY } else { 1.0 };
                if !dom.is_bounded() && limit > 0.9 * dom.truncation_radius {
                    return Err(invalid("truncation radius too small for inverse_square_origin"));
                }
                // exact radial cell averages of r^{-2}
                let g = &mesh.grid;
                let n_ang = g.n_colat() * g.n_lon;
                (0..mesh.len())
                    .map(|i| {
                        let ir = i / n_ang;
                        let lo = g.radial_edges[ir] * g.scale;
                        let hi = (g.radial_edges[ir + 1] * g.scale).min(limit);
                        if hi <= lo {
                            return 0.0;
                        }
                        let full_lo = g.radial_edges[ir] * g.scale;
                        let full_hi = g.radial_edges[ir + 1] * g.scale;
                        let (num, den) = if g.chart.dim == 2 {
                            ((hi / lo.max(1e-300)).ln(), 0.5 * (full_hi * full_hi - full_lo * full_lo))
                        } else {
                            (hi - lo, (full_hi.powi(3) - full_lo.powi(3)) / 3.0)
                        };
                        a * num / den
                    })
                    .collect()
            }
        };
        let samples = mesh.field(values)?;
        Ok(Potential { form, samples, truncation_level: truncation })
    }

    pub fn values(&self) -> &[f64] {
        &self.samples.values
    }

    pub fn is_zero(&self) -> bool {
        self.samples.values.iter().all(|&v| v == 0.0)
    }

    /// Largest node radius where the potential is nonzero.
    pub fn support_radius(&self, mesh: &VolumeMesh) -> f64 {
        self.values()
            .iter()
            .zip(&mesh.nodes)
            .filter(|(v, _)| **v > 0.0)
            .fold(0.0, |m, (_, p)| m.max(p.norm()))
    }
}

/// Fraction of the cell of node `i` inside the ball `|y - c| < radius`. Along
/// each ray the intersection is an interval, integrated exactly in `r`; the
/// angles use a composite Gauss rule.
fn ball_fraction(mesh: &VolumeMesh, i: usize, c: &Point, radius: f64) -> f64 {
    let chart = mesh.grid.chart;
    let cell = mesh.cell(i);
    let (lo, hi) = (cell.lo[0], cell.hi[0]);
    let power = if chart.dim == 2 { 2 } else { 3 };
    let shell = |a: f64, b: f64| (b.powi(power) - a.powi(power)) / power as f64;
    let rule = gauss_unit(4);
    let pieces = 8;
    let colat: Vec<(f64, f64)> = if chart.dim == 2 {
        vec![(0.5 * std::f64::consts::PI, 1.0)]
    } else {
        composite(cell.lo[1], cell.hi[1], pieces, &rule)
    };
    let lon = composite(cell.lo[2], cell.hi[2], pieces, &rule);
    let (mut hit, mut total) = (0.0, 0.0);
    for &(phi, wp) in &colat {
        let jac = if chart.dim == 2 { 1.0 } else { phi.sin() };
        for &(theta, wt) in &lon {
            let e = chart.point(1.0, phi, theta);
            // |r e - c|² < R²  ⇔  r² - 2 r (e·c) + |c|² - R² < 0
            let b = e.dot(c);
            let disc = b * b - c.norm2() + radius * radius;
            let w = wp * wt * jac;
            total += w * shell(lo, hi);
            if disc > 0.0 {
                let s = disc.sqrt();
                let (a, z) = ((b - s).max(lo), (b + s).min(hi));
                if z > a {
                    hit += w * shell(a, z);
                }
            }
        }
    }
    if total > 0.0 {
        hit / total
    } else {
        0.0
    }
}

fn composite(lo: f64, hi: f64, pieces: usize, rule: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let h = (hi - lo) / pieces as f64;
    (0..pieces)
        .flat_map(|p| rule.iter().map(move |&(s, w)| (lo + (p as f64 + s) * h, w * h)))
        .collect()
}

/// Cell averages of a radial profile, with the radial integral refined by a
/// composite Gauss rule.
fn radial_cell_average(mesh: &VolumeMesh, profile: impl Fn(f64) -> f64) -> Vec<f64> {
    let g = &mesh.grid;
    let rule = gauss_unit(8);
    let panels = 16;
    let power = if g.chart.dim == 2 { 1 } else { 2 };
    let shell: Vec<f64> = (0..g.n_radial())
        .map(|ir| {
            let lo = g.radial_edges[ir] * g.scale;
            let hi = g.radial_edges[ir + 1] * g.scale;
            let h = (hi - lo) / panels as f64;
            let (mut num, mut den) = (0.0, 0.0);
            for p in 0..panels {
                let a = lo + p as f64 * h;
                for &(s, w) in &rule {
                    let r = a + s * h;
                    let jac = r.powi(power) * w * h;
                    num += profile(r) * jac;
                    den += jac;
                }
            }
            num / den
        })
        .collect();
    let n_ang = g.n_colat() * g.n_lon;
    (0..mesh.len()).map(|i| shell[i / n_ang]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "modifier", rename_all = "snake_case")]
pub enum ModifierKind {
    BoundaryDistance,
    PoissonRay { z: [f64; 3] },
    Unit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModifierField {
    pub values: FieldVector,
    pub kind: ModifierKind,
}

impl ModifierField {
    pub fn boundary_distance(mesh: &VolumeMesh) -> Result<Self> {
        let d = mesh.delta()?.to_vec();
        Self::checked(mesh.field(d)?, ModifierKind::BoundaryDistance)
    }

    pub fn poisson_ray(mesh: &VolumeMesh, z: &Point) -> Result<Self> {
        let vals = mesh
            .nodes
            .iter()
            .map(|x| poisson_kernel(&mesh.domain, x, z))
            .collect::<Result<Vec<_>>>()?;
        Self::checked(mesh.field(vals)?, ModifierKind::PoissonRay { z: z.0 })
    }

    pub fn unit(mesh: &VolumeMesh) -> Self {
        ModifierField { values: mesh.constant(1.0), kind: ModifierKind::Unit }
    }

    fn checked(values: FieldVector, kind: ModifierKind) -> Result<Self> {
        if let Some(i) = values.values.iter().position(|&v| !(v > 0.0)) {
            return Err(invalid(format!("modifier vanishes at node {i}")));
        }
        Ok(ModifierField { values, kind })
    }
}

fn require_square(m: &KernelMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(invalid(format!("{} matrix is not a volume-to-volume kernel", m.kind)));
    }
    Ok(())
}

pub fn apply_green(green: &KernelMatrix, f: &FieldVector) -> Result<FieldVector> {
    require_square(green)?;
    green.apply(f)
}

/// `T f = G(f q)`.
pub fn apply_t(green: &KernelMatrix, q: &Potential, f: &FieldVector) -> Result<FieldVector> {
    require_square(green)?;
    q.samples.check_tag(green.col_tag, green.cols)?;
    let fq = f.zip_map(&q.samples, |a, b| a * b)?;
    green.apply(&fq)
}

fn to_faer(m: &KernelMatrix) -> Mat<f64> {
    Mat::from_fn(m.rows, m.cols, |i, j| m.get(i, j))
}

/// `G_j(x, y) = ∫ G_{j-1}(x, z) G(z, y) q(z) dz`, with `G_1 = G`.
pub fn iterated_kernel(green: &KernelMatrix, q: &Potential, j: u32) -> Result<KernelMatrix> {
    require_square(green)?;
    if j == 0 {
        return Err(invalid("iteration index starts at 1"));
    }
    q.samples.check_tag(green.col_tag, green.cols)?;
    if j == 1 {
        return Ok(green.clone());
    }
    let n = green.rows;
    let base = to_faer(green);
    let qv = q.values();
    let scaled = Mat::from_fn(n, n, |z, y| qv[z] * base[(z, y)]);
    let mut acc = base.clone();
    for _ in 1..j {
        acc = &acc * &scaled;
    }
    let mut out = green.clone();
    for i in 0..n {
        for k in 0..n {
            out.entries[i * n + k] = acc[(i, k)];
        }
    }
    out.kind = KernelKind::Iterated(j);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasimetricEstimate {
    pub kappa: f64,
    /// Node indices `(x, y, z)` maximizing `d(x,y) / (d(x,z) + d(z,y))`.
    pub worst_triple: (usize, usize, usize),
    pub raw_max: f64,
}

fn sample_triples(
    n: usize,
    samples: usize,
    seed: u64,
    dist: impl Fn(usize, usize) -> f64,
) -> Result<QuasimetricEstimate> {
    if n < 3 {
        return Err(invalid("need at least three nodes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (0.0f64, (0, 1, 2));
    for _ in 0..samples {
        let x = rng.random_range(0..n);
        let mut y = rng.random_range(0..n - 1);
        if y >= x {
            y += 1;
        }
        let mut z = rng.random_range(0..n);
        while z == x || z == y {
            z = rng.random_range(0..n);
        }
        let (dxy, dxz, dzy) = (dist(x, y), dist(x, z), dist(z, y));
        if !(dxy.is_finite() && dxz.is_finite() && dzy.is_finite()) {
            return Err(Error::DegenerateKernel("zero kernel entry off the diagonal".into()));
        }
        let ratio = dxy / (dxz + dzy);
        if ratio > best.0 {
            best = (ratio, (x, y, z));
        }
    }
    Ok(QuasimetricEstimate { kappa: best.0.max(1.0), worst_triple: best.1, raw_max: best.0 })
}

/// Sampled lower bound for the quasi-metric constant of `d = m(x) m(y) / K(x, y)`.
pub fn quasimetric_constant(
    kernel: &KernelMatrix,
    weights: &[f64],
    modifier: &ModifierField,
    samples: usize,
    seed: u64,
) -> Result<QuasimetricEstimate> {
    require_square(kernel)?;
    modifier.values.check_tag(kernel.col_tag, kernel.cols)?;
    let m = &modifier.values.values;
    let dist = |i: usize, j: usize| m[i] * m[j] * weights[j] / kernel.get(i, j);
    sample_triples(kernel.rows, samples, seed, dist)
}

/// Same estimate for the inverted distance `d(x,y) / (d(x,z*) d(y,z*))`, with
/// the boundary point `z*` entering through `d(x, z*) = δ(x) / P(x, z*)`.
pub fn quasimetric_constant_inverted(
    kernel: &KernelMatrix,
    mesh: &VolumeMesh,
    z_star: &Point,
    samples: usize,
    seed: u64,
) -> Result<QuasimetricEstimate> {
    require_square(kernel)?;
    let delta = mesh.delta()?;
    let to_star: Vec<f64> = mesh
        .nodes
        .iter()
        .zip(delta)
        .map(|(x, d)| Ok(d / poisson_kernel(&mesh.domain, x, z_star)?))
        .collect::<Result<_>>()?;
    let w = &mesh.weights;
    let dist = |i: usize, j: usize| {
        let d = delta[i] * delta[j] * w[j] / kernel.get(i, j);
        d / (to_star[i] * to_star[j])
    };
    sample_triples(kernel.rows, samples, seed, dist)
}

/// `∫ h² q / ∫ |∇h|²`, a lower bound for the trace constant β².
pub fn dirichlet_quotient(mesh: &VolumeMesh, q: &Potential, h: &TestFunction) -> Result<f64> {
    mesh.domain.require_bounded("dirichlet_quotient")?;
    q.samples.check_tag(mesh.tag, mesh.len())?;
    let (mut num, mut den) = (0.0, 0.0);
    for ((p, w), qv) in mesh.nodes.iter().zip(&mesh.weights).zip(q.values()) {
        let v = h.value(p);
        let g = h.gradient(p);
        num += v * v * qv * w;
        den += (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]) * w;
    }
    if den == 0.0 {
        return Err(invalid(format!("test function {} is identically zero", h.id)));
    }
    Ok(num / den)
}
