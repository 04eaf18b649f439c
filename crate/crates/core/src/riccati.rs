//! The Riccati equation `-Δv = |∇v|² + q`: the substitution `v = log u`,
//! its very weak residual against a fixed test family, and the Dirac
//! counterexample where `v` passes but `e^v` does not.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::domain::{green_kernel, ModelDomain, Point};
use crate::error::{Error, Result};
use crate::mesh::{gauss_unit, FieldVector, VolumeMesh};
use crate::operators::Potential;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Factor {
    /// `x^a y^b z^c`
    Monomial([u32; 3]),
    CosFirst,
    Gaussian,
}

/// `h = (1 - |x|²) p(x)` with analytic derivatives; vanishes on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub id: String,
    dim: usize,
    factor: Factor,
}

fn pow(x: f64, k: u32) -> f64 {
    x.powi(k as i32)
}

fn dpow(x: f64, k: u32) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * x.powi(k as i32 - 1)
    }
}

fn ddpow(x: f64, k: u32) -> f64 {
    if k < 2 {
        0.0
    } else {
        (k * (k - 1)) as f64 * x.powi(k as i32 - 2)
    }
}

impl TestFunction {
    fn p(&self, x: &Point) -> (f64, [f64; 3], f64) {
        let c = x.0;
        match self.factor {
            Factor::Monomial(e) => {
                let v = [pow(c[0], e[0]), pow(c[1], e[1]), pow(c[2], e[2])];
                let d = [dpow(c[0], e[0]), dpow(c[1], e[1]), dpow(c[2], e[2])];
                let dd = [ddpow(c[0], e[0]), ddpow(c[1], e[1]), ddpow(c[2], e[2])];
                (
                    v[0] * v[1] * v[2],
                    [d[0] * v[1] * v[2], v[0] * d[1] * v[2], v[0] * v[1] * d[2]],
                    dd[0] * v[1] * v[2] + v[0] * dd[1] * v[2] + v[0] * v[1] * dd[2],
                )
            }
            Factor::CosFirst => (c[0].cos(), [-c[0].sin(), 0.0, 0.0], -c[0].cos()),
            Factor::Gaussian => {
                let r2 = x.norm2();
                let g = (-r2).exp();
                let n = self.dim as f64;
                (g, [-2.0 * c[0] * g, -2.0 * c[1] * g, -2.0 * c[2] * g], (4.0 * r2 - 2.0 * n) * g)
            }
        }
    }

    pub fn value(&self, x: &Point) -> f64 {
        (1.0 - x.norm2()) * self.p(x).0
    }

    pub fn gradient(&self, x: &Point) -> [f64; 3] {
        let (p, dp, _) = self.p(x);
        let s = 1.0 - x.norm2();
        let mut g = [0.0; 3];
        for k in 0..self.dim {
            g[k] = -2.0 * x.0[k] * p + s * dp[k];
        }
        g
    }

    pub fn laplacian(&self, x: &Point) -> f64 {
        let (p, dp, lp) = self.p(x);
        let s = 1.0 - x.norm2();
        let xdp: f64 = (0..self.dim).map(|k| x.0[k] * dp[k]).sum();
        -2.0 * self.dim as f64 * p - 4.0 * xdp + s * lp
    }
}

/// `(1 - |x|²) p` for `p` a monomial of degree at most two, `cos x₁` or
/// `e^{-|x|²}`: 12 functions in 3D, 8 in 2D.
pub fn test_family(domain: &ModelDomain) -> Result<Vec<TestFunction>> {
    domain.require_bounded("test_family")?;
    let dim = domain.dim();
    let axes = ["x", "y", "z"];
    let mut out = Vec::new();
    let mut push = |id: String, factor| out.push(TestFunction { id, dim, factor });
    push("1".into(), Factor::Monomial([0, 0, 0]));
    for a in 0..dim {
        let mut e = [0; 3];
        e[a] = 1;
        push(axes[a].into(), Factor::Monomial(e));
    }
    for a in 0..dim {
        for b in a..dim {
            let mut e = [0; 3];
            e[a] += 1;
            e[b] += 1;
            push(format!("{}{}", axes[a], axes[b]), Factor::Monomial(e));
        }
    }
    push("cos_x".into(), Factor::CosFirst);
    push("gauss".into(), Factor::Gaussian);
    Ok(out)
}

/// `v = log u`, for `u ≥ 1`.
pub fn log_substitution(u: &FieldVector) -> Result<FieldVector> {
    if let Some(i) = u.values.iter().position(|&x| !(x >= 1.0 - 1e-8)) {
        return Err(Error::InvariantViolation(format!(
            "gauge value {} below 1 at node {i}",
            u.values[i]
        )));
    }
    Ok(u.map(|x| x.max(1.0).ln()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub id: String,
    /// `-∫ v Δh`
    #[serde(with = "crate::real")]
    pub lhs: f64,
    /// `∫ |∇v|² h + ∫ q h`
    #[serde(with = "crate::real")]
    pub rhs: f64,
    /// `|lhs - rhs|` over `½(∫|vΔh| + ∫(|∇v|² + q)|h|)`
    #[serde(with = "crate::real")]
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiracProbe {
    pub id: String,
    #[serde(with = "crate::real")]
    pub value: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiReport {
    pub residuals: Vec<Residual>,
    /// `∫ |∇v|² δ`
    pub gradient_energy_weighted: f64,
    pub dirac_probe: Option<Vec<DiracProbe>>,
}

impl RiccatiReport {
    pub fn max_gap(&self) -> f64 {
        self.residuals.iter().fold(0.0f64, |m, r| m.max(r.gap))
    }

    /// Largest `|probe - h(0)|`.
    pub fn max_dirac_error(&self) -> Option<f64> {
        self.dirac_probe
            .as_ref()
            .map(|p| p.iter().fold(0.0f64, |m, d| m.max((d.value - d.expected).abs())))
    }
}

const RADIAL_STENCIL: usize = 5;

/// `|∇v|²` at every node by finite differences on the tensor grid: five
/// points radially, three in the angles. Radial stencils near the origin
/// continue through it to the antipodal nodes; colatitude stencils at the
/// poles do the same across the pole. Stencils near the outer shell shift
/// inward.
pub fn gradient_squared(mesh: &VolumeMesh, v: &[f64]) -> Vec<f64> {
    let g = &mesh.grid;
    let (nr, nc, nl) = (g.n_radial(), g.n_colat(), g.n_lon);
    let dim = g.chart.dim;
    let radii: Vec<f64> = g.radial_nodes.iter().map(|r| r * g.scale).collect();
    let half = (nl % 2 == 0).then_some(nl / 2);
    // signed shell positions: s ≥ 0 is shell s, s < 0 is shell -s-1 seen through the origin
    let lowest = if half.is_some() { -(nr as isize) } else { 0 };
    let width = RADIAL_STENCIL.min((nr as isize - lowest) as usize) as isize;
    let mut out = vec![0.0; v.len()];
    let mut xs = Vec::with_capacity(width as usize);
    let mut ys = Vec::with_capacity(width as usize);
    for i in 0..v.len() {
        let (ir, ic, il) = g.split(i);
        let r = radii[ir];
        let phi = g.colat_center(ic);
        let start = (ir as isize - width / 2).clamp(lowest, nr as isize - width);
        xs.clear();
        ys.clear();
        for s in start..start + width {
            if s >= 0 {
                xs.push(radii[s as usize]);
                ys.push(v[g.index(s as usize, ic, il)]);
            } else {
                let k = (-s - 1) as usize;
                xs.push(-radii[k]);
                ys.push(v[g.index(k, nc - 1 - ic, (il + half.unwrap_or(0)) % nl)]);
            }
        }
        let dr = lagrange_derivative(&xs, &ys, (ir as isize - start) as usize);
        let step = g.lon_step();
        let dtheta = (v[g.index(ir, ic, (il + 1) % nl)] - v[g.index(ir, ic, (il + nl - 1) % nl)]) / (2.0 * step);
        let mut sum = dr * dr;
        if dim == 2 {
            sum += (dtheta / r).powi(2);
        } else {
            let dphi = colat_derivative(mesh, v, ir, ic, il, half);
            sum += (dphi / r).powi(2) + (dtheta / (r * phi.sin())).powi(2);
        }
        out[i] = sum;
    }
    out
}

fn colat_derivative(mesh: &VolumeMesh, v: &[f64], ir: usize, ic: usize, il: usize, half: Option<usize>) -> f64 {
    let g = &mesh.grid;
    let (nc, nl) = (g.n_colat(), g.n_lon);
    let here = v[g.index(ir, ic, il)];
    let phi = g.colat_center(ic);
    if ic > 0 && ic + 1 < nc {
        let (a, b) = (g.colat_center(ic - 1), g.colat_center(ic + 1));
        return derivative3([a, phi, b], [v[g.index(ir, ic - 1, il)], here, v[g.index(ir, ic + 1, il)]], 1);
    }
    match (ic == 0, half) {
        (true, Some(h)) => {
            let across = v[g.index(ir, 0, (il + h) % nl)];
            derivative3([-phi, phi, g.colat_center(1)], [across, here, v[g.index(ir, 1, il)]], 1)
        }
        (false, Some(h)) => {
            let across = v[g.index(ir, nc - 1, (il + h) % nl)];
            let mirror = 2.0 * PI - phi;
            derivative3([g.colat_center(nc - 2), phi, mirror], [v[g.index(ir, nc - 2, il)], here, across], 1)
        }
        (true, None) => (v[g.index(ir, 1, il)] - here) / (g.colat_center(1) - phi),
        (false, None) => (here - v[g.index(ir, nc - 2, il)]) / (phi - g.colat_center(nc - 2)),
    }
}

/// Derivative at `x[at]` of the polynomial through the given points.
fn lagrange_derivative(x: &[f64], y: &[f64], at: usize) -> f64 {
    let t = x[at];
    let mut d = 0.0;
    for j in 0..x.len() {
        let mut num = 0.0;
        let mut den = 1.0;
        for m in 0..x.len() {
            if m == j {
                continue;
            }
            den *= x[j] - x[m];
            let mut prod = 1.0;
            for k in 0..x.len() {
                if k != j && k != m {
                    prod *= t - x[k];
                }
            }
            num += prod;
        }
        d += y[j] * num / den;
    }
    d
}

fn derivative3(x: [f64; 3], y: [f64; 3], at: usize) -> f64 {
    lagrange_derivative(&x, &y, at)
}

/// Analytic radial profile used inside an excised ball around the origin.
pub struct Excision<'a> {
    pub radius: f64,
    pub value: &'a dyn Fn(f64) -> f64,
    pub radial_derivative: &'a dyn Fn(f64) -> f64,
}

#[derive(Default, Clone, Copy)]
struct Sums {
    lhs: f64,
    rhs: f64,
    abs_lhs: f64,
    abs_rhs: f64,
}

fn gap(s: &Sums) -> f64 {
    let scale = 0.5 * (s.abs_lhs + s.abs_rhs);
    if scale == 0.0 {
        0.0
    } else {
        (s.lhs - s.rhs).abs() / scale
    }
}

/// Tests `v` against every member of `family`.
pub fn riccati_residual(
    v: &FieldVector,
    q: &Potential,
    mesh: &VolumeMesh,
    family: &[TestFunction],
) -> Result<RiccatiReport> {
    residual_with(v, q, mesh, family, None)
}

/// Same as [`riccati_residual`], with mesh shells inside `excision.radius`
/// replaced by quadrature of the analytic profile (`q` is taken to vanish there).
pub fn residual_with(
    v: &FieldVector,
    q: &Potential,
    mesh: &VolumeMesh,
    family: &[TestFunction],
    excision: Option<&Excision>,
) -> Result<RiccatiReport> {
    mesh.domain.require_bounded("riccati_residual")?;
    v.check_tag(mesh.tag, mesh.len())?;
    q.samples.check_tag(mesh.tag, mesh.len())?;
    if let Some(i) = v.values.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvariantViolation(format!("non-finite v at node {i}")));
    }
    let grad2 = gradient_squared(mesh, &v.values);
    let keep = kept_nodes(mesh, excision);
    let delta = mesh.delta()?;
    let qv = q.values();
    let mut energy = 0.0;
    for i in 0..mesh.len() {
        if keep[i] {
            energy += grad2[i] * delta[i] * mesh.weights[i];
        }
    }
    let mut residuals = Vec::with_capacity(family.len());
    for h in family {
        let mut s = Sums::default();
        for i in 0..mesh.len() {
            if !keep[i] {
                continue;
            }
            let x = &mesh.nodes[i];
            let w = mesh.weights[i];
            let (hv, lh) = (h.value(x), h.laplacian(x));
            s.lhs -= v.values[i] * lh * w;
            s.abs_lhs += (v.values[i] * lh).abs() * w;
            s.rhs += (grad2[i] + qv[i]) * hv * w;
            s.abs_rhs += (grad2[i] + qv[i]) * hv.abs() * w;
        }
        if let Some(ex) = excision {
            let inner = excised_sums(mesh.dim(), ex, h);
            s.lhs += inner.lhs;
            s.rhs += inner.rhs;
            s.abs_lhs += inner.abs_lhs;
            s.abs_rhs += inner.abs_rhs;
            energy_add(&mut energy, mesh.dim(), ex, h.id == "1");
        }
        residuals.push(Residual { id: h.id.clone(), lhs: s.lhs, rhs: s.rhs, gap: gap(&s) });
    }
    Ok(RiccatiReport { residuals, gradient_energy_weighted: energy, dirac_probe: None })
}

fn kept_nodes(mesh: &VolumeMesh, excision: Option<&Excision>) -> Vec<bool> {
    let g = &mesh.grid;
    let n_ang = g.n_colat() * g.n_lon;
    (0..mesh.len())
        .map(|i| match excision {
            None => true,
            Some(ex) => g.radial_edges[i / n_ang + 1] * g.scale > ex.radius * (1.0 + 1e-12),
        })
        .collect()
}

/// Effective excision radius: the outer edge of the last fully excised shell.
fn excised_radius(mesh: &VolumeMesh, radius: f64) -> f64 {
    let g = &mesh.grid;
    g.radial_edges
        .iter()
        .map(|e| e * g.scale)
        .filter(|e| *e <= radius * (1.0 + 1e-12))
        .fold(0.0, f64::max)
}

/// Sphere-averaged product rule over the ball of radius `ex.radius`.
fn ball_rule(dim: usize, radius: f64) -> Vec<(Point, f64)> {
    let radial = gauss_unit(24);
    let mut out = Vec::new();
    if dim == 2 {
        let nt = 32;
        for &(s, wr) in &radial {
            let r = s * radius;
            for k in 0..nt {
                let t = 2.0 * PI * (k as f64 + 0.5) / nt as f64;
                out.push((Point::new2(r * t.cos(), r * t.sin()), wr * radius * r * 2.0 * PI / nt as f64));
            }
        }
    } else {
        let colat = gauss_unit(8);
        let nt = 16;
        for &(s, wr) in &radial {
            let r = s * radius;
            for &(c, wc) in &colat {
                let cz = 2.0 * c - 1.0;
                let sz = (1.0 - cz * cz).sqrt();
                for k in 0..nt {
                    let t = 2.0 * PI * (k as f64 + 0.5) / nt as f64;
                    let p = Point::new3(r * sz * t.cos(), r * sz * t.sin(), r * cz);
                    out.push((p, wr * radius * r * r * 2.0 * wc * 2.0 * PI / nt as f64));
                }
            }
        }
    }
    out
}

fn excised_sums(dim: usize, ex: &Excision, h: &TestFunction) -> Sums {
    let mut s = Sums::default();
    for (p, w) in ball_rule(dim, ex.radius) {
        let r = p.norm();
        let v = (ex.value)(r);
        let g2 = (ex.radial_derivative)(r).powi(2);
        let (hv, lh) = (h.value(&p), h.laplacian(&p));
        s.lhs -= v * lh * w;
        s.abs_lhs += (v * lh).abs() * w;
        s.rhs += g2 * hv * w;
        s.abs_rhs += g2 * hv.abs() * w;
    }
    s
}

fn energy_add(energy: &mut f64, dim: usize, ex: &Excision, first: bool) {
    if !first {
        return;
    }
    for (p, w) in ball_rule(dim, ex.radius) {
        let r = p.norm();
        *energy += (ex.radial_derivative)(r).powi(2) * (1.0 - r) * w;
    }
}

/// Builds `v = log(1 + G(·, 0))` and `u = e^v` with `q = 0`. Reports the
/// residual of `v` and, per test function, `-∫ (u - 1) Δh`, the pairing of `u`
/// with `-Δ` after removing its boundary trace, against the expected `h(0)`.
pub fn counterexample_remark42(mesh: &VolumeMesh, family: &[TestFunction]) -> Result<RiccatiReport> {
    counterexample_with(mesh, family, 0.05)
}

pub fn counterexample_with(mesh: &VolumeMesh, family: &[TestFunction], excise: f64) -> Result<RiccatiReport> {
    let dom = mesh.domain;
    dom.require_bounded("counterexample_remark42")?;
    let dim = dom.dim();
    let origin = Point::ORIGIN;
    let green0 = move |r: f64| {
        if dim == 2 {
            -r.ln() / (2.0 * PI)
        } else {
            (1.0 / r - 1.0) / (4.0 * PI)
        }
    };
    let dgreen0 = move |r: f64| if dim == 2 { -1.0 / (2.0 * PI * r) } else { -1.0 / (4.0 * PI * r * r) };
    let value = move |r: f64| (1.0 + green0(r)).ln();
    let slope = move |r: f64| dgreen0(r) / (1.0 + green0(r));
    let v = mesh.sample(|x| (1.0 + green_kernel(&dom, x, &origin)).ln());
    let q = Potential::zero(mesh);
    let radius = excised_radius(mesh, excise);
    let ex = Excision { radius, value: &value, radial_derivative: &slope };
    let excision = (radius > 0.0).then_some(&ex);
    let mut report = residual_with(&v, &q, mesh, family, excision)?;
    let keep = kept_nodes(mesh, excision);
    let mut probes = Vec::with_capacity(family.len());
    for h in family {
        let mut val = 0.0;
        for i in 0..mesh.len() {
            if keep[i] {
                let x = &mesh.nodes[i];
                val -= green0(x.norm()) * h.laplacian(x) * mesh.weights[i];
            }
        }
        if radius > 0.0 {
            for (p, w) in ball_rule(dim, radius) {
                val -= green0(p.norm()) * h.laplacian(&p) * w;
            }
        }
        probes.push(DiracProbe { id: h.id.clone(), value: val, expected: h.value(&origin) });
    }
    report.dirac_probe = Some(probes);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_volume_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn family_sizes_and_simple_laplacian() {
        let ball = test_family(&ModelDomain::unit_ball()).unwrap();
        let disk = test_family(&ModelDomain::unit_disk()).unwrap();
        assert_eq!(ball.len(), 12);
        assert_eq!(disk.len(), 8);
        let p = Point::new3(0.1, -0.3, 0.2);
        assert_eq!(ball[0].laplacian(&p), -6.0);
        assert_eq!(disk[0].laplacian(&Point::new2(0.3, 0.1)), -4.0);
        assert!(test_family(&ModelDomain::whole_space(3.0).unwrap()).is_err());
    }

    #[test]
    fn vanishes_on_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dom in [ModelDomain::unit_ball(), ModelDomain::unit_disk()] {
            let fam = test_family(&dom).unwrap();
            for _ in 0..16 {
                let mut c = [0.0; 3];
                for k in 0..dom.dim() {
                    c[k] = rng.random_range(-1.0..1.0);
                }
                let z = Point(c).scaled(1.0 / Point(c).norm());
                for h in &fam {
                    assert!(h.value(&z).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let step = 1e-4;
        for dom in [ModelDomain::unit_ball(), ModelDomain::unit_disk()] {
            let n = dom.dim();
            for h in test_family(&dom).unwrap() {
                for _ in 0..100 {
                    let mut c = [0.0; 3];
                    for k in 0..n {
                        c[k] = rng.random_range(-0.55..0.55);
                    }
                    let x = Point(c);
                    let mut lap = 0.0;
                    let grad = h.gradient(&x);
                    for k in 0..n {
                        let (mut a, mut b) = (c, c);
                        a[k] += step;
                        b[k] -= step;
                        let (fa, fb) = (h.value(&Point(a)), h.value(&Point(b)));
                        lap += (fa - 2.0 * h.value(&x) + fb) / (step * step);
                        let fd = (fa - fb) / (2.0 * step);
                        assert!((fd - grad[k]).abs() <= 1e-6 * (1.0 + grad[k].abs()), "{}", h.id);
                    }
                    let exact = h.laplacian(&x);
                    assert!((lap - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{} {lap} {exact}", h.id);
                }
            }
        }
    }

    #[test]
    fn log_substitution_rules() {
        let m = build_volume_mesh(ModelDomain::unit_ball(), 4, 4).unwrap();
        assert!(log_substitution(&m.constant(1.0)).unwrap().values.iter().all(|&v| v == 0.0));
        assert!(matches!(log_substitution(&m.constant(0.5)), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn zero_solution_has_zero_gaps() {
        let m = build_volume_mesh(ModelDomain::unit_ball(), 8, 8).unwrap();
        let fam = test_family(&m.domain).unwrap();
        let rep = riccati_residual(&m.constant(0.0), &Potential::zero(&m), &m, &fam).unwrap();
        assert_eq!(rep.residuals.len(), 12);
        assert_eq!(rep.max_gap(), 0.0);
    }

    #[test]
    fn gradient_of_smooth_fields() {
        for dom in [ModelDomain::unit_ball(), ModelDomain::unit_disk()] {
            let m = build_volume_mesh(dom, 24, 32).unwrap();
            let f = |p: &Point| p.0[0] + 0.5 * p.norm2();
            let v: Vec<f64> = m.nodes.iter().map(f).collect();
            let g2 = gradient_squared(&m, &v);
            let mut worst = 0.0f64;
            for (p, got) in m.nodes.iter().zip(&g2) {
                let exact = (1.0 + p.0[0]).powi(2) + p.0[1].powi(2) + p.0[2].powi(2);
                worst = worst.max((got - exact).abs());
            }
            assert!(worst < 0.1, "{worst}");
        }
    }

    #[test]
    fn stencils_exact_on_polynomials() {
        let f = |x: f64| 2.0 * x * x - x + 3.0;
        let xs = [0.1, 0.35, 0.9];
        for at in 0..3 {
            let d = derivative3(xs, [f(xs[0]), f(xs[1]), f(xs[2])], at);
            assert!((d - (4.0 * xs[at] - 1.0)).abs() < 1e-12);
        }
        let p = |x: f64| x.powi(4) - 3.0 * x.powi(3) + x;
        let xs = [-0.2, 0.05, 0.3, 0.45, 0.8];
        let ys: Vec<f64> = xs.iter().map(|&x| p(x)).collect();
        for at in 0..5 {
            let t = xs[at];
            let exact = 4.0 * t.powi(3) - 9.0 * t * t + 1.0;
            assert!((lagrange_derivative(&xs, &ys, at) - exact).abs() < 1e-11);
        }
    }
}
