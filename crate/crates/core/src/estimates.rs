//! Two-sided pointwise estimates with fitted constants. Every fit is the
//! tightest enclosure of the computed solution; what carries information is
//! whether the constants stay finite and stable under refinement.

use serde::{Deserialize, Serialize};

use crate::assembly::{KernelKind, KernelMatrix};
use crate::domain::{green_kernel, poisson_unchecked, Point};
use crate::error::{invalid, Error, Result};
use crate::mesh::{BoundaryMesh, FieldVector, VolumeMesh};
use crate::operators::{apply_t, ModifierField, Potential};
use crate::solver::SolveOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    U0Envelope,
    U1BoundaryIntegral,
    RieszSandwich,
    FnvEnvelope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kind: EstimateKind,
    /// Exponent constant of the upper bound.
    #[serde(with = "crate::real")]
    pub fitted_upper_c: f64,
    /// Exponent constant of the lower bound.
    #[serde(with = "crate::real")]
    pub fitted_lower_c: f64,
    /// Prefactors `(upper, lower)`.
    pub fitted_prefactors: (f64, f64),
    /// Largest relative excess of either bound over the solution; `≤ 1e-9` when enclosed.
    #[serde(with = "crate::real")]
    pub max_violation: f64,
    pub nodes_checked: usize,
    pub nodes_excluded: usize,
}

impl EstimateReport {
    pub fn encloses(&self) -> bool {
        self.max_violation <= 1e-9
    }

    pub fn ordered(&self) -> bool {
        self.fitted_lower_c <= self.fitted_upper_c
    }
}

/// Tightest `(C, c)` with `lower e^{c E} ≤ u / m ≤ upper e^{C E}`. Returns
/// `(0, 0)` when the exponent field vanishes.
fn fit_exponents(ratio: &[f64], exponent: &[f64], upper: f64, lower: f64) -> (f64, f64) {
    let scale = exponent.iter().fold(0.0f64, |m, e| m.max(*e));
    if scale == 0.0 {
        return (0.0, 0.0);
    }
    let (mut big, mut small) = (0.0f64, f64::INFINITY);
    for (r, e) in ratio.iter().zip(exponent) {
        if *e > 1e-12 * scale {
            big = big.max((r / upper).ln() / e);
            small = small.min((r / lower).ln() / e);
        }
    }
    (big, small.max(0.0))
}

fn violation(ratio: &[f64], exponent: &[f64], pre: (f64, f64), c: (f64, f64)) -> f64 {
    ratio.iter().zip(exponent).fold(f64::NEG_INFINITY, |m, (r, e)| {
        let hi = pre.0 * (c.0 * e).exp();
        let lo = pre.1 * (c.1 * e).exp();
        m.max((r - hi) / r).max((lo - r) / r)
    })
}

const DELTA_FLOOR: f64 = 1e-6;

/// `c₁ δ e^{c E} ≤ u₀ ≤ C₁ δ e^{C E}` with `E = G(δq)/δ`; the prefactors come
/// from the range of `G1/δ`.
pub fn verify_u0_envelope(
    u0: &FieldVector,
    green: &KernelMatrix,
    q: &Potential,
    mesh: &VolumeMesh,
) -> Result<EstimateReport> {
    let delta = mesh.delta()?;
    u0.check_tag(mesh.tag, mesh.len())?;
    let g1 = green.apply(&mesh.constant(1.0))?;
    let dq = mesh.field(delta.iter().zip(q.values()).map(|(d, q)| d * q).collect())?;
    let gdq = green.apply(&dq)?;
    let keep: Vec<usize> = (0..mesh.len()).filter(|&i| delta[i] >= DELTA_FLOOR).collect();
    let g1_ratio: Vec<f64> = keep.iter().map(|&i| g1.values[i] / delta[i]).collect();
    let pre = (
        g1_ratio.iter().fold(0.0f64, |m, v| m.max(*v)),
        g1_ratio.iter().fold(f64::INFINITY, |m, v| m.min(*v)),
    );
    let ratio: Vec<f64> = keep.iter().map(|&i| u0.values[i] / delta[i]).collect();
    let expo: Vec<f64> = keep.iter().map(|&i| gdq.values[i] / delta[i]).collect();
    let c = fit_exponents(&ratio, &expo, pre.0, pre.1);
    Ok(EstimateReport {
        kind: EstimateKind::U0Envelope,
        fitted_upper_c: c.0,
        fitted_lower_c: c.1,
        fitted_prefactors: pre,
        max_violation: violation(&ratio, &expo, pre, c),
        nodes_checked: keep.len(),
        nodes_excluded: mesh.len() - keep.len(),
    })
}

/// `m e^{c Tm/m} ≤ Σ Tʲ m ≤ m e^{C Tm/m}`, prefactors fixed at 1.
pub fn fnv_envelope_check(
    mesh: &VolumeMesh,
    green: &KernelMatrix,
    q: &Potential,
    modifier: &ModifierField,
    opts: &SolveOptions,
) -> Result<EstimateReport> {
    let m = &modifier.values;
    m.check_tag(mesh.tag, mesh.len())?;
    let tm = apply_t(green, q, m)?;
    let v0 = modifier_series(green, q, m, opts)?;
    let ratio: Vec<f64> = v0.values.iter().zip(&m.values).map(|(v, m)| v / m).collect();
    let expo: Vec<f64> = tm.values.iter().zip(&m.values).map(|(t, m)| t / m).collect();
    let c = fit_exponents(&ratio, &expo, 1.0, 1.0);
    Ok(EstimateReport {
        kind: EstimateKind::FnvEnvelope,
        fitted_upper_c: c.0,
        fitted_lower_c: c.1,
        fitted_prefactors: (1.0, 1.0),
        max_violation: violation(&ratio, &expo, (1.0, 1.0), c),
        nodes_checked: mesh.len(),
        nodes_excluded: 0,
    })
}

/// `Σ_{j≥0} Tʲ m`; divergence is an error carrying the partial sums.
pub fn modifier_series(green: &KernelMatrix, q: &Potential, m: &FieldVector, opts: &SolveOptions) -> Result<FieldVector> {
    let mut term = m.clone();
    let mut sum = m.clone();
    let mut sups = vec![sum.sup()];
    let (mut prev, mut rising) = (term.sup(), 0);
    for it in 1..=opts.j_max {
        term = apply_t(green, q, &term)?;
        for (s, t) in sum.values.iter_mut().zip(&term.values) {
            *s += t;
        }
        let (inc, s) = (term.sup(), sum.sup());
        sups.push(s);
        rising = if inc >= prev { rising + 1 } else { 0 };
        prev = inc;
        if !s.is_finite() || (rising >= 5 && s >= 1e3 * sups[0]) {
            return Err(Error::SeriesDiverged { iterations: it, last_sup: s, partial_sums_sup: sups });
        }
        if inc <= opts.tol_series * s {
            return Ok(sum);
        }
    }
    Err(Error::SeriesDiverged { iterations: opts.j_max, last_sup: sum.sup(), partial_sums_sup: sups })
}

/// `e^{c I₂q} ≤ u ≤ e^{C I₂q}` on the whole space.
pub fn verify_riesz_sandwich(
    u: &FieldVector,
    green: &KernelMatrix,
    q: &Potential,
    mesh: &VolumeMesh,
) -> Result<EstimateReport> {
    if mesh.domain.is_bounded() {
        return Err(invalid("the Riesz sandwich needs the whole-space domain"));
    }
    u.check_tag(mesh.tag, mesh.len())?;
    let i2q = green.apply(&q.samples)?;
    let c = fit_exponents(&u.values, &i2q.values, 1.0, 1.0);
    Ok(EstimateReport {
        kind: EstimateKind::RieszSandwich,
        fitted_upper_c: c.0,
        fitted_lower_c: c.1,
        fitted_prefactors: (1.0, 1.0),
        max_violation: violation(&u.values, &i2q.values, (1.0, 1.0), c),
        nodes_checked: mesh.len(),
        nodes_excluded: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub node: usize,
    pub u1: f64,
    /// Boundary integral at the fitted upper constants.
    #[serde(with = "crate::real")]
    pub upper: f64,
    /// Boundary integral at the fitted lower constants.
    #[serde(with = "crate::real")]
    pub lower: f64,
    /// Boundary node where the upper integrand peaks.
    pub peak_boundary_node: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryIntegralReport {
    pub report: EstimateReport,
    pub probes: Vec<ProbeRecord>,
}

/// `probes` interior nodes stratified by distance to the boundary.
pub fn stratified_probes(mesh: &VolumeMesh, count: usize) -> Result<Vec<usize>> {
    let delta = mesh.delta()?;
    let mut order: Vec<usize> = (0..mesh.len()).collect();
    order.sort_by(|&a, &b| delta[a].total_cmp(&delta[b]).then(a.cmp(&b)));
    let count = count.min(order.len()).max(1);
    Ok((0..count).map(|k| order[(k * order.len()) / count + order.len() / (2 * count)]).collect())
}

/// Nearest node to each radius along the first axis.
pub fn probes_on_radius(mesh: &VolumeMesh, radii: &[f64]) -> Vec<usize> {
    radii
        .iter()
        .map(|&r| {
            let target = Point([r, 0.0, 0.0]);
            (0..mesh.len())
                .min_by(|&a, &b| mesh.nodes[a].dist(&target).total_cmp(&mesh.nodes[b].dist(&target)))
                .expect("nonempty mesh")
        })
        .collect()
}

/// `c₁ ∫ e^{c₂ I} P dσ ≤ u₁(x) ≤ C₂ ∫ e^{C₃ I} P dσ` with
/// `I(x, z) = ∫ G(x,y) P(y,z)/P(x,z) q(y) dy`. The prefactors are fixed at 1
/// and the exponents fitted.
pub fn verify_u1_boundary_integral(
    u1: &FieldVector,
    green: &KernelMatrix,
    poisson: &KernelMatrix,
    q: &Potential,
    vmesh: &VolumeMesh,
    bmesh: &BoundaryMesh,
    probes: &[usize],
) -> Result<BoundaryIntegralReport> {
    if poisson.kind != KernelKind::Poisson || poisson.row_tag != bmesh.tag || poisson.col_tag != vmesh.tag {
        return Err(Error::MeshMismatch("Poisson matrix does not match the meshes".into()));
    }
    u1.check_tag(vmesh.tag, vmesh.len())?;
    let delta = vmesh.delta()?;
    let min_delta = 2.0 * vmesh.boundary_spacing();
    let dim = vmesh.dim();
    let kept: Vec<usize> = probes.iter().copied().filter(|&i| delta[i] >= min_delta).collect();
    struct Probe {
        node: usize,
        exponent: Vec<f64>,
        harmonic: Vec<f64>,
    }
    let qv = q.values();
    let data: Vec<Probe> = kept
        .iter()
        .map(|&i| {
            let x = &vmesh.nodes[i];
            // a_y = G(x, y) q(y), so P·a = Σ_y P(y,z) w_y G(x,y) q(y)
            let a: Vec<f64> = (0..vmesh.len()).map(|j| green.get(i, j) / vmesh.weights[j] * qv[j]).collect();
            let pa = poisson.matvec(&a);
            // harmonic measure of x, renormalized so constants integrate exactly
            let mut harmonic: Vec<f64> = bmesh.nodes.iter().map(|z| poisson_unchecked(dim, x, z)).collect();
            let mass = bmesh.integrate(&harmonic);
            harmonic.iter_mut().for_each(|h| *h /= mass);
            let exponent = pa.iter().zip(&harmonic).map(|(s, p)| s / (p * mass)).collect();
            Probe { node: i, exponent, harmonic }
        })
        .collect();
    let integral = |p: &Probe, c: f64| -> f64 {
        let vals: Vec<f64> = p.exponent.iter().zip(&p.harmonic).map(|(e, h)| (c * e).exp() * h).collect();
        bmesh.integrate(&vals)
    };
    let (upper_pre, lower_pre) = (1.0, 1.0);
    let active = data.iter().any(|p| p.exponent.iter().any(|&e| e > 0.0));
    let (mut c_up, mut c_lo) = (0.0, 0.0);
    if active {
        // smallest C₃ with the upper bound holding at every probe
        for p in &data {
            let u = u1.values[p.node];
            c_up = f64::max(c_up, solve_monotone(|c| upper_pre * integral(p, c), u, true));
        }
        c_lo = f64::INFINITY;
        for p in &data {
            let u = u1.values[p.node];
            c_lo = f64::min(c_lo, solve_monotone(|c| lower_pre * integral(p, c), u, false));
        }
    }
    let mut max_violation = f64::NEG_INFINITY;
    let mut records = Vec::with_capacity(data.len());
    for p in &data {
        let u = u1.values[p.node];
        let hi = upper_pre * integral(p, c_up);
        let lo = lower_pre * integral(p, c_lo);
        max_violation = max_violation.max((u - hi) / u).max((lo - u) / u);
        let peak = p
            .exponent
            .iter()
            .zip(&p.harmonic)
            .map(|(e, h)| (c_up * e).exp() * h)
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(0, |(k, _)| k);
        records.push(ProbeRecord { node: p.node, u1: u, upper: hi, lower: lo, peak_boundary_node: peak });
    }
    Ok(BoundaryIntegralReport {
        report: EstimateReport {
            kind: EstimateKind::U1BoundaryIntegral,
            fitted_upper_c: c_up,
            fitted_lower_c: c_lo,
            fitted_prefactors: (upper_pre, lower_pre),
            max_violation,
            nodes_checked: data.len(),
            nodes_excluded: probes.len() - data.len(),
        },
        probes: records,
    })
}

/// For nondecreasing `f` with `f(0)` near `target`: the least `c ≥ 0` with
/// `f(c) ≥ target` (`upper`) or the greatest with `f(c) ≤ target`.
fn solve_monotone(f: impl Fn(f64) -> f64, target: f64, upper: bool) -> f64 {
    if upper && f(0.0) >= target {
        return 0.0;
    }
    if !upper && f(0.0) > target {
        return 0.0;
    }
    let mut hi = 1.0;
    while f(hi) < target {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    if upper {
        hi
    } else {
        lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalLimitRow {
    pub t: f64,
    /// `G(φq)(x_t) / δ(x_t)` at `x_t = (1 - t) z`
    pub ratio: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalLimitReport {
    /// `∫ P(y, z) φ(y) q(y) dy`
    pub limit: f64,
    pub rows: Vec<NormalLimitRow>,
    pub excluded_steps: Vec<f64>,
}

/// Approaches the boundary point `z` along its normal and compares
/// `G(φq)/δ` with the Poisson-side integral. Steps finer than the outermost
/// radial cell are skipped.
pub fn verify_normal_limit(
    mesh: &VolumeMesh,
    q: &Potential,
    phi: &FieldVector,
    z: &Point,
    steps: &[f64],
) -> Result<NormalLimitReport> {
    mesh.domain.require_bounded("verify_normal_limit")?;
    phi.check_tag(mesh.tag, mesh.len())?;
    q.samples.check_tag(mesh.tag, mesh.len())?;
    if (z.norm() - 1.0).abs() > 1e-12 {
        return Err(invalid("z must lie on the boundary"));
    }
    let dom = mesh.domain;
    let dim = dom.dim();
    let spacing = mesh.boundary_spacing();
    let density: Vec<(usize, f64)> = (0..mesh.len())
        .map(|i| (i, phi.values[i] * q.values()[i] * mesh.weights[i]))
        .filter(|(_, d)| *d != 0.0)
        .collect();
    let limit: f64 = density.iter().map(|&(i, d)| poisson_unchecked(dim, &mesh.nodes[i], z) * d).sum();
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for &t in steps {
        if t < spacing {
            excluded.push(t);
            continue;
        }
        let x = z.scaled(1.0 - t);
        let g: f64 = density.iter().map(|&(i, d)| green_kernel(&dom, &x, &mesh.nodes[i]) * d).sum();
        let ratio = g / t;
        rows.push(NormalLimitRow { t, ratio, gap: (ratio - limit).abs() });
    }
    Ok(NormalLimitReport { limit, rows, excluded_steps: excluded })
}
