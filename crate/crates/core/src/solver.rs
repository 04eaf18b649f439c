//! Minimal solutions by Neumann series: `u₀ = Σ Tʲ G1`, the gauge
//! `u₁ = 1 + Σ Tʲ Gq`, and the whole-space variant with the Newtonian kernel.

use faer::prelude::*;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::assembly::{KernelKind, KernelMatrix};
use crate::conditions::riesz_trace_mass;
use crate::error::{invalid, Error, Result};
use crate::mesh::{FieldVector, VolumeMesh};
use crate::operators::{apply_green, apply_t, Potential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    DivergenceDetected,
    IterationCapReached,
}

impl SolveStatus {
    pub fn label(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::DivergenceDetected => "diverged",
            SolveStatus::IterationCapReached => "iteration_cap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Relative sup-norm size of the last term at which the series stops.
    pub tol_series: f64,
    pub j_max: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol_series: 1e-8, j_max: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub solution: Option<FieldVector>,
    /// Sup norm of each partial sum of the series (without the additive 1 of a gauge).
    #[serde(with = "crate::real::vec")]
    pub partial_sums_sup: Vec<f64>,
    #[serde(with = "crate::real::vec")]
    pub increments_sup: Vec<f64>,
    pub iterations_used: usize,
    #[serde(with = "crate::real::opt")]
    pub oracle_gap: Option<f64>,
    #[serde(with = "crate::real")]
    pub l1_norm: f64,
    /// `∫ |u| δ q`, bounded domains only.
    #[serde(with = "crate::real::opt")]
    pub l1_deltaq_norm: Option<f64>,
    /// `∫ q / (1 + |y|)`, whole space only.
    #[serde(with = "crate::real::opt")]
    pub trace_mass: Option<f64>,
    /// `sup |u - (Tu + Gf)|` of the returned solution.
    #[serde(with = "crate::real")]
    pub residual: f64,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Solution value at the node closest to the origin.
    pub fn center_value(&self, mesh: &VolumeMesh) -> f64 {
        match &self.solution {
            Some(u) => {
                let i = nearest_to_origin(mesh);
                u.values[i]
            }
            None => f64::NAN,
        }
    }
}

pub(crate) fn nearest_to_origin(mesh: &VolumeMesh) -> usize {
    let mut best = 0;
    for (i, p) in mesh.nodes.iter().enumerate() {
        if p.norm2() < mesh.nodes[best].norm2() {
            best = i;
        }
    }
    best
}

fn require_green(green: &KernelMatrix, mesh: &VolumeMesh) -> Result<()> {
    if !green.is_square() || green.col_tag != mesh.tag {
        return Err(Error::MeshMismatch("Green matrix was not assembled on this mesh".into()));
    }
    if !matches!(green.kind, KernelKind::Green) {
        return Err(invalid(format!("expected a Green matrix, got {}", green.kind)));
    }
    Ok(())
}

const STALL_STEPS: usize = 5;
const BLOWUP_GROWTH: f64 = 1e3;

/// Partial sums of `Σ_{j≥0} Tʲ (G f)`.
pub fn neumann_solve(
    mesh: &VolumeMesh,
    green: &KernelMatrix,
    q: &Potential,
    f: &FieldVector,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    require_green(green, mesh)?;
    if !(opts.tol_series > 0.0) || opts.j_max == 0 {
        return Err(invalid("tol_series must be positive and j_max at least 1"));
    }
    if f.values.iter().any(|&v| v < 0.0) {
        return Err(invalid("source must be nonnegative"));
    }
    let gf = apply_green(green, f)?;
    let mut term = gf.clone();
    let mut sum = gf.clone();
    let first_sup = sum.sup();
    let mut partial_sums_sup = vec![first_sup];
    let mut increments_sup = vec![term.sup()];
    let mut status = SolveStatus::IterationCapReached;
    let mut rising = 0;
    let mut iterations = 0;
    if first_sup == 0.0 {
        status = SolveStatus::Converged;
    }
    while status == SolveStatus::IterationCapReached && iterations < opts.j_max {
        iterations += 1;
        let next = apply_t(green, q, &term)?;
        let inc = next.sup();
        for (s, t) in sum.values.iter_mut().zip(&next.values) {
            *s += t;
        }
        let s_sup = sum.sup();
        let prev = *increments_sup.last().expect("nonempty");
        partial_sums_sup.push(s_sup);
        increments_sup.push(inc);
        term = next;
        if !s_sup.is_finite() || !inc.is_finite() {
            status = SolveStatus::DivergenceDetected;
            break;
        }
        if inc <= opts.tol_series * s_sup {
            status = SolveStatus::Converged;
            break;
        }
        rising = if inc >= prev { rising + 1 } else { 0 };
        if rising >= STALL_STEPS && s_sup >= BLOWUP_GROWTH * first_sup {
            status = SolveStatus::DivergenceDetected;
        }
    }
    let (solution, residual) = if status == SolveStatus::DivergenceDetected {
        (None, f64::NAN)
    } else {
        let res = fixed_point_residual(green, q, &sum, &gf)?;
        (Some(sum), res)
    };
    let mut report = SolveReport {
        status,
        solution,
        partial_sums_sup,
        increments_sup,
        iterations_used: iterations,
        oracle_gap: None,
        l1_norm: f64::NAN,
        l1_deltaq_norm: None,
        trace_mass: None,
        residual,
    };
    fill_norms(&mut report, mesh, q);
    Ok(report)
}

fn fixed_point_residual(green: &KernelMatrix, q: &Potential, u: &FieldVector, gf: &FieldVector) -> Result<f64> {
    let tu = apply_t(green, q, u)?;
    Ok(u.values
        .iter()
        .zip(&tu.values)
        .zip(&gf.values)
        .fold(0.0f64, |m, ((u, t), g)| m.max((u - t - g).abs())))
}

fn fill_norms(report: &mut SolveReport, mesh: &VolumeMesh, q: &Potential) {
    let Some(u) = &report.solution else { return };
    let abs: Vec<f64> = u.values.iter().map(|v| v.abs()).collect();
    report.l1_norm = mesh.integrate(&abs);
    report.l1_deltaq_norm = mesh.delta().ok().map(|d| {
        let w: Vec<f64> = abs.iter().zip(d).zip(q.values()).map(|((u, d), q)| u * d * q).collect();
        mesh.integrate(&w)
    });
}

/// Relative sup distance between a solution and a reference.
pub fn sup_relative_gap(u: &FieldVector, reference: &FieldVector) -> f64 {
    let scale = reference.sup();
    let diff = u.values.iter().zip(&reference.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// The system matrix `I - T_h`, row-major.
fn system_matrix(green: &KernelMatrix, q: &Potential) -> Mat<f64> {
    let qv = q.values();
    Mat::from_fn(green.rows, green.cols, |i, j| {
        let t = green.get(i, j) * qv[j];
        if i == j {
            1.0 - t
        } else {
            -t
        }
    })
}

const SINGULAR_THRESHOLD: f64 = 1e-10;

/// Solves `(I - T_h) u = G_h f` by dense LU.
pub fn dense_oracle(green: &KernelMatrix, q: &Potential, f: &FieldVector) -> Result<FieldVector> {
    if !green.is_square() {
        return Err(invalid("dense oracle needs a square Green matrix"));
    }
    q.samples.check_tag(green.col_tag, green.cols)?;
    let gf = green.apply(f)?;
    if q.is_zero() {
        return Ok(gf);
    }
    let n = green.rows;
    let m = system_matrix(green, q);
    let lu = m.partial_piv_lu();
    let sigma = smallest_singular_value(&lu, n);
    if !(sigma >= SINGULAR_THRESHOLD) {
        return Err(Error::SingularSystem { sigma_min: sigma });
    }
    let mut rhs = Mat::from_fn(n, 1, |i, _| gf.values[i]);
    lu.solve_in_place(rhs.as_mut());
    let values: Vec<f64> = (0..n).map(|i| rhs[(i, 0)]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem { sigma_min: 0.0 });
    }
    FieldVector::new(values, green.row_tag, n)
}

/// Inverse iteration on `MᵀM`, reusing the LU factors of `M`.
fn smallest_singular_value(lu: &impl Solve<f64>, n: usize) -> f64 {
    let mut x = Mat::from_fn(n, 1, |i, _| 1.0 + (i % 7) as f64 * 0.1);
    let mut estimate = f64::INFINITY;
    for _ in 0..30 {
        let norm = x.norm_l2();
        if !(norm > 0.0 && norm.is_finite()) {
            return 0.0;
        }
        x /= norm;
        let mut y = x.clone();
        lu.solve_transpose_in_place(y.as_mut());
        lu.solve_in_place(y.as_mut());
        let growth = y.norm_l2();
        if !growth.is_finite() || growth == 0.0 {
            return 0.0;
        }
        let next = 1.0 / growth.sqrt();
        let done = (next - estimate).abs() <= 1e-6 * next;
        estimate = next;
        x = y;
        if done {
            break;
        }
    }
    estimate
}

/// `u₁ = 1 + Σ_{j≥0} Tʲ (G q)`.
pub fn gauge(mesh: &VolumeMesh, green: &KernelMatrix, q: &Potential, opts: &SolveOptions) -> Result<SolveReport> {
    let mut report = neumann_solve(mesh, green, q, &q.samples, opts)?;
    if let Some(u) = &mut report.solution {
        for v in &mut u.values {
            *v += 1.0;
        }
    }
    fill_norms(&mut report, mesh, q);
    Ok(report)
}

/// Fills `oracle_gap` from a dense solve of the same system.
pub fn attach_oracle(
    report: &mut SolveReport,
    green: &KernelMatrix,
    q: &Potential,
    f: &FieldVector,
    shift: f64,
) -> Result<()> {
    let reference = dense_oracle(green, q, f)?.map(|v| v + shift);
    if let Some(u) = &report.solution {
        report.oracle_gap = Some(sup_relative_gap(u, &reference));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimalityProbe {
    pub holds: bool,
    /// `min (w - s_J)` over nodes and partial sums.
    pub margin: f64,
}

/// Checks that every partial sum of the series stays below a supersolution
/// `w ≥ Tw + Gf`.
pub fn minimality_probe(
    green: &KernelMatrix,
    q: &Potential,
    f: &FieldVector,
    supersolution: &FieldVector,
    opts: &SolveOptions,
) -> Result<MinimalityProbe> {
    let w = supersolution;
    let gf = green.apply(f)?;
    let tw = apply_t(green, q, w)?;
    let slack = 1e-8 * w.sup().max(1.0);
    for i in 0..w.len() {
        if w.values[i] < tw.values[i] + gf.values[i] - slack {
            return Err(invalid(format!(
                "not a supersolution at node {i}: w = {}, Tw + Gf = {}",
                w.values[i],
                tw.values[i] + gf.values[i]
            )));
        }
    }
    let mut term = gf.clone();
    let mut sum = gf;
    let mut margin = f64::INFINITY;
    for _ in 0..=opts.j_max {
        for (s, wv) in sum.values.iter().zip(&w.values) {
            margin = margin.min(wv - s);
        }
        term = apply_t(green, q, &term)?;
        let inc = term.sup();
        if !inc.is_finite() || inc <= opts.tol_series * sum.sup() {
            break;
        }
        for (s, t) in sum.values.iter_mut().zip(&term.values) {
            *s += t;
        }
    }
    Ok(MinimalityProbe { holds: margin >= -slack, margin })
}

/// `u = 1 + Σ_{j≥1} Tʲ 1` with the Newtonian kernel on a truncation ball.
pub fn riesz_solve(
    mesh: &VolumeMesh,
    green: &KernelMatrix,
    q: &Potential,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if mesh.domain.is_bounded() {
        return Err(invalid("riesz_solve needs the whole-space domain"));
    }
    let limit = 0.9 * mesh.domain.truncation_radius;
    let support = q.support_radius(mesh);
    if support > limit {
        return Err(invalid(format!("potential support reaches |x| = {support}, beyond {limit}")));
    }
    let mut report = gauge(mesh, green, q, opts)?;
    report.trace_mass = Some(riesz_trace_mass(mesh, q)?);
    Ok(report)
}
