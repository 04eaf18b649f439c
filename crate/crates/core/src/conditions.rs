//! Solvability diagnostics: the trace constant `β²` as the norm of `T` on
//! `L²(q dx)`, the balayage `P*(δq)` and its exponential integrability,
//! Carleson and BMO norms, and mass diagnostics for truncated potentials.

use serde::{Deserialize, Serialize};

use crate::assembly::{KernelKind, KernelMatrix};
use crate::error::{invalid, Result};
use crate::mesh::{BoundaryMesh, FieldVector, VolumeMesh};
use crate::operators::{apply_t, Potential, PotentialForm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    #[serde(with = "crate::real")]
    pub beta_squared: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn q_inner(a: &[f64], b: &[f64], q: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(q.iter().zip(w)).map(|((x, y), (q, w))| x * y * q * w).sum()
}

/// Power iteration for `‖T‖` in `⟨f, g⟩ = Σ f g q w`, from the constant vector.
pub fn mazya_beta(
    mesh: &VolumeMesh,
    green: &KernelMatrix,
    q: &Potential,
    tol: f64,
    iter_max: usize,
) -> Result<BetaEstimate> {
    if !green.is_square() || green.kind != KernelKind::Green {
        return Err(invalid("mazya_beta needs a Green matrix"));
    }
    q.samples.check_tag(mesh.tag, mesh.len())?;
    if q.is_zero() {
        return Ok(BetaEstimate { beta_squared: 0.0, iterations: 0, converged: true });
    }
    let (qv, w) = (q.values(), &mesh.weights);
    let mut f = mesh.constant(1.0);
    let norm = q_inner(&f.values, &f.values, qv, w).sqrt();
    f = f.map(|v| v / norm);
    let mut rho = 0.0;
    for it in 1..=iter_max {
        let tf = apply_t(green, q, &f)?;
        let next = q_inner(&tf.values, &f.values, qv, w);
        let norm = q_inner(&tf.values, &tf.values, qv, w).sqrt();
        if norm == 0.0 {
            return Ok(BetaEstimate { beta_squared: 0.0, iterations: it, converged: true });
        }
        f = tf.map(|v| v / norm);
        if (next - rho).abs() <= tol * next.abs() {
            return Ok(BetaEstimate { beta_squared: next, iterations: it, converged: true });
        }
        rho = next;
    }
    Ok(BetaEstimate { beta_squared: rho, iterations: iter_max, converged: false })
}

/// `P*(δq)` on the boundary nodes.
pub fn balayage_delta_q(poisson: &KernelMatrix, vmesh: &VolumeMesh, q: &Potential) -> Result<FieldVector> {
    if poisson.kind != KernelKind::Poisson {
        return Err(invalid("balayage needs a Poisson matrix"));
    }
    let delta = vmesh.field(vmesh.delta()?.to_vec())?;
    let dq = delta.zip_map(&q.samples, |d, q| d * q)?;
    poisson.apply(&dq)
}

/// `∫_{∂Ω} e^{C f} dσ` for each `C`; `+∞` where the integrand overflows.
pub fn exp_integrability(balayage: &FieldVector, bmesh: &BoundaryMesh, constants: &[f64]) -> Result<Vec<(f64, f64)>> {
    balayage.check_tag(bmesh.tag, bmesh.len())?;
    Ok(constants
        .iter()
        .map(|&c| {
            let vals: Vec<f64> = balayage.values.iter().map(|f| (c * f).exp()).collect();
            let s = bmesh.integrate(&vals);
            (c, if s.is_finite() { s } else { f64::INFINITY })
        })
        .collect())
}

/// `2^{-7}, …, 2^0` times the domain diameter.
pub fn dyadic_radii(diameter: f64) -> Vec<f64> {
    (0..8).rev().map(|k| diameter / f64::from(1u32 << k)).collect()
}

/// Sampled `sup r^{1-n} Σ_{|y - x| < r} δ q w` over boundary nodes and `radii`.
pub fn carleson_norm(vmesh: &VolumeMesh, q: &Potential, bmesh: &BoundaryMesh, radii: &[f64]) -> Result<f64> {
    let delta = vmesh.delta()?;
    q.samples.check_tag(vmesh.tag, vmesh.len())?;
    let diam = vmesh.domain.diameter();
    if radii.iter().any(|&r| !(r > 0.0 && r <= diam * (1.0 + 1e-12))) {
        return Err(invalid("radii must lie in (0, diam]"));
    }
    let mass: Vec<(usize, f64)> = q
        .values()
        .iter()
        .zip(delta)
        .zip(&vmesh.weights)
        .enumerate()
        .filter(|(_, ((q, _), _))| **q > 0.0)
        .map(|(i, ((q, d), w))| (i, q * d * w))
        .collect();
    let n = vmesh.dim() as i32;
    let mut best = 0.0f64;
    let mut acc = vec![0.0; radii.len()];
    for x in &bmesh.nodes {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for &(i, m) in &mass {
            let d = vmesh.nodes[i].dist(x);
            for (a, r) in acc.iter_mut().zip(radii) {
                if d < *r {
                    *a += m;
                }
            }
        }
        for (a, r) in acc.iter().zip(radii) {
            best = best.max(a * r.powi(1 - n));
        }
    }
    Ok(best)
}

/// Sampled sup of the mean oscillation over boundary caps `{|z - x| < r}`.
pub fn bmo_norm(balayage: &FieldVector, bmesh: &BoundaryMesh, radii: &[f64]) -> Result<f64> {
    balayage.check_tag(bmesh.tag, bmesh.len())?;
    let f = &balayage.values;
    let w = &bmesh.weights;
    let mut best = 0.0f64;
    let mut members = Vec::with_capacity(bmesh.len());
    for x in &bmesh.nodes {
        for &r in radii {
            members.clear();
            members.extend((0..bmesh.len()).filter(|&j| bmesh.nodes[j].dist(x) < r));
            let area: f64 = members.iter().map(|&j| w[j]).sum();
            if area == 0.0 {
                continue;
            }
            let mean = members.iter().map(|&j| f[j] * w[j]).sum::<f64>() / area;
            let osc = members.iter().map(|&j| (f[j] - mean).abs() * w[j]).sum::<f64>() / area;
            best = best.max(osc);
        }
    }
    Ok(best)
}

/// `∫ q(y) / (1 + |y|) dy` over the truncation ball.
pub fn riesz_trace_mass(mesh: &VolumeMesh, q: &Potential) -> Result<f64> {
    if mesh.domain.is_bounded() {
        return Err(invalid("riesz_trace_mass needs the whole-space domain"));
    }
    q.samples.check_tag(mesh.tag, mesh.len())?;
    let vals: Vec<f64> = q.values().iter().zip(&mesh.nodes).map(|(q, y)| q / (1.0 + y.norm())).collect();
    Ok(mesh.integrate(&vals))
}

/// `∫ Gq · q`.
pub fn energy_q(mesh: &VolumeMesh, green: &KernelMatrix, q: &Potential) -> Result<f64> {
    let gq = green.apply(&q.samples)?;
    let vals: Vec<f64> = gq.values.iter().zip(q.values()).map(|(a, b)| a * b).collect();
    Ok(mesh.integrate(&vals))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaQMass {
    /// `(k, ∫ δ q_k)`
    pub levels: Vec<(u32, f64)>,
    /// Slope of the least-squares fit of mass against `log k`.
    pub log_slope: f64,
}

/// `∫ δ q_k` for each truncation level, with a fit in `log k`.
pub fn delta_q_mass(mesh: &VolumeMesh, form: &PotentialForm, levels: &[u32]) -> Result<DeltaQMass> {
    let delta = mesh.delta()?;
    let mut out = Vec::with_capacity(levels.len());
    for &k in levels {
        let q = Potential::sample(form.clone(), mesh, Some(k))?;
        let vals: Vec<f64> = q.values().iter().zip(delta).map(|(q, d)| q * d).collect();
        out.push((k, mesh.integrate(&vals)));
    }
    let xs: Vec<f64> = out.iter().map(|(k, _)| f64::from(*k).ln()).collect();
    let ys: Vec<f64> = out.iter().map(|(_, m)| *m).collect();
    Ok(DeltaQMass { levels: out, log_slope: slope(&xs, &ys) })
}

/// Least-squares slope; zero for fewer than two distinct abscissae.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub beta: BetaEstimate,
    pub balayage: Option<FieldVector>,
    /// `(C, ∫ e^{C P*(δq)} dσ)`
    #[serde(with = "crate::real::pairs")]
    pub exp_integral: Vec<(f64, f64)>,
    #[serde(with = "crate::real::opt")]
    pub carleson_norm: Option<f64>,
    #[serde(with = "crate::real::opt")]
    pub bmo_norm: Option<f64>,
    pub delta_q_mass: Option<DeltaQMass>,
    #[serde(with = "crate::real")]
    pub energy_q: f64,
    #[serde(with = "crate::real::opt")]
    pub riesz_mass: Option<f64>,
}

impl ConditionReport {
    pub fn beta_squared(&self) -> f64 {
        self.beta.beta_squared
    }

    pub fn balayage_max(&self) -> f64 {
        self.balayage.as_ref().map_or(f64::NAN, |b| b.max())
    }
}
