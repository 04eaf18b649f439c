//! Scenario orchestration: mesh, matrices (through the cache), then the
//! requested analyses in dependency order. Stage failures become data in the
//! record instead of aborting a sweep.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_green_matrix, assemble_poisson_matrix, DiagonalRule, KernelKind, KernelMatrix};
use crate::cache::{cache_load, cache_store, CacheKey};
use crate::conditions::{
    balayage_delta_q, bmo_norm, carleson_norm, delta_q_mass, dyadic_radii, energy_q, exp_integrability, mazya_beta,
    riesz_trace_mass, ConditionReport,
};
use crate::config::Scenario;
use crate::error::{Error, Result};
use crate::estimates::{
    fnv_envelope_check, stratified_probes, verify_riesz_sandwich, verify_u0_envelope, verify_u1_boundary_integral,
    BoundaryIntegralReport, EstimateReport,
};
use crate::mesh::{build_boundary_mesh, build_volume_mesh, BoundaryMesh, FieldVector, VolumeMesh};
use crate::operators::{quasimetric_constant, ModifierField, Potential, QuasimetricEstimate};
use crate::riccati::{counterexample_remark42, log_substitution, riccati_residual, test_family, RiccatiReport};
use crate::solver::{attach_oracle, gauge, neumann_solve, riesz_solve, SolveOptions, SolveReport};

const QUASIMETRIC_SAMPLES: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

/// Milliseconds per stage; all zero when timing is off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub mesh: f64,
    pub matrices: f64,
    pub solve: f64,
    pub conditions: f64,
    pub estimates: f64,
    pub riccati: f64,
}

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.mesh + self.matrices + self.solve + self.conditions + self.estimates + self.riccati
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateSet {
    pub u0_envelope: Option<EstimateReport>,
    pub fnv_envelope: Option<EstimateReport>,
    pub boundary_integral: Option<BoundaryIntegralReport>,
    pub riesz_sandwich: Option<EstimateReport>,
    pub quasimetric: Option<QuasimetricEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: Scenario,
    /// `u₁ = 1 + Σ Tʲ Gq`, or its whole-space analogue.
    pub gauge: Option<SolveReport>,
    /// `u₀ = Σ Tʲ G1`, bounded domains only.
    pub envelope: Option<SolveReport>,
    /// Value of the gauge at the node nearest the origin.
    #[serde(with = "crate::real::opt")]
    pub u_center: Option<f64>,
    pub conditions: Option<ConditionReport>,
    /// `∫ e^{C P*(δq)} dσ` at the fitted upper constant of the `u₀` envelope.
    #[serde(with = "crate::real::opt")]
    pub exp_integral_at_fitted_c: Option<f64>,
    pub estimates: Option<EstimateSet>,
    pub riccati: Option<RiccatiReport>,
    pub counterexample: Option<RiccatiReport>,
    pub errors: Vec<StageError>,
    pub wall_ms: StageTimes,
}

impl RunRecord {
    fn new(scenario: Scenario) -> Self {
        RunRecord {
            scenario,
            gauge: None,
            envelope: None,
            u_center: None,
            conditions: None,
            exp_integral_at_fitted_c: None,
            estimates: None,
            riccati: None,
            counterexample: None,
            errors: Vec::new(),
            wall_ms: StageTimes::default(),
        }
    }

    /// Every requested stage produced its report.
    pub fn complete(&self) -> bool {
        self.errors.is_empty()
    }

    fn fail(&mut self, stage: &str, e: &Error) {
        self.errors.push(StageError { stage: stage.into(), message: e.to_string() });
    }

    pub fn status_label(&self) -> &'static str {
        match &self.gauge {
            Some(g) => g.status.label(),
            None if self.errors.iter().any(|e| e.stage == "solve" || e.stage == "mesh" || e.stage == "matrices") => {
                "error"
            }
            None => "skipped",
        }
    }
}

/// Where matrices come from and go to.
#[derive(Debug, Clone, Default)]
pub struct RunContext {
    pub cache_dir: Option<PathBuf>,
}

fn load_or_build(
    cache_dir: Option<&Path>,
    key: CacheKey,
    extra: u64,
    vmesh: &VolumeMesh,
    row_tag: crate::mesh::MeshTag,
    rule: DiagonalRule,
    build: impl FnOnce() -> Result<KernelMatrix>,
) -> Result<(KernelMatrix, Option<Error>)> {
    let Some(dir) = cache_dir else { return Ok((build()?, None)) };
    let path = dir.join(key.file_name(&vmesh.domain, extra));
    if path.exists() {
        if let Ok(m) = cache_load(&path, &key, vmesh.domain, row_tag, vmesh.tag, rule) {
            return Ok((m, None));
        }
        // unreadable or stale: rebuild and replace
        let _ = std::fs::remove_file(&path);
    }
    let m = build()?;
    let stored = cache_store(&m, &path).err();
    Ok((m, stored))
}

fn green_key(mesh: &VolumeMesh) -> CacheKey {
    CacheKey {
        domain: mesh.domain.kind,
        kind: KernelKind::Green,
        rows: mesh.len(),
        cols: mesh.len(),
        n_radial: mesh.n_radial,
        n_angular: mesh.n_angular,
    }
}

fn poisson_key(mesh: &VolumeMesh, bmesh: &BoundaryMesh) -> CacheKey {
    CacheKey { kind: KernelKind::Poisson, rows: bmesh.len(), ..green_key(mesh) }
}

struct Clock {
    on: bool,
    start: Instant,
}

impl Clock {
    fn start(on: bool) -> Self {
        Clock { on, start: Instant::now() }
    }

    fn lap(&mut self) -> f64 {
        let ms = self.start.elapsed().as_secs_f64() * 1e3;
        self.start = Instant::now();
        if self.on {
            ms
        } else {
            0.0
        }
    }
}

pub fn run_scenario(s: &Scenario, ctx: &RunContext) -> RunRecord {
    let mut rec = RunRecord::new(s.clone());
    let mut clock = Clock::start(s.run.timing);
    let meshes = s.model_domain().and_then(|dom| {
        let v = build_volume_mesh(dom, s.mesh.n_radial, s.mesh.n_angular)?;
        let b = if dom.is_bounded() { Some(build_boundary_mesh(dom, s.mesh.boundary_n)?) } else { None };
        let q = Potential::sample(s.potential.form.clone(), &v, s.potential.truncation_k)?;
        Ok((v, b, q))
    });
    rec.wall_ms.mesh = clock.lap();
    let (vmesh, bmesh, q) = match meshes {
        Ok(m) => m,
        Err(e) => {
            rec.fail("mesh", &e);
            return rec;
        }
    };

    let cache = ctx.cache_dir.as_deref();
    let needs_poisson = bmesh.is_some() && (s.run.conditions || s.run.estimates);
    let green = load_or_build(cache, green_key(&vmesh), 0, &vmesh, vmesh.tag, DiagonalRule::Adaptive, || {
        assemble_green_matrix(&vmesh)
    });
    let green = match green {
        Ok((g, store_err)) => {
            if let Some(e) = store_err {
                rec.fail("cache", &e);
            }
            g
        }
        Err(e) => {
            rec.fail("matrices", &e);
            return rec;
        }
    };
    let mut poisson = None;
    if needs_poisson {
        let b = bmesh.as_ref().expect("bounded");
        match load_or_build(cache, poisson_key(&vmesh, b), b.len() as u64, &vmesh, b.tag, DiagonalRule::None, || {
            assemble_poisson_matrix(&vmesh, b)
        }) {
            Ok((p, store_err)) => {
                if let Some(e) = store_err {
                    rec.fail("cache", &e);
                }
                poisson = Some(p);
            }
            Err(e) => rec.fail("matrices", &e),
        }
    }
    rec.wall_ms.matrices = clock.lap();

    let opts = SolveOptions { tol_series: s.tolerances.tol_series, j_max: s.tolerances.j_max };
    let bounded = vmesh.domain.is_bounded();
    let needs_gauge = s.run.solve || s.run.estimates || s.run.riccati;
    if needs_gauge {
        let solved = if bounded {
            gauge(&vmesh, &green, &q, &opts).and_then(|mut r| {
                if s.run.oracle && s.run.solve {
                    attach_oracle(&mut r, &green, &q, &q.samples, 1.0)?;
                }
                Ok(r)
            })
        } else {
            riesz_solve(&vmesh, &green, &q, &opts)
        };
        match solved {
            Ok(r) => {
                rec.u_center = r.solution.as_ref().map(|_| r.center_value(&vmesh));
                rec.gauge = Some(r);
            }
            Err(e) => rec.fail("solve", &e),
        }
        if bounded && (s.run.solve || s.run.estimates) {
            match neumann_solve(&vmesh, &green, &q, &vmesh.constant(1.0), &opts) {
                Ok(r) => rec.envelope = Some(r),
                Err(e) => rec.fail("solve", &e),
            }
        }
    }
    rec.wall_ms.solve = clock.lap();

    let mut balayage: Option<FieldVector> = None;
    if s.run.conditions {
        match conditions_stage(s, &vmesh, bmesh.as_ref(), &green, poisson.as_ref(), &q) {
            Ok(c) => {
                balayage = c.balayage.clone();
                rec.conditions = Some(c);
            }
            Err(e) => rec.fail("conditions", &e),
        }
    }
    rec.wall_ms.conditions = clock.lap();

    if s.run.estimates {
        let set = estimates_stage(s, &vmesh, bmesh.as_ref(), &green, poisson.as_ref(), &q, &rec, &opts);
        match set {
            Ok((set, errors)) => {
                for (stage, e) in errors {
                    rec.fail(stage, &e);
                }
                if let (Some(bal), Some(b), Some(u0)) = (&balayage, &bmesh, &set.u0_envelope) {
                    rec.exp_integral_at_fitted_c =
                        exp_integrability(bal, b, &[u0.fitted_upper_c]).ok().map(|v| v[0].1);
                }
                rec.estimates = Some(set);
            }
            Err(e) => rec.fail("estimates", &e),
        }
    }
    rec.wall_ms.estimates = clock.lap();

    if s.run.riccati {
        let result = test_family(&vmesh.domain).and_then(|family| {
            let u = rec
                .gauge
                .as_ref()
                .and_then(|g| g.solution.as_ref())
                .ok_or_else(|| Error::InvalidArgument("no convergent gauge to take the logarithm of".into()))?;
            let v = log_substitution(u)?;
            let report = riccati_residual(&v, &q, &vmesh, &family)?;
            let counter = counterexample_remark42(&vmesh, &family)?;
            Ok((report, counter))
        });
        match result {
            Ok((r, c)) => {
                rec.riccati = Some(r);
                rec.counterexample = Some(c);
            }
            Err(e) => rec.fail("riccati", &e),
        }
    }
    rec.wall_ms.riccati = clock.lap();
    rec
}

fn conditions_stage(
    s: &Scenario,
    vmesh: &VolumeMesh,
    bmesh: Option<&BoundaryMesh>,
    green: &KernelMatrix,
    poisson: Option<&KernelMatrix>,
    q: &Potential,
) -> Result<ConditionReport> {
    let beta = mazya_beta(vmesh, green, q, s.tolerances.tol_power, s.tolerances.j_max)?;
    let energy = energy_q(vmesh, green, q)?;
    let mut report = ConditionReport {
        beta,
        balayage: None,
        exp_integral: Vec::new(),
        carleson_norm: None,
        bmo_norm: None,
        delta_q_mass: None,
        energy_q: energy,
        riesz_mass: None,
    };
    match (bmesh, poisson) {
        (Some(b), Some(p)) => {
            let bal = balayage_delta_q(p, vmesh, q)?;
            let radii = dyadic_radii(vmesh.domain.diameter());
            report.exp_integral = exp_integrability(&bal, b, &s.exp_constants)?;
            report.carleson_norm = Some(carleson_norm(vmesh, q, b, &radii)?);
            report.bmo_norm = Some(bmo_norm(&bal, b, &radii)?);
            if let Some(k) = s.potential.truncation_k {
                report.delta_q_mass = Some(delta_q_mass(vmesh, &s.potential.form, &[k])?);
            }
            report.balayage = Some(bal);
        }
        _ => report.riesz_mass = Some(riesz_trace_mass(vmesh, q)?),
    }
    Ok(report)
}

type StageFailures = Vec<(&'static str, Error)>;

#[allow(clippy::too_many_arguments)]
fn estimates_stage(
    s: &Scenario,
    vmesh: &VolumeMesh,
    bmesh: Option<&BoundaryMesh>,
    green: &KernelMatrix,
    poisson: Option<&KernelMatrix>,
    q: &Potential,
    rec: &RunRecord,
    opts: &SolveOptions,
) -> Result<(EstimateSet, StageFailures)> {
    let mut set = EstimateSet::default();
    let mut errors = StageFailures::new();
    let mut note = |r: Result<()>| {
        if let Err(e) = r {
            errors.push(("estimates", e));
        }
    };
    let u1 = rec.gauge.as_ref().and_then(|g| g.solution.as_ref());
    if !vmesh.domain.is_bounded() {
        let u = u1.ok_or_else(|| Error::InvalidArgument("whole-space solve did not converge".into()))?;
        set.riesz_sandwich = Some(verify_riesz_sandwich(u, green, q, vmesh)?);
        return Ok((set, errors));
    }
    let modifier = ModifierField::boundary_distance(vmesh)?;
    note((|| {
        set.quasimetric = Some(quasimetric_constant(green, &vmesh.weights, &modifier, QUASIMETRIC_SAMPLES, s.seed)?);
        Ok(())
    })());
    note((|| {
        let u0 = rec
            .envelope
            .as_ref()
            .and_then(|r| r.solution.as_ref())
            .ok_or_else(|| Error::InvalidArgument("no convergent u0 to bound".into()))?;
        set.u0_envelope = Some(verify_u0_envelope(u0, green, q, vmesh)?);
        Ok(())
    })());
    note((|| {
        set.fnv_envelope = Some(fnv_envelope_check(vmesh, green, q, &modifier, opts)?);
        Ok(())
    })());
    note((|| {
        let u = u1.ok_or_else(|| Error::InvalidArgument("no convergent gauge to bound".into()))?;
        let (p, b) = poisson.zip(bmesh).ok_or_else(|| Error::InvalidArgument("no Poisson matrix".into()))?;
        let probes = stratified_probes(vmesh, s.run.probes)?;
        set.boundary_integral = Some(verify_u1_boundary_integral(u, green, p, q, vmesh, b, &probes)?);
        Ok(())
    })());
    Ok((set, errors))
}

/// One record per value of `axis`, in input order. Runs concurrently on the
/// current rayon pool.
pub fn run_sweep(base: &Scenario, axis: &str, values: &[f64], ctx: &RunContext) -> Result<Vec<RunRecord>> {
    let scenarios = values.iter().map(|&v| base.with_axis(axis, v)).collect::<Result<Vec<_>>>()?;
    Ok(scenarios.par_iter().map(|s| run_scenario(s, ctx)).collect())
}
