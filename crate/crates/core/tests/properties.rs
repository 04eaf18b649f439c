use std::sync::OnceLock;

use proptest::prelude::*;

use gaugekit::assembly::{assemble_green_matrix, KernelMatrix};
use gaugekit::cache::{cache_load, cache_store, CacheKey};
use gaugekit::domain::ModelDomain;
use gaugekit::mesh::{build_volume_mesh, FieldVector, VolumeMesh};
use gaugekit::operators::{apply_green, apply_t, iterated_kernel, Potential};
use gaugekit::solver::{neumann_solve, SolveOptions};

struct Setup {
    mesh: VolumeMesh,
    green: KernelMatrix,
}

fn ball() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| {
        let mesh = build_volume_mesh(ModelDomain::unit_ball(), 6, 8).unwrap();
        let green = assemble_green_matrix(&mesh).unwrap();
        Setup { mesh, green }
    })
}

fn disk() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| {
        let mesh = build_volume_mesh(ModelDomain::unit_disk(), 6, 8).unwrap();
        let green = assemble_green_matrix(&mesh).unwrap();
        Setup { mesh, green }
    })
}

fn setups() -> [&'static Setup; 2] {
    [ball(), disk()]
}

fn field(s: &Setup, v: &[f64]) -> FieldVector {
    s.mesh.field(v[..s.mesh.len()].to_vec()).unwrap()
}

fn vals(lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    // long enough for either mesh; each test slices what it needs
    prop::collection::vec(lo..hi, 96)
}

fn weighted(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| x * y * w).sum()
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-10 * scale.max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn t_is_self_adjoint_in_weighted_l2(f in vals(-1.0, 1.0), g in vals(-1.0, 1.0), q in vals(0.0, 3.0)) {
        for s in setups() {
            let q = Potential::custom(field(s, &q)).unwrap();
            let (f, g) = (field(s, &f), field(s, &g));
            let qw: Vec<f64> = q.values().iter().zip(&s.mesh.weights).map(|(q, w)| q * w).collect();
            let tf = apply_t(&s.green, &q, &f).unwrap();
            let tg = apply_t(&s.green, &q, &g).unwrap();
            let lhs = weighted(&tf.values, &g.values, &qw);
            let rhs = weighted(&f.values, &tg.values, &qw);
            let scale = weighted(&tf.values.iter().map(|v| v.abs()).collect::<Vec<_>>(), &g.values.iter().map(|v| v.abs()).collect::<Vec<_>>(), &qw);
            prop_assert!(close(lhs, rhs, scale), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn green_is_linear(f in vals(-1.0, 1.0), g in vals(-1.0, 1.0), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        for s in setups() {
            let (f, g) = (field(s, &f), field(s, &g));
            let combo = f.zip_map(&g, |x, y| a * x + b * y).unwrap();
            let lhs = apply_green(&s.green, &combo).unwrap();
            let gf = apply_green(&s.green, &f).unwrap();
            let gg = apply_green(&s.green, &g).unwrap();
            let scale = gf.sup() * a.abs() + gg.sup() * b.abs() + 1e-12;
            for i in 0..lhs.len() {
                let rhs = a * gf.values[i] + b * gg.values[i];
                prop_assert!((lhs.values[i] - rhs).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn green_preserves_positivity(f in vals(0.0, 1.0)) {
        for s in setups() {
            let gf = apply_green(&s.green, &field(s, &f)).unwrap();
            prop_assert!(gf.values.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn green_energy_is_nonnegative(f in vals(-1.0, 1.0)) {
        for s in setups() {
            let f = field(s, &f);
            let gf = apply_green(&s.green, &f).unwrap();
            let energy = weighted(&f.values, &gf.values, &s.mesh.weights);
            prop_assert!(energy >= -1e-12 * gf.sup(), "{energy}");
        }
    }

    #[test]
    fn solution_grows_with_potential(q in vals(0.0, 4.0), extra in vals(0.0, 2.0)) {
        let opts = SolveOptions::default();
        for s in setups() {
            let q1 = Potential::custom(field(s, &q)).unwrap();
            let bigger: Vec<f64> = q.iter().zip(&extra).map(|(a, b)| a + b).collect();
            let q2 = Potential::custom(field(s, &bigger)).unwrap();
            let one = s.mesh.constant(1.0);
            let u1 = neumann_solve(&s.mesh, &s.green, &q1, &one, &opts).unwrap();
            let u2 = neumann_solve(&s.mesh, &s.green, &q2, &one, &opts).unwrap();
            prop_assert!(u1.converged() && u2.converged());
            let (a, b) = (u1.solution.unwrap(), u2.solution.unwrap());
            let g1 = apply_green(&s.green, &one).unwrap();
            for i in 0..a.len() {
                prop_assert!(a.values[i] <= b.values[i] * (1.0 + 1e-9));
                prop_assert!(a.values[i] >= g1.values[i] * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn iterated_kernels_compose(q in vals(0.0, 3.0), f in vals(-1.0, 1.0)) {
        for s in setups() {
            let q = Potential::custom(field(s, &q)).unwrap();
            let f = field(s, &f);
            let g2 = iterated_kernel(&s.green, &q, 2).unwrap();
            let g3 = iterated_kernel(&s.green, &q, 3).unwrap();
            let direct = g3.apply(&f).unwrap();
            let qf = |v: &FieldVector| v.zip_map(&q.samples, |a, b| a * b).unwrap();
            let left = s.green.apply(&qf(&g2.apply(&f).unwrap())).unwrap();
            let right = g2.apply(&qf(&s.green.apply(&f).unwrap())).unwrap();
            let scale = g3.entries.iter().map(|e| e.abs()).fold(0.0, f64::max) * s.mesh.len() as f64;
            for i in 0..direct.len() {
                prop_assert!((direct.values[i] - left.values[i]).abs() <= 1e-12 * scale);
                prop_assert!((direct.values[i] - right.values[i]).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn cache_round_trip_is_bit_exact(bits in prop::collection::vec(any::<u64>(), 48 * 48)) {
        let s = ball();
        let mut m = s.green.clone();
        m.entries = bits.iter().map(|b| f64::from_bits(*b)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gkc");
        cache_store(&m, &path).unwrap();
        let back = cache_load(&path, &CacheKey::of(&m), m.domain, m.row_tag, m.col_tag, m.diagonal_rule).unwrap();
        prop_assert!(back.entries.iter().zip(&m.entries).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
