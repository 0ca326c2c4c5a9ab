use super::*;
use crate::discretize::{assemble_fdm, Grid, PdeCoeffs};
use crate::factory::{build_plan, PlanSpec};
use crate::sparse::StageOperator;
use crate::tableau::gauss_legendre;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fdm(n: usize) -> (CsrMatrix<f64>, CsrMatrix<f64>) {
    let k = assemble_fdm(&Grid::cube(n).unwrap(), &PdeCoeffs::new(1.0, [1.0, 1.0, 1.0]), 2).unwrap();
    (CsrMatrix::identity(k.nrows()), k)
}

fn setup(spec: &str, s: usize, n: usize, dt: f64, backend: FactorKind) -> (BlockPreconditioner, StageOperator) {
    let tab = gauss_legendre(s).unwrap();
    let plan = build_plan(spec.parse::<PlanSpec>().unwrap(), &tab).unwrap();
    let (m, k) = fdm(n);
    let p = BlockPreconditioner::assemble(&plan, &m, &k, dt, backend).unwrap();
    (p, StageOperator::new(m, k, tab.a, dt).unwrap())
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rel_residual(p: &BlockPreconditioner, op: &StageOperator, v: &[f64]) -> f64 {
    let r: Vec<f64> = op.apply(&p.apply(v)).iter().zip(v).map(|(a, b)| a - b).collect();
    norm(&r) / norm(v)
}

#[test]
fn optimal_variants_invert_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for spec in ["BCSD", "BCSD-R", "BRSD", "BRSD-R", "BJF"] {
        for s in [2, 3, 4] {
            let (p, op) = setup(spec, s, 4, 0.25, FactorKind::SparseLu);
            let v = random(&mut rng, op.dim());
            let r = rel_residual(&p, &op, &v);
            assert!(r <= 1e-10, "{spec} s={s} residual {r}");
        }
    }
}

#[test]
fn single_stage_block_diagonal() {
    let (p, op) = setup("BD", 1, 3, 0.1, FactorKind::SparseLu);
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let x = random(&mut rng, op.dim());
    let back = p.apply(&op.apply(&x));
    let err = back.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10);
}

#[test]
fn approximating_variants_invert_their_own_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (m, k) = fdm(3);
    for spec in ["SABRSD", "SABRSD-R", "TBRSD", "SOBT", "BGS", "BD", "BC"] {
        for s in [2, 3, 4] {
            let tab = gauss_legendre(s).unwrap();
            let plan = build_plan(spec.parse().unwrap(), &tab).unwrap();
            let approx = DenseMat::real_part(&plan.approximation().unwrap());
            let p = BlockPreconditioner::assemble(&plan, &m, &k, 0.2, FactorKind::SparseLu).unwrap();
            let op = StageOperator::new(m.clone(), k.clone(), approx, 0.2).unwrap();
            let v = random(&mut rng, op.dim());
            let r = rel_residual(&p, &op, &v);
            assert!(r <= 1e-10, "{spec} s={s} residual {r}");
        }
    }
}

#[test]
fn kps_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let (m, k) = fdm(3);
    let (md, kd) = (m.to_dense(), k.to_dense());
    for s in [1, 2, 3] {
        let tab = gauss_legendre(s).unwrap();
        let plan = build_plan("KPS".parse().unwrap(), &tab).unwrap();
        let PlanData::Kps { alpha, .. } = plan.data else { panic!() };
        let dt = 0.1;
        let p = BlockPreconditioner::assemble(&plan, &m, &k, dt, FactorKind::SparseLu).unwrap();
        assert_eq!(p.factorization_count(), 1);
        let left = DenseMat::identity(s).add(&tab.a.scaled(alpha)).scaled(1.0 / (2.0 * alpha));
        let right = kd.scaled(dt).add(&md.scaled(alpha));
        let n = md.nrows();
        let big = DenseMat::from_fn(s * n, s * n, |i, j| left[(i / n, j / n)] * right[(i % n, j % n)]);
        let v = random(&mut rng, s * n);
        let back = big.matvec(&p.apply(&v));
        let err = back.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "s={s} err={err}");
    }
}

#[test]
fn pnkp_inverts_pure_stiffness_system() {
    let (_, k) = fdm(3);
    let zero = CsrMatrix::zeros(k.nrows(), k.ncols());
    let tab = gauss_legendre(3).unwrap();
    let plan = build_plan("PNKP".parse().unwrap(), &tab).unwrap();
    let p = BlockPreconditioner::assemble(&plan, &zero, &k, 0.5, FactorKind::SparseLu).unwrap();
    let op = StageOperator::new(zero, k, tab.a, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let v = random(&mut rng, op.dim());
    assert!(rel_residual(&p, &op, &v) < 1e-10);
}

#[test]
fn apply_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for spec in ["BCSD", "BRSD", "BJF", "SABRSD", "BGS", "KPS", "PNKP", "BC"] {
        let (p, op) = setup(spec, 3, 3, 0.25, FactorKind::Ilu0);
        let (u, v) = (random(&mut rng, op.dim()), random(&mut rng, op.dim()));
        let (a, b) = (0.7, -1.3);
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let lhs = p.apply(&mix);
        let (pu, pv) = (p.apply(&u), p.apply(&v));
        let scale = lhs.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for i in 0..lhs.len() {
            assert!((lhs[i] - (a * pu[i] + b * pv[i])).abs() <= 1e-12 * scale, "{spec}");
        }
    }
}

#[test]
fn ordering_is_irrelevant_with_exact_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let (asc, op) = setup("BCSD", 4, 4, 0.25, FactorKind::SparseLu);
    let (desc, _) = setup("BCSD-R", 4, 4, 0.25, FactorKind::SparseLu);
    let v = random(&mut rng, op.dim());
    let (x, y) = (asc.apply(&v), desc.apply(&v));
    let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
    assert!(norm(&d) <= 1e-10 * norm(&x));
}

#[test]
fn factorization_counts() {
    let (m, k) = fdm(3);
    for s in 1..=6 {
        let tab = gauss_legendre(s).unwrap();
        for v in Variant::ALL {
            let plan = build_plan(PlanSpec::new(v, false), &tab).unwrap();
            let p = BlockPreconditioner::assemble(&plan, &m, &k, 0.25, FactorKind::Ilu0).unwrap();
            let got = p.factorization_count();
            if v == Variant::Bc {
                // real circulants of even order carry a second real eigenvalue
                let real = 1 + usize::from(s % 2 == 0);
                assert_eq!(got, real + (s - real) / 2, "BC s={s}");
                assert_eq!(p.stats.complex_m, (s - real) / 2);
            } else {
                assert_eq!(got, expected_factorizations(v, s), "{v} s={s}");
            }
            assert_eq!(p.stats.total(), got);
            if matches!(v, Variant::Bcsd | Variant::Bjf) {
                assert_eq!(p.stats.complex_m, s / 2, "{v} s={s}");
                assert_eq!(p.stats.real_m, s % 2);
            }
            if v == Variant::Brsd {
                assert_eq!(p.stats.real_2m, s / 2);
            }
        }
    }
}

#[test]
fn accuracy_diagnostic_ranks_variants() {
    let (exact, op) = setup("BRSD", 3, 4, 0.25, FactorKind::SparseLu);
    assert!(exact.accuracy_diagnostic(&op, 400).unwrap() <= 1e-10);
    let (ilu, _) = setup("BRSD", 3, 4, 0.25, FactorKind::Ilu0);
    let e_brsd = ilu.accuracy_diagnostic(&op, 400).unwrap();
    assert!(e_brsd > 0.0);
    let (bd, _) = setup("BD", 3, 4, 0.25, FactorKind::Ilu0);
    let e_bd = bd.accuracy_diagnostic(&op, 400).unwrap();
    assert!(e_bd >= e_brsd, "BD {e_bd} < BRSD {e_brsd}");
    assert!(exact.accuracy_diagnostic(&op, 10).is_err());
}

#[test]
fn conjugate_sharing_tags() {
    let (p, _) = setup("BCSD", 3, 3, 0.25, FactorKind::Ilu0);
    let tags = p.block_tags();
    assert_eq!(tags.iter().filter(|t| **t == BlockTag::ConjugateShared).count(), 1);
    assert_eq!(tags.iter().filter(|t| **t == BlockTag::Complex1).count(), 1);
    assert_eq!(tags.iter().filter(|t| **t == BlockTag::Real1).count(), 1);
}
