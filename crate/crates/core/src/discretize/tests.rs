use super::*;
use crate::smalldense::DenseMat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn smooth(x: [f64; 3]) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin()
}

fn analytic(x: [f64; 3], c: &PdeCoeffs) -> f64 {
    let (sx, sy, sz) = ((PI * x[0]).sin(), (PI * x[1]).sin(), (PI * x[2]).sin());
    let (cx, cy, cz) = ((PI * x[0]).cos(), (PI * x[1]).cos(), (PI * x[2]).cos());
    3.0 * PI * PI * c.mu * sx * sy * sz + PI * (c.v[0] * cx * sy * sz + c.v[1] * sx * cy * sz + c.v[2] * sx * sy * cz)
}

fn truncation_error(n: usize, p: usize) -> f64 {
    let grid = Grid::cube(n).unwrap();
    let c = PdeCoeffs::new(1.0, [1.0, 1.0, 1.0]);
    let k = assemble_fdm(&grid, &c, p).unwrap();
    let ku = k.spmv(&grid.sample(smooth));
    (0..grid.len()).map(|i| (ku[i] - analytic(grid.coords(i), &c)).abs()).fold(0.0, f64::max)
}

#[test]
fn seven_point_laplacian() {
    let grid = Grid::cube(3).unwrap();
    let k = assemble_fdm(&grid, &PdeCoeffs::new(1.0, [0.0; 3]), 2).unwrap();
    let h = grid.h();
    let center = 1 + 3 * (1 + 3);
    assert!((k.get(center, center) - 6.0 / (h * h)).abs() < 1e-9);
    assert_eq!(k.row_cols(center).len(), 7);
    for (_, v) in k.row(center).filter(|&(j, _)| j != center) {
        assert!((v + 1.0 / (h * h)).abs() < 1e-9);
    }
}

#[test]
fn fourth_order_truncation_slope() {
    let e: Vec<f64> = [7, 15, 31].iter().map(|&n| truncation_error(n, 4)).collect();
    for w in e.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!(rate >= 3.7, "rate {rate} from {e:?}");
    }
}

#[test]
fn second_and_sixth_order_slopes() {
    let e2: Vec<f64> = [7, 15].iter().map(|&n| truncation_error(n, 2)).collect();
    assert!((e2[0] / e2[1]).log2() >= 1.8);
    let e6: Vec<f64> = [7, 15].iter().map(|&n| truncation_error(n, 6)).collect();
    assert!((e6[0] / e6[1]).log2() >= 5.0, "{e6:?}");
}

#[test]
fn stencil_width_grows_with_order() {
    let grid = Grid::cube(31).unwrap();
    let c = PdeCoeffs::new(1.0, [1.0, 1.0, 1.0]);
    let k2 = assemble_fdm(&grid, &c, 2).unwrap();
    let k6 = assemble_fdm(&grid, &c, 6).unwrap();
    let center = grid.len() / 2;
    assert_eq!(k2.row_cols(center).len(), 7);
    assert_eq!(k6.row_cols(center).len(), 19);
    let ratio = k6.nnz() as f64 / k2.nnz() as f64;
    assert!(ratio > 2.5 && ratio < 19.0 / 7.0 + 0.3, "ratio {ratio}");
}

#[test]
fn rejects_small_grids() {
    let c = PdeCoeffs::new(1.0, [0.0; 3]);
    assert!(assemble_fdm(&Grid::cube(4).unwrap(), &c, 6).is_err());
    assert!(Grid::cube(2).is_err());
    assert!(assemble_fdm(&Grid::cube(5).unwrap(), &c, 3).is_err());
}

#[test]
fn interior_rows_are_consistent_with_constants() {
    let grid = Grid::cube(9).unwrap();
    let k = assemble_fdm(&grid, &PdeCoeffs::new(1.0, [1.0, -0.5, 0.25]), 4).unwrap();
    // a fully interior node: all stencil points present
    let center = 4 + 9 * (4 + 9 * 4);
    let sum: f64 = k.row_values(center).iter().sum();
    assert!(sum.abs() < 1e-8 * k.norm_inf());
}

#[test]
fn symmetric_part_positive_definite() {
    for p in [2, 4] {
        for n in [6, 7] {
            let grid = Grid::cube(n).unwrap();
            let c = PdeCoeffs::new(1.0, [1.0, 1.0, 1.0]);
            assert!(compute_peclet(grid.h(), &c) <= 1.0);
            let k = assemble_fdm(&grid, &c, p).unwrap().to_dense();
            let sym = k.add(&k.transpose()).scaled(0.5);
            let na = nalgebra::DMatrix::from_row_slice(sym.nrows(), sym.ncols(), sym.as_slice());
            let min = na.symmetric_eigen().eigenvalues.min();
            assert!(min > 0.0, "p={p} n={n} min eig {min}");
        }
    }
}

#[test]
fn sixth_order_spectrum_in_right_half_plane() {
    // The sixth-order boundary closure is not definite, but remains stable.
    // The 3D operator is a Kronecker sum of 1D operators, so its eigenvalues
    // are sums of 1D eigenvalues.
    for n in [6, 7, 15] {
        let k = assemble_fdm(&Grid::new(1, n).unwrap(), &PdeCoeffs::new(1.0, [1.0, 1.0, 1.0]), 6).unwrap().to_dense();
        let eig = crate::smalldense::real_schur(&k).unwrap().eigenvalues();
        let min_re = eig.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        assert!(min_re > 0.0, "n={n} min real part {min_re}");
    }
}

#[test]
fn norm_scales_like_inverse_square_spacing() {
    let c = PdeCoeffs::new(1.0, [1.0, 1.0, 1.0]);
    for p in [2, 4] {
        let a = assemble_fdm(&Grid::cube(7).unwrap(), &c, p).unwrap().norm_inf();
        let b = assemble_fdm(&Grid::cube(15).unwrap(), &c, p).unwrap().norm_inf();
        let r = b / a;
        assert!((3.5..=4.5).contains(&r), "p={p} ratio {r}");
    }
}

#[test]
fn manufactured_values() {
    assert!((manufactured_solution(0.5, 0.5, 0.5, 1.0 / 3.0) - 1.0).abs() < 1e-15);
    for t in [0.1, 0.7] {
        for &(x, y, z) in &[(0.0, 0.3, 0.4), (1.0, 0.3, 0.4), (0.2, 0.0, 0.9), (0.2, 1.0, 0.9), (0.6, 0.3, 0.0), (0.6, 0.3, 1.0)] {
            assert!(manufactured_solution(x, y, z, t).abs() < 1e-15);
        }
    }
}

#[test]
fn manufactured_source_matches_numerical_derivatives() {
    let c = PdeCoeffs::new(0.7, [1.0, -0.4, 0.3]);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let d = 1e-3;
    let u = |x: [f64; 4]| manufactured_solution(x[0], x[1], x[2], x[3]);
    // fourth-order central differences
    let d1 = |x: [f64; 4], a: usize| {
        let at = |k: f64| {
            let mut y = x;
            y[a] += k * d;
            u(y)
        };
        (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * d)
    };
    let d2 = |x: [f64; 4], a: usize| {
        let at = |k: f64| {
            let mut y = x;
            y[a] += k * d;
            u(y)
        };
        (-at(-2.0) + 16.0 * at(-1.0) - 30.0 * at(0.0) + 16.0 * at(1.0) - at(2.0)) / (12.0 * d * d)
    };
    for _ in 0..20 {
        let x = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), rng.gen_range(0.0..1.0)];
        let lhs = d1(x, 3) - c.mu * (d2(x, 0) + d2(x, 1) + d2(x, 2))
            + c.v[0] * d1(x, 0)
            + c.v[1] * d1(x, 1)
            + c.v[2] * d1(x, 2);
        let f = manufactured_source(x[0], x[1], x[2], x[3], &c);
        assert!((lhs - f).abs() < 1e-6, "{lhs} vs {f}");
    }
}

#[test]
fn lower_dimensional_source_is_consistent() {
    let c = PdeCoeffs::new(1.0, [0.5, -0.5, 0.0]);
    let grid = Grid::new(2, 31).unwrap();
    let k = assemble_fdm(&grid, &c, 4).unwrap();
    let t = 0.3;
    let u = grid.sample(|x| manufactured_solution_nd(2, x, t));
    let ku = k.spmv(&u);
    let dt = 1e-4;
    for i in (0..grid.len()).step_by(37) {
        let x = grid.coords(i);
        let ut = (manufactured_solution_nd(2, x, t + dt) - manufactured_solution_nd(2, x, t - dt)) / (2.0 * dt);
        assert!((ut + ku[i] - manufactured_source_nd(2, x, t, &c)).abs() < 1e-3);
    }
    assert_eq!(Grid::new(1, 5).unwrap().coords(0)[1], 0.5);
}

#[test]
fn peclet_values() {
    let c = PdeCoeffs::new(1.0, [1.0, 1.0, 1.0]);
    assert_eq!(compute_peclet(0.1, &PdeCoeffs::new(1.0, [0.0; 3])), 0.0);
    let pe = compute_peclet(1.0 / 32.0, &c);
    assert!((pe - 0.108).abs() < 5e-4);
    assert!((compute_peclet(1.0 / 64.0, &c) - pe / 2.0).abs() < 1e-15);
}

#[test]
fn matrix_pair_round_trip() {
    let dir = std::env::temp_dir().join(format!("fdm-pair-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let grid = Grid::cube(3).unwrap();
    let k = assemble_fdm(&grid, &PdeCoeffs::new(1.0, [0.0; 3]), 2).unwrap();
    let m = CsrMatrix::identity(k.nrows());
    crate::sparse::write_matrix_market(&m, dir.join("m.mtx")).unwrap();
    crate::sparse::write_matrix_market(&k, dir.join("k.mtx")).unwrap();
    let meta = MatrixSidecar { dof: k.nrows(), symmetric_mass: true, source: "fdm p=2".into() };
    std::fs::write(dir.join("meta.json"), serde_json::to_string(&meta).unwrap()).unwrap();
    let (m2, k2, meta2) = load_matrix_pair(dir.join("m.mtx"), dir.join("k.mtx"), Some(&dir.join("meta.json"))).unwrap();
    assert_eq!(m2, m);
    assert!(k2.to_dense().max_diff(&k.to_dense()) < 1e-9);
    assert_eq!(meta2.unwrap(), meta);
    let _ = DenseMat::identity(1);
    std::fs::remove_dir_all(&dir).ok();
}
