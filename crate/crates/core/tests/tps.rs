mod common;

use common::{rng, uniform};
use rand::Rng;
use strforge::tensor::{Graph, ParamStore, Session, Tensor};
use strforge::tps::{base_fiducials, build_delta, generate_grid, target_pixels, Point, Tps, TpsSolver};

fn random_affine(r: &mut impl Rng) -> impl Fn(Point) -> Point {
    let a: [f64; 6] = std::array::from_fn(|_| r.random_range(-0.6..0.6));
    move |p: Point| [(1.0 + a[0]) * p[0] + a[1] * p[1] + a[2], a[3] * p[0] + (1.0 + a[4]) * p[1] + a[5]]
}

#[test]
fn identity_fiducials_give_identity_grid() {
    for f in [4, 6, 20] {
        let solver = TpsSolver::new(f).unwrap();
        let t = solver.solve_t(solver.base()).unwrap();
        let grid = generate_grid(&t, 32, 100);
        assert_eq!(grid.points.len(), 3200);
        for (p, q) in grid.points.iter().zip(target_pixels(32, 100)) {
            assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
    }
}

#[test]
fn affine_fiducials_reproduce_the_affine_map() {
    let mut r = rng(3);
    for f in [6, 20] {
        for _ in 0..50 {
            let solver = TpsSolver::new(f).unwrap();
            let a = random_affine(&mut r);
            let c: Vec<Point> = solver.base().iter().map(|&p| a(p)).collect();
            let t = solver.solve_t(&c).unwrap();
            let n = f + 3;
            for axis in 0..2 {
                for v in &t.t[axis * n + 3..(axis + 1) * n] {
                    assert!(v.abs() < 1e-9, "radial coefficient {v}");
                }
            }
            let grid = generate_grid(&t, 9, 17);
            for (p, q) in grid.points.iter().zip(target_pixels(9, 17)) {
                let e = a(q);
                assert!((p[0] - e[0]).abs() < 1e-8 && (p[1] - e[1]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn translation_shifts_the_grid() {
    let solver = TpsSolver::new(20).unwrap();
    let c: Vec<Point> = solver.base().iter().map(|p| [p[0] + 0.1, p[1]]).collect();
    let grid = generate_grid(&solver.solve_t(&c).unwrap(), 32, 100);
    for (p, q) in grid.points.iter().zip(target_pixels(32, 100)) {
        assert!((p[0] - q[0] - 0.1).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
    }
}

#[test]
fn spline_interpolates_fiducials_over_100_seeds() {
    for f in [6, 20] {
        let solver = TpsSolver::new(f).unwrap();
        for seed in 0..100 {
            let mut r = rng(seed);
            let c: Vec<Point> = (0..f).map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
            let t = solver.solve_t(&c).unwrap();
            for (b, target) in solver.base().iter().zip(&c) {
                let p = t.apply(*b);
                assert!((p[0] - target[0]).abs() < 1e-9 && (p[1] - target[1]).abs() < 1e-9, "F={f} seed {seed}");
            }
        }
    }
}

#[test]
fn radial_block_is_symmetric_with_known_corner_values() {
    let base = base_fiducials(4).unwrap();
    let d = build_delta(&base);
    let n = 7;
    let r = |i: usize, j: usize| d[i * n + 3 + j];
    for i in 0..4 {
        assert_eq!(r(i, i), 0.0);
        for j in 0..4 {
            assert_eq!(r(i, j), r(j, i));
        }
    }
    let side = 4.0 * 2f64.ln();
    let diag = 8.0 * (2.0 * 2f64.sqrt()).ln();
    assert!((r(0, 1) - side).abs() < 1e-12);
    assert!((r(0, 2) - side).abs() < 1e-12);
    assert!((r(0, 3) - diag).abs() < 1e-12);
}

#[test]
fn duplicated_base_point_is_degenerate() {
    let mut base = base_fiducials(6).unwrap();
    base[1] = base[0];
    assert!(matches!(TpsSolver::from_base(base), Err(strforge::Error::Degenerate(_))));
}

#[test]
fn grids_are_bit_identical_across_runs() {
    let solver = TpsSolver::new(20).unwrap();
    let mut r = rng(8);
    let c: Vec<Point> = (0..20).map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
    let a = generate_grid(&solver.solve_t(&c).unwrap(), 32, 100);
    let b = generate_grid(&TpsSolver::new(20).unwrap().solve_t(&c).unwrap(), 32, 100);
    assert_eq!(a, b);
    assert_eq!(solver.grid_matrix(8, 20), TpsSolver::new(20).unwrap().grid_matrix(8, 20));
}

fn sample(img: Tensor<f64>, grid: Tensor<f64>) -> Vec<f64> {
    let mut g = Graph::new();
    let x = g.constant(img);
    let p = g.constant(grid);
    let y = g.bilinear_sample(x, p).unwrap();
    g.value(y).data().to_vec()
}

#[test]
fn sampler_identity_outside_and_half_pixel() {
    let mut r = rng(4);
    let img = uniform(&mut r, &[1, 2, 5, 7], -1.0, 1.0);
    let ident: Vec<f64> = target_pixels(5, 7).iter().flat_map(|p| [p[0], p[1]]).collect();
    let out = sample(img.clone(), Tensor::new(vec![1, 5, 7, 2], ident).unwrap());
    assert_eq!(out, img.data());

    let far: Vec<f64> = (0..35).flat_map(|i| [3.0 + i as f64, -4.0]).collect();
    let out = sample(img, Tensor::new(vec![1, 5, 7, 2], far).unwrap());
    assert!(out.iter().all(|&v| v == 0.0));

    // Ramp along x; sampling halfway between pixel centers averages them.
    let ramp = Tensor::from_fn(vec![1, 1, 1, 5], |i| i as f64 * 2.0);
    let half: Vec<f64> = (0..4).flat_map(|i| [-1.0 + (i as f64 + 0.5) * 0.5, 0.0]).collect();
    let out = sample(ramp, Tensor::new(vec![1, 1, 4, 2], half).unwrap());
    assert_eq!(out, vec![1.0, 3.0, 5.0, 7.0]);
}

#[test]
fn initialized_rectifier_is_the_identity() {
    let mut store = ParamStore::<f64>::new();
    let tps = Tps::new(&mut store, "tps", 20, 0.125, (32, 100)).unwrap();
    store.init(1);
    let mut r = rng(1);
    let img = uniform(&mut r, &[2, 1, 32, 100], -1.0, 1.0);
    // Training-mode normalization: the zero-weight head ignores features.
    let mut s = Session::new(&store, true);
    let x = s.g.constant(img.clone());
    let y = tps.forward(&mut s, x).unwrap();
    for (a, b) in s.g.value(y).data().iter().zip(img.data()) {
        assert!((a - b).abs() < 1e-9);
    }
}
