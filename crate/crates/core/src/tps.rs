//! Thin-plate-spline rectification.
//!
//! Coordinates are normalized so the image spans `[-1, 1]²` with `(-1, -1)`
//! the top-left pixel center and `(1, 1)` the bottom-right one. Fiducial
//! sets are lists of `[x, y]` points.

use crate::arch::build_localization_net;
use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::nn::Network;
use crate::tensor::{ParamStore, Real, Session, Tensor, Var};

pub type Point = [f64; 2];

/// `F/2` points evenly spaced in `x ∈ [-1, 1]` along the top edge
/// (`y = -1`), followed by the same along the bottom edge (`y = 1`).
pub fn base_fiducials(f: usize) -> Result<Vec<Point>> {
    if f < 4 || !f.is_multiple_of(2) {
        return Err(Error::Config(format!("fiducial count must be even and at least 4, got {f}")));
    }
    let half = f / 2;
    let xs: Vec<f64> = (0..half).map(|i| -1.0 + 2.0 * i as f64 / (half - 1) as f64).collect();
    Ok(xs.iter().map(|&x| [x, -1.0]).chain(xs.iter().map(|&x| [x, 1.0])).collect())
}

/// Radial basis `d² ln d` with the continuous limit `0` at `d = 0`.
pub fn tps_radial(a: Point, b: Point) -> f64 {
    let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    if d2 == 0.0 {
        0.0
    } else {
        0.5 * d2 * d2.ln()
    }
}

/// Row-major `(F+3)×(F+3)` matrix
/// `[[1, C̃ᵀ, R], [0, 0, 1ᵀ], [0, 0, C̃]]` with `R_ij = d_ij² ln d_ij`.
pub fn build_delta(base: &[Point]) -> Vec<f64> {
    let f = base.len();
    let n = f + 3;
    let mut d = vec![0.0; n * n];
    for (i, p) in base.iter().enumerate() {
        d[i * n] = 1.0;
        d[i * n + 1] = p[0];
        d[i * n + 2] = p[1];
        for (j, q) in base.iter().enumerate() {
            d[i * n + 3 + j] = tps_radial(*p, *q);
        }
        d[f * n + 3 + i] = 1.0;
        d[(f + 1) * n + 3 + i] = p[0];
        d[(f + 2) * n + 3 + i] = p[1];
    }
    d
}

/// Factorized `Δ_C̃` for one base layout, reusable for any `C`.
#[derive(Clone, Debug)]
pub struct TpsSolver {
    base: Vec<Point>,
    delta: Vec<f64>,
    lu: Lu,
}

/// `T`, a `2×(F+3)` matrix mapping `[1, x̃, ỹ, r_1..r_F]` to source points.
#[derive(Clone, Debug, PartialEq)]
pub struct TpsTransform {
    pub t: Vec<f64>,
    pub base: Vec<Point>,
}

/// Source sampling points for each target pixel, row-major over `h×w`.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpGrid {
    pub h: usize,
    pub w: usize,
    pub points: Vec<Point>,
}

impl TpsSolver {
    pub fn new(f: usize) -> Result<Self> {
        Self::from_base(base_fiducials(f)?)
    }

    pub fn from_base(base: Vec<Point>) -> Result<Self> {
        if base.len() < 3 {
            return Err(Error::Degenerate(format!("{} base points cannot define a spline", base.len())));
        }
        let delta = build_delta(&base);
        let lu = Lu::factor(base.len() + 3, &delta)
            .map_err(|e| Error::Degenerate(format!("base fiducials give a singular system: {e}")))?;
        Ok(TpsSolver { base, delta, lu })
    }

    pub fn f(&self) -> usize {
        self.base.len()
    }

    pub fn base(&self) -> &[Point] {
        &self.base
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// `T = (Δ⁻¹ [Cᵀ; 0])ᵀ`.
    pub fn solve_t(&self, c: &[Point]) -> Result<TpsTransform> {
        let f = self.f();
        if c.len() != f {
            return Err(Error::shape("solve_t", format!("{} points for {f} fiducials", c.len())));
        }
        let n = f + 3;
        let mut t = vec![0.0; 2 * n];
        for axis in 0..2 {
            let mut rhs = vec![0.0; n];
            for (i, p) in c.iter().enumerate() {
                rhs[i] = p[axis];
            }
            t[axis * n..(axis + 1) * n].copy_from_slice(&self.lu.solve(&rhs));
        }
        Ok(TpsTransform {
            t,
            base: self.base.clone(),
        })
    }

    /// Constant `[N, F]` matrix `M = K Δ⁻¹[:, :F]` with
    /// `K_i = [1, x̃_i, ỹ_i, r_i1..r_iF]`, so the grid for fiducials `C`
    /// (`[F, 2]`) is `M C`.
    pub fn grid_matrix(&self, h: usize, w: usize) -> Vec<f64> {
        let f = self.f();
        let n = f + 3;
        let inv = self.lu.inverse();
        let pixels = target_pixels(h, w);
        let mut m = vec![0.0; pixels.len() * f];
        let mut k = vec![0.0; n];
        for (i, p) in pixels.iter().enumerate() {
            kernel_row(*p, &self.base, &mut k);
            for j in 0..f {
                m[i * f + j] = (0..n).map(|r| k[r] * inv[r * n + j]).sum();
            }
        }
        m
    }
}

fn kernel_row(p: Point, base: &[Point], out: &mut [f64]) {
    out[0] = 1.0;
    out[1] = p[0];
    out[2] = p[1];
    for (j, q) in base.iter().enumerate() {
        out[3 + j] = tps_radial(p, *q);
    }
}

impl TpsTransform {
    pub fn apply(&self, p: Point) -> Point {
        let n = self.base.len() + 3;
        let mut k = vec![0.0; n];
        kernel_row(p, &self.base, &mut k);
        let x = k.iter().zip(&self.t[..n]).map(|(a, b)| a * b).sum();
        let y = k.iter().zip(&self.t[n..]).map(|(a, b)| a * b).sum();
        [x, y]
    }
}

/// Pixel centers of an `h×w` target on the normalized square, row-major.
pub fn target_pixels(h: usize, w: usize) -> Vec<Point> {
    let lin = |i: usize, n: usize| if n <= 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 };
    (0..h).flat_map(|y| (0..w).map(move |x| [lin(x, w), lin(y, h)])).collect()
}

pub fn generate_grid(t: &TpsTransform, h: usize, w: usize) -> WarpGrid {
    WarpGrid {
        h,
        w,
        points: target_pixels(h, w).into_iter().map(|p| t.apply(p)).collect(),
    }
}

impl WarpGrid {
    /// `[1, h, w, 2]` tensor for [`crate::tensor::Graph::bilinear_sample`].
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self.points.iter().flat_map(|p| [T::lit(p[0]), T::lit(p[1])]).collect();
        Tensor::new(vec![1, self.h, self.w, 2], data).expect("grid size")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "h": self.h, "w": self.w, "points": self.points })
    }
}

/// Localization network, spline solve, grid generation and sampling.
#[derive(Clone, Debug)]
pub struct Tps {
    pub loc: Network,
    pub solver: TpsSolver,
    pub out_h: usize,
    pub out_w: usize,
    grid_matrix: Vec<f64>,
}

impl Tps {
    /// The final localization layer starts with zero weights and its bias
    /// at the base fiducials, so the initial warp is the identity.
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, f: usize, scale: f64, out: (usize, usize)) -> Result<Self> {
        let solver = TpsSolver::new(f)?;
        let mut graph = build_localization_net(f, scale)?;
        let head = graph.layers.pop().expect("localization head");
        let mut loc = Network::new(graph.clone(), store, &format!("{name}.loc"))?;
        let din = crate::arch::infer_shapes(&graph)?.output().expect("layers")[0];
        let w = store.add_fixed(&format!("{name}.loc.{}.weight", head.name), Tensor::zeros(vec![din, 2 * f]))?;
        let bias: Vec<T> = solver.base().iter().flat_map(|p| [T::lit(p[0]), T::lit(p[1])]).collect();
        let b = store.add_fixed(&format!("{name}.loc.{}.bias", head.name), Tensor::new(vec![2 * f], bias)?)?;
        graph.layers.push(head);
        loc.push_linear(graph, crate::nn::Linear { w, b: Some(b), din, dout: 2 * f });
        let grid_matrix = solver.grid_matrix(out.0, out.1);
        Ok(Tps {
            loc,
            solver,
            out_h: out.0,
            out_w: out.1,
            grid_matrix,
        })
    }

    /// Uses `loc` as the localization network; it must map the input batch
    /// to `[N, 2F]`.
    pub fn with_localization(loc: Network, solver: TpsSolver, out: (usize, usize)) -> Self {
        let grid_matrix = solver.grid_matrix(out.0, out.1);
        Tps {
            loc,
            solver,
            out_h: out.0,
            out_w: out.1,
            grid_matrix,
        }
    }

    /// Predicted fiducials `[N, F, 2]` (`x`, `y` per point).
    pub fn fiducials<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let c = self.loc.forward(s, x)?;
        let n = s.g.shape(c)[0];
        s.g.reshape(c, vec![n, self.solver.f(), 2])
    }

    /// Sampling grid `[N, out_h, out_w, 2]` for fiducials `[N, F, 2]`.
    pub fn grid<T: Real>(&self, s: &mut Session<T>, c: Var) -> Result<Var> {
        let (n, f) = (s.g.shape(c)[0], self.solver.f());
        let pixels = self.out_h * self.out_w;
        let m = s.g.constant(Tensor::new(vec![pixels, f], self.grid_matrix.iter().map(|&v| T::lit(v)).collect())?);
        let cf = s.g.permute(c, &[1, 0, 2])?;
        let cf = s.g.reshape(cf, vec![f, n * 2])?;
        let p = s.g.matmul(m, cf)?;
        let p = s.g.reshape(p, vec![pixels, n, 2])?;
        let p = s.g.permute(p, &[1, 0, 2])?;
        s.g.reshape(p, vec![n, self.out_h, self.out_w, 2])
    }

    /// Rectified image `[N, C, out_h, out_w]`.
    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let c = self.fiducials(s, x)?;
        let grid = self.grid(s, c)?;
        s.g.bilinear_sample(x, grid)
    }
}
