//! Fields sampled on uniform planar grids over `[−L, L]²`.
//!
//! Nodes are `x = (−L + i·h, −L + j·h)` with `h = 2L/(N−1)` and `N` odd, so
//! the origin is the node `(N/2, N/2)`. Values are stored row-major with
//! the first coordinate varying fastest: component `c` of node `(i, j)`
//! lives at `(j·N + i)·components + c`.

mod functions;

pub use functions::{Monomial, TestFunction};

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moduli::Modulus;
use crate::operators::SymMatrix;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("evaluation failed: {what}")]
    Evaluation { what: String },
    #[error("evaluation failed at node ({i}, {j}): {what}")]
    NodeEvaluation { i: usize, j: usize, what: String },
    #[error("modulus vanishes at r = {r}")]
    DegenerateModulus { r: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed field file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Grid geometry: `nodes` per side (odd, at least 5) on `[−L, L]²`, `L >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct GridParams {
    nodes: usize,
    half_width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct GridRepr {
    #[serde(default = "two")]
    n: usize,
    nodes: usize,
    #[serde(default = "one")]
    half_width: f64,
}

fn two() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

impl TryFrom<GridRepr> for GridParams {
    type Error = FieldError;
    fn try_from(r: GridRepr) -> Result<Self, FieldError> {
        if r.n != 2 {
            return Err(FieldError::Grid(format!(
                "only planar grids are supported, got n = {}",
                r.n
            )));
        }
        GridParams::new(r.nodes, r.half_width)
    }
}

impl From<GridParams> for GridRepr {
    fn from(g: GridParams) -> Self {
        GridRepr {
            n: 2,
            nodes: g.nodes,
            half_width: g.half_width,
        }
    }
}

impl GridParams {
    pub fn new(nodes: usize, half_width: f64) -> Result<Self, FieldError> {
        if nodes < 5 || nodes.is_multiple_of(2) {
            return Err(FieldError::Grid(format!(
                "nodes per side must be odd and >= 5, got {nodes}"
            )));
        }
        if !(half_width >= 1.0 && half_width.is_finite()) {
            return Err(FieldError::Grid(format!(
                "half-width must be >= 1, got {half_width}"
            )));
        }
        Ok(GridParams { nodes, half_width })
    }

    pub fn dim(&self) -> usize {
        2
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.nodes - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.coord(i), self.coord(j)]
    }

    pub fn center(&self) -> (usize, usize) {
        (self.nodes / 2, self.nodes / 2)
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nodes - 1 || j == self.nodes - 1
    }

    /// Node nearest to `x`, if `x` lies in the square.
    pub fn nearest_node(&self, x: [f64; 2]) -> Option<(usize, usize)> {
        let idx = |v: f64| {
            let k = ((v + self.half_width) / self.spacing()).round();
            (k >= 0.0 && k <= (self.nodes - 1) as f64).then_some(k as usize)
        };
        Some((idx(x[0])?, idx(x[1])?))
    }

    /// Node indices `(i, j)` with `‖x_ij − x_c‖ <= r`.
    pub fn ball_nodes(&self, center: (usize, usize), r: f64) -> Vec<(usize, usize)> {
        let h = self.spacing();
        let reach = (r / h).floor() as isize + 1;
        let (ci, cj) = (center.0 as isize, center.1 as isize);
        let last = self.nodes as isize - 1;
        let mut out = Vec::new();
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i > last || j > last {
                    continue;
                }
                // Offsets measured in whole steps keep the test exact for
                // radii that are integer multiples of h.
                let d = h * ((di * di + dj * dj) as f64).sqrt();
                if d <= r * (1.0 + 1e-12) {
                    out.push((i as usize, j as usize));
                }
            }
        }
        out
    }

    /// Whether the closed ball of radius `r` around the node lies in the square.
    pub fn ball_inside(&self, center: (usize, usize), r: f64) -> bool {
        let x = self.point(center.0, center.1);
        let slack = 1e-12 * self.half_width;
        x.iter()
            .all(|c| c - r >= -self.half_width - slack && c + r <= self.half_width + slack)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: GridParams,
    components: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: GridParams, components: usize, values: Vec<f64>) -> Result<Self, FieldError> {
        if components == 0 {
            return Err(FieldError::Grid(
                "a field needs at least one component".into(),
            ));
        }
        let want = grid.nodes * grid.nodes * components;
        if values.len() != want {
            return Err(FieldError::Grid(format!(
                "expected {want} values, got {}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let node = k / components;
            return Err(FieldError::NodeEvaluation {
                i: node % grid.nodes,
                j: node / grid.nodes,
                what: "non-finite value".into(),
            });
        }
        Ok(GridField {
            grid,
            components,
            values,
        })
    }

    pub fn zeros(grid: GridParams, components: usize) -> Self {
        GridField {
            grid,
            components,
            values: vec![0.0; grid.nodes * grid.nodes * components],
        }
    }

    /// Scalar field from a callback; non-finite values are reported with
    /// their node.
    pub fn from_fn(grid: GridParams, f: impl Fn([f64; 2]) -> f64) -> Result<Self, FieldError> {
        Self::from_vector_fn(grid, 1, |x, out| out[0] = f(x))
    }

    pub fn from_vector_fn(
        grid: GridParams,
        components: usize,
        f: impl Fn([f64; 2], &mut [f64]),
    ) -> Result<Self, FieldError> {
        let n = grid.nodes;
        let mut values = vec![0.0; n * n * components];
        for j in 0..n {
            for i in 0..n {
                let k = (j * n + i) * components;
                let out = &mut values[k..k + components];
                f(grid.point(i, j), out);
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(FieldError::NodeEvaluation {
                        i,
                        j,
                        what: "non-finite value".into(),
                    });
                }
            }
        }
        Ok(GridField {
            grid,
            components,
            values,
        })
    }

    pub fn grid(&self) -> &GridParams {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(j * self.grid.nodes + i) * self.components]
    }

    #[inline]
    pub fn component(&self, i: usize, j: usize, c: usize) -> f64 {
        self.values[(j * self.grid.nodes + i) * self.components + c]
    }

    pub fn vector(&self, i: usize, j: usize) -> &[f64] {
        let k = (j * self.grid.nodes + i) * self.components;
        &self.values[k..k + self.components]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = (j * self.grid.nodes + i) * self.components;
        self.values[k] = v;
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridField {
            grid: self.grid,
            components: self.components,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn sup_distance(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Writes the header `n N L components` and one line of values per grid
    /// row, each with 17 significant digits.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), FieldError> {
        writeln!(
            w,
            "2 {} {:.16e} {}",
            self.grid.nodes, self.grid.half_width, self.components
        )?;
        let per_row = self.grid.nodes * self.components;
        for row in self.values.chunks(per_row) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, FieldError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| FieldError::Parse("empty input".into()))??;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 {
            return Err(FieldError::Parse(format!(
                "header needs 4 entries, got {:?}",
                header
            )));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| FieldError::Parse(format!("bad integer {s:?}: {e}")))
        };
        let dim = parse_usize(h[0])?;
        if dim != 2 {
            return Err(FieldError::Parse(format!(
                "only n = 2 is supported, got {dim}"
            )));
        }
        let nodes = parse_usize(h[1])?;
        let half_width: f64 = h[2]
            .parse()
            .map_err(|e| FieldError::Parse(format!("bad half-width {:?}: {e}", h[2])))?;
        let components = parse_usize(h[3])?;
        let grid = GridParams::new(nodes, half_width)?;
        let mut values = Vec::with_capacity(nodes * nodes * components);
        for line in lines {
            for tok in line?.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|e| FieldError::Parse(format!("bad value {tok:?}: {e}")))?,
                );
            }
        }
        GridField::new(grid, components, values)
    }
}

/// Nodewise evaluation of an analytic test function.
pub fn sample_function(f: &TestFunction, grid: GridParams) -> Result<GridField, FieldError> {
    f.validate()?;
    GridField::from_fn(grid, |x| f.value(x))
}

fn check_interior(field: &GridField, node: (usize, usize)) -> Result<(), FieldError> {
    let n = field.grid.nodes;
    if node.0 == 0 || node.1 == 0 || node.0 >= n - 1 || node.1 >= n - 1 {
        return Err(FieldError::Domain(format!(
            "node ({}, {}) has no full stencil",
            node.0, node.1
        )));
    }
    Ok(())
}

/// Five-point second differences and the four-point cross stencil
/// `(u_NE − u_SE − u_NW + u_SW)/(4h²)` for the mixed derivative.
pub fn hessian_central(field: &GridField, node: (usize, usize)) -> Result<SymMatrix, FieldError> {
    check_interior(field, node)?;
    Ok(hessian_unchecked(field, node.0, node.1))
}

#[inline]
pub(crate) fn hessian_unchecked(u: &GridField, i: usize, j: usize) -> SymMatrix {
    let h = u.grid.spacing();
    let h2 = h * h;
    let c = u.get(i, j);
    let mut m = SymMatrix::zeros(2);
    m.set(0, 0, (u.get(i + 1, j) - 2.0 * c + u.get(i - 1, j)) / h2);
    m.set(1, 1, (u.get(i, j + 1) - 2.0 * c + u.get(i, j - 1)) / h2);
    m.set(
        0,
        1,
        (u.get(i + 1, j + 1) - u.get(i + 1, j - 1) - u.get(i - 1, j + 1) + u.get(i - 1, j - 1))
            / (4.0 * h2),
    );
    m
}

pub fn gradient_central(field: &GridField, node: (usize, usize)) -> Result<[f64; 2], FieldError> {
    check_interior(field, node)?;
    Ok(gradient_unchecked(field, node.0, node.1))
}

#[inline]
pub(crate) fn gradient_unchecked(u: &GridField, i: usize, j: usize) -> [f64; 2] {
    let h2 = 2.0 * u.grid.spacing();
    [
        (u.get(i + 1, j) - u.get(i - 1, j)) / h2,
        (u.get(i, j + 1) - u.get(i, j - 1)) / h2,
    ]
}

/// `(⨍_{B_r(x0)} |f − f(x0)|^{p0})^{1/p0}` with equal weights on the nodes
/// of the closed ball. Vector fields use the Euclidean norm of the difference.
pub fn ball_average_lp(
    field: &GridField,
    center: (usize, usize),
    r: f64,
    p0: f64,
) -> Result<f64, FieldError> {
    let grid = field.grid;
    if !(p0 > grid.dim() as f64) {
        return Err(FieldError::Config(format!(
            "p0 must exceed n = 2, got {p0}"
        )));
    }
    if center.0 >= grid.nodes || center.1 >= grid.nodes {
        return Err(FieldError::Domain("center outside the grid".into()));
    }
    if !(r >= 2.0 * grid.spacing() * (1.0 - 1e-12)) {
        return Err(FieldError::Domain(format!(
            "radius {r} is below two grid spacings ({})",
            2.0 * grid.spacing()
        )));
    }
    if !grid.ball_inside(center, r) {
        return Err(FieldError::Domain(format!(
            "ball of radius {r} leaves the grid square"
        )));
    }
    let nodes = grid.ball_nodes(center, r);
    if nodes.is_empty() {
        return Err(FieldError::Domain("empty ball".into()));
    }
    let f0 = field.vector(center.0, center.1).to_vec();
    let mut diffs = Vec::with_capacity(nodes.len());
    for &(i, j) in &nodes {
        let d: f64 = field
            .vector(i, j)
            .iter()
            .zip(&f0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        diffs.push(d);
    }
    // Factor out the maximum so large p0 does not overflow.
    let peak = diffs.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(0.0);
    }
    let mean = diffs.iter().map(|d| (d / peak).powf(p0)).sum::<f64>() / diffs.len() as f64;
    Ok(peak * mean.powf(1.0 / p0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiniLpRow {
    pub center: (usize, usize),
    pub r: f64,
    pub average: f64,
    pub tau: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiniLpFit {
    pub c_fit: f64,
    pub p0: f64,
    pub table: Vec<DiniLpRow>,
}

/// Smallest `C` with `ball_average_lp <= C·τ(r)` over the sampled centers
/// and radii.
pub fn dini_lp_constant(
    field: &GridField,
    modulus: &Modulus,
    centers: &[(usize, usize)],
    radii: &[f64],
    p0: f64,
) -> Result<DiniLpFit, FieldError> {
    if centers.is_empty() || radii.is_empty() {
        return Err(FieldError::Config(
            "need at least one center and one radius".into(),
        ));
    }
    let mut table = Vec::with_capacity(centers.len() * radii.len());
    let mut c_fit: f64 = 0.0;
    for &center in centers {
        for &r in radii {
            let tau = modulus.eval(r).map_err(|e| FieldError::Evaluation {
                what: e.to_string(),
            })?;
            if tau <= 0.0 {
                return Err(FieldError::DegenerateModulus { r });
            }
            let average = ball_average_lp(field, center, r, p0)?;
            let ratio = average / tau;
            c_fit = c_fit.max(ratio);
            table.push(DiniLpRow {
                center,
                r,
                average,
                tau,
                ratio,
            });
        }
    }
    Ok(DiniLpFit { c_fit, p0, table })
}

/// Default integrability exponent `2n + 1`.
pub fn default_p0(n: usize) -> f64 {
    (2 * n + 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> GridParams {
        GridParams::new(n, 1.0).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridParams::new(4, 1.0).is_err());
        assert!(GridParams::new(3, 1.0).is_err());
        assert!(GridParams::new(5, 0.5).is_err());
        let g = grid(5);
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.point(2, 2), [0.0, 0.0]);
        assert_eq!(g.center(), (2, 2));
    }

    #[test]
    fn half_norm_squared_on_coarse_grid() {
        let f = sample_function(&TestFunction::quadratic(SymMatrix::identity(2)), grid(5)).unwrap();
        assert_eq!(f.get(0, 0), 1.0);
        assert_eq!(f.get(4, 4), 1.0);
        assert_eq!(f.get(2, 2), 0.0);
        let z = sample_function(&TestFunction::Zero, grid(5)).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_values_report_their_node() {
        let err = GridField::from_fn(grid(5), |x| {
            if x[0] > 0.9 && x[1] < -0.9 {
                f64::NAN
            } else {
                0.0
            }
        })
        .unwrap_err();
        assert!(matches!(err, FieldError::NodeEvaluation { i: 4, j: 0, .. }));
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let f = GridField::from_fn(GridParams::new(9, 1.3).unwrap(), |x| {
            (3.0 * x[0]).sin() / 7.0 + x[1].exp()
        })
        .unwrap();
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        let g = GridField::read_from(buf.as_slice()).unwrap();
        assert_eq!(f, g);
        assert!(GridField::read_from("2 5 1.0 1\n1 2 3".as_bytes()).is_err());
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let m = SymMatrix::from_rows(&[vec![1.5, -0.7], vec![-0.7, 0.25]]).unwrap();
        let f = TestFunction::Quadratic {
            c: 0.3,
            b: [1.0, -2.0],
            m,
        };
        let u = sample_function(&f, grid(17)).unwrap();
        for node in [(1, 1), (8, 8), (3, 12)] {
            let h = hessian_central(&u, node).unwrap();
            assert!((h - m).frobenius() < 1e-11);
            let g = gradient_central(&u, node).unwrap();
            let want = f.gradient(u.grid().point(node.0, node.1)).unwrap();
            assert!((g[0] - want[0]).abs() < 1e-12 && (g[1] - want[1]).abs() < 1e-12);
        }
        assert!(hessian_central(&u, (0, 3)).is_err());
    }

    #[test]
    fn quartic_second_difference_is_second_order() {
        let f = TestFunction::polynomial(&[(1.0, 4, 0)]);
        let err = |n: usize| {
            let u = sample_function(&f, GridParams::new(n, 1.0).unwrap()).unwrap();
            let node = u.grid().center();
            hessian_central(&u, node).unwrap().get(0, 0).abs()
        };
        let ratio = err(33) / err(65);
        assert!((ratio - 4.0).abs() < 1e-6, "{ratio}");
    }

    #[test]
    fn ball_average_of_constant_is_zero() {
        let u = GridField::from_fn(grid(33), |_| 4.2).unwrap();
        assert_eq!(ball_average_lp(&u, (16, 16), 0.5, 5.0).unwrap(), 0.0);
        assert!(ball_average_lp(&u, (16, 16), 0.01, 5.0).is_err());
        assert!(ball_average_lp(&u, (16, 16), 0.5, 2.0).is_err());
        assert!(ball_average_lp(&u, (2, 16), 0.5, 5.0).is_err());
    }

    #[test]
    fn ball_average_of_linear_field_is_below_radius() {
        let u = GridField::from_fn(grid(65), |x| x[0]).unwrap();
        let r = 0.5;
        let lo = ball_average_lp(&u, (32, 32), r, 3.0).unwrap();
        let hi = ball_average_lp(&u, (32, 32), r, 200.0).unwrap();
        assert!(lo < hi && hi <= r + 1e-12);
        assert!(hi > 0.95 * r);
    }

    #[test]
    fn dini_constant_of_linear_field() {
        let u = GridField::from_fn(grid(65), |x| x[0]).unwrap();
        let m = Modulus::power(0.5).unwrap();
        let radii = [0.125, 0.25, 0.5];
        let fit = dini_lp_constant(&u, &m, &[(32, 32)], &radii, 5.0).unwrap();
        assert!(fit.c_fit <= 0.5f64.sqrt() + 1e-12);
        let c = dini_lp_constant(&u.scaled(3.0), &m, &[(32, 32)], &radii, 5.0).unwrap();
        assert!((c.c_fit - 3.0 * fit.c_fit).abs() < 1e-12 * c.c_fit);
        let zero = GridField::zeros(*u.grid(), 1);
        assert_eq!(
            dini_lp_constant(&zero, &m, &[(32, 32)], &radii, 5.0)
                .unwrap()
                .c_fit,
            0.0
        );
    }
}
