//! Bakhvalov-type graded tensor meshes on the unit square.
//!
//! Both supported families place roughly N/4 geometrically graded cells in
//! each layer region and a uniform block in between. The generating function
//! is logarithmic near t = 0 and t = 1 and linear in the middle:
//!
//! - `Roos`: the logarithmic branch covers t in [0, 1/4] with the grading
//!   factor damped by (1 - eps), so no explicit transition parameter is
//!   needed.
//! - `Kopteva`: the logarithmic branch covers t in [0, theta] with
//!   theta = 1/4 - c1 * eps, and the linear branch starts exactly at theta.
//!
//! Meshes are built for the left half and mirrored, so x_i + x_{N-i} = 1 and
//! h_i = h_{N-1-i} hold exactly in floating point.

use crate::{ulps_apart, Error, Result};
use std::fmt;

/// Mesh family selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshKind {
    Roos,
    Kopteva,
}

impl fmt::Display for MeshKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshKind::Roos => write!(f, "roos"),
            MeshKind::Kopteva => write!(f, "kopteva"),
        }
    }
}

impl std::str::FromStr for MeshKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "roos" => Ok(MeshKind::Roos),
            "kopteva" => Ok(MeshKind::Kopteva),
            other => Err(Error::InvalidParams(format!("unknown mesh kind '{other}'"))),
        }
    }
}

/// Parameters of a Bakhvalov-type mesh on [0, 1].
///
/// `sigma` is the grading exponent (tie it to the element degree), `beta`
/// the layer strength lower bound, `c1` the transition constant of the
/// `Kopteva` family (ignored for `Roos`).
#[derive(Clone, Copy, Debug)]
pub struct MeshParams {
    pub kind: MeshKind,
    pub n: usize,
    pub epsilon: f64,
    pub sigma: f64,
    pub beta: f64,
    pub c1: f64,
}

impl MeshParams {
    /// Parameters for the Roos family; `c1` is unused and set to 0.
    pub fn roos(n: usize, epsilon: f64, sigma: f64, beta: f64) -> Result<Self> {
        let p = MeshParams { kind: MeshKind::Roos, n, epsilon, sigma, beta, c1: 0.0 };
        p.validate()?;
        Ok(p)
    }

    /// Parameters for the Kopteva family. `c1 = None` selects the default
    /// 4 sigma / (3 beta).
    pub fn kopteva(n: usize, epsilon: f64, sigma: f64, beta: f64, c1: Option<f64>) -> Result<Self> {
        let c1 = c1.unwrap_or(4.0 * sigma / (3.0 * beta));
        let p = MeshParams { kind: MeshKind::Kopteva, n, epsilon, sigma, beta, c1 };
        p.validate()?;
        Ok(p)
    }

    /// The fine-to-coarse transition point theta = 1/4 - c1 * eps
    /// (Kopteva family only).
    pub fn theta(&self) -> f64 {
        0.25 - self.c1 * self.epsilon
    }

    /// Check all parameter conditions; the message names the violated one.
    pub fn validate(&self) -> Result<()> {
        let MeshParams { n, epsilon, sigma, beta, c1, kind } = *self;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParams(format!("epsilon = {epsilon} must be positive")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma = {sigma} must be positive")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParams(format!("beta = {beta} must be positive")));
        }
        if n % 4 != 0 {
            return Err(Error::InvalidParams(format!("N = {n} violates N mod 4 = 0")));
        }
        if n < 8 {
            return Err(Error::InvalidParams(format!("N = {n} violates N >= 8")));
        }
        let n_min = 2.0 * (sigma / beta).ln();
        if (n as f64) < n_min {
            return Err(Error::InvalidParams(format!(
                "N = {n} violates N >= 2 ln(sigma/beta) = {n_min:.3}"
            )));
        }
        let eps_max = (beta / (4.0 * sigma)).min(1.0) / n as f64;
        if epsilon > eps_max {
            return Err(Error::InvalidParams(format!(
                "epsilon = {epsilon:.3e} violates epsilon <= min(beta/(4 sigma), 1)/N = {eps_max:.3e}"
            )));
        }
        if kind == MeshKind::Kopteva {
            let c1_min = sigma / (4.0 * std::f64::consts::E * beta);
            if c1 < c1_min {
                return Err(Error::InvalidParams(format!(
                    "c1 = {c1:.6} violates c1 >= sigma/(4 e beta) = {c1_min:.6}"
                )));
            }
            // What the construction relies on is the transition point landing
            // in [1/4 - 1/N, 1/4), equivalently c1 * eps <= 1/N. This admits
            // the default c1 = 4 sigma / (3 beta) for every valid epsilon.
            if c1 * epsilon > 1.0 / n as f64 {
                return Err(Error::InvalidParams(format!(
                    "c1 = {c1:.6} violates c1 * epsilon <= 1/N (transition point below 1/4 - 1/N)"
                )));
            }
        }
        Ok(())
    }
}

/// Slope coefficients (d_a, d_b) of the linear middle branch, fixed by
/// continuity of the generating function at its interior breakpoints.
pub fn continuity_constants(params: &MeshParams) -> (f64, f64) {
    let se = params.sigma * params.epsilon / params.beta;
    match params.kind {
        MeshKind::Roos => {
            let c = se * params.epsilon.ln();
            (2.0 * (1.0 + c), 2.0 * c)
        }
        MeshKind::Kopteva => {
            let theta = params.theta();
            let denom = 1.0 - 2.0 * theta;
            let lg = se * (4.0 * params.c1 * params.epsilon).ln();
            ((1.0 + lg) / denom, lg / denom)
        }
    }
}

/// A 1-D mesh on [0, 1]. `steps[i] = points[i+1] - points[i]`.
#[derive(Clone, Debug)]
pub struct Mesh1D {
    pub params: Option<MeshParams>,
    pub points: Vec<f64>,
    pub steps: Vec<f64>,
}

impl Mesh1D {
    /// Number of cells.
    pub fn n(&self) -> usize {
        self.steps.len()
    }

    /// Ad-hoc mesh from given points (for tests and uniform studies).
    /// Points must be strictly increasing from 0 to 1.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParams("mesh needs at least two points".into()));
        }
        if points[0] != 0.0 || *points.last().unwrap() != 1.0 {
            return Err(Error::InvalidParams("mesh must span [0, 1]".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams("mesh points must be strictly increasing".into()));
        }
        let steps = points.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Mesh1D { params: None, points, steps })
    }

    /// Uniform mesh with n cells.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("uniform mesh needs n >= 1".into()));
        }
        let mut points: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        points[n] = 1.0;
        Mesh1D::from_points(points)
    }

    /// Plain-text dump: a header line followed by one coordinate per line.
    pub fn dump<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        match &self.params {
            Some(p) => writeln!(w, "# {} {} {} {} {} {}", p.kind, p.n, p.epsilon, p.sigma, p.beta, p.c1)?,
            None => writeln!(w, "# custom {} - - - -", self.n())?,
        }
        for x in &self.points {
            writeln!(w, "{x}")?;
        }
        Ok(())
    }
}

/// Build a Bakhvalov-type mesh. The left half is computed from the
/// generating function, the midpoint is pinned at 1/2, and the right half
/// is mirrored, so the symmetry x_i + x_{N-i} = 1 is exact.
pub fn build_mesh(params: &MeshParams) -> Result<Mesh1D> {
    params.validate()?;
    let n = params.n;
    let nf = n as f64;
    let se = params.sigma * params.epsilon / params.beta;
    let (d_a, d_b) = continuity_constants(params);
    let mut points = vec![0.0f64; n + 1];
    match params.kind {
        MeshKind::Roos => {
            for i in 1..n / 2 {
                let t = i as f64 / nf;
                points[i] = if i < n / 4 {
                    -se * (1.0 - 4.0 * (1.0 - params.epsilon) * t).ln()
                } else {
                    d_a * (t - 0.25) + d_b * (t - 0.75)
                };
            }
        }
        MeshKind::Kopteva => {
            let theta = params.theta();
            for i in 1..n / 2 {
                let t = i as f64 / nf;
                points[i] = if t <= theta {
                    // 1 - 4t = (n - 4i)/n exactly
                    -se * ((n - 4 * i) as f64 / nf).ln()
                } else {
                    d_a * (t - theta) + d_b * (t - 1.0 + theta)
                };
            }
        }
    }
    points[n / 2] = 0.5;
    for i in 0..n / 2 {
        points[n - i] = 1.0 - points[i];
    }
    // Mirror the steps rather than differencing the mirrored points: near 1
    // the absolute resolution of f64 would otherwise break the exact step
    // symmetry. Stored steps and point differences agree to ~1 ulp of 1.
    let mut steps = vec![0.0f64; n];
    for i in 0..n / 2 {
        steps[i] = points[i + 1] - points[i];
    }
    for i in n / 2..n {
        steps[i] = steps[n - 1 - i];
    }
    if steps.iter().any(|&h| h <= 0.0) {
        return Err(Error::InvalidParams(
            "generating function produced non-increasing points".into(),
        ));
    }
    Ok(Mesh1D { params: Some(*params), points, steps })
}

/// Inclusive element-index rectangle: elements (i, j) with
/// i_lo <= i <= i_hi and j_lo <= j <= j_hi.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ElemRect {
    pub i_lo: usize,
    pub i_hi: usize,
    pub j_lo: usize,
    pub j_hi: usize,
}

impl ElemRect {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.i_lo <= i && i <= self.i_hi && self.j_lo <= j && j <= self.j_hi
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let r = *self;
        (r.j_lo..=r.j_hi).flat_map(move |j| (r.i_lo..=r.i_hi).map(move |i| (i, j)))
    }

    fn square(lo: usize, hi: usize) -> Self {
        ElemRect { i_lo: lo, i_hi: hi, j_lo: lo, j_hi: hi }
    }
}

/// One side of the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

/// A closed run of mesh vertices along one side of the boundary:
/// vertex indices lo..=hi measured along the side's axis
/// (x for Bottom/Top, y for Left/Right).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundarySegment {
    pub side: Side,
    pub lo: usize,
    pub hi: usize,
}

/// An axis-aligned run of mesh vertices in the interior lattice, used to
/// name the cut lines of the layer correction operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshLine {
    /// y = y_j, vertices x_i for i in i_lo..=i_hi.
    Horizontal { j: usize, i_lo: usize, i_hi: usize },
    /// x = x_i, vertices y_j for j in j_lo..=j_hi.
    Vertical { i: usize, j_lo: usize, j_hi: usize },
}

/// Element-index layout of the layer regions of a tensor mesh.
///
/// Strips and corners are ordered bottom, right, top, left and
/// bottom-left, bottom-right, top-right, top-left respectively, matching
/// the ordering of the layer components of the manufactured problem.
#[derive(Clone, Debug)]
pub struct SubdomainTable {
    pub n: usize,
    /// i* = N/4 - 2; the cut lines sit at vertex index i* + 1.
    pub i_star: usize,
    /// Interior block (x_{N/4}, x_{3N/4})^2.
    pub inner: ElemRect,
    /// One element ring wider: (x_{N/4-1}, x_{3N/4+1})^2.
    pub inner_star: ElemRect,
    /// Two element rings wider.
    pub inner_star2: ElemRect,
    /// Edge-layer strips, full length, i*+1 elements deep.
    pub strips: [ElemRect; 4],
    /// Corner-layer boxes, (i*+1) x (i*+1) elements.
    pub corners: [ElemRect; 4],
    /// Full-length cut line of each strip operator.
    pub strip_lines: [MeshLine; 4],
    /// L-shaped cut of each corner operator: (line parallel to the near
    /// side, line orthogonal to it). The shared corner vertex appears in
    /// both entries and is deduplicated when collecting functionals.
    pub corner_cuts: [(MeshLine, MeshLine); 4],
    /// Far-boundary segments of each strip: the closure of the part of the
    /// domain boundary not touching the strip.
    pub gamma_w: [Vec<BoundarySegment>; 4],
    /// Far-boundary segments of each corner box.
    pub gamma_z: [Vec<BoundarySegment>; 4],
}

impl SubdomainTable {
    /// Elements of the strip adjacent to its cut line (the innermost row).
    pub fn strip_ring(&self, idx: usize) -> Vec<(usize, usize)> {
        let n = self.n;
        let line = self.i_star + 1;
        let m = n - line;
        match idx {
            0 => (0..n).map(|i| (i, line - 1)).collect(),
            1 => (0..n).map(|j| (m, j)).collect(),
            2 => (0..n).map(|i| (i, m)).collect(),
            3 => (0..n).map(|j| (line - 1, j)).collect(),
            _ => panic!("strip index out of range"),
        }
    }

    /// Elements of the corner box adjacent to its L-shaped cut.
    pub fn corner_ring(&self, idx: usize) -> Vec<(usize, usize)> {
        let rect = self.corners[idx];
        let line = self.i_star + 1;
        let m = self.n - line;
        let (ei, ej) = match idx {
            // element column/row adjacent to the cut inside the box
            0 => (line - 1, line - 1),
            1 => (m, line - 1),
            2 => (m, m),
            3 => (line - 1, m),
            _ => panic!("corner index out of range"),
        };
        rect.iter().filter(|&(i, j)| i == ei || j == ej).collect()
    }

    /// Elements touching the domain boundary.
    pub fn boundary_ring(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        let mut out = Vec::new();
        for j in 0..n {
            for i in 0..n {
                if i == 0 || i == n - 1 || j == 0 || j == n - 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Partition the element indices of an N x N tensor mesh into the layer
/// regions. Requires N divisible by 4 and N >= 8.
pub fn classify_subdomains(n: usize) -> Result<SubdomainTable> {
    if n % 4 != 0 || n < 8 {
        return Err(Error::InvalidParams(format!(
            "subdomain classification needs N divisible by 4 and N >= 8, got {n}"
        )));
    }
    let q = n / 4;
    let i_star = q - 2;
    let line = q - 1; // = i_star + 1, vertex index of the cut lines
    let m = n - line; // mirrored cut index, = 3N/4 + 1
    let strips = [
        ElemRect { i_lo: 0, i_hi: n - 1, j_lo: 0, j_hi: i_star },
        ElemRect { i_lo: m, i_hi: n - 1, j_lo: 0, j_hi: n - 1 },
        ElemRect { i_lo: 0, i_hi: n - 1, j_lo: m, j_hi: n - 1 },
        ElemRect { i_lo: 0, i_hi: i_star, j_lo: 0, j_hi: n - 1 },
    ];
    let corners = [
        ElemRect { i_lo: 0, i_hi: i_star, j_lo: 0, j_hi: i_star },
        ElemRect { i_lo: m, i_hi: n - 1, j_lo: 0, j_hi: i_star },
        ElemRect { i_lo: m, i_hi: n - 1, j_lo: m, j_hi: n - 1 },
        ElemRect { i_lo: 0, i_hi: i_star, j_lo: m, j_hi: n - 1 },
    ];
    let strip_lines = [
        MeshLine::Horizontal { j: line, i_lo: 0, i_hi: n },
        MeshLine::Vertical { i: m, j_lo: 0, j_hi: n },
        MeshLine::Horizontal { j: m, i_lo: 0, i_hi: n },
        MeshLine::Vertical { i: line, j_lo: 0, j_hi: n },
    ];
    let corner_cuts = [
        (
            MeshLine::Horizontal { j: line, i_lo: 0, i_hi: line },
            MeshLine::Vertical { i: line, j_lo: 0, j_hi: line },
        ),
        (
            MeshLine::Horizontal { j: line, i_lo: m, i_hi: n },
            MeshLine::Vertical { i: m, j_lo: 0, j_hi: line },
        ),
        (
            MeshLine::Horizontal { j: m, i_lo: m, i_hi: n },
            MeshLine::Vertical { i: m, j_lo: m, j_hi: n },
        ),
        (
            MeshLine::Horizontal { j: m, i_lo: 0, i_hi: line },
            MeshLine::Vertical { i: line, j_lo: m, j_hi: n },
        ),
    ];
    use Side::*;
    let seg = |side, lo, hi| BoundarySegment { side, lo, hi };
    let gamma_w = [
        vec![seg(Left, line, n), seg(Top, 0, n), seg(Right, line, n)],
        vec![seg(Left, 0, n), seg(Bottom, 0, m), seg(Top, 0, m)],
        vec![seg(Bottom, 0, n), seg(Left, 0, m), seg(Right, 0, m)],
        vec![seg(Right, 0, n), seg(Bottom, line, n), seg(Top, line, n)],
    ];
    let gamma_z = [
        vec![seg(Bottom, line, n), seg(Right, 0, n), seg(Top, 0, n), seg(Left, line, n)],
        vec![seg(Bottom, 0, m), seg(Right, line, n), seg(Top, 0, n), seg(Left, 0, n)],
        vec![seg(Bottom, 0, n), seg(Right, 0, m), seg(Top, 0, m), seg(Left, 0, n)],
        vec![seg(Bottom, 0, n), seg(Right, 0, n), seg(Top, line, n), seg(Left, 0, m)],
    ];
    Ok(SubdomainTable {
        n,
        i_star,
        inner: ElemRect::square(q, 3 * q - 1),
        inner_star: ElemRect::square(q - 1, 3 * q),
        inner_star2: ElemRect::square(q - 2, 3 * q + 1),
        strips,
        corners,
        strip_lines,
        corner_cuts,
        gamma_w,
        gamma_z,
    })
}

/// Tensor-product mesh of the unit square; x and y axes share the same
/// 1-D mesh. Subdomain classification is present whenever the cell count
/// admits it.
#[derive(Clone, Debug)]
pub struct TensorMesh2D {
    pub xs: Mesh1D,
    pub ys: Mesh1D,
    pub subdomains: Option<SubdomainTable>,
}

impl TensorMesh2D {
    pub fn from_axis(axis: Mesh1D) -> Self {
        let subdomains = classify_subdomains(axis.n()).ok();
        TensorMesh2D { xs: axis.clone(), ys: axis, subdomains }
    }

    /// Cells per direction.
    pub fn n(&self) -> usize {
        self.xs.n()
    }
}

/// Diagnostic report for the structural mesh properties.
///
/// `pass` covers the explicit checks (exact symmetry, monotone fine steps,
/// the transition-step bounds, x_{N/4} <= 1/4, and the theta window for the
/// Kopteva family). The `c_*` fields report observed constants of the
/// generic bounds and are informational.
#[derive(Clone, Debug)]
pub struct Lemma1Report {
    pub pass: bool,
    pub failures: Vec<String>,
    /// (min, max) of N * h_i over the middle elements N/4 <= i < N/2.
    pub c_coarse: (f64, f64),
    /// x_{N/4-1} / (sigma eps ln N).
    pub c_layer_edge: f64,
    /// x_{N/4} / (sigma eps ln(1/eps)).
    pub c_layer_width: f64,
    /// For mu in {0, 1, sigma}: observed max of
    /// h_i^mu exp(-beta x_i / eps) / (eps^mu N^-mu) over i <= i*.
    pub c_decay: Vec<(f64, f64)>,
}

impl fmt::Display for Lemma1Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mesh diagnostics: {}", if self.pass { "pass" } else { "FAIL" })?;
        for msg in &self.failures {
            writeln!(f, "  violated: {msg}")?;
        }
        writeln!(f, "  coarse steps: N*h in [{:.4}, {:.4}]", self.c_coarse.0, self.c_coarse.1)?;
        writeln!(f, "  x_(N/4-1) / (sigma eps ln N)     = {:.4}", self.c_layer_edge)?;
        writeln!(f, "  x_(N/4)   / (sigma eps ln(1/eps)) = {:.4}", self.c_layer_width)?;
        for (mu, c) in &self.c_decay {
            writeln!(f, "  decay constant (mu = {mu}): {c:.4}")?;
        }
        Ok(())
    }
}

/// Check the structural properties a layer-resolving mesh must satisfy and
/// report the observed constants of the generic bounds.
pub fn verify_lemma1(mesh: &Mesh1D) -> Result<Lemma1Report> {
    let params = mesh
        .params
        .ok_or_else(|| Error::InvalidParams("mesh diagnostics need construction parameters".into()))?;
    let n = params.n;
    let (eps, sigma, beta) = (params.epsilon, params.sigma, params.beta);
    let pts = &mesh.points;
    let h = &mesh.steps;
    let mut failures = Vec::new();

    if pts[0] != 0.0 || pts[n] != 1.0 {
        failures.push("endpoints must be exactly 0 and 1".into());
    }
    if h.iter().any(|&s| s <= 0.0) {
        failures.push("points not strictly increasing".into());
    }
    for i in 0..=n / 2 {
        if ulps_apart(pts[i] + pts[n - i], 1.0) > 2 {
            failures.push(format!("symmetry x_{i} + x_{} != 1", n - i));
            break;
        }
    }
    for i in 0..n / 2 {
        if h[i] != h[n - 1 - i] {
            failures.push(format!("steps h_{i} and h_{} differ", n - 1 - i));
            break;
        }
    }
    for i in 0..n / 4 - 2 {
        if h[i] > h[i + 1] * (1.0 + 1e-12) {
            failures.push(format!("fine steps not monotone at i = {i}"));
            break;
        }
    }
    let h_trans = h[n / 4 - 2];
    if !(sigma * eps / (4.0 * beta) <= h_trans && h_trans <= sigma * eps / beta) {
        failures.push(format!(
            "transition step h_(N/4-2) = {h_trans:.3e} outside [sigma eps/(4 beta), sigma eps/beta]"
        ));
    }
    if pts[n / 4] > 0.25 {
        failures.push(format!("x_(N/4) = {} exceeds 1/4", pts[n / 4]));
    }
    if params.kind == MeshKind::Kopteva {
        let theta = params.theta();
        if !(0.25 - 1.0 / n as f64 <= theta && theta < 0.25) {
            failures.push(format!("theta = {theta} outside [1/4 - 1/N, 1/4)"));
        }
    }

    let coarse: Vec<f64> = (n / 4..n / 2).map(|i| h[i] * n as f64).collect();
    let c_coarse = (
        coarse.iter().cloned().fold(f64::INFINITY, f64::min),
        coarse.iter().cloned().fold(0.0f64, f64::max),
    );
    let c_layer_edge = pts[n / 4 - 1] / (sigma * eps * (n as f64).ln());
    let c_layer_width = pts[n / 4] / (sigma * eps * (1.0 / eps).ln());
    let mut c_decay = Vec::new();
    for mu in [0.0, 1.0, sigma] {
        let bound = eps.powf(mu) * (n as f64).powf(-mu);
        let mut worst = 0.0f64;
        for i in 0..=n / 4 - 2 {
            let v = h[i].powf(mu) * (-beta * pts[i] / eps).exp() / bound;
            worst = worst.max(v);
        }
        c_decay.push((mu, worst));
    }
    Ok(Lemma1Report {
        pass: failures.is_empty(),
        failures,
        c_coarse,
        c_layer_edge,
        c_layer_width,
        c_decay,
    })
}
