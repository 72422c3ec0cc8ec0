//! Tensor-product Q_k spaces on rectangular meshes.
//!
//! Degrees of freedom are point values at a lattice of equispaced nodes
//! per element, k+1 per direction, numbered lexicographically (x fastest).
//! Node coordinates at element corners are bitwise equal to the mesh
//! points, so index arithmetic (not float comparison) identifies nodes on
//! mesh lines.

use crate::meshgen::{BoundarySegment, Side, TensorMesh2D};
use crate::{Error, Result};

/// Gauss-Legendre rule with `n` points on [-1, 1], exact to degree 2n-1.
///
/// Roots of the Legendre polynomial by Newton iteration from the cosine
/// initial guess; nodes come out mirror-symmetric by construction.
pub fn gauss_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!((1..=16).contains(&n), "gauss rule supports 1..=16 points, got {n}");
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    for i in 0..(n + 1) / 2 {
        // i counts roots from the right end of the interval
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..60 {
            let (p, dp) = legendre_pair(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() <= 1e-15 * t.abs().max(1e-3) {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, t);
        let w = 2.0 / ((1.0 - t * t) * (dp * dp));
        nodes[n - 1 - i] = t;
        nodes[i] = -t;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// P_n(t) and P_n'(t) via the three-term recurrence.
fn legendre_pair(n: usize, t: f64) -> (f64, f64) {
    debug_assert!(n >= 1);
    let mut prev = 1.0f64;
    let mut cur = t;
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * t * cur - jf * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    let dp = n as f64 * (t * cur - prev) / (t * t - 1.0);
    (cur, dp)
}

/// 1-D Lagrange element of degree k on [0, 1] with equispaced nodes j/k.
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    pub k: usize,
    pub nodes: Vec<f64>,
}

/// Basis values and derivatives tabulated at a fixed set of reference
/// points: `val[q][j]` is the j-th basis function at point q.
#[derive(Clone, Debug)]
pub struct BasisTable {
    pub val: Vec<Vec<f64>>,
    pub der: Vec<Vec<f64>>,
}

impl ReferenceElement {
    pub fn new(k: usize) -> Result<Self> {
        if !(1..=3).contains(&k) {
            return Err(Error::Unsupported(format!("element degree {k} not in 1..=3")));
        }
        let nodes = (0..=k).map(|j| j as f64 / k as f64).collect();
        Ok(ReferenceElement { k, nodes })
    }

    /// All k+1 Lagrange basis values at t.
    pub fn basis(&self, t: f64) -> Vec<f64> {
        let n = self.nodes.len();
        let mut out = vec![0.0f64; n];
        for (j, o) in out.iter_mut().enumerate() {
            let mut v = 1.0f64;
            for m in 0..n {
                if m != j {
                    v *= (t - self.nodes[m]) / (self.nodes[j] - self.nodes[m]);
                }
            }
            *o = v;
        }
        out
    }

    /// All k+1 basis derivatives at t.
    pub fn basis_deriv(&self, t: f64) -> Vec<f64> {
        let n = self.nodes.len();
        let mut out = vec![0.0f64; n];
        for (j, o) in out.iter_mut().enumerate() {
            let mut sum = 0.0f64;
            for r in 0..n {
                if r == j {
                    continue;
                }
                let mut term = 1.0 / (self.nodes[j] - self.nodes[r]);
                for m in 0..n {
                    if m != j && m != r {
                        term *= (t - self.nodes[m]) / (self.nodes[j] - self.nodes[m]);
                    }
                }
                sum += term;
            }
            *o = sum;
        }
        out
    }

    pub fn tabulate(&self, ts: &[f64]) -> BasisTable {
        BasisTable {
            val: ts.iter().map(|&t| self.basis(t)).collect(),
            der: ts.iter().map(|&t| self.basis_deriv(t)).collect(),
        }
    }
}

/// Continuous Q_k space on a tensor mesh with homogeneous node layout.
#[derive(Clone, Debug)]
pub struct FeSpace {
    pub mesh: TensorMesh2D,
    pub k: usize,
    pub reference: ReferenceElement,
    /// 1-D node coordinates along x, length k * nx + 1.
    pub xs_nodes: Vec<f64>,
    pub ys_nodes: Vec<f64>,
}

fn axis_nodes(points: &[f64], steps: &[f64], k: usize) -> Vec<f64> {
    let n = steps.len();
    let mut out = Vec::with_capacity(k * n + 1);
    for e in 0..n {
        out.push(points[e]);
        for r in 1..k {
            out.push(points[e] + steps[e] * (r as f64 / k as f64));
        }
    }
    out.push(points[n]);
    out
}

impl FeSpace {
    pub fn build(mesh: TensorMesh2D, k: usize) -> Result<FeSpace> {
        let reference = ReferenceElement::new(k)?;
        let xs_nodes = axis_nodes(&mesh.xs.points, &mesh.xs.steps, k);
        let ys_nodes = axis_nodes(&mesh.ys.points, &mesh.ys.steps, k);
        Ok(FeSpace { mesh, k, reference, xs_nodes, ys_nodes })
    }

    /// Elements along x.
    pub fn nx(&self) -> usize {
        self.mesh.xs.n()
    }

    pub fn ny(&self) -> usize {
        self.mesh.ys.n()
    }

    /// Nodes along x, k * nx + 1.
    pub fn node_count_x(&self) -> usize {
        self.xs_nodes.len()
    }

    pub fn node_count_y(&self) -> usize {
        self.ys_nodes.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.node_count_x() * self.node_count_y()
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.node_count_x() && iy < self.node_count_y());
        iy * self.node_count_x() + ix
    }

    pub fn node_split(&self, dof: usize) -> (usize, usize) {
        (dof % self.node_count_x(), dof / self.node_count_x())
    }

    pub fn node_coords(&self, dof: usize) -> (f64, f64) {
        let (ix, iy) = self.node_split(dof);
        (self.xs_nodes[ix], self.ys_nodes[iy])
    }

    /// Global dofs of element (ex, ey), local lexicographic order
    /// (x fastest), length (k+1)^2.
    pub fn element_dofs(&self, ex: usize, ey: usize) -> Vec<usize> {
        debug_assert!(ex < self.nx() && ey < self.ny());
        let k = self.k;
        let stride = self.node_count_x();
        let mut out = Vec::with_capacity((k + 1) * (k + 1));
        for jy in 0..=k {
            let row = (ey * k + jy) * stride + ex * k;
            for jx in 0..=k {
                out.push(row + jx);
            }
        }
        out
    }

    pub fn is_boundary_node(&self, dof: usize) -> bool {
        let (ix, iy) = self.node_split(dof);
        ix == 0 || ix == self.node_count_x() - 1 || iy == 0 || iy == self.node_count_y() - 1
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.num_dofs()).map(|d| self.is_boundary_node(d)).collect()
    }

    /// Element index containing x along the given axis points; points on
    /// an interior breakpoint go to the element on its right, x = 1 to the
    /// last element.
    fn locate(points: &[f64], x: f64) -> usize {
        let n = points.len() - 1;
        points.partition_point(|&p| p <= x).saturating_sub(1).min(n - 1)
    }

    /// Point evaluation of a coefficient vector.
    pub fn eval(&self, coeffs: &[f64], x: f64, y: f64) -> f64 {
        debug_assert_eq!(coeffs.len(), self.num_dofs());
        let ex = Self::locate(&self.mesh.xs.points, x);
        let ey = Self::locate(&self.mesh.ys.points, y);
        let tx = (x - self.mesh.xs.points[ex]) / self.mesh.xs.steps[ex];
        let ty = (y - self.mesh.ys.points[ey]) / self.mesh.ys.steps[ey];
        let bx = self.reference.basis(tx);
        let by = self.reference.basis(ty);
        let dofs = self.element_dofs(ex, ey);
        let k = self.k;
        let mut v = 0.0;
        for jy in 0..=k {
            let mut row = 0.0;
            for jx in 0..=k {
                row += bx[jx] * coeffs[dofs[jy * (k + 1) + jx]];
            }
            v += by[jy] * row;
        }
        v
    }

    /// Point gradient of a coefficient vector.
    pub fn eval_grad(&self, coeffs: &[f64], x: f64, y: f64) -> (f64, f64) {
        debug_assert_eq!(coeffs.len(), self.num_dofs());
        let ex = Self::locate(&self.mesh.xs.points, x);
        let ey = Self::locate(&self.mesh.ys.points, y);
        let hx = self.mesh.xs.steps[ex];
        let hy = self.mesh.ys.steps[ey];
        let tx = (x - self.mesh.xs.points[ex]) / hx;
        let ty = (y - self.mesh.ys.points[ey]) / hy;
        let bx = self.reference.basis(tx);
        let by = self.reference.basis(ty);
        let dx = self.reference.basis_deriv(tx);
        let dy = self.reference.basis_deriv(ty);
        let dofs = self.element_dofs(ex, ey);
        let k = self.k;
        let (mut gx, mut gy) = (0.0, 0.0);
        for jy in 0..=k {
            for jx in 0..=k {
                let c = coeffs[dofs[jy * (k + 1) + jx]];
                gx += dx[jx] * by[jy] * c;
                gy += bx[jx] * dy[jy] * c;
            }
        }
        (gx / hx, gy / hy)
    }
}

/// Nodal coefficient vector over a space.
#[derive(Clone, Debug)]
pub struct FeFunction {
    pub coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(space: &FeSpace) -> Self {
        FeFunction { coeffs: vec![0.0; space.num_dofs()] }
    }

    /// Nodal Lagrange interpolant of a pointwise function.
    pub fn interpolate<F: Fn(f64, f64) -> f64>(space: &FeSpace, f: F) -> Self {
        let mut coeffs = Vec::with_capacity(space.num_dofs());
        for iy in 0..space.node_count_y() {
            for ix in 0..space.node_count_x() {
                coeffs.push(f(space.xs_nodes[ix], space.ys_nodes[iy]));
            }
        }
        FeFunction { coeffs }
    }

    pub fn add_scaled(&mut self, other: &FeFunction, s: f64) {
        assert_eq!(self.coeffs.len(), other.coeffs.len());
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }
}

/// Named node sets used by the interpolation operators and the solver.
#[derive(Clone, Copy, Debug)]
pub enum Region {
    /// All nodes on the domain boundary.
    Boundary,
    /// Nodes on the vertical mesh line x = x_i.
    VerticalLine(usize),
    /// Nodes on the horizontal mesh line y = y_j.
    HorizontalLine(usize),
    /// Nodes on the boundary of the inner_star square.
    RingInnerStar,
    /// Nodes on the far-boundary segments of strip idx.
    GammaW(usize),
    /// Nodes on the far-boundary segments of corner box idx.
    GammaZ(usize),
}

/// Sorted, deduplicated node indices of a region.
pub fn select_dofs(space: &FeSpace, region: Region) -> Result<Vec<usize>> {
    let k = space.k;
    let ncx = space.node_count_x();
    let ncy = space.node_count_y();
    let mut set = std::collections::BTreeSet::new();
    match region {
        Region::Boundary => {
            for ix in 0..ncx {
                set.insert(space.node_index(ix, 0));
                set.insert(space.node_index(ix, ncy - 1));
            }
            for iy in 0..ncy {
                set.insert(space.node_index(0, iy));
                set.insert(space.node_index(ncx - 1, iy));
            }
        }
        Region::VerticalLine(i) => {
            if i > space.nx() {
                return Err(Error::InvalidParams(format!("mesh line {i} out of range")));
            }
            for iy in 0..ncy {
                set.insert(space.node_index(k * i, iy));
            }
        }
        Region::HorizontalLine(j) => {
            if j > space.ny() {
                return Err(Error::InvalidParams(format!("mesh line {j} out of range")));
            }
            for ix in 0..ncx {
                set.insert(space.node_index(ix, k * j));
            }
        }
        Region::RingInnerStar => {
            let t = subdomains(space)?;
            let (lo, hi) = (k * t.inner_star.i_lo, k * (t.inner_star.i_hi + 1));
            for v in lo..=hi {
                set.insert(space.node_index(v, lo));
                set.insert(space.node_index(v, hi));
                set.insert(space.node_index(lo, v));
                set.insert(space.node_index(hi, v));
            }
        }
        Region::GammaW(idx) => {
            let t = subdomains(space)?;
            insert_segments(space, &t.gamma_w[idx], &mut set);
        }
        Region::GammaZ(idx) => {
            let t = subdomains(space)?;
            insert_segments(space, &t.gamma_z[idx], &mut set);
        }
    }
    Ok(set.into_iter().collect())
}

fn subdomains(space: &FeSpace) -> Result<&crate::meshgen::SubdomainTable> {
    space.mesh.subdomains.as_ref().ok_or_else(|| {
        Error::InvalidParams("mesh has no layer-region classification (need N % 4 == 0, N >= 8)".into())
    })
}

fn insert_segments(
    space: &FeSpace,
    segs: &[BoundarySegment],
    set: &mut std::collections::BTreeSet<usize>,
) {
    let k = space.k;
    let ncx = space.node_count_x();
    let ncy = space.node_count_y();
    for seg in segs {
        for v in k * seg.lo..=k * seg.hi {
            let idx = match seg.side {
                Side::Bottom => space.node_index(v, 0),
                Side::Top => space.node_index(v, ncy - 1),
                Side::Left => space.node_index(0, v),
                Side::Right => space.node_index(ncx - 1, v),
            };
            set.insert(idx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshgen::{build_mesh, Mesh1D, MeshParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_space(n: usize, k: usize) -> FeSpace {
        let mesh = TensorMesh2D::from_axis(Mesh1D::uniform(n).unwrap());
        FeSpace::build(mesh, k).unwrap()
    }

    #[test]
    fn gauss_low_orders_match_closed_forms() {
        let (x, w) = gauss_rule(1);
        assert_eq!(x, vec![0.0]);
        assert_eq!(w, vec![2.0]);

        let (x, w) = gauss_rule(2);
        let r = 1.0 / 3.0f64.sqrt();
        assert!((x[0] + r).abs() < 1e-15 && (x[1] - r).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);

        let (x, w) = gauss_rule(3);
        assert!((x[0] + 0.6f64.sqrt()).abs() < 1e-15);
        assert_eq!(x[1], 0.0);
        assert!((w[0] - 5.0 / 9.0).abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);

        // integrate x^4 with the 3-point rule: exact value 2/5
        let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(4)).sum();
        assert!((s - 0.4).abs() < 1e-15, "got {s}");
    }

    #[test]
    fn gauss_exact_to_degree_2n_minus_1() {
        for n in 1..=16 {
            let (x, w) = gauss_rule(n);
            for deg in 0..2 * n {
                let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!(
                    (s - exact).abs() < 1e-13,
                    "n = {n}, degree {deg}: {s} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn gauss_nodes_mirror_exactly() {
        for n in 1..=16 {
            let (x, w) = gauss_rule(n);
            for i in 0..n {
                assert_eq!(x[i], -x[n - 1 - i], "n = {n}");
                assert_eq!(w[i], w[n - 1 - i], "n = {n}");
            }
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn reference_basis_is_nodal_delta() {
        for k in 1..=3 {
            let re = ReferenceElement::new(k).unwrap();
            for (i, &ti) in re.nodes.iter().enumerate() {
                let b = re.basis(ti);
                for (j, &bj) in b.iter().enumerate() {
                    // products of exactly repeated differences: bitwise 0/1
                    assert_eq!(bj, if i == j { 1.0 } else { 0.0 }, "k = {k}");
                }
            }
        }
    }

    #[test]
    fn reference_partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 1..=3 {
            let re = ReferenceElement::new(k).unwrap();
            for _ in 0..50 {
                let t: f64 = rng.gen();
                let s: f64 = re.basis(t).iter().sum();
                let ds: f64 = re.basis_deriv(t).iter().sum();
                assert!((s - 1.0).abs() < 1e-14);
                assert!(ds.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reference_reproduces_degree_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for k in 1..=3usize {
            let re = ReferenceElement::new(k).unwrap();
            let nodal: Vec<f64> = re.nodes.iter().map(|t| t.powi(k as i32)).collect();
            for _ in 0..30 {
                let t: f64 = rng.gen();
                let b = re.basis(t);
                let db = re.basis_deriv(t);
                let v: f64 = b.iter().zip(&nodal).map(|(bi, ni)| bi * ni).sum();
                let dv: f64 = db.iter().zip(&nodal).map(|(bi, ni)| bi * ni).sum();
                assert!((v - t.powi(k as i32)).abs() < 1e-13);
                assert!((dv - k as f64 * t.powi(k as i32 - 1)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn rejects_unsupported_degree() {
        assert!(ReferenceElement::new(0).is_err());
        assert!(ReferenceElement::new(4).is_err());
    }

    #[test]
    fn dof_counts() {
        assert_eq!(uniform_space(4, 1).num_dofs(), 25);
        assert_eq!(uniform_space(12, 3).num_dofs(), 1369);
        let s = uniform_space(4, 2);
        assert_eq!(s.num_dofs(), 81);
        let nb = s.boundary_mask().iter().filter(|&&b| b).count();
        assert_eq!(nb, 32);
    }

    #[test]
    fn corner_nodes_equal_mesh_points_bitwise() {
        let params = MeshParams::roos(16, 1e-4, 2.0, 1.0).unwrap();
        let mesh = TensorMesh2D::from_axis(build_mesh(&params).unwrap());
        for k in 1..=3 {
            let s = FeSpace::build(mesh.clone(), k).unwrap();
            for i in 0..=16 {
                assert_eq!(s.xs_nodes[k * i], s.mesh.xs.points[i]);
            }
            // interior nodes sit strictly inside their element
            for e in 0..16 {
                for r in 1..k {
                    let v = s.xs_nodes[k * e + r];
                    assert!(s.mesh.xs.points[e] < v && v < s.mesh.xs.points[e + 1]);
                }
            }
        }
    }

    #[test]
    fn element_dofs_layout() {
        let s = uniform_space(4, 2);
        // element (1, 0): nodes ix in {2,3,4}, iy in {0,1,2}, stride 9
        assert_eq!(s.element_dofs(1, 0), vec![2, 3, 4, 11, 12, 13, 20, 21, 22]);
        let (ix, iy) = s.node_split(13);
        assert_eq!((ix, iy), (4, 1));
    }

    #[test]
    fn interpolation_error_point_check() {
        // linear interpolant of sin(pi x) on a uniform 8-cell axis,
        // error at the first midpoint: sin(pi/16) - sin(pi/8)/2
        let s = uniform_space(8, 1);
        let f = |x: f64, _y: f64| (std::f64::consts::PI * x).sin();
        let u = FeFunction::interpolate(&s, f);
        let got = f(1.0 / 16.0, 0.5) - s.eval(&u.coeffs, 1.0 / 16.0, 0.5);
        assert!((got - 0.003748605833583382).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn reproduces_q_k_on_nonuniform_mesh() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let axis = Mesh1D::from_points(vec![0.0, 0.07, 0.21, 0.5, 0.55, 0.83, 1.0]).unwrap();
        let mesh = TensorMesh2D::from_axis(axis);
        for k in 1..=3usize {
            let s = FeSpace::build(mesh.clone(), k).unwrap();
            let f = |x: f64, y: f64| (x + 0.3).powi(k as i32) * (y - 2.0).powi(k as i32);
            let u = FeFunction::interpolate(&s, f);
            for _ in 0..40 {
                let (x, y): (f64, f64) = (rng.gen(), rng.gen());
                assert!((s.eval(&u.coeffs, x, y) - f(x, y)).abs() < 2e-12);
            }
            // breakpoints and corners evaluate too
            assert!((s.eval(&u.coeffs, 0.0, 1.0) - f(0.0, 1.0)).abs() < 1e-12);
            assert!((s.eval(&u.coeffs, 0.5, 0.21) - f(0.5, 0.21)).abs() < 1e-12);
            // gradient check against the analytic derivative
            let (gx, gy) = s.eval_grad(&u.coeffs, 0.4, 0.6);
            let ex = k as f64 * (0.4 + 0.3f64).powi(k as i32 - 1) * (0.6 - 2.0f64).powi(k as i32);
            let ey = (0.4 + 0.3f64).powi(k as i32) * k as f64 * (0.6 - 2.0f64).powi(k as i32 - 1);
            assert!((gx - ex).abs() < 1e-10 * ex.abs().max(1.0));
            assert!((gy - ey).abs() < 1e-10 * ey.abs().max(1.0));
        }
    }

    #[test]
    fn region_selection_counts() {
        let params = MeshParams::roos(16, 1e-3, 2.0, 1.0).unwrap();
        let mesh = TensorMesh2D::from_axis(build_mesh(&params).unwrap());
        let s = FeSpace::build(mesh, 1).unwrap();

        let ring = select_dofs(&s, Region::RingInnerStar).unwrap();
        assert_eq!(ring.len(), 40); // 11x11 node block boundary

        let s2 = FeSpace::build(s.mesh.clone(), 2).unwrap();
        assert_eq!(select_dofs(&s2, Region::RingInnerStar).unwrap().len(), 80);

        let line = select_dofs(&s, Region::VerticalLine(4)).unwrap();
        assert_eq!(line.len(), 17);
        assert!(line.iter().all(|&d| s.node_split(d).0 == 4));

        // far boundary of the bottom strip: side runs above the cut line
        // at vertex 3, plus the whole top: 14 + 14 + 17 - 2 shared corners
        let gw = select_dofs(&s, Region::GammaW(0)).unwrap();
        assert_eq!(gw.len(), 43);
        let gz = select_dofs(&s, Region::GammaZ(0)).unwrap();
        // bottom-left box: bottom beyond the cut, right, top, left beyond
        // the cut: 14 + 17 + 17 + 14 - 3 shared corners
        assert_eq!(gz.len(), 59);
        for &d in gw.iter().chain(&gz) {
            assert!(s.is_boundary_node(d));
        }
    }

    #[test]
    fn region_needs_classification() {
        let s = uniform_space(6, 1); // 6 % 4 != 0: no layer regions
        assert!(select_dofs(&s, Region::RingInnerStar).is_err());
        assert!(select_dofs(&s, Region::Boundary).is_ok());
    }
}
