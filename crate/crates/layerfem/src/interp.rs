//! Interpolation operators tailored to the layer structure of the mesh:
//! plain Lagrange interpolation, a weighted L2 projection over the inner
//! block, a nodal cutoff, and a vertex-edge-cell (VEE) interpolant whose
//! functionals can be overridden to build continuous layer corrections.
//!
//! The VEE functionals per element are the 4 vertex values, k-1 scaled
//! moments per edge against (s - s_lo)^m, and (k-1)^2 cell moments. With
//! the (m+1)/h^{m+1} scaling the local functional-to-nodal matrix is the
//! same on every element, so it is factorized once. Corrections are
//! realized by replacing selected functional values and re-solving the
//! local systems of the touched elements; traces across untouched edges
//! keep their functional values, which keeps the result continuous.

use std::collections::{BTreeSet, HashMap};

use crate::assembly::{assemble_block, block_moments};
use crate::fespace::{gauss_rule, select_dofs, FeFunction, FeSpace, Region};
use crate::linsolve::{cg_solve, DenseLu};
use crate::meshgen::{BoundarySegment, MeshLine, Side, SubdomainTable};
use crate::problem::{Decomposition, ScalarField};
use crate::{Error, Result};

fn table(space: &FeSpace) -> Result<&SubdomainTable> {
    space.mesh.subdomains.as_ref().ok_or_else(|| {
        Error::InvalidParams("mesh has no layer-region classification (need N % 4 == 0, N >= 8)".into())
    })
}

fn inner_star_elems(space: &FeSpace) -> Result<Vec<(usize, usize)>> {
    Ok(table(space)?.inner_star.iter().collect())
}

/// Coefficients are the field values at the interpolation nodes.
pub fn lagrange_interp(space: &FeSpace, g: &ScalarField) -> FeFunction {
    FeFunction::interpolate(space, |x, y| g.value(x, y))
}

/// Result of the weighted L2 projection onto the space restricted to a
/// block of elements.
pub struct Projection {
    /// Global coefficient vector, zero outside the block.
    pub field: FeFunction,
    /// Dofs carried by the block, sorted.
    pub dofs: Vec<usize>,
    /// Relative orthogonality defect ||M c - m||_inf / ||m||_inf.
    pub residual: f64,
}

/// b-weighted L2 projection of g onto the block spanned by `elems`:
/// (b (g - pi g), v) = 0 over the block for every block function v.
/// All block dofs participate, including the block boundary.
pub fn weighted_projection(
    space: &FeSpace,
    reaction: &dyn Fn(f64, f64) -> f64,
    g: &dyn Fn(f64, f64) -> f64,
    elems: &[(usize, usize)],
) -> Result<Projection> {
    let block = assemble_block(space, reaction, elems, space.k + 3)?;
    let moments = block_moments(space, reaction, g, elems, &block);
    let mut x = cg_solve(&block.matrix, &moments, 1e-13, 50_000)?.x;
    // one step of iterative refinement; the correction solve needs only a
    // loose relative tolerance since its right side is already tiny
    let mut mv = vec![0.0f64; moments.len()];
    block.matrix.matvec(&x, &mut mv);
    let r: Vec<f64> = moments.iter().zip(&mv).map(|(a, b)| a - b).collect();
    let dx = cg_solve(&block.matrix, &r, 1e-3, 10_000)?.x;
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    block.matrix.matvec(&x, &mut mv);
    let scale = moments.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let defect = mv
        .iter()
        .zip(&moments)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let residual = if scale > 0.0 { defect / scale } else { defect };
    let mut field = FeFunction::zeros(space);
    for (l, &d) in block.dofs.iter().enumerate() {
        field.coeffs[d] = x[l];
    }
    Ok(Projection { field, dofs: block.dofs, residual })
}

/// Nodal indicator of the inner-block boundary ring; vanishes on the
/// domain boundary and away from the ring.
pub fn build_chi(space: &FeSpace) -> Result<FeFunction> {
    let ring = select_dofs(space, Region::RingInnerStar)?;
    let mut chi = FeFunction::zeros(space);
    for d in ring {
        chi.coeffs[d] = 1.0;
    }
    Ok(chi)
}

/// Interpolant used for the convergence experiments: the weighted
/// projection of the smooth part on the inner block (ring included), the
/// Lagrange values of the full field outside.
pub fn build_pc(
    space: &FeSpace,
    reaction: &dyn Fn(f64, f64) -> f64,
    dec: &Decomposition,
) -> Result<FeFunction> {
    let elems = inner_star_elems(space)?;
    let v0 = &dec.smooth;
    let proj = weighted_projection(space, reaction, &|x, y| v0.value(x, y), &elems)?;
    let mut out = FeFunction::interpolate(space, |x, y| {
        let mut v = v0.value(x, y);
        for w in &dec.strips {
            v += w.value(x, y);
        }
        for z in &dec.corners {
            v += z.value(x, y);
        }
        v
    });
    for &d in &proj.dofs {
        out.coeffs[d] = proj.field.coeffs[d];
    }
    Ok(out)
}

/// Global identity of one VEE functional.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VeeFunctional {
    /// Value at mesh vertex (i, j).
    Vertex { i: usize, j: usize },
    /// m-th scaled moment on the horizontal edge [x_i, x_{i+1}] x {y_j}.
    HEdge { i: usize, j: usize, m: usize },
    /// m-th scaled moment on the vertical edge {x_i} x [y_j, y_{j+1}].
    VEdge { i: usize, j: usize, m: usize },
    /// (mx, my) scaled moment over cell (i, j).
    Cell { i: usize, j: usize, mx: usize, my: usize },
}

/// Element-local functional layout; cx/cy pick the low or high side.
#[derive(Clone, Copy)]
enum LocalFunc {
    V { cx: usize, cy: usize },
    HE { m: usize, cy: usize },
    VE { m: usize, cx: usize },
    C { mx: usize, my: usize },
}

fn local_layout(k: usize) -> Vec<LocalFunc> {
    let mut out = vec![
        LocalFunc::V { cx: 0, cy: 0 },
        LocalFunc::V { cx: 1, cy: 0 },
        LocalFunc::V { cx: 0, cy: 1 },
        LocalFunc::V { cx: 1, cy: 1 },
    ];
    for m in 0..k.saturating_sub(1) {
        out.push(LocalFunc::HE { m, cy: 0 });
    }
    for m in 0..k.saturating_sub(1) {
        out.push(LocalFunc::HE { m, cy: 1 });
    }
    for m in 0..k.saturating_sub(1) {
        out.push(LocalFunc::VE { m, cx: 0 });
    }
    for m in 0..k.saturating_sub(1) {
        out.push(LocalFunc::VE { m, cx: 1 });
    }
    for my in 0..k.saturating_sub(1) {
        for mx in 0..k.saturating_sub(1) {
            out.push(LocalFunc::C { mx, my });
        }
    }
    out
}

/// VEE interpolation on a fixed space: factorized local system, 1-D
/// moment rows, and the quadrature used for functional values of fields.
pub struct VeeOperator<'a> {
    space: &'a FeSpace,
    layout: Vec<LocalFunc>,
    lu: DenseLu,
    /// edge[m][j] = (m+1) int_0^1 l_j(t) t^m dt
    edge: Vec<Vec<f64>>,
    /// k+3 point rule on [0, 1]
    qt: Vec<f64>,
    qw: Vec<f64>,
}

impl<'a> VeeOperator<'a> {
    pub fn new(space: &'a FeSpace) -> Result<Self> {
        let k = space.k;
        let (xi, w) = gauss_rule(k + 3);
        let qt: Vec<f64> = xi.iter().map(|x| 0.5 * (x + 1.0)).collect();
        let qw: Vec<f64> = w.iter().map(|x| 0.5 * x).collect();
        let tab = space.reference.tabulate(&qt);

        let mut edge = vec![vec![0.0f64; k + 1]; k.saturating_sub(1)];
        for (m, row) in edge.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (q, &t) in qt.iter().enumerate() {
                    acc += qw[q] * tab.val[q][j] * t.powi(m as i32);
                }
                *entry = (m as f64 + 1.0) * acc;
            }
        }

        let layout = local_layout(k);
        let nl = (k + 1) * (k + 1);
        debug_assert_eq!(layout.len(), nl);
        let mut mat = vec![0.0f64; nl * nl];
        for (r, f) in layout.iter().enumerate() {
            for jy in 0..=k {
                for jx in 0..=k {
                    let col = jy * (k + 1) + jx;
                    mat[r * nl + col] = match *f {
                        LocalFunc::V { cx, cy } => {
                            if jx == cx * k && jy == cy * k {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        LocalFunc::HE { m, cy } => {
                            if jy == cy * k {
                                edge[m][jx]
                            } else {
                                0.0
                            }
                        }
                        LocalFunc::VE { m, cx } => {
                            if jx == cx * k {
                                edge[m][jy]
                            } else {
                                0.0
                            }
                        }
                        LocalFunc::C { mx, my } => edge[mx][jx] * edge[my][jy],
                    };
                }
            }
        }
        let lu = DenseLu::new(&mat, nl)
            .map_err(|_| Error::Singular("local functional system is singular".into()))?;
        Ok(VeeOperator { space, layout, lu, edge, qt, qw })
    }

    /// The element's functionals in local solve order.
    pub fn element_functionals(&self, ex: usize, ey: usize) -> Vec<VeeFunctional> {
        self.layout
            .iter()
            .map(|f| match *f {
                LocalFunc::V { cx, cy } => VeeFunctional::Vertex { i: ex + cx, j: ey + cy },
                LocalFunc::HE { m, cy } => VeeFunctional::HEdge { i: ex, j: ey + cy, m },
                LocalFunc::VE { m, cx } => VeeFunctional::VEdge { i: ex + cx, j: ey, m },
                LocalFunc::C { mx, my } => VeeFunctional::Cell { i: ex, j: ey, mx, my },
            })
            .collect()
    }

    /// Apply a functional to a pointwise field.
    pub fn value_of_field(&self, f: &VeeFunctional, g: &dyn Fn(f64, f64) -> f64) -> f64 {
        let xs = &self.space.mesh.xs;
        let ys = &self.space.mesh.ys;
        match *f {
            VeeFunctional::Vertex { i, j } => g(xs.points[i], ys.points[j]),
            VeeFunctional::HEdge { i, j, m } => {
                let (x0, h) = (xs.points[i], xs.steps[i]);
                let y = ys.points[j];
                let mut acc = 0.0;
                for (q, &t) in self.qt.iter().enumerate() {
                    acc += self.qw[q] * g(x0 + h * t, y) * t.powi(m as i32);
                }
                (m as f64 + 1.0) * acc
            }
            VeeFunctional::VEdge { i, j, m } => {
                let x = xs.points[i];
                let (y0, h) = (ys.points[j], ys.steps[j]);
                let mut acc = 0.0;
                for (q, &t) in self.qt.iter().enumerate() {
                    acc += self.qw[q] * g(x, y0 + h * t) * t.powi(m as i32);
                }
                (m as f64 + 1.0) * acc
            }
            VeeFunctional::Cell { i, j, mx, my } => {
                let (x0, hx) = (xs.points[i], xs.steps[i]);
                let (y0, hy) = (ys.points[j], ys.steps[j]);
                let mut acc = 0.0;
                for (qy, &u) in self.qt.iter().enumerate() {
                    for (qx, &t) in self.qt.iter().enumerate() {
                        acc += self.qw[qx]
                            * self.qw[qy]
                            * g(x0 + hx * t, y0 + hy * u)
                            * t.powi(mx as i32)
                            * u.powi(my as i32);
                    }
                }
                (mx as f64 + 1.0) * (my as f64 + 1.0) * acc
            }
        }
    }

    /// Apply a functional to an FE coefficient vector. Moments of traces
    /// are exact linear combinations of the nodal values, so no
    /// quadrature of the field is involved.
    pub fn value_of_fe(&self, f: &VeeFunctional, coeffs: &[f64]) -> f64 {
        let k = self.space.k;
        match *f {
            VeeFunctional::Vertex { i, j } => coeffs[self.space.node_index(k * i, k * j)],
            VeeFunctional::HEdge { i, j, m } => (0..=k)
                .map(|jx| self.edge[m][jx] * coeffs[self.space.node_index(k * i + jx, k * j)])
                .sum(),
            VeeFunctional::VEdge { i, j, m } => (0..=k)
                .map(|jy| self.edge[m][jy] * coeffs[self.space.node_index(k * i, k * j + jy)])
                .sum(),
            VeeFunctional::Cell { i, j, mx, my } => {
                let mut acc = 0.0;
                for jy in 0..=k {
                    for jx in 0..=k {
                        acc += self.edge[mx][jx]
                            * self.edge[my][jy]
                            * coeffs[self.space.node_index(k * i + jx, k * j + jy)];
                    }
                }
                acc
            }
        }
    }

    /// Elements whose local system involves the functional.
    fn touching(&self, f: &VeeFunctional) -> Result<Vec<(usize, usize)>> {
        let nx = self.space.nx();
        let ny = self.space.ny();
        let k = self.space.k;
        let bad = |what: &str| Err(Error::InvalidParams(format!("functional {what} out of range")));
        let mut out = Vec::with_capacity(4);
        match *f {
            VeeFunctional::Vertex { i, j } => {
                if i > nx || j > ny {
                    return bad("vertex index");
                }
                for ex in i.saturating_sub(1)..=i.min(nx - 1) {
                    for ey in j.saturating_sub(1)..=j.min(ny - 1) {
                        out.push((ex, ey));
                    }
                }
            }
            VeeFunctional::HEdge { i, j, m } => {
                if i >= nx || j > ny || m + 1 >= k {
                    return bad("horizontal edge");
                }
                for ey in j.saturating_sub(1)..=j.min(ny - 1) {
                    out.push((i, ey));
                }
            }
            VeeFunctional::VEdge { i, j, m } => {
                if i > nx || j >= ny || m + 1 >= k {
                    return bad("vertical edge");
                }
                for ex in i.saturating_sub(1)..=i.min(nx - 1) {
                    out.push((ex, j));
                }
            }
            VeeFunctional::Cell { i, j, mx, my } => {
                if i >= nx || j >= ny || mx + 1 >= k || my + 1 >= k {
                    return bad("cell moment");
                }
                out.push((i, j));
            }
        }
        out.dedup();
        Ok(out)
    }

    /// Interpolate over a set of elements, forcing the functionals
    /// selected by `zero` to 0; coefficients outside the set stay 0.
    /// Functional values are computed once and shared between elements,
    /// so shared traces agree bitwise on the input side.
    pub fn interp_masked(
        &self,
        g: &dyn Fn(f64, f64) -> f64,
        elems: &[(usize, usize)],
        zero: &dyn Fn(&VeeFunctional) -> bool,
    ) -> FeFunction {
        let nl = self.layout.len();
        let mut cache: HashMap<VeeFunctional, f64> = HashMap::new();
        let mut rhs = vec![0.0f64; nl];
        let mut out = FeFunction::zeros(self.space);
        for &(ex, ey) in elems {
            let fs = self.element_functionals(ex, ey);
            for (r, f) in fs.iter().enumerate() {
                rhs[r] = if zero(f) {
                    0.0
                } else {
                    *cache.entry(*f).or_insert_with(|| self.value_of_field(f, g))
                };
            }
            let c = self.lu.solve(&rhs);
            for (l, &d) in self.space.element_dofs(ex, ey).iter().enumerate() {
                out.coeffs[d] = c[l];
            }
        }
        out
    }

    /// Global VEE interpolant of a field.
    pub fn interp(&self, g: &dyn Fn(f64, f64) -> f64) -> FeFunction {
        let elems: Vec<(usize, usize)> = (0..self.space.ny())
            .flat_map(|ey| (0..self.space.nx()).map(move |ex| (ex, ey)))
            .collect();
        self.interp_masked(g, &elems, &|_| false)
    }

    /// Replace the listed functional values and re-solve the local
    /// systems of every touched element; all other functionals keep the
    /// values they have on `base`.
    pub fn dof_override(
        &self,
        base: &FeFunction,
        set: &[(VeeFunctional, f64)],
    ) -> Result<FeFunction> {
        if set.is_empty() {
            return Ok(base.clone());
        }
        let mut map: HashMap<VeeFunctional, f64> = HashMap::with_capacity(set.len());
        let mut affected: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (f, v) in set {
            map.insert(*f, *v);
            for el in self.touching(f)? {
                affected.insert(el);
            }
        }
        let nl = self.layout.len();
        let mut rhs = vec![0.0f64; nl];
        let mut out = base.clone();
        for (ex, ey) in affected {
            let fs = self.element_functionals(ex, ey);
            for (r, f) in fs.iter().enumerate() {
                rhs[r] = map
                    .get(f)
                    .copied()
                    .unwrap_or_else(|| self.value_of_fe(f, &base.coeffs));
            }
            let c = self.lu.solve(&rhs);
            for (l, &d) in self.space.element_dofs(ex, ey).iter().enumerate() {
                out.coeffs[d] = c[l];
            }
        }
        Ok(out)
    }
}

/// Global VEE interpolant of a field (convenience wrapper).
pub fn vee_interp(space: &FeSpace, g: &ScalarField) -> Result<FeFunction> {
    let vee = VeeOperator::new(space)?;
    Ok(vee.interp(&|x, y| g.value(x, y)))
}

/// Whether a functional is attached to a run of mesh vertices. Edges
/// count only when they lie entirely inside the run.
fn on_mesh_line(f: &VeeFunctional, line: &MeshLine) -> bool {
    match (*f, *line) {
        (VeeFunctional::Vertex { i, j }, MeshLine::Horizontal { j: lj, i_lo, i_hi }) => {
            j == lj && i_lo <= i && i <= i_hi
        }
        (VeeFunctional::HEdge { i, j, .. }, MeshLine::Horizontal { j: lj, i_lo, i_hi }) => {
            j == lj && i_lo <= i && i + 1 <= i_hi
        }
        (VeeFunctional::Vertex { i, j }, MeshLine::Vertical { i: li, j_lo, j_hi }) => {
            i == li && j_lo <= j && j <= j_hi
        }
        (VeeFunctional::VEdge { i, j, .. }, MeshLine::Vertical { i: li, j_lo, j_hi }) => {
            i == li && j_lo <= j && j + 1 <= j_hi
        }
        _ => false,
    }
}

/// Boundary functionals (vertices and boundary-edge moments) of a set of
/// closed boundary segments, deduplicated.
fn segment_functionals(n: usize, k: usize, segs: &[BoundarySegment]) -> Vec<VeeFunctional> {
    let mut set = BTreeSet::new();
    for seg in segs {
        for v in seg.lo..=seg.hi {
            set.insert(match seg.side {
                Side::Bottom => VeeFunctional::Vertex { i: v, j: 0 },
                Side::Top => VeeFunctional::Vertex { i: v, j: n },
                Side::Left => VeeFunctional::Vertex { i: 0, j: v },
                Side::Right => VeeFunctional::Vertex { i: n, j: v },
            });
        }
        for e in seg.lo..seg.hi {
            for m in 0..k.saturating_sub(1) {
                set.insert(match seg.side {
                    Side::Bottom => VeeFunctional::HEdge { i: e, j: 0, m },
                    Side::Top => VeeFunctional::HEdge { i: e, j: n, m },
                    Side::Left => VeeFunctional::VEdge { i: 0, j: e, m },
                    Side::Right => VeeFunctional::VEdge { i: n, j: e, m },
                });
            }
        }
    }
    set.into_iter().collect()
}

/// Functionals on the square ring of mesh vertices lo..=hi (no cells).
fn ring_functionals(lo: usize, hi: usize, k: usize) -> Vec<VeeFunctional> {
    let mut set = BTreeSet::new();
    for v in lo..=hi {
        set.insert(VeeFunctional::Vertex { i: v, j: lo });
        set.insert(VeeFunctional::Vertex { i: v, j: hi });
        set.insert(VeeFunctional::Vertex { i: lo, j: v });
        set.insert(VeeFunctional::Vertex { i: hi, j: v });
    }
    for e in lo..hi {
        for m in 0..k.saturating_sub(1) {
            set.insert(VeeFunctional::HEdge { i: e, j: lo, m });
            set.insert(VeeFunctional::HEdge { i: e, j: hi, m });
            set.insert(VeeFunctional::VEdge { i: lo, j: e, m });
            set.insert(VeeFunctional::VEdge { i: hi, j: e, m });
        }
    }
    set.into_iter().collect()
}

/// Layer piece: VEE interpolant of the field over its strip or corner
/// box with all functionals on the cut lines forced to zero, extended by
/// zero. The zero trace on the cuts makes the extension continuous.
fn layer_piece(
    vee: &VeeOperator,
    field: &ScalarField,
    elems: &[(usize, usize)],
    cuts: &[MeshLine],
) -> FeFunction {
    vee.interp_masked(
        &|x, y| field.value(x, y),
        elems,
        &|f| cuts.iter().any(|l| on_mesh_line(f, l)),
    )
}

/// Boundary restoration: the function whose functionals equal those of
/// the field on the given far-boundary segments and vanish elsewhere.
fn boundary_restore(
    space: &FeSpace,
    vee: &VeeOperator,
    field: &ScalarField,
    segs: &[BoundarySegment],
) -> Result<FeFunction> {
    let fs = segment_functionals(space.nx(), space.k, segs);
    let set: Vec<(VeeFunctional, f64)> = fs
        .iter()
        .map(|f| (*f, vee.value_of_field(f, &|x, y| field.value(x, y))))
        .collect();
    vee.dof_override(&FeFunction::zeros(space), &set)
}

/// Smooth-part interpolant: the weighted projection on the inner block,
/// glued to the VEE interpolant outside by overriding the ring
/// functionals with the projection's values.
fn smooth_piece(
    space: &FeSpace,
    vee: &VeeOperator,
    reaction: &dyn Fn(f64, f64) -> f64,
    v0: &ScalarField,
) -> Result<FeFunction> {
    let t = table(space)?;
    let (lo, hi) = (t.inner_star.i_lo, t.inner_star.i_hi + 1);
    let elems = inner_star_elems(space)?;
    let proj = weighted_projection(space, reaction, &|x, y| v0.value(x, y), &elems)?;
    let a = vee.interp(&|x, y| v0.value(x, y));
    let ring = ring_functionals(lo, hi, space.k);
    let set: Vec<(VeeFunctional, f64)> = ring
        .iter()
        .map(|f| (*f, vee.value_of_fe(f, &proj.field.coeffs)))
        .collect();
    let mut out = vee.dof_override(&a, &set)?;
    for &d in &proj.dofs {
        out.coeffs[d] = proj.field.coeffs[d];
    }
    Ok(out)
}

/// Interpolant used for the supercloseness experiments: smooth piece,
/// zero-extended layer pieces cut along the interior mesh lines, and the
/// boundary restorations that put the layer traces back on the far
/// boundary parts.
pub fn build_ps(
    space: &FeSpace,
    reaction: &dyn Fn(f64, f64) -> f64,
    dec: &Decomposition,
) -> Result<FeFunction> {
    let t = table(space)?.clone();
    let vee = VeeOperator::new(space)?;
    let mut ps = smooth_piece(space, &vee, reaction, &dec.smooth)?;
    for i in 0..4 {
        let strip_elems: Vec<(usize, usize)> = t.strips[i].iter().collect();
        let si = layer_piece(&vee, &dec.strips[i], &strip_elems, &[t.strip_lines[i]]);
        ps.add_scaled(&si, 1.0);
        let ci = boundary_restore(space, &vee, &dec.strips[i], &t.gamma_w[i])?;
        ps.add_scaled(&ci, 1.0);

        let corner_elems: Vec<(usize, usize)> = t.corners[i].iter().collect();
        let cuts = [t.corner_cuts[i].0, t.corner_cuts[i].1];
        let ti = layer_piece(&vee, &dec.corners[i], &corner_elems, &cuts);
        ps.add_scaled(&ti, 1.0);
        let di = boundary_restore(space, &vee, &dec.corners[i], &t.gamma_z[i])?;
        ps.add_scaled(&di, 1.0);
    }
    Ok(ps)
}
