//! Galerkin assembly of eps^2 (grad u, grad v) + (b u, v) on tensor
//! meshes, plus weighted mass blocks used by the projection operators.
//!
//! All element integrals use tensor Gauss rules: k+2 points per direction
//! for matrices (exact for the polynomial integrands), k+3 for moment
//! vectors against non-polynomial fields.

use crate::fespace::{gauss_rule, FeSpace};
use crate::linsolve::CsrMatrix;
use crate::Result;

/// Eliminated linear system over interior degrees of freedom.
pub struct SystemPair {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// interior index -> global dof
    pub interior: Vec<usize>,
    /// global dof -> interior index
    pub index_of: Vec<Option<usize>>,
}

/// Weighted mass matrix over a subset of elements, numbered over the
/// dofs those elements touch.
pub struct BlockGram {
    pub matrix: CsrMatrix,
    /// local index -> global dof, sorted ascending
    pub dofs: Vec<usize>,
    /// global dof -> local index
    pub index_of: Vec<Option<usize>>,
}

/// Per-quad-point tensor basis data for one element.
struct ElementQuad {
    q: usize,
    ts: Vec<f64>,
    wq: Vec<f64>,
    val: Vec<Vec<f64>>,
    der: Vec<Vec<f64>>,
}

impl ElementQuad {
    fn new(space: &FeSpace, points: usize) -> Self {
        let (xi, wq) = gauss_rule(points);
        let ts: Vec<f64> = xi.iter().map(|x| 0.5 * (x + 1.0)).collect();
        let tab = space.reference.tabulate(&ts);
        ElementQuad { q: points, ts, wq, val: tab.val, der: tab.der }
    }
}

/// Dense local matrix of the bilinear form on element (ex, ey),
/// (k+1)^2 square, local lexicographic dof order.
#[allow(clippy::too_many_arguments)]
fn local_matrix(
    space: &FeSpace,
    eq: &ElementQuad,
    ex: usize,
    ey: usize,
    eps2: f64,
    reaction: &dyn Fn(f64, f64) -> f64,
    local: &mut [f64],
    rhs_local: Option<(&dyn Fn(f64, f64) -> f64, &mut [f64])>,
) {
    let k = space.k;
    let nl = (k + 1) * (k + 1);
    let hx = space.mesh.xs.steps[ex];
    let hy = space.mesh.ys.steps[ey];
    let x0 = space.mesh.xs.points[ex];
    let y0 = space.mesh.ys.points[ey];
    local.iter_mut().for_each(|v| *v = 0.0);
    let mut load = rhs_local;
    if let Some((_, r)) = load.as_mut() {
        r.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut va = vec![0.0f64; nl];
    let mut gxa = vec![0.0f64; nl];
    let mut gya = vec![0.0f64; nl];
    for qy in 0..eq.q {
        for qx in 0..eq.q {
            let x = x0 + hx * eq.ts[qx];
            let y = y0 + hy * eq.ts[qy];
            let wgt = eq.wq[qx] * eq.wq[qy] * hx * hy * 0.25;
            let bval = reaction(x, y);
            for jy in 0..=k {
                for jx in 0..=k {
                    let a = jy * (k + 1) + jx;
                    va[a] = eq.val[qx][jx] * eq.val[qy][jy];
                    gxa[a] = eq.der[qx][jx] / hx * eq.val[qy][jy];
                    gya[a] = eq.val[qx][jx] * eq.der[qy][jy] / hy;
                }
            }
            for a in 0..nl {
                for b in 0..nl {
                    local[a * nl + b] += wgt
                        * (eps2 * (gxa[a] * gxa[b] + gya[a] * gya[b]) + bval * va[a] * va[b]);
                }
            }
            if let Some((f, r)) = load.as_mut() {
                let fv = wgt * f(x, y);
                for a in 0..nl {
                    r[a] += fv * va[a];
                }
            }
        }
    }
}

/// Full bilinear-form matrix over all dofs, no boundary conditions.
/// epsilon = 0 gives the plain weighted mass matrix.
pub fn assemble_gram(
    space: &FeSpace,
    epsilon: f64,
    reaction: &dyn Fn(f64, f64) -> f64,
) -> Result<CsrMatrix> {
    let eq = ElementQuad::new(space, space.k + 2);
    let nl = (space.k + 1) * (space.k + 1);
    let mut local = vec![0.0f64; nl * nl];
    let mut triplets = Vec::with_capacity(space.nx() * space.ny() * nl * nl);
    for ey in 0..space.ny() {
        for ex in 0..space.nx() {
            local_matrix(space, &eq, ex, ey, epsilon * epsilon, reaction, &mut local, None);
            let dofs = space.element_dofs(ex, ey);
            for a in 0..nl {
                for b in 0..nl {
                    triplets.push((dofs[a], dofs[b], local[a * nl + b]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(space.num_dofs(), &triplets)
}

/// Assemble the PDE system and eliminate the homogeneous Dirichlet
/// boundary, keeping interior dofs only.
pub fn assemble_system(
    space: &FeSpace,
    epsilon: f64,
    reaction: &dyn Fn(f64, f64) -> f64,
    load: &dyn Fn(f64, f64) -> f64,
) -> Result<SystemPair> {
    let boundary = space.boundary_mask();
    let mut index_of = vec![None; space.num_dofs()];
    let mut interior = Vec::new();
    for (d, &on_boundary) in boundary.iter().enumerate() {
        if !on_boundary {
            index_of[d] = Some(interior.len());
            interior.push(d);
        }
    }

    let eq = ElementQuad::new(space, space.k + 2);
    let nl = (space.k + 1) * (space.k + 1);
    let mut local = vec![0.0f64; nl * nl];
    let mut rhs_local = vec![0.0f64; nl];
    let mut rhs = vec![0.0f64; interior.len()];
    let mut triplets = Vec::new();
    for ey in 0..space.ny() {
        for ex in 0..space.nx() {
            local_matrix(
                space,
                &eq,
                ex,
                ey,
                epsilon * epsilon,
                reaction,
                &mut local,
                Some((load, &mut rhs_local)),
            );
            let dofs = space.element_dofs(ex, ey);
            for a in 0..nl {
                let Some(ia) = index_of[dofs[a]] else { continue };
                rhs[ia] += rhs_local[a];
                for b in 0..nl {
                    if let Some(ib) = index_of[dofs[b]] {
                        triplets.push((ia, ib, local[a * nl + b]));
                    }
                }
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(interior.len(), &triplets)?;
    Ok(SystemPair { matrix, rhs, interior, index_of })
}

/// Weighted mass matrix restricted to the given elements; integrals run
/// over those elements only, with `points` Gauss points per direction.
pub fn assemble_block(
    space: &FeSpace,
    reaction: &dyn Fn(f64, f64) -> f64,
    elems: &[(usize, usize)],
    points: usize,
) -> Result<BlockGram> {
    let mut seen = std::collections::BTreeSet::new();
    for &(ex, ey) in elems {
        for d in space.element_dofs(ex, ey) {
            seen.insert(d);
        }
    }
    let dofs: Vec<usize> = seen.into_iter().collect();
    let mut index_of = vec![None; space.num_dofs()];
    for (l, &d) in dofs.iter().enumerate() {
        index_of[d] = Some(l);
    }

    let eq = ElementQuad::new(space, points);
    let nl = (space.k + 1) * (space.k + 1);
    let mut local = vec![0.0f64; nl * nl];
    let mut triplets = Vec::new();
    for &(ex, ey) in elems {
        local_matrix(space, &eq, ex, ey, 0.0, reaction, &mut local, None);
        let edofs = space.element_dofs(ex, ey);
        for a in 0..nl {
            for b in 0..nl {
                let (ia, ib) = (index_of[edofs[a]].unwrap(), index_of[edofs[b]].unwrap());
                triplets.push((ia, ib, local[a * nl + b]));
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(dofs.len(), &triplets)?;
    Ok(BlockGram { matrix, dofs, index_of })
}

/// Moment vector (b field, phi_i) over the block's elements, in the
/// block's local numbering. Uses k+3 quadrature points per direction.
pub fn block_moments(
    space: &FeSpace,
    reaction: &dyn Fn(f64, f64) -> f64,
    field: &dyn Fn(f64, f64) -> f64,
    elems: &[(usize, usize)],
    block: &BlockGram,
) -> Vec<f64> {
    let eq = ElementQuad::new(space, space.k + 3);
    let k = space.k;
    let mut out = vec![0.0f64; block.dofs.len()];
    for &(ex, ey) in elems {
        let hx = space.mesh.xs.steps[ex];
        let hy = space.mesh.ys.steps[ey];
        let x0 = space.mesh.xs.points[ex];
        let y0 = space.mesh.ys.points[ey];
        let dofs = space.element_dofs(ex, ey);
        for qy in 0..eq.q {
            for qx in 0..eq.q {
                let x = x0 + hx * eq.ts[qx];
                let y = y0 + hy * eq.ts[qy];
                let wgt = eq.wq[qx] * eq.wq[qy] * hx * hy * 0.25;
                let fv = wgt * reaction(x, y) * field(x, y);
                for jy in 0..=k {
                    for jx in 0..=k {
                        let l = block.index_of[dofs[jy * (k + 1) + jx]].unwrap();
                        out[l] += fv * eq.val[qx][jx] * eq.val[qy][jy];
                    }
                }
            }
        }
    }
    out
}

/// Empirical lower bound on a(v, v) / (eps^2 |v|_1^2 + ||v||^2) over
/// random vectors vanishing on the boundary. For b >= 2 beta^2 the form
/// is coercive with constant min(2 beta^2, 1).
pub fn coercivity_probe(
    space: &FeSpace,
    epsilon: f64,
    reaction: &dyn Fn(f64, f64) -> f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let a = assemble_gram(space, epsilon, reaction)?;
    let g = assemble_gram(space, epsilon, &|_, _| 1.0)?;
    let boundary = space.boundary_mask();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let v: Vec<f64> = boundary
            .iter()
            .map(|&b| if b { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let mut mv = vec![0.0f64; v.len()];
        let mut quad = |m: &CsrMatrix| -> f64 {
            m.matvec(&v, &mut mv);
            v.iter().zip(&mv).map(|(a, b)| a * b).sum()
        };
        let denom = quad(&g);
        if denom > 0.0 {
            worst = worst.min(quad(&a) / denom);
        }
    }
    Ok(worst)
}
