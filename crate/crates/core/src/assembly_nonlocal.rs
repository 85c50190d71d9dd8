//! Assembly of the double-integral blocks of the coupled bilinear form and
//! of the nonlocal shape-derivative functional, over interacting triangle
//! pairs with horizon truncation.
//!
//! Every routine consumes the ordered pair list produced by
//! [`LabeledMesh::interaction_pairs`] — first triangle NONLOCAL, second of
//! any label — and evaluates tensor-product triangle quadrature with the
//! ball indicator tested at quadrature-point pairs. Workers process fixed
//! chunks of the sorted pair list and their outputs are merged in chunk
//! order, so results are bitwise deterministic regardless of thread count.

use crate::dofs::{DofMap, DofStatus};
use crate::fields::BrokenField;
use crate::geometry::Vec2;
use crate::kernels::Kernel;
use crate::mesh::{Label, LabeledMesh};
use crate::quad::TriangleRule;
use crate::sparse::TripletList;
use rayon::prelude::*;

/// Pairs per parallel work unit (fixed so merge order is reproducible).
const PAIR_CHUNK: usize = 256;

/// Tensor-product quadrature for triangle pairs: `rule_x` on the first
/// (nonlocal) triangle, `rule_y` on the partner.
#[derive(Debug, Clone)]
pub struct PairRule {
    pub rule_x: TriangleRule,
    pub rule_y: TriangleRule,
}

impl Default for PairRule {
    fn default() -> Self {
        PairRule {
            rule_x: TriangleRule::degree5(),
            rule_y: TriangleRule::degree5(),
        }
    }
}

impl PairRule {
    pub fn of_degree(degree: usize) -> Self {
        PairRule {
            rule_x: TriangleRule::of_degree(degree),
            rule_y: TriangleRule::of_degree(degree),
        }
    }
}

/// Physical quadrature points and area-scaled weights for every triangle.
struct TriQuad {
    /// `pts[t]` are the rule's points mapped into triangle `t`.
    pts: Vec<Vec<Vec2>>,
    /// `wts[t][q] = w_q · area(t)`.
    wts: Vec<Vec<f64>>,
    /// The rule's barycentric coordinates (shared by all triangles).
    bary: Vec<[f64; 3]>,
}

impl TriQuad {
    fn build(mesh: &LabeledMesh, rule: &TriangleRule) -> TriQuad {
        let nq = rule.points.len();
        let mut pts = Vec::with_capacity(mesh.n_triangles());
        let mut wts = Vec::with_capacity(mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            let c = mesh.triangle_coords(t);
            let area = mesh.area(t);
            let mut p = Vec::with_capacity(nq);
            let mut w = Vec::with_capacity(nq);
            for &(b, wq) in &rule.points {
                p.push(b[0] * c[0] + b[1] * c[1] + b[2] * c[2]);
                w.push(wq * area);
            }
            pts.push(p);
            wts.push(w);
        }
        TriQuad {
            pts,
            wts,
            bary: rule.points.iter().map(|&(b, _)| b).collect(),
        }
    }
}

fn scatter_block(
    triplets: &mut TripletList,
    rows: &[DofStatus; 3],
    cols: &[DofStatus; 3],
    elem: &[[f64; 3]; 3],
) {
    for i in 0..3 {
        let DofStatus::Free(gi) = rows[i] else { continue };
        for j in 0..3 {
            let DofStatus::Free(gj) = cols[j] else { continue };
            if elem[i][j] != 0.0 {
                triplets.push(gi, gj, elem[i][j]);
            }
        }
    }
}

/// Difference form ∫_{Ω_nl}∫_{Ω_nl} (u(x)−u(y))(v(x)−v(y)) γ(x,y) dy dx.
/// Only the NONLOCAL×NONLOCAL members of `pairs` contribute; each ordered
/// pair is one (x, y) integration patch, so both orderings of distinct
/// triangles must be present (as `interaction_pairs` guarantees).
pub fn assemble_difference_block(
    mesh: &LabeledMesh,
    kernel: &dyn Kernel,
    pairs: &[(usize, usize)],
    map: &DofMap,
    quad: &PairRule,
) -> TripletList {
    let qx = TriQuad::build(mesh, &quad.rule_x);
    let qy = TriQuad::build(mesh, &quad.rule_y);
    let delta2 = kernel.delta() * kernel.delta();
    let n = map.n_free();

    let chunks: Vec<TripletList> = pairs
        .par_chunks(PAIR_CHUNK)
        .map(|chunk| {
            let mut out = TripletList::new(n, n);
            for &(a, b) in chunk {
                if mesh.label(b) != Label::Nonlocal {
                    continue;
                }
                // 6x6 pair element over [basis of T_a at x | basis of T_b at y]
                // with the signed vector s = (λ^a(x), −λ^b(y)).
                let mut e_aa = [[0.0; 3]; 3];
                let mut e_ab = [[0.0; 3]; 3];
                let mut e_bb = [[0.0; 3]; 3];
                for (xq, (x, wx)) in qx.pts[a].iter().zip(&qx.wts[a]).enumerate() {
                    let bx = qx.bary[xq];
                    for (yq, (y, wy)) in qy.pts[b].iter().zip(&qy.wts[b]).enumerate() {
                        if (x - y).norm_squared() >= delta2 {
                            continue;
                        }
                        let by = qy.bary[yq];
                        let w = wx * wy * kernel.smooth_value(*x, *y);
                        if w == 0.0 {
                            continue;
                        }
                        for i in 0..3 {
                            let si = bx[i] * w;
                            for j in 0..3 {
                                e_aa[i][j] += si * bx[j];
                                e_ab[i][j] -= si * by[j];
                                e_bb[i][j] += by[i] * w * by[j];
                            }
                        }
                    }
                }
                let da = map.triangle_dofs(mesh, a);
                let db = map.triangle_dofs(mesh, b);
                scatter_block(&mut out, &da, &da, &e_aa);
                scatter_block(&mut out, &da, &db, &e_ab);
                let mut e_ba = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        e_ba[i][j] = e_ab[j][i];
                    }
                }
                scatter_block(&mut out, &db, &da, &e_ba);
                scatter_block(&mut out, &db, &db, &e_bb);
            }
            out
        })
        .collect();

    let mut total = TripletList::new(n, n);
    for c in &chunks {
        total.merge(c);
    }
    total
}

/// The three sub-blocks produced by expanding the coupling term
/// ∫_{Ω_nl}∫_{Ω_l} (u_nl(x) − u_l(y))(v_nl(x) − v_l(y)) γ(x,y) dy dx.
#[derive(Debug, Clone)]
pub struct CrossBlocks {
    /// Rectangular coupling u_l(y) v_nl(x): rows nonlocal, cols local.
    pub c_nl_l: TripletList,
    /// Weighted mass on the nonlocal side, weight ∫_{Ω_l} γ(x,y) dy.
    pub m_cross_nl: TripletList,
    /// Weighted mass on the local side, weight ∫_{Ω_nl} γ(x,y) dx.
    pub m_cross_l: TripletList,
}

impl CrossBlocks {
    /// The full symmetric coupling form M_cross_nl − C − Cᵀ + M_cross_l.
    pub fn combined(&self) -> TripletList {
        let mut total = self.m_cross_nl.clone();
        total.merge(&self.m_cross_l);
        total.merge_scaled(&self.c_nl_l, -1.0);
        let ct = self.c_nl_l.transposed();
        total.merge_scaled(&ct, -1.0);
        total
    }
}

/// Assembles the cross-coupling sub-blocks from the NONLOCAL×LOCAL members
/// of `pairs`. All three blocks come out of the same pair loop, so their
/// weights are consistent by construction.
pub fn assemble_cross_blocks(
    mesh: &LabeledMesh,
    kernel: &dyn Kernel,
    pairs: &[(usize, usize)],
    map: &DofMap,
    quad: &PairRule,
) -> CrossBlocks {
    let qx = TriQuad::build(mesh, &quad.rule_x);
    let qy = TriQuad::build(mesh, &quad.rule_y);
    let delta2 = kernel.delta() * kernel.delta();
    let n = map.n_free();

    let chunks: Vec<(TripletList, TripletList, TripletList)> = pairs
        .par_chunks(PAIR_CHUNK)
        .map(|chunk| {
            let mut c = TripletList::new(n, n);
            let mut m_nl = TripletList::new(n, n);
            let mut m_l = TripletList::new(n, n);
            for &(a, b) in chunk {
                if mesh.label(b) != Label::Local {
                    continue;
                }
                let mut e_aa = [[0.0; 3]; 3];
                let mut e_ab = [[0.0; 3]; 3];
                let mut e_bb = [[0.0; 3]; 3];
                for (xq, (x, wx)) in qx.pts[a].iter().zip(&qx.wts[a]).enumerate() {
                    let bx = qx.bary[xq];
                    for (yq, (y, wy)) in qy.pts[b].iter().zip(&qy.wts[b]).enumerate() {
                        if (x - y).norm_squared() >= delta2 {
                            continue;
                        }
                        let by = qy.bary[yq];
                        let w = wx * wy * kernel.smooth_value(*x, *y);
                        if w == 0.0 {
                            continue;
                        }
                        for i in 0..3 {
                            let si = bx[i] * w;
                            for j in 0..3 {
                                e_aa[i][j] += si * bx[j];
                                e_ab[i][j] += si * by[j];
                                e_bb[i][j] += by[i] * w * by[j];
                            }
                        }
                    }
                }
                let da = map.triangle_dofs(mesh, a);
                let db = map.triangle_dofs(mesh, b);
                scatter_block(&mut m_nl, &da, &da, &e_aa);
                scatter_block(&mut c, &da, &db, &e_ab);
                scatter_block(&mut m_l, &db, &db, &e_bb);
            }
            (c, m_nl, m_l)
        })
        .collect();

    let mut c_nl_l = TripletList::new(n, n);
    let mut m_cross_nl = TripletList::new(n, n);
    let mut m_cross_l = TripletList::new(n, n);
    for (c, m_nl, m_l) in &chunks {
        c_nl_l.merge(c);
        m_cross_nl.merge(m_nl);
        m_cross_l.merge(m_l);
    }
    CrossBlocks {
        c_nl_l,
        m_cross_nl,
        m_cross_l,
    }
}

/// Absorption block ∫_{Ω_nl} u_nl(x) v_nl(x) ∫_I γ(x,y) dy dx from the
/// NONLOCAL×EXTERIOR members of `pairs`.
pub fn assemble_absorption(
    mesh: &LabeledMesh,
    kernel: &dyn Kernel,
    pairs: &[(usize, usize)],
    map: &DofMap,
    quad: &PairRule,
) -> TripletList {
    let qx = TriQuad::build(mesh, &quad.rule_x);
    let qy = TriQuad::build(mesh, &quad.rule_y);
    let delta2 = kernel.delta() * kernel.delta();
    let n = map.n_free();

    let chunks: Vec<TripletList> = pairs
        .par_chunks(PAIR_CHUNK)
        .map(|chunk| {
            let mut out = TripletList::new(n, n);
            for &(a, b) in chunk {
                if mesh.label(b) != Label::Exterior {
                    continue;
                }
                let mut e_aa = [[0.0; 3]; 3];
                for (xq, (x, wx)) in qx.pts[a].iter().zip(&qx.wts[a]).enumerate() {
                    let bx = qx.bary[xq];
                    for (y, wy) in qy.pts[b].iter().zip(&qy.wts[b]) {
                        if (x - y).norm_squared() >= delta2 {
                            continue;
                        }
                        let w = wx * wy * kernel.smooth_value(*x, *y);
                        if w == 0.0 {
                            continue;
                        }
                        for i in 0..3 {
                            for j in 0..3 {
                                e_aa[i][j] += bx[i] * w * bx[j];
                            }
                        }
                    }
                }
                let da = map.triangle_dofs(mesh, a);
                scatter_block(&mut out, &da, &da, &e_aa);
            }
            out
        })
        .collect();

    let mut total = TripletList::new(n, n);
    for c in &chunks {
        total.merge(c);
    }
    total
}

/// All nonlocal blocks of the coupled bilinear form, assembled from one
/// pair list.
#[derive(Debug, Clone)]
pub struct NonlocalBlocks {
    pub difference: TripletList,
    pub cross: CrossBlocks,
    pub absorption: TripletList,
}

impl NonlocalBlocks {
    pub fn assemble(
        mesh: &LabeledMesh,
        kernel: &dyn Kernel,
        pairs: &[(usize, usize)],
        map: &DofMap,
        quad: &PairRule,
    ) -> NonlocalBlocks {
        NonlocalBlocks {
            difference: assemble_difference_block(mesh, kernel, pairs, map, quad),
            cross: assemble_cross_blocks(mesh, kernel, pairs, map, quad),
            absorption: assemble_absorption(mesh, kernel, pairs, map, quad),
        }
    }

    /// Sum of all nonlocal contributions (everything except the Laplace
    /// block): D + [M_cross_nl − C − Cᵀ + M_cross_l] + M_absorb.
    pub fn full_form(&self) -> TripletList {
        let mut total = self.difference.clone();
        total.merge(&self.cross.combined());
        total.merge(&self.absorption);
        total
    }
}

/// Shape derivative of the nonlocal double integral: for every P1 vector
/// nodal basis function V_i (2 per vertex, layout `2·vertex + component`)
/// the value of
///
///   ∫_{Ω_nl} ∫_{Ω_nl ∪ I_nl} (v(x)−v(y))(u(x)−u(y))
///       [∇_x φ(x,y)·V(x) + ∇_y φ(x,y)·V(y)] dy dx
/// + ∫_{Ω_nl} ∫_{Ω_nl ∪ I_nl} (v(x)−v(y))(u(x)−u(y)) γ(x,y)
///       [div V(x) + div V(y)] dy dx,
///
/// with u, v evaluated on the side owning each triangle (zero on the
/// exterior layer) and the kernel gradient taken from the smooth part φ
/// only. The y-domain Ω_nl ∪ I_nl is realized by the full pair list —
/// NONLOCAL partners carry the nonlocal-side field, LOCAL partners the
/// local-side field (I_nl ∩ Ω_l), EXTERIOR partners the constrained zeros.
/// For kernels with ∇φ ≡ 0 the gradient term is skipped entirely.
pub fn assemble_nl_shape_derivative(
    mesh: &LabeledMesh,
    kernel: &dyn Kernel,
    map: &DofMap,
    u: &BrokenField,
    v: &BrokenField,
    pairs: &[(usize, usize)],
    quad: &PairRule,
) -> Vec<f64> {
    let qx = TriQuad::build(mesh, &quad.rule_x);
    let qy = TriQuad::build(mesh, &quad.rule_y);
    let delta2 = kernel.delta() * kernel.delta();
    let with_grad = !kernel.smooth_grad_is_zero();
    let n_out = 2 * mesh.n_vertices();

    // Constant P1 gradients per triangle (for div V).
    let grads: Vec<[Vec2; 3]> = (0..mesh.n_triangles())
        .map(|t| crate::assembly_local::p1_gradients(&mesh.triangle_coords(t)).0)
        .collect();

    let chunks: Vec<Vec<f64>> = pairs
        .par_chunks(PAIR_CHUNK)
        .map(|chunk| {
            let mut out = vec![0.0; n_out];
            for &(a, b) in chunk {
                let ua = u.triangle_values(map, mesh, a);
                let va = v.triangle_values(map, mesh, a);
                let ub = u.triangle_values(map, mesh, b);
                let vb = v.triangle_values(map, mesh, b);
                let verts_a = mesh.triangle(a);
                let verts_b = mesh.triangle(b);
                let ga = &grads[a];
                let gb = &grads[b];
                for (xq, (x, wx)) in qx.pts[a].iter().zip(&qx.wts[a]).enumerate() {
                    let bx = qx.bary[xq];
                    let ux = bx[0] * ua[0] + bx[1] * ua[1] + bx[2] * ua[2];
                    let vx = bx[0] * va[0] + bx[1] * va[1] + bx[2] * va[2];
                    for (yq, (y, wy)) in qy.pts[b].iter().zip(&qy.wts[b]).enumerate() {
                        if (x - y).norm_squared() >= delta2 {
                            continue;
                        }
                        let by = qy.bary[yq];
                        let uy = by[0] * ub[0] + by[1] * ub[1] + by[2] * ub[2];
                        let vy = by[0] * vb[0] + by[1] * vb[1] + by[2] * vb[2];
                        let pair_w = wx * wy * (ux - uy) * (vx - vy);
                        if pair_w == 0.0 {
                            continue;
                        }
                        let gamma = kernel.smooth_value(*x, *y);
                        // div V terms: div of the (vertex w, component m)
                        // basis on its triangle is ∇λ_w[m].
                        let wg = pair_w * gamma;
                        for i in 0..3 {
                            let o = 2 * verts_a[i];
                            out[o] += wg * ga[i].x;
                            out[o + 1] += wg * ga[i].y;
                        }
                        for j in 0..3 {
                            let o = 2 * verts_b[j];
                            out[o] += wg * gb[j].x;
                            out[o + 1] += wg * gb[j].y;
                        }
                        if with_grad {
                            let gx = kernel.smooth_grad_x(*x, *y);
                            let gy = kernel.smooth_grad_y(*x, *y);
                            for i in 0..3 {
                                let o = 2 * verts_a[i];
                                let s = pair_w * bx[i];
                                out[o] += s * gx.x;
                                out[o + 1] += s * gx.y;
                            }
                            for j in 0..3 {
                                let o = 2 * verts_b[j];
                                let s = pair_w * by[j];
                                out[o] += s * gy.x;
                                out[o + 1] += s * gy.y;
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();

    let mut total = vec![0.0; n_out];
    for c in &chunks {
        for (t, ci) in total.iter_mut().zip(c) {
            *t += ci;
        }
    }
    total
}
