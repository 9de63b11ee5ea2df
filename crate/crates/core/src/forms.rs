//! Assembly of the spatial forms at a fixed time.
//!
//! All matrices are square over the full Taylor–Hood vector `[v_x | v_y | p]`
//! and are kept separate per term so they can be inspected and combined.
//! Conventions (test function `(psi, xi)`, trial `(v, p)`, `n` pointing out of
//! the fluid):
//!
//! ```text
//! viscous        nu (grad v, grad psi)_f
//! pressure_grad  -(p, div psi)_f
//! divergence     (div v, xi)_f
//! nitsche        -<nu dv/dn - p n, psi> - <v, nu dpsi/dn + xi n>
//!                + gamma1 nu/h <v, psi> + gamma2/h <v.n, psi.n>
//! ghost          sum_F gamma_v (E1 v - E2 v, E1 psi - E2 psi)_{K1 u K2}
//!                    + gamma_p (E1 p - E2 p, E1 xi - E2 xi)_{K1 u K2}
//! ```
//!
//! where `E1`, `E2` evaluate the polynomial of the first/second cell of a
//! face over the whole two-cell patch.

use crate::error::{Error, Result};
use crate::geometry::{CutGeometry, VolumeRule};
use crate::mesh::{BackgroundMesh, CellId, FaceId};
use crate::quadrature::GaussRule;
use crate::space::{BasisEval, TaylorHoodSpace};
use crate::sparse::{CsrMatrix, Triplets};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NitscheParams {
    pub gamma1: f64,
    pub gamma2: f64,
}

impl NitscheParams {
    pub fn new(gamma1: f64, gamma2: f64) -> Result<Self> {
        if !(gamma1 > 0.0 && gamma2 > 0.0) {
            return Err(Error::InvalidParameter("Nitsche parameters must be positive".into()));
        }
        Ok(Self { gamma1, gamma2 })
    }

    /// `gamma1 = 20 r^2`, `gamma2 = 2 r^2`.
    pub fn for_degree(r: usize) -> Self {
        let r2 = (r * r) as f64;
        Self {
            gamma1: 20.0 * r2,
            gamma2: 2.0 * r2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GhostPenaltyParams {
    pub velocity: f64,
    pub pressure: f64,
}

impl Default for GhostPenaltyParams {
    fn default() -> Self {
        Self {
            velocity: 0.05,
            pressure: 0.05,
        }
    }
}

impl GhostPenaltyParams {
    pub fn new(velocity: f64, pressure: f64) -> Result<Self> {
        if !(velocity >= 0.0 && pressure >= 0.0) {
            return Err(Error::InvalidParameter("ghost penalty scales must be nonnegative".into()));
        }
        Ok(Self { velocity, pressure })
    }

    pub fn is_disabled(&self) -> bool {
        self.velocity == 0.0 && self.pressure == 0.0
    }

    /// `(gamma_v, gamma_p) = (gv (1/nu + nu) / h^2, gp / nu)`
    pub fn scaled(&self, nu: f64, h: f64) -> (f64, f64) {
        (self.velocity * (1.0 / nu + nu) / (h * h), self.pressure / nu)
    }
}

/// How the homogeneous condition on the outer boundary is imposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OuterBoundary {
    /// Identity rows on all velocity dofs of the square's boundary.
    #[default]
    Strong,
    /// The same Nitsche terms as on the interface.
    Nitsche,
}

/// Basis values and gradients of one cell at its quadrature points.
#[derive(Clone, Debug)]
pub struct CellTable {
    pub cell: CellId,
    pub vdofs: Vec<usize>,
    pub pdofs: Vec<usize>,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub vel: Vec<BasisEval>,
    pub pre: Vec<BasisEval>,
}

impl CellTable {
    pub fn new(space: &TaylorHoodSpace, cell: CellId, rule: &VolumeRule) -> Self {
        let tab = |s: &crate::space::ScalarSpace| -> Vec<BasisEval> {
            rule.points
                .iter()
                .map(|&p| {
                    let mut e = BasisEval::default();
                    s.eval_into(cell, p, &mut e);
                    e
                })
                .collect()
        };
        Self {
            cell,
            vdofs: space.velocity.cell_dofs(cell),
            pdofs: space.pressure.cell_dofs(cell),
            points: rule.points.clone(),
            weights: rule.weights.clone(),
            vel: tab(&space.velocity),
            pre: tab(&space.pressure),
        }
    }
}

/// Tabulated basis functions on every cell with fluid measure.
pub fn tabulate_fluid(space: &TaylorHoodSpace, geometry: &CutGeometry) -> Vec<CellTable> {
    geometry
        .fluid_cells()
        .map(|(cell, rule)| CellTable::new(space, cell, rule))
        .collect()
}

/// Quadrature points on a piece of the Dirichlet boundary.
#[derive(Clone, Debug)]
pub struct BoundaryPiece {
    pub cell: CellId,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub normals: Vec<[f64; 2]>,
}

/// Interface arcs of all cut cells, plus the square's edges when the outer
/// condition is imposed weakly.
pub fn boundary_pieces(mesh: &BackgroundMesh, geometry: &CutGeometry, outer: OuterBoundary) -> Vec<BoundaryPiece> {
    let mut out: Vec<BoundaryPiece> = geometry
        .cut_cells()
        .map(|(cell, r)| BoundaryPiece {
            cell,
            points: r.points.clone(),
            weights: r.weights.clone(),
            normals: r.normals.clone(),
        })
        .collect();
    if outer == OuterBoundary::Nitsche {
        let g = GaussRule::with_degree(geometry.q_surf());
        for f in mesh.boundary_faces() {
            let len = (f.end[0] - f.start[0]).hypot(f.end[1] - f.start[1]);
            let mut piece = BoundaryPiece {
                cell: f.cell,
                points: Vec::new(),
                weights: Vec::new(),
                normals: Vec::new(),
            };
            for (t, w) in g.points.iter().zip(&g.weights) {
                piece.points.push([
                    f.start[0] + t * (f.end[0] - f.start[0]),
                    f.start[1] + t * (f.end[1] - f.start[1]),
                ]);
                piece.weights.push(w * len);
                piece.normals.push(f.normal);
            }
            out.push(piece);
        }
    }
    out
}

/// Volume operators of the Stokes part plus the fluid velocity mass matrix.
#[derive(Clone, Debug)]
pub struct VolumeOperators {
    pub viscous: CsrMatrix,
    pub pressure_grad: CsrMatrix,
    pub divergence: CsrMatrix,
    pub mass_fluid: CsrMatrix,
}

pub fn assemble_volume_linear(space: &TaylorHoodSpace, tables: &[CellTable], nu: f64) -> VolumeOperators {
    let n = space.total_dofs();
    let nv = space.nv();
    let po = space.offset(crate::space::Block::Pressure);
    let mut visc = Triplets::new(n, n);
    let mut grad = Triplets::new(n, n);
    let mut div = Triplets::new(n, n);
    let mut mass = Triplets::new(n, n);
    for t in tables {
        let kv = t.vdofs.len();
        let kp = t.pdofs.len();
        let mut a = vec![0.0; kv * kv];
        let mut m = vec![0.0; kv * kv];
        // b[i][j]: velocity test i (component-free part), pressure trial j, per component
        let mut bx = vec![0.0; kv * kp];
        let mut by = vec![0.0; kv * kp];
        for q in 0..t.weights.len() {
            let w = t.weights[q];
            let ev = &t.vel[q];
            let ep = &t.pre[q];
            for i in 0..kv {
                let gi = ev.grads[i];
                for j in 0..kv {
                    let gj = ev.grads[j];
                    a[i * kv + j] += w * nu * (gi[0] * gj[0] + gi[1] * gj[1]);
                    m[i * kv + j] += w * ev.values[i] * ev.values[j];
                }
                for j in 0..kp {
                    bx[i * kp + j] += w * ep.values[j] * gi[0];
                    by[i * kp + j] += w * ep.values[j] * gi[1];
                }
            }
        }
        for i in 0..kv {
            let gi = t.vdofs[i];
            for j in 0..kv {
                let gj = t.vdofs[j];
                for off in [0, nv] {
                    visc.add(gi + off, gj + off, a[i * kv + j]);
                    mass.add(gi + off, gj + off, m[i * kv + j]);
                }
            }
            for j in 0..kp {
                let pj = po + t.pdofs[j];
                grad.add(gi, pj, -bx[i * kp + j]);
                grad.add(gi + nv, pj, -by[i * kp + j]);
                div.add(pj, gi, bx[i * kp + j]);
                div.add(pj, gi + nv, by[i * kp + j]);
            }
        }
    }
    VolumeOperators {
        viscous: visc.into_csr(),
        pressure_grad: grad.into_csr(),
        divergence: div.into_csr(),
        mass_fluid: mass.into_csr(),
    }
}

/// Convection residual and Jacobian blocks of one cell.
#[derive(Clone, Debug)]
pub struct LocalConvection {
    /// `res[i][c]`: component `c` tested with local velocity basis function `i`.
    pub res: Vec<[f64; 2]>,
    /// `jac[c][d][i * kv + j]`: row component `c`, column component `d`.
    pub jac: Option<[[Vec<f64>; 2]; 2]>,
}

/// `((v . grad) v, psi)` on one cell for the velocity `v` given by the local
/// coefficients `ux`, `uy`, with the Jacobian `c(dv; v, psi) + c(v; dv, psi)`.
pub fn cell_convection(t: &CellTable, ux: &[f64], uy: &[f64], with_jacobian: bool) -> LocalConvection {
    let kv = t.vdofs.len();
    let mut res = vec![[0.0; 2]; kv];
    let mut jac = with_jacobian.then(|| {
        [[vec![0.0; kv * kv], vec![0.0; kv * kv]], [vec![0.0; kv * kv], vec![0.0; kv * kv]]]
    });
    for q in 0..t.weights.len() {
        let w = t.weights[q];
        let ev = &t.vel[q];
        let mut v = [0.0; 2];
        let mut g = [[0.0; 2]; 2];
        for k in 0..kv {
            let (phi, dphi) = (ev.values[k], ev.grads[k]);
            v[0] += ux[k] * phi;
            v[1] += uy[k] * phi;
            for d in 0..2 {
                g[0][d] += ux[k] * dphi[d];
                g[1][d] += uy[k] * dphi[d];
            }
        }
        let conv = [v[0] * g[0][0] + v[1] * g[0][1], v[0] * g[1][0] + v[1] * g[1][1]];
        for i in 0..kv {
            let wi = w * ev.values[i];
            res[i][0] += wi * conv[0];
            res[i][1] += wi * conv[1];
            if let Some(jl) = jac.as_mut() {
                for j in 0..kv {
                    let phij = ev.values[j];
                    let adv = v[0] * ev.grads[j][0] + v[1] * ev.grads[j][1];
                    for c in 0..2 {
                        for d in 0..2 {
                            let mut val = phij * g[c][d];
                            if c == d {
                                val += adv;
                            }
                            jl[c][d][i * kv + j] += wi * val;
                        }
                    }
                }
            }
        }
    }
    LocalConvection { res, jac }
}

/// Residual `(v . grad) v` tested with every velocity basis function, and
/// optionally its exact Jacobian with respect to `v`.
pub fn assemble_convection(
    space: &TaylorHoodSpace,
    tables: &[CellTable],
    state: &[f64],
    with_jacobian: bool,
) -> (Vec<f64>, Option<CsrMatrix>) {
    let n = space.total_dofs();
    let nv = space.nv();
    let mut res = vec![0.0; n];
    let mut jac = with_jacobian.then(|| Triplets::with_capacity(n, n, tables.len() * 4 * 81));
    for t in tables {
        let kv = t.vdofs.len();
        let ux: Vec<f64> = t.vdofs.iter().map(|&d| state[d]).collect();
        let uy: Vec<f64> = t.vdofs.iter().map(|&d| state[d + nv]).collect();
        if ux.iter().chain(&uy).all(|&x| x == 0.0) {
            continue;
        }
        let local = cell_convection(t, &ux, &uy, with_jacobian);
        for i in 0..kv {
            res[t.vdofs[i]] += local.res[i][0];
            res[t.vdofs[i] + nv] += local.res[i][1];
        }
        if let (Some(jac), Some(jl)) = (jac.as_mut(), local.jac.as_ref()) {
            for c in 0..2 {
                for d in 0..2 {
                    for i in 0..kv {
                        for j in 0..kv {
                            jac.add(t.vdofs[i] + c * nv, t.vdofs[j] + d * nv, jl[c][d][i * kv + j]);
                        }
                    }
                }
            }
        }
    }
    (res, jac.map(Triplets::into_csr))
}

/// Which parts of the Nitsche form to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NitscheTerms {
    pub consistency: bool,
    pub penalty: bool,
}

/// Consistency, adjoint-consistency and penalty terms on the Dirichlet boundary.
pub fn assemble_nitsche(
    space: &TaylorHoodSpace,
    pieces: &[BoundaryPiece],
    nu: f64,
    params: NitscheParams,
    h: f64,
) -> CsrMatrix {
    let all = NitscheTerms {
        consistency: true,
        penalty: true,
    };
    assemble_nitsche_terms(space, pieces, nu, params, h, all)
}

pub fn assemble_nitsche_terms(
    space: &TaylorHoodSpace,
    pieces: &[BoundaryPiece],
    nu: f64,
    params: NitscheParams,
    h: f64,
    terms: NitscheTerms,
) -> CsrMatrix {
    let n = space.total_dofs();
    let nv = space.nv();
    let po = space.offset(crate::space::Block::Pressure);
    let mut t = Triplets::new(n, n);
    let mut ev = BasisEval::default();
    let mut ep = BasisEval::default();
    let (pen1, pen2) = if terms.penalty {
        (params.gamma1 * nu / h, params.gamma2 / h)
    } else {
        (0.0, 0.0)
    };
    let cons = if terms.consistency { 1.0 } else { 0.0 };
    for piece in pieces {
        let vdofs = space.velocity.cell_dofs(piece.cell);
        let pdofs = space.pressure.cell_dofs(piece.cell);
        let kv = vdofs.len();
        let kp = pdofs.len();
        for q in 0..piece.points.len() {
            let p = piece.points[q];
            let w = piece.weights[q];
            let nrm = piece.normals[q];
            space.velocity.eval_into(piece.cell, p, &mut ev);
            space.pressure.eval_into(piece.cell, p, &mut ep);
            let dn: Vec<f64> = ev.grads.iter().map(|g| g[0] * nrm[0] + g[1] * nrm[1]).collect();
            for i in 0..kv {
                let phi_i = ev.values[i];
                for j in 0..kv {
                    let phi_j = ev.values[j];
                    let diag = -cons * nu * (dn[j] * phi_i + phi_j * dn[i]) + pen1 * phi_j * phi_i;
                    for c in 0..2 {
                        for d in 0..2 {
                            let mut val = pen2 * phi_j * nrm[d] * phi_i * nrm[c];
                            if c == d {
                                val += diag;
                            }
                            t.add(vdofs[i] + c * nv, vdofs[j] + d * nv, w * val);
                        }
                    }
                }
                for j in 0..kp {
                    let pj = po + pdofs[j];
                    let val = cons * w * ep.values[j] * phi_i;
                    for c in 0..2 {
                        t.add(vdofs[i] + c * nv, pj, val * nrm[c]);
                        t.add(pj, vdofs[i] + c * nv, -val * nrm[c]);
                    }
                }
            }
        }
    }
    t.into_csr()
}

/// Right-hand side contribution `B(g, (psi, xi))` of the Nitsche terms.
pub fn nitsche_load(
    space: &TaylorHoodSpace,
    pieces: &[BoundaryPiece],
    nu: f64,
    params: NitscheParams,
    h: f64,
    g: &dyn Fn([f64; 2]) -> [f64; 2],
) -> Vec<f64> {
    let nv = space.nv();
    let po = space.offset(crate::space::Block::Pressure);
    let mut out = vec![0.0; space.total_dofs()];
    let mut ev = BasisEval::default();
    let mut ep = BasisEval::default();
    let pen1 = params.gamma1 * nu / h;
    let pen2 = params.gamma2 / h;
    for piece in pieces {
        let vdofs = space.velocity.cell_dofs(piece.cell);
        let pdofs = space.pressure.cell_dofs(piece.cell);
        for q in 0..piece.points.len() {
            let p = piece.points[q];
            let gv = g(p);
            if gv == [0.0, 0.0] {
                continue;
            }
            let w = piece.weights[q];
            let nrm = piece.normals[q];
            let gn = gv[0] * nrm[0] + gv[1] * nrm[1];
            space.velocity.eval_into(piece.cell, p, &mut ev);
            space.pressure.eval_into(piece.cell, p, &mut ep);
            for (i, &d) in vdofs.iter().enumerate() {
                let phi = ev.values[i];
                let dn = ev.grads[i][0] * nrm[0] + ev.grads[i][1] * nrm[1];
                for c in 0..2 {
                    out[d + c * nv] += w * (-nu * gv[c] * dn + pen1 * gv[c] * phi + pen2 * gn * phi * nrm[c]);
                }
            }
            for (j, &d) in pdofs.iter().enumerate() {
                out[po + d] -= w * gn * ep.values[j];
            }
        }
    }
    out
}

/// Face-patch penalty on differences of the two cells' polynomial extensions.
pub fn assemble_ghost_penalty(
    space: &TaylorHoodSpace,
    mesh: &BackgroundMesh,
    faces: &[FaceId],
    params: GhostPenaltyParams,
    nu: f64,
) -> Result<CsrMatrix> {
    let n = space.total_dofs();
    let mut t = Triplets::new(n, n);
    if params.is_disabled() {
        return Ok(t.into_csr());
    }
    let (gamma_v, gamma_p) = params.scaled(nu, mesh.h());
    let nv = space.nv();
    let po = space.offset(crate::space::Block::Pressure);
    let degree = 2 * space.degree();
    let mut e1 = BasisEval::default();
    let mut e2 = BasisEval::default();
    for &fid in faces {
        if fid.0 >= mesh.interior_faces().len() {
            return Err(Error::InvalidParameter(format!("face {} is not an interior face", fid.0)));
        }
        let face = mesh.face(fid);
        let (k1, k2) = (face.first, face.second);
        for (scalar, gamma, offsets) in [
            (&space.velocity, gamma_v, vec![0, nv]),
            (&space.pressure, gamma_p, vec![po]),
        ] {
            if gamma == 0.0 {
                continue;
            }
            // dofs shared by both cells get one combined jump entry, which
            // keeps the assembled matrix exactly symmetric
            let d1 = scalar.cell_dofs(k1);
            let d2 = scalar.cell_dofs(k2);
            let mut dofs = d1.clone();
            let pos2: Vec<usize> = d2
                .iter()
                .map(|d| match d1.iter().position(|x| x == d) {
                    Some(i) => i,
                    None => {
                        dofs.push(*d);
                        dofs.len() - 1
                    }
                })
                .collect();
            let m = dofs.len();
            let mut local = vec![0.0; m * m];
            let mut jump = vec![0.0; m];
            for patch_cell in [k1, k2] {
                let rule = VolumeRule::tensor(mesh.cell_bounds(patch_cell), degree);
                for (p, &w) in rule.points.iter().zip(&rule.weights) {
                    scalar.eval_into(k1, *p, &mut e1);
                    scalar.eval_into(k2, *p, &mut e2);
                    jump.fill(0.0);
                    jump[..d1.len()].copy_from_slice(&e1.values);
                    for (&i, v) in pos2.iter().zip(&e2.values) {
                        jump[i] -= v;
                    }
                    for a in 0..m {
                        let wa = gamma * w * jump[a];
                        for b in a..m {
                            local[a * m + b] += wa * jump[b];
                        }
                    }
                }
            }
            for a in 0..m {
                for b in 0..a {
                    local[a * m + b] = local[b * m + a];
                }
            }
            for &off in &offsets {
                for a in 0..m {
                    for b in 0..m {
                        t.add(dofs[a] + off, dofs[b] + off, local[a * m + b]);
                    }
                }
            }
        }
    }
    Ok(t.into_csr())
}

/// `S(u, u)` evaluated directly from the jumps of the two cell polynomials,
/// without forming the matrix.
pub fn ghost_penalty_energy(
    space: &TaylorHoodSpace,
    mesh: &BackgroundMesh,
    faces: &[FaceId],
    params: GhostPenaltyParams,
    nu: f64,
    u: &[f64],
) -> Result<f64> {
    if u.len() != space.total_dofs() {
        return Err(Error::DimensionMismatch(format!("{} coefficients for {} dofs", u.len(), space.total_dofs())));
    }
    if params.is_disabled() {
        return Ok(0.0);
    }
    let (gamma_v, gamma_p) = params.scaled(nu, mesh.h());
    let nv = space.nv();
    let po = space.offset(crate::space::Block::Pressure);
    let degree = 2 * space.degree();
    let mut e = BasisEval::default();
    let mut total = 0.0;
    for &fid in faces {
        if fid.0 >= mesh.interior_faces().len() {
            return Err(Error::InvalidParameter(format!("face {} is not an interior face", fid.0)));
        }
        let face = mesh.face(fid);
        for (scalar, gamma, offsets) in [
            (&space.velocity, gamma_v, vec![0, nv]),
            (&space.pressure, gamma_p, vec![po]),
        ] {
            if gamma == 0.0 {
                continue;
            }
            let d1 = scalar.cell_dofs(face.first);
            let d2 = scalar.cell_dofs(face.second);
            for patch_cell in [face.first, face.second] {
                let rule = VolumeRule::tensor(mesh.cell_bounds(patch_cell), degree);
                for (p, &w) in rule.points.iter().zip(&rule.weights) {
                    for &off in &offsets {
                        scalar.eval_into(face.first, *p, &mut e);
                        let v1: f64 = d1.iter().zip(&e.values).map(|(&d, b)| u[d + off] * b).sum();
                        scalar.eval_into(face.second, *p, &mut e);
                        let v2: f64 = d2.iter().zip(&e.values).map(|(&d, b)| u[d + off] * b).sum();
                        total += gamma * w * (v1 - v2) * (v1 - v2);
                    }
                }
            }
        }
    }
    Ok(total)
}

/// `(f, psi)` over the fluid domain.
pub fn assemble_rhs_volume(space: &TaylorHoodSpace, tables: &[CellTable], f: &dyn Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let nv = space.nv();
    let mut out = vec![0.0; space.total_dofs()];
    for t in tables {
        for q in 0..t.weights.len() {
            let fv = f(t.points[q]);
            if fv == [0.0, 0.0] {
                continue;
            }
            let w = t.weights[q];
            for (i, &d) in t.vdofs.iter().enumerate() {
                let wi = w * t.vel[q].values[i];
                out[d] += wi * fv[0];
                out[d + nv] += wi * fv[1];
            }
        }
    }
    out
}

/// Velocity mass matrix over the given cells with full tensor rules.
pub fn assemble_velocity_mass(
    space: &TaylorHoodSpace,
    cells: impl Iterator<Item = (CellId, VolumeRule)>,
) -> CsrMatrix {
    let n = space.total_dofs();
    let nv = space.nv();
    let mut t = Triplets::new(n, n);
    let mut ev = BasisEval::default();
    for (cell, rule) in cells {
        let dofs = space.velocity.cell_dofs(cell);
        let k = dofs.len();
        let mut m = vec![0.0; k * k];
        for (p, &w) in rule.points.iter().zip(&rule.weights) {
            space.velocity.eval_into(cell, *p, &mut ev);
            for i in 0..k {
                for j in 0..k {
                    m[i * k + j] += w * ev.values[i] * ev.values[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                t.add(dofs[i], dofs[j], m[i * k + j]);
                t.add(dofs[i] + nv, dofs[j] + nv, m[i * k + j]);
            }
        }
    }
    t.into_csr()
}

/// `int_{fluid} q_i` for every pressure basis function.
pub fn pressure_mean_weights(space: &TaylorHoodSpace, tables: &[CellTable]) -> Vec<f64> {
    let mut out = vec![0.0; space.np()];
    for t in tables {
        for q in 0..t.weights.len() {
            for (j, &d) in t.pdofs.iter().enumerate() {
                out[d] += t.weights[q] * t.pre[q].values[j];
            }
        }
    }
    out
}
