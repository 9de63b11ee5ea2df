//! Discontinuous Galerkin time stepping on slabs.
//!
//! On a slab `(t0, t0 + tau]` each unknown is a polynomial of degree `k` in
//! time, written in the Lagrange basis on the `k + 1` Gauss points of the
//! reference interval `[0, 1]`. The slab unknown vector is laid out as
//!
//! ```text
//! [ mode 0 | mode 1 | ... | mode k | gauge multipliers (k + 1) ]
//! ```
//!
//! where every mode is a full Taylor–Hood vector `[v_x | v_y | p]`.
//!
//! The residual tested with temporal basis function `a` is
//!
//! ```text
//! sum_b Dt[a][b] M_f u_b + phi_a(0) M_jump (u(t0+) - v_prev)
//!   + sum_b Mt[a][b] L u_b + tau sum_q w_q phi_a(s_q) (C(u(s_q)) - F(s_q))
//! ```
//!
//! with `L` the linear spatial operator (viscous, pressure, Nitsche, ghost
//! penalty), `C` the convection term and `F` the load. Constrained dofs get
//! identity rows in every mode and one multiplier per mode fixes the pressure
//! mean over the fluid.

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::error::{Error, Result};
use crate::forms::{
    assemble_ghost_penalty, assemble_nitsche, assemble_velocity_mass, assemble_volume_linear, boundary_pieces,
    cell_convection, nitsche_load, pressure_mean_weights, tabulate_fluid, assemble_rhs_volume, BoundaryPiece,
    CellTable, GhostPenaltyParams, NitscheParams, OuterBoundary,
};
use crate::geometry::{build_stabilization_submesh, CutGeometry, RigidDisk, StabilizationSubmesh, VolumeRule};
use crate::manufactured::ExactSolution;
use crate::mesh::BackgroundMesh;
use crate::quadrature::{GaussRule, LagrangeBasis1d};
use crate::space::{compute_dof_activity, Block, DofActivity, TaylorHoodSpace};
use crate::sparse::{norm_inf, CsrMatrix, LinearSolver, Triplets};

/// Temporal basis and quadrature on the reference slab `[0, 1]`.
#[derive(Clone, Debug)]
pub struct SlabBasis {
    k: usize,
    basis: LagrangeBasis1d,
    quad: GaussRule,
    /// `quad_values[q][a] = phi_a(s_q)`
    quad_values: Vec<Vec<f64>>,
    /// `dt[a][b] = int phi_b' phi_a`
    dt: Vec<Vec<f64>>,
    /// `mass[a][b] = int phi_a phi_b` (multiply by `tau`)
    mass: Vec<Vec<f64>>,
    start: Vec<f64>,
    end: Vec<f64>,
}

impl SlabBasis {
    pub fn new(k: usize) -> Result<Self> {
        if k > 4 {
            return Err(Error::InvalidParameter(format!("temporal degree {k} not supported (0..=4)")));
        }
        let basis = LagrangeBasis1d::new(GaussRule::new(k + 1).points);
        let quad = GaussRule::new(k + 2);
        let m = k + 1;
        // the nodal rule is exact for both products, so the mass is diagonal
        let nodal = GaussRule::new(m);
        let mut dt = vec![vec![0.0; m]; m];
        let mut mass = vec![vec![0.0; m]; m];
        for a in 0..m {
            let w = nodal.weights[a];
            mass[a][a] = w;
            for (b, d) in basis.derivatives(nodal.points[a]).into_iter().enumerate() {
                dt[a][b] = w * d;
            }
        }
        let quad_values = quad.points.iter().map(|&s| basis.values(s)).collect();
        Ok(Self {
            k,
            start: basis.values(0.0),
            end: basis.values(1.0),
            basis,
            quad,
            quad_values,
            dt,
            mass,
        })
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn modes(&self) -> usize {
        self.k + 1
    }

    /// Reference nodes of the Lagrange basis.
    pub fn nodes(&self) -> &[f64] {
        self.basis.nodes()
    }

    pub fn quadrature(&self) -> &GaussRule {
        &self.quad
    }

    pub fn values(&self, s: f64) -> Vec<f64> {
        self.basis.values(s)
    }

    pub fn start_values(&self) -> &[f64] {
        &self.start
    }

    pub fn end_values(&self) -> &[f64] {
        &self.end
    }

    pub fn derivative_matrix(&self) -> &[Vec<f64>] {
        &self.dt
    }

    pub fn mass_matrix(&self) -> &[Vec<f64>] {
        &self.mass
    }
}

/// One time slab `(start, start + tau]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slab {
    pub index: usize,
    pub start: f64,
    pub tau: f64,
}

impl Slab {
    pub fn end(&self) -> f64 {
        self.start + self.tau
    }

    pub fn time(&self, s: f64) -> f64 {
        self.start + s * self.tau
    }
}

/// Uniform slabs covering `(0, end_time]`.
pub fn uniform_slabs(end_time: f64, count: usize) -> Result<Vec<Slab>> {
    if count == 0 || !(end_time > 0.0) {
        return Err(Error::InvalidParameter(format!("cannot split (0, {end_time}] into {count} slabs")));
    }
    let tau = end_time / count as f64;
    Ok((0..count)
        .map(|index| Slab {
            index,
            start: index as f64 * tau,
            tau,
        })
        .collect())
}

/// Region on which the inter-slab jump is integrated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum JumpDomain {
    /// Every background cell, with full tensor rules.
    #[default]
    Full,
    /// Only cells with fluid measure or in the stabilization submesh.
    Active,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConfig {
    pub level: u32,
    pub k: usize,
    pub r: usize,
    pub nu: f64,
    /// `None` gives the empty square without a body.
    pub disk: Option<RigidDisk>,
    pub radius_multiplier: f64,
    pub nitsche: NitscheParams,
    pub ghost: GhostPenaltyParams,
    pub outer: OuterBoundary,
    pub jump_domain: JumpDomain,
    pub convection: bool,
    pub q_vol: usize,
    pub q_surf: usize,
}

impl ProblemConfig {
    /// Defaults for the flow around the default disk.
    pub fn new(level: u32, k: usize, r: usize) -> Self {
        Self {
            level,
            k,
            r,
            nu: 1.0,
            disk: Some(RigidDisk::default()),
            radius_multiplier: 2.0,
            nitsche: NitscheParams::for_degree(r),
            ghost: GhostPenaltyParams::default(),
            outer: OuterBoundary::Strong,
            jump_domain: JumpDomain::Full,
            convection: true,
            q_vol: 2 * r + 2,
            q_surf: 2 * r + 2,
        }
    }
}

/// Source, boundary and initial data of a flow problem.
pub trait FlowData {
    fn source(&self, x: [f64; 2], t: f64) -> [f64; 2];
    /// Dirichlet velocity on the interface and (when imposed weakly) the outer boundary.
    fn boundary(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn initial(&self, x: [f64; 2]) -> [f64; 2];
}

impl FlowData for ExactSolution {
    fn source(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        ExactSolution::source(self, x, t)
    }

    // the exact velocity vanishes on the outer boundary, so this is the
    // boundary data on both parts of the boundary
    fn boundary(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        self.velocity(x, t)
    }

    fn initial(&self, x: [f64; 2]) -> [f64; 2] {
        self.initial_velocity(x)
    }
}

/// Zero source, boundary and initial data.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroData;

impl FlowData for ZeroData {
    fn source(&self, _: [f64; 2], _: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn boundary(&self, _: [f64; 2], _: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn initial(&self, _: [f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }
}

/// Everything about the spatial discretization that does not change in time.
pub struct SpatialProblem {
    pub config: ProblemConfig,
    pub mesh: BackgroundMesh,
    pub geometry: CutGeometry,
    pub space: TaylorHoodSpace,
    pub submesh: StabilizationSubmesh,
    pub activity: DofActivity,
    pub basis: SlabBasis,
    tables: Vec<CellTable>,
    pieces: Vec<BoundaryPiece>,
    constrained: Vec<bool>,
    /// Linear spatial operator, constrained rows removed.
    linear: CsrMatrix,
    mass_fluid: CsrMatrix,
    mass_jump: CsrMatrix,
    /// Pressure-mean functional over the full vector, scaled to unit maximum.
    gauge: Vec<f64>,
}

impl SpatialProblem {
    pub fn new(config: ProblemConfig) -> Result<Self> {
        if !(config.nu > 0.0) {
            return Err(Error::InvalidParameter(format!("viscosity {} must be positive", config.nu)));
        }
        let mesh = BackgroundMesh::new(config.level)?;
        let geometry = CutGeometry::new(&mesh, config.disk, config.q_vol, config.q_surf)?;
        let space = TaylorHoodSpace::new(&mesh, config.r)?;
        let basis = SlabBasis::new(config.k)?;
        let submesh = match config.disk {
            Some(disk) if !config.ghost.is_disabled() => {
                build_stabilization_submesh(&mesh, &disk, config.radius_multiplier)?
            }
            _ => {
                if !(config.radius_multiplier >= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "stabilization radius multiplier {} must be >= 1",
                        config.radius_multiplier
                    )));
                }
                StabilizationSubmesh::empty(&mesh)
            }
        };
        let activity = compute_dof_activity(&space, &geometry, &submesh);

        let n = space.total_dofs();
        let nv = space.nv();
        let mut constrained: Vec<bool> = activity.active.iter().map(|a| !a).collect();
        if config.outer == OuterBoundary::Strong {
            for d in 0..nv {
                if space.velocity.on_outer_boundary(d) {
                    constrained[d] = true;
                    constrained[d + nv] = true;
                }
            }
        }

        let tables = tabulate_fluid(&space, &geometry);
        let pieces = boundary_pieces(&mesh, &geometry, config.outer);
        let vol = assemble_volume_linear(&space, &tables, config.nu);
        let nitsche = assemble_nitsche(&space, &pieces, config.nu, config.nitsche, mesh.h());
        let ghost = assemble_ghost_penalty(&space, &mesh, &submesh.faces, config.ghost, config.nu)?;
        let linear = vol
            .viscous
            .lin_comb(1.0, &vol.pressure_grad, 1.0)
            .lin_comb(1.0, &vol.divergence, 1.0)
            .lin_comb(1.0, &nitsche, 1.0)
            .lin_comb(1.0, &ghost, 1.0)
            .without_rows(&constrained);
        let mass_fluid = vol.mass_fluid.without_rows(&constrained);

        let degree = 2 * config.r;
        let jump_cells: Vec<_> = match config.jump_domain {
            JumpDomain::Full => mesh.cells().collect(),
            JumpDomain::Active => mesh
                .cells()
                .filter(|&c| geometry.volume_rule(c).is_some_and(|r| !r.is_empty()) || submesh.contains(c))
                .collect(),
        };
        let mass_jump = assemble_velocity_mass(
            &space,
            jump_cells
                .into_iter()
                .map(|c| (c, VolumeRule::tensor(mesh.cell_bounds(c), degree))),
        )
        .without_rows(&constrained);

        let mean = pressure_mean_weights(&space, &tables);
        let scale = norm_inf(&mean);
        if !(scale > 0.0) {
            return Err(Error::InvalidParameter("fluid domain has no measure".into()));
        }
        let po = space.offset(Block::Pressure);
        let mut gauge = vec![0.0; n];
        for (i, m) in mean.iter().enumerate() {
            if !constrained[po + i] {
                gauge[po + i] = m / scale;
            }
        }

        Ok(Self {
            config,
            mesh,
            geometry,
            space,
            submesh,
            activity,
            basis,
            tables,
            pieces,
            constrained,
            linear,
            mass_fluid,
            mass_jump,
            gauge,
        })
    }

    /// Spatial dofs per temporal mode.
    pub fn spatial_dofs(&self) -> usize {
        self.space.total_dofs()
    }

    /// Unknowns of one slab, multipliers included.
    pub fn slab_dofs(&self) -> usize {
        self.basis.modes() * (self.spatial_dofs() + 1)
    }

    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    pub fn tables(&self) -> &[CellTable] {
        &self.tables
    }

    pub fn boundary_pieces(&self) -> &[BoundaryPiece] {
        &self.pieces
    }

    /// The linear spatial operator with constrained rows removed.
    pub fn linear_operator(&self) -> &CsrMatrix {
        &self.linear
    }

    /// Interpolated initial velocity with zero pressure; zero on constrained dofs.
    pub fn initial_trace(&self, data: &dyn FlowData) -> Vec<f64> {
        let mut u = self.space.interpolate(|x| data.initial(x), |_| 0.0);
        self.zero_constrained(&mut u);
        u
    }

    fn zero_constrained(&self, u: &mut [f64]) {
        for (v, &c) in u.iter_mut().zip(&self.constrained) {
            if c {
                *v = 0.0;
            }
        }
    }

    /// Spatial load `(f, psi) + B(g, phi)` at time `t`, constrained rows zeroed.
    pub fn load(&self, data: &dyn FlowData, t: f64) -> Vec<f64> {
        let cfg = &self.config;
        let mut f = assemble_rhs_volume(&self.space, &self.tables, &|x| data.source(x, t));
        let g = nitsche_load(&self.space, &self.pieces, cfg.nu, cfg.nitsche, self.mesh.h(), &|x| {
            data.boundary(x, t)
        });
        for (a, b) in f.iter_mut().zip(&g) {
            *a += b;
        }
        self.zero_constrained(&mut f);
        f
    }

    /// Spatial vector of temporal mode `a` inside a slab vector.
    pub fn mode<'a>(&self, u: &'a [f64], a: usize) -> &'a [f64] {
        let n = self.spatial_dofs();
        &u[a * n..(a + 1) * n]
    }

    /// Spatial state at reference time `s` of a slab vector.
    pub fn state_at(&self, u: &[f64], s: f64) -> Vec<f64> {
        self.combine(u, &self.basis.values(s))
    }

    fn combine(&self, u: &[f64], coef: &[f64]) -> Vec<f64> {
        let n = self.spatial_dofs();
        let mut out = vec![0.0; n];
        for (a, &c) in coef.iter().enumerate() {
            if c != 0.0 {
                for (o, v) in out.iter_mut().zip(self.mode(u, a)) {
                    *o += c * v;
                }
            }
        }
        out
    }

    /// Slab vector whose modes are the interpolants of `v` and `p` at the
    /// temporal nodes; multipliers are zero.
    pub fn interpolate_slab(
        &self,
        slab: &Slab,
        v: &dyn Fn([f64; 2], f64) -> [f64; 2],
        p: &dyn Fn([f64; 2], f64) -> f64,
    ) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.slab_dofs());
        for &s in self.basis.nodes() {
            let t = slab.time(s);
            u.extend(self.space.interpolate(|x| v(x, t), |x| p(x, t)));
        }
        u.resize(self.slab_dofs(), 0.0);
        u
    }

    /// Jump term `phi_a(0) M_jump (u(t0+) - prev)` for every mode.
    pub fn jump_contribution(&self, u: &[f64], prev: &[f64]) -> Vec<f64> {
        let n = self.spatial_dofs();
        let mut diff = self.combine(u, self.basis.start_values());
        for (d, p) in diff.iter_mut().zip(prev) {
            *d -= p;
        }
        let md = self.mass_jump.mul_vec(&diff);
        let mut out = vec![0.0; self.basis.modes() * n];
        for (a, &phi) in self.basis.start_values().iter().enumerate() {
            for (o, m) in out[a * n..(a + 1) * n].iter_mut().zip(&md) {
                *o = phi * m;
            }
        }
        out
    }
}

/// Slab matrix parts that depend only on the slab length.
pub struct SlabOperator {
    tau: f64,
    linear: CsrMatrix,
}

impl SlabOperator {
    pub fn new(problem: &SpatialProblem, tau: f64) -> Self {
        let n = problem.spatial_dofs();
        let m = problem.basis.modes();
        let size = problem.slab_dofs();
        let b = &problem.basis;
        let mut t = Triplets::with_capacity(size, size, m * m * (problem.linear.nnz() + problem.mass_jump.nnz()));
        for a in 0..m {
            for c in 0..m {
                let (ro, co) = (a * n, c * n);
                t.add_matrix(&problem.mass_fluid, ro, co, b.dt[a][c]);
                t.add_matrix(&problem.mass_jump, ro, co, b.start[a] * b.start[c]);
                t.add_matrix(&problem.linear, ro, co, tau * b.mass[a][c]);
            }
            for (i, &c) in problem.constrained.iter().enumerate() {
                if c {
                    t.add(a * n + i, a * n + i, 1.0);
                }
            }
            let lam = m * n + a;
            for (i, &g) in problem.gauge.iter().enumerate() {
                if g != 0.0 {
                    t.add(a * n + i, lam, g);
                    t.add(lam, a * n + i, g);
                }
            }
        }
        Self {
            tau,
            linear: t.into_csr(),
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// The part of the slab Jacobian that does not depend on the state.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.linear
    }
}

/// Newton stopping rule and step control.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iterations: usize,
    /// Step length in `(0, 1]`.
    pub damping: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_iterations: 20,
            damping: 1.0,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!("invalid Newton settings {self:?}")));
        }
        Ok(())
    }
}

/// Right-hand side of one slab: jump data and loads, per mode.
pub fn slab_rhs(problem: &SpatialProblem, tau: f64, slab: &Slab, prev: &[f64], data: &dyn FlowData) -> Vec<f64> {
    let n = problem.spatial_dofs();
    let b = &problem.basis;
    let mut rhs = vec![0.0; problem.slab_dofs()];
    let mp = problem.mass_jump.mul_vec(prev);
    for (a, &phi) in b.start.iter().enumerate() {
        for (o, v) in rhs[a * n..(a + 1) * n].iter_mut().zip(&mp) {
            *o += phi * v;
        }
    }
    for (q, (&s, &w)) in b.quad.points.iter().zip(&b.quad.weights).enumerate() {
        let f = problem.load(data, slab.time(s));
        for a in 0..b.modes() {
            let c = tau * w * b.quad_values[q][a];
            for (o, v) in rhs[a * n..(a + 1) * n].iter_mut().zip(&f) {
                *o += c * v;
            }
        }
    }
    rhs
}

/// Slab convection residual and, optionally, its Jacobian.
pub fn slab_convection(
    problem: &SpatialProblem,
    tau: f64,
    u: &[f64],
    with_jacobian: bool,
) -> (Vec<f64>, Option<CsrMatrix>) {
    let n = problem.spatial_dofs();
    let nv = problem.space.nv();
    let size = problem.slab_dofs();
    let b = &problem.basis;
    let m = b.modes();
    let nq = b.quad.len();
    let mut res = vec![0.0; size];
    if !problem.config.convection {
        return (res, with_jacobian.then(|| CsrMatrix::zeros(size, size)));
    }
    let states: Vec<Vec<f64>> = b.quad_values.iter().map(|phi| problem.combine(u, phi)).collect();
    let mut trip = with_jacobian.then(|| Triplets::new(size, size));
    let constrained = &problem.constrained;
    for t in &problem.tables {
        let kv = t.vdofs.len();
        let mut blocks = vec![[[vec![0.0; kv * kv], vec![0.0; kv * kv]], [vec![0.0; kv * kv], vec![0.0; kv * kv]]]; m * m];
        let mut any = false;
        for q in 0..nq {
            let ux: Vec<f64> = t.vdofs.iter().map(|&d| states[q][d]).collect();
            let uy: Vec<f64> = t.vdofs.iter().map(|&d| states[q][d + nv]).collect();
            if ux.iter().chain(&uy).all(|&x| x == 0.0) {
                continue;
            }
            any = true;
            let local = cell_convection(t, &ux, &uy, with_jacobian);
            let phi = &b.quad_values[q];
            let w = tau * b.quad.weights[q];
            for a in 0..m {
                let ca = w * phi[a];
                for i in 0..kv {
                    res[a * n + t.vdofs[i]] += ca * local.res[i][0];
                    res[a * n + t.vdofs[i] + nv] += ca * local.res[i][1];
                }
            }
            if let Some(jl) = local.jac.as_ref() {
                for a in 0..m {
                    for c in 0..m {
                        let coef = w * phi[a] * phi[c];
                        let blk = &mut blocks[a * m + c];
                        for r in 0..2 {
                            for d in 0..2 {
                                for (o, v) in blk[r][d].iter_mut().zip(&jl[r][d]) {
                                    *o += coef * v;
                                }
                            }
                        }
                    }
                }
            }
        }
        if let (Some(trip), true) = (trip.as_mut(), any) {
            for a in 0..m {
                for c in 0..m {
                    let blk = &blocks[a * m + c];
                    for r in 0..2 {
                        for i in 0..kv {
                            let row = t.vdofs[i] + r * nv;
                            if constrained[row] {
                                continue;
                            }
                            for d in 0..2 {
                                for j in 0..kv {
                                    trip.add(a * n + row, c * n + t.vdofs[j] + d * nv, blk[r][d][i * kv + j]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    for a in 0..m {
        for (i, &c) in constrained.iter().enumerate() {
            if c {
                res[a * n + i] = 0.0;
            }
        }
    }
    (res, trip.map(Triplets::into_csr))
}

/// Full slab residual for the state `u` given the right-hand side from [`slab_rhs`].
pub fn slab_residual(problem: &SpatialProblem, op: &SlabOperator, u: &[f64], rhs: &[f64]) -> Vec<f64> {
    let mut r = op.linear.mul_vec(u);
    let (conv, _) = slab_convection(problem, op.tau, u, false);
    for ((ri, c), b) in r.iter_mut().zip(&conv).zip(rhs) {
        *ri += c - b;
    }
    r
}

/// Slab Jacobian at the state `u`.
pub fn slab_jacobian(problem: &SpatialProblem, op: &SlabOperator, u: &[f64]) -> CsrMatrix {
    if !problem.config.convection {
        return op.linear.clone();
    }
    let (_, jac) = slab_convection(problem, op.tau, u, true);
    op.linear.lin_comb(1.0, &jac.expect("requested Jacobian"), 1.0)
}

/// Per-slab solver record.
#[derive(Clone, Debug, PartialEq)]
pub struct SlabLog {
    pub slab: usize,
    pub newton_iterations: usize,
    pub residual: f64,
    /// Largest relative residual of the linear solves.
    pub linear_residual: f64,
    pub solve_time: f64,
}

impl SlabLog {
    pub fn line(&self) -> String {
        format!(
            "slab {}, newton_iters {}, residual {:.3e}, solve_time {:.3}s",
            self.slab, self.newton_iterations, self.residual, self.solve_time,
        )
    }
}

/// Newton iteration for one slab starting from the previous trace held
/// constant in time. Returns the slab vector and its log.
pub fn newton_solve_slab(
    problem: &SpatialProblem,
    op: &SlabOperator,
    slab: &Slab,
    prev: &[f64],
    data: &dyn FlowData,
    settings: &NewtonSettings,
    solver: &mut LinearSolver,
) -> Result<(Vec<f64>, SlabLog)> {
    settings.validate()?;
    let n = problem.spatial_dofs();
    if prev.len() != n {
        return Err(Error::DimensionMismatch(format!("previous trace has {} entries, expected {n}", prev.len())));
    }
    let clock = Instant::now();
    let m = problem.basis.modes();
    let mut u = vec![0.0; problem.slab_dofs()];
    for a in 0..m {
        u[a * n..(a + 1) * n].copy_from_slice(prev);
        for (i, &c) in problem.constrained.iter().enumerate() {
            if c {
                u[a * n + i] = 0.0;
            }
        }
    }
    let rhs = slab_rhs(problem, op.tau, slab, prev, data);
    let mut r = slab_residual(problem, op, &u, &rhs);
    let mut norm = norm_inf(&r);
    let target = settings.abs_tol.max(settings.rel_tol * norm);
    let mut iterations = 0;
    let mut linear_residual: f64 = 0.0;
    while norm > target {
        if iterations == settings.max_iterations || !norm.is_finite() {
            return Err(Error::NewtonDiverged {
                iterations,
                residual: norm,
            });
        }
        let jac = slab_jacobian(problem, op, &u);
        let step = solver.solve(&jac, &r)?;
        linear_residual = linear_residual.max(step.relative_residual);
        for (x, dx) in u.iter_mut().zip(&step.x) {
            *x -= settings.damping * dx;
        }
        iterations += 1;
        r = slab_residual(problem, op, &u, &rhs);
        norm = norm_inf(&r);
    }
    let log = SlabLog {
        slab: slab.index,
        newton_iterations: iterations,
        residual: norm,
        linear_residual,
        solve_time: clock.elapsed().as_secs_f64(),
    };
    Ok((u, log))
}

/// Slab vectors of a whole run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub slabs: Vec<Slab>,
    pub states: Vec<Vec<f64>>,
    pub logs: Vec<SlabLog>,
}

/// Solves the slabs one after another, handing the end trace of each to the next.
pub fn advance(
    problem: &SpatialProblem,
    data: &dyn FlowData,
    end_time: f64,
    num_slabs: usize,
    settings: &NewtonSettings,
) -> Result<Trajectory> {
    advance_with(problem, data, end_time, num_slabs, settings, |_| {})
}

/// [`advance`] with a callback after each slab.
pub fn advance_with(
    problem: &SpatialProblem,
    data: &dyn FlowData,
    end_time: f64,
    num_slabs: usize,
    settings: &NewtonSettings,
    mut on_slab: impl FnMut(&SlabLog),
) -> Result<Trajectory> {
    let slabs = uniform_slabs(end_time, num_slabs)?;
    let op = SlabOperator::new(problem, slabs[0].tau);
    let mut solver = LinearSolver::new();
    let mut prev = problem.initial_trace(data);
    let mut states = Vec::with_capacity(num_slabs);
    let mut logs = Vec::with_capacity(num_slabs);
    for slab in &slabs {
        let (u, log) = newton_solve_slab(problem, &op, slab, &prev, data, settings, &mut solver).map_err(|e| {
            Error::Slab {
                slab: slab.index,
                source: Box::new(e),
            }
        })?;
        on_slab(&log);
        prev = problem.state_at(&u, 1.0);
        states.push(u);
        logs.push(log);
    }
    Ok(Trajectory { slabs, states, logs })
}

/// dG solution of the scalar problem `u' = lambda u + f(t)`, `u(0) = u0`.
#[derive(Clone, Debug)]
pub struct ScalarTrajectory {
    pub slabs: Vec<Slab>,
    /// Nodal values per slab.
    pub modes: Vec<Vec<f64>>,
}

impl ScalarTrajectory {
    pub fn value(&self, basis: &SlabBasis, slab: usize, s: f64) -> f64 {
        basis.values(s).iter().zip(&self.modes[slab]).map(|(p, u)| p * u).sum()
    }

    pub fn end_value(&self, basis: &SlabBasis) -> f64 {
        self.value(basis, self.slabs.len() - 1, 1.0)
    }
}

/// The temporal scheme alone, applied to a scalar linear ODE.
pub fn solve_scalar_ode(
    basis: &SlabBasis,
    lambda: f64,
    forcing: &dyn Fn(f64) -> f64,
    u0: f64,
    end_time: f64,
    num_slabs: usize,
) -> Result<ScalarTrajectory> {
    let slabs = uniform_slabs(end_time, num_slabs)?;
    let m = basis.modes();
    let mut prev = u0;
    let mut modes = Vec::with_capacity(num_slabs);
    for slab in &slabs {
        let a = Mat::from_fn(m, m, |i, j| {
            basis.dt[i][j] + basis.start[i] * basis.start[j] - lambda * slab.tau * basis.mass[i][j]
        });
        let mut rhs = Mat::from_fn(m, 1, |i, _| basis.start[i] * prev);
        for (q, (&s, &w)) in basis.quad.points.iter().zip(&basis.quad.weights).enumerate() {
            let f = forcing(slab.time(s));
            for i in 0..m {
                rhs[(i, 0)] += slab.tau * w * basis.quad_values[q][i] * f;
            }
        }
        let x = a.partial_piv_lu().solve(&rhs);
        let u: Vec<f64> = (0..m).map(|i| x[(i, 0)]).collect();
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Slab {
                slab: slab.index,
                source: Box::new(Error::Singular("scalar slab system".into())),
            });
        }
        prev = basis.end.iter().zip(&u).map(|(p, v)| p * v).sum();
        modes.push(u);
    }
    Ok(ScalarTrajectory { slabs, modes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slab_basis_matrices() {
        for k in 0..=3 {
            let b = SlabBasis::new(k).unwrap();
            let m = k + 1;
            // int phi_b' phi_a + int phi_a' phi_b = phi_a(1) phi_b(1) - phi_a(0) phi_b(0)
            for a in 0..m {
                for c in 0..m {
                    let lhs = b.dt[a][c] + b.dt[c][a];
                    let rhs = b.end[a] * b.end[c] - b.start[a] * b.start[c];
                    assert!((lhs - rhs).abs() < 1e-12, "k={k}");
                }
            }
            let total: f64 = b.mass.iter().flatten().sum();
            assert!((total - 1.0).abs() < 1e-13);
            assert!((b.start.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        }
        assert!(SlabBasis::new(5).is_err());
    }

    #[test]
    fn uniform_slab_partition() {
        let s = uniform_slabs(1.0, 4).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[3].end(), 1.0);
        assert_eq!(s[2].time(0.5), 0.625);
        assert!(uniform_slabs(1.0, 0).is_err());
    }

    #[test]
    fn scalar_ode_reproduces_polynomials_of_slab_degree() {
        // u = 1 + t - 2 t^2 + t^3 solves u' = -u + f with f = u' + u
        let u = |t: f64| 1.0 + t - 2.0 * t * t + t * t * t;
        let du = |t: f64| 1.0 - 4.0 * t + 3.0 * t * t;
        for k in [0usize, 1, 2, 3] {
            let basis = SlabBasis::new(k).unwrap();
            let cut = |t: f64| match k {
                0 => 1.0,
                1 => 1.0 + t,
                2 => 1.0 + t - 2.0 * t * t,
                _ => u(t),
            };
            let dcut = |t: f64| match k {
                0 => 0.0,
                1 => 1.0,
                2 => 1.0 - 4.0 * t,
                _ => du(t),
            };
            let traj = solve_scalar_ode(&basis, -1.0, &|t| dcut(t) + cut(t), 1.0, 1.0, 3).unwrap();
            for (n, slab) in traj.slabs.iter().enumerate() {
                for s in [0.0, 0.3, 1.0] {
                    assert!((traj.value(&basis, n, s) - cut(slab.time(s))).abs() < 1e-12, "k={k}");
                }
            }
        }
    }

    #[test]
    fn scalar_ode_zero_data_stays_zero() {
        let basis = SlabBasis::new(2).unwrap();
        let traj = solve_scalar_ode(&basis, -1.0, &|_| 0.0, 0.0, 1.0, 5).unwrap();
        assert!(traj.modes.iter().flatten().all(|&v| v == 0.0));
    }

    fn small_problem(convection: bool) -> SpatialProblem {
        let mut cfg = ProblemConfig::new(0, 1, 2);
        cfg.convection = convection;
        SpatialProblem::new(cfg).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let p = small_problem(true);
        let traj = advance(&p, &ZeroData, 1.0, 2, &NewtonSettings::default()).unwrap();
        assert!(traj.states.iter().flatten().all(|&v| v == 0.0));
        assert!(traj.logs.iter().all(|l| l.newton_iterations == 0));
    }

    #[test]
    fn linear_problem_needs_one_newton_step() {
        let p = small_problem(false);
        let ex = ExactSolution::new(1.0).unwrap();
        let traj = advance(&p, &ex, 1.0, 2, &NewtonSettings::default()).unwrap();
        assert!(traj.logs.iter().all(|l| l.newton_iterations == 1), "{:?}", traj.logs);
    }

    #[test]
    fn looser_tolerance_never_needs_more_iterations() {
        let p = small_problem(true);
        let ex = ExactSolution::new(1.0).unwrap();
        let tight = advance(&p, &ex, 1.0, 2, &NewtonSettings::default()).unwrap();
        let loose_settings = NewtonSettings {
            abs_tol: 1e-2,
            rel_tol: 1e-2,
            ..NewtonSettings::default()
        };
        let loose = advance(&p, &ex, 1.0, 2, &loose_settings).unwrap();
        assert!(loose.logs[0].newton_iterations <= tight.logs[0].newton_iterations);
    }

    #[test]
    fn jump_vanishes_for_continuous_trajectories() {
        let p = small_problem(true);
        let ex = ExactSolution::new(1.0).unwrap();
        let slabs = uniform_slabs(1.0, 3).unwrap();
        // linear in time, so the slab interpolants are continuous across slab ends
        let v = |x: [f64; 2], t: f64| {
            let e = ex.velocity(x, 1.0);
            [(1.0 + 2.0 * t) * e[0], (1.0 + 2.0 * t) * e[1]]
        };
        let pr = |x: [f64; 2], t: f64| t * ex.pressure(x, 1.0);
        let mut prev = p.state_at(&p.interpolate_slab(&slabs[0], &v, &pr), 0.0);
        for slab in &slabs {
            let u = p.interpolate_slab(slab, &v, &pr);
            let jump = p.jump_contribution(&u, &prev);
            assert!(norm_inf(&jump) <= 1e-13);
            prev = p.state_at(&u, 1.0);
        }
    }

    #[test]
    fn constrained_rows_are_identity() {
        let p = small_problem(true);
        let op = SlabOperator::new(&p, 0.5);
        let n = p.spatial_dofs();
        let u: Vec<f64> = (0..p.slab_dofs()).map(|i| (i as f64 * 0.37).sin()).collect();
        let jac = slab_jacobian(&p, &op, &u);
        let rhs = vec![0.0; p.slab_dofs()];
        let r = slab_residual(&p, &op, &u, &rhs);
        let mut seen = 0;
        for a in 0..2 {
            for (i, &c) in p.constrained().iter().enumerate() {
                if c {
                    let row = a * n + i;
                    assert_eq!(jac.row(row).collect::<Vec<_>>(), vec![(row, 1.0)]);
                    assert_eq!(r[row], u[row]);
                    seen += 1;
                }
            }
        }
        assert!(seen > 0);
    }
}
