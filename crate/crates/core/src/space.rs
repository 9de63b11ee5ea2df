//! Continuous tensor-product Lagrange spaces and the Taylor–Hood pair.
//!
//! A scalar space of degree `r` on a mesh with `N` cells per axis has
//! `(rN + 1)^2` nodes laid out on a global lattice; node `(I, J)` has index
//! `J (rN + 1) + I`. Within a cell the nodes are Gauss–Lobatto points, and
//! local dof `(a, b)` has index `b (r + 1) + a`.
//!
//! The Taylor–Hood vector is ordered `[v_x | v_y | p]`.

use crate::error::{Error, Result};
use crate::geometry::{CellClass, CutGeometry, StabilizationSubmesh};
use crate::mesh::{BackgroundMesh, CellId};
use crate::quadrature::{lobatto_nodes, LagrangeBasis1d};

#[derive(Clone, Debug)]
pub struct ScalarSpace {
    degree: usize,
    n: usize,
    cell_size: f64,
    basis: LagrangeBasis1d,
}

/// Basis values and physical gradients of all local dofs at one point.
#[derive(Clone, Debug, Default)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

impl ScalarSpace {
    pub fn new(mesh: &BackgroundMesh, degree: usize) -> Result<Self> {
        if !(1..=7).contains(&degree) {
            return Err(Error::InvalidParameter(format!("scalar space degree {degree} outside 1..=7")));
        }
        Ok(Self {
            degree,
            n: mesh.cells_per_axis(),
            cell_size: mesh.cell_size(),
            basis: LagrangeBasis1d::new(lobatto_nodes(degree)),
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Nodes per axis.
    pub fn nodes_per_axis(&self) -> usize {
        self.degree * self.n + 1
    }

    pub fn dof_count(&self) -> usize {
        self.nodes_per_axis().pow(2)
    }

    pub fn dofs_per_cell(&self) -> usize {
        (self.degree + 1).pow(2)
    }

    fn check_cell(&self, cell: CellId) -> Result<(usize, usize)> {
        if cell.0 >= self.n * self.n {
            return Err(Error::InvalidCell(cell.0));
        }
        Ok((cell.0 % self.n, cell.0 / self.n))
    }

    /// Global dof indices of a cell in local order.
    pub fn cell_dofs(&self, cell: CellId) -> Vec<usize> {
        let (i, j) = (cell.0 % self.n, cell.0 / self.n);
        let r = self.degree;
        let m = self.nodes_per_axis();
        let mut out = Vec::with_capacity(self.dofs_per_cell());
        for b in 0..=r {
            for a in 0..=r {
                out.push((j * r + b) * m + i * r + a);
            }
        }
        out
    }

    /// Coordinates of a global node.
    pub fn node_coords(&self, dof: usize) -> [f64; 2] {
        let m = self.nodes_per_axis();
        let (gi, gj) = (dof % m, dof / m);
        [self.lattice_coord(gi), self.lattice_coord(gj)]
    }

    fn lattice_coord(&self, g: usize) -> f64 {
        let r = self.degree;
        let (cell, local) = if g == r * self.n {
            (self.n - 1, r)
        } else {
            (g / r, g % r)
        };
        (cell as f64 + self.basis.nodes()[local]) * self.cell_size
    }

    /// Cells whose closure contains the node (the support of its basis function).
    pub fn node_cells(&self, dof: usize) -> Vec<CellId> {
        let m = self.nodes_per_axis();
        let r = self.degree;
        let range = |g: usize| -> Vec<usize> {
            if g % r == 0 {
                let c = g / r;
                let mut v = Vec::with_capacity(2);
                if c > 0 {
                    v.push(c - 1);
                }
                if c < self.n {
                    v.push(c);
                }
                v
            } else {
                vec![g / r]
            }
        };
        let mut out = Vec::with_capacity(4);
        for j in range(dof / m) {
            for i in range(dof % m) {
                out.push(CellId(j * self.n + i));
            }
        }
        out
    }

    /// Whether the node lies on the boundary of the unit square.
    pub fn on_outer_boundary(&self, dof: usize) -> bool {
        let m = self.nodes_per_axis();
        let (gi, gj) = (dof % m, dof / m);
        gi == 0 || gj == 0 || gi == m - 1 || gj == m - 1
    }

    /// Evaluates the cell's local basis at `p`, which may lie outside the cell.
    pub fn eval_into(&self, cell: CellId, p: [f64; 2], out: &mut BasisEval) {
        let (i, j) = (cell.0 % self.n, cell.0 / self.n);
        let s = self.cell_size;
        let xi = p[0] / s - i as f64;
        let eta = p[1] / s - j as f64;
        let k = self.degree + 1;
        let mut vx = [0.0; 8];
        let mut dx = [0.0; 8];
        let mut vy = [0.0; 8];
        let mut dy = [0.0; 8];
        self.basis.eval(xi, &mut vx[..k], &mut dx[..k]);
        self.basis.eval(eta, &mut vy[..k], &mut dy[..k]);
        out.values.clear();
        out.grads.clear();
        for b in 0..k {
            for a in 0..k {
                out.values.push(vx[a] * vy[b]);
                out.grads.push([dx[a] * vy[b] / s, vx[a] * dy[b] / s]);
            }
        }
    }

    pub fn eval_basis(&self, cell: CellId, points: &[[f64; 2]]) -> Result<Vec<BasisEval>> {
        self.check_cell(cell)?;
        Ok(points
            .iter()
            .map(|&p| {
                let mut e = BasisEval::default();
                self.eval_into(cell, p, &mut e);
                e
            })
            .collect())
    }

    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.dof_count()).map(|d| f(self.node_coords(d))).collect()
    }

    /// Value of a coefficient vector at `p`, using the polynomial of `cell`.
    pub fn evaluate(&self, coeffs: &[f64], cell: CellId, p: [f64; 2]) -> (f64, [f64; 2]) {
        let mut e = BasisEval::default();
        self.eval_into(cell, p, &mut e);
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for (k, d) in self.cell_dofs(cell).into_iter().enumerate() {
            v += coeffs[d] * e.values[k];
            g[0] += coeffs[d] * e.grads[k][0];
            g[1] += coeffs[d] * e.grads[k][1];
        }
        (v, g)
    }
}

#[derive(Clone, Debug)]
pub struct TaylorHoodSpace {
    pub velocity: ScalarSpace,
    pub pressure: ScalarSpace,
}

/// Where a velocity or pressure block starts in the global vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    VelocityX,
    VelocityY,
    Pressure,
}

impl TaylorHoodSpace {
    pub fn new(mesh: &BackgroundMesh, r: usize) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidParameter(format!(
                "Taylor-Hood velocity degree must be >= 2, got {r}"
            )));
        }
        Ok(Self {
            velocity: ScalarSpace::new(mesh, r)?,
            pressure: ScalarSpace::new(mesh, r - 1)?,
        })
    }

    pub fn degree(&self) -> usize {
        self.velocity.degree()
    }

    pub fn nv(&self) -> usize {
        self.velocity.dof_count()
    }

    pub fn np(&self) -> usize {
        self.pressure.dof_count()
    }

    pub fn total_dofs(&self) -> usize {
        2 * self.nv() + self.np()
    }

    pub fn offset(&self, block: Block) -> usize {
        match block {
            Block::VelocityX => 0,
            Block::VelocityY => self.nv(),
            Block::Pressure => 2 * self.nv(),
        }
    }

    /// Nodal interpolant of a velocity/pressure pair.
    pub fn interpolate(&self, v: impl Fn([f64; 2]) -> [f64; 2], p: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_dofs());
        let vel: Vec<[f64; 2]> = (0..self.nv()).map(|d| v(self.velocity.node_coords(d))).collect();
        out.extend(vel.iter().map(|x| x[0]));
        out.extend(vel.iter().map(|x| x[1]));
        out.extend(self.pressure.interpolate(p));
        out
    }

    /// Velocity, velocity gradient (`g[c][d] = d v_c / d x_d`) and pressure at `p`.
    pub fn evaluate(&self, u: &[f64], cell: CellId, p: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2], f64) {
        let nv = self.nv();
        let (vx, gx) = self.velocity.evaluate(&u[..nv], cell, p);
        let (vy, gy) = self.velocity.evaluate(&u[nv..2 * nv], cell, p);
        let (pr, _) = self.pressure.evaluate(&u[2 * nv..], cell, p);
        ([vx, vy], [gx, gy], pr)
    }
}

/// Dofs that take part in the discrete problem.
#[derive(Clone, Debug)]
pub struct DofActivity {
    pub active: Vec<bool>,
}

impl DofActivity {
    pub fn is_active(&self, dof: usize) -> bool {
        self.active[dof]
    }

    pub fn inactive_count(&self) -> usize {
        self.active.iter().filter(|a| !**a).count()
    }
}

/// A dof is active when its support touches a fluid or cut cell, or a cell
/// of the stabilization submesh.
pub fn compute_dof_activity(
    space: &TaylorHoodSpace,
    geometry: &CutGeometry,
    submesh: &StabilizationSubmesh,
) -> DofActivity {
    let active_cell = |c: CellId| geometry.class(c) != CellClass::Solid || submesh.contains(c);
    let scalar = |s: &ScalarSpace| -> Vec<bool> {
        (0..s.dof_count())
            .map(|d| s.node_cells(d).into_iter().any(active_cell))
            .collect()
    };
    let v = scalar(&space.velocity);
    let p = scalar(&space.pressure);
    let mut active = Vec::with_capacity(space.total_dofs());
    active.extend_from_slice(&v);
    active.extend_from_slice(&v);
    active.extend_from_slice(&p);
    DofActivity { active }
}
