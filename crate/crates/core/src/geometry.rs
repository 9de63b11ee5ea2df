//! Cut-cell geometry for a circular rigid body embedded in the background mesh.
//!
//! Volume rules on cut cells are built in polar coordinates about the disk
//! centre. Every ray from the centre meets a (convex) square cell in a single
//! segment, so `K \ D` is the set `{ max(R, rho_in(t)) <= rho <= rho_out(t) }`.
//! The angular range is split at the corner directions and at the
//! circle/edge intersections, which leaves smooth integrands on each piece.
//! All weights are positive and all points lie in the fluid part of the cell.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mesh::{BackgroundMesh, CellId, FaceId};
use crate::quadrature::GaussRule;

/// Tolerance on signed distances to the circle.
pub const TOL_GEO: f64 = 1e-12;
/// Fluid parts of cut cells below this area are dropped.
pub const SLIVER_AREA: f64 = 1e-14;
/// Largest angular extent integrated by a single Gauss rule.
const MAX_ARC_PIECE: f64 = PI / 8.0;
/// Bisection depth limit of the adaptive angular split in cut cells.
const MAX_BISECTIONS: u32 = 16;
/// Relative accuracy target of the angular integration in cut cells.
const ANGULAR_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidDisk {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Default for RigidDisk {
    fn default() -> Self {
        Self {
            center: [0.5, 0.5],
            radius: 0.1,
        }
    }
}

impl RigidDisk {
    pub fn new(center: [f64; 2], radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("disk radius {radius} must be positive")));
        }
        let clearance = center[0].min(center[1]).min(1.0 - center[0]).min(1.0 - center[1]);
        if clearance <= radius {
            return Err(Error::InvalidParameter("disk must lie strictly inside the unit square".into()));
        }
        Ok(Self { center, radius })
    }

    /// Signed distance, negative inside the disk.
    pub fn signed_distance(&self, p: [f64; 2]) -> f64 {
        ((p[0] - self.center[0]).hypot(p[1] - self.center[1])) - self.radius
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }

    pub fn circumference(&self) -> f64 {
        2.0 * PI * self.radius
    }

    fn point_at(&self, angle: f64) -> [f64; 2] {
        [
            self.center[0] + self.radius * angle.cos(),
            self.center[1] + self.radius * angle.sin(),
        ]
    }

    /// Distance from the centre to the nearest point of the closed box.
    fn min_distance(&self, b: &[f64; 4]) -> f64 {
        let [cx, cy] = self.center;
        let dx = (b[0] - cx).max(0.0).max(cx - b[2]);
        let dy = (b[1] - cy).max(0.0).max(cy - b[3]);
        dx.hypot(dy)
    }

    /// Distance from the centre to the farthest corner of the box.
    fn max_distance(&self, b: &[f64; 4]) -> f64 {
        let [cx, cy] = self.center;
        let dx = (cx - b[0]).abs().max((cx - b[2]).abs());
        let dy = (cy - b[1]).abs().max((cy - b[3]).abs());
        dx.hypot(dy)
    }

    /// Angles (in `[0, 2 pi)`) where the circle crosses the boundary of the box.
    fn edge_crossings(&self, b: &[f64; 4]) -> Vec<f64> {
        let [cx, cy] = self.center;
        let r = self.radius;
        let mut angles = Vec::new();
        let mut push = |x: f64, y: f64| {
            let a = (y - cy).atan2(x - cx).rem_euclid(2.0 * PI);
            angles.push(a);
        };
        for &x in &[b[0], b[2]] {
            let d = x - cx;
            if d.abs() <= r {
                let s = (r * r - d * d).max(0.0).sqrt();
                for y in [cy - s, cy + s] {
                    if y >= b[1] - TOL_GEO && y <= b[3] + TOL_GEO {
                        push(x, y);
                    }
                }
            }
        }
        for &y in &[b[1], b[3]] {
            let d = y - cy;
            if d.abs() <= r {
                let s = (r * r - d * d).max(0.0).sqrt();
                for x in [cx - s, cx + s] {
                    if x >= b[0] - TOL_GEO && x <= b[2] + TOL_GEO {
                        push(x, y);
                    }
                }
            }
        }
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
        if angles.len() > 1 && (angles[0] + 2.0 * PI - angles[angles.len() - 1]).abs() < 1e-13 {
            angles.pop();
        }
        angles
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellClass {
    Fluid,
    Solid,
    Cut,
}

#[derive(Clone, Debug, Default)]
pub struct VolumeRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Set when a cut cell's fluid part fell below [`SLIVER_AREA`].
    pub sliver: bool,
}

impl VolumeRule {
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Tensor Gauss rule exact to `degree` in each variable on a box.
    pub fn tensor(bounds: [f64; 4], degree: usize) -> Self {
        let g = GaussRule::with_degree(degree);
        let mut points = Vec::with_capacity(g.len() * g.len());
        let mut weights = Vec::with_capacity(g.len() * g.len());
        for (y, wy) in g.mapped(bounds[1], bounds[3]) {
            for (x, wx) in g.mapped(bounds[0], bounds[2]) {
                points.push([x, y]);
                weights.push(wx * wy);
            }
        }
        Self {
            points,
            weights,
            sliver: false,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SurfaceRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Unit normals pointing out of the fluid, i.e. into the disk.
    pub normals: Vec<[f64; 2]>,
}

impl SurfaceRule {
    pub fn length(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn classify_cell(mesh: &BackgroundMesh, disk: &RigidDisk, cell: CellId) -> CellClass {
    let b = mesh.cell_bounds(cell);
    if disk.min_distance(&b) >= disk.radius - TOL_GEO {
        CellClass::Fluid
    } else if disk.max_distance(&b) <= disk.radius + TOL_GEO {
        CellClass::Solid
    } else {
        CellClass::Cut
    }
}

/// Entry and exit parameters of the ray `c + t d` (t >= 0) through a box.
fn ray_box(c: [f64; 2], d: [f64; 2], b: &[f64; 4]) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for k in 0..2 {
        let (lo, hi) = (b[k], b[k + 2]);
        if d[k].abs() < 1e-300 {
            if c[k] < lo || c[k] > hi {
                return None;
            }
        } else {
            let a = (lo - c[k]) / d[k];
            let z = (hi - c[k]) / d[k];
            t0 = t0.max(a.min(z));
            t1 = t1.min(a.max(z));
        }
    }
    (t1 >= t0).then_some((t0, t1))
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Sorted angular breakpoints covering the box as seen from the centre,
/// relative to the returned reference angle.
fn angular_sweep(disk: &RigidDisk, b: &[f64; 4]) -> (Vec<f64>, f64) {
    let [cx, cy] = disk.center;
    let corners = [[b[0], b[1]], [b[2], b[1]], [b[2], b[3]], [b[0], b[3]]];
    let strictly_inside = cx > b[0] + 1e-14 && cx < b[2] - 1e-14 && cy > b[1] + 1e-14 && cy < b[3] - 1e-14;
    let mut breaks = Vec::new();
    let reference;
    if strictly_inside {
        reference = 0.0;
        for p in corners {
            breaks.push((p[1] - cy).atan2(p[0] - cx).rem_euclid(2.0 * PI));
        }
        breaks.extend(disk.edge_crossings(b));
        breaks.push(0.0);
        breaks.push(2.0 * PI);
    } else {
        let mid = [0.5 * (b[0] + b[2]), 0.5 * (b[1] + b[3])];
        reference = (mid[1] - cy).atan2(mid[0] - cx);
        let rel: Vec<f64> = corners
            .iter()
            .filter(|p| (p[0] - cx).hypot(p[1] - cy) > 1e-14)
            .map(|p| wrap_angle((p[1] - cy).atan2(p[0] - cx) - reference))
            .collect();
        let lo = rel.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = rel.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        breaks.extend(rel);
        for a in disk.edge_crossings(b) {
            let r = wrap_angle(a - reference);
            if r > lo && r < hi {
                breaks.push(r);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    (breaks, reference)
}

/// Fluid part of a cut cell in polar coordinates about the disk centre.
fn polar_cut_rule(disk: &RigidDisk, b: &[f64; 4], degree: usize) -> VolumeRule {
    let angular = GaussRule::new(degree / 2 + 3);
    let radial = GaussRule::with_degree(degree + 1);
    let (breaks, reference) = angular_sweep(disk, b);
    let r = disk.radius;
    let c = disk.center;
    let mut rule = VolumeRule::default();
    let radial_range = |theta: f64| -> Option<(f64, f64, [f64; 2])> {
        let d = [theta.cos(), theta.sin()];
        let (enter, exit) = ray_box(c, d, b)?;
        let lo = enter.max(r);
        (exit > lo).then_some((lo, exit, d))
    };
    // angular pieces are bisected until the rule integrates the radial
    // profile to roundoff; rays that graze an edge need many pieces
    let m = (degree + 2) as i32;
    let scale = b[2] - b[0];
    let profile = |theta: f64| -> [f64; 2] {
        radial_range(theta).map_or([0.0, 0.0], |(lo, hi, _)| {
            // differences of powers in factored form, free of cancellation
            let (a, b) = (hi / scale, lo / scale);
            let sum: f64 = (0..m).map(|j| a.powi(j) * b.powi(m - 1 - j)).sum();
            [0.5 * (hi - lo) * (hi + lo), (a - b) * sum / m as f64]
        })
    };
    let integrate = |a0: f64, a1: f64| -> [f64; 2] {
        angular.mapped(a0, a1).fold([0.0, 0.0], |acc, (t, w)| {
            let v = profile(t);
            [acc[0] + w * v[0], acc[1] + w * v[1]]
        })
    };
    let mut initial: Vec<(f64, f64, u32)> = Vec::new();
    for w in breaks.windows(2) {
        let (a0, a1) = (w[0] + reference, w[1] + reference);
        if a1 - a0 < 1e-15 || radial_range(0.5 * (a0 + a1)).is_none() {
            continue;
        }
        let pieces = ((a1 - a0) / MAX_ARC_PIECE).ceil().max(1.0) as usize;
        let step = (a1 - a0) / pieces as f64;
        initial.extend((0..pieces).map(|k| (a0 + k as f64 * step, a0 + (k + 1) as f64 * step, 0)));
    }
    let span: f64 = initial.iter().map(|p| p.1 - p.0).sum();
    let total = initial.iter().fold([0.0f64; 2], |acc, p| {
        let v = integrate(p.0, p.1);
        [acc[0] + v[0].abs(), acc[1] + v[1].abs()]
    });
    let mut accepted = Vec::new();
    let mut stack = initial;
    while let Some((s0, s1, depth)) = stack.pop() {
        let mid = 0.5 * (s0 + s1);
        let whole = integrate(s0, s1);
        let (left, right) = (integrate(s0, mid), integrate(mid, s1));
        // thin slivers are measured against the full cell
        let share = (s1 - s0) / span * (scale * scale / total[0]).max(1.0);
        let converged = (0..2).all(|i| (whole[i] - left[i] - right[i]).abs() <= ANGULAR_TOL * total[i] * share);
        if converged || depth >= MAX_BISECTIONS {
            accepted.push((s0, mid));
            accepted.push((mid, s1));
        } else {
            stack.push((mid, s1, depth + 1));
            stack.push((s0, mid, depth + 1));
        }
    }
    accepted.sort_by(|x, y| x.0.total_cmp(&y.0));
    for (s0, s1) in accepted {
        for (theta, wt) in angular.mapped(s0, s1) {
            let Some((lo, hi, d)) = radial_range(theta) else {
                continue;
            };
            for (rho, wr) in radial.mapped(lo, hi) {
                rule.points.push([c[0] + rho * d[0], c[1] + rho * d[1]]);
                rule.weights.push(wt * wr * rho);
            }
        }
    }
    rule
}

/// Quadrature over the fluid part of a cell.
///
/// Fluid cells get a tensor Gauss rule exact to `q_vol` per variable; cut
/// cells get the polar rule described in the module docs.
pub fn volume_rule(mesh: &BackgroundMesh, disk: &RigidDisk, cell: CellId, q_vol: usize) -> Result<VolumeRule> {
    mesh.check_cell(cell)?;
    let b = mesh.cell_bounds(cell);
    match classify_cell(mesh, disk, cell) {
        CellClass::Fluid => Ok(VolumeRule::tensor(b, q_vol)),
        CellClass::Solid => Err(Error::NoFluidMeasure(cell.0)),
        CellClass::Cut => {
            let rule = polar_cut_rule(disk, &b, q_vol);
            if rule.measure() < SLIVER_AREA {
                Ok(VolumeRule {
                    sliver: true,
                    ..Default::default()
                })
            } else {
                Ok(rule)
            }
        }
    }
}

/// Quadrature on the arcs of the circle inside a cut cell.
pub fn surface_rule(mesh: &BackgroundMesh, disk: &RigidDisk, cell: CellId, q_surf: usize) -> Result<SurfaceRule> {
    mesh.check_cell(cell)?;
    if classify_cell(mesh, disk, cell) != CellClass::Cut {
        return Err(Error::NotCut(cell.0));
    }
    let b = mesh.cell_bounds(cell);
    let inside = |p: [f64; 2]| {
        p[0] >= b[0] - TOL_GEO && p[0] <= b[2] + TOL_GEO && p[1] >= b[1] - TOL_GEO && p[1] <= b[3] + TOL_GEO
    };
    let crossings = disk.edge_crossings(&b);
    let mut arcs = Vec::new();
    if crossings.is_empty() {
        if inside(disk.point_at(0.0)) {
            arcs.push((0.0, 2.0 * PI));
        }
    } else {
        for (k, &a0) in crossings.iter().enumerate() {
            let a1 = if k + 1 < crossings.len() {
                crossings[k + 1]
            } else {
                crossings[0] + 2.0 * PI
            };
            if a1 - a0 > 1e-15 && inside(disk.point_at(0.5 * (a0 + a1))) {
                arcs.push((a0, a1));
            }
        }
    }
    let gauss = GaussRule::new(q_surf / 2 + 2);
    let mut rule = SurfaceRule::default();
    for (a0, a1) in arcs {
        let pieces = ((a1 - a0) / MAX_ARC_PIECE).ceil().max(1.0) as usize;
        let step = (a1 - a0) / pieces as f64;
        for k in 0..pieces {
            let s0 = a0 + k as f64 * step;
            for (theta, w) in gauss.mapped(s0, s0 + step) {
                let (s, c) = theta.sin_cos();
                rule.points.push(disk.point_at(theta));
                rule.weights.push(w * disk.radius);
                rule.normals.push([-c, -s]);
            }
        }
    }
    Ok(rule)
}

/// Cells of the stabilization zone and the interior faces between them.
#[derive(Clone, Debug)]
pub struct StabilizationSubmesh {
    pub radius: f64,
    pub in_submesh: Vec<bool>,
    pub faces: Vec<FaceId>,
}

impl StabilizationSubmesh {
    pub fn contains(&self, cell: CellId) -> bool {
        self.in_submesh[cell.0]
    }

    pub fn cells(&self) -> impl Iterator<Item = CellId> + '_ {
        self.in_submesh.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| CellId(i))
    }

    pub fn num_cells(&self) -> usize {
        self.in_submesh.iter().filter(|&&b| b).count()
    }

    /// Submesh with no cells, used when stabilization is switched off.
    pub fn empty(mesh: &BackgroundMesh) -> Self {
        Self {
            radius: 0.0,
            in_submesh: vec![false; mesh.num_cells()],
            faces: Vec::new(),
        }
    }
}

/// All cells meeting the disk of radius `multiplier * R`, and their shared faces.
pub fn build_stabilization_submesh(
    mesh: &BackgroundMesh,
    disk: &RigidDisk,
    multiplier: f64,
) -> Result<StabilizationSubmesh> {
    if !(multiplier >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "stabilization radius multiplier {multiplier} must be >= 1"
        )));
    }
    let radius = multiplier * disk.radius;
    let in_submesh: Vec<bool> = mesh
        .cells()
        .map(|c| disk.min_distance(&mesh.cell_bounds(c)) < radius - TOL_GEO)
        .collect();
    let faces = mesh
        .interior_faces()
        .iter()
        .filter(|f| in_submesh[f.first.0] && in_submesh[f.second.0])
        .map(|f| f.id)
        .collect();
    Ok(StabilizationSubmesh {
        radius,
        in_submesh,
        faces,
    })
}

/// Per-cell classification and quadrature for one mesh, body and rule degree.
#[derive(Clone, Debug)]
pub struct CutGeometry {
    disk: Option<RigidDisk>,
    q_vol: usize,
    q_surf: usize,
    classes: Vec<CellClass>,
    volume: Vec<Option<VolumeRule>>,
    surface: Vec<Option<SurfaceRule>>,
}

impl CutGeometry {
    /// `disk = None` gives a body-free (fitted) configuration where every cell is fluid.
    pub fn new(mesh: &BackgroundMesh, disk: Option<RigidDisk>, q_vol: usize, q_surf: usize) -> Result<Self> {
        if q_vol < 1 || q_surf < 1 {
            return Err(Error::InvalidParameter("quadrature degrees must be >= 1".into()));
        }
        let mut classes = Vec::with_capacity(mesh.num_cells());
        let mut volume = Vec::with_capacity(mesh.num_cells());
        let mut surface = Vec::with_capacity(mesh.num_cells());
        for cell in mesh.cells() {
            let class = disk.map_or(CellClass::Fluid, |d| classify_cell(mesh, &d, cell));
            classes.push(class);
            match (class, disk.as_ref()) {
                (CellClass::Fluid, _) => {
                    volume.push(Some(VolumeRule::tensor(mesh.cell_bounds(cell), q_vol)));
                    surface.push(None);
                }
                (CellClass::Cut, Some(d)) => {
                    volume.push(Some(volume_rule(mesh, d, cell, q_vol)?));
                    surface.push(Some(surface_rule(mesh, d, cell, q_surf)?));
                }
                _ => {
                    volume.push(None);
                    surface.push(None);
                }
            }
        }
        Ok(Self {
            disk,
            q_vol,
            q_surf,
            classes,
            volume,
            surface,
        })
    }

    pub fn disk(&self) -> Option<&RigidDisk> {
        self.disk.as_ref()
    }

    pub fn q_vol(&self) -> usize {
        self.q_vol
    }

    pub fn q_surf(&self) -> usize {
        self.q_surf
    }

    pub fn class(&self, cell: CellId) -> CellClass {
        self.classes[cell.0]
    }

    pub fn classes(&self) -> &[CellClass] {
        &self.classes
    }

    pub fn volume_rule(&self, cell: CellId) -> Option<&VolumeRule> {
        self.volume[cell.0].as_ref()
    }

    pub fn surface_rule(&self, cell: CellId) -> Option<&SurfaceRule> {
        self.surface[cell.0].as_ref()
    }

    /// Cells with a non-empty fluid quadrature.
    pub fn fluid_cells(&self) -> impl Iterator<Item = (CellId, &VolumeRule)> {
        self.volume
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().filter(|r| !r.is_empty()).map(|r| (CellId(i), r)))
    }

    pub fn cut_cells(&self) -> impl Iterator<Item = (CellId, &SurfaceRule)> {
        self.surface
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|r| (CellId(i), r)))
    }

    pub fn fluid_area(&self) -> f64 {
        self.fluid_cells().map(|(_, r)| r.measure()).sum()
    }

    pub fn interface_length(&self) -> f64 {
        self.cut_cells().map(|(_, r)| r.length()).sum()
    }

    pub fn sliver_count(&self) -> usize {
        self.volume.iter().flatten().filter(|r| r.sliver).count()
    }

    /// CSV with header `cell_i,cell_j,x,y,w,kind`; kind is `volume` or `surface`.
    pub fn dump_csv(&self, mesh: &BackgroundMesh) -> String {
        let mut out = String::from("cell_i,cell_j,x,y,w,kind\n");
        for cell in mesh.cells() {
            let (i, j) = mesh.cell_coords(cell);
            if let Some(r) = self.volume_rule(cell) {
                for (p, w) in r.points.iter().zip(&r.weights) {
                    let _ = writeln!(out, "{i},{j},{},{},{w},volume", p[0], p[1]);
                }
            }
            if let Some(r) = self.surface_rule(cell) {
                for (p, w) in r.points.iter().zip(&r.weights) {
                    let _ = writeln!(out, "{i},{j},{},{},{w},surface", p[0], p[1]);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry(level: u32, q: usize) -> (BackgroundMesh, CutGeometry) {
        let mesh = BackgroundMesh::new(level).unwrap();
        let geo = CutGeometry::new(&mesh, Some(RigidDisk::default()), q, q).unwrap();
        (mesh, geo)
    }

    #[test]
    fn classification_examples() {
        let mesh = BackgroundMesh::new(3).unwrap();
        let disk = RigidDisk::default();
        let far = mesh.locate([0.05, 0.05]).unwrap();
        assert_eq!(classify_cell(&mesh, &disk, far), CellClass::Fluid);
        for level in 2..6 {
            let mesh = BackgroundMesh::new(level).unwrap();
            // the centre is a grid vertex: all four cells touching it are solid
            let n = mesh.cells_per_axis();
            for (i, j) in [(n / 2 - 1, n / 2 - 1), (n / 2, n / 2 - 1), (n / 2 - 1, n / 2), (n / 2, n / 2)] {
                assert_eq!(classify_cell(&mesh, &disk, mesh.cell_at(i, j)), CellClass::Solid);
            }
        }
        for cell in mesh.cells() {
            let b = mesh.cell_bounds(cell);
            let d: Vec<f64> = [[b[0], b[1]], [b[2], b[1]], [b[0], b[3]], [b[2], b[3]]]
                .iter()
                .map(|&p| disk.signed_distance(p))
                .collect();
            let straddles = d.iter().any(|&x| x < 0.0) && d.iter().any(|&x| x > 0.0);
            if straddles {
                assert_eq!(classify_cell(&mesh, &disk, cell), CellClass::Cut);
            }
        }
    }

    #[test]
    fn fluid_area_and_interface_length() {
        for level in 0..5 {
            let (_, geo) = geometry(level, 6);
            assert!((geo.fluid_area() - (1.0 - PI * 0.01)).abs() < 1e-10, "level {level}: {}", geo.fluid_area());
            assert!((geo.interface_length() - 0.2 * PI).abs() < 1e-12);
        }
    }

    #[test]
    fn full_fluid_cell_rule() {
        let (mesh, geo) = geometry(0, 6);
        let rule = geo.volume_rule(mesh.cell_at(0, 0)).unwrap();
        assert!((rule.measure() - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn first_moment_uses_disk_symmetry() {
        let (_, geo) = geometry(3, 6);
        let mx: f64 = geo
            .fluid_cells()
            .flat_map(|(_, r)| r.points.iter().zip(&r.weights))
            .map(|(p, w)| w * p[0])
            .sum();
        assert!((mx - 0.5 * (1.0 - PI * 0.01)).abs() < 1e-10);
    }

    #[test]
    fn cut_points_lie_in_fluid() {
        let disk = RigidDisk::default();
        for level in 0..4 {
            let (mesh, geo) = geometry(level, 6);
            for (cell, rule) in geo.fluid_cells() {
                let b = mesh.cell_bounds(cell);
                for (p, &w) in rule.points.iter().zip(&rule.weights) {
                    assert!(w > 0.0);
                    assert!(disk.signed_distance(*p) >= -TOL_GEO);
                    assert!(p[0] >= b[0] - TOL_GEO && p[0] <= b[2] + TOL_GEO);
                    assert!(p[1] >= b[1] - TOL_GEO && p[1] <= b[3] + TOL_GEO);
                }
            }
        }
    }

    #[test]
    fn normals_point_into_disk() {
        let disk = RigidDisk::default();
        let (_, geo) = geometry(2, 6);
        for (_, rule) in geo.cut_cells() {
            for (p, n) in rule.points.iter().zip(&rule.normals) {
                assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-12);
                let dot = n[0] * (p[0] - disk.center[0]) + n[1] * (p[1] - disk.center[1]);
                assert!((dot + disk.radius).abs() < 1e-12);
                assert!(disk.signed_distance(*p).abs() < 1e-12);
            }
        }
        // closed curve: integral of a constant vector field against n vanishes
        let flux: [f64; 2] = geo.cut_cells().fold([0.0, 0.0], |acc, (_, r)| {
            let mut acc = acc;
            for (w, n) in r.weights.iter().zip(&r.normals) {
                acc[0] += w * n[0];
                acc[1] += w * n[1];
            }
            acc
        });
        assert!(flux[0].abs() < 1e-14 && flux[1].abs() < 1e-14);
    }

    #[test]
    fn normal_at_point_right_of_center() {
        let mesh = BackgroundMesh::new(3).unwrap();
        let disk = RigidDisk::default();
        let cell = mesh.locate([0.6 - 1e-3, 0.5 + 1e-3]).unwrap();
        let rule = surface_rule(&mesh, &disk, cell, 8).unwrap();
        // the arc in this cell passes through (0.6, 0.5) at angle 0
        assert!(rule.points.iter().all(|p| p[0] <= 0.6 + 1e-15));
        let n = surface_rule(&mesh, &disk, cell, 8).unwrap().normals[0];
        assert!(n[0] < -0.9);
    }

    #[test]
    fn wrong_class_errors() {
        let mesh = BackgroundMesh::new(3).unwrap();
        let disk = RigidDisk::default();
        let solid = mesh.locate([0.51, 0.51]).unwrap();
        assert!(matches!(volume_rule(&mesh, &disk, solid, 4), Err(Error::NoFluidMeasure(_))));
        let fluid = mesh.locate([0.05, 0.05]).unwrap();
        assert!(matches!(surface_rule(&mesh, &disk, fluid, 4), Err(Error::NotCut(_))));
    }

    #[test]
    fn disk_inside_a_single_cell() {
        // coarse cell of size 0.25 holding the whole disk
        let mesh = BackgroundMesh::new(0).unwrap();
        let disk = RigidDisk::new([0.375, 0.375], 0.1).unwrap();
        let cell = mesh.locate([0.375, 0.375]).unwrap();
        assert_eq!(classify_cell(&mesh, &disk, cell), CellClass::Cut);
        let vol = volume_rule(&mesh, &disk, cell, 6).unwrap();
        assert!((vol.measure() - (0.0625 - PI * 0.01)).abs() < 1e-12);
        let surf = surface_rule(&mesh, &disk, cell, 6).unwrap();
        assert!((surf.length() - 0.2 * PI).abs() < 1e-13);
    }

    #[test]
    fn sliver_cut_is_flagged() {
        let mesh = BackgroundMesh::new(2).unwrap();
        // circle passing 1e-9 short of the far corner (0.625, 0.625) of cell (9, 9)
        let disk = RigidDisk::new([0.5, 0.5], 0.125f64.hypot(0.125) - 1e-9).unwrap();
        let cell = mesh.cell_at(9, 9);
        assert_eq!(classify_cell(&mesh, &disk, cell), CellClass::Cut);
        let rule = volume_rule(&mesh, &disk, cell, 6).unwrap();
        assert!(rule.sliver && rule.is_empty());
        // the interface still crosses the cell
        assert!(surface_rule(&mesh, &disk, cell, 6).unwrap().length() > 0.0);
    }

    /// Brute-force oracle: a box meets the open disk iff the centre is inside it
    /// or one of its edges comes closer than the radius.
    fn box_meets_disk(b: [f64; 4], c: [f64; 2], r: f64) -> bool {
        if c[0] >= b[0] && c[0] <= b[2] && c[1] >= b[1] && c[1] <= b[3] {
            return true;
        }
        let seg = |p: [f64; 2], q: [f64; 2]| {
            let d = [q[0] - p[0], q[1] - p[1]];
            let t = (((c[0] - p[0]) * d[0] + (c[1] - p[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
            (p[0] + t * d[0] - c[0]).hypot(p[1] + t * d[1] - c[1])
        };
        let corners = [[b[0], b[1]], [b[2], b[1]], [b[2], b[3]], [b[0], b[3]]];
        (0..4).any(|k| seg(corners[k], corners[(k + 1) % 4]) < r)
    }

    #[test]
    fn submesh_matches_enumeration() {
        let mesh = BackgroundMesh::new(2).unwrap();
        let disk = RigidDisk::default();
        let sub = build_stabilization_submesh(&mesh, &disk, 2.0).unwrap();
        let expected = mesh
            .cells()
            .filter(|&c| box_meets_disk(mesh.cell_bounds(c), disk.center, 0.2))
            .count();
        assert_eq!(sub.num_cells(), expected);
    }

    #[test]
    fn submesh_contains_cut_and_solid_cells() {
        let mesh = BackgroundMesh::new(3).unwrap();
        let disk = RigidDisk::default();
        let one = build_stabilization_submesh(&mesh, &disk, 1.0).unwrap();
        let two = build_stabilization_submesh(&mesh, &disk, 2.0).unwrap();
        for cell in mesh.cells() {
            let class = classify_cell(&mesh, &disk, cell);
            assert_eq!(one.contains(cell), class != CellClass::Fluid);
            assert!(!one.contains(cell) || two.contains(cell));
        }
        let far = mesh.interior_faces().iter().find(|f| f.start[0] < 0.1 && f.start[1] < 0.1).unwrap();
        assert!(!two.faces.contains(&far.id));
        assert!(build_stabilization_submesh(&mesh, &disk, 0.5).is_err());
    }

    #[test]
    fn dump_csv_header() {
        let (mesh, geo) = geometry(0, 2);
        let csv = geo.dump_csv(&mesh);
        assert!(csv.starts_with("cell_i,cell_j,x,y,w,kind\n"));
        assert!(csv.contains(",surface"));
    }
}
