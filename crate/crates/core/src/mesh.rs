//! Structured Cartesian background mesh of the unit square.
//!
//! Level `l` has `N = 4 * 2^l` square cells per axis. The cell diameter
//! is `h = sqrt(2) / N`, so level 0 gives `h = 1 / (2 sqrt(2))` and every
//! refinement halves it.
//!
//! Cell `(i, j)` covers `[i s, (i+1) s] x [j s, (j+1) s]` with `s = 1/N` and
//! has id `j N + i`. Interior faces are numbered vertical faces first
//! (between `(i, j)` and `(i+1, j)`, id `j (N-1) + i`), then horizontal faces
//! (between `(i, j)` and `(i, j+1)`, id `N (N-1) + j N + i`).

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Largest accepted refinement level (`N = 4096`).
pub const MAX_LEVEL: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FaceId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    /// Face at constant x, separating a left and a right cell.
    Vertical,
    /// Face at constant y, separating a lower and an upper cell.
    Horizontal,
}

#[derive(Clone, Copy, Debug)]
pub struct InteriorFace {
    pub id: FaceId,
    pub orientation: Orientation,
    /// Left (vertical) or lower (horizontal) cell.
    pub first: CellId,
    pub second: CellId,
    pub start: [f64; 2],
    pub end: [f64; 2],
}

#[derive(Clone, Copy, Debug)]
pub struct BoundaryFace {
    pub cell: CellId,
    pub start: [f64; 2],
    pub end: [f64; 2],
    /// Outward unit normal of the unit square.
    pub normal: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct BackgroundMesh {
    level: u32,
    n: usize,
    cell_size: f64,
    interior_faces: Vec<InteriorFace>,
    boundary_faces: Vec<BoundaryFace>,
}

impl BackgroundMesh {
    pub fn new(level: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::InvalidLevel(level));
        }
        let n = 4usize << level;
        let s = 1.0 / n as f64;
        let mut interior_faces = Vec::with_capacity(2 * n * (n - 1));
        for j in 0..n {
            for i in 0..n - 1 {
                let x = (i + 1) as f64 * s;
                interior_faces.push(InteriorFace {
                    id: FaceId(interior_faces.len()),
                    orientation: Orientation::Vertical,
                    first: CellId(j * n + i),
                    second: CellId(j * n + i + 1),
                    start: [x, j as f64 * s],
                    end: [x, (j + 1) as f64 * s],
                });
            }
        }
        for j in 0..n - 1 {
            for i in 0..n {
                let y = (j + 1) as f64 * s;
                interior_faces.push(InteriorFace {
                    id: FaceId(interior_faces.len()),
                    orientation: Orientation::Horizontal,
                    first: CellId(j * n + i),
                    second: CellId((j + 1) * n + i),
                    start: [i as f64 * s, y],
                    end: [(i + 1) as f64 * s, y],
                });
            }
        }
        let mut boundary_faces = Vec::with_capacity(4 * n);
        for k in 0..n {
            let a = k as f64 * s;
            let b = (k + 1) as f64 * s;
            boundary_faces.push(BoundaryFace {
                cell: CellId(k),
                start: [a, 0.0],
                end: [b, 0.0],
                normal: [0.0, -1.0],
            });
            boundary_faces.push(BoundaryFace {
                cell: CellId((n - 1) * n + k),
                start: [a, 1.0],
                end: [b, 1.0],
                normal: [0.0, 1.0],
            });
            boundary_faces.push(BoundaryFace {
                cell: CellId(k * n),
                start: [0.0, a],
                end: [0.0, b],
                normal: [-1.0, 0.0],
            });
            boundary_faces.push(BoundaryFace {
                cell: CellId(k * n + n - 1),
                start: [1.0, a],
                end: [1.0, b],
                normal: [1.0, 0.0],
            });
        }
        Ok(Self {
            level,
            n,
            cell_size: s,
            interior_faces,
            boundary_faces,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Cell diameter (diagonal length).
    pub fn h(&self) -> f64 {
        self.cell_size * std::f64::consts::SQRT_2
    }

    pub fn num_cells(&self) -> usize {
        self.n * self.n
    }

    pub fn cells(&self) -> impl Iterator<Item = CellId> {
        (0..self.num_cells()).map(CellId)
    }

    pub fn check_cell(&self, cell: CellId) -> Result<()> {
        if cell.0 < self.num_cells() {
            Ok(())
        } else {
            Err(Error::InvalidCell(cell.0))
        }
    }

    pub fn cell_coords(&self, cell: CellId) -> (usize, usize) {
        (cell.0 % self.n, cell.0 / self.n)
    }

    pub fn cell_at(&self, i: usize, j: usize) -> CellId {
        CellId(j * self.n + i)
    }

    /// Lower-left corner of the cell.
    pub fn cell_origin(&self, cell: CellId) -> [f64; 2] {
        let (i, j) = self.cell_coords(cell);
        [i as f64 * self.cell_size, j as f64 * self.cell_size]
    }

    /// `[x_min, y_min, x_max, y_max]`
    pub fn cell_bounds(&self, cell: CellId) -> [f64; 4] {
        let [x, y] = self.cell_origin(cell);
        [x, y, x + self.cell_size, y + self.cell_size]
    }

    /// Cell containing `p`; points on shared faces go to the upper/right cell.
    pub fn locate(&self, p: [f64; 2]) -> Option<CellId> {
        if !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]) {
            return None;
        }
        let i = ((p[0] * self.n as f64) as usize).min(self.n - 1);
        let j = ((p[1] * self.n as f64) as usize).min(self.n - 1);
        Some(self.cell_at(i, j))
    }

    pub fn interior_faces(&self) -> &[InteriorFace] {
        &self.interior_faces
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn face(&self, face: FaceId) -> &InteriorFace {
        &self.interior_faces[face.0]
    }

    fn vertical_face(&self, i: usize, j: usize) -> FaceId {
        FaceId(j * (self.n - 1) + i)
    }

    fn horizontal_face(&self, i: usize, j: usize) -> FaceId {
        FaceId(self.n * (self.n - 1) + j * self.n + i)
    }

    /// Interior faces of `cell` paired with the cell on the other side.
    pub fn cell_neighbors(&self, cell: CellId) -> Result<Vec<(FaceId, CellId)>> {
        self.check_cell(cell)?;
        let (i, j) = self.cell_coords(cell);
        let mut out = Vec::with_capacity(4);
        if i > 0 {
            out.push((self.vertical_face(i - 1, j), self.cell_at(i - 1, j)));
        }
        if i + 1 < self.n {
            out.push((self.vertical_face(i, j), self.cell_at(i + 1, j)));
        }
        if j > 0 {
            out.push((self.horizontal_face(i, j - 1), self.cell_at(i, j - 1)));
        }
        if j + 1 < self.n {
            out.push((self.horizontal_face(i, j), self.cell_at(i, j + 1)));
        }
        Ok(out)
    }

    /// Face shared by two cells, if they are neighbours.
    pub fn shared_face(&self, a: CellId, b: CellId) -> Result<FaceId> {
        self.cell_neighbors(a)?
            .into_iter()
            .find(|&(_, c)| c == b)
            .map(|(f, _)| f)
            .ok_or(Error::NotNeighbors(a.0, b.0))
    }

    /// One line per cell: `i j x_min y_min size`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for cell in self.cells() {
            let (i, j) = self.cell_coords(cell);
            let [x, y] = self.cell_origin(cell);
            let _ = writeln!(out, "{i} {j} {x} {y} {}", self.cell_size);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_zero_matches_reference_diameter() {
        let mesh = BackgroundMesh::new(0).unwrap();
        assert_eq!(mesh.cells_per_axis(), 4);
        assert!((mesh.h() - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(mesh.interior_faces().len(), 24);
        assert_eq!(mesh.boundary_faces().len(), 16);
    }

    #[test]
    fn level_three() {
        let mesh = BackgroundMesh::new(3).unwrap();
        assert_eq!(mesh.cells_per_axis(), 32);
        assert!((mesh.h() - 0.044194173824159216).abs() < 1e-15);
        assert_eq!(mesh.interior_faces().len(), 2 * 32 * 31);
    }

    #[test]
    fn rejects_level_above_guard() {
        assert!(matches!(
            BackgroundMesh::new(MAX_LEVEL + 1),
            Err(Error::InvalidLevel(_))
        ));
    }

    #[test]
    fn neighbor_counts() {
        let mesh = BackgroundMesh::new(0).unwrap();
        assert_eq!(mesh.cell_neighbors(mesh.cell_at(0, 0)).unwrap().len(), 2);
        assert_eq!(mesh.cell_neighbors(mesh.cell_at(1, 0)).unwrap().len(), 3);
        assert_eq!(mesh.cell_neighbors(mesh.cell_at(1, 2)).unwrap().len(), 4);
        assert!(mesh.cell_neighbors(CellId(16)).is_err());
    }

    #[test]
    fn faces_are_reported_by_both_cells() {
        let mesh = BackgroundMesh::new(2).unwrap();
        for face in mesh.interior_faces() {
            let a = mesh.cell_neighbors(face.first).unwrap();
            let b = mesh.cell_neighbors(face.second).unwrap();
            assert!(a.contains(&(face.id, face.second)));
            assert!(b.contains(&(face.id, face.first)));
        }
    }

    #[test]
    fn cells_tile_the_unit_square() {
        for level in 0..5 {
            let mesh = BackgroundMesh::new(level).unwrap();
            let area: f64 = mesh.cells().map(|_| mesh.cell_size().powi(2)).sum();
            assert!((area - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn refinement_nests() {
        let coarse = BackgroundMesh::new(1).unwrap();
        let fine = BackgroundMesh::new(2).unwrap();
        for cell in coarse.cells() {
            let b = coarse.cell_bounds(cell);
            let children: Vec<_> = fine
                .cells()
                .filter(|&c| {
                    let f = fine.cell_bounds(c);
                    f[0] >= b[0] - 1e-14 && f[2] <= b[2] + 1e-14 && f[1] >= b[1] - 1e-14 && f[3] <= b[3] + 1e-14
                })
                .collect();
            assert_eq!(children.len(), 4);
        }
    }

    #[test]
    fn dump_has_one_line_per_cell() {
        let mesh = BackgroundMesh::new(0).unwrap();
        let dump = mesh.dump();
        assert_eq!(dump.lines().count(), 16);
        assert_eq!(dump.lines().next().unwrap(), "0 0 0 0 0.25");
    }
}
