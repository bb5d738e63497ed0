//! Minimal geometry for integrating functionals: a chain of intervals or a
//! list of triangles with their boundary edges.

use std::collections::HashMap;

use crate::cell::Cell;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFacet {
    pub cell: usize,
    /// Local facet number: the facet opposite this local vertex.
    pub facet: usize,
    pub normal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MiniMesh {
    IntervalChain {
        a: f64,
        b: f64,
        n: usize,
    },
    TriangleList {
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<BoundaryFacet>,
    },
}

/// Per-cell geometric quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    pub vertices: Vec<Vec<f64>>,
    pub volume: f64,
    pub circumradius: f64,
    pub facet_areas: Vec<f64>,
    pub diameter: f64,
}

impl CellGeometry {
    pub fn surface_area(&self) -> f64 {
        self.facet_areas.iter().sum()
    }

    /// Affine map from reference coordinates.
    pub fn map(&self, xi: &[f64]) -> Vec<f64> {
        let v0 = &self.vertices[0];
        (0..v0.len())
            .map(|d| {
                v0[d]
                    + xi.iter()
                        .enumerate()
                        .map(|(k, t)| t * (self.vertices[k + 1][d] - v0[d]))
                        .sum::<f64>()
            })
            .collect()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl MiniMesh {
    pub fn interval(a: f64, b: f64, n: usize) -> Result<MiniMesh> {
        if n == 0 || !(b > a) {
            return Err(Error::DomainMismatch(format!(
                "degenerate interval chain [{a}, {b}] with {n} cells"
            )));
        }
        Ok(MiniMesh::IntervalChain { a, b, n })
    }

    /// Triangles given by vertex triples; boundary edges and their outward
    /// normals are derived.
    pub fn triangles(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<MiniMesh> {
        let mut edges: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::DomainMismatch(format!(
                    "triangle {t} refers to a missing vertex"
                )));
            }
            let [p0, p1, p2] = tri.map(|v| vertices[v]);
            let area =
                0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]));
            if area.abs() < 1e-300 {
                return Err(Error::DomainMismatch(format!("triangle {t} is degenerate")));
            }
            for f in 0..3 {
                let (a, b) = (tri[(f + 1) % 3], tri[(f + 2) % 3]);
                edges.entry((a.min(b), a.max(b))).or_default().push((t, f));
            }
        }
        let mut boundary: Vec<BoundaryFacet> = edges
            .values()
            .filter(|owners| owners.len() == 1)
            .map(|owners| {
                let (t, f) = owners[0];
                let tri = triangles[t];
                let (a, b, opp) = (
                    vertices[tri[(f + 1) % 3]],
                    vertices[tri[(f + 2) % 3]],
                    vertices[tri[f]],
                );
                let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
                let len = (tx * tx + ty * ty).sqrt();
                let mut n = [ty / len, -tx / len];
                if n[0] * (opp[0] - a[0]) + n[1] * (opp[1] - a[1]) > 0.0 {
                    n = [-n[0], -n[1]];
                }
                BoundaryFacet {
                    cell: t,
                    facet: f,
                    normal: n.to_vec(),
                }
            })
            .collect();
        boundary.sort_by_key(|b| (b.cell, b.facet));
        Ok(MiniMesh::TriangleList {
            vertices,
            triangles,
            boundary,
        })
    }

    /// The unit square split into `2 n^2` triangles.
    pub fn unit_square(n: usize) -> Result<MiniMesh> {
        if n == 0 {
            return Err(Error::DomainMismatch("unit square with zero cells".into()));
        }
        let mut vertices = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::new();
        for j in 0..n {
            for i in 0..n {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        MiniMesh::triangles(vertices, triangles)
    }

    pub fn cell_type(&self) -> Cell {
        match self {
            MiniMesh::IntervalChain { .. } => Cell::Interval,
            MiniMesh::TriangleList { .. } => Cell::Triangle,
        }
    }

    pub fn gdim(&self) -> usize {
        self.cell_type().geometric_dimension()
    }

    pub fn num_cells(&self) -> usize {
        match self {
            MiniMesh::IntervalChain { n, .. } => *n,
            MiniMesh::TriangleList { triangles, .. } => triangles.len(),
        }
    }

    pub fn cell(&self, c: usize) -> CellGeometry {
        match self {
            MiniMesh::IntervalChain { a, b, n } => {
                let h = (b - a) / *n as f64;
                let x0 = a + h * c as f64;
                let x1 = if c + 1 == *n { *b } else { x0 + h };
                CellGeometry {
                    vertices: vec![vec![x0], vec![x1]],
                    volume: x1 - x0,
                    circumradius: 0.5 * (x1 - x0),
                    facet_areas: vec![1.0, 1.0],
                    diameter: x1 - x0,
                }
            }
            MiniMesh::TriangleList {
                vertices,
                triangles,
                ..
            } => {
                let p: Vec<Vec<f64>> = triangles[c].iter().map(|&v| vertices[v].to_vec()).collect();
                let facet_areas: Vec<f64> = (0..3)
                    .map(|f| dist(&p[(f + 1) % 3], &p[(f + 2) % 3]))
                    .collect();
                let area = 0.5
                    * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                        - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
                        .abs();
                let prod: f64 = facet_areas.iter().product();
                let diameter = facet_areas.iter().copied().fold(0.0, f64::max);
                CellGeometry {
                    vertices: p,
                    volume: area,
                    circumradius: prod / (4.0 * area),
                    facet_areas,
                    diameter,
                }
            }
        }
    }

    pub fn boundary_facets(&self) -> Vec<BoundaryFacet> {
        match self {
            MiniMesh::IntervalChain { n, .. } => vec![
                BoundaryFacet {
                    cell: 0,
                    facet: 1,
                    normal: vec![-1.0],
                },
                BoundaryFacet {
                    cell: n - 1,
                    facet: 0,
                    normal: vec![1.0],
                },
            ],
            MiniMesh::TriangleList { boundary, .. } => boundary.clone(),
        }
    }

    /// Largest cell diameter.
    pub fn diameter(&self) -> f64 {
        (0..self.num_cells())
            .map(|c| self.cell(c).diameter)
            .fold(0.0, f64::max)
    }
}

impl std::str::FromStr for MiniMesh {
    type Err = Error;

    /// `interval:A:B:N` or `unitsquare:N`.
    fn from_str(s: &str) -> Result<MiniMesh> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || {
            Error::DomainMismatch(format!(
                "bad mesh spec '{s}', expected interval:A:B:N or unitsquare:N"
            ))
        };
        match parts.as_slice() {
            ["interval", a, b, n] => MiniMesh::interval(
                a.parse().map_err(|_| bad())?,
                b.parse().map_err(|_| bad())?,
                n.parse().map_err(|_| bad())?,
            ),
            ["unitsquare", n] => MiniMesh::unit_square(n.parse().map_err(|_| bad())?),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_boundary() {
        let m = MiniMesh::unit_square(1).unwrap();
        assert_eq!(m.num_cells(), 2);
        let b = m.boundary_facets();
        assert_eq!(b.len(), 4);
        let total: f64 = b.iter().map(|f| m.cell(f.cell).facet_areas[f.facet]).sum();
        assert!((total - 4.0).abs() < 1e-15);
        let area: f64 = (0..2).map(|c| m.cell(c).volume).sum();
        assert!((area - 1.0).abs() < 1e-15);
        assert_eq!(
            MiniMesh::unit_square(3).unwrap().boundary_facets().len(),
            12
        );
    }

    #[test]
    fn parse_specs() {
        assert_eq!(
            "interval:0:1:4".parse::<MiniMesh>().unwrap(),
            MiniMesh::IntervalChain {
                a: 0.0,
                b: 1.0,
                n: 4
            }
        );
        assert!("unitsquare:2".parse::<MiniMesh>().is_ok());
        assert!("disk:3".parse::<MiniMesh>().is_err());
    }
}
