//! Quadrature rules on the reference interval [0, 1] and the reference
//! triangle with vertices (0,0), (1,0), (0,1).

use std::sync::LazyLock;

use crate::cell::Cell;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub cell: Cell,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Highest total polynomial degree integrated exactly.
    pub degree: usize,
}

pub const INTERVAL_DEGREES: [usize; 5] = [1, 3, 5, 7, 9];
pub const TRIANGLE_DEGREES: [usize; 4] = [1, 2, 4, 6];

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { z } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Gauss-Legendre rule mapped to [0, 1], exact to degree `2n - 1`.
pub fn interval_rule(degree: usize) -> QuadratureRule {
    let degree = INTERVAL_DEGREES
        .iter()
        .copied()
        .find(|&d| d >= degree)
        .unwrap_or(9);
    let n = degree.div_ceil(2);
    let (x, w) = gauss_legendre(n);
    QuadratureRule {
        cell: Cell::Interval,
        points: x.iter().map(|&z| vec![0.5 * (z + 1.0)]).collect(),
        weights: w.iter().map(|&v| 0.5 * v).collect(),
        degree,
    }
}

/// Point orbits of a symmetric triangle rule in barycentric form.
#[derive(Clone, Copy)]
enum Orbit {
    Centroid,
    /// (a, a, 1 - 2a)
    Edge(f64),
    /// all permutations of (a, b, 1 - a - b)
    General(f64, f64),
}

fn expand(orbits: &[(f64, Orbit)]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    for &(w, o) in orbits {
        let bary: Vec<[f64; 3]> = match o {
            Orbit::Centroid => vec![[1.0 / 3.0; 3]],
            Orbit::Edge(a) => {
                let b = 1.0 - 2.0 * a;
                vec![[a, a, b], [a, b, a], [b, a, a]]
            }
            Orbit::General(a, b) => {
                let c = 1.0 - a - b;
                vec![
                    [a, b, c],
                    [a, c, b],
                    [b, a, c],
                    [b, c, a],
                    [c, a, b],
                    [c, b, a],
                ]
            }
        };
        for l in bary {
            pts.push(vec![l[1], l[2]]);
            wts.push(w);
        }
    }
    (pts, wts)
}

fn monomial_integral(i: u32, j: u32) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    fact(i) * fact(j) / fact(i + j + 2)
}

/// Free parameters of an orbit list, in a flat vector.
fn params(orbits: &[(f64, Orbit)]) -> Vec<f64> {
    let mut p = Vec::new();
    for &(w, o) in orbits {
        p.push(w);
        match o {
            Orbit::Centroid => {}
            Orbit::Edge(a) => p.push(a),
            Orbit::General(a, b) => p.extend([a, b]),
        }
    }
    p
}

fn with_params(orbits: &[(f64, Orbit)], p: &[f64]) -> Vec<(f64, Orbit)> {
    let mut k = 0;
    let mut next = || {
        k += 1;
        p[k - 1]
    };
    orbits
        .iter()
        .map(|&(_, o)| {
            let w = next();
            let o = match o {
                Orbit::Centroid => Orbit::Centroid,
                Orbit::Edge(_) => Orbit::Edge(next()),
                Orbit::General(..) => {
                    let a = next();
                    Orbit::General(a, next())
                }
            };
            (w, o)
        })
        .collect()
}

fn moment_residuals(orbits: &[(f64, Orbit)], degree: u32) -> Vec<f64> {
    let (pts, wts) = expand(orbits);
    let mut r = Vec::new();
    for i in 0..=degree {
        for j in 0..=degree - i {
            let q: f64 = pts
                .iter()
                .zip(&wts)
                .map(|(p, w)| w * p[0].powi(i as i32) * p[1].powi(j as i32))
                .sum();
            r.push(q - monomial_integral(i, j));
        }
    }
    r
}

/// Solves `a x = b` for a small dense system by Gaussian elimination.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
            .unwrap_or(c);
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Polishes tabulated rule parameters with Gauss-Newton steps on the
/// moment equations so the rule is exact to rounding.
fn refine(orbits: &[(f64, Orbit)], degree: u32) -> Vec<(f64, Orbit)> {
    let mut p = params(orbits);
    for _ in 0..8 {
        let r0 = moment_residuals(&with_params(orbits, &p), degree);
        let h = 1e-7;
        let cols: Vec<Vec<f64>> = (0..p.len())
            .map(|k| {
                let mut q = p.clone();
                q[k] += h;
                let r1 = moment_residuals(&with_params(orbits, &q), degree);
                r1.iter().zip(&r0).map(|(a, b)| (a - b) / h).collect()
            })
            .collect();
        let n = p.len();
        let jtj: Vec<Vec<f64>> = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum())
                    .collect()
            })
            .collect();
        let jtr: Vec<f64> = (0..n)
            .map(|a| -cols[a].iter().zip(&r0).map(|(x, y)| x * y).sum::<f64>())
            .collect();
        let dx = solve(jtj, jtr);
        for (pk, d) in p.iter_mut().zip(dx) {
            *pk += d;
        }
    }
    with_params(orbits, &p)
}

static TRIANGLE_RULES: LazyLock<Vec<QuadratureRule>> = LazyLock::new(|| {
    let tables: [(usize, Vec<(f64, Orbit)>); 4] = [
        (1, vec![(0.5, Orbit::Centroid)]),
        (2, vec![(1.0 / 6.0, Orbit::Edge(1.0 / 6.0))]),
        (
            4,
            vec![
                (0.223381589678011 / 2.0, Orbit::Edge(0.445948490915965)),
                (0.109951743655322 / 2.0, Orbit::Edge(0.091576213509771)),
            ],
        ),
        (
            6,
            vec![
                (0.116786275726379 / 2.0, Orbit::Edge(0.249286745170910)),
                (0.050844906370207 / 2.0, Orbit::Edge(0.063089014491502)),
                (
                    0.082851075618374 / 2.0,
                    Orbit::General(0.053145049844817, 0.310352451033784),
                ),
            ],
        ),
    ];
    tables
        .into_iter()
        .map(|(degree, orbits)| {
            let orbits = if degree >= 4 {
                refine(&orbits, degree as u32)
            } else {
                orbits
            };
            let (points, weights) = expand(&orbits);
            QuadratureRule {
                cell: Cell::Triangle,
                points,
                weights,
                degree,
            }
        })
        .collect()
});

pub fn triangle_rule(degree: usize) -> QuadratureRule {
    let rules = &*TRIANGLE_RULES;
    rules
        .iter()
        .find(|r| r.degree >= degree)
        .unwrap_or(&rules[rules.len() - 1])
        .clone()
}

/// The smallest shipped rule on `cell` exact to at least `degree`, or the
/// most accurate one when none is.
pub fn rule_for(cell: Cell, degree: usize) -> Result<QuadratureRule> {
    match cell {
        Cell::Interval => Ok(interval_rule(degree)),
        Cell::Triangle => Ok(triangle_rule(degree)),
        Cell::Tetrahedron => Err(Error::UnsupportedMeasure(
            "no quadrature on tetrahedra".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_rules_are_exact() {
        for d in INTERVAL_DEGREES {
            let r = interval_rule(d);
            assert_eq!(r.degree, d);
            for p in 0..=d as i32 {
                let q: f64 = r
                    .points
                    .iter()
                    .zip(&r.weights)
                    .map(|(x, w)| w * x[0].powi(p))
                    .sum();
                assert!(
                    (q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14,
                    "degree {d}, monomial {p}"
                );
            }
        }
    }

    #[test]
    fn triangle_rules_are_exact() {
        for d in TRIANGLE_DEGREES {
            let r = triangle_rule(d);
            assert_eq!(r.degree, d);
            assert!((r.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
            for i in 0..=d as u32 {
                for j in 0..=d as u32 - i {
                    let q: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(x, w)| w * x[0].powi(i as i32) * x[1].powi(j as i32))
                        .sum();
                    assert!(
                        (q - monomial_integral(i, j)).abs() < 1e-14,
                        "degree {d}, x^{i} y^{j}"
                    );
                }
            }
        }
    }

    #[test]
    fn selection_rounds_up() {
        assert_eq!(interval_rule(4).degree, 5);
        assert_eq!(triangle_rule(3).degree, 4);
        assert_eq!(triangle_rule(20).degree, 6);
    }
}
