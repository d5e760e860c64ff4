use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squarings of the covariance before power iteration.
const SQUARINGS: usize = 8;
const MAX_ITERATIONS: usize = 10_000;
const CONVERGENCE: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub name: String,
    pub label: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub points: Vec<ProjectedPoint>,
    /// Fraction of total variance along each component.
    pub explained_variance: [f64; 2],
    pub components: [Vec<f64>; 2],
    pub mean: Vec<f64>,
}

impl Projection2D {
    /// `name,label,x,y` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,label,x,y\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", csv_field(&p.name), csv_field(&p.label), p.x, p.y));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

type Dense = Vec<Vec<f64>>;

fn mat_vec(m: &Dense, v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn mat_mul(a: &Dense, b: &Dense) -> Dense {
    let n = b[0].len();
    a.iter()
        .map(|row| (0..n).map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum()).collect())
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalise(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn max_abs(m: &Dense) -> f64 {
    m.iter().flatten().fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// Flips `v` so that its largest-magnitude entry is positive.
fn orient(v: &mut [f64]) {
    let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Removes the components of `v` along each vector of `basis`.
fn orthogonalise(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
    }
}

/// Dominant eigenpair of the symmetric positive semi-definite `c`,
/// orthogonal to `found`.
fn dominant(c: &Dense, found: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let n = c.len();
    // high powers of c share its eigenvectors and widen the spectral gap
    let mut power = c.clone();
    for _ in 0..SQUARINGS {
        let scale = max_abs(&power);
        if scale == 0.0 {
            break;
        }
        power.iter_mut().flatten().for_each(|x| *x /= scale);
        power = mat_mul(&power, &power);
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / n as f64).collect();
    orthogonalise(&mut v, found);
    normalise(&mut v);
    for stage in [&power, c] {
        for _ in 0..MAX_ITERATIONS {
            let mut next = mat_vec(stage, &v);
            orthogonalise(&mut next, found);
            if normalise(&mut next) == 0.0 {
                break;
            }
            let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if change < CONVERGENCE {
                break;
            }
        }
    }
    let lambda: f64 = mat_vec(c, &v).iter().zip(&v).map(|(a, b)| a * b).sum();
    orient(&mut v);
    (lambda.max(0.0), v)
}

/// Projects `vectors` onto their top two principal components.
pub fn pca_project(vectors: &[Vec<f64>], names: &[String], labels: &[String]) -> Result<Projection2D> {
    let m = vectors.len();
    if m < 3 {
        return Err(Error::Degenerate(format!("need at least 3 vectors, got {m}")));
    }
    if names.len() != m || labels.len() != m {
        return Err(Error::shape("pca_project", (m, 1), (names.len(), labels.len())));
    }
    let n = vectors[0].len();
    if n < 2 {
        return Err(Error::Degenerate("need vectors of dimension >= 2".into()));
    }
    if let Some(bad) = vectors.iter().find(|v| v.len() != n) {
        return Err(Error::shape("pca_project", (1, n), (1, bad.len())));
    }
    let mean: Vec<f64> = (0..n).map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / m as f64).collect();
    let centred: Dense = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, mu)| x - mu).collect())
        .collect();
    let mut cov = vec![vec![0.0; n]; n];
    for row in &centred {
        for i in 0..n {
            for j in 0..n {
                cov[i][j] += row[i] * row[j];
            }
        }
    }
    cov.iter_mut().flatten().for_each(|x| *x /= (m - 1) as f64);
    let trace: f64 = (0..n).map(|i| cov[i][i]).sum();
    let scale = vectors.iter().flatten().fold(0.0f64, |a, &x| a.max(x.abs()));
    if trace.is_nan() || trace <= (1e-12 * scale).powi(2) {
        return Err(Error::Degenerate("input has zero variance".into()));
    }
    let (l1, v1) = dominant(&cov, &[]);
    let mut deflated = cov.clone();
    for i in 0..n {
        for j in 0..n {
            deflated[i][j] -= l1 * v1[i] * v1[j];
        }
    }
    let (l2, v2) = dominant(&deflated, std::slice::from_ref(&v1));
    let l2 = l2.min(l1);
    let project = |row: &Vec<f64>, v: &Vec<f64>| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let points = centred
        .iter()
        .zip(names.iter().zip(labels))
        .map(|(row, (name, label))| ProjectedPoint {
            name: name.clone(),
            label: label.clone(),
            x: project(row, &v1),
            y: project(row, &v2),
        })
        .collect();
    Ok(Projection2D {
        points,
        explained_variance: [(l1 / trace).min(1.0), (l2 / trace).min(1.0)],
        components: [v1, v2],
        mean,
    })
}
