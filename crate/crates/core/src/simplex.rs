//! Simplicial partition-of-unity approximation on `[0,1]^d`.
//!
//! The unit cube is cut into `N^d` cells of edge `1/N`; each cell splits
//! into `d!` simplices indexed by the ordering of the coordinate offsets
//! (the Freudenthal triangulation). The barycentric coordinates of the
//! simplex containing a point define vertex weights `psi_v` that form a
//! global partition of unity with at most `d+1` active vertices anywhere.
//! Attaching the order-`t` Taylor polynomial of a target function at every
//! lattice vertex yields the approximant `p(x) = sum_v psi_v(x) T_v(x)`,
//! whose sup error on a Hölder ball of smoothness `zeta` and constant `B`
//! is at most `(d+1) B d^t N^(-zeta)` — the certificate exposed by
//! [`error_certificate`]. The constant grows polynomially in `d`, unlike
//! the `2^d` of tensor-product partitions.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the dimension of coefficient tables; the dense per-vertex
/// storage grows as `(N+1)^d`.
pub const MAX_DIM: usize = 6;

/// Membership tolerance in `x` units for explicit simplex queries.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Uniform simplicial mesh of `[0,1]^d` with `N^d * d!` simplices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplicialMesh {
    pub n: usize,
    pub d: usize,
}

impl SimplicialMesh {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("mesh resolution must be >= 1".into()));
        }
        if d == 0 {
            return Err(Error::InvalidConfig("dimension must be >= 1".into()));
        }
        Ok(Self { n, d })
    }

    /// Number of lattice vertices `(N+1)^d`, or an error if it overflows.
    pub fn vertex_count(&self) -> Result<usize> {
        (self.n + 1)
            .checked_pow(self.d as u32)
            .ok_or_else(|| Error::InvalidConfig("vertex table overflows usize".into()))
    }

    /// Row-major index of a lattice vertex (first coordinate most
    /// significant).
    pub fn vertex_index(&self, v: &[usize]) -> usize {
        let base = self.n + 1;
        v.iter().fold(0, |acc, &i| acc * base + i)
    }

    /// Inverse of [`Self::vertex_index`].
    pub fn vertex_from_index(&self, mut idx: usize) -> Vec<usize> {
        let base = self.n + 1;
        let mut v = vec![0; self.d];
        for l in (0..self.d).rev() {
            v[l] = idx % base;
            idx /= base;
        }
        v
    }

    /// Coordinates of a lattice vertex: `v_l / N`.
    pub fn vertex_point(&self, v: &[usize]) -> Vec<f64> {
        v.iter().map(|&i| i as f64 / self.n as f64).collect()
    }
}

/// One simplex `S_{v,pi}` of the triangulation: a base cell corner
/// `v` in `{0..N-1}^d` and a permutation ordering the coordinate offsets
/// ascending, `x_{pi(1)} - v_{pi(1)} <= ... <= x_{pi(d)} - v_{pi(d)}`.
/// `perm` stores `pi` 0-based: `perm[0]` is the smallest-offset coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimplexId {
    pub base: Vec<usize>,
    pub perm: Vec<usize>,
}

impl SimplexId {
    /// The `d+1` lattice vertices: the base corner, then unit steps added in
    /// descending-offset order.
    pub fn vertices(&self) -> Vec<Vec<usize>> {
        let d = self.base.len();
        let mut out = Vec::with_capacity(d + 1);
        let mut v = self.base.clone();
        out.push(v.clone());
        for k in 0..d {
            v[self.perm[d - 1 - k]] += 1;
            out.push(v.clone());
        }
        out
    }
}

/// Finds the simplex containing `x`: base corner `floor(N x)` (clamped to
/// `N-1` at the upper boundary) and the stable ascending sort of the
/// fractional offsets. Ties are broken by coordinate index, which is valid
/// because barycentric coordinates agree on shared faces.
pub fn locate_simplex(x: &[f64], n: usize) -> Result<SimplexId> {
    let d = x.len();
    if d == 0 {
        return Err(Error::InvalidConfig(
            "point must have dimension >= 1".into(),
        ));
    }
    for &xi in x {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::OutsideDomain { d });
        }
    }
    let nf = n as f64;
    let mut base = vec![0usize; d];
    let mut offsets = vec![0.0; d];
    for l in 0..d {
        let cell = ((x[l] * nf).floor() as usize).min(n - 1);
        base[l] = cell;
        offsets[l] = x[l] * nf - cell as f64;
    }
    let mut perm: Vec<usize> = (0..d).collect();
    perm.sort_by(|&a, &b| offsets[a].partial_cmp(&offsets[b]).unwrap());
    Ok(SimplexId { base, perm })
}

/// Barycentric coordinates of `x` with respect to `simplex`: the scaled
/// offsets sorted along the simplex's own permutation, then first
/// differences. Errors if `x` violates the membership chain by more than
/// [`MEMBERSHIP_TOL`] in `x` units.
pub fn barycentric(x: &[f64], simplex: &SimplexId, n: usize) -> Result<Vec<f64>> {
    let d = simplex.base.len();
    if x.len() != d {
        return Err(Error::ShapeMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let nf = n as f64;
    let s: Vec<f64> = (0..d)
        .map(|l| x[l] * nf - simplex.base[l] as f64)
        .collect();
    // Membership chain: 0 <= s_{perm[0]} <= ... <= s_{perm[d-1]} <= 1.
    let tol = MEMBERSHIP_TOL * nf;
    let mut violation = -s[simplex.perm[0]];
    violation = violation.max(s[simplex.perm[d - 1]] - 1.0);
    for w in simplex.perm.windows(2) {
        violation = violation.max(s[w[0]] - s[w[1]]);
    }
    if violation > tol {
        return Err(Error::NotInSimplex {
            violation: violation / nf,
        });
    }

    let mut lambda = Vec::with_capacity(d + 1);
    lambda.push((1.0 - s[simplex.perm[d - 1]]).max(0.0));
    for k in 1..d {
        lambda.push((s[simplex.perm[d - k]] - s[simplex.perm[d - 1 - k]]).max(0.0));
    }
    lambda.push(s[simplex.perm[0]].max(0.0));
    Ok(lambda)
}

/// The partition-of-unity weight `psi_v(x)`: the barycentric coordinate of
/// `x` with respect to `vertex` if `vertex` belongs to the simplex
/// containing `x`, else zero.
pub fn pou_weight(vertex: &[usize], x: &[f64], n: usize) -> Result<f64> {
    let id = locate_simplex(x, n)?;
    let lambda = barycentric(x, &id, n)?;
    for (k, v) in id.vertices().iter().enumerate() {
        if v.as_slice() == vertex {
            return Ok(lambda[k]);
        }
    }
    Ok(0.0)
}

/// Hölder smoothness bundle: exponent `zeta = t + sigma` with `t` the
/// Taylor order (largest integer strictly below `zeta`, so `sigma` lands in
/// `(0,1]`) and constant `b` bounding all derivatives up to order `t` and
/// the order-`t` Hölder seminorm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderSpec {
    pub zeta: f64,
    pub t: usize,
    pub b: f64,
}

impl HolderSpec {
    pub fn new(zeta: f64, b: f64) -> Result<Self> {
        if !(zeta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "smoothness must be positive, got {zeta}"
            )));
        }
        if !(b > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "Hölder constant must be positive, got {b}"
            )));
        }
        let t = (zeta.ceil() - 1.0).max(0.0) as usize;
        Ok(Self { zeta, t, b })
    }
}

/// Multi-indices with total degree at most `t`, in graded lexicographic
/// order (by degree, then lexicographically ascending).
pub fn graded_lex_indices(d: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; d];
    for degree in 0..=t {
        emit_degree(d, degree, 0, &mut current, &mut out);
    }
    out
}

fn emit_degree(
    d: usize,
    remaining: usize,
    pos: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if pos == d - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        current[pos] = 0;
        return;
    }
    for k in 0..=remaining {
        current[pos] = k;
        emit_degree(d, remaining - k, pos + 1, current, out);
    }
    current[pos] = 0;
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn multi_factorial(alpha: &[usize]) -> f64 {
    alpha.iter().map(|&a| factorial(a)).product()
}

/// Supplies partial derivatives `d^alpha f` at arbitrary points.
pub trait DerivativeOracle {
    fn partial(&self, alpha: &[usize], x: &[f64]) -> Result<f64>;
}

/// Analytic derivatives from a closure; returning `None` signals failure.
pub struct AnalyticOracle<F>(pub F);

impl<F> DerivativeOracle for AnalyticOracle<F>
where
    F: Fn(&[usize], &[f64]) -> Option<f64>,
{
    fn partial(&self, alpha: &[usize], x: &[f64]) -> Result<f64> {
        (self.0)(alpha, x).ok_or_else(|| Error::OracleFailure { vertex: x.to_vec() })
    }
}

/// Central finite differences applied recursively per coordinate. The
/// target function must be evaluable in a step-sized neighborhood of the
/// cube.
pub struct CentralDifferenceOracle<F> {
    f: F,
    step: f64,
}

impl<F: Fn(&[f64]) -> f64> CentralDifferenceOracle<F> {
    /// Step `max(1e-5, 1e-7 N)`.
    pub fn new(f: F, n: usize) -> Self {
        Self {
            f,
            step: (1e-7 * n as f64).max(1e-5),
        }
    }

    fn diff(&self, alpha: &[usize], x: &[f64]) -> f64 {
        match alpha.iter().position(|&a| a > 0) {
            None => (self.f)(x),
            Some(j) => {
                let mut lower = alpha.to_vec();
                lower[j] -= 1;
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += self.step;
                xm[j] -= self.step;
                (self.diff(&lower, &xp) - self.diff(&lower, &xm)) / (2.0 * self.step)
            }
        }
    }
}

impl<F: Fn(&[f64]) -> f64> DerivativeOracle for CentralDifferenceOracle<F> {
    fn partial(&self, alpha: &[usize], x: &[f64]) -> Result<f64> {
        let v = self.diff(alpha, x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::OracleFailure { vertex: x.to_vec() })
        }
    }
}

/// The assembled approximant: Taylor coefficients
/// `tau_{v,alpha} = d^alpha f(v) / alpha!` for every lattice vertex,
/// blended through the barycentric partition of unity.
#[derive(Debug, Clone)]
pub struct SimplicialApproximant {
    pub mesh: SimplicialMesh,
    pub spec: HolderSpec,
    /// `coeffs[vertex_index][k]` pairs with `multi_indices[k]`.
    pub coeffs: Vec<Vec<f64>>,
    pub multi_indices: Vec<Vec<usize>>,
}

/// Builds the approximant by sampling scaled derivatives at every lattice
/// vertex. Fails with the offending vertex if the oracle fails there.
pub fn build_approximant<O: DerivativeOracle>(
    oracle: &O,
    spec: HolderSpec,
    n: usize,
    d: usize,
) -> Result<SimplicialApproximant> {
    if d > MAX_DIM {
        return Err(Error::UnsupportedDimension { d, max: MAX_DIM });
    }
    let mesh = SimplicialMesh::new(n, d)?;
    let n_vertices = mesh.vertex_count()?;
    let multi_indices = graded_lex_indices(d, spec.t);
    match n_vertices.checked_mul(multi_indices.len()) {
        Some(t) if t <= 100_000_000 => {}
        _ => {
            return Err(Error::InvalidConfig(format!(
                "coefficient table too large: {n_vertices} vertices x {} indices",
                multi_indices.len()
            )))
        }
    }

    let mut coeffs = Vec::with_capacity(n_vertices);
    for idx in 0..n_vertices {
        let v = mesh.vertex_from_index(idx);
        let point = mesh.vertex_point(&v);
        let mut row = Vec::with_capacity(multi_indices.len());
        for alpha in &multi_indices {
            let deriv = oracle.partial(alpha, &point).map_err(|e| match e {
                Error::OracleFailure { .. } => Error::OracleFailure {
                    vertex: point.clone(),
                },
                other => other,
            })?;
            row.push(deriv / multi_factorial(alpha));
        }
        coeffs.push(row);
    }
    Ok(SimplicialApproximant {
        mesh,
        spec,
        coeffs,
        multi_indices,
    })
}

impl SimplicialApproximant {
    /// Evaluates `p(x)` from the `d+1` active vertices.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.mesh.d {
            return Err(Error::ShapeMismatch {
                expected: self.mesh.d,
                got: x.len(),
            });
        }
        let id = locate_simplex(x, self.mesh.n)?;
        let lambda = barycentric(x, &id, self.mesh.n)?;
        let mut acc = 0.0;
        for (k, v) in id.vertices().iter().enumerate() {
            if lambda[k] == 0.0 {
                continue;
            }
            acc += lambda[k] * self.taylor_at(v, x);
        }
        Ok(acc)
    }

    /// The local Taylor polynomial attached to lattice vertex `v`.
    fn taylor_at(&self, v: &[usize], x: &[f64]) -> f64 {
        let d = self.mesh.d;
        let t = self.spec.t;
        let nf = self.mesh.n as f64;
        // Power table: pow_table[l][j] = (x_l - v_l)^j.
        let mut pow_table = Vec::with_capacity(d);
        for l in 0..d {
            let h = x[l] - v[l] as f64 / nf;
            let mut col = Vec::with_capacity(t + 1);
            let mut p = 1.0;
            for _ in 0..=t {
                col.push(p);
                p *= h;
            }
            pow_table.push(col);
        }
        let row = &self.coeffs[self.mesh.vertex_index(v)];
        let mut acc = 0.0;
        for (k, alpha) in self.multi_indices.iter().enumerate() {
            let mut mono = row[k];
            if mono == 0.0 {
                continue;
            }
            for l in 0..d {
                if alpha[l] > 0 {
                    mono *= pow_table[l][alpha[l]];
                }
            }
            acc += mono;
        }
        acc
    }
}

/// The certified sup-error bound `(d+1) B d^t N^(-zeta)`.
pub fn error_certificate(spec: &HolderSpec, d: usize, n: usize) -> f64 {
    (d as f64 + 1.0) * spec.b * (d as f64).powi(spec.t as i32) * (n as f64).powf(-spec.zeta)
}

/// Advisory network complexity for approximating to accuracy `epsilon`:
/// the mesh resolution and product-gadget tolerance realizing the bound,
/// together with the orders of the required depth, size and weight bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeRecommendation {
    /// `N = ceil(eps^(-1/zeta) (2 (d+1) B d^t)^(1/zeta))`.
    pub mesh_resolution: usize,
    /// `delta = eps / (2 (t+1) (d+1) (d+t) B d^t)`.
    pub product_gadget_tolerance: f64,
    /// Order `log(1/eps)`.
    pub depth: usize,
    /// Order `eps^(-d/zeta) log(1/eps)`.
    pub size: usize,
    /// Order `eps^(-d/zeta)`.
    pub weight_bound: f64,
}

pub fn network_size_recommendation(
    epsilon: f64,
    spec: &HolderSpec,
    d: usize,
) -> Result<SizeRecommendation> {
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    let df = d as f64;
    let tf = spec.t as f64;
    let dt = df.powi(spec.t as i32);
    let mesh_constant = 2.0 * (df + 1.0) * spec.b * dt;
    let mesh_resolution =
        (epsilon.powf(-1.0 / spec.zeta) * mesh_constant.powf(1.0 / spec.zeta)).ceil() as usize;
    let product_gadget_tolerance =
        epsilon / (2.0 * (tf + 1.0) * (df + 1.0) * (df + tf) * spec.b * dt);
    let log_inv = (1.0 / epsilon).ln();
    let complexity = epsilon.powf(-df / spec.zeta);
    Ok(SizeRecommendation {
        mesh_resolution,
        product_gadget_tolerance,
        depth: log_inv.ceil().max(1.0) as usize,
        size: (complexity * log_inv).ceil().max(1.0) as usize,
        weight_bound: complexity,
    })
}

/// Export format: a header line `header: d N zeta t B`, then one line per
/// vertex with coefficients in graded-lex order.
pub fn save_approximant(path: &Path, approx: &SimplicialApproximant) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "header: {} {} {} {} {}",
        approx.mesh.d,
        approx.mesh.n,
        fmt(approx.spec.zeta),
        approx.spec.t,
        fmt(approx.spec.b)
    )?;
    for (idx, row) in approx.coeffs.iter().enumerate() {
        let vals: Vec<String> = row.iter().map(|v| fmt(*v)).collect();
        writeln!(w, "v{idx}: {}", vals.join(" "))?;
    }
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn load_approximant(path: &Path) -> Result<SimplicialApproximant> {
    let pathstr = path.display().to_string();
    let bad = |msg: String| Error::ModelFormat {
        path: pathstr.clone(),
        msg,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(Ok(l)) => l,
        Some(Err(e)) => return Err(Error::Io(e)),
        None => return Err(bad("empty file".into())),
    };
    let body = header
        .strip_prefix("header:")
        .ok_or_else(|| bad("missing header line".into()))?;
    let parts: Vec<&str> = body.split_whitespace().collect();
    if parts.len() != 5 {
        return Err(bad("header needs 5 fields: d N zeta t B".into()));
    }
    let d: usize = parts[0].parse().map_err(|_| bad("bad d".into()))?;
    let n: usize = parts[1].parse().map_err(|_| bad("bad N".into()))?;
    let zeta: f64 = parts[2].parse().map_err(|_| bad("bad zeta".into()))?;
    let t: usize = parts[3].parse().map_err(|_| bad("bad t".into()))?;
    let b: f64 = parts[4].parse().map_err(|_| bad("bad B".into()))?;
    let mesh = SimplicialMesh::new(n, d)?;
    let spec = HolderSpec { zeta, t, b };
    let multi_indices = graded_lex_indices(d, t);
    let n_vertices = mesh.vertex_count()?;
    let mut coeffs = Vec::with_capacity(n_vertices);
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let body = line
            .strip_prefix(&format!("v{idx}:"))
            .ok_or_else(|| bad(format!("expected `v{idx}:` line")))?;
        let row: Vec<f64> = body
            .split_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad coefficient".into()))?;
        if row.len() != multi_indices.len() {
            return Err(bad(format!(
                "vertex {idx}: expected {} coefficients, got {}",
                multi_indices.len(),
                row.len()
            )));
        }
        coeffs.push(row);
    }
    if coeffs.len() != n_vertices {
        return Err(bad(format!(
            "expected {n_vertices} vertex lines, got {}",
            coeffs.len()
        )));
    }
    Ok(SimplicialApproximant {
        mesh,
        spec,
        coeffs,
        multi_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn locate_sorts_offsets_ascending() {
        // d=2, N=2, x=(0.1, 0.4): base (0,0), offsets (0.2, 0.8),
        // coordinate 0 before coordinate 1.
        let id = locate_simplex(&[0.1, 0.4], 2).unwrap();
        assert_eq!(id.base, vec![0, 0]);
        assert_eq!(id.perm, vec![0, 1]);
        let id = locate_simplex(&[0.45, 0.1], 2).unwrap();
        assert_eq!(id.perm, vec![1, 0]);
    }

    #[test]
    fn locate_rejects_outside_points() {
        assert!(locate_simplex(&[1.2, 0.0], 4).is_err());
        assert!(locate_simplex(&[-0.1], 4).is_err());
    }

    #[test]
    fn lattice_vertex_is_contained_with_equalities() {
        let x = [0.5, 0.25, 0.75];
        let id = locate_simplex(&x, 4).unwrap();
        let lambda = barycentric(&x, &id, 4).unwrap();
        let sum: f64 = lambda.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        // A lattice vertex is itself a vertex of the located simplex with
        // weight 1.
        let hits: Vec<f64> = lambda.iter().copied().filter(|l| *l > 0.5).collect();
        assert_eq!(hits.len(), 1);
        assert!((hits[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn upper_boundary_clamps_into_top_cell() {
        let id = locate_simplex(&[1.0, 1.0], 3).unwrap();
        assert_eq!(id.base, vec![2, 2]);
        let lambda = barycentric(&[1.0, 1.0], &id, 3).unwrap();
        assert!((lambda.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn barycentric_at_vertices_is_indicator() {
        let id = SimplexId {
            base: vec![1, 0],
            perm: vec![0, 1],
        };
        let verts = id.vertices();
        for (k, v) in verts.iter().enumerate() {
            let x: Vec<f64> = v.iter().map(|&i| i as f64 / 2.0).collect();
            let lambda = barycentric(&x, &id, 2).unwrap();
            for (j, l) in lambda.iter().enumerate() {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((l - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn barycentric_at_centroid_is_uniform() {
        let d = 3;
        let id = locate_simplex(&[0.1, 0.2, 0.3], 1).unwrap();
        let verts = id.vertices();
        let mut centroid = vec![0.0; d];
        for v in &verts {
            for l in 0..d {
                centroid[l] += v[l] as f64 / (d + 1) as f64;
            }
        }
        let lambda = barycentric(&centroid, &id, 1).unwrap();
        for l in lambda {
            assert!((l - 1.0 / (d + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn membership_error_beyond_tolerance() {
        let id = SimplexId {
            base: vec![0, 0],
            perm: vec![0, 1],
        };
        // Offsets (0.9, 0.1) violate the ascending chain badly.
        match barycentric(&[0.45, 0.05], &id, 2) {
            Err(Error::NotInSimplex { violation }) => assert!(violation > 1e-3),
            other => panic!("expected membership error, got {other:?}"),
        }
    }

    #[test]
    fn reconstruction_from_barycentric() {
        let mut rng = rng::chacha(&[2024, 7]);
        for n in [1usize, 4, 16] {
            for _ in 0..200 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
                let id = locate_simplex(&x, n).unwrap();
                let lambda = barycentric(&x, &id, n).unwrap();
                let verts = id.vertices();
                for l in 0..3 {
                    let recon: f64 = verts
                        .iter()
                        .zip(&lambda)
                        .map(|(v, lam)| lam * v[l] as f64 / n as f64)
                        .sum();
                    assert!((recon - x[l]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pou_weight_zero_off_support() {
        // x deep inside the cell at the origin; a far-away vertex gets 0.
        let w = pou_weight(&[3, 3], &[0.05, 0.02], 4).unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn pou_sums_to_one_small() {
        let mesh = SimplicialMesh::new(2, 2).unwrap();
        let mut rng = rng::chacha(&[11, 3]);
        for _ in 0..100 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut sum = 0.0;
            let mut active = 0;
            for idx in 0..mesh.vertex_count().unwrap() {
                let v = mesh.vertex_from_index(idx);
                let w = pou_weight(&v, &x, 2).unwrap();
                if w != 0.0 {
                    active += 1;
                }
                sum += w;
            }
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(active <= 3);
        }
    }

    #[test]
    fn face_weights_agree_across_adjacent_simplices() {
        // x on the shared face between the two triangles of a cell (equal
        // offsets): both permutations give identical vertex weights.
        let n = 2;
        let x = [0.3, 0.3];
        let id_a = SimplexId {
            base: vec![0, 0],
            perm: vec![0, 1],
        };
        let id_b = SimplexId {
            base: vec![0, 0],
            perm: vec![1, 0],
        };
        let la = barycentric(&x, &id_a, n).unwrap();
        let lb = barycentric(&x, &id_b, n).unwrap();
        let va = id_a.vertices();
        let vb = id_b.vertices();
        for (k, v) in va.iter().enumerate() {
            let other = vb.iter().position(|u| u == v);
            let wb = other.map(|j| lb[j]).unwrap_or(0.0);
            assert!(
                (la[k] - wb).abs() < 1e-12,
                "vertex {v:?}: {} vs {}",
                la[k],
                wb
            );
        }
    }

    #[test]
    fn graded_lex_enumeration() {
        let mi = graded_lex_indices(2, 2);
        assert_eq!(
            mi,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![1, 0],
                vec![0, 2],
                vec![1, 1],
                vec![2, 0],
            ]
        );
        assert_eq!(graded_lex_indices(3, 1).len(), 4);
    }

    #[test]
    fn holder_taylor_order_convention() {
        assert_eq!(HolderSpec::new(0.5, 1.0).unwrap().t, 0);
        assert_eq!(HolderSpec::new(1.0, 1.0).unwrap().t, 0);
        assert_eq!(HolderSpec::new(1.5, 1.0).unwrap().t, 1);
        assert_eq!(HolderSpec::new(2.0, 1.0).unwrap().t, 1);
        assert_eq!(HolderSpec::new(3.0, 1.0).unwrap().t, 2);
    }

    #[test]
    fn constant_function_coefficients() {
        let spec = HolderSpec::new(2.0, 1.0).unwrap();
        let oracle = AnalyticOracle(|alpha: &[usize], _x: &[f64]| {
            let deg: usize = alpha.iter().sum();
            Some(if deg == 0 { 4.25 } else { 0.0 })
        });
        let approx = build_approximant(&oracle, spec, 3, 2).unwrap();
        for row in &approx.coeffs {
            assert_eq!(row[0], 4.25);
            for c in &row[1..] {
                assert_eq!(*c, 0.0);
            }
        }
    }

    #[test]
    fn linear_function_coefficients() {
        // f(x) = sum x_l with t = 1: tau_{v, e_l} = 1 at every vertex.
        let spec = HolderSpec::new(2.0, 1.0).unwrap();
        let oracle = AnalyticOracle(|alpha: &[usize], x: &[f64]| {
            let deg: usize = alpha.iter().sum();
            Some(match deg {
                0 => x.iter().sum(),
                1 => 1.0,
                _ => 0.0,
            })
        });
        let approx = build_approximant(&oracle, spec, 2, 3).unwrap();
        let e_indices: Vec<usize> = approx
            .multi_indices
            .iter()
            .enumerate()
            .filter(|(_, a)| a.iter().sum::<usize>() == 1)
            .map(|(k, _)| k)
            .collect();
        assert_eq!(e_indices.len(), 3);
        for row in &approx.coeffs {
            for &k in &e_indices {
                assert_eq!(row[k], 1.0);
            }
        }
    }

    #[test]
    fn sine_coefficients_match_analytic_derivatives() {
        // f(x) = sin(2 pi x), d=1, t=1, N=8: coefficients at the 9 vertices.
        let spec = HolderSpec::new(2.0, 40.0).unwrap();
        let tau = std::f64::consts::TAU;
        let oracle = AnalyticOracle(move |alpha: &[usize], x: &[f64]| {
            Some(match alpha[0] {
                0 => (tau * x[0]).sin(),
                1 => tau * (tau * x[0]).cos(),
                _ => return None,
            })
        });
        let approx = build_approximant(&oracle, spec, 8, 1).unwrap();
        assert_eq!(approx.coeffs.len(), 9);
        for (idx, row) in approx.coeffs.iter().enumerate() {
            let x = idx as f64 / 8.0;
            assert!((row[0] - (tau * x).sin()).abs() < 1e-15);
            assert!((row[1] - tau * (tau * x).cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn oracle_failure_names_the_vertex() {
        let spec = HolderSpec::new(1.0, 1.0).unwrap();
        let oracle = AnalyticOracle(|_alpha: &[usize], x: &[f64]| {
            if x[0] > 0.6 {
                None
            } else {
                Some(0.0)
            }
        });
        match build_approximant(&oracle, spec, 4, 1) {
            Err(Error::OracleFailure { vertex }) => assert!(vertex[0] > 0.6),
            other => panic!("expected oracle failure, got {other:?}"),
        }
    }

    #[test]
    fn finite_difference_oracle_matches_analytic() {
        let f = |x: &[f64]| (3.0 * x[0]).sin() * x[1];
        let oracle = CentralDifferenceOracle::new(f, 4);
        let x = [0.3, 0.7];
        let d10 = oracle.partial(&[1, 0], &x).unwrap();
        assert!((d10 - 3.0 * (0.9_f64).cos() * 0.7).abs() < 1e-6);
        let d11 = oracle.partial(&[1, 1], &x).unwrap();
        assert!((d11 - 3.0 * (0.9_f64).cos()).abs() < 1e-5);
    }

    #[test]
    fn certificate_formula() {
        let spec = HolderSpec::new(1.0, 1.0).unwrap();
        assert!((error_certificate(&spec, 3, 10) - 0.4).abs() < 1e-15);
        // Doubling N halves the zeta = 1 certificate.
        let c1 = error_certificate(&spec, 2, 8);
        let c2 = error_certificate(&spec, 2, 16);
        assert!((c1 / c2 - 2.0).abs() < 1e-12);
        // d = 1, t = 0: certificate 2 B / N^zeta, equal to the legacy
        // 2^d d^t constant at d = 1.
        let spec_b = HolderSpec::new(1.5, 3.0).unwrap();
        let cert = error_certificate(&spec_b, 1, 4);
        assert!((cert - 2.0 * 3.0 * (4.0_f64).powf(-1.5)).abs() < 1e-12);
    }

    #[test]
    fn recommendation_reference_case() {
        // eps = 0.1, d = 1, zeta = 1, B = 1, t = 0: N = ceil(10 * 4) = 40.
        let spec = HolderSpec::new(1.0, 1.0).unwrap();
        let rec = network_size_recommendation(0.1, &spec, 1).unwrap();
        assert_eq!(rec.mesh_resolution, 40);
        // delta = eps / (2 * 1 * 2 * 1 * 1 * 1) = 0.025.
        assert!((rec.product_gadget_tolerance - 0.025).abs() < 1e-12);
        assert!(network_size_recommendation(0.0, &spec, 1).is_err());
        assert!(network_size_recommendation(1.0, &spec, 1).is_err());
    }

    #[test]
    fn recommendation_scales_with_epsilon() {
        let spec = HolderSpec::new(2.0, 1.0).unwrap();
        let r1 = network_size_recommendation(0.1, &spec, 2).unwrap();
        let r2 = network_size_recommendation(0.05, &spec, 2).unwrap();
        let ratio = r2.mesh_resolution as f64 / r1.mesh_resolution as f64;
        // Halving eps multiplies N by about 2^(1/zeta) = sqrt(2).
        assert!((ratio - 2.0_f64.powf(0.5)).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn simplicial_constant_beats_tensor_product() {
        // At d=3, zeta=1, t=0 the legacy tensor-product constant 2^d d^t
        // inflates N by (2^d / (d+1))^(1/zeta) = 2.
        let spec = HolderSpec::new(1.0, 1.0).unwrap();
        let d = 3usize;
        let eps = 0.01;
        let rec = network_size_recommendation(eps, &spec, d).unwrap();
        let legacy_constant = 2.0 * (2.0_f64).powi(d as i32) * spec.b;
        let legacy_n = (eps.powf(-1.0) * legacy_constant).ceil();
        let ratio = legacy_n / rec.mesh_resolution as f64;
        assert!((ratio - 2.0).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn unsupported_dimension_is_rejected() {
        let spec = HolderSpec::new(1.0, 1.0).unwrap();
        let oracle = AnalyticOracle(|_: &[usize], _: &[f64]| Some(0.0));
        assert!(matches!(
            build_approximant(&oracle, spec, 1, 7),
            Err(Error::UnsupportedDimension { d: 7, max: 6 })
        ));
    }

    #[test]
    fn approximant_round_trips_through_disk() {
        let spec = HolderSpec::new(2.0, 7.0).unwrap();
        let oracle = AnalyticOracle(|alpha: &[usize], x: &[f64]| {
            let deg: usize = alpha.iter().sum();
            Some(match deg {
                0 => x[0] * x[1],
                1 => {
                    if alpha[0] == 1 {
                        x[1]
                    } else {
                        x[0]
                    }
                }
                _ => 0.0,
            })
        });
        let approx = build_approximant(&oracle, spec, 2, 2).unwrap();
        let dir = std::env::temp_dir().join("covshift_simplex_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("approx.txt");
        save_approximant(&path, &approx).unwrap();
        let back = load_approximant(&path).unwrap();
        for x in [[0.3, 0.4], [0.9, 0.1]] {
            assert_eq!(back.evaluate(&x).unwrap(), approx.evaluate(&x).unwrap());
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
