//! Concrete oriented base manifolds M ⊂ ℝⁿ: the unit sphere and immersed
//! charts, with tangent bases, orientation signs, and point sampling.
//!
//! Orientation conventions are fixed once here: spheres are oriented
//! outward-normal-first (a tangent basis B is positive when
//! `det [p | B] > 0` in ℝⁿ), immersed charts by chart coordinate order.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::{self, DenseMatrix};

/// Residual above which a vector is rejected as non-tangent
/// (user error rather than roundoff).
pub const TANGENCY_TOL: f64 = 1e-8;

/// Relative threshold below which a determinant counts as degenerate.
pub const DEPENDENCE_TOL: f64 = 1e-12;

const CHART_RANK_SAMPLES: usize = 256;
const CHART_FD_STEP: f64 = 1e-6;

/// A point of M: ambient coordinates plus, for charts, the preimage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasePoint {
    pub ambient: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<Vec<f64>>,
}

impl BasePoint {
    pub fn ambient(p: Vec<f64>) -> Self {
        BasePoint {
            ambient: p,
            chart: None,
        }
    }
}

/// k tangent vectors spanning T_pM, with a declared orientation.
#[derive(Debug, Clone)]
pub struct OrientedTangentBasis {
    pub point: BasePoint,
    pub vectors: Vec<Vec<f64>>,
    pub orientation: i8,
}

/// Parametrized piece of a submanifold: component expressions over a
/// chart box, with an optional analytic Jacobian table (n×k); central
/// differences with step 1e-6 otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub expressions: Vec<Expr>,
    pub domain: BoxDomain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jacobian: Option<Vec<Vec<Expr>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Geometry {
    Sphere {
        n: usize,
    },
    ImmersedChart {
        #[serde(flatten)]
        chart: Chart,
    },
}

/// Uniform point on S^{n-1}: a normalized standard Gaussian vector.
pub fn sphere_point(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    assert!(n >= 2, "sphere needs ambient dimension >= 2");
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl Chart {
    pub fn ambient_dim(&self) -> usize {
        self.expressions.len()
    }

    pub fn chart_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn map(&self, coords: &[f64]) -> Vec<f64> {
        self.expressions.iter().map(|e| e.eval(coords)).collect()
    }

    /// Jacobian columns ∂φ/∂θ_j as an n×k matrix.
    pub fn jacobian_at(&self, coords: &[f64]) -> DenseMatrix {
        let n = self.ambient_dim();
        let k = self.chart_dim();
        let mut out = DenseMatrix::zeros(n, k);
        match &self.jacobian {
            Some(table) => {
                for (i, row) in table.iter().enumerate() {
                    for (j, e) in row.iter().enumerate() {
                        out.set(i, j, e.eval(coords));
                    }
                }
            }
            None => {
                let mut plus = coords.to_vec();
                let mut minus = coords.to_vec();
                for j in 0..k {
                    plus[j] = coords[j] + CHART_FD_STEP;
                    minus[j] = coords[j] - CHART_FD_STEP;
                    let fp = self.map(&plus);
                    let fm = self.map(&minus);
                    for i in 0..n {
                        out.set(i, j, (fp[i] - fm[i]) / (2.0 * CHART_FD_STEP));
                    }
                    plus[j] = coords[j];
                    minus[j] = coords[j];
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let n = self.ambient_dim();
        let k = self.chart_dim();
        if n == 0 || k == 0 || k > n {
            return Err(Error::config(format!(
                "chart must map a k-box into R^n with 0 < k <= n, got k={k}, n={n}"
            )));
        }
        for e in &self.expressions {
            e.validate(k)?;
        }
        if let Some(table) = &self.jacobian {
            if table.len() != n || table.iter().any(|row| row.len() != k) {
                return Err(Error::config("jacobian table must be n rows of k expressions"));
            }
            for row in table {
                for e in row {
                    e.validate(k)?;
                }
            }
        }
        // full-rank spot check on a fixed deterministic sample
        let mut rng = crate::rng::stream(0x6e65636b, 0);
        for _ in 0..CHART_RANK_SAMPLES {
            let coords = self.domain.sample(&mut rng);
            let jac = self.jacobian_at(&coords);
            if !columns_full_rank(&jac) {
                return Err(Error::config(format!(
                    "chart jacobian rank-deficient at {coords:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Modified Gram-Schmidt rank test on the columns of an n×k matrix.
fn columns_full_rank(m: &DenseMatrix) -> bool {
    let n = m.rows();
    let k = m.cols();
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| (0..n).map(|i| m.get(i, j)).collect()).collect();
    for j in 0..k {
        let original = norm(&cols[j]);
        for i in 0..j {
            let q = cols[i].clone();
            let c = dot(&cols[j], &q);
            for (x, qv) in cols[j].iter_mut().zip(&q) {
                *x -= c * qv;
            }
        }
        let pivot = norm(&cols[j]);
        if pivot < TANGENCY_TOL * original.max(1.0) {
            return false;
        }
        for x in cols[j].iter_mut() {
            *x /= pivot;
        }
    }
    true
}

impl Geometry {
    pub fn ambient_dim(&self) -> usize {
        match self {
            Geometry::Sphere { n } => *n,
            Geometry::ImmersedChart { chart } => chart.ambient_dim(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Geometry::Sphere { n } => n - 1,
            Geometry::ImmersedChart { chart } => chart.chart_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Geometry::Sphere { n } => {
                if *n < 2 {
                    Err(Error::config("sphere requires ambient dimension >= 2"))
                } else {
                    Ok(())
                }
            }
            Geometry::ImmersedChart { chart } => chart.validate(),
        }
    }

    /// Distance-like residual of `p` from the manifold; `None` when the
    /// geometry cannot check membership (chart point without preimage).
    pub fn membership_residual(&self, p: &BasePoint) -> Option<f64> {
        match self {
            Geometry::Sphere { .. } => {
                Some((norm(&p.ambient) - 1.0).abs())
            }
            Geometry::ImmersedChart { chart } => p.chart.as_ref().map(|c| {
                let q = chart.map(c);
                q.iter()
                    .zip(&p.ambient)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            }),
        }
    }

    pub fn sample_point(&self, rng: &mut impl Rng) -> BasePoint {
        match self {
            Geometry::Sphere { n } => BasePoint::ambient(sphere_point(*n, rng)),
            Geometry::ImmersedChart { chart } => {
                let coords = chart.domain.sample(rng);
                BasePoint {
                    ambient: chart.map(&coords),
                    chart: Some(coords),
                }
            }
        }
    }

    /// Point of a chart geometry from chart coordinates.
    pub fn point_from_chart(&self, coords: &[f64]) -> Result<BasePoint> {
        match self {
            Geometry::Sphere { .. } => Err(Error::invalid(
                "sphere geometry has no chart coordinates; pass an ambient unit vector",
            )),
            Geometry::ImmersedChart { chart } => {
                if !chart.domain.contains(coords, 1e-12) {
                    return Err(Error::Domain("chart coordinates outside domain".into()));
                }
                Ok(BasePoint {
                    ambient: chart.map(coords),
                    chart: Some(coords.to_vec()),
                })
            }
        }
    }

    /// Reference tangent basis at `p`.
    ///
    /// Spheres get a euclidean-orthonormal basis of p^⊥, sign-fixed so
    /// that `(p, b_1, …, b_{n-1})` is positively oriented in ℝⁿ. Charts
    /// get the Jacobian columns at the preimage.
    pub fn tangent_basis(&self, p: &BasePoint) -> Result<OrientedTangentBasis> {
        match self {
            Geometry::Sphere { n } => {
                let n = *n;
                if p.ambient.len() != n {
                    return Err(Error::invalid("point dimension mismatch"));
                }
                if (norm(&p.ambient) - 1.0).abs() > TANGENCY_TOL {
                    return Err(Error::invalid("point is not on the unit sphere"));
                }
                let mut basis = householder_complement(&p.ambient);
                // fix the outward-normal-first orientation
                let mut cols = vec![p.ambient.clone()];
                cols.extend(basis.iter().cloned());
                let d = det_of_columns(&cols)?;
                if d.abs() < 0.5 {
                    return Err(Error::Degeneracy(
                        "degenerate orientation determinant for sphere basis".into(),
                    ));
                }
                if d < 0.0 {
                    for x in basis[0].iter_mut() {
                        *x = -*x;
                    }
                }
                Ok(OrientedTangentBasis {
                    point: p.clone(),
                    vectors: basis,
                    orientation: 1,
                })
            }
            Geometry::ImmersedChart { chart } => {
                let coords = p.chart.as_ref().ok_or_else(|| {
                    Error::invalid("chart geometry needs the point's chart coordinates")
                })?;
                let jac = chart.jacobian_at(coords);
                if !columns_full_rank(&jac) {
                    return Err(Error::Degeneracy(format!(
                        "chart jacobian rank-deficient at {coords:?}"
                    )));
                }
                let vectors: Vec<Vec<f64>> = (0..jac.cols())
                    .map(|j| (0..jac.rows()).map(|i| jac.get(i, j)).collect())
                    .collect();
                Ok(OrientedTangentBasis {
                    point: p.clone(),
                    vectors,
                    orientation: 1,
                })
            }
        }
    }

    /// Sign of `det` of the vectors' coordinates in the reference
    /// tangent basis: +1, -1, or 0 when dependent.
    pub fn orientation_sign(&self, p: &BasePoint, vectors: &[Vec<f64>]) -> Result<i8> {
        let basis = self.tangent_basis(p)?;
        let coords = tangent_coordinates(&basis, vectors)?;
        let d = linalg::det(&coords)?;
        let scale: f64 = (0..coords.rows())
            .map(|i| {
                (0..coords.cols())
                    .map(|j| coords.get(i, j).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .product();
        if d.abs() <= DEPENDENCE_TOL * scale.max(1e-300) {
            Ok(0)
        } else if d > 0.0 {
            Ok(1)
        } else {
            Ok(-1)
        }
    }
}

/// The sphere-based neck with f_j² = 1/a_j + s² and the induced fiber
/// metric: S^{n-1} × [-w, w] carrying g(s) + h(x).
///
/// q₀ is left unset; call `locate_q0` (or let the CLI do it) before any
/// calibration work.
pub fn jlt_neck(a: &[f64], fiber_window: f64) -> Result<crate::metric::NeckSpec> {
    if a.is_empty() || a.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::invalid("all a_j must be positive"));
    }
    if !(fiber_window > 0.0) {
        return Err(Error::invalid("fiber window must be positive"));
    }
    let n = a.len();
    crate::metric::NeckSpec::new(
        n,
        n - 1,
        1,
        a.iter()
            .map(|&aj| crate::metric::FactorProfile::Jlt { a: aj })
            .collect(),
        crate::metric::FiberMetric::JltInduced { a: a.to_vec() },
        BoxDomain::symmetric(fiber_window)?,
        Geometry::Sphere { n },
    )
}

/// Coordinates of tangent vectors in the reference basis (k×k, row per
/// vector), rejecting vectors whose projection residual exceeds
/// [`TANGENCY_TOL`].
pub fn tangent_coordinates(
    basis: &OrientedTangentBasis,
    vectors: &[Vec<f64>],
) -> Result<DenseMatrix> {
    let k = basis.vectors.len();
    if vectors.len() != k {
        return Err(Error::invalid(format!(
            "expected {k} vectors, got {}",
            vectors.len()
        )));
    }
    let n = basis.point.ambient.len();
    // normal equations in the basis span: (B^T B) c = B^T v
    let mut bt_b = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            bt_b.set(i, j, dot(&basis.vectors[i], &basis.vectors[j]));
        }
    }
    let l = linalg::cholesky(&bt_b)?;
    let mut coords = DenseMatrix::zeros(k, k);
    for (r, v) in vectors.iter().enumerate() {
        if v.len() != n {
            return Err(Error::invalid("vector dimension mismatch"));
        }
        let rhs: Vec<f64> = basis.vectors.iter().map(|b| dot(b, v)).collect();
        let y = linalg::solve_lower(&l, &rhs)?;
        // back substitution on L^T
        let mut c = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = y[i];
            for j in i + 1..k {
                s -= l.get(j, i) * c[j];
            }
            c[i] = s / l.get(i, i);
        }
        // projection residual measures tangency
        let mut recon = vec![0.0; n];
        for (ci, b) in c.iter().zip(&basis.vectors) {
            for (ri, bi) in recon.iter_mut().zip(b) {
                *ri += ci * bi;
            }
        }
        let resid: f64 = recon
            .iter()
            .zip(v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if resid > TANGENCY_TOL * norm(v).max(1.0) {
            return Err(Error::invalid(format!(
                "vector {r} is not tangent (projection residual {resid:e})"
            )));
        }
        for (j, cj) in c.iter().enumerate() {
            coords.set(r, j, *cj);
        }
    }
    Ok(coords)
}

/// Orthonormal basis of p^⊥ from the Householder reflection carrying e₁
/// to ±p; columns 2..n of the reflection.
fn householder_complement(p: &[f64]) -> Vec<Vec<f64>> {
    let n = p.len();
    let sign = if p[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut u = p.to_vec();
    u[0] += sign;
    let uu: f64 = dot(&u, &u);
    let beta = 2.0 / uu;
    (1..n)
        .map(|j| {
            let mut col = vec![0.0; n];
            col[j] = 1.0;
            for (c, ui) in col.iter_mut().zip(&u) {
                *c -= beta * u[j] * ui;
            }
            col
        })
        .collect()
}

fn det_of_columns(cols: &[Vec<f64>]) -> Result<f64> {
    let n = cols.len();
    let mut m = DenseMatrix::zeros(n, n);
    for (j, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            m.set(i, j, *v);
        }
    }
    linalg::det(&m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn sphere_point_is_reproducible_and_unit() {
        let p1 = sphere_point(2, &mut stream(7, 0));
        let p2 = sphere_point(2, &mut stream(7, 0));
        assert_eq!(p1, p2);
        let r: f64 = p1.iter().map(|x| x * x).sum::<f64>();
        assert!((r - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn sphere_samples_center_on_origin() {
        let mut rng = stream(11, 0);
        let mut mean = [0.0; 3];
        let samples = 10_000;
        for _ in 0..samples {
            let p = sphere_point(3, &mut rng);
            for (m, x) in mean.iter_mut().zip(&p) {
                *m += x / samples as f64;
            }
        }
        for m in mean {
            assert!(m.abs() < 0.05, "empirical mean component {m}");
        }
    }

    #[test]
    fn sphere_basis_at_pole() {
        let g = Geometry::Sphere { n: 2 };
        let b = g
            .tangent_basis(&BasePoint::ambient(vec![1.0, 0.0]))
            .unwrap();
        assert_eq!(b.vectors.len(), 1);
        assert!((b.vectors[0][0]).abs() < 1e-14);
        assert!((b.vectors[0][1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_basis_orthonormal_and_oriented() {
        let g = Geometry::Sphere { n: 4 };
        let mut rng = stream(3, 5);
        for _ in 0..50 {
            let p = g.sample_point(&mut rng);
            let b = g.tangent_basis(&p).unwrap();
            for (i, v) in b.vectors.iter().enumerate() {
                assert!(dot(v, &p.ambient).abs() < 1e-12, "tangency");
                for (j, w) in b.vectors.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot(v, w) - expect).abs() < 1e-12, "orthonormality");
                }
            }
            let mut cols = vec![p.ambient.clone()];
            cols.extend(b.vectors.iter().cloned());
            assert!(det_of_columns(&cols).unwrap() > 0.0, "orientation");
        }
    }

    #[test]
    fn sphere_basis_z_pole_spans_plane() {
        let g = Geometry::Sphere { n: 3 };
        let b = g
            .tangent_basis(&BasePoint::ambient(vec![0.0, 0.0, 1.0]))
            .unwrap();
        for v in &b.vectors {
            assert!(v[2].abs() < 1e-12);
        }
    }

    #[test]
    fn orientation_sign_basics() {
        let g = Geometry::Sphere { n: 3 };
        let p = BasePoint::ambient(vec![0.6, 0.8, 0.0]);
        let b = g.tangent_basis(&p).unwrap();
        assert_eq!(g.orientation_sign(&p, &b.vectors).unwrap(), 1);
        let swapped = vec![b.vectors[1].clone(), b.vectors[0].clone()];
        assert_eq!(g.orientation_sign(&p, &swapped).unwrap(), -1);
        let dependent = vec![b.vectors[0].clone(), b.vectors[0].clone()];
        assert_eq!(g.orientation_sign(&p, &dependent).unwrap(), 0);
    }

    #[test]
    fn orientation_sign_rejects_non_tangent() {
        let g = Geometry::Sphere { n: 3 };
        let p = BasePoint::ambient(vec![1.0, 0.0, 0.0]);
        let bad = vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert!(matches!(
            g.orientation_sign(&p, &bad),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn outward_normal_rule_matches_det_cross_check() {
        let g = Geometry::Sphere { n: 3 };
        let mut rng = stream(9, 2);
        for _ in 0..20 {
            let p = g.sample_point(&mut rng);
            let b = g.tangent_basis(&p).unwrap();
            let mut cols = vec![p.ambient.clone()];
            cols.extend(b.vectors.iter().cloned());
            let d = det_of_columns(&cols).unwrap();
            assert_eq!(d > 0.0, g.orientation_sign(&p, &b.vectors).unwrap() == 1);
        }
    }

    fn circle_chart() -> Geometry {
        Geometry::ImmersedChart {
            chart: Chart {
                expressions: vec![Expr::cos(0, 1.0, 1.0), Expr::sin(0, 1.0, 1.0)],
                domain: BoxDomain::new(vec![-3.2], vec![3.2]).unwrap(),
                jacobian: Some(vec![
                    vec![Expr::sin(0, 1.0, -1.0)],
                    vec![Expr::cos(0, 1.0, 1.0)],
                ]),
            },
        }
    }

    #[test]
    fn circle_chart_basis_at_zero() {
        let g = circle_chart();
        g.validate().unwrap();
        let p = g.point_from_chart(&[0.0]).unwrap();
        let b = g.tangent_basis(&p).unwrap();
        assert!((b.vectors[0][0]).abs() < 1e-12);
        assert!((b.vectors[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn circle_chart_fd_matches_analytic() {
        let mut no_jac = circle_chart();
        if let Geometry::ImmersedChart { chart } = &mut no_jac {
            chart.jacobian = None;
        }
        let with_jac = circle_chart();
        for th in [-1.3, 0.2, 2.4] {
            let p_fd = no_jac.point_from_chart(&[th]).unwrap();
            let p_an = with_jac.point_from_chart(&[th]).unwrap();
            let b_fd = no_jac.tangent_basis(&p_fd).unwrap();
            let b_an = with_jac.tangent_basis(&p_an).unwrap();
            for (x, y) in b_fd.vectors[0].iter().zip(&b_an.vectors[0]) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn jlt_neck_assembly() {
        let spec = jlt_neck(&[1.0, 1.0], 3.0).unwrap();
        assert_eq!(spec.ambient_dim(), 2);
        assert_eq!(spec.base_dim(), 1);
        assert_eq!(spec.fiber_dim(), 1);
        assert!((spec.product_factor(&[0.0]).unwrap() - 1.0).abs() < 1e-15);

        let spec = jlt_neck(&[1.0, 2.0, 3.0], 3.0).unwrap();
        let (q0, cw) = spec.find_q0(33, 1e-9).unwrap();
        assert!(q0[0].abs() < 1e-8);
        assert!(cw);

        // all a_j = 1: g(0) is the round metric
        let spec = jlt_neck(&[1.0; 4], 3.0).unwrap();
        let x = vec![0.3, -1.2, 0.5, 2.0];
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        let g = spec.eval_g(&[0.0], &x, &x).unwrap();
        assert!((g - norm2).abs() < 1e-14);

        assert!(jlt_neck(&[1.0, -1.0], 3.0).is_err());
        assert!(jlt_neck(&[1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn jlt_neck_config_round_trip_bit_identical() {
        let spec = jlt_neck(&[1.0, 2.0, 3.0], 3.0).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: crate::metric::NeckSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn cusp_chart_passes_construction_but_degenerates_at_origin() {
        // (t^2, t^3) has a rank-0 jacobian exactly at t = 0
        let g = Geometry::ImmersedChart {
            chart: Chart {
                expressions: vec![Expr::pow(0, 2, 1.0), Expr::pow(0, 3, 1.0)],
                domain: BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(),
                jacobian: None,
            },
        };
        g.validate().unwrap();
        let p = g.point_from_chart(&[0.0]).unwrap();
        assert!(matches!(g.tangent_basis(&p), Err(Error::Degeneracy(_))));
    }
}
