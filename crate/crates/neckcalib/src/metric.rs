//! Metric data for product manifolds M×N whose base metric carries
//! fiber-dependent diagonal conformal factors:
//!
//! ```text
//! g(q) = (Σ_j f_j²(q) dx_j²)|_M,      h(p) on the fiber N,
//! ```
//!
//! together with the search for the fiber point q₀ minimizing the factor
//! product Π_j f_j(q) — the point over which the candidate calibration
//! pulls back the base volume form.

use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::Geometry;
use crate::linalg::{self, DenseMatrix};

/// Grid resolution used when q₀ has to be located with default settings.
pub const DEFAULT_Q0_GRID: usize = 129;
/// Refinement tolerance used when q₀ has to be located with default settings.
pub const DEFAULT_Q0_TOL: f64 = 1e-10;

const POSITIVITY_SAMPLES: usize = 1024;
/// Values within this relative band of the grid minimum count as tied.
const TIE_TOL: f64 = 1e-12;

/// One positive factor-squared function f² on the fiber.
///
/// All kinds are radial: they depend on the fiber point through |q|²
/// (for one-dimensional fibers, through s²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileConfig", into = "ProfileConfig")]
pub enum FactorProfile {
    /// f ≡ c (so f² ≡ c²).
    Constant { c: f64 },
    /// f²(q) = c₀ + c₂|q|² + c₄|q|⁴ + …
    EvenPolynomial { coeffs: Vec<f64> },
    /// f²(q) = 1/a + |q|²
    Jlt { a: f64 },
    /// f²(q) = 1/(1/a + |q|²)
    ReciprocalJlt { a: f64 },
}

#[derive(Serialize, Deserialize)]
struct ProfileConfig {
    kind: String,
    params: Vec<f64>,
}

impl TryFrom<ProfileConfig> for FactorProfile {
    type Error = Error;
    fn try_from(c: ProfileConfig) -> Result<Self> {
        match c.kind.as_str() {
            "constant" => match c.params.as_slice() {
                [v] if *v > 0.0 => Ok(FactorProfile::Constant { c: *v }),
                _ => Err(Error::config("constant profile needs one positive parameter")),
            },
            "even-polynomial" => {
                if c.params.is_empty() {
                    Err(Error::config("even-polynomial profile needs coefficients"))
                } else {
                    Ok(FactorProfile::EvenPolynomial { coeffs: c.params })
                }
            }
            "jlt" => match c.params.as_slice() {
                [a] if *a > 0.0 => Ok(FactorProfile::Jlt { a: *a }),
                _ => Err(Error::config("jlt profile needs one positive parameter")),
            },
            "reciprocal-jlt" => match c.params.as_slice() {
                [a] if *a > 0.0 => Ok(FactorProfile::ReciprocalJlt { a: *a }),
                _ => Err(Error::config("reciprocal-jlt profile needs one positive parameter")),
            },
            other => Err(Error::config(format!("unknown profile kind '{other}'"))),
        }
    }
}

impl From<FactorProfile> for ProfileConfig {
    fn from(p: FactorProfile) -> ProfileConfig {
        match p {
            FactorProfile::Constant { c } => ProfileConfig {
                kind: "constant".into(),
                params: vec![c],
            },
            FactorProfile::EvenPolynomial { coeffs } => ProfileConfig {
                kind: "even-polynomial".into(),
                params: coeffs,
            },
            FactorProfile::Jlt { a } => ProfileConfig {
                kind: "jlt".into(),
                params: vec![a],
            },
            FactorProfile::ReciprocalJlt { a } => ProfileConfig {
                kind: "reciprocal-jlt".into(),
                params: vec![a],
            },
        }
    }
}

impl FactorProfile {
    /// f²(q).
    pub fn eval_sq(&self, q: &[f64]) -> f64 {
        let r2: f64 = q.iter().map(|x| x * x).sum();
        match self {
            FactorProfile::Constant { c } => c * c,
            FactorProfile::EvenPolynomial { coeffs } => {
                // Horner in |q|²
                coeffs.iter().rev().fold(0.0, |acc, c| acc * r2 + c)
            }
            FactorProfile::Jlt { a } => 1.0 / a + r2,
            FactorProfile::ReciprocalJlt { a } => 1.0 / (1.0 / a + r2),
        }
    }

    /// f(q) = sqrt(f²(q)).
    pub fn eval(&self, q: &[f64]) -> f64 {
        self.eval_sq(q).sqrt()
    }
}

/// Fiber metric h, possibly depending on the base point (and, for the
/// induced family, on the fiber point as well).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FiberMetricConfig", into = "FiberMetricConfig")]
pub enum FiberMetric {
    /// h = identity.
    Euclidean,
    /// t = 1 with ds² coefficient
    /// `(1/a_1+s²)⋯(1/a_n+s²) · Σ_j p_j²/(1/a_j+s²)`.
    JltInduced { a: Vec<f64> },
    /// t×t expression table over the concatenated variables (p, q);
    /// must evaluate symmetric positive definite wherever queried.
    Explicit { entries: Vec<Vec<Expr>> },
}

#[derive(Serialize, Deserialize)]
struct FiberMetricConfig {
    kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entries: Option<Vec<Vec<Expr>>>,
}

impl TryFrom<FiberMetricConfig> for FiberMetric {
    type Error = Error;
    fn try_from(c: FiberMetricConfig) -> Result<Self> {
        match c.kind.as_str() {
            "euclidean" => Ok(FiberMetric::Euclidean),
            "jlt-induced" => {
                if c.params.is_empty() || c.params.iter().any(|&a| !(a > 0.0)) {
                    Err(Error::config("jlt-induced metric needs positive parameters a_j"))
                } else {
                    Ok(FiberMetric::JltInduced { a: c.params })
                }
            }
            "explicit" => match c.entries {
                Some(entries) if !entries.is_empty() => Ok(FiberMetric::Explicit { entries }),
                _ => Err(Error::config("explicit metric needs an entries table")),
            },
            other => Err(Error::config(format!("unknown fiber metric kind '{other}'"))),
        }
    }
}

impl From<FiberMetric> for FiberMetricConfig {
    fn from(m: FiberMetric) -> FiberMetricConfig {
        match m {
            FiberMetric::Euclidean => FiberMetricConfig {
                kind: "euclidean".into(),
                params: vec![],
                entries: None,
            },
            FiberMetric::JltInduced { a } => FiberMetricConfig {
                kind: "jlt-induced".into(),
                params: a,
                entries: None,
            },
            FiberMetric::Explicit { entries } => FiberMetricConfig {
                kind: "explicit".into(),
                params: vec![],
                entries: Some(entries),
            },
        }
    }
}

/// The fiber point minimizing the factor product, plus whether every
/// factor is individually minimized there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Q0Info {
    pub point: Vec<f64>,
    pub coordinatewise_min: bool,
}

/// Complete description of (M×N, g(q)+h(p)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NeckSpecConfig", into = "NeckSpecConfig")]
pub struct NeckSpec {
    n: usize,
    k: usize,
    t: usize,
    profiles: Vec<FactorProfile>,
    fiber_metric: FiberMetric,
    fiber_domain: BoxDomain,
    geometry: Geometry,
    q0: Option<Q0Info>,
}

#[derive(Serialize, Deserialize)]
struct NeckSpecConfig {
    n: usize,
    k: usize,
    t: usize,
    profiles: Vec<FactorProfile>,
    fiber_metric: FiberMetric,
    fiber_domain: BoxDomain,
    geometry: Geometry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q0: Option<Vec<f64>>,
}

impl TryFrom<NeckSpecConfig> for NeckSpec {
    type Error = Error;
    fn try_from(c: NeckSpecConfig) -> Result<Self> {
        let mut spec = NeckSpec::new(
            c.n,
            c.k,
            c.t,
            c.profiles,
            c.fiber_metric,
            c.fiber_domain,
            c.geometry,
        )?;
        if let Some(q0) = c.q0 {
            spec.set_q0(q0)?;
        }
        Ok(spec)
    }
}

impl From<NeckSpec> for NeckSpecConfig {
    fn from(s: NeckSpec) -> NeckSpecConfig {
        NeckSpecConfig {
            n: s.n,
            k: s.k,
            t: s.t,
            profiles: s.profiles,
            fiber_metric: s.fiber_metric,
            fiber_domain: s.fiber_domain,
            geometry: s.geometry,
            q0: s.q0.map(|i| i.point),
        }
    }
}

impl NeckSpec {
    pub fn new(
        n: usize,
        k: usize,
        t: usize,
        profiles: Vec<FactorProfile>,
        fiber_metric: FiberMetric,
        fiber_domain: BoxDomain,
        geometry: Geometry,
    ) -> Result<Self> {
        if k > n {
            return Err(Error::config(format!("base dimension k={k} exceeds ambient n={n}")));
        }
        if t < 1 {
            return Err(Error::config("fiber dimension t must be >= 1"));
        }
        if fiber_domain.dim() != t {
            return Err(Error::config("fiber_domain dimension must equal t"));
        }
        if profiles.len() != n {
            return Err(Error::config(format!(
                "need {n} profiles, got {}",
                profiles.len()
            )));
        }
        geometry.validate()?;
        if geometry.ambient_dim() != n {
            return Err(Error::config("geometry ambient dimension must equal n"));
        }
        if geometry.dim() != k {
            return Err(Error::config("geometry dimension must equal k"));
        }
        match &fiber_metric {
            FiberMetric::JltInduced { a } => {
                if t != 1 {
                    return Err(Error::config("jlt-induced fiber metric requires t = 1"));
                }
                if a.len() != n {
                    return Err(Error::config("jlt-induced metric needs n parameters"));
                }
            }
            FiberMetric::Explicit { entries } => {
                if entries.len() != t || entries.iter().any(|row| row.len() != t) {
                    return Err(Error::config("explicit metric table must be t×t"));
                }
                for row in entries {
                    for e in row {
                        e.validate(n + t)?;
                    }
                }
            }
            FiberMetric::Euclidean => {}
        }
        let spec = NeckSpec {
            n,
            k,
            t,
            profiles,
            fiber_metric,
            fiber_domain,
            geometry,
            q0: None,
        };
        spec.check_profile_positivity()?;
        Ok(spec)
    }

    /// Dense positivity scan of every profile over the fiber domain:
    /// 1024 points per axis along axis lines through the center, plus the
    /// box corners and the main diagonal for multi-dimensional fibers.
    fn check_profile_positivity(&self) -> Result<()> {
        let mut probes: Vec<Vec<f64>> = Vec::new();
        let center = self.fiber_domain.center();
        for axis in 0..self.t {
            for v in self.fiber_domain.axis_grid(axis, POSITIVITY_SAMPLES) {
                let mut q = center.clone();
                q[axis] = v;
                probes.push(q);
            }
        }
        if self.t > 1 {
            for i in 0..POSITIVITY_SAMPLES {
                let s = i as f64 / (POSITIVITY_SAMPLES - 1) as f64;
                let q: Vec<f64> = self
                    .fiber_domain
                    .lo()
                    .iter()
                    .zip(self.fiber_domain.hi())
                    .map(|(l, h)| l + s * (h - l))
                    .collect();
                probes.push(q);
            }
            if self.t <= 12 {
                for mask in 0..(1u32 << self.t) {
                    let q: Vec<f64> = (0..self.t)
                        .map(|i| {
                            if mask & (1 << i) != 0 {
                                self.fiber_domain.hi()[i]
                            } else {
                                self.fiber_domain.lo()[i]
                            }
                        })
                        .collect();
                    probes.push(q);
                }
            }
        }
        for (j, profile) in self.profiles.iter().enumerate() {
            for q in &probes {
                let v = profile.eval_sq(q);
                if !v.is_finite() {
                    return Err(Error::config(format!(
                        "profile {j} evaluates non-finite at {q:?}"
                    )));
                }
                if v <= 0.0 {
                    return Err(Error::config(format!(
                        "profile {j} is not positive at {q:?} (f² = {v})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn base_dim(&self) -> usize {
        self.k
    }

    pub fn fiber_dim(&self) -> usize {
        self.t
    }

    pub fn profiles(&self) -> &[FactorProfile] {
        &self.profiles
    }

    pub fn fiber_metric(&self) -> &FiberMetric {
        &self.fiber_metric
    }

    pub fn fiber_domain(&self) -> &BoxDomain {
        &self.fiber_domain
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn q0(&self) -> Option<&Q0Info> {
        self.q0.as_ref()
    }

    pub fn require_q0(&self) -> Result<&Q0Info> {
        self.q0
            .as_ref()
            .ok_or_else(|| Error::State("q0 not set; run find_q0 first".into()))
    }

    /// Stable short identifier derived from the serialized spec.
    pub fn spec_id(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let mut hash: u64 = 0xcbf29ce484222325;
        for b in json.as_bytes() {
            hash ^= *b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        let geom = match &self.geometry {
            Geometry::Sphere { .. } => "sphere",
            Geometry::ImmersedChart { .. } => "chart",
        };
        format!("{}-n{}k{}t{}-{:08x}", geom, self.n, self.k, self.t, hash as u32)
    }

    fn check_fiber_point(&self, q: &[f64]) -> Result<()> {
        if !self.fiber_domain.contains(q, 1e-12) {
            return Err(Error::Domain(format!("fiber point {q:?} outside fiber_domain")));
        }
        Ok(())
    }

    /// The diagonal weights w_l = f_l²(q).
    pub fn weights(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check_fiber_point(q)?;
        let mut w = Vec::with_capacity(self.n);
        for (j, p) in self.profiles.iter().enumerate() {
            let v = p.eval_sq(q);
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::SpecViolation(format!(
                    "profile {j} produced non-positive or non-finite f² = {v} at {q:?}"
                )));
            }
            w.push(v);
        }
        Ok(w)
    }

    /// g(q)(X, Y) = Σ_l f_l²(q) X_l Y_l.
    pub fn eval_g(&self, q: &[f64], x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.n || y.len() != self.n {
            return Err(Error::invalid("vectors must have ambient dimension n"));
        }
        let w = self.weights(q)?;
        Ok(w.iter()
            .zip(x.iter().zip(y))
            .map(|(wl, (xl, yl))| wl * xl * yl)
            .sum())
    }

    /// The t×t fiber matrix h at (p, q).
    pub fn fiber_matrix(&self, p: &[f64], q: &[f64]) -> Result<DenseMatrix> {
        self.check_fiber_point(q)?;
        if p.len() != self.n {
            return Err(Error::invalid("base point must have ambient dimension n"));
        }
        match &self.fiber_metric {
            FiberMetric::Euclidean => Ok(DenseMatrix::identity(self.t)),
            FiberMetric::JltInduced { a } => {
                let s2: f64 = q.iter().map(|x| x * x).sum();
                let mut prod = 1.0;
                let mut sum = 0.0;
                for (aj, pj) in a.iter().zip(p) {
                    let factor = 1.0 / aj + s2;
                    prod *= factor;
                    sum += pj * pj / factor;
                }
                let coeff = prod * sum;
                if !(coeff > 0.0) || !coeff.is_finite() {
                    return Err(Error::SpecViolation(format!(
                        "jlt-induced fiber coefficient {coeff} not positive at p={p:?}, q={q:?}"
                    )));
                }
                DenseMatrix::new(1, 1, vec![coeff])
            }
            FiberMetric::Explicit { entries } => {
                let vars: Vec<f64> = p.iter().chain(q.iter()).copied().collect();
                let mut m = DenseMatrix::zeros(self.t, self.t);
                let mut scale: f64 = 0.0;
                for (i, row) in entries.iter().enumerate() {
                    for (j, e) in row.iter().enumerate() {
                        let v = e.eval(&vars);
                        if !v.is_finite() {
                            return Err(Error::SpecViolation(
                                "explicit fiber metric evaluates non-finite".into(),
                            ));
                        }
                        scale = scale.max(v.abs());
                        m.set(i, j, v);
                    }
                }
                for i in 0..self.t {
                    for j in i + 1..self.t {
                        if (m.get(i, j) - m.get(j, i)).abs() > 1e-10 * scale.max(1.0) {
                            return Err(Error::SpecViolation(
                                "explicit fiber metric is not symmetric".into(),
                            ));
                        }
                        let v = 0.5 * (m.get(i, j) + m.get(j, i));
                        m.set(i, j, v);
                        m.set(j, i, v);
                    }
                }
                if linalg::cholesky(&m).is_err() {
                    return Err(Error::SpecViolation(format!(
                        "explicit fiber metric is not positive definite at p={p:?}, q={q:?}"
                    )));
                }
                Ok(m)
            }
        }
    }

    /// h(p)(U, W), with the fiber point supplied alongside because the
    /// induced family's ds² coefficient depends on it.
    pub fn eval_h(&self, p: &[f64], q: &[f64], u: &[f64], w: &[f64]) -> Result<f64> {
        if u.len() != self.t || w.len() != self.t {
            return Err(Error::invalid("fiber vectors must have dimension t"));
        }
        if let Some(resid) = self.geometry.membership_residual(&crate::geometry::BasePoint::ambient(p.to_vec())) {
            if resid > crate::geometry::TANGENCY_TOL {
                return Err(Error::invalid(format!(
                    "base point is not on M (residual {resid:e})"
                )));
            }
        }
        let h = self.fiber_matrix(p, q)?;
        let mut acc = 0.0;
        for i in 0..self.t {
            for j in 0..self.t {
                acc += u[i] * h.get(i, j) * w[j];
            }
        }
        Ok(acc)
    }

    /// Π_j f_j(q).
    pub fn product_factor(&self, q: &[f64]) -> Result<f64> {
        let w = self.weights(q)?;
        Ok(w.iter().map(|x| x.sqrt()).product())
    }

    /// Signed base volume: `orientation_sign · sqrt(det Gram_{g(q)})`.
    ///
    /// Returns zero for dependent vectors; a Gram determinant negative
    /// beyond roundoff is a degeneracy error.
    pub fn base_volume_form(
        &self,
        q: &[f64],
        xs: &[Vec<f64>],
        orientation_sign: i8,
    ) -> Result<f64> {
        if xs.len() != self.k {
            return Err(Error::invalid(format!(
                "need k = {} vectors, got {}",
                self.k,
                xs.len()
            )));
        }
        let w = self.weights(q)?;
        let mut gram = DenseMatrix::zeros(self.k, self.k);
        for i in 0..self.k {
            for j in i..self.k {
                let mut s = 0.0;
                for l in 0..self.n {
                    s += w[l] * xs[i][l] * xs[j][l];
                }
                gram.set(i, j, s);
                gram.set(j, i, s);
            }
        }
        let d = linalg::det(&gram)?;
        let scale: f64 = (0..self.k).map(|i| gram.get(i, i)).product::<f64>().max(1.0);
        if d < -1e-12 * scale {
            return Err(Error::Degeneracy(format!(
                "base Gram determinant {d:e} negative beyond tolerance"
            )));
        }
        Ok(orientation_sign as f64 * d.max(0.0).sqrt())
    }

    /// Grid search plus compass refinement for the minimizer of
    /// Π_j f_j over the fiber domain.
    ///
    /// Grid ties (within 1e-12 relative) break toward the point closest
    /// to the domain center, then lexicographically. The flag reports
    /// whether every individual factor is also minimized at q₀, within
    /// `refine_tol` in value relative to its own refined minimum — the
    /// value-gap reading keeps non-unique minimizers (constant profiles)
    /// honest.
    pub fn find_q0(&self, grid_per_axis: usize, refine_tol: f64) -> Result<(Vec<f64>, bool)> {
        if grid_per_axis < 3 {
            return Err(Error::invalid("grid_per_axis must be >= 3"));
        }
        if !(refine_tol > 0.0) {
            return Err(Error::invalid("refine_tol must be positive"));
        }
        let product = |q: &[f64]| -> Result<f64> {
            let v = self.product_factor(q)?;
            if !v.is_finite() {
                return Err(Error::SpecViolation(format!(
                    "factor product non-finite at {q:?}"
                )));
            }
            Ok(v)
        };
        let (q0, _) = self.minimize(grid_per_axis, refine_tol, &product)?;
        let mut coordinatewise = true;
        for profile in &self.profiles {
            let f = |q: &[f64]| -> Result<f64> {
                let v = profile.eval(q);
                if !v.is_finite() {
                    return Err(Error::SpecViolation("factor non-finite".into()));
                }
                Ok(v)
            };
            let (_, fmin) = self.minimize(grid_per_axis, refine_tol, &f)?;
            let at_q0 = f(&q0)?;
            if at_q0 - fmin > refine_tol * fmin.abs().max(1.0) {
                coordinatewise = false;
                break;
            }
        }
        Ok((q0, coordinatewise))
    }

    fn minimize(
        &self,
        grid_per_axis: usize,
        refine_tol: f64,
        f: &dyn Fn(&[f64]) -> Result<f64>,
    ) -> Result<(Vec<f64>, f64)> {
        let t = self.t;
        let center = self.fiber_domain.center();
        let grids: Vec<Vec<f64>> = (0..t)
            .map(|axis| self.fiber_domain.axis_grid(axis, grid_per_axis))
            .collect();
        let mut best_val = f64::NAN;
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        let mut idx = vec![0usize; t];
        loop {
            let q: Vec<f64> = idx.iter().enumerate().map(|(a, &i)| grids[a][i]).collect();
            let v = f(&q)?;
            if candidates.is_empty() || v < best_val - TIE_TOL * best_val.abs().max(1.0) {
                best_val = v;
                candidates.clear();
                candidates.push(q);
            } else if (v - best_val).abs() <= TIE_TOL * best_val.abs().max(1.0) {
                candidates.push(q);
            }
            // odometer increment
            let mut axis = 0;
            loop {
                if axis == t {
                    break;
                }
                idx[axis] += 1;
                if idx[axis] < grid_per_axis {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
            if axis == t {
                break;
            }
        }
        let dist2 = |q: &[f64]| -> f64 {
            q.iter()
                .zip(&center)
                .map(|(x, c)| (x - c) * (x - c))
                .sum()
        };
        candidates.sort_by(|a, b| {
            dist2(a)
                .partial_cmp(&dist2(b))
                .unwrap()
                .then_with(|| a.partial_cmp(b).unwrap())
        });
        let start = candidates.into_iter().next().expect("grid non-empty");
        let (q, val) = self.compass_refine(start, best_val, refine_tol, f)?;
        self.parabolic_polish(q, val, f)
    }

    /// Coordinate pattern search with halving steps; terminates when all
    /// step sizes drop below `refine_tol`. Moves must clear a small
    /// relative threshold so ulp-level noise on flat objectives cannot
    /// drag the point away from the tie-broken start.
    fn compass_refine(
        &self,
        mut q: Vec<f64>,
        mut val: f64,
        refine_tol: f64,
        f: &dyn Fn(&[f64]) -> Result<f64>,
    ) -> Result<(Vec<f64>, f64)> {
        let t = self.t;
        let mut steps: Vec<f64> = (0..t)
            .map(|a| (self.fiber_domain.hi()[a] - self.fiber_domain.lo()[a]) / 8.0)
            .collect();
        loop {
            let mut improved = false;
            for axis in 0..t {
                if steps[axis] < refine_tol {
                    continue;
                }
                for dir in [-1.0, 1.0] {
                    let mut trial = q.clone();
                    trial[axis] += dir * steps[axis];
                    self.fiber_domain.clamp(&mut trial);
                    let v = f(&trial)?;
                    if v < val - 1e-14 * val.abs().max(1.0) {
                        val = v;
                        q = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                let mut all_done = true;
                for s in steps.iter_mut() {
                    *s *= 0.5;
                    if *s >= refine_tol {
                        all_done = false;
                    }
                }
                if all_done {
                    break;
                }
            }
        }
        Ok((q, val))
    }

    /// Per-axis parabolic vertex steps around the compass result. The
    /// noise-limited accuracy of value comparisons is ~sqrt(ε); fitting
    /// the local parabola recovers minimizer positions down to ~ε/h.
    /// Axes with curvature below the noise floor (flat or tied
    /// objectives) and boundary minima are left untouched.
    fn parabolic_polish(
        &self,
        mut q: Vec<f64>,
        mut val: f64,
        f: &dyn Fn(&[f64]) -> Result<f64>,
    ) -> Result<(Vec<f64>, f64)> {
        let t = self.t;
        for _ in 0..3 {
            for axis in 0..t {
                let range = self.fiber_domain.hi()[axis] - self.fiber_domain.lo()[axis];
                let h = 1e-5 * range;
                if q[axis] - h < self.fiber_domain.lo()[axis]
                    || q[axis] + h > self.fiber_domain.hi()[axis]
                {
                    continue;
                }
                let mut plus = q.clone();
                let mut minus = q.clone();
                plus[axis] += h;
                minus[axis] -= h;
                let fp = f(&plus)?;
                let fm = f(&minus)?;
                let slope = (fp - fm) / (2.0 * h);
                let curvature = (fp - 2.0 * val + fm) / (h * h);
                let noise_floor = 64.0 * f64::EPSILON * val.abs().max(1.0) / (h * h);
                if !(curvature > noise_floor) {
                    continue;
                }
                let mut trial = q.clone();
                trial[axis] -= slope / curvature;
                self.fiber_domain.clamp(&mut trial);
                let v = f(&trial)?;
                if v <= val {
                    val = v;
                    q = trial;
                }
            }
        }
        Ok((q, val))
    }

    /// Locate q₀ and store it; callable once.
    pub fn locate_q0(&mut self, grid_per_axis: usize, refine_tol: f64) -> Result<&Q0Info> {
        if self.q0.is_some() {
            return Err(Error::State("q0 already set".into()));
        }
        let (point, coordinatewise_min) = self.find_q0(grid_per_axis, refine_tol)?;
        self.q0 = Some(Q0Info {
            point,
            coordinatewise_min,
        });
        Ok(self.q0.as_ref().unwrap())
    }

    /// Adopt an externally supplied q₀ (e.g. from a config file); the
    /// coordinatewise flag is recomputed at default resolution.
    pub fn set_q0(&mut self, point: Vec<f64>) -> Result<&Q0Info> {
        if self.q0.is_some() {
            return Err(Error::State("q0 already set".into()));
        }
        self.check_fiber_point(&point)?;
        let mut coordinatewise = true;
        for profile in &self.profiles {
            let f = |q: &[f64]| -> Result<f64> { Ok(profile.eval(q)) };
            let (_, fmin) = self.minimize(DEFAULT_Q0_GRID, DEFAULT_Q0_TOL, &f)?;
            if profile.eval(&point) - fmin > DEFAULT_Q0_TOL * fmin.abs().max(1.0) {
                coordinatewise = false;
                break;
            }
        }
        self.q0 = Some(Q0Info {
            point,
            coordinatewise_min: coordinatewise,
        });
        Ok(self.q0.as_ref().unwrap())
    }
}

/// Cached inner product of the product metric g(q)+h(p) at one point.
///
/// Block diagonal by construction: no base/fiber cross terms.
#[derive(Debug, Clone)]
pub struct ProductInnerProduct {
    weights: Vec<f64>,
    h: DenseMatrix,
}

impl ProductInnerProduct {
    pub fn at(spec: &NeckSpec, p: &[f64], q: &[f64]) -> Result<Self> {
        Ok(ProductInnerProduct {
            weights: spec.weights(q)?,
            h: spec.fiber_matrix(p, q)?,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn fiber_matrix(&self) -> &DenseMatrix {
        &self.h
    }

    /// ⟨(xb, xf), (yb, yf)⟩ = Σ_l w_l xb_l yb_l + xfᵀ h yf.
    pub fn inner(&self, xb: &[f64], xf: &[f64], yb: &[f64], yf: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (wl, (x, y)) in self.weights.iter().zip(xb.iter().zip(yb)) {
            acc += wl * x * y;
        }
        let t = xf.len();
        for i in 0..t {
            for j in 0..t {
                acc += xf[i] * self.h.get(i, j) * yf[j];
            }
        }
        acc
    }
}
