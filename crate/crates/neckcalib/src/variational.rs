//! Volume-comparison experiments: quadrature of graph volumes over M,
//! random perturbations within the graph family, and central-difference
//! first-variation estimates.
//!
//! Graphs of sections u: M → N (t = 1) are the tractable family
//! homologous to M×{q₀}; their volume is integrated with tensor-product
//! Gauss–Legendre rules over hyperspherical angles (spheres) or chart
//! coordinates (immersed charts). Node evaluations are independent;
//! accumulation runs compensated in the fixed order of the rule, so a
//! result never depends on the worker count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Chart, Geometry};
use crate::linalg::{self, DenseMatrix};
use crate::metric::NeckSpec;
use crate::rng::stream;

/// Dimension cap for tensor quadrature (node counts explode beyond it).
pub const MAX_AMBIENT_FOR_QUADRATURE: usize = 6;

/// Relative tolerance for flagging a negative volume excess.
pub const EXCESS_TOL: f64 = 1e-9;

/// Low-order perturbation mode: a monomial of degree ≤ 2 in the ambient
/// coordinates, restricted to M.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Mode {
    /// ψ ≡ 1
    One,
    /// ψ = x_i
    Coord { i: usize },
    /// ψ = x_i x_j
    Quad { i: usize, j: usize },
}

impl Mode {
    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            Mode::One => 1.0,
            Mode::Coord { i } => p[*i],
            Mode::Quad { i, j } => p[*i] * p[*j],
        }
    }

    /// Directional derivative dψ_p(X).
    pub fn deriv(&self, p: &[f64], x: &[f64]) -> f64 {
        match self {
            Mode::One => 0.0,
            Mode::Coord { i } => x[*i],
            Mode::Quad { i, j } => p[*i] * x[*j] + p[*j] * x[*i],
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let ok = match self {
            Mode::One => true,
            Mode::Coord { i } => *i < n,
            Mode::Quad { i, j } => *i < n && *j < n,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("mode references a coordinate beyond n"))
        }
    }
}

/// All monomial modes of degree ≤ 2: 1, x_i, x_i x_j (i ≤ j).
pub fn modes_up_to_degree_two(n: usize) -> Vec<Mode> {
    let mut out = vec![Mode::One];
    for i in 0..n {
        out.push(Mode::Coord { i });
    }
    for i in 0..n {
        for j in i..n {
            out.push(Mode::Quad { i, j });
        }
    }
    out
}

/// Section u(p) = q₀ + Σ_m amp_m ψ_m(p) over the base, with a declared
/// amplitude bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSection {
    pub modes: Vec<Mode>,
    pub amplitudes: Vec<f64>,
    pub eps_max: f64,
}

impl GraphSection {
    pub fn new(modes: Vec<Mode>, amplitudes: Vec<f64>, eps_max: f64) -> Result<Self> {
        if modes.len() != amplitudes.len() {
            return Err(Error::invalid("one amplitude per mode"));
        }
        if amplitudes.iter().any(|a| a.abs() > eps_max) {
            return Err(Error::invalid("amplitude exceeds declared bound"));
        }
        Ok(GraphSection {
            modes,
            amplitudes,
            eps_max,
        })
    }

    pub fn zero(eps_max: f64) -> Self {
        GraphSection {
            modes: vec![],
            amplitudes: vec![],
            eps_max,
        }
    }

    fn offset(&self, p: &[f64]) -> f64 {
        self.modes
            .iter()
            .zip(&self.amplitudes)
            .map(|(m, a)| a * m.eval(p))
            .sum()
    }

    fn offset_deriv(&self, p: &[f64], x: &[f64]) -> f64 {
        self.modes
            .iter()
            .zip(&self.amplitudes)
            .map(|(m, a)| a * m.deriv(p, x))
            .sum()
    }
}

/// Tensor-product Gauss–Legendre rule over the integration box of a
/// spec's base manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    axes: Vec<AxisRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AxisRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Rule matched to the spec's base: hyperspherical angle box
    /// `[0,π]^{k-1} × [0,2π]` for spheres, the chart box for charts.
    pub fn for_spec(spec: &NeckSpec, nodes_per_axis: usize) -> Result<Self> {
        if nodes_per_axis < 2 {
            return Err(Error::invalid("need at least 2 nodes per axis"));
        }
        if spec.ambient_dim() > MAX_AMBIENT_FOR_QUADRATURE {
            return Err(Error::invalid(format!(
                "tensor quadrature capped at ambient dimension {MAX_AMBIENT_FOR_QUADRATURE}"
            )));
        }
        let k = spec.base_dim();
        let axes = match spec.geometry() {
            Geometry::Sphere { .. } => {
                let mut axes = Vec::with_capacity(k);
                for axis in 0..k {
                    let hi = if axis + 1 == k {
                        2.0 * std::f64::consts::PI
                    } else {
                        std::f64::consts::PI
                    };
                    axes.push(gauss_legendre(nodes_per_axis, 0.0, hi));
                }
                axes
            }
            Geometry::ImmersedChart { chart } => (0..k)
                .map(|axis| {
                    gauss_legendre(
                        nodes_per_axis,
                        chart.domain.lo()[axis],
                        chart.domain.hi()[axis],
                    )
                })
                .collect(),
        };
        Ok(QuadratureRule { axes })
    }

    pub fn total_nodes(&self) -> usize {
        self.axes.iter().map(|a| a.nodes.len()).product()
    }

    fn dims(&self) -> usize {
        self.axes.len()
    }

    fn node(&self, flat: usize) -> (Vec<f64>, f64) {
        let mut idx = flat;
        let mut coords = Vec::with_capacity(self.dims());
        let mut weight = 1.0;
        for axis in &self.axes {
            let m = axis.nodes.len();
            let i = idx % m;
            idx /= m;
            coords.push(axis.nodes[i]);
            weight *= axis.weights[i];
        }
        (coords, weight)
    }
}

/// Gauss–Legendre nodes and weights on `[a, b]` by Newton iteration on
/// the Legendre recurrence.
fn gauss_legendre(m: usize, a: f64, b: f64) -> AxisRule {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_m(x) and its derivative via the three-term recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=m {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        weights[i] = w;
        nodes[m - 1 - i] = -x;
        weights[m - 1 - i] = w;
    }
    // affine map [-1,1] -> [a,b]
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    AxisRule {
        nodes: nodes.iter().rev().map(|x| mid + half * x).collect(),
        weights: weights.iter().rev().map(|w| w * half).collect(),
    }
}

/// Base parametrization used by quadrature: ambient point and
/// coordinate tangent vectors at a parameter value.
enum Patch<'a> {
    Sphere { n: usize },
    Chart(&'a Chart),
}

impl Patch<'_> {
    fn for_spec(spec: &NeckSpec) -> Patch<'_> {
        match spec.geometry() {
            Geometry::Sphere { n } => Patch::Sphere { n: *n },
            Geometry::ImmersedChart { chart } => Patch::Chart(chart),
        }
    }

    fn point(&self, coords: &[f64]) -> Vec<f64> {
        match self {
            Patch::Sphere { n } => hypersphere_point(*n, coords),
            Patch::Chart(chart) => chart.map(coords),
        }
    }

    /// Columns ∂p/∂θ_j, an n×k matrix.
    fn tangents(&self, coords: &[f64]) -> DenseMatrix {
        match self {
            Patch::Sphere { n } => hypersphere_jacobian(*n, coords),
            Patch::Chart(chart) => chart.jacobian_at(coords),
        }
    }
}

/// Hyperspherical parametrization of S^{n-1}:
/// x_j = (Π_{i<j} sin θ_i) · cos θ_j for j < n, x_n = Π_i sin θ_i.
fn hypersphere_point(n: usize, th: &[f64]) -> Vec<f64> {
    debug_assert_eq!(th.len(), n - 1);
    let mut p = Vec::with_capacity(n);
    let mut sin_prod = 1.0;
    for (j, &angle) in th.iter().enumerate() {
        p.push(sin_prod * angle.cos());
        sin_prod *= angle.sin();
        let _ = j;
    }
    p.push(sin_prod);
    p
}

fn hypersphere_jacobian(n: usize, th: &[f64]) -> DenseMatrix {
    let k = n - 1;
    let mut jac = DenseMatrix::zeros(n, k);
    // coordinate x_j is a product of per-angle factors; the partial with
    // respect to θ_m replaces factor m by its derivative
    for j in 0..n {
        for m in 0..k {
            if m > j || (j < k && m > j) {
                continue;
            }
            let mut v = 1.0;
            for (i, &angle) in th.iter().enumerate() {
                let factor = if i < j {
                    angle.sin()
                } else if i == j && j < k {
                    angle.cos()
                } else {
                    1.0
                };
                let dfactor = if i < j {
                    angle.cos()
                } else if i == j && j < k {
                    -angle.sin()
                } else {
                    0.0
                };
                v *= if i == m { dfactor } else { factor };
            }
            jac.set(j, m, v);
        }
    }
    jac
}

/// ∫_M sqrt(det Gram) over the graph of the section: tangent vectors
/// (X_i, du(X_i)) measured under g(u(p)) + h(p).
pub fn graph_volume(spec: &NeckSpec, section: &GraphSection, rule: &QuadratureRule) -> Result<f64> {
    if spec.fiber_dim() != 1 {
        return Err(Error::invalid("graph experiments require a one-dimensional fiber"));
    }
    if rule.dims() != spec.base_dim() {
        return Err(Error::invalid("quadrature rule dimension mismatch"));
    }
    for m in &section.modes {
        m.validate(spec.ambient_dim())?;
    }
    let q0 = spec.require_q0()?.point[0];
    let patch = Patch::for_spec(spec);
    let k = spec.base_dim();
    let n = spec.ambient_dim();

    // Neumaier-compensated accumulation in the rule's fixed node order.
    let mut sum = 0.0;
    let mut comp = 0.0;
    for flat in 0..rule.total_nodes() {
        let (coords, weight) = rule.node(flat);
        let p = patch.point(&coords);
        let tangents = patch.tangents(&coords);
        let u = q0 + section.offset(&p);
        if !spec.fiber_domain().contains(&[u], 1e-12) {
            return Err(Error::Domain(format!(
                "section leaves the fiber domain: u = {u} at {coords:?}"
            )));
        }
        let w = spec.weights(&[u])?;
        let h = spec.fiber_matrix(&p, &[u])?.get(0, 0);
        let xs: Vec<Vec<f64>> = (0..k)
            .map(|c| (0..n).map(|r| tangents.get(r, c)).collect())
            .collect();
        let du: Vec<f64> = xs.iter().map(|x| section.offset_deriv(&p, x)).collect();
        let mut gram = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let mut s = 0.0;
                for l in 0..n {
                    s += w[l] * xs[i][l] * xs[j][l];
                }
                s += h * du[i] * du[j];
                gram.set(i, j, s);
                gram.set(j, i, s);
            }
        }
        let d = linalg::det(&gram)?;
        let scale: f64 = (0..k).map(|i| gram.get(i, i)).product::<f64>().max(1.0);
        if d < -1e-12 * scale {
            return Err(Error::Degeneracy(format!(
                "graph Gram determinant {d:e} negative beyond tolerance"
            )));
        }
        let term = weight * d.max(0.0).sqrt();
        let t = sum + term;
        comp += if sum.abs() >= term.abs() {
            (sum - t) + term
        } else {
            (term - t) + sum
        };
        sum = t;
    }
    Ok(sum + comp)
}

/// One evaluated section in a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationEntry {
    pub amplitudes: Vec<f64>,
    pub volume: f64,
    pub excess: f64,
}

/// Shared report shape for perturbation and minimality experiments;
/// the field that does not apply to a run serializes as null.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationalReport {
    pub baseline_volume: f64,
    pub entries: Vec<PerturbationEntry>,
    pub min_excess: Option<f64>,
    pub defect: Option<f64>,
}

/// Volume comparison against random graph sections: each trial draws
/// amplitudes uniformly within the per-mode bounds and records the
/// excess over the flat graph M×{q₀}. Negative excess beyond the
/// tolerance is a finding carried in the report, not an error.
pub fn perturbation_test(
    spec: &NeckSpec,
    modes: &[Mode],
    amplitude_bounds: &[f64],
    trials: usize,
    rule: &QuadratureRule,
    seed: u64,
) -> Result<VariationalReport> {
    if modes.len() != amplitude_bounds.len() {
        return Err(Error::invalid("one amplitude bound per mode"));
    }
    if amplitude_bounds.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::invalid("amplitude bounds must be non-negative"));
    }
    let eps_max = amplitude_bounds.iter().cloned().fold(0.0, f64::max);
    let baseline = graph_volume(spec, &GraphSection::zero(eps_max), rule)?;
    let entries: Vec<PerturbationEntry> = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<PerturbationEntry> {
            let mut rng = stream(seed, i);
            let amplitudes: Vec<f64> = amplitude_bounds
                .iter()
                .map(|&b| if b == 0.0 { 0.0 } else { rng.random_range(-b..b) })
                .collect();
            let section = GraphSection::new(modes.to_vec(), amplitudes.clone(), eps_max)?;
            let volume = graph_volume(spec, &section, rule)?;
            Ok(PerturbationEntry {
                amplitudes,
                volume,
                excess: volume - baseline,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_excess = entries
        .iter()
        .map(|e| e.excess)
        .fold(f64::INFINITY, f64::min);
    Ok(VariationalReport {
        baseline_volume: baseline,
        entries,
        min_excess: if trials > 0 { Some(min_excess) } else { None },
        defect: None,
    })
}

/// Central-difference first-variation estimate: max over bump modes ψ of
/// |vol(ε·ψ) − vol(−ε·ψ)| / 2ε with ε = `step`. Zero exactly when the
/// first variation vanishes in the tested directions.
pub fn mean_curvature_defect(
    spec: &NeckSpec,
    bump_modes: &[Mode],
    step: f64,
    rule: &QuadratureRule,
) -> Result<VariationalReport> {
    if !(step > 0.0) {
        return Err(Error::invalid("step must be positive"));
    }
    let baseline = graph_volume(spec, &GraphSection::zero(step), rule)?;
    let mut entries = Vec::with_capacity(bump_modes.len() * 2);
    let mut defect: f64 = 0.0;
    for m in 0..bump_modes.len() {
        let mut volumes = [0.0; 2];
        for (which, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut amplitudes = vec![0.0; bump_modes.len()];
            amplitudes[m] = sign * step;
            let section = GraphSection::new(bump_modes.to_vec(), amplitudes.clone(), step)?;
            let volume = graph_volume(spec, &section, rule)?;
            volumes[which] = volume;
            entries.push(PerturbationEntry {
                amplitudes,
                volume,
                excess: volume - baseline,
            });
        }
        defect = defect.max((volumes[0] - volumes[1]).abs() / (2.0 * step));
    }
    Ok(VariationalReport {
        baseline_volume: baseline,
        entries,
        min_excess: None,
        defect: Some(defect),
    })
}
