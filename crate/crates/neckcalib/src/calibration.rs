//! Tangent frames on M×N, the candidate calibration π*vol_{g(q₀)}, and
//! comass estimation.
//!
//! For a frame (v₁, …, v_k) at (p, q) the engine compares the pulled
//! back volume of the base projections under g(q₀) against the induced
//! volume of the frame under the product metric. Sweeps sample points
//! and frames with per-index generator streams so any worker count
//! replays bit-identically; the local search sharpens the Monte-Carlo
//! maximum with a decaying perturb-and-accept walk.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, BasePoint, Geometry};
use crate::linalg::{self, DenseMatrix};
use crate::metric::{NeckSpec, ProductInnerProduct};
use crate::rng::stream;

/// Ratios above `1 + VIOLATION_TOL` count as comass violations;
/// the band separates genuine counterexamples from roundoff.
pub const VIOLATION_TOL: f64 = 1e-9;

/// Relative Gram-determinant floor below which a frame is degenerate.
const FRAME_DEPENDENCE_TOL: f64 = 1e-14;
const RESAMPLE_LIMIT: usize = 16;

const SEARCH_INITIAL_STEP: f64 = 0.1;
const SEARCH_DECAY: f64 = 0.7;
const SEARCH_BATCH: usize = 8;

/// A point of the product manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductPoint {
    pub base: BasePoint,
    pub fiber: Vec<f64>,
}

/// One tangent vector of M×N split into base and fiber components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameVector {
    pub base: Vec<f64>,
    pub fiber: Vec<f64>,
}

/// k tangent vectors at a product point, independent under the product
/// metric; the base components are the pushforwards under the base
/// projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentFrame {
    #[serde(rename = "point")]
    pub at: ProductPoint,
    pub vectors: Vec<FrameVector>,
}

impl TangentFrame {
    /// Validates tangency of the base components and independence of
    /// the frame under the product inner product.
    pub fn new(spec: &NeckSpec, at: ProductPoint, vectors: Vec<FrameVector>) -> Result<Self> {
        let k = spec.base_dim();
        if vectors.len() != k {
            return Err(Error::invalid(format!(
                "frame needs k = {k} vectors, got {}",
                vectors.len()
            )));
        }
        let basis = spec.geometry().tangent_basis(&at.base)?;
        let bases: Vec<Vec<f64>> = vectors.iter().map(|v| v.base.clone()).collect();
        // rejects non-tangent base components
        geometry::tangent_coordinates(&basis, &bases)?;
        let frame = TangentFrame { at, vectors };
        let pip = ProductInnerProduct::at(spec, &frame.at.base.ambient, &frame.at.fiber)?;
        let gram = frame.gram(&pip);
        let d = linalg::det(&gram)?;
        let scale: f64 = (0..k).map(|i| gram.get(i, i)).product();
        if !(d > FRAME_DEPENDENCE_TOL * scale.max(1e-300)) {
            return Err(Error::Degeneracy(
                "frame vectors dependent under the product metric".into(),
            ));
        }
        Ok(frame)
    }

    pub fn gram(&self, pip: &ProductInnerProduct) -> DenseMatrix {
        let k = self.vectors.len();
        let mut gram = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = pip.inner(
                    &self.vectors[i].base,
                    &self.vectors[i].fiber,
                    &self.vectors[j].base,
                    &self.vectors[j].fiber,
                );
                gram.set(i, j, v);
                gram.set(j, i, v);
            }
        }
        gram
    }

    /// Euclidean norm of all fiber components, for diagnostics.
    pub fn fiber_norm(&self) -> f64 {
        self.vectors
            .iter()
            .flat_map(|v| v.fiber.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// Frame with Gaussian coefficients over a tangent basis of
/// T_pM ⊕ ℝᵗ, resampled (up to 16 times) if degenerate.
pub fn random_frame(spec: &NeckSpec, at: &ProductPoint, rng: &mut impl Rng) -> Result<TangentFrame> {
    let k = spec.base_dim();
    let t = spec.fiber_dim();
    let basis = spec.geometry().tangent_basis(&at.base)?;
    let pip = ProductInnerProduct::at(spec, &at.base.ambient, &at.fiber)?;
    for _ in 0..RESAMPLE_LIMIT {
        let coeffs: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..k + t).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let frame = frame_from_coefficients(spec, at, &basis.vectors, &coeffs);
        let gram = frame.gram(&pip);
        let d = linalg::det(&gram)?;
        let scale: f64 = (0..k).map(|i| gram.get(i, i)).product();
        if d > FRAME_DEPENDENCE_TOL * scale.max(1e-300) {
            return Ok(frame);
        }
    }
    Err(Error::Sampling(
        "could not sample an independent frame; spec is degenerate".into(),
    ))
}

/// Lifted tangent frame: the reference tangent basis of M with zero
/// fiber components, placed at fiber point q.
pub fn lifted_frame(spec: &NeckSpec, base: &BasePoint, q: &[f64]) -> Result<TangentFrame> {
    let basis = spec.geometry().tangent_basis(base)?;
    let t = spec.fiber_dim();
    let vectors = basis
        .vectors
        .iter()
        .map(|b| FrameVector {
            base: b.clone(),
            fiber: vec![0.0; t],
        })
        .collect();
    Ok(TangentFrame {
        at: ProductPoint {
            base: base.clone(),
            fiber: q.to_vec(),
        },
        vectors,
    })
}

fn frame_from_coefficients(
    spec: &NeckSpec,
    at: &ProductPoint,
    basis: &[Vec<f64>],
    coeffs: &[Vec<f64>],
) -> TangentFrame {
    let n = spec.ambient_dim();
    let k = spec.base_dim();
    let vectors = coeffs
        .iter()
        .map(|row| {
            let mut base = vec![0.0; n];
            for (c, b) in row[..k].iter().zip(basis) {
                for (x, bi) in base.iter_mut().zip(b) {
                    *x += c * bi;
                }
            }
            FrameVector {
                base,
                fiber: row[k..].to_vec(),
            }
        })
        .collect();
    TangentFrame {
        at: at.clone(),
        vectors,
    }
}

/// φ(v₁, …, v_k) = vol_{g(q₀)}(π_*v₁, …, π_*v_k), signed by the base
/// orientation; zero when the pushforwards are dependent.
pub fn calib_value(spec: &NeckSpec, frame: &TangentFrame) -> Result<f64> {
    let q0 = spec.require_q0()?;
    let bases: Vec<Vec<f64>> = frame.vectors.iter().map(|v| v.base.clone()).collect();
    let sign = spec
        .geometry()
        .orientation_sign(&frame.at.base, &bases)?;
    if sign == 0 {
        return Ok(0.0);
    }
    spec.base_volume_form(&q0.point, &bases, sign)
}

/// vol_V(v₁, …, v_k) under the product metric at the frame's point.
pub fn frame_volume(spec: &NeckSpec, frame: &TangentFrame) -> Result<f64> {
    let pip = ProductInnerProduct::at(spec, &frame.at.base.ambient, &frame.at.fiber)?;
    let gram = frame.gram(&pip);
    let d = linalg::det(&gram)?;
    let scale: f64 = (0..gram.rows()).map(|i| gram.get(i, i)).product::<f64>().max(1.0);
    if d < -1e-12 * scale {
        return Err(Error::Degeneracy(format!(
            "frame Gram determinant {d:e} negative beyond tolerance"
        )));
    }
    Ok(d.max(0.0).sqrt())
}

/// Coefficient matrix C of the frame in a product-orthonormal basis
/// (g(q)-orthonormalized tangent basis ⊕ h(p)-orthonormalized fiber
/// axes). Rows are frame vectors; the first k columns are the base
/// block D.
pub fn frame_coefficients(spec: &NeckSpec, frame: &TangentFrame) -> Result<DenseMatrix> {
    let k = spec.base_dim();
    let t = spec.fiber_dim();
    let basis = spec.geometry().tangent_basis(&frame.at.base)?;
    let bases: Vec<Vec<f64>> = frame.vectors.iter().map(|v| v.base.clone()).collect();
    let coords = geometry::tangent_coordinates(&basis, &bases)?;

    // Gram of the tangent basis under g(q), then its Cholesky factor
    let w = spec.weights(&frame.at.fiber)?;
    let mut gb = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let mut s = 0.0;
            for l in 0..spec.ambient_dim() {
                s += w[l] * basis.vectors[i][l] * basis.vectors[j][l];
            }
            gb.set(i, j, s);
            gb.set(j, i, s);
        }
    }
    let lb = linalg::cholesky(&gb)?;
    let lh = linalg::cholesky(&spec.fiber_matrix(&frame.at.base.ambient, &frame.at.fiber)?)?;

    // base block: y = Lᵀ c, fiber block: y = Lhᵀ x_f
    let mut c_mat = DenseMatrix::zeros(k, k + t);
    for (r, v) in frame.vectors.iter().enumerate() {
        for m in 0..k {
            let mut s = 0.0;
            for j in 0..k {
                s += lb.get(j, m) * coords.get(r, j);
            }
            c_mat.set(r, m, s);
        }
        for m in 0..t {
            let mut s = 0.0;
            for j in 0..t {
                s += lh.get(j, m) * v.fiber[j];
            }
            c_mat.set(r, k + m, s);
        }
    }
    Ok(c_mat)
}

/// vol_V recomputed as sqrt(Σ_{S⊂[k+t],|S|=k} det(C_S)²) — the minor
/// expansion route, cross-checking [`frame_volume`].
pub fn frame_volume_minor_sum(spec: &NeckSpec, frame: &TangentFrame) -> Result<f64> {
    let c = frame_coefficients(spec, frame)?;
    let mut sum = 0.0;
    for s in linalg::enumerate_subsets(c.cols(), c.rows())? {
        let m = linalg::minor(&c, &s)?;
        sum += m * m;
    }
    Ok(sum.sqrt())
}

/// |vol_{g(q)}(π_*v₁, …, π_*v_k)| at the frame's own fiber point — the
/// left side of the unconditional projection inequality.
pub fn pushforward_volume(spec: &NeckSpec, frame: &TangentFrame) -> Result<f64> {
    let bases: Vec<Vec<f64>> = frame.vectors.iter().map(|v| v.base.clone()).collect();
    Ok(spec
        .base_volume_form(&frame.at.fiber, &bases, 1)?
        .abs())
}

/// The ratio α with φ|_V = α·vol_V for this frame.
pub fn comass_ratio(spec: &NeckSpec, frame: &TangentFrame) -> Result<f64> {
    let calib = calib_value(spec, frame)?;
    let vol = frame_volume(spec, frame)?;
    if vol <= 0.0 {
        return Err(Error::Degeneracy("frame volume vanished".into()));
    }
    Ok(calib / vol)
}

/// A sampled frame whose ratio exceeded the violation threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub ratio: f64,
    pub frame: TangentFrame,
}

/// Aggregated result of a comass sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComassReport {
    pub spec_id: String,
    pub samples: u64,
    /// −∞ sentinel (serialized as null) when no frames were evaluated.
    pub max_ratio: f64,
    pub argmax: Option<TangentFrame>,
    pub violations: Vec<Violation>,
    pub seed: u64,
    pub wall_time_s: f64,
}

#[derive(Default)]
struct SweepPartial {
    best: Option<(f64, u64, TangentFrame)>,
    violations: Vec<(u64, Violation)>,
}

impl SweepPartial {
    fn merge(mut self, other: SweepPartial) -> SweepPartial {
        self.best = match (self.best.take(), other.best) {
            (None, b) => b,
            (a, None) => a,
            (Some(a), Some(b)) => {
                // max ratio; ties break to the smaller sample index so the
                // reduction is associative and worker-count independent
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    Some(b)
                } else {
                    Some(a)
                }
            }
        };
        self.violations.extend(other.violations);
        self
    }
}

/// Monte-Carlo comass sweep: `points` product points, each with
/// `frames_per_point` Gaussian frames. Deterministic for a fixed seed
/// regardless of worker count.
pub fn comass_sweep(
    spec: &NeckSpec,
    points: usize,
    frames_per_point: usize,
    seed: u64,
) -> Result<ComassReport> {
    spec.require_q0()?;
    let start = std::time::Instant::now();
    let partial = (0..points as u64)
        .into_par_iter()
        .map(|i| -> Result<SweepPartial> {
            let mut rng = stream(seed, i);
            let base = spec.geometry().sample_point(&mut rng);
            let fiber = spec.fiber_domain().sample(&mut rng);
            let at = ProductPoint { base, fiber };
            let mut local = SweepPartial::default();
            for _ in 0..frames_per_point {
                let frame = random_frame(spec, &at, &mut rng)?;
                let ratio = comass_ratio(spec, &frame)?;
                let better = match &local.best {
                    None => true,
                    Some((r, _, _)) => ratio > *r,
                };
                if better {
                    local.best = Some((ratio, i, frame.clone()));
                }
                if ratio > 1.0 + VIOLATION_TOL {
                    local.violations.push((i, Violation { ratio, frame }));
                }
            }
            Ok(local)
        })
        .try_reduce(SweepPartial::default, |a, b| Ok(a.merge(b)));
    let partial = partial?;
    let mut violations = partial.violations;
    violations.sort_by(|a, b| {
        b.1.ratio
            .partial_cmp(&a.1.ratio)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    let (max_ratio, argmax) = match partial.best {
        Some((r, _, f)) => (r, Some(f)),
        None => (f64::NEG_INFINITY, None),
    };
    Ok(ComassReport {
        spec_id: spec.spec_id(),
        samples: (points * frames_per_point) as u64,
        max_ratio,
        argmax,
        violations: violations.into_iter().map(|(_, v)| v).collect(),
        seed,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Max deviation |ratio − 1| of lifted tangent frames of M×{q₀} over
/// random base points: the equality-locus check.
pub fn equality_locus_max_dev(spec: &NeckSpec, points: usize, seed: u64) -> Result<f64> {
    let q0 = spec.require_q0()?.point.clone();
    (0..points as u64)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = stream(seed, i);
            let base = spec.geometry().sample_point(&mut rng);
            let frame = lifted_frame(spec, &base, &q0)?;
            let ratio = comass_ratio(spec, &frame)?;
            Ok((ratio - 1.0).abs())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

struct SearchState {
    base_coords: Vec<f64>,
    fiber: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

impl SearchState {
    fn perturb(&self, step: f64, rng: &mut impl Rng) -> SearchState {
        let noise = |rng: &mut dyn rand::RngCore| -> f64 {
            <StandardNormal as rand_distr::Distribution<f64>>::sample(&StandardNormal, rng)
        };
        let base_coords = self
            .base_coords
            .iter()
            .map(|x| x + step * noise(rng))
            .collect();
        let fiber = self.fiber.iter().map(|x| x + step * noise(rng)).collect();
        let coeffs = self
            .coeffs
            .iter()
            .map(|row| row.iter().map(|x| x + step * noise(rng)).collect())
            .collect();
        SearchState {
            base_coords,
            fiber,
            coeffs,
        }
    }

    /// Projects onto the admissible set: unit-normalized sphere point or
    /// clamped chart coordinates, clamped fiber point, unit-norm rows.
    fn normalize(&mut self, spec: &NeckSpec) -> bool {
        match spec.geometry() {
            Geometry::Sphere { .. } => {
                let norm: f64 = self.base_coords.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-8 {
                    return false;
                }
                for x in self.base_coords.iter_mut() {
                    *x /= norm;
                }
            }
            Geometry::ImmersedChart { chart } => {
                chart.domain.clamp(&mut self.base_coords);
            }
        }
        spec.fiber_domain().clamp(&mut self.fiber);
        for row in self.coeffs.iter_mut() {
            let norm: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                return false;
            }
            for x in row.iter_mut() {
                *x /= norm;
            }
        }
        true
    }

    fn base_point(&self, spec: &NeckSpec) -> Result<BasePoint> {
        match spec.geometry() {
            Geometry::Sphere { .. } => Ok(BasePoint::ambient(self.base_coords.clone())),
            Geometry::ImmersedChart { .. } => {
                spec.geometry().point_from_chart(&self.base_coords)
            }
        }
    }

    fn evaluate(&self, spec: &NeckSpec) -> Result<Option<(f64, TangentFrame)>> {
        let base = self.base_point(spec)?;
        let basis = match spec.geometry().tangent_basis(&base) {
            Ok(b) => b,
            Err(Error::Degeneracy(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let at = ProductPoint {
            base,
            fiber: self.fiber.clone(),
        };
        let frame = frame_from_coefficients(spec, &at, &basis.vectors, &self.coeffs);
        let pip = ProductInnerProduct::at(spec, &at.base.ambient, &at.fiber)?;
        let gram = frame.gram(&pip);
        let d = linalg::det(&gram)?;
        let scale: f64 = (0..gram.rows()).map(|i| gram.get(i, i)).product();
        if !(d > 1e-12 * scale.max(1e-300)) {
            return Ok(None);
        }
        let ratio = comass_ratio(spec, &frame)?;
        Ok(Some((ratio, frame)))
    }
}

/// Multi-start perturb-and-accept ascent on the comass ratio. The step
/// starts at 0.1 and decays geometrically by 0.7 on every rejected
/// proposal; frame coefficient rows are renormalized each iteration.
pub fn max_ratio_search(
    spec: &NeckSpec,
    restarts: usize,
    iters: usize,
    seed: u64,
) -> Result<(f64, TangentFrame)> {
    spec.require_q0()?;
    if restarts == 0 {
        return Err(Error::invalid("need at least one restart"));
    }
    let k = spec.base_dim();
    let t = spec.fiber_dim();
    let best = (0..restarts as u64)
        .into_par_iter()
        .map(|r| -> Result<Option<(f64, u64, TangentFrame)>> {
            let mut rng = stream(seed, r);
            let mut current: Option<(SearchState, f64, TangentFrame)> = None;
            for _ in 0..RESAMPLE_LIMIT {
                let base_coords = match spec.geometry() {
                    Geometry::Sphere { n } => geometry::sphere_point(*n, &mut rng),
                    Geometry::ImmersedChart { chart } => chart.domain.sample(&mut rng),
                };
                let mut state = SearchState {
                    base_coords,
                    fiber: spec.fiber_domain().sample(&mut rng),
                    coeffs: (0..k)
                        .map(|_| (0..k + t).map(|_| rng.sample(StandardNormal)).collect())
                        .collect(),
                };
                if !state.normalize(spec) {
                    continue;
                }
                if let Some((ratio, frame)) = state.evaluate(spec)? {
                    current = Some((state, ratio, frame));
                    break;
                }
            }
            let Some((mut state, mut ratio, mut frame)) = current else {
                return Ok(None);
            };
            // each round spends a small batch of proposals at the current
            // step and decays only when the whole batch fails, so a noisy
            // coordinate cannot stall the walk early
            let mut step = SEARCH_INITIAL_STEP;
            for _ in 0..iters {
                if step < 1e-12 {
                    break;
                }
                let mut advanced = false;
                for _ in 0..SEARCH_BATCH {
                    let mut trial = state.perturb(step, &mut rng);
                    if !trial.normalize(spec) {
                        continue;
                    }
                    if let Some((r2, f2)) = trial.evaluate(spec)? {
                        if r2 > ratio {
                            state = trial;
                            ratio = r2;
                            frame = f2;
                            advanced = true;
                            break;
                        }
                    }
                }
                if !advanced {
                    step *= SEARCH_DECAY;
                }
            }
            Ok(Some((ratio, r, frame)))
        })
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (None, x) => x,
                    (x, None) => x,
                    (Some(a), Some(b)) => {
                        if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                            Some(b)
                        } else {
                            Some(a)
                        }
                    }
                })
            },
        )?;
    match best {
        Some((ratio, _, frame)) => Ok((ratio, frame)),
        None => Err(Error::Sampling("no admissible frame found in search".into())),
    }
}

/// Probe of the hypothesis gap: does minimizing the factor product
/// alone (rather than every factor) still keep the comass at 1?
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    pub coordinatewise_min: bool,
    pub max_ratio: f64,
    pub witness: Option<Violation>,
    pub sweep_samples: u64,
}

/// Runs a sweep plus a sharpening search and reports any ratio above
/// `1 + VIOLATION_TOL` as a hypothesis-gap witness.
pub fn probe_hypothesis(
    spec: &NeckSpec,
    points: usize,
    frames_per_point: usize,
    restarts: usize,
    iters: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let q0 = spec.require_q0()?;
    let coordinatewise_min = q0.coordinatewise_min;
    let sweep = comass_sweep(spec, points, frames_per_point, seed)?;
    let (search_ratio, search_frame) = max_ratio_search(spec, restarts, iters, seed ^ 0x9e37)?;
    let mut max_ratio = sweep.max_ratio.max(search_ratio);
    if !max_ratio.is_finite() {
        max_ratio = search_ratio;
    }
    let witness = if search_ratio > 1.0 + VIOLATION_TOL
        && search_ratio >= sweep.max_ratio
    {
        Some(Violation {
            ratio: search_ratio,
            frame: search_frame,
        })
    } else if sweep.max_ratio > 1.0 + VIOLATION_TOL {
        sweep.violations.first().cloned()
    } else {
        None
    };
    Ok(ProbeReport {
        coordinatewise_min,
        max_ratio,
        witness,
        sweep_samples: sweep.samples,
    })
}
