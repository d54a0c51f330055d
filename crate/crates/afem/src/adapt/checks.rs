//! Empirical verification of the convergence theory: each check takes run
//! data (or plain numbers, so synthetic negatives can be fed in) and tests
//! one inequality of the analysis.

use std::sync::Arc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::estimator::g_quantity;
use crate::fem::{
    energy, h1_error_vs_exact, h1_seminorm_diff, map_bary, FeFunction, FeSpace, FemError,
    TRI_DEGREE6,
};
use crate::mesh::MarkedSet;
use crate::problem::ProblemSpec;
use crate::solver::{solve_nonlinear, SolverConfig};

use super::{AdaptError, AdaptRecord};

/// Target element count for quadrature of the exact solution's energy.
const REFERENCE_MIN_ELEMENTS: usize = 2048;

/// F(u) for a problem with a known solution: degree-6 quadrature of
/// γ(x,|∇u|²) − f·u over a uniformly refined copy of the initial mesh.
pub fn manufactured_reference_energy(problem: &ProblemSpec) -> Option<f64> {
    let exact = problem.exact.as_ref()?;
    let mut mesh = problem.domain.clone();
    let mut passes = 0;
    while mesh.num_elements() < REFERENCE_MIN_ELEMENTS && passes < 24 {
        mesh = mesh.uniform_refine().ok()?;
        passes += 1;
    }
    let mut total = 0.0;
    for t in 0..mesh.num_elements() {
        let p = mesh.element_points(t);
        let area = mesh.element_area(t);
        let mut acc = 0.0;
        for (bary, w) in TRI_DEGREE6.points.iter().zip(TRI_DEGREE6.weights) {
            let x = map_bary(p, *bary);
            let g = (exact.gradient)(x);
            let s = g[0] * g[0] + g[1] * g[1];
            acc += w * (problem.coefficient.gamma_value(x, s) - problem.f(x) * (exact.value)(x));
        }
        total += area * acc;
    }
    Some(total)
}

/// Independent cross-check of a reference energy: re-solve on `passes`
/// uniform bisection passes of the solution's mesh (warm-started) and
/// return the refined discrete energy. Two passes halve the mesh size.
pub fn refined_reference_energy(
    problem: &ProblemSpec,
    solution: &FeFunction,
    solver: &SolverConfig,
    passes: u32,
) -> Result<f64, AdaptError> {
    let mut mesh = Arc::clone(solution.space().mesh());
    let mut current = solution.clone();
    for _ in 0..passes.max(1) {
        let fine = Arc::new(mesh.refine(&MarkedSet::all(&mesh), 1)?);
        let space = FeSpace::build(Arc::clone(&fine));
        current = current.prolong_to(&space)?;
        mesh = fine;
    }
    let space = Arc::clone(current.space());
    let (refined, _) = solve_nonlinear(&space, problem, &current, solver)?;
    Ok(energy(problem, &refined))
}

/// Worst observed ratio Σ_T g_T(V,W)² / ‖∇(V−W)‖² over random pairs on the
/// given space: the empirical perturbation-bound constant before headroom.
pub fn fit_g_constant(
    problem: &ProblemSpec,
    space: &Arc<FeSpace>,
    pairs: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.num_dofs();
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = FeFunction::from_coeffs(space, v).expect("finite coefficients");
        let w = FeFunction::from_coeffs(space, w).expect("finite coefficients");
        let dist = h1_seminorm_diff(&v, &w).expect("same space");
        if dist * dist <= 1e-30 {
            continue;
        }
        let g_sq: f64 = (0..space.mesh().num_elements())
            .map(|t| {
                let g = g_quantity(problem, &v, &w, t);
                g * g
            })
            .sum();
        worst = worst.max(g_sq / (dist * dist));
    }
    worst
}

/// log-log least-squares fit of a run quantity against #Τ_k − #Τ₀.
#[derive(Debug, Clone, Copy)]
pub struct RateFit {
    /// Decay exponent: quantity ≈ C·(#Τ_k − #Τ₀)^{−s_hat}.
    pub s_hat: f64,
    /// Squared correlation of the fit.
    pub r_sq: f64,
    /// Points used.
    pub points: usize,
}

/// Fits `select(record) ≈ C·(#Τ_k − #Τ₀)^{−s}` over the last `tail` usable
/// records. Records where the mesh has not yet grown are skipped; a
/// non-positive quantity is an error (log space).
pub fn fit_rate<F>(records: &[AdaptRecord], select: F, tail: usize) -> Result<RateFit, AdaptError>
where
    F: Fn(&AdaptRecord) -> f64,
{
    if records.len() < 5 {
        return Err(AdaptError::InsufficientRecords { got: records.len(), want: 5 });
    }
    let base = records[0].num_elements;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.num_elements <= base {
            continue;
        }
        let y = select(r);
        if !(y > 0.0) || !y.is_finite() {
            return Err(AdaptError::NonPositiveQuantity { index: i });
        }
        pts.push((((r.num_elements - base) as f64).ln(), y.ln()));
    }
    let take = tail.max(2).min(pts.len());
    if take < 2 {
        return Err(AdaptError::InsufficientRecords { got: pts.len(), want: 2 });
    }
    let window = &pts[pts.len() - take..];
    let n = window.len() as f64;
    let mx = window.iter().map(|p| p.0).sum::<f64>() / n;
    let my = window.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in window {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(AdaptError::InsufficientRecords { got: 1, want: 2 });
    }
    let slope = sxy / sxx;
    let r_sq = if syy <= 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit { s_hat: -slope, r_sq, points: window.len() })
}

/// 41 log-spaced μ candidates in [1e−3, 10].
pub fn mu_grid() -> Vec<f64> {
    (0..41).map(|i| 1e-3 * 1e4f64.powf(i as f64 / 40.0)).collect()
}

/// Contraction of Q_k = [F(U_k) − F_ref] + μ·η²_k: returns the consecutive
/// ratios and their maximum. Errors if the reference exceeds any observed
/// energy (the reference must lower-bound them) or a Q_k is not positive.
pub fn check_contraction(
    records: &[AdaptRecord],
    f_ref: f64,
    mu: f64,
) -> Result<(Vec<f64>, f64), AdaptError> {
    if records.len() < 2 {
        return Err(AdaptError::InsufficientRecords { got: records.len(), want: 2 });
    }
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(AdaptError::BadConfig(format!("mu must be positive, got {mu}")));
    }
    let min_f = records.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min);
    if min_f < f_ref {
        return Err(AdaptError::InconsistentReference { f_ref, min_f });
    }
    let q: Vec<f64> = records
        .iter()
        .map(|r| (r.energy - f_ref) + mu * r.eta * r.eta)
        .collect();
    if let Some(i) = q.iter().position(|&v| !(v > 0.0)) {
        return Err(AdaptError::NonPositiveQuantity { index: i });
    }
    let ratios: Vec<f64> = q.windows(2).map(|w| w[1] / w[0]).collect();
    let rho_hat = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((ratios, rho_hat))
}

/// Scans the μ grid and returns the μ minimizing the worst contraction
/// ratio, that ratio, and the whole (μ, ρ̂) profile.
pub fn sweep_contraction(
    records: &[AdaptRecord],
    f_ref: f64,
    grid: &[f64],
) -> Result<(f64, f64, Vec<(f64, f64)>), AdaptError> {
    let mut profile = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for &mu in grid {
        match check_contraction(records, f_ref, mu) {
            Ok((_, rho)) => {
                profile.push((mu, rho));
                if best.map_or(true, |(_, b)| rho < b) {
                    best = Some((mu, rho));
                }
            }
            Err(e @ AdaptError::InconsistentReference { .. }) => return Err(e),
            Err(e @ AdaptError::InsufficientRecords { .. }) => return Err(e),
            Err(_) => continue,
        }
    }
    let (mu, rho) = best.ok_or_else(|| {
        AdaptError::BadConfig("no usable mu candidate in the grid".into())
    })?;
    Ok((mu, rho, profile))
}

/// (‖∇(u−U)‖² + ‖∇(U−V)‖²) / ‖∇(u−V)‖² for one competitor V; the analysis
/// bounds this by C_A/c_A for the discrete minimizer U.
pub fn quasi_orthogonality_ratio(
    problem: &ProblemSpec,
    u: &FeFunction,
    v: &FeFunction,
) -> Result<f64, AdaptError> {
    let err_u = map_missing(h1_error_vs_exact(problem, u))?;
    let err_v = map_missing(h1_error_vs_exact(problem, v))?;
    let dist = h1_seminorm_diff(u, v)?;
    if !(err_v > 0.0) {
        return Err(AdaptError::NonPositiveQuantity { index: 0 });
    }
    Ok((err_u * err_u + dist * dist) / (err_v * err_v))
}

fn map_missing(r: Result<f64, FemError>) -> Result<f64, AdaptError> {
    r.map_err(|e| match e {
        FemError::MissingExactSolution => AdaptError::MissingExact,
        other => AdaptError::Fem(other),
    })
}

/// Worst quasi-orthogonality ratio over random nodal perturbations of U,
/// with amplitudes sweeping 1e−3 … 10 so both the near-U and far-from-U
/// regimes are probed.
pub fn check_quasi_orthogonality(
    problem: &ProblemSpec,
    u: &FeFunction,
    samples: usize,
    seed: u64,
) -> Result<f64, AdaptError> {
    let space = u.space();
    if space.num_dofs() == 0 {
        return Err(AdaptError::BadConfig("space has no interior dofs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for j in 0..samples.max(1) {
        let frac = if samples > 1 { j as f64 / (samples - 1) as f64 } else { 0.5 };
        let amp = 1e-3 * 1e4f64.powf(frac);
        let coeffs: Vec<f64> = u
            .coeffs()
            .iter()
            .map(|&c| c + amp * rng.gen_range(-1.0..1.0))
            .collect();
        let v = FeFunction::from_coeffs(space, coeffs)?;
        let ratio = quasi_orthogonality_ratio(problem, u, &v)?;
        worst = worst.max(ratio);
    }
    Ok(worst)
}

/// One refinement step's data for the optimal-marking check, detached from
/// any run so synthetic counterexamples can be screened too.
#[derive(Debug, Clone, Copy)]
pub struct MarkingPair {
    /// err² + osc² on the coarse mesh.
    pub total_sq_coarse: f64,
    /// err² + osc² on the fine mesh.
    pub total_sq_fine: f64,
    /// η²(R): coarse estimator mass of the refined set.
    pub eta_sq_refined: f64,
    /// η²: full coarse estimator mass.
    pub eta_sq_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairVerdict {
    /// The step did not reduce the total error by 1−ν; nothing is claimed.
    Vacuous,
    Holds,
    Fails,
}

/// Optimal marking: every step achieving total_fine² ≤ ν·total_coarse² must
/// have refined at least the Dörfler fraction, η²(R) ≥ θ²·η². Returns the
/// per-pair verdicts and whether no pair failed.
pub fn check_optimal_marking(
    pairs: &[MarkingPair],
    theta: f64,
    nu: f64,
) -> (Vec<PairVerdict>, bool) {
    assert!(theta > 0.0 && theta < 1.0, "theta must lie in (0,1)");
    assert!(nu > 0.0 && nu < 1.0, "nu must lie in (0,1)");
    let verdicts: Vec<PairVerdict> = pairs
        .iter()
        .map(|p| {
            if p.total_sq_fine > nu * p.total_sq_coarse {
                PairVerdict::Vacuous
            } else if p.eta_sq_refined >= theta * theta * p.eta_sq_total * (1.0 - 1e-12) {
                PairVerdict::Holds
            } else {
                PairVerdict::Fails
            }
        })
        .collect();
    let passed = verdicts.iter().all(|v| *v != PairVerdict::Fails);
    (verdicts, passed)
}

/// Cardinality shape b_k = #M_k · (err²_k + osc²_k)^{1/(2·s_hat)}; for an
/// optimal-rate run these stay within a constant band.
pub fn check_cardinality_shape(
    records: &[AdaptRecord],
    s_hat: f64,
) -> Result<Vec<(usize, f64)>, AdaptError> {
    if !(s_hat > 0.0) || !s_hat.is_finite() {
        return Err(AdaptError::BadConfig(format!("s_hat must be positive, got {s_hat}")));
    }
    let mut out = Vec::new();
    for r in records {
        if r.num_marked == 0 {
            continue;
        }
        let err = r.h1_error.ok_or(AdaptError::MissingExact)?;
        let total_sq = err * err + r.osc * r.osc;
        out.push((r.iteration, r.num_marked as f64 * total_sq.powf(1.0 / (2.0 * s_hat))));
    }
    Ok(out)
}
