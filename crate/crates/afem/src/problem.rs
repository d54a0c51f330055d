//! Coefficient models α(x,s), their derived quantities, loads, and built-in
//! benchmark problems.
//!
//! The equation solved is −∇·[α(x,|∇u|²)∇u] = f with u = 0 on the boundary.
//! A coefficient model supplies α, its s-derivative, its spatial gradient,
//! and the scalar energy density γ(x,s) = ½∫₀ˢ α(x,r) dr whose gradient in
//! ξ (with s = |ξ|²) is the flux α(x,|ξ|²)ξ. Well-posedness rests on the
//! radial tangent coefficient
//!
//! ```text
//! β_tt(x,t) = α(x,t²) + 2t²·∂α/∂s(x,t²)
//! ```
//!
//! staying inside positive bounds: the eigenvalues of the ξ-Hessian of γ are
//! exactly α and β_tt, so bounds on both give strong monotonicity and
//! Lipschitz continuity of the flux. Those bounds are certified numerically
//! over a sampled range by [`estimate_constants`].

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::mesh::{l_shape, unit_square, Mesh, MeshError};

/// Errors from coefficient certification and problem construction.
#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("coefficient is not elliptic on the sampled range: minimum {0:.6e} <= 0")]
    NonElliptic(f64),
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("problem spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// A coefficient model α(x,s) with s = |∇u|².
///
/// Implementations supply analytic derivatives; correctness is enforced by
/// finite-difference tests rather than automatic differentiation. All
/// methods must be pure, so evaluations are safe to run concurrently.
pub trait CoefficientModel: Send + Sync {
    /// α(x,s); must be positive for the model to be accepted.
    fn alpha(&self, x: [f64; 2], s: f64) -> f64;
    /// ∂α/∂s at fixed x.
    fn d2_alpha(&self, x: [f64; 2], s: f64) -> f64;
    /// Spatial gradient ∇ₓα at fixed s.
    fn grad_x_alpha(&self, x: [f64; 2], s: f64) -> [f64; 2];
    /// Lipschitz bound of the model in x, uniform in s (0 for x-independent
    /// models).
    fn lipschitz_x(&self) -> f64;
    /// One-line description used in logs.
    fn describe(&self) -> String;

    /// Energy density γ(x,s) = ½∫₀ˢ α(x,r) dr.
    ///
    /// The default is composite Gauss quadrature with panel doubling until
    /// the value stabilizes; built-in models override it with closed forms.
    fn gamma_value(&self, x: [f64; 2], s: f64) -> f64 {
        if s == 0.0 {
            return 0.0;
        }
        // 4-point Gauss–Legendre nodes/weights on [0,1].
        const T: [f64; 4] = [
            0.069431844202973714,
            0.33000947820757187,
            0.66999052179242813,
            0.93056815579702623,
        ];
        const W: [f64; 4] = [
            0.17392742256872692,
            0.32607257743127308,
            0.32607257743127308,
            0.17392742256872692,
        ];
        let integrate = |panels: usize| -> f64 {
            let h = s / panels as f64;
            let mut sum = 0.0;
            for p in 0..panels {
                let left = p as f64 * h;
                for (t, w) in T.iter().zip(W) {
                    sum += w * self.alpha(x, left + t * h);
                }
            }
            0.5 * sum * h
        };
        let mut panels = 8;
        let mut value = integrate(panels);
        while panels < 2048 {
            panels *= 2;
            let next = integrate(panels);
            let done = (next - value).abs() <= 1e-13 * (1.0 + next.abs());
            value = next;
            if done {
                break;
            }
        }
        value
    }

    /// Radial tangent coefficient β_tt(x,t) = α(x,t²) + 2t²·∂α/∂s(x,t²),
    /// the second derivative of t ↦ γ(x,t²) along a ray.
    fn beta_tt(&self, x: [f64; 2], t: f64) -> f64 {
        let s = t * t;
        self.alpha(x, s) + 2.0 * s * self.d2_alpha(x, s)
    }

    /// Flux ∇_ξ γ(x,ξ) = α(x,|ξ|²)·ξ.
    fn gamma_grad(&self, x: [f64; 2], xi: [f64; 2]) -> [f64; 2] {
        let a = self.alpha(x, xi[0] * xi[0] + xi[1] * xi[1]);
        [a * xi[0], a * xi[1]]
    }

    /// ξ-Hessian of γ: 2·∂α/∂s·ξξᵀ + α·I. Its eigenvalues are α (tangential)
    /// and β_tt (radial), which is what makes the constant estimates below
    /// exact eigenvalue bounds.
    fn gamma_hessian(&self, x: [f64; 2], xi: [f64; 2]) -> [[f64; 2]; 2] {
        let s = xi[0] * xi[0] + xi[1] * xi[1];
        let a = self.alpha(x, s);
        let da = 2.0 * self.d2_alpha(x, s);
        [
            [a + da * xi[0] * xi[0], da * xi[0] * xi[1]],
            [da * xi[0] * xi[1], a + da * xi[1] * xi[1]],
        ]
    }
}

/// α ≡ c: the linear (Poisson-type) coefficient.
#[derive(Debug, Clone, Copy)]
pub struct ConstantCoefficient(pub f64);

impl CoefficientModel for ConstantCoefficient {
    fn alpha(&self, _x: [f64; 2], _s: f64) -> f64 {
        self.0
    }
    fn d2_alpha(&self, _x: [f64; 2], _s: f64) -> f64 {
        0.0
    }
    fn grad_x_alpha(&self, _x: [f64; 2], _s: f64) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn lipschitz_x(&self) -> f64 {
        0.0
    }
    fn gamma_value(&self, _x: [f64; 2], s: f64) -> f64 {
        0.5 * self.0 * s
    }
    fn describe(&self) -> String {
        format!("const {}", self.0)
    }
}

/// The rational model α(s) = a + b/(1+s), nonlinear through the gradient
/// magnitude but independent of x. With a = 2, b = 1 its tangent coefficient
/// β_tt dips to 15/8 at s = 3 and peaks at 3 at s = 0.
#[derive(Debug, Clone, Copy)]
pub struct ChowCoefficient {
    pub a: f64,
    pub b: f64,
}

impl CoefficientModel for ChowCoefficient {
    fn alpha(&self, _x: [f64; 2], s: f64) -> f64 {
        self.a + self.b / (1.0 + s)
    }
    fn d2_alpha(&self, _x: [f64; 2], s: f64) -> f64 {
        let d = 1.0 + s;
        -self.b / (d * d)
    }
    fn grad_x_alpha(&self, _x: [f64; 2], _s: f64) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn lipschitz_x(&self) -> f64 {
        0.0
    }
    fn gamma_value(&self, _x: [f64; 2], s: f64) -> f64 {
        0.5 * (self.a * s + self.b * (1.0 + s).ln())
    }
    fn describe(&self) -> String {
        format!("chow a={} b={}", self.a, self.b)
    }
}

/// Eigenvalue bounds of the energy Hessian certified over a sampled range.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicityConstants {
    /// Minimum of β_tt over the sample (structure-condition lower bound).
    pub tangent_min: f64,
    /// Maximum of β_tt over the sample.
    pub tangent_max: f64,
    /// Strong-monotonicity constant of the flux: min(tangent_min, min α).
    pub monotonicity: f64,
    /// Lipschitz constant of the flux: max(tangent_max, max α).
    pub lipschitz: f64,
    /// Gradient-magnitude range [0, t_max] the bounds were certified on.
    pub t_max: f64,
}

/// Sampling grid for [`estimate_constants`]: an nx×nx lattice over the
/// bounding box and nt points in t over [0, t_max].
#[derive(Debug, Clone, Copy)]
pub struct SampleSpec {
    pub bbox: [[f64; 2]; 2],
    pub nx: usize,
    pub nt: usize,
    pub t_max: f64,
}

impl SampleSpec {
    pub fn over_bbox(bbox: [[f64; 2]; 2], t_max: f64) -> Self {
        SampleSpec { bbox, nx: 21, nt: 4001, t_max }
    }

    /// Grid node (i,j,k) → sample point; exposed so tests can sample the
    /// exact lattice the constants were fitted on.
    pub fn node(&self, i: usize, j: usize, k: usize) -> ([f64; 2], f64) {
        let frac = |n: usize, d: usize| if d <= 1 { 0.0 } else { n as f64 / (d - 1) as f64 };
        let x = [
            self.bbox[0][0] + frac(i, self.nx) * (self.bbox[0][1] - self.bbox[0][0]),
            self.bbox[1][0] + frac(j, self.nx) * (self.bbox[1][1] - self.bbox[1][0]),
        ];
        (x, frac(k, self.nt) * self.t_max)
    }
}

/// Certifies eigenvalue bounds of the energy Hessian by dense sampling:
/// extrema of α and β_tt over the grid. Rejects models whose sampled minimum
/// is not strictly positive.
pub fn estimate_constants(
    model: &dyn CoefficientModel,
    spec: &SampleSpec,
) -> Result<MonotonicityConstants, ProblemError> {
    let mut a_min = f64::INFINITY;
    let mut a_max = f64::NEG_INFINITY;
    let mut b_min = f64::INFINITY;
    let mut b_max = f64::NEG_INFINITY;
    for i in 0..spec.nx {
        for j in 0..spec.nx {
            for k in 0..spec.nt {
                let (x, t) = spec.node(i, j, k);
                let a = model.alpha(x, t * t);
                let b = model.beta_tt(x, t);
                a_min = a_min.min(a);
                a_max = a_max.max(a);
                b_min = b_min.min(b);
                b_max = b_max.max(b);
            }
        }
    }
    let low = b_min.min(a_min);
    if !(low > 0.0) {
        return Err(ProblemError::NonElliptic(low));
    }
    Ok(MonotonicityConstants {
        tangent_min: b_min,
        tangent_max: b_max,
        monotonicity: low,
        lipschitz: b_max.max(a_max),
        t_max: spec.t_max,
    })
}

/// Optional manufactured solution: value and gradient as closures.
#[derive(Clone)]
pub struct ExactSolution {
    pub value: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
    pub gradient: Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>,
}

/// A complete problem instance: coefficient, load, initial mesh, optional
/// exact solution, and certified constants. Immutable; evaluations are pure.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub coefficient: Arc<dyn CoefficientModel>,
    pub load: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
    pub exact: Option<ExactSolution>,
    pub domain: Mesh,
    pub constants: MonotonicityConstants,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("coefficient", &self.coefficient.describe())
            .field("exact", &self.exact.is_some())
            .field("constants", &self.constants)
            .finish()
    }
}

impl ProblemSpec {
    pub fn f(&self, x: [f64; 2]) -> f64 {
        (self.load)(x)
    }

    /// Bounding box of the initial mesh, used as the x-sampling window.
    pub fn bbox(&self) -> [[f64; 2]; 2] {
        let mut bb = [[f64::INFINITY, f64::NEG_INFINITY]; 2];
        for v in self.domain.vertices() {
            bb[0][0] = bb[0][0].min(v.x);
            bb[0][1] = bb[0][1].max(v.x);
            bb[1][0] = bb[1][0].min(v.y);
            bb[1][1] = bb[1][1].max(v.y);
        }
        bb
    }

    /// Re-certify the constants on a larger gradient range. Called by the
    /// adaptive loop when observed discrete gradients leave the certified
    /// range.
    pub fn recertify(&mut self, t_max: f64) -> Result<(), ProblemError> {
        let spec = SampleSpec::over_bbox(self.bbox(), t_max);
        self.constants = estimate_constants(self.coefficient.as_ref(), &spec)?;
        Ok(())
    }
}

/// Strong-form load −∇·[α(x,|∇u|²)∇u] for a manufactured u given its
/// analytic gradient and Hessian:
///
/// ```text
/// f = −∇ₓα·∇u − 2·∂α/∂s·(H∇u)·∇u − α·tr H,   s = |∇u|², H = D²u
/// ```
///
/// (∇s = 2H∇u supplies the middle term).
pub fn manufactured_load(
    model: Arc<dyn CoefficientModel>,
    grad: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
    hess: impl Fn([f64; 2]) -> [[f64; 2]; 2] + Send + Sync + 'static,
) -> Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync> {
    Arc::new(move |x| {
        let g = grad(x);
        let h = hess(x);
        let s = g[0] * g[0] + g[1] * g[1];
        let hg = [h[0][0] * g[0] + h[0][1] * g[1], h[1][0] * g[0] + h[1][1] * g[1]];
        let gx = model.grad_x_alpha(x, s);
        -(gx[0] * g[0] + gx[1] * g[1])
            - 2.0 * model.d2_alpha(x, s) * (hg[0] * g[0] + hg[1] * g[1])
            - model.alpha(x, s) * (h[0][0] + h[1][1])
    })
}

fn sin_solution() -> ExactSolution {
    use std::f64::consts::PI;
    ExactSolution {
        value: Arc::new(|x| (PI * x[0]).sin() * (PI * x[1]).sin()),
        gradient: Arc::new(|x| {
            [
                PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
                PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
            ]
        }),
    }
}

fn sin_hessian(x: [f64; 2]) -> [[f64; 2]; 2] {
    use std::f64::consts::PI;
    let (sx, cx) = (PI * x[0]).sin_cos();
    let (sy, cy) = (PI * x[1]).sin_cos();
    let p2 = PI * PI;
    [[-p2 * sx * sy, p2 * cx * cy], [p2 * cx * cy, -p2 * sx * sy]]
}

fn certify(
    model: &dyn CoefficientModel,
    domain: &Mesh,
    t_max: f64,
) -> Result<MonotonicityConstants, ProblemError> {
    let mut bb = [[f64::INFINITY, f64::NEG_INFINITY]; 2];
    for v in domain.vertices() {
        bb[0][0] = bb[0][0].min(v.x);
        bb[0][1] = bb[0][1].max(v.x);
        bb[1][0] = bb[1][0].min(v.y);
        bb[1][1] = bb[1][1].max(v.y);
    }
    estimate_constants(model, &SampleSpec::over_bbox(bb, t_max))
}

/// Built-in benchmark problems.
///
/// - `poisson-square`: α ≡ 1, u = sin(πx)sin(πy) on the unit square,
///   f = 2π²u.
/// - `chow-square-smooth`: α(s) = 2 + 1/(1+s), same u; the load is the
///   analytic strong form f = 2π²α(s)u − α′(s)∇s·∇u with
///   ∇s = (π³ sin 2πx cos 2πy, π³ cos 2πx sin 2πy), assembled here through
///   [`manufactured_load`] from the exact gradient and Hessian.
/// - `poisson-lshape-singular` / `chow-lshape-singular`: f ≡ 1 on the
///   L-shaped domain; the reentrant corner limits regularity, no exact
///   solution (reference values are extrapolated downstream).
pub fn builtin_problem(name: &str) -> Result<ProblemSpec, ProblemError> {
    use std::f64::consts::PI;
    match name {
        "poisson-square" => {
            let domain = unit_square();
            let model = Arc::new(ConstantCoefficient(1.0));
            let constants = certify(model.as_ref(), &domain, 10.0)?;
            let exact = sin_solution();
            Ok(ProblemSpec {
                name: name.to_string(),
                coefficient: model,
                load: Arc::new(|x| 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin()),
                exact: Some(exact),
                domain,
                constants,
            })
        }
        "chow-square-smooth" => {
            let domain = unit_square();
            let model = Arc::new(ChowCoefficient { a: 2.0, b: 1.0 });
            let constants = certify(model.as_ref(), &domain, 10.0)?;
            let exact = sin_solution();
            let grad = Arc::clone(&exact.gradient);
            let load = manufactured_load(
                model.clone() as Arc<dyn CoefficientModel>,
                move |x| grad(x),
                sin_hessian,
            );
            Ok(ProblemSpec {
                name: name.to_string(),
                coefficient: model,
                load,
                exact: Some(exact),
                domain,
                constants,
            })
        }
        "poisson-lshape-singular" => {
            let domain = l_shape();
            let model = Arc::new(ConstantCoefficient(1.0));
            let constants = certify(model.as_ref(), &domain, 10.0)?;
            Ok(ProblemSpec {
                name: name.to_string(),
                coefficient: model,
                load: Arc::new(|_| 1.0),
                exact: None,
                domain,
                constants,
            })
        }
        "chow-lshape-singular" => {
            let domain = l_shape();
            let model = Arc::new(ChowCoefficient { a: 2.0, b: 1.0 });
            let constants = certify(model.as_ref(), &domain, 10.0)?;
            Ok(ProblemSpec {
                name: name.to_string(),
                coefficient: model,
                load: Arc::new(|_| 1.0),
                exact: None,
                domain,
                constants,
            })
        }
        other => Err(ProblemError::UnknownProblem(other.to_string())),
    }
}

/// Polynomial manufactured case: α ≡ 1, u = x(1−x)y(1−y) on the unit square,
/// f = 2[x(1−x) + y(1−y)]. Every integrand the engine forms for it (load
/// terms, exact-gradient error terms) is a polynomial inside the built-in
/// quadrature degrees, so identity checks hold to rounding rather than
/// quadrature accuracy. Used by the verification suites.
pub fn quartic_square_problem() -> ProblemSpec {
    let domain = unit_square();
    let model = Arc::new(ConstantCoefficient(1.0));
    let constants = certify(model.as_ref(), &domain, 10.0).expect("constant model is elliptic");
    ProblemSpec {
        name: "poisson-square-quartic".to_string(),
        coefficient: model,
        load: Arc::new(|x| 2.0 * (x[0] * (1.0 - x[0]) + x[1] * (1.0 - x[1]))),
        exact: Some(ExactSolution {
            value: Arc::new(|x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])),
            gradient: Arc::new(|x| {
                [
                    (1.0 - 2.0 * x[0]) * x[1] * (1.0 - x[1]),
                    x[0] * (1.0 - x[0]) * (1.0 - 2.0 * x[1]),
                ]
            }),
        }),
        domain,
        constants,
    }
}

/// Parses a plain-text problem spec of `key = value` lines with `#`
/// comments. Recognized keys: `alpha` (`const <c>` or `chow a=<a> b=<b>`),
/// `f` (`const <c>`), `domain` (`square` or `lshape`). All three keys are
/// required; unknown keys are rejected.
pub fn parse_problem_spec(text: &str) -> Result<ProblemSpec, ProblemError> {
    let bad = |msg: String| ProblemError::Spec(msg);
    let mut alpha: Option<Arc<dyn CoefficientModel>> = None;
    let mut load: Option<f64> = None;
    let mut domain: Option<Mesh> = None;
    for (lno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected `key = value`", lno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "alpha" => {
                let mut words = value.split_whitespace();
                match words.next() {
                    Some("const") => {
                        let c: f64 = words
                            .next()
                            .and_then(|w| w.parse().ok())
                            .ok_or_else(|| bad("alpha: `const <c>` expected".into()))?;
                        alpha = Some(Arc::new(ConstantCoefficient(c)));
                    }
                    Some("chow") => {
                        let mut a = None;
                        let mut b = None;
                        for w in words {
                            if let Some(v) = w.strip_prefix("a=") {
                                a = v.parse::<f64>().ok();
                            } else if let Some(v) = w.strip_prefix("b=") {
                                b = v.parse::<f64>().ok();
                            } else {
                                return Err(bad(format!("alpha: unexpected token `{w}`")));
                            }
                        }
                        match (a, b) {
                            (Some(a), Some(b)) => {
                                alpha = Some(Arc::new(ChowCoefficient { a, b }))
                            }
                            _ => return Err(bad("alpha: `chow a=<a> b=<b>` expected".into())),
                        }
                    }
                    other => {
                        return Err(bad(format!("alpha: unknown family {other:?}")));
                    }
                }
            }
            "f" => {
                let mut words = value.split_whitespace();
                match (words.next(), words.next().and_then(|w| w.parse::<f64>().ok())) {
                    (Some("const"), Some(c)) => load = Some(c),
                    _ => return Err(bad("f: `const <c>` expected".into())),
                }
            }
            "domain" => {
                domain = Some(match value {
                    "square" => unit_square(),
                    "lshape" => l_shape(),
                    other => return Err(bad(format!("domain: unknown `{other}`"))),
                });
            }
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    let alpha = alpha.ok_or_else(|| bad("missing key `alpha`".into()))?;
    let c = load.ok_or_else(|| bad("missing key `f`".into()))?;
    let domain = domain.ok_or_else(|| bad("missing key `domain`".into()))?;
    let constants = certify(alpha.as_ref(), &domain, 10.0)?;
    Ok(ProblemSpec {
        name: "custom".to_string(),
        coefficient: alpha,
        load: Arc::new(move |_| c),
        exact: None,
        domain,
        constants,
    })
}
