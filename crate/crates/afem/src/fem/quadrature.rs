//! Fixed quadrature rules on the reference triangle (barycentric points,
//! area-normalized weights) and on the unit interval for edge integrals.

/// A symmetric triangle rule. Weights are normalized to sum to 1, so
/// ∫_T g ≈ |T|·Σ w_q g(x_q).
#[derive(Debug, Clone, Copy)]
pub struct TriRule {
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
    pub degree: usize,
}

const D4_A: f64 = 0.445948490915965;
const D4_B: f64 = 0.091576213509771;
const D4_WA: f64 = 0.223381589678011;
const D4_WB: f64 = 0.109951743655322;

static TRI4_POINTS: [[f64; 3]; 6] = [
    [1.0 - 2.0 * D4_A, D4_A, D4_A],
    [D4_A, 1.0 - 2.0 * D4_A, D4_A],
    [D4_A, D4_A, 1.0 - 2.0 * D4_A],
    [1.0 - 2.0 * D4_B, D4_B, D4_B],
    [D4_B, 1.0 - 2.0 * D4_B, D4_B],
    [D4_B, D4_B, 1.0 - 2.0 * D4_B],
];
static TRI4_WEIGHTS: [f64; 6] = [D4_WA, D4_WA, D4_WA, D4_WB, D4_WB, D4_WB];

/// 6-point rule exact to polynomial degree 4; used for all assembly.
pub static TRI_DEGREE4: TriRule =
    TriRule { points: &TRI4_POINTS, weights: &TRI4_WEIGHTS, degree: 4 };

const D6_A: f64 = 0.063089014491502;
const D6_B: f64 = 0.249286745170910;
const D6_C1: f64 = 0.310352451033785;
const D6_C2: f64 = 0.053145049844816;
const D6_C3: f64 = 1.0 - D6_C1 - D6_C2;
const D6_WA: f64 = 0.050844906370207;
const D6_WB: f64 = 0.116786275726379;
const D6_WC: f64 = 0.082851075618374;

static TRI6_POINTS: [[f64; 3]; 12] = [
    [1.0 - 2.0 * D6_A, D6_A, D6_A],
    [D6_A, 1.0 - 2.0 * D6_A, D6_A],
    [D6_A, D6_A, 1.0 - 2.0 * D6_A],
    [1.0 - 2.0 * D6_B, D6_B, D6_B],
    [D6_B, 1.0 - 2.0 * D6_B, D6_B],
    [D6_B, D6_B, 1.0 - 2.0 * D6_B],
    [D6_C1, D6_C2, D6_C3],
    [D6_C2, D6_C3, D6_C1],
    [D6_C3, D6_C1, D6_C2],
    [D6_C1, D6_C3, D6_C2],
    [D6_C2, D6_C1, D6_C3],
    [D6_C3, D6_C2, D6_C1],
];
static TRI6_WEIGHTS: [f64; 12] = [
    D6_WA, D6_WA, D6_WA, D6_WB, D6_WB, D6_WB, D6_WC, D6_WC, D6_WC, D6_WC, D6_WC, D6_WC,
];

/// 12-point rule exact to degree 6; used where errors are measured against
/// exact solutions so quadrature sits below discretization error.
pub static TRI_DEGREE6: TriRule =
    TriRule { points: &TRI6_POINTS, weights: &TRI6_WEIGHTS, degree: 6 };

/// 3-point Gauss rule on [0,1] as (position, weight); weights sum to 1 and
/// polynomials up to degree 5 integrate exactly.
pub static EDGE_GAUSS3: [(f64, f64); 3] = [
    (0.11270166537925831, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.88729833462074169, 5.0 / 18.0),
];

/// Maps barycentric coordinates to a physical point of the triangle (a,b,c).
pub fn map_bary(p: [[f64; 2]; 3], bary: [f64; 3]) -> [f64; 2] {
    [
        bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
        bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
    ]
}
