//! Benchmark problems and their IMEX splittings.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use crate::error::{Error, Result};
use crate::ode::{Matrix, SplitProblem, State};

/// `w' = −w^{−5/2}`, `w(0) = 1`, split as `Φ_E = αΦ`, `Φ_I = (1−α)Φ`.
///
/// Admissible for `w > 0` only; other states evaluate to NaN.
#[derive(Debug, Clone, Copy)]
pub struct ScalarPow {
    pub alpha: f64,
}

impl ScalarPow {
    fn rhs(w: f64) -> f64 {
        if w > 0.0 {
            -w.powf(-2.5)
        } else {
            f64::NAN
        }
    }

    fn drhs(w: f64) -> f64 {
        if w > 0.0 {
            2.5 * w.powf(-3.5)
        } else {
            f64::NAN
        }
    }
}

impl SplitProblem for ScalarPow {
    fn name(&self) -> String {
        format!("scalar_pow(alpha={})", self.alpha)
    }
    fn dim(&self) -> usize {
        1
    }
    fn phi_e(&self, w: &[f64]) -> State {
        vec![self.alpha * Self::rhs(w[0])]
    }
    fn phi_i(&self, w: &[f64]) -> State {
        vec![(1.0 - self.alpha) * Self::rhs(w[0])]
    }
    fn jac_e(&self, w: &[f64]) -> Matrix {
        Matrix::from_rows(&[&[self.alpha * Self::drhs(w[0])]])
    }
    fn jac_i(&self, w: &[f64]) -> Matrix {
        Matrix::from_rows(&[&[(1.0 - self.alpha) * Self::drhs(w[0])]])
    }
    fn w0(&self) -> State {
        vec![1.0]
    }
    fn t_end(&self) -> f64 {
        0.25
    }
    fn exact(&self, t: f64) -> Option<State> {
        Some(vec![(1.0 - 3.5 * t).powf(2.0 / 7.0)])
    }
}

/// Pareschi-Russo: `w1' = −w2`, `w2' = w1 + (sin w1 − w2)/ε`.
#[derive(Debug, Clone, Copy)]
pub struct PareschiRusso {
    pub eps: f64,
}

impl SplitProblem for PareschiRusso {
    fn name(&self) -> String {
        format!("pareschi_russo(eps={})", self.eps)
    }
    fn dim(&self) -> usize {
        2
    }
    fn phi_e(&self, w: &[f64]) -> State {
        vec![-w[1], w[0]]
    }
    fn phi_i(&self, w: &[f64]) -> State {
        vec![0.0, (w[0].sin() - w[1]) / self.eps]
    }
    fn jac_e(&self, _w: &[f64]) -> Matrix {
        Matrix::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]])
    }
    fn jac_i(&self, w: &[f64]) -> Matrix {
        Matrix::from_rows(&[&[0.0, 0.0], &[w[0].cos() / self.eps, -1.0 / self.eps]])
    }
    fn w0(&self) -> State {
        vec![FRAC_PI_2, 1.0]
    }
    fn t_end(&self) -> f64 {
        5.0
    }
}

/// Van der Pol: `w1' = w2`, `w2' = ((1 − w1²) w2 − w1)/ε`.
#[derive(Debug, Clone, Copy)]
pub struct VanDerPol {
    pub eps: f64,
}

impl SplitProblem for VanDerPol {
    fn name(&self) -> String {
        format!("van_der_pol(eps={})", self.eps)
    }
    fn dim(&self) -> usize {
        2
    }
    fn phi_e(&self, w: &[f64]) -> State {
        vec![w[1], 0.0]
    }
    fn phi_i(&self, w: &[f64]) -> State {
        vec![0.0, ((1.0 - w[0] * w[0]) * w[1] - w[0]) / self.eps]
    }
    fn jac_e(&self, _w: &[f64]) -> Matrix {
        Matrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]])
    }
    fn jac_i(&self, w: &[f64]) -> Matrix {
        Matrix::from_rows(&[
            &[0.0, 0.0],
            &[
                (-2.0 * w[0] * w[1] - 1.0) / self.eps,
                (1.0 - w[0] * w[0]) / self.eps,
            ],
        ])
    }
    fn w0(&self) -> State {
        vec![2.0, -2.0 / 3.0 + 10.0 / 81.0 * self.eps]
    }
    fn t_end(&self) -> f64 {
        0.5
    }
}

pub const ARENSTORF_MU: f64 = 0.012277471;
pub const ARENSTORF_PERIOD: f64 = 17.065216560159;

/// Restricted three-body (Arenstorf) orbit. Everything divided by the
/// distance terms `D1`, `D2` is implicit, the rest explicit. One period is
/// integrated; the orbit closes, so the reference end state is `w0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Arenstorf;

impl Arenstorf {
    /// Attraction `−m (x − xc, y) / r³` towards a body at `(xc, 0)` and its
    /// Jacobian with respect to `(x, y)`.
    fn pull(m: f64, xc: f64, x: f64, y: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let dx = x - xc;
        let r2 = dx * dx + y * y;
        let r3 = r2 * r2.sqrt();
        let r5 = r3 * r2;
        let acc = [-m * dx / r3, -m * y / r3];
        let jac = [
            [-m * (1.0 / r3 - 3.0 * dx * dx / r5), 3.0 * m * dx * y / r5],
            [3.0 * m * dx * y / r5, -m * (1.0 / r3 - 3.0 * y * y / r5)],
        ];
        (acc, jac)
    }

    fn gravity(w: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
        let mu = ARENSTORF_MU;
        let mu_p = 1.0 - mu;
        let (a1, j1) = Self::pull(mu_p, -mu, w[0], w[1]);
        let (a2, j2) = Self::pull(mu, mu_p, w[0], w[1]);
        let acc = [a1[0] + a2[0], a1[1] + a2[1]];
        let jac = [
            [j1[0][0] + j2[0][0], j1[0][1] + j2[0][1]],
            [j1[1][0] + j2[1][0], j1[1][1] + j2[1][1]],
        ];
        (acc, jac)
    }
}

impl SplitProblem for Arenstorf {
    fn name(&self) -> String {
        "arenstorf".into()
    }
    fn dim(&self) -> usize {
        4
    }
    fn phi_e(&self, w: &[f64]) -> State {
        vec![w[2], w[3], w[0] + 2.0 * w[3], w[1] - 2.0 * w[2]]
    }
    fn phi_i(&self, w: &[f64]) -> State {
        let (acc, _) = Self::gravity(w);
        vec![0.0, 0.0, acc[0], acc[1]]
    }
    fn jac_e(&self, _w: &[f64]) -> Matrix {
        Matrix::from_rows(&[
            &[0.0, 0.0, 1.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
            &[1.0, 0.0, 0.0, 2.0],
            &[0.0, 1.0, -2.0, 0.0],
        ])
    }
    fn jac_i(&self, w: &[f64]) -> Matrix {
        let (_, j) = Self::gravity(w);
        Matrix::from_rows(&[
            &[0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
            &[j[0][0], j[0][1], 0.0, 0.0],
            &[j[1][0], j[1][1], 0.0, 0.0],
        ])
    }
    fn w0(&self) -> State {
        vec![0.994, 0.0, 0.0, -2.001585106379]
    }
    fn t_end(&self) -> f64 {
        ARENSTORF_PERIOD
    }
}

/// `w' = λ w`, entirely implicit. Sanity problem with a closed-form solution.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub lambda: f64,
    pub t_end: f64,
}

impl SplitProblem for Linear {
    fn name(&self) -> String {
        format!("linear(lambda={})", self.lambda)
    }
    fn dim(&self) -> usize {
        1
    }
    fn phi_e(&self, _w: &[f64]) -> State {
        vec![0.0]
    }
    fn phi_i(&self, w: &[f64]) -> State {
        vec![self.lambda * w[0]]
    }
    fn jac_e(&self, _w: &[f64]) -> Matrix {
        Matrix::zeros(1)
    }
    fn jac_i(&self, _w: &[f64]) -> Matrix {
        Matrix::from_rows(&[&[self.lambda]])
    }
    fn w0(&self) -> State {
        vec![1.0]
    }
    fn t_end(&self) -> f64 {
        self.t_end
    }
    fn exact(&self, t: f64) -> Option<State> {
        Some(vec![(self.lambda * t).exp()])
    }
}

/// `w' = 0` in two dimensions. Every method must reproduce `w0` exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl SplitProblem for Zero {
    fn name(&self) -> String {
        "zero".into()
    }
    fn dim(&self) -> usize {
        2
    }
    fn phi_e(&self, _w: &[f64]) -> State {
        vec![0.0; 2]
    }
    fn phi_i(&self, _w: &[f64]) -> State {
        vec![0.0; 2]
    }
    fn jac_e(&self, _w: &[f64]) -> Matrix {
        Matrix::zeros(2)
    }
    fn jac_i(&self, _w: &[f64]) -> Matrix {
        Matrix::zeros(2)
    }
    fn w0(&self) -> State {
        vec![1.0, -0.5]
    }
    fn t_end(&self) -> f64 {
        1.0
    }
    fn exact(&self, _t: f64) -> Option<State> {
        Some(self.w0())
    }
}

/// Identifies a problem together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemSpec {
    ScalarPow { alpha: f64 },
    PareschiRusso { eps: f64 },
    VanDerPol { eps: f64 },
    Arenstorf,
    Linear { lambda: f64 },
    Zero,
}

impl ProblemSpec {
    /// Parses a problem id. `eps` and `alpha` fall back to the defaults used in
    /// the benchmark studies (ε = 1, α = 0.2).
    pub fn parse(id: &str, eps: Option<f64>, alpha: Option<f64>) -> Result<Self> {
        let spec = match id {
            "scalar_pow" => Self::ScalarPow {
                alpha: alpha.unwrap_or(0.2),
            },
            "pareschi_russo" | "pr" => Self::PareschiRusso {
                eps: eps.unwrap_or(1.0),
            },
            "van_der_pol" | "vdp" => Self::VanDerPol {
                eps: eps.unwrap_or(1.0),
            },
            "arenstorf" => Self::Arenstorf,
            "linear" => Self::Linear { lambda: -1.0 },
            "zero" => Self::Zero,
            other => return Err(Error::InvalidConfig(format!("unknown problem '{other}'"))),
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        match *self {
            Self::ScalarPow { alpha } if !(0.0..=1.0).contains(&alpha) => Err(
                Error::InvalidConfig(format!("alpha must lie in [0, 1], got {alpha}")),
            ),
            Self::PareschiRusso { eps } | Self::VanDerPol { eps } if !(eps > 0.0) => Err(
                Error::InvalidConfig(format!("eps must be positive, got {eps}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::ScalarPow { .. } => "scalar_pow",
            Self::PareschiRusso { .. } => "pareschi_russo",
            Self::VanDerPol { .. } => "van_der_pol",
            Self::Arenstorf => "arenstorf",
            Self::Linear { .. } => "linear",
            Self::Zero => "zero",
        }
    }

    pub fn build(&self) -> Box<dyn SplitProblem> {
        match *self {
            Self::ScalarPow { alpha } => Box::new(ScalarPow { alpha }),
            Self::PareschiRusso { eps } => Box::new(PareschiRusso { eps }),
            Self::VanDerPol { eps } => Box::new(VanDerPol { eps }),
            Self::Arenstorf => Box::new(Arenstorf),
            Self::Linear { lambda } => Box::new(Linear { lambda, t_end: 1.0 }),
            Self::Zero => Box::new(Zero),
        }
    }

    /// Whether the end-time reference is known without a fine-grid solve.
    pub fn has_closed_form_reference(&self) -> bool {
        !matches!(self, Self::PareschiRusso { .. } | Self::VanDerPol { .. })
    }

    /// End-time reference when one is known in closed form (or, for the
    /// Arenstorf orbit, by periodicity).
    pub fn closed_form_reference(&self) -> Option<State> {
        match self {
            Self::Arenstorf => Some(Arenstorf.w0()),
            Self::PareschiRusso { .. } | Self::VanDerPol { .. } => None,
            other => {
                let p = other.build();
                p.exact(p.t_end())
            }
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ScalarPow { alpha } => write!(f, "scalar_pow_alpha{alpha}"),
            Self::PareschiRusso { eps } => write!(f, "pareschi_russo_eps{eps:e}"),
            Self::VanDerPol { eps } => write!(f, "van_der_pol_eps{eps:e}"),
            Self::Arenstorf => write!(f, "arenstorf"),
            Self::Linear { lambda } => write!(f, "linear_lambda{lambda}"),
            Self::Zero => write!(f, "zero"),
        }
    }
}
