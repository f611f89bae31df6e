//! Two-derivative Hermite-Birkhoff collocation tableaux and their stage
//! quadrature.

use crate::error::{Error, Result};
use crate::ode::State;

/// Coefficients `(c, B1, B2)` of an `s`-stage two-derivative collocation
/// method of order `q = 2s`. The last row is the update (first-same-as-last).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoDerivativeTableau {
    pub q: usize,
    pub c: Vec<f64>,
    pub b1: Vec<Vec<f64>>,
    pub b2: Vec<Vec<f64>>,
}

type Rational = (i64, i64);

fn ratio((n, d): Rational) -> f64 {
    n as f64 / d as f64
}

fn abscissae<const S: usize>(c: &[Rational; S]) -> Vec<f64> {
    c.iter().copied().map(ratio).collect()
}

fn matrix<const S: usize>(m: &[[Rational; S]; S]) -> Vec<Vec<f64>> {
    m.iter().map(abscissae).collect()
}

const C4: [Rational; 2] = [(0, 1), (1, 1)];
const B1_4: [[Rational; 2]; 2] = [[(0, 1), (0, 1)], [(1, 2), (1, 2)]];
const B2_4: [[Rational; 2]; 2] = [[(0, 1), (0, 1)], [(1, 12), (-1, 12)]];

const C6: [Rational; 3] = [(0, 1), (1, 2), (1, 1)];
const B1_6: [[Rational; 3]; 3] = [
    [(0, 1), (0, 1), (0, 1)],
    [(101, 480), (8, 30), (55, 2400)],
    [(7, 30), (16, 30), (7, 30)],
];
const B2_6: [[Rational; 3]; 3] = [
    [(0, 1), (0, 1), (0, 1)],
    [(65, 4800), (-25, 600), (-25, 8000)],
    [(5, 300), (0, 1), (-5, 300)],
];

const C8: [Rational; 4] = [(0, 1), (1, 3), (2, 3), (1, 1)];
const B1_8: [[Rational; 4]; 4] = [
    [(0, 1), (0, 1), (0, 1), (0, 1)],
    [(6893, 54432), (313, 2016), (89, 2016), (397, 54432)],
    [(223, 1701), (20, 63), (13, 63), (20, 1701)],
    [(31, 224), (81, 224), (81, 224), (31, 224)],
];
const B2_8: [[Rational; 4]; 4] = [
    [(0, 1), (0, 1), (0, 1), (0, 1)],
    [(1283, 272160), (-851, 30240), (-269, 30240), (-163, 272160)],
    [(43, 8505), (-16, 945), (-19, 945), (-8, 8505)],
    [(19, 3360), (-9, 1120), (9, 1120), (-19, 3360)],
];

impl TwoDerivativeTableau {
    /// The built-in methods of order 4, 6 and 8.
    pub fn builtin(q: usize) -> Result<Self> {
        let (c, b1, b2) = match q {
            4 => (abscissae(&C4), matrix(&B1_4), matrix(&B2_4)),
            6 => (abscissae(&C6), matrix(&B1_6), matrix(&B2_6)),
            8 => (abscissae(&C8), matrix(&B1_8), matrix(&B2_8)),
            other => return Err(Error::UnsupportedOrder(other)),
        };
        Ok(Self { q, c, b1, b2 })
    }

    pub fn stages(&self) -> usize {
        self.c.len()
    }

    /// `dt Σ_j B1[l][j] phis[j] + dt² Σ_j B2[l][j] dphis[j]`, the integral of
    /// the Hermite-Birkhoff interpolant over `[t, t + c_l dt]`.
    pub fn quadrature(&self, l: usize, dt: f64, phis: &[State], dphis: &[State]) -> State {
        self.quadrature_with(l, dt, |j| (&phis[j], &dphis[j]))
    }

    /// Same as [`quadrature`](Self::quadrature), with the stage values
    /// supplied by a lookup so callers can mix iterates without copying.
    pub fn quadrature_with<'a, F>(&self, l: usize, dt: f64, stage: F) -> State
    where
        F: Fn(usize) -> (&'a State, &'a State),
    {
        let s = self.stages();
        let d = stage(0).0.len();
        let dt2 = dt * dt;
        let mut out = vec![0.0; d];
        for j in 0..s {
            let (phi, dphi) = stage(j);
            let w1 = dt * self.b1[l][j];
            let w2 = dt2 * self.b2[l][j];
            for i in 0..d {
                out[i] += w1 * phi[i] + w2 * dphi[i];
            }
        }
        out
    }

    /// Checks the structural invariants of the tableau.
    pub fn validate(&self) -> ValidationReport {
        let s = self.stages();
        let mut checks = Vec::new();

        let shape_ok = s >= 2
            && self.q == 2 * s
            && self.b1.len() == s
            && self.b2.len() == s
            && self.b1.iter().chain(&self.b2).all(|r| r.len() == s);
        checks.push(Check {
            name: "shape",
            passed: shape_ok,
            max_violation: if shape_ok { 0.0 } else { f64::INFINITY },
        });
        if !shape_ok {
            return ValidationReport { checks };
        }

        let mut abscissae = (self.c[0] - 0.0).abs().max((self.c[s - 1] - 1.0).abs());
        for (l, c) in self.c.iter().enumerate() {
            abscissae = abscissae.max((c - l as f64 / (s - 1) as f64).abs());
        }
        checks.push(Check::new("equispaced abscissae on [0, 1]", abscissae));

        let first_row = self.b1[0]
            .iter()
            .chain(&self.b2[0])
            .map(|x| x.abs())
            .fold(0.0, f64::max);
        checks.push(Check::new("explicit first stage", first_row));

        let mut row_sum = 0.0_f64;
        let mut second_moment = 0.0_f64;
        for l in 0..s {
            let sum1: f64 = self.b1[l].iter().sum();
            row_sum = row_sum.max((sum1 - self.c[l]).abs());
            let m: f64 = self.b1[l].iter().zip(&self.c).map(|(b, c)| b * c).sum::<f64>()
                + self.b2[l].iter().sum::<f64>();
            second_moment = second_moment.max((m - 0.5 * self.c[l] * self.c[l]).abs());
        }
        checks.push(Check::new("B1 row sums equal c", row_sum));
        checks.push(Check::new("B1 c + B2 row sums equal c^2/2", second_moment));

        ValidationReport { checks }
    }
}

/// Outcome of [`TwoDerivativeTableau::validate`].
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub max_violation: f64,
}

const VALIDATION_TOL: f64 = 1e-14;

impl Check {
    fn new(name: &'static str, max_violation: f64) -> Self {
        Self {
            name,
            passed: max_violation <= VALIDATION_TOL,
            max_violation,
        }
    }
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn max_violation(&self) -> f64 {
        self.checks.iter().map(|c| c.max_violation).fold(0.0, f64::max)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_order_coefficients() {
        let t = TwoDerivativeTableau::builtin(4).unwrap();
        assert_eq!(t.c, vec![0.0, 1.0]);
        assert_eq!(t.b1, vec![vec![0.0, 0.0], vec![0.5, 0.5]]);
        assert_eq!(t.b2, vec![vec![0.0, 0.0], vec![1.0 / 12.0, -1.0 / 12.0]]);
    }

    #[test]
    fn sixth_order_update_row() {
        let t = TwoDerivativeTableau::builtin(6).unwrap();
        assert_eq!(t.c, vec![0.0, 0.5, 1.0]);
        assert_eq!(t.b1[2], vec![7.0 / 30.0, 16.0 / 30.0, 7.0 / 30.0]);
        assert_eq!(t.b2[2], vec![5.0 / 300.0, 0.0, -5.0 / 300.0]);
    }

    #[test]
    fn eighth_order_update_row() {
        let t = TwoDerivativeTableau::builtin(8).unwrap();
        assert_eq!(t.c, vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(
            t.b1[3],
            vec![31.0 / 224.0, 81.0 / 224.0, 81.0 / 224.0, 31.0 / 224.0]
        );
        assert_eq!(
            t.b2[3],
            vec![19.0 / 3360.0, -9.0 / 1120.0, 9.0 / 1120.0, -19.0 / 3360.0]
        );
    }

    #[test]
    fn unsupported_order() {
        assert_eq!(
            TwoDerivativeTableau::builtin(5),
            Err(Error::UnsupportedOrder(5))
        );
    }

    #[test]
    fn builtins_validate() {
        for q in [4, 6, 8] {
            let r = TwoDerivativeTableau::builtin(q).unwrap().validate();
            assert!(r.passed(), "q={q}: {r:?}");
            assert!(r.max_violation() <= 1e-14);
        }
        assert!(TwoDerivativeTableau::builtin(6).unwrap().validate().max_violation() <= 1e-15);
    }

    #[test]
    fn perturbed_row_sum_fails() {
        let mut t = TwoDerivativeTableau::builtin(6).unwrap();
        t.b1[1][0] += 1e-6;
        let r = t.validate();
        assert!(!r.passed());
        assert!(r.failed().any(|c| c.name == "B1 row sums equal c"));
    }

    #[test]
    fn nonzero_first_row_fails() {
        let mut t = TwoDerivativeTableau::builtin(4).unwrap();
        t.b2[0][1] = 0.1;
        let r = t.validate();
        assert!(r.failed().any(|c| c.name == "explicit first stage"));
    }

    #[test]
    fn quadrature_examples() {
        let t = TwoDerivativeTableau::builtin(4).unwrap();
        let q = |phis: [f64; 2], dphis: [f64; 2]| {
            let phis: Vec<State> = phis.iter().map(|&x| vec![x]).collect();
            let dphis: Vec<State> = dphis.iter().map(|&x| vec![x]).collect();
            t.quadrature(1, 1.0, &phis, &dphis)[0]
        };
        assert_eq!(q([1.0, 1.0], [0.0, 0.0]), 1.0);
        assert_eq!(q([0.0, 1.0], [1.0, 1.0]), 0.5);
        assert!((q([0.0, 1.0], [0.0, 3.0]) - 0.25).abs() < 1e-15);
        assert_eq!(q([0.0, 0.0], [0.0, 0.0]), 0.0);
    }
}
