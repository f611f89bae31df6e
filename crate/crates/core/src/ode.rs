//! Split ODE problems `w' = Φ_E(w) + Φ_I(w)` and the flux bundles every
//! solver variant works with.
//!
//! The second time derivative of the solution is never supplied by the user:
//! it is always formed as the Jacobian-vector product `Φ̇_X(w) = Φ_X'(w) Φ(w)`
//! so that `Φ̇_E + Φ̇_I = Φ' Φ = w''` holds by construction.

use crate::error::{Error, Result};

/// State of the ODE system. Dimensions are tiny (at most 4 for the shipped
/// problems), so a plain vector is used.
pub type State = Vec<f64>;

/// Dense, square, row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from its rows. Panics if the rows are not square.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix rows must be square");
            data.extend_from_slice(row);
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mul_vec(&self, v: &[f64]) -> State {
        debug_assert_eq!(v.len(), self.n);
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// An ODE right-hand side split into an explicitly and an implicitly treated
/// part.
///
/// Implementations must be pure: every method may be called concurrently from
/// several pipeline workers. Evaluations outside the admissible region should
/// produce non-finite values, which [`eval_bundle`] turns into
/// [`Error::NonFinite`].
pub trait SplitProblem: Send + Sync {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    /// Non-stiff part Φ_E.
    fn phi_e(&self, w: &[f64]) -> State;

    /// Stiff part Φ_I.
    fn phi_i(&self, w: &[f64]) -> State;

    /// Jacobian of Φ_E. Falls back to central finite differences.
    fn jac_e(&self, w: &[f64]) -> Matrix {
        fd_jacobian(|x| Ok(self.phi_e(x)), w).unwrap_or_else(|_| nan_matrix(w.len()))
    }

    /// Jacobian of Φ_I. Falls back to central finite differences.
    fn jac_i(&self, w: &[f64]) -> Matrix {
        fd_jacobian(|x| Ok(self.phi_i(x)), w).unwrap_or_else(|_| nan_matrix(w.len()))
    }

    fn w0(&self) -> State;

    fn t_end(&self) -> f64;

    /// Closed-form solution, when one is known.
    fn exact(&self, _t: f64) -> Option<State> {
        None
    }

    /// Full right-hand side Φ = Φ_E + Φ_I.
    fn phi(&self, w: &[f64]) -> State {
        add(&self.phi_e(w), &self.phi_i(w))
    }
}

fn nan_matrix(n: usize) -> Matrix {
    Matrix {
        n,
        data: vec![f64::NAN; n * n],
    }
}

/// Φ_E, Φ_I and their time derivatives Φ̇_E, Φ̇_I at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxBundle {
    pub phi_e: State,
    pub phi_i: State,
    pub dphi_e: State,
    pub dphi_i: State,
}

impl FluxBundle {
    pub fn zeros(d: usize) -> Self {
        Self {
            phi_e: vec![0.0; d],
            phi_i: vec![0.0; d],
            dphi_e: vec![0.0; d],
            dphi_i: vec![0.0; d],
        }
    }

    /// Φ = Φ_E + Φ_I.
    pub fn phi(&self) -> State {
        add(&self.phi_e, &self.phi_i)
    }

    /// Φ̇ = Φ̇_E + Φ̇_I, i.e. w''.
    pub fn dphi(&self) -> State {
        add(&self.dphi_e, &self.dphi_i)
    }
}

fn check_state(p: &dyn SplitProblem, w: &[f64]) -> Result<()> {
    if w.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: w.len(),
        });
    }
    ensure_finite(w, "state")
}

pub(crate) fn ensure_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} = {v:?}")))
    }
}

/// Evaluates Φ_E, Φ_I, Φ̇_E = Φ_E'·Φ and Φ̇_I = Φ_I'·Φ at `w`.
pub fn eval_bundle(p: &dyn SplitProblem, w: &[f64]) -> Result<FluxBundle> {
    check_state(p, w)?;
    let phi_e = p.phi_e(w);
    let phi_i = p.phi_i(w);
    ensure_finite(&phi_e, "phi_e")?;
    ensure_finite(&phi_i, "phi_i")?;
    let phi = add(&phi_e, &phi_i);
    let dphi_e = p.jac_e(w).mul_vec(&phi);
    let dphi_i = p.jac_i(w).mul_vec(&phi);
    ensure_finite(&dphi_e, "dphi_e")?;
    ensure_finite(&dphi_i, "dphi_i")?;
    Ok(FluxBundle {
        phi_e,
        phi_i,
        dphi_e,
        dphi_i,
    })
}

/// Only the implicit half of the bundle, `(Φ_I(w), Φ̇_I(w))`. This is what the
/// stage residuals need, and it skips the explicit Jacobian.
pub fn eval_implicit(p: &dyn SplitProblem, w: &[f64]) -> Result<(State, State)> {
    check_state(p, w)?;
    let phi_e = p.phi_e(w);
    let phi_i = p.phi_i(w);
    let phi = add(&phi_e, &phi_i);
    ensure_finite(&phi, "phi")?;
    let dphi_i = p.jac_i(w).mul_vec(&phi);
    ensure_finite(&dphi_i, "dphi_i")?;
    Ok((phi_i, dphi_i))
}

/// Central-difference Jacobian with steps `h_j = sqrt(eps) (1 + |w_j|)`.
pub fn fd_jacobian<F>(f: F, w: &[f64]) -> Result<Matrix>
where
    F: Fn(&[f64]) -> Result<State>,
{
    let n = w.len();
    let mut jac = Matrix::zeros(n);
    let mut x = w.to_vec();
    for j in 0..n {
        let h = f64::EPSILON.sqrt() * (1.0 + w[j].abs());
        x[j] = w[j] + h;
        let fp = f(&x)?;
        x[j] = w[j] - h;
        let fm = f(&x)?;
        x[j] = w[j];
        if fp.len() != n || fm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: fp.len(),
            });
        }
        for i in 0..n {
            let v = (fp[i] - fm[i]) / (2.0 * h);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "finite-difference Jacobian entry ({i},{j})"
                )));
            }
            jac[(i, j)] = v;
        }
    }
    Ok(jac)
}

pub(crate) fn add(a: &[f64], b: &[f64]) -> State {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Euclidean norm.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean distance between two states.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct Zero;
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
        fn w0(&self) -> State {
            vec![1.0, 2.0]
        }
        fn t_end(&self) -> f64 {
            1.0
        }
    }

    /// Φ = −w^{−5/2} split 0.2/0.8, Jacobians left to finite differences.
    struct PowFd;
    impl SplitProblem for PowFd {
        fn name(&self) -> String {
            "pow-fd".into()
        }
        fn dim(&self) -> usize {
            1
        }
        fn phi_e(&self, w: &[f64]) -> State {
            vec![-0.2 * w[0].powf(-2.5)]
        }
        fn phi_i(&self, w: &[f64]) -> State {
            vec![-0.8 * w[0].powf(-2.5)]
        }
        fn w0(&self) -> State {
            vec![1.0]
        }
        fn t_end(&self) -> f64 {
            0.25
        }
    }

    struct Linear(f64);
    impl SplitProblem for Linear {
        fn name(&self) -> String {
            "linear".into()
        }
        fn dim(&self) -> usize {
            1
        }
        fn phi_e(&self, _w: &[f64]) -> State {
            vec![0.0]
        }
        fn phi_i(&self, w: &[f64]) -> State {
            vec![self.0 * w[0]]
        }
        fn jac_e(&self, _w: &[f64]) -> Matrix {
            Matrix::zeros(1)
        }
        fn jac_i(&self, _w: &[f64]) -> Matrix {
            Matrix::from_rows(&[&[self.0]])
        }
        fn w0(&self) -> State {
            vec![1.0]
        }
        fn t_end(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn zero_flux_bundle_is_zero() {
        let b = eval_bundle(&Zero, &[3.0, -4.0]).unwrap();
        assert_eq!(b, FluxBundle::zeros(2));
    }

    #[test]
    fn scalar_pow_bundle_at_one() {
        let b = eval_bundle(&PowFd, &[1.0]).unwrap();
        assert_abs_diff_eq!(b.phi_e[0], -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(b.phi_i[0], -0.8, epsilon = 1e-15);
        // Φ' = 2.5 w^{-7/2}, Φ = −1 at w = 1.
        assert_abs_diff_eq!(b.dphi_e[0], -0.5, epsilon = 1e-7);
        assert_abs_diff_eq!(b.dphi_i[0], -2.0, epsilon = 1e-7);
    }

    #[test]
    fn linear_bundle() {
        let b = eval_bundle(&Linear(-1.0), &[2.0]).unwrap();
        assert_eq!(b.phi_i, vec![-2.0]);
        assert_eq!(b.dphi_i, vec![2.0]);
        assert_eq!(b.dphi_e, vec![0.0]);
    }

    #[test]
    fn inadmissible_state_is_non_finite() {
        assert!(matches!(eval_bundle(&PowFd, &[0.0]), Err(Error::NonFinite(_))));
        assert!(matches!(eval_bundle(&PowFd, &[-1.0]), Err(Error::NonFinite(_))));
        assert!(matches!(
            eval_bundle(&PowFd, &[f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        assert!(matches!(
            eval_bundle(&PowFd, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn fd_jacobian_identity() {
        let j = fd_jacobian(|x| Ok(x.to_vec()), &[0.3, -7.0, 1e3]).unwrap();
        assert!(j.max_abs_diff(&Matrix::identity(3)) <= 1e-8);
    }

    #[test]
    fn fd_jacobian_quadratic() {
        let j = fd_jacobian(|x| Ok(vec![x[0] * x[0], x[0] * x[1]]), &[1.0, 2.0]).unwrap();
        let expected = Matrix::from_rows(&[&[2.0, 0.0], &[2.0, 1.0]]);
        assert!(j.max_abs_diff(&expected) <= 1e-6);
    }

    #[test]
    fn fd_jacobian_constant() {
        let j = fd_jacobian(|_| Ok(vec![5.0, -1.0]), &[1.0, 2.0]).unwrap();
        assert_eq!(j, Matrix::zeros(2));
    }

    #[test]
    fn fd_jacobian_propagates_failure() {
        let r = fd_jacobian(|x| Ok(vec![x[0].ln()]), &[0.0]);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
