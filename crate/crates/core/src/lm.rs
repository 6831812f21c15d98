//! Dense Levenberg-Marquardt over a retraction.
//!
//! Problems expose a residual vector and a `retract(state, delta)` map, which
//! lets the same loop run over plain vectors and over unit quaternions.
//! Jacobians are central finite differences in the tangent space. Damping is
//! Marquardt-scaled (`H + mu * diag(H)`), so the loop is insensitive to the
//! overall scale of the residuals.

use nalgebra::{DMatrix, DVector};

pub trait Problem {
    type State: Clone;

    /// Dimension of the tangent space.
    fn dim(&self) -> usize;

    fn residuals(&self, state: &Self::State) -> DVector<f64>;

    fn retract(&self, state: &Self::State, delta: &DVector<f64>) -> Self::State;

    /// Finite-difference step along each tangent direction.
    fn fd_step(&self) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Settings {
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Stop once the accepted step's max-norm falls below this.
    pub step_tolerance: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_damping: 1e-3,
            step_tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Report<S> {
    pub state: S,
    /// Sum of squared residuals at `state`.
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out before a stopping criterion.
    pub converged: bool,
    /// Cost after every accepted step, starting with the initial cost.
    pub trace: Vec<f64>,
}

pub fn jacobian<P: Problem>(problem: &P, state: &P::State, n_residuals: usize) -> DMatrix<f64> {
    let n = problem.dim();
    let h = problem.fd_step();
    let mut jac = DMatrix::zeros(n_residuals, n);
    let mut delta = DVector::zeros(n);
    for k in 0..n {
        delta[k] = h;
        let plus = problem.residuals(&problem.retract(state, &delta));
        delta[k] = -h;
        let minus = problem.residuals(&problem.retract(state, &delta));
        delta[k] = 0.0;
        jac.column_mut(k).copy_from(&((plus - minus) / (2.0 * h)));
    }
    jac
}

pub fn minimize<P: Problem>(problem: &P, init: P::State, settings: &Settings) -> Report<P::State> {
    let mut state = init;
    let mut r = problem.residuals(&state);
    let mut cost = r.norm_squared();
    let initial_cost = cost;
    let mut trace = vec![cost];
    let mut mu = settings.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    if !cost.is_finite() {
        return Report {
            state,
            cost,
            initial_cost,
            iterations,
            converged: false,
            trace,
        };
    }

    'outer: while iterations < settings.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let jac = jacobian(problem, &state, r.len());
        let grad = jac.tr_mul(&r);
        if grad.amax() == 0.0 {
            converged = true;
            break;
        }
        let hess = jac.tr_mul(&jac);
        let diag_max = hess.diagonal().amax();
        let floor = (diag_max * 1e-12).max(f64::MIN_POSITIVE);

        loop {
            let mut damped = hess.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += mu * hess[(i, i)].max(floor);
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    mu *= 10.0;
                    if mu > 1e20 {
                        converged = true;
                        break 'outer;
                    }
                    continue;
                }
            };
            let candidate = problem.retract(&state, &step);
            let r_new = problem.residuals(&candidate);
            let cost_new = r_new.norm_squared();
            if cost_new.is_finite() && cost_new < cost {
                let small_step = step.amax() < settings.step_tolerance;
                let stalled = cost - cost_new <= 1e-15 * cost;
                state = candidate;
                r = r_new;
                cost = cost_new;
                trace.push(cost);
                mu = (mu / 3.0).max(1e-15);
                if small_step || stalled {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            mu *= 4.0;
            if mu > 1e20 {
                // no descent direction left at this resolution: a local minimum
                converged = true;
                break 'outer;
            }
        }
    }

    Report {
        state,
        cost,
        initial_cost,
        iterations,
        converged,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rosenbrock as residuals `(10 (y - x^2), 1 - x)`.
    struct Rosenbrock;

    impl Problem for Rosenbrock {
        type State = DVector<f64>;
        fn dim(&self) -> usize {
            2
        }
        fn residuals(&self, s: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![10.0 * (s[1] - s[0] * s[0]), 1.0 - s[0]])
        }
        fn retract(&self, s: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
            s + d
        }
        fn fd_step(&self) -> f64 {
            1e-7
        }
    }

    #[test]
    fn rosenbrock_converges_monotonically() {
        let report = minimize(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &Settings::default());
        assert!(report.converged);
        assert!((report.state[0] - 1.0).abs() < 1e-6);
        assert!((report.state[1] - 1.0).abs() < 1e-6);
        assert!(report.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn fixed_point_is_kept() {
        let report = minimize(&Rosenbrock, DVector::from_vec(vec![1.0, 1.0]), &Settings::default());
        assert_eq!(report.cost, 0.0);
        assert_eq!(report.state, DVector::from_vec(vec![1.0, 1.0]));
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let settings = Settings {
            max_iterations: 2,
            ..Settings::default()
        };
        let report = minimize(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &settings);
        assert!(!report.converged);
        assert!(report.cost <= report.initial_cost);
    }
}
