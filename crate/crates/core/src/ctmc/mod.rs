//! Exact analysis: generator assembly over the feasible space, steady-state
//! solution by dense least squares, and the four secondary-network metrics.

pub(crate) mod uniformization;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, StateSpace, SystemParams, SystemState};

/// Default bound on `max |πQ|` accepted from the solver.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-9;
/// Largest negative round-off entry tolerated before clamping is an error.
pub const CLAMP_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtmcError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("least-squares system is rank deficient")]
    Singular,
    #[error("balance residual {residual:e} exceeds tolerance {tol:e}")]
    Residual { residual: f64, tol: f64 },
    #[error("solution has a negative entry of magnitude {0:e}")]
    NegativeMass(f64),
    #[error("dropping probability undefined: no SU is ever admitted")]
    NoAdmissions,
}

/// Infinitesimal generator `Q` (row = source, column = destination) plus
/// the blocking self-rates, which are bookkeeping only and never enter `Q`.
#[derive(Debug, Clone)]
pub struct Generator {
    q: DMatrix<f64>,
    blocking: Vec<f64>,
}

impl Generator {
    pub fn build(space: &StateSpace, p: &SystemParams) -> Result<Self, CtmcError> {
        let n = space.len();
        let mut q = DMatrix::zeros(n, n);
        let mut blocking = vec![0.0; n];
        for (row, s) in space.iter() {
            for t in p.outgoing(s)? {
                let col = space
                    .index_of(t.to)
                    .ok_or(ModelError::Infeasible(t.to))?;
                q[(row, col)] += t.rate;
            }
            let out: f64 = q.row(row).iter().sum();
            q[(row, row)] = -out;
            blocking[row] = p.blocking_rate(s)?;
        }
        Ok(Generator { q, blocking })
    }

    pub fn dimension(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn entry(&self, from: usize, to: usize) -> f64 {
        self.q[(from, to)]
    }

    pub fn blocking_rates(&self) -> &[f64] {
        &self.blocking
    }

    /// Solves `{πQ = 0, Σπ = 1}` in the least-squares sense through a QR
    /// factorization of the stacked `(n+1) × n` system.
    pub fn solve_steady_state(&self, tol: f64) -> Result<SteadyState, CtmcError> {
        let n = self.dimension();
        let mut a = DMatrix::zeros(n + 1, n);
        a.view_mut((0, 0), (n, n)).copy_from(&self.q.transpose());
        a.row_mut(n).fill(1.0);
        let mut rhs = DVector::zeros(n + 1);
        rhs[n] = 1.0;

        let qr = a.qr();
        let qtb = qr.q().transpose() * rhs;
        let x = qr.r().solve_upper_triangular(&qtb).ok_or(CtmcError::Singular)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CtmcError::Singular);
        }

        let most_negative = x.iter().fold(0.0f64, |m, &v| m.min(v));
        if -most_negative > CLAMP_TOL {
            return Err(CtmcError::NegativeMass(-most_negative));
        }
        let mut pi: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= total);

        let residual = self.balance_residual(&pi);
        if !(residual <= tol) {
            return Err(CtmcError::Residual { residual, tol });
        }
        Ok(SteadyState { pi, residual })
    }

    /// `max |(πQ)_k|`.
    pub fn balance_residual(&self, pi: &[f64]) -> f64 {
        let n = self.dimension();
        (0..n)
            .map(|col| {
                (0..n)
                    .map(|row| pi[row] * self.q[(row, col)])
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub pi: Vec<f64>,
    pub residual: f64,
}

impl SteadyState {
    pub fn prob(&self, space: &StateSpace, s: SystemState) -> f64 {
        space.index_of(s).map_or(0.0, |k| self.pi[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub p_block: f64,
    pub p_drop: f64,
    pub utilization: f64,
    pub throughput: f64,
}

impl Metrics {
    pub fn as_array(&self) -> [f64; 4] {
        [self.p_block, self.p_drop, self.utilization, self.throughput]
    }
}

/// `Σ π(s)` over states where an arriving SU is blocked.
pub fn blocking_probability(pi: &SteadyState, space: &StateSpace, p: &SystemParams) -> f64 {
    space
        .iter()
        .filter(|&(_, s)| p.blocks_su(s))
        .map(|(k, _)| pi.pi[k])
        .sum()
}

/// Drop rate `Σ λ_p π(s)` over dropping states.
pub fn dropping_rate(pi: &SteadyState, space: &StateSpace, p: &SystemParams) -> f64 {
    space
        .iter()
        .filter(|&(_, s)| s.j > 0 && p.pu_arrival_drops(s))
        .map(|(k, _)| p.lambda_p * pi.pi[k])
        .sum()
}

/// Drop rate over the admitted-SU rate `(1 - P_b)·λ_s`.
pub fn dropping_probability(
    pi: &SteadyState,
    space: &StateSpace,
    p: &SystemParams,
) -> Result<f64, CtmcError> {
    let admitted = (1.0 - blocking_probability(pi, space, p)) * p.lambda_s;
    if admitted <= 0.0 {
        return Err(CtmcError::NoAdmissions);
    }
    Ok(dropping_rate(pi, space, p) / admitted)
}

/// Mean SU-occupied bandwidth over `N`.
pub fn spectrum_utilization(pi: &SteadyState, space: &StateSpace, p: &SystemParams) -> f64 {
    let occupied: f64 = space
        .iter()
        .map(|(k, s)| s.j as f64 * p.share(s.i, s.j) * pi.pi[k])
        .sum();
    occupied / p.channels as f64
}

/// Mean SU departures per unit time, `Σ π(s)·j·μ_s(i,j)`. Counts both
/// holding completions and cell-residence exits, as μ_s bundles the two.
pub fn throughput(pi: &SteadyState, space: &StateSpace, p: &SystemParams) -> f64 {
    space
        .iter()
        .map(|(k, s)| pi.pi[k] * s.j as f64 * p.service(s.i, s.j))
        .sum()
}

/// Max-absolute entry of `πQ`.
pub fn verify_balance(pi: &SteadyState, g: &Generator) -> f64 {
    g.balance_residual(&pi.pi)
}

/// Full analytical pipeline for one parameter set.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub space: StateSpace,
    pub generator: Generator,
    pub steady: SteadyState,
    pub metrics: Metrics,
}

pub fn analyze(p: &SystemParams) -> Result<Analysis, CtmcError> {
    analyze_with_tol(p, DEFAULT_RESIDUAL_TOL)
}

pub fn analyze_with_tol(p: &SystemParams, tol: f64) -> Result<Analysis, CtmcError> {
    p.validate()?;
    let space = p.enumerate_states();
    let generator = Generator::build(&space, p)?;
    let steady = generator.solve_steady_state(tol)?;
    let metrics = Metrics {
        p_block: blocking_probability(&steady, &space, p),
        p_drop: dropping_probability(&steady, &space, p)?,
        utilization: spectrum_utilization(&steady, &space, p),
        throughput: throughput(&steady, &space, p),
    };
    Ok(Analysis { space, generator, steady, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn tiny(lambda_p: f64) -> SystemParams {
        SystemParams {
            channels: 1,
            b_min: 1.0,
            b_max: 1.0,
            lambda_p,
            lambda_s: 2.0,
            mu_p: 0.7,
            h_s: 1.5,
            r_s: 0.5,
        }
    }

    #[test]
    fn generator_rows_for_single_channel() {
        let p = tiny(0.3);
        let space = p.enumerate_states();
        let g = Generator::build(&space, &p).unwrap();
        // order (0,0), (0,1), (1,0)
        assert_eq!(g.entry(0, 1), p.lambda_s);
        assert_eq!(g.entry(0, 2), p.lambda_p);
        assert_eq!(g.entry(0, 0), -(p.lambda_s + p.lambda_p));
        assert_eq!(g.entry(1, 0), p.h_s + p.r_s);
        assert_eq!(g.entry(1, 2), p.lambda_p);
        assert_abs_diff_eq!(g.entry(1, 1), -(p.h_s + p.r_s + p.lambda_p), epsilon = 1e-15);
        assert_eq!(g.entry(2, 0), p.mu_p);
        assert_eq!(g.blocking_rates(), &[0.0, p.lambda_s, p.lambda_s]);
    }

    #[test]
    fn generator_matches_pairwise_rates() {
        let p = SystemParams::reference(2.0, 4.0, 2.5);
        let space = p.enumerate_states();
        let g = Generator::build(&space, &p).unwrap();
        for (a, sa) in space.iter() {
            let mut off = 0.0;
            for (b, sb) in space.iter() {
                if a != b {
                    assert_eq!(g.entry(a, b), p.transition_rate(sa, sb).unwrap());
                    off += g.entry(a, b);
                }
            }
            assert!(off > 0.0);
            assert_abs_diff_eq!(off + g.entry(a, a), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_state_closed_form() {
        let p = tiny(0.0);
        let a = analyze(&p).unwrap();
        let mu = p.h_s + p.r_s;
        let busy = p.lambda_s / (p.lambda_s + mu);
        assert_abs_diff_eq!(a.steady.prob(&a.space, SystemState::new(0, 1)), busy, epsilon = 1e-13);
        assert_abs_diff_eq!(a.steady.prob(&a.space, SystemState::new(0, 0)), 1.0 - busy, epsilon = 1e-13);
        assert!(a.steady.prob(&a.space, SystemState::new(1, 0)) < 1e-15);
        assert_abs_diff_eq!(a.steady.pi.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.metrics.p_block, busy, epsilon = 1e-13);
        assert_abs_diff_eq!(a.metrics.utilization, busy, epsilon = 1e-13);
        assert_eq!(a.metrics.p_drop, 0.0);
        assert!(verify_balance(&a.steady, &a.generator) < 1e-12);
    }

    #[test]
    fn residual_reacts_to_perturbation() {
        let p = tiny(0.0);
        let a = analyze(&p).unwrap();
        let mut bumped = a.steady.clone();
        bumped.pi[0] += 1e-3;
        let r = verify_balance(&bumped, &a.generator);
        // row (0,0) leaks at λ_s
        assert_abs_diff_eq!(r, p.lambda_s * 1e-3, epsilon = 1e-12);
    }

    /// SU-only chain: a truncated birth-death process with birth λ_s and
    /// death j·μ_s(0,j). Product form π_j ∝ Π λ_s / (k μ_s(0,k)).
    fn birth_death_oracle(p: &SystemParams) -> Vec<f64> {
        let max_j = (p.channels as f64 / p.b_min).floor() as usize;
        let mut w = vec![1.0];
        for k in 1..=max_j {
            let share = ((p.channels as f64) / k as f64).clamp(p.b_min, p.b_max);
            let death = k as f64 * (share * p.h_s + p.r_s);
            w.push(w[k - 1] * p.lambda_s / death);
        }
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }

    #[test]
    fn su_only_chain_matches_product_form() {
        for (b_min, b_max) in [(1.0, 1.0), (2.0, 4.0), (1.0, 4.0), (3.0, 3.0), (1.5, 5.0)] {
            let p = SystemParams::reference(b_min, b_max, 0.0);
            let a = analyze(&p).unwrap();
            let oracle = birth_death_oracle(&p);
            for (j, want) in oracle.iter().enumerate() {
                let got = a.steady.prob(&a.space, SystemState::new(0, j as u32));
                assert_abs_diff_eq!(got, *want, epsilon = 1e-12);
            }
            assert_eq!(a.metrics.p_drop, 0.0);
        }
    }

    #[test]
    fn rejects_non_generator() {
        let p = SystemParams::reference(2.0, 4.0, 1.0);
        let space = p.enumerate_states();
        let mut g = Generator::build(&space, &p).unwrap();
        g.q[(0, 1)] += 3.0;
        assert!(g.solve_steady_state(DEFAULT_RESIDUAL_TOL).is_err());
    }

    #[test]
    fn reference_residual_is_small() {
        let a = analyze(&SystemParams::reference(2.0, 4.0, 2.0)).unwrap();
        assert!(a.steady.residual < 1e-9);
        assert_eq!(a.space.len(), 49);
    }

    #[test]
    fn ordering_does_not_change_solution() {
        let p = SystemParams::reference(1.0, 4.0, 3.0);
        let base = analyze(&p).unwrap();
        let mut states = base.space.states().to_vec();
        states.reverse();
        states.swap(3, 17);
        let space = StateSpace::with_ordering(&p, states).unwrap();
        let g = Generator::build(&space, &p).unwrap();
        let ss = g.solve_steady_state(DEFAULT_RESIDUAL_TOL).unwrap();
        for (k, s) in space.iter() {
            assert_abs_diff_eq!(ss.pi[k], base.steady.prob(&base.space, s), epsilon = 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn metric_ranges_and_flow_balance(
            n in 2u32..=12,
            b_min in 1u32..=3,
            extra in 0u32..=3,
            lambda_p in 0.0..6.0f64,
            lambda_s in 0.2..10.0f64,
            mu_p in 0.1..2.0f64,
        ) {
            prop_assume!(b_min + extra <= n);
            let p = SystemParams {
                channels: n,
                b_min: b_min as f64,
                b_max: (b_min + extra) as f64,
                lambda_p,
                lambda_s,
                mu_p,
                h_s: 1.0,
                r_s: 0.4,
            };
            let a = analyze(&p).unwrap();
            let m = a.metrics;
            prop_assert!((0.0..=1.0).contains(&m.p_block));
            prop_assert!((0.0..=1.0).contains(&m.p_drop));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&m.utilization));
            prop_assert!(m.throughput >= 0.0 && m.throughput <= lambda_s);
            let flow = (1.0 - m.p_block) * (1.0 - m.p_drop) * lambda_s;
            prop_assert!((m.throughput - flow).abs() < 1e-9);
        }
    }
}
