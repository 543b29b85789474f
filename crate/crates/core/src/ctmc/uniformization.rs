//! Second route to the stationary vector: uniformize `Q` into the DTMC
//! `P = I + Q/Λ` and power-iterate. Used only to cross-check the
//! least-squares solver.

use super::Generator;

const MAX_SWEEPS: usize = 2_000_000;

/// Stationary vector of the uniformized chain, iterated until successive
/// iterates differ by less than `tol` in max norm.
pub(crate) fn stationary(g: &Generator, tol: f64) -> Option<Vec<f64>> {
    let n = g.dimension();
    let q = g.matrix();
    let max_exit = (0..n).map(|k| -q[(k, k)]).fold(0.0, f64::max);
    if max_exit <= 0.0 {
        return None;
    }
    // Strictly above the largest exit rate keeps P aperiodic.
    let lambda = 1.05 * max_exit;

    // Sparse copy of P's off-diagonal part by column, so each sweep is
    // O(nnz) instead of O(n²).
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut stay = vec![0.0; n];
    for from in 0..n {
        stay[from] = 1.0 + q[(from, from)] / lambda;
        for to in 0..n {
            if to != from && q[(from, to)] != 0.0 {
                incoming[to].push((from, q[(from, to)] / lambda));
            }
        }
    }

    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..MAX_SWEEPS {
        for to in 0..n {
            next[to] = pi[to] * stay[to]
                + incoming[to].iter().map(|&(from, p)| pi[from] * p).sum::<f64>();
        }
        let z: f64 = next.iter().sum();
        let mut delta = 0.0f64;
        for k in 0..n {
            let v = next[k] / z;
            delta = delta.max((v - pi[k]).abs());
            pi[k] = v;
        }
        if delta < tol {
            return Some(pi);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::{analyze, DEFAULT_RESIDUAL_TOL};
    use crate::model::SystemParams;

    #[test]
    fn agrees_with_least_squares() {
        for (b_min, b_max, lp) in [(2.0, 4.0, 0.5), (4.0, 4.0, 5.0), (1.0, 4.0, 2.0), (2.0, 3.0, 3.5)] {
            let a = analyze(&SystemParams::reference(b_min, b_max, lp)).unwrap();
            let pi = stationary(&a.generator, 1e-15).unwrap();
            let worst = pi
                .iter()
                .zip(&a.steady.pi)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-8, "max diff {worst:e}");
            assert!(a.generator.balance_residual(&pi) < DEFAULT_RESIDUAL_TOL);
        }
    }
}
