//! Shared test oracles, independent of the sweep solver's code path.

use nalgebra::{Complex, DMatrix, DVector};
use vvc_core::network::NetworkModel;
use vvc_core::powerflow::Injection;

/// Reference polar Newton-Raphson power flow on the full admittance matrix.
/// All non-head buses are P-Q. Returns voltage magnitudes, or None if the
/// iteration fails to reach 1e-12 worst mismatch in 60 steps.
pub fn newton_solve(net: &NetworkModel, inj: &Injection) -> Option<DVector<f64>> {
    let n = net.n();
    let nb = n + 1; // bus 0 is the head

    let mut ybus = DMatrix::<Complex<f64>>::zeros(nb, nb);
    for i in 0..n {
        let z = net.branch_into(i);
        let y = Complex::new(1.0, 0.0) / Complex::new(z.r, z.x);
        let a = i + 1;
        let b = match net.parent(i) {
            Some(p) => p + 1,
            None => 0,
        };
        ybus[(a, a)] += y;
        ybus[(b, b)] += y;
        ybus[(a, b)] -= y;
        ybus[(b, a)] -= y;
    }

    let mut vm = vec![net.head_voltage(); nb];
    let mut va = vec![0.0f64; nb];

    let calc = |vm: &[f64], va: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; nb];
        let mut q = vec![0.0; nb];
        for i in 0..nb {
            for j in 0..nb {
                let y = ybus[(i, j)];
                let (g, b) = (y.re, y.im);
                let t = va[i] - va[j];
                p[i] += vm[i] * vm[j] * (g * t.cos() + b * t.sin());
                q[i] += vm[i] * vm[j] * (g * t.sin() - b * t.cos());
            }
        }
        (p, q)
    };

    for _ in 0..60 {
        let (p_calc, q_calc) = calc(&vm, &va);
        let mut mismatch = DVector::zeros(2 * n);
        let mut worst = 0.0f64;
        for i in 0..n {
            let dp = inj.p[i] - p_calc[i + 1];
            let dq = inj.q[i] - q_calc[i + 1];
            mismatch[i] = dp;
            mismatch[n + i] = dq;
            worst = worst.max(dp.abs()).max(dq.abs());
        }
        if worst < 1e-12 {
            return Some(DVector::from_iterator(n, vm[1..].iter().cloned()));
        }

        // standard polar Jacobian, PQ buses only
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            let bi = i + 1;
            for j in 0..n {
                let bj = j + 1;
                let y = ybus[(bi, bj)];
                let (g, b) = (y.re, y.im);
                let t = va[bi] - va[bj];
                if bi == bj {
                    jac[(i, j)] = -q_calc[bi] - b * vm[bi] * vm[bi];
                    jac[(i, n + j)] = p_calc[bi] / vm[bi] + g * vm[bi];
                    jac[(n + i, j)] = p_calc[bi] - g * vm[bi] * vm[bi];
                    jac[(n + i, n + j)] = q_calc[bi] / vm[bi] - b * vm[bi];
                } else {
                    let vv = vm[bi] * vm[bj];
                    jac[(i, j)] = vv * (g * t.sin() - b * t.cos());
                    jac[(i, n + j)] = vm[bi] * (g * t.cos() + b * t.sin());
                    jac[(n + i, j)] = -vv * (g * t.cos() + b * t.sin());
                    jac[(n + i, n + j)] = vm[bi] * (g * t.sin() - b * t.cos());
                }
            }
        }
        let dx = jac.lu().solve(&mismatch)?;
        for i in 0..n {
            va[i + 1] += dx[i];
            vm[i + 1] += dx[n + i];
            if !(vm[i + 1] > 0.0) || !vm[i + 1].is_finite() {
                return None;
            }
        }
    }
    None
}
