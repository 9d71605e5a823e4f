//! Special functions and small probability helpers shared by the inference,
//! learning and planning code.

pub use statrs::function::gamma::ln_gamma;

/// Digamma function ψ(x) for x > 0.
///
/// Shifts the argument above 10 with the recurrence ψ(x) = ψ(x+1) − 1/x and
/// then applies the asymptotic expansion.
pub fn digamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0, "digamma argument must be positive, got {x}");
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    acc + x.ln() - 0.5 * inv - series
}

/// Trigamma function ψ′(x) for x > 0.
pub fn trigamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0, "trigamma argument must be positive, got {x}");
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/2x² + 1/6x³ − 1/30x⁵ + 1/42x⁷ − 1/30x⁹ + 5/66x¹¹
    let tail = inv
        * inv2
        * (1.0 / 6.0
            - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))));
    acc + inv + 0.5 * inv2 + tail
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Shannon entropy in nats; zero-probability entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum()
}

/// KL(Dir(q) ‖ Dir(p)) in nats.
pub fn dirichlet_kl(q: &[f64], p: &[f64]) -> f64 {
    dirichlet_kl_with(q, p, digamma)
}

pub(crate) fn dirichlet_kl_with(q: &[f64], p: &[f64], psi: fn(f64) -> f64) -> f64 {
    debug_assert_eq!(q.len(), p.len());
    let q0: f64 = q.iter().sum();
    let p0: f64 = p.iter().sum();
    let psi_q0 = psi(q0);
    let mut kl = ln_gamma(q0) - ln_gamma(p0);
    for (&qk, &pk) in q.iter().zip(p) {
        kl += ln_gamma(pk) - ln_gamma(qk) + (qk - pk) * (psi(qk) - psi_q0);
    }
    kl
}

/// Log density of Dirichlet(alpha) at a point `x` on the simplex.
pub fn dirichlet_log_density(alpha: &[f64], x: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    let mut out = ln_gamma(a0);
    for (&a, &xi) in alpha.iter().zip(x) {
        out += (a - 1.0) * xi.ln() - ln_gamma(a);
    }
    out
}

pub fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}
