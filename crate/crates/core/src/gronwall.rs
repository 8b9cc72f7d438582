//! Discrete Gronwall lemmas: the classical one, the uniform one with window-sum hypotheses,
//! and the divided-form variant `(1 - k eta_n) xi_n <= xi_{n-1} + k zeta_n`.
//!
//! Sequences are indexed by `n = 0..=n_star`. Every bound is paired with a hypothesis checker;
//! the uniform bounds refuse to return a number when a hypothesis fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// The three lemmas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lemma {
    /// `xi_n <= xi_{n-1}(1 + k eta_{n-1}) + k zeta_n` for `1 <= n <= n_star`.
    Classical,
    /// Same recursion for `n1 <= n <= n_star`, window sums over `n' ..= n' + n2`.
    Uniform,
    /// `(1 - k eta_n) xi_n <= xi_{n-1} + k zeta_n` for `n >= n0`, windows `k0 ..= k0 + n1`.
    Divided,
}

/// Data of one Gronwall instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GronwallInput {
    pub k: f64,
    pub xi0: f64,
    /// `eta[n]`, `n = 0..=n_star`.
    pub eta: Vec<f64>,
    /// `zeta[n]`, `n = 0..=n_star` (`zeta[0]` unused).
    pub zeta: Vec<f64>,
    /// Candidate sequence `xi[n]`; may be empty, in which case the recursion and the
    /// `a3` window condition are not checked.
    pub xi: Vec<f64>,
    pub n_star: usize,
    /// `(n1, n2)` for [`Lemma::Uniform`], `(n0, n1)` for [`Lemma::Divided`].
    pub window: (usize, usize),
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

/// Result of a hypothesis check.
#[derive(Debug, Clone, PartialEq)]
pub enum HypothesisVerdict {
    Pass,
    Fail {
        /// `"eta"`, `"zeta"`, `"xi"`, `"recursion"`, `"step"`, `"window"`, `"sign"` or `"length"`.
        condition: &'static str,
        /// Start of the offending window or the offending index.
        index: usize,
        value: f64,
        limit: f64,
    },
}

impl HypothesisVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, HypothesisVerdict::Pass)
    }
}

fn fail(condition: &'static str, index: usize, value: f64, limit: f64) -> HypothesisVerdict {
    HypothesisVerdict::Fail { condition, index, value, limit }
}

fn window_sum(s: &[f64], from: usize, to: usize) -> f64 {
    s[from..=to].iter().sum()
}

/// Window starts and length parameter for a lemma: `(first start, last start, extra length)`.
fn windows(inp: &GronwallInput, lemma: Lemma) -> Option<(usize, usize, usize)> {
    let (a, b) = inp.window;
    match lemma {
        Lemma::Classical => None,
        Lemma::Uniform => Some((a, inp.n_star.checked_sub(b)?, b)),
        Lemma::Divided => Some((a, inp.n_star.checked_sub(b)?, b)),
    }
}

fn check_shape(inp: &GronwallInput, lemma: Lemma) -> HypothesisVerdict {
    let len = inp.n_star + 1;
    if inp.eta.len() < len || inp.zeta.len() < len || (!inp.xi.is_empty() && inp.xi.len() < len) {
        return fail("length", inp.eta.len().min(inp.zeta.len()), len as f64, len as f64);
    }
    if !(inp.k > 0.0) {
        return fail("step", 0, inp.k, 0.0);
    }
    let (a, b) = inp.window;
    let bad = match lemma {
        Lemma::Classical => inp.n_star < 1,
        Lemma::Uniform => a < 1 || b < 1 || a >= inp.n_star || a + b + 1 > inp.n_star,
        Lemma::Divided => a < 1 || b < 1 || a + b > inp.n_star,
    };
    if bad {
        return fail("window", a, b as f64, inp.n_star as f64);
    }
    HypothesisVerdict::Pass
}

/// Check every hypothesis of `lemma`; returns the first violation.
pub fn verify_hypotheses(inp: &GronwallInput, lemma: Lemma) -> HypothesisVerdict {
    let shape = check_shape(inp, lemma);
    if !shape.is_pass() {
        return shape;
    }
    let n_star = inp.n_star;
    for n in 0..=n_star {
        let x = if inp.xi.is_empty() { 0.0 } else { inp.xi[n] };
        if !(inp.eta[n] >= 0.0 && inp.zeta[n] >= 0.0 && x >= 0.0) {
            return fail("sign", n, inp.eta[n].min(inp.zeta[n]).min(x), 0.0);
        }
    }
    let k = inp.k;
    if lemma == Lemma::Divided {
        for n in inp.window.0..=n_star {
            if k * inp.eta[n] >= 0.5 {
                return fail("step", n, k * inp.eta[n], 0.5);
            }
        }
    }
    if !inp.xi.is_empty() {
        let xi = &inp.xi;
        let first = match lemma {
            Lemma::Classical => 1,
            Lemma::Uniform | Lemma::Divided => inp.window.0,
        };
        for n in first..=n_star {
            let (lhs, rhs) = match lemma {
                Lemma::Divided => ((1.0 - k * inp.eta[n]) * xi[n], xi[n - 1] + k * inp.zeta[n]),
                _ => (xi[n], xi[n - 1] * (1.0 + k * inp.eta[n - 1]) + k * inp.zeta[n]),
            };
            if lhs > rhs * (1.0 + 1e-14) {
                return fail("recursion", n, lhs, rhs);
            }
        }
        if lemma == Lemma::Classical && xi[0] > inp.xi0 {
            return fail("recursion", 0, xi[0], inp.xi0);
        }
    }
    if let Some((s0, s1, len)) = windows(inp, lemma) {
        for s in s0..=s1 {
            let e = k * window_sum(&inp.eta, s, s + len);
            if e > inp.a1 {
                return fail("eta", s, e, inp.a1);
            }
            let z = k * window_sum(&inp.zeta, s, s + len);
            if z > inp.a2 {
                return fail("zeta", s, z, inp.a2);
            }
            if !inp.xi.is_empty() {
                let x = k * window_sum(&inp.xi, s, s + len);
                if x > inp.a3 {
                    return fail("xi", s, x, inp.a3);
                }
            }
        }
    }
    HypothesisVerdict::Pass
}

/// `xi0 exp(k sum_{i<n} eta_i) + k sum_{i=1}^{n-1} zeta_i exp(k sum_{j=i}^{n-1} eta_j) + k zeta_n`.
pub fn gronwall_classical_bound(inp: &GronwallInput, n: usize) -> Result<f64> {
    if n < 2 || n > inp.n_star {
        return Err(Error::OutOfRange { index: n, len: inp.n_star + 1 });
    }
    if inp.eta.len() <= n || inp.zeta.len() <= n {
        return Err(Error::ShapeMismatch(format!("sequences shorter than n = {n}")));
    }
    let k = inp.k;
    // tail[i] = k sum_{j=i}^{n-1} eta_j
    let mut tail = vec![0.0; n + 1];
    for i in (0..n).rev() {
        tail[i] = tail[i + 1] + k * inp.eta[i];
    }
    let mut b = inp.xi0 * tail[0].exp();
    for i in 1..n {
        b += k * inp.zeta[i] * tail[i].exp();
    }
    Ok(b + k * inp.zeta[n])
}

fn hypothesis_error(v: HypothesisVerdict) -> Error {
    match v {
        HypothesisVerdict::Fail { condition, index, value, limit } => {
            Error::Hypothesis(format!("{condition} condition fails at {index}: {value:e} > {limit:e}"))
        }
        HypothesisVerdict::Pass => unreachable!(),
    }
}

/// `(a3/(k n2) + a2) e^{a1}`, valid for `n1 + n2 + 1 <= n <= n_star`.
pub fn gronwall_uniform_bound(inp: &GronwallInput) -> Result<f64> {
    let v = verify_hypotheses(inp, Lemma::Uniform);
    if !v.is_pass() {
        return Err(hypothesis_error(v));
    }
    let n2 = inp.window.1 as f64;
    Ok((inp.a3 / (inp.k * n2) + inp.a2) * inp.a1.exp())
}

/// `(a3/(k n1) + a2) e^{4 a1}`, valid for `n >= n0 + n1`.
pub fn gronwall_uniform_v2_bound(inp: &GronwallInput) -> Result<f64> {
    let v = verify_hypotheses(inp, Lemma::Divided);
    match v {
        HypothesisVerdict::Pass => {}
        HypothesisVerdict::Fail { condition: "step", index, value, .. } if value >= 0.5 => {
            return Err(Error::Precondition(format!("k eta_{index} = {value} is not below 1/2")));
        }
        other => return Err(hypothesis_error(other)),
    }
    let n1 = inp.window.1 as f64;
    Ok((inp.a3 / (inp.k * n1) + inp.a2) * (4.0 * inp.a1).exp())
}

/// Indices covered by the conclusion of `lemma`.
pub fn covered_range(inp: &GronwallInput, lemma: Lemma) -> std::ops::RangeInclusive<usize> {
    let (a, b) = inp.window;
    match lemma {
        Lemma::Classical => 2..=inp.n_star,
        Lemma::Uniform => a + b + 1..=inp.n_star,
        Lemma::Divided => a + b..=inp.n_star,
    }
}

/// The maximal sequence allowed by the recursion of `lemma` (equality throughout), started
/// from `start` at index 0 (classical) or just before the recursion range.
pub fn equality_recursion(inp: &GronwallInput, lemma: Lemma, start: f64) -> Vec<f64> {
    let k = inp.k;
    let mut xi = vec![0.0; inp.n_star + 1];
    let first = match lemma {
        Lemma::Classical => 1,
        Lemma::Uniform | Lemma::Divided => inp.window.0,
    };
    xi[first - 1] = start;
    for n in first..=inp.n_star {
        xi[n] = match lemma {
            Lemma::Divided => (xi[n - 1] + k * inp.zeta[n]) / (1.0 - k * inp.eta[n]),
            _ => xi[n - 1] * (1.0 + k * inp.eta[n - 1]) + k * inp.zeta[n],
        };
    }
    xi
}

/// Smallest admissible window constants for the given sequences.
pub fn tight_window_constants(inp: &GronwallInput, lemma: Lemma) -> (f64, f64, f64) {
    let (s0, s1, len) = windows(inp, lemma).expect("uniform lemmas only");
    let k = inp.k;
    let mut a = (0.0f64, 0.0f64, 0.0f64);
    for s in s0..=s1 {
        a.0 = a.0.max(k * window_sum(&inp.eta, s, s + len));
        a.1 = a.1.max(k * window_sum(&inp.zeta, s, s + len));
        a.2 = a.2.max(k * window_sum(&inp.xi, s, s + len));
    }
    a
}

/// Outcome of checking one supplied instance.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceVerdict {
    /// The instance does not satisfy the lemma's hypotheses; no bound is claimed.
    HypothesisFail(HypothesisVerdict),
    /// The hypotheses hold but `xi_n` exceeds the bound.
    BoundFail { n: usize, xi: f64, bound: f64 },
    Pass { max_ratio: f64 },
}

/// Check `xi` (or, when empty, the equality recursion from `xi0`) against the bound of `lemma`.
pub fn check_instance(inp: &GronwallInput, lemma: Lemma) -> InstanceVerdict {
    let v = verify_hypotheses(inp, lemma);
    if !v.is_pass() {
        return InstanceVerdict::HypothesisFail(v);
    }
    let xi = if inp.xi.is_empty() { equality_recursion(inp, lemma, inp.xi0) } else { inp.xi.clone() };
    let uniform = match lemma {
        Lemma::Classical => None,
        Lemma::Uniform => Some(gronwall_uniform_bound(inp)),
        Lemma::Divided => Some(gronwall_uniform_v2_bound(inp)),
    };
    let mut max_ratio = 0.0f64;
    for n in covered_range(inp, lemma) {
        let bound = match &uniform {
            None => match gronwall_classical_bound(inp, n) {
                Ok(b) => b,
                Err(_) => continue,
            },
            Some(Ok(b)) => *b,
            Some(Err(_)) => return InstanceVerdict::HypothesisFail(verify_hypotheses(inp, lemma)),
        };
        if xi[n] > bound * (1.0 + 1e-12) {
            return InstanceVerdict::BoundFail { n, xi: xi[n], bound };
        }
        if bound > 0.0 {
            max_ratio = max_ratio.max(xi[n] / bound);
        }
    }
    InstanceVerdict::Pass { max_ratio }
}

/// Summary of a fuzz campaign for one lemma.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzSummary {
    pub lemma: Lemma,
    pub trials: usize,
    /// Instances where the oracle sequence exceeded the bound.
    pub bound_failures: usize,
    /// Largest `xi_n / bound` seen.
    pub max_ratio: f64,
    /// Hypothesis-violating instances that were refused.
    pub rejected: usize,
    /// Hypothesis-violating instances that were accepted (must be 0).
    pub accepted_violations: usize,
}

impl FuzzSummary {
    pub fn pass(&self) -> bool {
        self.bound_failures == 0 && self.accepted_violations == 0
    }
}

fn random_instance(rng: &mut ChaCha8Rng, lemma: Lemma) -> (GronwallInput, f64) {
    let k = 10f64.powf(rng.gen_range(-3.0..-0.3));
    let n_star = rng.gen_range(6..160);
    let growth = rng.gen_range(0.0..3.0);
    let shape = rng.gen_range(0..3);
    let eta: Vec<f64> = (0..=n_star)
        .map(|n| {
            let base = match shape {
                0 => 1.0,
                1 => rng.gen::<f64>(),
                _ => if rng.gen_bool(0.1) { 10.0 * rng.gen::<f64>() } else { 0.0 },
            };
            match lemma {
                // k eta in [0, 0.49], sometimes exactly 0.49
                Lemma::Divided => {
                    if shape == 0 && n % 2 == 0 { 0.49 / k } else { 0.49 * base.min(1.0) / k }
                }
                _ => growth * base / (k * n_star as f64),
            }
        })
        .collect();
    let zs = rng.gen_range(0.0..5.0);
    let zeta: Vec<f64> = (0..=n_star).map(|_| zs * rng.gen::<f64>()).collect();
    let start = rng.gen_range(0.0..10.0);
    let (w0, w1) = match lemma {
        Lemma::Classical => (0, 0),
        Lemma::Uniform => {
            let n1 = rng.gen_range(1..n_star - 2);
            (n1, rng.gen_range(1..=n_star - n1 - 1))
        }
        Lemma::Divided => {
            let n0 = rng.gen_range(1..n_star - 1);
            (n0, rng.gen_range(1..=n_star - n0))
        }
    };
    let mut inp = GronwallInput { k, xi0: start, eta, zeta, xi: Vec::new(), n_star, window: (w0, w1), a1: 0.0, a2: 0.0, a3: 0.0 };
    if lemma == Lemma::Divided {
        // keep the divided recursion moderate so that the 4 a1 exponent stays finite
        let cap = 40.0 / ((n_star as f64) * 0.49);
        if cap < 1.0 {
            inp.eta.iter_mut().for_each(|e| *e *= cap);
        }
    }
    (inp, start)
}

/// Run `trials` random oracle-dominance checks plus as many hypothesis-violating instances.
pub fn fuzz_lemma(lemma: Lemma, seed: u64, trials: usize) -> FuzzSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (lemma as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut out = FuzzSummary { lemma, trials, bound_failures: 0, max_ratio: 0.0, rejected: 0, accepted_violations: 0 };
    for _ in 0..trials {
        let (mut inp, start) = random_instance(&mut rng, lemma);
        inp.xi = equality_recursion(&inp, lemma, start);
        if lemma != Lemma::Classical {
            let (a1, a2, a3) = tight_window_constants(&inp, lemma);
            let inflate = |a: f64, r: &mut ChaCha8Rng| if r.gen_bool(0.3) { a } else { a * (1.0 + r.gen::<f64>()) };
            inp.a1 = inflate(a1, &mut rng);
            inp.a2 = inflate(a2, &mut rng);
            inp.a3 = inflate(a3, &mut rng);
        }
        let mut check = |xi: f64, b: f64| {
            let ratio = if b > 0.0 { xi / b } else if xi > 0.0 { f64::INFINITY } else { 0.0 };
            out.max_ratio = out.max_ratio.max(ratio);
            if xi > b * (1.0 + 1e-12) {
                out.bound_failures += 1;
            }
        };
        match lemma {
            Lemma::Classical => {
                for n in covered_range(&inp, lemma) {
                    let b = gronwall_classical_bound(&inp, n).expect("index in range");
                    check(inp.xi[n], b);
                }
            }
            Lemma::Uniform | Lemma::Divided => {
                let b = match lemma {
                    Lemma::Uniform => gronwall_uniform_bound(&inp),
                    _ => gronwall_uniform_v2_bound(&inp),
                };
                match b {
                    Ok(b) => {
                        for n in covered_range(&inp, lemma) {
                            check(inp.xi[n], b);
                        }
                    }
                    // an admissible instance that is refused counts as a failure
                    Err(_) => out.bound_failures += 1,
                }
                // hypothesis violation: shrink one window constant below its tight value
                let (a1, a2, a3) = tight_window_constants(&inp, lemma);
                let mut bad = inp.clone();
                match rng.gen_range(0..3) {
                    0 if a1 > 0.0 => bad.a1 = 0.5 * a1,
                    1 if a2 > 0.0 => bad.a2 = 0.5 * a2,
                    _ => bad.a3 = 0.5 * a3,
                }
                let refused = match lemma {
                    Lemma::Uniform => gronwall_uniform_bound(&bad).is_err(),
                    _ => gronwall_uniform_v2_bound(&bad).is_err(),
                };
                if refused && !verify_hypotheses(&bad, lemma).is_pass() {
                    out.rejected += 1;
                } else if a3 > 0.0 {
                    out.accepted_violations += 1;
                }
            }
        }
    }
    out
}
