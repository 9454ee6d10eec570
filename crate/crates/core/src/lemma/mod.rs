//! Expected best value among the `k` nearest actions.
//!
//! Model: each of the `k` retrieved actions is independently "bad" with
//! probability `p`, in which case its value is `q - c`; otherwise its value
//! is uniform on `[q - b, q + b]`. The critic picks the best of the `k`.
//!
//! Normalized coordinates map `[q - b, q + b]` onto `[0, 1]`, which puts the
//! bad value at `1/2 - c/(2b)`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{par, rng, Error, Result};

/// Below this `p` the geometric factor is summed term by term.
const SMALL_P: f64 = 1e-4;
const MC_SHARDS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaScenario {
    /// Probability that a retrieved action is bad.
    pub p: f64,
    /// Half-width of the band of ordinary action values.
    pub b: f64,
    /// Penalty of a bad action below the baseline.
    pub c: f64,
    pub k: usize,
    /// Baseline value at the proto-action.
    pub q: f64,
}

impl LemmaScenario {
    pub fn new(p: f64, b: f64, c: f64, k: usize, q: f64) -> Result<Self> {
        let s = LemmaScenario { p, b, c, k, q };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p) {
            return Err(Error::invalid(format!("p must lie in [0, 1), got {}", self.p)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::invalid(format!("b must be positive, got {}", self.b)));
        }
        if !(self.c >= self.b && self.c.is_finite()) {
            return Err(Error::invalid(format!("c must be at least b, got c={} b={}", self.c, self.b)));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !self.q.is_finite() {
            return Err(Error::NonFinite("baseline value".into()));
        }
        Ok(())
    }

    pub fn with_k(self, k: usize) -> Self {
        LemmaScenario { k, ..self }
    }

    /// Same scenario in normalized coordinates: `q = b = 1/2`, penalty `c/(2b)`.
    pub fn normalized(&self) -> Self {
        LemmaScenario {
            p: self.p,
            b: 0.5,
            c: self.c / (2.0 * self.b),
            k: self.k,
            q: 0.5,
        }
    }

    /// Normalized position of the bad value.
    pub fn bad_point(&self) -> f64 {
        0.5 - self.c / (2.0 * self.b)
    }
}

/// CDF of one action's value in normalized coordinates: 0 below the bad
/// value, `p` from there up to 0, `p + (1-p)x` on `[0, 1]`, then 1.
pub fn value_cdf(s: &LemmaScenario, x: f64) -> f64 {
    if x < s.bad_point() {
        0.0
    } else if x < 0.0 {
        s.p
    } else if x <= 1.0 {
        s.p + (1.0 - s.p) * x
    } else {
        1.0
    }
}

/// CDF of the best of `k` independent actions.
pub fn max_cdf(s: &LemmaScenario, x: f64) -> f64 {
    value_cdf(s, x).powi(s.k as i32)
}

/// `1 + p + ... + p^k`.
pub fn geometric_sum(p: f64, k: usize) -> f64 {
    if p < SMALL_P {
        let mut total = 0.0;
        let mut term = 1.0;
        for _ in 0..=k {
            total += term;
            term *= p;
            if term == 0.0 {
                break;
            }
        }
        total
    } else {
        -((k as f64 + 1.0) * p.ln()).exp_m1() / (1.0 - p)
    }
}

/// Shortfall of the expected best value below `q + b`:
/// `p^k (c - b) + 2b/(k+1) · (1 + p + ... + p^k)`.
pub fn expected_gap(s: &LemmaScenario) -> Result<f64> {
    s.validate()?;
    let pk = s.p.powi(s.k as i32);
    Ok(pk * (s.c - s.b) + 2.0 * s.b / (s.k as f64 + 1.0) * geometric_sum(s.p, s.k))
}

/// Expected value of the best of `k` retrieved actions.
pub fn expected_max(s: &LemmaScenario) -> Result<f64> {
    Ok(s.q + s.b - expected_gap(s)?)
}

/// The same expectation written term by term, as
/// `q + b - p^k c - b (2/(k+1) · (1 - p^{k+1})/(1 - p) - p^k)`.
pub fn expected_max_expanded(s: &LemmaScenario) -> Result<f64> {
    s.validate()?;
    let pk = s.p.powi(s.k as i32);
    let k1 = s.k as f64 + 1.0;
    Ok(s.q + s.b - pk * s.c - s.b * (2.0 / k1 * geometric_sum(s.p, s.k) - pk))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Sample mean and standard error of the best of `k` simulated action values.
/// Work is split into fixed shards with their own streams, so the estimate
/// only depends on `seed`.
pub fn monte_carlo_max(s: &LemmaScenario, samples: usize, seed: u64) -> Result<McEstimate> {
    s.validate()?;
    if samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let shards: Vec<(usize, usize)> = (0..MC_SHARDS)
        .map(|i| (i, samples / MC_SHARDS + usize::from(i < samples % MC_SHARDS)))
        .collect();
    let scenario = *s;
    let sums = par::map(shards, move |(shard, count)| {
        let mut r = rng::stream(seed, 0x1E33A + shard as u64);
        let bad = scenario.q - scenario.c;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..count {
            let mut best = f64::NEG_INFINITY;
            for _ in 0..scenario.k {
                let v = if r.random::<f64>() < scenario.p {
                    bad
                } else {
                    scenario.q - scenario.b + 2.0 * scenario.b * r.random::<f64>()
                };
                best = best.max(v);
            }
            sum += best;
            sum_sq += best * best;
        }
        (sum, sum_sq)
    });
    let (sum, sum_sq) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let mean = sum / n;
    let var = if samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_error: (var / n).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub p: f64,
    pub b: f64,
    pub c: f64,
    pub k: usize,
    pub expected_max: f64,
    pub mc_mean: Option<f64>,
    pub mc_se: Option<f64>,
    /// `E(k) - E(previous k)`; the first row compares against `k - 1`
    /// (0 when `k = 1`).
    pub marginal_gain: f64,
}

/// Expected best value per `k`, with first differences and, if `mc_samples`
/// is given, a Monte Carlo estimate next to each closed-form value.
pub fn diminishing_returns_curve(
    base: &LemmaScenario,
    k_values: &[usize],
    mc_samples: Option<usize>,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    if k_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("k values must be strictly ascending"));
    }
    let mut out = Vec::with_capacity(k_values.len());
    let mut prev: Option<f64> = None;
    for (i, &k) in k_values.iter().enumerate() {
        let s = base.with_k(k);
        let e = expected_max(&s)?;
        let gain = match prev {
            Some(p) => e - p,
            None if k > 1 => e - expected_max(&s.with_k(k - 1))?,
            None => 0.0,
        };
        let mc = match mc_samples {
            Some(n) => Some(monte_carlo_max(&s, n, rng::derive_seed(seed, i as u64))?),
            None => None,
        };
        out.push(CurvePoint {
            p: s.p,
            b: s.b,
            c: s.c,
            k,
            expected_max: e,
            mc_mean: mc.map(|m| m.mean),
            mc_se: mc.map(|m| m.std_error),
            marginal_gain: gain,
        });
        prev = Some(e);
    }
    Ok(out)
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// Both sides of the integration-by-parts identity over `[0, 1]`:
/// `∫ x dF_max` (from the density) and `[x F_max] - ∫ F_max dx`.
pub fn integration_by_parts_sides(s: &LemmaScenario, tol: f64) -> (f64, f64) {
    let (p, k) = (s.p, s.k as i32);
    let density = |x: f64| x * k as f64 * (1.0 - p) * (p + (1.0 - p) * x).powi(k - 1);
    let lhs = adaptive_simpson(&density, 0.0, 1.0, tol);
    let rhs = max_cdf(s, 1.0) - adaptive_simpson(&|x| max_cdf(s, x), 0.0, 1.0, tol);
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(p: f64, b: f64, c: f64, k: usize) -> LemmaScenario {
        LemmaScenario::new(p, b, c, k, 0.0).unwrap()
    }

    #[test]
    fn cdf_branches() {
        let s = sc(0.5, 0.5, 1.0, 3);
        assert_eq!(value_cdf(&s, -1.5), 0.0);
        assert_eq!(value_cdf(&s, 0.0), 0.5);
        assert_eq!(value_cdf(&s, 1.0), 1.0);
        assert_eq!(value_cdf(&s, 7.0), 1.0);
        assert_eq!(max_cdf(&s, -0.25), 0.125);
        let one = s.with_k(1);
        for i in 0..=40 {
            let x = -2.0 + i as f64 * 0.1;
            assert_eq!(max_cdf(&one, x), value_cdf(&one, x));
        }
    }

    #[test]
    fn max_cdf_is_monotone() {
        let s = sc(0.3, 1.0, 2.0, 4);
        let mut last = 0.0;
        for i in 0..1000 {
            let v = max_cdf(&s, -3.0 + 5.0 * i as f64 / 999.0);
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn closed_form_examples() {
        assert!(expected_max(&sc(0.0, 0.7, 1.0, 1)).unwrap().abs() < 1e-15);
        assert!((expected_max(&sc(0.0, 1.0, 1.0, 3)).unwrap() - 0.5).abs() < 1e-15);
        assert!((expected_max(&sc(0.1, 0.5, 1.0, 5)).unwrap() - 0.314_810).abs() < 1e-6);
        assert!(LemmaScenario::new(1.0, 0.5, 1.0, 3, 0.0).is_err());
        assert!(LemmaScenario::new(0.1, 1.0, 0.5, 3, 0.0).is_err());
    }

    #[test]
    fn forms_agree() {
        for p in [0.0, 1e-6, 0.1, 0.5, 0.99] {
            for k in [1, 2, 7, 100] {
                let s = sc(p, 0.5, 1.3, k);
                let a = expected_max(&s).unwrap();
                let b = expected_max_expanded(&s).unwrap();
                assert!((a - b).abs() < 1e-12, "p={p} k={k}");
            }
        }
    }

    #[test]
    fn geometric_sum_near_zero() {
        assert_eq!(geometric_sum(0.0, 10), 1.0);
        assert!((geometric_sum(1e-5, 3) - (1.0 + 1e-5 + 1e-10 + 1e-15)).abs() < 1e-16);
        assert!((geometric_sum(0.5, 3) - 1.875).abs() < 1e-15);
    }

    #[test]
    fn affine_rescaling() {
        let s = LemmaScenario::new(0.3, 2.0, 5.0, 4, 1.5).unwrap();
        let norm = expected_max(&s.normalized()).unwrap();
        let direct = expected_max(&s).unwrap();
        assert!((direct - (s.q + 2.0 * s.b * (norm - 0.5))).abs() < 1e-12);
    }

    #[test]
    fn integration_by_parts() {
        for (p, k) in [(0.0, 1), (0.2, 3), (0.5, 10), (0.9, 50)] {
            let (l, r) = integration_by_parts_sides(&sc(p, 0.5, 1.0, k), 1e-10);
            assert!((l - r).abs() < 1e-8, "p={p} k={k}: {l} vs {r}");
        }
    }

    #[test]
    fn zero_p_marginal_gain() {
        let b = 0.8;
        let ks: Vec<usize> = (1..=20).collect();
        let curve = diminishing_returns_curve(&sc(0.0, b, 1.0, 1), &ks, None, 0).unwrap();
        for w in curve.windows(2) {
            let k = w[0].k as f64;
            assert!((w[1].marginal_gain - 2.0 * b / ((k + 1.0) * (k + 2.0))).abs() < 1e-12);
        }
        assert!(diminishing_returns_curve(&sc(0.0, b, 1.0, 1), &[3, 2], None, 0).is_err());
    }

    #[test]
    fn monte_carlo_sanity() {
        let s = sc(0.0, 0.5, 1.0, 1);
        let est = monte_carlo_max(&s, 200_000, 3).unwrap();
        assert!(est.mean.abs() <= 3.0 * est.std_error);
        let bad = LemmaScenario::new(0.999, 0.5, 1.0, 1, 0.0).unwrap();
        assert!((monte_carlo_max(&bad, 100_000, 4).unwrap().mean + 1.0).abs() < 0.01);
        assert_eq!(monte_carlo_max(&s, 1000, 9).unwrap(), monte_carlo_max(&s, 1000, 9).unwrap());
        assert!(monte_carlo_max(&s, 0, 9).is_err());
    }

    #[test]
    fn curve_csv_columns() {
        let curve = diminishing_returns_curve(&sc(0.1, 0.5, 1.0, 1), &[1, 2, 4], Some(100), 0).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&curve, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("p,b,c,k,expected_max,mc_mean,mc_se,marginal_gain\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
