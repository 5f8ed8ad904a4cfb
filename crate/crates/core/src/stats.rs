//! Statistical kernels shared by the validation and lesion-symptom modules.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::ln_gamma;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance (n - 1 denominator). Zero for fewer than two values.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pearson correlation. `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson: length mismatch");
    let n = a.len();
    if n < 2 {
        return None;
    }
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties receiving their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Sizes of each group of tied values.
fn tie_sizes(x: &[f64]) -> Vec<usize> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i + 1;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        sizes.push(j - i);
        i = j;
    }
    sizes
}

pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanTest {
    pub rho: f64,
    pub p_two_sided: f64,
    pub n: usize,
    pub method: PMethod,
}

/// Largest sample size for which the Spearman p-value is enumerated exactly.
pub const SPEARMAN_EXACT_MAX_N: usize = 10;

/// Spearman correlation with a two-sided p-value: exact permutation
/// distribution for small samples, Student t approximation otherwise.
pub fn spearman_test(a: &[f64], b: &[f64]) -> Option<SpearmanTest> {
    let n = a.len();
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let rho = pearson(&ra, &rb)?;
    if n <= SPEARMAN_EXACT_MAX_N {
        let p = spearman_exact_p(&ra, &rb, rho);
        Some(SpearmanTest { rho, p_two_sided: p, n, method: PMethod::Exact })
    } else {
        Some(SpearmanTest { rho, p_two_sided: spearman_t_p(rho, n), n, method: PMethod::Approximate })
    }
}

/// Two-sided p for a correlation via `t = r sqrt((n-2)/(1-r^2))`, df `n - 2`.
pub fn spearman_t_p(rho: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

fn spearman_exact_p(ra: &[f64], rb: &[f64], observed: f64) -> f64 {
    let n = ra.len();
    let mut perm = rb.to_vec();
    let mut c = vec![0usize; n];
    let mut total = 0u64;
    let mut extreme = 0u64;
    let threshold = observed.abs() - 1e-12;
    let mut visit = |p: &[f64]| {
        total += 1;
        if pearson(ra, p).is_some_and(|r| r.abs() >= threshold) {
            extreme += 1;
        }
    };
    // Heap's algorithm.
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    extreme as f64 / total as f64
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `P(X >= k)` for `X ~ Binomial(n, p)`, summed term by term.
pub fn binomial_upper_tail(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let terms: Vec<f64> = (k..=n)
        .map(|i| ln_choose(n, i) + i as f64 * lp + (n - i) as f64 * lq)
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    (max.exp() * sum).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonTest {
    /// Non-zero differences entering the test.
    pub n: usize,
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// One-sided p for a positive shift.
    pub p_greater: f64,
    pub method: PMethod,
}

/// Largest non-zero sample size handled by exact enumeration.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// One-sided Wilcoxon signed-rank test of a positive location shift.
///
/// Zero differences are dropped; if none remain the test is degenerate and
/// `p = 1`. Up to [`WILCOXON_EXACT_MAX_N`] non-zero values the null
/// distribution of the positive rank sum is enumerated exactly (ties
/// included); above that a tie-corrected normal approximation with
/// continuity correction is used.
pub fn wilcoxon_signed_rank_greater(diffs: &[f64]) -> WilcoxonTest {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return WilcoxonTest { n: 0, w_plus: 0.0, p_greater: 1.0, method: PMethod::Exact };
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    if n <= WILCOXON_EXACT_MAX_N {
        let p = wilcoxon_exact_upper(&ranks, w_plus);
        return WilcoxonTest { n, w_plus, p_greater: p, method: PMethod::Exact };
    }
    let nf = n as f64;
    let mu = nf * (nf + 1.0) / 4.0;
    let ties: f64 = tie_sizes(&abs)
        .into_iter()
        .map(|t| (t * t * t - t) as f64)
        .sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    let p = if var <= 0.0 {
        1.0
    } else {
        upper_normal((w_plus - mu - 0.5) / var.sqrt())
    };
    WilcoxonTest { n, w_plus, p_greater: p, method: PMethod::Approximate }
}

/// `P(W+ >= observed)` under random signs, by dynamic programming over
/// doubled ranks (average ranks are half-integers).
pub fn wilcoxon_exact_upper(ranks: &[f64], observed: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut ways = vec![0.0f64; total + 1];
    ways[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            ways[s] += ways[s - r];
        }
    }
    let threshold = (observed * 2.0).round() as usize;
    let hits: f64 = ways[threshold.min(total + 1)..].iter().sum();
    hits / 2f64.powi(ranks.len() as i32)
}

fn upper_normal(z: f64) -> f64 {
    Normal::standard().sf(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyTest {
    /// U statistic of the first sample.
    pub u: f64,
    pub z: f64,
    /// One-sided p that the first sample is stochastically larger.
    pub p_greater: f64,
}

/// Mann–Whitney U with tie-corrected normal approximation and continuity correction.
pub fn mann_whitney_greater(a: &[f64], b: &[f64]) -> MannWhitneyTest {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let r1: f64 = ranks[..a.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let n = n1 + n2;
    let ties: f64 = tie_sizes(&pooled)
        .into_iter()
        .map(|t| (t * t * t - t) as f64)
        .sum();
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return MannWhitneyTest { u, z: 0.0, p_greater: 1.0 };
    }
    let z = (u - n1 * n2 / 2.0 - 0.5) / var.sqrt();
    MannWhitneyTest { u, z, p_greater: upper_normal(z) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p_greater: f64,
}

/// Welch's unequal-variance t test, one-sided for `mean(a) > mean(b)`.
/// `None` when both samples have zero variance.
pub fn welch_t_greater(a: &[f64], b: &[f64]) -> Option<WelchTest> {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (v1, v2) = (variance(a) / n1, variance(b) / n2);
    let se2 = v1 + v2;
    if !(se2 > 0.0) || a.len() < 2 || b.len() < 2 {
        return None;
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (v1 * v1 / (n1 - 1.0) + v2 * v2 / (n2 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some(WelchTest { t, df, p_greater: dist.sf(t) })
}

/// Cohen's d with pooled standard deviation. Zero when the means agree,
/// `None` when the groups differ but have no spread.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Option<f64> {
    let diff = mean(a) - mean(b);
    if diff == 0.0 {
        return Some(0.0);
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let pooled = ((n1 - 1.0) * variance(a) + (n2 - 1.0) * variance(b)) / (n1 + n2 - 2.0);
    if !(pooled > 0.0) {
        return None;
    }
    Some(diff / pooled.sqrt())
}

/// Benjamini–Hochberg adjusted q-values, in input order.
pub fn benjamini_hochberg(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]));
    let mut q = vec![0.0; m];
    let mut running = f64::INFINITY;
    for pos in (0..m).rev() {
        let i = order[pos];
        // Tied p-values share the largest rank of their tie group.
        let mut rank = pos + 1;
        while rank < m && p[order[rank]] == p[i] {
            rank += 1;
        }
        running = running.min(p[i] * m as f64 / rank as f64);
        q[i] = running.min(1.0);
    }
    q
}

/// Step-up rejection set at level `alpha`.
pub fn bh_reject(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    let mut sorted: Vec<f64> = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cutoff = (0..m)
        .rev()
        .find(|&i| sorted[i] <= (i + 1) as f64 * alpha / m as f64)
        .map(|i| sorted[i]);
    match cutoff {
        Some(c) => p.iter().map(|&v| v <= c).collect(),
        None => vec![false; m],
    }
}

/// Kolmogorov–Smirnov distance between a sample and U(0, 1).
pub fn ks_uniform(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}
