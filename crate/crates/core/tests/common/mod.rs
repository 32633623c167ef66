//! Independent oracles shared by the integration suites. Nothing here goes
//! through `BlockStats` or the delta code paths.
#![allow(dead_code)]

use nssbm::tensor::{build_tensor, EventRecord, InteractionTensor, Mode, Partition};
use nssbm::Hyperparameters;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `ln(n!)` by direct summation.
pub fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln Gamma(x)` by trapezoidal integration of `t^(x-1) e^-t` in `t = e^s`.
pub fn ln_gamma_quad(x: f64) -> f64 {
    // integrand in s: exp(x s - e^s), peak at s = ln x
    let peak = x.ln();
    let sigma = 1.0 / x.sqrt();
    let lo = peak - 45.0 / x - 12.0 * sigma;
    let hi = peak + 12.0 * sigma + 5.0;
    let h = sigma / 40.0;
    let n = ((hi - lo) / h).ceil() as usize;
    let logs: Vec<f64> = (0..=n)
        .map(|i| {
            let s = lo + i as f64 * h;
            x * s - s.exp()
        })
        .collect();
    log_sum_exp(&logs) + h.ln()
}

/// Log of `integral_0^inf prod_cells Poisson(n_c; delta * lam) Gamma(lam; a, b) dlam`,
/// by trapezoidal quadrature in `x = ln lam`.
pub fn block_marginal_quad(counts: &[u64], h: &Hyperparameters) -> f64 {
    let s: u64 = counts.iter().sum();
    let cells = counts.len() as f64;
    let lnfact: f64 = counts.iter().map(|&n| ln_factorial(n)).sum();
    let norm = h.a * h.b.ln() - ln_gamma_quad(h.a);
    let log_f = |lam: f64| {
        norm + (h.a - 1.0) * lam.ln() - h.b * lam + s as f64 * (h.delta * lam).ln() - h.delta * cells * lam - lnfact
    };
    let shape = h.a + s as f64;
    let peak = (shape / (h.b + h.delta * cells)).ln();
    let sigma = 1.0 / shape.sqrt();
    let lo = peak - 45.0 / shape - 12.0 * sigma;
    let hi = peak + 12.0 * sigma + 5.0;
    let step = sigma / 40.0;
    let n = ((hi - lo) / step).ceil() as usize;
    let logs: Vec<f64> = (0..=n)
        .map(|i| {
            let x = lo + i as f64 * step;
            log_f(x.exp()) + x
        })
        .collect();
    log_sum_exp(&logs) + step.ln()
}

/// All cells `(i, j, u)` of the model, in the tensor's pair convention.
pub fn cells(n: usize, u: usize, mode: Mode) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let keep = match mode {
                Mode::Directed => true,
                Mode::Undirected => i < j,
            };
            if keep {
                for t in 0..u {
                    out.push((i, j, t));
                }
            }
        }
    }
    out
}

/// Emission term by quadrature: group cells into blocks by brute force and
/// integrate each block's marginal numerically.
pub fn log_emission_quad(t: &InteractionTensor, c: &[usize], y: &[usize], h: &Hyperparameters) -> f64 {
    let k = c.iter().max().unwrap() + 1;
    let d = y.iter().max().unwrap() + 1;
    let mut blocks: Vec<Vec<u64>> = vec![Vec::new(); k * k * d];
    for (i, j, u) in cells(t.num_nodes(), t.num_bins(), t.mode()) {
        let (a, b) = t.mode().block(c[i], c[j]);
        blocks[(a * k + b) * d + y[u]].push(t.get(i, j, u));
    }
    let mut total = 0.0;
    for a in 0..k {
        for b in 0..k {
            if t.mode() == Mode::Undirected && a > b {
                continue;
            }
            for dd in 0..d {
                total += block_marginal_quad(&blocks[(a * k + b) * d + dd], h);
            }
        }
    }
    total
}

/// Random sparse tensor with counts up to `max_count`.
pub fn random_tensor(
    rng: &mut ChaCha8Rng,
    n: usize,
    u: usize,
    mode: Mode,
    density: f64,
    max_count: u64,
) -> InteractionTensor {
    let mut recs = Vec::new();
    for (i, j, t) in cells(n, u, mode) {
        if rng.random_bool(density) {
            recs.push(EventRecord::new(i, j, t, rng.random_range(1..=max_count)));
        }
    }
    build_tensor(&recs, n, u, mode).unwrap()
}

/// Uniform labels over `k` clusters with every cluster used.
pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Partition {
    let k = k.min(n).max(1);
    let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    // shuffle so the forced members are not always the first items
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    Partition::new(labels).unwrap()
}

/// Every set partition of `n` items as a restricted growth string.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for l in 0..=max + 1 {
            prefix.push(l);
            rec(prefix, max.max(l), n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut prefix = vec![0];
    rec(&mut prefix, 0, n, &mut out);
    out
}

/// Maximum ICL over all partition pairs, by enumeration.
pub fn exhaustive_max(t: &InteractionTensor, h: &Hyperparameters) -> (f64, Vec<usize>, Vec<usize>) {
    let mut best = (f64::NEG_INFINITY, Vec::new(), Vec::new());
    let ys = set_partitions(t.num_bins());
    for c in set_partitions(t.num_nodes()) {
        let cp = Partition::new(c.clone()).unwrap();
        for y in &ys {
            let yp = Partition::new(y.clone()).unwrap();
            let v = nssbm::icl(t, &cp, &yp, h).unwrap().total;
            if v > best.0 {
                best = (v, c.clone(), y.clone());
            }
        }
    }
    best
}

/// Outcome of one exhaustive-vs-greedy comparison.
pub struct ExhaustiveCase {
    pub best: f64,
    pub greedy: f64,
}

impl ExhaustiveCase {
    pub fn attained(&self) -> bool {
        (self.best - self.greedy).abs() <= 1e-9 * self.best.abs().max(1.0)
    }

    pub fn exceeded(&self) -> bool {
        self.greedy > self.best + 1e-9 * self.best.abs().max(1.0)
    }
}

/// Planted instance with `N <= 5`, `U <= 4`, compared against enumeration.
pub fn exhaustive_case(seed: u64) -> ExhaustiveCase {
    use nssbm::simulate::{simulate, GenerativeSpec, RateGrid};
    let mut r = rng(seed);
    let n = r.random_range(3..=5usize);
    let u = r.random_range(2..=4usize);
    let k = r.random_range(1..=2usize);
    let d = r.random_range(1..=2usize);
    let rates: Vec<f64> = (0..k * k * d).map(|_| r.random_range(0.2..6.0)).collect();
    let mode = if r.random_bool(0.5) {
        Mode::Undirected
    } else {
        Mode::Directed
    };
    let spec = GenerativeSpec {
        mode,
        ..GenerativeSpec::uniform(n, u, RateGrid::new(k, d, rates).unwrap(), seed)
    };
    let t = simulate(&spec).unwrap().tensor;
    let h = Hyperparameters::default();
    let (best, _, _) = exhaustive_max(&t, &h);
    let cfg = nssbm::SearchConfig {
        k_max: n,
        d_max: u,
        num_restarts: 10,
        seed,
        ..Default::default()
    };
    let fit = nssbm::greedy_fit(&t, &h, &cfg).unwrap();
    ExhaustiveCase {
        best,
        greedy: fit.icl.total,
    }
}

/// Worst relative error of `log_emission` against quadrature over `instances`
/// random problems with `K^2 D <= 8` and counts `<= 10`.
pub fn quadrature_check(seed: u64, instances: usize) -> f64 {
    use nssbm::icl::log_emission;
    use nssbm::tensor::BlockStats;
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mode = if i % 2 == 0 { Mode::Directed } else { Mode::Undirected };
        let k = r.random_range(1..=2usize);
        let d = r.random_range(1..=(8 / (k * k)).min(6));
        let n = r.random_range(k.max(2)..=5);
        let u = r.random_range(d..=6);
        let t = random_tensor(&mut r, n, u, mode, 0.4, 10);
        let c = random_labels(&mut r, n, k);
        let y = random_labels(&mut r, u, d);
        let h = Hyperparameters {
            a: r.random_range(0.5..3.0),
            b: r.random_range(0.2..2.0),
            delta: r.random_range(0.5..2.0),
            ..Default::default()
        };
        let exact = log_emission(&BlockStats::compute(&t, &c, &y).unwrap(), &h);
        let quad = log_emission_quad(&t, c.labels(), y.labels(), &h);
        worst = worst.max((exact - quad).abs() / quad.abs().max(1e-300));
    }
    worst
}

/// Checked deltas per kind (node move, time move, node merge, time merge)
/// and the worst absolute error against two full evaluations.
pub fn delta_check(seed: u64, min_per_kind: usize) -> ([usize; 4], f64) {
    use nssbm::{icl, Axis, ModelState};
    let full =
        |t: &InteractionTensor, c: &Partition, y: &Partition, h: &Hyperparameters| icl(t, c, y, h).unwrap().total;
    let mut r = rng(seed);
    let mut checked = [0usize; 4];
    let mut worst = 0.0f64;
    while checked.iter().any(|&n| n < min_per_kind) {
        let mode = if r.random_bool(0.5) {
            Mode::Undirected
        } else {
            Mode::Directed
        };
        let n = r.random_range(2..=30);
        let u = r.random_range(1..=20);
        let density = r.random_range(0.02..0.5);
        let t = random_tensor(&mut r, n, u, mode, density, 12);
        let h = Hyperparameters {
            a: r.random_range(0.5..2.0),
            b: r.random_range(0.5..2.0),
            alpha: r.random_range(0.5..2.0),
            gamma: r.random_range(0.5..2.0),
            delta: r.random_range(0.5..2.0),
        };
        let (k, d) = (r.random_range(1..=5), r.random_range(1..=4));
        let c = random_labels(&mut r, n, k);
        let y = random_labels(&mut r, u, d);
        let state = ModelState::new(&t, h, c.clone(), y.clone()).unwrap();
        let base = full(&t, &c, &y, &h);
        for _ in 0..10 {
            let kind = r.random_range(0..4);
            let err = match kind {
                0 => {
                    let node = r.random_range(0..n);
                    let target = r.random_range(0..c.num_clusters());
                    if target == c.label(node) || c.size(c.label(node)) == 1 {
                        continue;
                    }
                    let mut c2 = c.clone();
                    c2.move_item(node, target).unwrap();
                    state.delta_node_move(node, target).unwrap() - (full(&t, &c2, &y, &h) - base)
                }
                1 => {
                    let bin = r.random_range(0..u);
                    let target = r.random_range(0..y.num_clusters());
                    if target == y.label(bin) || y.size(y.label(bin)) == 1 {
                        continue;
                    }
                    let mut y2 = y.clone();
                    y2.move_item(bin, target).unwrap();
                    state.delta_time_move(bin, target).unwrap() - (full(&t, &c, &y2, &h) - base)
                }
                2 => {
                    let kc = c.num_clusters();
                    if kc < 2 {
                        continue;
                    }
                    let keep = r.random_range(0..kc);
                    let absorbed = (keep + r.random_range(1..kc)) % kc;
                    let mut c2 = c.clone();
                    c2.merge(keep, absorbed).unwrap();
                    state.delta_merge(Axis::Node, keep, absorbed).unwrap() - (full(&t, &c2, &y, &h) - base)
                }
                _ => {
                    let dc = y.num_clusters();
                    if dc < 2 {
                        continue;
                    }
                    let keep = r.random_range(0..dc);
                    let absorbed = (keep + r.random_range(1..dc)) % dc;
                    let mut y2 = y.clone();
                    y2.merge(keep, absorbed).unwrap();
                    state.delta_merge(Axis::Time, keep, absorbed).unwrap() - (full(&t, &c, &y2, &h) - base)
                }
            };
            checked[kind] += 1;
            worst = worst.max(err.abs());
        }
    }
    (checked, worst)
}
