//! Naive reference implementations used as test oracles. Nothing in here calls
//! the library's algorithms; masks are only read pixel by pixel.
#![allow(dead_code, clippy::needless_range_loop)]

use ctsd_core::BinaryMask;

pub fn fg(mask: &BinaryMask, c: i64, r: i64) -> bool {
    c >= 0 && r >= 0 && (c as usize) < mask.width() && (r as usize) < mask.height() && mask.get(c as usize, r as usize)
}

/// Foreground pixels with a background (or out-of-image) 4-neighbour, in raster order.
pub fn boundary(mask: &BinaryMask) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for r in 0..mask.height() as i64 {
        for c in 0..mask.width() as i64 {
            if fg(mask, c, r)
                && [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|&(dc, dr)| !fg(mask, c + dc, r + dr))
            {
                out.push((c, r));
            }
        }
    }
    out
}

pub fn count(mask: &BinaryMask) -> usize {
    let mut n = 0;
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            n += usize::from(mask.get(c, r));
        }
    }
    n
}

fn overlap(a: &BinaryMask, b: &BinaryMask) -> (usize, usize) {
    let (mut inter, mut union) = (0, 0);
    for r in 0..a.height() {
        for c in 0..a.width() {
            let (x, y) = (a.get(c, r), b.get(c, r));
            inter += usize::from(x && y);
            union += usize::from(x || y);
        }
    }
    (inter, union)
}

pub fn dice(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (inter, _) = overlap(a, b);
    let total = count(a) + count(b);
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

pub fn iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (inter, union) = overlap(a, b);
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// For each point of `from`, the Euclidean distance to the closest point of `to`.
pub fn nearest(from: &[(i64, i64)], to: &[(i64, i64)]) -> Vec<f64> {
    from.iter()
        .map(|&(x, y)| {
            to.iter()
                .map(|&(u, v)| (((x - u) * (x - u) + (y - v) * (y - v)) as f64).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Smallest value such that at least 95% of the list is at or below it.
fn p95(mut d: Vec<f64>) -> f64 {
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = d.len();
    let mut k = 0;
    while (k + 1) * 100 < 95 * n {
        k += 1;
    }
    d[k]
}

pub fn hd95(a: &[(i64, i64)], b: &[(i64, i64)]) -> f64 {
    p95(nearest(a, b)).max(p95(nearest(b, a)))
}

pub fn hausdorff(a: &[(i64, i64)], b: &[(i64, i64)]) -> f64 {
    let m = |d: Vec<f64>| d.into_iter().fold(0.0, f64::max);
    m(nearest(a, b)).max(m(nearest(b, a)))
}

pub fn assd(a: &[(i64, i64)], b: &[(i64, i64)]) -> f64 {
    let s: f64 = nearest(a, b).iter().sum::<f64>() + nearest(b, a).iter().sum::<f64>();
    s / (a.len() + b.len()) as f64
}

/// Sizes of 8-connected components, largest first, via iterative flood fill.
pub fn component_sizes(mask: &BinaryMask) -> Vec<usize> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut seen = vec![false; (w * h) as usize];
    let mut sizes = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !fg(mask, c, r) || seen[(r * w + c) as usize] {
                continue;
            }
            let mut stack = vec![(c, r)];
            seen[(r * w + c) as usize] = true;
            let mut n = 0;
            while let Some((x, y)) = stack.pop() {
                n += 1;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if fg(mask, nx, ny) && !seen[(ny * w + nx) as usize] {
                            seen[(ny * w + nx) as usize] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            sizes.push(n);
        }
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Probability that a random positive outscores a random negative (ties count half).
pub fn mann_whitney_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Two-sided exact signed-rank p-value by enumerating all 2^n sign patterns.
pub fn wilcoxon_enumerate(diffs: &[f64]) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|v| *v != 0.0).collect();
    let n = d.len();
    // average ranks of |d|
    let ranks: Vec<f64> = d
        .iter()
        .map(|x| {
            let below = d.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let total: f64 = ranks.iter().sum();
    let stat = |signs: &dyn Fn(usize) -> bool| {
        let wp: f64 = (0..n).filter(|&i| signs(i)).map(|i| ranks[i]).sum();
        wp.min(total - wp)
    };
    let observed = stat(&|i| d[i] > 0.0);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        if stat(&|i| mask >> i & 1 == 1) <= observed + 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

/// Upper tail of chi-square(1) at `x` by composite Simpson integration of the
/// standard normal density over `[sqrt(x), sqrt(x) + 40]`, doubled.
pub fn chi2_1_sf(x: f64) -> f64 {
    let (lo, hi) = (x.sqrt(), x.sqrt() + 40.0);
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let f = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    2.0 * s * h / 3.0
}

pub fn ramanujan(a: f64, b: f64) -> f64 {
    let h = ((a - b) / (a + b)).powi(2);
    std::f64::consts::PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()))
}

/// L2-regularised logistic regression fitted by Newton's method on the
/// standardised design; returns weights and bias in standardised space.
pub fn newton_logistic(rows: &[Vec<f64>], labels: &[u8], l2: f64) -> (Vec<f64>, f64) {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| {
            let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    // augmented design: standardised features then a constant 1
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut v: Vec<f64> = (0..d).map(|j| (r[j] - mean[j]) / sd[j]).collect();
            v.push(1.0);
            v
        })
        .collect();
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let k = d + 1;
    let mut beta = vec![0.0; k];
    for _ in 0..100 {
        let mut g = vec![0.0; k];
        let mut hess = vec![vec![0.0; k]; k];
        for i in 0..n {
            let z: f64 = x[i].iter().zip(&beta).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-z).exp());
            for a in 0..k {
                g[a] += (p - y[i]) * x[i][a] / n as f64;
                for b in 0..k {
                    hess[a][b] += p * (1.0 - p) * x[i][a] * x[i][b] / n as f64;
                }
            }
        }
        for a in 0..d {
            g[a] += l2 * beta[a];
            hess[a][a] += l2;
        }
        let step = solve(hess, g);
        let norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for a in 0..k {
            beta[a] -= step[a];
        }
        if norm < 1e-14 {
            break;
        }
    }
    let b = beta.pop().unwrap();
    (beta, b)
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}
