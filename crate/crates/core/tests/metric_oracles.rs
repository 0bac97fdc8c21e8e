//! Metrics and clustering checked against brute-force or sampling oracles.

use fraudjudger_core::cluster::{ami, cluster_recall, entropy, kmeans, label_groups, Contingency, KMeansConfig};
use fraudjudger_core::metrics::{confusion, evaluate_scores, prf_metrics, roc_auc, ConfusionCounts};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exposes each check as a `#[test]` and as part of `run_all`, so the
/// acceptance target can run the same checks without the test harness.
macro_rules! suite {
    ($($name:ident),* $(,)?) => {
        #[allow(dead_code)]
        pub fn run_all() {
            $( $name(); )*
        }

        mod tests {
            $( #[test] fn $name() { super::$name(); } )*
        }
    };
}

/// Probability that a random positive outscores a random negative, ties half.
fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

pub fn auc_matches_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut done = 0;
    while done < 1000 {
        let n = rng.gen_range(2..60);
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        // Half the instances draw from a small grid to force ties.
        let tied = done % 2 == 0;
        let scores: Vec<f64> = (0..n)
            .map(|_| if tied { rng.gen_range(0..5) as f64 / 4.0 } else { rng.gen::<f64>() })
            .collect();
        let got = roc_auc(&scores, &labels).unwrap().auc;
        let want = pair_count_auc(&scores, &labels);
        assert!((got - want).abs() < 1e-12, "instance {done}: {got} vs {want}");
        done += 1;
    }
}

pub fn roc_curve_endpoints_and_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let labels: Vec<bool> = (0..200).map(|i| i % 3 == 0).collect();
    let scores: Vec<f64> = (0..200).map(|_| rng.gen_range(0..20) as f64).collect();
    let roc = roc_auc(&scores, &labels).unwrap();
    let (first, last) = (roc.points[0], roc.points[roc.points.len() - 1]);
    assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
    assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    for w in roc.points.windows(2) {
        assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
    }
}

fn plain_mi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut t = vec![vec![0.0; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        t[x][y] += 1.0;
    }
    let rows: Vec<f64> = t.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..kb).map(|j| t.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            if t[i][j] > 0.0 {
                mi += t[i][j] / n * (n * t[i][j] / (rows[i] * cols[j])).ln();
            }
        }
    }
    mi
}

pub fn expected_mi_matches_monte_carlo_permutations() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 4000;
    let mut worst_z: f64 = 0.0;
    for instance in 0..20 {
        let n = rng.gen_range(10..40);
        let ka = rng.gen_range(2..5);
        let kb = rng.gen_range(2..6);
        let a: Vec<usize> = (0..n).map(|i| if i < ka { i } else { rng.gen_range(0..ka) }).collect();
        let mut b: Vec<usize> = (0..n).map(|i| if i < kb { i } else { rng.gen_range(0..kb) }).collect();
        let c = Contingency::new(&a, &b).unwrap();
        assert!((c.mutual_information() - plain_mi(&a, &b)).abs() < 1e-12);

        let samples: Vec<f64> = (0..draws)
            .map(|_| {
                b.shuffle(&mut rng);
                plain_mi(&a, &b)
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / draws as f64;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        let emi = c.expected_mutual_information();
        let z = (emi - mean).abs() / se;
        worst_z = worst_z.max(z);
        assert!(z < 3.0, "instance {instance}: E[MI] {emi} vs Monte Carlo {mean} +- {se}");

        // AMI assembled from the independently computed pieces.
        let h = 0.5 * (entropy(&c.rows) + entropy(&c.cols));
        let expected = (plain_mi(&a, &b) - emi) / (h - emi);
        let b_fixed: Vec<usize> = b.clone();
        let got = ami(&a, &b_fixed).unwrap();
        if got != 1.0 {
            assert!((got - expected).abs() < 1e-9);
        }
    }
    println!("worst |E[MI] - MC| in standard errors: {worst_z:.2}");
}

pub fn ami_degenerate_conventions() {
    assert_eq!(ami(&[0, 0, 0, 0], &[3, 3, 3, 3]).unwrap(), 1.0);
    assert_eq!(ami(&[0, 1, 2, 3], &[7, 6, 5, 4]).unwrap(), 1.0);
    assert_eq!(ami(&[0, 0, 0, 0], &[0, 1, 2, 3]).unwrap(), 0.0);
    assert!(ami::<u8, u8>(&[], &[]).is_err());
}

fn partition_inertia(points: &Array2<f64>, labels: &[usize], k: usize) -> f64 {
    let d = points.ncols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for j in 0..d {
            sums[l][j] += points[[i, j]];
        }
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (0..d).map(|j| (points[[i, j]] - sums[l][j] / counts[l] as f64).powi(2)).sum::<f64>())
        .sum()
}

/// Every partition into exactly `k` non-empty blocks, as restricted growth strings.
fn for_each_partition(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(s: &mut Vec<usize>, n: usize, k: usize, used: usize, f: &mut impl FnMut(&[usize])) {
        if s.len() == n {
            if used == k {
                f(s);
            }
            return;
        }
        if k - used > n - s.len() {
            return;
        }
        for b in 0..=used.min(k - 1) {
            s.push(b);
            rec(s, n, k, used.max(b + 1), f);
            s.pop();
        }
    }
    rec(&mut Vec::with_capacity(n), n, k, 0, f);
}

/// Canonical relabeling: blocks numbered by first appearance.
fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

pub fn kmeans_against_brute_force_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let instances = 40;
    let mut hits = 0;
    for instance in 0..instances {
        let n = rng.gen_range(4..=12);
        let k = rng.gen_range(1..=3);
        let d = rng.gen_range(1..=3);
        let points = Array2::from_shape_fn((n, d), |_| rng.gen_range(-5.0..5.0));
        let mut best = (f64::INFINITY, Vec::new());
        for_each_partition(n, k, &mut |p| {
            let v = partition_inertia(&points, p, k);
            if v < best.0 {
                best = (v, p.to_vec());
            }
        });
        let cfg = KMeansConfig {
            seed: instance,
            ..KMeansConfig::default()
        };
        let r = kmeans(points.view(), k, &cfg).unwrap();
        assert!((r.inertia - partition_inertia(&points, &r.assignments, k)).abs() < 1e-9);
        assert!(r.inertia >= best.0 - 1e-9, "below the brute-force optimum");
        if (r.inertia - best.0).abs() < 1e-9 {
            assert_eq!(canonical(&r.assignments), best.1);
            hits += 1;
        }
    }
    println!("k-means reached the exhaustive optimum on {hits}/{instances} instances");
    assert!(hits * 10 >= instances * 9, "hit rate {hits}/{instances}");
}

pub fn prf_hand_counts() {
    let preds = [true, true, false, false, true, false, true, false];
    let labels = [true, false, true, false, true, false, false, false];
    let c = confusion(&preds, &labels).unwrap();
    assert_eq!(c, ConfusionCounts { tp: 2, fp: 2, tn: 3, fn_: 1 });
    let m = prf_metrics(&c).unwrap();
    assert_eq!(m.accuracy, 5.0 / 8.0);
    assert_eq!(m.precision, 0.5);
    assert_eq!(m.recall, 2.0 / 3.0);
    assert!((m.f1 - 4.0 / 7.0).abs() < 1e-15);

    let none = prf_metrics(&ConfusionCounts { tp: 0, fp: 0, tn: 4, fn_: 0 }).unwrap();
    assert_eq!((none.precision, none.recall, none.f1, none.accuracy), (0.0, 0.0, 0.0, 1.0));

    let (report, _) = evaluate_scores(&[0.9, 0.5, 0.51, 0.1], &[true, true, false, false]).unwrap();
    assert_eq!(report.confusion, ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 });
    assert_eq!(report.auc, 0.75);
}

pub fn fraud_groups_and_cluster_recall_hand_example() {
    // Group 0: 4/5 fraud, group 1: 7/10 exactly at the threshold, group 2: 0/3.
    let mut assignments = vec![0; 5];
    assignments.extend(vec![1; 10]);
    assignments.extend(vec![2; 3]);
    let mut fraud = vec![true, true, true, true, false];
    fraud.extend((0..10).map(|i| i < 7));
    fraud.extend([false; 3]);
    let groups = label_groups(&assignments, &fraud, 4, 0.7).unwrap();
    let flags: Vec<bool> = groups.iter().map(|g| g.is_fraud_group).collect();
    assert_eq!(flags, vec![true, false, false, false]);
    assert_eq!(groups[3].size, 0);
    assert_eq!(cluster_recall(&assignments, &fraud, 0.7).unwrap(), 4.0 / 11.0);
    assert_eq!(cluster_recall(&assignments, &fraud, 0.6).unwrap(), 1.0);
}

suite!(
    auc_matches_pair_counting,
    roc_curve_endpoints_and_monotone,
    expected_mi_matches_monte_carlo_permutations,
    ami_degenerate_conventions,
    kmeans_against_brute_force_optimum,
    prf_hand_counts,
    fraud_groups_and_cluster_recall_hand_example,
);
