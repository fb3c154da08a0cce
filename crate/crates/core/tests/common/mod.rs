//! Oracles and fixtures shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use phenotraj::autodiff::{Graph, Tensor, Var};
use phenotraj::data::{Dataset, Demographics, FeatureKind, Gender, Split, Triplet, VitalSeries};
use phenotraj::encoder::{Encoder, EncoderConfig};
use phenotraj::pipeline::{load_data, ExperimentConfig};
use phenotraj::trainer::{example_loss, example_loss_and_grads, make_example, ForecastExample};
use phenotraj::encoder::Mode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const FD_STEP: f64 = 1e-5;

/// Relative error with both sides near zero treated as agreement in absolute terms.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect())
}

/// Entries bounded away from zero, for kinks such as relu.
fn off_zero_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| {
                let v: f64 = rng.gen_range(0.1..1.5);
                if rng.gen() { v } else { -v }
            })
            .collect(),
    )
}

/// Collapses any output to a scalar through a fixed weighted squared error,
/// so non-linear use of every output entry is checked.
fn to_scalar(g: &mut Graph, y: Var) -> Var {
    let n = g.value(y).len();
    if n == 1 {
        return y;
    }
    let shape = g.shape(y).to_vec();
    let target = Tensor::new(shape.clone(), (0..n).map(|k| 0.5 * ((k + 1) as f64).sin()).collect()).unwrap();
    let weight = Tensor::new(shape, (0..n).map(|k| 1.0 + 0.5 * (k as f64).cos()).collect()).unwrap();
    g.squared_error(y, &target, &weight).unwrap()
}

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Var>;

/// Largest relative error between tape gradients and central differences
/// over every entry of every input.
pub fn fd_check(inputs: &[Tensor], build: &dyn Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let eval = |ins: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.param(t.clone())).collect();
        let y = build(&mut g, &vars);
        let s = to_scalar(&mut g, y);
        g.value(s).data()[0]
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let y = build(&mut g, &vars);
    let s = to_scalar(&mut g, y);
    g.backward(s).unwrap();
    let grads: Vec<Tensor> = vars.iter().map(|&v| g.grad(v)).collect();

    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].len() {
            let x = inputs[i].data()[j];
            work[i].data_mut()[j] = x + FD_STEP;
            let up = eval(&work);
            work[i].data_mut()[j] = x - FD_STEP;
            let down = eval(&work);
            work[i].data_mut()[j] = x;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads[i].data()[j], numeric));
        }
    }
    worst
}

/// (name, max relative error) for every tape primitive on random inputs.
pub fn primitive_checks(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases: Vec<(&'static str, Vec<Tensor>, Build)> = Vec::new();
    let r = &mut rng;
    cases.push(("matmul", vec![random_tensor(r, 3, 4), random_tensor(r, 4, 2)], Box::new(|g, v| g.matmul(v[0], v[1]).unwrap())));
    cases.push(("add", vec![random_tensor(r, 3, 4), random_tensor(r, 3, 4)], Box::new(|g, v| g.add(v[0], v[1]).unwrap())));
    cases.push(("add_row", vec![random_tensor(r, 3, 4), random_tensor(r, 1, 4)], Box::new(|g, v| g.add_row(v[0], v[1]).unwrap())));
    cases.push(("scale", vec![random_tensor(r, 3, 4)], Box::new(|g, v| g.scale(v[0], 1.7))));
    cases.push(("concat rows", vec![random_tensor(r, 2, 3), random_tensor(r, 1, 3)], Box::new(|g, v| g.concat(&[v[0], v[1]], 0).unwrap())));
    cases.push(("concat cols", vec![random_tensor(r, 2, 3), random_tensor(r, 2, 2)], Box::new(|g, v| g.concat(&[v[0], v[1]], 1).unwrap())));
    cases.push(("slice_cols", vec![random_tensor(r, 3, 5)], Box::new(|g, v| g.slice_cols(v[0], 1, 4).unwrap())));
    cases.push(("transpose", vec![random_tensor(r, 3, 4)], Box::new(|g, v| g.transpose(v[0]))));
    cases.push(("tanh", vec![random_tensor(r, 3, 4)], Box::new(|g, v| g.tanh(v[0]))));
    cases.push(("sigmoid", vec![random_tensor(r, 3, 4)], Box::new(|g, v| g.sigmoid(v[0]))));
    cases.push(("relu", vec![off_zero_tensor(r, 3, 4)], Box::new(|g, v| g.relu(v[0]))));
    cases.push(("softmax rows", vec![random_tensor(r, 3, 4)], Box::new(|g, v| g.softmax(v[0], 1, None).unwrap())));
    cases.push(("softmax cols", vec![random_tensor(r, 3, 4)], Box::new(|g, v| g.softmax(v[0], 0, None).unwrap())));
    cases.push((
        "masked softmax",
        vec![random_tensor(r, 3, 4)],
        Box::new(|g, v| {
            let ninf = f64::NEG_INFINITY;
            let mask = Tensor::matrix(3, 4, vec![0.0, ninf, 0.0, 0.0, 0.0, 0.0, ninf, ninf, ninf, 0.0, 0.0, 0.0]);
            g.softmax(v[0], 1, Some(&mask)).unwrap()
        }),
    ));
    cases.push((
        "layer_norm rows",
        vec![random_tensor(r, 3, 4), random_tensor(r, 1, 4), random_tensor(r, 1, 4)],
        Box::new(|g, v| g.layer_norm(v[0], v[1], v[2], 1).unwrap()),
    ));
    cases.push((
        "layer_norm cols",
        vec![random_tensor(r, 3, 4), random_tensor(r, 1, 3), random_tensor(r, 1, 3)],
        Box::new(|g, v| g.layer_norm(v[0], v[1], v[2], 0).unwrap()),
    ));
    cases.push(("dropout", vec![random_tensor(r, 3, 4)], Box::new(|g, v| g.dropout(v[0], 0.3, true, 5).unwrap())));
    cases.push(("embedding", vec![random_tensor(r, 5, 3)], Box::new(|g, v| g.embedding(v[0], &[0, 2, 2, 4]).unwrap())));
    cases.push(("sum all", vec![random_tensor(r, 3, 4)], Box::new(|g, v| {
        let t = g.tanh(v[0]);
        g.sum(t, None).unwrap()
    })));
    cases.push(("sum rows", vec![random_tensor(r, 3, 4)], Box::new(|g, v| g.sum(v[0], Some(0)).unwrap())));
    cases.push(("sum cols", vec![random_tensor(r, 3, 4)], Box::new(|g, v| g.sum(v[0], Some(1)).unwrap())));
    cases.push(("mean all", vec![random_tensor(r, 3, 4)], Box::new(|g, v| {
        let t = g.sigmoid(v[0]);
        g.mean(t, None).unwrap()
    })));
    cases.push(("mean rows", vec![random_tensor(r, 3, 4)], Box::new(|g, v| g.mean(v[0], Some(0)).unwrap())));
    cases.push(("mean cols", vec![random_tensor(r, 3, 4)], Box::new(|g, v| g.mean(v[0], Some(1)).unwrap())));
    cases.push((
        "squared_error",
        vec![random_tensor(r, 1, 7)],
        Box::new(|g, v| {
            let target = Tensor::row(vec![0.2, -0.1, 0.0, 1.0, 0.3, -0.7, 1.0]);
            let weight = Tensor::row(vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
            g.squared_error(v[0], &target, &weight).unwrap()
        }),
    ));
    cases
        .into_iter()
        .map(|(name, inputs, build)| (name, fd_check(&inputs, &*build)))
        .collect()
}

/// Default synthetic corpus after the standard preprocessing.
pub fn synthetic_dataset(seed: u64) -> Dataset {
    load_data(&ExperimentConfig::default().with_seed(seed)).unwrap().dataset
}

/// Forecast example from a mid-length series of `ds`.
pub fn sample_example(ds: &Dataset, min_rows: usize) -> ForecastExample {
    let i = (0..ds.len()).find(|&i| ds.series[i].rows >= min_rows).unwrap();
    make_example(&ds.series[i], ds.demographic_vector(i)).unwrap()
}

/// Central-difference check of the full encoder plus masked loss on
/// `count` randomly chosen parameter entries (evaluation mode).
pub fn end_to_end_check(encoder: &Encoder, ex: &ForecastExample, count: usize, seed: u64) -> Vec<(String, f64, f64)> {
    let (_, grads) = example_loss_and_grads(encoder, ex, Mode::Eval).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = encoder.param_names().to_vec();
    let mut work = encoder.clone();
    let mut out = Vec::new();
    // distinct tensors so the sample spreads over the network
    let mut order: Vec<usize> = (0..names.len()).collect();
    rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
    for &t in order.iter().cycle().take(count) {
        let j = rng.gen_range(0..encoder.params()[t].len());
        let x = encoder.params()[t].data()[j];
        work.params_mut()[t].data_mut()[j] = x + FD_STEP;
        let up = example_loss(&work, ex).unwrap();
        work.params_mut()[t].data_mut()[j] = x - FD_STEP;
        let down = example_loss(&work, ex).unwrap();
        work.params_mut()[t].data_mut()[j] = x;
        let numeric = (up - down) / (2.0 * FD_STEP);
        out.push((format!("{}[{j}]", names[t]), grads[t].data()[j], numeric));
    }
    out
}

/// Series whose every row carries the same standardized values.
pub fn constant_dataset(n: usize, rows: usize) -> Dataset {
    let values = [0.5, -0.3, 0.2, 0.1, -0.4, 0.3, 0.0];
    let series: Vec<VitalSeries> = (0..n)
        .map(|i| {
            let mut triplets = Vec::new();
            for r in 0..rows {
                for f in FeatureKind::ALL {
                    triplets.push(Triplet {
                        t: r as f64 * 4.0,
                        feature: f,
                        value: values[f.code()],
                    });
                }
            }
            VitalSeries {
                id: format!("c{i}"),
                patient_id: format!("p{i}"),
                start_hours: 0.0,
                triplets,
                demographics: Demographics {
                    gender: Some(if i % 2 == 0 { Gender::Male } else { Gender::Female }),
                    imputed_gender: false,
                    ward: Some("A".into()),
                    ward_change: false,
                },
                rows,
            }
        })
        .collect();
    let split = (0..n).map(|i| if i % 5 == 4 { Split::Val } else { Split::Train }).collect();
    Dataset::new(series, split).unwrap()
}

pub fn small_encoder_config(demo_width: usize) -> EncoderConfig {
    EncoderConfig {
        d_var: 8,
        d_stat: 4,
        blocks: 1,
        heads: 2,
        ..EncoderConfig::standard(demo_width)
    }
}

/// Isotropic Gaussian blobs with generation labels.
pub fn blobs(centers: &[Vec<f64>], per: usize, std: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<i64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, std).unwrap();
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per {
            pts.push(center.iter().map(|&m| m + noise.sample(&mut rng)).collect());
            labels.push(c as i64);
        }
    }
    (pts, labels)
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimum WCSS over every 2-partition with both parts nonempty, plus the
/// minimizing membership mask.
pub fn best_two_partition(points: &[Vec<f64>]) -> (f64, Vec<bool>) {
    let n = points.len();
    let wcss = |members: &[&Vec<f64>]| -> f64 {
        let d = members[0].len();
        let mut c = vec![0.0; d];
        for p in members {
            for k in 0..d {
                c[k] += p[k] / members.len() as f64;
            }
        }
        members.iter().map(|p| dist(p, &c).powi(2)).sum()
    };
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 1..(1u32 << n) - 1 {
        let side: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let a: Vec<&Vec<f64>> = (0..n).filter(|&i| side[i]).map(|i| &points[i]).collect();
        let b: Vec<&Vec<f64>> = (0..n).filter(|&i| !side[i]).map(|i| &points[i]).collect();
        let w = wcss(&a) + wcss(&b);
        if w < best.0 {
            best = (w, side);
        }
    }
    best
}

/// Textbook silhouette: noise (-1) excluded, singleton clusters score 0.
pub fn naive_silhouette(points: &[Vec<f64>], labels: &[i64]) -> Option<f64> {
    let idx: Vec<usize> = (0..points.len()).filter(|&i| labels[i] >= 0).collect();
    let mut clusters: Vec<i64> = idx.iter().map(|&i| labels[i]).collect();
    clusters.sort();
    clusters.dedup();
    if clusters.len() < 2 {
        return None;
    }
    let mut total = 0.0;
    for &i in &idx {
        let mean_to = |c: i64| {
            let others: Vec<usize> = idx.iter().copied().filter(|&j| j != i && labels[j] == c).collect();
            (others.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>() / others.len() as f64, others.len())
        };
        let (a, own) = mean_to(labels[i]);
        if own == 0 {
            continue;
        }
        let b = clusters
            .iter()
            .filter(|&&c| c != labels[i])
            .map(|&c| mean_to(c).0)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    Some(total / idx.len() as f64)
}

/// Canonical relabeling: clusters numbered by first appearance, noise kept at -1.
pub fn canonical(labels: &[i64]) -> Vec<i64> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                -1
            } else {
                let next = map.len() as i64;
                *map.entry(l).or_insert(next)
            }
        })
        .collect()
}

/// HDBSCAN by sweeping the mutual-reachability threshold downward and
/// recomputing connected components at every distinct weight, with
/// excess-of-mass selection (root excluded, ties kept at the parent).
/// Returns `None` when some cluster splits into three or more pieces at one
/// weight: the flat result then depends on merge order and the instance is
/// not a fair oracle case.
pub fn hdbscan_oracle(points: &[Vec<f64>], min_cluster_size: usize, min_samples: usize) -> Option<Vec<i64>> {
    let n = points.len();
    let d: Vec<Vec<f64>> = points.iter().map(|a| points.iter().map(|b| dist(a, b)).collect()).collect();
    let core: Vec<f64> = d
        .iter()
        .map(|row| {
            let mut s = row.clone();
            s.sort_by(f64::total_cmp);
            s[min_samples - 1]
        })
        .collect();
    let mr = |a: usize, b: usize| core[a].max(core[b]).max(d[a][b]);
    let mut weights: Vec<f64> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).map(|(a, b)| mr(a, b)).collect();
    weights.sort_by(|a, b| b.total_cmp(a));
    weights.dedup();

    struct Cluster {
        points: Vec<usize>,
        birth: f64,
        parent: Option<usize>,
        children: Vec<usize>,
        stability: f64,
        alive: bool,
    }
    let mut clusters = vec![Cluster {
        points: (0..n).collect(),
        birth: 0.0,
        parent: None,
        children: Vec::new(),
        stability: 0.0,
        alive: true,
    }];
    let mut fell_from = vec![usize::MAX; n];

    let components = |pts: &[usize], w: f64| -> Vec<Vec<usize>> {
        let mut seen = vec![false; pts.len()];
        let mut out = Vec::new();
        for s in 0..pts.len() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![pts[s]];
            let mut stack = vec![s];
            while let Some(x) = stack.pop() {
                for y in 0..pts.len() {
                    if !seen[y] && mr(pts[x], pts[y]) < w {
                        seen[y] = true;
                        comp.push(pts[y]);
                        stack.push(y);
                    }
                }
            }
            out.push(comp);
        }
        out
    };

    for &w in &weights {
        let lambda = 1.0 / w;
        let alive: Vec<usize> = (0..clusters.len()).filter(|&c| clusters[c].alive).collect();
        for c in alive {
            let pieces = components(&clusters[c].points, w);
            if pieces.len() == 1 {
                continue;
            }
            if pieces.len() > 2 {
                return None;
            }
            let birth = clusters[c].birth;
            let big: Vec<&Vec<usize>> = pieces.iter().filter(|p| p.len() >= min_cluster_size).collect();
            match big.len() {
                0 | 2 => {
                    clusters[c].stability += clusters[c].points.len() as f64 * (lambda - birth);
                    clusters[c].alive = false;
                    if big.is_empty() {
                        for &p in &clusters[c].points {
                            fell_from[p] = c;
                        }
                    } else {
                        for piece in big {
                            let id = clusters.len();
                            clusters.push(Cluster {
                                points: piece.clone(),
                                birth: lambda,
                                parent: Some(c),
                                children: Vec::new(),
                                stability: 0.0,
                                alive: true,
                            });
                            clusters[c].children.push(id);
                        }
                    }
                }
                _ => {
                    let keep = big[0].clone();
                    let dropped: Vec<usize> =
                        clusters[c].points.iter().copied().filter(|p| !keep.contains(p)).collect();
                    clusters[c].stability += dropped.len() as f64 * (lambda - birth);
                    for p in dropped {
                        fell_from[p] = c;
                    }
                    clusters[c].points = keep;
                }
            }
        }
    }

    let mut selected = vec![true; clusters.len()];
    selected[0] = false;
    let mut stability: Vec<f64> = clusters.iter().map(|c| c.stability).collect();
    for c in (1..clusters.len()).rev() {
        let sub: f64 = clusters[c].children.iter().map(|&ch| stability[ch]).sum();
        if sub > stability[c] {
            selected[c] = false;
            stability[c] = sub;
        } else {
            let mut stack = clusters[c].children.clone();
            while let Some(x) = stack.pop() {
                selected[x] = false;
                stack.extend(clusters[x].children.iter().copied());
            }
        }
    }
    let labels: Vec<i64> = (0..n)
        .map(|p| {
            let mut c = Some(fell_from[p]);
            while let Some(id) = c {
                if selected[id] {
                    return id as i64;
                }
                c = clusters[id].parent;
            }
            -1
        })
        .collect();
    Some(canonical(&labels))
}
