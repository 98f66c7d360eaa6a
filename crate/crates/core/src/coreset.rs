//! Row reduction ahead of joining and selection: uniform and stratified
//! sampling of base-table rows, and an OSNAP-style sparse sketch applied to
//! post-join numeric matrices.

use ndarray::Array2;
use rand::seq::index::sample as index_sample;
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::rng::rng_for;
use crate::tabular::{strata_of, FeatureMatrix, LabelVector, Table};

const UNIFORM_STREAM: u64 = 0x434f5255; // "CORU"
const STRATUM_STREAM: u64 = 0x434f5253; // "CORS"
const SKETCH_STREAM: u64 = 0x534b4554; // "SKET"

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoresetMethod {
    Uniform,
    Stratified,
    Sketch,
}

/// A weighted row subset standing in for a full table. Sketches produce
/// synthetic rows, so their index list is empty.
#[derive(Debug, Clone)]
pub struct Coreset {
    pub source_row_indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub method: CoresetMethod,
}

/// Sketch dimensions: `target_rows` output rows accumulated over
/// `repetitions = ceil(log2 n)` one-nonzero-per-column rounds.
#[derive(Debug, Clone, Copy)]
pub struct SketchConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub repetitions: usize,
    pub target_rows: usize,
}

impl SketchConfig {
    pub fn new(epsilon: f64, delta: f64, input_rows: usize, target_rows: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(CoreError::BadSize("epsilon and delta must be in (0,1)".into()));
        }
        if target_rows < 1 {
            return Err(CoreError::BadSize("sketch needs at least one output row".into()));
        }
        let repetitions = (input_rows.max(2) as f64).log2().ceil() as usize;
        Ok(SketchConfig { epsilon, delta, repetitions: repetitions.max(1), target_rows })
    }

    /// Row count sufficient for a subspace embedding of a d-column matrix:
    /// `ceil(d * ln(n) / epsilon^2)`.
    pub fn suggested_rows(d: usize, n: usize, epsilon: f64) -> usize {
        ((d as f64) * (n as f64).ln() / (epsilon * epsilon)).ceil() as usize
    }
}

/// Sample `m` distinct rows without replacement; every kept row gets weight
/// `n/m`. Indices come back ascending.
pub fn sample_uniform(t: &Table, m: usize, seed: u64) -> Result<Coreset> {
    sample_uniform_n(t.row_count, m, seed)
}

fn sample_uniform_n(n: usize, m: usize, seed: u64) -> Result<Coreset> {
    if m < 1 || m > n {
        return Err(CoreError::BadSize(format!("sample size {} not in [1, {}]", m, n)));
    }
    let mut rng = rng_for(seed, &[UNIFORM_STREAM]);
    let mut indices: Vec<usize> = index_sample(&mut rng, n, m).into_iter().collect();
    indices.sort_unstable();
    let w = n as f64 / m as f64;
    Ok(Coreset { source_row_indices: indices, weights: vec![w; m], method: CoresetMethod::Uniform })
}

/// Allocate `total` slots across strata proportionally to their sizes:
/// round first, then walk remainders until the sum matches. When
/// `total >= #strata`, every non-empty stratum keeps at least one slot.
pub(crate) fn proportional_allocation(sizes: &[usize], total: usize) -> Vec<usize> {
    let grand: usize = sizes.iter().sum();
    assert!(total <= grand, "allocation exceeds population");
    let nonempty = sizes.iter().filter(|&&s| s > 0).count();
    let floor_each = if total >= nonempty { 1 } else { 0 };
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * total as f64 / grand as f64).collect();
    let mut alloc: Vec<usize> = sizes
        .iter()
        .zip(&exact)
        .map(|(&s, &e)| {
            if s == 0 {
                0
            } else {
                (e.round() as usize).clamp(floor_each, s)
            }
        })
        .collect();
    let mut assigned: usize = alloc.iter().sum();
    while assigned < total {
        let k = (0..sizes.len())
            .filter(|&k| alloc[k] < sizes[k])
            .max_by(|&a, &b| {
                (exact[a] - alloc[a] as f64).partial_cmp(&(exact[b] - alloc[b] as f64)).unwrap()
                    .then(b.cmp(&a))
            })
            .expect("total <= population");
        alloc[k] += 1;
        assigned += 1;
    }
    while assigned > total {
        let k = (0..sizes.len())
            .filter(|&k| alloc[k] > if sizes[k] > 0 { floor_each } else { 0 })
            .min_by(|&a, &b| {
                (exact[a] - alloc[a] as f64).partial_cmp(&(exact[b] - alloc[b] as f64)).unwrap()
                    .then(a.cmp(&b))
            })
            .expect("allocation can always shrink");
        alloc[k] -= 1;
        assigned -= 1;
    }
    alloc
}

/// Stratify on a label column, then sample uniformly within each stratum.
/// Per-stratum counts follow [`proportional_allocation`]; weights are the
/// per-stratum inverse sampling rates.
pub fn sample_stratified(t: &Table, label_column: &str, m: usize, seed: u64) -> Result<Coreset> {
    let col = t.require_column(label_column)?;
    if m < 1 || m > t.row_count {
        return Err(CoreError::BadSize(format!("sample size {} not in [1, {}]", m, t.row_count)));
    }
    let strata = strata_of(col)?;
    let groups: Vec<&Vec<usize>> = strata.values().collect();
    let sizes: Vec<usize> = groups.iter().map(|g| g.len()).collect();
    let alloc = proportional_allocation(&sizes, m);
    let mut picks: Vec<(usize, f64)> = Vec::with_capacity(m);
    for (k, (group, &take)) in groups.iter().zip(&alloc).enumerate() {
        if take == 0 {
            continue;
        }
        let mut rng = rng_for(seed, &[STRATUM_STREAM, k as u64]);
        let weight = group.len() as f64 / take as f64;
        for local in index_sample(&mut rng, group.len(), take) {
            picks.push((group[local], weight));
        }
    }
    picks.sort_unstable_by_key(|&(i, _)| i);
    let (source_row_indices, weights) = picks.into_iter().unzip();
    Ok(Coreset { source_row_indices, weights, method: CoresetMethod::Stratified })
}

/// One sketching round: for every input row, a target bucket and a sign.
/// Each round is a matrix with exactly one nonzero (+-1) per column.
pub(crate) fn osnap_round(n: usize, target_rows: usize, seed: u64, round: u64) -> Vec<(usize, i8)> {
    let mut rng = rng_for(seed, &[SKETCH_STREAM, round]);
    (0..n)
        .map(|_| {
            let bucket = rng.random_range(0..target_rows);
            let sign = if rng.random::<bool>() { 1 } else { -1 };
            (bucket, sign)
        })
        .collect()
}

/// Apply the OSNAP sketch to a numeric matrix: rounds are summed and scaled
/// by `1/sqrt(repetitions)` so squared norms stay unbiased.
pub fn sketch_osnap(a: &FeatureMatrix, cfg: &SketchConfig, seed: u64) -> Result<FeatureMatrix> {
    let n = a.n_rows();
    if cfg.target_rows >= n {
        return Err(CoreError::BadSize(format!(
            "sketch of {} rows into {} is pointless",
            n, cfg.target_rows
        )));
    }
    let d = a.n_features();
    let mut out = Array2::<f64>::zeros((cfg.target_rows, d));
    for round in 0..cfg.repetitions {
        for (i, &(bucket, sign)) in osnap_round(n, cfg.target_rows, seed, round as u64)
            .iter()
            .enumerate()
        {
            let s = sign as f64;
            for j in 0..d {
                out[(bucket, j)] += s * a.values[(i, j)];
            }
        }
    }
    let scale = 1.0 / (cfg.repetitions as f64).sqrt();
    out.mapv_inplace(|v| v * scale);
    Ok(FeatureMatrix {
        values: out,
        feature_names: a.feature_names.clone(),
        provenance: a.provenance.clone(),
    })
}

/// Sketch a labeled matrix. Regression sketches `[A | y]` jointly so the
/// least-squares geometry is preserved; classification sketches rows
/// independently within each label block and re-attaches the block's label.
/// Blocks too small to shrink pass through unchanged.
pub fn sketch_osnap_labeled(
    a: &FeatureMatrix,
    y: &LabelVector,
    cfg: &SketchConfig,
    seed: u64,
) -> Result<(FeatureMatrix, LabelVector)> {
    let n = a.n_rows();
    if y.len() != n {
        return Err(CoreError::LengthMismatch(format!(
            "matrix has {} rows, labels {}",
            n,
            y.len()
        )));
    }
    match y {
        LabelVector::Regression(vals) => {
            let mut joint = Array2::<f64>::zeros((n, a.n_features() + 1));
            joint.slice_mut(ndarray::s![.., ..a.n_features()]).assign(&a.values);
            for (i, &v) in vals.iter().enumerate() {
                joint[(i, a.n_features())] = v;
            }
            let mut names = a.feature_names.clone();
            names.push("__label__".into());
            let mut prov = a.provenance.clone();
            prov.push("__label__".into());
            let joint_matrix = FeatureMatrix { values: joint, feature_names: names, provenance: prov };
            let sk = sketch_osnap(&joint_matrix, cfg, seed)?;
            let d = a.n_features();
            let y_out: Vec<f64> = (0..sk.n_rows()).map(|i| sk.values[(i, d)]).collect();
            let x_out = sk.select_features(&(0..d).collect::<Vec<_>>());
            Ok((x_out, LabelVector::Regression(y_out)))
        }
        LabelVector::Classification { ids, classes } => {
            let c = classes.len();
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
            for (i, &id) in ids.iter().enumerate() {
                members[id as usize].push(i);
            }
            let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
            let alloc = proportional_allocation(&sizes, cfg.target_rows.min(n));
            let mut blocks: Vec<FeatureMatrix> = Vec::new();
            let mut out_ids: Vec<u32> = Vec::new();
            for (k, group) in members.iter().enumerate() {
                if group.is_empty() {
                    continue;
                }
                let block = a.select_rows(group);
                let rows = alloc[k].max(1);
                let sketched = if rows >= group.len() {
                    block
                } else {
                    let block_cfg = SketchConfig { target_rows: rows, ..*cfg };
                    sketch_osnap(&block, &block_cfg, crate::rng::derive_seed(seed, &[k as u64]))?
                };
                out_ids.extend(std::iter::repeat(k as u32).take(sketched.n_rows()));
                blocks.push(sketched);
            }
            let total: usize = blocks.iter().map(FeatureMatrix::n_rows).sum();
            let mut values = Array2::<f64>::zeros((total, a.n_features()));
            let mut offset = 0;
            for b in &blocks {
                values
                    .slice_mut(ndarray::s![offset..offset + b.n_rows(), ..])
                    .assign(&b.values);
                offset += b.n_rows();
            }
            Ok((
                FeatureMatrix {
                    values,
                    feature_names: a.feature_names.clone(),
                    provenance: a.provenance.clone(),
                },
                LabelVector::Classification { ids: out_ids, classes: classes.clone() },
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::Column;
    use ndarray::Array2;
    use rand_distr::StandardNormal;

    fn numeric_table(n: usize) -> Table {
        Table::new("t", vec![Column::numeric("a", (0..n).map(|i| i as f64).collect())]).unwrap()
    }

    fn matrix(values: Array2<f64>) -> FeatureMatrix {
        let d = values.ncols();
        FeatureMatrix {
            values,
            feature_names: (0..d).map(|j| format!("f{}", j)).collect(),
            provenance: vec!["t".into(); d],
        }
    }

    #[test]
    fn full_uniform_sample_keeps_everything() {
        let cs = sample_uniform(&numeric_table(8), 8, 1).unwrap();
        assert_eq!(cs.source_row_indices, (0..8).collect::<Vec<_>>());
        assert!(cs.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn single_row_sample_in_range() {
        let cs = sample_uniform(&numeric_table(10), 1, 3).unwrap();
        assert_eq!(cs.source_row_indices.len(), 1);
        assert!(cs.source_row_indices[0] < 10);
        assert_eq!(cs.weights, vec![10.0]);
    }

    #[test]
    fn out_of_range_sizes_rejected() {
        assert!(matches!(sample_uniform(&numeric_table(5), 0, 0), Err(CoreError::BadSize(_))));
        assert!(matches!(sample_uniform(&numeric_table(5), 6, 0), Err(CoreError::BadSize(_))));
    }

    #[test]
    fn uniform_inclusion_frequencies_are_calibrated() {
        // Monte Carlo oracle: inclusion of each row across seeds is
        // Binomial(trials, m/n). With 10^4 rows a few 3-sigma excursions are
        // expected, so the check is: >=99% of rows within 3 sigma, all rows
        // within 5 sigma, and the global mean exact.
        let n = 10_000;
        let m = 1_000;
        let trials = 200;
        let mut counts = vec![0u32; n];
        for seed in 0..trials {
            let cs = sample_uniform_n(n, m, seed as u64).unwrap();
            for &i in &cs.source_row_indices {
                counts[i] += 1;
            }
        }
        let p = m as f64 / n as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        let mut outside3 = 0;
        for &c in &counts {
            let freq = c as f64 / trials as f64;
            let dev = (freq - p).abs();
            assert!(dev <= 5.0 * sigma, "row deviates {}sigma", dev / sigma);
            if dev > 3.0 * sigma {
                outside3 += 1;
            }
        }
        assert!(outside3 as f64 <= 0.01 * n as f64, "{} rows outside 3 sigma", outside3);
        let total: u32 = counts.iter().sum();
        assert_eq!(total as usize, trials * m);
    }

    #[test]
    fn stratified_allocation_is_proportional() {
        let mut labels = vec!["a"; 90];
        labels.extend(vec!["b"; 10]);
        let t = Table::new("t", vec![Column::categorical("y", &labels)]).unwrap();
        let cs = sample_stratified(&t, "y", 10, 0).unwrap();
        let n_a = cs.source_row_indices.iter().filter(|&&i| i < 90).count();
        assert_eq!(n_a, 9);
        assert_eq!(cs.source_row_indices.len(), 10);
    }

    #[test]
    fn largest_remainder_example() {
        assert_eq!(proportional_allocation(&[70, 20, 10], 10), vec![7, 2, 1]);
        assert_eq!(proportional_allocation(&[90, 10], 10), vec![9, 1]);
    }

    #[test]
    fn every_stratum_gets_a_row_when_feasible() {
        let mut labels = vec!["a"; 97];
        labels.push("b");
        labels.push("b");
        labels.push("c");
        let t = Table::new("t", vec![Column::categorical("y", &labels)]).unwrap();
        let cs = sample_stratified(&t, "y", 5, 2).unwrap();
        assert!(cs.source_row_indices.contains(&99)); // the lone "c" row
    }

    #[test]
    fn missing_stratum_column_errors() {
        let t = numeric_table(4);
        assert!(matches!(
            sample_stratified(&t, "nope", 2, 0),
            Err(CoreError::MissingColumn(_))
        ));
    }

    #[test]
    fn osnap_round_has_one_nonzero_per_column() {
        for round in 0..4 {
            let assignments = osnap_round(50, 10, 7, round);
            assert_eq!(assignments.len(), 50);
            for &(bucket, sign) in &assignments {
                assert!(bucket < 10);
                assert!(sign == 1 || sign == -1);
            }
        }
    }

    #[test]
    fn single_nonzero_row_propagates_to_round_buckets() {
        let n = 40;
        let mut values = Array2::<f64>::zeros((n, 3));
        let hot = 17;
        values[(hot, 0)] = 2.0;
        values[(hot, 1)] = -1.0;
        values[(hot, 2)] = 0.5;
        let a = matrix(values);
        let cfg = SketchConfig::new(0.5, 0.1, n, 12).unwrap();
        let sk = sketch_osnap(&a, &cfg, 3).unwrap();
        // contributions land exactly in the buckets the hot row hashes to
        let mut expected = Array2::<f64>::zeros((12, 3));
        for round in 0..cfg.repetitions {
            let (bucket, sign) = osnap_round(n, 12, 3, round as u64)[hot];
            for j in 0..3 {
                expected[(bucket, j)] += sign as f64 * a.values[(hot, j)];
            }
        }
        expected.mapv_inplace(|v| v / (cfg.repetitions as f64).sqrt());
        for (got, want) in sk.values.iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sketch_rejects_pointless_sizes() {
        let a = matrix(Array2::zeros((5, 2)));
        let cfg = SketchConfig::new(0.5, 0.1, 5, 5).unwrap();
        assert!(matches!(sketch_osnap(&a, &cfg, 0), Err(CoreError::BadSize(_))));
    }

    #[test]
    fn sketch_is_linear_and_deterministic() {
        let mut rng = rng_for(11, &[0]);
        let shape = (30, 4);
        let a = matrix(Array2::from_shape_fn(shape, |_| rng.sample::<f64, _>(StandardNormal)));
        let b = matrix(Array2::from_shape_fn(shape, |_| rng.sample::<f64, _>(StandardNormal)));
        let sum = matrix(&a.values + &b.values);
        let cfg = SketchConfig::new(0.5, 0.1, 30, 8).unwrap();
        let sa = sketch_osnap(&a, &cfg, 5).unwrap();
        let sb = sketch_osnap(&b, &cfg, 5).unwrap();
        let ssum = sketch_osnap(&sum, &cfg, 5).unwrap();
        for ((x, y), z) in sa.values.iter().zip(sb.values.iter()).zip(ssum.values.iter()) {
            assert!((x + y - z).abs() < 1e-10);
        }
        let sa2 = sketch_osnap(&a, &cfg, 5).unwrap();
        assert_eq!(sa.values, sa2.values);
    }

    #[test]
    fn embedding_distortion_within_epsilon() {
        // empirical distortion oracle: n=200, d=5, eps=0.5
        let n = 200;
        let d = 5;
        let eps = 0.5;
        let rows = SketchConfig::suggested_rows(d, n, eps);
        let cfg = SketchConfig::new(eps, 0.1, n, rows).unwrap();
        let mut rng = rng_for(42, &[1]);
        let a = matrix(Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal)));
        let sk = sketch_osnap(&a, &cfg, 42).unwrap();
        let mut ok = 0;
        let trials = 1000;
        for _ in 0..trials {
            let mut x: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
            let xv = ndarray::Array1::from_vec(x);
            let ax = a.values.dot(&xv);
            let pax = sk.values.dot(&xv);
            let ratio = pax.dot(&pax).sqrt() / ax.dot(&ax).sqrt();
            if ratio >= 1.0 - eps && ratio <= 1.0 + eps {
                ok += 1;
            }
        }
        assert!(ok >= 990, "only {}/1000 within distortion bounds", ok);
    }

    #[test]
    fn classification_sketch_blocks_by_label() {
        let n = 60;
        let mut rng = rng_for(9, &[4]);
        let a = matrix(Array2::from_shape_fn((n, 3), |_| rng.sample::<f64, _>(StandardNormal)));
        let ids: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        let y = LabelVector::Classification { ids, classes: vec!["a".into(), "b".into()] };
        let cfg = SketchConfig::new(0.5, 0.1, n, 20).unwrap();
        let (sx, sy) = sketch_osnap_labeled(&a, &y, &cfg, 0).unwrap();
        assert_eq!(sx.n_rows(), 20);
        assert_eq!(sy.len(), 20);
        match sy {
            LabelVector::Classification { ids, .. } => {
                assert_eq!(ids.iter().filter(|&&i| i == 0).count(), 10);
            }
            _ => panic!(),
        }
    }
}
