//! Datasets: synthetic generators, delimited-text ingestion, z-scoring, splits.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{flatten_sample_major, NetworkArchitecture};
use crate::numerics::{Matrix, RngStream, Vector};

/// Per-column `(mean, std)` of a z-score transform. `degenerate[i]` marks a
/// constant column, which is centered but left unscaled (std stored as 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl ColumnScaling {
    /// Population (divide by N) statistics of each column.
    pub fn fit(m: &Matrix) -> Self {
        let n = m.nrows() as f64;
        let mut mean = Vec::with_capacity(m.ncols());
        let mut std = Vec::with_capacity(m.ncols());
        let mut degenerate = Vec::with_capacity(m.ncols());
        for col in m.column_iter() {
            let mu = col.sum() / n;
            let sd = (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
            let flat = !(sd > 1e-12 * (1.0 + mu.abs()));
            mean.push(mu);
            std.push(if flat { 1.0 } else { sd });
            degenerate.push(flat);
        }
        Self {
            mean,
            std,
            degenerate,
        }
    }

    pub fn apply(&self, m: &Matrix) -> Matrix {
        Matrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            (m[(i, j)] - self.mean[j]) / self.std[j]
        })
    }

    pub fn invert(&self, m: &Matrix) -> Matrix {
        Matrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            m[(i, j)] * self.std[j] + self.mean[j]
        })
    }

    /// Scales spreads (std, band widths) back to original units.
    pub fn invert_spread(&self, m: &Matrix) -> Matrix {
        Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * self.std[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub inputs: ColumnScaling,
    pub targets: ColumnScaling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    targets: Matrix,
    feature_names: Option<Vec<String>>,
    standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::dims("dataset rows", inputs.nrows(), targets.nrows()));
        }
        if inputs.ncols() == 0 || targets.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "dataset needs at least one input and one target column".into(),
            ));
        }
        crate::numerics::ensure_finite(&inputs, "dataset inputs")?;
        crate::numerics::ensure_finite(&targets, "dataset targets")?;
        Ok(Self {
            inputs,
            targets,
            feature_names: None,
            standardization: None,
        })
    }

    /// Single-input, single-target convenience constructor.
    pub fn from_pairs(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::dims("pairs", x.len(), y.len()));
        }
        Self::new(
            Matrix::from_column_slice(x.len(), 1, x),
            Matrix::from_column_slice(y.len(), 1, y),
        )
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        self.feature_names = Some(names);
        self
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn targets(&self) -> &Matrix {
        &self.targets
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    /// Targets flattened sample-major: the observation vector `d_obs`.
    pub fn observation_vector(&self) -> Vector {
        Vector::from_vec(flatten_sample_major(&self.targets))
    }

    /// Maps model-space predictions back to original target units.
    pub fn destandardize_targets(&self, m: &Matrix) -> Matrix {
        match &self.standardization {
            Some(s) => s.targets.invert(m),
            None => m.clone(),
        }
    }

    pub fn original_targets(&self) -> Matrix {
        self.destandardize_targets(&self.targets)
    }

    pub fn original_inputs(&self) -> Matrix {
        match &self.standardization {
            Some(s) => s.inputs.invert(&self.inputs),
            None => self.inputs.clone(),
        }
    }

    /// Maps inputs in original units to the space the model was trained in.
    pub fn standardize_inputs(&self, m: &Matrix) -> Matrix {
        match &self.standardization {
            Some(s) => s.inputs.apply(m),
            None => m.clone(),
        }
    }

    /// Z-scores inputs and targets with statistics fitted on this dataset.
    pub fn standardize(&self) -> Dataset {
        let base = self.unstandardized();
        let s = Standardization {
            inputs: ColumnScaling::fit(&base.inputs),
            targets: ColumnScaling::fit(&base.targets),
        };
        self.standardize_with(&s)
    }

    /// Applies a transform fitted elsewhere (e.g. on the training split).
    pub fn standardize_with(&self, s: &Standardization) -> Dataset {
        let base = self.unstandardized();
        Dataset {
            inputs: s.inputs.apply(&base.inputs),
            targets: s.targets.apply(&base.targets),
            feature_names: self.feature_names.clone(),
            standardization: Some(s.clone()),
        }
    }

    pub fn unstandardized(&self) -> Dataset {
        Dataset {
            inputs: self.original_inputs(),
            targets: self.original_targets(),
            feature_names: self.feature_names.clone(),
            standardization: None,
        }
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let pick = |m: &Matrix| Matrix::from_fn(indices.len(), m.ncols(), |i, j| m[(indices[i], j)]);
        Dataset {
            inputs: pick(&self.inputs),
            targets: pick(&self.targets),
            feature_names: self.feature_names.clone(),
            standardization: self.standardization.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_count: usize,
    pub test_count: usize,
    pub shuffle_seed: u64,
}

/// Index sets of a seeded shuffle split: `(train, test)`.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if spec.train_count + spec.test_count > n {
        return Err(Error::InvalidArgument(format!(
            "split {} + {} exceeds {} rows",
            spec.train_count, spec.test_count, n
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(RngStream::new(spec.shuffle_seed).inner());
    let test = idx[spec.train_count..spec.train_count + spec.test_count].to_vec();
    idx.truncate(spec.train_count);
    Ok((idx, test))
}

pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.len(), spec)?;
    Ok((ds.select(&train), ds.select(&test)))
}

/// Mean absolute error over every scalar entry.
pub fn loss_mae(pred: &Matrix, targets: &Matrix) -> Result<f64> {
    if pred.shape() != targets.shape() {
        return Err(Error::dims(
            "loss_mae",
            format!("{:?}", targets.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok((pred - targets).abs().sum() / pred.len() as f64)
}

/// `y = x³ + ε` with `x ~ U(x_low, x_high)` and `ε ~ N(0, noise_var)`.
pub fn gen_toy_cubic(
    rng: &mut RngStream,
    n: usize,
    x_low: f64,
    x_high: f64,
    noise_var: f64,
) -> Result<Dataset> {
    if !(x_low < x_high) {
        return Err(Error::InvalidArgument(format!(
            "empty interval ({x_low}, {x_high})"
        )));
    }
    if noise_var < 0.0 {
        return Err(Error::NegativeVariance {
            index: 0,
            value: noise_var,
        });
    }
    let sd = noise_var.sqrt();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = rng.uniform(x_low, x_high);
        x.push(xi);
        y.push(xi.powi(3) + sd * rng.standard_normal());
    }
    Dataset::from_pairs(&x, &y)
}

pub const TOY_NOISE_VARIANCE: f64 = 9.0;

/// Spread of the ideal dataset's inputs.
pub const IDEAL_INPUT_STD: f64 = 10.0;

/// Inputs `~ N(0, input_std²)`, true weights `~ N(0, 1)`, targets from the
/// network itself. Returns `(train, test, true_weights)`.
pub fn gen_ideal_dataset(
    rng: &mut RngStream,
    arch: &NetworkArchitecture,
    n_train: usize,
    n_test: usize,
    input_std: f64,
) -> Result<(Dataset, Dataset, Vec<f64>)> {
    let weights = rng.sample_standard_normal(arch.weight_count(), 1);
    let weights = weights.as_slice().to_vec();
    let (train, test) = ideal_dataset_with_weights(rng, arch, &weights, n_train, n_test, input_std)?;
    Ok((train, test, weights))
}

/// [`gen_ideal_dataset`] with caller-provided true weights.
pub fn ideal_dataset_with_weights(
    rng: &mut RngStream,
    arch: &NetworkArchitecture,
    weights: &[f64],
    n_train: usize,
    n_test: usize,
    input_std: f64,
) -> Result<(Dataset, Dataset)> {
    let mut make = |n: usize| -> Result<Dataset> {
        let x = rng.sample_standard_normal(n, arch.input_dim()) * input_std;
        let y = arch.forward(weights, &x)?;
        Dataset::new(x, y)
    };
    let train = make(n_train)?;
    let test = make(n_test)?;
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    #[default]
    Comma,
    /// Any run of spaces or tabs.
    Whitespace,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub input_cols: Vec<usize>,
    pub target_cols: Vec<usize>,
    pub header: bool,
    pub delimiter: Delimiter,
}

/// Parses delimited numeric text. `#` lines and blank lines are skipped.
pub fn parse_csv(text: &str, opts: &CsvOptions) -> Result<Dataset> {
    if opts.input_cols.is_empty() || opts.target_cols.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one input and one target column".into(),
        ));
    }
    let split_line = |line: &str| -> Vec<String> {
        match opts.delimiter {
            Delimiter::Comma => line.split(',').map(|c| c.trim().to_string()).collect(),
            Delimiter::Whitespace => line.split_whitespace().map(str::to_string).collect(),
        }
    };
    let needed = opts
        .input_cols
        .iter()
        .chain(&opts.target_cols)
        .copied()
        .max()
        .unwrap_or(0)
        + 1;

    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for line in text.lines() {
        let trimmed = line.trim().trim_start_matches('\u{feff}');
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields = split_line(trimmed);
        if opts.header && header.is_none() {
            header = Some(fields);
            continue;
        }
        let row = rows.len();
        if fields.len() < needed {
            return Err(Error::ColumnMismatch {
                row,
                message: format!("{} fields, need at least {needed}", fields.len()),
            });
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::ColumnMismatch {
                    row,
                    message: format!("{} fields, earlier rows have {w}", fields.len()),
                })
            }
            _ => {}
        }
        let values = fields
            .iter()
            .enumerate()
            .map(|(col, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    row,
                    col,
                    cell: cell.clone(),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no data rows".into()));
    }
    let pick = |cols: &[usize]| Matrix::from_fn(rows.len(), cols.len(), |i, j| rows[i][cols[j]]);
    let ds = Dataset::new(pick(&opts.input_cols), pick(&opts.target_cols))?;
    Ok(match header {
        Some(h) => {
            let names = opts
                .input_cols
                .iter()
                .chain(&opts.target_cols)
                .map(|&c| h.get(c).cloned().unwrap_or_default())
                .collect();
            ds.with_feature_names(names)
        }
        None => ds,
    })
}

pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    parse_csv(&text, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn opts(inputs: Vec<usize>, targets: Vec<usize>) -> CsvOptions {
        CsvOptions {
            input_cols: inputs,
            target_cols: targets,
            header: false,
            delimiter: Delimiter::Comma,
        }
    }

    #[test]
    fn cubic_without_noise() {
        let ds = gen_toy_cubic(&mut RngStream::new(1), 50, -4.0, 4.0, 0.0).unwrap();
        for i in 0..ds.len() {
            let x = ds.inputs()[(i, 0)];
            assert!((-4.0..4.0).contains(&x));
            assert!((ds.targets()[(i, 0)] - x.powi(3)).abs() < 1e-12);
        }
        assert!(gen_toy_cubic(&mut RngStream::new(1), 5, 1.0, 1.0, 9.0).is_err());
    }

    #[test]
    fn cubic_noise_moment() {
        let ds = gen_toy_cubic(&mut RngStream::new(5), 100_000, -4.0, 4.0, TOY_NOISE_VARIANCE).unwrap();
        let r: Vec<f64> = (0..ds.len())
            .map(|i| ds.targets()[(i, 0)] - ds.inputs()[(i, 0)].powi(3))
            .collect();
        let n = r.len() as f64;
        let m = r.iter().sum::<f64>() / n;
        let sd = (r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd / 3.0 - 1.0).abs() < 0.02, "{sd}");
    }

    #[test]
    fn ideal_dataset_shapes_and_determinism() {
        let arch = NetworkArchitecture::reference();
        let (tr, te, w) = gen_ideal_dataset(&mut RngStream::new(3), &arch, 70, 30, 10.0).unwrap();
        assert_eq!(w.len(), 93);
        assert_eq!((tr.len(), te.len()), (70, 30));
        let again = gen_ideal_dataset(&mut RngStream::new(3), &arch, 70, 30, 10.0).unwrap();
        assert_eq!(again.0, tr);
        assert_eq!(again.1, te);
        assert_eq!(again.2, w);
        let y = arch.forward(&w, tr.inputs()).unwrap();
        assert!((y - tr.targets()).amax() <= 1e-12);

        let zero = vec![0.0; 93];
        let (tr0, _) = ideal_dataset_with_weights(&mut RngStream::new(3), &arch, &zero, 10, 0, 10.0).unwrap();
        assert!(tr0.targets().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn csv_basic() {
        let ds = parse_csv("1,3\n2,5\n4,9\n", &opts(vec![0], vec![1])).unwrap();
        assert_eq!(ds.inputs().as_slice(), &[1.0, 2.0, 4.0]);
        assert_eq!(ds.targets().as_slice(), &[3.0, 5.0, 9.0]);
    }

    #[test]
    fn csv_header_comments_and_whitespace() {
        let text = "# generated\nx y\n1  3\n\n2\t5\n";
        let o = CsvOptions {
            header: true,
            delimiter: Delimiter::Whitespace,
            ..opts(vec![0], vec![1])
        };
        let ds = parse_csv(text, &o).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature_names().unwrap(), &["x".to_string(), "y".to_string()]);
    }

    #[test]
    fn csv_errors() {
        match parse_csv("4,abc\n", &opts(vec![0], vec![1])) {
            Err(Error::Parse { row: 0, col: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_csv("1,2\n3\n", &opts(vec![0], vec![1])),
            Err(Error::ColumnMismatch { row: 1, .. })
        ));
        assert!(matches!(
            parse_csv("1,2\n", &opts(vec![0], vec![4])),
            Err(Error::ColumnMismatch { row: 0, .. })
        ));
        assert!(matches!(
            load_csv(Path::new("/nonexistent/data.csv"), &opts(vec![0], vec![1])),
            Err(Error::FileNotFound(_))
        ));
    }

    #[test]
    fn csv_multi_output() {
        let mut text = String::new();
        for r in 0..4 {
            let row: Vec<String> = (0..25).map(|c| format!("{}", r * 100 + c)).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let ds = parse_csv(&text, &opts((0..20).collect(), (20..25).collect())).unwrap();
        assert_eq!((ds.input_dim(), ds.output_dim()), (20, 5));
        assert_eq!(ds.observation_vector().len(), 20);
        assert_eq!(ds.observation_vector()[5], 120.0);
    }

    #[test]
    fn standardize_cases() {
        let ds = Dataset::from_pairs(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap();
        let s = ds.standardize();
        let x = s.inputs().as_slice();
        assert!((x[0] + 1.2247).abs() < 1e-3 && x[1].abs() < 1e-12 && (x[2] - 1.2247).abs() < 1e-3);
        let st = s.standardization().unwrap();
        assert!(st.targets.degenerate[0]);
        assert!(s.targets().iter().all(|v| *v == 0.0));

        let z = Dataset::from_pairs(&[-1.0, 1.0], &[1.0, -1.0]).unwrap();
        let zs = z.standardize();
        assert!((zs.inputs() - z.inputs()).amax() < 1e-10);
        assert!((zs.targets() - z.targets()).amax() < 1e-10);
    }

    #[test]
    fn mae_cases() {
        let t = Matrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!(loss_mae(&t, &t).unwrap(), 0.0);
        let p = Matrix::from_column_slice(3, 1, &[2.0, 2.0, 1.0]);
        assert!((loss_mae(&p, &t).unwrap() - 1.0).abs() < 1e-15);
        assert!(loss_mae(&p, &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn split_rejects_oversized() {
        let ds = Dataset::from_pairs(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        let spec = SplitSpec {
            train_count: 2,
            test_count: 1,
            shuffle_seed: 0,
        };
        assert!(split(&ds, &spec).is_err());
    }

    proptest! {
        #[test]
        fn standardize_inverts(seed in any::<u64>(), rows in 2usize..20) {
            let mut rng = RngStream::new(seed);
            let x = rng.sample_standard_normal(rows, 3) * 7.0;
            let y = rng.sample_standard_normal(rows, 2).add_scalar(40.0);
            let ds = Dataset::new(x, y).unwrap();
            let back = ds.standardize().unstandardized();
            prop_assert!((back.inputs() - ds.inputs()).amax() < 1e-10);
            prop_assert!((back.targets() - ds.targets()).amax() < 1e-10);
        }

        #[test]
        fn splits_are_disjoint_and_reproducible(n in 1usize..200, seed in any::<u64>(), frac in 0.0f64..1.0) {
            let train_count = (n as f64 * frac) as usize;
            let spec = SplitSpec { train_count, test_count: n - train_count, shuffle_seed: seed };
            let (a, b) = split_indices(n, &spec).unwrap();
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(split_indices(n, &spec).unwrap(), (a, b));
        }

        #[test]
        fn mae_translation_invariant(seed in any::<u64>(), c in -100.0f64..100.0) {
            let mut rng = RngStream::new(seed);
            let p = rng.sample_standard_normal(5, 2);
            let t = rng.sample_standard_normal(5, 2);
            let base = loss_mae(&p, &t).unwrap();
            prop_assert!(base >= 0.0);
            let shifted = loss_mae(&p.add_scalar(c), &t.add_scalar(c)).unwrap();
            prop_assert!((shifted - base).abs() < 1e-9);
        }
    }
}
