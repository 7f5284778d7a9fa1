//! Binary-labelled tabular data and the synthetic generators: two moons,
//! two overlapping ovals, and an extra nuisance column mixed from the label.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GigError, Result};

pub const LABEL_COLUMN: &str = "label";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(GigError::Schema(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != names.len()) {
            return Err(GigError::Schema(format!(
                "row {r} has {} values, expected {}",
                rows[r].len(),
                names.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(GigError::Schema("labels must be 0 or 1".into()));
        }
        Ok(Self { names, rows, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn label_mean(&self) -> f64 {
        self.labels.iter().map(|&l| f64::from(l)).sum::<f64>() / self.labels.len() as f64
    }

    /// Feature-wise median (mean of the two middle values for even counts).
    pub fn median(&self) -> Result<Vec<f64>> {
        column_medians(&self.rows)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Shuffled split; the first part gets `round(frac * n)` rows.
    pub fn split(&self, frac: f64, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.n_rows()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = ((self.n_rows() as f64) * frac).round() as usize;
        (self.subset(&idx[..cut]), self.subset(&idx[cut..]))
    }

    /// Header row of feature names then `label`.
    pub fn write_csv_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = self.names.clone();
        header.push(LABEL_COLUMN.to_string());
        out.write_record(&header)?;
        for (row, label) in self.rows.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(label.to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv_to(std::fs::File::create(path)?)
    }

    /// Last column is the label; all others are features.
    pub fn read_csv_from<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 {
            return Err(GigError::Schema("need at least one feature column and a label column".into()));
        }
        let names = header[..header.len() - 1].to_vec();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut vals = Vec::with_capacity(rec.len());
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    GigError::Schema(format!("row {}, column {}: not a number: {field:?}", i + 1, header[j]))
                })?;
                vals.push(v);
            }
            let label = vals.pop().expect("non-empty record");
            if label != 0.0 && label != 1.0 {
                return Err(GigError::Schema(format!("row {}: label {label} is not 0 or 1", i + 1)));
            }
            labels.push(label as u8);
            rows.push(vals);
        }
        Self::new(names, rows, labels)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv_from(std::fs::File::open(path)?)
    }
}

/// Median of every column of `rows` (mean of the two middle values for
/// even counts).
pub fn column_medians(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = rows.first() else {
        return Err(GigError::Degenerate("median of an empty dataset".into()));
    };
    Ok((0..first.len())
        .map(|j| {
            let mut c: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            c.sort_by(f64::total_cmp);
            let n = c.len();
            if n % 2 == 1 {
                c[n / 2]
            } else {
                0.5 * (c[n / 2 - 1] + c[n / 2])
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n_samples: usize,
    pub noise: f64,
    pub seed: u64,
    /// Mix for an appended nuisance column, if any.
    pub nuisance_mix: Option<f64>,
}

impl GenSpec {
    pub fn new(n_samples: usize, noise: f64, seed: u64) -> Self {
        Self {
            n_samples,
            noise,
            seed,
            nuisance_mix: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(GigError::InvalidArgument("need at least 2 samples".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(GigError::InvalidArgument("noise must be finite and non-negative".into()));
        }
        if let Some(rho) = self.nuisance_mix {
            check_mix(rho)?;
        }
        Ok(())
    }
}

fn check_mix(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(GigError::InvalidArgument("nuisance mix must lie in [0, 1]".into()));
    }
    Ok(())
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
}

fn finish(
    spec: &GenSpec,
    mut rng: ChaCha8Rng,
    mut rows: Vec<Vec<f64>>,
    mut labels: Vec<u8>,
) -> Result<Dataset> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(&mut rng);
    rows = idx.iter().map(|&i| rows[i].clone()).collect();
    labels = idx.iter().map(|&i| labels[i]).collect();
    let data = Dataset::new(vec!["x".into(), "y".into()], rows, labels)?;
    match spec.nuisance_mix {
        Some(rho) => add_nuisance(&data, rho, rng.random()),
        None => Ok(data),
    }
}

/// Upper half-circle `(cos t, sin t)` labelled 0 and lower half-circle
/// `(1 - cos t, 0.5 - sin t)` labelled 1, `t` evenly spaced on `[0, pi]`;
/// Gaussian noise of scale `noise`, then everything divided by the largest
/// point norm.
pub fn gen_moons(spec: &GenSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_out = spec.n_samples / 2;
    let n_in = spec.n_samples - n_out;
    let pi = std::f64::consts::PI;
    let mut rows: Vec<Vec<f64>> = linspace(0.0, pi, n_out)
        .map(|t| vec![t.cos(), t.sin()])
        .chain(linspace(0.0, pi, n_in).map(|t| vec![1.0 - t.cos(), 0.5 - t.sin()]))
        .collect();
    let labels: Vec<u8> = std::iter::repeat_n(0, n_out).chain(std::iter::repeat_n(1, n_in)).collect();
    if spec.noise > 0.0 {
        for r in &mut rows {
            for v in r.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += spec.noise * z;
            }
        }
    }
    let scale = rows
        .iter()
        .map(|r| r[0].hypot(r[1]))
        .fold(0.0, f64::max);
    if scale > 0.0 {
        for r in &mut rows {
            r[0] /= scale;
            r[1] /= scale;
        }
    }
    finish(spec, rng, rows, labels)
}

pub const OVAL_CENTERS: [[f64; 2]; 2] = [[0.0, 0.5], [0.0, -0.5]];
pub const OVAL_SEMI_AXES: [f64; 2] = [2.0, 1.0];

/// Whether `p` lies in oval 0 (upper, label 1) or oval 1 (lower, label 0).
pub fn in_oval(p: &[f64], which: usize) -> bool {
    let [cx, cy] = OVAL_CENTERS[which];
    let [a, b] = OVAL_SEMI_AXES;
    ((p[0] - cx) / a).powi(2) + ((p[1] - cy) / b).powi(2) <= 1.0
}

pub fn in_overlap(p: &[f64]) -> bool {
    in_oval(p, 0) && in_oval(p, 1)
}

/// Uniform points from two axis-aligned ellipses with semi-axes (2, 1)
/// centred at (0, 0.5) (label 1) and (0, -0.5) (label 0), half each.
pub fn gen_ovals(spec: &GenSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_upper = spec.n_samples / 2;
    let mut rows = Vec::with_capacity(spec.n_samples);
    let mut labels = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let which = usize::from(i >= n_upper);
        let r = rng.random::<f64>().sqrt();
        let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
        let [cx, cy] = OVAL_CENTERS[which];
        let [a, b] = OVAL_SEMI_AXES;
        rows.push(vec![cx + a * r * theta.cos(), cy + b * r * theta.sin()]);
        labels.push(u8::from(which == 0));
    }
    finish(spec, rng, rows, labels)
}

/// Appends `nuisance = rho * label + (1 - rho) * z`, `z ~ N(0, 1)`.
pub fn add_nuisance(data: &Dataset, rho: f64, seed: u64) -> Result<Dataset> {
    check_mix(rho)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.clone();
    out.names.push("nuisance".into());
    for (row, &label) in out.rows.iter_mut().zip(&data.labels) {
        let z: f64 = StandardNormal.sample(&mut rng);
        row.push(rho * f64::from(label) + (1.0 - rho) * z);
    }
    Ok(out)
}
