//! Point clouds with a labeled prefix, the two-circles generator, and CSV I/O.
//!
//! A [`Dataset`] keeps its labeled points first (indices `0..n`) and the
//! unlabeled ones after them, so learners can select labeled rows without an
//! index map. Labels are ±1.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: DMatrix<f64>,
    labels: Vec<i8>,
}

impl Dataset {
    /// Points are rows of `points`; `labels[i]` belongs to row `i`, and rows
    /// beyond `labels.len()` are unlabeled.
    pub fn new(points: DMatrix<f64>, labels: Vec<i8>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::invalid("dataset needs at least one point"));
        }
        if points.ncols() == 0 {
            return Err(Error::invalid("points need dimension >= 1"));
        }
        if labels.len() > points.nrows() {
            return Err(Error::invalid(format!(
                "{} labels for {} points",
                labels.len(),
                points.nrows()
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l != 1 && **l != -1) {
            return Err(Error::invalid(format!("label {bad} is not +1 or -1")));
        }
        Ok(Dataset { points, labels })
    }

    pub fn unlabeled(points: DMatrix<f64>) -> Result<Self> {
        Self::new(points, Vec::new())
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    /// Labels as a real vector, the regression target.
    pub fn targets(&self) -> DVector<f64> {
        DVector::from_iterator(self.labels.len(), self.labels.iter().map(|&l| l as f64))
    }

    /// Number of labeled points.
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Number of unlabeled points.
    pub fn m(&self) -> usize {
        self.points.nrows() - self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.m() == 0
    }

    pub fn point(&self, i: usize) -> RowDVector<f64> {
        self.points.row(i).into_owned()
    }

    /// The labeled prefix as its own dataset.
    pub fn labeled_part(&self) -> Dataset {
        let n = self.n();
        Dataset {
            points: self.points.rows(0, n).into_owned(),
            labels: self.labels.clone(),
        }
    }
}

/// Two concentric circles in the plane: `n_per_circle` points at `radii.0`
/// labeled +1, followed by `n_per_circle` points at `radii.1` labeled -1.
/// Angles are uniform; the radius of each point gets N(0, noise_sd²) noise.
pub fn gen_circles(
    n_per_circle: usize,
    radii: (f64, f64),
    noise_sd: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_circle == 0 {
        return Err(Error::invalid("n_per_circle must be positive"));
    }
    let (r1, r2) = radii;
    if !(r1 > 0.0 && r2 > 0.0 && r1.is_finite() && r2.is_finite()) {
        return Err(Error::invalid(format!(
            "radii must be positive, got ({r1}, {r2})"
        )));
    }
    if r1 == r2 {
        return Err(Error::invalid("radii must be distinct"));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::invalid(format!(
            "noise_sd must be >= 0, got {noise_sd}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
    let total = 2 * n_per_circle;
    let mut points = DMatrix::zeros(total, 2);
    let mut labels = Vec::with_capacity(total);
    for (c, (radius, label)) in [(r1, 1i8), (r2, -1i8)].into_iter().enumerate() {
        for i in 0..n_per_circle {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let r = if noise_sd > 0.0 {
                radius + noise.sample(&mut rng)
            } else {
                radius
            };
            let row = c * n_per_circle + i;
            points[(row, 0)] = r * theta.cos();
            points[(row, 1)] = r * theta.sin();
            labels.push(label);
        }
    }
    Dataset::new(points, labels)
}

/// Hide all but `n_keep` labels. Returns the training dataset (kept labels
/// first, then the rest unlabeled, in original order) together with the
/// hidden points and their true labels as a held-out set.
///
/// When `n_keep` is at least the number of classes, one point per class is
/// drawn first; the remaining kept points are uniform without replacement.
pub fn split_labels_holdout(ds: &Dataset, n_keep: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if !ds.is_fully_labeled() {
        return Err(Error::invalid("split_labels needs a fully labeled dataset"));
    }
    let total = ds.len();
    if n_keep > total {
        return Err(Error::invalid(format!(
            "n_keep {n_keep} exceeds {total} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut classes: Vec<i8> = ds.labels.clone();
    classes.sort_unstable();
    classes.dedup();

    let mut keep = vec![false; total];
    let mut kept = 0;
    if n_keep >= classes.len() {
        for class in &classes {
            let members: Vec<usize> = (0..total).filter(|&i| ds.labels[i] == *class).collect();
            let pick = *members.choose(&mut rng).expect("class has members");
            keep[pick] = true;
            kept += 1;
        }
    }
    let mut rest: Vec<usize> = (0..total).filter(|&i| !keep[i]).collect();
    rest.shuffle(&mut rng);
    for &i in rest.iter().take(n_keep - kept) {
        keep[i] = true;
    }

    let order: Vec<usize> = (0..total)
        .filter(|&i| keep[i])
        .chain((0..total).filter(|&i| !keep[i]))
        .collect();
    let points = DMatrix::from_fn(total, ds.dim(), |r, c| ds.points[(order[r], c)]);
    let labels: Vec<i8> = order[..n_keep].iter().map(|&i| ds.labels[i]).collect();
    let hidden_idx = &order[n_keep..];
    let hidden_points = DMatrix::from_fn(hidden_idx.len(), ds.dim(), |r, c| {
        ds.points[(hidden_idx[r], c)]
    });
    let hidden_labels: Vec<i8> = hidden_idx.iter().map(|&i| ds.labels[i]).collect();

    let train = Dataset { points, labels };
    let holdout = Dataset {
        points: hidden_points,
        labels: hidden_labels,
    };
    Ok((train, holdout))
}

/// [`split_labels_holdout`] without the held-out set.
pub fn split_labels(ds: &Dataset, n_keep: usize, seed: u64) -> Result<Dataset> {
    split_labels_holdout(ds, n_keep, seed).map(|(train, _)| train)
}

// CSV: d coordinate columns then a label column ("" = unlabeled), no header.

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    write_csv(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(ds: &Dataset, w: &mut W) -> Result<()> {
    let mut line = String::new();
    for i in 0..ds.len() {
        line.clear();
        for j in 0..ds.dim() {
            // `{}` prints the shortest representation that round-trips.
            line.push_str(&format!("{},", ds.points[(i, j)]));
        }
        if let Some(l) = ds.labels.get(i) {
            line.push_str(&l.to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = File::open(path.as_ref())?;
    read_csv(file)
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut coords: Vec<f64> = Vec::new();
    let mut labels: Vec<i8> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        if record.len() < 2 {
            return Err(Error::Parse {
                row,
                msg: "need at least one coordinate and a label column".into(),
            });
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    row,
                    msg: format!("expected {w} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        let d = record.len() - 1;
        for j in 0..d {
            let field = record[j].trim();
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                msg: format!("non-numeric coordinate {field:?} in column {}", j + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    msg: format!("non-finite coordinate in column {}", j + 1),
                });
            }
            coords.push(v);
        }
        let label_field = record[d].trim();
        if label_field.is_empty() {
            rows += 1;
            continue;
        }
        let label = match label_field.parse::<f64>() {
            Ok(1.0) => 1i8,
            Ok(-1.0) => -1i8,
            _ => {
                return Err(Error::Parse {
                    row,
                    msg: format!("label {label_field:?} is not -1, 1, or empty"),
                })
            }
        };
        if labels.len() != rows {
            return Err(Error::Parse {
                row,
                msg: "labeled rows must precede unlabeled rows".into(),
            });
        }
        labels.push(label);
        rows += 1;
    }
    let d = match width {
        Some(w) => w - 1,
        None => {
            return Err(Error::Parse {
                row: 0,
                msg: "empty dataset".into(),
            })
        }
    };
    let points = DMatrix::from_row_slice(rows, d, &coords);
    Dataset::new(points, labels)
}
