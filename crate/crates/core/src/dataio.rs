//! Panel CSV ingestion, preprocessing, and binned evaluation.
//!
//! Two CSV shapes are handled: the crate's own dataset export
//! (`subject_id, obs_id, x_1..x_d[, y]`, optionally preceded by one
//! `# manifest:` comment line) and arbitrary panel files described by a
//! [`PanelSchema`]. Missing cells parse as NaN and are resolved by
//! [`preprocess`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{RepeatedDataset, Subject};
use crate::error::{Error, Result};

/// Maps CSV columns onto the panel structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelSchema {
    pub subject_col: String,
    pub covariate_cols: Vec<String>,
    pub response_col: Option<String>,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

fn parse_cell(cell: &str, path: &str, line: u64) -> Result<f64> {
    if is_missing(cell) {
        return Ok(f64::NAN);
    }
    cell.trim().parse().map_err(|_| Error::Parse {
        path: path.into(),
        line: line as usize,
        msg: format!("cannot parse `{cell}` as a number"),
    })
}

/// Loads a panel CSV, grouping rows by the subject column in order of first
/// appearance and preserving row order within subjects. Missing cells
/// become NaN.
pub fn load_panel_csv(path: &Path, schema: &PanelSchema) -> Result<RepeatedDataset> {
    let pathstr = path.display().to_string();
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: pathstr.clone(),
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in {pathstr}")))
    };
    let subject_idx = col(&schema.subject_col)?;
    let cov_idx: Vec<usize> = schema
        .covariate_cols
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let resp_idx = match &schema.response_col {
        Some(c) => Some(col(c)?),
        None => None,
    };

    let d = cov_idx.len();
    if d == 0 {
        return Err(Error::Schema("schema names no covariate columns".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, Subject> = std::collections::HashMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse {
                path: pathstr.clone(),
                line: line as usize,
                msg: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Parse {
                path: pathstr.clone(),
                line: line as usize,
                msg: format!("row has {} fields, expected at least {}", record.len(), i + 1),
            })
        };
        let id = get(subject_idx)?.to_string();
        let subject = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Subject {
                covariates: Vec::new(),
                responses: resp_idx.map(|_| Vec::new()),
            }
        });
        for &ci in &cov_idx {
            subject
                .covariates
                .push(parse_cell(get(ci)?, &pathstr, line)?);
        }
        if let Some(ri) = resp_idx {
            subject
                .responses
                .as_mut()
                .unwrap()
                .push(parse_cell(get(ri)?, &pathstr, line)?);
        }
    }

    if order.is_empty() {
        return Err(Error::EmptyDataset { path: pathstr });
    }
    let subjects = order
        .into_iter()
        .map(|id| groups.remove(&id).unwrap())
        .collect();
    RepeatedDataset::new(d, subjects)
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the crate's dataset CSV: `subject_id, obs_id, x_1..x_d[, y]` with
/// 17 significant digits, optionally preceded by a `# manifest:` line.
pub fn write_dataset_csv(
    path: &Path,
    data: &RepeatedDataset,
    manifest: Option<&str>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(m) = manifest {
        writeln!(w, "# manifest: {m}")?;
    }
    let with_y = data.has_responses();
    let mut header = String::from("subject_id,obs_id");
    for l in 1..=data.d {
        header.push_str(&format!(",x_{l}"));
    }
    if with_y {
        header.push_str(",y");
    }
    writeln!(w, "{header}")?;
    for (i, j, row) in data.iter_rows() {
        let mut line = format!("{i},{j}");
        for v in row {
            line.push(',');
            line.push_str(&fmt(*v));
        }
        if with_y {
            line.push(',');
            line.push_str(&fmt(data.subjects[i].responses.as_ref().unwrap()[j]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads a dataset CSV produced by [`write_dataset_csv`], returning the
/// dataset and the manifest line if one is present.
pub fn read_dataset_csv(path: &Path) -> Result<(RepeatedDataset, Option<String>)> {
    let pathstr = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let mut manifest = None;
    let header = loop {
        match lines.next() {
            Some((_, Ok(l))) => {
                if let Some(m) = l.strip_prefix("# manifest:") {
                    manifest = Some(m.trim().to_string());
                } else if l.starts_with('#') || l.trim().is_empty() {
                    continue;
                } else {
                    break l;
                }
            }
            Some((_, Err(e))) => return Err(Error::Io(e)),
            None => {
                return Err(Error::EmptyDataset { path: pathstr });
            }
        }
    };

    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "subject_id" || cols[1] != "obs_id" {
        return Err(Error::Schema(format!(
            "{pathstr}: expected header starting `subject_id,obs_id,x_1...`"
        )));
    }
    let with_y = *cols.last().unwrap() == "y";
    let d = cols.len() - 2 - usize::from(with_y);
    if d == 0 {
        return Err(Error::Schema(format!("{pathstr}: no covariate columns")));
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, Subject> = std::collections::HashMap::new();
    let mut any = false;
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        any = true;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                path: pathstr.clone(),
                line: lineno + 1,
                msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let id = fields[0].to_string();
        let subject = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Subject {
                covariates: Vec::new(),
                responses: with_y.then(Vec::new),
            }
        });
        for f in &fields[2..2 + d] {
            subject
                .covariates
                .push(parse_cell(f, &pathstr, (lineno + 1) as u64)?);
        }
        if with_y {
            subject
                .responses
                .as_mut()
                .unwrap()
                .push(parse_cell(fields[2 + d], &pathstr, (lineno + 1) as u64)?);
        }
    }
    if !any {
        return Err(Error::EmptyDataset { path: pathstr });
    }
    let subjects: Vec<Subject> = order
        .into_iter()
        .map(|id| groups.remove(&id).unwrap())
        .collect();
    Ok((RepeatedDataset::new(d, subjects)?, manifest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseTransform {
    Identity,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rescale {
    MinMaxToUnitCube,
    None,
}

/// Cleaning and normalization recipe applied to loaded panel data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub response_transform: ResponseTransform,
    /// Covariate columns receiving `log(1 + x)`.
    pub log1p_cols: Vec<String>,
    /// Keep only the first `k` observations per subject.
    pub hours_retained: Option<usize>,
    pub drop_missing_rows: bool,
    /// Remove target subjects that have any missing value (judged on the
    /// data as loaded, before row drops).
    pub drop_missing_subjects_in_target: bool,
    pub rescale: Rescale,
}

impl PreprocessSpec {
    pub fn identity() -> Self {
        Self {
            response_transform: ResponseTransform::Identity,
            log1p_cols: Vec::new(),
            hours_retained: None,
            drop_missing_rows: false,
            drop_missing_subjects_in_target: false,
            rescale: Rescale::None,
        }
    }
}

/// Column-wise min/max fitted on the source domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub columns: Vec<String>,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl MinMaxScaler {
    /// Scales one value into `[0,1]`, reporting whether clamping occurred.
    fn apply(&self, col: usize, v: f64) -> (f64, bool) {
        let (lo, hi) = (self.mins[col], self.maxs[col]);
        if hi <= lo {
            return (0.0, false);
        }
        let s = (v - lo) / (hi - lo);
        if s < 0.0 {
            (0.0, true)
        } else if s > 1.0 {
            (1.0, true)
        } else {
            (s, false)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for i in 0..self.columns.len() {
            writeln!(
                w,
                "{} {} {}",
                self.columns[i],
                fmt(self.mins[i]),
                fmt(self.maxs[i])
            )?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let pathstr = path.display().to_string();
        let reader = BufReader::new(File::open(path)?);
        let mut columns = Vec::new();
        let mut mins = Vec::new();
        let mut maxs = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    path: pathstr,
                    line: lineno + 1,
                    msg: "expected `name min max`".into(),
                });
            }
            columns.push(parts[0].to_string());
            mins.push(parts[1].parse().map_err(|_| Error::Parse {
                path: pathstr.clone(),
                line: lineno + 1,
                msg: "bad min".into(),
            })?);
            maxs.push(parts[2].parse().map_err(|_| Error::Parse {
                path: pathstr.clone(),
                line: lineno + 1,
                msg: "bad max".into(),
            })?);
        }
        Ok(Self {
            columns,
            mins,
            maxs,
        })
    }
}

/// Output of [`preprocess`].
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub source: RepeatedDataset,
    pub target: Option<RepeatedDataset>,
    pub scaler: Option<MinMaxScaler>,
    /// Fraction of target covariate coordinates clamped into `[0,1]`.
    pub target_clamped_fraction: f64,
}

fn row_has_missing(subject: &Subject, d: usize, j: usize) -> bool {
    let cov_missing = subject.covariates[j * d..(j + 1) * d]
        .iter()
        .any(|v| v.is_nan());
    let resp_missing = subject
        .responses
        .as_ref()
        .map(|r| r[j].is_nan())
        .unwrap_or(false);
    cov_missing || resp_missing
}

fn subject_has_missing(subject: &Subject, d: usize) -> bool {
    let m = subject.covariates.len() / d;
    (0..m).any(|j| row_has_missing(subject, d, j))
}

fn clean_domain(
    data: &RepeatedDataset,
    spec: &PreprocessSpec,
    drop_whole_missing_subjects: bool,
    covariate_names: &[String],
) -> Result<RepeatedDataset> {
    let d = data.d;
    let log_cols: Vec<usize> = covariate_names
        .iter()
        .enumerate()
        .filter(|(_, name)| spec.log1p_cols.contains(name))
        .map(|(i, _)| i)
        .collect();
    for wanted in &spec.log1p_cols {
        if !covariate_names.contains(wanted) {
            return Err(Error::Schema(format!(
                "log1p column `{wanted}` is not a covariate column"
            )));
        }
    }

    let mut subjects = Vec::new();
    for subject in &data.subjects {
        if drop_whole_missing_subjects && subject_has_missing(subject, d) {
            continue;
        }
        let m = subject.covariates.len() / d;
        let mut cov = Vec::new();
        let mut resp = subject.responses.as_ref().map(|_| Vec::new());
        let mut kept = 0usize;
        for j in 0..m {
            if spec.drop_missing_rows && row_has_missing(subject, d, j) {
                continue;
            }
            if let Some(k) = spec.hours_retained {
                if kept >= k {
                    break;
                }
            }
            kept += 1;
            for (l, v) in subject.covariates[j * d..(j + 1) * d].iter().enumerate() {
                let v = if log_cols.contains(&l) { v.ln_1p() } else { *v };
                cov.push(v);
            }
            if let (Some(out), Some(rs)) = (resp.as_mut(), subject.responses.as_ref()) {
                let y = match spec.response_transform {
                    ResponseTransform::Identity => rs[j],
                    ResponseTransform::Log => rs[j].ln(),
                };
                out.push(y);
            }
        }
        if kept > 0 {
            subjects.push(Subject {
                covariates: cov,
                responses: resp,
            });
        }
    }
    if subjects.is_empty() {
        return Err(Error::Preprocess(
            "no observations survive cleaning".into(),
        ));
    }
    RepeatedDataset::new(d, subjects)
}

/// Applies row drops, target subject drops, hour truncation and transforms,
/// then min-max rescales covariates into `[0,1]^d` using source-domain
/// ranges for both domains. Out-of-range target coordinates are clamped and
/// counted.
pub fn preprocess(
    source: &RepeatedDataset,
    target: Option<&RepeatedDataset>,
    covariate_names: &[String],
    spec: &PreprocessSpec,
) -> Result<Preprocessed> {
    if covariate_names.len() != source.d {
        return Err(Error::Schema(format!(
            "schema names {} covariates but data has {}",
            covariate_names.len(),
            source.d
        )));
    }
    let clean_source = clean_domain(source, spec, false, covariate_names)?;
    let clean_target = match target {
        Some(t) => Some(clean_domain(
            t,
            spec,
            spec.drop_missing_subjects_in_target,
            covariate_names,
        )?),
        None => None,
    };

    if matches!(spec.rescale, Rescale::None) {
        return Ok(Preprocessed {
            source: clean_source,
            target: clean_target,
            scaler: None,
            target_clamped_fraction: 0.0,
        });
    }

    // Fit source ranges per covariate column.
    let d = clean_source.d;
    let mut mins = vec![f64::INFINITY; d];
    let mut maxs = vec![f64::NEG_INFINITY; d];
    for (_, _, row) in clean_source.iter_rows() {
        for (l, &v) in row.iter().enumerate() {
            if v.is_nan() {
                continue;
            }
            mins[l] = mins[l].min(v);
            maxs[l] = maxs[l].max(v);
        }
    }
    for l in 0..d {
        if !mins[l].is_finite() || !maxs[l].is_finite() {
            return Err(Error::Preprocess(format!(
                "covariate column `{}` has no usable values",
                covariate_names[l]
            )));
        }
    }
    let scaler = MinMaxScaler {
        columns: covariate_names.to_vec(),
        mins,
        maxs,
    };

    let scale_domain = |data: &RepeatedDataset| -> (RepeatedDataset, usize, usize) {
        let mut clamped = 0usize;
        let mut total = 0usize;
        let mut subjects = Vec::with_capacity(data.subjects.len());
        for s in &data.subjects {
            let mut cov = Vec::with_capacity(s.covariates.len());
            for row in s.covariates.chunks_exact(d) {
                for (l, &v) in row.iter().enumerate() {
                    total += 1;
                    let (sv, was_clamped) = scaler.apply(l, v);
                    if was_clamped {
                        clamped += 1;
                    }
                    cov.push(sv);
                }
            }
            subjects.push(Subject {
                covariates: cov,
                responses: s.responses.clone(),
            });
        }
        (RepeatedDataset { d, subjects }, clamped, total)
    };

    let (scaled_source, _, _) = scale_domain(&clean_source);
    let (scaled_target, clamped, total) = match &clean_target {
        Some(t) => {
            let (st, c, n) = scale_domain(t);
            (Some(st), c, n)
        }
        None => (None, 0, 1),
    };

    Ok(Preprocessed {
        source: scaled_source,
        target: scaled_target,
        scaler: Some(scaler),
        target_clamped_fraction: clamped as f64 / total.max(1) as f64,
    })
}

/// One quantile bin of the binned-MSE table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinnedMse {
    pub bin_mean_true: f64,
    pub mse: f64,
    pub count: usize,
}

/// Assigns samples to `bins` quantile bins of `true_y` (stable sort, sizes
/// differing by at most one) and reports the per-bin MSE of `pred_y`.
pub fn binned_mse(true_y: &[f64], pred_y: &[f64], bins: usize) -> Result<Vec<BinnedMse>> {
    if true_y.len() != pred_y.len() {
        return Err(Error::LengthMismatch {
            left: true_y.len(),
            right: pred_y.len(),
        });
    }
    if true_y.is_empty() {
        return Err(Error::EmptyInput("binned_mse values"));
    }
    if bins == 0 || bins > true_y.len() {
        return Err(Error::InvalidConfig(format!(
            "bins must be in 1..={}, got {bins}",
            true_y.len()
        )));
    }
    if true_y.iter().chain(pred_y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "binned_mse requires finite values".into(),
        ));
    }

    let n = true_y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| true_y[a].partial_cmp(&true_y[b]).unwrap());

    let mut out = Vec::with_capacity(bins);
    for b in 0..bins {
        let start = b * n / bins;
        let end = (b + 1) * n / bins;
        let idx = &order[start..end];
        let count = idx.len();
        let mean_true = idx.iter().map(|&i| true_y[i]).sum::<f64>() / count as f64;
        let mse = idx
            .iter()
            .map(|&i| {
                let r = pred_y[i] - true_y[i];
                r * r
            })
            .sum::<f64>()
            / count as f64;
        out.push(BinnedMse {
            bin_mean_true: mean_true,
            mse,
            count,
        });
    }
    Ok(out)
}
