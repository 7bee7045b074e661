use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::{one_hot, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    fn parse(tag: &str) -> Option<Split> {
        match tag {
            "train" => Some(Split::Train),
            "dev" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Labelled samples, each tagged with exactly one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    n_classes: usize,
    splits: Vec<Split>,
}

/// The samples of one split, gathered into contiguous storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn one_hot(&self) -> Matrix {
        one_hot(&self.labels, self.n_classes).expect("labels validated by Dataset::new")
    }
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize, splits: Vec<Split>) -> Result<Self> {
        if labels.len() != features.rows() || splits.len() != features.rows() {
            return Err(Error::Domain(format!(
                "dataset has {} feature rows, {} labels and {} split tags",
                features.rows(),
                labels.len(),
                splits.len()
            )));
        }
        if n_classes < 2 {
            return Err(Error::Domain(format!("need at least 2 classes, got {n_classes}")));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Domain(format!("label {bad} outside 0..{n_classes}")));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn subset(&self, split: Split) -> Samples {
        let idx = self.indices(split);
        Samples {
            features: self.features.select_rows(&idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Writes the CSV format read by [`load_csv`], with an explicit split column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let mut header: Vec<String> = (0..self.input_dim()).map(|i| format!("x{i}")).collect();
        header.push("label".into());
        header.push("split".into());
        w.write_record(&header).map_err(|e| csv_io(path, e))?;
        for i in 0..self.len() {
            let mut record: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            record.push(self.labels[i].to_string());
            record.push(self.splits[i].as_str().to_string());
            w.write_record(&record).map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Split for a row without a `split` column: 80/10/10 by CRC-32 of the raw
/// record text (fields joined with `,`).
pub fn hash_split(fields: &[&str]) -> Split {
    match crc32fast::hash(fields.join(",").as_bytes()) % 10 {
        0..=7 => Split::Train,
        8 => Split::Dev,
        _ => Split::Test,
    }
}

/// Reads a dataset: feature columns, then `label`, then an optional `split`
/// column (`train`/`dev`/`test`).
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let parse_err = |line: u64, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let label_col = names
        .iter()
        .position(|&h| h == "label")
        .ok_or_else(|| parse_err(1, "header has no `label` column".into()))?;
    let has_split = match &names[label_col + 1..] {
        [] => false,
        ["split"] => true,
        rest => return Err(parse_err(1, format!("unexpected columns after `label`: {rest:?}"))),
    };
    if label_col == 0 {
        return Err(parse_err(1, "no feature columns before `label`".into()));
    }

    let n_features = label_col;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (col, cell) in record.iter().take(n_features).enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                parse_err(
                    line,
                    format!("column `{}`: {cell:?} is not a finite number", names[col]),
                )
            })?;
            data.push(v);
        }
        let label: usize = record[label_col].parse().map_err(|_| {
            parse_err(
                line,
                format!("label {:?} is not a non-negative integer", &record[label_col]),
            )
        })?;
        labels.push(label);
        let split = if has_split {
            let tag = &record[label_col + 1];
            Split::parse(tag).ok_or_else(|| parse_err(line, format!("unknown split tag {tag:?}")))?
        } else {
            hash_split(&record.iter().collect::<Vec<_>>())
        };
        splits.push(split);
    }

    let n_classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let features = Matrix::new(labels.len(), n_features, data)?;
    Dataset::new(features, labels, n_classes, splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn small_well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "a,b,label\n1.0,2.0,0\n3,4,1\n-1e-3,5,2\n");
        let d = load_csv(&p).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.input_dim(), 2);
        assert_eq!(d.n_classes(), 3);
        assert_eq!(d.labels(), &[0, 1, 2]);
        assert_eq!(d.features().row(2), &[-1e-3, 5.0]);
    }

    #[test]
    fn non_numeric_cell_cites_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "a,b,label\n1,2,0\n1,abc,1\n");
        let err = load_csv(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("abc"));
    }

    #[test]
    fn ragged_rows_and_bad_tags() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.csv", "a,b,label\n1,2,0\n1,1\n");
        assert!(matches!(load_csv(&p), Err(Error::Parse { line: 3, .. })));
        let p = write(&dir, "s.csv", "a,label,split\n1,0,train\n2,1,validation\n");
        assert!(matches!(load_csv(&p), Err(Error::Parse { line: 3, .. })));
        let p = write(&dir, "l.csv", "a,label\n1,-1\n");
        assert!(matches!(load_csv(&p), Err(Error::Parse { line: 2, .. })));
        let p = write(&dir, "h.csv", "a,b\n1,2\n");
        assert!(matches!(load_csv(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn explicit_split_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "d.csv",
            "a,label,split\n1,0,train\n2,1,dev\n3,1,test\n4,0,train\n",
        );
        let d = load_csv(&p).unwrap();
        assert_eq!(d.splits(), &[Split::Train, Split::Dev, Split::Test, Split::Train]);
        assert_eq!(d.subset(Split::Train).labels, vec![0, 0]);
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let features = Matrix::from_rows(&[vec![0.1, 1.0 / 3.0], vec![-2.5, 1e-17]]).unwrap();
        let d = Dataset::new(features, vec![1, 0], 2, vec![Split::Dev, Split::Train]).unwrap();
        let p = dir.path().join("out.csv");
        d.write_csv(&p).unwrap();
        assert_eq!(load_csv(&p).unwrap(), d);
    }

    #[test]
    fn dataset_validation() {
        let f = Matrix::zeros(2, 1);
        assert!(Dataset::new(f.clone(), vec![0, 2], 2, vec![Split::Train; 2]).is_err());
        assert!(Dataset::new(f.clone(), vec![0], 2, vec![Split::Train; 2]).is_err());
        assert!(Dataset::new(f, vec![0, 0], 1, vec![Split::Train; 2]).is_err());
    }
}
