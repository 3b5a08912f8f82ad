use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schema::{FeatureKind, Schema};
use super::synth::GeneratorSpec;
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical { levels: Vec<String>, codes: Vec<u32> },
    /// Placeholder for a column withheld at scoring time (only ever the
    /// sensitive attribute).
    Absent,
}

impl Column {
    fn subset(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical { levels, codes } => Column::Categorical {
                levels: levels.clone(),
                codes: rows.iter().map(|&r| codes[r]).collect(),
            },
            Column::Absent => Column::Absent,
        }
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Immutable, fully observed mixed-type table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<Column>,
    ranges: Vec<Option<(f64, f64)>>,
    dropped: usize,
    provenance: Provenance,
}

/// Raw cell value used while building a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum RawColumn {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

fn is_missing(token: &str) -> bool {
    matches!(token.trim(), "" | "NA" | "N/A" | "NaN" | "nan" | "null" | "NULL")
}

impl Dataset {
    /// Builds a dataset from fully observed columns aligned with `schema.columns`.
    pub fn from_columns(schema: Schema, raw: Vec<RawColumn>, dropped: usize) -> Result<Self> {
        schema.validate()?;
        if raw.len() != schema.columns.len() {
            return Err(Error::Dimension {
                expected: schema.columns.len(),
                found: raw.len(),
            });
        }
        let n = match raw.first() {
            Some(RawColumn::Numeric(v)) => v.len(),
            Some(RawColumn::Categorical(v)) => v.len(),
            None => 0,
        };
        let mut columns = Vec::with_capacity(raw.len());
        for (spec, col) in schema.columns.iter().zip(raw) {
            let column = match (spec.kind, col) {
                (FeatureKind::Numeric, RawColumn::Numeric(v)) => {
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::Schema(format!("column `{}` has non-finite values", spec.name)));
                    }
                    Column::Numeric(v)
                }
                (FeatureKind::Categorical, RawColumn::Categorical(v)) => {
                    let levels: Vec<String> = v.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
                    let codes = v
                        .iter()
                        .map(|s| levels.binary_search(s).expect("level present") as u32)
                        .collect();
                    Column::Categorical { levels, codes }
                }
                _ => return Err(Error::Schema(format!("column `{}` kind mismatch", spec.name))),
            };
            let len = match &column {
                Column::Numeric(v) => v.len(),
                Column::Categorical { codes, .. } => codes.len(),
                Column::Absent => n,
            };
            if len != n {
                return Err(Error::Dimension { expected: n, found: len });
            }
            columns.push(column);
        }
        if n < 2 {
            return domain(format!("dataset needs at least 2 rows, got {n}"));
        }
        let data = Self {
            ranges: columns.iter().map(range_of).collect(),
            schema,
            columns,
            dropped,
            provenance: Provenance::default(),
        };
        data.check_sensitive()?;
        data.check_target()?;
        Ok(data)
    }

    fn check_sensitive(&self) -> Result<()> {
        let idx = self.schema.index_of(&self.schema.sensitive).expect("validated");
        if let Column::Categorical { levels, .. } = &self.columns[idx] {
            if levels.len() != 2 {
                return Err(Error::Cardinality {
                    column: self.schema.sensitive.clone(),
                    levels: levels.len(),
                });
            }
            if let Some(a) = &self.schema.group_a {
                if !levels.contains(a) {
                    return Err(Error::Schema(format!("group_a level `{a}` not observed")));
                }
            }
        }
        Ok(())
    }

    fn check_target(&self) -> Result<()> {
        let y = self.numeric(&self.schema.target)?;
        if let Some(row) = y.iter().position(|v| *v < 0.0) {
            return Err(Error::Parse {
                row: row + 1,
                column: self.schema.target.clone(),
                message: "negative claim amount".into(),
            });
        }
        Ok(())
    }

    /// Reads an RFC-4180 CSV with a header row. Rows with missing cells are
    /// dropped and counted in [`Dataset::dropped`].
    pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut data = Self::read_csv(file, schema)?;
        data.provenance.source = Some(path.display().to_string());
        Ok(data)
    }

    pub fn read_csv<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Self> {
        schema.validate()?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        for h in &header {
            if schema.index_of(h).is_none() {
                return Err(Error::Schema(format!("unknown column `{h}`")));
            }
        }
        let mut positions = Vec::with_capacity(schema.columns.len());
        for c in &schema.columns {
            let pos = header
                .iter()
                .position(|h| *h == c.name)
                .ok_or_else(|| Error::Schema(format!("column `{}` missing from header", c.name)))?;
            positions.push(pos);
        }
        let mut raw: Vec<RawColumn> = schema
            .columns
            .iter()
            .map(|c| match c.kind {
                FeatureKind::Numeric => RawColumn::Numeric(Vec::new()),
                FeatureKind::Categorical => RawColumn::Categorical(Vec::new()),
            })
            .collect();
        let mut dropped = 0;
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row = i + 1;
            let cells: Vec<&str> = positions.iter().map(|&p| record.get(p).unwrap_or("")).collect();
            if cells.iter().any(|c| is_missing(c)) {
                dropped += 1;
                continue;
            }
            for ((spec, cell), col) in schema.columns.iter().zip(&cells).zip(raw.iter_mut()) {
                match col {
                    RawColumn::Numeric(v) => {
                        let x: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                            row,
                            column: spec.name.clone(),
                            message: format!("`{cell}` is not numeric"),
                        })?;
                        if !x.is_finite() {
                            return Err(Error::Parse {
                                row,
                                column: spec.name.clone(),
                                message: format!("`{cell}` is not finite"),
                            });
                        }
                        v.push(x);
                    }
                    RawColumn::Categorical(v) => v.push(cell.trim().to_string()),
                }
            }
        }
        Self::from_columns(schema.clone(), raw, dropped)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let present: Vec<usize> = (0..self.columns.len())
            .filter(|&j| !matches!(self.columns[j], Column::Absent))
            .collect();
        w.write_record(present.iter().map(|&j| self.schema.columns[j].name.as_str()))?;
        for i in 0..self.n_rows() {
            w.write_record(present.iter().map(|&j| self.cell_string(i, j)))?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// JSON sidecar echoing schema, ranges and provenance.
    pub fn sidecar(&self) -> serde_json::Value {
        let ranges: serde_json::Map<String, serde_json::Value> = self
            .schema
            .columns
            .iter()
            .zip(&self.ranges)
            .filter_map(|(c, r)| r.map(|(lo, hi)| (c.name.clone(), serde_json::json!([lo, hi]))))
            .collect();
        serde_json::json!({
            "schema": self.schema,
            "rows": self.n_rows(),
            "dropped": self.dropped,
            "numeric_ranges": ranges,
            "provenance": self.provenance,
        })
    }

    pub fn write_sidecar(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.sidecar())?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    fn cell_string(&self, row: usize, col: usize) -> String {
        match &self.columns[col] {
            Column::Numeric(v) => format!("{}", v[row]),
            Column::Categorical { levels, codes } => levels[codes[row] as usize].clone(),
            Column::Absent => String::new(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.columns
            .iter()
            .find_map(|c| match c {
                Column::Numeric(v) => Some(v.len()),
                Column::Categorical { codes, .. } => Some(codes.len()),
                Column::Absent => None,
            })
            .unwrap_or(0)
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Per-column (min, max) for numeric columns; categorical columns are `None`.
    pub fn numeric_ranges(&self) -> &[Option<(f64, f64)>] {
        &self.ranges
    }

    pub fn with_ranges(mut self, ranges: Vec<Option<(f64, f64)>>) -> Self {
        assert_eq!(ranges.len(), self.columns.len());
        self.ranges = ranges;
        self
    }

    pub fn column_by_name(&self, name: &str) -> Result<&Column> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::Schema(format!("unknown column `{name}`")))?;
        Ok(&self.columns[idx])
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column_by_name(name)? {
            Column::Numeric(v) => Ok(v),
            _ => Err(Error::Schema(format!("column `{name}` is not numeric"))),
        }
    }

    pub fn categorical(&self, name: &str) -> Result<(&[String], &[u32])> {
        match self.column_by_name(name)? {
            Column::Categorical { levels, codes } => Ok((levels, codes)),
            Column::Absent => Err(Error::Schema(format!("column `{name}` is withheld"))),
            Column::Numeric(_) => Err(Error::Schema(format!("column `{name}` is not categorical"))),
        }
    }

    pub fn target(&self) -> &[f64] {
        self.numeric(&self.schema.target).expect("validated target")
    }

    pub fn count_target(&self) -> Option<&[f64]> {
        self.schema
            .count_target
            .as_ref()
            .map(|c| self.numeric(c).expect("validated count target"))
    }

    pub fn has_sensitive(&self) -> bool {
        !matches!(self.column_by_name(&self.schema.sensitive), Ok(Column::Absent))
    }

    /// Names of the `(a, b)` levels of the sensitive attribute.
    pub fn sensitive_levels(&self) -> Result<(String, String)> {
        let (levels, _) = self.categorical(&self.schema.sensitive)?;
        let a = self.schema.group_a.clone().unwrap_or_else(|| levels[0].clone());
        let b = levels.iter().find(|l| **l != a).cloned().expect("two levels");
        Ok((a, b))
    }

    /// `true` for rows in group `a`.
    pub fn group_mask(&self) -> Result<Vec<bool>> {
        let (a, _) = self.sensitive_levels()?;
        let (levels, codes) = self.categorical(&self.schema.sensitive)?;
        let code_a = levels.iter().position(|l| *l == a).expect("level") as u32;
        Ok(codes.iter().map(|&c| c == code_a).collect())
    }

    /// Binary indicator `1[D = a]`.
    pub fn group_indicator(&self) -> Result<Vec<f64>> {
        Ok(self.group_mask()?.into_iter().map(|a| if a { 1.0 } else { 0.0 }).collect())
    }

    /// Empirical `(P(D = a), P(D = b))`.
    pub fn group_proportions(&self) -> Result<(f64, f64)> {
        let mask = self.group_mask()?;
        let pa = mask.iter().filter(|&&a| a).count() as f64 / mask.len() as f64;
        Ok((pa, 1.0 - pa))
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.subset(rows)).collect(),
            ranges: self.ranges.clone(),
            dropped: 0,
            provenance: self.provenance.clone(),
        }
    }

    /// Copy with every row's sensitive attribute switched to the other group.
    pub fn with_flipped_sensitive(&self) -> Result<Dataset> {
        let idx = self.schema.index_of(&self.schema.sensitive).expect("validated");
        let mut out = self.clone();
        match &mut out.columns[idx] {
            Column::Categorical { codes, .. } => {
                for c in codes.iter_mut() {
                    *c = 1 - *c;
                }
            }
            _ => return Err(Error::Schema("sensitive column is withheld".into())),
        }
        Ok(out)
    }

    /// Copy with the sensitive attribute withheld, as seen by a deployed
    /// pricing system that never receives it.
    pub fn without_sensitive(&self) -> Dataset {
        let idx = self.schema.index_of(&self.schema.sensitive).expect("validated");
        let mut out = self.clone();
        out.columns[idx] = Column::Absent;
        out
    }

    pub fn with_target(&self, y: Vec<f64>) -> Result<Dataset> {
        if y.len() != self.n_rows() {
            return Err(Error::Dimension {
                expected: self.n_rows(),
                found: y.len(),
            });
        }
        let idx = self.schema.index_of(&self.schema.target).expect("validated");
        let mut out = self.clone();
        out.columns[idx] = Column::Numeric(y);
        Ok(out)
    }

    /// Copy with an extra numeric rating factor appended.
    pub fn with_numeric_column(&self, name: &str, values: Vec<f64>) -> Result<Dataset> {
        if values.len() != self.n_rows() {
            return Err(Error::Dimension {
                expected: self.n_rows(),
                found: values.len(),
            });
        }
        if self.schema.index_of(name).is_some() {
            return Err(Error::Schema(format!("column `{name}` already exists")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema(format!("column `{name}` has non-finite values")));
        }
        let mut out = self.clone();
        out.schema.columns.push(super::schema::ColumnSpec::numeric(name));
        let column = Column::Numeric(values);
        out.ranges.push(range_of(&column));
        out.columns.push(column);
        Ok(out)
    }

    /// Stratified train/test split preserving sensitive-group shares.
    ///
    /// Both halves carry the numeric ranges of the training half.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        let (train, test) = stratified_split_indices(&self.group_mask()?, test_fraction, seed)?;
        let train_ds = self.subset(&train);
        let ranges: Vec<_> = train_ds.columns.iter().map(range_of).collect();
        let test_ds = self.subset(&test).with_ranges(ranges.clone());
        Ok((train_ds.with_ranges(ranges), test_ds))
    }
}

fn range_of(c: &Column) -> Option<(f64, f64)> {
    match c {
        Column::Numeric(v) => {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Some((lo, hi))
        }
        _ => None,
    }
}

/// Disjoint `(train, test)` row indices, stratified by `groups`. Test rows are
/// allocated by largest remainder so the total is `round(n * fraction)` and
/// each group is within one row of its proportional share.
pub fn stratified_split_indices(groups: &[bool], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return domain(format!("test fraction {test_fraction} outside (0, 1)"));
    }
    let n = groups.len();
    let total = (n as f64 * test_fraction).round() as usize;
    if total < 1 || total >= n {
        return domain(format!("split of {n} rows at fraction {test_fraction} leaves an empty side"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: Vec<Vec<usize>> = [true, false]
        .iter()
        .map(|&g| (0..n).filter(|&i| groups[i] == g).collect())
        .collect();
    for pool in pools.iter_mut() {
        pool.shuffle(&mut rng);
    }
    let exact: Vec<f64> = pools.iter().map(|p| p.len() as f64 * test_fraction).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut remaining = total.saturating_sub(take.iter().sum());
    let mut order: Vec<usize> = (0..pools.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for g in order {
        if remaining == 0 {
            break;
        }
        if take[g] < pools[g].len() {
            take[g] += 1;
            remaining -= 1;
        }
    }
    let mut test = Vec::with_capacity(total);
    let mut train = Vec::with_capacity(n - total);
    for (pool, k) in pools.iter().zip(take) {
        test.extend_from_slice(&pool[..k]);
        train.extend_from_slice(&pool[k..]);
    }
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}
