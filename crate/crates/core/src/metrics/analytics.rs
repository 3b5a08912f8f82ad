use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datakit::{Column, Dataset};
use crate::error::{domain, Error, Result};

/// A column used to define solidarity cells. Numeric columns are cut into
/// bands of `band_width` (`[k*w, (k+1)*w)`); without a width each distinct
/// value is its own cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    pub column: String,
    #[serde(default)]
    pub band_width: Option<f64>,
}

impl Grouping {
    pub fn new(column: &str) -> Self {
        Self {
            column: column.into(),
            band_width: None,
        }
    }

    pub fn banded(column: &str, width: f64) -> Self {
        Self {
            column: column.into(),
            band_width: Some(width),
        }
    }

    fn labels(&self, data: &Dataset) -> Result<Vec<String>> {
        match data.column_by_name(&self.column)? {
            Column::Categorical { levels, codes } => Ok(codes.iter().map(|&c| levels[c as usize].clone()).collect()),
            Column::Numeric(v) => match self.band_width {
                Some(w) if w > 0.0 => Ok(v
                    .iter()
                    .map(|x| {
                        let lo = (x / w).floor() * w;
                        format!("[{lo}, {})", lo + w)
                    })
                    .collect()),
                Some(w) => domain(format!("band width {w} must be positive")),
                None => Ok(v.iter().map(|x| x.to_string()).collect()),
            },
            Column::Absent => Err(Error::Schema(format!("column `{}` is withheld", self.column))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolidarityCell {
    pub cell: Vec<String>,
    pub count: usize,
    pub mean_difference: f64,
    pub total_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolidarityTable {
    pub columns: Vec<String>,
    pub cells: Vec<SolidarityCell>,
    pub grand_total: f64,
}

impl SolidarityTable {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.columns.clone();
        header.extend(["count", "mean_difference", "total_difference"].map(String::from));
        w.write_record(&header)?;
        for c in &self.cells {
            let mut rec = c.cell.clone();
            rec.push(c.count.to_string());
            rec.push(c.mean_difference.to_string());
            rec.push(c.total_difference.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Mean of `fair - benchmark` within each cell of one or two grouping columns.
pub fn solidarity_table(data: &Dataset, fair: &[f64], benchmark: &[f64], groups: &[Grouping]) -> Result<SolidarityTable> {
    let n = data.n_rows();
    for len in [fair.len(), benchmark.len()] {
        if len != n {
            return Err(Error::Dimension { expected: n, found: len });
        }
    }
    if groups.is_empty() || groups.len() > 2 {
        return domain("solidarity table takes one or two grouping columns");
    }
    let labels: Vec<Vec<String>> = groups.iter().map(|g| g.labels(data)).collect::<Result<_>>()?;
    let mut cells: BTreeMap<Vec<String>, (usize, f64)> = BTreeMap::new();
    let mut grand_total = 0.0;
    for i in 0..n {
        let key: Vec<String> = labels.iter().map(|l| l[i].clone()).collect();
        let diff = fair[i] - benchmark[i];
        let e = cells.entry(key).or_default();
        e.0 += 1;
        e.1 += diff;
        grand_total += diff;
    }
    Ok(SolidarityTable {
        columns: groups.iter().map(|g| g.column.clone()).collect(),
        cells: cells
            .into_iter()
            .map(|(cell, (count, total))| SolidarityCell {
                cell,
                count,
                mean_difference: total / count as f64,
                total_difference: total,
            })
            .collect(),
        grand_total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleLiftRow {
    pub bin: usize,
    /// `true` for group `a`.
    pub in_a: bool,
    pub count: usize,
    pub mean_actual: f64,
    pub mean_ratio: f64,
}

/// Rows sorted by `benchmark / fair`, cut into equal-count bins (the first
/// `n % bins` bins take one extra row), summarized per bin and group.
pub fn double_lift(benchmark: &[f64], fair: &[f64], actual: &[f64], in_a: &[bool], bins: usize) -> Result<Vec<DoubleLiftRow>> {
    let n = benchmark.len();
    for len in [fair.len(), actual.len(), in_a.len()] {
        if len != n {
            return Err(Error::Dimension { expected: n, found: len });
        }
    }
    if bins == 0 || bins > n {
        return domain(format!("cannot cut {n} rows into {bins} bins"));
    }
    if let Some(i) = fair.iter().position(|v| !(*v > 0.0)) {
        return domain(format!("fair premium at row {i} is not positive"));
    }
    let ratio: Vec<f64> = benchmark.iter().zip(fair).map(|(b, f)| b / f).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ratio[a].total_cmp(&ratio[b]));
    let (base, extra) = (n / bins, n % bins);
    let mut out = Vec::new();
    let mut start = 0;
    for bin in 0..bins {
        let size = base + usize::from(bin < extra);
        let members = &order[start..start + size];
        start += size;
        for group in [true, false] {
            let rows: Vec<usize> = members.iter().copied().filter(|&i| in_a[i] == group).collect();
            if rows.is_empty() {
                continue;
            }
            let k = rows.len() as f64;
            out.push(DoubleLiftRow {
                bin,
                in_a: group,
                count: rows.len(),
                mean_actual: rows.iter().map(|&i| actual[i]).sum::<f64>() / k,
                mean_ratio: rows.iter().map(|&i| ratio[i]).sum::<f64>() / k,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::{ColumnSpec, RawColumn, Schema};

    fn table() -> Dataset {
        let schema = Schema {
            columns: vec![
                ColumnSpec::numeric("age"),
                ColumnSpec::categorical("region"),
                ColumnSpec::categorical("g"),
                ColumnSpec::numeric("y"),
            ],
            sensitive: "g".into(),
            group_a: None,
            target: "y".into(),
            count_target: None,
            exposure: None,
            permitted: None,
        };
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        Dataset::from_columns(
            schema,
            vec![
                RawColumn::Numeric(vec![21.0, 25.0, 34.0, 38.0, 52.0]),
                RawColumn::Categorical(s(&["n", "s", "n", "s", "n"])),
                RawColumn::Categorical(s(&["a", "b", "a", "b", "a"])),
                RawColumn::Numeric(vec![1.0; 5]),
            ],
            0,
        )
        .unwrap()
    }

    #[test]
    fn equal_premiums_give_zero_cells() {
        let d = table();
        let p = [1.0, 2.0, 3.0, 4.0, 5.0];
        let t = solidarity_table(&d, &p, &p, &[Grouping::new("region")]).unwrap();
        assert!(t.cells.iter().all(|c| c.mean_difference == 0.0));
        assert_eq!(t.grand_total, 0.0);
    }

    #[test]
    fn cells_partition_the_total() {
        let d = table();
        let fair = [3.0, 1.0, 4.0, 1.0, 5.0];
        let bench = [1.0, 2.0, 3.0, 4.0, 5.0];
        let t = solidarity_table(&d, &fair, &bench, &[Grouping::banded("age", 10.0), Grouping::new("g")]).unwrap();
        assert_eq!(t.cells.len(), 5);
        let sum: f64 = t.cells.iter().map(|c| c.total_difference).sum();
        assert!((sum - t.grand_total).abs() < 1e-12);
        assert_eq!(t.cells.iter().map(|c| c.count).sum::<usize>(), 5);
        let c = t.cells.iter().find(|c| c.cell == ["[20, 30)", "a"]).unwrap();
        assert_eq!((c.count, c.mean_difference), (1, 2.0));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("age,g,count,mean_difference,total_difference\n"));
    }

    #[test]
    fn offsetting_differences_cancel() {
        let d = table();
        let t = solidarity_table(&d, &[3.0, 0.0, 1.0, 0.0, 1.0], &[1.0, 0.0, 3.0, 0.0, 1.0], &[Grouping::new("region")]);
        let t = t.unwrap();
        let n = t.cells.iter().find(|c| c.cell == ["n"]).unwrap();
        assert_eq!((n.mean_difference, n.total_difference), (0.0, 0.0));
    }

    #[test]
    fn double_lift_bins() {
        let b: Vec<f64> = (1..=10).map(f64::from).collect();
        let a: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let rows = double_lift(&b, &[1.0; 10], &b, &a, 10).unwrap();
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|r| r.count == 1 && r.mean_actual == r.mean_ratio));
        let flat = double_lift(&b, &b, &b, &a, 3).unwrap();
        // sizes 4, 3, 3 in index order since every ratio is 1
        let sizes: Vec<usize> = (0..3).map(|k| flat.iter().filter(|r| r.bin == k).map(|r| r.count).sum()).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        let first_a = flat.iter().find(|r| r.bin == 0 && r.in_a).unwrap();
        assert_eq!(first_a.mean_actual, (1.0 + 3.0) / 2.0);
        assert!(double_lift(&b, &[0.0; 10], &b, &a, 3).is_err());
    }
}
