use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role of a CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Member of the conditioned index set I.
    Conditioned,
    /// Member of the conditioning index set J (continuous values).
    Conditioning,
    /// Categorical conditioning column; string levels are encoded as integer
    /// codes in sorted level order.
    ConditioningCategorical,
    Ignored,
}

/// Immutable n x d data matrix with designated conditioned (I) and
/// conditioning (J) column sets. All estimation is read-only on this.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    data: Vec<f64>, // row-major n x d
    n: usize,
    d: usize,
    conditioned: Vec<usize>,
    conditioning: Vec<usize>,
    column_names: Vec<String>,
    /// For categorical conditioning columns: column index -> sorted levels.
    /// The code of a level is its position in the vector.
    category_levels: BTreeMap<usize, Vec<String>>,
}

impl Sample {
    /// Builds a sample from dense rows. `conditioned` and `conditioning` are
    /// disjoint column index sets; rows must be rectangular and finite.
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        conditioned: Vec<usize>,
        conditioning: Vec<usize>,
        column_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 rows, got {n}")));
        }
        let d = rows[0].len();
        let column_names =
            column_names.unwrap_or_else(|| (0..d).map(|c| format!("X{}", c + 1)).collect());
        if column_names.len() != d {
            return Err(Error::invalid("column name count does not match width"));
        }
        let mut data = Vec::with_capacity(n * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::invalid(format!(
                    "row {} has {} cells, expected {d}",
                    i + 1,
                    row.len()
                )));
            }
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Ingestion {
                        row: i + 1,
                        column: column_names[c].clone(),
                        reason: "missing or non-finite value".into(),
                    });
                }
                data.push(v);
            }
        }
        Self::from_parts(data, n, d, conditioned, conditioning, column_names, BTreeMap::new())
    }

    fn from_parts(
        data: Vec<f64>,
        n: usize,
        d: usize,
        conditioned: Vec<usize>,
        conditioning: Vec<usize>,
        column_names: Vec<String>,
        category_levels: BTreeMap<usize, Vec<String>>,
    ) -> Result<Self> {
        if conditioned.len() < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 conditioned columns, got {}",
                conditioned.len()
            )));
        }
        if conditioning.is_empty() {
            return Err(Error::invalid("need at least 1 conditioning column"));
        }
        for &c in conditioned.iter().chain(conditioning.iter()) {
            if c >= d {
                return Err(Error::invalid(format!("column index {c} out of range (d = {d})")));
            }
        }
        for &c in &conditioned {
            if conditioning.contains(&c) {
                return Err(Error::invalid(format!(
                    "column {} assigned to both conditioned and conditioning roles",
                    column_names[c]
                )));
            }
        }
        Ok(Sample {
            data,
            n,
            d,
            conditioned,
            conditioning,
            column_names,
            category_levels,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// p = |I|
    pub fn conditioned_dim(&self) -> usize {
        self.conditioned.len()
    }

    /// |J| = d - p (ignored columns excluded)
    pub fn conditioning_dim(&self) -> usize {
        self.conditioning.len()
    }

    pub fn conditioned_columns(&self) -> &[usize] {
        &self.conditioned
    }

    pub fn conditioning_columns(&self) -> &[usize] {
        &self.conditioning
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn conditioned_names(&self) -> Vec<String> {
        self.conditioned
            .iter()
            .map(|&c| self.column_names[c].clone())
            .collect()
    }

    pub fn conditioning_names(&self) -> Vec<String> {
        self.conditioning
            .iter()
            .map(|&c| self.column_names[c].clone())
            .collect()
    }

    pub fn category_levels(&self) -> &BTreeMap<usize, Vec<String>> {
        &self.category_levels
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.d + col]
    }

    /// Value of the a-th conditioned variable (position within I) in a row.
    #[inline]
    pub fn conditioned_value(&self, row: usize, a: usize) -> f64 {
        self.data[row * self.d + self.conditioned[a]]
    }

    /// Writes the conditioning coordinates of a row into `out` (len |J|).
    #[inline]
    pub fn conditioning_point(&self, row: usize, out: &mut [f64]) {
        for (slot, &c) in out.iter_mut().zip(self.conditioning.iter()) {
            *slot = self.data[row * self.d + c];
        }
    }

    /// New sample made of the given rows (duplicates allowed), preserving
    /// the column structure. Used by bootstrap resampling and data splits.
    pub fn select_rows(&self, indices: &[usize]) -> Sample {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(&self.data[i * self.d..(i + 1) * self.d]);
        }
        Sample {
            data,
            n: indices.len(),
            d: self.d,
            conditioned: self.conditioned.clone(),
            conditioning: self.conditioning.clone(),
            column_names: self.column_names.clone(),
            category_levels: self.category_levels.clone(),
        }
    }

    /// New sample whose row r takes its conditioned (I) columns from
    /// `i_source[r]` and every other column from `j_source[r]`. This is the
    /// row-composition step of the conditional bootstrap.
    pub fn compose_rows(&self, i_source: &[usize], j_source: &[usize]) -> Sample {
        assert_eq!(i_source.len(), j_source.len());
        let mut data = Vec::with_capacity(i_source.len() * self.d);
        for (&i, &j) in i_source.iter().zip(j_source.iter()) {
            let start = data.len();
            data.extend_from_slice(&self.data[j * self.d..(j + 1) * self.d]);
            for &c in &self.conditioned {
                data[start + c] = self.data[i * self.d + c];
            }
        }
        Sample {
            data,
            n: i_source.len(),
            d: self.d,
            conditioned: self.conditioned.clone(),
            conditioning: self.conditioning.clone(),
            column_names: self.column_names.clone(),
            category_levels: self.category_levels.clone(),
        }
    }
}

/// Column-role assignment for ingestion, by column name.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub roles: Vec<(String, Role)>,
}

impl ColumnRoles {
    pub fn role_of(&self, name: &str) -> Option<Role> {
        self.roles
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| *r)
    }
}

/// Loads a CSV file (header row required, UTF-8, decimal point) into a
/// validated sample. Unassigned columns are ignored. Categorical
/// conditioning columns may hold arbitrary strings; levels are encoded as
/// integer codes in sorted order.
pub fn load_sample(path: impl AsRef<Path>, roles: &ColumnRoles) -> Result<Sample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();

    for (name, _) in &roles.roles {
        if !headers.iter().any(|h| h == name) {
            return Err(Error::invalid(format!("role references unknown column '{name}'")));
        }
    }

    let mut used_cols: Vec<(usize, Role)> = Vec::new();
    for (c, h) in headers.iter().enumerate() {
        match roles.role_of(h) {
            Some(Role::Ignored) | None => {}
            Some(role) => used_cols.push((c, role)),
        }
    }
    if used_cols.is_empty() {
        return Err(Error::invalid("no columns assigned to conditioned/conditioning roles"));
    }

    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        raw_rows.push(record.iter().map(|s| s.to_string()).collect());
    }
    let n = raw_rows.len();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 data rows, got {n}")));
    }

    // Collect categorical levels first so codes are stable in sorted order.
    let mut levels: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for &(src, role) in &used_cols {
        if role == Role::ConditioningCategorical {
            let mut values: Vec<String> = Vec::new();
            for (i, row) in raw_rows.iter().enumerate() {
                let cell = row.get(src).map(|s| s.as_str()).unwrap_or("");
                if cell.is_empty() {
                    return Err(Error::Ingestion {
                        row: i + 1,
                        column: headers[src].clone(),
                        reason: "missing value".into(),
                    });
                }
                values.push(cell.to_string());
            }
            values.sort();
            values.dedup();
            levels.insert(src, values);
        }
    }

    let width = used_cols.len();
    let mut data = Vec::with_capacity(n * width);
    for (i, row) in raw_rows.iter().enumerate() {
        for &(src, role) in &used_cols {
            let cell = row.get(src).map(|s| s.as_str()).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::Ingestion {
                    row: i + 1,
                    column: headers[src].clone(),
                    reason: "missing value".into(),
                });
            }
            let value = if role == Role::ConditioningCategorical {
                let lv = &levels[&src];
                match lv.binary_search(&cell.to_string()) {
                    Ok(code) => code as f64,
                    Err(_) => unreachable!("level collected above"),
                }
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        return Err(Error::Ingestion {
                            row: i + 1,
                            column: headers[src].clone(),
                            reason: format!("non-numeric cell '{cell}'"),
                        })
                    }
                }
            };
            data.push(value);
        }
    }

    let mut conditioned = Vec::new();
    let mut conditioning = Vec::new();
    let mut names = Vec::with_capacity(width);
    let mut packed_levels = BTreeMap::new();
    for (packed, &(src, role)) in used_cols.iter().enumerate() {
        names.push(headers[src].clone());
        match role {
            Role::Conditioned => conditioned.push(packed),
            Role::Conditioning => conditioning.push(packed),
            Role::ConditioningCategorical => {
                conditioning.push(packed);
                packed_levels.insert(packed, levels[&src].clone());
            }
            Role::Ignored => unreachable!(),
        }
    }

    Sample::from_parts(data, n, width, conditioned, conditioning, names, packed_levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir();
        let path = dir.join(format!("boxtau_test_{}.csv", std::process::id() as u64 + content.len() as u64));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn roles3() -> ColumnRoles {
        ColumnRoles {
            roles: vec![
                ("X1".into(), Role::Conditioned),
                ("X2".into(), Role::Conditioned),
                ("X3".into(), Role::Conditioning),
            ],
        }
    }

    #[test]
    fn loads_four_column_csv_with_roles() {
        let path = write_temp("X1,X2,X3,X4\n1.0,2.0,0.1,9\n2.0,1.0,0.7,9\n3.5,0.5,-1.2,9\n");
        let sample = load_sample(&path, &roles3()).unwrap();
        assert_eq!(sample.n(), 3);
        assert_eq!(sample.conditioned_dim(), 2);
        assert_eq!(sample.conditioning_dim(), 1);
        // X4 was never assigned, so it is dropped
        assert_eq!(sample.dim(), 3);
        assert_eq!(sample.value(2, 0), 3.5);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn blank_cell_errors_with_row_index() {
        let path = write_temp("X1,X2,X3\n1.0,2.0,0.1\n2.0,,0.7\n3.5,0.5,-1.2\n");
        let err = load_sample(&path, &roles3()).unwrap_err();
        match err {
            Error::Ingestion { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "X2");
            }
            other => panic!("unexpected error {other:?}"),
        }
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn non_numeric_cell_errors() {
        let path = write_temp("X1,X2,X3\n1.0,2.0,0.1\n2.0,oops,0.7\n");
        let err = load_sample(&path, &roles3()).unwrap_err();
        assert!(matches!(err, Error::Ingestion { row: 2, .. }));
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn too_few_conditioned_columns_rejected() {
        let path = write_temp("X1,X2,X3\n1.0,2.0,0.1\n2.0,1.0,0.7\n");
        let roles = ColumnRoles {
            roles: vec![
                ("X1".into(), Role::Conditioned),
                ("X3".into(), Role::Conditioning),
            ],
        };
        assert!(load_sample(&path, &roles).is_err());
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn categorical_column_is_encoded_in_sorted_level_order() {
        let path = write_temp(
            "PN,PO,Type\n1.0,2.0,Village\n2.0,1.0,City\n3.0,4.0,Town\n4.0,3.0,City\n",
        );
        let roles = ColumnRoles {
            roles: vec![
                ("PN".into(), Role::Conditioned),
                ("PO".into(), Role::Conditioned),
                ("Type".into(), Role::ConditioningCategorical),
            ],
        };
        let sample = load_sample(&path, &roles).unwrap();
        // sorted levels: City=0, Town=1, Village=2
        assert_eq!(sample.value(0, 2), 2.0);
        assert_eq!(sample.value(1, 2), 0.0);
        assert_eq!(sample.value(2, 2), 1.0);
        assert_eq!(sample.value(3, 2), 0.0);
        let levels = sample.category_levels().get(&2).unwrap();
        assert_eq!(levels, &vec!["City".to_string(), "Town".into(), "Village".into()]);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn compose_rows_mixes_i_and_j_parts() {
        let rows = vec![
            vec![1.0, 10.0, 100.0],
            vec![2.0, 20.0, 200.0],
            vec![3.0, 30.0, 300.0],
        ];
        let s = Sample::from_rows(rows, vec![0, 1], vec![2], None).unwrap();
        let composed = s.compose_rows(&[0, 1], &[2, 0]);
        assert_eq!(composed.value(0, 0), 1.0);
        assert_eq!(composed.value(0, 1), 10.0);
        assert_eq!(composed.value(0, 2), 300.0);
        assert_eq!(composed.value(1, 0), 2.0);
        assert_eq!(composed.value(1, 2), 100.0);
    }
}
