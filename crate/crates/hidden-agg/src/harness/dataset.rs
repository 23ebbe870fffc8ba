//! Dataset generation and loading: synthetic Boolean databases and generic
//! categorical CSV files, each split into an initial state plus a disjoint
//! insertion reserve.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Attribute, Schema};

use super::config::InitialSize;
use super::HarnessError;

/// A schema together with initial tuples and the insertion reserve.
#[derive(Debug)]
pub struct Dataset {
    pub schema: Arc<Schema>,
    pub initial: Vec<Vec<u32>>,
    pub pool: Vec<Vec<u32>>,
}

/// `n + pool` distinct tuples with i.i.d. uniform Boolean attributes
/// (resampling on duplicates): the first `n` form the database, the rest the
/// reserve pool.
pub fn generate_boolean_db(
    n: usize,
    m: usize,
    pool: usize,
    seed: u64,
) -> Result<Dataset, HarnessError> {
    if m < 1 {
        return Err(HarnessError::InvalidConfig("m must be >= 1".into()));
    }
    let total = n + pool;
    if m < 127 {
        let capacity = 1u128 << m;
        if total as u128 > capacity {
            return Err(HarnessError::Infeasible(format!(
                "{total} distinct tuples requested but 2^{m} = {capacity} exist"
            )));
        }
    }
    let schema = Arc::new(Schema::boolean(m)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<Vec<u32>> = HashSet::with_capacity(total * 2);
    let mut rows = Vec::with_capacity(total);
    while rows.len() < total {
        let row: Vec<u32> = (0..m).map(|_| rng.random_range(0..2u32)).collect();
        if seen.insert(row.clone()) {
            rows.push(row);
        }
    }
    let reserve = rows.split_off(n);
    Ok(Dataset {
        schema,
        initial: rows,
        pool: reserve,
    })
}

/// Loads a categorical CSV: first row attribute names, each subsequent row
/// one tuple. Domains are the sorted sets of observed values per column.
/// `initial` tuples are chosen uniformly at random without replacement; the
/// rest become the insertion reserve in shuffled order.
pub fn load_csv_db(
    path: &Path,
    initial: InitialSize,
    seed: u64,
) -> Result<Dataset, HarnessError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(HarnessError::from)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(HarnessError::from)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() {
        return Err(HarnessError::Parse {
            line: 1,
            message: "no attribute names in header".into(),
        });
    }
    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HarnessError::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(HarnessError::Parse {
                line: i + 2,
                message: format!(
                    "expected {} fields, found {}",
                    headers.len(),
                    record.len()
                ),
            });
        }
        raw_rows.push(record.iter().map(|f| f.to_string()).collect());
    }

    // Tuples must be distinct.
    let mut first_seen: std::collections::HashMap<&[String], usize> =
        std::collections::HashMap::new();
    for (i, row) in raw_rows.iter().enumerate() {
        if let Some(&first) = first_seen.get(row.as_slice()) {
            return Err(HarnessError::DuplicateRows {
                first: first + 2,
                second: i + 2,
            });
        }
        first_seen.insert(row.as_slice(), i);
    }
    drop(first_seen);

    // Infer domains: sorted distinct values per column, so the schema does
    // not depend on row order.
    let mut attributes = Vec::with_capacity(headers.len());
    for (col, name) in headers.iter().enumerate() {
        let mut values: Vec<String> = raw_rows
            .iter()
            .map(|r| r[col].clone())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        values.sort();
        attributes.push(Attribute {
            name: name.clone(),
            domain: values,
        });
    }
    let schema = Arc::new(Schema::new(attributes)?);

    let mut rows: Vec<Vec<u32>> = Vec::with_capacity(raw_rows.len());
    for row in &raw_rows {
        let mut values = Vec::with_capacity(row.len());
        for (col, v) in row.iter().enumerate() {
            values.push(schema.value_index(col, v)?);
        }
        rows.push(values);
    }

    let want = match initial {
        InitialSize::Count(c) => c,
        InitialSize::Fraction(f) => ((rows.len() as f64) * f).round() as usize,
    };
    if want > rows.len() {
        return Err(HarnessError::InvalidConfig(format!(
            "initial size {want} exceeds the {} rows in the file",
            rows.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
    let pool = rows.split_off(want);
    Ok(Dataset {
        schema,
        initial: rows,
        pool,
    })
}

/// Writes a dataset as a categorical CSV understood by [`load_csv_db`].
pub fn write_csv_db<W: std::io::Write>(
    writer: W,
    schema: &Schema,
    rows: &[Vec<u32>],
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(schema.attributes().iter().map(|a| a.name.as_str()))?;
    for row in rows {
        w.write_record(
            row.iter()
                .enumerate()
                .map(|(col, &v)| schema.attributes()[col].domain[v as usize].as_str()),
        )?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn boolean_default_scale_generates_distinct_rows() {
        let ds = generate_boolean_db(5000, 30, 2500, 9).unwrap();
        assert_eq!(ds.initial.len(), 5000);
        assert_eq!(ds.pool.len(), 2500);
        let mut all: Vec<&Vec<u32>> = ds.initial.iter().chain(&ds.pool).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 7500);
    }

    #[test]
    fn boolean_empty_and_full_domain() {
        let ds = generate_boolean_db(0, 4, 0, 9).unwrap();
        assert!(ds.initial.is_empty());

        // n = 2^m uses the whole domain; the pool must then be 0.
        let ds = generate_boolean_db(16, 4, 0, 9).unwrap();
        assert_eq!(ds.initial.len(), 16);
        assert!(generate_boolean_db(16, 4, 1, 9).is_err());
        assert!(generate_boolean_db(17, 4, 0, 9).is_err());
    }

    fn temp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn csv_partitions_into_initial_and_reserve() {
        let f = temp_csv(
            "color,size\nred,1\nred,2\nblue,1\nblue,2\ngreen,1\ngreen,2\nred,3\nblue,3\ngreen,3\nred,4\n",
        );
        let ds = load_csv_db(f.path(), InitialSize::Count(7), 3).unwrap();
        assert_eq!(ds.initial.len(), 7);
        assert_eq!(ds.pool.len(), 3);
        assert_eq!(ds.schema.attribute_count(), 2);
        assert_eq!(ds.schema.domain_size(0), 3);
        assert_eq!(ds.schema.domain_size(1), 4);
    }

    #[test]
    fn csv_initial_count_too_large_is_an_error() {
        let f = temp_csv("a,b\n0,1\n1,0\n1,1\n0,0\n");
        assert!(load_csv_db(f.path(), InitialSize::Count(5), 3).is_err());
        assert!(load_csv_db(f.path(), InitialSize::Fraction(0.5), 3).is_ok());
    }

    #[test]
    fn csv_duplicate_rows_rejected_with_line_numbers() {
        let f = temp_csv("a,b\n0,1\n1,0\n0,1\n");
        match load_csv_db(f.path(), InitialSize::Count(1), 3) {
            Err(HarnessError::DuplicateRows { first, second }) => {
                assert_eq!((first, second), (2, 4));
            }
            other => panic!("expected duplicate-row error, got {other:?}"),
        }
    }

    #[test]
    fn csv_ragged_row_reports_line() {
        let f = temp_csv("a,b\n0,1\n1\n");
        match load_csv_db(f.path(), InitialSize::Count(1), 3) {
            Err(HarnessError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trips_through_writer() {
        let ds = generate_boolean_db(50, 6, 0, 11).unwrap();
        let mut buf = Vec::new();
        write_csv_db(&mut buf, &ds.schema, &ds.initial).unwrap();
        let f = temp_csv(std::str::from_utf8(&buf).unwrap());
        let back = load_csv_db(f.path(), InitialSize::Count(50), 1).unwrap();
        assert_eq!(back.initial.len(), 50);
        // Same value multiset once mapped back to strings.
        let to_strings = |schema: &Schema, rows: &[Vec<u32>]| {
            let mut v: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .map(|(c, &x)| schema.attributes()[c].domain[x as usize].clone())
                        .collect()
                })
                .collect();
            v.sort();
            v
        };
        assert_eq!(
            to_strings(&ds.schema, &ds.initial),
            to_strings(&back.schema, &back.initial)
        );
    }
}
