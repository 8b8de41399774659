//! CSV series ingestion.
//!
//! One real value per data row, from a column picked by 0-based index or
//! header name. A header row is auto-detected: when the first row's cell
//! in the selected column does not parse as a number, the row is treated
//! as a header. Empty lines are skipped; parse errors carry the 1-based
//! line number.

use seqcusum::Error;
use std::path::Path;

enum Column {
    Index(usize),
    Name(String),
}

fn split_row(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn parse_cell(cell: &str) -> Option<f64> {
    // Locale-independent: decimal point only.
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Read one numeric column from a CSV file.
pub fn parse_series(path: &Path, column: &str) -> Result<Vec<f64>, Error> {
    let text = std::fs::read_to_string(path)?;
    let selector = match column.parse::<usize>() {
        Ok(idx) => Column::Index(idx),
        Err(_) => Column::Name(column.to_string()),
    };

    let mut rows = text
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty());

    let Some((first_no, first_line)) = rows.next() else {
        return Err(Error::Data(format!("{} holds no data rows", path.display())));
    };
    let first = split_row(first_line);

    let mut values = Vec::new();
    let index = match &selector {
        Column::Name(name) => {
            let Some(idx) = first.iter().position(|cell| cell == name) else {
                return Err(Error::Parse {
                    line: first_no + 1,
                    message: format!("no column named {name:?} in header {first:?}"),
                });
            };
            idx
        }
        Column::Index(idx) => {
            let idx = *idx;
            let Some(cell) = first.get(idx) else {
                return Err(Error::Parse {
                    line: first_no + 1,
                    message: format!("row has {} columns, wanted index {idx}", first.len()),
                });
            };
            // Numeric first cell means there is no header row.
            if let Some(v) = parse_cell(cell) {
                values.push(v);
            }
            idx
        }
    };

    for (no, line) in rows {
        let row = split_row(line);
        let Some(cell) = row.get(index) else {
            return Err(Error::Parse {
                line: no + 1,
                message: format!("row has {} columns, wanted index {index}", row.len()),
            });
        };
        match parse_cell(cell) {
            Some(v) => values.push(v),
            None => {
                return Err(Error::Parse {
                    line: no + 1,
                    message: format!("cannot parse {cell:?} as a finite number"),
                })
            }
        }
    }

    if values.is_empty() {
        return Err(Error::Data(format!(
            "{} holds no usable data rows in the selected column",
            path.display()
        )));
    }
    Ok(values)
}
