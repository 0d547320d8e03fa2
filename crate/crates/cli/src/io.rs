//! Delimited text input and output.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use ridgenet_core::{DataMatrix, SymMatrix};

use crate::error::{input, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Orientation {
    /// One row per sample, one column per feature.
    #[default]
    Columns,
    /// One row per feature, named in the first column.
    Rows,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub orientation: Orientation,
    /// Overrides the delimiter guessed from the file extension.
    pub delimiter: Option<u8>,
    /// Non-numeric column holding class labels (sample-per-row files only).
    pub class_column: Option<String>,
}

/// Parsed data file: samples by features, with sample identifiers.
#[derive(Debug, Clone)]
pub struct Table {
    pub sample_ids: Vec<String>,
    pub data: DataMatrix,
}

/// Tab for `.tsv`/`.tab`/`.txt`, comma otherwise.
pub fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(ext) if ext == "tsv" || ext == "tab" || ext == "txt" => b'\t',
        _ => b',',
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn load_matrix(path: &Path, options: &LoadOptions) -> CliResult<Table> {
    let text = read_text(path)?;
    let delimiter = options.delimiter.unwrap_or_else(|| delimiter_for(path));
    parse_matrix(&text, delimiter, options).map_err(|e| match e {
        CliError::Input(msg) => input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn records(text: &str, delimiter: u8) -> CliResult<Vec<(u64, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| input(format!("malformed input: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        let fields: Vec<String> = rec.iter().map(|f| f.trim().to_string()).collect();
        if fields.len() == 1 && fields[0].is_empty() {
            continue;
        }
        out.push((line, fields));
    }
    if out.is_empty() {
        return Err(input("file is empty"));
    }
    Ok(out)
}

fn parse_cell(cell: &str, line: u64, col: usize, name: &str) -> CliResult<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(input(format!("line {line}, column {col} (`{name}`): `{cell}` is not a finite number"))),
    }
}

fn check_unique(names: &[String], what: &str) -> CliResult<()> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (k, n) in names.iter().enumerate() {
        if n.is_empty() {
            return Err(input(format!("{what} {} has an empty name", k + 1)));
        }
        if let Some(first) = seen.insert(n, k) {
            return Err(input(format!("duplicate {what} name `{n}` ({} and {})", first + 1, k + 1)));
        }
    }
    Ok(())
}

/// Parses delimited text. In column orientation an empty first header cell
/// marks a first column of sample identifiers; without one, samples are
/// numbered from 1. In row orientation the header holds sample identifiers
/// after one leading cell, and each row starts with its feature name.
pub fn parse_matrix(text: &str, delimiter: u8, options: &LoadOptions) -> CliResult<Table> {
    let mut rows = records(text, delimiter)?;
    let (_, header) = rows.remove(0);
    for (line, fields) in &rows {
        if fields.len() != header.len() {
            return Err(input(format!("line {line}: expected {} fields, found {}", header.len(), fields.len())));
        }
    }
    match options.orientation {
        Orientation::Columns => {
            let has_ids = header[0].is_empty();
            let skip = usize::from(has_ids);
            let class_col = match &options.class_column {
                Some(name) => Some(
                    header
                        .iter()
                        .position(|h| h == name)
                        .ok_or_else(|| input(format!("no class column `{name}` in header")))?,
                ),
                None => None,
            };
            let feature_cols: Vec<usize> = (skip..header.len()).filter(|&c| Some(c) != class_col).collect();
            let names: Vec<String> = feature_cols.iter().map(|&c| header[c].clone()).collect();
            check_unique(&names, "feature")?;
            let mut values = DMatrix::zeros(rows.len(), names.len());
            let mut ids = Vec::with_capacity(rows.len());
            let mut labels = Vec::new();
            for (r, (line, fields)) in rows.iter().enumerate() {
                ids.push(if has_ids { fields[0].clone() } else { (r + 1).to_string() });
                if let Some(c) = class_col {
                    labels.push(fields[c].clone());
                }
                for (k, &c) in feature_cols.iter().enumerate() {
                    values[(r, k)] = parse_cell(&fields[c], *line, c + 1, &header[c])?;
                }
            }
            check_unique(&ids, "sample")?;
            let mut data = DataMatrix::new(values, names).map_err(|e| input(e.to_string()))?;
            if class_col.is_some() {
                data = data.with_class_labels(labels).map_err(|e| input(e.to_string()))?;
            }
            Ok(Table { sample_ids: ids, data })
        }
        Orientation::Rows => {
            if options.class_column.is_some() {
                return Err(input("a class column needs sample-per-row orientation; use a class map"));
            }
            let ids: Vec<String> = header[1..].to_vec();
            check_unique(&ids, "sample")?;
            let names: Vec<String> = rows.iter().map(|(_, f)| f[0].clone()).collect();
            check_unique(&names, "feature")?;
            let mut values = DMatrix::zeros(ids.len(), names.len());
            for (k, (line, fields)) in rows.iter().enumerate() {
                for s in 0..ids.len() {
                    values[(s, k)] = parse_cell(&fields[s + 1], *line, s + 2, &header[s + 1])?;
                }
            }
            let data = DataMatrix::new(values, names).map_err(|e| input(e.to_string()))?;
            Ok(Table { sample_ids: ids, data })
        }
    }
}

/// Sample-to-class map from a two-column file with a header line.
pub fn load_class_map(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = read_text(path)?;
    parse_class_map(&text, delimiter_for(path)).map_err(|e| input(format!("{}: {e}", path.display())))
}

pub fn parse_class_map(text: &str, delimiter: u8) -> CliResult<Vec<(String, String)>> {
    let mut rows = records(text, delimiter)?;
    rows.remove(0);
    let mut out = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        if fields.len() != 2 {
            return Err(input(format!("line {line}: expected 2 fields, found {}", fields.len())));
        }
        let mut it = fields.into_iter();
        out.push((it.next().unwrap(), it.next().unwrap()));
    }
    Ok(out)
}

/// Attaches class labels from a sample-to-class map.
pub fn attach_classes(table: Table, map: &[(String, String)]) -> CliResult<Table> {
    let lookup: HashMap<&str, &str> = map.iter().map(|(s, c)| (s.as_str(), c.as_str())).collect();
    let labels = table
        .sample_ids
        .iter()
        .map(|id| {
            lookup
                .get(id.as_str())
                .map(|c| c.to_string())
                .ok_or_else(|| input(format!("sample `{id}` is missing from the class map")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let data = table.data.with_class_labels(labels).map_err(|e| input(e.to_string()))?;
    Ok(Table {
        sample_ids: table.sample_ids,
        data,
    })
}

/// 17 significant digits, so that values survive a round trip exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Square matrix with feature names as header and first column.
pub fn sym_matrix_to_csv(m: &SymMatrix) -> String {
    let mut out = String::new();
    for name in m.names() {
        out.push(',');
        out.push_str(&quote(name));
    }
    out.push('\n');
    for i in 0..m.dim() {
        out.push_str(&quote(&m.names()[i]));
        for j in 0..m.dim() {
            out.push(',');
            out.push_str(&fmt_f64(m.get(i, j)));
        }
        out.push('\n');
    }
    out
}

pub fn parse_sym_matrix(text: &str, delimiter: u8) -> CliResult<SymMatrix> {
    let mut rows = records(text, delimiter)?;
    let (_, header) = rows.remove(0);
    let names: Vec<String> = header[1..].to_vec();
    check_unique(&names, "feature")?;
    if rows.len() != names.len() {
        return Err(input(format!("{} rows for {} columns; expected a square matrix", rows.len(), names.len())));
    }
    let mut values = DMatrix::zeros(names.len(), names.len());
    for (i, (line, fields)) in rows.iter().enumerate() {
        if fields.len() != header.len() {
            return Err(input(format!("line {line}: expected {} fields, found {}", header.len(), fields.len())));
        }
        if fields[0] != names[i] {
            return Err(input(format!("line {line}: row name `{}` does not match column `{}`", fields[0], names[i])));
        }
        for j in 0..names.len() {
            values[(i, j)] = parse_cell(&fields[j + 1], *line, j + 2, &names[j])?;
        }
    }
    SymMatrix::new(values, names).map_err(|e| input(e.to_string()))
}

pub fn load_sym_matrix(path: &Path) -> CliResult<SymMatrix> {
    let text = read_text(path)?;
    parse_sym_matrix(&text, delimiter_for(path)).map_err(|e| match e {
        CliError::Input(msg) => input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}
