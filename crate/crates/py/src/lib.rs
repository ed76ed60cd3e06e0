//! Python bindings for the research capacity index toolkit.
//!
//! Matrices cross the boundary as lists of rows. Structured results come
//! back as plain dicts and lists. Validation failures raise `ValueError`,
//! numerical failures `ArithmeticError` and file problems `OSError`.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use rcindex::factor::{PafOptions, VarimaxOptions};
use rcindex::panel::Country;
use rcindex::pipeline::{OutputFormat, PipelineConfig, Workspace};
use rcindex::{CorrelationMatrix, ErrorKind, FactorSpec, ScoreSeries};

fn py_err(e: rcindex::Error) -> PyErr {
    match e.kind() {
        ErrorKind::Validation => PyValueError::new_err(e.to_string()),
        ErrorKind::Numerical => PyArithmeticError::new_err(e.to_string()),
        ErrorKind::Io => PyOSError::new_err(e.to_string()),
    }
}

/// Parses serialized JSON into the equivalent Python object.
fn from_json<'py>(py: Python<'py>, text: serde_json::Result<String>) -> PyResult<Bound<'py, PyAny>> {
    let text = text.map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 {
        return Err(PyValueError::new_err("matrix must be non-empty"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(PyValueError::new_err(format!(
            "row {i} has {} values, expected {p}",
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn names_or_default(names: Option<Vec<String>>, p: usize) -> PyResult<Vec<String>> {
    match names {
        Some(n) if n.len() != p => Err(PyValueError::new_err(format!("{} names for {p} columns", n.len()))),
        Some(n) => Ok(n),
        None => Ok((1..=p).map(|j| format!("V{j}")).collect()),
    }
}

fn correlation_matrix(rows: &[Vec<f64>], names: Option<Vec<String>>) -> PyResult<CorrelationMatrix> {
    let m = matrix(rows)?;
    let names = names_or_default(names, m.ncols())?;
    CorrelationMatrix::from_matrix(m, names).map_err(py_err)
}

/// CSV text of a seeded synthetic country-year panel.
#[pyfunction]
#[pyo3(signature = (seed, countries = 172, years = 9))]
fn synthetic_panel(seed: u64, countries: usize, years: usize) -> PyResult<String> {
    let panel = rcindex::generate_synthetic_panel(seed, countries, years, &FactorSpec::research_indicators())
        .map_err(py_err)?;
    let mut buf = Vec::new();
    panel.write_csv(&mut buf).map_err(py_err)?;
    String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// The built-in variable dictionary as a list of dicts.
#[pyfunction]
fn default_dictionary(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    from_json(py, Ok(rcindex::default_dictionary().to_json()))
}

/// Pearson correlation matrix of the columns of `data`.
#[pyfunction]
#[pyo3(signature = (data, names = None))]
fn correlation(data: Vec<Vec<f64>>, names: Option<Vec<String>>) -> PyResult<Vec<Vec<f64>>> {
    let m = matrix(&data)?;
    let names = names_or_default(names, m.ncols())?;
    let corr = rcindex::pearson_corr(&m, &names).map_err(py_err)?;
    Ok(to_rows(&corr.values))
}

/// Eigenvalues (descending) and eigenvectors (as columns) of a symmetric matrix.
#[pyfunction]
fn eigen(matrix_rows: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let es = rcindex::sym_eigen(&matrix(&matrix_rows)?).map_err(py_err)?;
    Ok((es.eigenvalues.iter().copied().collect(), to_rows(&es.eigenvectors)))
}

/// Overall and per-variable sampling adequacy.
#[pyfunction]
#[pyo3(signature = (corr, names = None))]
fn kmo(py: Python<'_>, corr: Vec<Vec<f64>>, names: Option<Vec<String>>) -> PyResult<Bound<'_, PyAny>> {
    let msa = rcindex::kmo(&correlation_matrix(&corr, names)?).map_err(py_err)?;
    from_json(py, serde_json::to_string(&msa))
}

/// Bartlett's test of sphericity for a correlation matrix from `n` observations.
#[pyfunction]
fn bartlett(py: Python<'_>, corr: Vec<Vec<f64>>, n: usize) -> PyResult<Bound<'_, PyAny>> {
    let b = rcindex::bartlett(&correlation_matrix(&corr, None)?, n).map_err(py_err)?;
    from_json(py, serde_json::to_string(&b))
}

/// Principal-axis factoring followed by varimax rotation.
#[pyfunction]
#[pyo3(signature = (corr, factors = 2, names = None, kaiser_normalization = true))]
fn efa(
    py: Python<'_>,
    corr: Vec<Vec<f64>>,
    factors: usize,
    names: Option<Vec<String>>,
    kaiser_normalization: bool,
) -> PyResult<Bound<'_, PyAny>> {
    let corr = correlation_matrix(&corr, names)?;
    let rot = VarimaxOptions {
        kaiser_normalization,
        ..Default::default()
    };
    let model = rcindex::fit_efa(&corr, factors, &PafOptions::default(), &rot).map_err(py_err)?;
    from_json(py, serde_json::to_string(&model))
}

/// Communality, uniqueness and complexity for each row of a loading matrix.
#[pyfunction]
fn loading_table(py: Python<'_>, names: Vec<String>, loadings: Vec<Vec<f64>>) -> PyResult<Bound<'_, PyAny>> {
    let l = matrix(&loadings)?;
    if names.len() != l.nrows() {
        return Err(PyValueError::new_err(format!(
            "{} names for {} rows",
            names.len(),
            l.nrows()
        )));
    }
    from_json(py, serde_json::to_string(&rcindex::loading_table(&names, &l)))
}

/// Raw alpha, standardized alpha and lambda-6 of an item matrix.
#[pyfunction]
#[pyo3(signature = (items, names = None))]
fn reliability(py: Python<'_>, items: Vec<Vec<f64>>, names: Option<Vec<String>>) -> PyResult<Bound<'_, PyAny>> {
    let m = matrix(&items)?;
    let names = names_or_default(names, m.ncols())?;
    let report = rcindex::reliability(&m, &names).map_err(py_err)?;
    from_json(py, serde_json::to_string(&report))
}

/// Restandardized mean of the selected z-score columns.
#[pyfunction]
fn summative_index(z: Vec<Vec<f64>>, items: Vec<usize>) -> PyResult<Vec<f64>> {
    rcindex::summative_index(&matrix(&z)?, &items).map_err(py_err)
}

/// `(rank, code, score)` in descending score order, ties broken by code.
#[pyfunction]
fn rank(codes: Vec<String>, scores: Vec<f64>) -> PyResult<Vec<(usize, String, f64)>> {
    let countries = codes
        .into_iter()
        .map(|code| Country {
            name: code.clone(),
            code,
            region: String::new(),
        })
        .collect();
    let series = ScoreSeries::new(countries, scores).map_err(py_err)?;
    let ranking = rcindex::rank(&series).map_err(py_err)?;
    Ok(ranking
        .entries
        .into_iter()
        .map(|e| (e.rank, e.country_code, e.score))
        .collect())
}

/// Runs every stage into `out_dir` and returns the run manifest.
#[pyfunction]
#[pyo3(signature = (
    data, dictionary, out_dir, seed,
    factors = 2, threshold = 50.0, chains = 4, iterations = 2000, warmup = 1000,
    write_draws = false, json_tables = false,
))]
#[allow(clippy::too_many_arguments)]
fn run_pipeline(
    py: Python<'_>,
    data: PathBuf,
    dictionary: PathBuf,
    out_dir: PathBuf,
    seed: u64,
    factors: usize,
    threshold: f64,
    chains: usize,
    iterations: usize,
    warmup: usize,
    write_draws: bool,
    json_tables: bool,
) -> PyResult<Bound<'_, PyAny>> {
    let format = if json_tables {
        OutputFormat::Json
    } else {
        OutputFormat::Csv
    };
    let config = PipelineConfig {
        factors,
        seed,
        threshold,
        chains,
        iterations,
        warmup,
        write_draws,
    };
    let manifest = py
        .detach(|| {
            let ws = Workspace::new(&out_dir, format);
            rcindex::pipeline::run_pipeline(&ws, &data, &dictionary, &config, vec!["python".into()])
        })
        .map_err(py_err)?;
    from_json(py, serde_json::to_string(&manifest))
}

#[pymodule]
fn rcindex_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(synthetic_panel, m)?)?;
    m.add_function(wrap_pyfunction!(default_dictionary, m)?)?;
    m.add_function(wrap_pyfunction!(correlation, m)?)?;
    m.add_function(wrap_pyfunction!(eigen, m)?)?;
    m.add_function(wrap_pyfunction!(kmo, m)?)?;
    m.add_function(wrap_pyfunction!(bartlett, m)?)?;
    m.add_function(wrap_pyfunction!(efa, m)?)?;
    m.add_function(wrap_pyfunction!(loading_table, m)?)?;
    m.add_function(wrap_pyfunction!(reliability, m)?)?;
    m.add_function(wrap_pyfunction!(summative_index, m)?)?;
    m.add_function(wrap_pyfunction!(rank, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
