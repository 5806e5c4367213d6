//! File formats: model, graph and graphon JSON, versioned CSV tables, and
//! run directories that only appear once every artifact is written.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graphon::PiecewiseGraphon;
use crate::linop::SymOperator;
use crate::ncpoly::{enumerate_basis, Word};
use crate::network::{Activation, Layer, Network};

pub const MODEL_FORMAT_VERSION: u64 = 1;

fn fmt_err(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Format {
        field: field.into(),
        message: message.into(),
    }
}

fn field<'a>(obj: &'a Value, key: &str, path: &str) -> Result<&'a Value> {
    let map = obj.as_object().ok_or_else(|| fmt_err(path, "expected an object"))?;
    map.get(key).ok_or_else(|| fmt_err(join(path, key), "missing"))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| fmt_err(path, format!("expected a non-negative integer, found {v}")))
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    let x = v.as_f64().ok_or_else(|| fmt_err(path, format!("expected a number, found {v}")))?;
    if !x.is_finite() {
        return Err(fmt_err(path, "non-finite number"));
    }
    Ok(x)
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| fmt_err(path, "expected an array"))
}

fn as_word(v: &Value, arity: usize, path: &str) -> Result<Word> {
    let letters = as_array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let l = as_usize(l, &format!("{path}[{i}]"))?;
            u16::try_from(l).map_err(|_| fmt_err(format!("{path}[{i}]"), "letter too large"))
        })
        .collect::<Result<Vec<u16>>>()?;
    Word::new(letters, arity).map_err(|e| fmt_err(path, e.to_string()))
}

fn word_json(w: &Word) -> Value {
    json!(w.letters())
}

/// Serializes a network. Entry `layers[l][b][a]` lists `[word, coeff]`
/// pairs in canonical word order, zero coefficients omitted; `bases` is
/// written only for layers not supported on every word up to `degree`.
pub fn model_to_json(net: &Network) -> Value {
    let full = enumerate_basis(net.arity(), net.degree());
    let layers: Vec<Value> = net
        .layers()
        .iter()
        .map(|layer| {
            let rows: Vec<Value> = (0..layer.out_features())
                .map(|b| {
                    let entries: Vec<Value> = (0..layer.in_features())
                        .map(|a| {
                            let terms: Vec<Value> = layer
                                .basis()
                                .iter()
                                .zip(layer.entry(b, a))
                                .filter(|(_, &c)| c != 0.0)
                                .map(|(w, &c)| json!([word_json(w), c]))
                                .collect();
                            Value::Array(terms)
                        })
                        .collect();
                    Value::Array(entries)
                })
                .collect();
            Value::Array(rows)
        })
        .collect();
    let mut obj = Map::new();
    obj.insert("format".into(), json!("gtnn-model"));
    obj.insert("version".into(), json!(MODEL_FORMAT_VERSION));
    obj.insert("arity".into(), json!(net.arity()));
    obj.insert("degree".into(), json!(net.degree()));
    obj.insert("feature_sizes".into(), json!(net.feature_sizes()));
    obj.insert(
        "activations".into(),
        json!(net.layers().iter().map(|l| l.activation).collect::<Vec<_>>()),
    );
    obj.insert("layers".into(), Value::Array(layers));
    if net.layers().iter().any(|l| l.basis() != full.as_slice()) {
        let bases: Vec<Value> = net
            .layers()
            .iter()
            .map(|l| Value::Array(l.basis().iter().map(word_json).collect()))
            .collect();
        obj.insert("bases".into(), Value::Array(bases));
    }
    Value::Object(obj)
}

pub fn model_from_json(v: &Value) -> Result<Network> {
    if let Some(f) = v.get("format") {
        if f != "gtnn-model" {
            return Err(fmt_err("format", format!("expected \"gtnn-model\", found {f}")));
        }
    }
    if let Some(ver) = v.get("version") {
        let ver = as_usize(ver, "version")?;
        if ver as u64 != MODEL_FORMAT_VERSION {
            return Err(fmt_err("version", format!("unsupported model format version {ver}")));
        }
    }
    let arity = as_usize(field(v, "arity", "")?, "arity")?;
    if arity == 0 {
        return Err(fmt_err("arity", "must be >= 1"));
    }
    let degree = as_usize(field(v, "degree", "")?, "degree")?;
    let sizes = as_array(field(v, "feature_sizes", "")?, "feature_sizes")?
        .iter()
        .enumerate()
        .map(|(i, s)| as_usize(s, &format!("feature_sizes[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(fmt_err("feature_sizes", "need at least two positive sizes"));
    }
    let depth = sizes.len() - 1;
    let acts = as_array(field(v, "activations", "")?, "activations")?;
    if acts.len() != depth {
        return Err(fmt_err("activations", format!("expected {depth} entries, found {}", acts.len())));
    }
    let acts = acts
        .iter()
        .enumerate()
        .map(|(i, a)| {
            serde_json::from_value::<Activation>(a.clone())
                .map_err(|_| fmt_err(format!("activations[{i}]"), format!("unknown activation {a}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let layers_v = as_array(field(v, "layers", "")?, "layers")?;
    if layers_v.len() != depth {
        return Err(fmt_err("layers", format!("expected {depth} layers, found {}", layers_v.len())));
    }
    let bases = match v.get("bases") {
        None | Some(Value::Null) => None,
        Some(b) => {
            let b = as_array(b, "bases")?;
            if b.len() != depth {
                return Err(fmt_err("bases", format!("expected {depth} entries, found {}", b.len())));
            }
            Some(b)
        }
    };
    let mut layers = Vec::with_capacity(depth);
    for (l, lv) in layers_v.iter().enumerate() {
        let path = format!("layers[{l}]");
        let basis = match bases {
            Some(b) => as_array(&b[l], &format!("bases[{l}]"))?
                .iter()
                .enumerate()
                .map(|(i, w)| as_word(w, arity, &format!("bases[{l}][{i}]")))
                .collect::<Result<Vec<_>>>()?,
            None => enumerate_basis(arity, degree),
        };
        if let Some(w) = basis.iter().find(|w| w.len() > degree) {
            return Err(fmt_err(format!("bases[{l}]"), format!("word {w} exceeds degree {degree}")));
        }
        let (fin, fout) = (sizes[l], sizes[l + 1]);
        let mut layer = Layer::zeros(fin, fout, basis, acts[l]).map_err(|e| fmt_err(&path, e.to_string()))?;
        let rows = as_array(lv, &path)?;
        if rows.len() != fout {
            return Err(fmt_err(&path, format!("expected {fout} rows, found {}", rows.len())));
        }
        for (b, row) in rows.iter().enumerate() {
            let rpath = format!("{path}[{b}]");
            let entries = as_array(row, &rpath)?;
            if entries.len() != fin {
                return Err(fmt_err(&rpath, format!("expected {fin} entries, found {}", entries.len())));
            }
            for (a, entry) in entries.iter().enumerate() {
                let epath = format!("{rpath}[{a}]");
                for (t, term) in as_array(entry, &epath)?.iter().enumerate() {
                    let tpath = format!("{epath}[{t}]");
                    let pair = as_array(term, &tpath)?;
                    if pair.len() != 2 {
                        return Err(fmt_err(&tpath, "expected [word, coefficient]"));
                    }
                    let w = as_word(&pair[0], arity, &format!("{tpath}[0]"))?;
                    let c = as_f64(&pair[1], &format!("{tpath}[1]"))?;
                    let idx = layer
                        .word_index(&w)
                        .ok_or_else(|| fmt_err(&tpath, format!("word {w} is not in the layer basis")))?;
                    let off = layer.offset(b, a) + idx;
                    layer.coeffs_mut()[off] += c;
                }
            }
        }
        layers.push(layer);
    }
    Network::new(arity, degree, layers).map_err(|e| fmt_err("layers", e.to_string()))
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| fmt_err(path.display().to_string(), e.to_string()))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    write_json(path, &model_to_json(net))
}

pub fn load_model(path: &Path) -> Result<Network> {
    model_from_json(&read_json(path)?)
}

/// `{n, entries}` with `entries` row-major.
pub fn graph_to_json(g: &SymOperator) -> Value {
    json!({ "n": g.dim(), "entries": g.matrix().iter().copied().collect::<Vec<f64>>() })
}

/// Accepts `entries` either row-major (`n*n` numbers) or as `[i, j, value]`
/// triplets, which are mirrored across the diagonal.
pub fn graph_from_json(v: &Value, path: &str) -> Result<SymOperator> {
    let n = as_usize(field(v, "n", path)?, &join(path, "n"))?;
    if n == 0 {
        return Err(fmt_err(join(path, "n"), "must be >= 1"));
    }
    let epath = join(path, "entries");
    let entries = as_array(field(v, "entries", path)?, &epath)?;
    let mut m = Array2::zeros((n, n));
    let triplets = entries.first().is_some_and(Value::is_array);
    if triplets {
        let mut set = Array2::from_elem((n, n), false);
        for (t, e) in entries.iter().enumerate() {
            let tpath = format!("{epath}[{t}]");
            let e = as_array(e, &tpath)?;
            if e.len() != 3 {
                return Err(fmt_err(&tpath, "expected [i, j, value]"));
            }
            let i = as_usize(&e[0], &format!("{tpath}[0]"))?;
            let j = as_usize(&e[1], &format!("{tpath}[1]"))?;
            let x = as_f64(&e[2], &format!("{tpath}[2]"))?;
            if i >= n || j >= n {
                return Err(fmt_err(&tpath, format!("index out of range for n = {n}")));
            }
            for (r, c) in [(i, j), (j, i)] {
                if set[[r, c]] && m[[r, c]] != x {
                    return Err(fmt_err(&tpath, format!("conflicting value for ({r}, {c})")));
                }
                m[[r, c]] = x;
                set[[r, c]] = true;
            }
        }
    } else {
        if entries.len() != n * n {
            return Err(fmt_err(&epath, format!("expected {} numbers, found {}", n * n, entries.len())));
        }
        for (k, e) in entries.iter().enumerate() {
            m[[k / n, k % n]] = as_f64(e, &format!("{epath}[{k}]"))?;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if m[[i, j]] != m[[j, i]] {
                    return Err(fmt_err(&epath, format!("not symmetric at ({i}, {j})")));
                }
            }
        }
    }
    SymOperator::new(m)
}

/// A graph tuple file is `{"graphs": [graph, ...]}`; a bare graph object
/// is read as a tuple of one.
pub fn load_graphs(path: &Path) -> Result<Vec<SymOperator>> {
    let v = read_json(path)?;
    match v.get("graphs") {
        Some(gs) => as_array(gs, "graphs")?
            .iter()
            .enumerate()
            .map(|(i, g)| graph_from_json(g, &format!("graphs[{i}]")))
            .collect(),
        None => Ok(vec![graph_from_json(&v, "")?]),
    }
}

pub fn graphs_to_json(gs: &[SymOperator]) -> Value {
    json!({ "graphs": gs.iter().map(graph_to_json).collect::<Vec<_>>() })
}

pub fn save_graphs(gs: &[SymOperator], path: &Path) -> Result<()> {
    write_json(path, &graphs_to_json(gs))
}

/// `{grid, values}` with `values` row-major.
pub fn graphon_to_json(w: &PiecewiseGraphon) -> Value {
    json!({ "grid": w.grid(), "values": w.values().iter().copied().collect::<Vec<f64>>() })
}

pub fn graphon_from_json(v: &Value) -> Result<PiecewiseGraphon> {
    let m = as_usize(field(v, "grid", "")?, "grid")?;
    let vals = as_array(field(v, "values", "")?, "values")?;
    if m == 0 || vals.len() != m * m {
        return Err(fmt_err("values", format!("expected grid^2 = {} numbers, found {}", m * m, vals.len())));
    }
    let data = vals
        .iter()
        .enumerate()
        .map(|(k, x)| as_f64(x, &format!("values[{k}]")))
        .collect::<Result<Vec<_>>>()?;
    let a = Array2::from_shape_vec((m, m), data).expect("length checked");
    PiecewiseGraphon::new(a).map_err(|e| fmt_err("values", e.to_string()))
}

pub fn load_graphon(path: &Path) -> Result<PiecewiseGraphon> {
    graphon_from_json(&read_json(path)?)
}

/// Name, version and column set of a CSV layout. The version bumps
/// whenever the column set changes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Schema {
    pub name: &'static str,
    pub version: u32,
    pub columns: &'static [&'static str],
}

macro_rules! schema {
    ($id:ident, $name:literal, [$($c:literal),* $(,)?]) => {
        pub const $id: Schema = Schema { name: $name, version: 1, columns: &[$($c),*] };
    };
}

schema!(HISTORY_SCHEMA, "history", ["model", "epoch", "layer", "train_loss", "penalty", "test_r2", "c_total", "c_1", "c_2"]);
schema!(STABILITY_METRICS_SCHEMA, "stability-metrics", ["model", "epoch", "layer", "op_norm", "c_total", "graph_diff", "graph_diff_bound"]);
schema!(SWEEP_SCHEMA, "perturb-sweep", ["model", "seed", "size", "mean_opdist", "empirical", "bound"]);
schema!(SWEEP_MEAN_SCHEMA, "perturb-sweep-mean", ["model", "size", "seeds", "mean_opdist", "empirical_mean", "empirical_sd", "bound_mean"]);
schema!(SUMMARY_SCHEMA, "summary", ["model", "depth", "lambda", "test_r2", "train_loss", "c_total_max", "max_target_excess", "empirical_at_ref"]);
schema!(TRANSFER_SCHEMA, "transfer-mse", ["model", "m", "epoch", "train_loss", "test_mse"]);
schema!(OPDIST_SCHEMA, "transfer-opdist", ["m", "opdist_1", "opdist_2", "opdist_max"]);
schema!(TRANSFER_BEST_SCHEMA, "transfer-best", ["model", "m", "best_test_mse", "best_epoch"]);
schema!(MOVIELENS_SCHEMA, "movielens-mse", ["model", "ridge", "iteration", "train_loss", "test_mse"]);
schema!(MOVIELENS_SUMMARY_SCHEMA, "movielens-summary", ["model", "ridge", "params", "best_test_mse", "best_iteration"]);
schema!(CONVERGENCE_SCHEMA, "graphon-convergence", ["n", "template_hs", "er_op_mean", "er_op_sd", "er_hs_mean", "er_hs_sd", "er_hs_min"]);
schema!(GRAPHON_SEEDS_SCHEMA, "graphon-seeds", ["n", "seed", "edges", "er_op", "er_hs"]);
schema!(REPORT_SCHEMA, "bounds-report", ["sample", "empirical", "bound", "layerwise_bound", "simplified_bound", "input_distance", "m", "opdist_max"]);

/// Every schema written by the experiments.
pub const ALL_SCHEMAS: &[Schema] = &[
    HISTORY_SCHEMA,
    STABILITY_METRICS_SCHEMA,
    SWEEP_SCHEMA,
    SWEEP_MEAN_SCHEMA,
    SUMMARY_SCHEMA,
    TRANSFER_SCHEMA,
    OPDIST_SCHEMA,
    TRANSFER_BEST_SCHEMA,
    MOVIELENS_SCHEMA,
    MOVIELENS_SUMMARY_SCHEMA,
    CONVERGENCE_SCHEMA,
    GRAPHON_SEEDS_SCHEMA,
    REPORT_SCHEMA,
];

/// A CSV table held in memory; numbers are written in shortest
/// round-trip form so reruns are byte-identical.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub schema: Schema,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(schema: Schema) -> Self {
        CsvTable { schema, rows: Vec::new() }
    }

    pub fn columns(&self) -> &'static [&'static str] {
        self.schema.columns
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.schema.columns.len() {
            return Err(Error::shape("csv row", self.schema.columns.len(), row.len()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.schema.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a table, rejecting any header that differs from the schema.
    pub fn read(path: &Path, schema: Schema) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != schema.columns {
            return Err(Error::Data(format!(
                "{}: columns {header:?} do not match {} v{} {:?}",
                path.display(),
                schema.name,
                schema.version,
                schema.columns
            )));
        }
        let mut t = CsvTable::new(schema);
        for rec in r.records() {
            t.rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(t)
    }

    /// Parses one column as numbers; empty cells become NaN.
    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .schema
            .columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Data(format!("no column {name}")))?;
        self.rows
            .iter()
            .map(|r| {
                if r[i].is_empty() {
                    Ok(f64::NAN)
                } else {
                    r[i].parse::<f64>().map_err(|e| Error::Data(format!("column {name}: {e}")))
                }
            })
            .collect()
    }

    /// Raw cells of one column.
    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let i = self
            .schema
            .columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Data(format!("no column {name}")))?;
        Ok(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

/// Row helper: formats every value with `Display`.
#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($x.to_string()),*] };
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
}

/// Output directory for one run. Files go to a hidden staging directory
/// next to `out` and are moved into place by [`RunDir::commit`]; dropping
/// an uncommitted run deletes the staging directory.
#[derive(Debug)]
pub struct RunDir {
    out: PathBuf,
    staging: PathBuf,
    artifacts: Vec<Artifact>,
    committed: bool,
}

impl RunDir {
    pub fn begin(out: &Path) -> Result<Self> {
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
        let name = out.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
        let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        Ok(RunDir {
            out: out.to_path_buf(),
            staging,
            artifacts: Vec::new(),
            committed: false,
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn staging_path(&self, file: &str) -> PathBuf {
        self.staging.join(file)
    }

    fn record(&mut self, file: &str, table: Option<&CsvTable>) -> Result<()> {
        let sha256 = sha256_file(&self.staging.join(file))?;
        self.artifacts.retain(|a| a.file != file);
        self.artifacts.push(Artifact {
            file: file.to_string(),
            sha256,
            schema: table.map(|t| t.schema.name.to_string()),
            schema_version: table.map(|t| t.schema.version),
            columns: table.map(|t| t.schema.columns.iter().map(|c| c.to_string()).collect()),
        });
        Ok(())
    }

    pub fn csv(&mut self, file: &str, table: &CsvTable) -> Result<()> {
        table.write(&self.staging.join(file))?;
        self.record(file, Some(table))
    }

    pub fn json(&mut self, file: &str, v: &impl Serialize) -> Result<()> {
        write_json(&self.staging.join(file), &serde_json::to_value(v)?)?;
        self.record(file, None)
    }

    pub fn text(&mut self, file: &str, body: &str) -> Result<()> {
        let p = self.staging.join(file);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        self.record(file, None)
    }

    pub fn model(&mut self, file: &str, net: &Network) -> Result<()> {
        save_model(net, &self.staging.join(file))?;
        self.record(file, None)
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    /// Writes `manifest.json` (the given fields plus artifact hashes) and
    /// moves everything into the output directory.
    pub fn commit(mut self, manifest: Value) -> Result<PathBuf> {
        let mut m = match manifest {
            Value::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("run".into(), other);
                m
            }
        };
        m.insert("tool".into(), json!(env!("CARGO_PKG_NAME")));
        m.insert("tool_version".into(), json!(env!("CARGO_PKG_VERSION")));
        m.insert("artifacts".into(), serde_json::to_value(&self.artifacts)?);
        write_json(&self.staging.join("manifest.json"), &Value::Object(m))?;
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let entries = fs::read_dir(&self.staging).map_err(|e| Error::io(&self.staging, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.staging, e))?;
            let dest = self.out.join(entry.file_name());
            fs::rename(entry.path(), &dest).map_err(|e| Error::io(&dest, e))?;
        }
        fs::remove_dir(&self.staging).map_err(|e| Error::io(&self.staging, e))?;
        self.committed = true;
        Ok(self.out.clone())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}
