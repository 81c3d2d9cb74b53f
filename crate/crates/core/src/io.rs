//! File formats: `plnn-v1` network JSON, property JSON, result JSON and a
//! best-effort `.nnet` importer.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canon::PropertyClause;
use crate::error::{Error, Result};
use crate::model::{BoxDomain, Layer, Linear, Matrix, MaxPool, Network};

pub const NETWORK_FORMAT: &str = "plnn-v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    format: String,
    input_size: usize,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum LayerFile {
    Linear { weight: Vec<Vec<f64>>, bias: Vec<f64> },
    Relu {},
    Maxpool { groups: Vec<Vec<usize>> },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ClauseFile {
    Geq { c: Vec<f64>, b: f64 },
    Any(Vec<ClauseFile>),
    All(Vec<ClauseFile>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PropertyFile {
    input_lb: Vec<f64>,
    input_ub: Vec<f64>,
    property: ClauseFile,
}

impl From<&PropertyClause> for ClauseFile {
    fn from(c: &PropertyClause) -> Self {
        match c {
            PropertyClause::Geq { c, b } => ClauseFile::Geq { c: c.clone(), b: *b },
            PropertyClause::Any(ch) => ClauseFile::Any(ch.iter().map(Into::into).collect()),
            PropertyClause::All(ch) => ClauseFile::All(ch.iter().map(Into::into).collect()),
        }
    }
}

impl From<ClauseFile> for PropertyClause {
    fn from(c: ClauseFile) -> Self {
        match c {
            ClauseFile::Geq { c, b } => PropertyClause::Geq { c, b },
            ClauseFile::Any(ch) => PropertyClause::Any(ch.into_iter().map(Into::into).collect()),
            ClauseFile::All(ch) => PropertyClause::All(ch.into_iter().map(Into::into).collect()),
        }
    }
}

pub fn network_to_json(net: &Network) -> String {
    let file = NetworkFile {
        format: NETWORK_FORMAT.to_string(),
        input_size: net.input_size,
        layers: net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Linear(lin) => LayerFile::Linear { weight: lin.weight.to_rows(), bias: lin.bias.clone() },
                Layer::Relu => LayerFile::Relu {},
                Layer::MaxPool(p) => LayerFile::Maxpool { groups: p.groups.clone() },
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("network serialization cannot fail")
}

pub fn network_from_json(text: &str) -> Result<Network> {
    // Check the tag first so a foreign format is reported as such.
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(NETWORK_FORMAT) => {}
        Some(other) => return Err(Error::UnsupportedFormat(other.to_string())),
        None => return Err(Error::Parse("missing field `format`".into())),
    }
    let file: NetworkFile = serde_json::from_value(value)?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (k, l) in file.layers.into_iter().enumerate() {
        layers.push(match l {
            LayerFile::Linear { weight, bias } => {
                let weight = Matrix::from_rows(weight).map_err(|e| Error::Parse(format!("layer {k}: {e}")))?;
                Layer::Linear(Linear { weight, bias })
            }
            LayerFile::Relu {} => Layer::Relu,
            LayerFile::Maxpool { groups } => Layer::MaxPool(MaxPool { groups }),
        });
    }
    Network::new(file.input_size, layers)
}

pub fn property_to_json(prop: &PropertyClause, domain: &BoxDomain) -> String {
    let file = PropertyFile { input_lb: domain.lb.clone(), input_ub: domain.ub.clone(), property: prop.into() };
    serde_json::to_string(&file).expect("property serialization cannot fail")
}

pub fn property_from_json(text: &str) -> Result<(PropertyClause, BoxDomain)> {
    let file: PropertyFile = serde_json::from_str(text)?;
    let domain = BoxDomain::new(file.input_lb, file.input_ub)?;
    Ok((file.property.into(), domain))
}

pub fn load_network(path: &Path) -> Result<Network> {
    network_from_json(&fs::read_to_string(path)?)
}

pub fn save_network(path: &Path, net: &Network) -> Result<()> {
    Ok(fs::write(path, network_to_json(net))?)
}

/// Loads a property; with `output_width`, checks the clause against it.
pub fn load_property(path: &Path, output_width: Option<usize>) -> Result<(PropertyClause, BoxDomain)> {
    let (prop, domain) = property_from_json(&fs::read_to_string(path)?)?;
    if let Some(w) = output_width {
        prop.validate(w)?;
    }
    Ok((prop, domain))
}

pub fn save_property(path: &Path, prop: &PropertyClause, domain: &BoxDomain) -> Result<()> {
    Ok(fs::write(path, property_to_json(prop, domain))?)
}

/// Machine-readable outcome of one verification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub status: String,
    pub margin: Option<f64>,
    pub counterexample: Option<Vec<f64>>,
    pub nodes: usize,
    pub time_s: f64,
    pub lb: Option<f64>,
    pub ub: Option<f64>,
    pub spurious_candidates: usize,
}

/// `None` for values JSON cannot carry.
pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Parses the ACAS Xu `.nnet` text format and folds its input and output
/// normalisation into the first and last affine layers.
pub fn network_from_nnet(text: &str) -> Result<Network> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with("//"));
    let mut numbers = |what: &str| -> Result<Vec<f64>> {
        let line = lines.next().ok_or_else(|| Error::Parse(format!("nnet: missing {what}")))?;
        line.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("nnet {what}: `{t}`: {e}"))))
            .collect()
    };
    let header = numbers("header")?;
    if header.len() < 4 {
        return Err(Error::Parse("nnet: header needs 4 counts".into()));
    }
    let n_layers = header[0] as usize;
    let sizes: Vec<usize> = numbers("layer sizes")?.into_iter().map(|v| v as usize).collect();
    if sizes.len() != n_layers + 1 {
        return Err(Error::Parse(format!("nnet: expected {} layer sizes, got {}", n_layers + 1, sizes.len())));
    }
    let _symmetric = numbers("symmetric flag")?;
    let _in_min = numbers("input minimums")?;
    let _in_max = numbers("input maximums")?;
    let means = numbers("means")?;
    let ranges = numbers("ranges")?;
    let n_in = sizes[0];
    if means.len() < n_in + 1 || ranges.len() < n_in + 1 {
        return Err(Error::Parse("nnet: normalisation vectors too short".into()));
    }

    let mut layers = Vec::with_capacity(2 * n_layers);
    for k in 0..n_layers {
        let (rows, cols) = (sizes[k + 1], sizes[k]);
        let mut weight = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = numbers("weight row")?;
            if row.len() != cols {
                return Err(Error::Parse(format!("nnet: layer {k} row {r} has {} entries, expected {cols}", row.len())));
            }
            weight.push(row);
        }
        let mut bias = Vec::with_capacity(rows);
        for _ in 0..rows {
            let b = numbers("bias")?;
            bias.push(*b.first().ok_or_else(|| Error::Parse("nnet: empty bias line".into()))?);
        }
        layers.push(Linear::new(weight, bias)?);
    }

    // x_norm = (x - mean) / range on inputs; y = y_norm * range + mean on outputs.
    let first = &mut layers[0];
    for r in 0..first.out_width() {
        let mut shift = 0.0;
        for j in 0..n_in {
            let w = first.weight.get(r, j) / ranges[j];
            first.weight.set(r, j, w);
            shift += w * means[j];
        }
        first.bias[r] -= shift;
    }
    let (out_mean, out_range) = (means[n_in], ranges[n_in]);
    let last = layers.last_mut().expect("at least one layer");
    for r in 0..last.out_width() {
        for j in 0..last.in_width() {
            let w = last.weight.get(r, j) * out_range;
            last.weight.set(r, j, w);
        }
        last.bias[r] = last.bias[r] * out_range + out_mean;
    }

    let count = layers.len();
    let mut out = Vec::with_capacity(2 * count);
    for (k, lin) in layers.into_iter().enumerate() {
        out.push(Layer::Linear(lin));
        if k + 1 < count {
            out.push(Layer::Relu);
        }
    }
    Network::new(n_in, out)
}

pub fn load_nnet(path: &Path) -> Result<Network> {
    network_from_nnet(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward_eval, toy_network};

    #[test]
    fn toy_round_trip() {
        let text = network_to_json(&toy_network());
        assert!(text.starts_with(r#"{"format":"plnn-v1","input_size":2,"layers":[{"linear":"#));
        let net = network_from_json(&text).unwrap();
        assert_eq!(net.widths(), vec![2, 2, 1]);
        assert_eq!(network_to_json(&net), text);
    }

    #[test]
    fn foreign_format_rejected() {
        let text = r#"{"format":"onnx","input_size":1,"layers":[]}"#;
        assert!(matches!(network_from_json(text), Err(Error::UnsupportedFormat(f)) if f == "onnx"));
        let truncated = &network_to_json(&toy_network())[..30];
        assert!(matches!(network_from_json(truncated), Err(Error::Parse(_))));
    }

    #[test]
    fn invalid_structure_rejected() {
        let text = r#"{"format":"plnn-v1","input_size":3,"layers":[{"linear":{"weight":[[1.0,2.0]],"bias":[0.0]}}]}"#;
        assert!(matches!(network_from_json(text), Err(Error::InvalidNetwork(_))));
    }

    #[test]
    fn property_files() {
        let text = r#"{"input_lb":[-2,-2],"input_ub":[2,2],"property":{"geq":{"c":[1],"b":-5}}}"#;
        let (p, d) = property_from_json(text).unwrap();
        assert_eq!(p, PropertyClause::geq(vec![1.0], -5.0));
        assert_eq!(d, BoxDomain::uniform(2, -2.0, 2.0));

        let nested = r#"{"input_lb":[0],"input_ub":[1],"property":{"any":[{"all":[{"geq":{"c":[1],"b":0}}]},{"geq":{"c":[-1],"b":0}}]}}"#;
        let (p, d) = property_from_json(nested).unwrap();
        assert_eq!(p.depth(), 2);
        let again = property_to_json(&p, &d);
        assert_eq!(property_from_json(&again).unwrap(), (p, d));

        let bad = r#"{"input_lb":[0],"input_ub":[-1],"property":{"geq":{"c":[1],"b":0}}}"#;
        assert!(property_from_json(bad).is_err());
    }

    #[test]
    fn nnet_import_folds_normalisation() {
        let text = "// toy\n1,2,1,2,\n2,1,\n0,\n-10,-10,\n10,10,\n1.0,2.0,0.5,\n2.0,4.0,3.0,\n3.0,-1.0,\n0.25,\n";
        let net = network_from_nnet(text).unwrap();
        let x = [2.0, 6.0];
        let norm = 3.0 * (x[0] - 1.0) / 2.0 - (x[1] - 2.0) / 4.0 + 0.25;
        let expected = norm * 3.0 + 0.5;
        assert!((forward_eval(&net, &x).unwrap()[0] - expected).abs() < 1e-12);
    }
}
