//! Method dispatch, benchmark runs and cactus aggregation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bab::{bab_verify, BabConfig, BabResult, BabStatus, Bounding, Branching};
use crate::canon::{canonicalize, validate_counterexample, PropertyClause, VerificationProblem};
use crate::error::{Error, Result};
use crate::io::{finite, load_network, load_property, ResultFile};
use crate::mip::{solve_mip, MipConfig, MipVariant};
use crate::model::{BoxDomain, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Babsb,
    BabInput,
    BabReluSplit,
    MipPlanetOpt,
    MipPlanetFeas,
    MipInterval,
    MipSym,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Babsb,
        Method::BabInput,
        Method::BabReluSplit,
        Method::MipPlanetOpt,
        Method::MipPlanetFeas,
        Method::MipInterval,
        Method::MipSym,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Babsb => "babsb",
            Method::BabInput => "bab-input",
            Method::BabReluSplit => "bab-relusplit",
            Method::MipPlanetOpt => "mip-planet-opt",
            Method::MipPlanetFeas => "mip-planet-feas",
            Method::MipInterval => "mip-interval",
            Method::MipSym => "mip-sym",
        }
    }

    pub fn is_bab(self) -> bool {
        matches!(self, Method::Babsb | Method::BabInput | Method::BabReluSplit)
    }

    pub fn branching(self) -> Option<Branching> {
        match self {
            Method::Babsb => Some(Branching::InputSmart),
            Method::BabInput => Some(Branching::InputLongestEdge),
            Method::BabReluSplit => Some(Branching::ReluSplit),
            _ => None,
        }
    }

    pub fn mip_variant(self) -> Option<MipVariant> {
        match self {
            Method::MipPlanetOpt => Some(MipVariant::PLANET_OPT),
            Method::MipPlanetFeas => Some(MipVariant::PLANET_FEAS),
            Method::MipInterval => Some(MipVariant::INTERVAL),
            Method::MipSym => Some(MipVariant::PLANET_SYM),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Unsupported(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Unsat,
    Sat,
    Timeout,
    Error,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Unsat => "UNSAT",
            Status::Sat => "SAT",
            Status::Timeout => "TIMEOUT",
            Status::Error => "ERROR",
        }
    }

    pub fn is_solved(self) -> bool {
        matches!(self, Status::Unsat | Status::Sat)
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Status::Unsat => 0,
            Status::Sat => 1,
            Status::Timeout => 2,
            Status::Error => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub timeout: Option<Duration>,
    pub epsilon: f64,
    pub seed: u64,
    pub workers: usize,
    pub sample_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bab = BabConfig::default();
        RunConfig { timeout: None, epsilon: bab.epsilon, seed: bab.seed, workers: 1, sample_count: bab.sample_count }
    }
}

impl RunConfig {
    pub fn bab_config(&self, method: Method) -> BabConfig {
        BabConfig {
            epsilon: self.epsilon,
            bounding: Bounding::PlanetTightened,
            branching: method.branching().unwrap_or(Branching::InputSmart),
            sample_count: self.sample_count,
            timeout: self.timeout,
            seed: self.seed,
            workers: self.workers.max(1),
            ..BabConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub problem: String,
    pub method: Method,
    pub status: Status,
    pub time_s: f64,
    pub nodes: usize,
    pub lb: f64,
    pub ub: f64,
    pub spurious_candidates: usize,
    pub margin: Option<f64>,
    pub counterexample: Option<Vec<f64>>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn result_file(&self) -> ResultFile {
        ResultFile {
            status: self.status.as_str().to_string(),
            margin: self.margin.and_then(finite),
            counterexample: self.counterexample.clone(),
            nodes: self.nodes,
            time_s: self.time_s,
            lb: finite(self.lb),
            ub: finite(self.ub),
            spurious_candidates: self.spurious_candidates,
        }
    }

    fn from_result(problem: &VerificationProblem, name: &str, method: Method, r: BabResult) -> Self {
        let mut rec = RunRecord {
            problem: name.to_string(),
            method,
            status: Status::Timeout,
            time_s: r.wall_time.as_secs_f64(),
            nodes: r.nodes_explored,
            lb: r.lower_bound,
            ub: r.upper_bound,
            spurious_candidates: r.spurious_candidates,
            margin: None,
            counterexample: None,
            error: None,
        };
        match r.status {
            BabStatus::Unsat { margin } => {
                rec.status = Status::Unsat;
                rec.margin = Some(margin);
            }
            BabStatus::Sat { counterexample } => {
                if validate_counterexample(problem, &counterexample, 1e-6) {
                    rec.status = Status::Sat;
                    rec.counterexample = Some(counterexample);
                } else {
                    rec.status = Status::Error;
                    rec.error = Some("solver returned an invalid counterexample".into());
                }
            }
            BabStatus::Timeout { .. } | BabStatus::Converged { .. } => {}
        }
        rec
    }

    fn failed(name: &str, method: Method, err: &Error, elapsed: Duration) -> Self {
        RunRecord {
            problem: name.to_string(),
            method,
            status: Status::Error,
            time_s: elapsed.as_secs_f64(),
            nodes: 0,
            lb: f64::NEG_INFINITY,
            ub: f64::INFINITY,
            spurious_candidates: 0,
            margin: None,
            counterexample: None,
            error: Some(err.to_string()),
        }
    }
}

/// Solves a canonical problem with `method`; failures are reported in-band.
pub fn run_problem(problem: &VerificationProblem, name: &str, method: Method, config: &RunConfig) -> RunRecord {
    let start = Instant::now();
    let result = if let Some(variant) = method.mip_variant() {
        solve_mip(problem, variant, &MipConfig { timeout: config.timeout, ..MipConfig::default() })
    } else {
        bab_verify(problem, &config.bab_config(method))
    };
    match result {
        Ok(r) => RunRecord::from_result(problem, name, method, r),
        Err(e) => RunRecord::failed(name, method, &e, start.elapsed()),
    }
}

/// Canonicalises and solves one (network, property) pair.
pub fn run_verify(
    net: &Network,
    prop: &PropertyClause,
    domain: &BoxDomain,
    name: &str,
    method: Method,
    config: &RunConfig,
) -> RunRecord {
    let start = Instant::now();
    match canonicalize(net, prop, domain) {
        Ok(problem) => run_problem(&problem, name, method, config),
        Err(e) => RunRecord::failed(name, method, &e, start.elapsed()),
    }
}

pub fn write_result(path: &Path, record: &RunRecord) -> Result<()> {
    Ok(fs::write(path, serde_json::to_string_pretty(&record.result_file())? + "\n")?)
}

/// Network and property paths of every `NAME.net.json` / `NAME.prop.json`
/// pair in `dir`, sorted by name.
pub fn bench_problems(dir: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(".net.json")) else {
            continue;
        };
        let prop = dir.join(format!("{name}.prop.json"));
        if prop.is_file() {
            out.push((name.to_string(), path.clone(), prop));
        }
    }
    out.sort();
    Ok(out)
}

/// One CSV row of a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRecord {
    pub problem: String,
    pub method: String,
    pub status: Status,
    pub time_s: f64,
    pub nodes: usize,
    pub lb: Option<f64>,
    pub ub: Option<f64>,
    pub spurious_candidates: usize,
    pub result_file: String,
}

/// Runs every method on every problem of `dir`, writing one result file per
/// run into `out_dir` and returning the CSV rows.
pub fn run_bench(dir: &Path, methods: &[Method], config: &RunConfig, out_dir: &Path) -> Result<Vec<CsvRecord>> {
    let problems = bench_problems(dir)?;
    fs::create_dir_all(out_dir)?;
    let mut rows = Vec::with_capacity(problems.len() * methods.len());
    for (name, net_path, prop_path) in &problems {
        let loaded = load_network(net_path)
            .and_then(|net| load_property(prop_path, Some(net.output_width())).map(|(p, d)| (net, p, d)));
        for &method in methods {
            let record = match &loaded {
                Ok((net, prop, domain)) => run_verify(net, prop, domain, name, method, config),
                Err(e) => RunRecord::failed(name, method, e, Duration::ZERO),
            };
            let file = format!("{name}.{}.result.json", method.name());
            write_result(&out_dir.join(&file), &record)?;
            rows.push(CsvRecord {
                problem: name.clone(),
                method: method.name().to_string(),
                status: record.status,
                time_s: record.time_s,
                nodes: record.nodes,
                lb: finite(record.lb),
                ub: finite(record.ub),
                spurious_candidates: record.spurious_candidates,
                result_file: file,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv<W: std::io::Write>(writer: W, rows: &[CsvRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<CsvRecord>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<std::result::Result<Vec<CsvRecord>, _>>()
        .map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CactusRow {
    pub method: String,
    pub budget_s: f64,
    pub fraction_solved: f64,
}

/// Per method, the fraction of its problems solved within each time budget.
/// Budgets are the sorted union of all recorded times.
pub fn cactus(rows: &[CsvRecord]) -> Vec<CactusRow> {
    let mut budgets: Vec<f64> = rows.iter().map(|r| r.time_s).collect();
    budgets.sort_by(f64::total_cmp);
    budgets.dedup();
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut out = Vec::with_capacity(methods.len() * budgets.len());
    for m in methods {
        let mine: Vec<&CsvRecord> = rows.iter().filter(|r| r.method == m).collect();
        let mut solved: Vec<f64> = mine.iter().filter(|r| r.status.is_solved()).map(|r| r.time_s).collect();
        solved.sort_by(f64::total_cmp);
        for &b in &budgets {
            let count = solved.partition_point(|&t| t <= b);
            out.push(CactusRow {
                method: m.to_string(),
                budget_s: b,
                fraction_solved: count as f64 / mine.len() as f64,
            });
        }
    }
    out
}

/// Re-checks a SAT row from the files on disk.
pub fn revalidate_sat(net_path: &Path, prop_path: &Path, result_path: &Path) -> Result<bool> {
    let net = load_network(net_path)?;
    let (prop, domain) = load_property(prop_path, Some(net.output_width()))?;
    let result: ResultFile = serde_json::from_str(&fs::read_to_string(result_path)?)?;
    let Some(x) = result.counterexample else {
        return Ok(false);
    };
    Ok(validate_counterexample(&canonicalize(&net, &prop, &domain)?, &x, 1e-6))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::toy_network;

    fn row(method: &str, status: Status, time_s: f64) -> CsvRecord {
        CsvRecord {
            problem: "p".into(),
            method: method.into(),
            status,
            time_s,
            nodes: 1,
            lb: None,
            ub: None,
            spurious_candidates: 0,
            result_file: String::new(),
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("bab".parse::<Method>().is_err());
    }

    #[test]
    fn toy_runs() {
        let domain = BoxDomain::uniform(2, -2.0, 2.0);
        for m in Method::ALL {
            let r = run_verify(&toy_network(), &PropertyClause::geq(vec![1.0], -5.0), &domain, "toy", m, &RunConfig::default());
            assert_eq!(r.status, Status::Unsat, "{m}");
            assert!((r.margin.unwrap() - 1.0).abs() < 1e-3);
            let r = run_verify(&toy_network(), &PropertyClause::geq(vec![1.0], -3.0), &domain, "toy", m, &RunConfig::default());
            assert_eq!(r.status, Status::Sat, "{m}");
        }
    }

    #[test]
    fn zero_timeout_is_timeout() {
        let cfg = RunConfig { timeout: Some(Duration::ZERO), ..RunConfig::default() };
        let domain = BoxDomain::uniform(2, -2.0, 2.0);
        for m in [Method::Babsb, Method::MipPlanetOpt] {
            let r = run_verify(&toy_network(), &PropertyClause::geq(vec![1.0], -5.0), &domain, "toy", m, &cfg);
            assert_eq!(r.status, Status::Timeout);
            assert_eq!(r.status.exit_code(), 2);
        }
    }

    #[test]
    fn cactus_edge_cases() {
        let timeouts = vec![row("a", Status::Timeout, 1.0), row("a", Status::Timeout, 2.0)];
        assert!(cactus(&timeouts).iter().all(|c| c.fraction_solved == 0.0));
        let instant = vec![row("a", Status::Unsat, 0.0), row("a", Status::Sat, 0.0)];
        let c = cactus(&instant);
        assert_eq!(c[0].fraction_solved, 1.0);
        let mixed = vec![row("a", Status::Unsat, 0.5), row("a", Status::Timeout, 2.0), row("b", Status::Sat, 1.0)];
        let c = cactus(&mixed);
        let a: Vec<f64> = c.iter().filter(|r| r.method == "a").map(|r| r.fraction_solved).collect();
        assert_eq!(a, vec![0.5, 0.5, 0.5]);
        let b: Vec<f64> = c.iter().filter(|r| r.method == "b").map(|r| r.fraction_solved).collect();
        assert_eq!(b, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row("a", Status::Unsat, 0.5), CsvRecord { lb: Some(1.5), ..row("b", Status::Sat, 1.0) }];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("problem,method,status,time_s,nodes,lb,ub,spurious_candidates,result_file\n"));
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
    }
}
