//! File formats.
//!
//! Traces are CSV with header `gop,view,pos,type,bytes`, one row per frame in
//! canonical order (GOP, then view, then display index `pos` within the
//! view). Structures, models, view-switching models and simulation configs
//! are JSON objects carrying `"format_version": 1`. Result tables (schedule,
//! fit report, acf, Q-Q, loss rates) are plain CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::FitReport;
use crate::model::{validate_params, FrameType, GopStructure, GopVector, PHmmParams, Trace};
use crate::netsim::{SimConfig, SimReport};
use crate::viewswitch::{ViewSchedule, ViewSegment, VsmParams};

pub const FORMAT_VERSION: u32 = 1;

const TRACE_HEADER: [&str; 5] = ["gop", "view", "pos", "type", "bytes"];

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn trace_to_csv(trace: &Trace) -> String {
    let s = trace.structure();
    let mut out = String::from("gop,view,pos,type,bytes\n");
    for (n, g) in trace.gops().iter().enumerate() {
        for (p, &bytes) in g.0.iter().enumerate() {
            let (v, t) = s.view_and_index(p);
            writeln!(out, "{n},{v},{t},{},{bytes}", s.frame_labels()[p]).unwrap();
        }
    }
    out
}

pub fn trace_from_csv(text: &str, structure: &GopStructure, path: &Path) -> Result<Trace> {
    let parse = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse(1, e.to_string()))?.clone();
    if header.is_empty() {
        return Err(Error::NoGops { path: path.to_path_buf() });
    }
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(parse(1, format!("expected header {}", TRACE_HEADER.join(","))));
    }
    let nf = structure.frames_per_gop();
    let mut gops = Vec::new();
    let mut cur = Vec::with_capacity(nf);
    let mut last_line = 1;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(last_line + 1, |p| p.line());
            parse(line, e.to_string())
        })?;
        let line = rec.position().map_or(last_line + 1, |p| p.line());
        last_line = line;
        let field = |i: usize| -> Result<u64> {
            rec[i]
                .parse::<u64>()
                .map_err(|_| parse(line, format!("{} {:?} is not a non-negative integer", TRACE_HEADER[i], &rec[i])))
        };
        let (gop, view, pos, bytes) = (field(0)?, field(1)?, field(2)?, field(4)?);
        let ty: FrameType = rec[3].parse().map_err(|e: Error| parse(line, e.to_string()))?;
        let p = cur.len();
        let (ev, et) = structure.view_and_index(p);
        let expected = (gops.len() as u64, ev as u64, et as u64);
        if (gop, view, pos) != expected {
            return Err(parse(
                line,
                format!(
                    "expected gop {} view {} pos {}, got gop {gop} view {view} pos {pos}",
                    expected.0, expected.1, expected.2
                ),
            ));
        }
        if ty != structure.frame_labels()[p] {
            return Err(parse(line, format!("frame type {ty} does not match structure ({})", structure.frame_labels()[p])));
        }
        cur.push(bytes);
        if cur.len() == nf {
            gops.push(GopVector(std::mem::replace(&mut cur, Vec::with_capacity(nf))));
        }
    }
    if !cur.is_empty() {
        return Err(parse(last_line, format!("trailing partial GOP of {} of {nf} frames", cur.len())));
    }
    if gops.is_empty() {
        return Err(Error::NoGops { path: path.to_path_buf() });
    }
    Trace::new(structure.clone(), gops)
}

pub fn read_trace(path: impl AsRef<Path>, structure: &GopStructure) -> Result<Trace> {
    let path = path.as_ref();
    trace_from_csv(&read_file(path)?, structure, path)
}

pub fn write_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &trace_to_csv(trace))
}

fn to_json<T: Serialize>(value: &T, path: &Path) -> Result<String> {
    let json_err = |source| Error::Json {
        path: path.to_path_buf(),
        source,
    };
    let mut v = serde_json::to_value(value).map_err(json_err)?;
    let obj = v.as_object_mut().expect("documents are JSON objects");
    let mut out = serde_json::Map::new();
    out.insert("format_version".into(), FORMAT_VERSION.into());
    out.append(obj);
    let mut s = serde_json::to_string_pretty(&out).map_err(json_err)?;
    s.push('\n');
    Ok(s)
}

fn from_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let json_err = |source| Error::Json {
        path: path.to_path_buf(),
        source,
    };
    let mut v: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
    let Some(obj) = v.as_object_mut() else {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "expected a JSON object".into(),
        });
    };
    let found = match obj.remove("format_version") {
        Some(serde_json::Value::Number(n)) => n.as_u64().unwrap_or(u64::MAX),
        Some(_) | None => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: "missing integer format_version".into(),
            })
        }
    };
    if found != FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: found.min(u32::MAX as u64) as u32,
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(v).map_err(json_err)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_file(path, &to_json(value, path)?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_json(&read_file(path)?, path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StructureDoc {
    num_views: usize,
    gop_len: usize,
    fps: f64,
    frame_labels: Vec<FrameType>,
    bin_counts: Vec<usize>,
    view_deps: Vec<(usize, usize)>,
}

impl From<&GopStructure> for StructureDoc {
    fn from(s: &GopStructure) -> Self {
        StructureDoc {
            num_views: s.num_views(),
            gop_len: s.gop_len(),
            fps: s.fps(),
            frame_labels: s.frame_labels().to_vec(),
            bin_counts: s.bin_counts().to_vec(),
            view_deps: s.view_deps().to_vec(),
        }
    }
}

impl StructureDoc {
    fn build(self) -> Result<GopStructure> {
        GopStructure::new(self.num_views, self.gop_len, self.fps, self.frame_labels, self.bin_counts, self.view_deps)
    }
}

pub fn structure_to_json(s: &GopStructure) -> String {
    to_json(&StructureDoc::from(s), Path::new("<memory>")).expect("structure serializes")
}

pub fn read_structure(path: impl AsRef<Path>) -> Result<GopStructure> {
    read_json::<StructureDoc>(path.as_ref())?.build()
}

pub fn write_structure(s: &GopStructure, path: impl AsRef<Path>) -> Result<()> {
    write_json(&StructureDoc::from(s), path.as_ref())
}

/// A fitted model together with the GOP structure it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub structure: GopStructure,
    pub params: PHmmParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    structure: StructureDoc,
    params: PHmmParams,
}

pub fn read_model(path: impl AsRef<Path>) -> Result<StoredModel> {
    let doc: ModelDoc = read_json(path.as_ref())?;
    let structure = doc.structure.build()?;
    validate_params(&doc.params).map_err(Error::InvalidParams)?;
    doc.params.grid.check_structure(&structure)?;
    Ok(StoredModel {
        structure,
        params: doc.params,
    })
}

pub fn write_model(model: &StoredModel, path: impl AsRef<Path>) -> Result<()> {
    let doc = ModelDoc {
        structure: StructureDoc::from(&model.structure),
        params: model.params.clone(),
    };
    write_json(&doc, path.as_ref())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VsmDoc {
    transition: Vec<Vec<f64>>,
    mean_s: Vec<f64>,
    std_s: Vec<f64>,
}

pub fn read_vsm(path: impl AsRef<Path>) -> Result<VsmParams> {
    let d: VsmDoc = read_json(path.as_ref())?;
    VsmParams::new(d.transition, d.mean_s, d.std_s)
}

pub fn write_vsm(vsm: &VsmParams, path: impl AsRef<Path>) -> Result<()> {
    let doc = VsmDoc {
        transition: vsm.transition().to_vec(),
        mean_s: vsm.mean_s().to_vec(),
        std_s: vsm.std_s().to_vec(),
    };
    write_json(&doc, path.as_ref())
}

pub fn read_sim_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    let c: SimConfig = read_json(path.as_ref())?;
    c.validate()?;
    Ok(c)
}

pub fn write_sim_config(config: &SimConfig, path: impl AsRef<Path>) -> Result<()> {
    write_json(config, path.as_ref())
}

pub fn schedule_to_csv(s: &ViewSchedule) -> String {
    let mut out = String::from("view,start_s,end_s\n");
    for seg in s.segments() {
        writeln!(out, "{},{},{}", seg.view, seg.start, seg.end).unwrap();
    }
    out
}

pub fn write_schedule(s: &ViewSchedule, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &schedule_to_csv(s))
}

pub fn read_schedule(path: impl AsRef<Path>) -> Result<ViewSchedule> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let parse = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse(1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != ["view", "start_s", "end_s"] {
        return Err(parse(1, "expected header view,start_s,end_s".into()));
    }
    let mut segs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| parse(line, format!("invalid {what}"));
        segs.push(ViewSegment {
            view: rec[0].parse().map_err(|_| bad("view"))?,
            start: rec[1].parse().map_err(|_| bad("start_s"))?,
            end: rec[2].parse().map_err(|_| bad("end_s"))?,
        });
    }
    ViewSchedule::new(segs)
}

pub fn fit_report_to_csv(r: &FitReport) -> String {
    let mut out = String::from("iteration,log_likelihood\n");
    for (i, ll) in r.log_likelihoods.iter().enumerate() {
        writeln!(out, "{i},{ll}").unwrap();
    }
    out
}

pub fn write_fit_report(r: &FitReport, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &fit_report_to_csv(r))
}

pub fn acf_to_csv(rho: &[f64]) -> String {
    let mut out = String::from("lag,acf\n");
    for (h, r) in rho.iter().enumerate() {
        writeln!(out, "{h},{r}").unwrap();
    }
    out
}

pub fn qq_to_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("quantile_a,quantile_b\n");
    for (a, b) in points {
        writeln!(out, "{a},{b}").unwrap();
    }
    out
}

pub fn write_text(text: &str, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), text)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "inf".to_string(), |v| v.to_string())
}

/// One row per (buffer size, run), then `mean` and `std` rows per buffer
/// size carrying the loss rates only.
pub fn sim_sweep_to_csv(rows: &[(Option<f64>, SimReport)]) -> String {
    let mut out = String::from(
        "buffer_bits,run,seed,channel_rate_bps,sender_buffer_bits,offered,sender_dropped,transmitted,\
         channel_lost,delivered,late,overflow,played,sender_loss,playout_loss,overall_loss\n",
    );
    for (b, rep) in rows {
        let b = opt(*b);
        for (m, r) in rep.runs.iter().enumerate() {
            writeln!(
                out,
                "{b},{m},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.seed,
                r.channel_rate_bps,
                opt(r.sender_buffer_bits),
                r.offered,
                r.sender_dropped,
                r.transmitted,
                r.channel_lost,
                r.delivered,
                r.late,
                r.overflow,
                r.played,
                r.sender_loss_rate(),
                r.playout_loss_rate(),
                r.overall_loss_rate()
            )
            .unwrap();
        }
        let (s, p, o) = (rep.sender_loss, rep.playout_loss, rep.overall_loss);
        writeln!(out, "{b},mean,,,,,,,,,,,,{},{},{}", s.mean, p.mean, o.mean).unwrap();
        writeln!(out, "{b},std,,,,,,,,,,,,{},{},{}", s.std, p.std, o.std).unwrap();
    }
    out
}

/// Path next to `prefix` with the given suffix (`out/run` + `_acf_a.csv`).
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BinRange, QuantGrid};

    fn small() -> GopStructure {
        GopStructure::new(2, 2, 25.0, vec![FrameType::I, FrameType::B, FrameType::P, FrameType::B], vec![3; 4], vec![(1, 0)])
            .unwrap()
    }

    fn p() -> &'static Path {
        Path::new("t.csv")
    }

    #[test]
    fn empty_file_has_no_gops() {
        assert!(matches!(trace_from_csv("", &small(), p()), Err(Error::NoGops { .. })));
        assert!(matches!(
            trace_from_csv("gop,view,pos,type,bytes\n", &small(), p()),
            Err(Error::NoGops { .. })
        ));
    }

    #[test]
    fn one_gop() {
        let text = "gop,view,pos,type,bytes\n0,0,0,I,100\n0,0,1,B,20\n0,1,0,P,50\n0,1,1,B,10\n";
        let t = trace_from_csv(text, &small(), p()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.gops()[0].0, vec![100, 20, 50, 10]);
        assert_eq!(trace_to_csv(&t), text);
    }

    #[test]
    fn malformed_rows_report_lines() {
        let cases = [
            ("gop,view,pos,type,bytes\n0,0,0,I,100\n0,0,1,B,x\n", 3),
            ("gop,view,pos,type,bytes\n0,0,0,I,100\n0,0,1,P,3\n", 3),
            ("gop,view,pos,type,bytes\n0,0,0,I,100\n0,1,0,P,3\n", 3),
            ("gop,view,pos,type,bytes\n0,0,0,I,100\n0,0,1,B,-4\n", 3),
            ("gop,view,pos,type,bytes\n0,0,0,I,1\n0,0,1,B,2\n0,1,0,P,3\n", 4),
            ("gop,view,pos,type\n0,0,0,I\n", 1),
        ];
        for (text, want) in cases {
            match trace_from_csv(text, &small(), p()) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn json_envelope() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        write_structure(&small(), &path).unwrap();
        assert_eq!(read_structure(&path).unwrap(), small());
        let text = fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 2");
        fs::write(&path, text).unwrap();
        assert!(matches!(read_structure(&path), Err(Error::VersionMismatch { found: 2, .. })));
    }

    #[test]
    fn model_validation_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let grid = QuantGrid::new(vec![BinRange::new(0.0, 30.0, 3).unwrap(); 4]).unwrap();
        let mut params = PHmmParams::uniform(2, grid, 1.25);
        params.emissions[1][2] = vec![0.1, 0.2, 0.7];
        let m = StoredModel { structure: small(), params };
        write_model(&m, &path).unwrap();
        assert_eq!(read_model(&path).unwrap(), m);
        let mut bad = m.clone();
        bad.params.trans[0] = vec![0.5, 0.5];
        write_model(&bad, &path).unwrap();
        assert!(matches!(read_model(&path), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn schedule_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let s = crate::viewswitch::generate_schedule(&VsmParams::four_views(), 1234.5, 3).unwrap();
        write_schedule(&s, &path).unwrap();
        assert_eq!(read_schedule(&path).unwrap(), s);
    }

    #[test]
    fn sim_config_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let c = SimConfig { receiver_buffer_bits: Some(1.5e6), seed: 42, ..Default::default() };
        write_sim_config(&c, &path).unwrap();
        assert_eq!(read_sim_config(&path).unwrap(), c);
        fs::write(&path, "{\"format_version\": 1}").unwrap();
        assert_eq!(read_sim_config(&path).unwrap(), SimConfig::default());
    }
}
