//! File formats. Floats are written in shortest round-trip form, so a
//! file read back reproduces the in-memory values exactly.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tgnn_core::darcy::SimulationResult;
use tgnn_core::train::{HeadMap, LabeledSet, LossRecord, PointBlock, Realization};
use tgnn_core::uq::{EnsembleStats, MetricRow, MetricTable, PdfEstimate};
use tgnn_core::{KleModel, NetworkSpec, Parameters};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    Ok(w)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))
}

fn fields(values: &[f64]) -> impl Iterator<Item = String> + '_ {
    values.iter().map(|v| v.to_string())
}

fn parse(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().with_context(|| format!("bad number `{s}`"))
}

fn f64_block(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64_block(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf).context("truncated binary block")?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// First line of the heads file; the body is `n_t + 1` row-major
/// snapshots of little-endian f64, starting with the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadsHeader {
    pub format: String,
    pub n_t: usize,
    pub n_y: usize,
    pub n_x: usize,
    pub dt: f64,
    pub dx: f64,
    pub dy: f64,
    pub origin: (f64, f64),
}

pub const HEADS_FORMAT: &str = "tgnn-heads-1";

pub fn write_heads(path: &Path, sim: &SimulationResult) -> Result<()> {
    let g = &sim.grid;
    let header = HeadsHeader {
        format: HEADS_FORMAT.into(),
        n_t: sim.time.steps,
        n_y: g.ny,
        n_x: g.nx,
        dt: sim.time.dt,
        dx: g.dx,
        dy: g.dy,
        origin: (g.x0, g.y0),
    };
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    f64_block(&mut w, &sim.initial)?;
    f64_block(&mut w, &sim.heads)?;
    w.flush()?;
    Ok(())
}

pub fn read_heads(path: &Path) -> Result<(HeadsHeader, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: HeadsHeader = serde_json::from_str(&line)?;
    if header.format != HEADS_FORMAT {
        bail!("{} is not a heads file", path.display());
    }
    let values = read_f64_block(&mut r, (header.n_t + 1) * header.n_x * header.n_y)?;
    Ok((header, values))
}

/// Labeled rows as `realization,t,x,y,h`; the random inputs of each
/// realization go to a JSON sidecar.
pub fn write_labels(dir: &Path, set: &LabeledSet) -> Result<()> {
    let mut w = csv_writer(&dir.join("labels.csv"), &["realization", "t", "x", "y", "h"])?;
    let mut i = 0;
    for (r, real) in set.realizations.iter().enumerate() {
        for _ in 0..real.count {
            let row = set.points.row(i);
            let h = set.points.aux[i][0];
            w.write_record(std::iter::once(r.to_string()).chain(fields(&[row[0], row[1], row[2], h])))?;
            i += 1;
        }
    }
    w.flush()?;
    write_json(&dir.join("realizations.json"), &set.realizations)
}

pub fn read_labels(dir: &Path) -> Result<LabeledSet> {
    let realizations: Vec<Realization> = read_json(&dir.join("realizations.json"))?;
    let width = 3 + realizations.first().map_or(0, |r| r.xi.len() + r.extras.len());
    let mut points = PointBlock::new(width);
    let mut row = Vec::with_capacity(width);
    for rec in csv_reader(&dir.join("labels.csv"))?.records() {
        let rec = rec?;
        let r: usize = rec[0].parse()?;
        let real = realizations
            .get(r)
            .with_context(|| format!("labels refer to missing realization {r}"))?;
        row.clear();
        for k in 1..4 {
            row.push(parse(&rec[k])?);
        }
        row.extend_from_slice(&real.xi);
        row.extend_from_slice(&real.extras);
        points.push(&row, [parse(&rec[4])?, 0.0, 0.0]);
    }
    let total: usize = realizations.iter().map(|r| r.count).sum();
    if total != points.len() {
        bail!("labels.csv holds {} rows, the sidecar expects {total}", points.len());
    }
    Ok(LabeledSet { points, realizations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    config_hash: String,
    spec: NetworkSpec,
    head: HeadMap,
    count: usize,
}

pub const CHECKPOINT_FORMAT: &str = "tgnn-checkpoint-1";

/// Trained network with everything needed to evaluate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub spec: NetworkSpec,
    pub head: HeadMap,
    pub params: Parameters,
}

/// A JSON header line followed by the flat parameters as little-endian f64.
pub fn write_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        config_hash: c.config_hash.clone(),
        spec: c.spec.clone(),
        head: c.head,
        count: c.params.len(),
    };
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    f64_block(&mut w, &c.params.values)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let h: CheckpointHeader = serde_json::from_str(&line).with_context(|| format!("{} header", path.display()))?;
    if h.format != CHECKPOINT_FORMAT {
        bail!("{} is not a checkpoint", path.display());
    }
    let values = read_f64_block(&mut r, h.count)?;
    let params = Parameters::from_values(&h.spec, values)?;
    Ok(Checkpoint {
        config_hash: h.config_hash,
        spec: h.spec,
        head: h.head,
        params,
    })
}

/// Full model as JSON plus the eigenvalue and energy table as CSV.
pub fn write_kle(dir: &Path, stem: &str, model: &KleModel) -> Result<()> {
    write_json(&dir.join(format!("{stem}.json")), model)?;
    let mut w = csv_writer(&dir.join(format!("{stem}_energy.csv")), &["n", "ix", "iy", "eigenvalue", "energy"])?;
    w.write_record(["0", "", "", "", "0"])?;
    for (i, (m, e)) in model.modes.iter().zip(model.energy_curve()).enumerate() {
        w.write_record([
            (i + 1).to_string(),
            m.ix.to_string(),
            m.iy.to_string(),
            m.eigenvalue.to_string(),
            e.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_kle(dir: &Path, stem: &str) -> Result<KleModel> {
    read_json(&dir.join(format!("{stem}.json")))
}

/// Monte Carlo inputs, one row per realization: `xi_1..xi_n` then the
/// composite inputs `b1,b2,variance` when present.
pub fn write_inputs(path: &Path, inputs: &[tgnn_core::uq::McInput]) -> Result<()> {
    let n = inputs.first().map_or(0, |i| i.xi.len());
    let extras = inputs.first().map_or(0, |i| i.extras.len());
    let mut header: Vec<String> = (1..=n).map(|k| format!("xi_{k}")).collect();
    if extras == 3 {
        header.extend(["b1", "b2", "variance"].map(String::from));
    }
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(&header)?;
    for i in inputs {
        w.write_record(fields(&i.xi).chain(fields(&i.extras)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_history(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut w = csv_writer(path, &["epoch", "total", "data", "pde", "dirichlet", "neumann", "initial"])?;
    for r in history {
        let c = r.components.to_array();
        w.write_record(std::iter::once(r.epoch.to_string()).chain(fields(&[r.total])).chain(fields(&c)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<(usize, [f64; 6])>> {
    let mut out = Vec::new();
    for rec in csv_reader(path)?.records() {
        let rec = rec?;
        let mut v = [0.0; 6];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = parse(&rec[k + 1])?;
        }
        out.push((rec[0].parse()?, v));
    }
    Ok(out)
}

pub const METRIC_HEADER: [&str; 6] = ["step", "t", "mean_rel_l2", "mean_r2", "var_rel_l2", "var_r2"];

pub fn write_metrics(path: &Path, table: &MetricTable) -> Result<()> {
    let mut w = csv_writer(path, &METRIC_HEADER)?;
    for r in &table.rows {
        w.write_record(
            std::iter::once(r.step.to_string()).chain(fields(&[r.time, r.mean_rel_l2, r.mean_r2, r.var_rel_l2, r.var_r2])),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<MetricTable> {
    let mut rows = Vec::new();
    for rec in csv_reader(path)?.records() {
        let rec = rec?;
        rows.push(MetricRow {
            step: rec[0].parse()?,
            time: parse(&rec[1])?,
            mean_rel_l2: parse(&rec[2])?,
            mean_r2: parse(&rec[3])?,
            var_rel_l2: parse(&rec[4])?,
            var_r2: parse(&rec[5])?,
        });
    }
    Ok(MetricTable { rows })
}

/// One CSV per evaluated step with `row,col,x,y,mean,variance`, plus the
/// whole ensemble as JSON for reloading.
pub fn write_stats(dir: &Path, stats: &EnsembleStats) -> Result<()> {
    let g = &stats.grid;
    for (k, &step) in stats.steps.iter().enumerate() {
        let mut w = csv_writer(&dir.join(format!("step_{step:03}.csv")), &["row", "col", "x", "y", "mean", "variance"])?;
        let (m, v) = (stats.mean_at(k), stats.variance_at(k));
        for r in 0..g.ny {
            for c in 0..g.nx {
                let i = g.index(r, c);
                w.write_record([
                    r.to_string(),
                    c.to_string(),
                    g.center_x(c).to_string(),
                    g.center_y(r).to_string(),
                    m[i].to_string(),
                    v[i].to_string(),
                ])?;
            }
        }
        w.flush()?;
    }
    write_json(&dir.join("stats.json"), stats)
}

pub fn read_stats(dir: &Path) -> Result<EnsembleStats> {
    read_json(&dir.join("stats.json"))
}

/// Histogram as `lo,hi,count`, density as `h,density`, raw samples as `h`.
pub fn write_pdf(dir: &Path, stem: &str, pdf: &PdfEstimate) -> Result<()> {
    let hist = &pdf.histogram;
    let mut w = csv_writer(&dir.join(format!("{stem}_hist.csv")), &["lo", "hi", "count"])?;
    for (e, c) in hist.edges.windows(2).zip(&hist.counts) {
        w.write_record([e[0].to_string(), e[1].to_string(), c.to_string()])?;
    }
    w.flush()?;
    let mut w = csv_writer(&dir.join(format!("{stem}_density.csv")), &["h", "density"])?;
    if let Some((x, y)) = &pdf.density {
        for (a, b) in x.iter().zip(y) {
            w.write_record(fields(&[*a, *b]))?;
        }
    }
    w.flush()?;
    let mut w = csv_writer(&dir.join(format!("{stem}_samples.csv")), &["h"])?;
    for s in &pdf.samples {
        w.write_record([s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `(x, y)` pairs from two numeric columns of a CSV file.
pub fn read_columns(path: &Path, a: &str, b: &str) -> Result<Vec<(f64, f64)>> {
    let mut r = csv_reader(path)?;
    let head = r.headers()?.clone();
    let find = |name: &str| {
        head.iter()
            .position(|h| h == name)
            .with_context(|| format!("{} has no column {name}", path.display()))
    };
    let (ia, ib) = (find(a)?, find(b)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push((parse(&rec[ia])?, parse(&rec[ib])?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tgnn_core::darcy::simulate;
    use tgnn_core::mlp::{init_parameters, Affine};
    use tgnn_core::train::build_training_set;
    use tgnn_core::{BoundarySpec, CovarianceSpec, GridSpec, TimeSpec, Truncation};

    fn model() -> KleModel {
        let spec = CovarianceSpec {
            variance: 1.0,
            corr_x: 408.0,
            corr_y: 408.0,
            lx: 1020.0,
            ly: 1020.0,
            x0: 0.0,
            y0: 0.0,
            mean_logk: 0.0,
        };
        KleModel::build(spec, Truncation::Modes(4)).unwrap()
    }

    fn boundary() -> BoundarySpec {
        BoundarySpec {
            h_left: 202.0,
            h_right: 200.0,
            flux: 0.0,
            h_init: 200.0,
            specific_storage: 1e-4,
        }
    }

    #[test]
    fn heads_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::covering(5, 4, 1020.0, 1020.0, 0.0, 0.0).unwrap();
        let t = TimeSpec { dt: 0.5, steps: 3 };
        let k = model().field_on_grid(&[0.3, -1.0, 0.2, 0.9], &g).unwrap();
        let sim = simulate(&k, &g, &t, &boundary()).unwrap();
        let p = dir.path().join("heads.bin");
        write_heads(&p, &sim).unwrap();
        let (h, v) = read_heads(&p).unwrap();
        assert_eq!((h.n_t, h.n_y, h.n_x), (3, 4, 5));
        assert_eq!(&v[..20], &sim.initial[..]);
        assert_eq!(&v[20..], &sim.heads[..]);
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::covering(6, 6, 1020.0, 1020.0, 0.0, 0.0).unwrap();
        let t = TimeSpec { dt: 0.5, steps: 4 };
        let set = build_training_set(&model(), &g, &t, &boundary(), None, 3, 17, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        write_labels(dir.path(), &set).unwrap();
        assert_eq!(read_labels(dir.path()).unwrap(), set);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let coords = [Affine::unit(0.0, 10.0), Affine::unit(0.0, 1020.0), Affine::unit(0.0, 1020.0)];
        let spec = NetworkSpec::new(4, vec![7, 5], coords, Vec::new());
        let params = init_parameters(&spec, &mut ChaCha8Rng::seed_from_u64(9));
        let c = Checkpoint {
            config_hash: "abc".into(),
            spec,
            head: HeadMap::Soft { offset: 200.0 },
            params,
        };
        let p = dir.path().join("net.ckpt");
        write_checkpoint(&p, &c).unwrap();
        assert_eq!(read_checkpoint(&p).unwrap(), c);
    }

    #[test]
    fn metrics_round_trip_keeps_nan() {
        let dir = tempfile::tempdir().unwrap();
        let table = MetricTable {
            rows: vec![MetricRow {
                step: 3,
                time: 0.6000000000000001,
                mean_rel_l2: 1e-5,
                mean_r2: 0.1 + 0.2,
                var_rel_l2: f64::NAN,
                var_r2: -6.0,
            }],
        };
        let p = dir.path().join("m.csv");
        write_metrics(&p, &table).unwrap();
        let back = read_metrics(&p).unwrap();
        let (a, b) = (back.rows[0], table.rows[0]);
        assert_eq!((a.step, a.time, a.mean_r2, a.var_r2), (b.step, b.time, b.mean_r2, b.var_r2));
        assert!(a.var_rel_l2.is_nan());
    }

    #[test]
    fn kle_table_starts_at_zero_energy() {
        let dir = tempfile::tempdir().unwrap();
        let m = model();
        write_kle(dir.path(), "kle", &m).unwrap();
        let rows = read_columns(&dir.path().join("kle_energy.csv"), "n", "energy").unwrap();
        assert_eq!(rows[0], (0.0, 0.0));
        assert_eq!(rows.len(), 5);
        assert_eq!(read_kle(dir.path(), "kle").unwrap(), m);
    }
}
