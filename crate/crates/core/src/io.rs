//! Shot-record CSV files.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::measurement::{ShotRecord, SiteRecord};
use crate::noise::ShotNoise;

pub const SHOT_HEADER: [&str; 7] = ["run_id", "shot", "site", "n_a_true", "n_b_true", "n_a_det", "n_b_det"];

pub struct ShotWriter<W: Write> {
    inner: csv::Writer<W>,
    run_id: String,
}

impl<W: Write> ShotWriter<W> {
    pub fn new(w: W, run_id: impl Into<String>) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        inner.write_record(SHOT_HEADER)?;
        Ok(Self { inner, run_id: run_id.into() })
    }

    pub fn write(&mut self, shot: &ShotRecord) -> Result<()> {
        for s in &shot.sites {
            self.inner.write_record([
                self.run_id.clone(),
                shot.shot_index.to_string(),
                s.site_index.to_string(),
                s.n_a_true.to_string(),
                s.n_b_true.to_string(),
                s.n_a_det.to_string(),
                s.n_b_det.to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Parsed file: the run id and shots in file order. Per-shot noise draws are
/// not part of the CSV and come back zeroed.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotTable {
    pub run_id: String,
    pub shots: Vec<ShotRecord>,
}

pub fn read_shots<R: Read>(r: R) -> Result<ShotTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(SHOT_HEADER.iter().copied()) {
        return Err(Error::Schema {
            row: 1,
            msg: format!("expected header {:?}, got {:?}", SHOT_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut run_id: Option<String> = None;
    let mut shots: Vec<ShotRecord> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Schema { row, msg: e.to_string() })?;
        if rec.len() != SHOT_HEADER.len() {
            return Err(Error::Schema { row, msg: format!("expected {} fields, got {}", SHOT_HEADER.len(), rec.len()) });
        }
        let int = |j: usize| -> Result<usize> {
            rec[j].parse().map_err(|_| Error::Schema { row, msg: format!("{}: '{}' is not a non-negative integer", SHOT_HEADER[j], &rec[j]) })
        };
        let real = |j: usize| -> Result<f64> {
            let x: f64 = rec[j].parse().map_err(|_| Error::Schema { row, msg: format!("{}: '{}' is not a number", SHOT_HEADER[j], &rec[j]) })?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::Schema { row, msg: format!("{} is not finite", SHOT_HEADER[j]) })
            }
        };
        match &run_id {
            None => run_id = Some(rec[0].to_string()),
            Some(id) if id != &rec[0] => {
                return Err(Error::Schema { row, msg: format!("run_id '{}' differs from '{}'", &rec[0], id) })
            }
            _ => {}
        }
        let shot = int(1)?;
        let site = SiteRecord { site_index: int(2)?, n_a_true: int(3)?, n_b_true: int(4)?, n_a_det: real(5)?, n_b_det: real(6)? };
        match shots.last_mut() {
            Some(last) if last.shot_index == shot => last.sites.push(site),
            _ => {
                if shots.iter().any(|s| s.shot_index == shot) {
                    return Err(Error::Schema { row, msg: format!("rows of shot {shot} are not contiguous") });
                }
                shots.push(ShotRecord { shot_index: shot, sites: vec![site], noise: ShotNoise::default() });
            }
        }
    }
    let n_sites = shots.first().map(|s| s.sites.len()).unwrap_or(0);
    if let Some(bad) = shots.iter().find(|s| s.sites.len() != n_sites) {
        return Err(Error::Schema { row: 0, msg: format!("shot {} has {} sites, expected {n_sites}", bad.shot_index, bad.sites.len()) });
    }
    Ok(ShotTable { run_id: run_id.unwrap_or_default(), shots })
}
