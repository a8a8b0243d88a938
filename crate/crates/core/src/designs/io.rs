//! Panel files: `t,row,col,value` triplets for completion panels and a JSON
//! manifest plus DMR1 design files for dense and stencil panels.

use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Design, DesignFamily, DesignKind, Observation, Panel};
use crate::error::{Error, Result};
use crate::matcore::{read_dmr1, write_dmr1};

#[derive(Debug, Serialize, Deserialize)]
struct TripletRow {
    t: usize,
    row: usize,
    col: usize,
    value: f64,
}

pub fn write_triplets_to<W: Write>(w: W, panel: &Panel) -> Result<()> {
    if panel.family.kind != DesignKind::Completion {
        return Err(Error::UnsupportedFamily(format!(
            "triplet files hold completion panels only, got {}",
            panel.family.kind
        )));
    }
    let mut out = csv::Writer::from_writer(w);
    for (t, batch) in panel.batches.iter().enumerate() {
        for obs in batch {
            let Design::EntryIndex { row, col } = obs.design else {
                return Err(Error::UnsupportedFamily("non-indicator design in completion panel".into()));
            };
            out.serialize(TripletRow {
                t,
                row,
                col,
                value: obs.y,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_triplets(path: impl AsRef<Path>, panel: &Panel) -> Result<()> {
    write_triplets_to(File::create(path)?, panel)
}

/// Reads a triplet CSV. Horizon and dims default to one past the largest index seen.
pub fn read_triplets_from<R: Read>(
    r: R,
    dims: Option<(usize, usize)>,
    horizon: Option<usize>,
) -> Result<Panel> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<TripletRow>().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: i + 2,
            msg: e.to_string(),
        })?;
        rows.push(rec);
    }
    let seen_dims = rows
        .iter()
        .fold((0, 0), |(a, b), r| (a.max(r.row + 1), b.max(r.col + 1)));
    let dims = dims.unwrap_or(seen_dims);
    let horizon = horizon.unwrap_or_else(|| rows.iter().map(|r| r.t + 1).max().unwrap_or(0));
    let mut batches = vec![Vec::new(); horizon];
    for (i, r) in rows.into_iter().enumerate() {
        if r.t >= horizon {
            return Err(Error::Parse {
                line: i + 2,
                msg: format!("t={} outside horizon {horizon}", r.t),
            });
        }
        batches[r.t].push(Observation {
            design: Design::EntryIndex {
                row: r.row,
                col: r.col,
            },
            y: r.value,
        });
    }
    Panel::new(DesignFamily::completion(dims.0, dims.1), batches)
}

pub fn read_triplets(
    path: impl AsRef<Path>,
    dims: Option<(usize, usize)>,
    horizon: Option<usize>,
) -> Result<Panel> {
    read_triplets_from(File::open(path)?, dims, horizon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifestEntry {
    Dense { t: usize, y: f64, file: String },
    Stencil { t: usize, y: f64, center: (usize, usize) },
    Entry { t: usize, y: f64, cell: (usize, usize) },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub family: DesignFamily,
    pub horizon: usize,
    pub entries: Vec<ManifestEntry>,
}

/// Writes `manifest.json` into `dir`, with one DMR1 file per dense design.
pub fn write_manifest_panel(dir: impl AsRef<Path>, panel: &Panel) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (t, batch) in panel.batches.iter().enumerate() {
        for (i, obs) in batch.iter().enumerate() {
            let entry = match &obs.design {
                Design::DenseMat { x } => {
                    let file = format!("x_t{t}_{i}.dmr1");
                    write_dmr1(dir.join(&file), x)?;
                    ManifestEntry::Dense { t, y: obs.y, file }
                }
                Design::ConvKernel {
                    center_row,
                    center_col,
                } => ManifestEntry::Stencil {
                    t,
                    y: obs.y,
                    center: (*center_row, *center_col),
                },
                Design::EntryIndex { row, col } => ManifestEntry::Entry {
                    t,
                    y: obs.y,
                    cell: (*row, *col),
                },
            };
            entries.push(entry);
        }
    }
    let manifest = Manifest {
        family: panel.family,
        horizon: panel.horizon(),
        entries,
    };
    let f = File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(f, &manifest)?;
    Ok(())
}

pub fn read_manifest_panel(dir: impl AsRef<Path>) -> Result<Panel> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_reader(File::open(dir.join("manifest.json"))?)?;
    let mut batches = vec![Vec::new(); manifest.horizon];
    for entry in manifest.entries {
        let (t, obs) = match entry {
            ManifestEntry::Dense { t, y, file } => (
                t,
                Observation {
                    design: Design::dense_mat(read_dmr1(dir.join(file))?),
                    y,
                },
            ),
            ManifestEntry::Stencil { t, y, center } => (
                t,
                Observation {
                    design: Design::ConvKernel {
                        center_row: center.0,
                        center_col: center.1,
                    },
                    y,
                },
            ),
            ManifestEntry::Entry { t, y, cell } => (
                t,
                Observation {
                    design: Design::EntryIndex {
                        row: cell.0,
                        col: cell.1,
                    },
                    y,
                },
            ),
        };
        batches
            .get_mut(t)
            .ok_or(Error::IndexOutOfRange {
                index: t,
                horizon: manifest.horizon,
            })?
            .push(obs);
    }
    Panel::new(manifest.family, batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_header_and_layout() {
        let panel = Panel::new(
            DesignFamily::completion(2, 2),
            vec![
                vec![Observation {
                    design: Design::EntryIndex { row: 1, col: 0 },
                    y: 0.1,
                }],
                vec![],
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_triplets_to(&mut buf, &panel).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,row,col,value\n0,1,0,0.1\n");
    }

    #[test]
    fn triplet_parse_error_reports_line() {
        let err = read_triplets_from(&b"t,row,col,value\n0,0,0,1.0\n0,x,0,2\n"[..], None, None)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn sensing_panel_refuses_triplets() {
        let panel = Panel::new(DesignFamily::sensing(1, 1, 1.0), vec![vec![]]).unwrap();
        assert!(write_triplets_to(Vec::new(), &panel).is_err());
    }
}
