//! Meta-datasets: for each of `N` sampled instances, the `K` best distinct
//! points a population solver visited.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{BoxDomain, ProblemClass};
use crate::sampling::RngStream;
use crate::solvers::{top_k_distinct, SolverSpec};

pub const DATASET_FORMAT: &str = "meta-bbo-ds-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaPoint {
    pub x: Vec<f64>,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub theta: Vec<f64>,
    /// Sorted ascending by `f`.
    pub points: Vec<MetaPoint>,
}

/// How a dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub domain: BoxDomain,
    /// `None` for hand-built datasets.
    pub solver: Option<SolverSpec>,
    /// Master stream; instance `i` uses its substream `i`.
    pub seed: Option<RngStream>,
    pub dedup_tol: f64,
}

impl Provenance {
    pub fn synthetic(domain: BoxDomain) -> Self {
        Self {
            domain,
            solver: None,
            seed: None,
            dedup_tol: crate::solvers::DEDUP_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDataset {
    pub problem: String,
    pub n_x: usize,
    pub n_theta: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub provenance: Provenance,
    pub instances: Vec<Instance>,
}

#[derive(Serialize)]
struct FileOut<'a> {
    format: &'a str,
    #[serde(flatten)]
    data: &'a MetaDataset,
}

impl MetaDataset {
    pub fn domain(&self) -> &BoxDomain {
        &self.provenance.domain
    }

    /// Structural invariants a loaded file must satisfy.
    pub fn validate(&self) -> Result<()> {
        if self.instances.len() != self.n {
            return Err(Error::invalid(format!(
                "dataset declares N={} but holds {} instances",
                self.n,
                self.instances.len()
            )));
        }
        if self.provenance.domain.dim() != self.n_x {
            return Err(Error::DimensionMismatch {
                what: "dataset domain",
                expected: self.n_x,
                got: self.provenance.domain.dim(),
            });
        }
        for (i, inst) in self.instances.iter().enumerate() {
            let check = || -> Result<()> {
                if inst.theta.len() != self.n_theta {
                    return Err(Error::DimensionMismatch {
                        what: "theta",
                        expected: self.n_theta,
                        got: inst.theta.len(),
                    });
                }
                if inst.points.len() != self.k {
                    return Err(Error::DimensionMismatch {
                        what: "points per instance",
                        expected: self.k,
                        got: inst.points.len(),
                    });
                }
                for p in &inst.points {
                    if p.x.len() != self.n_x {
                        return Err(Error::DimensionMismatch {
                            what: "point",
                            expected: self.n_x,
                            got: p.x.len(),
                        });
                    }
                    if !p.f.is_finite() || p.x.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFiniteObjective {
                            point: p.x.clone(),
                            value: p.f,
                        });
                    }
                }
                Ok(())
            };
            check().map_err(|e| e.in_instance(i))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&FileOut {
            format: DATASET_FORMAT,
            data: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .as_object_mut()
            .and_then(|o| o.remove("format"))
            .and_then(|f| f.as_str().map(str::to_string))
            .unwrap_or_default();
        if found != DATASET_FORMAT {
            return Err(Error::FormatVersion {
                expected: DATASET_FORMAT.to_string(),
                found,
            });
        }
        let ds: MetaDataset = serde_json::from_value(value)?;
        ds.validate()?;
        Ok(ds)
    }

    /// Writes JSON, gzip-compressed when the path ends in `.gz`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let text = self.to_json()?;
        let file = File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        if path.extension().is_some_and(|e| e == "gz") {
            let mut gz = GzEncoder::new(w, Compression::default());
            gz.write_all(text.as_bytes()).map_err(io_err)?;
            w = gz.finish().map_err(io_err)?;
        } else {
            w.write_all(text.as_bytes()).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    /// Reads plain or gzip JSON (detected by magic bytes).
    pub fn load(path: &Path) -> Result<Self> {
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(io_err)?)
            .read_to_end(&mut bytes)
            .map_err(io_err)?;
        let text = if bytes.starts_with(&[0x1f, 0x8b]) {
            let mut s = String::new();
            GzDecoder::new(&bytes[..])
                .read_to_string(&mut s)
                .map_err(io_err)?;
            s
        } else {
            String::from_utf8(bytes)
                .map_err(|e| io_err(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?
        };
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(source) => Error::Parse {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }
}

/// Samples `n` instances and keeps the `k` best distinct points the solver
/// visited on each. Instances run in parallel; the result does not depend on
/// the thread count.
pub fn build_meta_dataset(
    class: &ProblemClass,
    n: usize,
    k: usize,
    solver: &SolverSpec,
    seed: RngStream,
    dedup_tol: f64,
) -> Result<MetaDataset> {
    if n == 0 || k == 0 {
        return Err(Error::invalid(format!(
            "need N >= 1 and K >= 1 (got N={n}, K={k})"
        )));
    }
    let domain = class.domain();
    let instances = (0..n)
        .into_par_iter()
        .map(|i| {
            let stream = seed.substream(i as u64);
            let theta = class.sample_params(&mut stream.substream(0).rng());
            let build = || -> Result<Instance> {
                let objective = class.instance(&theta)?;
                let trace = solver.solve(objective, domain, &mut stream.substream(1).rng())?;
                let best = top_k_distinct(&trace, k, dedup_tol, domain)?;
                if let Some(bad) = best.iter().find(|e| !e.f.is_finite()) {
                    return Err(Error::NonFiniteObjective {
                        point: bad.x.clone(),
                        value: bad.f,
                    });
                }
                Ok(Instance {
                    theta: theta.clone(),
                    points: best
                        .into_iter()
                        .map(|e| MetaPoint { x: e.x, f: e.f })
                        .collect(),
                })
            };
            build().map_err(|e| e.in_instance(i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetaDataset {
        problem: class.name().to_string(),
        n_x: class.dim_x(),
        n_theta: class.param_dim(),
        k,
        n,
        provenance: Provenance {
            domain: domain.clone(),
            solver: Some(*solver),
            seed: Some(seed),
            dedup_tol,
        },
        instances,
    })
}

/// Instance-level random split; `⌊N·test_fraction⌋` instances go to the
/// test side. Both sides keep the original instance order.
pub fn split_meta_dataset(
    ds: &MetaDataset,
    test_fraction: f64,
    seed: RngStream,
) -> Result<(MetaDataset, MetaDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let total = ds.instances.len();
    let n_test = (total as f64 * test_fraction).floor() as usize;
    if n_test == 0 || n_test == total {
        return Err(Error::invalid(format!(
            "split of {total} instances at fraction {test_fraction} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut seed.rng());
    let mut is_test = vec![false; total];
    order[..n_test].iter().for_each(|&i| is_test[i] = true);
    let part = |want_test: bool| {
        let instances: Vec<Instance> = (0..total)
            .filter(|&i| is_test[i] == want_test)
            .map(|i| ds.instances[i].clone())
            .collect();
        MetaDataset {
            n: instances.len(),
            instances,
            ..ds.clone_header()
        }
    };
    Ok((part(false), part(true)))
}

impl MetaDataset {
    fn clone_header(&self) -> MetaDataset {
        MetaDataset {
            problem: self.problem.clone(),
            n_x: self.n_x,
            n_theta: self.n_theta,
            k: self.k,
            n: 0,
            provenance: self.provenance.clone(),
            instances: Vec::new(),
        }
    }
}
