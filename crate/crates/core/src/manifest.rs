//! Seeded jobs, their output files and replay manifests.
//!
//! A [`Job`] holds every parameter of a run, so running it again yields
//! the same bytes. [`record`] writes the outputs of a job next to a
//! manifest listing their SHA-256 digests; [`run_manifest`] reruns the job
//! in memory and compares.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::covdecay::{covariance_batch, CovModel, LocalEvent};
use crate::error::{Error, Result};
use crate::experiments::{lambda_c_estimate, phase_diagram, render_phase_svg, rows_to_csv, LambdaCConfig};
use crate::fixture::{ModelFixture, SiteFixture, StatesFixture};
use crate::hex::{hex_threshold_estimate, HexThreshold};
use crate::lattice::{Boundary, LatticeSpec};
use crate::model::{sample_model, sample_one_choice_model, ModelParams};
use crate::renorm::{estimate_qk_at, ladder, EventEstimate, EventFamily, QkGeometry};
use crate::rng::RandomSource;

pub const MANIFEST_SCHEMA: &str = "alignperc.manifest/1";
pub const SAMPLE_SCHEMA: &str = "alignperc.sample/1";
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A fully parameterised seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Simulate {
        d: usize,
        size: usize,
        boundary: Boundary,
        p: f64,
        /// `None` selects the one-choice model.
        lambda: Option<f64>,
        seed: u64,
    },
    Covdecay {
        d: usize,
        l: i64,
        dist: i64,
        p: f64,
        model: CovModel,
        events: Vec<LocalEvent>,
        n: u64,
        seed: u64,
    },
    Qk {
        family: EventFamily,
        l0: f64,
        levels: Vec<usize>,
        p: f64,
        lambda: f64,
        d: usize,
        n: u64,
        boundary: Boundary,
        margin: Option<i64>,
        seed: u64,
    },
    Hex {
        ps: Vec<f64>,
        extent: usize,
        n: u64,
        seed: u64,
    },
    LambdaC {
        p: f64,
        config: LambdaCConfig,
        seed: u64,
    },
    PhaseDiagram {
        grid: Vec<f64>,
        config: LambdaCConfig,
        seed: u64,
    },
}

/// One output of a job; `role` is `data` or `plot`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub role: &'static str,
    pub extension: &'static str,
    pub bytes: Vec<u8>,
}

/// Summary and full configuration of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub schema: String,
    pub p: f64,
    pub lambda: Option<f64>,
    pub model: String,
    pub seed: u64,
    pub occupied: usize,
    pub pairs: usize,
    pub open_pairs: usize,
    pub open_edges: usize,
    pub sample: ModelFixture,
}

/// Flat CSV form of [`HexThreshold`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexRow {
    pub p: f64,
    pub extent: usize,
    pub n: u64,
    pub estimate: f64,
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub reference: f64,
    pub bisection_steps: usize,
}

impl From<&HexThreshold> for HexRow {
    fn from(h: &HexThreshold) -> Self {
        Self {
            p: h.p,
            extent: h.extent,
            n: h.n,
            estimate: h.estimate,
            median: h.median,
            ci_low: h.ci.lo,
            ci_high: h.ci.hi,
            reference: h.reference,
            bisection_steps: h.bisection_steps,
        }
    }
}

fn json_bytes<T: Serialize + ?Sized>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn data(extension: &'static str, bytes: Vec<u8>) -> Artifact {
    Artifact { role: "data", extension, bytes }
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Simulate { .. } => "simulate",
            Job::Covdecay { .. } => "covdecay",
            Job::Qk { .. } => "qk",
            Job::Hex { .. } => "hex",
            Job::LambdaC { .. } => "lambda-c",
            Job::PhaseDiagram { .. } => "phase-diagram",
        }
    }

    pub fn seed(&self) -> u64 {
        match *self {
            Job::Simulate { seed, .. }
            | Job::Covdecay { seed, .. }
            | Job::Qk { seed, .. }
            | Job::Hex { seed, .. }
            | Job::LambdaC { seed, .. }
            | Job::PhaseDiagram { seed, .. } => seed,
        }
    }

    /// Runs the job and returns its outputs in memory.
    pub fn run(&self) -> Result<Vec<Artifact>> {
        let rng = RandomSource::from_seed(self.seed());
        match self {
            Job::Simulate { d, size, boundary, p, lambda, seed } => {
                let spec = LatticeSpec::cube(*d, *size, *boundary)?;
                let s = match lambda {
                    Some(l) => sample_model(&spec, ModelParams::new(*p, *l)?, &rng)?,
                    None => sample_one_choice_model(&spec, *p, &rng)?,
                };
                let report = SampleReport {
                    schema: SAMPLE_SCHEMA.into(),
                    p: *p,
                    lambda: *lambda,
                    model: if lambda.is_some() { "independent" } else { "one_choice" }.into(),
                    seed: *seed,
                    occupied: s.sites.occupied_count(),
                    pairs: s.seg.num_pairs(),
                    open_pairs: s.states.open_count(),
                    open_edges: s.edges.open_count(),
                    sample: ModelFixture {
                        sites: SiteFixture::from_config(&s.sites),
                        states: Some(StatesFixture::from_states(&s.states)),
                    },
                };
                Ok(vec![data("json", json_bytes(&report)?)])
            }
            Job::Covdecay { d, l, dist, p, model, events, n, .. } => {
                let rows = covariance_batch(events, *d, *l, *dist, *p, *model, *n, &rng)?;
                Ok(vec![data("csv", rows_to_csv(&rows)?)])
            }
            Job::Qk { family, l0, levels, p, lambda, d, n, boundary, margin, .. } => {
                let kmax = levels.iter().copied().max().ok_or_else(|| Error::param("no levels"))?;
                let lad = ladder(*l0, kmax)?;
                let params = ModelParams::new(*p, *lambda)?;
                let geom = QkGeometry { boundary: *boundary, margin: *margin, ..Default::default() };
                let est: Vec<EventEstimate> = levels
                    .iter()
                    .map(|&k| estimate_qk_at(*family, &lad, k, params, *d, *n, &rng.child(k as u64), &geom))
                    .collect::<Result<_>>()?;
                Ok(vec![data("json", json_bytes(&est)?)])
            }
            Job::Hex { ps, extent, n, .. } => {
                let rows: Vec<HexRow> = ps
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| hex_threshold_estimate(p, *extent, *n, &rng.child(j as u64)).map(|h| HexRow::from(&h)))
                    .collect::<Result<_>>()?;
                Ok(vec![data("csv", rows_to_csv(&rows)?)])
            }
            Job::LambdaC { p, config, .. } => {
                let row = lambda_c_estimate(*p, config, &rng)?;
                Ok(vec![data("csv", rows_to_csv(&[row])?)])
            }
            Job::PhaseDiagram { grid, config, .. } => {
                let rows = phase_diagram(grid, config, &rng)?;
                Ok(vec![
                    data("csv", rows_to_csv(&rows)?),
                    Artifact {
                        role: "plot",
                        extension: "svg",
                        bytes: render_phase_svg(&rows, config.d).into_bytes(),
                    },
                ])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub role: String,
    /// Relative to the directory holding the manifest.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub schema: String,
    pub command: String,
    pub job: Job,
    pub master_seed: u64,
    pub code_version: String,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Path of the manifest written for the data file `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn output_path(out: &Path, a: &Artifact) -> PathBuf {
    if a.role == "data" {
        out.to_path_buf()
    } else {
        out.with_extension(a.extension)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs `job`, writes its data to `out` (a plot goes beside it with its own
/// extension) and the manifest to [`manifest_path`]`(out)`.
pub fn record(job: &Job, out: &Path) -> Result<ExperimentManifest> {
    let started = now();
    let artifacts = job.run()?;
    let mut outputs = Vec::with_capacity(artifacts.len());
    for a in &artifacts {
        let path = output_path(out, a);
        write_file(&path, &a.bytes)?;
        outputs.push(OutputDigest {
            role: a.role.into(),
            path: path
                .file_name()
                .ok_or_else(|| Error::param(format!("output path {} has no file name", path.display())))?
                .to_string_lossy()
                .into_owned(),
            sha256: sha256_hex(&a.bytes),
            bytes: a.bytes.len() as u64,
        });
    }
    let manifest = ExperimentManifest {
        schema: MANIFEST_SCHEMA.into(),
        command: job.name().into(),
        job: job.clone(),
        master_seed: job.seed(),
        code_version: CODE_VERSION.into(),
        started,
        finished: now(),
        outputs,
    };
    write_file(&manifest_path(out), &json_bytes(&manifest)?)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayedOutput {
    pub path: PathBuf,
    pub recorded: String,
    pub on_disk: String,
    pub regenerated: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub command: String,
    pub outputs: Vec<ReplayedOutput>,
    pub warnings: Vec<String>,
}

pub fn load_manifest(path: &Path) -> Result<ExperimentManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: ExperimentManifest = serde_json::from_str(&text)?;
    if m.schema != MANIFEST_SCHEMA {
        return Err(Error::param(format!(
            "{}: unsupported manifest schema {:?}, expected {MANIFEST_SCHEMA:?}",
            path.display(),
            m.schema
        )));
    }
    Ok(m)
}

/// Checks the files listed in the manifest against their recorded digests,
/// then reruns the job and checks the regenerated bytes. A code version
/// other than this build's is reported as a warning.
pub fn run_manifest(path: &Path) -> Result<ReplayReport> {
    let m = load_manifest(path)?;
    let mut warnings = Vec::new();
    if m.code_version != CODE_VERSION {
        warnings.push(format!(
            "manifest was recorded with version {}, replaying with {CODE_VERSION}",
            m.code_version
        ));
    }
    let dir = path.parent().unwrap_or(Path::new(""));
    let mut files = Vec::with_capacity(m.outputs.len());
    for o in &m.outputs {
        let file = dir.join(&o.path);
        let bytes = std::fs::read(&file).map_err(|e| {
            Error::io(
                &file,
                std::io::Error::new(
                    e.kind(),
                    format!("{e}; this output is listed in {} and must be restored before replay", path.display()),
                ),
            )
        })?;
        let on_disk = sha256_hex(&bytes);
        if on_disk != o.sha256 {
            return Err(Error::DigestMismatch {
                path: file.display().to_string(),
                expected: o.sha256.clone(),
                actual: on_disk,
            });
        }
        files.push((file, on_disk));
    }
    let artifacts = m.job.run()?;
    let mut outputs = Vec::with_capacity(m.outputs.len());
    for (o, (file, on_disk)) in m.outputs.iter().zip(files) {
        let a = artifacts
            .iter()
            .find(|a| a.role == o.role)
            .ok_or_else(|| Error::Structural(format!("job produced no {} output", o.role)))?;
        let regenerated = sha256_hex(&a.bytes);
        if regenerated != o.sha256 {
            return Err(Error::DigestMismatch {
                path: format!("{} (regenerated)", file.display()),
                expected: o.sha256.clone(),
                actual: regenerated,
            });
        }
        outputs.push(ReplayedOutput {
            path: file,
            recorded: o.sha256.clone(),
            on_disk,
            regenerated,
        });
    }
    Ok(ReplayReport {
        command: m.command,
        outputs,
        warnings,
    })
}
