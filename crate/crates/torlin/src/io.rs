//! Deterministic file formats: JSON with fixed-exponent floats, spectral
//! field archives, content-digest manifests, and the run trace CSV.
//!
//! Every float is printed as `{:.16e}` (17 significant digits), which both
//! round-trips `f64` exactly and keeps output bytes identical across
//! platforms, so artifact digests are reproducible. Maps inside manifests are
//! ordered, and fields serialize their modes in the storage order of the
//! sparse map, which is itself deterministic.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::field::Field;
use crate::iterate::TraceRow;
use crate::window::Window;
use crate::{Error, Result};

/// Version tag embedded in every artifact this crate writes.
pub const ARTIFACT_VERSION: u32 = 1;

/// serde_json formatter that prints every finite float as `{:.16e}`.
#[derive(Default)]
pub struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes any value to JSON with deterministic float formatting.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Parse(format!("json encoding failed: {e}")))?;
    String::from_utf8(buf).map_err(|e| Error::Parse(format!("json is not utf-8: {e}")))
}

/// One stored mode: the index vector and one `[re, im]` pair per component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeDto {
    pub k: Vec<i64>,
    pub coeff: Vec<[f64; 2]>,
}

/// Archive form of a spectral field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldDto {
    pub artifact_version: u32,
    /// Digest of the manifest that produced this archive, when one exists.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub manifest_digest: Option<String>,
    /// Coordinate labels of the window, in order.
    pub coords: Vec<i64>,
    pub components: usize,
    pub real: bool,
    pub modes: Vec<ModeDto>,
}

impl FieldDto {
    pub fn from_field(f: &Field) -> Self {
        let modes = f
            .iter()
            .map(|(k, c)| ModeDto {
                k: k.to_vec(),
                coeff: c.iter().map(|z| [z.re, z.im]).collect(),
            })
            .collect();
        FieldDto {
            artifact_version: ARTIFACT_VERSION,
            manifest_digest: None,
            coords: f.window().labels().to_vec(),
            components: f.components(),
            real: f.is_real(),
            modes,
        }
    }

    /// Rebuilds the field, validating shapes and (for archives marked real)
    /// conjugate symmetry of the stored coefficients.
    pub fn into_field(&self) -> Result<Field> {
        if self.components == 0 {
            return Err(Error::Parse("field archive declares zero components".into()));
        }
        let window = Window::new(self.coords.clone())?;
        let mut out = Field::zeros(window, self.components, self.real);
        let mut scale = 0.0f64;
        for mode in &self.modes {
            if mode.k.len() != self.coords.len() {
                return Err(Error::Parse(format!(
                    "mode {:?} does not match the {}-coordinate window",
                    mode.k,
                    self.coords.len()
                )));
            }
            if mode.coeff.len() != self.components {
                return Err(Error::Parse(format!(
                    "mode {:?} carries {} coefficients, expected {}",
                    mode.k,
                    mode.coeff.len(),
                    self.components
                )));
            }
            let c: Vec<C64> = mode.coeff.iter().map(|[re, im]| C64::new(*re, *im)).collect();
            for z in &c {
                scale = scale.max(z.norm());
            }
            out.set(mode.k.clone().into_boxed_slice(), c);
        }
        if self.real {
            let defect = out.realness_defect();
            if defect > 1e-12 * (1.0 + scale) {
                return Err(Error::Parse(format!(
                    "archive is marked real but conjugate symmetry fails by {defect:.3e}"
                )));
            }
        }
        Ok(out)
    }
}

/// Parses a field archive from JSON text.
pub fn field_from_json(text: &str) -> Result<Field> {
    let dto: FieldDto =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("field archive: {e}")))?;
    dto.into_field()
}

/// Serializes a field archive to JSON text.
pub fn field_to_json(f: &Field) -> Result<String> {
    to_json(&FieldDto::from_field(f))
}

/// Provenance record for an artifact: the command that produced it, its
/// parameters, digests of its inputs, and the seed when randomness was
/// involved. The record's own digest stamps derived files.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub artifact_version: u32,
    pub command: String,
    pub parameters: BTreeMap<String, String>,
    pub input_digests: BTreeMap<String, String>,
    pub seed: Option<u64>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            artifact_version: ARTIFACT_VERSION,
            command: command.to_string(),
            parameters: BTreeMap::new(),
            input_digests: BTreeMap::new(),
            seed: None,
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.parameters.insert(key.to_string(), value.to_string());
        self
    }

    pub fn input(&mut self, name: &str, bytes: &[u8]) -> &mut Self {
        self.input_digests.insert(name.to_string(), sha256_hex(bytes));
        self
    }

    /// Digest of the canonical JSON encoding of the record itself.
    pub fn digest(&self) -> String {
        sha256_hex(to_json(self).expect("manifest encoding cannot fail").as_bytes())
    }
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").expect("writing to a string cannot fail");
    }
    out
}

/// Writes a file through a temporary sibling and an atomic rename, so a
/// crash never leaves a half-written artifact behind.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Renders the run trace as CSV: a digest comment, a fixed header, one line
/// per stage with floats in `{:.16e}`.
pub fn trace_csv(rows: &[TraceRow], manifest_digest: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# manifest_digest={manifest_digest}");
    out.push_str(
        "nu,K_nu,sigma_nu,Delta_nu,Q_norm,eps_bound,delta_bound,\
         omega_tilde_sup,step_iters,contraction_factor,defect\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
            r.nu,
            r.cap_k,
            r.sigma,
            r.delta,
            r.q_norm,
            r.eps_bound,
            r.delta_bound,
            r.omega_tilde_sup,
            r.step_iters,
            r.contraction_factor,
            r.defect
        );
    }
    out
}
