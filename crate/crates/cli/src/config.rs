//! Experiment configuration: one JSON document, validated into core objects.

use quasiwalk::boundary::{RayMode, DEFAULT_WINDOW};
use quasiwalk::harmonic::{distortion, distortion_sampled, CesaroSampler};
use quasiwalk::measure::DEFAULT_CAPACITY;
use quasiwalk::montecarlo::{Verdict, DEFAULT_FLOOR};
use quasiwalk::{parse_rational, Alphabet, Error, ExactMeasure, GroupKind, Measure, Quasimorphism, Rational, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub group: GroupSpec,
    pub measure: MeasureSpec,
    pub quasimorphism: QmSpec,
    #[serde(default)]
    pub seed: u64,
    /// Scalar for exact table computations.
    #[serde(default)]
    pub scalar: ScalarKind,
    #[serde(default)]
    pub ell: EllSpec,
    #[serde(default)]
    pub representative: RepresentativeSpec,
    pub walk: Option<WalkSection>,
    pub lil: Option<LilSection>,
    pub harmonic: Option<HarmonicSection>,
    pub distortion: Option<DistortionSection>,
    pub defect: Option<DefectSection>,
    pub tame: Option<TameSection>,
    pub martingale: Option<MartingaleSection>,
    pub sandwich: Option<SandwichSection>,
    pub boundary: Option<BoundarySection>,
    pub rn_kernel: Option<RnKernelSection>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub kind: GroupKind,
    pub rank: usize,
    pub names: Option<Vec<String>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureSpec {
    NearestNeighbor,
    Uniform { support: Vec<String> },
    /// Weights as JSON numbers or strings such as `"1/3"`; read exactly.
    Weighted { weights: Vec<(String, Value)> },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Homogenize {
    Limit,
    DoublingDepth(u32),
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum QmSpec {
    Hom {
        coefficients: Vec<f64>,
        homogenize: Option<Homogenize>,
    },
    Brooks {
        word: String,
        defect_bound: Option<f64>,
        homogenize: Option<Homogenize>,
    },
    Noise {
        amplitude: f64,
        seed: u64,
        homogenize: Option<Homogenize>,
    },
    Sum {
        parts: Vec<Part>,
        defect_bound: Option<f64>,
        homogenize: Option<Homogenize>,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Part {
    pub coefficient: f64,
    pub quasimorphism: QmSpec,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ScalarKind {
    #[default]
    F64,
    Rational,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EllSpec {
    /// Zero by symmetry when possible, else `a_N / N` exactly or by sampling.
    Computed {
        #[serde(default = "default_ell_n")]
        n: usize,
        #[serde(default)]
        sampled: bool,
        #[serde(default = "default_ell_walks")]
        walks: usize,
    },
    Supplied {
        value: f64,
        #[serde(default)]
        error: f64,
    },
}

fn default_ell_n() -> usize {
    10
}

fn default_ell_walks() -> usize {
    4000
}

impl Default for EllSpec {
    fn default() -> Self {
        EllSpec::Computed { n: default_ell_n(), sampled: false, walks: default_ell_walks() }
    }
}

/// Parameters of the sampled Cesàro representative.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentativeSpec {
    #[serde(default = "default_rep_n")]
    pub n: usize,
    #[serde(default = "default_rep_paths")]
    pub paths: usize,
}

fn default_rep_n() -> usize {
    256
}

fn default_rep_paths() -> usize {
    4
}

impl Default for RepresentativeSpec {
    fn default() -> Self {
        RepresentativeSpec { n: default_rep_n(), paths: default_rep_paths() }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSection {
    pub n: usize,
    pub trials: usize,
    #[serde(default = "default_floor")]
    pub floor: f64,
    /// Second walk length for the scale-coherence ratio.
    pub scale_n: Option<usize>,
    #[serde(default)]
    pub check: CltCheck,
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CltCheck {
    pub sigma: Option<[f64; 2]>,
    pub sigma_min: Option<f64>,
    pub ks_max: Option<f64>,
    pub expect: Option<Verdict>,
    /// Range for `sigma(n) / sigma(scale_n)`.
    pub scale_ratio: Option<[f64; 2]>,
    /// Run the tameness check and require a non-tame witness.
    #[serde(default)]
    pub require_non_tame: bool,
    /// Every sample must vanish, not just the variance.
    #[serde(default)]
    pub identically_zero: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LilSection {
    pub horizon: u64,
    pub start: u64,
    #[serde(default)]
    pub check: LilCheck,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LilCheck {
    pub r_sqrt2: Option<[f64; 2]>,
    #[serde(default)]
    pub identically_zero: bool,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum HarmonicMode {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicSection {
    pub n: usize,
    pub mode: HarmonicMode,
    pub eval_radius: usize,
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default = "default_ell_walks")]
    pub distortion_walks: usize,
    #[serde(default = "default_identity_tol")]
    pub identity_tolerance: f64,
}

fn default_cap() -> usize {
    DEFAULT_CAPACITY
}

fn default_identity_tol() -> f64 {
    1e-9
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionSection {
    pub n: usize,
    #[serde(default)]
    pub sampled: bool,
    #[serde(default = "default_ell_walks")]
    pub walks: usize,
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default = "default_identity_tol")]
    pub slack: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DefectSection {
    pub radius: usize,
    #[serde(default)]
    pub random_pairs: usize,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum TameExpectation {
    Tame,
    NonTame,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TameSection {
    pub horizon: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_cap")]
    pub cap: usize,
    pub expect: Option<TameExpectation>,
}

fn default_threshold() -> f64 {
    3.0
}

fn default_stride() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleSection {
    pub depth: usize,
    pub samples: usize,
    pub sigma: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SandwichSection {
    pub n: usize,
    pub trials: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_depth() -> usize {
    256
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum RayModeSpec {
    Hitting,
    TrajectoryLimit,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub mode: RayModeSpec,
    #[serde(default = "default_window")]
    pub window: usize,
    pub length: usize,
    #[serde(default)]
    pub triples: usize,
    #[serde(default = "default_triple_len")]
    pub triple_max_len: usize,
    pub integral: Option<IntegralSpec>,
    pub variance: Option<VarianceSpec>,
    pub cylinders: Option<CylinderSpec>,
    #[serde(default = "default_se_multiple")]
    pub se_multiple: f64,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn default_triple_len() -> usize {
    6
}

fn default_se_multiple() -> f64 {
    3.0
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralSpec {
    pub radius: usize,
    pub rays: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Paths per realization; the check is linear in the realization.
    #[serde(default = "default_one")]
    pub paths: usize,
}

fn default_replicates() -> usize {
    1000
}

fn default_one() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceSpec {
    pub rays: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderSpec {
    pub max_len: usize,
    pub rays: usize,
    #[serde(default = "default_stationarity_len")]
    pub stationarity_len: usize,
    #[serde(default = "default_mc_cylinders")]
    pub mc_cylinders: usize,
    #[serde(default = "default_mc_rays")]
    pub mc_rays: usize,
    #[serde(default = "default_exact_tol")]
    pub exact_tolerance: f64,
}

fn default_stationarity_len() -> usize {
    3
}

fn default_mc_cylinders() -> usize {
    10
}

fn default_mc_rays() -> usize {
    20_000
}

fn default_exact_tol() -> f64 {
    1e-12
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RnKernelSection {
    pub elements: Vec<String>,
    pub rays: usize,
    pub length: usize,
    pub depth: usize,
    #[serde(default = "default_one")]
    pub paths: usize,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<String>,
}

/// Applies `path.to.field=value` overrides to a JSON document. The value is
/// parsed as JSON when possible and taken as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override path {path:?}: {key:?} is not inside an object")))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::Config("empty override path".into()))
}

/// Parses a document, reporting the failing line and column.
pub fn parse(text: &str, overrides: &[String], seed: Option<u64>) -> Result<(ExperimentConfig, Value)> {
    let mut doc: Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    if let Some(s) = seed {
        apply_override(&mut doc, &format!("seed={s}"))?;
    }
    // Untouched documents are re-read from the text so errors carry positions.
    let config: ExperimentConfig = if overrides.is_empty() && seed.is_none() {
        let mut de = serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let (line, column) = (e.inner().line(), e.inner().column());
            Error::Config(format!("{}: {} (line {line} column {column})", e.path(), strip_position(e.inner())))
        })?
    } else {
        serde_path_to_error::deserialize(doc.clone())
            .map_err(|e| Error::Config(format!("{}: {}", e.path(), strip_position(e.inner()))))?
    };
    Ok((config, doc))
}

fn strip_position(e: &serde_json::Error) -> String {
    let text = e.to_string();
    match text.rfind(" at line ") {
        Some(i) => text[..i].to_string(),
        None => text,
    }
}

/// SHA-256 of the canonical (key-sorted, compact) document without the
/// `output` block, so that output locations do not change the hash.
pub fn config_hash(doc: &Value) -> String {
    let mut doc = doc.clone();
    if let Some(obj) = doc.as_object_mut() {
        obj.remove("output");
    }
    let canonical = serde_json::to_string(&doc).expect("value serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentConfig {
    pub fn alphabet(&self) -> Result<Alphabet> {
        match (&self.group.names, self.group.kind) {
            (Some(names), kind) => {
                if names.len() != self.group.rank {
                    return Err(Error::Config(format!("group.names has {} entries for rank {}", names.len(), self.group.rank)));
                }
                Alphabet::new(kind, names.clone())
            }
            (None, GroupKind::Free) => Ok(Alphabet::free(self.group.rank)),
            (None, GroupKind::FreeAbelian) => Ok(Alphabet::free_abelian(self.group.rank)),
        }
    }

    pub fn exact_measure(&self, alphabet: &Alphabet) -> Result<ExactMeasure> {
        match &self.measure {
            MeasureSpec::NearestNeighbor => Ok(ExactMeasure::nearest_neighbor(alphabet.clone())),
            MeasureSpec::Uniform { support } => {
                let elements = support.iter().map(|s| alphabet.parse(s)).collect::<Result<Vec<_>>>()?;
                ExactMeasure::uniform(alphabet.clone(), elements)
            }
            MeasureSpec::Weighted { weights } => {
                let table = weights
                    .iter()
                    .map(|(g, w)| Ok((alphabet.parse(g)?, weight(w)?)))
                    .collect::<Result<Vec<_>>>()?;
                ExactMeasure::new(alphabet.clone(), table)
            }
        }
    }

    pub fn quasimorphism(&self, alphabet: &Alphabet) -> Result<Quasimorphism> {
        build_qm(&self.quasimorphism, alphabet)
    }

    pub fn section<'a, T>(&self, section: &'a Option<T>, name: &str) -> Result<&'a T> {
        section
            .as_ref()
            .ok_or_else(|| Error::Config(format!("this subcommand needs a `{name}` section")))
    }

    pub fn ray_mode(&self, b: &BoundarySection) -> RayMode {
        match b.mode {
            RayModeSpec::Hitting => RayMode::Hitting,
            RayModeSpec::TrajectoryLimit => RayMode::TrajectoryLimit { window: b.window },
        }
    }
}

fn weight(v: &Value) -> Result<Rational> {
    let text = match v {
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        other => return Err(Error::Config(format!("weight {other} is neither a number nor a string"))),
    };
    parse_rational(&text).ok_or_else(|| Error::Config(format!("cannot read weight {text:?}")))
}

fn build_qm(spec: &QmSpec, alphabet: &Alphabet) -> Result<Quasimorphism> {
    let (q, homogenize) = match spec {
        QmSpec::Hom { coefficients, homogenize } => (Quasimorphism::hom(alphabet.clone(), coefficients.clone())?, homogenize),
        QmSpec::Brooks { word, defect_bound, homogenize } => {
            let w = alphabet.parse(word)?;
            (Quasimorphism::brooks(alphabet.clone(), &w, *defect_bound)?, homogenize)
        }
        QmSpec::Noise { amplitude, seed, homogenize } => {
            (Quasimorphism::bounded_noise(alphabet.clone(), *amplitude, *seed)?, homogenize)
        }
        QmSpec::Sum { parts, defect_bound, homogenize } => {
            let built = parts
                .iter()
                .map(|p| Ok((p.coefficient, build_qm(&p.quasimorphism, alphabet)?)))
                .collect::<Result<Vec<_>>>()?;
            let mut q = Quasimorphism::combine(&built)?;
            if let Some(d) = defect_bound {
                q = q.with_defect_bound(*d);
            }
            (q, homogenize)
        }
    };
    match homogenize {
        None => Ok(q),
        Some(Homogenize::Limit) => q.homogenize_limit(),
        Some(Homogenize::DoublingDepth(d)) => Ok(q.homogenize(*d)?.0),
    }
}

/// The homogeneous representative used by the harmonic and boundary
/// pipelines: `phi` itself when it is (approximately) homogeneous, its exact
/// homogenization otherwise.
pub fn phi_hat(phi: &Quasimorphism) -> Result<Quasimorphism> {
    if phi.homogeneity_tolerance().is_some() {
        Ok(phi.clone())
    } else {
        phi.homogenize_limit()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EllValue {
    pub ell: f64,
    pub ell_error: f64,
    pub method: &'static str,
}

/// `ell` as configured. A symmetric measure and an odd quasimorphism force
/// `a_n = 0` for every `n`, hence `ell = 0` exactly.
pub fn resolve_ell(config: &ExperimentConfig, phi: &Quasimorphism, mu: &Measure, seed: u64) -> Result<EllValue> {
    match &config.ell {
        EllSpec::Supplied { value, error } => Ok(EllValue { ell: *value, ell_error: *error, method: "supplied" }),
        EllSpec::Computed { n, sampled, walks } => {
            if mu.is_symmetric() && phi.is_odd() {
                return Ok(EllValue { ell: 0.0, ell_error: 0.0, method: "symmetry" });
            }
            if phi.defect_bound().is_none() {
                return Err(Error::Config("ell cannot be computed without a defect bound".into()));
            }
            let est = if *sampled {
                distortion_sampled(phi, mu, *n, *walks, seed)?
            } else {
                distortion(phi, &mu.powers(*n, 0.0, DEFAULT_CAPACITY)?)?
            };
            Ok(EllValue { ell: est.ell, ell_error: est.ell_error, method: if *sampled { "sampled" } else { "exact" } })
        }
    }
}

/// Sampled representative for `phi_hat`; exact (`N = 1`) for homomorphisms.
pub fn representative(config: &ExperimentConfig, phi_hat: &Quasimorphism, mu: &Measure, paths: Option<usize>) -> Result<CesaroSampler> {
    if phi_hat.is_hom() {
        return CesaroSampler::exact_for_hom(phi_hat.clone(), mu.clone());
    }
    let seed = quasiwalk::rng::subseed(config.seed, quasiwalk::rng::domain::HARMONIC, 0);
    CesaroSampler::new(
        phi_hat.clone(),
        mu.clone(),
        config.representative.n,
        paths.unwrap_or(config.representative.paths),
        seed,
    )
}
