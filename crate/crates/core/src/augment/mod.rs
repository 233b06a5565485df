//! Training-data initialization: field serialization, lexicon masking,
//! synonym substitution, noise injection and weighted subsampling, combined
//! into a factorial plan of marginally dependent training samples.

mod mask;
mod noise;
mod subsample;
mod synonyms;
mod tokenize;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use mask::{mask_lexicon_terms, MaskLexicon, MaskMode, MASK_TOKEN};
pub use noise::{inject_noise, NoiseOutcome, NoiseProvider, VocabularyNoise};
pub use subsample::{weighted_subsample, weighted_subsample_indices};
pub use synonyms::{substitute_synonyms, SynonymLexicon};
pub use tokenize::{tokenize, TokenSequence};

use crate::corpus::{Dataset, Document, LabelSet, LabelSpace};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

pub const DEFAULT_MAX_TOKENS: usize = 350;
pub const DEFAULT_SUBSTITUTION_RATE: f64 = 0.10;
pub const DEFAULT_NOISE_RATE: f64 = 0.05;

const STREAM_SUBSTITUTE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_SUBSAMPLE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldOrderVariant {
    /// Title then abstract; keywords dropped.
    TitleFirst,
    /// Keywords, title, abstract. The token cap then cuts the end of the
    /// abstract first.
    KeywordsHighlighted,
}

impl FieldOrderVariant {
    pub const ALL: [FieldOrderVariant; 2] = [Self::TitleFirst, Self::KeywordsHighlighted];

    fn code(self) -> &'static str {
        match self {
            Self::TitleFirst => "tf",
            Self::KeywordsHighlighted => "kh",
        }
    }

    fn ordinal(self) -> u64 {
        match self {
            Self::TitleFirst => 0,
            Self::KeywordsHighlighted => 1,
        }
    }
}

/// Concatenates the variant's fields, tokenizes and keeps the first
/// `max_tokens` tokens.
pub fn serialize_fields(doc: &Document, variant: FieldOrderVariant, max_tokens: usize) -> TokenSequence {
    let mut seq = TokenSequence::new();
    if variant == FieldOrderVariant::KeywordsHighlighted {
        for kw in &doc.keywords {
            seq.extend(tokenize(kw));
        }
    }
    seq.extend(tokenize(&doc.title));
    seq.extend(tokenize(&doc.abstract_text));
    seq.truncate(max_tokens);
    seq
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub field_order: FieldOrderVariant,
    pub mask_enabled: bool,
    #[serde(default)]
    pub mask_mode: MaskMode,
    pub substitution_rate: f64,
    pub noise_rate: f64,
    pub max_tokens: usize,
    pub subsample_target: usize,
    pub seed: u64,
}

impl AugmentPlan {
    pub fn new(subsample_target: usize, seed: u64) -> Self {
        AugmentPlan {
            field_order: FieldOrderVariant::TitleFirst,
            mask_enabled: false,
            mask_mode: MaskMode::Mask,
            substitution_rate: DEFAULT_SUBSTITUTION_RATE,
            noise_rate: DEFAULT_NOISE_RATE,
            max_tokens: DEFAULT_MAX_TOKENS,
            subsample_target,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("substitution_rate", self.substitution_rate), ("noise_rate", self.noise_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Invalid(format!("{name} {r} outside [0,1]")));
            }
        }
        if self.substitution_rate + self.noise_rate > 1.0 {
            return Err(Error::Invalid("substitution_rate + noise_rate exceeds 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::Invalid("max_tokens must be at least 1".into()));
        }
        if self.subsample_target == 0 {
            return Err(Error::Invalid("subsample_target must be at least 1".into()));
        }
        Ok(())
    }

    /// Whether the substitution/noise arm is active.
    pub fn perturbed(&self) -> bool {
        self.substitution_rate > 0.0 || self.noise_rate > 0.0
    }

    pub fn sample_id(&self) -> String {
        format!(
            "{}-{}-{}",
            self.field_order.code(),
            if self.mask_enabled { "masked" } else { "plain" },
            if self.perturbed() { "noisy" } else { "clean" }
        )
    }
}

/// Which axes of the factorial design are expanded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentAxes {
    pub field_orders: Vec<FieldOrderVariant>,
    pub mask: bool,
    pub perturb: bool,
}

impl Default for AugmentAxes {
    fn default() -> Self {
        AugmentAxes {
            field_orders: FieldOrderVariant::ALL.to_vec(),
            mask: true,
            perturb: true,
        }
    }
}

impl AugmentAxes {
    /// One plain, unperturbed title-first sample.
    pub fn none() -> Self {
        AugmentAxes {
            field_orders: vec![FieldOrderVariant::TitleFirst],
            mask: false,
            perturb: false,
        }
    }
}

/// Resources the enabled axes draw on.
#[derive(Clone, Default)]
pub struct Lexicons {
    pub mask: Option<MaskLexicon>,
    pub synonyms: Option<SynonymLexicon>,
    /// Overrides the default corpus-vocabulary noise.
    pub noise: Option<Arc<dyn NoiseProvider + Send + Sync>>,
}

impl Lexicons {
    pub fn bundled() -> Self {
        Lexicons {
            mask: Some(MaskLexicon::covid(MaskMode::Mask)),
            synonyms: Some(SynonymLexicon::bundled()),
            noise: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub doc_id: String,
    pub tokens: TokenSequence,
    pub labels: LabelSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub sample_id: String,
    /// Position in the full factorial design.
    pub index: u64,
    pub plan: AugmentPlan,
    pub label_space: Arc<LabelSpace>,
    pub rows: Vec<SampleRow>,
    pub noise_replaced: usize,
    pub noise_failures: usize,
}

/// Expands the factorial design and runs
/// serialize -> mask -> substitute -> noise -> subsample for every plan.
///
/// The perturbed arm uses the rates in `base`; the clean arm zeroes them.
pub fn build_samples(
    d: &Dataset,
    base: &AugmentPlan,
    axes: &AugmentAxes,
    lexicons: &Lexicons,
) -> Result<Vec<TrainingSample>> {
    base.validate()?;
    if axes.field_orders.is_empty() {
        return Err(Error::Invalid("no field order selected".into()));
    }
    if axes.mask && lexicons.mask.is_none() {
        return Err(Error::Invalid("mask axis enabled without a mask lexicon".into()));
    }
    if axes.perturb && !base.perturbed() {
        return Err(Error::Invalid(
            "perturbation axis enabled but substitution and noise rates are both zero".into(),
        ));
    }
    if axes.perturb && base.substitution_rate > 0.0 && lexicons.synonyms.is_none() {
        return Err(Error::Invalid("substitution enabled without a synonym lexicon".into()));
    }

    let mut plans = Vec::new();
    let mut orders = axes.field_orders.clone();
    orders.sort();
    orders.dedup();
    for order in orders {
        for mask in [false, true] {
            if mask && !axes.mask {
                continue;
            }
            for perturb in [false, true] {
                if perturb && !axes.perturb {
                    continue;
                }
                let index = order.ordinal() * 4 + (mask as u64) * 2 + perturb as u64;
                let mut plan = base.clone();
                plan.field_order = order;
                plan.mask_enabled = mask;
                if !perturb {
                    plan.substitution_rate = 0.0;
                    plan.noise_rate = 0.0;
                }
                plan.seed = derive_seed(base.seed, index);
                plans.push((index, plan));
            }
        }
    }

    plans
        .into_par_iter()
        .map(|(index, plan)| build_one(d, index, plan, lexicons))
        .collect()
}

fn build_one(d: &Dataset, index: u64, plan: AugmentPlan, lexicons: &Lexicons) -> Result<TrainingSample> {
    let mask_lex = lexicons
        .mask
        .as_ref()
        .map(|l| l.clone().with_mode(plan.mask_mode));
    let mut seqs: Vec<TokenSequence> = d
        .documents()
        .iter()
        .map(|doc| {
            let seq = serialize_fields(doc, plan.field_order, plan.max_tokens);
            match (&mask_lex, plan.mask_enabled) {
                (Some(lex), true) => mask_lexicon_terms(&seq, lex),
                _ => seq,
            }
        })
        .collect();

    if plan.substitution_rate > 0.0 {
        let lex = lexicons
            .synonyms
            .as_ref()
            .ok_or_else(|| Error::Invalid("substitution enabled without a synonym lexicon".into()))?;
        let stream = derive_seed(plan.seed, STREAM_SUBSTITUTE);
        for (i, seq) in seqs.iter_mut().enumerate() {
            *seq = substitute_synonyms(seq, lex, plan.substitution_rate, derive_seed(stream, i as u64));
        }
    }

    let (mut replaced, mut failures) = (0, 0);
    if plan.noise_rate > 0.0 {
        let default_provider;
        let provider: &dyn NoiseProvider = match &lexicons.noise {
            Some(p) => p.as_ref(),
            None => {
                default_provider = VocabularyNoise::from_corpus(&seqs);
                &default_provider
            }
        };
        let stream = derive_seed(plan.seed, STREAM_NOISE);
        for (i, seq) in seqs.iter_mut().enumerate() {
            let out = inject_noise(seq, provider, plan.noise_rate, derive_seed(stream, i as u64));
            replaced += out.replaced;
            failures += out.failures;
            *seq = out.tokens;
            seq.truncate(plan.max_tokens);
        }
    }

    let target = plan.subsample_target.min(d.len());
    let (group_of, sizes) = d.group_ids();
    let keep = weighted_subsample_indices(&group_of, &sizes, target, derive_seed(plan.seed, STREAM_SUBSAMPLE))?;

    let rows = keep
        .into_iter()
        .map(|i| SampleRow {
            doc_id: d.documents()[i].id.clone(),
            tokens: std::mem::take(&mut seqs[i]),
            labels: d.documents()[i].labels.clone(),
        })
        .collect();

    Ok(TrainingSample {
        sample_id: plan.sample_id(),
        index,
        plan,
        label_space: Arc::clone(d.label_space()),
        rows,
        noise_replaced: replaced,
        noise_failures: failures,
    })
}

#[derive(Serialize, Deserialize)]
struct RowRecord {
    id: String,
    tokens: Vec<String>,
    labels: Vec<String>,
}

/// Sidecar describing how a sample file was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleManifest {
    pub sample_id: String,
    pub index: u64,
    pub plan: AugmentPlan,
    pub label_space: Vec<String>,
    pub rows: usize,
    pub noise_replaced: usize,
    pub noise_failures: usize,
    /// SHA-256 of the rows file.
    pub digest: String,
}

impl TrainingSample {
    pub fn rows_path(dir: &Path, sample_id: &str) -> PathBuf {
        dir.join(format!("{sample_id}.jsonl"))
    }

    pub fn manifest_path(dir: &Path, sample_id: &str) -> PathBuf {
        dir.join(format!("{sample_id}.plan.json"))
    }

    pub fn rows_jsonl(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        for row in &self.rows {
            let rec = RowRecord {
                id: row.doc_id.clone(),
                tokens: row.tokens.to_vec(),
                labels: row.labels.names(&self.label_space).into_iter().map(String::from).collect(),
            };
            serde_json::to_writer(&mut buf, &rec)?;
            buf.push(b'\n');
        }
        Ok(buf)
    }

    /// SHA-256 of the rows file this sample saves to.
    pub fn digest(&self) -> Result<String> {
        Ok(crate::hash::sha256_hex(&self.rows_jsonl()?))
    }

    /// Writes `<id>.jsonl` and `<id>.plan.json` into `dir`; returns the
    /// manifest.
    pub fn save(&self, dir: &Path) -> Result<SampleManifest> {
        let rows = self.rows_jsonl()?;
        let manifest = SampleManifest {
            sample_id: self.sample_id.clone(),
            index: self.index,
            plan: self.plan.clone(),
            label_space: self.label_space.names().to_vec(),
            rows: self.rows.len(),
            noise_replaced: self.noise_replaced,
            noise_failures: self.noise_failures,
            digest: crate::hash::sha256_hex(&rows),
        };
        crate::io::write_atomic(&Self::rows_path(dir, &self.sample_id), &rows)?;
        crate::io::write_json_pretty(&Self::manifest_path(dir, &self.sample_id), &manifest)?;
        Ok(manifest)
    }

    /// Loads a sample from its sidecar manifest path.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest: SampleManifest = crate::io::read_json(manifest_path)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let rows_path = Self::rows_path(dir, &manifest.sample_id);
        let bytes = fs::read(&rows_path).map_err(|e| Error::io(&rows_path, e))?;
        if crate::hash::sha256_hex(&bytes) != manifest.digest {
            return Err(Error::Invalid(format!(
                "{} does not match the digest in its manifest",
                rows_path.display()
            )));
        }
        let space = Arc::new(LabelSpace::new(manifest.label_space.clone())?);
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::parse(&rows_path, 0, "not valid UTF-8"))?;
        let mut rows = Vec::with_capacity(manifest.rows);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: RowRecord = serde_json::from_str(line)
                .map_err(|e| Error::parse(&rows_path, i + 1, e.to_string()))?;
            let labels = LabelSet::from_names(&space, &rec.labels)
                .map_err(|n| Error::parse(&rows_path, i + 1, format!("unknown label {n:?}")))?;
            rows.push(SampleRow {
                doc_id: rec.id,
                tokens: TokenSequence::from_tokens(rec.tokens),
                labels,
            });
        }
        Ok(TrainingSample {
            sample_id: manifest.sample_id,
            index: manifest.index,
            plan: manifest.plan,
            label_space: space,
            rows,
            noise_replaced: manifest.noise_replaced,
            noise_failures: manifest.noise_failures,
        })
    }
}

/// Every sample in `dir`, ordered by factorial index.
pub fn load_samples(dir: &Path) -> Result<Vec<TrainingSample>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".plan.json"))
        .collect();
    paths.sort();
    let mut samples = paths.iter().map(|p| TrainingSample::load(p)).collect::<Result<Vec<_>>>()?;
    samples.sort_by(|a, b| a.index.cmp(&b.index).then_with(|| a.sample_id.cmp(&b.sample_id)));
    if samples.is_empty() {
        return Err(Error::Invalid(format!("no samples found in {}", dir.display())));
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(title: &str, keywords: &[&str], abstract_text: &str) -> Document {
        Document {
            id: "d".into(),
            title: title.into(),
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            abstract_text: abstract_text.into(),
            labels: LabelSet::empty(7),
        }
    }

    #[test]
    fn truncates_to_first_tokens() {
        let words: Vec<String> = (0..398).map(|i| format!("w{i}")).collect();
        let d = doc("alpha beta", &[], &words.join(" "));
        let full = serialize_fields(&d, FieldOrderVariant::TitleFirst, usize::MAX);
        assert_eq!(full.len(), 400);
        let cut = serialize_fields(&d, FieldOrderVariant::TitleFirst, 350);
        assert_eq!(&*cut, &full[..350]);
    }

    #[test]
    fn empty_keywords_make_variants_equal() {
        let d = doc("A title", &[], "Some abstract text.");
        assert_eq!(
            serialize_fields(&d, FieldOrderVariant::KeywordsHighlighted, 350),
            serialize_fields(&d, FieldOrderVariant::TitleFirst, 350)
        );
    }

    #[test]
    fn keywords_push_out_the_conclusion() {
        let body: Vec<String> = (0..340).map(|i| format!("b{i}")).collect();
        let d = doc(
            "short title",
            &["key one", "key two", "key three", "key four"],
            &format!("{} in conclusion masks work", body.join(" ")),
        );
        let tf = serialize_fields(&d, FieldOrderVariant::TitleFirst, 350);
        let kh = serialize_fields(&d, FieldOrderVariant::KeywordsHighlighted, 350);
        assert_eq!(tf.len(), 346);
        assert_eq!(kh.len(), 350);
        assert!(tf.iter().any(|t| t == "conclusion"));
        assert!(!kh.iter().any(|t| t == "conclusion"));
        assert_eq!(&kh[..2], &["key", "one"]);
    }

    #[test]
    fn plan_validation() {
        let mut p = AugmentPlan::new(10, 0);
        assert!(p.validate().is_ok());
        p.substitution_rate = 0.7;
        p.noise_rate = 0.4;
        assert!(p.validate().is_err());
        p.noise_rate = 0.0;
        p.max_tokens = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn sample_ids() {
        let mut p = AugmentPlan::new(10, 0);
        assert_eq!(p.sample_id(), "tf-plain-noisy");
        p.field_order = FieldOrderVariant::KeywordsHighlighted;
        p.mask_enabled = true;
        p.noise_rate = 0.0;
        p.substitution_rate = 0.0;
        assert_eq!(p.sample_id(), "kh-masked-clean");
    }
}
