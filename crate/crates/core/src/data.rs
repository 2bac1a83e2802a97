//! Paired-modality samples with protected attributes.
//!
//! Dataset files are line-delimited JSON. The first line is a header object
//! carrying `format_version` (and optionally `config_hash`); every following
//! line is one record:
//!
//! ```text
//! {"format_version":1}
//! {"id":"s0","image_features":[0.1,0.2],"text_features":[0.3,0.4],"label":1,"race":"Asian"}
//! ```
//!
//! Records hold one field per schema attribute, named after the attribute and
//! holding the level name. Schema files are TOML:
//!
//! ```toml
//! format_version = 1
//! image_dim = 2
//! text_dim = 2
//!
//! [[attributes]]
//! name = "race"
//! levels = ["Asian", "Black", "White"]
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{Error, Result, FORMAT_VERSION};

/// Random state owned by a sampler.
pub type SamplerRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub levels: Vec<String>,
}

/// Ordered protected attributes and their ordered levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Attribute>", into = "Vec<Attribute>")]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let mut names = HashSet::new();
        for attr in &attributes {
            if !names.insert(attr.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute `{}`", attr.name)));
            }
            if attr.levels.len() < 2 {
                return Err(Error::Schema(format!(
                    "attribute `{}` needs at least 2 levels",
                    attr.name
                )));
            }
            let mut levels = HashSet::new();
            for level in &attr.levels {
                if !levels.insert(level.as_str()) {
                    return Err(Error::Schema(format!(
                        "duplicate level `{level}` in attribute `{}`",
                        attr.name
                    )));
                }
            }
            if matches!(
                attr.name.as_str(),
                "id" | "image_features" | "text_features" | "label"
            ) {
                return Err(Error::Schema(format!(
                    "attribute name `{}` clashes with a record field",
                    attr.name
                )));
            }
        }
        Ok(Self { attributes })
    }

    /// Convenience constructor from string slices.
    pub fn from_pairs(pairs: &[(&str, &[&str])]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|(name, levels)| Attribute {
                    name: (*name).to_string(),
                    levels: levels.iter().map(|l| (*l).to_string()).collect(),
                })
                .collect(),
        )
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    /// Position of the attribute in schema order.
    pub fn position(&self, name: &str) -> Result<usize> {
        self.attributes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn attribute(&self, name: &str) -> Result<&Attribute> {
        Ok(&self.attributes[self.position(name)?])
    }
}

impl TryFrom<Vec<Attribute>> for AttributeSchema {
    type Error = Error;

    fn try_from(value: Vec<Attribute>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<AttributeSchema> for Vec<Attribute> {
    fn from(value: AttributeSchema) -> Self {
        value.attributes
    }
}

/// Attribute schema plus declared feature dimensions; the content of a schema file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub format_version: u32,
    pub image_dim: usize,
    pub text_dim: usize,
    pub attributes: AttributeSchema,
}

impl DatasetSchema {
    pub fn new(image_dim: usize, text_dim: usize, attributes: AttributeSchema) -> Result<Self> {
        let schema = Self {
            format_version: FORMAT_VERSION,
            image_dim,
            text_dim,
            attributes,
        };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.image_dim == 0 || self.text_dim == 0 {
            return Err(Error::Schema("feature dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: DatasetSchema =
            toml::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string(self).map_err(|e| Error::Schema(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// One paired record. `attribute_values` holds a level index per schema
/// attribute, in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image_features: Vec<f64>,
    pub text_features: Vec<f64>,
    pub label: u8,
    pub attribute_values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: AttributeSchema,
    pub samples: Vec<Sample>,
    pub image_dim: usize,
    pub text_dim: usize,
}

impl Dataset {
    /// Validates every sample against the schema and dimensions.
    pub fn new(
        schema: AttributeSchema,
        image_dim: usize,
        text_dim: usize,
        samples: Vec<Sample>,
    ) -> Result<Self> {
        let mut ids = HashSet::new();
        for (i, s) in samples.iter().enumerate() {
            check_sample(&schema, image_dim, text_dim, s).map_err(|msg| {
                Error::Schema(format!("sample {i} (`{}`): {msg}", s.id))
            })?;
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Schema(format!("duplicate id `{}`", s.id)));
            }
        }
        Ok(Self {
            schema,
            samples,
            image_dim,
            text_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dataset_schema(&self) -> DatasetSchema {
        DatasetSchema {
            format_version: FORMAT_VERSION,
            image_dim: self.image_dim,
            text_dim: self.text_dim,
            attributes: self.schema.clone(),
        }
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            image_dim: self.image_dim,
            text_dim: self.text_dim,
        }
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Image features of the given samples as rows.
    pub fn image_matrix(&self, indices: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn((indices.len(), self.image_dim), |(r, c)| {
            self.samples[indices[r]].image_features[c]
        })
    }

    /// Text features of the given samples as rows.
    pub fn text_matrix(&self, indices: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn((indices.len(), self.text_dim), |(r, c)| {
            self.samples[indices[r]].text_features[c]
        })
    }

    /// Level index of every sample for one attribute.
    pub fn levels_of(&self, attribute_name: &str) -> Result<Vec<usize>> {
        let pos = self.schema.position(attribute_name)?;
        Ok(self.samples.iter().map(|s| s.attribute_values[pos]).collect())
    }
}

fn check_sample(
    schema: &AttributeSchema,
    image_dim: usize,
    text_dim: usize,
    s: &Sample,
) -> std::result::Result<(), String> {
    if s.image_features.len() != image_dim {
        return Err(format!(
            "image_features has {} values, expected {image_dim}",
            s.image_features.len()
        ));
    }
    if s.text_features.len() != text_dim {
        return Err(format!(
            "text_features has {} values, expected {text_dim}",
            s.text_features.len()
        ));
    }
    if s.image_features.iter().chain(&s.text_features).any(|v| !v.is_finite()) {
        return Err("non-finite feature value".into());
    }
    if s.label > 1 {
        return Err(format!("label {} is not 0 or 1", s.label));
    }
    if s.attribute_values.len() != schema.len() {
        return Err(format!(
            "{} attribute values for {} schema attributes",
            s.attribute_values.len(),
            schema.len()
        ));
    }
    for (attr, &level) in schema.attributes().iter().zip(&s.attribute_values) {
        if level >= attr.levels.len() {
            return Err(format!("level index {level} out of range for `{}`", attr.name));
        }
    }
    Ok(())
}

/// Reads a dataset file. Sample order equals file order.
pub fn load_dataset(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path, schema)
}

pub(crate) fn parse_dataset(text: &str, path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (hline, header) = lines
        .next()
        .ok_or_else(|| err(1, "missing header record".into()))?;
    let header: Value =
        serde_json::from_str(header).map_err(|e| err(hline, format!("bad header: {e}")))?;
    match header.get("format_version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => return Err(err(hline, format!("unsupported format_version {v}"))),
        None => return Err(err(hline, "header lacks format_version".into())),
    }

    let attrs = schema.attributes.attributes();
    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    for (line, raw) in lines {
        let value: Value =
            serde_json::from_str(raw).map_err(|e| err(line, format!("malformed record: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| err(line, "record is not an object".into()))?;

        let id = obj
            .get("id")
            .and_then(Value::as_str)
            .ok_or_else(|| err(line, "missing string field `id`".into()))?
            .to_string();
        let features = |key: &str, dim: usize| -> Result<Vec<f64>> {
            let arr = obj
                .get(key)
                .and_then(Value::as_array)
                .ok_or_else(|| err(line, format!("missing array field `{key}`")))?;
            let values = arr
                .iter()
                .map(|v| v.as_f64())
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| err(line, format!("`{key}` holds a non-number")))?;
            if values.len() != dim {
                return Err(err(
                    line,
                    format!("`{key}` has {} values, expected {dim}", values.len()),
                ));
            }
            Ok(values)
        };
        let image_features = features("image_features", schema.image_dim)?;
        let text_features = features("text_features", schema.text_dim)?;
        let label = match obj.get("label").and_then(Value::as_u64) {
            Some(l @ (0 | 1)) => l as u8,
            _ => return Err(err(line, "`label` must be 0 or 1".into())),
        };

        let mut attribute_values = Vec::with_capacity(attrs.len());
        for attr in attrs {
            let level = obj
                .get(&attr.name)
                .and_then(Value::as_str)
                .ok_or_else(|| err(line, format!("missing attribute `{}`", attr.name)))?;
            let idx = attr.levels.iter().position(|l| l == level).ok_or_else(|| {
                err(
                    line,
                    format!("unknown level `{level}` for attribute `{}`", attr.name),
                )
            })?;
            attribute_values.push(idx);
        }
        let known = 4 + attrs.len();
        if obj.len() != known {
            let extra: Vec<_> = obj
                .keys()
                .filter(|k| {
                    !matches!(
                        k.as_str(),
                        "id" | "image_features" | "text_features" | "label"
                    ) && !attrs.iter().any(|a| &a.name == *k)
                })
                .collect();
            return Err(err(line, format!("unexpected fields {extra:?}")));
        }
        if !ids.insert(id.clone()) {
            return Err(err(line, format!("duplicate id `{id}`")));
        }
        let sample = Sample {
            id,
            image_features,
            text_features,
            label,
            attribute_values,
        };
        check_sample(&schema.attributes, schema.image_dim, schema.text_dim, &sample)
            .map_err(|m| err(line, m))?;
        samples.push(sample);
    }

    Ok(Dataset {
        schema: schema.attributes.clone(),
        samples,
        image_dim: schema.image_dim,
        text_dim: schema.text_dim,
    })
}

/// Serializes a dataset in canonical field order.
pub fn dataset_to_string(ds: &Dataset, config_hash: Option<&str>) -> String {
    let mut out = String::new();
    match config_hash {
        Some(h) => {
            let _ = writeln!(
                out,
                "{{\"format_version\":{FORMAT_VERSION},\"config_hash\":{}}}",
                Value::from(h)
            );
        }
        None => {
            let _ = writeln!(out, "{{\"format_version\":{FORMAT_VERSION}}}");
        }
    }
    for s in &ds.samples {
        out.push_str("{\"id\":");
        out.push_str(&Value::from(s.id.as_str()).to_string());
        out.push_str(",\"image_features\":");
        push_floats(&mut out, &s.image_features);
        out.push_str(",\"text_features\":");
        push_floats(&mut out, &s.text_features);
        let _ = write!(out, ",\"label\":{}", s.label);
        for (attr, &level) in ds.schema.attributes().iter().zip(&s.attribute_values) {
            let _ = write!(
                out,
                ",{}:{}",
                Value::from(attr.name.as_str()),
                Value::from(attr.levels[level].as_str())
            );
        }
        out.push_str("}\n");
    }
    out
}

fn push_floats(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        // serde_json prints the shortest representation that parses back exactly
        out.push_str(&serde_json::to_string(v).expect("finite float"));
    }
    out.push(']');
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>, config_hash: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset_to_string(ds, config_hash)).map_err(|e| Error::io(path, e))
}

/// Sample indices grouped by level of one attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    pub attribute_name: String,
    /// `groups[level]` lists the indices of samples at that level.
    pub groups: Vec<Vec<usize>>,
}

impl GroupPartition {
    pub fn group(&self, level: usize) -> &[usize] {
        self.groups.get(level).map_or(&[], Vec::as_slice)
    }

    pub fn num_levels(&self) -> usize {
        self.groups.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }
}

pub fn partition_by_attribute(ds: &Dataset, attribute_name: &str) -> Result<GroupPartition> {
    let pos = ds.schema.position(attribute_name)?;
    let n_levels = ds.schema.attributes()[pos].levels.len();
    let mut groups = vec![Vec::new(); n_levels];
    for (i, s) in ds.samples.iter().enumerate() {
        groups[s.attribute_values[pos]].push(i);
    }
    Ok(GroupPartition {
        attribute_name: attribute_name.to_string(),
        groups,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub batch_size: usize,
    pub group_batch_size: usize,
    pub seed: u64,
}

impl BatchSpec {
    pub fn new(batch_size: usize, group_batch_size: usize, seed: u64) -> Result<Self> {
        let spec = Self {
            batch_size,
            group_batch_size,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::config("batch_size", "must be at least 2"));
        }
        if self.group_batch_size < 1 {
            return Err(Error::config("group_batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Draws `size` indices from `0..n`: without replacement when `size <= n`,
/// with replacement otherwise.
fn draw(n: usize, size: usize, rng: &mut SamplerRng) -> Vec<usize> {
    if size <= n {
        index::sample(rng, n, size).into_vec()
    } else {
        (0..size).map(|_| rng.random_range(0..n)).collect()
    }
}

/// Uniform batch over the whole dataset.
pub fn sample_batch(ds: &Dataset, spec: &BatchSpec, rng: &mut SamplerRng) -> Result<Vec<usize>> {
    if ds.is_empty() {
        return Err(Error::Schema("cannot sample a batch from an empty dataset".into()));
    }
    Ok(draw(ds.len(), spec.batch_size, rng))
}

/// Batch restricted to one group of a partition.
pub fn sample_group_batch(
    part: &GroupPartition,
    level: usize,
    size: usize,
    rng: &mut SamplerRng,
) -> Result<Vec<usize>> {
    let group = part.group(level);
    if group.is_empty() {
        return Err(Error::EmptyGroup {
            attribute: part.attribute_name.clone(),
            level,
        });
    }
    Ok(draw(group.len(), size, rng)
        .into_iter()
        .map(|i| group[i])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn schema() -> DatasetSchema {
        DatasetSchema::new(
            2,
            2,
            AttributeSchema::from_pairs(&[
                ("race", &["Asian", "Black", "White"]),
                ("gender", &["Female", "Male"]),
            ])
            .unwrap(),
        )
        .unwrap()
    }

    fn sample(id: &str, gender: usize) -> Sample {
        Sample {
            id: id.into(),
            image_features: vec![0.5, -1.25],
            text_features: vec![3.0, 1e-17],
            label: 1,
            attribute_values: vec![0, gender],
        }
    }

    fn parse(text: &str) -> Result<Dataset> {
        parse_dataset(text, Path::new("mem.jsonl"), &schema())
    }

    #[test]
    fn empty_file_gives_empty_dataset() {
        let ds = parse("{\"format_version\":1}\n").unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn single_record_round_trip() {
        let ds = parse(
            "{\"format_version\":1}\n\
             {\"id\":\"a\",\"image_features\":[1.5,2],\"text_features\":[0,-3],\"label\":1,\"race\":\"Asian\",\"gender\":\"Male\"}\n",
        )
        .unwrap();
        assert_eq!(ds.len(), 1);
        let s = &ds.samples[0];
        assert_eq!(s.id, "a");
        assert_eq!(s.image_features, vec![1.5, 2.0]);
        assert_eq!(s.text_features, vec![0.0, -3.0]);
        assert_eq!(s.label, 1);
        assert_eq!(s.attribute_values, vec![0, 1]);
    }

    #[test]
    fn unknown_level_names_line_and_attribute() {
        let e = parse(
            "{\"format_version\":1}\n\
             {\"id\":\"a\",\"image_features\":[1,2],\"text_features\":[0,3],\"label\":0,\"race\":\"Asian\",\"gender\":\"Male\"}\n\
             {\"id\":\"b\",\"image_features\":[1,2],\"text_features\":[0,3],\"label\":0,\"race\":\"Martian\",\"gender\":\"Male\"}\n",
        )
        .unwrap_err();
        match &e {
            Error::Parse { line, message, .. } => {
                assert_eq!(*line, 3);
                assert!(message.contains("race"), "{message}");
                assert!(message.contains("Martian"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_and_mismatched_records_are_rejected() {
        let bad = [
            "{\"id\":\"a\",\"image_features\":[1,2,3],\"text_features\":[0,3],\"label\":0,\"race\":\"Asian\",\"gender\":\"Male\"}",
            "{\"id\":\"a\",\"image_features\":[1,2],\"text_features\":[0,3],\"label\":2,\"race\":\"Asian\",\"gender\":\"Male\"}",
            "{\"id\":\"a\",\"image_features\":[1,2],\"text_features\":[0,3],\"label\":0,\"race\":\"Asian\"}",
            "{\"id\":\"a\",\"image_features\":[1,2],\"text_features\":[0,3],\"label\":0,\"race\":\"Asian\",\"gender\":\"Male\",\"x\":1}",
            "not json",
        ];
        for rec in bad {
            let e = parse(&format!("{{\"format_version\":1}}\n{rec}\n")).unwrap_err();
            assert!(matches!(e, Error::Parse { line: 2, .. }), "{rec}: {e}");
        }
        let dup = "{\"id\":\"a\",\"image_features\":[1,2],\"text_features\":[0,3],\"label\":0,\"race\":\"Asian\",\"gender\":\"Male\"}";
        let e = parse(&format!("{{\"format_version\":1}}\n{dup}\n{dup}\n")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
        assert!(parse("{\"format_version\":2}\n").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn write_then_load_is_exact() {
        let s = schema();
        let ds = Dataset::new(
            s.attributes.clone(),
            2,
            2,
            vec![sample("x", 0), sample("y", 1)],
        )
        .unwrap();
        let text = dataset_to_string(&ds, Some("abc"));
        let back = parse_dataset(&text, Path::new("m"), &s).unwrap();
        assert_eq!(back, ds);
        assert_eq!(dataset_to_string(&back, Some("abc")), text);
    }

    #[test]
    fn schema_validation() {
        assert!(AttributeSchema::from_pairs(&[("a", &["x"])]).is_err());
        assert!(AttributeSchema::from_pairs(&[("a", &["x", "x"])]).is_err());
        assert!(AttributeSchema::from_pairs(&[("a", &["x", "y"]), ("a", &["x", "y"])]).is_err());
        assert!(AttributeSchema::from_pairs(&[("label", &["x", "y"])]).is_err());
    }

    #[test]
    fn schema_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("schema.toml");
        schema().save(&p).unwrap();
        assert_eq!(DatasetSchema::load(&p).unwrap(), schema());
    }

    #[test]
    fn partition_by_gender() {
        let s = schema();
        let ds = Dataset::new(
            s.attributes.clone(),
            2,
            2,
            vec![sample("a", 0), sample("b", 1), sample("c", 0), sample("d", 1)],
        )
        .unwrap();
        let p = partition_by_attribute(&ds, "gender").unwrap();
        assert_eq!(p.groups, vec![vec![0, 2], vec![1, 3]]);
        let r = partition_by_attribute(&ds, "race").unwrap();
        assert_eq!(r.groups, vec![vec![0, 1, 2, 3], vec![], vec![]]);
        assert!(matches!(
            partition_by_attribute(&ds, "age"),
            Err(Error::UnknownAttribute(_))
        ));
    }

    #[test]
    fn group_batches() {
        let part = GroupPartition {
            attribute_name: "g".into(),
            groups: vec![vec![3, 7], vec![]],
        };
        let mut rng = SamplerRng::seed_from_u64(1);
        let b = sample_group_batch(&part, 0, 2, &mut rng).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|i| [3, 7].contains(i)));
        let b = sample_group_batch(&part, 0, 4, &mut rng).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.iter().all(|i| [3, 7].contains(i)));
        assert!(matches!(
            sample_group_batch(&part, 1, 1, &mut rng),
            Err(Error::EmptyGroup { level: 1, .. })
        ));
    }

    #[test]
    fn batch_spec_validation() {
        assert!(BatchSpec::new(1, 1, 0).is_err());
        assert!(BatchSpec::new(2, 0, 0).is_err());
        assert!(BatchSpec::new(2, 1, 0).is_ok());
    }
}
