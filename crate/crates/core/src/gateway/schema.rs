//! Reply schemas and structured-output extraction.
//!
//! Providers are asked to answer with a fenced JSON block; the parser takes
//! the first well-formed block (tolerating prose around it) and validates it
//! against the reply schema named by the request. Violations are collected
//! as human-readable strings so they can be fed back to the producing agent.

use std::collections::BTreeMap;

use serde_json::Value;

use super::StructuredReply;

/// Expected shape of a JSON value. All object fields are required.
#[derive(Debug, Clone)]
pub enum ValueSpec {
    Bool,
    Str {
        nonempty: bool,
    },
    NullableStr,
    Array {
        item: Box<ValueSpec>,
        min_len: usize,
    },
    Object {
        fields: Vec<(String, ValueSpec)>,
    },
}

impl ValueSpec {
    pub fn string() -> Self {
        ValueSpec::Str { nonempty: false }
    }

    pub fn nonempty_string() -> Self {
        ValueSpec::Str { nonempty: true }
    }

    pub fn array_of(item: ValueSpec, min_len: usize) -> Self {
        ValueSpec::Array {
            item: Box::new(item),
            min_len,
        }
    }

    pub fn object<const N: usize>(fields: [(&str, ValueSpec); N]) -> Self {
        ValueSpec::Object {
            fields: fields
                .into_iter()
                .map(|(name, spec)| (name.to_string(), spec))
                .collect(),
        }
    }

    fn check(&self, value: &Value, path: &str, errors: &mut Vec<String>) {
        let at = |suffix: &str| {
            if path.is_empty() {
                suffix.to_string()
            } else if suffix.is_empty() {
                path.to_string()
            } else {
                format!("{path}.{suffix}")
            }
        };
        match self {
            ValueSpec::Bool => {
                if !value.is_boolean() {
                    errors.push(format!("{}: expected boolean", at("")));
                }
            }
            ValueSpec::Str { nonempty } => match value.as_str() {
                Some(s) if *nonempty && s.trim().is_empty() => {
                    errors.push(format!("{}: expected nonempty string", at("")))
                }
                Some(_) => {}
                None => errors.push(format!("{}: expected string", at(""))),
            },
            ValueSpec::NullableStr => {
                if !value.is_null() && !value.is_string() {
                    errors.push(format!("{}: expected string or null", at("")));
                }
            }
            ValueSpec::Array { item, min_len } => match value.as_array() {
                Some(items) => {
                    if items.len() < *min_len {
                        errors.push(format!(
                            "{}: expected at least {} item(s), found {}",
                            at(""),
                            min_len,
                            items.len()
                        ));
                    }
                    for (i, element) in items.iter().enumerate() {
                        let item_path = if path.is_empty() {
                            format!("[{i}]")
                        } else {
                            format!("{path}[{i}]")
                        };
                        item.check(element, &item_path, errors);
                    }
                }
                None => errors.push(format!("{}: expected array", at(""))),
            },
            ValueSpec::Object { fields } => match value.as_object() {
                Some(map) => {
                    for (name, spec) in fields {
                        match map.get(name) {
                            Some(field_value) => spec.check(field_value, &at(name), errors),
                            None => errors.push(if path.is_empty() {
                                format!("missing key: {name}")
                            } else {
                                format!("{path}: missing key: {name}")
                            }),
                        }
                    }
                }
                None => errors.push(format!("{}: expected object", at(""))),
            },
        }
    }
}

/// A named reply shape.
#[derive(Debug, Clone)]
pub struct ReplySchema {
    id: String,
    root: ValueSpec,
}

impl ReplySchema {
    pub fn new(id: impl Into<String>, root: ValueSpec) -> Self {
        ReplySchema {
            id: id.into(),
            root,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn validate(&self, value: &Value) -> Vec<String> {
        let mut errors = Vec::new();
        self.root.check(value, "", &mut errors);
        errors
    }

    /// Extracts structured output from raw provider text and validates it.
    /// The result always satisfies the reply invariant: `parsed` is present
    /// exactly when `format_errors` is empty.
    pub fn parse_reply(&self, raw_text: impl Into<String>) -> StructuredReply {
        let raw_text = raw_text.into();
        match extract_structured(&raw_text) {
            Ok(value) => {
                let format_errors = self.validate(&value);
                if format_errors.is_empty() {
                    StructuredReply {
                        raw_text,
                        parsed: Some(value),
                        format_errors,
                    }
                } else {
                    StructuredReply {
                        raw_text,
                        parsed: None,
                        format_errors,
                    }
                }
            }
            Err(reason) => StructuredReply {
                raw_text,
                parsed: None,
                format_errors: vec![reason],
            },
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SchemaRegistry {
    schemas: BTreeMap<String, ReplySchema>,
}

impl SchemaRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, schema: ReplySchema) {
        self.schemas.insert(schema.id().to_string(), schema);
    }

    pub fn get(&self, id: &str) -> Option<&ReplySchema> {
        self.schemas.get(id)
    }
}

/// Pulls the first well-formed JSON value out of provider text: fenced
/// blocks are tried first, then the whole text, then the outermost brace
/// span (providers often wrap the payload in prose).
pub fn extract_structured(raw: &str) -> Result<Value, String> {
    for block in fenced_blocks(raw) {
        if let Ok(value) = serde_json::from_str::<Value>(block.trim()) {
            return Ok(value);
        }
    }
    let trimmed = raw.trim();
    if let Ok(value) = serde_json::from_str::<Value>(trimmed) {
        return Ok(value);
    }
    if let (Some(start), Some(end)) = (trimmed.find('{'), trimmed.rfind('}')) {
        if start < end {
            if let Ok(value) = serde_json::from_str::<Value>(&trimmed[start..=end]) {
                return Ok(value);
            }
        }
    }
    Err("no well-formed structured block found in reply".to_string())
}

fn fenced_blocks(raw: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut block_start: Option<usize> = None;
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        let trimmed = line.trim();
        if trimmed.starts_with("```") {
            match block_start {
                // Opening fence: content starts on the next line.
                None => block_start = Some(offset + line.len()),
                Some(start) => {
                    blocks.push(&raw[start..offset]);
                    block_start = None;
                }
            }
        }
        offset += line.len();
    }
    blocks
}
