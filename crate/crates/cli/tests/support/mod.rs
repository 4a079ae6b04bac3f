//! Structural JSON-schema validation for the report formats. Covers the
//! subset the shipped schemas use: type (single or list), properties,
//! required, additionalProperties: false, items, enum, and $ref within a
//! file or into a sibling file (`file.json#/$defs/name`).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde_json::Value;

pub struct SchemaStore {
    base: PathBuf,
    docs: HashMap<String, Value>,
}

impl SchemaStore {
    pub fn new(base: &Path) -> Self {
        SchemaStore {
            base: base.to_path_buf(),
            docs: HashMap::new(),
        }
    }

    fn load(&mut self, name: &str) -> Value {
        if let Some(doc) = self.docs.get(name) {
            return doc.clone();
        }
        let path = self.base.join(name);
        let text = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("reading schema {}: {e}", path.display()));
        let doc: Value = serde_json::from_str(&text)
            .unwrap_or_else(|e| panic!("parsing schema {name}: {e}"));
        self.docs.insert(name.to_string(), doc.clone());
        doc
    }

    pub fn validate(&mut self, schema_file: &str, instance: &Value) -> Result<(), String> {
        let doc = self.load(schema_file);
        self.check(schema_file, &doc, &doc, instance, "$")
    }

    fn resolve<'a>(doc: &'a Value, fragment: &str) -> &'a Value {
        let mut node = doc;
        for part in fragment.trim_start_matches('/').split('/') {
            node = node
                .get(part)
                .unwrap_or_else(|| panic!("schema fragment /{fragment} missing at {part}"));
        }
        node
    }

    fn check(
        &mut self,
        doc_name: &str,
        doc: &Value,
        schema: &Value,
        instance: &Value,
        path: &str,
    ) -> Result<(), String> {
        if let Some(reference) = schema.get("$ref").and_then(Value::as_str) {
            let (file, fragment) = reference.split_once('#').unwrap_or((reference, ""));
            if file.is_empty() {
                let target = Self::resolve(doc, fragment).clone();
                return self.check(doc_name, doc, &target, instance, path);
            }
            let other = self.load(file);
            let target = Self::resolve(&other, fragment).clone();
            return self.check(file, &other, &target, instance, path);
        }

        if let Some(types) = schema.get("type") {
            let names: Vec<&str> = match types {
                Value::String(s) => vec![s.as_str()],
                Value::Array(list) => list.iter().filter_map(Value::as_str).collect(),
                _ => vec![],
            };
            let actual = match instance {
                Value::Null => "null",
                Value::Bool(_) => "boolean",
                Value::Number(n) => {
                    if n.is_i64() || n.is_u64() {
                        "integer"
                    } else {
                        "number"
                    }
                }
                Value::String(_) => "string",
                Value::Array(_) => "array",
                Value::Object(_) => "object",
            };
            // An integer is a number; schemas saying "number" accept both.
            let ok = names
                .iter()
                .any(|n| *n == actual || (*n == "number" && actual == "integer"));
            if !ok {
                return Err(format!("{path}: expected type {names:?}, got {actual}"));
            }
        }

        if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
            if !allowed.contains(instance) {
                return Err(format!("{path}: value {instance} not in enum {allowed:?}"));
            }
        }

        if let Value::Object(map) = instance {
            if let Some(required) = schema.get("required").and_then(Value::as_array) {
                for key in required.iter().filter_map(Value::as_str) {
                    if !map.contains_key(key) {
                        return Err(format!("{path}: missing required key `{key}`"));
                    }
                }
            }
            let props = schema.get("properties").and_then(Value::as_object);
            if schema.get("additionalProperties") == Some(&Value::Bool(false)) {
                for key in map.keys() {
                    if !props.is_some_and(|p| p.contains_key(key)) {
                        return Err(format!("{path}: unexpected key `{key}`"));
                    }
                }
            }
            if let Some(props) = props {
                for (key, sub) in props {
                    if let Some(value) = map.get(key) {
                        self.check(doc_name, doc, sub, value, &format!("{path}.{key}"))?;
                    }
                }
            }
        }

        if let Value::Array(items) = instance {
            if let Some(sub) = schema.get("items") {
                for (idx, value) in items.iter().enumerate() {
                    self.check(doc_name, doc, sub, value, &format!("{path}[{idx}]"))?;
                }
            }
        }

        Ok(())
    }
}

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas")
}
