//! Prompt templates with `{{placeholder}}` substitution.

use std::collections::BTreeMap;
use std::path::Path;

use super::{GatewayError, PromptRequest};

/// Named prompt templates. Defaults are installed by the agents module;
/// individual templates can be overridden from a directory of `.txt` files
/// whose stems name the template ids.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, String>,
}

impl TemplateRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, text: impl Into<String>) {
        self.templates.insert(id.into(), text.into());
    }

    pub fn contains(&self, id: &str) -> bool {
        self.templates.contains_key(id)
    }

    /// Overrides templates from `dir/*.txt`, keyed by file stem.
    pub fn load_dir(&mut self, dir: &Path) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                self.templates
                    .insert(stem.to_string(), std::fs::read_to_string(&path)?);
            }
        }
        Ok(())
    }

    /// Substitutes every `{{name}}` placeholder; each one must have a
    /// binding in the request. Bindings without placeholders are allowed
    /// (they still key the request digest).
    pub fn render(&self, request: &PromptRequest) -> Result<String, GatewayError> {
        let template = self
            .templates
            .get(&request.template_id)
            .ok_or_else(|| GatewayError::UnknownTemplate(request.template_id.clone()))?;
        render_template(template, &request.template_id, &request.variables)
    }
}

fn render_template(
    template: &str,
    template_id: &str,
    variables: &BTreeMap<String, String>,
) -> Result<String, GatewayError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = after[..end].trim();
                let value = variables
                    .get(name)
                    .ok_or_else(|| GatewayError::MissingBinding {
                        template_id: template_id.to_string(),
                        placeholder: name.to_string(),
                    })?;
                out.push_str(value);
                rest = &after[end + 2..];
            }
            None => {
                // Unterminated braces are literal text.
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(vars: &[(&str, &str)]) -> PromptRequest {
        let mut req = PromptRequest::new("t", "s");
        for (k, v) in vars {
            req = req.var(*k, *v);
        }
        req
    }

    #[test]
    fn substitutes_all_placeholders() {
        let vars = request(&[("a", "1"), ("b", "2")]).variables;
        let out = render_template("x {{a}} y {{ b }} z {{a}}", "t", &vars).unwrap();
        assert_eq!(out, "x 1 y 2 z 1");
    }

    #[test]
    fn reports_first_missing_binding() {
        let vars = request(&[("a", "1")]).variables;
        match render_template("{{a}} {{missing}}", "t", &vars) {
            Err(GatewayError::MissingBinding { placeholder, .. }) => {
                assert_eq!(placeholder, "missing")
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn unterminated_braces_stay_literal() {
        let vars = request(&[]).variables;
        assert_eq!(render_template("a {{ b", "t", &vars).unwrap(), "a {{ b");
    }

    #[test]
    fn extra_bindings_are_allowed() {
        let vars = request(&[("a", "1"), ("unused", "2")]).variables;
        assert_eq!(render_template("{{a}}", "t", &vars).unwrap(), "1");
    }
}
