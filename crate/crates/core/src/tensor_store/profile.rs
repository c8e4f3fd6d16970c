//! Tensor-name → matrix-key resolution.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::Checkpoint;
use crate::error::{Error, Result};

/// Role of a projection matrix inside a decoder block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MatrixKind {
    Q,
    K,
    V,
    O,
    MlpUp,
    MlpGate,
    MlpDown,
    Other(String),
}

impl MatrixKind {
    /// Kinds touched by surgery and penalties unless configured otherwise.
    pub fn default_selection() -> Vec<MatrixKind> {
        vec![
            MatrixKind::Q,
            MatrixKind::K,
            MatrixKind::V,
            MatrixKind::MlpUp,
            MatrixKind::MlpGate,
            MatrixKind::MlpDown,
        ]
    }
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixKind::Q => f.write_str("q"),
            MatrixKind::K => f.write_str("k"),
            MatrixKind::V => f.write_str("v"),
            MatrixKind::O => f.write_str("o"),
            MatrixKind::MlpUp => f.write_str("mlp_up"),
            MatrixKind::MlpGate => f.write_str("mlp_gate"),
            MatrixKind::MlpDown => f.write_str("mlp_down"),
            MatrixKind::Other(name) => write!(f, "other:{name}"),
        }
    }
}

impl FromStr for MatrixKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "q" => MatrixKind::Q,
            "k" => MatrixKind::K,
            "v" => MatrixKind::V,
            "o" => MatrixKind::O,
            "mlp_up" | "up" => MatrixKind::MlpUp,
            "mlp_gate" | "gate" => MatrixKind::MlpGate,
            "mlp_down" | "down" => MatrixKind::MlpDown,
            other => match other.strip_prefix("other:") {
                Some(name) if !name.is_empty() => MatrixKind::Other(name.to_string()),
                _ => return Err(Error::Profile(format!("unknown matrix kind `{s}`"))),
            },
        })
    }
}

impl Serialize for MatrixKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MatrixKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatrixKey {
    pub layer: usize,
    pub kind: MatrixKind,
}

impl fmt::Display for MatrixKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer{}.{}", self.layer, self.kind)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternSpec {
    /// Glob-like template: `{layer}` captures the layer index, `*` matches any run of characters.
    pub template: String,
    pub kind: MatrixKind,
}

/// Raw, serializable form of a naming profile (TOML on disk).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub name: String,
    pub patterns: Vec<PatternSpec>,
    #[serde(default)]
    pub exclusions: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct NamingProfile {
    config: ProfileConfig,
    patterns: Vec<(Regex, MatrixKind)>,
    exclusions: Vec<Regex>,
}

const DEFAULT_EXCLUSIONS: &[&str] = &[
    "*.bias",
    "*norm*",
    "*embed_tokens*",
    "*lm_head*",
    "*rotary_emb*",
];

const DECODER_PATTERNS: &[(&str, &str)] = &[
    ("self_attn.q_proj", "q"),
    ("self_attn.k_proj", "k"),
    ("self_attn.v_proj", "v"),
    ("self_attn.o_proj", "o"),
    ("mlp.up_proj", "mlp_up"),
    ("mlp.gate_proj", "mlp_gate"),
    ("mlp.down_proj", "mlp_down"),
];

impl NamingProfile {
    pub fn from_config(config: ProfileConfig) -> Result<Self> {
        let patterns = config
            .patterns
            .iter()
            .map(|p| {
                if !p.template.contains("{layer}") {
                    return Err(Error::Profile(format!(
                        "template `{}` has no {{layer}} placeholder",
                        p.template
                    )));
                }
                Ok((glob_regex(&p.template, true)?, p.kind.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let exclusions = config
            .exclusions
            .iter()
            .map(|e| glob_regex(e, false))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            patterns,
            exclusions,
        })
    }

    /// Built-in profile by name: `llama-style` or `qwen-style`.
    pub fn builtin(name: &str) -> Result<Self> {
        let layer_prefix = match name {
            "llama-style" | "qwen-style" => "*model.layers.{layer}.",
            other => return Err(Error::Profile(format!("no built-in profile `{other}`"))),
        };
        let patterns = DECODER_PATTERNS
            .iter()
            .map(|(suffix, kind)| PatternSpec {
                template: format!("{layer_prefix}{suffix}.weight"),
                kind: kind.parse().expect("built-in kind"),
            })
            .collect();
        Self::from_config(ProfileConfig {
            name: name.to_string(),
            patterns,
            exclusions: DEFAULT_EXCLUSIONS.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ProfileConfig =
            toml::from_str(text).map_err(|e| Error::Profile(e.to_string()))?;
        Self::from_config(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// A built-in name, or else a path to a TOML profile.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match name_or_path {
            "llama-style" | "qwen-style" => Self::builtin(name_or_path),
            path => Self::load(Path::new(path)),
        }
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn config(&self) -> &ProfileConfig {
        &self.config
    }

    pub fn is_excluded(&self, name: &str) -> bool {
        self.exclusions.iter().any(|re| re.is_match(name))
    }

    /// Matches a single tensor name. Exclusions win over patterns.
    pub fn classify(&self, name: &str) -> Result<Option<MatrixKey>> {
        if self.is_excluded(name) {
            return Ok(None);
        }
        let mut found = None;
        for (re, kind) in &self.patterns {
            if let Some(caps) = re.captures(name) {
                if found.is_some() {
                    return Err(Error::AmbiguousPattern {
                        name: name.to_string(),
                    });
                }
                let layer = caps["layer"]
                    .parse()
                    .map_err(|_| Error::Profile(format!("layer index overflow in `{name}`")))?;
                found = Some(MatrixKey {
                    layer,
                    kind: kind.clone(),
                });
            }
        }
        Ok(found)
    }
}

fn glob_regex(template: &str, with_layer: bool) -> Result<Regex> {
    let mut out = String::from("^");
    let mut rest = template;
    while !rest.is_empty() {
        if with_layer && rest.starts_with("{layer}") {
            out.push_str(r"(?P<layer>\d+)");
            rest = &rest["{layer}".len()..];
        } else {
            let ch = rest.chars().next().unwrap();
            if ch == '*' {
                out.push_str(".*");
            } else {
                out.push_str(&regex::escape(&ch.to_string()));
            }
            rest = &rest[ch.len_utf8()..];
        }
    }
    out.push('$');
    Regex::new(&out).map_err(|e| Error::Profile(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmatchedReason {
    Excluded,
    NoPattern,
    NotMatrix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnmatchedTensor {
    pub name: String,
    pub reason: UnmatchedReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct KeyResolution {
    /// Sorted by key.
    pub matched: Vec<(MatrixKey, String)>,
    /// Sorted by tensor name.
    pub unmatched: Vec<UnmatchedTensor>,
}

impl KeyResolution {
    pub fn name_of(&self, key: &MatrixKey) -> Option<&str> {
        self.matched
            .binary_search_by(|(k, _)| k.cmp(key))
            .ok()
            .map(|i| self.matched[i].1.as_str())
    }

    pub fn layer_count(&self) -> usize {
        self.matched
            .iter()
            .map(|(k, _)| k.layer + 1)
            .max()
            .unwrap_or(0)
    }
}

/// Maps every tensor in `ckpt` to a [`MatrixKey`] under `profile`.
pub fn resolve_keys(ckpt: &Checkpoint, profile: &NamingProfile) -> Result<KeyResolution> {
    resolve_names(
        ckpt.index()
            .iter()
            .map(|(n, info)| (n.as_str(), info.shape.len())),
        profile,
    )
}

/// Same as [`resolve_keys`] over bare `(name, ndim)` pairs.
pub fn resolve_names<'a>(
    names: impl IntoIterator<Item = (&'a str, usize)>,
    profile: &NamingProfile,
) -> Result<KeyResolution> {
    let mut by_key: BTreeMap<MatrixKey, String> = BTreeMap::new();
    let mut unmatched = Vec::new();
    for (name, ndim) in names {
        let reason = match profile.classify(name)? {
            Some(key) if ndim == 2 => {
                if let Some(prev) = by_key.get(&key) {
                    let (first, second) = if prev.as_str() < name {
                        (prev.clone(), name.to_string())
                    } else {
                        (name.to_string(), prev.clone())
                    };
                    return Err(Error::DuplicateKey {
                        key: key.to_string(),
                        first,
                        second,
                    });
                }
                by_key.insert(key, name.to_string());
                continue;
            }
            Some(_) => UnmatchedReason::NotMatrix,
            None if profile.is_excluded(name) => UnmatchedReason::Excluded,
            None => UnmatchedReason::NoPattern,
        };
        unmatched.push(UnmatchedTensor {
            name: name.to_string(),
            reason,
        });
    }
    unmatched.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(KeyResolution {
        matched: by_key.into_iter().collect(),
        unmatched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn llama() -> NamingProfile {
        NamingProfile::builtin("llama-style").unwrap()
    }

    #[test]
    fn q_proj_resolves_to_layer0_q() {
        let r = resolve_names([("model.layers.0.self_attn.q_proj.weight", 2)], &llama()).unwrap();
        assert_eq!(
            r.matched,
            vec![(
                MatrixKey {
                    layer: 0,
                    kind: MatrixKind::Q
                },
                "model.layers.0.self_attn.q_proj.weight".to_string()
            )]
        );
        assert!(r.unmatched.is_empty());
    }

    #[test]
    fn down_proj_layer3() {
        let key = llama()
            .classify("model.layers.3.mlp.down_proj.weight")
            .unwrap();
        assert_eq!(
            key,
            Some(MatrixKey {
                layer: 3,
                kind: MatrixKind::MlpDown
            })
        );
    }

    #[test]
    fn bias_is_excluded_and_reported() {
        let name = "model.layers.0.self_attn.q_proj.bias";
        let r = resolve_names([(name, 1)], &NamingProfile::builtin("qwen-style").unwrap()).unwrap();
        assert!(r.matched.is_empty());
        assert_eq!(
            r.unmatched,
            vec![UnmatchedTensor {
                name: name.into(),
                reason: UnmatchedReason::Excluded
            }]
        );
    }

    #[test]
    fn nested_prefix_still_matches() {
        let key = llama()
            .classify("language_model.model.layers.12.self_attn.v_proj.weight")
            .unwrap()
            .unwrap();
        assert_eq!(key.layer, 12);
        assert_eq!(key.kind, MatrixKind::V);
    }

    #[test]
    fn norms_and_embeddings_are_excluded() {
        let p = llama();
        for n in [
            "model.embed_tokens.weight",
            "lm_head.weight",
            "model.layers.0.input_layernorm.weight",
            "model.norm.weight",
        ] {
            assert!(p.is_excluded(n), "{n}");
        }
    }

    #[test]
    fn duplicate_key_is_an_error() {
        let cfg = ProfileConfig {
            name: "dup".into(),
            patterns: vec![
                PatternSpec {
                    template: "a.{layer}.x".into(),
                    kind: MatrixKind::Q,
                },
                PatternSpec {
                    template: "b.{layer}.x".into(),
                    kind: MatrixKind::Q,
                },
            ],
            exclusions: vec![],
        };
        let p = NamingProfile::from_config(cfg).unwrap();
        let err = resolve_names([("a.0.x", 2), ("b.0.x", 2)], &p).unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { .. }));
    }

    #[test]
    fn ambiguous_pattern_is_an_error() {
        let p = NamingProfile::from_toml_str(
            r#"
            name = "amb"
            [[patterns]]
            template = "*.{layer}.w"
            kind = "q"
            [[patterns]]
            template = "x.{layer}.*"
            kind = "k"
            "#,
        )
        .unwrap();
        assert!(matches!(
            p.classify("x.1.w"),
            Err(Error::AmbiguousPattern { .. })
        ));
    }

    #[test]
    fn toml_profile_roundtrip() {
        let p = NamingProfile::from_toml_str(
            r#"
            name = "custom"
            exclusions = ["*.bias"]
            [[patterns]]
            template = "blocks.{layer}.attn.wq"
            kind = "q"
            [[patterns]]
            template = "blocks.{layer}.attn.extra"
            kind = "other:extra"
            "#,
        )
        .unwrap();
        assert_eq!(p.name(), "custom");
        assert_eq!(
            p.classify("blocks.7.attn.extra").unwrap().unwrap().kind,
            MatrixKind::Other("extra".into())
        );
        assert_eq!(p.classify("blocks.7.attn.bias").unwrap(), None);
    }

    #[test]
    fn missing_layer_placeholder_rejected() {
        let cfg = ProfileConfig {
            name: "bad".into(),
            patterns: vec![PatternSpec {
                template: "w".into(),
                kind: MatrixKind::Q,
            }],
            exclusions: vec![],
        };
        assert!(NamingProfile::from_config(cfg).is_err());
    }

    #[test]
    fn one_d_match_is_not_matrix() {
        let r = resolve_names([("model.layers.0.self_attn.q_proj.weight", 1)], &llama()).unwrap();
        assert_eq!(r.unmatched[0].reason, UnmatchedReason::NotMatrix);
    }
}
