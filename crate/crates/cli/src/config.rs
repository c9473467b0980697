//! Recipe resolution: file or preset, then `--set` overrides, then `--seed`
//! and `--out`.

use std::path::PathBuf;

use clap::Args;
use kdpinn::experiments::{preset, presets, ExperimentRecipe};
use serde_json::Value;

use crate::failure::Failure;

#[derive(Args, Clone, Debug, Default)]
pub struct OverrideArgs {
    /// Override one recipe field, e.g. `--set teacher_train.iterations=200`.
    /// Values are parsed as JSON, falling back to a plain string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parent directory for results (overrides `output_dir`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct RecipeArgs {
    /// Recipe JSON file.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    pub recipe: Option<PathBuf>,
    /// Built-in recipe by name (see `kdpinn presets`).
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    #[command(flatten)]
    pub set: OverrideArgs,
}

/// Fully resolved command configuration.
#[derive(Clone, Debug)]
pub struct CliConfig {
    pub recipe: ExperimentRecipe,
    pub source: String,
}

impl RecipeArgs {
    pub fn given(&self) -> bool {
        self.recipe.is_some() || self.preset.is_some()
    }

    pub fn resolve(&self) -> Result<CliConfig, Failure> {
        let (base, source) = match (&self.recipe, &self.preset) {
            (Some(path), _) => (ExperimentRecipe::load(path)?, path.display().to_string()),
            (None, Some(name)) => (
                preset(name).ok_or_else(|| {
                    Failure::config(format!(
                        "unknown preset {name:?}; available: {}",
                        preset_names().join(", ")
                    ))
                })?,
                format!("preset {name}"),
            ),
            (None, None) => {
                return Err(Failure::config(format!(
                    "one of --recipe or --preset is required; presets: {}",
                    preset_names().join(", ")
                )))
            }
        };
        Ok(CliConfig {
            recipe: self.set.apply(&base)?,
            source,
        })
    }
}

impl OverrideArgs {
    /// Applies overrides, seed and output directory to `base`.
    pub fn apply(&self, base: &ExperimentRecipe) -> Result<ExperimentRecipe, Failure> {
        let mut recipe = apply_overrides(base, &self.overrides)?;
        if let Some(seed) = self.seed {
            recipe.seed = seed;
        }
        if let Some(out) = &self.out {
            recipe.output_dir = out.clone();
        }
        recipe.validate()?;
        Ok(recipe)
    }
}

pub fn preset_names() -> Vec<String> {
    presets().into_iter().map(|r| r.name).collect()
}

/// Dotted paths of every settable field. Arrays and nulls are leaves.
pub fn valid_keys(doc: &Value) -> Vec<String> {
    fn walk(v: &Value, prefix: &str, out: &mut Vec<String>) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let path = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(child, &path, out);
                }
            }
            _ => out.push(prefix.to_string()),
        }
    }
    let mut out = Vec::new();
    walk(doc, "", &mut out);
    out.sort();
    out
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

pub fn apply_overrides(
    recipe: &ExperimentRecipe,
    overrides: &[String],
) -> Result<ExperimentRecipe, Failure> {
    if overrides.is_empty() {
        return Ok(recipe.clone());
    }
    let mut doc = serde_json::to_value(recipe).map_err(|e| Failure::config(e.to_string()))?;
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Failure::config(format!("override {item:?} is not KEY=VALUE")))?;
        let keys = valid_keys(&doc);
        if !keys.iter().any(|k| k == key) {
            return Err(Failure::config(format!(
                "unknown key {key:?}; valid keys: {}",
                keys.join(", ")
            )));
        }
        let slot = key
            .split('.')
            .try_fold(&mut doc, |node, part| node.get_mut(part))
            .expect("key was listed");
        *slot = parse_value(raw);
    }
    serde_json::from_value(doc)
        .map_err(|e| Failure::config(format!("overrides produce an invalid recipe: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use kdpinn::experiments::bs_smoke_recipe;

    #[test]
    fn nested_override_and_seed() {
        let args = RecipeArgs {
            preset: Some("bs_smoke".into()),
            set: OverrideArgs {
                overrides: vec!["teacher_train.iterations=7".into(), "name=renamed".into()],
                seed: Some(11),
                out: None,
            },
            ..RecipeArgs::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.recipe.teacher_train.iterations, 7);
        assert_eq!(cfg.recipe.name, "renamed");
        assert_eq!(cfg.recipe.seed, 11);
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err =
            apply_overrides(&bs_smoke_recipe(), &["teacher_train.iters=5".into()]).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(
            err.message.contains("teacher_train.iterations"),
            "{}",
            err.message
        );
    }

    #[test]
    fn ill_typed_value_is_config_error() {
        let err = apply_overrides(&bs_smoke_recipe(), &["seed=\"abc\"".into()]).unwrap_err();
        assert_eq!(err.code, 2);
        let err = apply_overrides(&bs_smoke_recipe(), &["seed".into()]).unwrap_err();
        assert!(err.message.contains("KEY=VALUE"));
    }

    #[test]
    fn arrays_and_options_are_settable() {
        let r = apply_overrides(
            &bs_smoke_recipe(),
            &[
                "student.sizes=[2,4,1]".into(),
                "mitigations.informed_eta=0.5".into(),
            ],
        )
        .unwrap();
        assert_eq!(r.student.sizes, vec![2, 4, 1]);
        assert_eq!(r.mitigations.informed_eta, Some(0.5));
    }

    #[test]
    fn every_preset_resolves() {
        for name in preset_names() {
            let args = RecipeArgs {
                preset: Some(name),
                ..RecipeArgs::default()
            };
            args.resolve().unwrap();
        }
    }
}
