//! Model document serialization.
//!
//! A fitted model is stored as a versioned UTF-8 JSON document. Floats are
//! written with 17 significant digits so every f64 round-trips exactly, and
//! object key order is fixed, so serializing the same model always produces
//! identical bytes.

use crate::model::{
    CurveFamily, CurveSpec, ItemModel, ModelError, RegressorKind, RegressorMeta, StatusSpace,
};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MODEL_DOCUMENT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    version: u64,
    start_status: String,
    reference_state: String,
    states: Vec<String>,
    reachable: IndexMap<String, Vec<String>>,
    absorbing: Vec<String>,
    regressors: Vec<RegressorDoc>,
    intercepts: IndexMap<String, f64>,
    flag_betas: IndexMap<String, Vec<f64>>,
    curves: Vec<CurveDoc>,
}

#[derive(Serialize, Deserialize)]
struct RegressorDoc {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<String>>,
    curve_eligible: bool,
}

#[derive(Serialize, Deserialize)]
struct CurveDoc {
    family: String,
    a: f64,
    b: f64,
    regressor: String,
    to_state: String,
    beta: f64,
}

impl ItemModel {
    /// Serializes the model to its document form.
    pub fn to_document_string(&self) -> String {
        let space = &self.space;
        let mut reachable = IndexMap::new();
        for i in 0..space.len() {
            reachable.insert(
                space.name(i).to_string(),
                space.reachable(i).iter().map(|&j| space.name(j).to_string()).collect(),
            );
        }
        let regressors = self
            .meta
            .iter()
            .map(|m| {
                let (kind, levels) = match &m.kind {
                    RegressorKind::Real => ("real", None),
                    RegressorKind::Flag => ("flag", None),
                    RegressorKind::Categorical(levels) => ("categorical", Some(levels.clone())),
                };
                RegressorDoc {
                    name: m.name.clone(),
                    kind: kind.to_string(),
                    levels,
                    curve_eligible: m.curve_eligible,
                }
            })
            .collect();
        let mut intercepts = IndexMap::new();
        let mut flag_betas = IndexMap::new();
        for (j, &s) in self.param_states().iter().enumerate() {
            let name = space.name(s).to_string();
            intercepts.insert(name.clone(), self.intercepts[j]);
            flag_betas.insert(name, self.flag_betas.row(j).to_vec());
        }
        let curves = self
            .curves
            .iter()
            .map(|c| CurveDoc {
                family: c.family.as_str().to_string(),
                a: c.a,
                b: c.b,
                regressor: self.meta[c.regressor].name.clone(),
                to_state: space.name(c.to_state).to_string(),
                beta: c.beta,
            })
            .collect();
        let doc = ModelDoc {
            version: MODEL_DOCUMENT_VERSION,
            start_status: space.name(self.start_status).to_string(),
            reference_state: space.name(self.reference_state).to_string(),
            states: space.names().to_vec(),
            reachable,
            absorbing: space.absorbing_names(),
            regressors,
            intercepts,
            flag_betas,
            curves,
        };
        let value = serde_json::to_value(&doc).expect("model document serialization");
        let mut out = String::new();
        write_value(&value, 0, &mut out);
        out.push('\n');
        out
    }

    /// Parses a model document produced by `to_document_string`.
    pub fn from_document_str(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDoc = serde_json::from_str(text)
            .map_err(|e| ModelError::Document(e.to_string()))?;
        if doc.version != MODEL_DOCUMENT_VERSION {
            return Err(ModelError::UnsupportedVersion(doc.version));
        }
        let names: Vec<&str> = doc.states.iter().map(|s| s.as_str()).collect();
        let reach_owned: Vec<(String, Vec<&str>)> = doc
            .reachable
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().map(|s| s.as_str()).collect()))
            .collect();
        let reach_refs: Vec<(&str, &[&str])> =
            reach_owned.iter().map(|(k, v)| (k.as_str(), v.as_slice())).collect();
        let absorbing: Vec<&str> = doc.absorbing.iter().map(|s| s.as_str()).collect();
        let space = StatusSpace::new(&names, &reach_refs, &absorbing)?;

        let meta: Vec<RegressorMeta> = doc
            .regressors
            .iter()
            .map(|r| {
                let kind = match r.kind.as_str() {
                    "real" => RegressorKind::Real,
                    "flag" => RegressorKind::Flag,
                    "categorical" => {
                        RegressorKind::Categorical(r.levels.clone().unwrap_or_default())
                    }
                    other => {
                        return Err(ModelError::Document(format!(
                            "unknown regressor kind {other:?}"
                        )))
                    }
                };
                Ok(RegressorMeta { name: r.name.clone(), kind, curve_eligible: r.curve_eligible })
            })
            .collect::<Result<_, _>>()?;

        let start = space
            .index(&doc.start_status)
            .ok_or_else(|| ModelError::UnknownStatus(doc.start_status.clone()))?;
        let reference = space
            .index(&doc.reference_state)
            .ok_or_else(|| ModelError::UnknownStatus(doc.reference_state.clone()))?;
        let mut model = ItemModel::with_reference(space, meta, start, reference)?;

        let param = model.param_states();
        if doc.intercepts.len() != param.len() || doc.flag_betas.len() != param.len() {
            return Err(ModelError::Document(format!(
                "expected {} parameter states, document has {} intercepts and {} beta rows",
                param.len(),
                doc.intercepts.len(),
                doc.flag_betas.len()
            )));
        }
        for (j, &s) in param.iter().enumerate() {
            let name = model.space.name(s);
            let ic = doc
                .intercepts
                .get(name)
                .ok_or_else(|| ModelError::Document(format!("missing intercept for {name:?}")))?;
            model.intercepts[j] = *ic;
            let row = doc
                .flag_betas
                .get(name)
                .ok_or_else(|| ModelError::Document(format!("missing flag betas for {name:?}")))?;
            if row.len() != model.meta.len() {
                return Err(ModelError::Document(format!(
                    "flag beta row for {name:?} has {} entries, expected {}",
                    row.len(),
                    model.meta.len()
                )));
            }
            for (k, v) in row.iter().enumerate() {
                model.flag_betas[(j, k)] = *v;
            }
        }
        for c in &doc.curves {
            let family = CurveFamily::parse(&c.family)
                .ok_or_else(|| ModelError::Document(format!("unknown curve family {:?}", c.family)))?;
            let regressor = model
                .meta
                .iter()
                .position(|m| m.name == c.regressor)
                .ok_or_else(|| ModelError::Document(format!("unknown regressor {:?}", c.regressor)))?;
            let to_state = model
                .space
                .index(&c.to_state)
                .ok_or_else(|| ModelError::UnknownStatus(c.to_state.clone()))?;
            model.curves.push(CurveSpec { family, a: c.a, b: c.b, regressor, to_state, beta: c.beta });
        }
        model.validate()?;
        Ok(model)
    }
}

/// Formats a float with 17 significant digits, enough to reproduce any f64
/// exactly on parse.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&fmt_f64(n.as_f64().unwrap()));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serialization"))
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                push_indent(out, indent + 1);
                write_value(item, indent + 1, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            push_indent(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (key, val)) in map.iter().enumerate() {
                push_indent(out, indent + 1);
                out.push_str(&serde_json::to_string(key).expect("key serialization"));
                out.push_str(": ");
                write_value(val, indent + 1, out);
                if i + 1 < map.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            push_indent(out, indent);
            out.push('}');
        }
    }
}

fn push_indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}
