//! Declarative composition: submodels, optional ECDF per submodel, a
//! combiner, and an optional final ECDF, merged into one model file.

use std::fs;
use std::path::{Path, PathBuf};

use gig_core::model::{CompositionGraph, ModelDoc, NodeDoc, NodeKind, PiecewiseLinearCurve, FORMAT_VERSION};
use log::info;
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::load_model;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposeSpec {
    pub version: u32,
    pub submodels: Vec<Submodel>,
    pub combiner: Combiner,
    #[serde(default)]
    pub final_ecdf: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Submodel {
    /// Node-id prefix; defaults to `m<k>`.
    #[serde(default)]
    pub id: Option<String>,
    pub model: PathBuf,
    #[serde(default)]
    pub ecdf: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Combiner {
    Linear {
        weights: Vec<f64>,
        #[serde(default)]
        bias: f64,
    },
    Product,
}

/// Curve file as written by `fit-ecdf`.
#[derive(Deserialize)]
struct CurveFile {
    version: u32,
    kind: String,
    knots: Vec<[f64; 2]>,
}

fn check_version(v: u32, path: &Path) -> CliResult<()> {
    if v != FORMAT_VERSION {
        return Err(CliError::Input(format!(
            "{}: unsupported format version {v} (expected {FORMAT_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

pub fn load_curve(path: &Path) -> CliResult<PiecewiseLinearCurve<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: CurveFile =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    check_version(file.version, path)?;
    if file.kind != "pwl_curve" {
        return Err(CliError::Input(format!("{}: expected kind \"pwl_curve\", got {:?}", path.display(), file.kind)));
    }
    let curve = PiecewiseLinearCurve::new(file.knots);
    let problems = curve.check();
    if !problems.is_empty() {
        return Err(CliError::Input(format!("{}: {}", path.display(), problems.join("; "))));
    }
    Ok(curve)
}

pub fn build(spec: &ComposeSpec, base: &Path) -> CliResult<CompositionGraph<f64>> {
    if spec.submodels.is_empty() {
        return Err(CliError::Input("composition needs at least one submodel".into()));
    }
    if let Combiner::Linear { weights, .. } = &spec.combiner {
        if weights.len() != spec.submodels.len() {
            return Err(CliError::Input(format!(
                "combiner has {} weights for {} submodels",
                weights.len(),
                spec.submodels.len()
            )));
        }
    }
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

    let mut n_features = None;
    let mut nodes = Vec::new();
    let mut outputs = Vec::new();
    for (k, sub) in spec.submodels.iter().enumerate() {
        let path = resolve(&sub.model);
        let g = load_model(&path)?;
        match n_features {
            None => n_features = Some(g.n_features()),
            Some(n) if n != g.n_features() => {
                return Err(CliError::Input(format!(
                    "{}: {} features, but earlier submodels take {n}",
                    path.display(),
                    g.n_features()
                )))
            }
            _ => {}
        }
        let prefix = sub.id.clone().unwrap_or_else(|| format!("m{k}"));
        let doc = g.to_doc();
        for mut node in doc.nodes {
            node.id = format!("{prefix}/{}", node.id);
            for input in &mut node.inputs {
                *input = format!("{prefix}/{input}");
            }
            nodes.push(node);
        }
        let mut out = format!("{prefix}/{}", doc.output_id);
        if let Some(ecdf) = &sub.ecdf {
            let id = format!("{prefix}/ecdf");
            nodes.push(NodeDoc {
                id: id.clone(),
                inputs: vec![out],
                kind: NodeKind::PwlCurve(load_curve(&resolve(ecdf))?),
            });
            out = id;
        }
        outputs.push(out);
    }

    let kind = match &spec.combiner {
        Combiner::Linear { weights, bias } => NodeKind::Linear {
            weights: weights.clone(),
            bias: *bias,
        },
        Combiner::Product => NodeKind::Product,
    };
    nodes.push(NodeDoc {
        id: "combiner".into(),
        inputs: outputs,
        kind,
    });
    let mut output_id = "combiner".to_string();
    if let Some(ecdf) = &spec.final_ecdf {
        nodes.push(NodeDoc {
            id: "final_ecdf".into(),
            inputs: vec![output_id],
            kind: NodeKind::PwlCurve(load_curve(&resolve(ecdf))?),
        });
        output_id = "final_ecdf".into();
    }
    let doc = ModelDoc {
        version: FORMAT_VERSION,
        n_features: n_features.expect("at least one submodel"),
        nodes,
        output_id,
    };
    Ok(CompositionGraph::from_doc(&doc)?)
}

pub fn run(spec_path: &Path, out: &Path) -> CliResult<()> {
    let text = fs::read_to_string(spec_path).map_err(|e| CliError::io(spec_path, e))?;
    let spec: ComposeSpec =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", spec_path.display())))?;
    check_version(spec.version, spec_path)?;
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let graph = build(&spec, base)?;
    fs::write(out, graph.to_json()? + "\n").map_err(|e| CliError::io(out, e))?;
    info!("composed {} submodels into {}", spec.submodels.len(), out.display());
    Ok(())
}
