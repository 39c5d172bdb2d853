//! JSON interchange for series, transforms and transform paths.
//!
//! Series: `{"vars": ["x","y"], "trunc": 16 | "exact", "terms": [{"exp": [2,1], "coef": "3/2"}]}`.
//! Transforms use one-based variable indices:
//! `{"kind":"blowup","i":2,"j":1,"lambda":"3/2"|"inf"}`,
//! `{"kind":"tschirnhausen","h":<series>,"i":n}` (`i` optional, `h` free of `x_i`
//! and given in the remaining variables),
//! `{"kind":"shear","i":2,"c":["1"]}`, `{"kind":"ramification","i":1,"d":2,"sign":"+"}`.
//!
//! Sets: `{"polyradius": ["1","1"], "eq": <series> | null, "ineqs": [<series>...]}`.
//! Manifolds: `{"polyradius": [...], "split_n": 1, "eqs": [...], "ineqs": [...], "d": 2}`
//! (`d` optional, checked against the number of equations).
//! Certificates: `{"alpha": [2,1], "unit_constant": "3"}`.
//! Quadrants: `{"signs": "+-0", "radii": ["1","1","1"]}` (`radii` optional).

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::fibergeom::{FibergeomError, ManifoldSpec};
use crate::hsets::{Chart, CoverageReport, HBasicSet, HsetError, LiftedSet, QuadrantFactor, SubQuadrant};
use crate::monomialize::{Children, PointChart, TreeNode};
use crate::scalar::Scalar;
use crate::series::{default_names, Exponent, NormalCertificate, Normality, Series, SeriesError, Trunc};
use crate::transforms::{ElementaryTransform, Lambda, TransformError, TransformPath};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JsonError {
    #[error("malformed JSON: {0}")]
    Malformed(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Set(#[from] HsetError),
    #[error(transparent)]
    Manifold(#[from] FibergeomError),
}

fn malformed(msg: impl Into<String>) -> JsonError {
    JsonError::Malformed(msg.into())
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, JsonError> {
    obj.get(key).ok_or_else(|| malformed(format!("missing field \"{key}\"")))
}

fn as_object<'a>(v: &'a Value, what: &str) -> Result<&'a Map<String, Value>, JsonError> {
    v.as_object().ok_or_else(|| malformed(format!("{what} must be an object")))
}

fn as_index(v: &Value, what: &str) -> Result<usize, JsonError> {
    v.as_u64().map(|k| k as usize).ok_or_else(|| malformed(format!("{what} must be a natural number")))
}

/// Parses a coefficient given as a fraction string or a JSON integer.
pub fn coef_from_json<C: Scalar>(v: &Value) -> Result<C, JsonError> {
    match v {
        Value::String(s) => C::parse_coef(s).ok_or_else(|| malformed(format!("bad coefficient \"{s}\""))),
        Value::Number(n) if n.is_i64() => Ok(C::from_ratio(n.as_i64().unwrap_or(0), 1)),
        _ => Err(malformed(format!("bad coefficient {v}"))),
    }
}

pub fn coef_to_json<C: Scalar>(c: &C) -> Value {
    Value::String(c.render())
}

/// A series with its variable names.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedSeries<C> {
    pub vars: Vec<String>,
    pub series: Series<C>,
}

pub fn series_to_json<C: Scalar>(s: &Series<C>, vars: Option<&[String]>) -> Value {
    let vars: Vec<String> = vars.map(<[String]>::to_vec).unwrap_or_else(|| default_names(s.nvars()));
    let trunc = match s.trunc() {
        Trunc::Exact => json!("exact"),
        Trunc::Finite(n) => json!(n),
    };
    let terms: Vec<Value> =
        s.terms().map(|(e, c)| json!({"exp": e.entries(), "coef": coef_to_json(c)})).collect();
    json!({"vars": vars, "trunc": trunc, "terms": terms})
}

pub fn series_from_json<C: Scalar>(v: &Value) -> Result<NamedSeries<C>, JsonError> {
    let obj = as_object(v, "series")?;
    let vars: Vec<String> = field(obj, "vars")?
        .as_array()
        .ok_or_else(|| malformed("\"vars\" must be an array"))?
        .iter()
        .map(|n| n.as_str().map(str::to_string).ok_or_else(|| malformed("variable names must be strings")))
        .collect::<Result<_, _>>()?;
    let trunc = match obj.get("trunc") {
        None => Trunc::Exact,
        Some(Value::String(s)) if s == "exact" => Trunc::Exact,
        Some(t) => Trunc::Finite(
            t.as_u64().and_then(|n| u32::try_from(n).ok()).ok_or_else(|| malformed("bad \"trunc\""))?,
        ),
    };
    let mut terms = vec![];
    for t in field(obj, "terms")?.as_array().ok_or_else(|| malformed("\"terms\" must be an array"))? {
        let t = as_object(t, "term")?;
        let exp: Vec<u32> = field(t, "exp")?
            .as_array()
            .ok_or_else(|| malformed("\"exp\" must be an array"))?
            .iter()
            .map(|k| k.as_u64().and_then(|k| u32::try_from(k).ok()).ok_or_else(|| malformed("bad exponent entry")))
            .collect::<Result<_, _>>()?;
        if exp.len() != vars.len() {
            return Err(malformed(format!("exponent {exp:?} does not match {} variables", vars.len())));
        }
        terms.push((Exponent::new(exp), coef_from_json::<C>(field(t, "coef")?)?));
    }
    let series = Series::from_terms(vars.len(), trunc, terms)?;
    Ok(NamedSeries { vars, series })
}

pub fn transform_to_json<C: Scalar>(t: &ElementaryTransform<C>) -> Value {
    match t {
        ElementaryTransform::BlowUp { i, j, lambda } => {
            json!({"kind": "blowup", "i": i + 1, "j": j + 1, "lambda": coef_to_json(lambda)})
        }
        ElementaryTransform::Tschirnhausen { i, h } => {
            let names: Vec<String> =
                default_names(h.nvars()).into_iter().enumerate().filter(|(k, _)| k != i).map(|(_, n)| n).collect();
            let inner = h.drop_var(*i).expect("shift is free of its own variable");
            json!({"kind": "tschirnhausen", "i": i + 1, "h": series_to_json(&inner, Some(&names))})
        }
        ElementaryTransform::Shear { i, c } => {
            json!({"kind": "shear", "i": i + 1, "c": c.iter().map(coef_to_json).collect::<Vec<_>>()})
        }
        ElementaryTransform::Ramification { i, d, positive } => {
            json!({"kind": "ramification", "i": i + 1, "d": d, "sign": if *positive { "+" } else { "-" }})
        }
    }
}

fn one_based(obj: &Map<String, Value>, key: &str) -> Result<usize, JsonError> {
    let k = as_index(field(obj, key)?, key)?;
    k.checked_sub(1).ok_or_else(|| malformed(format!("\"{key}\" is one based")))
}

pub fn transform_from_json<C: Scalar>(v: &Value, nvars: usize) -> Result<ElementaryTransform<C>, JsonError> {
    let obj = as_object(v, "transform")?;
    let kind = field(obj, "kind")?.as_str().ok_or_else(|| malformed("\"kind\" must be a string"))?;
    let t = match kind {
        "blowup" => {
            let lambda = match field(obj, "lambda")? {
                Value::String(s) if s == "inf" => Lambda::Infinity,
                other => Lambda::Finite(coef_from_json::<C>(other)?),
            };
            ElementaryTransform::blow_up(one_based(obj, "i")?, one_based(obj, "j")?, lambda)?
        }
        "tschirnhausen" => {
            let i = match obj.get("i") {
                Some(_) => one_based(obj, "i")?,
                None => nvars.checked_sub(1).ok_or_else(|| malformed("no variables"))?,
            };
            let h = series_from_json::<C>(field(obj, "h")?)?.series;
            if h.nvars() + 1 != nvars {
                return Err(malformed(format!("shift must have {} variables", nvars.saturating_sub(1))));
            }
            if i >= nvars {
                return Err(TransformError::VariableOutOfRange { index: i, nvars }.into());
            }
            ElementaryTransform::tschirnhausen(i, h.insert_var(i))?
        }
        "shear" => {
            let c = field(obj, "c")?
                .as_array()
                .ok_or_else(|| malformed("\"c\" must be an array"))?
                .iter()
                .map(coef_from_json::<C>)
                .collect::<Result<Vec<_>, _>>()?;
            ElementaryTransform::shear(one_based(obj, "i")?, c)?
        }
        "ramification" => {
            let d = as_index(field(obj, "d")?, "d")?;
            let positive = match field(obj, "sign")?.as_str() {
                Some("+") => true,
                Some("-") | Some("−") => false,
                _ => return Err(malformed("\"sign\" must be \"+\" or \"-\"")),
            };
            ElementaryTransform::ramification(one_based(obj, "i")?, d as u32, positive)?
        }
        other => return Err(malformed(format!("unknown transform kind \"{other}\""))),
    };
    Ok(t)
}

pub fn path_to_json<C: Scalar>(p: &TransformPath<C>) -> Value {
    Value::Array(p.steps.iter().map(transform_to_json).collect())
}

pub fn path_from_json<C: Scalar>(v: &Value, nvars: usize) -> Result<TransformPath<C>, JsonError> {
    let steps = v
        .as_array()
        .ok_or_else(|| malformed("a path must be an array"))?
        .iter()
        .map(|t| transform_from_json(t, nvars))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TransformPath::from_steps(nvars, steps)?)
}

fn as_array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>, JsonError> {
    v.as_array().ok_or_else(|| malformed(format!("{what} must be an array")))
}

fn coef_list<C: Scalar>(v: &Value, what: &str) -> Result<Vec<C>, JsonError> {
    as_array(v, what)?.iter().map(coef_from_json).collect()
}

/// A list of series sharing one set of variables.
pub fn series_list_from_json<C: Scalar>(v: &Value, nvars: Option<usize>) -> Result<Vec<Series<C>>, JsonError> {
    let list = as_array(v, "series list")?;
    let mut out: Vec<Series<C>> = vec![];
    for item in list {
        let s = series_from_json::<C>(item)?.series;
        let expected = nvars.or(out.first().map(Series::nvars));
        if expected.is_some_and(|n| n != s.nvars()) {
            return Err(malformed("all series must have the same number of variables"));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn lambda_to_json<C: Scalar>(l: &Lambda<C>) -> Value {
    match l {
        Lambda::Finite(c) => coef_to_json(c),
        Lambda::Infinity => json!("inf"),
    }
}

pub fn certificate_to_json<C: Scalar>(c: &NormalCertificate<C>) -> Value {
    json!({"alpha": c.alpha.entries(), "unit_constant": coef_to_json(&c.unit_constant)})
}

pub fn certificate_from_json<C: Scalar>(v: &Value) -> Result<NormalCertificate<C>, JsonError> {
    let obj = as_object(v, "certificate")?;
    let alpha: Vec<u32> = as_array(field(obj, "alpha")?, "\"alpha\"")?
        .iter()
        .map(|k| k.as_u64().and_then(|k| u32::try_from(k).ok()).ok_or_else(|| malformed("bad \"alpha\" entry")))
        .collect::<Result<_, _>>()?;
    let unit_constant: C = coef_from_json(field(obj, "unit_constant")?)?;
    if unit_constant.is_zero() {
        return Err(malformed("\"unit_constant\" must be nonzero"));
    }
    let unit = Series::constant(alpha.len(), unit_constant.clone());
    Ok(NormalCertificate { alpha: Exponent::new(alpha), unit_constant, unit })
}

pub fn normality_to_json<C: Scalar>(n: &Normality<C>) -> Value {
    match n {
        Normality::Normal(c) => {
            let mut v = certificate_to_json(c);
            v["status"] = json!("normal");
            v
        }
        Normality::NotNormal => json!({"status": "not_normal"}),
        Normality::UnknownAtTruncation => json!({"status": "unknown_at_truncation"}),
    }
}

pub fn quadrant_to_json<C: Scalar>(q: &SubQuadrant<C>) -> Value {
    json!({"signs": q.signs_string(), "radii": q.radii.iter().map(coef_to_json).collect::<Vec<_>>()})
}

pub fn quadrant_from_json<C: Scalar>(v: &Value) -> Result<SubQuadrant<C>, JsonError> {
    let obj = as_object(v, "quadrant")?;
    let signs: Vec<String> = match field(obj, "signs")? {
        Value::String(s) => s.chars().map(String::from).collect(),
        other => as_array(other, "\"signs\"")?
            .iter()
            .map(|x| x.as_str().map(str::to_string).ok_or_else(|| malformed("signs must be strings")))
            .collect::<Result<_, _>>()?,
    };
    let factors = signs
        .iter()
        .map(|s| match s.as_str() {
            "0" => Ok(QuadrantFactor::Zero),
            "+" => Ok(QuadrantFactor::Pos),
            "-" | "−" => Ok(QuadrantFactor::Neg),
            other => Err(malformed(format!("bad sign \"{other}\""))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let radii = match obj.get("radii") {
        None => vec![C::one(); factors.len()],
        Some(r) => coef_list(r, "\"radii\"")?,
    };
    if radii.len() != factors.len() || radii.iter().any(|r| !r.is_positive()) {
        return Err(malformed("\"radii\" must be positive, one per sign"));
    }
    Ok(SubQuadrant::new(factors, radii))
}

pub fn hset_to_json<C: Scalar>(set: &HBasicSet<C>) -> Value {
    json!({
        "polyradius": set.polyradius.iter().map(coef_to_json).collect::<Vec<_>>(),
        "eq": set.eq.as_ref().map_or(Value::Null, |g| series_to_json(g, None)),
        "ineqs": set.ineqs.iter().map(|g| series_to_json(g, None)).collect::<Vec<_>>(),
    })
}

pub fn hset_from_json<C: Scalar>(v: &Value) -> Result<HBasicSet<C>, JsonError> {
    let obj = as_object(v, "set")?;
    let polyradius: Vec<C> = coef_list(field(obj, "polyradius")?, "\"polyradius\"")?;
    let n = polyradius.len();
    let eq = match obj.get("eq") {
        None | Some(Value::Null) => None,
        Some(e) => Some(series_from_json::<C>(e)?.series),
    };
    let ineqs = match obj.get("ineqs") {
        None => vec![],
        Some(list) => series_list_from_json(list, Some(n))?,
    };
    Ok(HBasicSet::new(polyradius, eq, ineqs)?)
}

pub fn manifold_from_json<C: Scalar>(v: &Value) -> Result<ManifoldSpec<C>, JsonError> {
    let obj = as_object(v, "manifold")?;
    let polyradius: Vec<C> = coef_list(field(obj, "polyradius")?, "\"polyradius\"")?;
    let n = polyradius.len();
    let split = as_index(field(obj, "split_n")?, "\"split_n\"")?;
    let list = |key: &str| match obj.get(key) {
        None => Ok(vec![]),
        Some(l) => series_list_from_json(l, Some(n)),
    };
    let m = ManifoldSpec::new(split, polyradius, list("eqs")?, list("ineqs")?)?;
    if let Some(d) = obj.get("d") {
        if as_index(d, "\"d\"")? != m.dim() {
            return Err(malformed(format!("\"d\" is {d} but the equations give dimension {}", m.dim())));
        }
    }
    Ok(m)
}

pub fn lifted_to_json<C: Scalar>(l: &LiftedSet<C>) -> Value {
    let one_based = |v: &[usize]| v.iter().map(|k| k + 1).collect::<Vec<_>>();
    json!({
        "base_nvars": l.base_nvars,
        "polyradius": l.polyradius.iter().map(coef_to_json).collect::<Vec<_>>(),
        "equations": l.equations.iter().map(|e| series_to_json(e, None)).collect::<Vec<_>>(),
        "zero_vars": one_based(&l.zero_vars),
        "positive_vars": one_based(&l.positive_vars),
    })
}

pub fn chart_to_json<C: Scalar>(c: &Chart<C>) -> Value {
    json!({"quadrant": quadrant_to_json(&c.quadrant), "path": path_to_json(&c.path), "label": c.path.to_string()})
}

pub fn coverage_to_json(r: &CoverageReport) -> Value {
    json!({
        "samples_in_set": r.samples_in_set,
        "covered": r.covered,
        "fraction": r.fraction,
        "hits_per_chart": r.hits_per_chart,
        "missing_families": r.missing_families.iter().map(|m| json!({
            "path": m.path, "i": m.i + 1, "j": m.j + 1, "lambdas": m.lambdas, "samples": m.samples,
        })).collect::<Vec<_>>(),
    })
}

pub fn point_chart_to_json<C: Scalar>(c: &PointChart<C>) -> Value {
    json!({
        "path": path_to_json(&c.path),
        "label": c.path.to_string(),
        "preimage": c.preimage.iter().map(coef_to_json).collect::<Vec<_>>(),
        "quadrant": quadrant_to_json(&c.quadrant),
        "certificates": c.certificates.iter().map(certificate_to_json).collect::<Vec<_>>(),
    })
}

/// Recursive dump of the expanded part of a tree.
pub fn tree_to_json<C: Scalar>(node: &TreeNode<C>) -> Value {
    let mut v = json!({
        "edge": node.edge_in.as_ref().map_or(Value::Null, transform_to_json),
        "label": node.edge_in.as_ref().map_or("root".to_string(), ToString::to_string),
        "lambda": node.lambda_in.as_ref().map_or(Value::Null, lambda_to_json),
        "series": node.series_state.iter().map(|t| json!({
            "role": t.role.to_string(),
            "series": series_to_json(&t.series, None),
            "display": t.series.to_string(),
        })).collect::<Vec<_>>(),
    });
    match &node.children {
        Children::Leaf { certificates } => {
            v["leaf"] = json!(true);
            v["certificates"] = Value::Array(certificates.iter().map(certificate_to_json).collect());
        }
        Children::Expanded(children) => {
            v["leaf"] = json!(false);
            v["children"] = Value::Array(children.iter().map(tree_to_json).collect());
        }
        Children::Family(f) => {
            v["leaf"] = json!(false);
            v["family"] = json!({
                "i": f.i + 1,
                "j": f.j + 1,
                "children": f.expanded().into_iter().map(|(l, c)| json!({
                    "lambda": lambda_to_json(l), "node": tree_to_json(c),
                })).collect::<Vec<_>>(),
            });
        }
    }
    v
}

/// Graphviz rendering; leaves are boxes flagged `normal`.
pub fn tree_to_dot<C: Scalar>(root: &TreeNode<C>) -> String {
    fn walk<C: Scalar>(node: &TreeNode<C>, id: &mut usize, out: &mut String) -> usize {
        let me = *id;
        *id += 1;
        let series: Vec<String> = node.series_state.iter().map(|t| t.series.to_string()).collect();
        let escaped = series.join("\\n").replace('"', "\\\"");
        if node.is_leaf() {
            out.push_str(&format!("  n{me} [shape=box, label=\"{escaped}\\nnormal\"];\n"));
        } else {
            out.push_str(&format!("  n{me} [label=\"{escaped}\"];\n"));
        }
        let children: Vec<&TreeNode<C>> = node.child_nodes();
        for c in children {
            let child = walk(c, id, out);
            let label = c.edge_in.as_ref().map_or(String::new(), ToString::to_string);
            out.push_str(&format!("  n{me} -> n{child} [label=\"{label}\"];\n"));
        }
        me
    }
    let mut out = String::from("digraph monomialization {\n");
    walk(root, &mut 0, &mut out);
    out.push_str("}\n");
    out
}
