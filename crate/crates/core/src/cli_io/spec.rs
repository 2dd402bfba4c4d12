//! Structure specs: `{"kind": ..., "body": {...}, "seed": n}`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::algebroid::{SkewAlgebroidChart, SkewAlgebroidSpec};
use crate::error::{Error, Result};
use crate::finite::{semidirect_loop, transversal_loop, CayleyTable};
use crate::loopoid::{
    pair_groupoid, phi_quasiloopoid, product_loopoid, prolongation_loopoid, ChartedQuasiloopoid,
    FibrationChart,
};
use crate::mechanics::{DiscreteLagrangianSystem, StepNewton};
use crate::numeric::Point;
use crate::poly::{PolyBinaryMap, Polynomial, ScalarFn};
use crate::smooth_loop::{bracket_loop, SmoothLoopChart};

use super::report::to_canonical_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecKind {
    Finite,
    Octonion,
    Loop,
    Loopoid,
    Algebroid,
    System,
}

impl SpecKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SpecKind::Finite => "finite",
            SpecKind::Octonion => "octonion",
            SpecKind::Loop => "loop",
            SpecKind::Loopoid => "loopoid",
            SpecKind::Algebroid => "algebroid",
            SpecKind::System => "system",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FiniteSpec {
    Table {
        table: Vec<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        symbols: Option<Vec<String>>,
    },
    Cyclic {
        order: usize,
    },
    Transversal {
        group: Vec<Vec<usize>>,
        subgroup: Vec<usize>,
        transversal: Vec<usize>,
    },
    Semidirect {
        #[serde(rename = "loop")]
        base: Vec<Vec<usize>>,
        automorphisms: Vec<Vec<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OctonionSpec {
    /// Expression pairs such as `["e1+e2", "e3"]` to multiply.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub products: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moufang_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoopSpec {
    Octonion,
    CubicLine,
    PlanarH,
    Polynomial { dim: usize, terms: PolyBinaryMap },
    Bracket { dim: usize, constants: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FibrationSpec {
    pub base_dim: usize,
    pub fiber_dim: usize,
    /// `pi(p) = p[..m] + shear(p[m..])`; empty means the plain projection.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shear: Vec<Polynomial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoopoidSpec {
    Product {
        #[serde(rename = "loop")]
        factor: LoopSpec,
        dim: usize,
    },
    Pair {
        dim: usize,
    },
    Phi {
        phi: Polynomial,
    },
    Prolongation {
        base: Box<LoopoidSpec>,
        fibration: FibrationSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebroidBody {
    pub base_dim: usize,
    pub rank: usize,
    pub c: Vec<Vec<Vec<Polynomial>>>,
    pub rho: Vec<Vec<Polynomial>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fibration: Option<FibrationSpec>,
}

fn default_steps() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub loopoid: LoopoidSpec,
    pub lagrangian: Polynomial,
    pub initial: Vec<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch_seed: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton: Option<StepNewton>,
    /// Unit point for the regularity check; defaults to `alpha(initial)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Finite(FiniteSpec),
    Octonion(OctonionSpec),
    Loop(LoopSpec),
    Loopoid(LoopoidSpec),
    Algebroid(AlgebroidBody),
    System(SystemSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureSpec {
    pub body: Body,
    pub seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: SpecKind,
    #[serde(default)]
    body: Option<Value>,
    #[serde(default)]
    seed: Option<u64>,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::SchemaError {
        path: path.into(),
        message: message.into(),
    }
}

/// Turn a `serde_path_to_error` failure into a `$`-rooted path. Missing
/// fields are reported at the field itself rather than its parent.
fn located<E: std::fmt::Display>(root: &str, path: &serde_path_to_error::Path, err: E) -> Error {
    let mut p = root.to_string();
    let rel = path.to_string();
    if rel != "." {
        if !rel.starts_with('[') {
            p.push('.');
        }
        p.push_str(&rel);
    }
    let message = err.to_string();
    if let Some(field) = message
        .strip_prefix("missing field `")
        .and_then(|s| s.split('`').next())
    {
        p.push('.');
        p.push_str(field);
    }
    schema(p, message)
}

fn body_as<T: for<'de> Deserialize<'de>>(body: Value) -> Result<T> {
    serde_path_to_error::deserialize(body).map_err(|e| {
        let path = e.path().clone();
        located("$.body", &path, e.into_inner())
    })
}

pub fn parse_spec(text: &str) -> Result<StructureSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().clone();
        located("$", &path, e.into_inner())
    })?;
    let body_value = raw.body.unwrap_or_else(|| Value::Object(Default::default()));
    let body = match raw.kind {
        SpecKind::Finite => Body::Finite(body_as(body_value)?),
        SpecKind::Octonion => Body::Octonion(body_as(body_value)?),
        SpecKind::Loop => Body::Loop(body_as(body_value)?),
        SpecKind::Loopoid => Body::Loopoid(body_as(body_value)?),
        SpecKind::Algebroid => Body::Algebroid(body_as(body_value)?),
        SpecKind::System => Body::System(body_as(body_value)?),
    };
    let spec = StructureSpec {
        body,
        seed: raw.seed,
    };
    spec.validate()?;
    Ok(spec)
}

impl StructureSpec {
    pub fn kind(&self) -> SpecKind {
        match self.body {
            Body::Finite(_) => SpecKind::Finite,
            Body::Octonion(_) => SpecKind::Octonion,
            Body::Loop(_) => SpecKind::Loop,
            Body::Loopoid(_) => SpecKind::Loopoid,
            Body::Algebroid(_) => SpecKind::Algebroid,
            Body::System(_) => SpecKind::System,
        }
    }

    pub fn to_value(&self) -> Value {
        let body = match &self.body {
            Body::Finite(b) => serde_json::to_value(b),
            Body::Octonion(b) => serde_json::to_value(b),
            Body::Loop(b) => serde_json::to_value(b),
            Body::Loopoid(b) => serde_json::to_value(b),
            Body::Algebroid(b) => serde_json::to_value(b),
            Body::System(b) => serde_json::to_value(b),
        }
        .expect("spec bodies serialize");
        let mut m = serde_json::Map::new();
        m.insert("kind".into(), Value::from(self.kind().as_str()));
        m.insert("body".into(), body);
        if let Some(s) = self.seed {
            m.insert("seed".into(), Value::from(s));
        }
        Value::Object(m)
    }

    /// Sorted keys, fixed float formatting.
    pub fn to_canonical_json(&self) -> String {
        to_canonical_json(&self.to_value())
    }

    /// Semantic checks that go beyond the JSON shape.
    pub fn validate(&self) -> Result<()> {
        match &self.body {
            Body::Finite(f) => f.build().map(|_| ()),
            Body::Octonion(o) => {
                for (i, (a, b)) in o.products.iter().enumerate() {
                    for (j, s) in [a, b].into_iter().enumerate() {
                        s.parse::<crate::octonion::Octonion>().map_err(|e| {
                            schema(format!("$.body.products[{i}][{j}]"), e.to_string())
                        })?;
                    }
                }
                Ok(())
            }
            Body::Loop(l) => l.build("$.body").map(|_| ()),
            Body::Loopoid(l) => l.build("$.body").map(|_| ()),
            Body::Algebroid(a) => a.build().map(|_| ()),
            Body::System(s) => s.build().map(|_| ()),
        }
    }
}

fn table(rows: &[Vec<usize>], path: &str) -> Result<CayleyTable> {
    CayleyTable::new(rows.to_vec(), None).map_err(|e| schema(path, e.to_string()))
}

impl FiniteSpec {
    pub fn construction(&self) -> &'static str {
        match self {
            FiniteSpec::Table { .. } => "table",
            FiniteSpec::Cyclic { .. } => "cyclic",
            FiniteSpec::Transversal { .. } => "transversal",
            FiniteSpec::Semidirect { .. } => "semidirect",
        }
    }

    pub fn build(&self) -> Result<CayleyTable> {
        match self {
            FiniteSpec::Table { table: rows, symbols } => {
                let mut t = table(rows, "$.body.table")?;
                if let Some(s) = symbols {
                    if s.len() != t.order {
                        return Err(schema(
                            "$.body.symbols",
                            format!("expected {} symbols, got {}", t.order, s.len()),
                        ));
                    }
                    t.symbols = Some(s.clone());
                }
                Ok(t)
            }
            FiniteSpec::Cyclic { order } => {
                if *order == 0 {
                    return Err(schema("$.body.order", "order must be positive"));
                }
                Ok(CayleyTable::cyclic(*order))
            }
            FiniteSpec::Transversal {
                group,
                subgroup,
                transversal,
            } => transversal_loop(&table(group, "$.body.group")?, subgroup, transversal),
            FiniteSpec::Semidirect {
                base,
                automorphisms,
            } => semidirect_loop(&table(base, "$.body.loop")?, automorphisms),
        }
    }
}

fn prefixed(path: &str, e: Error) -> Error {
    match e {
        Error::SchemaError { path: p, message } => schema(format!("{path}.{p}"), message),
        other => schema(path, other.to_string()),
    }
}

impl LoopSpec {
    pub fn build(&self, path: &str) -> Result<SmoothLoopChart> {
        match self {
            LoopSpec::Octonion => Ok(SmoothLoopChart::octonion()),
            LoopSpec::CubicLine => Ok(SmoothLoopChart::cubic_line()),
            LoopSpec::PlanarH => Ok(SmoothLoopChart::planar_h()),
            LoopSpec::Polynomial { dim, terms } => {
                SmoothLoopChart::polynomial(*dim, terms.clone()).map_err(|e| prefixed(path, e))
            }
            LoopSpec::Bracket { dim, constants } => {
                if constants.len() != dim * dim * dim {
                    return Err(schema(
                        format!("{path}.constants"),
                        format!("expected {} entries", dim * dim * dim),
                    ));
                }
                bracket_loop(*dim, constants.clone())
                    .map_err(|e| schema(format!("{path}.constants"), e.to_string()))
            }
        }
    }
}

impl FibrationSpec {
    pub fn build(&self, path: &str) -> Result<FibrationChart> {
        FibrationChart::sheared(self.base_dim, self.shear.clone(), self.fiber_dim)
            .map_err(|e| schema(format!("{path}.shear"), e.to_string()))
    }
}

impl LoopoidSpec {
    pub fn build(&self, path: &str) -> Result<ChartedQuasiloopoid> {
        match self {
            LoopoidSpec::Product { factor, dim } => {
                Ok(product_loopoid(&factor.build(&format!("{path}.loop"))?, *dim))
            }
            LoopoidSpec::Pair { dim } => Ok(pair_groupoid(*dim)),
            LoopoidSpec::Phi { phi } => {
                phi.check_arity(1)
                    .map_err(|e| schema(format!("{path}.phi"), e.to_string()))?;
                phi_quasiloopoid(ScalarFn::Poly(phi.clone()))
                    .map_err(|e| schema(format!("{path}.phi"), e.to_string()))
            }
            LoopoidSpec::Prolongation { base, fibration } => {
                let q = base.build(&format!("{path}.base"))?;
                let fpath = format!("{path}.fibration");
                if fibration.base_dim != q.dim_m {
                    return Err(schema(
                        format!("{fpath}.base_dim"),
                        format!("base loopoid has units of dimension {}", q.dim_m),
                    ));
                }
                let pi = fibration.build(&fpath)?;
                prolongation_loopoid(&q, &pi).map_err(|e| schema(path, e.to_string()))
            }
        }
    }

    /// The loop factor of a product loopoid.
    pub fn loop_factor(&self) -> Option<&LoopSpec> {
        match self {
            LoopoidSpec::Product { factor, .. } => Some(factor),
            _ => None,
        }
    }
}

impl AlgebroidBody {
    pub fn chart_spec(&self) -> SkewAlgebroidSpec {
        SkewAlgebroidSpec {
            base_dim: self.base_dim,
            rank: self.rank,
            c: self.c.clone(),
            rho: self.rho.clone(),
        }
    }

    pub fn build(&self) -> Result<(SkewAlgebroidChart, Option<FibrationChart>)> {
        let chart = self.chart_spec().build()?;
        let pi = match &self.fibration {
            Some(f) => {
                if f.base_dim != self.base_dim {
                    return Err(schema(
                        "$.body.fibration.base_dim",
                        format!("algebroid base has dimension {}", self.base_dim),
                    ));
                }
                Some(f.build("$.body.fibration")?)
            }
            None => None,
        };
        Ok((chart, pi))
    }
}

impl SystemSpec {
    pub fn build(&self) -> Result<DiscreteLagrangianSystem> {
        let q = self.loopoid.build("$.body.loopoid")?;
        self.lagrangian
            .check_arity(q.dim_g)
            .map_err(|e| schema("$.body.lagrangian", e.to_string()))?;
        let point = |v: &[f64], path: &str, n: usize| -> Result<Point> {
            if v.len() != n {
                return Err(schema(path, format!("expected {n} components, got {}", v.len())));
            }
            Ok(Point::from_row_slice(v))
        };
        point(&self.initial, "$.body.initial", q.dim_g)?;
        if let Some(b) = &self.branch_seed {
            point(b, "$.body.branch_seed", q.dim_g)?;
        }
        if let Some(u) = &self.unit {
            point(u, "$.body.unit", q.dim_m)?;
        }
        let mut s = DiscreteLagrangianSystem::new(q, ScalarFn::Poly(self.lagrangian.clone()));
        if let Some(n) = self.newton {
            if !(n.tol > 0.0) || n.damping.is_some_and(|d| !(d > 0.0 && d <= 1.0)) {
                return Err(schema(
                    "$.body.newton",
                    "tol must be positive and damping in (0, 1]",
                ));
            }
            s.newton = n;
        }
        Ok(s)
    }

    pub fn initial(&self) -> Point {
        Point::from_row_slice(&self.initial)
    }
}
