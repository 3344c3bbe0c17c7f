//! Instance file schema: versioned JSON with row-major matrices.
//!
//! All reals round-trip exactly (shortest-representation decimal), so
//! load(save(i)) reproduces the instance field-for-field and
//! re-serialization is byte-identical.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BapError, Result};
use crate::geometry::{
    Ball, ConvexBody, DiagonalSubspace, Ellipsoid, Halfspace, Polyhedron, ProductBody,
};
use crate::instances::{Family, Instance, Reference};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    version: u32,
    family: String,
    m: usize,
    n: usize,
    k: Option<usize>,
    theta: Option<f64>,
    alpha: Option<f64>,
    seed: u64,
    bodies: Vec<BodyFile>,
    anchor: Vec<f64>,
    reference: Option<ReferenceFile>,
}

#[derive(Serialize, Deserialize)]
struct ReferenceFile {
    point: Vec<f64>,
    certified_tol: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum BodyFile {
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
    Polyhedron {
        rows: Vec<Vec<f64>>,
        rhs: Vec<f64>,
    },
    Ellipsoid {
        center: Vec<f64>,
        shape: Vec<Vec<f64>>,
        radius: f64,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Product {
        blocks: Vec<BodyFile>,
    },
    Diagonal {
        copies: usize,
        block_dim: usize,
    },
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(BapError::Schema(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(BapError::Schema(format!("{what}: ragged matrix rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn body_to_file(body: &ConvexBody) -> BodyFile {
    match body {
        ConvexBody::Halfspace(h) => BodyFile::Halfspace {
            normal: h.normal().iter().copied().collect(),
            offset: h.offset(),
        },
        ConvexBody::Polyhedron(p) => BodyFile::Polyhedron {
            rows: matrix_rows(p.rows()),
            rhs: p.rhs().iter().copied().collect(),
        },
        ConvexBody::Ellipsoid(e) => BodyFile::Ellipsoid {
            center: e.center().iter().copied().collect(),
            shape: matrix_rows(e.shape()),
            radius: e.radius(),
        },
        ConvexBody::Ball(b) => BodyFile::Ball {
            center: b.center().iter().copied().collect(),
            radius: b.radius(),
        },
        ConvexBody::Product(p) => BodyFile::Product {
            blocks: p.blocks().iter().map(body_to_file).collect(),
        },
        ConvexBody::Diagonal(d) => BodyFile::Diagonal {
            copies: d.copies(),
            block_dim: d.block_dim(),
        },
    }
}

fn body_from_file(file: &BodyFile) -> Result<ConvexBody> {
    Ok(match file {
        BodyFile::Halfspace { normal, offset } => {
            ConvexBody::Halfspace(Halfspace::new(DVector::from_vec(normal.clone()), *offset)?)
        }
        BodyFile::Polyhedron { rows, rhs } => ConvexBody::Polyhedron(Polyhedron::new(
            matrix_from_rows(rows, "polyhedron rows")?,
            DVector::from_vec(rhs.clone()),
        )?),
        BodyFile::Ellipsoid {
            center,
            shape,
            radius,
        } => ConvexBody::Ellipsoid(Ellipsoid::new(
            DVector::from_vec(center.clone()),
            matrix_from_rows(shape, "ellipsoid shape")?,
            *radius,
        )?),
        BodyFile::Ball { center, radius } => {
            ConvexBody::Ball(Ball::new(DVector::from_vec(center.clone()), *radius)?)
        }
        BodyFile::Product { blocks } => {
            let blocks: Result<Vec<ConvexBody>> = blocks.iter().map(body_from_file).collect();
            ConvexBody::Product(ProductBody::new(blocks?)?)
        }
        BodyFile::Diagonal { copies, block_dim } => {
            ConvexBody::Diagonal(DiagonalSubspace::new(*copies, *block_dim)?)
        }
    })
}

/// Canonical JSON serialization of an instance.
pub fn instance_to_json(instance: &Instance) -> Result<String> {
    let file = InstanceFile {
        version: SCHEMA_VERSION,
        family: instance.family.label().to_string(),
        m: instance.num_sets(),
        n: instance.dim(),
        k: instance.rows_per_set,
        theta: instance.theta,
        alpha: instance.alpha_spread,
        seed: instance.seed,
        bodies: instance.bodies.iter().map(body_to_file).collect(),
        anchor: instance.anchor.iter().copied().collect(),
        reference: instance.reference.as_ref().map(|r| ReferenceFile {
            point: r.point.iter().copied().collect(),
            certified_tol: r.certified_tol,
        }),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    Ok(text)
}

pub fn save_instance(instance: &Instance, path: &Path) -> Result<()> {
    std::fs::write(path, instance_to_json(instance)?)?;
    Ok(())
}

/// Parse an instance from JSON text, validating the schema version and all
/// dimensional consistency before constructing any body.
pub fn instance_from_json(text: &str) -> Result<Instance> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| BapError::Schema("missing 'version' field".into()))?;
    if version != SCHEMA_VERSION as u64 {
        return Err(BapError::SchemaVersion {
            expected: SCHEMA_VERSION,
            got: version as u32,
        });
    }
    let file: InstanceFile = serde_json::from_value(value)?;

    let family = Family::parse(&file.family)?;
    let bodies: Result<Vec<ConvexBody>> = file.bodies.iter().map(body_from_file).collect();
    let bodies = bodies?;
    if bodies.len() != file.m {
        return Err(BapError::Schema(format!(
            "body count {} does not match m = {}",
            bodies.len(),
            file.m
        )));
    }
    let anchor = DVector::from_vec(file.anchor.clone());
    if anchor.len() != file.n {
        return Err(BapError::Schema(format!(
            "anchor dimension {} does not match n = {}",
            anchor.len(),
            file.n
        )));
    }
    if anchor.iter().any(|v| !v.is_finite()) {
        return Err(BapError::Schema("anchor has non-finite entries".into()));
    }
    for (i, b) in bodies.iter().enumerate() {
        if b.dim() != file.n {
            return Err(BapError::Schema(format!(
                "body {i} has dimension {} but n = {}",
                b.dim(),
                file.n
            )));
        }
    }
    let reference = match file.reference {
        Some(r) => {
            let point = DVector::from_vec(r.point);
            if point.len() != file.n {
                return Err(BapError::Schema("reference dimension mismatch".into()));
            }
            Some(Reference {
                point,
                certified_tol: r.certified_tol,
            })
        }
        None => None,
    };
    Ok(Instance {
        family,
        bodies,
        anchor,
        rows_per_set: file.k,
        theta: file.theta,
        alpha_spread: file.alpha,
        seed: file.seed,
        reference,
    })
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    instance_from_json(&text)
}
