//! Table builders behind the command-line subcommands.
//!
//! Each builder is a pure function of the run configuration; writing is a
//! separate step so the same tables can be compared in memory.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::cocycle::{lyapunov, v_field_table};
use crate::config::RunConfig;
use crate::diagnostics::{
    anisotropy_with_theta, boundary_polyline, theta_mass_report_with, CentroidDistances,
    ThetaConfig,
};
use crate::energy::{energy_report, self_similarity_residual};
use crate::error::{GasketError, Result};
use crate::fields::battery;
use crate::gasket::{self, code_to_point, Word};
use crate::linalg::Vec2;
use crate::measure::{cell_measures, depth_mass, principal_eigenvalue, sample_kappa, sample_words};
use crate::report::{Table, Value};

/// Extra symbols drawn past the cell level in the anisotropy table, so the
/// coded point and `v` are resolved below the cell being measured.
pub const ANISOTROPY_LOOKAHEAD: usize = 8;

/// Depth of the boundary polylines used for `S_θ` membership.
pub const BOUNDARY_DEPTH: usize = 12;

/// Default length of sampled words in the Lyapunov table.
pub const LYAPUNOV_LENGTH: usize = 1000;

/// Points closer than this are merged in the junction table.
const MERGE_TOL: f64 = 1e-12;

/// How the Lyapunov command picks its words.
#[derive(Clone, Debug, PartialEq)]
pub enum LyapunovInput {
    /// `samples` κ-sampled words of the given length.
    Sampled { length: usize },
    /// A single word repeated `repeat` times.
    Word { word: Word, repeat: usize },
}

pub fn write_tables(tables: &[Table], cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    tables
        .iter()
        .map(|t| t.write(&cfg.out, cfg.format))
        .collect()
}

/// Cells, their vertices, deduplicated junctions and the boundary polylines.
pub fn gasket_tables(cfg: &RunConfig) -> Result<Vec<Table>> {
    gasket::check_depth(cfg.depth, gasket::DEFAULT_MAX_DEPTH)?;
    let prov = cfg.provenance();
    let mut cells = Table::new(
        "cells",
        &["word", "centroid_x1", "centroid_x2", "diameter"],
        prov,
    );
    let mut vertices = Table::new("vertices", &["word", "vertex", "x1", "x2"], prov);
    // Keyed by rounded coordinates; holds the point and the words of the cells touching it.
    let mut points: BTreeMap<(i64, i64), (Vec2, Vec<String>)> = BTreeMap::new();
    gasket::for_each_cell(cfg.depth, |w, m| {
        let word = Word::new(w.to_vec()).to_string();
        let tri = m.triangle();
        let c = gasket::triangle_centroid(&tri);
        cells.push(vec![
            word.clone().into(),
            c.x1.into(),
            c.x2.into(),
            gasket::triangle_diameter(&tri).into(),
        ]);
        for (k, v) in tri.iter().enumerate() {
            vertices.push(vec![
                word.clone().into(),
                k.into(),
                v.x1.into(),
                v.x2.into(),
            ]);
            let key = (
                (v.x1 / MERGE_TOL).round() as i64,
                (v.x2 / MERGE_TOL).round() as i64,
            );
            points
                .entry(key)
                .or_insert_with(|| (*v, Vec::new()))
                .1
                .push(word.clone());
        }
    });
    let mut junctions = Table::new("junctions", &["x1", "x2", "cells"], prov);
    let mut shared: Vec<_> = points
        .into_values()
        .filter(|(_, ws)| ws.len() > 1)
        .collect();
    shared.sort_by(|a, b| a.1.cmp(&b.1));
    for (p, ws) in shared {
        junctions.push(vec![p.x1.into(), p.x2.into(), ws.join("|").into()]);
    }
    let boundary = boundary_polyline(cfg.depth)?;
    let mut sides = Table::new("boundary", &["side", "index", "x1", "x2"], prov);
    for (name, pts) in ["AB", "BC", "AC"].iter().zip(&boundary.sides) {
        for (i, p) in pts.iter().enumerate() {
            sides.push(vec![(*name).into(), i.into(), p.x1.into(), p.x2.into()]);
        }
    }
    Ok(vec![cells, vertices, junctions, sides])
}

/// Matrix and scalar masses of every cell, plus the eigenvalue and totals.
pub fn measure_tables(cfg: &RunConfig) -> Result<Vec<Table>> {
    let norm = cfg.normalization();
    let prov = cfg.provenance();
    let mut cells = Table::new(
        "measure",
        &["word", "tau11", "tau12", "tau22", "kappa"],
        prov,
    );
    for m in cell_measures(cfg.depth, norm)? {
        cells.push(vec![
            m.word.to_string().into(),
            m.tau.a11.into(),
            m.tau.a12.into(),
            m.tau.a22.into(),
            m.kappa.into(),
        ]);
    }
    let eig = principal_eigenvalue(1e-12, 100)?;
    let totals = depth_mass(cfg.depth, norm)?;
    let mut summary = Table::new(
        "measure_summary",
        &[
            "beta",
            "eigen_residual",
            "iterations",
            "tau_sum11",
            "tau_sum12",
            "tau_sum22",
            "kappa_sum",
            "max_kappa",
        ],
        prov,
    );
    summary.push(vec![
        eig.beta.into(),
        eig.residual.into(),
        eig.iterations.into(),
        totals.tau_sum.a11.into(),
        totals.tau_sum.a12.into(),
        totals.tau_sum.a22.into(),
        totals.kappa_sum.into(),
        totals.max_kappa.into(),
    ]);
    Ok(vec![cells, summary])
}

/// Projection field on κ-sampled words of length `depth`.
pub fn vfield_tables(cfg: &RunConfig) -> Result<Vec<Table>> {
    if cfg.depth == 0 {
        return Err(GasketError::config(
            "depth",
            "the projection field needs depth at least 1",
        ));
    }
    let words = sample_kappa(cfg.seed, cfg.depth, cfg.samples)?;
    let mut t = Table::new(
        "vfield",
        &[
            "index",
            "word",
            "x1",
            "x2",
            "v1",
            "v2",
            "vl_norm",
            "residual_proj",
            "residual_rank1",
            "isotropic",
        ],
        cfg.provenance(),
    );
    for (i, r) in v_field_table(cfg.depth, &words)?.into_iter().enumerate() {
        t.push(vec![
            i.into(),
            r.word.into(),
            r.point.x1.into(),
            r.point.x2.into(),
            r.v.x1.into(),
            r.v.x2.into(),
            r.vl_norm.into(),
            r.residual_proj.into(),
            r.residual_rank1.into(),
            r.isotropic.into(),
        ]);
    }
    Ok(vec![t])
}

pub fn lyapunov_tables(cfg: &RunConfig, input: &LyapunovInput) -> Result<Vec<Table>> {
    let words = match input {
        LyapunovInput::Sampled { length } => sample_words(cfg.seed, *length, cfg.samples)?,
        LyapunovInput::Word { word, repeat } => {
            let symbols = word.symbols().repeat(*repeat);
            vec![Word::new(symbols)]
        }
    };
    let mut t = Table::new(
        "lyapunov",
        &[
            "index", "word", "length", "lambda1", "lambda2", "gap", "flagged",
        ],
        cfg.provenance(),
    );
    for (i, w) in words.iter().enumerate() {
        let r = lyapunov(w)?;
        t.push(vec![
            i.into(),
            w.to_string().into(),
            w.len().into(),
            r.lambda1.into(),
            r.lambda2.into(),
            r.gap.into(),
            r.flagged.into(),
        ]);
    }
    Ok(vec![t])
}

/// Anisotropy of the level-`depth` cell of κ-sampled words, with `S_θ`
/// membership at the smallest θ of the grid.
pub fn anisotropy_tables(cfg: &RunConfig) -> Result<Vec<Table>> {
    let theta = *cfg.theta_grid.last().expect("validated grid");
    let words = sample_words(cfg.seed, cfg.depth + ANISOTROPY_LOOKAHEAD, cfg.samples)?;
    let mut t = Table::new(
        "anisotropy",
        &[
            "index",
            "word",
            "n",
            "v1",
            "v2",
            "shape_ratio",
            "theta",
            "theta_member",
            "vertex_alignment",
            "flagged",
        ],
        cfg.provenance(),
    );
    for (i, w) in words.iter().enumerate() {
        let r = anisotropy_with_theta(w, cfg.depth, Some((theta, BOUNDARY_DEPTH)))?;
        t.push(vec![
            i.into(),
            r.word.into(),
            r.n.into(),
            r.v.x1.into(),
            r.v.x2.into(),
            r.shape_ratio.into(),
            theta.into(),
            r.theta_member.into(),
            r.vertex_alignment.into(),
            r.flagged.into(),
        ]);
    }
    Ok(vec![t])
}

/// One row per θ of the grid; grid values with an empty `S_θ` are reported
/// with status `empty` and blank estimates.
pub fn theta_tables(cfg: &RunConfig) -> Result<Vec<Table>> {
    let template = ThetaConfig::new(cfg.theta_grid[0], cfg.depth, cfg.samples, cfg.seed);
    let table = CentroidDistances::new(template.inner_depth, template.boundary_depth)?;
    let mut t = Table::new(
        "theta",
        &[
            "theta",
            "status",
            "theta0",
            "ratio_mass",
            "ratio_mass_se",
            "delta_hat",
            "f_theta_mass",
            "f_theta_se",
        ],
        cfg.provenance(),
    );
    for &theta in &cfg.theta_grid {
        let tc = ThetaConfig { theta, ..template };
        match theta_mass_report_with(&table, &tc) {
            Ok(r) => t.push(vec![
                theta.into(),
                "ok".into(),
                r.theta0.into(),
                r.ratio_mass.into(),
                r.ratio_mass_se.into(),
                r.delta_hat.into(),
                r.empirical_f_theta_mass.into(),
                r.f_theta_se.into(),
            ]),
            Err(GasketError::EmptySTheta { theta0, .. }) => t.push(vec![
                theta.into(),
                "empty".into(),
                theta0.into(),
                Value::Empty,
                Value::Empty,
                Value::Empty,
                Value::Empty,
                Value::Empty,
            ]),
            Err(e) => return Err(e),
        }
    }
    Ok(vec![t])
}

/// Energy estimators for the test battery; with `pairs`, also the per-cell
/// values behind the one-sided Lipschitz check.
pub fn energy_tables(cfg: &RunConfig, pairs: bool) -> Result<Vec<Table>> {
    let norm = cfg.normalization();
    let prov = cfg.provenance();
    let mut t = Table::new(
        "energy",
        &[
            "field",
            "sub_depth",
            "dirichlet_matrix",
            "dirichlet_vfield",
            "vfield_flagged",
            "cheeger_pre",
            "half_dirichlet",
            "relative_gap",
            "self_similarity_residual",
            "pointwise_evaluated",
            "pointwise_violations",
            "pointwise_min_margin",
        ],
        prov,
    );
    let mut pair_table = Table::new(
        "energy_pairs",
        &["field", "word", "lip", "directional"],
        prov,
    );
    for f in battery() {
        let r = energy_report(f.as_ref(), cfg.depth, cfg.sub_depth, norm, pairs)?;
        let ss = self_similarity_residual(f.as_ref(), cfg.depth, norm)?;
        t.push(vec![
            r.field.clone().into(),
            r.sub_depth.into(),
            r.dirichlet_matrix.into(),
            r.dirichlet_vfield.into(),
            r.vfield_flagged.into(),
            r.cheeger_pre.into(),
            r.half_dirichlet.into(),
            r.relative_gap.into(),
            ss.into(),
            r.pointwise.evaluated.into(),
            r.pointwise.violations.into(),
            r.pointwise.min_margin.into(),
        ]);
        for p in r.pairs.into_iter().flatten() {
            pair_table.push(vec![
                r.field.clone().into(),
                p.word.into(),
                p.lip.into(),
                p.directional.into(),
            ]);
        }
    }
    let mut out = vec![t];
    if pairs {
        out.push(pair_table);
    }
    Ok(out)
}

/// κ-sampled words with their masses and coded points.
pub fn sample_tables(cfg: &RunConfig) -> Result<Vec<Table>> {
    let norm = cfg.normalization();
    let words = sample_kappa(cfg.seed, cfg.depth, cfg.samples)?;
    let mut t = Table::new(
        "sample",
        &["index", "word", "kappa", "x1", "x2", "error_bound"],
        cfg.provenance(),
    );
    for (i, w) in words.iter().enumerate() {
        let kappa = crate::measure::tau_cell(w, norm)?.kappa;
        let (p, bound) = code_to_point(w);
        t.push(vec![
            i.into(),
            w.to_string().into(),
            kappa.into(),
            p.x1.into(),
            p.x2.into(),
            bound.into(),
        ]);
    }
    Ok(vec![t])
}
