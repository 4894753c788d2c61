//! Lossless-join and dependency-preservation checks for a declared
//! decomposition, via the chase over a one-row-per-relation tableau.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Result;
use crate::schema::{Catalog, FunctionalDependency};

#[derive(Clone, Debug, Serialize)]
pub struct FdPreservation {
    pub fd: FunctionalDependency,
    /// True when some relation's attribute set contains lhs ∪ rhs.
    pub preserved: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionReport {
    pub lossless: bool,
    /// On a lossy verdict, the closest tableau row: universal attribute to
    /// final chase symbol. Distinguished cells repeat the attribute name;
    /// the remaining subscripted variables mark the information loss.
    pub witness: Option<BTreeMap<String, String>>,
    pub fd_preservation: Vec<FdPreservation>,
}

/// Runs the chase on the catalog's relations viewed as a decomposition of
/// the universal schema, under the catalog's declared functional
/// dependencies.
pub fn validate_decomposition(catalog: &Catalog) -> Result<DecompositionReport> {
    let mut universe: Vec<String> = Vec::new();
    let mut rel_attrs: Vec<Vec<bool>> = Vec::new();
    for rel in &catalog.relations {
        for attr in catalog.universal_attrs(&rel.name)? {
            if !universe.contains(&attr) {
                universe.push(attr);
            }
        }
    }
    universe.sort();
    for rel in &catalog.relations {
        let attrs = catalog.universal_attrs(&rel.name)?;
        rel_attrs.push(universe.iter().map(|u| attrs.contains(u)).collect());
    }

    let ncols = universe.len();
    let nrows = rel_attrs.len();

    // Symbols: negative = distinguished (one per column), non-negative =
    // subscripted variable unique per cell.
    let mut tableau: Vec<Vec<i64>> = (0..nrows)
        .map(|r| {
            (0..ncols)
                .map(|c| if rel_attrs[r][c] { -(c as i64 + 1) } else { (r * ncols + c) as i64 })
                .collect()
        })
        .collect();

    let col_of: BTreeMap<&str, usize> =
        universe.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();

    let mut changed = true;
    while changed {
        changed = false;
        for fd in &catalog.fds {
            let lhs: Vec<usize> = fd.lhs.iter().map(|a| col_of[a.as_str()]).collect();
            let rhs: Vec<usize> = fd.rhs.iter().map(|a| col_of[a.as_str()]).collect();
            for i in 0..nrows {
                for j in (i + 1)..nrows {
                    if lhs.iter().all(|&c| tableau[i][c] == tableau[j][c]) {
                        for &c in &rhs {
                            let a = tableau[i][c];
                            let b = tableau[j][c];
                            if a != b {
                                let keep = a.min(b);
                                let drop = a.max(b);
                                for row in tableau.iter_mut() {
                                    for cell in row.iter_mut() {
                                        if *cell == drop {
                                            *cell = keep;
                                        }
                                    }
                                }
                                changed = true;
                            }
                        }
                    }
                }
            }
        }
    }

    let lossless = tableau.iter().any(|row| row.iter().all(|&s| s < 0));
    let witness = if lossless {
        None
    } else {
        let best = tableau
            .iter()
            .enumerate()
            .max_by_key(|(i, row)| (row.iter().filter(|&&s| s < 0).count(), usize::MAX - i))
            .map(|(_, row)| row)
            .expect("catalog has at least one relation");
        Some(
            universe
                .iter()
                .zip(best.iter())
                .map(|(attr, &sym)| {
                    let rendered = if sym < 0 {
                        attr.clone()
                    } else {
                        format!("v{}.{}", sym as usize / ncols.max(1), universe[sym as usize % ncols.max(1)])
                    };
                    (attr.clone(), rendered)
                })
                .collect(),
        )
    };

    let fd_preservation = catalog
        .fds
        .iter()
        .map(|fd| {
            let preserved = rel_attrs.iter().any(|attrs| {
                fd.lhs
                    .iter()
                    .chain(fd.rhs.iter())
                    .all(|a| attrs[col_of[a.as_str()]])
            });
            FdPreservation { fd: fd.clone(), preserved }
        })
        .collect();

    Ok(DecompositionReport { lossless, witness, fd_preservation })
}
