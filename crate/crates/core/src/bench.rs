//! Refinement tables for a flat sheet deformed by a fold or rolled onto a
//! cylinder, with the scaling checks that go with them.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energies::{self, ArapMode};
use crate::mesh::{generate_cylinder_map, generate_fold, MeshError};
use crate::operators::{DiscreteOperators, OperatorError};

/// Side length of the benchmark sheet.
pub const SHEET_WIDTH: f64 = 100.0;
/// Dihedral angle of the fold case.
pub const FOLD_ANGLE: f64 = std::f64::consts::FRAC_PI_2;
/// Largest level accepted without `force`.
pub const MAX_LEVEL: usize = 640;
pub const DEFAULT_LEVELS: [usize; 5] = [10, 20, 40, 80, 160];
pub const FULL_LEVELS: [usize; 7] = [10, 20, 40, 80, 160, 320, 640];
/// Bound on the fitted stretching energy of either isometry.
pub const STRETCH_BOUND: f64 = 1e-8;

/// Published reference rows `(n, spoke, spoke_rim, bending)`.
pub const FOLD_REFERENCE: [(usize, f64, f64, f64); 7] = [
    (10, 2343.1, 4448.3, 24.2),
    (20, 1171.5, 2283.6, 50.9),
    (40, 585.7, 1156.6, 104.2),
    (80, 292.8, 582.1, 210.9),
    (160, 146.4, 291.9, 424.2),
    (320, 73.2, 146.2, 850.9),
    (640, 36.6, 73.1, 1704.2),
];

pub const CYLINDER_REFERENCE: [(usize, f64, f64, f64); 7] = [
    (10, 13460.2, 25636.4, 41.3),
    (20, 3663.6, 7153.8, 47.1),
    (40, 947.3, 1872.2, 49.9),
    (80, 240.3, 477.8, 51.3),
    (160, 60.4, 120.6, 51.9),
    (320, 15.1, 30.2, 52.3),
    (640, 3.7, 7.5, 52.4),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("level {0} exceeds {MAX_LEVEL}; pass force to run it anyway")]
    LevelTooLarge(usize),
    #[error("no levels given")]
    NoLevels,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Energy(#[from] energies::EnergyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchCase {
    Fold,
    Cylinder,
}

impl std::str::FromStr for BenchCase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fold" => Ok(BenchCase::Fold),
            "cylinder" => Ok(BenchCase::Cylinder),
            other => Err(format!("unknown bench case {other:?} (fold|cylinder)")),
        }
    }
}

impl BenchCase {
    pub fn reference(self) -> &'static [(usize, f64, f64, f64)] {
        match self {
            BenchCase::Fold => &FOLD_REFERENCE,
            BenchCase::Cylinder => &CYLINDER_REFERENCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub triangles: usize,
    pub spoke: f64,
    pub spoke_rim: f64,
    pub bending: f64,
    /// Fitted triangle stretching energy; zero for an isometry.
    pub stretch: f64,
}

fn check_levels(levels: &[usize], force: bool) -> Result<(), BenchError> {
    if levels.is_empty() {
        return Err(BenchError::NoLevels);
    }
    match levels.iter().find(|&&n| n > MAX_LEVEL) {
        Some(&n) if !force => Err(BenchError::LevelTooLarge(n)),
        _ => Ok(()),
    }
}

/// Evaluates one level of `case`.
pub fn bench_row(case: BenchCase, n: usize) -> Result<BenchRow, BenchError> {
    let (mesh, state) = match case {
        BenchCase::Fold => generate_fold(n, SHEET_WIDTH, FOLD_ANGLE)?,
        BenchCase::Cylinder => generate_cylinder_map(n, SHEET_WIDTH)?,
    };
    let ops = DiscreteOperators::new(&mesh)?;
    Ok(BenchRow {
        n,
        triangles: mesh.face_count(),
        spoke: energies::optimal_arap_energy(&mesh, &ops, &state, ArapMode::Spoke)?,
        spoke_rim: energies::optimal_arap_energy(&mesh, &ops, &state, ArapMode::SpokeRim)?,
        bending: energies::optimal_bending_energy(&mesh, &ops, &state)?,
        stretch: energies::optimal_stretch_energy(&mesh, &ops, &state)?,
    })
}

/// Rows for every level, in the order given.
pub fn run_table(case: BenchCase, levels: &[usize], force: bool) -> Result<Vec<BenchRow>, BenchError> {
    check_levels(levels, force)?;
    levels.par_iter().map(|&n| bench_row(case, n)).collect()
}

pub fn run_fold_table(levels: &[usize], force: bool) -> Result<Vec<BenchRow>, BenchError> {
    run_table(BenchCase::Fold, levels, force)
}

pub fn run_cylinder_table(levels: &[usize], force: bool) -> Result<Vec<BenchRow>, BenchError> {
    run_table(BenchCase::Cylinder, levels, force)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCheck {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub passed: bool,
}

impl BenchCheck {
    fn range(name: String, value: f64, lo: f64, hi: f64) -> Self {
        BenchCheck { passed: (lo..=hi).contains(&value), name, value, lo, hi }
    }
}

impl std::fmt::Display for BenchCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {:.6} in [{}, {}]",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.lo,
            self.hi
        )
    }
}

fn doubling_pairs(rows: &[BenchRow]) -> impl Iterator<Item = (&BenchRow, &BenchRow)> {
    rows.iter().flat_map(move |a| rows.iter().filter(move |b| b.n == 2 * a.n).map(move |b| (a, b)))
}

/// Scaling checks for the rows of `case`: every doubling pair present is
/// checked, plus the stretching bound at every level.
pub fn scaling_checks(case: BenchCase, rows: &[BenchRow]) -> Vec<BenchCheck> {
    let mut checks = Vec::new();
    for (a, b) in doubling_pairs(rows) {
        let pair = format!("{}->{}", a.n, b.n);
        match case {
            BenchCase::Fold => {
                checks.push(BenchCheck::range(format!("spoke ratio {pair}"), b.spoke / a.spoke, 0.475, 0.525));
                checks.push(BenchCheck::range(format!("bending ratio {pair}"), b.bending / a.bending, 1.8, 2.2));
            }
            BenchCase::Cylinder if a.n >= 80 => {
                checks.push(BenchCheck::range(format!("spoke ratio {pair}"), b.spoke / a.spoke, 0.22, 0.28));
                checks.push(BenchCheck::range(format!("bending ratio {pair}"), b.bending / a.bending, 0.95, 1.05));
            }
            BenchCase::Cylinder => {}
        }
    }
    if case == BenchCase::Fold {
        for r in rows {
            checks.push(BenchCheck::range(format!("stretch n={}", r.n), r.stretch, 0.0, STRETCH_BOUND));
        }
    }
    checks
}

/// Six significant digits, trailing zeros trimmed.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = (5 - x.abs().log10().floor() as i32).max(0) as usize;
    let s = format!("{x:.digits$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// CSV with header `n,triangles,spoke,spoke_rim,bending`, six significant
/// digits per energy.
pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("n,triangles,spoke,spoke_rim,bending\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.n, r.triangles, sig6(r.spoke), sig6(r.spoke_rim), sig6(r.bending));
    }
    out
}

/// Markdown table with the reference values alongside.
pub fn to_markdown(case: BenchCase, rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let title = match case {
        BenchCase::Fold => "Flat sheet folded at a right angle along its centre line",
        BenchCase::Cylinder => "Flat sheet rolled onto a cylinder",
    };
    let _ = writeln!(out, "### {title} (width {SHEET_WIDTH})\n");
    let _ = writeln!(
        out,
        "| n | Triangles | Spoke | Spoke ref | Spoke-Rim | Spoke-Rim ref | Bending | Bending ref |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|");
    for r in rows {
        let reference = case.reference().iter().find(|t| t.0 == r.n);
        let cell = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            r.n,
            r.triangles,
            sig6(r.spoke),
            cell(reference.map(|t| t.1)),
            sig6(r.spoke_rim),
            cell(reference.map(|t| t.2)),
            sig6(r.bending),
            cell(reference.map(|t| t.3)),
        );
    }
    out.push_str(
        "\nBending uses the half-weight cotan matrix, barycentric vertex areas and \
         excludes boundary vertices, so its absolute values differ from the reference \
         column by a convention factor; the refinement ratios are the meaningful comparison.\n",
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_rejects_large_levels() {
        assert_eq!(run_fold_table(&[1280], false), Err(BenchError::LevelTooLarge(1280)));
        assert_eq!(run_fold_table(&[], false), Err(BenchError::NoLevels));
        assert!(matches!(run_fold_table(&[11], false), Err(BenchError::Mesh(_))));
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(2343.145689), "2343.15");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(1234567.8), "1234568");
        assert_eq!(sig6(18.0), "18");
    }

    #[test]
    fn csv_shape() {
        let rows = run_fold_table(&[10, 20], false).unwrap();
        let csv = to_csv(&rows);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "n,triangles,spoke,spoke_rim,bending");
        assert!(lines[1].starts_with("10,200,"));
        assert!(lines[2].starts_with("20,800,"));
        assert!(to_markdown(BenchCase::Fold, &rows).contains("| 10 | 200 |"));
    }

    #[test]
    fn triangles_are_two_n_squared() {
        for r in run_cylinder_table(&[10, 12], false).unwrap() {
            assert_eq!(r.triangles, 2 * r.n * r.n);
        }
    }
}
