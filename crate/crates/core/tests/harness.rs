use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use retractor_core::audit::{AuditConfig, AuditContext, Realization, INVARIANTS, SUITE};
use retractor_core::geometry::{ConvexBody, Norm, NormedSpace};
use retractor_core::linalg::Matrix;
use retractor_core::maps::{CertifiedMap, CommutingFamily, MapKind};
use retractor_core::oracle::{affine_fixed_point_oracle, stacked_fixed_point_oracle};
use retractor_core::retraction::{build_retraction, BuildOptions};

fn workspace_crates() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).parent().unwrap().to_path_buf()
}

fn rust_files(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = fs::read_dir(dir) else { return };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.is_dir() {
            rust_files(&path, out);
        } else if path.extension().is_some_and(|e| e == "rs") {
            out.push(path);
        }
    }
}

#[test]
fn registry_completeness() {
    let mut ids = BTreeSet::new();
    for inv in INVARIANTS {
        assert!(ids.insert(inv.id), "duplicate invariant id {}", inv.id);
        assert!(inv.id.starts_with(inv.module), "{} is filed under {}", inv.id, inv.module);
    }

    let registered: Vec<&str> = INVARIANTS.iter().filter(|i| i.realization == Realization::Suite).map(|i| i.id).collect();
    let computed: Vec<&str> = SUITE.iter().map(|(id, _)| *id).collect();
    let unique: BTreeSet<&str> = computed.iter().copied().collect();
    assert_eq!(unique.len(), computed.len(), "an audit appears twice in the suite");
    assert_eq!(registered, computed, "suite and registry disagree");

    // Test-realized invariants must name an existing test function somewhere in the workspace.
    let mut sources = Vec::new();
    for krate in fs::read_dir(workspace_crates()).unwrap().flatten() {
        rust_files(&krate.path().join("tests"), &mut sources);
    }
    let text: String = sources.iter().map(|p| fs::read_to_string(p).unwrap()).collect();
    for inv in INVARIANTS {
        if let Realization::Test(name) = inv.realization {
            let pattern = format!("fn {name}()");
            assert_eq!(text.matches(&pattern).count(), 1, "{} should be realized by exactly one `{pattern}`", inv.id);
        }
    }

    for module in ["geometry", "maps", "resolvent", "km", "retraction", "harness", "cli"] {
        assert!(INVARIANTS.iter().any(|i| i.module == module), "no invariant registered for {module}");
    }
}

/// The oracle and everything it imports must stay clear of the solver modules.
#[test]
fn oracle_independence() {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    let oracle_side = ["oracle.rs", "linalg.rs", "float.rs", "geometry/mod.rs", "geometry/body.rs", "geometry/polytope.rs"];
    let solver_modules = ["resolvent", "km", "retraction", "maps", "audit", "trace"];
    for file in oracle_side {
        let text = fs::read_to_string(src.join(file)).unwrap();
        for line in text.lines().map(str::trim).filter(|l| l.starts_with("use ") || l.starts_with("pub use ")) {
            for module in solver_modules {
                assert!(
                    !line.contains(&format!("crate::{module}")) && !line.contains(&format!("super::{module}")),
                    "{file} imports solver module {module}: {line}"
                );
            }
        }
    }

    // The two linear-solve paths agree on a shared instance.
    let theta = std::f64::consts::FRAC_PI_2;
    let q = 0.9;
    let a = Matrix::from_rows(&[[q * theta.cos(), -q * theta.sin()], [q * theta.sin(), q * theta.cos()]]).unwrap();
    let b = vec![0.1, 0.3];
    let single = affine_fixed_point_oracle(&a, &b).unwrap();
    let stacked = stacked_fixed_point_oracle(&[(a.clone(), b.clone())]).unwrap();
    let (p, s) = (single.point().unwrap(), stacked.point().unwrap());
    for i in 0..2 {
        assert!((p[i] - s[i]).abs() < 1e-12);
    }
    let image = a.mul_vec(p);
    for i in 0..2 {
        assert!((image[i] + b[i] - p[i]).abs() < 1e-12);
    }
}

#[test]
fn rotation_pair_suite_all_pass() {
    let body = Arc::new(ConvexBody::unit_ball(NormedSpace::new(2, Norm::L2).unwrap()));
    let rot = |d: f64| {
        CertifiedMap::new(format!("rot{d}"), body.clone(), MapKind::Rotation2D { center: [0.0, 0.0], degrees: d })
            .unwrap()
            .certified(100, 1)
            .unwrap()
    };
    let family = CommutingFamily::new(vec![rot(73.0), rot(191.0)]).unwrap().certified(50, 2).unwrap();
    let r = build_retraction(&family, 1e-6, &BuildOptions::default()).unwrap();
    let config = AuditConfig::default();
    let ctx = AuditContext { family: &family, retraction: Some(&r), eps: 1e-6, inner_tol: 1e-7, allow_uncertified: false, seed: 42, config: &config };
    for (id, audit) in SUITE {
        let result = audit(&ctx);
        assert!(result.passed, "{id}: {}", result.detail);
        if let Some(m) = result.margin {
            assert!(m >= 0.0, "{id} has negative margin {m}");
        }
    }
}
