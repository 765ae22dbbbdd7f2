//! The invariant registry and the sampled audits behind the property suite.
//!
//! Every invariant has a stable id in [`INVARIANTS`]. Those marked
//! [`Realization::Suite`] are computed here from a problem instance by
//! [`SUITE`]; the rest are enforced by named integration tests. Sample counts
//! and slack multipliers live in [`AuditConfig`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::float::abs;
use crate::geometry::{ConvexBody, Point};
use crate::km::{asymptotic_regularity_check, km_iterate, KmError, KmParams};
use crate::maps::{CertifiedMap, CommutingCertificate, CommutingFamily, MapKind, COMMUTING_DEFECT_TOL};
use crate::oracle::{self, brute_force_diameter};
use crate::resolvent::{ResolveOptions, Resolvent, SingleRetraction};
use crate::retraction::{build_retraction, lemma1_check, order_sensitivity, Lemma1Options, RetractionProc};

/// Sample counts, tolerances, and slack multipliers for every audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    pub norm_axiom_samples: usize,
    pub norm_rtol: f64,
    pub convexity_pairs: usize,
    pub convexity_tol: f64,
    pub diameter_pairs: usize,
    pub diameter_tol: f64,
    pub self_map_points: usize,
    pub self_map_tol: f64,
    pub lipschitz_pairs: usize,
    pub lipschitz_tol: f64,
    pub commuting_points: usize,
    pub affine_commute_tol: f64,
    pub determinism_points: usize,
    pub resolvent_ns: Vec<u64>,
    pub resolvent_points: usize,
    pub resolvent_pairs: usize,
    /// Multiplier of `inner_tol` in the residual bound.
    pub resolvent_residual_slack: f64,
    /// Multiplier of `inner_tol` in the nonexpansiveness and identity checks.
    pub resolvent_nonexpansive_slack: f64,
    pub resolvent_oracle_points: usize,
    pub km_starts: usize,
    pub km_step_tol: f64,
    pub km_max_iter: u64,
    pub km_monotone_slack: f64,
    pub km_equivalence_steps: u64,
    pub km_half_gamma_tol: f64,
    pub retraction_points: usize,
    pub retraction_pairs: usize,
    /// Multiplier of `eps` in the retraction nonexpansiveness audit.
    pub nonexpansive_slack: f64,
    /// Multiplier of `eps` in the idempotence audit.
    pub idempotence_slack: f64,
    /// Multiplier of `eps` in the oracle-distance audit.
    pub oracle_slack: f64,
    pub order_points: usize,
    pub lemma1_samples: usize,
    pub lemma1_c: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            norm_axiom_samples: 1000,
            norm_rtol: 1e-12,
            convexity_pairs: 1000,
            convexity_tol: 1e-9,
            diameter_pairs: 1000,
            diameter_tol: 1e-9,
            self_map_points: 1000,
            self_map_tol: 1e-9,
            lipschitz_pairs: 10_000,
            lipschitz_tol: 1e-9,
            commuting_points: 100,
            affine_commute_tol: 1e-12,
            determinism_points: 100,
            resolvent_ns: alloc::vec![10, 100, 1000],
            resolvent_points: 100,
            resolvent_pairs: 100,
            resolvent_residual_slack: 2.0,
            resolvent_nonexpansive_slack: 4.0,
            resolvent_oracle_points: 20,
            km_starts: 10,
            km_step_tol: 1e-9,
            km_max_iter: 100_000,
            km_monotone_slack: 1e-10,
            km_equivalence_steps: 10,
            km_half_gamma_tol: 1e-12,
            retraction_points: 50,
            retraction_pairs: 200,
            nonexpansive_slack: 10.0,
            idempotence_slack: 2.0,
            oracle_slack: 5.0,
            order_points: 5,
            lemma1_samples: 5,
            lemma1_c: 10.0,
        }
    }
}

/// Where an invariant is enforced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "by", content = "name", rename_all = "snake_case")]
pub enum Realization {
    /// Computed per problem by [`SUITE`].
    Suite,
    /// Enforced by the named integration test.
    Test(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct InvariantSpec {
    pub id: &'static str,
    pub module: &'static str,
    pub statement: &'static str,
    pub realization: Realization,
}

const fn suite(id: &'static str, module: &'static str, statement: &'static str) -> InvariantSpec {
    InvariantSpec { id, module, statement, realization: Realization::Suite }
}

const fn test(id: &'static str, module: &'static str, statement: &'static str, name: &'static str) -> InvariantSpec {
    InvariantSpec { id, module, statement, realization: Realization::Test(name) }
}

/// Every invariant the artifact checks, each exactly once.
pub static INVARIANTS: &[InvariantSpec] = &[
    suite("geometry.norm_axioms", "geometry", "norm is nonnegative, definite, subadditive and absolutely homogeneous (rtol 1e-12)"),
    suite("geometry.convexity", "geometry", "convex combinations of sampled members are members (tol 1e-9)"),
    suite("geometry.diameter_bound", "geometry", "sampled distances are at most the diameter + 1e-9, which matches brute force"),
    suite("maps.self_map", "maps", "every map sends sampled points into the body (tol 1e-9)"),
    suite("maps.lipschitz_certificate", "maps", "‖Tx − Ty‖ ≤ L‖x − y‖ + 1e-9 on sampled pairs for every certified L"),
    suite("maps.composite_product", "maps", "a composite's certificate is at most the product of its parts' bounds"),
    suite("maps.commuting_defect", "maps", "sampled commutator defects respect the family's certificate"),
    suite("maps.eval_determinism", "maps", "eval is bit-for-bit deterministic"),
    suite("resolvent.residual_bound", "resolvent", "‖T F_n x − F_n x‖ ≤ diam/n + 2·inner_tol"),
    suite("resolvent.nonexpansive", "resolvent", "‖F_n x − F_n y‖ ≤ ‖x − y‖ + 4·inner_tol"),
    suite("resolvent.residual_identity", "resolvent", "|‖T F_n x − F_n x‖ − ‖T F_n x − x‖/n| ≤ 4·inner_tol"),
    suite("resolvent.a_priori_bound", "resolvent", "contraction iterations respect the a-priori Banach bound"),
    suite("resolvent.affine_oracle", "resolvent", "single-map retraction agrees with the linear-solve fixed point"),
    suite("km.fejer", "km", "‖z_{k+1} − p‖ ≤ ‖z_k − p‖ + 1e-10 toward a known fixed point p"),
    suite("km.step_monotone", "km", "step norms are nonincreasing within 1e-10 and reach step_tol"),
    suite("km.averaged_equivalence", "km", "KM equals plain iteration of (1−γ)I + γS, bitwise over 10 steps"),
    suite("km.half_gamma_residual", "km", "for γ = 1/2 every residual is twice its step"),
    suite("retraction.residual_contract", "retraction", "max_i ‖T_i R x − R x‖ ≤ eps"),
    suite("retraction.nonexpansive", "retraction", "‖Rx − Ry‖ ≤ ‖x − y‖ + 10·eps"),
    suite("retraction.idempotent", "retraction", "‖R R x − R x‖ ≤ 2·eps"),
    suite("retraction.order_robustness", "retraction", "every family order meets the contract; output deviation is reported"),
    suite("retraction.affine_oracle", "retraction", "‖R x − p*‖ ≤ 5·eps against the stacked linear solve"),
    suite("retraction.stage_chain", "retraction", "each KM stage ends with small KM and previous-stage residuals"),
    suite("retraction.lemma1", "retraction", "Fix 𝒮 ∩ Fix T̃ = Fix(T̃R) in both directions at c·eps"),
    test("harness.determinism", "harness", "same spec and seed give byte-identical reports except timings", "determinism"),
    test("harness.oracle_independence", "harness", "oracles compile without the solver modules", "oracle_independence"),
    test("harness.registry_completeness", "harness", "the suite computes each registered invariant exactly once", "registry_completeness"),
    test("cli.exit_status", "cli", "exit statuses 0/2/3/4/5 are stable", "exit_status"),
    test("cli.spec_round_trip", "cli", "parse → serialize → parse is the identity", "spec_round_trip"),
    test("cli.schema_defaults", "cli", "a spec with every default explicit reproduces default behavior", "schema_defaults"),
];

/// Outcome of one audit. `margin` is the smallest `bound − measured` over all checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub id: String,
    pub passed: bool,
    pub skipped: bool,
    pub checks: u64,
    pub margin: Option<f64>,
    pub detail: String,
}

/// Everything an audit may look at.
#[derive(Clone, Copy, Debug)]
pub struct AuditContext<'a> {
    pub family: &'a CommutingFamily,
    /// Absent when only map-level audits are wanted.
    pub retraction: Option<&'a RetractionProc>,
    /// Contract `eps` for the single-map retraction audits.
    pub eps: f64,
    pub inner_tol: f64,
    /// Admit maps without a certificate (negative controls).
    pub allow_uncertified: bool,
    pub seed: u64,
    pub config: &'a AuditConfig,
}

impl AuditContext<'_> {
    fn body(&self) -> &ConvexBody {
        self.family.body()
    }

    fn points(&self, salt: u64, count: usize) -> Vec<Point> {
        self.body().sample_points(count.max(1), mix(self.seed, salt))
    }

    fn pairs(&self, salt: u64, count: usize) -> Vec<(Point, Point)> {
        let a = self.points(salt, count + 1);
        let b = self.points(salt ^ 0x5bd1_e995, count + 1);
        a.into_iter().zip(b).skip(1).collect()
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(self.seed, salt))
    }

    fn usable_maps(&self) -> impl Iterator<Item = &CertifiedMap> {
        let allow = self.allow_uncertified;
        self.family.maps().iter().filter(move |m| allow || m.is_certified())
    }

    fn resolve_options(&self) -> ResolveOptions {
        ResolveOptions { allow_uncertified: self.allow_uncertified, ..Default::default() }
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Accumulates checks of the form `measured ≤ bound`.
struct Tally {
    checks: u64,
    margin: f64,
    failure: Option<String>,
    notes: Vec<String>,
    skipped: bool,
}

impl Tally {
    fn new() -> Self {
        Self { checks: 0, margin: f64::INFINITY, failure: None, notes: Vec::new(), skipped: false }
    }

    fn check(&mut self, measured: f64, bound: f64, what: impl FnOnce() -> String) {
        self.checks += 1;
        let m = if measured.is_nan() { f64::NEG_INFINITY } else { bound - measured };
        self.margin = self.margin.min(m);
        if !(measured <= bound) && self.failure.is_none() {
            self.failure = Some(format!("{}: measured {measured:.6e} > bound {bound:.6e}", what()));
        }
    }

    fn fail(&mut self, msg: String) {
        self.checks += 1;
        self.margin = f64::NEG_INFINITY;
        if self.failure.is_none() {
            self.failure = Some(msg);
        }
    }

    fn note(&mut self, msg: String) {
        self.notes.push(msg);
    }

    fn finish(self, id: &str) -> AuditResult {
        let skipped = self.skipped || self.checks == 0;
        let mut detail = self.failure.clone().unwrap_or_default();
        for n in &self.notes {
            if !detail.is_empty() {
                detail.push_str("; ");
            }
            detail.push_str(n);
        }
        AuditResult {
            id: id.into(),
            passed: self.failure.is_none(),
            skipped,
            checks: self.checks,
            margin: self.margin.is_finite().then_some(self.margin),
            detail,
        }
    }
}

type AuditFn = fn(&AuditContext<'_>, &mut Tally);

fn run(id: &str, ctx: &AuditContext<'_>, f: AuditFn) -> AuditResult {
    let mut tally = Tally::new();
    f(ctx, &mut tally);
    tally.finish(id)
}

/// An invariant id and the audit that computes it.
pub type SuiteEntry = (&'static str, fn(&AuditContext<'_>) -> AuditResult);

/// Suite audits in registry order; each entry computes exactly one invariant.
pub static SUITE: &[SuiteEntry] = &[
    ("geometry.norm_axioms", |c| run("geometry.norm_axioms", c, norm_axioms)),
    ("geometry.convexity", |c| run("geometry.convexity", c, convexity)),
    ("geometry.diameter_bound", |c| run("geometry.diameter_bound", c, diameter_bound)),
    ("maps.self_map", |c| run("maps.self_map", c, self_map)),
    ("maps.lipschitz_certificate", |c| run("maps.lipschitz_certificate", c, lipschitz_certificate)),
    ("maps.composite_product", |c| run("maps.composite_product", c, composite_product)),
    ("maps.commuting_defect", |c| run("maps.commuting_defect", c, commuting_defect)),
    ("maps.eval_determinism", |c| run("maps.eval_determinism", c, eval_determinism)),
    ("resolvent.residual_bound", |c| run("resolvent.residual_bound", c, resolvent_residual_bound)),
    ("resolvent.nonexpansive", |c| run("resolvent.nonexpansive", c, resolvent_nonexpansive)),
    ("resolvent.residual_identity", |c| run("resolvent.residual_identity", c, resolvent_residual_identity)),
    ("resolvent.a_priori_bound", |c| run("resolvent.a_priori_bound", c, resolvent_a_priori)),
    ("resolvent.affine_oracle", |c| run("resolvent.affine_oracle", c, resolvent_affine_oracle)),
    ("km.fejer", |c| run("km.fejer", c, km_fejer)),
    ("km.step_monotone", |c| run("km.step_monotone", c, km_step_monotone)),
    ("km.averaged_equivalence", |c| run("km.averaged_equivalence", c, km_averaged_equivalence)),
    ("km.half_gamma_residual", |c| run("km.half_gamma_residual", c, km_half_gamma)),
    ("retraction.residual_contract", |c| run("retraction.residual_contract", c, retraction_contract)),
    ("retraction.nonexpansive", |c| run("retraction.nonexpansive", c, retraction_nonexpansive)),
    ("retraction.idempotent", |c| run("retraction.idempotent", c, retraction_idempotent)),
    ("retraction.order_robustness", |c| run("retraction.order_robustness", c, retraction_order)),
    ("retraction.affine_oracle", |c| run("retraction.affine_oracle", c, retraction_affine_oracle)),
    ("retraction.stage_chain", |c| run("retraction.stage_chain", c, retraction_stage_chain)),
    ("retraction.lemma1", |c| run("retraction.lemma1", c, retraction_lemma1)),
];

/// Runs one suite audit by id.
pub fn run_audit(id: &str, ctx: &AuditContext<'_>) -> Option<AuditResult> {
    SUITE.iter().find(|(i, _)| *i == id).map(|(_, f)| f(ctx))
}

/// Runs every suite audit in registry order.
pub fn run_all(ctx: &AuditContext<'_>) -> Vec<AuditResult> {
    SUITE.iter().map(|(_, f)| f(ctx)).collect()
}

fn norm_axioms(ctx: &AuditContext<'_>, t: &mut Tally) {
    let space = ctx.body().space();
    let cfg = ctx.config;
    let center = ctx.body().center();
    let pts = ctx.pairs(1, cfg.norm_axiom_samples);
    let mut rng = ctx.rng(2);
    let zero = Point::zeros(space.dim());
    t.check(space.norm(&zero), 0.0, || "‖0‖".into());
    for (p, q) in &pts {
        let u = p.sub(&center);
        let v = q.sub(&center);
        let (nu, nv) = (space.norm(&u), space.norm(&v));
        t.check(-nu, 0.0, || format!("nonnegativity at {u:?}"));
        if u.iter().any(|x| *x != 0.0) && nu <= 0.0 {
            t.fail(format!("definiteness: ‖{u:?}‖ = 0"));
        }
        let sum: Vec<f64> = u.iter().zip(v.iter()).map(|(a, b)| a + b).collect();
        t.check(space.norm(&sum), (nu + nv) * (1.0 + cfg.norm_rtol), || format!("triangle at {u:?}, {v:?}"));
        let a: f64 = rng.random_range(-3.0..3.0);
        let scaled: Vec<f64> = u.iter().map(|x| a * x).collect();
        t.check(abs(space.norm(&scaled) - abs(a) * nu), cfg.norm_rtol * abs(a) * nu, || format!("homogeneity with a = {a}"));
    }
}

fn convexity(ctx: &AuditContext<'_>, t: &mut Tally) {
    let body = ctx.body();
    let mut rng = ctx.rng(3);
    for (p, q) in ctx.pairs(4, ctx.config.convexity_pairs) {
        let lambda: f64 = rng.random();
        let mix = p.lerp(&q, lambda);
        t.check(body.distance(&mix), ctx.config.convexity_tol, || format!("λ = {lambda} between {p:?} and {q:?}"));
    }
}

fn diameter_bound(ctx: &AuditContext<'_>, t: &mut Tally) {
    let body = ctx.body();
    let space = body.space();
    let diam = body.diameter();
    for (p, q) in ctx.pairs(5, ctx.config.diameter_pairs) {
        t.check(space.dist(&p, &q), diam + ctx.config.diameter_tol, || format!("pair {p:?}, {q:?}"));
    }
    let brute = brute_force_diameter(body).value().unwrap_or(f64::NAN);
    t.check(abs(brute - diam), 1e-12 * (1.0 + diam), || "cached diameter vs brute force".into());
}

fn self_map(ctx: &AuditContext<'_>, t: &mut Tally) {
    let body = ctx.body();
    let pts = ctx.points(6, ctx.config.self_map_points);
    for map in ctx.family.maps() {
        for p in &pts {
            let y = map.eval_unchecked(p);
            t.check(body.distance(&y), ctx.config.self_map_tol, || format!("`{}` at {p:?}", map.name()));
        }
    }
}

fn lipschitz_certificate(ctx: &AuditContext<'_>, t: &mut Tally) {
    let space = ctx.body().space();
    let pairs = ctx.pairs(7, ctx.config.lipschitz_pairs);
    for map in ctx.family.maps() {
        let Some(l) = map.certificate().value() else {
            t.note(format!("`{}` has no certificate", map.name()));
            continue;
        };
        for (x, y) in &pairs {
            let lhs = space.dist(&map.eval_unchecked(x), &map.eval_unchecked(y));
            t.check(lhs, l * space.dist(x, y) + ctx.config.lipschitz_tol, || format!("`{}` at {x:?}, {y:?}", map.name()));
        }
    }
}

/// Lipschitz bound of one part computed independently of the certifier.
fn part_bound(part: &MapKind, ctx: &AuditContext<'_>) -> f64 {
    let space = ctx.body().space();
    let dim = space.dim();
    match part {
        MapKind::Composite { parts } => parts.iter().map(|p| part_bound(p, ctx)).product(),
        MapKind::CoordWise { .. } if part.affine_form(dim).is_none() => part.coordinatewise_lipschitz().unwrap_or(f64::INFINITY),
        MapKind::SquareMap => f64::INFINITY,
        _ => match part.affine_form(dim) {
            Some(form) => oracle::operator_norm_oracle(&form.linear, space).value().unwrap_or(f64::INFINITY),
            None => f64::INFINITY,
        },
    }
}

fn composite_product(ctx: &AuditContext<'_>, t: &mut Tally) {
    for map in ctx.family.maps() {
        let MapKind::Composite { parts } = map.kind() else { continue };
        let Some(cert) = map.certificate().value() else { continue };
        let bounds: Vec<f64> = parts.iter().map(|p| part_bound(p, ctx)).collect();
        let product: f64 = bounds.iter().product();
        t.check(cert, product * (1.0 + 1e-12) + 1e-15, || format!("`{}` parts {bounds:?}", map.name()));
        if bounds.iter().all(|b| *b <= 1.0) {
            t.check(cert, 1.0 + crate::maps::NONEXPANSIVE_SLACK, || format!("`{}` with nonexpansive parts", map.name()));
        }
    }
    if t.checks == 0 {
        t.note("no certified composite maps".into());
    }
}

fn commuting_defect(ctx: &AuditContext<'_>, t: &mut Tally) {
    let bound = match ctx.family.commutativity() {
        CommutingCertificate::ProvedAffine { .. } => ctx.config.affine_commute_tol,
        CommutingCertificate::Sampled { .. } | CommutingCertificate::Unchecked => COMMUTING_DEFECT_TOL,
    };
    for x in ctx.points(8, ctx.config.commuting_points) {
        match ctx.family.commutator_defect(&x) {
            Ok((d, i, j)) => t.check(d, bound, || format!("pair ({i}, {j}) at {x:?}")),
            Err(e) => t.fail(format!("{e}")),
        }
    }
}

fn eval_determinism(ctx: &AuditContext<'_>, t: &mut Tally) {
    for map in ctx.family.maps() {
        for x in ctx.points(9, ctx.config.determinism_points) {
            let a = map.eval_unchecked(&x);
            let b = map.eval_unchecked(&x);
            let same = a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits());
            t.check(if same { 0.0 } else { 1.0 }, 0.0, || format!("`{}` at {x:?}", map.name()));
        }
    }
}

/// Calls `f(map, resolvent, n)` for every usable map and audit `n`.
fn each_resolvent(ctx: &AuditContext<'_>, t: &mut Tally, mut f: impl FnMut(&CertifiedMap, &Resolvent, u64, &mut Tally)) {
    for map in ctx.usable_maps() {
        for &n in &ctx.config.resolvent_ns {
            match Resolvent::new(map.clone(), n, ctx.inner_tol, ctx.resolve_options()) {
                Ok(r) => f(map, &r, n, t),
                Err(e) => t.fail(format!("`{}`, n = {n}: {e}", map.name())),
            }
        }
    }
}

fn resolvent_residual_bound(ctx: &AuditContext<'_>, t: &mut Tally) {
    let diam = ctx.body().diameter();
    let pts = ctx.points(10, ctx.config.resolvent_points);
    let slack = ctx.config.resolvent_residual_slack * ctx.inner_tol;
    each_resolvent(ctx, t, |map, r, n, t| {
        for x in &pts {
            match r.apply(x, None) {
                Ok(out) => t.check(out.residual_t, diam / n as f64 + slack, || format!("`{}`, n = {n}, x = {x:?}", map.name())),
                Err(e) => t.fail(format!("`{}`, n = {n}: {e}", map.name())),
            }
        }
    });
}

fn resolvent_nonexpansive(ctx: &AuditContext<'_>, t: &mut Tally) {
    let space = ctx.body().space();
    let pairs = ctx.pairs(11, ctx.config.resolvent_pairs);
    let slack = ctx.config.resolvent_nonexpansive_slack * ctx.inner_tol;
    each_resolvent(ctx, t, |map, r, n, t| {
        for (x, y) in &pairs {
            match (r.apply(x, None), r.apply(y, None)) {
                (Ok(fx), Ok(fy)) => t.check(space.dist(&fx.point, &fy.point), space.dist(x, y) + slack, || {
                    format!("`{}`, n = {n}, pair {x:?}, {y:?}", map.name())
                }),
                (Err(e), _) | (_, Err(e)) => t.fail(format!("`{}`, n = {n}: {e}", map.name())),
            }
        }
    });
}

fn resolvent_residual_identity(ctx: &AuditContext<'_>, t: &mut Tally) {
    let pts = ctx.points(10, ctx.config.resolvent_points);
    let slack = ctx.config.resolvent_nonexpansive_slack * ctx.inner_tol;
    each_resolvent(ctx, t, |map, r, n, t| {
        for x in &pts {
            match r.apply(x, None) {
                Ok(out) => t.check(abs(out.residual_t - out.anchor_residual / n as f64), slack, || {
                    format!("`{}`, n = {n}, x = {x:?}", map.name())
                }),
                Err(e) => t.fail(format!("`{}`, n = {n}: {e}", map.name())),
            }
        }
    });
}

fn resolvent_a_priori(ctx: &AuditContext<'_>, t: &mut Tally) {
    let pts = ctx.points(10, ctx.config.resolvent_points);
    each_resolvent(ctx, t, |map, r, n, t| {
        for x in &pts {
            match r.apply(x, None) {
                Ok(out) => {
                    if let Some(bound) = out.inner.a_priori_bound() {
                        t.check(out.inner.iterations_used as f64, bound as f64, || format!("`{}`, n = {n}, x = {x:?}", map.name()));
                    }
                }
                Err(e) => t.fail(format!("`{}`, n = {n}: {e}", map.name())),
            }
        }
    });
}

fn resolvent_affine_oracle(ctx: &AuditContext<'_>, t: &mut Tally) {
    let space = ctx.body().space();
    let pts = ctx.points(12, ctx.config.resolvent_oracle_points);
    for map in ctx.usable_maps() {
        let Some(form) = map.affine_form() else { continue };
        let (p, gain) = match (oracle::affine_fixed_point_oracle(&form.linear, &form.offset), oracle::fixed_point_gain(&form.linear, space)) {
            (Ok(p), Ok(g)) => (p.point().cloned().expect("fixed point"), g),
            (Err(e), _) | (_, Err(e)) => {
                t.note(format!("`{}`: {e}", map.name()));
                continue;
            }
        };
        let r = match SingleRetraction::new(map.clone(), ctx.eps, ctx.inner_tol, ctx.resolve_options()) {
            Ok(r) => r,
            Err(e) => {
                t.fail(format!("`{}`: {e}", map.name()));
                continue;
            }
        };
        let bound = r.residual_bound() * gain.max(1.0);
        for x in &pts {
            match r.apply(x, None) {
                Ok(out) => t.check(space.dist(&out.point, &p), bound, || format!("`{}` at {x:?}", map.name())),
                Err(e) => t.fail(format!("`{}`: {e}", map.name())),
            }
        }
    }
    if t.checks == 0 {
        t.skipped = true;
    }
}

fn km_params(ctx: &AuditContext<'_>, max_iter: u64) -> KmParams {
    let gamma = ctx.retraction.map_or(crate::km::DEFAULT_GAMMA, |r| r.options().gamma);
    KmParams { gamma, step_tol: ctx.config.km_step_tol, max_iter }
}

fn km_fejer(ctx: &AuditContext<'_>, t: &mut Tally) {
    let space = ctx.body().space();
    let starts = ctx.points(13, ctx.config.km_starts);
    for map in ctx.usable_maps() {
        let Some(form) = map.affine_form() else { continue };
        let Ok(p) = oracle::affine_fixed_point_oracle(&form.linear, &form.offset) else { continue };
        let p = p.point().cloned().expect("fixed point");
        for x0 in &starts {
            let mut dists = Vec::new();
            let s = |z: &[f64]| {
                dists.push(space.dist(z, &p));
                Ok::<_, core::convert::Infallible>(map.eval_unchecked(z))
            };
            let last = match km_iterate(space, s, x0, &km_params(ctx, ctx.config.km_max_iter)) {
                Ok(out) => Some(out.point),
                Err(KmError::Timeout { trace, .. }) => Some(trace.current().clone()),
                Err(_) => None,
            };
            if let Some(z) = last {
                dists.push(space.dist(&z, &p));
            }
            for (k, w) in dists.windows(2).enumerate() {
                t.check(w[1], w[0] + ctx.config.km_monotone_slack, || format!("`{}` from {x0:?}, step {k}", map.name()));
            }
        }
    }
    if t.checks == 0 {
        t.skipped = true;
    }
}

fn km_step_monotone(ctx: &AuditContext<'_>, t: &mut Tally) {
    let space = ctx.body().space();
    let starts = ctx.points(14, ctx.config.km_starts);
    for map in ctx.usable_maps() {
        for x0 in &starts {
            let s = |z: &[f64]| Ok::<_, core::convert::Infallible>(map.eval_unchecked(z));
            let trace = match km_iterate(space, s, x0, &km_params(ctx, ctx.config.km_max_iter)) {
                Ok(out) => out.trace,
                Err(KmError::Timeout { trace, .. }) => *trace,
                Err(e) => {
                    t.fail(format!("`{}`: {e}", map.name()));
                    continue;
                }
            };
            let report = asymptotic_regularity_check(&trace);
            t.check(report.max_increase, ctx.config.km_monotone_slack, || {
                format!("`{}` from {x0:?}: first violation at step {:?}", map.name(), report.first_violation)
            });
            if !report.converged {
                t.fail(format!("`{}` from {x0:?}: final step {:.3e} above step_tol after {} iterations", map.name(), report.final_step, trace.iterations()));
            }
        }
    }
}

fn km_averaged_equivalence(ctx: &AuditContext<'_>, t: &mut Tally) {
    let space = ctx.body().space();
    let steps = ctx.config.km_equivalence_steps;
    let starts = ctx.points(15, 3);
    for map in ctx.usable_maps() {
        let params = KmParams { step_tol: f64::MIN_POSITIVE, ..km_params(ctx, steps) };
        let gamma = params.gamma;
        for x0 in &starts {
            let mut seen = Vec::new();
            let s = |z: &[f64]| {
                seen.push(Point(z.to_vec()));
                Ok::<_, core::convert::Infallible>(map.eval_unchecked(z))
            };
            let mut km_iterates = match km_iterate(space, s, x0, &params) {
                Ok(out) => {
                    seen.push(out.point);
                    seen
                }
                Err(KmError::Timeout { trace, .. }) => {
                    seen.push(trace.current().clone());
                    seen
                }
                Err(e) => {
                    t.fail(format!("`{}`: {e}", map.name()));
                    continue;
                }
            };
            km_iterates.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
            let mut z = x0.clone();
            let mut plain = alloc::vec![z.clone()];
            for _ in 0..steps {
                let sz = map.eval_unchecked(&z);
                z = z.iter().zip(sz.iter()).map(|(a, b)| (1.0 - gamma) * a + gamma * b).collect::<Vec<_>>().into();
                plain.push(z.clone());
            }
            plain.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
            let same = km_iterates.len() == plain.len()
                && km_iterates.iter().zip(&plain).all(|(a, b)| a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
            t.check(if same { 0.0 } else { 1.0 }, 0.0, || format!("`{}` from {x0:?}", map.name()));
        }
    }
}

fn km_half_gamma(ctx: &AuditContext<'_>, t: &mut Tally) {
    let space = ctx.body().space();
    let starts = ctx.points(16, ctx.config.km_starts.min(3));
    let params = KmParams { gamma: 0.5, step_tol: ctx.config.km_step_tol, max_iter: ctx.config.km_max_iter };
    for map in ctx.usable_maps() {
        for x0 in &starts {
            let s = |z: &[f64]| Ok::<_, core::convert::Infallible>(map.eval_unchecked(z));
            let trace = match km_iterate(space, s, x0, &params) {
                Ok(out) => out.trace,
                Err(KmError::Timeout { trace, .. }) => *trace,
                Err(_) => continue,
            };
            for (k, (r, s)) in trace.residuals.iter().zip(&trace.step_norms).enumerate() {
                t.check(abs(r - 2.0 * s), ctx.config.km_half_gamma_tol, || format!("`{}` from {x0:?}, step {k}", map.name()));
            }
        }
    }
}

fn with_retraction(ctx: &AuditContext<'_>, t: &mut Tally, f: impl FnOnce(&RetractionProc, &mut Tally)) {
    match ctx.retraction {
        Some(r) => f(r, t),
        None => {
            t.skipped = true;
            t.note("no retraction built".into());
        }
    }
}

fn retraction_contract(ctx: &AuditContext<'_>, t: &mut Tally) {
    with_retraction(ctx, t, |r, t| {
        for x in ctx.points(17, ctx.config.retraction_points) {
            match r.apply(&x) {
                Ok((_, diag)) => t.check(diag.max_residual, r.eps(), || format!("x = {x:?}")),
                Err(e) => t.fail(format!("x = {x:?}: {e}")),
            }
        }
    });
}

fn retraction_nonexpansive(ctx: &AuditContext<'_>, t: &mut Tally) {
    with_retraction(ctx, t, |r, t| {
        let space = ctx.body().space();
        let slack = ctx.config.nonexpansive_slack * r.eps();
        let mut worst_ratio = 0.0f64;
        for (x, y) in ctx.pairs(18, ctx.config.retraction_pairs) {
            match (r.apply(&x), r.apply(&y)) {
                (Ok((rx, _)), Ok((ry, _))) => {
                    let (out, inp) = (space.dist(&rx, &ry), space.dist(&x, &y));
                    if inp > 0.0 {
                        worst_ratio = worst_ratio.max(out / inp);
                    }
                    t.check(out, inp + slack, || format!("pair {x:?}, {y:?}"));
                }
                (Err(e), _) | (_, Err(e)) => t.fail(format!("{e}")),
            }
        }
        t.note(format!("worst ratio {worst_ratio:.9}"));
    });
}

fn retraction_idempotent(ctx: &AuditContext<'_>, t: &mut Tally) {
    with_retraction(ctx, t, |r, t| {
        let space = ctx.body().space();
        for x in ctx.points(17, ctx.config.retraction_points) {
            match r.apply(&x).and_then(|(y, _)| Ok((r.apply(&y)?.0, y))) {
                Ok((ry, y)) => t.check(space.dist(&ry, &y), ctx.config.idempotence_slack * r.eps(), || format!("x = {x:?}")),
                Err(e) => t.fail(format!("x = {x:?}: {e}")),
            }
        }
    });
}

fn retraction_order(ctx: &AuditContext<'_>, t: &mut Tally) {
    with_retraction(ctx, t, |r, t| {
        let n = ctx.family.len();
        let mut orders: Vec<Vec<usize>> = alloc::vec![(0..n).collect(), (0..n).rev().collect(), (1..n).chain(0..1).collect()];
        orders.dedup();
        if n == 2 {
            orders.truncate(2);
        }
        let pts = ctx.points(19, ctx.config.order_points);
        match order_sensitivity(ctx.family, r.eps(), r.options(), &orders, &pts) {
            Ok(rep) => {
                t.check(rep.max_residual, r.eps(), || format!("orders {:?}", rep.orders));
                t.note(format!("max deviation across {} orders: {:.3e}", rep.orders.len(), rep.max_deviation));
            }
            Err(e) => t.fail(format!("{e}")),
        }
    });
}

fn retraction_affine_oracle(ctx: &AuditContext<'_>, t: &mut Tally) {
    with_retraction(ctx, t, |r, t| {
        let forms: Option<Vec<_>> = ctx.family.maps().iter().map(|m| m.affine_form().map(|f| (f.linear, f.offset))).collect();
        let Some(forms) = forms else {
            t.skipped = true;
            t.note("family is not all-affine".into());
            return;
        };
        let p = match oracle::stacked_fixed_point_oracle(&forms) {
            Ok(p) => p.point().cloned().expect("fixed point"),
            Err(e) => {
                t.skipped = true;
                t.note(format!("{e}"));
                return;
            }
        };
        let space = ctx.body().space();
        for x in ctx.points(17, ctx.config.retraction_points) {
            match r.apply(&x) {
                Ok((y, _)) => t.check(space.dist(&y, &p), ctx.config.oracle_slack * r.eps(), || format!("x = {x:?}")),
                Err(e) => t.fail(format!("{e}")),
            }
        }
    });
}

fn retraction_stage_chain(ctx: &AuditContext<'_>, t: &mut Tally) {
    with_retraction(ctx, t, |r, t| {
        if r.stage_count() < 2 {
            t.note("single stage".into());
        }
        for x in ctx.points(20, ctx.config.order_points) {
            match r.stage_chain(&x) {
                Ok(rows) => {
                    for row in rows {
                        t.check(row.km_residual, row.bound, || format!("stage {} KM residual at x = {x:?}", row.stage));
                        t.check(row.previous_residual, row.bound, || format!("stage {} previous-stage residual at x = {x:?}", row.stage));
                    }
                }
                Err(e) => t.fail(format!("{e}")),
            }
        }
        if t.checks == 0 {
            t.skipped = true;
        }
    });
}

fn retraction_lemma1(ctx: &AuditContext<'_>, t: &mut Tally) {
    with_retraction(ctx, t, |r, t| {
        let opts = Lemma1Options { c: ctx.config.lemma1_c, tol: None };
        let samples = ctx.config.lemma1_samples;
        let mut cases = alloc::vec![(ctx.family.clone(), CertifiedMap::identity(ctx.family.body().clone()))];
        let n = ctx.family.len();
        if n >= 2 {
            let sub = ctx.family.reordered(&(0..n - 1).collect::<Vec<_>>());
            cases.push((sub, ctx.family.maps()[n - 1].clone()));
        }
        for (k, (family, extra)) in cases.into_iter().enumerate() {
            let built = if k == 0 { Ok(r.clone()) } else { build_retraction(&family, r.eps(), r.options()) };
            let report = built.and_then(|rr| lemma1_check(&family, &rr, &extra, samples, mix(ctx.seed, 21 + k as u64), &opts));
            match report {
                Ok(rep) => {
                    for p in rep.subset.iter().chain(&rep.superset) {
                        t.check(p.measured, p.bound, || format!("extra `{}` at {:?}", extra.name(), p.x));
                    }
                    if rep.subset.is_empty() || rep.superset.is_empty() {
                        t.fail(format!("extra `{}`: no admissible points ({} skipped)", extra.name(), rep.skipped));
                    }
                }
                Err(e) => t.fail(format!("extra `{}`: {e}", extra.name())),
            }
        }
    });
}
