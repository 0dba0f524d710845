use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wickcal::bundles::{build_charges, Charges};
use wickcal::euclidean::{
    calderon_projectors, compare_projectors, dtn_map, euclidean_charge, green_identities, poisson, wick_rotate,
    CalderonProjectors, EllipticOptions, EllipticProblem, Side,
};
use wickcal::factorization::{
    cauchy_evolution, evolution_factorization_profile, factorize, green_charge_check, lorentzian_charge,
    projectors_of, pseudo_unitarity_defect, FactorizationResult, FactorizeOptions, HadamardProjectors,
    ProjectorResiduals, TestSection,
};
use wickcal::gauge_states::{
    build_gauge_surface_ops, gauge_fix_solve, gauge_intertwine_residual, kernel_slice, positivity_report,
    state_conditions_report, synchronous_decompose, GaugeFixer, GaugeSurfaceOps, Provenance, StateArtifacts,
    StateTolerances,
};
use wickcal::geometry::{
    constraint_check, gauge_residuals, reduced_ops_from, series_of, spacetime_gauge_residuals, Bundle, MetricFamily,
    Model, ReducedGeometry, ReducedOps,
};
use wickcal::linalg::{c, C64};
use wickcal::spectral_core::{DecayTable, GridSpec, SectionField, TimeAnalyticOperator, NOISE_FLOOR};

use crate::catalog::{self, CheckSpec};
use crate::report::{CheckRecord, Timing};
use crate::scenario::{MetricSpec, ModelKind, Role, Scenario, Stage};

/// Orders recorded in every decay table; checks read the subset they need.
const TABLE_ORDERS: [i32; 4] = [1, 2, 3, 4];
const DTN_KMAX: f64 = 20.0;
const PROFILE_KMAX: f64 = 32.0;
const EVOLUTION_T: f64 = 0.5;
const FACTORIZATION_T: f64 = 0.1;
const GREEN_WINDOW: f64 = 0.6;
const GAUGE_FIX_SAMPLES: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.message)
    }
}

type Res<T> = Result<T, StageError>;

fn at(stage: Stage) -> impl Fn(wickcal::Error) -> StageError {
    move |e| StageError { stage, message: e.to_string() }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<CheckRecord>,
    pub tables: Vec<(String, DecayTable)>,
    pub details: BTreeMap<String, Value>,
    pub timing: Timing,
}

/// One bundle: `a(t)` and its fiber signature `τ`.
struct Slot {
    a: TimeAnalyticOperator,
    tau: Vec<f64>,
}

struct Operators {
    order: usize,
    metric: MetricFamily,
    geo: ReducedGeometry,
    slots: Vec<Slot>,
    gravity: Option<ReducedOps>,
}

struct Lorentzian {
    fr: FactorizationResult,
    hp: HadamardProjectors,
}

struct Euclidean {
    p: EllipticProblem,
    ct: CalderonProjectors,
}

struct Run<'a> {
    s: &'a Scenario,
    filter: Option<&'a [String]>,
    grid: GridSpec,
    out: Outcome,
    ops: Vec<Operators>,
    lorentzian: Option<Vec<Lorentzian>>,
    euclidean: Option<Vec<Euclidean>>,
    charges: Option<(Charges, Charges)>,
    surface: Option<GaugeSurfaceOps>,
    fixer: Option<GaugeFixer>,
}

/// Runs every applicable stage in order and collects the selected checks.
pub fn execute(s: &Scenario, filter: Option<&[String]>) -> Res<Outcome> {
    let grid = GridSpec::periodic(s.dim, s.n_per_axis).map_err(at(Stage::Geometry))?;
    let mut run = Run {
        s,
        filter,
        grid,
        out: Outcome::default(),
        ops: Vec::new(),
        lorentzian: None,
        euclidean: None,
        charges: None,
        surface: None,
        fixer: None,
    };
    let start = Instant::now();
    for stage in Stage::ALL {
        if !s.runs(stage) {
            continue;
        }
        let t0 = Instant::now();
        match stage {
            Stage::Geometry => run.geometry()?,
            Stage::Factorization => run.factorization()?,
            Stage::Euclidean => run.euclidean_stage()?,
            Stage::GaugeStates => run.gauge_states()?,
        }
        run.out.timing.stages.insert(stage.name().into(), t0.elapsed().as_secs_f64());
    }
    run.out.timing.total = start.elapsed().as_secs_f64();
    Ok(run.out)
}

fn random_band_field(grid: &GridSpec, fiber: usize, seed: u64, decay: f64) -> SectionField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = vec![C64::new(0.0, 0.0); grid.points() * fiber];
    for j in (0..grid.points()).filter(|&j| grid.is_band_limited(j)) {
        let w = (1.0 + grid.k2(j)).powf(-decay);
        for comp in 0..fiber {
            modes[j * fiber + comp] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w;
        }
    }
    SectionField::from_modes(grid, fiber, &modes)
}

fn max_residuals(list: &[ProjectorResiduals]) -> (f64, f64, f64) {
    list.iter().fold((0.0, 0.0, 0.0), |acc, r| {
        (acc.0.max(r.sum), acc.1.max(r.idempotent()), acc.2.max(r.q_selfadjoint()))
    })
}

fn ratio_tail(table: &DecayTable, m: i32) -> f64 {
    let v = table.verdict(m);
    if v.constant == 0.0 {
        0.0
    } else {
        v.tail_max / v.constant
    }
}

fn restrict(table: &DecayTable, keep: impl Fn(f64) -> bool) -> DecayTable {
    DecayTable { rows: table.rows.iter().filter(|r| keep(r.kabs)).cloned().collect(), ..table.clone() }
}

impl Run<'_> {
    fn spec(&self, name: &str) -> &'static CheckSpec {
        catalog::find(name).unwrap_or_else(|| panic!("check {name} missing from the catalog"))
    }

    fn want(&self, name: &str) -> bool {
        let spec = self.spec(name);
        self.s.runs(spec.stage) && self.filter.is_none_or(|f| f.iter().any(|e| catalog::selects(e, name)))
    }

    fn want_any(&self, names: &[&str]) -> bool {
        names.iter().any(|n| self.want(n))
    }

    fn record(&mut self, name: &str, measured: f64) {
        if !self.want(name) {
            return;
        }
        let spec = self.spec(name);
        let tol = self.s.tolerance(spec);
        self.out.checks.push(CheckRecord::new(spec, measured, tol));
    }

    fn table(&mut self, name: &str, t: DecayTable) {
        self.out.tables.push((name.into(), t));
    }

    fn detail(&mut self, key: &str, v: Value) {
        self.out.details.insert(key.into(), v);
    }

    fn is_gravity(&self) -> bool {
        self.s.model == ModelKind::Gravity
    }

    fn metric(&self, order: usize, stage: Stage) -> Res<MetricFamily> {
        let g = &self.grid;
        match &self.s.metric {
            MetricSpec::StaticFlat => MetricFamily::static_flat(g, order),
            MetricSpec::DeSitter { hubble } => MetricFamily::de_sitter(g, *hubble, order),
            MetricSpec::ConformalPolynomial { coeffs } => {
                MetricFamily::conformally_flat(g, order, coeffs, "conformal-polynomial")
            }
        }
        .map_err(at(stage))
    }

    fn ensure_ops(&mut self, order: usize, stage: Stage) -> Res<usize> {
        if let Some(i) = self.ops.iter().position(|o| o.order == order) {
            return Ok(i);
        }
        let err = at(stage);
        let metric = self.metric(order, stage)?;
        let model = match self.s.model {
            ModelKind::Scalar => Model::Scalar { mass2: self.s.mass2 },
            ModelKind::Gravity => Model::Gravity { lambda: self.s.lambda },
        };
        let geo = ReducedGeometry::new(&metric, model).map_err(&err)?;
        let (slots, gravity) = match self.s.model {
            ModelKind::Scalar => {
                let a = series_of(&geo.a_hat(0), order, &self.grid).map_err(&err)?;
                (vec![Slot { a, tau: Bundle::Scalar.tau(self.s.dim) }], None)
            }
            ModelKind::Gravity => {
                let ops = reduced_ops_from(&geo, order).map_err(&err)?;
                let slots = vec![
                    Slot { a: ops.a1.clone(), tau: ops.tau1.clone() },
                    Slot { a: ops.a2.clone(), tau: ops.tau2.clone() },
                ];
                (slots, Some(ops))
            }
        };
        self.ops.push(Operators { order, metric, geo, slots, gravity });
        Ok(self.ops.len() - 1)
    }

    fn main_ops(&mut self, stage: Stage) -> Res<usize> {
        self.ensure_ops(self.s.factorization_order(), stage)
    }

    // ---------------------------------------------------------------- geometry

    fn geometry(&mut self) -> Res<()> {
        let names = [
            "geometry.dt-d0",
            "geometry.first-order",
            "geometry.zeroth-order",
            "geometry.pk",
            "geometry.d2k-kd1",
            "control.zeroth-order",
            "constraint.hamiltonian",
            "constraint.momentum",
            "constraint.lambda-mismatch",
        ];
        if !self.is_gravity() || !self.want_any(&names) {
            return Ok(());
        }
        let err = at(Stage::Geometry);
        let i = self.ensure_ops(self.s.taylor_order, Stage::Geometry)?;
        let control = self.s.role == Role::NegativeControl;
        let (rep, spacetime, h0, k0) = {
            let o = &self.ops[i];
            let g = o.gravity.as_ref().expect("gravity operators");
            let rep = gauge_residuals(&g.a1, &g.a2, &g.d0, &g.d1);
            let spacetime = match (&o.geo.gravity, control) {
                (Some(gops), false) => spacetime_gauge_residuals(gops, &self.grid, rep.order),
                _ => Vec::new(),
            };
            let coeffs = o.metric.coeffs();
            let h0 = coeffs[0].clone();
            let k0: Vec<_> = coeffs[1].iter().map(|m| m * c(0.5)).collect();
            (rep, spacetime, h0, k0)
        };
        let rel = |name: &str| rep.get(name).map(|r| r.max_relative).unwrap_or(f64::NAN);
        self.record("geometry.dt-d0", rel("dt_d0"));
        if control {
            self.record("control.zeroth-order", rel("zeroth_order"));
        } else {
            self.record("geometry.first-order", rel("first_order"));
            self.record("geometry.zeroth-order", rel("zeroth_order"));
        }
        for r in &spacetime {
            match r.name.as_str() {
                "PK" => self.record("geometry.pk", r.max_relative),
                "D2K-KD1" => self.record("geometry.d2k-kd1", r.max_relative),
                _ => {}
            }
        }
        let cr = constraint_check(&self.grid, &h0, &k0, self.s.lambda).map_err(&err)?;
        let mismatch = constraint_check(&self.grid, &h0, &k0, 0.0).map_err(&err)?;
        if !control {
            self.record("constraint.hamiltonian", cr.hamiltonian);
            self.record("constraint.momentum", cr.momentum);
            self.record("constraint.lambda-mismatch", (mismatch.hamiltonian - 2.0 * self.s.lambda.abs()).abs());
        }
        let o = &self.ops[i];
        let v = json!({
            "taylor_order": o.order,
            "leading_residual": o.geo.leading_residual,
            "first_order_residual": o.geo.first_order_residual,
            "reduced_identities": rep,
            "spacetime_identities": spacetime,
            "constraints": cr,
            "constraints_at_zero_lambda": mismatch,
        });
        self.detail("geometry", v);
        Ok(())
    }

    // ----------------------------------------------------------- factorization

    fn ensure_lorentzian(&mut self) -> Res<()> {
        if self.lorentzian.is_some() {
            return Ok(());
        }
        let err = at(Stage::Factorization);
        let i = self.main_ops(Stage::Factorization)?;
        let opts = FactorizeOptions::default();
        let mut out = Vec::new();
        for slot in &self.ops[i].slots {
            let fr = factorize(&slot.a, &slot.tau, &opts).map_err(&err)?;
            let hp = projectors_of(&fr).map_err(&err)?;
            out.push(Lorentzian { fr, hp });
        }
        let info: Vec<Value> = out
            .iter()
            .map(|l| {
                json!({
                    "regularizer_radius": l.fr.regularizer.radius,
                    "coercivity": l.fr.regularizer.coercivity,
                    "iterations": l.fr.fixed_point.iterations,
                    "converged": l.fr.fixed_point.converged,
                    "order_exhausted": l.fr.fixed_point.order_exhausted,
                    "last_update_tail": l.fr.fixed_point.last_update_tail,
                    "cond_b_diff": l.fr.cond_b_diff,
                })
            })
            .collect();
        self.detail("factorization", Value::Array(info));
        self.lorentzian = Some(out);
        Ok(())
    }

    fn factorization(&mut self) -> Res<()> {
        let err = at(Stage::Factorization);
        let static_metric = self.s.metric.is_static();
        let evo: Vec<&str> = self
            .s
            .profile_orders
            .iter()
            .map(|&m| catalog::EVOLUTION_ORDERS[(m - 1) as usize])
            .filter(|_| !static_metric)
            .collect();
        let mut names = vec!["hadamard.sum", "hadamard.idempotent", "hadamard.q-selfadjoint", "evolution.pseudo-unitarity"];
        names.extend(&evo);
        if !self.is_gravity() {
            names.push("green.charge");
        }
        if self.is_gravity() {
            names.push(if static_metric { "intertwining.hadamard" } else { "intertwining.hadamard-profile" });
        }
        if !self.want_any(&names) {
            return Ok(());
        }
        let intertwine_name = if static_metric { "intertwining.hadamard" } else { "intertwining.hadamard-profile" };
        let intertwine = self.is_gravity() && self.want(intertwine_name);
        if self.want_any(&names[..3]) || evo.iter().any(|n| self.want(n)) || intertwine {
            self.ensure_lorentzian()?;
        }
        if let Some(lor) = &self.lorentzian {
            let slots = &self.ops[self.main_ops_index()].slots;
            let res: Vec<ProjectorResiduals> =
                lor.iter().zip(slots).map(|(l, s)| l.hp.residuals(&lorentzian_charge(&self.grid, &s.tau))).collect();
            let tables: Vec<(String, DecayTable)> = lor
                .iter()
                .enumerate()
                .map(|(k, l)| (format!("factorization-residual-{}", slot_name(self.is_gravity(), k)), l.fr.residual_profile.clone()))
                .collect();
            let (sum, idem, qsa) = max_residuals(&res);
            self.record("hadamard.sum", sum);
            self.record("hadamard.idempotent", idem);
            self.record("hadamard.q-selfadjoint", qsa);
            self.out.tables.extend(tables);
        }

        let i = self.main_ops(Stage::Factorization)?;
        if self.want("evolution.pseudo-unitarity") {
            let mut worst: f64 = 0.0;
            for slot in &self.ops[i].slots {
                let u = cauchy_evolution(&slot.a, 0.0, EVOLUTION_T, self.s.time_steps).map_err(&err)?;
                worst = worst.max(pseudo_unitarity_defect(&u, &lorentzian_charge(&self.grid, &slot.tau)));
            }
            self.record("evolution.pseudo-unitarity", worst);
        }

        if evo.iter().any(|n| self.want(n)) {
            let lor = self.lorentzian.as_ref().expect("factorized");
            let last = lor.last().expect("one bundle at least");
            let prof = evolution_factorization_profile(&last.fr, FACTORIZATION_T, self.s.time_steps, &TABLE_ORDERS)
                .map_err(&err)?;
            for &m in &self.s.profile_orders {
                self.record(catalog::EVOLUTION_ORDERS[(m - 1) as usize], ratio_tail(&prof, m));
            }
            self.table("evolution-factorization", prof);
        }

        if !self.is_gravity() && self.want("green.charge") {
            let slot = &self.ops[i].slots[0];
            let f = slot.tau.len();
            let phi1 = TestSection { center: -0.1, width: 0.3, field: random_band_field(&self.grid, f, self.s.seed ^ 0x61, 2.0) };
            let phi2 = TestSection { center: 0.15, width: 0.35, field: random_band_field(&self.grid, f, self.s.seed ^ 0x62, 2.0) };
            let rep = green_charge_check(&slot.a, &slot.tau, &phi1, &phi2, GREEN_WINDOW, self.s.time_steps).map_err(&err)?;
            self.record("green.charge", rep.residual);
            self.detail("green_charge", json!(rep));
        }

        if intertwine {
            self.ensure_surface(Stage::Factorization)?;
            let lor = self.lorentzian.as_ref().expect("factorized");
            let k = &self.surface.as_ref().expect("surface operators").k_sigma;
            let (h1, h2) = (&lor[0].hp, &lor[1].hp);
            let radius = lor.iter().map(|l| l.fr.regularizer.radius).fold(0.0, f64::max);
            let rep = gauge_intertwine_residual((&h1.c_plus, &h1.c_minus), (&h2.c_plus, &h2.c_minus), k, &TABLE_ORDERS)
                .map_err(&err)?;
            let outside = |t: &DecayTable| restrict(t, |k| k * k >= radius);
            let (plus, minus) = (outside(&rep.plus), outside(&rep.minus));
            if static_metric {
                self.record("intertwining.hadamard", plus.max_raw().max(minus.max_raw()));
            } else {
                let worst = self
                    .s
                    .profile_orders
                    .iter()
                    .map(|&m| ratio_tail(&plus, m).max(ratio_tail(&minus, m)))
                    .fold(0.0, f64::max);
                self.record("intertwining.hadamard-profile", worst);
            }
            let v = json!({ "radius": radius, "modes_checked": plus.rows.len(), "max_raw_checked": plus.max_raw().max(minus.max_raw()), "max_raw_all_modes": rep.max_raw });
            self.detail("intertwining_hadamard", v);
            self.table("intertwining-hadamard-plus", rep.plus);
            self.table("intertwining-hadamard-minus", rep.minus);
        }
        Ok(())
    }

    fn main_ops_index(&self) -> usize {
        let order = self.s.factorization_order();
        self.ops.iter().position(|o| o.order == order).expect("main operators built")
    }

    // --------------------------------------------------------------- euclidean

    fn ensure_euclidean(&mut self) -> Res<()> {
        if self.euclidean.is_some() {
            return Ok(());
        }
        let err = at(Stage::Euclidean);
        let i = self.main_ops(Stage::Euclidean)?;
        let opts = EllipticOptions { t_half: self.s.t_half, n_s: self.s.s_nodes, auto_shrink: false };
        let mut out = Vec::new();
        for slot in &self.ops[i].slots {
            let p = EllipticProblem::new(&wick_rotate(&slot.a), &opts).map_err(&err)?;
            let ct = calderon_projectors(&p, &slot.tau).map_err(&err)?;
            out.push(Euclidean { p, ct });
        }
        self.euclidean = Some(out);
        Ok(())
    }

    /// `ω(k) = √ã(k)` when the scalar symbol is constant in time.
    fn scalar_omegas(&self) -> Option<Vec<f64>> {
        if self.is_gravity() || !self.s.metric.is_static() {
            return None;
        }
        let a0 = self.ops[self.main_ops_index()].slots[0].a.at0().clone();
        Some((0..self.grid.points()).map(|j| a0.mode_block(j)[(0, 0)].re.sqrt()).collect())
    }

    fn euclidean_stage(&mut self) -> Res<()> {
        let err = at(Stage::Euclidean);
        let scalar_static = !self.is_gravity() && self.s.metric.is_static();
        let mut names = vec!["calderon.sum", "calderon.idempotent", "calderon.q-selfadjoint", "green.identities"];
        let prof: Vec<&str> = self.s.profile_orders.iter().map(|&m| catalog::PROFILE_ORDERS[(m - 1) as usize]).collect();
        if scalar_static {
            names.extend(["dtn.closed-form", "dtn.smoothing", "calderon-vs-hadamard.per-mode"]);
            names.extend(&prof);
        }
        if !self.want_any(&names) {
            return Ok(());
        }
        self.ensure_euclidean()?;
        let t = self.s.t_half;
        let g = self.grid.clone();
        {
            let eu = self.euclidean.as_ref().expect("euclidean");
            let res: Vec<ProjectorResiduals> = eu.iter().map(|e| e.ct.residuals).collect();
            let tables: Vec<(String, DecayTable)> = eu
                .iter()
                .enumerate()
                .map(|(k, e)| (format!("calderon-idempotency-{}", slot_name(self.is_gravity(), k)), e.ct.idempotency_profile.clone()))
                .collect();
            let (sum, idem, qsa) = max_residuals(&res);
            self.record("calderon.sum", sum);
            self.record("calderon.idempotent", idem);
            self.record("calderon.q-selfadjoint", qsa);
            self.out.tables.extend(tables);
        }

        if scalar_static && self.want_any(&["dtn.closed-form", "dtn.smoothing"]) {
            let omega = self.scalar_omegas().expect("scalar symbol");
            let n = dtn_map(&self.euclidean.as_ref().expect("euclidean")[0].p, Side::Plus).map_err(&err)?;
            let modes: Vec<usize> = (0..g.points()).filter(|&j| g.is_band_limited(j) && g.kabs(j) <= DTN_KMAX).collect();
            let mut closed: f64 = 0.0;
            for &j in &modes {
                let w = omega[j];
                closed = closed.max((n.mode_block(j)[(0, 0)] - c(w / (w * t).tanh())).norm());
            }
            let mut ratio: f64 = 0.0;
            let mut unresolved = Vec::new();
            for &j in &modes {
                let w = omega[j];
                let bound = 3.0 * w * (-2.0 * w * t).exp();
                if bound < closed {
                    unresolved.push(j);
                    continue;
                }
                ratio = ratio.max((n.mode_block(j)[(0, 0)] - c(w)).norm() / bound);
            }
            self.record("dtn.closed-form", closed);
            self.record("dtn.smoothing", ratio);
            self.detail("dtn", json!({ "kmax": DTN_KMAX, "modes": modes.len(), "resolution": closed, "unresolved_modes": unresolved }));
        }

        if scalar_static && self.want_any(&[&["calderon-vs-hadamard.per-mode"][..], &prof].concat()) {
            self.ensure_lorentzian()?;
            let omega = self.scalar_omegas().expect("scalar symbol");
            let hp = &self.lorentzian.as_ref().expect("factorized")[0].hp;
            let ct = &self.euclidean.as_ref().expect("euclidean")[0].ct;
            let cmp = compare_projectors(hp, ct, &TABLE_ORDERS).map_err(&err)?;
            let mut ratio: f64 = 0.0;
            let mut unresolved = Vec::new();
            for &(j, _, dp, dm) in &cmp.per_mode {
                let bound = 5.0 * (-2.0 * omega[j] * t).exp();
                if bound < NOISE_FLOOR {
                    unresolved.push(j);
                    continue;
                }
                ratio = ratio.max(dp.max(dm) / bound);
            }
            let table = restrict(&cmp.profile, |k| k <= PROFILE_KMAX);
            self.record("calderon-vs-hadamard.per-mode", ratio);
            for &m in &self.s.profile_orders {
                self.record(catalog::PROFILE_ORDERS[(m - 1) as usize], table.constant(m));
            }
            self.detail(
                "calderon_vs_hadamard",
                json!({ "noise_floor": NOISE_FLOOR, "unresolved_modes": unresolved, "kmax": PROFILE_KMAX }),
            );
            self.table("calderon-vs-hadamard", table);
        }

        if self.want("green.identities") {
            let eu = self.euclidean.as_ref().expect("euclidean");
            let mut worst: f64 = 0.0;
            for (k, e) in eu.iter().enumerate() {
                let f = e.p.fiber();
                for (side, salt) in [(Side::Plus, 0x71), (Side::Minus, 0x72)] {
                    let seed = self.s.seed ^ (salt + 16 * k as u64);
                    let u = poisson(&e.p, side, &random_band_field(&g, f, seed, 1.0)).map_err(&err)?;
                    let v = poisson(&e.p, side, &random_band_field(&g, f, seed ^ 0x100, 1.0)).map_err(&err)?;
                    worst = worst.max(green_identities(&e.p, &u, &v).map_err(&err)?.residual);
                }
            }
            self.record("green.identities", worst);
        }
        Ok(())
    }

    // ------------------------------------------------------------ gauge states

    fn ensure_charges(&mut self, stage: Stage) -> Res<()> {
        if self.charges.is_none() {
            let err = at(stage);
            let ch1 = build_charges(&self.grid, Bundle::Covector).map_err(&err)?;
            let ch2 = build_charges(&self.grid, Bundle::Sym2).map_err(&err)?;
            self.charges = Some((ch1, ch2));
        }
        Ok(())
    }

    fn ensure_surface(&mut self, stage: Stage) -> Res<()> {
        if self.surface.is_some() {
            return Ok(());
        }
        self.ensure_charges(stage)?;
        let i = self.ensure_ops(self.s.taylor_order, stage)?;
        let ops = self.ops[i].gravity.as_ref().expect("gravity operators");
        let (ch1, ch2) = self.charges.as_ref().expect("charges");
        let gs = build_gauge_surface_ops(&ops.a1, &ops.a2, &ops.d0, &ops.d1, ch1, ch2, None).map_err(at(stage))?;
        self.detail("surface", json!(gs.residuals));
        self.surface = Some(gs);
        Ok(())
    }

    fn ensure_fixer(&mut self) -> Res<()> {
        if self.fixer.is_none() {
            self.ensure_surface(Stage::GaugeStates)?;
            self.ensure_euclidean().map_err(|e| StageError { stage: Stage::GaugeStates, ..e })?;
            let p1 = &self.euclidean.as_ref().expect("euclidean")[0].p;
            let fixer = GaugeFixer::new(p1, self.surface.as_ref().expect("surface")).map_err(at(Stage::GaugeStates))?;
            self.detail("gauge_fix_operator", json!({ "sigma_min": fixer.sigma_min }));
            self.fixer = Some(fixer);
        }
        Ok(())
    }

    fn gauge_states(&mut self) -> Res<()> {
        if !self.is_gravity() {
            return Ok(());
        }
        let err = at(Stage::GaugeStates);
        let d3 = self.s.dim == 3;
        let elliptic = self.s.runs(Stage::Euclidean);
        if self.want_any(&["surface.kdag-k", "surface.t-vs-t-tilde"]) {
            self.ensure_surface(Stage::GaugeStates)?;
            let r = self.surface.as_ref().expect("surface").residuals;
            if d3 {
                self.record("surface.kdag-k", r.kdag_k);
            }
            self.record("surface.t-vs-t-tilde", r.t_vs_t_tilde);
        }
        if !elliptic {
            self.detail("gauge_states_note", json!("gauge-fix, synchronous, positivity and state checks need the euclidean stage"));
            return Ok(());
        }
        let g = self.grid.clone();
        let f2 = Bundle::Sym2.fiber(self.s.dim);

        if self.want_any(&["gauge-fix.mixed", "gauge-fix.trace"]) {
            self.ensure_fixer()?;
            let p1 = &self.euclidean.as_ref().expect("euclidean")[0].p;
            let (gs, fixer) = (self.surface.as_ref().expect("surface"), self.fixer.as_ref().expect("fixer"));
            let (mut mixed, mut trace): (f64, f64) = (0.0, 0.0);
            for k in 0..GAUGE_FIX_SAMPLES {
                let u = random_band_field(&g, f2, self.s.seed ^ (0x81 + k), 0.0);
                let fix = gauge_fix_solve(p1, gs, fixer, &u).map_err(&err)?;
                mixed = mixed.max(fix.residual_mixed);
                trace = trace.max(fix.residual_trace);
            }
            self.record("gauge-fix.mixed", mixed);
            self.record("gauge-fix.trace", trace);
        }

        if !d3 {
            return Ok(());
        }
        if self.want_any(&["synchronous.j2", "synchronous.reconstruction"]) {
            self.ensure_fixer()?;
            let eu = self.euclidean.as_ref().expect("euclidean");
            let (gs, fixer) = (self.surface.as_ref().expect("surface"), self.fixer.as_ref().expect("fixer"));
            let j2 = self.charges.as_ref().expect("charges").1.j2_operator(&g).ok_or_else(|| StageError {
                stage: Stage::GaugeStates,
                message: "J₂ is not available for this bundle".into(),
            })?;
            let f = random_band_field(&g, 2 * f2, self.s.seed ^ 0x91, 0.0);
            let dec = synchronous_decompose(&f, &eu[0].ct.c_plus, &eu[1].ct.c_plus, gs, fixer, &eu[0].p, &j2).map_err(&err)?;
            let scale = f.norm().max(1.0);
            self.record("synchronous.j2", dec.residual_j2 / scale);
            self.record("synchronous.reconstruction", dec.residual_reconstruction / scale);
            self.detail("synchronous", json!({ "h_projector": dec.residual_h_projector / scale }));
        }

        let state: Vec<&str> = catalog::members("state").map(|c| c.name).collect();
        if !self.want_any(&["positivity.kernel-dim", "positivity.control"]) && !self.want_any(&state) {
            return Ok(());
        }
        self.ensure_fixer()?;
        let (pos, cutoff) = {
            let eu = self.euclidean.as_ref().expect("euclidean");
            let (gs, fixer) = (self.surface.as_ref().expect("surface"), self.fixer.as_ref().expect("fixer"));
            let ch2 = &self.charges.as_ref().expect("charges").1;
            let slice = kernel_slice(&gs.k_dagger, 1);
            let q_tilde = euclidean_charge(&g, f2);
            let pos = positivity_report(&eu[1].ct.c_plus, &ch2.q_phys.matrix, &q_tilde, gs, fixer, &slice, self.s.seed)
                .map_err(&err)?;
            (pos, slice.cutoff)
        };
        let bound_rows: Vec<(usize, Vec<i64>, f64, f64)> =
            pos.bound_by_mode.iter().map(|&(j, k, b)| (j, g.mode(j), k, b)).collect();
        let bound_table = DecayTable::from_norms(&TABLE_ORDERS, bound_rows);
        self.record("positivity.kernel-dim", pos.kernel_dim as f64);
        self.record("positivity.control", pos.control_min_form);
        let mut summary = json!(pos);
        if let Value::Object(m) = &mut summary {
            m.remove("bound_by_mode");
            m.insert("cutoff".into(), json!(cutoff));
        }
        self.detail("positivity", summary);
        self.table("positivity-bound", bound_table);

        if self.want_any(&state) {
            let eu = self.euclidean.as_ref().expect("euclidean");
            let gs = self.surface.as_ref().expect("surface");
            let int = gauge_intertwine_residual(
                (&eu[0].ct.c_plus, &eu[0].ct.c_minus),
                (&eu[1].ct.c_plus, &eu[1].ct.c_minus),
                &gs.k_sigma,
                &TABLE_ORDERS,
            )
            .map_err(&err)?;
            let frequency = if self.s.runs(Stage::Factorization) {
                self.ensure_lorentzian().map_err(|e| StageError { stage: Stage::GaugeStates, ..e })?;
                let lor = self.lorentzian.as_ref().expect("factorized");
                let eu = self.euclidean.as_ref().expect("euclidean");
                Some(compare_projectors(&lor[1].hp, &eu[1].ct, &TABLE_ORDERS).map_err(&err)?.profile)
            } else {
                None
            };
            let radius = self.lorentzian.as_ref().map(|l| l[1].fr.regularizer.radius).unwrap_or(0.0);
            let prov = Provenance {
                scenario: self.s.name.clone(),
                dim: self.s.dim,
                n_per_axis: self.s.n_per_axis,
                t_half: self.s.t_half,
                taylor_order: self.s.factorization_order(),
                radius,
            };
            let eu = self.euclidean.as_ref().expect("euclidean");
            let art = StateArtifacts {
                calderon: Some(&eu[1].ct.residuals),
                positivity: Some(&pos),
                intertwining: Some(&int),
                frequency: frequency.as_ref(),
            };
            let rep = state_conditions_report(prov, &art, &StateTolerances::default()).map_err(&err)?;
            for e in &rep.entries {
                self.record(&e.name, e.measured);
            }
            self.detail("state", json!({ "provenance": rep.provenance, "excluded_modes": rep.excluded_modes }));
            self.table("intertwining-euclidean-plus", int.plus);
            self.table("intertwining-euclidean-minus", int.minus);
            if let Some(f) = frequency {
                self.table("frequency-sign", f);
            }
        }
        Ok(())
    }
}

fn slot_name(gravity: bool, k: usize) -> &'static str {
    match (gravity, k) {
        (false, _) => "scalar",
        (true, 0) => "covector",
        (true, _) => "sym2",
    }
}
