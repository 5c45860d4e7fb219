//! Experiment specs (TOML) and the pipelines behind each command.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::energy::{renormalized_energy, splitting_check, QuadratureOptions, Region, TruncationParam};
use crate::error::{Error, Result};
use crate::fieldgrid::BackgroundField;
use crate::geometry::{Frame, Grid, Point};
use crate::io::{self, PointFormat};
use crate::potential::{blowup_density, equilibrium_measure, EquilibriumMeasure, Potential, RadialPower};
use crate::sampler::{diagnose_chain, ginibre_radial_oracle, kostlan_radial_cdf, sample_replicas, MoveKind, SamplerConfig, RNG_NAME};
use crate::screening::{
    build_transition, jitter_family, tile_annulus, OuterFlux, ScreeningProblem, SmoothBackground, ENERGY_BOUND_CONSTANT,
};
use crate::stats::{
    blow_up, choose_deltas, discrepancy, empirical_field_stats, ks_distance, local_law_statistic, median,
    points_in_square_check, BumpKind, FieldStatsOptions, TestFunction, Window,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Sample,
    Energy,
    Locallaw,
    ScreenDemo,
    Deltas,
    Oracle,
}

impl std::str::FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(Command::Sample),
            "energy" => Ok(Command::Energy),
            "locallaw" => Ok(Command::Locallaw),
            "screen_demo" | "screen-demo" => Ok(Command::ScreenDemo),
            "deltas" => Ok(Command::Deltas),
            "oracle" => Ok(Command::Oracle),
            other => Err(Error::Validation(format!("unknown command '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSpec {
    /// `radial_power` (`coef·|x|^exponent`) or `quadratic`.
    pub name: String,
    pub coef: f64,
    pub exponent: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec { name: "quadratic".into(), coef: 1.0, exponent: 2.0 }
    }
}

impl PotentialSpec {
    pub fn build(&self) -> Result<RadialPower> {
        match self.name.as_str() {
            "quadratic" => Ok(RadialPower::quadratic()),
            "radial_power" => RadialPower::new(self.coef, self.exponent),
            other => Err(Error::Validation(format!("unknown potential '{other}' (expected quadratic or radial_power)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumSpec {
    /// Cell size of the equilibrium-measure grid (macroscopic units).
    pub spacing: f64,
}

impl Default for EquilibriumSpec {
    fn default() -> Self {
        EquilibriumSpec { spacing: 0.025 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSpec {
    pub n: usize,
    pub beta: f64,
    pub n_sweeps: usize,
    pub burn_in_sweeps: usize,
    pub thin: usize,
    pub proposal_sigma: Option<f64>,
    pub move_kind: MoveKind,
    pub replicas: usize,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        SamplerSpec {
            n: 64,
            beta: 2.0,
            n_sweeps: 300,
            burn_in_sweeps: 100,
            thin: 10,
            proposal_sigma: None,
            move_kind: MoveKind::Metropolis,
            replicas: 1,
        }
    }
}

impl SamplerSpec {
    pub fn config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            n: self.n,
            beta: self.beta,
            proposal_sigma: self.proposal_sigma,
            n_sweeps: self.n_sweeps,
            burn_in_sweeps: self.burn_in_sweeps,
            thin: self.thin,
            seed,
            move_kind: self.move_kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsSpec {
    pub delta: f64,
    /// Window exponent; derived from the δ-schedule when absent.
    pub delta1: Option<f64>,
    pub kappa: f64,
    pub delta1_position: f64,
    /// Window centres in macroscopic coordinates.
    pub centers: Vec<[f64; 2]>,
    pub test_function: BumpKind,
    pub field_stats: bool,
}

impl Default for StatsSpec {
    fn default() -> Self {
        StatsSpec {
            delta: 0.4,
            delta1: None,
            kappa: 1.0,
            delta1_position: 0.5,
            centers: vec![[0.0, 0.0]],
            test_function: BumpKind::RadialCosine,
            field_stats: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySpec {
    /// Macroscopic point file (CSV or binary).
    pub input: Option<PathBuf>,
    /// Truncation parameters for the field route; empty skips it.
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScreenSpec {
    pub l: f64,
    /// Outer side R₂.
    pub r2: f64,
    /// R₂ − R₁, in `[2l, 3l]`.
    pub width: f64,
    pub density: f64,
    pub flux_amplitude: f64,
    pub flux_segments_per_side: usize,
    pub eta1: f64,
    pub jitter: f64,
}

impl Default for ScreenSpec {
    fn default() -> Self {
        ScreenSpec {
            l: 4.0,
            r2: 24.0,
            width: 10.0,
            density: 1.0,
            flux_amplitude: 0.02,
            flux_segments_per_side: 48,
            eta1: 1e-8,
            jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    pub n: usize,
    pub n_samples: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec { n: 64, n_samples: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSpec {
    pub out: PathBuf,
    pub format: PointFormat,
}

impl Default for IoSpec {
    fn default() -> Self {
        IoSpec { out: PathBuf::from("out"), format: PointFormat::Csv }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub equilibrium: EquilibriumSpec,
    #[serde(default)]
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub stats: StatsSpec,
    #[serde(default)]
    pub energy: EnergySpec,
    #[serde(default)]
    pub screen: ScreenSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub io: IoSpec,
}

impl ExperimentSpec {
    pub fn new(command: Command) -> Self {
        ExperimentSpec {
            command,
            seed: 0,
            potential: PotentialSpec::default(),
            equilibrium: EquilibriumSpec::default(),
            sampler: SamplerSpec::default(),
            stats: StatsSpec::default(),
            energy: EnergySpec::default(),
            screen: ScreenSpec::default(),
            oracle: OracleSpec::default(),
            io: IoSpec::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serialises")
    }

    /// Range checks for the sections the command uses.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        let needs_measure = matches!(self.command, Command::Sample | Command::Energy | Command::Locallaw);
        if needs_measure {
            self.potential.build()?;
            let h = self.equilibrium.spacing;
            if !(h > 0.0 && h <= 0.2) {
                return bad(format!("equilibrium.spacing must lie in (0, 0.2], got {h}"));
            }
        }
        if matches!(self.command, Command::Sample | Command::Locallaw) {
            self.sampler.config(self.seed).validate()?;
            if self.sampler.replicas == 0 {
                return bad("sampler.replicas must be ≥ 1".into());
            }
        }
        match self.command {
            Command::Energy => {
                if self.energy.input.is_none() {
                    return bad("energy.input (a point file) is required".into());
                }
                if let Some(e) = self.energy.eta.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
                    return bad(format!("energy.eta values must lie in (0, 1), got {e}"));
                }
            }
            Command::Locallaw | Command::Deltas => {
                self.schedule()?;
                if self.stats.centers.is_empty() && self.command == Command::Locallaw {
                    return bad("stats.centers must list at least one window centre".into());
                }
                if let Some(d1) = self.stats.delta1 {
                    if !(d1 > 0.0 && d1 < 0.5) {
                        return bad(format!("stats.delta1 must lie in (0, 1/2), got {d1}"));
                    }
                }
            }
            Command::ScreenDemo => {
                let s = &self.screen;
                if !(s.l > 0.0 && s.r2 > s.width && s.density > 0.0 && s.flux_segments_per_side > 0) {
                    return bad("screen: need l > 0, r2 > width, density > 0 and flux segments ≥ 1".into());
                }
                if !(s.width >= 2.0 * s.l && s.width <= 3.0 * s.l) {
                    return bad(format!("screen.width must lie in [2l, 3l] = [{}, {}], got {}", 2.0 * s.l, 3.0 * s.l, s.width));
                }
                if !(s.jitter >= 0.0 && s.jitter <= 0.1) {
                    return bad(format!("screen.jitter must lie in [0, 0.1], got {}", s.jitter));
                }
                TruncationParam::new(s.eta1)?;
            }
            Command::Oracle => {
                if self.oracle.n == 0 || self.oracle.n_samples == 0 {
                    return bad("oracle.n and oracle.n_samples must be ≥ 1".into());
                }
            }
            Command::Sample => {}
        }
        Ok(())
    }

    fn schedule(&self) -> Result<crate::stats::DeltaSchedule> {
        let s = &self.stats;
        if !(s.delta1_position > 0.0 && s.delta1_position < 1.0) {
            return Err(Error::Validation(format!("stats.delta1_position must lie in (0, 1), got {}", s.delta1_position)));
        }
        choose_deltas(s.delta, s.kappa, s.delta1_position)
    }
}

/// What a successful run left on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    /// Data files, relative to `out_dir`, in write order.
    pub files: Vec<String>,
    pub summary: String,
}

/// Files written by a run; removed again if the run fails.
struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
    created_dirs: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        let mut created_dirs = Vec::new();
        if !dir.exists() {
            fs::create_dir_all(dir)?;
            created_dirs.push(dir.to_path_buf());
        }
        Ok(Artifacts { dir: dir.to_path_buf(), files: Vec::new(), created_dirs })
    }

    fn subdir(&mut self, name: &str) -> Result<()> {
        let d = self.dir.join(name);
        if !d.exists() {
            fs::create_dir_all(&d)?;
            self.created_dirs.push(d);
        }
        Ok(())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        io::write_atomic(&self.dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn discard(self) {
        for f in &self.files {
            let _ = fs::remove_file(self.dir.join(f));
        }
        for d in self.created_dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

/// Execute the spec: data files, `summary.txt` and `metadata.json` in `spec.io.out`.
pub fn run(spec: &ExperimentSpec) -> Result<RunOutcome> {
    spec.validate()?;
    let start = Instant::now();
    let mut art = Artifacts::new(&spec.io.out)?;
    match execute(spec, &mut art) {
        Ok(summary) => {
            let files = art.files.clone();
            let meta = json!({
                "command": spec.command,
                "spec": spec,
                "code_version": env!("CARGO_PKG_VERSION"),
                "rng": RNG_NAME,
                "threads": rayon::current_num_threads(),
                "wall_time_seconds": start.elapsed().as_secs_f64(),
                "files": files,
            });
            let res = art.write("summary.txt", summary.as_bytes()).and_then(|_| art.json("metadata.json", &meta));
            if let Err(e) = res {
                art.discard();
                return Err(e);
            }
            Ok(RunOutcome { out_dir: art.dir.clone(), files, summary })
        }
        Err(e) => {
            art.discard();
            Err(e)
        }
    }
}

fn execute(spec: &ExperimentSpec, art: &mut Artifacts) -> Result<String> {
    match spec.command {
        Command::Deltas => run_deltas(spec, art),
        Command::Oracle => run_oracle(spec, art),
        Command::Sample => run_sample(spec, art),
        Command::Energy => run_energy(spec, art),
        Command::Locallaw => run_locallaw(spec, art),
        Command::ScreenDemo => run_screen(spec, art),
    }
}

fn measure(spec: &ExperimentSpec) -> Result<(RadialPower, EquilibriumMeasure)> {
    let v = spec.potential.build()?;
    let grid = Grid::covering(v.bounding_box(), spec.equilibrium.spacing)?;
    let eq = equilibrium_measure(&v, grid)?;
    Ok((v, eq))
}

fn run_deltas(spec: &ExperimentSpec, art: &mut Artifacts) -> Result<String> {
    let d = spec.schedule()?;
    art.json("deltas.json", &d)?;
    Ok(format!(
        "delta schedule (kappa = {})\n  delta  = {:.6}\n  delta1 = {:.6}\n  delta2 = {:.6}\n  delta3 = {:.6}\n  gamma  = {:.6}\n  alpha  = {:.6}\n  delta1 lower bound = {:.6}\n",
        d.kappa, d.delta, d.delta1, d.delta2, d.delta3, d.gamma, d.alpha, d.lower_bound
    ))
}

fn run_oracle(spec: &ExperimentSpec, art: &mut Artifacts) -> Result<String> {
    let o = &spec.oracle;
    let radii = ginibre_radial_oracle(o.n, o.n_samples, spec.seed);
    let mut csv = String::from("sample,k,radius\n");
    for (s, rs) in radii.iter().enumerate() {
        for (k, r) in rs.iter().enumerate() {
            csv.push_str(&format!("{s},{},{r}\n", k + 1));
        }
    }
    art.write("oracle_radii.csv", csv.as_bytes())?;
    let pooled: Vec<f64> = radii.iter().flatten().copied().collect();
    let ks = ks_distance(&pooled, |r| kostlan_radial_cdf(o.n, r));
    let half = pooled.iter().filter(|r| **r <= 0.5).count() as f64 / o.n_samples as f64;
    art.json("oracle_summary.json", &json!({ "n": o.n, "n_samples": o.n_samples, "ks_vs_cdf": ks, "mean_count_r_half": half }))?;
    Ok(format!(
        "Kostlan radial oracle: n = {}, {} samples\n  KS distance to the exact radial CDF: {ks:.4}\n  mean count inside r = 0.5: {half:.3} (circular law: {:.3})\n",
        o.n,
        o.n_samples,
        o.n as f64 * 0.25
    ))
}

fn run_sample(spec: &ExperimentSpec, art: &mut Artifacts) -> Result<String> {
    let (v, eq) = measure(spec)?;
    let cfg = spec.sampler.config(spec.seed);
    let chains = sample_replicas(&cfg, &v, &eq, spec.sampler.replicas)?;
    art.subdir("samples")?;
    let fmt = spec.io.format;
    let mut summary = format!("Gibbs sampling: n = {}, beta = {}, {} replica(s)\n", cfg.n, cfg.beta, chains.len());
    for (r, chain) in chains.iter().enumerate() {
        for (k, s) in chain.samples.iter().enumerate() {
            art.write(&format!("samples/replica{r:03}_sample{k:05}.{}", fmt.extension()), &io::encode_points(s, fmt))?;
        }
        let diag = diagnose_chain(chain).ok();
        art.json(
            &format!("chain{r:03}.json"),
            &json!({
                "config": cfg,
                "replica_stream": r,
                "samples": chain.samples.len(),
                "accepted": chain.accepted,
                "proposed": chain.proposed,
                "acceptance_rate": chain.acceptance_rate,
                "diagnostics": diag,
                "energy_trace": chain.energy_trace,
            }),
        )?;
        summary.push_str(&format!(
            "  replica {r}: {} samples, acceptance {:.3}, autocorrelation time {}\n",
            chain.samples.len(),
            chain.acceptance_rate,
            diag.map(|d| format!("{:.2}", d.autocorrelation_time)).unwrap_or_else(|| "n/a (fewer than 10 samples)".into())
        ));
    }
    Ok(summary)
}

/// Relative splitting-residual tolerance reported by the energy command.
pub const SPLITTING_TOLERANCE: f64 = 1e-4;

fn run_energy(spec: &ExperimentSpec, art: &mut Artifacts) -> Result<String> {
    let path = spec.energy.input.as_ref().expect("validated");
    let config = io::ingest_points(path, Frame::Macroscopic)?;
    if config.is_empty() {
        return Err(Error::Validation(format!("{} holds no points", path.display())));
    }
    let (v, eq) = measure(spec)?;
    let mut report = splitting_check(&config, &v, &eq)?;
    report.metadata.eta = spec.energy.eta.clone();
    let rel = report.relative_residual();
    let mut field = BTreeMap::new();
    if !spec.energy.eta.is_empty() {
        let n = config.n();
        let mu_prime = blowup_density(&eq, n)?;
        let bg = BackgroundField::new(&mu_prime);
        let blown = blow_up(&config, n)?;
        for &e in &spec.energy.eta {
            let value = renormalized_energy(&blown, &bg, Region::Plane, TruncationParam::new(e)?, QuadratureOptions::default())?;
            field.insert(format!("{e:e}"), value / (2.0 * PI));
        }
    }
    art.json(
        "energy_report.json",
        &json!({
            "report": report,
            "relative_residual": rel,
            "tolerance": SPLITTING_TOLERANCE,
            "within_tolerance": rel <= SPLITTING_TOLERANCE,
            "field_route_w_n": field,
        }),
    )?;
    let mut s = format!(
        "splitting identity for {} points ({})\n  H_N = {:.10}\n  w_N = {:.10}\n  zeta sum = {:.6e}\n  I(mu) = {:.10}\n  residual = {:.3e} (relative {:.3e}, tolerance {:.0e})\n",
        config.n(),
        v.name(),
        report.hamiltonian,
        report.w_n,
        report.zeta_sum,
        report.i_mu,
        report.splitting_residual,
        rel,
        SPLITTING_TOLERANCE
    );
    for (e, w) in &field {
        s.push_str(&format!("  field route at eta = {e}: {w:.6}\n"));
    }
    Ok(s)
}

fn run_locallaw(spec: &ExperimentSpec, art: &mut Artifacts) -> Result<String> {
    let st = &spec.stats;
    let delta1 = match st.delta1 {
        Some(d) => d,
        None => spec.schedule()?.delta1,
    };
    let (v, eq) = measure(spec)?;
    let cfg = spec.sampler.config(spec.seed);
    let n = cfg.n;
    let chains = sample_replicas(&cfg, &v, &eq, spec.sampler.replicas)?;
    let mu_prime = blowup_density(&eq, n)?;
    let s = (n as f64).sqrt();
    let side = (n as f64).powf(delta1);
    let mut csv = String::from(
        "replica,sample,center_x,center_y,n,delta,delta1,window_side,count,prediction,gap_ratio,discrepancy,local_law_statistic\n",
    );
    let (mut discs, mut stats, mut gaps) = (Vec::new(), Vec::new(), Vec::new());
    let mut field_rows = Vec::new();
    for (r, chain) in chains.iter().enumerate() {
        for (k, sample) in chain.samples.iter().enumerate() {
            let blown = blow_up(sample, n)?;
            for c in &st.centers {
                let z = Point::new(c[0], c[1]) * s;
                let w = Window::of_side(z, side)?;
                let d = discrepancy(&blown, &mu_prime, &w)?;
                let (count, pred, gap) = points_in_square_check(&blown, &mu_prime, z, delta1, n)?;
                let f = TestFunction::new(st.test_function, z, 0.5 * (n as f64).powf(st.delta))?;
                let ll = local_law_statistic(&blown, &mu_prime, z, st.delta, n, &f)?;
                csv.push_str(&format!(
                    "{r},{k},{},{},{n},{},{delta1},{side},{count},{pred},{gap},{d},{}\n",
                    c[0], c[1], st.delta, ll.statistic
                ));
                discs.push(d.abs());
                stats.push(ll.statistic);
                gaps.push(gap);
                if st.field_stats {
                    field_rows.push(json!({
                        "replica": r,
                        "sample": k,
                        "center": c,
                        "stats": empirical_field_stats(&blown, z, delta1, n, &FieldStatsOptions::default())?,
                    }));
                }
            }
        }
    }
    if discs.is_empty() {
        return Err(Error::Validation("the chain produced no samples".into()));
    }
    art.write("locallaw.csv", csv.as_bytes())?;
    if st.field_stats {
        art.json("field_stats.json", &field_rows)?;
    }
    let summary = json!({
        "n": n,
        "delta": st.delta,
        "delta1": delta1,
        "window_side": side,
        "rows": discs.len(),
        "median_abs_discrepancy": median(&discs),
        "median_local_law_statistic": median(&stats),
        "median_gap_ratio": median(&gaps),
    });
    art.json("locallaw_summary.json", &summary)?;
    Ok(format!(
        "local law at n = {n}, delta = {}, delta1 = {delta1:.4} (window side {side:.3})\n  {} window(s)\n  median |D_R| = {:.4}\n  median statistic = {:.4e}\n  median gap ratio = {:.4}\n",
        st.delta,
        discs.len(),
        median(&discs),
        median(&stats),
        median(&gaps)
    ))
}

fn run_screen(spec: &ExperimentSpec, art: &mut Artifacts) -> Result<String> {
    let sc = &spec.screen;
    let c = Point::ORIGIN;
    let (a, r2) = (sc.flux_amplitude, sc.r2);
    let flux = OuterFlux::from_fn(c, r2, sc.flux_segments_per_side, |p, n| {
        let t = if n.x == 0.0 { p.x - c.x } else { p.y - c.y };
        a * (2.0 * PI * t / r2).sin()
    })?;
    let m = sc.density;
    let bg = SmoothBackground { f: move |_: Point| m };
    let problem = ScreeningProblem::new(c, r2 - sc.width, r2, sc.l, &bg, flux, TruncationParam::new(sc.eta1)?)?;
    let tiles = tile_annulus(&problem)?;
    let mut result = build_transition(&problem, tiles)?;
    if sc.jitter > 0.0 {
        result = jitter_family(&result, sc.jitter, spec.seed)?;
    }
    let report = result.flux_report();
    let bound = ENERGY_BOUND_CONSTANT * problem.energy_scale();
    art.json("tiles.json", &result.tiles)?;
    art.write(&format!("points.{}", spec.io.format.extension()), &io::encode_points(&result.points, spec.io.format))?;
    art.write("field.bin", &io::grid_field_to_bin(&result.field))?;
    art.json(
        "screening.json",
        &json!({
            "n_tran": result.n_tran,
            "expected_points": result.expected_points,
            "energy": result.energy,
            "energy_parts": result.energy_parts,
            "energy_bound": bound,
            "energy_bound_constant": ENERGY_BOUND_CONSTANT,
            "flux_energy": problem.flux_energy,
            "min_gap": result.min_gap,
            "min_boundary_distance": result.min_boundary_distance,
            "jitter_radius": result.jitter_radius,
            "log_volume": if result.log_volume.is_finite() { json!(result.log_volume) } else { json!(null) },
            "flux_report": report,
        }),
    )?;
    Ok(format!(
        "screening annulus R1 = {}, R2 = {}, l = {}\n  {} tiles, {} transition points (predicted {:.4})\n  energy {:.4} (bound {:.4})\n  flux errors: prescribed {:.2e}, inner {:.2e}, interior {:.2e}\n  min gap {:.4}, min boundary distance {:.4}\n",
        r2 - sc.width,
        r2,
        sc.l,
        result.tiles.len(),
        result.n_tran,
        result.expected_points,
        result.energy,
        bound,
        report.prescribed_max_error,
        report.inner_max,
        report.internal_max_error,
        result.min_gap,
        result.min_boundary_distance
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn in_tmp(mut spec: ExperimentSpec) -> (tempfile::TempDir, ExperimentSpec) {
        let dir = tempfile::tempdir().unwrap();
        spec.io.out = dir.path().join("out");
        (dir, spec)
    }

    #[test]
    fn toml_defaults_and_unknown_keys() {
        let s = ExperimentSpec::from_toml("command = \"deltas\"\n[stats]\ndelta = 0.5\n").unwrap();
        assert_eq!(s.command, Command::Deltas);
        assert_eq!(s.stats.kappa, 1.0);
        assert!(ExperimentSpec::from_toml("command = \"deltas\"\nbogus = 1\n").is_err());
        let back = ExperimentSpec::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn deltas_command_writes_schedule() {
        let mut spec = ExperimentSpec::new(Command::Deltas);
        spec.stats.delta = 0.5;
        let (_d, spec) = in_tmp(spec);
        let out = run(&spec).unwrap();
        assert!(out.summary.contains("0.478"));
        let j: serde_json::Value = serde_json::from_slice(&fs::read(out.out_dir.join("deltas.json")).unwrap()).unwrap();
        assert!((j["delta1"].as_f64().unwrap() - 0.47856).abs() < 1e-5);
        assert!(out.out_dir.join("metadata.json").exists());
    }

    #[test]
    fn validation_failures_leave_nothing() {
        let mut spec = ExperimentSpec::new(Command::Sample);
        spec.sampler.n_sweeps = 10;
        spec.sampler.burn_in_sweeps = 20;
        let (_d, spec) = in_tmp(spec);
        let e = run(&spec).unwrap_err();
        assert!(e.is_validation(), "{e}");
        assert!(!spec.io.out.exists());
        let mut s = ExperimentSpec::new(Command::ScreenDemo);
        s.screen.width = 20.0;
        assert!(s.validate().unwrap_err().is_validation());
        assert!(ExperimentSpec::new(Command::Energy).validate().is_err());
    }
}
