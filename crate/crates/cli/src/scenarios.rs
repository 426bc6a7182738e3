//! The named scenarios. Each one computes its curves, scalars and
//! acceptance checks; writing files is left to the runner.

use std::collections::BTreeMap;
use std::time::Instant;

use nlcbs_core::crossed::{
    crossed_spectrum, detection_energies, gp_sweep, CrossedConfig, CrossedSpectrum,
};
use nlcbs_core::kernels::{
    check_energy_conservation, check_particle_conservation, check_reversibility, ladder_f, ladder_g,
};
use nlcbs_core::ladder::{
    maxwell_boltzmann, solve_ladder, thermal_fixed_point_residual, LadderConfig, LadderSolution,
};
use nlcbs_core::quadrature::{integrate_with_breaks, Tolerance};
use nlcbs_core::{EnergyGrid, InteractionParams, Parallelism, SpatialGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::config::{RunConfig, Scenario};
use crate::output::{finite, CheckRecord, Curve, OutputError};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Solver(#[from] nlcbs_core::Error),
    #[error(transparent)]
    Output(#[from] OutputError),
}

type Result<T> = std::result::Result<T, ScenarioError>;

#[derive(Debug, Default)]
pub struct Outcome {
    pub curves: Vec<Curve>,
    pub scalars: BTreeMap<String, Value>,
    pub convergence: BTreeMap<String, Value>,
    pub checks: Vec<CheckRecord>,
    pub timings: BTreeMap<String, f64>,
}

impl Outcome {
    fn scalar(&mut self, name: &str, v: f64) -> Result<()> {
        self.scalars.insert(name.into(), finite(name, v)?);
        Ok(())
    }

    fn converge(&mut self, name: &str, v: impl Into<Value>) {
        self.convergence.insert(name.into(), v.into());
    }

    fn check(&mut self, name: &str, value: f64, requirement: &str, pass: bool) {
        self.checks.push(CheckRecord {
            name: name.into(),
            value: format!("{value:.6e}"),
            requirement: requirement.into(),
            pass,
        });
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        *self.timings.entry(stage.into()).or_default() += t.elapsed().as_secs_f64();
        out
    }

    fn ladder_convergence(&mut self, prefix: &str, sol: &LadderSolution) {
        self.converge(&format!("{prefix}iterations"), sol.iterations);
        self.converge(&format!("{prefix}residual"), sol.residual);
        self.converge(&format!("{prefix}converged"), sol.converged);
    }
}

pub fn parallelism(cfg: &RunConfig) -> Parallelism {
    if cfg.threads == Some(1) {
        Parallelism::Sequential
    } else {
        Parallelism::Parallel
    }
}

fn ladder_config(cfg: &RunConfig, alpha: f64, beta: f64) -> Result<LadderConfig> {
    let b = cfg.thickness();
    let params = InteractionParams::new(alpha, beta, cfg.k_ell)?;
    let mut lc = LadderConfig::new(params, b)?;
    lc.space = match cfg.nz {
        Some(nz) => SpatialGrid::new(b, nz)?,
        None => SpatialGrid::with_resolution(b, cfg.cells_per_mfp)?,
    };
    lc.energy = EnergyGrid::uniform(cfg.e_max, cfg.ne)?;
    lc.damping = cfg.damping;
    lc.tol = cfg.tol;
    lc.max_iters = cfg.max_iters;
    lc.anderson_depth = cfg.anderson_depth;
    lc.parallelism = parallelism(cfg);
    lc.validate()?;
    Ok(lc)
}

fn crossed_template(cfg: &RunConfig) -> CrossedConfig {
    let mut t = CrossedConfig::new(1.0, cfg.k_ell);
    t.spacing = EnergyGrid::crossed_spacing(cfg.crossed_spacing.unwrap_or(0.25 / cfg.k_ell));
    t.parallelism = parallelism(cfg);
    t
}

fn detection(cfg: &RunConfig, template: &CrossedConfig) -> Result<Vec<f64>> {
    Ok(detection_energies(template.spacing, 0.5, cfg.e_d_max)?)
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    match cfg.scenario {
        Scenario::Fig9a => fig9a(cfg, &mut out)?,
        Scenario::Fig9b => fig9b(cfg, &mut out)?,
        Scenario::Fig10a => fig10a(cfg, &mut out)?,
        Scenario::Fig10b => fig10b(cfg, &mut out)?,
        Scenario::Conservation => conservation(cfg, &mut out)?,
        Scenario::LinearCbs => linear_cbs(cfg, &mut out)?,
    }
    Ok(out)
}

fn fig9a(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    let lc = ladder_config(cfg, cfg.alpha, cfg.beta)?;
    let sol = out.timed("ladder", || solve_ladder(&lc))?;
    out.ladder_convergence("ladder_", &sol);
    let prof = sol.flux_profiles();

    let mut curve = Curve::new(
        "fig9a_flux",
        &[
            "z [l_dis]",
            "J_total [J_in]",
            "J_elastic [J_in]",
            "J_inelastic [J_in]",
            "J_linear [J_in]",
        ],
    );
    let half = 0.5 * sol.space.thickness();
    let (mut dj, mut dk, mut inel) = (0.0f64, 0.0f64, f64::INFINITY);
    for z in 0..prof.z.len() {
        curve.push(vec![
            prof.z[z],
            prof.total[z],
            prof.elastic[z],
            prof.inelastic[z],
            sol.linear[z],
        ]);
        dj = dj.max((prof.total[z] - sol.linear[z]).abs() / sol.linear[z]);
        dk = dk.max((prof.energy[z] - prof.total[z]).abs() / prof.total[z]);
        if prof.z[z] >= half {
            inel = inel.min(prof.inelastic[z] / prof.total[z]);
        }
    }
    out.curves.push(curve);

    let bal = sol.flux_balance()?;
    out.scalar("flux_linear_deviation_max", dj)?;
    out.scalar("energy_flux_deviation_max", dk)?;
    out.scalar("inelastic_fraction_min_back_half", inel)?;
    out.scalar("reflected_flux", bal.reflected)?;
    out.scalar("transmitted_flux", bal.transmitted)?;
    out.scalar("flux_balance_total", bal.total())?;
    out.check("sup |J - J_linear| / J_linear", dj, "<= 1e-3", dj <= 1e-3);
    out.check("sup |K - E_i J| / (E_i J)", dk, "<= 1e-3", dk <= 1e-3);
    out.check("min J_inel / J for z >= L/2", inel, "> 0.5", inel > 0.5);
    Ok(())
}

fn fig9b(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    let lc = ladder_config(cfg, cfg.alpha, cfg.beta)?;
    let sol = out.timed("ladder", || solve_ladder(&lc))?;
    out.ladder_convergence("ladder_", &sol);

    let l = sol.space.thickness();
    let depths = [0.25, 0.5, 0.75, 1.0];
    let labels = ["L/4", "L/2", "3L/4", "L"];
    let spectra = depths
        .iter()
        .map(|f| sol.spectral_distribution(f * l))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut header: Vec<String> = vec!["E [E_i]".into()];
    header.extend(labels.iter().map(|s| format!("p(z={s}) [1/E_i]")));
    header.push("maxwell_boltzmann [1/E_i]".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut curve = Curve::new("fig9b_spectra", &header);
    for (k, &e) in sol.energy.nodes().iter().enumerate() {
        let mut row = vec![e];
        row.extend(spectra.iter().map(|p| p[k]));
        row.push(maxwell_boltzmann(e));
        curve.push(row);
    }
    out.curves.push(curve);

    let names = ["quarter", "half", "three_quarter", "back"];
    let mut dist = Vec::new();
    for (f, name) in depths.iter().zip(names) {
        let d = sol.thermal_distance(f * l)?;
        out.scalar(&format!("thermal_l1_{name}"), d)?;
        dist.push(d);
    }
    let fixed = out
        .timed("thermal fixed point", || {
            thermal_fixed_point_residual(&[0.2, 0.5, 1.0, 1.5, 2.5], Tolerance::absolute(1e-11))
        })?
        .into_iter()
        .fold(0.0, f64::max);
    out.scalar("thermal_fixed_point_residual", fixed)?;
    out.check(
        "L1 distance to thermal at z = L/4",
        dist[0],
        "<= 0.05",
        dist[0] <= 0.05,
    );
    out.check(
        "L1 distance to thermal at z = L",
        dist[3],
        "<= 0.05",
        dist[3] <= 0.05,
    );
    out.check(
        "thermal fixed-point residual",
        fixed,
        "<= 1e-4",
        fixed <= 1e-4,
    );
    Ok(())
}

fn fig10a(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    let betas = cfg.betas();
    let base = ladder_config(cfg, 0.0, 0.0)?;
    let template = crossed_template(cfg);
    let e_d = detection(cfg, &template)?;
    let gp = out.timed("sweep alpha = 0", || {
        gp_sweep(&betas, 0.0, &base, &e_d, &template)
    })?;
    let inel = out.timed("sweep alpha = beta/10", || {
        gp_sweep(&betas, 0.1, &base, &e_d, &template)
    })?;

    let mut curve = Curve::new(
        "fig10a_sweep",
        &[
            "beta",
            "gamma_L [J_in]",
            "gamma_C_alpha0 [J_in]",
            "gamma_C_alphaBover10 [J_in]",
            "gamma_L_inel [J_in]",
        ],
    );
    for (p, q) in gp.points.iter().zip(&inel.points) {
        curve.push(vec![
            p.beta,
            q.ladder,
            p.crossed,
            q.crossed,
            q.ladder_inelastic,
        ]);
    }
    out.curves.push(curve);
    out.converge(
        "ladder_iterations_max",
        gp.points
            .iter()
            .chain(&inel.points)
            .map(|p| p.ladder_iterations)
            .max()
            .unwrap_or(0),
    );

    match gp.crossover {
        Some(b) => {
            out.scalar("beta_star", b)?;
            out.check(
                "crossover beta*",
                b,
                "in [0.11, 0.15]",
                (0.11..=0.15).contains(&b),
            );
        }
        None => out.check("crossover beta*", f64::NAN, "in [0.11, 0.15]", false),
    }
    if let Some(b) = inel.crossover {
        out.scalar("beta_star_alphaBover10", b)?;
    }
    let upto = |b: f64| b <= 0.2 + 1e-12;
    let min_inel = inel
        .points
        .iter()
        .filter(|p| upto(p.beta))
        .map(|p| p.crossed)
        .fold(f64::INFINITY, f64::min);
    out.check(
        "min gamma_C(alpha = beta/10) for beta <= 0.2",
        min_inel,
        "> 0 (no sign change)",
        min_inel > 0.0,
    );
    let pairs: Vec<_> = gp.points.iter().zip(&inel.points).collect();
    let small: Vec<_> = pairs.iter().filter(|(p, _)| p.beta <= 0.01).collect();
    if !small.is_empty() {
        let gap = small
            .iter()
            .map(|(p, q)| p.crossed - q.crossed)
            .fold(f64::INFINITY, f64::min);
        out.check(
            "gamma_C(alpha = 0) - gamma_C(alpha = beta/10) for beta <= 0.01",
            gap,
            "> 0",
            gap > 0.0,
        );
    }
    let large: Vec<_> = pairs
        .iter()
        .filter(|(p, _)| p.beta >= 0.1 && upto(p.beta))
        .collect();
    if !large.is_empty() {
        let gap = large
            .iter()
            .map(|(p, q)| q.crossed - p.crossed)
            .fold(f64::INFINITY, f64::min);
        out.check(
            "gamma_C(alpha = beta/10) - gamma_C(alpha = 0) for 0.1 <= beta <= 0.2",
            gap,
            "> 0",
            gap > 0.0,
        );
    }
    Ok(())
}

fn spectrum_scalars(out: &mut Outcome, s: &CrossedSpectrum) -> Result<()> {
    out.scalar("gamma_C", s.crossed_total())?;
    out.scalar("gamma_C_elastic", s.crossed_elastic)?;
    out.scalar("gamma_C_inelastic", s.crossed_inelastic)?;
    out.scalar("gamma_L", s.ladder_total())?;
    out.scalar("gamma_L_elastic", s.ladder_elastic)?;
    out.scalar("gamma_L_inelastic", s.ladder_inelastic)?;
    out.scalar("gamma_L_single", s.ladder_single)?;
    out.converge("imaginary_part_max", s.imaginary);
    out.converge("gmres_iterations", s.gmres_iterations);
    Ok(())
}

fn fig10b(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    let lc = ladder_config(cfg, cfg.alpha, cfg.beta)?;
    let sol = out.timed("ladder", || solve_ladder(&lc))?;
    out.ladder_convergence("ladder_", &sol);
    let template = crossed_template(cfg);
    let e_d = detection(cfg, &template)?;
    let s = out.timed("crossed", || crossed_spectrum(&sol, &e_d, &template))?;
    spectrum_scalars(out, &s)?;

    let mut curve = Curve::new(
        "fig10b_spectrum",
        &[
            "E_d [E_i]",
            "gamma_C_inel [J_in/E_i]",
            "gamma_L_inel [J_in/E_i]",
            "eta_inel",
        ],
    );
    for ((&e, &c), (&l, eta)) in s
        .e_d
        .iter()
        .zip(&s.crossed)
        .zip(s.ladder.iter().zip(s.enhancement()))
    {
        curve.rows.push(vec![Some(e), Some(c), Some(l), eta]);
    }
    out.curves.push(curve);

    match s.enhancement_peak(0.01) {
        Some(peak) => {
            out.scalar("enhancement_max", peak.eta)?;
            out.scalar("enhancement_peak_energy", peak.e_d)?;
            let shift = (peak.e_d - 1.0).abs();
            out.check("max inelastic enhancement", peak.eta, "> 2", peak.eta > 2.0);
            out.check("|E_peak - E_i| / E_i", shift, "<= 0.3", shift <= 0.3);
            let w = peak.width.unwrap_or(f64::NAN);
            if peak.width.is_some() {
                out.scalar("enhancement_width", w)?;
            }
            let rel = cfg.k_ell.recip();
            out.check(
                "relative peak width (FWHM)",
                w,
                &format!("within a factor 2 of {rel}"),
                w >= 0.5 * rel && w <= 2.0 * rel,
            );
        }
        None => out.check("max inelastic enhancement", f64::NAN, "> 2", false),
    }
    Ok(())
}

fn conservation(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    let alpha = cfg.alpha;
    let p = InteractionParams::new(alpha, cfg.beta, cfg.k_ell)?;
    let tol = Tolerance::absolute(1e-10 * alpha.max(1e-6));
    let bound = 1e-6 * alpha;

    let mut curve = Curve::new(
        "conservation_grid",
        &[
            "E1 [E_i]",
            "E2 [E_i]",
            "particle_residual [1/l_dis]",
            "energy_residual [E_i/l_dis]",
        ],
    );
    let (mut particle, mut energy) = (0.0f64, 0.0f64);
    out.timed("kernel grid", || -> Result<()> {
        for i in 0..20 {
            for j in 0..20 {
                let e1 = 0.2 + 2.8 * i as f64 / 19.0;
                let e2 = 0.2 + 2.8 * j as f64 / 19.0;
                let rp = check_particle_conservation(e1, e2, &p, tol)?;
                let re = check_energy_conservation(e1, e2, &p, tol)?;
                particle = particle.max(rp.abs());
                energy = energy.max(re.abs());
                curve.push(vec![e1, e2, rp, re]);
            }
        }
        Ok(())
    })?;
    out.curves.push(curve);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reversibility = 0.0f64;
    for _ in 0..1000 {
        let e1 = rng.random_range(0.01..4.0);
        let e2 = rng.random_range(0.01..4.0);
        let e3 = rng.random_range(0.01..(e1 + e2));
        reversibility = reversibility.max(check_reversibility(e1, e2, e3, &p)?.abs());
    }

    let g_err = (ladder_g(1.0, 1.0, &p)? + 4.0 / 3.0 * alpha).abs();
    let gain = integrate_with_breaks(
        |e| e.sqrt() * ladder_f(1.0, 1.0, e, &p).unwrap_or(0.0),
        &[0.0, 1.0, 2.0],
        Tolerance::absolute(1e-13),
    )?
    .value;
    let gain_err = (gain - 4.0 / 3.0 * alpha).abs();

    out.scalar("particle_residual_max", particle)?;
    out.scalar("energy_residual_max", energy)?;
    out.scalar("reversibility_residual_max", reversibility)?;
    out.scalar("loss_rate_incident_error", g_err)?;
    out.scalar("gain_moment_incident_error", gain_err)?;
    let req = format!("<= {bound:e}");
    out.check("particle conservation", particle, &req, particle <= bound);
    out.check("energy conservation", energy, &req, energy <= bound);
    out.check(
        "reversibility",
        reversibility,
        "<= 1e-14",
        reversibility <= 1e-14,
    );
    out.check("g(E_i, E_i) + 4 alpha/3", g_err, "<= 1e-8", g_err <= 1e-8);
    out.check(
        "gain moment - 4 alpha/3",
        gain_err,
        "<= 1e-8",
        gain_err <= 1e-8,
    );
    Ok(())
}

fn linear_cbs(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    let lc = ladder_config(cfg, 0.0, 0.0)?;
    let sol = out.timed("ladder", || solve_ladder(&lc))?;
    out.ladder_convergence("ladder_", &sol);
    let template = crossed_template(cfg);
    let s = out.timed("crossed", || crossed_spectrum(&sol, &[1.0], &template))?;
    spectrum_scalars(out, &s)?;
    let background = s.ladder_total();
    let dev = (s.crossed_total() - (background - s.ladder_single)).abs() / background;
    out.scalar("reciprocity_deviation", dev)?;
    out.check(
        "|gamma_C - (gamma_L - gamma_L_single)| / gamma_L",
        dev,
        "<= 1e-3",
        dev <= 1e-3,
    );
    Ok(())
}
