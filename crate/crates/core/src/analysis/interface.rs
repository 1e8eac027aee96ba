use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chaos::{chaos_measure, FractionInterval, DEFAULT_FINAL_INTERVAL, DEFAULT_INITIAL_INTERVAL};
use super::crossings::{crossing_times, crossing_tolerance, DEFAULT_TOL_REL};
use super::spectrum::{power_spectrum_measure, tail_spectrum, Spectrum, DEFAULT_PERIODIC_THRESHOLD};
use crate::error::{Error, Result};
use crate::scenario::{PipeTemplate, Profile, Scenario};
use crate::sim::{simulate, simulate_from, Quantity, Simulation};
use crate::timeint::{fmt_num, TimeSeries};

/// A one-dimensional parameter grid, either listed or evenly spaced with
/// both ends included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl Grid {
    pub fn range(start: f64, stop: f64, points: usize) -> Self {
        Grid::Range { start, stop, points }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            Grid::Values(v) => v.clone(),
            Grid::Range { start, stop, points } => match points {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|i| start + (stop - start) * i as f64 / (*n - 1) as f64).collect(),
            },
        };
        if v.is_empty() {
            return Err(Error::Config("grid has no points".into()));
        }
        if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid must be finite and strictly ascending".into()));
        }
        Ok(v)
    }
}

/// Which nodes are compared when looking for crossings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingScope {
    #[default]
    Outlet,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotonicSettings {
    /// Ordered outlet withdrawal fluxes, kg/m^2/s.
    #[serde(default = "default_outflows")]
    pub outflow_fluxes: Vec<f64>,
    #[serde(default = "default_quantities")]
    pub quantities: Vec<Quantity>,
    #[serde(default)]
    pub scope: CrossingScope,
    #[serde(default = "default_tol_rel")]
    pub tol_rel: f64,
}

fn default_outflows() -> Vec<f64> {
    vec![120.0, 140.0, 160.0]
}
fn default_quantities() -> Vec<Quantity> {
    vec![
        Quantity::HydrogenDensity,
        Quantity::NaturalGasDensity,
        Quantity::Density,
        Quantity::Energy,
        Quantity::PressureMpa,
    ]
}
fn default_tol_rel() -> f64 {
    DEFAULT_TOL_REL
}

impl Default for MonotonicSettings {
    fn default() -> Self {
        MonotonicSettings {
            outflow_fluxes: default_outflows(),
            quantities: default_quantities(),
            scope: CrossingScope::Outlet,
            tol_rel: DEFAULT_TOL_REL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicSettings {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_PERIODIC_THRESHOLD
}

impl Default for PeriodicSettings {
    fn default() -> Self {
        PeriodicSettings { threshold: DEFAULT_PERIODIC_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaoticSettings {
    /// Outlet flux whose steady state starts the second trajectory. Both
    /// trajectories are then driven by the pipe's own outflow. Defaults to
    /// the pipe outflow plus 0.1 kg/m^2/s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_outflow_flux: Option<f64>,
    #[serde(default = "default_i0")]
    pub initial_interval: FractionInterval,
    #[serde(default = "default_it")]
    pub final_interval: FractionInterval,
}

fn default_i0() -> FractionInterval {
    DEFAULT_INITIAL_INTERVAL
}
fn default_it() -> FractionInterval {
    DEFAULT_FINAL_INTERVAL
}

impl Default for ChaoticSettings {
    fn default() -> Self {
        ChaoticSettings {
            initial_outflow_flux: None,
            initial_interval: DEFAULT_INITIAL_INTERVAL,
            final_interval: DEFAULT_FINAL_INTERVAL,
        }
    }
}

/// A sweep over forcing frequency and amplitude factor of the inlet hydrogen
/// fraction `mean (1 + kappa sin(2 pi omega t))` for a single pipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Pipe template; `inlet_h2` must be a constant and gives the mean.
    pub pipe: PipeTemplate,
    pub omega: Grid,
    pub kappa: Grid,
    #[serde(default)]
    pub monotonic: MonotonicSettings,
    #[serde(default)]
    pub periodic: PeriodicSettings,
    #[serde(default)]
    pub chaotic: ChaoticSettings,
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.mean_h2()?;
        self.omega.values()?;
        let k = self.kappa.values()?;
        if k[0] < 0.0 || *k.last().unwrap() > 1.0 {
            return Err(Error::Config("kappa grid must lie in [0, 1]".into()));
        }
        let w = &self.monotonic.outflow_fluxes;
        if w.len() < 2 || w.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Config("monotonic outflows must be at least two, strictly increasing".into()));
        }
        if self.monotonic.quantities.is_empty() {
            return Err(Error::Config("monotonic sweep needs at least one quantity".into()));
        }
        let (a, b) = (self.chaotic.initial_interval, self.chaotic.final_interval);
        if !(0.0 <= a.0 && a.0 < a.1 && a.1 < b.0 && b.0 < b.1 && b.1 <= 1.0) {
            return Err(Error::Interval("chaos intervals must satisfy 0 <= a0 < a1 < b0 < b1 <= 1".into()));
        }
        self.pipe.scenario()?;
        Ok(())
    }

    fn mean_h2(&self) -> Result<f64> {
        match self.pipe.inlet_h2 {
            Profile::Constant(v) => Ok(v),
            _ => Err(Error::Config("sweep pipe `inlet_h2` must be a constant mean fraction".into())),
        }
    }

    /// Scenario at forcing `(omega, kappa)` with the given outlet flux.
    pub fn scenario(&self, omega: f64, kappa: f64, outflow_flux: f64) -> Result<Scenario> {
        let mut t = self.pipe.clone();
        t.inlet_h2 = Profile::sinusoid(self.mean_h2()?, kappa, omega);
        t.outflow_flux = outflow_flux;
        t.scenario()
    }

    fn chaos_initial_flux(&self) -> f64 {
        self.chaotic.initial_outflow_flux.unwrap_or(self.pipe.outflow_flux + 0.1)
    }
}

/// What an interface curve delimits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterfaceKind {
    Monotonic(Quantity),
    Periodic,
    Chaotic,
}

impl fmt::Display for InterfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InterfaceKind::Monotonic(q) => write!(f, "mi:{q}"),
            InterfaceKind::Periodic => f.write_str("pi"),
            InterfaceKind::Chaotic => f.write_str("ci"),
        }
    }
}

/// Critical amplitude factor per forcing frequency. `NaN` marks a frequency
/// whose classification failed.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceCurve {
    pub kind: InterfaceKind,
    pub threshold: f64,
    pub omega: Vec<f64>,
    pub kappa_star: Vec<f64>,
}

impl InterfaceCurve {
    /// Natural cubic spline through the valid grid values, evaluated at
    /// `samples` evenly spaced frequencies. Presentation only.
    pub fn spline(&self, samples: usize) -> Vec<(f64, f64)> {
        let pts: Vec<(f64, f64)> =
            self.omega.iter().copied().zip(self.kappa_star.iter().copied()).filter(|(_, k)| k.is_finite()).collect();
        natural_spline(&pts, samples)
    }
}

/// CSV with columns `omega_star,kappa_star,kind,threshold` for every curve.
pub fn write_curves<W: Write>(curves: &[InterfaceCurve], mut w: W) -> std::io::Result<()> {
    writeln!(w, "omega_star,kappa_star,kind,threshold")?;
    for c in curves {
        for (o, k) in c.omega.iter().zip(&c.kappa_star) {
            writeln!(w, "{},{},{},{}", fmt_num(*o), fmt_num(*k), c.kind, fmt_num(c.threshold))?;
        }
    }
    Ok(())
}

/// Outcome at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub omega: f64,
    pub kappa: f64,
    pub result: std::result::Result<Vec<f64>, String>,
}

/// Curves plus every evaluated grid point, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub curves: Vec<InterfaceCurve>,
    pub metric_names: Vec<String>,
    pub points: Vec<PointRecord>,
}

impl SweepOutcome {
    /// CSV with columns `omega_star,kappa,<metrics...>,status`.
    pub fn write_points_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "omega_star,kappa")?;
        for m in &self.metric_names {
            write!(w, ",{m}")?;
        }
        writeln!(w, ",status")?;
        for p in &self.points {
            write!(w, "{},{}", fmt_num(p.omega), fmt_num(p.kappa))?;
            match &p.result {
                Ok(v) => {
                    for x in v {
                        write!(w, ",{}", fmt_num(*x))?;
                    }
                    writeln!(w, ",ok")?;
                }
                Err(e) => {
                    for _ in &self.metric_names {
                        write!(w, ",")?;
                    }
                    writeln!(w, ",\"failed: {}\"", e.replace('"', "'"))?;
                }
            }
        }
        Ok(())
    }
}

/// Storage for per-point metrics so that repeated sweeps skip simulations.
pub trait PointCache: Sync {
    fn get(&self, kind: &str, omega: f64, kappa: f64) -> Option<Vec<f64>>;
    fn put(&self, kind: &str, omega: f64, kappa: f64, metrics: &[f64]);
}

/// Execution options shared by the sweeps.
#[derive(Clone, Copy, Default)]
pub struct SweepOptions<'a> {
    /// Worker threads; 0 lets the pool choose.
    pub workers: usize,
    pub cache: Option<&'a dyn PointCache>,
}

impl fmt::Debug for SweepOptions<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SweepOptions").field("workers", &self.workers).field("cache", &self.cache.is_some()).finish()
    }
}

fn in_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Sweep(e.to_string()))?;
    Ok(pool.install(job))
}

fn cached(
    opts: &SweepOptions<'_>,
    kind: &str,
    omega: f64,
    kappa: f64,
    eval: impl FnOnce() -> Result<Vec<f64>>,
) -> std::result::Result<Vec<f64>, String> {
    if let Some(v) = opts.cache.and_then(|c| c.get(kind, omega, kappa)) {
        return Ok(v);
    }
    match eval() {
        Ok(v) => {
            if let Some(c) = opts.cache {
                c.put(kind, omega, kappa, &v);
            }
            Ok(v)
        }
        Err(e) => {
            log::warn!("{kind} point ({omega}, {kappa}) failed: {e}");
            Err(e.to_string())
        }
    }
}

fn columns_for(series: &TimeSeries, q: Quantity, scope: CrossingScope) -> Vec<String> {
    let suffix = format!(".{q}");
    match scope {
        CrossingScope::Outlet => vec![format!("out{suffix}")],
        CrossingScope::All => series.names.iter().filter(|n| n.ends_with(&suffix)).cloned().collect(),
    }
}

/// Whether any two of the ordered-outflow solutions cross, per configured
/// quantity, at forcing `(omega, kappa)`.
pub fn monotonic_point(cfg: &SweepConfig, omega: f64, kappa: f64) -> Result<Vec<bool>> {
    let ms = &cfg.monotonic;
    let runs: Vec<Simulation> = ms
        .outflow_fluxes
        .par_iter()
        .map(|w| simulate(&cfg.scenario(omega, kappa, *w)?))
        .collect::<Result<_>>()?;
    let mut flags = Vec::with_capacity(ms.quantities.len());
    for q in &ms.quantities {
        let mut crossed = false;
        'pairs: for i in 0..runs.len() {
            for j in i + 1..runs.len() {
                let (a, b) = (&runs[i].series, &runs[j].series);
                for name in columns_for(a, *q, ms.scope) {
                    let (Some(x), Some(y)) = (a.column(&name), b.column(&name)) else {
                        return Err(Error::Sweep(format!("missing column `{name}`")));
                    };
                    let tol = crossing_tolerance(x, y, ms.tol_rel);
                    if !crossing_times(&a.t_hr, x, y, tol)?.is_empty() {
                        crossed = true;
                        break 'pairs;
                    }
                }
            }
        }
        flags.push(crossed);
    }
    Ok(flags)
}

/// Monotonic interfaces, one per configured quantity. For each frequency the
/// amplitude grid is walked upward until every quantity has crossed; the
/// first crossing amplitude is the critical value, or 1 if none crosses.
pub fn monotonic_interface(cfg: &SweepConfig, opts: SweepOptions<'_>) -> Result<SweepOutcome> {
    cfg.validate()?;
    let omegas = cfg.omega.values()?;
    let kappas = cfg.kappa.values()?;
    let nq = cfg.monotonic.quantities.len();
    let columns: Vec<(Vec<f64>, Vec<PointRecord>)> = in_pool(opts.workers, || {
        omegas
            .par_iter()
            .map(|&omega| {
                let mut star = vec![None::<f64>; nq];
                let mut records = Vec::new();
                for &kappa in &kappas {
                    let r = cached(&opts, "mi", omega, kappa, || {
                        Ok(monotonic_point(cfg, omega, kappa)?.into_iter().map(|b| f64::from(u8::from(b))).collect())
                    });
                    if let Ok(flags) = &r {
                        for (s, f) in star.iter_mut().zip(flags) {
                            if s.is_none() && *f > 0.5 {
                                *s = Some(kappa);
                            }
                        }
                    }
                    records.push(PointRecord { omega, kappa, result: r });
                    if star.iter().all(Option::is_some) {
                        break;
                    }
                }
                (star.into_iter().map(|s| s.unwrap_or(1.0)).collect(), records)
            })
            .collect()
    })?;
    let curves = cfg
        .monotonic
        .quantities
        .iter()
        .enumerate()
        .map(|(qi, q)| InterfaceCurve {
            kind: InterfaceKind::Monotonic(*q),
            threshold: cfg.monotonic.tol_rel,
            omega: omegas.clone(),
            kappa_star: columns.iter().map(|c| c.0[qi]).collect(),
        })
        .collect();
    Ok(SweepOutcome {
        curves,
        metric_names: cfg.monotonic.quantities.iter().map(|q| format!("crosses_{q}")).collect(),
        points: columns.into_iter().flat_map(|c| c.1).collect(),
    })
}

/// Outlet pressure spectrum and power measure at `(omega, kappa)`.
pub fn periodic_point(cfg: &SweepConfig, omega: f64, kappa: f64) -> Result<(Spectrum, f64)> {
    let sim = simulate(&cfg.scenario(omega, kappa, cfg.pipe.outflow_flux)?)?;
    outlet_spectrum(&sim.series, "out")
}

/// Spectrum and power measure of a node's pressure tail, shifted by its
/// initial value.
pub fn outlet_spectrum(series: &TimeSeries, node: &str) -> Result<(Spectrum, f64)> {
    let name = format!("{node}.{}", Quantity::PressureMpa);
    let p = series.column(&name).ok_or_else(|| Error::UnknownNode(node.to_string()))?;
    if p.len() < 3 {
        return Err(Error::Interval("series too short for a spectrum".into()));
    }
    let dt = series.t_hr[1] - series.t_hr[0];
    let power = power_spectrum_measure(p, p[0], dt)?;
    let spec = if power == 0.0 {
        // Steady: report a unit peak at zero frequency over the tail grid.
        let m = super::spectrum::tail(p)?.len() - 1;
        let span = m as f64 * dt;
        let mut values = vec![num_complex::Complex64::new(0.0, 0.0); m + 1];
        values[0] = num_complex::Complex64::new(1.0, 0.0);
        Spectrum { omega_cyc_hr: (0..=m).map(|n| n as f64 / span).collect(), values }
    } else {
        tail_spectrum(p, p[0], dt)?
    };
    Ok((spec, power))
}

fn grid_points(cfg: &SweepConfig) -> Result<(Vec<f64>, Vec<f64>, Vec<(f64, f64)>)> {
    let omegas = cfg.omega.values()?;
    let kappas = cfg.kappa.values()?;
    let pts = omegas.iter().flat_map(|o| kappas.iter().map(move |k| (*o, *k))).collect();
    Ok((omegas, kappas, pts))
}

/// Periodic interface: per frequency, the largest amplitude up to which
/// every grid amplitude has power below the threshold. The smallest grid
/// amplitude is reported when it already fails, and 1 when none fails.
pub fn periodic_interface(cfg: &SweepConfig, opts: SweepOptions<'_>) -> Result<SweepOutcome> {
    cfg.validate()?;
    let (omegas, kappas, pts) = grid_points(cfg)?;
    let points: Vec<PointRecord> = in_pool(opts.workers, || {
        pts.par_iter()
            .map(|&(omega, kappa)| PointRecord {
                omega,
                kappa,
                result: cached(&opts, "pi", omega, kappa, || Ok(vec![periodic_point(cfg, omega, kappa)?.1])),
            })
            .collect()
    })?;
    let thr = cfg.periodic.threshold;
    let kappa_star = points
        .chunks(kappas.len())
        .map(|col| {
            let vals: Vec<(f64, f64)> =
                col.iter().filter_map(|p| p.result.as_ref().ok().map(|v| (p.kappa, v[0]))).collect();
            periodic_star(&vals, thr, kappas[0])
        })
        .collect();
    Ok(SweepOutcome {
        curves: vec![InterfaceCurve { kind: InterfaceKind::Periodic, threshold: thr, omega: omegas, kappa_star }],
        metric_names: vec!["power".into()],
        points,
    })
}

/// Critical amplitude from `(kappa, power)` pairs in ascending order.
pub fn periodic_star(vals: &[(f64, f64)], threshold: f64, kappa_min: f64) -> f64 {
    if vals.is_empty() {
        return f64::NAN;
    }
    match vals.iter().position(|(_, p)| *p >= threshold) {
        None => 1.0,
        Some(0) => kappa_min,
        Some(i) => vals[i - 1].0,
    }
}

/// Chaos measure of outlet pressure for two trajectories at
/// `(omega, kappa)` that differ only in their initial steady state.
pub fn chaotic_point(cfg: &SweepConfig, omega: f64, kappa: f64) -> Result<f64> {
    let s = cfg.scenario(omega, kappa, cfg.pipe.outflow_flux)?;
    let s0 = cfg.scenario(omega, kappa, cfg.chaos_initial_flux())?;
    let (a, b) = rayon::join(|| simulate(&s), || simulate_from(&s, &s0));
    let (a, b) = (a?, b?);
    let name = format!("out.{}", Quantity::PressureMpa);
    let (x, y) = (a.series.column(&name).unwrap(), b.series.column(&name).unwrap());
    let n = x.len() - 1;
    let r = chaos_measure(
        x,
        y,
        cfg.chaotic.initial_interval.indices(n),
        cfg.chaotic.final_interval.indices(n),
    )?;
    if !r.excluded.is_empty() {
        log::debug!("chaos point ({omega}, {kappa}): {} zero-difference samples excluded", r.excluded.len());
    }
    Ok(r.measure)
}

/// Chaotic interface: per frequency, the lower bound above which every grid
/// amplitude has a positive chaos measure. It is 1 when the largest
/// amplitude is not positive, and the smallest grid amplitude when all are.
pub fn chaotic_interface(cfg: &SweepConfig, opts: SweepOptions<'_>) -> Result<SweepOutcome> {
    cfg.validate()?;
    let (omegas, kappas, pts) = grid_points(cfg)?;
    let points: Vec<PointRecord> = in_pool(opts.workers, || {
        pts.par_iter()
            .map(|&(omega, kappa)| PointRecord {
                omega,
                kappa,
                result: cached(&opts, "ci", omega, kappa, || Ok(vec![chaotic_point(cfg, omega, kappa)?])),
            })
            .collect()
    })?;
    let kappa_star = points
        .chunks(kappas.len())
        .map(|col| {
            let vals: Vec<(f64, f64)> =
                col.iter().filter_map(|p| p.result.as_ref().ok().map(|v| (p.kappa, v[0]))).collect();
            chaotic_star(&vals, kappas[0])
        })
        .collect();
    Ok(SweepOutcome {
        curves: vec![InterfaceCurve { kind: InterfaceKind::Chaotic, threshold: 0.0, omega: omegas, kappa_star }],
        metric_names: vec!["chaos".into()],
        points,
    })
}

/// Critical amplitude from `(kappa, measure)` pairs in ascending order.
pub fn chaotic_star(vals: &[(f64, f64)], kappa_min: f64) -> f64 {
    match vals.iter().rposition(|(_, c)| *c <= 0.0) {
        _ if vals.is_empty() => f64::NAN,
        None => kappa_min,
        Some(i) if i + 1 == vals.len() => 1.0,
        Some(i) => vals[i].0,
    }
}

fn natural_spline(pts: &[(f64, f64)], samples: usize) -> Vec<(f64, f64)> {
    let n = pts.len();
    if n < 2 || samples < 2 {
        return pts.to_vec();
    }
    let h: Vec<f64> = pts.windows(2).map(|w| w[1].0 - w[0].0).collect();
    // Second derivatives from the tridiagonal system with zero end moments.
    let mut m = vec![0.0; n];
    if n > 2 {
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            rhs[i] = 6.0 * ((pts[i + 2].1 - pts[i + 1].1) / h[i + 1] - (pts[i + 1].1 - pts[i].1) / h[i]);
        }
        for i in 1..k {
            let f = h[i] / diag[i - 1];
            diag[i] -= f * h[i];
            rhs[i] -= f * rhs[i - 1];
        }
        for i in (0..k).rev() {
            let upper = if i + 1 < k { h[i + 1] * m[i + 2] } else { 0.0 };
            m[i + 1] = (rhs[i] - upper) / diag[i];
        }
    }
    let (x0, x1) = (pts[0].0, pts[n - 1].0);
    (0..samples)
        .map(|s| {
            let x = x0 + (x1 - x0) * s as f64 / (samples - 1) as f64;
            let i = pts.windows(2).position(|w| x <= w[1].0).unwrap_or(n - 2);
            let (a, b) = (pts[i], pts[i + 1]);
            let hi = h[i];
            let (u, v) = ((b.0 - x) / hi, (x - a.0) / hi);
            let y = u * a.1
                + v * b.1
                + ((u * u * u - u) * m[i] + (v * v * v - v) * m[i + 1]) * hi * hi / 6.0;
            (x, y)
        })
        .collect()
}
