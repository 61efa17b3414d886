use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use deflect_core::beamline::{
    duplicate_deviation, loss_feature, prepare_beam, read_prepared, scan_preparation, symmetrized_l_perp,
    write_l_perp, write_prepared, write_scan, LossFeature, PreparedRow,
};
use deflect_core::config::{RunConfig, TOOL_VERSION};
use deflect_core::observables::{
    alignment_coefficients, coherence_coefficient, k_coefficients, read_dparams, write_dparams, DParamCache,
    DeflectionParameterSet,
};
use deflect_core::par::try_par_map;
use deflect_core::spin::{DensityMatrix, PolarisationMode};
use deflect_core::tomography::{
    add_noise, fidelity, read_measurements, reconstruct, simulate_records, write_measurements, write_result,
    MeasurementRecord, ResultDocument,
};
use deflect_core::Error;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const DPARAMS_FILE: &str = "dparams.csv";
const LOSS_WINDOW_DEG: f64 = 20.0;
const LOSS_HARMONICS: usize = 5;

pub struct Context {
    pub cfg: RunConfig,
    pub hash: String,
    pub out: PathBuf,
}

impl Context {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Self {
        let hash = cfg.hash();
        Self { cfg, hash, out }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, Error> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))?;
        Ok(BufWriter::new(file))
    }

    fn header(&self) -> String {
        format!("# tool_version: {TOOL_VERSION}\n# config_hash: {}\n", self.hash)
    }
}

fn open(path: &Path, what: &str) -> Result<File, Error> {
    File::open(path).map_err(|e| Error::Config(format!("{what} {}: {e}", path.display())))
}

fn write_json<T: Serialize>(ctx: &Context, name: &str, value: &T) -> Result<(), Error> {
    let mut w = ctx.create(name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Parse(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    println!("wrote {}", ctx.path(name).display());
    Ok(())
}

pub fn prepare(ctx: &Context, thetas: &[f64]) -> Result<(), Error> {
    let cfg = &ctx.cfg;
    let grid = if thetas.is_empty() { cfg.scan.grid() } else { thetas.to_vec() };
    let structure = cfg.structure()?;
    let rows = try_par_map(&grid, |&theta| {
        let beam = prepare_beam(cfg, &structure, theta)?;
        Ok::<_, Error>(PreparedRow {
            theta,
            reference_population: beam.reference_population(),
            lost_population: beam.classes.iter().map(|c| c.class.weight * c.lost).sum(),
            state: beam.mean_state()?.with_population_scale(1.0),
        })
    })?;
    let mut w = ctx.create("prepared.csv")?;
    write_prepared(&rows, &ctx.hash, &mut w)?;
    w.flush()?;
    println!("wrote {} ({} rows)", ctx.path("prepared.csv").display(), rows.len());
    Ok(())
}

fn cached_dparams(ctx: &Context, path: &Path) -> Option<Vec<DeflectionParameterSet>> {
    let (sets, hash) = read_dparams(File::open(path).ok()?).ok()?;
    let complete = ctx.cfg.tomography.directions.iter().all(|d| {
        PolarisationMode::PURE
            .iter()
            .all(|&m| sets.iter().any(|s| s.mode == m && s.direction == d.label))
    });
    (hash == ctx.hash && complete).then_some(sets)
}

/// Deflection parameters at the mean velocity for every pure mode and
/// configured direction, reusing `dparams.csv` when it was written for the
/// same configuration.
fn dparam_sets(ctx: &Context) -> Result<Vec<DeflectionParameterSet>, Error> {
    let path = ctx.path(DPARAMS_FILE);
    if let Some(sets) = cached_dparams(ctx, &path) {
        eprintln!("reusing deflection parameters from {}", path.display());
        return Ok(sets);
    }
    let cfg = &ctx.cfg;
    let structure = cfg.structure()?;
    let beam = cfg.mean_deflection_beam()?;
    let mut sets = Vec::new();
    for d in &cfg.tomography.directions {
        for &m in &PolarisationMode::PURE {
            sets.push(DParamCache::global().get_or_compute(m, d, &structure, &beam, cfg.sigma_u)?);
        }
    }
    let mut w = ctx.create(DPARAMS_FILE)?;
    write_dparams(&sets, &ctx.hash, &mut w)?;
    w.flush()?;
    eprintln!("computed deflection parameters into {}", path.display());
    Ok(sets)
}

#[derive(Debug, Serialize)]
struct Coefficients {
    tool_version: &'static str,
    config_hash: String,
    direction: String,
    sigma_u: f64,
    k2: f64,
    k1: f64,
    alignment_k2: f64,
    alignment_k1: f64,
    coherence_kg: f64,
}

fn coefficients(ctx: &Context, sets: &[DeflectionParameterSet]) -> Result<Coefficients, Error> {
    let dir = &ctx.cfg.orientation_direction().label;
    let find = |mode: PolarisationMode| {
        sets.iter()
            .find(|s| s.mode == mode && &s.direction == dir)
            .ok_or_else(|| Error::Config(format!("no {mode} deflection parameters for direction '{dir}'")))
    };
    let k = k_coefficients(find(PolarisationMode::SigmaPlus)?)?;
    let pi = find(PolarisationMode::Pi0)?;
    let ka = alignment_coefficients(pi)?;
    Ok(Coefficients {
        tool_version: TOOL_VERSION,
        config_hash: ctx.hash.clone(),
        direction: dir.clone(),
        sigma_u: ctx.cfg.sigma_u,
        k2: k.k2,
        k1: k.k1,
        alignment_k2: ka.k2,
        alignment_k1: ka.k1,
        coherence_kg: coherence_coefficient(pi)?,
    })
}

pub fn dparams(ctx: &Context) -> Result<(), Error> {
    let sets = dparam_sets(ctx)?;
    write_json(ctx, "coefficients.json", &coefficients(ctx, &sets)?)
}

#[derive(Debug, Serialize)]
struct FailedPoint {
    theta: f64,
    error: String,
}

#[derive(Debug, Serialize)]
struct Deviation {
    max: f64,
    mean: f64,
}

#[derive(Debug, Serialize)]
struct ScanSummary {
    tool_version: &'static str,
    config_hash: String,
    direction: String,
    k2: f64,
    points: usize,
    failed_points: Vec<FailedPoint>,
    p_o_range: Option<[f64; 2]>,
    l_perp_range: Option<[f64; 2]>,
    duplicate_deviation: Option<Deviation>,
    loss_feature: Option<LossFeature>,
    #[serde(skip_serializing_if = "Option::is_none")]
    loss_feature_error: Option<String>,
}

fn range(values: impl Iterator<Item = f64>) -> Option<[f64; 2]> {
    values.fold(None, |acc, v| match acc {
        None => Some([v, v]),
        Some([lo, hi]) => Some([lo.min(v), hi.max(v)]),
    })
}

/// Runs the waveplate scan and writes its tables; returns the failed points.
pub fn scan(ctx: &Context) -> Result<Vec<(f64, String)>, Error> {
    let cfg = &ctx.cfg;
    let sets = dparam_sets(ctx)?;
    let k2 = coefficients(ctx, &sets)?.k2;
    let modes = [PolarisationMode::SigmaPlus, PolarisationMode::SigmaMinus];
    let table = scan_preparation(cfg, &modes, &cfg.scan.grid())?;

    let mut w = ctx.create("scan.csv")?;
    write_scan(&table, &ctx.hash, &mut w)?;
    w.flush()?;
    println!("wrote {}", ctx.path("scan.csv").display());

    let series = table.p_o_series();
    let l_perp = if series.is_empty() { Vec::new() } else { symmetrized_l_perp(&series, k2)? };
    let mut w = ctx.create("l_perp.csv")?;
    write_l_perp(&l_perp, k2, &ctx.hash, &mut w)?;
    w.flush()?;
    println!("wrote {}", ctx.path("l_perp.csv").display());

    let (loss, loss_error) = match loss_feature(&series, LOSS_WINDOW_DEG.to_radians(), LOSS_HARMONICS) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let failures = table.failures();
    let summary = ScanSummary {
        tool_version: TOOL_VERSION,
        config_hash: ctx.hash.clone(),
        direction: table.direction.clone(),
        k2,
        points: table.points.len(),
        failed_points: failures
            .iter()
            .map(|(theta, error)| FailedPoint {
                theta: *theta,
                error: error.clone(),
            })
            .collect(),
        p_o_range: range(series.iter().map(|p| p.1)),
        l_perp_range: range(l_perp.iter().map(|p| p.l_perp)),
        duplicate_deviation: duplicate_deviation(&l_perp).map(|(max, mean)| Deviation { max, mean }),
        loss_feature: loss,
        loss_feature_error: loss_error,
    };
    write_json(ctx, "scan_summary.json", &summary)?;
    Ok(failures)
}

pub struct TomographyRequest {
    pub measurements: Option<PathBuf>,
    pub synthetic: Option<f64>,
    pub noise: f64,
    pub truth: Option<PathBuf>,
    pub truth_row: usize,
    pub trials: usize,
}

fn read_truth(path: &Path, row: usize) -> Result<DensityMatrix, Error> {
    let (rows, _) = read_prepared(open(path, "--truth")?)?;
    let n = rows.len();
    rows.into_iter()
        .nth(row)
        .map(|r| r.state)
        .ok_or_else(|| Error::Config(format!("--truth-row {row} is out of range for {n} rows in {}", path.display())))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn tomography(ctx: &Context, req: &TomographyRequest) -> Result<(), Error> {
    if !(req.noise >= 0.0 && req.noise.is_finite()) {
        return Err(Error::Config(format!("--noise must be finite and >= 0, got {}", req.noise)));
    }
    if req.noise > 0.0 && req.trials < 2 {
        return Err(Error::Config("--trials must be at least 2 when --noise is set".into()));
    }
    let cfg = &ctx.cfg;
    let directions = &cfg.tomography.directions;
    let sets = dparam_sets(ctx)?;
    let truth_file = req.truth.as_deref().map(|p| read_truth(p, req.truth_row)).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let (records, truth) = match (req.synthetic, &req.measurements) {
        (Some(theta), _) => {
            let prepared = prepare_beam(cfg, &cfg.structure()?, theta)?.mean_state()?.with_population_scale(1.0);
            let truth = truth_file.unwrap_or(prepared);
            let sigma = cfg.tomography.momentum_uncertainty_hbar_k;
            let clean: Vec<MeasurementRecord> = simulate_records(&truth, directions, &cfg.tomography.modes, &sets)?
                .into_iter()
                .map(|r| MeasurementRecord { uncertainty: sigma, ..r })
                .collect();
            let records = add_noise(&clean, req.noise, &mut rng)?;
            let mut w = ctx.create("measurements.csv")?;
            let header = format!("{}# synthetic_theta: {theta}\n# noise_fraction: {}\n", ctx.header(), req.noise);
            write_measurements(&records, &header, &mut w)?;
            w.flush()?;
            println!("wrote {}", ctx.path("measurements.csv").display());
            (records, Some(truth))
        }
        (None, Some(path)) => (read_measurements(open(path, "--measurements")?)?, truth_file),
        (None, None) => return Err(Error::Config("either --measurements or --synthetic is required".into())),
    };

    let result = reconstruct(&records, directions, &sets)?;
    let mut doc = ResultDocument::new(&result, &ctx.hash);
    doc.fidelity = truth.as_ref().map(|t| fidelity(&result.rho_hat, t));
    if req.noise > 0.0 {
        // spread of the fidelity under repeated noise draws around the reference state
        let reference = truth.unwrap_or_else(|| result.rho_hat.clone());
        let clean = simulate_records(&reference, directions, &cfg.tomography.modes, &sets)?;
        let mut trial_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        trial_rng.set_stream(1);
        let mut fids = (0..req.trials)
            .map(|_| {
                let noisy = add_noise(&clean, req.noise, &mut trial_rng)?;
                Ok(fidelity(&reconstruct(&noisy, directions, &sets)?.rho_hat, &reference))
            })
            .collect::<Result<Vec<f64>, Error>>()?;
        fids.sort_by(f64::total_cmp);
        doc.fidelity_interval = Some([percentile(&fids, 0.025), percentile(&fids, 0.975)]);
    }
    let mut w = ctx.create("tomography.json")?;
    write_result(&doc, &mut w)?;
    w.flush()?;
    println!("wrote {}", ctx.path("tomography.json").display());
    if let Some(f) = doc.fidelity {
        println!("fidelity {f:.9}");
    }
    Ok(())
}
