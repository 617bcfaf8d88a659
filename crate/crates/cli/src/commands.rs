use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use affine_lpv::model::log_grid;
use affine_lpv::simulate::RunComparison;
use affine_lpv::{
    accuracy_sweep, compare_runs, default_frequency_grid, parse_generator_spec, simulate_lpv, simulate_nl,
    AccuracyReport, AffineLpvModel, Classify, Feedback, InputSignal, PipelineError, SchedulingRegion, SimOptions,
};
use nalgebra::{DMatrix, DVector};

use crate::config::{config_error, parse_list, read, Settings};
use crate::{Source, Tuning};

type Result<T> = std::result::Result<T, PipelineError>;

fn out_path(flag: Option<&Path>, settings: Option<&Settings>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| settings.and_then(Settings::out).map(PathBuf::from))
}

fn emit(out: &str) -> Result<()> {
    let mut so = std::io::stdout().lock();
    so.write_all(out.as_bytes())
        .and_then(|_| so.flush())
        .map_err(|e| PipelineError::config("output", e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn region_text(r: &SchedulingRegion) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "region_method = {}", r.method);
    for i in 0..r.dim() {
        let _ = writeln!(s, "theta{}_bounds = [{:.6}, {:.6}]", i + 1, r.lower[i], r.upper[i]);
    }
    let _ = writeln!(s, "region_center = {}", fmt_vec(&r.center));
    let _ = writeln!(s, "region_volume = {:.6}", r.volume);
    s
}

pub fn embed(source: &Source, tuning: &Tuning, out: Option<&Path>) -> Result<()> {
    let st = Settings::new(source, tuning)?;
    let fx = st.fixture()?;
    let sys = st.system(fx.as_ref())?;
    let data = st.dataset(fx.as_ref())?;
    let opts = st.embed_options(fx.as_ref())?;
    let e = affine_lpv::embed(&sys, &data, &opts)?;

    let mut s = String::new();
    let _ = writeln!(s, "samples = {}", data.len());
    let _ = writeln!(
        s,
        "active_rows = {} of {}",
        e.normalizer.n_active(),
        e.normalizer.len()
    );
    let sv: Vec<String> = e
        .decomposition
        .singular_values()
        .iter()
        .enumerate()
        .map(|(i, v)| format!("sigma{} = {v:.6e}", i + 1))
        .collect();
    s.push_str(&sv.join("\n"));
    s.push('\n');
    s.push_str(&e.report.to_text());
    s.push_str(&region_text(&e.region_fit.region));
    if let Some(p) = out_path(out, Some(&st)) {
        e.model.save(&p).map_err(|e| e.at("save_model"))?;
        let _ = writeln!(s, "model = {}", p.display());
    }
    emit(&s)
}

/// `lo..hi` or `lo..=hi`, both inclusive.
fn parse_orders(s: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .ok_or_else(|| config_error(format!("orders: expected `lo..hi`, got `{s}`")))?;
    let p = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| config_error(format!("orders: `{t}`: {e}")))
    };
    Ok(p(a)?..=p(b)?)
}

pub fn accuracy(source: &Source, tuning: &Tuning, orders: Option<&str>) -> Result<()> {
    let st = Settings::new(source, tuning)?;
    let fx = st.fixture()?;
    let sys = st.system(fx.as_ref())?;
    let data = st.dataset(fx.as_ref())?;
    let opts = st.embed_options(fx.as_ref())?;
    let range = match orders {
        Some(o) => parse_orders(o)?,
        // Every order up to the number of active rows.
        None => {
            let n = affine_lpv::build_series(&sys, &data)
                .and_then(|series| affine_lpv::Normalizer::fit(series.data(), opts.eps_sigma, opts.std_convention))
                .map_err(|e| e.at("fit_normalizer"))?
                .n_active();
            1..=n.min(data.len())
        }
    };
    let reports = accuracy_sweep(&sys, &data, range, &opts)?;
    emit(&sweep_table(&reports))
}

fn sweep_table(reports: &[AccuracyReport]) -> String {
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
    let mut s = String::from("order  eta_frobenius  eta_sum  eta_sqsum  captured_energy\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{}  {:.6}  {}  {}  {}",
            r.n_rho,
            r.eta_frobenius,
            opt(r.eta_sum),
            opt(r.eta_sqsum),
            opt(r.captured_energy_ratio)
        );
    }
    s
}

pub fn compare(source: &Source, tuning: &Tuning, out: Option<&Path>) -> Result<()> {
    let st = Settings::new(source, tuning)?;
    let fx = st.fixture()?;
    let sys = st.system(fx.as_ref())?;
    let data = st.dataset(fx.as_ref())?;
    let opts = st.embed_options(fx.as_ref())?;
    let c = affine_lpv::pipeline::compare(&sys, &data, &opts)?;
    let (p, b) = (&c.proposed.report, &c.baseline.report);

    let mut s = String::new();
    let _ = writeln!(s, "order = {}", p.n_rho);
    let _ = writeln!(s, "method    eta_frobenius  region_volume");
    let _ = writeln!(s, "proposed  {:.6}  {:.6}", p.eta_frobenius, c.proposed.model.region().volume);
    let _ = writeln!(s, "baseline  {:.6}  {:.6}", b.eta_frobenius, c.baseline.model.region().volume);
    let _ = writeln!(s, "ratio = {:.6}", b.eta_frobenius / p.eta_frobenius);
    if c.baseline.rank_deficient {
        let _ = writeln!(s, "note = baseline regressor was rank deficient; minimum-norm solution used");
    }
    if let Some(dir) = out_path(out, Some(&st)) {
        std::fs::create_dir_all(&dir).map_err(|e| config_error(format!("{}: {e}", dir.display())))?;
        for (name, m) in [("proposed.json", &c.proposed.model), ("baseline.json", &c.baseline.model)] {
            m.save(dir.join(name)).map_err(|e| e.at("save_model"))?;
        }
        let _ = writeln!(s, "models = {}", dir.display());
    }
    emit(&s)
}

pub struct SimArgs {
    pub model: PathBuf,
    pub x0: String,
    pub input: Option<String>,
    pub exogenous: Option<String>,
    pub gain: Option<String>,
    pub step: f64,
    pub steps: usize,
    pub out: Option<PathBuf>,
}

fn spec_text(s: &str) -> Result<String> {
    match s.strip_prefix('@') {
        Some(p) => read(Path::new(p)),
        None => Ok(s.to_string()),
    }
}

pub fn simulate(source: &Source, args: &SimArgs) -> Result<()> {
    let st = Settings::new(source, &Tuning::default())?;
    let fx = st.fixture()?;
    let sys = st.system(fx.as_ref())?;
    let model = AffineLpvModel::load(&args.model).map_err(|e| e.at("load_model"))?;
    if model.provenance().source_digest != sys.digest() {
        log::warn!("model was built from a different system description");
    }
    let dims = sys.dims();
    let x0 = DVector::from_vec(parse_list("x0", &args.x0)?);
    if x0.len() != dims.nx {
        return Err(config_error(format!("x0 has {} entries, system has {} states", x0.len(), dims.nx)));
    }
    if !(args.step > 0.0 && args.step.is_finite()) || args.steps == 0 {
        return Err(config_error("step must be positive and steps at least 1"));
    }
    let input = match &args.input {
        Some(t) => InputSignal::Generated(parse_generator_spec(&spec_text(t)?).map_err(|e| e.at("input"))?),
        None => InputSignal::Zero,
    };
    let mut opts = SimOptions::new(args.step, args.steps);
    opts.exogenous = match (&args.exogenous, &fx) {
        (Some(t), _) => parse_generator_spec(&spec_text(t)?).map_err(|e| e.at("exogenous"))?,
        (None, Some(f)) => f.trajectories.clone(),
        (None, None) => Vec::new(),
    };
    if let Some(g) = &args.gain {
        let v = parse_list("gain", g)?;
        if v.len() != dims.nu * dims.nx {
            return Err(config_error(format!("gain needs {} x {} entries, got {}", dims.nu, dims.nx, v.len())));
        }
        opts.feedback = Feedback::Constant(DMatrix::from_row_slice(dims.nu, dims.nx, &v));
    }

    let nl = simulate_nl(&sys, &x0, &input, &opts).map_err(|e| e.at("simulate_nl"))?;
    let lpv = simulate_lpv(&model, &sys, &x0, &input, &opts).map_err(|e| e.at("simulate_lpv"))?;
    let cmp = compare_runs(&nl, &lpv).map_err(|e| e.at("compare_runs"))?;

    let mut s = rmse_table(&cmp);
    if !lpv.warnings.is_empty() {
        let _ = writeln!(s, "outside_region_steps = {}", lpv.warnings.len());
    }
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| config_error(format!("{}: {e}", dir.display())))?;
        nl.save_csv(dir.join("nl.csv")).map_err(|e| e.at("write_csv"))?;
        lpv.save_csv(dir.join("lpv.csv")).map_err(|e| e.at("write_csv"))?;
        let _ = writeln!(s, "trajectories = {}", dir.display());
    }
    emit(&s)
}

fn rmse_table(c: &RunComparison) -> String {
    let mut s = String::from("signal  rmse\n");
    for (i, v) in c.state_rmse.iter().enumerate() {
        let _ = writeln!(s, "x{}  {v:.6e}", i + 1);
    }
    for (i, v) in c.output_rmse.iter().enumerate() {
        let _ = writeln!(s, "y{}  {v:.6e}", i + 1);
    }
    let _ = writeln!(s, "max  {:.6e}", c.max());
    s
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(config_error(format!("grid: expected `lo:hi:count`, got `{s}`")));
    };
    let lo: f64 = lo.trim().parse().map_err(|e| config_error(format!("grid: {e}")))?;
    let hi: f64 = hi.trim().parse().map_err(|e| config_error(format!("grid: {e}")))?;
    let n: usize = n.trim().parse().map_err(|e| config_error(format!("grid: {e}")))?;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 {
        return Err(config_error(format!("grid: need 0 < lo <= hi and count >= 1, got `{s}`")));
    }
    Ok(log_grid(lo, hi, n))
}

pub fn freqresp(model: &Path, thetas: &[String], grid: Option<&str>, out: Option<&Path>) -> Result<()> {
    let m = AffineLpvModel::load(model).map_err(|e| e.at("load_model"))?;
    let omegas = match grid {
        Some(g) => parse_grid(g)?,
        None => default_frequency_grid(),
    };
    let d = m.dims();
    let mut s = String::from("theta_index,omega");
    for o in 0..d.ny {
        for i in 0..d.nu {
            let _ = write!(s, ",mag_y{}_u{}", o + 1, i + 1);
        }
    }
    s.push_str(",outside_region,singular\n");
    for (ti, t) in thetas.iter().enumerate() {
        let theta = DVector::from_vec(parse_list("theta", t)?);
        if theta.len() != m.n_theta() {
            return Err(config_error(format!(
                "theta has {} entries, model has {} scheduling variables",
                theta.len(),
                m.n_theta()
            )));
        }
        let fr = m.frozen_frequency_response(&theta, &omegas).map_err(|e| e.at("frequency_response"))?;
        for (k, w) in fr.omegas.iter().enumerate() {
            let _ = write!(s, "{ti},{w:.10e}");
            for row in &fr.magnitude {
                for col in row {
                    let _ = write!(s, ",{:.10e}", col[k]);
                }
            }
            let _ = writeln!(s, ",{},{}", fr.outside_region as u8, fr.singular_at.contains(&k) as u8);
        }
    }
    match out {
        Some(p) => write_file(p, &s),
        None => emit(&s),
    }
}

pub fn region_debug(source: &Source, tuning: &Tuning, out: Option<&Path>) -> Result<()> {
    let st = Settings::new(source, tuning)?;
    let fx = st.fixture()?;
    let sys = st.system(fx.as_ref())?;
    let data = st.dataset(fx.as_ref())?;
    let opts = st.embed_options(fx.as_ref())?;
    let e = affine_lpv::embed(&sys, &data, &opts)?;
    let f = &e.region_fit;

    let mut s = String::new();
    let _ = writeln!(s, "strategy = {}", opts.region.name());
    let _ = writeln!(s, "order = {}", e.basis.n_rho());
    let _ = writeln!(s, "# reduced coordinates, axis-aligned bounds");
    s.push_str(&region_text(&f.axis_aligned));
    if let Some(b) = &f.oriented_box {
        let _ = writeln!(s, "# minimal oriented box");
        let _ = writeln!(s, "box_center = {}", fmt_vec(&b.center));
        let _ = writeln!(s, "box_half_extents = {}", fmt_vec(&b.half_extents));
        let _ = writeln!(s, "box_volume = {:.6}", b.volume());
        for (i, v) in b.vertices().iter().enumerate() {
            let _ = writeln!(s, "box_vertex{} = {}", i + 1, fmt_vec(v));
        }
    }
    if let Some(el) = &f.ellipsoid {
        let _ = writeln!(s, "# minimum-volume enclosing ellipsoid");
        let _ = writeln!(s, "ellipsoid_center = {}", fmt_vec(&el.center));
        let _ = writeln!(s, "ellipsoid_volume_factor = {:.6}", el.volume_factor());
    }
    if let Some(a) = &f.alignment {
        let _ = writeln!(s, "# alignment rotation (rows)");
        for r in 0..a.rotation.nrows() {
            let _ = writeln!(s, "rotation_row{} = {}", r + 1, fmt_vec(&a.rotation.row(r).transpose()));
        }
        if let Some(g) = a.closed_form_gap {
            let _ = writeln!(s, "closed_form_gap = {g:.3e}");
        }
    }
    let _ = writeln!(s, "# scheduling region");
    s.push_str(&region_text(&f.region));

    if let Some(p) = out_path(out, Some(&st)) {
        let theta = f.region.transform_all(&e.rho);
        let d = e.rho.nrows();
        let mut csv = String::from("t");
        for i in 0..d {
            let _ = write!(csv, ",rho{}", i + 1);
        }
        for i in 0..d {
            let _ = write!(csv, ",theta{}", i + 1);
        }
        csv.push('\n');
        for k in 0..e.rho.ncols() {
            let _ = write!(csv, "{:.10e}", data.time(k));
            for v in e.rho.column(k).iter().chain(theta.column(k).iter()) {
                let _ = write!(csv, ",{v:.10e}");
            }
            csv.push('\n');
        }
        write_file(&p, &csv)?;
        let _ = writeln!(s, "points = {}", p.display());
    }
    emit(&s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_ranges() {
        assert_eq!(parse_orders("1..4").unwrap(), 1..=4);
        assert_eq!(parse_orders("2..=3").unwrap(), 2..=3);
        assert!(parse_orders("3").is_err());
    }

    #[test]
    fn grids() {
        let g = parse_grid("0.1:10:3").unwrap();
        assert_eq!(g.len(), 3);
        assert!((g[1] - 1.0).abs() < 1e-12);
        assert!(parse_grid("0:1:3").is_err());
        assert!(parse_grid("1:2").is_err());
    }
}
