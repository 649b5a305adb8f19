//! Ground truth controls and synthetic measurements.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{boundary_data, GridFunction, GridSpec};
use crate::harness::config::Experiment;
use crate::linalg::norm;
use crate::pde::{solve_exact, Assembler, ControlParam, MeasurementSet, PdeFamily};

/// Data-generation phantom for the diffusion field: background 1.0, a disk
/// of value 2.0 (radius 0.2, centre (0.35, 0.65)) and a rectangle of value
/// 0.5 over [0.55, 0.85] × [0.15, 0.4].
pub fn phantom(grid: &GridSpec) -> GridFunction {
    GridFunction::from_fn(grid, |x, y| {
        let (dx, dy) = (x - 0.35, y - 0.65);
        if dx * dx + dy * dy <= 0.2 * 0.2 {
            2.0
        } else if (0.55..=0.85).contains(&x) && (0.15..=0.4).contains(&y) {
            0.5
        } else {
            1.0
        }
    })
}

/// `ĉ = 1` and, for the diffusion experiment, `â` = [`phantom`].
pub fn ground_truth(experiment: Experiment, grid: &GridSpec) -> ControlParam {
    match experiment {
        Experiment::Exp1 => ControlParam::scalar(1.0),
        Experiment::Exp2 => ControlParam::diffusion(phantom(grid), 1.0),
    }
}

/// Solves the `m` PDEs at `x_hat` and adds i.i.d. Gaussian noise with
/// per-entry standard deviation `noise · ‖û_i‖ / √(node count)`, so the
/// noise vector has norm ≈ `noise · ‖û_i‖`. A zero `noise` returns the exact
/// solutions.
pub fn generate_data(
    family: PdeFamily,
    grid: &GridSpec,
    x_hat: &ControlParam,
    m: usize,
    seed: u64,
    noise: f64,
) -> Result<MeasurementSet> {
    if x_hat.components().any(|v| !(v > 0.0)) {
        return Err(Error::Infeasible);
    }
    let boundary = (1..=m).map(|i| boundary_data(grid, i)).collect();
    let asm = Assembler::new(family, *grid, boundary)?;
    let u_hat = solve_exact(&asm.assemble(x_hat)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (grid.node_count() as f64).sqrt();
    let mut noise_std = Vec::with_capacity(m);
    let mut z = Vec::with_capacity(m);
    for u in u_hat.fields {
        let std = noise * norm(&u.values) / scale;
        let mut values = u.values;
        if std > 0.0 {
            let dist = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
            for v in values.iter_mut() {
                *v += dist.sample(&mut rng);
            }
        }
        noise_std.push(std);
        z.push(GridFunction { values });
    }
    Ok(MeasurementSet { z, noise_std, seed })
}

/// Writes `node,x,y,z1..zm` rows.
pub fn write_measurements(path: &Path, grid: &GridSpec, data: &MeasurementSet) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "node,x,y")?;
    for i in 1..=data.z.len() {
        write!(out, ",z{i}")?;
    }
    writeln!(out)?;
    for p in 0..grid.node_count() {
        let (x, y) = grid.coords(p);
        write!(out, "{p},{x},{y}")?;
        for z in &data.z {
            write!(out, ",{}", z.values[p])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads measurements written by [`write_measurements`].
pub fn read_measurements(path: &Path, grid: &GridSpec, seed: u64) -> Result<MeasurementSet> {
    let text = std::fs::read_to_string(path)?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err("empty file".into()))?;
    let m = header.split(',').count().saturating_sub(3);
    let mut z = vec![vec![0.0; grid.node_count()]; m];
    let mut rows = 0;
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != m + 3 {
            return Err(parse_err(format!("row {rows} has {} fields", fields.len())));
        }
        let p: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("bad node index in row {rows}")))?;
        if p >= grid.node_count() {
            return Err(parse_err(format!("node {p} outside the grid")));
        }
        for (i, f) in fields[3..].iter().enumerate() {
            z[i][p] = f.parse().map_err(|_| parse_err(format!("bad value {f:?}")))?;
        }
        rows += 1;
    }
    if rows != grid.node_count() {
        return Err(parse_err(format!("expected {} rows, found {rows}", grid.node_count())));
    }
    Ok(MeasurementSet {
        z: z.into_iter().map(|values| GridFunction { values }).collect(),
        noise_std: vec![f64::NAN; m],
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantom_regions() {
        let g = GridSpec::new(21).unwrap();
        let a = phantom(&g);
        let at = |x: f64, y: f64| {
            let col = (x / g.h()).round() as usize;
            let row = (y / g.h()).round() as usize;
            a.values[g.node(row, col)]
        };
        assert_eq!(at(0.35, 0.65), 2.0);
        assert_eq!(at(0.7, 0.25), 0.5);
        assert_eq!(at(0.05, 0.05), 1.0);
        assert!(a.values.iter().all(|v| [0.5, 1.0, 2.0].contains(v)));
    }

    #[test]
    fn noise_free_data_is_the_exact_solve() {
        let g = GridSpec::new(9).unwrap();
        let x = ControlParam::scalar(1.0);
        let d = generate_data(PdeFamily::ScalarReaction, &g, &x, 4, 3, 0.0).unwrap();
        let boundary = (1..=4).map(|i| boundary_data(&g, i)).collect();
        let asm = Assembler::new(PdeFamily::ScalarReaction, g, boundary).unwrap();
        let u = solve_exact(&asm.assemble(&x).unwrap()).unwrap();
        assert_eq!(d.z, u.fields);
        assert!(d.noise_std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let g = GridSpec::new(11).unwrap();
        let x = ground_truth(Experiment::Exp2, &g);
        let a = generate_data(PdeFamily::DiffusionReaction, &g, &x, 4, 17, 0.01).unwrap();
        let b = generate_data(PdeFamily::DiffusionReaction, &g, &x, 4, 17, 0.01).unwrap();
        assert_eq!(a, b);
        let c = generate_data(PdeFamily::DiffusionReaction, &g, &x, 4, 18, 0.01).unwrap();
        assert_ne!(a.z, c.z);
    }

    #[test]
    fn relative_noise_level_on_coarse_grid() {
        let g = GridSpec::new(51).unwrap();
        let x = ControlParam::scalar(1.0);
        let clean = generate_data(PdeFamily::ScalarReaction, &g, &x, 6, 5, 0.0).unwrap();
        for seed in 0..5 {
            let noisy = generate_data(PdeFamily::ScalarReaction, &g, &x, 6, seed, 0.01).unwrap();
            for (z, u) in noisy.z.iter().zip(&clean.z) {
                let diff: Vec<f64> = z.values.iter().zip(&u.values).map(|(a, b)| a - b).collect();
                let rel = norm(&diff) / norm(&u.values);
                assert!((0.005..=0.02).contains(&rel), "{rel}");
            }
        }
    }

    #[test]
    fn measurements_file_round_trip() {
        let g = GridSpec::new(5).unwrap();
        let d = generate_data(PdeFamily::ScalarReaction, &g, &ControlParam::scalar(1.0), 2, 9, 0.01).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.csv");
        write_measurements(&path, &g, &d).unwrap();
        let back = read_measurements(&path, &g, 9).unwrap();
        assert_eq!(back.z, d.z);
    }
}
