//! File exports: trajectory CSV, binary state snapshots and Bogoliubov
//! matrix blocks (little-endian f64).

use std::io::Write;
use std::path::Path;

use crate::bogoliubov::BogMatrix;
use crate::error::Result;
use crate::kernels::Cutoff;
use crate::meanfield::{MeanFieldState, Trajectory};
use crate::scalar::Scalar;

/// Trajectory CSV with the diagnostic columns.
pub fn write_trajectory_csv<S: Scalar>(path: &Path, traj: &Trajectory<S>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "t,norm_u,energy_theta,H3_norm_u,h52_norm_alpha")?;
    for i in 0..traj.times.len() {
        writeln!(
            f,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            traj.times[i].as_f64(),
            traj.norm_u[i].as_f64(),
            traj.energy_theta[i].as_f64(),
            traj.h3_norm_u[i].as_f64(),
            traj.h52_norm_alpha[i].as_f64(),
        )?;
    }
    Ok(())
}

fn push_f64(buf: &mut Vec<u8>, x: f64) {
    buf.extend_from_slice(&x.to_le_bytes());
}

/// Full-state binary snapshot: header `d, L, M, θ, Λ` then the raw complex
/// arrays, all little-endian 64-bit floats.
pub fn write_state_snapshot<S: Scalar>(
    path: &Path,
    state: &MeanFieldState<S>,
    theta: S,
    lambda: Cutoff<S>,
) -> Result<()> {
    let g = &state.u.grid;
    let mut buf = Vec::new();
    push_f64(&mut buf, g.d as f64);
    push_f64(&mut buf, g.l.as_f64());
    push_f64(&mut buf, g.m as f64);
    push_f64(&mut buf, theta.as_f64());
    push_f64(
        &mut buf,
        match lambda {
            Cutoff::GridMax => f64::INFINITY,
            Cutoff::Finite(l) => l.as_f64(),
        },
    );
    for v in state.u.values.iter().chain(state.alpha.values.iter()) {
        push_f64(&mut buf, v.re.as_f64());
        push_f64(&mut buf, v.im.as_f64());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Bogoliubov matrix blocks: header `n_b, n_a, Λ, θ, t` then `u` and `v`
/// row-major as interleaved re/im f64.
pub fn write_bog_matrix<S: Scalar>(
    path: &Path,
    bog: &BogMatrix<S>,
    n_b: usize,
    n_a: usize,
    lambda: Cutoff<S>,
    theta: S,
    t: S,
) -> Result<()> {
    let mut buf = Vec::new();
    push_f64(&mut buf, n_b as f64);
    push_f64(&mut buf, n_a as f64);
    push_f64(
        &mut buf,
        match lambda {
            Cutoff::GridMax => f64::INFINITY,
            Cutoff::Finite(l) => l.as_f64(),
        },
    );
    push_f64(&mut buf, theta.as_f64());
    push_f64(&mut buf, t.as_f64());
    let n = bog.n();
    for m in [&bog.u, &bog.v] {
        for r in 0..n {
            for c in 0..n {
                push_f64(&mut buf, m[(r, c)].re.as_f64());
                push_f64(&mut buf, m[(r, c)].im.as_f64());
            }
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}
