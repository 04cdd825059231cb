//! Fidelity-kernel lattice evaluation for plotting.
//!
//! Emits `(t1, t2, k)` triples of a single-fidelity-parameter kernel over a
//! uniform lattice on `[0, 1]^2` — the data behind surface plots of the two
//! kernel options. Rendering is out of scope; any plotting tool can consume
//! the CSV.

use std::io::Write;
use std::str::FromStr;

use anyhow::bail;

use mfgp::kernels::{kernel1_t, kernel2_t};

/// Which fidelity kernel to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelChoice {
    /// Four-term squared-exponential difference kernel.
    Kernel1,
    /// Bracketed min-sum kernel.
    Kernel2,
}

impl KernelChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelChoice::Kernel1 => "kernel1",
            KernelChoice::Kernel2 => "kernel2",
        }
    }
}

impl FromStr for KernelChoice {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "kernel1" => Ok(KernelChoice::Kernel1),
            "kernel2" => Ok(KernelChoice::Kernel2),
            other => bail!("unknown kernel {other:?}; expected kernel1 or kernel2"),
        }
    }
}

/// Evaluates the chosen kernel with one fidelity parameter over a
/// `resolution x resolution` lattice spanning `[0, 1]^2` endpoints
/// included. `l` and `l_r` only affect `kernel2`.
pub fn kernel_grid(
    kernel: KernelChoice,
    theta: f64,
    l: f64,
    l_r: f64,
    resolution: usize,
) -> anyhow::Result<Vec<(f64, f64, f64)>> {
    if resolution < 2 {
        bail!("resolution must be at least 2, got {resolution}");
    }
    let node = |i: usize| i as f64 / (resolution - 1) as f64;
    let mut grid = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let (t1, t2) = (node(i), node(j));
            let k = match kernel {
                KernelChoice::Kernel1 => kernel1_t(&[t1], &[t2], &[theta])?,
                KernelChoice::Kernel2 => kernel2_t(&[t1], &[t2], &[theta], &[l_r], l)?,
            };
            grid.push((t1, t2, k));
        }
    }
    Ok(grid)
}

/// Writes the lattice as `t1,t2,k` CSV.
pub fn write_grid_csv<W: Write>(grid: &[(f64, f64, f64)], mut w: W) -> anyhow::Result<()> {
    writeln!(w, "t1,t2,k")?;
    for (t1, t2, k) in grid {
        writeln!(w, "{t1},{t2},{k}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn known_corner_values() {
        // Both kernels vanish when either argument is the exact limit 0.
        let g1 = kernel_grid(KernelChoice::Kernel1, 1.0, 2.0, 2.0, 3).unwrap();
        assert_eq!(g1.len(), 9);
        assert_eq!(g1[0], (0.0, 0.0, 0.0));
        for (t1, t2, k) in &g1 {
            if *t1 == 0.0 || *t2 == 0.0 {
                assert_abs_diff_eq!(*k, 0.0, epsilon = 1e-15);
            }
        }

        // kernel2 with theta = 1, l = l_1 = 2 at (1, 1): (1 * min(1,1)^2)^2 = 1.
        let g2 = kernel_grid(KernelChoice::Kernel2, 1.0, 2.0, 2.0, 3).unwrap();
        let corner = g2.iter().find(|(a, b, _)| *a == 1.0 && *b == 1.0).unwrap();
        assert_abs_diff_eq!(corner.2, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn csv_shape_and_header() {
        let grid = kernel_grid(KernelChoice::Kernel2, 0.5, 2.0, 2.0, 2).unwrap();
        let mut buf = Vec::new();
        write_grid_csv(&grid, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t1,t2,k");
        assert_eq!(lines.len(), 1 + 4);
    }

    #[test]
    fn bad_arguments_are_rejected() {
        assert!(kernel_grid(KernelChoice::Kernel1, 1.0, 2.0, 2.0, 1).is_err());
        assert!("kernel3".parse::<KernelChoice>().is_err());
    }
}
