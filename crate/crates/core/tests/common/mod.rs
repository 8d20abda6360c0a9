#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, ChildStdout, Command, Stdio};

use mimo_testbed::channel::ChannelMatrix;
use mimo_testbed::Complex64;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const BIN: &str = env!("CARGO_BIN_EXE_mimo-testbed");

pub fn to_nalgebra(h: &ChannelMatrix) -> DMatrix<Complex64> {
    DMatrix::from_fn(h.rows(), h.cols(), |r, c| h.get(r, c))
}

/// Sum of log2(1 + rho * lambda_k / nt) over the eigenvalues of H H^H.
pub fn eigen_capacity(h: &ChannelMatrix, rho: f64) -> f64 {
    let a = to_nalgebra(h);
    let gram = &a * a.adjoint();
    let nt = h.cols() as f64;
    gram.symmetric_eigenvalues()
        .iter()
        .map(|&l| (1.0 + rho * l.max(0.0) / nt).log2())
        .sum()
}

/// Matrix with i.i.d. entries uniform on the square [-1, 1]^2, drawn from a
/// generator unrelated to the crate's own.
pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> ChannelMatrix {
    let data = (0..rows * cols)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    ChannelMatrix::from_row_major(rows, cols, data).unwrap()
}

pub fn test_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Unitary matrix from the QR factorisation of a random square matrix.
pub fn random_unitary(n: usize, rng: &mut ChaCha20Rng) -> ChannelMatrix {
    let q = to_nalgebra(&random_matrix(n, n, rng)).qr().q();
    ChannelMatrix::from_fn(n, n, |r, c| q[(r, c)]).unwrap()
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// A running `emulate-unit` process and the address it listens on.
pub struct UnitProcess {
    pub child: Child,
    pub addr: String,
    stdout: BufReader<ChildStdout>,
}

impl UnitProcess {
    pub fn spawn(extra: &[&str]) -> Self {
        let mut child = Command::new(BIN)
            .args(["emulate-unit", "--listen", "127.0.0.1:0"])
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .expect("spawn unit");
        let mut stdout = BufReader::new(child.stdout.take().unwrap());
        let mut line = String::new();
        stdout.read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .expect("unit banner")
            .to_owned();
        Self {
            child,
            addr,
            stdout,
        }
    }

    /// Waits for exit; returns success and remaining stdout.
    pub fn finish(mut self) -> (bool, String) {
        let mut rest = String::new();
        let _ = std::io::Read::read_to_string(&mut self.stdout, &mut rest);
        let status = self.child.wait().unwrap();
        (status.success(), rest)
    }
}

pub fn run_cli(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run cli")
}

pub fn read_bytes(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}
