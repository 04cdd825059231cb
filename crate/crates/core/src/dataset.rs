//! Training data container: inputs, fidelities, and observed responses.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A set of `n` simulator runs, each pairing an input `x` in `[0, 1]^p` and
/// a fidelity vector `t` in `(0, 1]^q` with the scalar response `y`.
///
/// Fidelities are strictly positive: `t = 0` denotes the exact solution,
/// which the simulator cannot produce, so it never appears as training data.
/// Rows with identical `(x, t)` are rejected because the emulator treats runs
/// as deterministic and noise-free, making duplicated rows a guaranteed
/// singular covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    p: usize,
    q: usize,
    /// Row-major `n x p`.
    inputs: Vec<f64>,
    /// Row-major `n x q`.
    fidelities: Vec<f64>,
    outputs: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from row-major input (`n x p`) and fidelity (`n x q`)
    /// blocks, validating every domain contract.
    pub fn new(p: usize, q: usize, inputs: Vec<f64>, fidelities: Vec<f64>, outputs: Vec<f64>) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::InvalidData("p and q must be positive".into()));
        }
        let n = outputs.len();
        if n == 0 {
            return Err(Error::InvalidData("dataset must contain at least one run".into()));
        }
        if inputs.len() != n * p {
            return Err(Error::DimensionMismatch(format!(
                "inputs has {} values, expected n*p = {}*{}",
                inputs.len(),
                n,
                p
            )));
        }
        if fidelities.len() != n * q {
            return Err(Error::DimensionMismatch(format!(
                "fidelities has {} values, expected n*q = {}*{}",
                fidelities.len(),
                n,
                q
            )));
        }
        for (idx, &v) in inputs.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidData(format!(
                    "input coordinate {} of run {} is {v}, outside [0, 1]",
                    idx % p,
                    idx / p
                )));
            }
        }
        for (idx, &v) in fidelities.iter().enumerate() {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidData(format!(
                    "fidelity coordinate {} of run {} is {v}, outside (0, 1]",
                    idx % q,
                    idx / q
                )));
            }
        }
        if let Some(&bad) = outputs.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite response {bad}")));
        }
        let data = Self { n, p, q, inputs, fidelities, outputs };
        for i in 0..n {
            for j in (i + 1)..n {
                if data.x(i) == data.x(j) && data.t(i) == data.t(j) {
                    return Err(Error::InvalidData(format!(
                        "runs {i} and {j} share the same (x, t); duplicate rows make the covariance singular"
                    )));
                }
            }
        }
        Ok(data)
    }

    /// Builds a dataset without the domain checks of [`Dataset::new`].
    ///
    /// Shapes must still be consistent (panics otherwise). Intended for
    /// exercising degenerate configurations -- e.g. demonstrating that
    /// duplicated rows defeat factorization -- that `new` rejects up front.
    pub fn new_unchecked(p: usize, q: usize, inputs: Vec<f64>, fidelities: Vec<f64>, outputs: Vec<f64>) -> Self {
        let n = outputs.len();
        assert_eq!(inputs.len(), n * p, "inputs must be n*p values");
        assert_eq!(fidelities.len(), n * q, "fidelities must be n*q values");
        Self { n, p, q, inputs, fidelities, outputs }
    }

    /// Number of runs.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Input dimension.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of fidelity parameters.
    pub fn q(&self) -> usize {
        self.q
    }

    /// Input vector of run `i`.
    pub fn x(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.p..(i + 1) * self.p]
    }

    /// Fidelity vector of run `i`.
    pub fn t(&self, i: usize) -> &[f64] {
        &self.fidelities[i * self.q..(i + 1) * self.q]
    }

    /// All responses, in run order.
    pub fn y(&self) -> &[f64] {
        &self.outputs
    }

    /// Reads a dataset from CSV with header `x1,...,xp,t1,...,tq,y`.
    ///
    /// The column counts `p` and `q` are inferred from the header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let (p, q) = parse_header(&headers)?;
        let mut inputs = Vec::new();
        let mut fidelities = Vec::new();
        let mut outputs = Vec::new();
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != p + q + 1 {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {}",
                    row_idx + 1,
                    record.len(),
                    p + q + 1
                )));
            }
            let mut fields = record.iter().map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: unparseable value {f:?}", row_idx + 1)))
            });
            for _ in 0..p {
                inputs.push(fields.next().unwrap()?);
            }
            for _ in 0..q {
                fidelities.push(fields.next().unwrap()?);
            }
            outputs.push(fields.next().unwrap()?);
        }
        Self::new(p, q, inputs, fidelities, outputs)
    }

    /// Reads a dataset from a CSV file. See [`Dataset::from_csv_reader`].
    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    /// Writes the dataset as CSV with header `x1,...,xp,t1,...,tq,y`.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = Vec::with_capacity(self.p + self.q + 1);
        for s in 1..=self.p {
            header.push(format!("x{s}"));
        }
        for r in 1..=self.q {
            header.push(format!("t{r}"));
        }
        header.push("y".to_string());
        wtr.write_record(&header)?;
        for i in 0..self.n {
            let mut row = Vec::with_capacity(self.p + self.q + 1);
            for &v in self.x(i) {
                row.push(format_f64(v));
            }
            for &v in self.t(i) {
                row.push(format_f64(v));
            }
            row.push(format_f64(self.outputs[i]));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Writes the dataset to a CSV file. See [`Dataset::to_csv_writer`].
    pub fn to_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.to_csv_writer(std::fs::File::create(path)?)
    }
}

/// Full-precision decimal formatting that round-trips every finite f64.
pub(crate) fn format_f64(v: f64) -> String {
    let mut s = format!("{v}");
    // `{}` on f64 prints the shortest string that parses back exactly, but
    // prints integers without a decimal point; keep CSV cells typed as reals.
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

fn parse_header(headers: &[String]) -> Result<(usize, usize)> {
    let p = headers.iter().take_while(|h| h.starts_with('x')).count();
    let q = headers[p..].iter().take_while(|h| h.starts_with('t')).count();
    if p == 0 || q == 0 || p + q + 1 != headers.len() || headers[p + q] != "y" {
        return Err(Error::Parse(format!(
            "expected header x1,...,xp,t1,...,tq,y; found {:?}",
            headers.join(",")
        )));
    }
    for (s, h) in headers[..p].iter().enumerate() {
        if *h != format!("x{}", s + 1) {
            return Err(Error::Parse(format!("input column {} is named {h:?}, expected x{}", s + 1, s + 1)));
        }
    }
    for (r, h) in headers[p..p + q].iter().enumerate() {
        if *h != format!("t{}", r + 1) {
            return Err(Error::Parse(format!(
                "fidelity column {} is named {h:?}, expected t{}",
                r + 1,
                r + 1
            )));
        }
    }
    Ok((p, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        Dataset::new(
            2,
            1,
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            vec![0.25, 0.5, 1.0],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap()
    }

    #[test]
    fn accessors_return_rows() {
        let d = small();
        assert_eq!((d.n(), d.p(), d.q()), (3, 2, 1));
        assert_eq!(d.x(1), &[0.3, 0.4]);
        assert_eq!(d.t(2), &[1.0]);
        assert_eq!(d.y(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_out_of_range_input() {
        let err = Dataset::new(1, 1, vec![1.5], vec![0.5], vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)), "{err}");
    }

    #[test]
    fn rejects_zero_fidelity() {
        let err = Dataset::new(1, 1, vec![0.5], vec![0.0], vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)), "{err}");
    }

    #[test]
    fn rejects_duplicate_rows() {
        let err = Dataset::new(1, 1, vec![0.5, 0.5], vec![0.25, 0.25], vec![1.0, 2.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("runs 0 and 1"), "{msg}");
    }

    #[test]
    fn allows_same_x_at_different_fidelity() {
        let d = Dataset::new(1, 1, vec![0.5, 0.5], vec![0.25, 0.5], vec![1.0, 2.0]).unwrap();
        assert_eq!(d.n(), 2);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = Dataset::new(
            2,
            2,
            vec![0.1, 1.0 / 3.0, 0.9, 0.123456789123456789],
            vec![0.2, 0.4, 0.25, 1.0],
            vec![-1.5, std::f64::consts::PI],
        )
        .unwrap();
        let mut buf = Vec::new();
        d.to_csv_writer(&mut buf).unwrap();
        let back = Dataset::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn csv_header_is_validated() {
        let bad = "x1,z1,y\n0.1,0.2,3.0\n";
        let err = Dataset::from_csv_reader(bad.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
    }
}
