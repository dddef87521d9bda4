use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use backflow_core::Complex64;
use serde::Serialize;

use crate::CliError;

/// `x` with 12 significant digits, `%g` style.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        trim_zeros(format!("{:.*}", (11 - exp) as usize, x))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_owned()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

pub fn complex(z: Complex64) -> String {
    let sign = if z.im < 0.0 { '-' } else { '+' };
    format!("{}{sign}{}i", num(z.re), num(z.im.abs()))
}

pub fn open(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| CliError::io(path, e))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, out: &mut dyn Write) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.header).map_err(CliError::csv)?;
        for row in &self.rows {
            w.write_record(row).map_err(CliError::csv)?;
        }
        w.flush().map_err(|e| CliError::io(Path::new("<output>"), e))?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::usage(e.to_string()))?;
    writeln!(out).map_err(|e| CliError::io(Path::new("<output>"), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(0.0), "0");
        assert_eq!(num(-0.0), "0");
        assert_eq!(num(1.0), "1");
        assert_eq!(num(-0.015730123456789), "-0.0157301234568");
        assert_eq!(num(123456.7890123456), "123456.789012");
        assert_eq!(num(1.5e-9), "1.5e-9");
        assert_eq!(num(2.0e15), "2e15");
        assert_eq!(num(0.99999999999999), "1");
    }

    #[test]
    fn complex_format() {
        assert_eq!(complex(Complex64::new(0.5, -2.0)), "0.5-2i");
        assert_eq!(complex(Complex64::new(0.684, 0.0)), "0.684+0i");
    }

    #[test]
    fn csv_uses_lf() {
        let mut t = Table::new(&["t", "J"]);
        t.push(vec![num(0.5), num(-1.0)]);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,J\n0.5,-1\n");
    }
}
