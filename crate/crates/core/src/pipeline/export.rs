use super::{MeanCurve, Periodogram};
use std::fmt::Display;
use std::io::Write;

fn cell(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// `condition,bin_start_ms,value,sem,n`, one row per bin.
pub fn write_curves_csv<'a, K, W>(curves: impl IntoIterator<Item = (K, &'a MeanCurve)>, sink: W) -> csv::Result<()>
where
    K: Display,
    W: Write,
{
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["condition", "bin_start_ms", "value", "sem", "n"])?;
    for (key, curve) in curves {
        let key = key.to_string();
        for k in 0..curve.len() {
            w.write_record([
                key.clone(),
                (k as i64 * curve.bin_ms).to_string(),
                cell(curve.values[k]),
                cell(curve.sem[k]),
                curve.n[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectrum_csv<W: Write>(p: &Periodogram, sink: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["frequency_hz", "magnitude"])?;
    for (f, m) in p.freqs_hz.iter().zip(&p.magnitude) {
        w.write_record([f.to_string(), m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_rows() {
        let c = MeanCurve { bin_ms: 100, values: vec![0.0, f64::NAN], sem: vec![0.001, f64::NAN], n: vec![4, 0] };
        let mut buf = Vec::new();
        write_curves_csv([("incongruent", &c)], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "condition,bin_start_ms,value,sem,n\nincongruent,0,0,0.001,4\nincongruent,100,,,0\n"
        );
    }
}
