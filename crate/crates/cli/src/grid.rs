use crate::error::{CliError, CliResult};

const STOP_SLACK: f64 = 1e-9;

/// Parses `start:stop:step` (stop included within 1e-9) or a comma list.
pub fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let bad = |why: &str| CliError::usage(format!("invalid grid {text:?}: {why}"));
    let number = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));

    let values = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(bad("expected start:stop:step"));
        };
        let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
        if !(step > 0.0) || !(stop >= start) {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let mut out = Vec::new();
        for i in 0.. {
            let v = start + i as f64 * step;
            if v > stop + STOP_SLACK {
                break;
            }
            out.push(v);
        }
        out
    } else {
        text.split(',').map(number).collect::<CliResult<Vec<_>>>()?
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite value"));
    }
    Ok(values)
}
