use std::f64::consts::PI;

/// Radians, either as a plain number or as a multiple of pi such as
/// `pi/4`, `3pi/4`, `-π/8` or `0.5*pi`.
pub fn parse(text: &str) -> Result<f64, String> {
    let s = text.trim().replace('π', "pi");
    let value = match s.split_once("pi") {
        None => s.parse::<f64>().map_err(|e| format!("'{text}': {e}"))?,
        Some((coef, rest)) => {
            let coef = coef.trim().trim_end_matches('*').trim();
            let c = match coef {
                "" | "+" => 1.0,
                "-" => -1.0,
                c => c.parse::<f64>().map_err(|e| format!("'{text}': {e}"))?,
            };
            let d = match rest.trim() {
                "" => 1.0,
                r => r
                    .strip_prefix('/')
                    .ok_or_else(|| format!("'{text}': expected '/' after pi"))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| format!("'{text}': {e}"))?,
            };
            c * PI / d
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("'{text}' is not a finite angle"))
    }
}
