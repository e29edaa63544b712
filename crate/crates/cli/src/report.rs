//! Fit report laid out like the parameter table: inverse rates as
//! lifetimes in ns, T2* in µs, θ in degrees.

use std::fmt::Write;

use zenosim_core::{FitResult, ParamName};

struct Row {
    label: &'static str,
    value: f64,
    sigma: Option<f64>,
    unit: &'static str,
}

fn row(result: &FitResult, name: ParamName) -> Row {
    let v = result.value_of(name);
    let s = result.confidence_of(name);
    // Inverse rates: σ(1/k) = σ(k)/k².
    let inverse = |label, scale| Row { label, value: scale / v, sigma: s.map(|s| scale * s / (v * v)), unit: "ns" };
    match name {
        ParamName::RabiOmega => Row {
            label: "2π/Ω",
            value: 2e9 * std::f64::consts::PI / v,
            sigma: s.map(|s| 2e9 * std::f64::consts::PI * s / (v * v)),
            unit: "ns",
        },
        ParamName::T2Star => Row { label: "T2*", value: v * 1e6, sigma: s.map(|s| s * 1e6), unit: "µs" },
        ParamName::KExc => inverse("1/k_exc", 1e9),
        ParamName::KRad => inverse("1/k_rad", 1e9),
        ParamName::KDesh => inverse("1/k_desh", 1e9),
        ParamName::KS => inverse("1/k_S", 1e9),
        ParamName::Theta => Row { label: "θ", value: v.to_degrees(), sigma: s.map(f64::to_degrees), unit: "°" },
        ParamName::IBg => Row { label: "I_bg", value: v, sigma: s, unit: "" },
        ParamName::EtaPol => Row { label: "η_pol", value: v, sigma: s, unit: "" },
    }
}

fn format_row(r: &Row) -> String {
    let body = match r.sigma {
        Some(s) => format!("{:.4} ± {:.4}", r.value, s),
        None => format!("{:.4} (fixed)", r.value),
    };
    match (r.unit, r.sigma) {
        ("", _) => body,
        ("°", Some(_)) => format!("({body})°"),
        ("°", None) => format!("{body}°"),
        (u, Some(_)) => format!("({body}) {u}"),
        (u, None) => format!("{body} {u}"),
    }
}

pub fn fit_report(result: &FitResult, n_observations: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "parameter  value (±1σ)");
    for name in ParamName::ALL {
        let r = row(result, name);
        let _ = writeln!(out, "{:<9}  {}", r.label, format_row(&r));
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "observations   {n_observations}");
    let _ = writeln!(out, "residual norm  {:.6e}", result.residual_norm);
    let _ = writeln!(out, "iterations     {}", result.iterations);
    let _ = writeln!(out, "converged      {}", result.converged);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifetime_rows() {
        let r = Row { label: "1/k_exc", value: 30.5, sigma: Some(1.25), unit: "ns" };
        assert_eq!(format_row(&r), "(30.5000 ± 1.2500) ns");
        let r = Row { label: "θ", value: 12.4, sigma: None, unit: "°" };
        assert_eq!(format_row(&r), "12.4000 (fixed)°");
        let r = Row { label: "I_bg", value: 0.2, sigma: Some(0.01), unit: "" };
        assert_eq!(format_row(&r), "0.2000 ± 0.0100");
    }
}
