//! Text and CSV renderings of repository indices and model tables.

use std::io::Write;

use crate::glm::{significance_marker, ModelFit};

/// Removes the sign from values that round to zero.
fn unsign_zero(s: String) -> String {
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
        _ => s,
    }
}

/// Repository or contributor index to three decimals.
pub fn format_index(value: f64) -> String {
    unsign_zero(format!("{value:.3}"))
}

fn format_2dp(value: f64) -> String {
    unsign_zero(format!("{value:.2}"))
}

/// `beta(SE)` with significance stars, e.g. `1.03(0.02)***`.
pub fn format_coefficient(beta: f64, se: f64, p: f64) -> String {
    format!("{}({}){}", format_2dp(beta), format_2dp(se), significance_marker(p))
}

/// Odds ratio with three significant figures above 10 and two decimals below.
pub fn format_odds_ratio(or: f64) -> String {
    if !or.is_finite() {
        return "inf".to_string();
    }
    let s = if or < 9.995 {
        format!("{or:.2}")
    } else if or < 99.95 {
        format!("{or:.1}")
    } else {
        format!("{or:.0}")
    };
    unsign_zero(s)
}

/// Information criteria, log-likelihood and deviance as whole numbers.
pub fn format_criterion(value: f64) -> String {
    unsign_zero(format!("{value:.0}"))
}

/// Index listing: repository and index, highest first.
pub fn render_index_table(rows: &[(&str, f64)]) -> String {
    let mut sorted: Vec<(&str, f64)> = rows.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let header = "owner/repository name";
    let width = sorted.iter().map(|(r, _)| r.len()).chain([header.len()]).max().unwrap_or(0);
    let mut out = format!("{header:<width$}  PS Index\n");
    for (repo, index) in sorted {
        out.push_str(&format!("{repo:<width$}  {:>8}\n", format_index(index)));
    }
    out
}

/// One column group of a model table: a fitted model or the reason it failed.
#[derive(Debug, Clone, Copy)]
pub enum ModelColumn<'a> {
    Fitted(&'a ModelFit),
    Failed(&'a str),
}

const CRITERIA: [&str; 5] = ["AIC", "BIC", "Log Likelihood", "Deviance", "Num. obs."];

/// Term order: terms of the widest model first, then any terms only the
/// others have, in order of appearance.
fn term_order(models: &[(String, ModelColumn)]) -> Vec<String> {
    let fits: Vec<&ModelFit> = models
        .iter()
        .filter_map(|(_, m)| match m {
            ModelColumn::Fitted(f) => Some(*f),
            ModelColumn::Failed(_) => None,
        })
        .collect();
    let Some(widest) = fits.iter().max_by_key(|f| f.num_params()) else {
        return Vec::new();
    };
    let mut terms = widest.column_names.clone();
    for fit in &fits {
        for name in &fit.column_names {
            if !terms.contains(name) {
                terms.push(name.clone());
            }
        }
    }
    terms
}

fn criterion(fit: &ModelFit, row: &str) -> String {
    match row {
        "AIC" => format_criterion(fit.aic),
        "BIC" => format_criterion(fit.bic),
        "Log Likelihood" => format_criterion(fit.log_likelihood),
        "Deviance" => format_criterion(fit.deviance),
        _ => fit.n_obs.to_string(),
    }
}

/// Cell grid shared by the text and CSV renderings.
fn model_grid(models: &[(String, ModelColumn)]) -> Vec<Vec<String>> {
    let mut grid = Vec::new();
    let mut header = vec![String::new()];
    for (name, _) in models {
        header.push(format!("{name} beta(SE)"));
        header.push(format!("{name} OR"));
    }
    grid.push(header);

    for term in term_order(models) {
        let mut row = vec![term.clone()];
        for (_, model) in models {
            match model {
                ModelColumn::Fitted(fit) => match fit.index_of(&term) {
                    Some(i) => {
                        row.push(format_coefficient(fit.coefficients[i], fit.std_errors[i], fit.p_values[i]));
                        row.push(format_odds_ratio(fit.odds_ratios[i]));
                    }
                    None => row.extend([String::new(), String::new()]),
                },
                ModelColumn::Failed(_) => row.extend([String::new(), String::new()]),
            }
        }
        grid.push(row);
    }
    for name in CRITERIA {
        let mut row = vec![name.to_string()];
        for (_, model) in models {
            match model {
                ModelColumn::Fitted(fit) => row.push(criterion(fit, name)),
                ModelColumn::Failed(_) => row.push(String::new()),
            }
            row.push(String::new());
        }
        grid.push(row);
    }
    if models.iter().any(|(_, m)| matches!(m, ModelColumn::Failed(_))) {
        let mut row = vec!["Status".to_string()];
        for (_, model) in models {
            row.push(match model {
                ModelColumn::Fitted(_) => "ok".to_string(),
                ModelColumn::Failed(reason) => format!("failed: {reason}"),
            });
            row.push(String::new());
        }
        grid.push(row);
    }
    grid
}

/// Model table as aligned text with a significance footnote.
pub fn render_models_table(models: &[(String, ModelColumn)]) -> String {
    let grid = model_grid(models);
    let ncols = grid.first().map_or(0, Vec::len);
    let widths: Vec<usize> =
        (0..ncols).map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &grid {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| if c == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out.push_str("*** p<0.001, ** p<0.01, * p<0.05\n");
    out
}

/// `models_table.csv`: the same grid as [`render_models_table`], first
/// header cell named `term`.
pub fn write_models_csv<W: Write>(models: &[(String, ModelColumn)], out: W) -> Result<(), csv::Error> {
    let mut grid = model_grid(models);
    grid[0][0] = "term".to_string();
    let mut w = csv::Writer::from_writer(out);
    for row in grid {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_rounding() {
        assert_eq!(format_index(2.0519), "2.052");
        assert_eq!(format_index(0.0), "0.000");
        assert_eq!(format_index(-0.0001), "0.000");
        assert_eq!(format_index(10.0), "10.000");
    }

    #[test]
    fn coefficient_cells() {
        assert_eq!(format_coefficient(1.03, 0.02, 0.0001), "1.03(0.02)***");
        assert_eq!(format_coefficient(0.05, 0.02, 0.005), "0.05(0.02)**");
        assert_eq!(format_coefficient(-4.96, 0.23, 1e-20), "-4.96(0.23)***");
        assert_eq!(format_coefficient(-0.001, 0.5, 0.9), "0.00(0.50)");
    }

    #[test]
    fn odds_ratio_precision() {
        assert_eq!(format_odds_ratio(2.8011), "2.80");
        assert_eq!(format_odds_ratio(0.0070), "0.01");
        assert_eq!(format_odds_ratio(8.6323), "8.63");
        assert_eq!(format_odds_ratio(10.804), "10.8");
        assert_eq!(format_odds_ratio(46.525), "46.5");
        assert_eq!(format_odds_ratio(123.4), "123");
    }

    #[test]
    fn index_table_is_descending() {
        let t = render_index_table(&[("a/b", 0.5), ("python/cpython", 2.0519), ("c/d", 0.5)]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[1].starts_with("python/cpython") && lines[1].ends_with("2.052"));
        assert!(lines[2].starts_with("a/b"));
        assert!(lines[3].starts_with("c/d"));
    }
}
