//! Tidy CSV emission for downstream plotting.
//!
//! Each file holds exactly one kind of observation, one observation per
//! row, with a fixed documented header:
//!
//! - `se_vs_elements`: `elements_per_layer,layers,label,seed,sum_rate`,
//!   where `label` is the series name (`L=2`, `L=6`, ...).
//! - `pareto`: `omega,sum_rate,worst_target_power`.
//! - `beampattern`: `angle_deg,power,label`.
//! - `nmse_vs_T`: `slots,nmse,seed`.
//!
//! Floats are printed in shortest round-trip form, so a rerun of the same
//! scenario reproduces the file byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::CliError;

/// The plot families the runner knows how to lay out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    SeVsElements,
    Pareto,
    Beampattern,
    NmseVsT,
}

impl PlotKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlotKind::SeVsElements => "se_vs_elements",
            PlotKind::Pareto => "pareto",
            PlotKind::Beampattern => "beampattern",
            PlotKind::NmseVsT => "nmse_vs_T",
        }
    }

    fn header(&self) -> &'static str {
        match self {
            PlotKind::SeVsElements => "elements_per_layer,layers,label,seed,sum_rate",
            PlotKind::Pareto => "omega,sum_rate,worst_target_power",
            PlotKind::Beampattern => "angle_deg,power,label",
            PlotKind::NmseVsT => "slots,nmse,seed",
        }
    }
}

/// One observation, tagged with the plot family it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlotRecord {
    SeVsElements {
        elements_per_layer: usize,
        layers: usize,
        seed: u64,
        sum_rate: f64,
    },
    Pareto {
        omega: f64,
        sum_rate: f64,
        worst_target_power: f64,
    },
    Beampattern {
        angle_deg: f64,
        power: f64,
        label: String,
    },
    NmseVsT {
        slots: usize,
        nmse: f64,
        seed: u64,
    },
}

impl PlotRecord {
    pub fn kind(&self) -> PlotKind {
        match self {
            PlotRecord::SeVsElements { .. } => PlotKind::SeVsElements,
            PlotRecord::Pareto { .. } => PlotKind::Pareto,
            PlotRecord::Beampattern { .. } => PlotKind::Beampattern,
            PlotRecord::NmseVsT { .. } => PlotKind::NmseVsT,
        }
    }

    fn csv_row(&self) -> String {
        match self {
            PlotRecord::SeVsElements {
                elements_per_layer,
                layers,
                seed,
                sum_rate,
            } => format!("{elements_per_layer},{layers},L={layers},{seed},{sum_rate}"),
            PlotRecord::Pareto {
                omega,
                sum_rate,
                worst_target_power,
            } => format!("{omega},{sum_rate},{worst_target_power}"),
            PlotRecord::Beampattern {
                angle_deg,
                power,
                label,
            } => format!("{angle_deg},{power},{}", escape_csv(label)),
            PlotRecord::NmseVsT { slots, nmse, seed } => format!("{slots},{nmse},{seed}"),
        }
    }
}

fn escape_csv(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Render records of one kind to CSV text: one header line, one line per
/// record, in input order.
pub fn render_plotdata(records: &[PlotRecord], kind: PlotKind) -> Result<String, CliError> {
    if records.is_empty() {
        return Err(CliError::Validation {
            issues: vec![format!("plot data for {} needs at least one record", kind.name())],
        });
    }
    for r in records {
        if r.kind() != kind {
            return Err(CliError::HeterogeneousResults {
                expected: kind.name().to_string(),
                found: r.kind().name().to_string(),
            });
        }
    }
    let mut text = String::from(kind.header());
    text.push('\n');
    for r in records {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    Ok(text)
}

/// Write one kind of records to a CSV file.
pub fn emit_plotdata(records: &[PlotRecord], kind: PlotKind, path: &Path) -> Result<(), CliError> {
    let text = render_plotdata(records, kind)?;
    std::fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows_become_header_plus_three_lines() {
        let records = vec![
            PlotRecord::SeVsElements {
                elements_per_layer: 9,
                layers: 2,
                seed: 1,
                sum_rate: 3.5,
            },
            PlotRecord::SeVsElements {
                elements_per_layer: 16,
                layers: 2,
                seed: 1,
                sum_rate: 4.25,
            },
            PlotRecord::SeVsElements {
                elements_per_layer: 9,
                layers: 6,
                seed: 1,
                sum_rate: 5.0,
            },
        ];
        let text = render_plotdata(&records, PlotKind::SeVsElements).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4, "one header plus one line per record");
        assert_eq!(lines[0], "elements_per_layer,layers,label,seed,sum_rate");
        assert_eq!(lines[1], "9,2,L=2,1,3.5");
        assert_eq!(lines[3], "9,6,L=6,1,5");
    }

    #[test]
    fn layer_series_get_distinguishable_labels() {
        let records = vec![
            PlotRecord::SeVsElements {
                elements_per_layer: 25,
                layers: 2,
                seed: 0,
                sum_rate: 1.0,
            },
            PlotRecord::SeVsElements {
                elements_per_layer: 25,
                layers: 6,
                seed: 0,
                sum_rate: 2.0,
            },
        ];
        let text = render_plotdata(&records, PlotKind::SeVsElements).unwrap();
        assert!(text.contains("L=2"), "series label for two layers: {text}");
        assert!(text.contains("L=6"), "series label for six layers: {text}");
    }

    #[test]
    fn beampattern_schema_is_angle_power_label() {
        let records = vec![PlotRecord::Beampattern {
            angle_deg: -90.0,
            power: 0.25,
            label: "k=0".into(),
        }];
        let text = render_plotdata(&records, PlotKind::Beampattern).unwrap();
        assert!(text.starts_with("angle_deg,power,label\n"));
        assert!(text.contains("-90,0.25,k=0"));
    }

    #[test]
    fn mixed_kinds_are_rejected() {
        let records = vec![
            PlotRecord::Pareto {
                omega: 0.5,
                sum_rate: 1.0,
                worst_target_power: 2.0,
            },
            PlotRecord::Beampattern {
                angle_deg: 0.0,
                power: 1.0,
                label: "x".into(),
            },
        ];
        let err = render_plotdata(&records, PlotKind::Pareto).unwrap_err();
        assert_eq!(err.code(), "heterogeneous_results");
        match err {
            CliError::HeterogeneousResults { expected, found } => {
                assert_eq!(expected, "pareto");
                assert_eq!(found, "beampattern");
            }
            other => panic!("wrong variant: {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_an_error_not_an_empty_file() {
        let err = render_plotdata(&[], PlotKind::Pareto).unwrap_err();
        assert_eq!(err.code(), "validation_error");
    }

    #[test]
    fn labels_with_commas_are_quoted() {
        let records = vec![PlotRecord::Beampattern {
            angle_deg: 0.0,
            power: 1.0,
            label: "a,b".into(),
        }];
        let text = render_plotdata(&records, PlotKind::Beampattern).unwrap();
        assert!(text.contains("0,1,\"a,b\""), "quoting: {text}");
    }
}
