//! Tabular scenario import/export.
//!
//! CSV layout: header `scenario,time_index,factor_0[,factor_1,…]`, one row per
//! (scenario, time). Scenario ids are 1-based and contiguous; `time_index` is
//! 0-based into a grid supplied separately.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::Deserialize;

use super::{ScenarioKind, ScenarioSet, TimeGrid};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One parsed table row; `None` marks a blank cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow<T> {
    pub scenario: usize,
    pub time_index: usize,
    pub values: Vec<Option<T>>,
}

/// Physical set from rows covering every (scenario, time, factor) cell.
pub fn import_physical<T: Scalar>(
    grid: TimeGrid<T>,
    rows: &[ScenarioRow<T>],
) -> Result<ScenarioSet<T>> {
    let (n, s, cells) = collect_rows(&grid, rows)?;
    let mut values = vec![T::zero(); grid.len() * n * s];
    for w in 0..n {
        for ti in 0..grid.len() {
            let row = cells.get(&(w, ti)).ok_or_else(|| {
                Error::MalformedScenarioData(format!(
                    "missing row for scenario {}, time index {ti}",
                    w + 1
                ))
            })?;
            for (f, v) in row.iter().enumerate() {
                let v = v.ok_or_else(|| {
                    Error::MalformedScenarioData(format!(
                        "blank cell at scenario {}, time index {ti}, factor {f}",
                        w + 1
                    ))
                })?;
                values[(ti * n + w) * s + f] = v;
            }
        }
    }
    ScenarioSet::from_dense(ScenarioKind::Physical, grid, n, s, values, vec![0; n])
}

fn collect_rows<'a, T: Scalar>(
    grid: &TimeGrid<T>,
    rows: &'a [ScenarioRow<T>],
) -> Result<(usize, usize, HashMap<(usize, usize), &'a [Option<T>]>)> {
    let first = rows
        .first()
        .ok_or_else(|| Error::MalformedScenarioData("no scenario rows".into()))?;
    let s = first.values.len();
    if s == 0 {
        return Err(Error::MalformedScenarioData("rows carry no factor columns".into()));
    }
    let mut cells = HashMap::with_capacity(rows.len());
    let mut max_id = 0;
    for r in rows {
        if r.scenario == 0 {
            return Err(Error::MalformedScenarioData("scenario ids start at 1".into()));
        }
        if r.time_index >= grid.len() {
            return Err(Error::MalformedScenarioData(format!(
                "time index {} outside grid of {} times",
                r.time_index,
                grid.len()
            )));
        }
        if r.values.len() != s {
            return Err(Error::MalformedScenarioData(format!(
                "scenario {} time index {}: expected {s} factors, got {}",
                r.scenario,
                r.time_index,
                r.values.len()
            )));
        }
        if cells.insert((r.scenario - 1, r.time_index), r.values.as_slice()).is_some() {
            return Err(Error::MalformedScenarioData(format!(
                "duplicate row for scenario {}, time index {}",
                r.scenario, r.time_index
            )));
        }
        max_id = max_id.max(r.scenario);
    }
    for w in 0..max_id {
        if !(0..grid.len()).any(|ti| cells.contains_key(&(w, ti))) {
            return Err(Error::MalformedScenarioData(format!(
                "scenario ids are not contiguous: {} missing",
                w + 1
            )));
        }
    }
    Ok((max_id, s, cells))
}

fn parse_rows<R: Read>(reader: R) -> Result<Vec<ScenarioRow<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3
        || &headers[0] != "scenario"
        || &headers[1] != "time_index"
        || headers.iter().skip(2).enumerate().any(|(i, h)| h != format!("factor_{i}"))
    {
        return Err(Error::MalformedScenarioData(format!(
            "expected header scenario,time_index,factor_0[,...], got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let at = |what: &str| {
            Error::MalformedScenarioData(format!("data row {}: bad {what}", line + 1))
        };
        if rec.len() != headers.len() {
            return Err(at("column count"));
        }
        let scenario: usize = rec[0].parse().map_err(|_| at("scenario id"))?;
        let time_index: usize = rec[1].parse().map_err(|_| at("time index"))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|cell| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    let v: f64 = cell.parse().map_err(|_| at("number"))?;
                    if v.is_finite() {
                        Ok(Some(v))
                    } else {
                        Err(Error::InvalidValue(format!(
                            "non-finite value {cell} in data row {}",
                            line + 1
                        )))
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(ScenarioRow {
            scenario,
            time_index,
            values,
        });
    }
    Ok(rows)
}

pub fn import_physical_csv<R: Read>(reader: R, grid: TimeGrid<f64>) -> Result<ScenarioSet<f64>> {
    import_physical(grid, &parse_rows(reader)?)
}

#[derive(Deserialize)]
struct JsonScenarios {
    grid: TimeGrid<f64>,
    /// `scenarios[ω][t][factor]`
    scenarios: Vec<Vec<Vec<Option<f64>>>>,
}

/// JSON twin of the CSV format, with the grid inline.
pub fn import_physical_json(text: &str) -> Result<ScenarioSet<f64>> {
    let doc: JsonScenarios = serde_json::from_str(text)
        .map_err(|e| Error::MalformedScenarioData(format!("scenario JSON: {e}")))?;
    let grid = doc.grid.validated()?;
    let mut rows = Vec::new();
    for (w, path) in doc.scenarios.into_iter().enumerate() {
        if path.len() != grid.len() {
            return Err(Error::MalformedScenarioData(format!(
                "scenario {} has {} time entries, grid has {}",
                w + 1,
                path.len(),
                grid.len()
            )));
        }
        for (ti, values) in path.into_iter().enumerate() {
            rows.push(ScenarioRow {
                scenario: w + 1,
                time_index: ti,
                values,
            });
        }
    }
    import_physical(grid, &rows)
}

/// Risk-neutral set whose file lists only active (scenario, time) rows; each
/// path's activation is its first listed time and it must be listed through
/// the end of the grid.
pub fn import_risk_neutral_csv<R: Read>(
    reader: R,
    grid: TimeGrid<f64>,
) -> Result<ScenarioSet<f64>> {
    let rows = parse_rows(reader)?;
    let (n, s, cells) = collect_rows(&grid, &rows)?;
    let mut values = vec![0.0; grid.len() * n * s];
    let mut activation = vec![0; n];
    for w in 0..n {
        let first = (0..grid.len())
            .find(|ti| cells.contains_key(&(w, *ti)))
            .expect("collect_rows checked contiguity");
        activation[w] = first;
        for ti in first..grid.len() {
            let row = cells.get(&(w, ti)).ok_or_else(|| {
                Error::MalformedScenarioData(format!(
                    "scenario {} is active from time index {first} but has no row at {ti}",
                    w + 1
                ))
            })?;
            for (f, v) in row.iter().enumerate() {
                values[(ti * n + w) * s + f] = v.ok_or_else(|| {
                    Error::MalformedScenarioData(format!(
                        "blank cell at scenario {}, time index {ti}",
                        w + 1
                    ))
                })?;
            }
        }
    }
    ScenarioSet::from_dense(ScenarioKind::RiskNeutral, grid, n, s, values, activation)
}

/// Writes active cells only, in shortest round-trip decimal form.
pub fn write_scenarios_csv<W: Write>(set: &ScenarioSet<f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["scenario".to_string(), "time_index".to_string()];
    header.extend((0..set.n_factors()).map(|f| format!("factor_{f}")));
    w.write_record(&header)?;
    for scen in 0..set.n_scenarios() {
        for ti in set.activation(scen)..set.grid().len() {
            let x = set.get(ti, scen).expect("active cell");
            let mut rec = vec![(scen + 1).to_string(), ti.to_string()];
            rec.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> TimeGrid<f64> {
        TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap()
    }

    const STOCK: &str = "scenario,time_index,factor_0
1,0,100
1,1,110
1,2,120
2,0,100
2,1,100
2,2,100
3,0,100
3,1,90
3,2,80
";

    #[test]
    fn imports_three_scenario_stock_table() {
        let set = import_physical_csv(STOCK.as_bytes(), grid3()).unwrap();
        assert_eq!(set.n_scenarios(), 3);
        assert_eq!(set.n_factors(), 1);
        assert_eq!(set.value(1, 0, 0), Some(110.0));
        assert_eq!(set.value(2, 2, 0), Some(80.0));
        assert!(set.activations().iter().all(|&a| a == 0));
    }

    #[test]
    fn single_cell_set() {
        let set = import_physical_csv(
            "scenario,time_index,factor_0\n1,0,100\n".as_bytes(),
            TimeGrid::new(vec![0.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(set.activation(0), 0);
        assert_eq!(set.value(0, 0, 0), Some(100.0));
    }

    #[test]
    fn blank_cell_is_malformed() {
        let text = STOCK.replace("2,1,100", "2,1,");
        assert!(matches!(
            import_physical_csv(text.as_bytes(), grid3()),
            Err(Error::MalformedScenarioData(_))
        ));
    }

    #[test]
    fn missing_row_is_malformed() {
        let text = STOCK.replace("2,1,100\n", "");
        assert!(matches!(
            import_physical_csv(text.as_bytes(), grid3()),
            Err(Error::MalformedScenarioData(_))
        ));
    }

    #[test]
    fn non_finite_value_rejected() {
        let text = STOCK.replace("2,1,100", "2,1,inf");
        assert!(matches!(
            import_physical_csv(text.as_bytes(), grid3()),
            Err(Error::InvalidValue(_))
        ));
    }

    #[test]
    fn non_contiguous_ids_rejected() {
        let text = STOCK.replace("3,", "4,");
        assert!(import_physical_csv(text.as_bytes(), grid3()).is_err());
    }

    #[test]
    fn decimal_values_are_exact() {
        let text = "scenario,time_index,factor_0\n1,0,211.7568\n";
        let set = import_physical_csv(text.as_bytes(), TimeGrid::new(vec![0.0]).unwrap()).unwrap();
        assert_eq!(set.value(0, 0, 0), Some(211.7568));
    }

    #[test]
    fn json_matches_csv() {
        let json = r#"{"grid":{"times":[0.0,1.0,2.0]},
            "scenarios":[[[100],[110],[120]],[[100],[100],[100]],[[100],[90],[80]]]}"#;
        let a = import_physical_json(json).unwrap();
        let b = import_physical_csv(STOCK.as_bytes(), grid3()).unwrap();
        assert_eq!(a, b);
        let bad = json.replace("[90]", "[null]");
        assert!(matches!(
            import_physical_json(&bad),
            Err(Error::MalformedScenarioData(_))
        ));
    }

    #[test]
    fn risk_neutral_round_trip_keeps_activation() {
        let text = "scenario,time_index,factor_0
1,0,100
1,1,101.5
1,2,99.25
2,1,110
2,2,0.1
";
        let set = import_risk_neutral_csv(text.as_bytes(), grid3()).unwrap();
        assert_eq!(set.activations(), &[0, 1]);
        let mut out = Vec::new();
        write_scenarios_csv(&set, &mut out).unwrap();
        let again = import_risk_neutral_csv(out.as_slice(), grid3()).unwrap();
        assert_eq!(set, again);

        let gap = text.replace("2,2,0.1\n", "");
        assert!(import_risk_neutral_csv(gap.as_bytes(), grid3()).is_err());
    }
}
