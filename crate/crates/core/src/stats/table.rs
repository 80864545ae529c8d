use super::ContrastResult;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// One line of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub analysis: String,
    /// Arm, contrast or coefficient name.
    pub term: String,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn push(&mut self, analysis: &str, term: &str, estimate: Option<f64>, se: Option<f64>, p: Option<f64>) {
        self.rows.push(ResultRow { analysis: analysis.into(), term: term.into(), estimate, se, p });
    }

    /// Contrast rows; the omnibus row carries its Wald statistic as the estimate.
    pub fn push_contrasts(&mut self, analysis: &str, contrasts: &[ContrastResult]) {
        for c in contrasts {
            let estimate = c.estimate.or(Some(c.statistic));
            self.push(analysis, &c.label, estimate, c.se, Some(c.p));
        }
    }

    pub fn find(&self, analysis: &str, term: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.analysis == analysis && r.term == term)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["analysis", "term", "estimate", "se", "p"])?;
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([r.analysis.clone(), r.term.clone(), f(r.estimate), f(r.se), f(r.p)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, csv::Error> {
        let mut rdr = csv::Reader::from_reader(input);
        let rows = rdr.deserialize().collect::<Result<Vec<ResultRow>, _>>()?;
        Ok(ResultTable { rows })
    }
}
