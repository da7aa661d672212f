//! Accuracy tables and Chi-squared homogeneity tests over survey records.

use num_rational::Ratio;
use num_traits::CheckedAdd;
use serde::{Deserialize, Serialize};

use super::gamma::chi_squared_sf;
use super::{Judgment, SurveyRecord, Truth};
use crate::error::{Error, Result};

pub const ACCURACY_COLUMNS: [&str; 3] = ["Full scan set", "Real scans only", "Synthetic scans only"];

/// Interpretation convention quoted as found; p-values are reported without applying it.
pub const HYPOTHESIS_NOTE: &str = "Reported convention, quoted verbatim and not applied: \"A p-value greater than 0.05 \
has been chosen to reject the null hypothesis\". Conventionally, homogeneity of the two series is rejected when p < 0.05.";

/// Percentage rounded to one decimal, half away from zero, in integer arithmetic.
fn percent(correct: usize, total: usize) -> Option<f64> {
    if total == 0 {
        return None;
    }
    let (c, t) = (correct as u128, total as u128);
    let tenths = (2000 * c + t) / (2 * t);
    Some(tenths as f64 / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub full: Option<f64>,
    pub real_only: Option<f64>,
    pub synth_only: Option<f64>,
}

/// Correct-guess percentages. Indeterminable answers count as incorrect;
/// `excluding_indeterminable` drops them from numerator and denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub n: usize,
    pub n_real: usize,
    pub n_synth: usize,
    pub n_indeterminable: usize,
    pub full: f64,
    pub real_only: Option<f64>,
    pub synth_only: Option<f64>,
    pub excluding_indeterminable: Rates,
}

pub fn accuracy_breakdown(records: &[SurveyRecord]) -> Result<Accuracy> {
    if records.is_empty() {
        return Err(Error::invalid("accuracy of an empty record list"));
    }
    let count = |f: &dyn Fn(&SurveyRecord) -> bool| records.iter().filter(|r| f(r)).count();
    let n_real = count(&|r| r.truth == Truth::Real);
    let n_synth = records.len() - n_real;
    let ok = count(&|r| r.is_correct());
    let ok_real = count(&|r| r.truth == Truth::Real && r.is_correct());
    let ok_synth = ok - ok_real;
    let ind_real = count(&|r| r.truth == Truth::Real && r.judgment == Judgment::Indeterminable);
    let ind_synth = count(&|r| r.truth == Truth::Synthetic && r.judgment == Judgment::Indeterminable);
    Ok(Accuracy {
        n: records.len(),
        n_real,
        n_synth,
        n_indeterminable: ind_real + ind_synth,
        full: percent(ok, records.len()).expect("non-empty"),
        real_only: percent(ok_real, n_real),
        synth_only: percent(ok_synth, n_synth),
        excluding_indeterminable: Rates {
            full: percent(ok, records.len() - ind_real - ind_synth),
            real_only: percent(ok_real, n_real - ind_real),
            synth_only: percent(ok_synth, n_synth - ind_synth),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableMode {
    /// Columns `0`, `1`; indeterminable answers dropped.
    Binomial,
    /// Columns `0`, `1`, `2`.
    Multinomial,
}

impl TableMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TableMode::Binomial => "binomial",
            TableMode::Multinomial => "multinomial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(row_labels: Vec<String>, col_labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != row_labels.len() || counts.iter().any(|r| r.len() != col_labels.len()) {
            return Err(Error::invalid("contingency table shape does not match its labels"));
        }
        Ok(ContingencyTable {
            row_labels,
            col_labels,
            counts,
        })
    }

    /// Table from bare counts with labels `r0..`, `c0..`.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let r = counts.len();
        let c = counts.first().map_or(0, Vec::len);
        ContingencyTable::new(
            (0..r).map(|i| format!("r{i}")).collect(),
            (0..c).map(|j| format!("c{j}")).collect(),
            counts,
        )
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.col_labels.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    /// Every cell multiplied by `k`.
    pub fn scaled(&self, k: u64) -> ContingencyTable {
        ContingencyTable {
            counts: self.counts.iter().map(|r| r.iter().map(|c| c * k).collect()).collect(),
            ..self.clone()
        }
    }
}

/// Tallies judgments of two record series. All-zero columns are removed.
pub fn build_table(a: &[SurveyRecord], b: &[SurveyRecord], mode: TableMode) -> Result<ContingencyTable> {
    build_labeled_table(("A", a), ("B", b), mode)
}

pub fn build_labeled_table(
    (label_a, a): (&str, &[SurveyRecord]),
    (label_b, b): (&str, &[SurveyRecord]),
    mode: TableMode,
) -> Result<ContingencyTable> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("both record series must be non-empty"));
    }
    let cats: &[Judgment] = match mode {
        TableMode::Binomial => &Judgment::ALL[..2],
        TableMode::Multinomial => &Judgment::ALL,
    };
    let tally = |rs: &[SurveyRecord]| -> Vec<u64> {
        cats.iter()
            .map(|c| rs.iter().filter(|r| r.judgment == *c).count() as u64)
            .collect()
    };
    let rows = [tally(a), tally(b)];
    let keep: Vec<usize> = (0..cats.len()).filter(|&j| rows.iter().any(|r| r[j] > 0)).collect();
    let counts: Vec<Vec<u64>> = rows.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect();
    for (label, row) in [label_a, label_b].iter().zip(&counts) {
        if row.iter().sum::<u64>() == 0 {
            return Err(Error::DegenerateTable(format!(
                "series {label} has no {} responses",
                mode.as_str()
            )));
        }
    }
    ContingencyTable::new(
        vec![label_a.to_string(), label_b.to_string()],
        keep.iter().map(|&j| cats[j].code().to_string()).collect(),
        counts,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquared {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn check_table(t: &ContingencyTable) -> Result<(Vec<u64>, Vec<u64>, u64)> {
    let (r, c) = (t.counts.len(), t.col_labels.len());
    if r < 2 || c < 2 {
        return Err(Error::DegenerateTable(format!("need at least 2x2 cells, got {r}x{c}")));
    }
    let (rows, cols) = (t.row_sums(), t.col_sums());
    if rows.iter().chain(&cols).any(|&s| s == 0) {
        return Err(Error::DegenerateTable("a row or column has zero total, expected count 0".into()));
    }
    let total = rows.iter().sum();
    Ok((rows, cols, total))
}

/// Chi-squared statistic as an exact fraction, `None` if it overflows 128-bit integers.
///
/// Each cell contributes `(O·T − R·C)² / (R·C·T)`; with Yates' correction
/// (2x2 only) the deviation `|O·T − R·C|` is reduced by `T/2`, floored at 0.
pub fn chi_squared_statistic_exact(t: &ContingencyTable, yates: bool) -> Result<Option<Ratio<i128>>> {
    let (rows, cols, total) = check_table(t)?;
    let yates = yates && rows.len() == 2 && cols.len() == 2;
    let tt = i128::from(total);
    let mut sum = Ratio::from_integer(0i128);
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let rc = i128::from(rows[i]).checked_mul(i128::from(cols[j]));
            let term = rc.and_then(|rc| {
                let dev = i128::from(o).checked_mul(tt)?.checked_sub(rc)?.checked_abs()?;
                let (num, den) = if yates {
                    let d = dev.checked_mul(2)?.checked_sub(tt)?.max(0);
                    (d.checked_mul(d)?, rc.checked_mul(tt)?.checked_mul(4)?)
                } else {
                    (dev.checked_mul(dev)?, rc.checked_mul(tt)?)
                };
                Some(Ratio::new(num, den))
            });
            match term.and_then(|x| sum.checked_add(&x)) {
                Some(s) => sum = s,
                None => return Ok(None),
            }
        }
    }
    Ok(Some(sum))
}

fn statistic_float(t: &ContingencyTable, yates: bool) -> Result<f64> {
    let (rows, cols, total) = check_table(t)?;
    let yates = yates && rows.len() == 2 && cols.len() == 2;
    let tt = total as f64;
    let mut x2 = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = rows[i] as f64 * cols[j] as f64 / tt;
            let mut dev = (o as f64 - e).abs();
            if yates {
                dev = (dev - 0.5).max(0.0);
            }
            x2 += dev * dev / e;
        }
    }
    Ok(x2)
}

/// Pearson Chi-squared homogeneity test, optionally with Yates' correction on 2x2 tables.
pub fn chi_squared_test(t: &ContingencyTable, yates: bool) -> Result<ChiSquared> {
    let statistic = match chi_squared_statistic_exact(t, yates)? {
        Some(q) => *q.numer() as f64 / *q.denom() as f64,
        None => statistic_float(t, yates)?,
    };
    let dof = (t.counts.len() - 1) * (t.col_labels.len() - 1);
    Ok(ChiSquared {
        statistic,
        dof,
        p_value: chi_squared_sf(statistic, dof),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub label: String,
    #[serde(flatten)]
    pub accuracy: Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySection {
    pub columns: [String; 3],
    pub rows: Vec<AccuracyRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub label: String,
    pub mode: TableMode,
    pub table: Option<ContingencyTable>,
    pub statistic: Option<f64>,
    pub dof: Option<usize>,
    pub p_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub schema: u32,
    pub accuracy: AccuracySection,
    pub tests: Vec<TestResult>,
    pub yates: bool,
    pub note: String,
}

impl StatsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("stats serialize");
        s.push('\n');
        s
    }

    /// Plain-text accuracy table with the three standard columns.
    pub fn accuracy_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"));
        let mut out = format!("| Survey | {} |\n|---|---|---|---|\n", ACCURACY_COLUMNS.join(" | "));
        for r in &self.accuracy.rows {
            out.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                r.label,
                fmt(Some(r.accuracy.full)),
                fmt(r.accuracy.real_only),
                fmt(r.accuracy.synth_only)
            ));
        }
        out
    }
}

fn run_test(label: String, a: &[SurveyRecord], b: &[SurveyRecord], mode: TableMode, yates: bool) -> TestResult {
    let outcome = build_table(a, b, mode).and_then(|t| chi_squared_test(&t, yates).map(|c| (t, c)));
    match outcome {
        Ok((table, c)) => TestResult {
            label,
            mode,
            table: Some(table),
            statistic: Some(c.statistic),
            dof: Some(c.dof),
            p_value: Some(c.p_value),
            error: None,
        },
        Err(e) => TestResult {
            label,
            mode,
            table: None,
            statistic: None,
            dof: None,
            p_value: None,
            error: Some(format!("{}: {e}", e.kind())),
        },
    }
}

fn split_truth(records: &[SurveyRecord]) -> (Vec<SurveyRecord>, Vec<SurveyRecord>) {
    records.iter().cloned().partition(|r| r.truth == Truth::Real)
}

/// Accuracy per survey and the standard comparisons: real vs synthetic
/// within each survey, pooled real vs synthetic when several surveys are
/// given, and every pair of surveys. Each comparison is run in both modes.
pub fn survey_stats(surveys: &[(String, Vec<SurveyRecord>)], yates: bool) -> Result<StatsReport> {
    if surveys.is_empty() {
        return Err(Error::invalid("no surveys supplied"));
    }
    let mut rows = Vec::new();
    for (label, recs) in surveys {
        rows.push(AccuracyRow {
            label: label.clone(),
            accuracy: accuracy_breakdown(recs)?,
        });
    }
    let modes = [TableMode::Binomial, TableMode::Multinomial];
    let mut tests = Vec::new();
    for (label, recs) in surveys {
        let (real, synth) = split_truth(recs);
        for mode in modes {
            tests.push(run_test(format!("{label}: real vs synthetic"), &real, &synth, mode, yates));
        }
    }
    if surveys.len() > 1 {
        let all: Vec<SurveyRecord> = surveys.iter().flat_map(|s| s.1.iter().cloned()).collect();
        rows.push(AccuracyRow {
            label: "All surveys".into(),
            accuracy: accuracy_breakdown(&all)?,
        });
        let (real, synth) = split_truth(&all);
        for mode in modes {
            tests.push(run_test("All surveys: real vs synthetic".into(), &real, &synth, mode, yates));
        }
    }
    for i in 0..surveys.len() {
        for j in i + 1..surveys.len() {
            for mode in modes {
                tests.push(run_test(
                    format!("{} vs {}", surveys[i].0, surveys[j].0),
                    &surveys[i].1,
                    &surveys[j].1,
                    mode,
                    yates,
                ));
            }
        }
    }
    Ok(StatsReport {
        schema: 1,
        accuracy: AccuracySection {
            columns: ACCURACY_COLUMNS.map(String::from),
            rows,
        },
        tests,
        yates,
        note: HYPOTHESIS_NOTE.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(truth: Truth, judgment: Judgment) -> SurveyRecord {
        SurveyRecord {
            survey_id: "s".into(),
            rater_id: "r".into(),
            item_id: "i".into(),
            truth,
            judgment,
            rationale: None,
            timestamp: String::new(),
        }
    }

    fn many(n: usize, truth: Truth, judgment: Judgment) -> Vec<SurveyRecord> {
        vec![rec(truth, judgment); n]
    }

    #[test]
    fn all_real_answers() {
        let mut rs = many(10, Truth::Real, Judgment::Real);
        rs.extend(many(10, Truth::Synthetic, Judgment::Real));
        let a = accuracy_breakdown(&rs).unwrap();
        assert_eq!((a.full, a.real_only, a.synth_only), (50.0, Some(100.0), Some(0.0)));
    }

    #[test]
    fn all_correct() {
        let mut rs = many(3, Truth::Real, Judgment::Real);
        rs.extend(many(4, Truth::Synthetic, Judgment::Synthetic));
        let a = accuracy_breakdown(&rs).unwrap();
        assert_eq!((a.full, a.real_only, a.synth_only), (100.0, Some(100.0), Some(100.0)));
        assert!(accuracy_breakdown(&[]).is_err());
    }

    #[test]
    fn indeterminable_is_incorrect_and_excludable() {
        let mut rs = many(2, Truth::Real, Judgment::Real);
        rs.extend(many(2, Truth::Real, Judgment::Indeterminable));
        let a = accuracy_breakdown(&rs).unwrap();
        assert_eq!(a.full, 50.0);
        assert_eq!(a.excluding_indeterminable.full, Some(100.0));
        assert_eq!(a.synth_only, None);
    }

    #[test]
    fn rounding_half_away_from_zero() {
        // 1/8 = 12.5% exactly, 1/16 = 6.25% -> 6.3, 1/3 -> 33.3, 2/3 -> 66.7
        assert_eq!(percent(1, 16), Some(6.3));
        assert_eq!(percent(1, 3), Some(33.3));
        assert_eq!(percent(2, 3), Some(66.7));
        assert_eq!(percent(1, 8), Some(12.5));
        assert_eq!(percent(1, 2000), Some(0.1));
    }

    #[test]
    fn binomial_tally() {
        let a = many(10, Truth::Real, Judgment::Real);
        let b = many(10, Truth::Real, Judgment::Synthetic);
        let t = build_table(&a, &b, TableMode::Binomial).unwrap();
        assert_eq!(t.counts, vec![vec![0, 10], vec![10, 0]]);
        assert_eq!(t.col_labels, ["0", "1"]);
    }

    #[test]
    fn multinomial_keeps_indeterminable_column() {
        let mut a = many(7, Truth::Real, Judgment::Real);
        a.extend(many(3, Truth::Real, Judgment::Indeterminable));
        let b = many(10, Truth::Real, Judgment::Synthetic);
        let t = build_table(&a, &b, TableMode::Multinomial).unwrap();
        assert_eq!(t.col_labels, ["0", "1", "2"]);
        assert_eq!(t.counts[0][2], 3);
        assert_eq!(t.counts[1][2], 0);
    }

    #[test]
    fn all_indeterminable_binomial_is_degenerate() {
        let a = many(5, Truth::Real, Judgment::Indeterminable);
        let b = many(5, Truth::Real, Judgment::Real);
        assert!(matches!(build_table(&a, &b, TableMode::Binomial), Err(Error::DegenerateTable(_))));
    }

    #[test]
    fn homogeneous_table() {
        let t = ContingencyTable::from_counts(vec![vec![5, 5], vec![5, 5]]).unwrap();
        let c = chi_squared_test(&t, false).unwrap();
        assert_eq!((c.statistic, c.dof, c.p_value), (0.0, 1, 1.0));
    }

    /// Upper tail of chi-squared with 1 dof by Simpson's rule after the
    /// substitution x = u², which removes the singularity at 0.
    fn simpson_tail_dof1(x: f64) -> f64 {
        let f = |u: f64| 2.0 * (-u * u / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let (b, n) = (x.sqrt(), 20_000);
        let h = b / n as f64;
        let mut s = f(0.0) + f(b);
        for i in 1..n {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        1.0 - s * h / 3.0
    }

    #[test]
    fn ten_twenty_table() {
        let t = ContingencyTable::from_counts(vec![vec![10, 20], vec![20, 10]]).unwrap();
        let exact = chi_squared_statistic_exact(&t, false).unwrap().unwrap();
        assert_eq!(exact, Ratio::new(20, 3));
        let c = chi_squared_test(&t, false).unwrap();
        assert!((c.statistic - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.dof, 1);
        let oracle = simpson_tail_dof1(20.0 / 3.0);
        assert!((c.p_value - oracle).abs() < 1e-9, "{} vs {oracle}", c.p_value);
        assert!((c.p_value - 0.00982).abs() < 1e-5);
    }

    #[test]
    fn yates_shrinks_statistic() {
        let t = ContingencyTable::from_counts(vec![vec![10, 20], vec![20, 10]]).unwrap();
        let y = chi_squared_test(&t, true).unwrap();
        // |O − E| = 5 → 4.5; 4 · 4.5² / 15 = 5.4
        assert!((y.statistic - 5.4).abs() < 1e-12);
    }

    #[test]
    fn zero_expected_is_degenerate() {
        let t = ContingencyTable::from_counts(vec![vec![0, 5], vec![0, 5]]).unwrap();
        assert!(matches!(chi_squared_test(&t, false), Err(Error::DegenerateTable(_))));
    }

    #[test]
    fn eleven_comparisons_for_four_surveys() {
        let surveys: Vec<(String, Vec<SurveyRecord>)> = (0..4)
            .map(|k| {
                let mut rs = many(5 + k, Truth::Real, Judgment::Real);
                rs.extend(many(3, Truth::Real, Judgment::Synthetic));
                rs.extend(many(4, Truth::Synthetic, Judgment::Real));
                rs.extend(many(6 - k, Truth::Synthetic, Judgment::Synthetic));
                rs.extend(many(1, Truth::Synthetic, Judgment::Indeterminable));
                (format!("Survey {}", k + 1), rs)
            })
            .collect();
        let s = survey_stats(&surveys, false).unwrap();
        assert_eq!(s.tests.len(), 22);
        let labels: std::collections::BTreeSet<&str> = s.tests.iter().map(|t| t.label.as_str()).collect();
        assert_eq!(labels.len(), 11);
        assert_eq!(s.accuracy.rows.len(), 5);
        assert!(s.accuracy_table().starts_with("| Survey | Full scan set | Real scans only | Synthetic scans only |"));
        assert!(s.note.contains("A p-value greater than 0.05 has been chosen to reject the null hypothesis"));
        let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        for key in ["label", "mode", "statistic", "dof", "p_value"] {
            assert!(v["tests"][0].get(key).is_some());
        }
    }

    fn table_strategy() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (2usize..4, 2usize..4).prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(1u64..50, c), r))
    }

    proptest! {
        #[test]
        fn scaling_multiplies_statistic(counts in table_strategy(), k in 2u64..20) {
            let t = ContingencyTable::from_counts(counts).unwrap();
            let x = chi_squared_statistic_exact(&t, false).unwrap().unwrap();
            let xk = chi_squared_statistic_exact(&t.scaled(k), false).unwrap().unwrap();
            prop_assert_eq!(xk, x * Ratio::from_integer(i128::from(k)));
            let (f, fk) = (chi_squared_test(&t, false).unwrap(), chi_squared_test(&t.scaled(k), false).unwrap());
            prop_assert!((fk.statistic - k as f64 * f.statistic).abs() <= 1e-12 * fk.statistic.max(1.0));
        }

        #[test]
        fn permutation_invariance(counts in table_strategy(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t = ContingencyTable::from_counts(counts.clone()).unwrap();
            let mut rows = counts.clone();
            rows.shuffle(&mut rng);
            let mut perm: Vec<usize> = (0..counts[0].len()).collect();
            perm.shuffle(&mut rng);
            let shuffled: Vec<Vec<u64>> = rows.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
            let p = ContingencyTable::from_counts(shuffled).unwrap();
            prop_assert_eq!(chi_squared_test(&t, false).unwrap(), chi_squared_test(&p, false).unwrap());
        }

        #[test]
        fn statistic_non_negative_and_p_in_unit(counts in table_strategy()) {
            let c = chi_squared_test(&ContingencyTable::from_counts(counts).unwrap(), false).unwrap();
            prop_assert!(c.statistic >= 0.0);
            prop_assert!((0.0..=1.0).contains(&c.p_value));
        }

        #[test]
        fn full_rate_is_weighted_mean(ok_r in 0usize..40, bad_r in 0usize..40, ok_s in 0usize..40, bad_s in 0usize..40) {
            prop_assume!(ok_r + bad_r > 0 && ok_s + bad_s > 0);
            let mut rs = many(ok_r, Truth::Real, Judgment::Real);
            rs.extend(many(bad_r, Truth::Real, Judgment::Indeterminable));
            rs.extend(many(ok_s, Truth::Synthetic, Judgment::Synthetic));
            rs.extend(many(bad_s, Truth::Synthetic, Judgment::Real));
            let a = accuracy_breakdown(&rs).unwrap();
            let (nr, ns) = ((ok_r + bad_r) as f64, (ok_s + bad_s) as f64);
            let exact = (100.0 * ok_r as f64 + 100.0 * ok_s as f64) / (nr + ns);
            prop_assert!((a.full - exact).abs() <= 0.05 + 1e-9);
            let mean = (nr * a.real_only.unwrap() + ns * a.synth_only.unwrap()) / (nr + ns);
            prop_assert!((a.full - mean).abs() <= 0.1 + 1e-9);
        }
    }
}
