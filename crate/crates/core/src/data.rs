//! Cross-sectional and panel choice samples, plus their CSV representation.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element of the choice set {(0,0), (1,0), (0,1), (1,1)}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Alternative {
    Neither = 0,
    First = 1,
    Second = 2,
    Both = 3,
}

impl Alternative {
    pub const ALL: [Alternative; 4] = [
        Alternative::Neither,
        Alternative::First,
        Alternative::Second,
        Alternative::Both,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Alternative> {
        Self::ALL.get(i).copied()
    }

    /// Whether the first good is in the choice.
    #[inline]
    pub fn d1(self) -> u8 {
        (self as u8) & 1
    }

    #[inline]
    pub fn d2(self) -> u8 {
        (self as u8) >> 1
    }

    pub fn label(self) -> &'static str {
        match self {
            Alternative::Neither => "00",
            Alternative::First => "10",
            Alternative::Second => "01",
            Alternative::Both => "11",
        }
    }

    pub fn parse(s: &str) -> Option<Alternative> {
        match s.trim() {
            "00" => Some(Alternative::Neither),
            "10" => Some(Alternative::First),
            "01" => Some(Alternative::Second),
            "11" => Some(Alternative::Both),
            _ => None,
        }
    }
}

/// Observed data for N agents. Covariate blocks are row-major N×k matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceSample {
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub w: Vec<f64>,
    pub s: Vec<f64>,
    pub choices: Vec<Alternative>,
    /// One flag per X column (shared by both goods).
    pub discrete_x: Vec<bool>,
    pub discrete_w: Vec<bool>,
    pub discrete_s: Vec<bool>,
}

fn check_block(what: &'static str, data: &[f64], rows: usize, k: usize) -> Result<()> {
    if data.len() != rows * k {
        return Err(Error::dimension(what, rows * k, data.len()));
    }
    Ok(())
}

impl ChoiceSample {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        k1: usize,
        k2: usize,
        k3: usize,
        x1: Vec<f64>,
        x2: Vec<f64>,
        w: Vec<f64>,
        s: Vec<f64>,
        choices: Vec<Alternative>,
    ) -> Result<Self> {
        let n = choices.len();
        check_block("x1", &x1, n, k1)?;
        check_block("x2", &x2, n, k1)?;
        check_block("w", &w, n, k2)?;
        check_block("s", &s, n, k3)?;
        if k1 == 0 || k2 == 0 {
            return Err(Error::input("X and W blocks need at least one column"));
        }
        Ok(ChoiceSample {
            k1,
            k2,
            k3,
            x1,
            x2,
            w,
            s,
            choices,
            discrete_x: vec![false; k1],
            discrete_w: vec![false; k2],
            discrete_s: vec![false; k3],
        })
    }

    pub fn with_discrete(mut self, x: Vec<bool>, w: Vec<bool>, s: Vec<bool>) -> Result<Self> {
        if x.len() != self.k1 {
            return Err(Error::dimension("discrete_x", self.k1, x.len()));
        }
        if w.len() != self.k2 {
            return Err(Error::dimension("discrete_w", self.k2, w.len()));
        }
        if s.len() != self.k3 {
            return Err(Error::dimension("discrete_s", self.k3, s.len()));
        }
        self.discrete_x = x;
        self.discrete_w = w;
        self.discrete_s = s;
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.choices.len()
    }

    #[inline]
    pub fn x1_row(&self, i: usize) -> &[f64] {
        &self.x1[i * self.k1..(i + 1) * self.k1]
    }

    #[inline]
    pub fn x2_row(&self, i: usize) -> &[f64] {
        &self.x2[i * self.k1..(i + 1) * self.k1]
    }

    #[inline]
    pub fn w_row(&self, i: usize) -> &[f64] {
        &self.w[i * self.k2..(i + 1) * self.k2]
    }

    #[inline]
    pub fn s_row(&self, i: usize) -> &[f64] {
        &self.s[i * self.k3..(i + 1) * self.k3]
    }

    /// One-hot outcome Y_{id}.
    #[inline]
    pub fn y(&self, i: usize, d: Alternative) -> f64 {
        if self.choices[i] == d { 1.0 } else { 0.0 }
    }

    /// Rows picked by `indices`, in that order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> ChoiceSample {
        let pick = |data: &[f64], k: usize| {
            let mut out = Vec::with_capacity(indices.len() * k);
            for &i in indices {
                out.extend_from_slice(&data[i * k..(i + 1) * k]);
            }
            out
        };
        ChoiceSample {
            k1: self.k1,
            k2: self.k2,
            k3: self.k3,
            x1: pick(&self.x1, self.k1),
            x2: pick(&self.x2, self.k1),
            w: pick(&self.w, self.k2),
            s: pick(&self.s, self.k3),
            choices: indices.iter().map(|&i| self.choices[i]).collect(),
            discrete_x: self.discrete_x.clone(),
            discrete_w: self.discrete_w.clone(),
            discrete_s: self.discrete_s.clone(),
        }
    }

    /// Column `c` of a row-major block with `k` columns.
    pub fn column(data: &[f64], k: usize, c: usize) -> Vec<f64> {
        data.iter().skip(c).step_by(k).copied().collect()
    }

    pub fn choice_shares(&self) -> [f64; 4] {
        let mut counts = [0.0; 4];
        for c in &self.choices {
            counts[c.index()] += 1.0;
        }
        let n = self.n().max(1) as f64;
        counts.map(|c| c / n)
    }
}

/// Observed panel data: N agents observed over T periods. Covariate blocks
/// are stored agent-major, then period, then column.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelChoiceSample {
    pub periods: usize,
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub w: Vec<f64>,
    pub s: Vec<f64>,
    pub choices: Vec<Alternative>,
    pub discrete_x: Vec<bool>,
    pub discrete_w: Vec<bool>,
    pub discrete_s: Vec<bool>,
}

impl PanelChoiceSample {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        periods: usize,
        k1: usize,
        k2: usize,
        k3: usize,
        x1: Vec<f64>,
        x2: Vec<f64>,
        w: Vec<f64>,
        s: Vec<f64>,
        choices: Vec<Alternative>,
    ) -> Result<Self> {
        if periods < 2 {
            return Err(Error::input(format!("panel needs at least 2 periods, got {periods}")));
        }
        if choices.len() % periods != 0 {
            return Err(Error::input("choice count is not a multiple of the period count"));
        }
        if k1 == 0 || k2 == 0 {
            return Err(Error::input("X and W blocks need at least one column"));
        }
        let rows = choices.len();
        check_block("x1", &x1, rows, k1)?;
        check_block("x2", &x2, rows, k1)?;
        check_block("w", &w, rows, k2)?;
        check_block("s", &s, rows, k3)?;
        Ok(PanelChoiceSample {
            periods,
            k1,
            k2,
            k3,
            x1,
            x2,
            w,
            s,
            choices,
            discrete_x: vec![false; k1],
            discrete_w: vec![false; k2],
            discrete_s: vec![false; k3],
        })
    }

    pub fn with_discrete(mut self, x: Vec<bool>, w: Vec<bool>, s: Vec<bool>) -> Result<Self> {
        if x.len() != self.k1 {
            return Err(Error::dimension("discrete_x", self.k1, x.len()));
        }
        if w.len() != self.k2 {
            return Err(Error::dimension("discrete_w", self.k2, w.len()));
        }
        if s.len() != self.k3 {
            return Err(Error::dimension("discrete_s", self.k3, s.len()));
        }
        self.discrete_x = x;
        self.discrete_w = w;
        self.discrete_s = s;
        Ok(self)
    }

    /// Number of agents.
    #[inline]
    pub fn n(&self) -> usize {
        self.choices.len() / self.periods
    }

    #[inline]
    fn row(&self, i: usize, t: usize) -> usize {
        i * self.periods + t
    }

    #[inline]
    pub fn x1_row(&self, i: usize, t: usize) -> &[f64] {
        let r = self.row(i, t);
        &self.x1[r * self.k1..(r + 1) * self.k1]
    }

    #[inline]
    pub fn x2_row(&self, i: usize, t: usize) -> &[f64] {
        let r = self.row(i, t);
        &self.x2[r * self.k1..(r + 1) * self.k1]
    }

    #[inline]
    pub fn w_row(&self, i: usize, t: usize) -> &[f64] {
        let r = self.row(i, t);
        &self.w[r * self.k2..(r + 1) * self.k2]
    }

    #[inline]
    pub fn s_row(&self, i: usize, t: usize) -> &[f64] {
        let r = self.row(i, t);
        &self.s[r * self.k3..(r + 1) * self.k3]
    }

    #[inline]
    pub fn choice(&self, i: usize, t: usize) -> Alternative {
        self.choices[self.row(i, t)]
    }

    #[inline]
    pub fn y(&self, i: usize, t: usize, d: Alternative) -> f64 {
        if self.choice(i, t) == d { 1.0 } else { 0.0 }
    }

    /// Ordered period pairs (t, s) with t > s.
    pub fn period_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for t in 1..self.periods {
            for s in 0..t {
                out.push((t, s));
            }
        }
        out
    }

    /// Agents picked by `agents`, in that order (repeats allowed).
    pub fn select(&self, agents: &[usize]) -> PanelChoiceSample {
        let tp = self.periods;
        let pick = |data: &[f64], k: usize| {
            let mut out = Vec::with_capacity(agents.len() * tp * k);
            for &i in agents {
                out.extend_from_slice(&data[i * tp * k..(i + 1) * tp * k]);
            }
            out
        };
        let mut choices = Vec::with_capacity(agents.len() * tp);
        for &i in agents {
            choices.extend_from_slice(&self.choices[i * tp..(i + 1) * tp]);
        }
        PanelChoiceSample {
            periods: tp,
            k1: self.k1,
            k2: self.k2,
            k3: self.k3,
            x1: pick(&self.x1, self.k1),
            x2: pick(&self.x2, self.k1),
            w: pick(&self.w, self.k2),
            s: pick(&self.s, self.k3),
            choices,
            discrete_x: self.discrete_x.clone(),
            discrete_w: self.discrete_w.clone(),
            discrete_s: self.discrete_s.clone(),
        }
    }

    /// Whether agent `i` chose the same alternative in every period.
    pub fn is_stayer(&self, i: usize) -> bool {
        let first = self.choice(i, 0);
        (1..self.periods).all(|t| self.choice(i, t) == first)
    }
}

// ---------------------------------------------------------------------------
// CSV

/// Columns treated as discrete when reading CSV: every value is an integer
/// and there are at most this many distinct values.
pub const MAX_DISCRETE_LEVELS: usize = 10;

fn block_header(prefix: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (1..=k).map(move |c| format!("{prefix}_{c}"))
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

pub fn write_cross_csv<W: Write>(sample: &ChoiceSample, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend(block_header("x1", sample.k1));
    header.extend(block_header("x2", sample.k1));
    header.extend(block_header("w", sample.k2));
    header.extend(block_header("s", sample.k3));
    header.push("choice".into());
    wtr.write_record(&header)?;
    for i in 0..sample.n() {
        let mut rec = vec![(i + 1).to_string()];
        for block in [sample.x1_row(i), sample.x2_row(i), sample.w_row(i), sample.s_row(i)] {
            rec.extend(block.iter().map(|&v| fmt_num(v)));
        }
        rec.push(sample.choices[i].label().into());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_panel_csv<W: Write>(panel: &PanelChoiceSample, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "t".to_string()];
    header.extend(block_header("x1", panel.k1));
    header.extend(block_header("x2", panel.k1));
    header.extend(block_header("w", panel.k2));
    header.extend(block_header("s", panel.k3));
    header.push("choice".into());
    wtr.write_record(&header)?;
    for i in 0..panel.n() {
        for t in 0..panel.periods {
            let mut rec = vec![(i + 1).to_string(), (t + 1).to_string()];
            for block in [
                panel.x1_row(i, t),
                panel.x2_row(i, t),
                panel.w_row(i, t),
                panel.s_row(i, t),
            ] {
                rec.extend(block.iter().map(|&v| fmt_num(v)));
            }
            rec.push(panel.choice(i, t).label().into());
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

struct Layout {
    id: usize,
    t: Option<usize>,
    x1: Vec<usize>,
    x2: Vec<usize>,
    w: Vec<usize>,
    s: Vec<usize>,
    choice: usize,
}

fn block_columns(header: &csv::StringRecord, prefix: &str) -> Result<Vec<usize>> {
    let mut cols = Vec::new();
    for c in 1.. {
        let name = format!("{prefix}_{c}");
        match header.iter().position(|h| h.trim() == name) {
            Some(p) => cols.push(p),
            None => break,
        }
    }
    Ok(cols)
}

fn layout(header: &csv::StringRecord, panel: bool) -> Result<Layout> {
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::input(format!("missing column `{name}`")))
    };
    let l = Layout {
        id: find("id")?,
        t: if panel { Some(find("t")?) } else { None },
        x1: block_columns(header, "x1")?,
        x2: block_columns(header, "x2")?,
        w: block_columns(header, "w")?,
        s: block_columns(header, "s")?,
        choice: find("choice")?,
    };
    if l.x1.is_empty() || l.w.is_empty() {
        return Err(Error::input("need at least columns x1_1, x2_1 and w_1"));
    }
    if l.x1.len() != l.x2.len() {
        return Err(Error::input("x1 and x2 blocks must have the same width"));
    }
    Ok(l)
}

fn parse_num(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::input(format!("line {line}: cannot parse `{field}` as a number")))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::input(format!("line {line}: non-finite value")))
            }
        })
}

fn detect_discrete(data: &[f64], k: usize) -> Vec<bool> {
    (0..k)
        .map(|c| {
            let mut levels = BTreeSet::new();
            for v in data.iter().skip(c).step_by(k) {
                if v.fract() != 0.0 {
                    return false;
                }
                levels.insert(*v as i64);
                if levels.len() > MAX_DISCRETE_LEVELS {
                    return false;
                }
            }
            !levels.is_empty()
        })
        .collect()
}

struct Parsed {
    keys: Vec<(i64, String, i64)>,
    x1: Vec<f64>,
    x2: Vec<f64>,
    w: Vec<f64>,
    s: Vec<f64>,
    choices: Vec<Alternative>,
    l: Layout,
}

fn parse_rows<R: Read>(reader: R, panel: bool) -> Result<Parsed> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let l = layout(&header, panel)?;
    let mut p = Parsed {
        keys: Vec::new(),
        x1: Vec::new(),
        x2: Vec::new(),
        w: Vec::new(),
        s: Vec::new(),
        choices: Vec::new(),
        l,
    };
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = line + 2;
        let get = |c: usize| rec.get(c).ok_or_else(|| Error::input(format!("line {line}: short row")));
        let t = match p.l.t {
            Some(c) => get(c)?
                .parse::<i64>()
                .map_err(|_| Error::input(format!("line {line}: bad period")))?,
            None => 0,
        };
        let id = get(p.l.id)?;
        // Numeric ids sort numerically; anything else sorts after them by text.
        p.keys.push((id.parse::<i64>().unwrap_or(i64::MAX), id.to_string(), t));
        for (cols, dst) in [
            (&p.l.x1, &mut p.x1),
            (&p.l.x2, &mut p.x2),
            (&p.l.w, &mut p.w),
            (&p.l.s, &mut p.s),
        ] {
            for &c in cols {
                dst.push(parse_num(get(c)?, line)?);
            }
        }
        let ch = get(p.l.choice)?;
        p.choices.push(
            Alternative::parse(ch)
                .ok_or_else(|| Error::input(format!("line {line}: choice `{ch}` not in 00/10/01/11")))?,
        );
    }
    if p.choices.is_empty() {
        return Err(Error::input("no data rows"));
    }
    Ok(p)
}

/// Reads a cross-sectional sample. Discrete columns are auto-detected.
pub fn read_cross_csv<R: Read>(reader: R) -> Result<ChoiceSample> {
    let p = parse_rows(reader, false)?;
    let (k1, k2, k3) = (p.l.x1.len(), p.l.w.len(), p.l.s.len());
    let mut dx = detect_discrete(&p.x1, k1);
    for (a, b) in dx.iter_mut().zip(detect_discrete(&p.x2, k1)) {
        *a = *a && b;
    }
    let dw = detect_discrete(&p.w, k2);
    let ds = detect_discrete(&p.s, k3);
    ChoiceSample::new(k1, k2, k3, p.x1, p.x2, p.w, p.s, p.choices)?.with_discrete(dx, dw, ds)
}

/// Reads a panel sample. Rows may come in any order; they are sorted by
/// (id, t) and every agent must have the same number of periods.
pub fn read_panel_csv<R: Read>(reader: R) -> Result<PanelChoiceSample> {
    let p = parse_rows(reader, true)?;
    let (k1, k2, k3) = (p.l.x1.len(), p.l.w.len(), p.l.s.len());
    let mut order: Vec<usize> = (0..p.keys.len()).collect();
    order.sort_by(|&a, &b| p.keys[a].cmp(&p.keys[b]));
    let mut periods = 0;
    while periods < order.len() && p.keys[order[periods]].1 == p.keys[order[0]].1 {
        periods += 1;
    }
    if order.len() % periods != 0 {
        return Err(Error::input("agents have unequal numbers of periods"));
    }
    for chunk in order.chunks(periods) {
        let id = &p.keys[chunk[0]].1;
        if chunk.iter().any(|&r| &p.keys[r].1 != id) {
            return Err(Error::input("agents have unequal numbers of periods"));
        }
        if chunk.windows(2).any(|w| p.keys[w[0]].2 == p.keys[w[1]].2) {
            return Err(Error::input(format!("agent {id} has a repeated period")));
        }
    }
    let reorder = |data: &[f64], k: usize| {
        let mut out = Vec::with_capacity(data.len());
        for &r in &order {
            out.extend_from_slice(&data[r * k..(r + 1) * k]);
        }
        out
    };
    let x1 = reorder(&p.x1, k1);
    let x2 = reorder(&p.x2, k1);
    let w = reorder(&p.w, k2);
    let s = reorder(&p.s, k3);
    let choices = order.iter().map(|&r| p.choices[r]).collect();
    let mut dx = detect_discrete(&x1, k1);
    for (a, b) in dx.iter_mut().zip(detect_discrete(&x2, k1)) {
        *a = *a && b;
    }
    let dw = detect_discrete(&w, k2);
    let ds = detect_discrete(&s, k3);
    PanelChoiceSample::new(periods, k1, k2, k3, x1, x2, w, s, choices)?.with_discrete(dx, dw, ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ChoiceSample {
        ChoiceSample::new(
            2,
            1,
            1,
            vec![0.5, 1.0, -0.25, 0.0, 1.5, 1.0],
            vec![0.1, 0.0, 0.2, 1.0, 0.3, 0.0],
            vec![1.0, 2.0, 3.0],
            vec![-1.0, 0.0, 1.0],
            vec![Alternative::First, Alternative::Both, Alternative::Neither],
        )
        .unwrap()
    }

    #[test]
    fn alternative_bits() {
        assert_eq!(Alternative::First.d1(), 1);
        assert_eq!(Alternative::First.d2(), 0);
        assert_eq!(Alternative::Second.d1(), 0);
        assert_eq!(Alternative::Second.d2(), 1);
        for a in Alternative::ALL {
            assert_eq!(Alternative::parse(a.label()), Some(a));
        }
    }

    #[test]
    fn dimension_checks() {
        let e = ChoiceSample::new(2, 1, 0, vec![0.0; 3], vec![0.0; 4], vec![0.0; 2], vec![], vec![Alternative::Neither; 2]);
        assert!(e.is_err());
    }

    #[test]
    fn cross_csv_round_trip() {
        let s = tiny();
        let mut buf = Vec::new();
        write_cross_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,x1_1,x1_2,x2_1,x2_2,w_1,s_1,choice\n"));
        let back = read_cross_csv(buf.as_slice()).unwrap();
        assert_eq!(back.x1, s.x1);
        assert_eq!(back.choices, s.choices);
        assert_eq!(back.discrete_x, vec![false, true]);
        assert_eq!(back.discrete_w, vec![true]);
    }

    #[test]
    fn panel_csv_sorted_on_read() {
        let text = "id,t,x1_1,x2_1,w_1,choice\n2,2,1.5,0,0.5,11\n1,1,0.5,0,0.1,00\n2,1,0.25,1,0.2,10\n1,2,0.75,1,0.3,01\n";
        let p = read_panel_csv(text.as_bytes()).unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(p.periods, 2);
        assert_eq!(p.x1_row(1, 1), &[1.5]);
        assert_eq!(p.choice(0, 1), Alternative::Second);
        let mut buf = Vec::new();
        write_panel_csv(&p, &mut buf).unwrap();
        let again = read_panel_csv(buf.as_slice()).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn select_repeats_rows() {
        let s = tiny().select(&[2, 2, 0]);
        assert_eq!(s.n(), 3);
        assert_eq!(s.x1_row(1), &[1.5, 1.0]);
        assert_eq!(s.choices[2], Alternative::First);
    }

    #[test]
    fn bad_choice_rejected() {
        let text = "id,x1_1,x2_1,w_1,choice\n1,0,0,0,12\n";
        assert!(read_cross_csv(text.as_bytes()).is_err());
    }
}
