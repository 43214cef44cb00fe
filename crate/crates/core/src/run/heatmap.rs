use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{config_err, Result};
use crate::glimpse::{loc_to_pixel, Loc};

pub const TRACE_HEADER: &str = "episode,t,loc_x,loc_y,action,reward";

/// One step of an evaluation trace. `loc` is the glimpse center chosen at step `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub episode: u64,
    pub t: u64,
    pub loc_x: f64,
    pub loc_y: f64,
    pub action: usize,
    pub reward: f64,
}

impl TraceRecord {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.episode, self.t, self.loc_x, self.loc_y, self.action, self.reward
        )
    }

    fn parse(line: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(format!("expected 6 fields, found {}", fields.len()));
        }
        let int = |i: usize, name: &str| fields[i].parse::<u64>().map_err(|e| format!("{name}: {e}"));
        let real = |i: usize, name: &str| {
            fields[i]
                .parse::<f64>()
                .map_err(|e| format!("{name}: {e}"))
                .and_then(|v| if v.is_finite() { Ok(v) } else { Err(format!("{name} is not finite")) })
        };
        let rec = Self {
            episode: int(0, "episode")?,
            t: int(1, "t")?,
            loc_x: real(2, "loc_x")?,
            loc_y: real(3, "loc_y")?,
            action: int(4, "action")? as usize,
            reward: real(5, "reward")?,
        };
        for (name, v) in [("loc_x", rec.loc_x), ("loc_y", rec.loc_y)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(format!("{name} {v} outside [-1, 1]"));
            }
        }
        Ok(rec)
    }
}

/// A trace line that could not be used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejected {
    /// 1-based line number in the trace file.
    pub line: usize,
    pub reason: String,
}

/// Parses a trace. Bad records are returned with their line numbers; a
/// missing or wrong header fails the whole file.
pub fn parse_trace(text: &str) -> Result<(Vec<TraceRecord>, Vec<Rejected>)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        Some((_, h)) => {
            return Err(config_err(format!(
                "trace line 1: expected header {TRACE_HEADER:?}, found {h:?}"
            )))
        }
        None => return Err(config_err("trace is empty")),
    }
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        match TraceRecord::parse(line) {
            Ok(r) => records.push(r),
            Err(reason) => rejected.push(Rejected { line: i + 1, reason }),
        }
    }
    Ok((records, rejected))
}

/// Pixel-indexed counts of chosen glimpse centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    counts: Vec<u64>,
}

impl Heatmap {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(config_err(format!("heatmap size {height}x{width} is empty")));
        }
        Ok(Self {
            height,
            width,
            counts: vec![0; height * width],
        })
    }

    /// Pixel `(row, col)` a location is counted at.
    pub fn pixel_of(&self, loc: Loc) -> (usize, usize) {
        let (r, c) = loc_to_pixel(loc.clamped(), self.height, self.width);
        let r = (r.round() as usize).min(self.height - 1);
        let c = (c.round() as usize).min(self.width - 1);
        (r, c)
    }

    pub fn add(&mut self, loc: Loc) -> (usize, usize) {
        let (r, c) = self.pixel_of(loc);
        self.counts[r * self.width + c] += 1;
        (r, c)
    }

    pub fn from_records(height: usize, width: usize, records: &[TraceRecord]) -> Result<Self> {
        let mut h = Self::new(height, width)?;
        for r in records {
            h.add(Loc::new(r.loc_x as f32, r.loc_y as f32));
        }
        Ok(h)
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.width + col]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Binary PGM (P5), scaled so the largest count is 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        let pixels: Vec<u8> = self
            .counts
            .iter()
            .map(|&c| if max == 0 { 0 } else { ((c as f64 * 255.0 / max as f64).round()) as u8 })
            .collect();
        crate::run::pgm::encode(self.width, self.height, &pixels)
    }

    /// `row,col,count` for every non-zero pixel.
    pub fn to_sparse_csv(&self) -> String {
        let mut s = String::from("row,col,count\n");
        for r in 0..self.height {
            for c in 0..self.width {
                let n = self.get(r, c);
                if n > 0 {
                    writeln!(s, "{r},{c},{n}").expect("write to string");
                }
            }
        }
        s
    }

    /// Counts aggregated into a `rows x cols` grid of pixel blocks.
    pub fn binned(&self, rows: usize, cols: usize) -> Vec<u64> {
        let mut out = vec![0; rows * cols];
        for r in 0..self.height {
            for c in 0..self.width {
                out[(r * rows / self.height) * cols + c * cols / self.width] += self.get(r, c);
            }
        }
        out
    }

    /// Probability of each bin when locations are uniform on `[-1, 1]^2`,
    /// accounting for the half-width edge pixels of the rounding map.
    pub fn uniform_bin_probs(&self, rows: usize, cols: usize) -> Vec<f64> {
        let axis = |extent: usize, bins: usize| {
            let mut p = vec![0.0; bins];
            if extent == 1 {
                p[0] = 1.0;
                return p;
            }
            let span = (extent - 1) as f64;
            for i in 0..extent {
                let lo = (i as f64 - 0.5).max(0.0);
                let hi = (i as f64 + 0.5).min(span);
                p[i * bins / extent] += (hi - lo) / span;
            }
            p
        };
        let (pr, pc) = (axis(self.height, rows), axis(self.width, cols));
        pr.iter().flat_map(|a| pc.iter().map(move |b| a * b)).collect()
    }

    /// Pearson chi-square statistic of the binned counts against uniform
    /// locations, with its degrees of freedom.
    pub fn chi_square_uniform(&self, rows: usize, cols: usize) -> (f64, usize) {
        let total = self.total() as f64;
        let stat = self
            .binned(rows, cols)
            .iter()
            .zip(self.uniform_bin_probs(rows, cols))
            .filter(|(_, p)| *p > 0.0)
            .map(|(&o, p)| {
                let e = total * p;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        (stat, rows * cols - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_of_210_by_160_rounds_to_105_80() {
        let mut h = Heatmap::new(210, 160).unwrap();
        assert_eq!(h.add(Loc::CENTER), (105, 80));
        assert_eq!(h.get(105, 80), 1);
        assert_eq!(h.total(), 1);
    }

    #[test]
    fn corners_map_to_corner_pixels() {
        let h = Heatmap::new(64, 48).unwrap();
        assert_eq!(h.pixel_of(Loc::new(-1.0, -1.0)), (0, 0));
        assert_eq!(h.pixel_of(Loc::new(1.0, 1.0)), (63, 47));
        assert_eq!(h.pixel_of(Loc::new(1.0, -1.0)), (0, 47));
    }

    #[test]
    fn trace_rejects_bad_lines_with_numbers() {
        let text = format!("{TRACE_HEADER}\n0,0,0.5,0.5,1,0\n0,1,1.5,0,1,0\n0,2,abc,0,1,0\n\n0,3,-1,1,2,-1\n0,4,0,0\n");
        let (recs, rej) = parse_trace(&text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(rej.iter().map(|r| r.line).collect::<Vec<_>>(), vec![3, 4, 7]);
        assert!(rej[0].reason.contains("loc_x"));
        assert!(parse_trace("a,b\n").is_err());
    }

    #[test]
    fn record_round_trips() {
        let r = TraceRecord {
            episode: 3,
            t: 17,
            loc_x: -0.25,
            loc_y: 0.1,
            action: 2,
            reward: -0.01,
        };
        let (recs, rej) = parse_trace(&format!("{TRACE_HEADER}\n{}\n", r.to_csv())).unwrap();
        assert!(rej.is_empty());
        assert_eq!(recs, vec![r]);
    }

    #[test]
    fn pgm_and_csv_shapes() {
        let mut h = Heatmap::new(3, 4).unwrap();
        h.add(Loc::new(-1.0, -1.0));
        h.add(Loc::new(-1.0, -1.0));
        h.add(Loc::new(1.0, 1.0));
        let pgm = h.to_pgm();
        assert!(pgm.starts_with(b"P5\n4 3\n255\n"));
        let px = &pgm[pgm.len() - 12..];
        assert_eq!(px[0], 255);
        assert_eq!(px[11], 128);
        assert_eq!(h.to_sparse_csv(), "row,col,count\n0,0,2\n2,3,1\n");
    }

    #[test]
    fn uniform_probabilities_sum_to_one_and_bins_conserve() {
        let mut h = Heatmap::new(64, 64).unwrap();
        let p = h.uniform_bin_probs(8, 8);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // the outer bins lose half an edge pixel each
        assert!(p[0] < p[9]);
        for i in 0..50 {
            h.add(Loc::new((i as f32 / 25.0) - 1.0, 0.3));
        }
        assert_eq!(h.binned(8, 8).iter().sum::<u64>(), 50);
    }
}
