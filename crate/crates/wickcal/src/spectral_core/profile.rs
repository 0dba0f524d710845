use rayon::prelude::*;
use serde::Serialize;

use super::DenseOperator;

/// Default absolute level below which per-mode norms count as round-off.
pub const NOISE_FLOOR: f64 = 1e-13;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ProfileRow {
    pub mode: usize,
    pub lattice: Vec<i64>,
    pub kabs: f64,
    pub raw: f64,
    pub weighted: Vec<f64>,
}

/// Per-mode weighted norms `(1+|k|²)^m ‖A e_k‖` for a list of orders `m`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DecayTable {
    pub m_list: Vec<i32>,
    pub rows: Vec<ProfileRow>,
    pub floor: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct OrderVerdict {
    pub m: i32,
    pub constant: f64,
    pub tail_max: f64,
    pub decaying: bool,
    pub floor_limited_modes: usize,
}

impl DecayTable {
    pub fn from_norms(m_list: &[i32], modes: Vec<(usize, Vec<i64>, f64, f64)>) -> Self {
        let rows = modes
            .into_iter()
            .map(|(mode, lattice, kabs, raw)| ProfileRow {
                weighted: m_list
                    .iter()
                    .map(|&m| (1.0 + kabs * kabs).powi(m) * raw)
                    .collect(),
                mode,
                lattice,
                kabs,
                raw,
            })
            .collect();
        Self { m_list: m_list.to_vec(), rows, floor: NOISE_FLOOR }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    fn column(&self, m: i32) -> usize {
        self.m_list
            .iter()
            .position(|&x| x == m)
            .unwrap_or_else(|| panic!("order {m} not in profile"))
    }

    /// Largest weighted value over modes whose raw norm clears the noise floor,
    /// and whether the outer third of the spectrum stays below half of it.
    pub fn verdict(&self, m: i32) -> OrderVerdict {
        let col = self.column(m);
        let kmax = self.rows.iter().map(|r| r.kabs).fold(0.0, f64::max);
        let mut constant: f64 = 0.0;
        let mut tail_max: f64 = 0.0;
        let mut floor_limited = 0;
        for r in &self.rows {
            if r.raw <= self.floor {
                floor_limited += 1;
                continue;
            }
            let w = r.weighted[col];
            constant = constant.max(w);
            if r.kabs >= 2.0 * kmax / 3.0 {
                tail_max = tail_max.max(w);
            }
        }
        let decaying = constant == 0.0 || tail_max <= 0.5 * constant;
        OrderVerdict { m, constant, tail_max, decaying, floor_limited_modes: floor_limited }
    }

    pub fn constant(&self, m: i32) -> f64 {
        self.verdict(m).constant
    }

    pub fn passes(&self, m: i32) -> bool {
        self.verdict(m).decaying
    }

    pub fn passes_bounded(&self, m: i32, bound: f64) -> bool {
        let v = self.verdict(m);
        v.decaying && v.constant <= bound
    }

    pub fn max_raw(&self) -> f64 {
        self.rows.iter().map(|r| r.raw).fold(0.0, f64::max)
    }

    /// Comma-separated table: mode index, lattice point, |k|, raw norm, weighted norms.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("mode,lattice,kabs,raw");
        for m in &self.m_list {
            s.push_str(&format!(",m{m}"));
        }
        s.push('\n');
        let mut rows: Vec<&ProfileRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.kabs.total_cmp(&b.kabs).then(a.mode.cmp(&b.mode)));
        for r in rows {
            let lat: Vec<String> = r.lattice.iter().map(|x| x.to_string()).collect();
            s.push_str(&format!("{},{},{:e},{:e}", r.mode, lat.join(" "), r.kabs, r.raw));
            for w in &r.weighted {
                s.push_str(&format!(",{w:e}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Decay profile of `A` over every Fourier mode of its grid.
pub fn smoothing_order_profile(a: &DenseOperator, m_list: &[i32]) -> DecayTable {
    let g = &a.grid;
    let modes = (0..g.points())
        .into_par_iter()
        .map(|j| (j, g.mode(j), g.kabs(j), a.mode_column_norm(j)))
        .collect();
    DecayTable::from_norms(m_list, modes)
}

/// Profile restricted to modes selected by `keep`.
pub fn smoothing_order_profile_on(
    a: &DenseOperator,
    m_list: &[i32],
    keep: impl Fn(usize) -> bool + Sync,
) -> DecayTable {
    let g = &a.grid;
    let modes = (0..g.points())
        .into_par_iter()
        .filter(|&j| keep(j))
        .map(|j| (j, g.mode(j), g.kabs(j), a.mode_column_norm(j)))
        .collect();
    DecayTable::from_norms(m_list, modes)
}
