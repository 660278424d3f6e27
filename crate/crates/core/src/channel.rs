//! Statistical channel knowledge: per-subchannel user SNRs and their orderings.
//!
//! Users and subchannels are indexed from zero. `snr[i][k]` is the linear
//! channel SNR of user `k` on subchannel `i`, already scaled by `1/η_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tie-break offset, relative to the tied SNR value.
pub const DEFAULT_TIE_EPSILON: f64 = 1e-9;

/// Antenna configuration of the transmitter and of every receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MimoShape {
    pub n_t: usize,
    pub n_r: usize,
}

impl MimoShape {
    pub fn new(n_t: usize, n_r: usize) -> Result<Self> {
        if n_t == 0 || n_r == 0 {
            return Err(Error::InvalidInput(format!(
                "antenna counts must be >= 1, got {n_t}x{n_r}"
            )));
        }
        Ok(Self { n_t, n_r })
    }

    /// Number of spatial dimensions, `min(n_t, n_r)`.
    pub fn dims(&self) -> usize {
        self.n_t.min(self.n_r)
    }
}

impl std::fmt::Display for MimoShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.n_t, self.n_r)
    }
}

impl std::str::FromStr for MimoShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Parse(format!("expected <n_t>x<n_r>, got {s:?}")))?;
        let n_t = a
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad n_t in {s:?}")))?;
        let n_r = b
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad n_r in {s:?}")))?;
        MimoShape::new(n_t, n_r)
    }
}

/// Channel SNRs of `K` users over `M` subchannels with strict per-subchannel
/// orderings. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    n_users: usize,
    n_subchannels: usize,
    eta: Vec<f64>,
    snr: Vec<Vec<f64>>,
    /// `orderings[i][r]` is the user with the `(r+1)`-th largest SNR on subchannel `i`.
    orderings: Vec<Vec<usize>>,
}

impl ChannelStats {
    /// Builds the statistics, breaking exact ties by subtracting
    /// `epsilon · rank · value` from the later (higher-index) tied users.
    pub fn build(raw_snr: Vec<Vec<f64>>, eta: Vec<f64>, epsilon: f64) -> Result<Self> {
        let m = raw_snr.len();
        if m == 0 {
            return Err(Error::Dimension("no subchannels".into()));
        }
        if eta.len() != m {
            return Err(Error::Dimension(format!(
                "eta has {} entries for {} subchannels",
                eta.len(),
                m
            )));
        }
        let k = raw_snr[0].len();
        if k == 0 {
            return Err(Error::Dimension("no users".into()));
        }
        if let Some((i, row)) = raw_snr.iter().enumerate().find(|(_, r)| r.len() != k) {
            return Err(Error::Dimension(format!(
                "subchannel {i} has {} users, expected {k}",
                row.len()
            )));
        }
        if eta.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidInput("eta entries must be positive".into()));
        }
        let eta_sum: f64 = eta.iter().sum();
        if (eta_sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("eta sums to {eta_sum}, expected 1")));
        }
        if raw_snr.iter().flatten().any(|&s| !(s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput("SNRs must be finite and nonnegative".into()));
        }
        if !(epsilon > 0.0) || epsilon >= 0.5 {
            return Err(Error::InvalidInput(format!("tie epsilon {epsilon} out of (0, 0.5)")));
        }

        let mut snr = raw_snr;
        let mut orderings = Vec::with_capacity(m);
        for row in snr.iter_mut() {
            break_ties(row, epsilon)?;
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            orderings.push(order);
        }
        Ok(Self {
            n_users: k,
            n_subchannels: m,
            eta,
            snr,
            orderings,
        })
    }

    /// Uniform subchannel fractions `η_i = 1/M`.
    pub fn with_uniform_eta(raw_snr: Vec<Vec<f64>>) -> Result<Self> {
        let m = raw_snr.len().max(1);
        Self::build(raw_snr, vec![1.0 / m as f64; m], DEFAULT_TIE_EPSILON)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_subchannels(&self) -> usize {
        self.n_subchannels
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn snr_matrix(&self) -> &[Vec<f64>] {
        &self.snr
    }

    pub fn snr(&self, i: usize, k: usize) -> f64 {
        self.snr[i][k]
    }

    pub fn ordering(&self, i: usize) -> &[usize] {
        &self.orderings[i]
    }

    /// `π⁽ⁱ⁾(1)`.
    pub fn strongest(&self, i: usize) -> usize {
        self.orderings[i][0]
    }

    /// `π⁽ⁱ⁾(K)`.
    pub fn weakest(&self, i: usize) -> usize {
        self.orderings[i][self.n_users - 1]
    }

    /// Zero-based rank of user `k` on subchannel `i` (0 = strongest).
    pub fn rank_of(&self, i: usize, k: usize) -> usize {
        self.orderings[i]
            .iter()
            .position(|&u| u == k)
            .expect("orderings are permutations")
    }

    /// Users whose SNR on subchannel `i` is strictly larger than user `k`'s,
    /// in ascending user index.
    pub fn stronger_set(&self, i: usize, k: usize) -> Result<Vec<usize>> {
        self.check_subchannel(i)?;
        self.check_user(k)?;
        let rank = self.rank_of(i, k);
        let mut set = self.orderings[i][..rank].to_vec();
        set.sort_unstable();
        Ok(set)
    }

    pub(crate) fn check_subchannel(&self, i: usize) -> Result<()> {
        if i >= self.n_subchannels {
            return Err(Error::IndexOutOfRange {
                what: "subchannel",
                index: i,
                len: self.n_subchannels,
            });
        }
        Ok(())
    }

    pub(crate) fn check_user(&self, k: usize) -> Result<()> {
        if k >= self.n_users {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: k,
                len: self.n_users,
            });
        }
        Ok(())
    }

    /// Parses the plain-text matrix format: one subchannel per row of
    /// whitespace-separated linear SNRs. Lines starting with `#` are comments;
    /// an optional `eta ...` line gives the subchannel fractions (uniform
    /// otherwise).
    pub fn parse_text(text: &str, epsilon: f64) -> Result<Self> {
        let mut rows = Vec::new();
        let mut eta = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (is_eta, body) = match line.strip_prefix("eta") {
                Some(rest) => (true, rest),
                None => (false, line),
            };
            let values = body
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("line {}: bad number {t:?}", lineno + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if is_eta {
                eta = Some(values);
            } else {
                rows.push(values);
            }
        }
        let m = rows.len();
        let eta = eta.unwrap_or_else(|| vec![1.0 / m.max(1) as f64; m]);
        Self::build(rows, eta, epsilon)
    }

    /// Writes the plain-text matrix format read by [`ChannelStats::parse_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("# one subchannel per row, linear channel SNRs per user\n");
        out.push_str("eta");
        for e in &self.eta {
            out.push_str(&format!(" {e:.17e}"));
        }
        out.push('\n');
        for row in &self.snr {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Makes the values of `row` pairwise distinct. Within a tied group the
/// lowest user index keeps its value; the `r`-th later member loses
/// `epsilon · r · value`.
fn break_ties(row: &mut [f64], epsilon: f64) -> Result<()> {
    let k = row.len();
    for _ in 0..k.max(1) {
        let mut idx: Vec<usize> = (0..k).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        let mut changed = false;
        let mut start = 0;
        while start < k {
            let v = row[idx[start]];
            let mut end = start + 1;
            while end < k && row[idx[end]] == v {
                end += 1;
            }
            if end - start > 1 {
                if v == 0.0 {
                    return Err(Error::InvalidInput("cannot break a tie between zero SNRs".into()));
                }
                let mut group: Vec<usize> = idx[start..end].to_vec();
                group.sort_unstable();
                for (rank, &u) in group.iter().enumerate().skip(1) {
                    row[u] = v - epsilon * rank as f64 * v;
                }
                changed = true;
            }
            start = end;
        }
        if !changed {
            return Ok(());
        }
    }
    Err(Error::InvalidInput("tie breaking did not terminate".into()))
}
