/// One measured point: abscissa (τ or pulse duration, µs), value and 1σ error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

impl Record {
    pub fn new(x: f64, y: f64, sigma: f64) -> Self {
        Self { x, y, sigma }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("record {index}: {reason}")]
    BadRecord { index: usize, reason: String },
    #[error("duplicate abscissa {x}")]
    Duplicate { x: f64 },
}

/// Records sorted by strictly increasing abscissa with positive errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
}

/// Echo scan: x = τ (µs), y = P(m_S = 0).
pub type EchoDataset = Dataset;
/// Rabi scan: x = pulse duration (µs), y = P(m_S = −1).
pub type RabiDataset = Dataset;

impl Dataset {
    /// Validate and sort. Input order does not matter.
    pub fn new(mut records: Vec<Record>) -> Result<Self, DatasetError> {
        for (index, r) in records.iter().enumerate() {
            if !(r.x.is_finite() && r.y.is_finite()) {
                return Err(DatasetError::BadRecord {
                    index,
                    reason: "non-finite value".into(),
                });
            }
            if !(r.sigma.is_finite() && r.sigma > 0.0) {
                return Err(DatasetError::BadRecord {
                    index,
                    reason: format!("sigma must be > 0, got {}", r.sigma),
                });
            }
        }
        records.sort_by(|a, b| a.x.total_cmp(&b.x));
        if let Some(w) = records.windows(2).find(|w| w[0].x == w[1].x) {
            return Err(DatasetError::Duplicate { x: w[0].x });
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.x)
    }

    /// Keep records with `x <= x_max`.
    pub fn truncated(&self, x_max: f64) -> Self {
        Self {
            records: self.records.iter().copied().filter(|r| r.x <= x_max).collect(),
        }
    }
}
