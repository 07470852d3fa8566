use ndarray::Array2;

use super::DataError;

/// `M x T` observations with optional `{0, 1}` anomaly labels of the same
/// shape.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesMatrix {
    values: Array2<f64>,
    labels: Option<Array2<u8>>,
    series_ids: Vec<String>,
}

impl SeriesMatrix {
    /// Series ids default to `s0, s1, ...`.
    pub fn new(values: Array2<f64>) -> Result<Self, DataError> {
        let ids = (0..values.nrows()).map(|i| format!("s{i}")).collect();
        Self::with_ids(values, ids)
    }

    pub fn with_ids(values: Array2<f64>, series_ids: Vec<String>) -> Result<Self, DataError> {
        if values.is_empty() {
            return Err(DataError::Empty);
        }
        if series_ids.len() != values.nrows() {
            return Err(DataError::Shape(format!(
                "{} series ids for {} rows",
                series_ids.len(),
                values.nrows()
            )));
        }
        Ok(SeriesMatrix {
            values,
            labels: None,
            series_ids,
        })
    }

    pub fn with_labels(mut self, labels: Array2<u8>) -> Result<Self, DataError> {
        self.set_labels(Some(labels))?;
        Ok(self)
    }

    pub fn set_labels(&mut self, labels: Option<Array2<u8>>) -> Result<(), DataError> {
        if let Some(l) = &labels {
            if l.dim() != self.values.dim() {
                return Err(DataError::Shape(format!(
                    "labels {:?} vs values {:?}",
                    l.dim(),
                    self.values.dim()
                )));
            }
            if l.iter().any(|&v| v > 1) {
                return Err(DataError::Shape("labels must be 0 or 1".into()));
            }
        }
        self.labels = labels;
        Ok(())
    }

    /// Number of series (M).
    pub fn n_series(&self) -> usize {
        self.values.nrows()
    }

    /// Number of timesteps (T).
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn labels(&self) -> Option<&Array2<u8>> {
        self.labels.as_ref()
    }

    pub fn series_ids(&self) -> &[String] {
        &self.series_ids
    }

    /// Labels, or all zeros when absent.
    pub fn labels_or_zeros(&self) -> Array2<u8> {
        self.labels
            .clone()
            .unwrap_or_else(|| Array2::zeros(self.values.dim()))
    }

    pub fn anomaly_count(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|&&v| v == 1).count())
    }
}
