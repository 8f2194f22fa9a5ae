use crate::error::{Error, Result};

/// Sliding stride-1 windows over a scaled multi-channel series.
///
/// Sample `i` reads rows `i..i+W` as input and the first channel of rows
/// `i+W..i+W+H` as targets. Its anchor is the first channel of the last input
/// row, the "today" price the directional loss compares against.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    window: usize,
    horizon: usize,
    features: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    anchors: Vec<f64>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn features(&self) -> usize {
        self.features
    }

    /// Row-major `W x features` input for sample `i`.
    pub fn input(&self, i: usize) -> &[f64] {
        let size = self.window * self.features;
        &self.inputs[i * size..(i + 1) * size]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.horizon..(i + 1) * self.horizon]
    }

    pub fn anchor(&self, i: usize) -> f64 {
        self.anchors[i]
    }

    pub fn targets_mut(&mut self) -> &mut [f64] {
        &mut self.targets
    }

    /// Splits off the last `n` samples, preserving order.
    pub fn split_tail(&self, n: usize) -> (WindowedDataset, WindowedDataset) {
        let cut = self.len().saturating_sub(n);
        let size = self.window * self.features;
        let part = |from: usize, to: usize| WindowedDataset {
            window: self.window,
            horizon: self.horizon,
            features: self.features,
            inputs: self.inputs[from * size..to * size].to_vec(),
            targets: self.targets[from * self.horizon..to * self.horizon].to_vec(),
            anchors: self.anchors[from..to].to_vec(),
        };
        (part(0, cut), part(cut, self.len()))
    }
}

pub fn build_windows(mid: &[f64], window: usize, horizon: usize) -> Result<WindowedDataset> {
    let rows: Vec<[f64; 1]> = mid.iter().map(|&v| [v]).collect();
    build_windows_rows(&rows, window, horizon)
}

pub fn build_windows_rows<R: AsRef<[f64]>>(rows: &[R], window: usize, horizon: usize) -> Result<WindowedDataset> {
    if window == 0 || horizon == 0 {
        return Err(Error::invalid("window and horizon must be positive"));
    }
    if rows.len() < window + horizon {
        return Err(Error::invalid(format!(
            "series of length {} is too short for window {window} + horizon {horizon}",
            rows.len()
        )));
    }
    let features = rows[0].as_ref().len();
    if features == 0 {
        return Err(Error::invalid("rows have no channels"));
    }
    if let Some(bad) = rows.iter().find(|r| r.as_ref().len() != features) {
        return Err(Error::DimensionMismatch {
            what: "row width",
            expected: features,
            found: bad.as_ref().len(),
        });
    }
    let samples = rows.len() - window - horizon + 1;
    let mut inputs = Vec::with_capacity(samples * window * features);
    let mut targets = Vec::with_capacity(samples * horizon);
    let mut anchors = Vec::with_capacity(samples);
    for i in 0..samples {
        for row in &rows[i..i + window] {
            inputs.extend_from_slice(row.as_ref());
        }
        targets.extend(rows[i + window..i + window + horizon].iter().map(|r| r.as_ref()[0]));
        anchors.push(rows[i + window - 1].as_ref()[0]);
    }
    Ok(WindowedDataset {
        window,
        horizon,
        features,
        inputs,
        targets,
        anchors,
    })
}
