use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::Result;

/// One outer step of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Loss weights used for this step's outer update.
    pub weights: Vec<f64>,
    /// Domain whose direction the outcome rule picked, if the rule uses one.
    pub outcome: Option<usize>,
    /// Hypothetical loss per domain.
    pub hypothetical: Vec<f64>,
    /// Full-batch training loss per domain, before the outer update.
    pub losses: Vec<f64>,
}

impl StepRecord {
    /// Weight on domain 0.
    pub fn lambda(&self) -> f64 {
        self.weights[0]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub steps: Vec<StepRecord>,
}

impl TrainRecord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.steps.iter().map(StepRecord::lambda).collect()
    }

    pub fn mean_lambda(&self) -> f64 {
        if self.steps.is_empty() {
            return f64::NAN;
        }
        self.lambdas().iter().sum::<f64>() / self.steps.len() as f64
    }

    /// Population variance of λ over the run, exactly 0 for a constant λ.
    pub fn lambda_variance(&self) -> f64 {
        let l = self.lambdas();
        let Some(&first) = l.first() else {
            return 0.0;
        };
        let n = l.len() as f64;
        let shifted: Vec<f64> = l.iter().map(|v| v - first).collect();
        let mean = shifted.iter().sum::<f64>() / n;
        shifted.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n
    }

    /// Writes one CSV row per step.
    ///
    /// Two domains: `step,lambda,outcome,h_0,h_1,loss_0,loss_1`, where
    /// `outcome` is Λ (1 when domain 0 was chosen). More domains: the
    /// `lambda` column becomes `w_0..w_{K-1}` and `outcome` is the chosen
    /// domain index. Rules without outcomes leave the column empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let k = self.steps.first().map_or(2, |s| s.weights.len());
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string()];
        if k == 2 {
            header.push("lambda".into());
        } else {
            header.extend((0..k).map(|i| format!("w_{i}")));
        }
        header.push("outcome".into());
        header.extend((0..k).map(|i| format!("h_{i}")));
        header.extend((0..k).map(|i| format!("loss_{i}")));
        out.write_record(&header)?;

        for s in &self.steps {
            let mut row = vec![s.step.to_string()];
            if k == 2 {
                row.push(s.lambda().to_string());
            } else {
                row.extend(s.weights.iter().map(f64::to_string));
            }
            row.push(match s.outcome {
                Some(c) if k == 2 => u8::from(c == 0).to_string(),
                Some(c) => c.to_string(),
                None => String::new(),
            });
            row.extend(s.hypothetical.iter().map(f64::to_string));
            row.extend(s.losses.iter().map(f64::to_string));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(step: usize, lambda: f64, outcome: Option<usize>) -> StepRecord {
        StepRecord {
            step,
            weights: vec![lambda, 1.0 - lambda],
            outcome,
            hypothetical: vec![1.5, 2.0],
            losses: vec![0.7, 0.8],
        }
    }

    #[test]
    fn csv_layout() {
        let rec = TrainRecord {
            steps: vec![step(0, 0.5, Some(0)), step(1, 0.25, Some(1)), step(2, 0.25, None)],
        };
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,lambda,outcome,h_0,h_1,loss_0,loss_1");
        assert_eq!(lines[1], "0,0.5,1,1.5,2,0.7,0.8");
        assert_eq!(lines[2], "1,0.25,0,1.5,2,0.7,0.8");
        assert_eq!(lines[3], "2,0.25,,1.5,2,0.7,0.8");
    }

    #[test]
    fn lambda_statistics() {
        let rec = TrainRecord {
            steps: vec![step(0, 0.2, None), step(1, 0.6, None)],
        };
        assert!((rec.mean_lambda() - 0.4).abs() < 1e-15);
        assert!((rec.lambda_variance() - 0.04).abs() < 1e-15);
        let flat = TrainRecord {
            steps: vec![step(0, 0.5, None), step(1, 0.5, None)],
        };
        assert_eq!(flat.lambda_variance(), 0.0);
        let long_flat = TrainRecord {
            steps: (0..1500).map(|i| step(i, 0.1, None)).collect(),
        };
        assert_eq!(long_flat.lambda_variance(), 0.0);
    }
}
