//! Run-length encoded binary masks.
//!
//! Runs alternate background/foreground over the row-major pixel order,
//! starting with a (possibly empty) background run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{Image, Mask};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
}

impl RleMask {
    pub fn encode(mask: &Mask) -> Self {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &b in mask.data() {
            if b != current {
                counts.push(run);
                run = 0;
                current = b;
            }
            run += 1;
        }
        counts.push(run);
        Self {
            width: mask.width(),
            height: mask.height(),
            counts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width as u64 * self.height as u64 > 1 << 26 {
            return Err(Error::Format("mask too large".into()));
        }
        let total: u64 = self.counts.iter().map(|&c| c as u64).sum();
        let expected = self.width as u64 * self.height as u64;
        if total != expected {
            return Err(Error::Format(format!(
                "run lengths sum to {total}, mask has {expected} pixels"
            )));
        }
        Ok(())
    }

    pub fn decode(&self) -> Result<Mask> {
        self.validate()?;
        let mut data = Vec::with_capacity(self.width as usize * self.height as usize);
        let mut value = false;
        for &c in &self.counts {
            data.extend(std::iter::repeat_n(value, c as usize));
            value = !value;
        }
        Image::from_vec(self.width, self.height, data)
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }
}
