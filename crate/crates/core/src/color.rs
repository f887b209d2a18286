use serde::{Deserialize, Serialize};

/// Color classes a cone can carry on the track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeColor {
    Blue,
    Yellow,
    Orange,
}

/// Categorical belief over the three perceived classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorDistribution {
    pub p_blue: f64,
    pub p_yellow: f64,
    pub p_unknown: f64,
}

/// Perceived class index order used by [`ColorDistribution::as_array`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorClass {
    Blue,
    Yellow,
    Unknown,
}

impl ColorClass {
    pub const ALL: [ColorClass; 3] = [ColorClass::Blue, ColorClass::Yellow, ColorClass::Unknown];

    pub fn index(self) -> usize {
        match self {
            ColorClass::Blue => 0,
            ColorClass::Yellow => 1,
            ColorClass::Unknown => 2,
        }
    }

    pub fn from_index(i: usize) -> ColorClass {
        ColorClass::ALL[i]
    }
}

impl From<ConeColor> for ColorClass {
    /// Orange start-line cones are perceived as "unknown".
    fn from(c: ConeColor) -> Self {
        match c {
            ConeColor::Blue => ColorClass::Blue,
            ConeColor::Yellow => ColorClass::Yellow,
            ConeColor::Orange => ColorClass::Unknown,
        }
    }
}

impl ColorDistribution {
    pub const UNIFORM: ColorDistribution = ColorDistribution {
        p_blue: 1.0 / 3.0,
        p_yellow: 1.0 / 3.0,
        p_unknown: 1.0 / 3.0,
    };

    pub fn certain(class: ColorClass) -> Self {
        let mut a = [0.0; 3];
        a[class.index()] = 1.0;
        Self::from_array(a)
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        ColorDistribution {
            p_blue: a[0],
            p_yellow: a[1],
            p_unknown: a[2],
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p_blue, self.p_yellow, self.p_unknown]
    }

    /// Normalizes non-negative weights; all-zero input yields the uniform distribution.
    pub fn from_weights(w: [f64; 3]) -> Self {
        let w = w.map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 });
        let sum: f64 = w.iter().sum();
        if sum <= 0.0 {
            return Self::UNIFORM;
        }
        Self::from_array(w.map(|v| v / sum))
    }

    pub fn normalized(&self) -> Self {
        Self::from_weights(self.as_array())
    }

    pub fn get(&self, class: ColorClass) -> f64 {
        self.as_array()[class.index()]
    }

    /// Most likely class; ties resolve to the lower class index.
    pub fn argmax(&self) -> ColorClass {
        let a = self.as_array();
        let mut best = 0;
        for i in 1..3 {
            if a[i] > a[best] {
                best = i;
            }
        }
        ColorClass::from_index(best)
    }

    pub fn is_valid(&self) -> bool {
        let a = self.as_array();
        a.iter().all(|p| (0.0..=1.0).contains(p)) && (a.iter().sum::<f64>() - 1.0).abs() <= 1e-9
    }
}
