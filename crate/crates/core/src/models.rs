//! Path-loss predictors: the free-space baseline plus seven excess-loss
//! models driven by trunk count, woodland depth, foliage depth or foliage area.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SiteFeatures;
use crate::num::{Scalar, SPEED_OF_LIGHT};

/// Foliage depth, in meters, up to which the WMED law is defined.
pub const WMED_MAX_DEPTH_M: f64 = 400.0;
/// Foliage depth, in meters, where WMED switches from its linear branch.
pub const WMED_BREAKPOINT_M: f64 = 14.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Fspl,
    Af,
    Itu,
    Wmed,
    A1,
    A2,
    B,
    C,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Fspl,
        ModelKind::Af,
        ModelKind::Itu,
        ModelKind::Wmed,
        ModelKind::A1,
        ModelKind::A2,
        ModelKind::B,
        ModelKind::C,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Fspl => "FSPL",
            ModelKind::Af => "AF",
            ModelKind::Itu => "ITU",
            ModelKind::Wmed => "WMED",
            ModelKind::A1 => "A1",
            ModelKind::A2 => "A2",
            ModelKind::B => "B",
            ModelKind::C => "C",
        }
    }

    /// Parameter names in the order used by [`ModelParams::values`].
    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Fspl | ModelKind::Wmed => &[],
            ModelKind::Af => &["loss_per_tree_db"],
            ModelKind::Itu | ModelKind::B => &["max_attenuation_db", "specific_attenuation_db_per_m"],
            ModelKind::A1 => &["l1_db_per_m", "l2_db_per_m", "breakpoint_m"],
            ModelKind::A2 => &["l1_db_per_m", "breakpoint_m"],
            ModelKind::C => &["jump_db", "l1_db_per_m2", "l2_db_per_m2", "breakpoint_m2"],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s.trim().to_ascii_uppercase().as_str() {
            "FSPL" => ModelKind::Fspl,
            "AF" => ModelKind::Af,
            "ITU" => ModelKind::Itu,
            "WMED" => ModelKind::Wmed,
            "A1" | "A-I" | "AI" => ModelKind::A1,
            "A2" | "A-II" | "AII" => ModelKind::A2,
            "B" => ModelKind::B,
            "C" => ModelKind::C,
            _ => return Err(Error::UnknownModel(s.to_owned())),
        };
        Ok(kind)
    }
}

impl Serialize for ModelKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ModelKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parameters of one model, tagged by `model` when serialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ModelParams<T> {
    #[serde(rename = "FSPL")]
    Fspl {},
    #[serde(rename = "AF")]
    Af { loss_per_tree_db: T },
    #[serde(rename = "ITU")]
    Itu {
        max_attenuation_db: T,
        specific_attenuation_db_per_m: T,
    },
    #[serde(rename = "WMED")]
    Wmed {},
    #[serde(rename = "A1", alias = "A-I")]
    A1 {
        l1_db_per_m: T,
        l2_db_per_m: T,
        breakpoint_m: T,
    },
    #[serde(rename = "A2", alias = "A-II")]
    A2 { l1_db_per_m: T, breakpoint_m: T },
    #[serde(rename = "B")]
    B {
        max_attenuation_db: T,
        specific_attenuation_db_per_m: T,
    },
    #[serde(rename = "C")]
    C {
        jump_db: T,
        l1_db_per_m2: T,
        l2_db_per_m2: T,
        breakpoint_m2: T,
    },
}

impl<T: Scalar> ModelParams<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Fspl {} => ModelKind::Fspl,
            ModelParams::Af { .. } => ModelKind::Af,
            ModelParams::Itu { .. } => ModelKind::Itu,
            ModelParams::Wmed {} => ModelKind::Wmed,
            ModelParams::A1 { .. } => ModelKind::A1,
            ModelParams::A2 { .. } => ModelKind::A2,
            ModelParams::B { .. } => ModelKind::B,
            ModelParams::C { .. } => ModelKind::C,
        }
    }

    /// Parameter values ordered as [`ModelKind::parameter_names`].
    pub fn values(&self) -> Vec<T> {
        match *self {
            ModelParams::Fspl {} | ModelParams::Wmed {} => vec![],
            ModelParams::Af { loss_per_tree_db } => vec![loss_per_tree_db],
            ModelParams::Itu {
                max_attenuation_db,
                specific_attenuation_db_per_m,
            }
            | ModelParams::B {
                max_attenuation_db,
                specific_attenuation_db_per_m,
            } => vec![max_attenuation_db, specific_attenuation_db_per_m],
            ModelParams::A1 {
                l1_db_per_m,
                l2_db_per_m,
                breakpoint_m,
            } => vec![l1_db_per_m, l2_db_per_m, breakpoint_m],
            ModelParams::A2 {
                l1_db_per_m,
                breakpoint_m,
            } => vec![l1_db_per_m, breakpoint_m],
            ModelParams::C {
                jump_db,
                l1_db_per_m2,
                l2_db_per_m2,
                breakpoint_m2,
            } => vec![jump_db, l1_db_per_m2, l2_db_per_m2, breakpoint_m2],
        }
    }

    pub fn get(&self, name: &str) -> Option<T> {
        let names = self.kind().parameter_names();
        names.iter().position(|n| *n == name).map(|i| self.values()[i])
    }

    /// Builds parameters from values ordered as [`ModelKind::parameter_names`].
    /// No range validation is applied; see [`ModelParams::validate`].
    pub fn from_values(kind: ModelKind, v: &[T]) -> Result<Self> {
        let expected = kind.parameter_names().len();
        if v.len() != expected {
            return Err(Error::InvalidParams(format!(
                "{kind} takes {expected} parameters, got {}",
                v.len()
            )));
        }
        Ok(match kind {
            ModelKind::Fspl => ModelParams::Fspl {},
            ModelKind::Wmed => ModelParams::Wmed {},
            ModelKind::Af => ModelParams::Af { loss_per_tree_db: v[0] },
            ModelKind::Itu => ModelParams::Itu {
                max_attenuation_db: v[0],
                specific_attenuation_db_per_m: v[1],
            },
            ModelKind::B => ModelParams::B {
                max_attenuation_db: v[0],
                specific_attenuation_db_per_m: v[1],
            },
            ModelKind::A1 => ModelParams::A1 {
                l1_db_per_m: v[0],
                l2_db_per_m: v[1],
                breakpoint_m: v[2],
            },
            ModelKind::A2 => ModelParams::A2 {
                l1_db_per_m: v[0],
                breakpoint_m: v[1],
            },
            ModelKind::C => ModelParams::C {
                jump_db: v[0],
                l1_db_per_m2: v[1],
                l2_db_per_m2: v[2],
                breakpoint_m2: v[3],
            },
        })
    }

    /// Attenuation constants must be finite and nonnegative, breakpoints and
    /// exponential-model constants strictly positive.
    pub fn validate(&self) -> Result<()> {
        let kind = self.kind();
        for (name, v) in kind.parameter_names().iter().zip(self.values()) {
            let positive = name.starts_with("breakpoint")
                || *name == "max_attenuation_db"
                || *name == "specific_attenuation_db_per_m";
            let ok = v.is_finite() && if positive { v > T::zero() } else { v >= T::zero() };
            if !ok {
                let rule = if positive { "> 0" } else { ">= 0" };
                return Err(Error::InvalidParams(format!("{kind}: {name} = {v} must be finite and {rule}")));
            }
        }
        Ok(())
    }

    /// Constants fitted to the 28 GHz coniferous-forest campaign.
    pub fn reference(kind: ModelKind) -> Self {
        let l = T::lit;
        match kind {
            ModelKind::Fspl => ModelParams::Fspl {},
            ModelKind::Wmed => ModelParams::Wmed {},
            ModelKind::Af => ModelParams::Af { loss_per_tree_db: l(6.47) },
            ModelKind::Itu => ModelParams::Itu {
                max_attenuation_db: l(34.5),
                specific_attenuation_db_per_m: l(6.0),
            },
            ModelKind::A1 => ModelParams::A1 {
                l1_db_per_m: l(2.39),
                l2_db_per_m: l(0.12),
                breakpoint_m: l(WMED_BREAKPOINT_M),
            },
            ModelKind::A2 => ModelParams::A2 {
                l1_db_per_m: l(2.09),
                breakpoint_m: l(17.87),
            },
            ModelKind::B => ModelParams::B {
                max_attenuation_db: l(38.04),
                specific_attenuation_db_per_m: l(4.47),
            },
            ModelKind::C => ModelParams::C {
                jump_db: l(19.14),
                l1_db_per_m2: l(2.09),
                l2_db_per_m2: l(0.06),
                breakpoint_m2: l(18.02),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WmedMode {
    /// Reject foliage depths beyond 400 m.
    #[default]
    Strict,
    /// Continue the second branch beyond 400 m.
    Extrapolate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelCMode {
    /// Third branch exactly as printed: `A_f L1 + (a_f - A_f) L2`, no jump term.
    PaperLiteral,
    /// Third branch carries the jump term, making the curve continuous at `A_f`.
    #[default]
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelOptions {
    pub wmed_mode: WmedMode,
    pub model_c_mode: ModelCMode,
}

/// Predicted basic transmission loss split into baseline and excess parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction<T> {
    pub fspl_db: T,
    pub excess_db: T,
    pub total_db: T,
}

/// Friis free-space path loss in dB.
pub fn fspl<T: Scalar>(distance_m: T, f_ghz: T) -> Result<T> {
    if !(distance_m.is_finite() && distance_m > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "distance must be positive, got {distance_m} m"
        )));
    }
    if !(f_ghz.is_finite() && f_ghz > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "carrier frequency must be positive, got {f_ghz} GHz"
        )));
    }
    let four_pi = T::lit(4.0) * T::PI();
    Ok(T::lit(20.0) * (four_pi * distance_m * f_ghz * T::lit(1e9) / T::lit(SPEED_OF_LIGHT)).log10())
}

/// Constant loss per obstructing tree.
pub fn epl_af<T: Scalar>(n_trunks: usize, loss_per_tree_db: T) -> T {
    T::from_count(n_trunks) * loss_per_tree_db
}

/// Saturating exponential `A_m (1 - exp(-depth * gamma / A_m))`.
pub fn epl_itu<T: Scalar>(woodland_depth_m: T, max_attenuation_db: T, specific_attenuation: T) -> T {
    if max_attenuation_db <= T::zero() {
        return T::zero();
    }
    max_attenuation_db * -(-woodland_depth_m * specific_attenuation / max_attenuation_db).exp_m1()
}

/// The saturating exponential driven by LoS foliage depth instead of woodland depth.
pub fn epl_b<T: Scalar>(foliage_depth_m: T, max_attenuation_db: T, specific_attenuation: T) -> T {
    epl_itu(foliage_depth_m, max_attenuation_db, specific_attenuation)
}

/// The two WMED branches, without range checks.
pub fn wmed_branches<T: Scalar>(foliage_depth_m: T, f_ghz: T) -> (T, T) {
    let scale = f_ghz.powf(T::lit(0.284));
    (
        T::lit(0.45) * scale * foliage_depth_m,
        T::lit(1.33) * scale * foliage_depth_m.powf(T::lit(0.588)),
    )
}

/// Weissberger's modified exponential decay law, `f_ghz` in GHz.
pub fn epl_wmed<T: Scalar>(foliage_depth_m: T, f_ghz: T, mode: WmedMode) -> Result<T> {
    if !(foliage_depth_m >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "foliage depth must be nonnegative, got {foliage_depth_m}"
        )));
    }
    if foliage_depth_m > T::lit(WMED_MAX_DEPTH_M) {
        match mode {
            WmedMode::Strict => return Err(Error::WmedOutOfRange(foliage_depth_m.as_f64())),
            WmedMode::Extrapolate => {
                log::warn!("WMED extrapolated to {foliage_depth_m} m of foliage (defined up to 400 m)")
            }
        }
    }
    let (near, far) = wmed_branches(foliage_depth_m, f_ghz);
    Ok(if foliage_depth_m <= T::lit(WMED_BREAKPOINT_M) { near } else { far })
}

/// Two-slope linear model: slope `l1` up to `breakpoint`, `l2` beyond.
pub fn epl_a1<T: Scalar>(foliage_depth_m: T, l1: T, l2: T, breakpoint_m: T) -> T {
    if foliage_depth_m <= breakpoint_m {
        foliage_depth_m * l1
    } else {
        breakpoint_m * l1 + (foliage_depth_m - breakpoint_m) * l2
    }
}

/// Linear up to `breakpoint`, flat beyond.
pub fn epl_a2<T: Scalar>(foliage_depth_m: T, l1: T, breakpoint_m: T) -> T {
    foliage_depth_m.min(breakpoint_m) * l1
}

/// Foliage-area model with a jump of `jump_db` as soon as any foliage is present.
pub fn epl_c<T: Scalar>(
    foliage_area_m2: T,
    jump_db: T,
    l1: T,
    l2: T,
    breakpoint_m2: T,
    mode: ModelCMode,
) -> T {
    if foliage_area_m2 <= T::zero() {
        T::zero()
    } else if foliage_area_m2 <= breakpoint_m2 {
        foliage_area_m2 * l1 + jump_db
    } else {
        let tail = breakpoint_m2 * l1 + (foliage_area_m2 - breakpoint_m2) * l2;
        match mode {
            ModelCMode::PaperLiteral => tail,
            ModelCMode::Continuous => tail + jump_db,
        }
    }
}

/// Excess loss over free space for the given features.
pub fn excess_loss<T: Scalar>(
    features: &SiteFeatures<T>,
    params: &ModelParams<T>,
    f_ghz: T,
    options: &ModelOptions,
) -> Result<T> {
    Ok(match *params {
        ModelParams::Fspl {} => T::zero(),
        ModelParams::Af { loss_per_tree_db } => epl_af(features.trunk_count, loss_per_tree_db),
        ModelParams::Itu {
            max_attenuation_db,
            specific_attenuation_db_per_m,
        } => epl_itu(
            features.woodland_depth,
            max_attenuation_db,
            specific_attenuation_db_per_m,
        ),
        ModelParams::Wmed {} => epl_wmed(features.foliage_depth, f_ghz, options.wmed_mode)?,
        ModelParams::A1 {
            l1_db_per_m,
            l2_db_per_m,
            breakpoint_m,
        } => epl_a1(features.foliage_depth, l1_db_per_m, l2_db_per_m, breakpoint_m),
        ModelParams::A2 {
            l1_db_per_m,
            breakpoint_m,
        } => epl_a2(features.foliage_depth, l1_db_per_m, breakpoint_m),
        ModelParams::B {
            max_attenuation_db,
            specific_attenuation_db_per_m,
        } => epl_b(
            features.foliage_depth,
            max_attenuation_db,
            specific_attenuation_db_per_m,
        ),
        ModelParams::C {
            jump_db,
            l1_db_per_m2,
            l2_db_per_m2,
            breakpoint_m2,
        } => epl_c(
            features.foliage_area,
            jump_db,
            l1_db_per_m2,
            l2_db_per_m2,
            breakpoint_m2,
            options.model_c_mode,
        ),
    })
}

/// Total loss `FSPL(d) + EPL` for one receiver.
pub fn predict<T: Scalar>(
    features: &SiteFeatures<T>,
    params: &ModelParams<T>,
    f_ghz: T,
    options: &ModelOptions,
) -> Result<Prediction<T>> {
    let fspl_db = fspl(features.distance_3d, f_ghz)?;
    let excess_db = excess_loss(features, params, f_ghz, options)?;
    Ok(Prediction {
        fspl_db,
        excess_db,
        total_db: fspl_db + excess_db,
    })
}
