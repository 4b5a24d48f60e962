//! The fixed set of semantic classes.

use core::fmt;

/// Label value written to files for points without a class.
pub const UNLABELED: u8 = 255;

/// One of the six semantic classes. The discriminant is the on-disk id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Class {
    Ground = 0,
    HighVegetation = 1,
    Building = 2,
    Road = 3,
    Car = 4,
    HumanMadeObject = 5,
}

impl Class {
    pub const COUNT: usize = 6;

    pub const ALL: [Class; Class::COUNT] = [
        Class::Ground,
        Class::HighVegetation,
        Class::Building,
        Class::Road,
        Class::Car,
        Class::HumanMadeObject,
    ];

    #[inline]
    pub fn id(self) -> u8 {
        self as u8
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_id(id: u8) -> Option<Class> {
        Class::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Ground => "ground",
            Class::HighVegetation => "high_vegetation",
            Class::Building => "building",
            Class::Road => "road",
            Class::Car => "car",
            Class::HumanMadeObject => "human_made_object",
        }
    }

    pub fn from_name(name: &str) -> Option<Class> {
        Class::ALL.iter().copied().find(|c| c.name() == name)
    }

    /// Display color used when writing label-colorized clouds.
    pub fn palette(self) -> [u8; 3] {
        match self {
            Class::Ground => [0xFF, 0xF3, 0x91],
            Class::HighVegetation => [0x4E, 0x9A, 0x06],
            Class::Building => [0xEF, 0x29, 0x29],
            Class::Road => [0x88, 0x8A, 0x85],
            Class::Car => [0xF5, 0x79, 0x00],
            Class::HumanMadeObject => [0x3F, 0xF3, 0xF6],
        }
    }

    /// Inverse of [`Class::palette`].
    pub fn from_palette(rgb: [u8; 3]) -> Option<Class> {
        Class::ALL.iter().copied().find(|c| c.palette() == rgb)
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_dense() {
        for (i, c) in Class::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(Class::from_id(i as u8), Some(*c));
            assert_eq!(Class::from_name(c.name()), Some(*c));
        }
        assert_eq!(Class::from_id(6), None);
        assert_eq!(Class::from_id(UNLABELED), None);
    }

    #[test]
    fn palette_is_a_bijection() {
        for a in Class::ALL {
            assert_eq!(Class::from_palette(a.palette()), Some(a));
            for b in Class::ALL {
                if a != b {
                    assert_ne!(a.palette(), b.palette());
                }
            }
        }
        assert_eq!(Class::Building.palette(), [0xEF, 0x29, 0x29]);
    }
}
