//! Object attribute vocabularies.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! attribute_enum {
    ($name:ident { $($variant:ident => $word:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $word),+
                }
            }

            pub fn from_name(word: &str) -> Option<Self> {
                match word {
                    $($word => Some($name::$variant),)+
                    _ => None,
                }
            }

            pub fn index(self) -> usize {
                Self::ALL.iter().position(|&v| v == self).expect("variant listed in ALL")
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

attribute_enum!(Shape { Circle => "circle", Square => "square", Triangle => "triangle" });
attribute_enum!(Color {
    Red => "red",
    Green => "green",
    Blue => "blue",
    Yellow => "yellow",
    Cyan => "cyan",
    Purple => "purple",
});
attribute_enum!(Size { Small => "small", Large => "large" });
attribute_enum!(Material { Matte => "matte", Shiny => "shiny" });

impl Color {
    pub fn rgb(self) -> [f32; 3] {
        match self {
            Color::Red => [0.90, 0.10, 0.10],
            Color::Green => [0.10, 0.70, 0.15],
            Color::Blue => [0.10, 0.20, 0.95],
            Color::Yellow => [0.95, 0.85, 0.10],
            Color::Cyan => [0.10, 0.85, 0.90],
            Color::Purple => [0.60, 0.15, 0.80],
        }
    }
}

/// Which attribute a filter, query or comparison inspects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Shape,
    Color,
    Size,
    Material,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [Attribute::Shape, Attribute::Color, Attribute::Size, Attribute::Material];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Shape => "shape",
            Attribute::Color => "color",
            Attribute::Size => "size",
            Attribute::Material => "material",
        }
    }

    pub fn from_name(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == word)
    }

    pub fn cardinality(self) -> usize {
        match self {
            Attribute::Shape => Shape::ALL.len(),
            Attribute::Color => Color::ALL.len(),
            Attribute::Size => Size::ALL.len(),
            Attribute::Material => Material::ALL.len(),
        }
    }
}

/// A concrete attribute value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttrValue {
    Shape(Shape),
    Color(Color),
    Size(Size),
    Material(Material),
}

impl AttrValue {
    pub fn attribute(self) -> Attribute {
        match self {
            AttrValue::Shape(_) => Attribute::Shape,
            AttrValue::Color(_) => Attribute::Color,
            AttrValue::Size(_) => Attribute::Size,
            AttrValue::Material(_) => Attribute::Material,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AttrValue::Shape(v) => v.name(),
            AttrValue::Color(v) => v.name(),
            AttrValue::Size(v) => v.name(),
            AttrValue::Material(v) => v.name(),
        }
    }

    pub fn parse(attribute: Attribute, word: &str) -> Option<Self> {
        match attribute {
            Attribute::Shape => Shape::from_name(word).map(AttrValue::Shape),
            Attribute::Color => Color::from_name(word).map(AttrValue::Color),
            Attribute::Size => Size::from_name(word).map(AttrValue::Size),
            Attribute::Material => Material::from_name(word).map(AttrValue::Material),
        }
    }

    /// Every value of `attribute`, in declaration order.
    pub fn all_of(attribute: Attribute) -> Vec<AttrValue> {
        match attribute {
            Attribute::Shape => Shape::ALL.iter().map(|&v| AttrValue::Shape(v)).collect(),
            Attribute::Color => Color::ALL.iter().map(|&v| AttrValue::Color(v)).collect(),
            Attribute::Size => Size::ALL.iter().map(|&v| AttrValue::Size(v)).collect(),
            Attribute::Material => Material::ALL.iter().map(|&v| AttrValue::Material(v)).collect(),
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
