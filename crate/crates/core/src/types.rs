//! Scalar data types and the literal-promotion rules shared by the
//! interpreter and the emitters.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DType {
    I32,
    F32,
    F64,
}

impl DType {
    pub fn parse(s: &str) -> Option<DType> {
        match s {
            "i32" | "int32" | "int" => Some(DType::I32),
            "f32" | "float32" | "float" => Some(DType::F32),
            "f64" | "float64" | "double" => Some(DType::F64),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::I32 => "i32",
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }

    pub fn c_name(self) -> &'static str {
        match self {
            DType::I32 => "int",
            DType::F32 => "float",
            DType::F64 => "double",
        }
    }

    pub fn is_float(self) -> bool {
        self != DType::I32
    }

    /// Binary-format code used by array data files.
    pub fn code(self) -> u32 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
            DType::I32 => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<DType> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            2 => Some(DType::I32),
            _ => None,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Type of an expression before literals are pinned down.
///
/// Literals are "weak": an integer literal next to a float operand takes the
/// float's precision, a float literal next to an `f32` operand is `f32`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ty {
    WeakInt,
    WeakFloat,
    Strong(DType),
}

impl Ty {
    pub fn resolve(self) -> DType {
        match self {
            Ty::WeakInt => DType::I32,
            Ty::WeakFloat => DType::F64,
            Ty::Strong(d) => d,
        }
    }

    pub fn is_float(self) -> bool {
        self.resolve().is_float()
    }

    /// Result type of arithmetic between two operands.
    pub fn combine(a: Ty, b: Ty) -> Ty {
        use DType::*;
        match (a, b) {
            (Ty::Strong(x), Ty::Strong(y)) => Ty::Strong(x.max(y)),
            (Ty::Strong(F32), Ty::WeakFloat) | (Ty::WeakFloat, Ty::Strong(F32)) => Ty::Strong(F32),
            (Ty::Strong(I32), Ty::WeakFloat) | (Ty::WeakFloat, Ty::Strong(I32)) => Ty::Strong(F64),
            (Ty::Strong(x), _) | (_, Ty::Strong(x)) => Ty::Strong(x),
            (Ty::WeakFloat, _) | (_, Ty::WeakFloat) => Ty::WeakFloat,
            _ => Ty::WeakInt,
        }
    }

    /// Result type of `/`: integer division is promoted to `f64`.
    pub fn divide(a: Ty, b: Ty) -> Ty {
        let t = Ty::combine(a, b);
        if t.is_float() {
            t
        } else {
            Ty::Strong(DType::F64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_promotion() {
        assert_eq!(Ty::combine(Ty::WeakInt, Ty::Strong(DType::F32)), Ty::Strong(DType::F32));
        assert_eq!(Ty::combine(Ty::WeakFloat, Ty::Strong(DType::F32)), Ty::Strong(DType::F32));
        assert_eq!(Ty::combine(Ty::WeakFloat, Ty::Strong(DType::I32)), Ty::Strong(DType::F64));
        assert_eq!(Ty::combine(Ty::Strong(DType::F32), Ty::Strong(DType::F64)), Ty::Strong(DType::F64));
        assert_eq!(Ty::divide(Ty::Strong(DType::I32), Ty::WeakInt), Ty::Strong(DType::F64));
        assert_eq!(Ty::combine(Ty::WeakInt, Ty::WeakInt).resolve(), DType::I32);
    }
}
