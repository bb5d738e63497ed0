use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Reference cell shapes a domain can be tessellated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cell {
    Interval,
    Triangle,
    Tetrahedron,
}

impl Cell {
    pub const ALL: [Cell; 3] = [Cell::Interval, Cell::Triangle, Cell::Tetrahedron];

    pub fn name(self) -> &'static str {
        match self {
            Cell::Interval => "interval",
            Cell::Triangle => "triangle",
            Cell::Tetrahedron => "tetrahedron",
        }
    }

    pub fn geometric_dimension(self) -> usize {
        match self {
            Cell::Interval => 1,
            Cell::Triangle => 2,
            Cell::Tetrahedron => 3,
        }
    }

    /// Number of codimension-one entities bounding the cell.
    pub fn num_facets(self) -> usize {
        self.geometric_dimension() + 1
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Cell {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Cell::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::CellMismatch(format!("unknown cell '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_match_names() {
        assert_eq!(Cell::Interval.geometric_dimension(), 1);
        assert_eq!(Cell::Triangle.geometric_dimension(), 2);
        assert_eq!(Cell::Tetrahedron.geometric_dimension(), 3);
        assert_eq!(Cell::Triangle.num_facets(), 3);
        assert_eq!("tetrahedron".parse::<Cell>().unwrap(), Cell::Tetrahedron);
        assert!("hexagon".parse::<Cell>().is_err());
    }
}
