//! Four-connected grid maps and MovingAI map-file ingestion.
//!
//! A vertex is the row-major cell index `y * width + x`. Only passable cells
//! are vertices in the graph sense; blocked cells never appear in adjacency.

use std::fmt;

use thiserror::Error;

/// Row-major cell index.
pub type Vertex = usize;

/// Agent index into starts/goals/configurations.
pub type AgentId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapParseError {
    #[error("line {line}: malformed header: {reason}")]
    Header { line: usize, reason: String },
    #[error("line {line}: expected {expected} cells, found {found}")]
    RowLength { line: usize, expected: usize, found: usize },
    #[error("line {line}: expected {expected} map rows, found {found}")]
    RowCount { line: usize, expected: usize, found: usize },
    #[error("line {line}: unknown cell character {ch:?}")]
    UnknownCell { line: usize, ch: char },
}

#[derive(Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    passable: Vec<bool>,
    // Per-cell neighbor lists in the fixed order up, down, left, right.
    adjacency: Vec<Vec<Vertex>>,
}

/// One of the five unit actions. Order matters: it is the action index of
/// the policy's output head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Stay,
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Stay, Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Stay => (0, 0),
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl GridMap {
    /// Builds a map from a row-major passability mask.
    ///
    /// Panics if the mask length is not `width * height` or a dimension is 0.
    pub fn new(width: usize, height: usize, passable: Vec<bool>) -> Self {
        assert!(width >= 1 && height >= 1, "map dimensions must be positive");
        assert_eq!(passable.len(), width * height, "passable mask size");
        let mut map = GridMap {
            width,
            height,
            passable,
            adjacency: Vec::new(),
        };
        map.adjacency = (0..width * height)
            .map(|v| {
                if !map.passable[v] {
                    return Vec::new();
                }
                [Action::Up, Action::Down, Action::Left, Action::Right]
                    .into_iter()
                    .filter_map(|a| map.step(v, a))
                    .collect()
            })
            .collect();
        map
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![true; width * height])
    }

    /// Parses rows of `.`/`@` style characters without a header.
    pub fn from_rows(rows: &[&str]) -> Result<Self, MapParseError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if height == 0 || width == 0 {
            return Err(MapParseError::Header {
                line: 1,
                reason: "empty map".into(),
            });
        }
        let mut passable = Vec::with_capacity(width * height);
        for (i, row) in rows.iter().enumerate() {
            parse_row(row, width, i + 1, &mut passable)?;
        }
        Ok(Self::new(width, height, passable))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn passable_mask(&self) -> &[bool] {
        &self.passable
    }

    pub fn is_passable(&self, v: Vertex) -> bool {
        v < self.passable.len() && self.passable[v]
    }

    pub fn passable_count(&self) -> usize {
        self.passable.iter().filter(|&&p| p).count()
    }

    pub fn passable_xy(&self, x: isize, y: isize) -> bool {
        self.vertex_at(x, y).is_some_and(|v| self.passable[v])
    }

    pub fn vertex_at(&self, x: isize, y: isize) -> Option<Vertex> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(y as usize * self.width + x as usize)
        }
    }

    pub fn coords(&self, v: Vertex) -> (usize, usize) {
        (v % self.width, v / self.width)
    }

    /// Target of `action` from `v`, or `None` if it leaves the map or hits an obstacle.
    pub fn step(&self, v: Vertex, action: Action) -> Option<Vertex> {
        let (x, y) = self.coords(v);
        let (dx, dy) = action.delta();
        let u = self.vertex_at(x as isize + dx, y as isize + dy)?;
        self.passable[u].then_some(u)
    }

    pub fn neighbors(&self, v: Vertex) -> &[Vertex] {
        &self.adjacency[v]
    }

    pub fn are_adjacent(&self, u: Vertex, v: Vertex) -> bool {
        self.adjacency[u].contains(&v)
    }

    /// Connected-component label per cell; blocked cells get `usize::MAX`.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.cell_count()];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..self.cell_count() {
            if !self.passable[s] || label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &u in self.neighbors(v) {
                    if label[u] == usize::MAX {
                        label[u] = next;
                        stack.push(u);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Cells of the largest connected component, ascending.
    pub fn largest_component(&self) -> Vec<Vertex> {
        let label = self.components();
        let count = label.iter().filter(|&&l| l != usize::MAX).max().map_or(0, |m| m + 1);
        if count == 0 {
            return Vec::new();
        }
        let mut sizes = vec![0usize; count];
        for &l in label.iter().filter(|&&l| l != usize::MAX) {
            sizes[l] += 1;
        }
        // first label wins ties
        let best = (0..count).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap();
        (0..self.cell_count()).filter(|&v| label[v] == best).collect()
    }

    /// A copy of the map with everything outside the largest component blocked.
    pub fn keep_largest_component(&self) -> GridMap {
        let keep = self.largest_component();
        let mut passable = vec![false; self.cell_count()];
        for v in keep {
            passable[v] = true;
        }
        GridMap::new(self.width, self.height, passable)
    }

    /// Parses a MovingAI `.map` file.
    pub fn parse(text: &str) -> Result<Self, MapParseError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        let mut header = |key: &str| -> Result<Option<String>, MapParseError> {
            let (line, content) = lines.next().ok_or(MapParseError::Header {
                line: 0,
                reason: format!("missing `{key}` line"),
            })?;
            let mut parts = content.split_whitespace();
            match parts.next() {
                Some(k) if k == key => Ok(parts.next().map(str::to_owned)),
                _ => Err(MapParseError::Header {
                    line,
                    reason: format!("expected `{key}`, found {content:?}"),
                }),
            }
        };
        header("type")?;
        let height = parse_dim(header("height")?, 2)?;
        let width = parse_dim(header("width")?, 3)?;
        header("map")?;

        let mut passable = Vec::with_capacity(width * height);
        let mut rows = 0;
        let mut last_line = 4;
        for (line, content) in lines {
            last_line = line;
            if rows == height {
                if content.trim().is_empty() {
                    continue;
                }
                return Err(MapParseError::RowCount {
                    line,
                    expected: height,
                    found: rows + 1,
                });
            }
            parse_row(content, width, line, &mut passable)?;
            rows += 1;
        }
        if rows != height {
            return Err(MapParseError::RowCount {
                line: last_line,
                expected: height,
                found: rows,
            });
        }
        Ok(Self::new(width, height, passable))
    }

    /// Serializes in MovingAI format with `.` and `@`.
    pub fn to_map_string(&self) -> String {
        let mut out = format!("type octile\nheight {}\nwidth {}\nmap\n", self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(if self.passable[y * self.width + x] { '.' } else { '@' });
            }
            out.push('\n');
        }
        out
    }
}

fn parse_dim(value: Option<String>, line: usize) -> Result<usize, MapParseError> {
    let value = value.ok_or(MapParseError::Header {
        line,
        reason: "missing dimension value".into(),
    })?;
    match value.parse::<usize>() {
        Ok(d) if d >= 1 => Ok(d),
        _ => Err(MapParseError::Header {
            line,
            reason: format!("invalid dimension {value:?}"),
        }),
    }
}

fn parse_row(row: &str, width: usize, line: usize, out: &mut Vec<bool>) -> Result<(), MapParseError> {
    let found = row.chars().count();
    if found != width {
        return Err(MapParseError::RowLength {
            line,
            expected: width,
            found,
        });
    }
    for ch in row.chars() {
        out.push(match ch {
            '.' | 'G' => true,
            '@' | 'T' | 'O' => false,
            _ => return Err(MapParseError::UnknownCell { line, ch }),
        });
    }
    Ok(())
}

impl fmt::Debug for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GridMap {}x{}", self.width, self.height)?;
        for y in 0..self.height {
            let row: String = (0..self.width)
                .map(|x| if self.passable[y * self.width + x] { '.' } else { '@' })
                .collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}
