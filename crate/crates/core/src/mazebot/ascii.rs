//! Text maze format.
//!
//! A `w`×`h` maze is `2h+1` lines of `3w+1` characters:
//!
//! ```text
//! +--+--+--+
//! |S>   |E |
//! +  +--+  +
//! |        |
//! +--+--+--+
//! ```
//!
//! Even lines hold corners `+` joined by `--` (wall) or two spaces (passage).
//! Odd lines alternate a separator (`|` wall, space passage) with a two-char
//! cell body. Bodies are two spaces, `E ` for the exit, or `S` followed by a
//! heading glyph `^ > v <` for the start. Trailing blank lines and `\r` are
//! ignored.

use super::{Cell, Heading, Maze, MazeError, Pose};

fn heading_glyph(h: Heading) -> char {
    match h {
        Heading::N => '^',
        Heading::E => '>',
        Heading::S => 'v',
        Heading::W => '<',
    }
}

pub fn render_maze(maze: &Maze) -> String {
    let (w, h) = (maze.width(), maze.height());
    let mut out = String::with_capacity((2 * h + 1) * (3 * w + 2));
    for row in 0..=h {
        out.push('+');
        for col in 0..w {
            let open = row < h && maze.is_open(Cell::new(col, row), Heading::N);
            out.push_str(if open { "  " } else { "--" });
            out.push('+');
        }
        out.push('\n');
        if row == h {
            break;
        }
        for col in 0..w {
            let cell = Cell::new(col, row);
            out.push(if maze.is_open(cell, Heading::W) {
                ' '
            } else {
                '|'
            });
            if cell == maze.start().cell {
                out.push('S');
                out.push(heading_glyph(maze.start().heading));
            } else if cell == maze.exit() {
                out.push_str("E ");
            } else {
                out.push_str("  ");
            }
        }
        out.push_str("|\n");
    }
    out
}

fn parse_err(msg: impl Into<String>) -> MazeError {
    MazeError::Parse(msg.into())
}

pub fn load_maze(text: &str) -> Result<Maze, MazeError> {
    let mut lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    if lines.len() < 3 || lines.len().is_multiple_of(2) {
        return Err(parse_err(format!(
            "expected an odd number (≥3) of lines, found {}",
            lines.len()
        )));
    }
    let rows: Vec<Vec<char>> = lines.iter().map(|l| l.chars().collect()).collect();
    let line_len = rows[0].len();
    if line_len < 4 || !(line_len - 1).is_multiple_of(3) {
        return Err(parse_err(format!(
            "line length {line_len} is not 3·width+1"
        )));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != line_len) {
        return Err(parse_err(format!(
            "ragged rows: line {} has {} characters, expected {line_len}",
            i + 1,
            rows[i].len()
        )));
    }
    let w = (line_len - 1) / 3;
    let h = (rows.len() - 1) / 2;
    let mut open = vec![0u8; w * h];
    let mut start = None;
    let mut exit = None;

    for (li, line) in rows.iter().enumerate() {
        let lineno = li + 1;
        if li % 2 == 0 {
            let r = li / 2;
            for col in 0..w {
                let base = 3 * col;
                if line[base] != '+' {
                    return Err(parse_err(format!(
                        "line {lineno}: expected '+' at column {}",
                        base + 1
                    )));
                }
                let seg = (line[base + 1], line[base + 2]);
                let is_open = match seg {
                    ('-', '-') => false,
                    (' ', ' ') => true,
                    ('-', ' ') | (' ', '-') => {
                        return Err(parse_err(format!(
                            "line {lineno}: half-drawn wall (asymmetric wall)"
                        )));
                    }
                    _ => {
                        return Err(parse_err(format!(
                            "line {lineno}: bad wall characters {seg:?}"
                        )))
                    }
                };
                if is_open {
                    if r == 0 || r == h {
                        return Err(MazeError::OpenBorder(Cell::new(col, r.min(h - 1))));
                    }
                    open[(r - 1) * w + col] |= Heading::S.bit();
                    open[r * w + col] |= Heading::N.bit();
                }
            }
            if line[3 * w] != '+' {
                return Err(parse_err(format!("line {lineno}: expected '+' at end")));
            }
        } else {
            let r = li / 2;
            for col in 0..=w {
                let sep = line[3 * col];
                let is_open = match sep {
                    '|' => false,
                    ' ' => true,
                    c => return Err(parse_err(format!("line {lineno}: bad separator {c:?}"))),
                };
                if is_open {
                    if col == 0 || col == w {
                        return Err(MazeError::OpenBorder(Cell::new(col.min(w - 1), r)));
                    }
                    open[r * w + col - 1] |= Heading::E.bit();
                    open[r * w + col] |= Heading::W.bit();
                }
                if col == w {
                    break;
                }
                let cell = Cell::new(col, r);
                match (line[3 * col + 1], line[3 * col + 2]) {
                    (' ', ' ') => {}
                    ('E', ' ') => {
                        if exit.replace(cell).is_some() {
                            return Err(parse_err("more than one exit marker"));
                        }
                    }
                    ('S', g) => {
                        let heading = match g {
                            '^' => Heading::N,
                            '>' => Heading::E,
                            'v' => Heading::S,
                            '<' => Heading::W,
                            c => {
                                return Err(parse_err(format!(
                                    "line {lineno}: bad heading glyph {c:?}"
                                )))
                            }
                        };
                        if start.replace(Pose { cell, heading }).is_some() {
                            return Err(parse_err("more than one start marker"));
                        }
                    }
                    body => {
                        return Err(parse_err(format!("line {lineno}: bad cell body {body:?}")))
                    }
                }
            }
        }
    }
    let start = start.ok_or_else(|| parse_err("missing start marker"))?;
    let exit = exit.ok_or_else(|| parse_err("missing exit marker"))?;
    Maze::new(w, h, open, start, exit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mazebot::generate_maze;

    const SAMPLE: &str = "\
+--+--+--+
|S>   |E |
+  +--+  +
|        |
+--+--+--+
";

    #[test]
    fn parses_sample() {
        let m = load_maze(SAMPLE).unwrap();
        assert_eq!((m.width(), m.height()), (3, 2));
        assert_eq!(
            m.start(),
            Pose {
                cell: Cell::new(0, 0),
                heading: Heading::E
            }
        );
        assert_eq!(m.exit(), Cell::new(2, 0));
        assert_eq!(
            m.open_mask(Cell::new(0, 0)),
            Heading::E.bit() | Heading::S.bit()
        );
        assert_eq!(m.open_mask(Cell::new(2, 0)), Heading::S.bit());
        assert_eq!(render_maze(&m), SAMPLE);
    }

    #[test]
    fn round_trip_generated() {
        for seed in 0..4 {
            let m = generate_maze(10, 10, seed).unwrap();
            assert_eq!(load_maze(&render_maze(&m)).unwrap(), m);
        }
    }

    #[test]
    fn one_by_one_cannot_hold_both_markers() {
        let only_start = "+--+\n|S>|\n+--+\n";
        assert_eq!(
            load_maze(only_start),
            Err(MazeError::Parse("missing exit marker".into()))
        );
        let only_exit = "+--+\n|E |\n+--+\n";
        assert_eq!(
            load_maze(only_exit),
            Err(MazeError::Parse("missing start marker".into()))
        );
    }

    #[test]
    fn rejects_malformed_text() {
        let ragged = "+--+--+\n|S>E |\n+--+--+\n";
        assert!(matches!(load_maze(ragged), Err(MazeError::Parse(m)) if m.contains("ragged")));
        let half = "+--+--+\n|S>|E |\n+- +--+\n";
        assert!(matches!(load_maze(half), Err(MazeError::Parse(m)) if m.contains("asymmetric")));
        let open_border = "+--+--+\n S>|E |\n+--+--+\n";
        assert!(matches!(
            load_maze(open_border),
            Err(MazeError::OpenBorder(_))
        ));
        let two_starts = "+--+--+\n|S>|S>|\n+--+--+\n";
        assert!(matches!(load_maze(two_starts), Err(MazeError::Parse(_))));
        assert!(matches!(load_maze(""), Err(MazeError::Parse(_))));
    }

    #[test]
    fn tolerates_crlf_and_trailing_blank_lines() {
        let crlf = SAMPLE.replace('\n', "\r\n") + "\r\n\n";
        assert_eq!(load_maze(&crlf).unwrap(), load_maze(SAMPLE).unwrap());
    }
}
