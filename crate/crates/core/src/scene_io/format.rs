//! Line-oriented scene files.
//!
//! ```text
//! scene bathroom
//! columns x y z r g b sem
//! 0.120000 1.500000 0.000000 200 190 180 1
//! ```
//!
//! Positions carry 6 decimals, colours are integers in `[0, 255]`, `sem` is
//! an object-class id. `#` starts a comment; blank lines are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{ObjectId, PointCloud, SceneSample, Taxonomy};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Columns {
    colour: bool,
    sem: bool,
}

impl Columns {
    fn parse(tokens: &[&str]) -> Option<Self> {
        match tokens {
            ["columns", "x", "y", "z"] => Some(Self { colour: false, sem: false }),
            ["columns", "x", "y", "z", "r", "g", "b"] => Some(Self { colour: true, sem: false }),
            ["columns", "x", "y", "z", "sem"] => Some(Self { colour: false, sem: true }),
            ["columns", "x", "y", "z", "r", "g", "b", "sem"] => {
                Some(Self { colour: true, sem: true })
            }
            _ => None,
        }
    }

    fn width(self) -> usize {
        3 + if self.colour { 3 } else { 0 } + usize::from(self.sem)
    }

    fn header(self) -> String {
        let mut h = String::from("columns x y z");
        if self.colour {
            h.push_str(" r g b");
        }
        if self.sem {
            h.push_str(" sem");
        }
        h
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

pub fn load_scene(path: &Path, taxonomy: &Taxonomy) -> Result<SceneSample> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let scene_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_scene(&text, path, scene_id, taxonomy)
}

/// Parses scene text. `origin` only labels error messages.
pub fn parse_scene(
    text: &str,
    origin: &Path,
    scene_id: String,
    taxonomy: &Taxonomy,
) -> Result<SceneSample> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut scene_label = None;
    let mut columns = None;
    let mut positions = Vec::new();
    let mut colours = Vec::new();
    let mut labels = Vec::new();
    let n_objects = taxonomy.num_object_classes();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let tokens: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if scene_label.is_none() {
            match tokens.as_slice() {
                ["scene", name] => {
                    let id = taxonomy
                        .scene_id(name)
                        .ok_or_else(|| err(line_no, format!("unknown scene class {name:?}")))?;
                    scene_label = Some(id);
                    continue;
                }
                _ => return Err(err(line_no, "expected header `scene <class-name>`".into())),
            }
        }
        let Some(cols) = columns else {
            columns = Some(Columns::parse(&tokens).ok_or_else(|| {
                err(line_no, "expected `columns x y z [r g b] [sem]`".into())
            })?);
            continue;
        };
        if tokens.len() != cols.width() {
            return Err(err(
                line_no,
                format!("expected {} values, found {}", cols.width(), tokens.len()),
            ));
        }
        let mut p = [0.0; 3];
        for (a, tok) in tokens[..3].iter().enumerate() {
            let v: f64 = tok
                .parse()
                .map_err(|_| err(line_no, format!("non-numeric coordinate {tok:?}")))?;
            if !v.is_finite() {
                return Err(err(line_no, format!("non-finite coordinate {tok:?}")));
            }
            p[a] = v;
        }
        positions.push(p);
        let mut next = 3;
        if cols.colour {
            let mut c = [0u8; 3];
            for (a, tok) in tokens[3..6].iter().enumerate() {
                let v: i64 = tok
                    .parse()
                    .map_err(|_| err(line_no, format!("non-numeric colour {tok:?}")))?;
                if !(0..=255).contains(&v) {
                    return Err(err(line_no, format!("colour component {v} outside [0, 255]")));
                }
                c[a] = v as u8;
            }
            colours.push(c);
            next = 6;
        }
        if cols.sem {
            let tok = tokens[next];
            let v: u64 = tok
                .parse()
                .map_err(|_| err(line_no, format!("non-numeric label {tok:?}")))?;
            if v as usize >= n_objects {
                return Err(err(
                    line_no,
                    format!("label {v} outside {n_objects} object classes"),
                ));
            }
            labels.push(v as ObjectId);
        }
    }

    let last = text.lines().count().max(1);
    let scene_label = scene_label.ok_or_else(|| err(last, "missing scene header".into()))?;
    let cols = columns.ok_or_else(|| err(last, "missing columns line".into()))?;
    if positions.is_empty() {
        return Err(err(last, "scene has no points".into()));
    }
    let cloud = PointCloud::new(
        positions,
        cols.colour.then_some(colours),
        cols.sem.then_some(labels),
    )?;
    Ok(SceneSample {
        cloud,
        scene_label,
        scene_id,
    })
}

/// Renders a sample in the scene format.
pub fn write_scene(sample: &SceneSample, taxonomy: &Taxonomy) -> Result<String> {
    let name = taxonomy
        .scene_classes
        .get(sample.scene_label)
        .ok_or_else(|| Error::invalid(format!("scene label {} out of range", sample.scene_label)))?;
    let cloud = &sample.cloud;
    let cols = Columns {
        colour: cloud.colours().is_some(),
        sem: cloud.labels().is_some(),
    };
    let mut out = String::with_capacity(cloud.len() * 48 + 64);
    let _ = writeln!(out, "scene {name}");
    let _ = writeln!(out, "{}", cols.header());
    for i in 0..cloud.len() {
        let p = cloud.positions()[i];
        let _ = write!(out, "{:.6} {:.6} {:.6}", p[0], p[1], p[2]);
        if let Some(c) = cloud.colours() {
            let _ = write!(out, " {} {} {}", c[i][0], c[i][1], c[i][2]);
        }
        if let Some(l) = cloud.labels() {
            let _ = write!(out, " {}", l[i]);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_scene(sample: &SceneSample, path: &Path, taxonomy: &Taxonomy) -> Result<()> {
    let text = write_scene(sample, taxonomy)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Rounds a coordinate onto the 6-decimal grid the file format stores.
pub(crate) fn quantise(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tax() -> Taxonomy {
        Taxonomy::default()
    }

    fn parse(text: &str) -> Result<SceneSample> {
        parse_scene(text, Path::new("t.txt"), "t".into(), &tax())
    }

    #[test]
    fn parses_three_row_bathroom() {
        let s = parse(
            "scene bathroom\ncolumns x y z\n0 0 0\n# comment\n1.5 2 3\n\n-1 -2 -3 # tail\n",
        )
        .unwrap();
        assert_eq!(s.cloud.len(), 3);
        assert_eq!(s.scene_label, tax().scene_id("bathroom").unwrap());
        assert!(s.cloud.colours().is_none());
        assert_eq!(s.cloud.positions()[1], [1.5, 2.0, 3.0]);
    }

    #[test]
    fn colour_out_of_range_cites_line() {
        let text = "scene kitchen\ncolumns x y z r g b\n0 0 0 1 2 3\n0 0 0 1 2 3\n0 0 0 300 2 3\n";
        match parse(text) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 5);
                assert!(message.contains("300"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs_are_rejected_with_lines() {
        let cases = [
            ("scene nowhere\ncolumns x y z\n0 0 0\n", 1),
            ("columns x y z\n0 0 0\n", 1),
            ("scene office\ncolumns x y\n0 0\n", 2),
            ("scene office\ncolumns x y z\n0 zero 0\n", 3),
            ("scene office\ncolumns x y z sem\n0 0 0 20\n", 3),
            ("scene office\ncolumns x y z\n0 0 0 0\n", 3),
        ];
        for (text, want) in cases {
            match parse(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn single_point_round_trip_without_colours() {
        let s = SceneSample {
            cloud: PointCloud::new(vec![[0.25, -1.0, 2.125]], None, Some(vec![4])).unwrap(),
            scene_label: 3,
            scene_id: "one".into(),
        };
        let text = write_scene(&s, &tax()).unwrap();
        assert!(text.starts_with("scene library\ncolumns x y z sem\n"));
        let back = parse_scene(&text, Path::new("x"), "one".into(), &tax()).unwrap();
        assert_eq!(back, s);
        assert!(back.cloud.colours().is_none());
    }

    #[test]
    fn quantise_is_a_fixed_point_of_formatting() {
        for v in [0.1234567, -3.0000005, 12.9999999, 1e-7] {
            let q = quantise(v);
            let text = format!("{q:.6}");
            assert_eq!(text.parse::<f64>().unwrap(), q);
        }
    }

    fn arb_cloud(max: usize) -> impl Strategy<Value = PointCloud> {
        (1..max).prop_flat_map(|n| {
            (
                proptest::collection::vec(proptest::array::uniform3(-20_000_000i64..20_000_000), n),
                proptest::option::of(proptest::collection::vec(
                    proptest::array::uniform3(any::<u8>()),
                    n,
                )),
                proptest::option::of(proptest::collection::vec(0u16..20, n)),
            )
                .prop_map(|(pos, col, lab)| {
                    let pos = pos
                        .into_iter()
                        .map(|p| p.map(|v| v as f64 / 1e6))
                        .collect();
                    PointCloud::new(pos, col, lab).unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn save_load_is_identity(cloud in arb_cloud(1000), label in 0usize..21) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("s.txt");
            let s = SceneSample { cloud, scene_label: label, scene_id: "s".into() };
            save_scene(&s, &path, &tax()).unwrap();
            let back = load_scene(&path, &tax()).unwrap();
            prop_assert_eq!(&back, &s);
            // and the reverse direction is byte-identical
            let text = std::fs::read_to_string(&path).unwrap();
            prop_assert_eq!(write_scene(&back, &tax()).unwrap(), text);
        }
    }
}
