use std::path::{Path, PathBuf};

use log::warn;

use super::scene::{read_rgb, Scene};
use crate::error::{Error, Result};
use crate::geometry::GraspRect;

/// Rectangles read from one annotation file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRects {
    pub rects: Vec<GraspRect<f64>>,
    /// Quadruples dropped for NaN or degenerate vertices.
    pub skipped: usize,
}

/// Parse a Cornell `cpos`/`cneg` file: "x y" per line, four lines per
/// rectangle.
pub fn parse_rect_file(path: &Path) -> Result<ParsedRects> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if !lines.len().is_multiple_of(4) {
        return Err(Error::format(
            path,
            format!("{} vertex lines is not a multiple of 4", lines.len()),
        ));
    }
    let mut rects = Vec::with_capacity(lines.len() / 4);
    let mut skipped = 0;
    for (q, quad) in lines.chunks(4).enumerate() {
        let mut pts = [[0.0f64; 2]; 4];
        for (i, line) in quad.iter().enumerate() {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format(path, format!("line {}: {e}", 4 * q + i + 1)))?;
            if vals.len() != 2 {
                return Err(Error::format(path, format!("line {}: expected \"x y\"", 4 * q + i + 1)));
            }
            pts[i] = [vals[0], vals[1]];
        }
        match GraspRect::from_quad(pts) {
            Ok(r) => rects.push(r),
            Err(_) => skipped += 1,
        }
    }
    if skipped > 0 {
        warn!("{}: skipped {skipped} rectangle(s) with NaN or degenerate vertices", path.display());
    }
    Ok(ParsedRects { rects, skipped })
}

/// Load one Cornell image with its positive and optional negative rectangles.
pub fn load_cornell_scene(image_path: &Path, pos_path: &Path, neg_path: Option<&Path>) -> Result<Scene> {
    if !image_path.is_file() {
        return Err(Error::io(
            image_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "image not found"),
        ));
    }
    let pos = parse_rect_file(pos_path)?;
    let neg = match neg_path {
        Some(p) => parse_rect_file(p)?,
        None => ParsedRects { rects: Vec::new(), skipped: 0 },
    };
    let image = read_rgb(image_path)?;
    let id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().trim_end_matches('r').to_string())
        .unwrap_or_default();
    Ok(Scene {
        id,
        image,
        positive: pos.rects,
        negative: neg.rects,
        skipped: pos.skipped + neg.skipped,
    })
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("pcd") && n.ends_with("r.png"))
        {
            out.push(path);
        }
    }
    Ok(())
}

/// Load every `pcdXXXXr.png` under `dir` that has a matching `cpos.txt`,
/// sorted by path.
pub fn load_cornell_dir(dir: &Path) -> Result<Vec<Scene>> {
    let mut images = Vec::new();
    walk(dir, &mut images)?;
    images.sort();
    let mut scenes = Vec::with_capacity(images.len());
    for img in images {
        let stem = img.to_string_lossy();
        let base = stem.trim_end_matches("r.png");
        let pos = PathBuf::from(format!("{base}cpos.txt"));
        if !pos.is_file() {
            warn!("{}: no cpos annotation, skipped", img.display());
            continue;
        }
        let neg = PathBuf::from(format!("{base}cneg.txt"));
        let neg = neg.is_file().then_some(neg);
        scenes.push(load_cornell_scene(&img, &pos, neg.as_deref())?);
    }
    Ok(scenes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn groups_lines_in_fours() {
        let d = tempfile::tempdir().unwrap();
        let p = write(
            d.path(),
            "a.txt",
            "10 10\n30 10\n30 20\n10 20\n50 50\n50 70\n40 70\n40 50\n",
        );
        let r = parse_rect_file(&p).unwrap();
        assert_eq!(r.rects.len(), 2);
        assert_eq!(r.skipped, 0);
        assert!((r.rects[0].width() - 20.0).abs() < 1e-9);
        assert!((r.rects[1].width() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn nan_quad_is_skipped() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "a.txt", "10 10\nNaN NaN\n30 20\n10 20\n");
        let r = parse_rect_file(&p).unwrap();
        assert!(r.rects.is_empty());
        assert_eq!(r.skipped, 1);
    }

    #[test]
    fn bad_line_count_names_file() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "pcd0100cpos.txt", "1 2\n3 4\n5 6\n");
        let e = parse_rect_file(&p).unwrap_err();
        assert!(matches!(e, Error::Format { .. }));
        assert!(e.to_string().contains("pcd0100cpos.txt"));
    }

    #[test]
    fn missing_file_is_io_error() {
        let e = parse_rect_file(Path::new("/nonexistent/x.txt")).unwrap_err();
        assert!(matches!(e, Error::Io { .. }));
    }

    #[test]
    fn loads_directory_layout() {
        let d = tempfile::tempdir().unwrap();
        let sub = d.path().join("01");
        std::fs::create_dir(&sub).unwrap();
        image::RgbImage::from_pixel(80, 64, image::Rgb([10, 20, 30])).save(sub.join("pcd0100r.png")).unwrap();
        write(&sub, "pcd0100cpos.txt", "10 10\n30 10\n30 20\n10 20\n");
        write(&sub, "pcd0100cneg.txt", "10 10\n30 10\n30 20\n10 20\n10 10\n30 10\n30 20\n10 20\n");
        let scenes = load_cornell_dir(d.path()).unwrap();
        assert_eq!(scenes.len(), 1);
        assert_eq!(scenes[0].id, "pcd0100");
        assert_eq!((scenes[0].positive.len(), scenes[0].negative.len()), (1, 2));
        assert_eq!(scenes[0].image.dim(), (64, 80, 3));
    }
}
