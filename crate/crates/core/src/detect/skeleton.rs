//! Binary thinning and branch-point extraction.

/// Neighbour offsets in the order P2..P9 (N, NE, E, SE, S, SW, W, NW).
const RING: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

#[inline]
fn ring(img: &[bool], w: usize, h: usize, x: usize, y: usize) -> [bool; 8] {
    RING.map(|(dx, dy)| {
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && img[ny as usize * w + nx as usize]
    })
}

/// Zhang-Suen thinning of a row-major binary image. Pixels outside the image
/// count as background.
pub fn zhang_suen_thin(img: &[bool], w: usize, h: usize) -> Vec<bool> {
    assert_eq!(img.len(), w * h);
    let mut cur = img.to_vec();
    let mut candidates: Vec<usize> = (0..w * h).filter(|&i| cur[i]).collect();
    let mut to_clear = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            to_clear.clear();
            for &i in &candidates {
                if !cur[i] {
                    continue;
                }
                let (x, y) = (i % w, i / w);
                let p = ring(&cur, w, h, x, y);
                let b = p.iter().filter(|v| **v).count();
                if !(2..=6).contains(&b) {
                    continue;
                }
                if crossings(&p) != 1 {
                    continue;
                }
                let (p2, p4, p6, p8) = (p[0], p[2], p[4], p[6]);
                let ok = if step == 0 {
                    !(p2 && p4 && p6) && !(p4 && p6 && p8)
                } else {
                    !(p2 && p4 && p8) && !(p2 && p6 && p8)
                };
                if ok {
                    to_clear.push(i);
                }
            }
            if !to_clear.is_empty() {
                changed = true;
                for &i in &to_clear {
                    cur[i] = false;
                }
            }
        }
        if !changed {
            break;
        }
        candidates.retain(|&i| cur[i]);
    }
    cur
}

/// Number of background-to-foreground transitions around the 8-ring.
#[inline]
fn crossings(p: &[bool; 8]) -> usize {
    (0..8).filter(|&k| !p[k] && p[(k + 1) % 8]).count()
}

/// Skeleton pixels where at least three branches meet: three or more
/// separate runs of skeleton pixels around the 8-ring. Counting runs rather
/// than neighbours keeps the corners of diagonal staircases out.
pub fn junction_mask(skel: &[bool], w: usize, h: usize) -> Vec<bool> {
    assert_eq!(skel.len(), w * h);
    (0..w * h)
        .map(|i| skel[i] && crossings(&ring(skel, w, h, i % w, i / w)) >= 3)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_ascii(rows: &[&str]) -> (Vec<bool>, usize, usize) {
        let h = rows.len();
        let w = rows[0].len();
        let v = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        (v, w, h)
    }

    #[test]
    fn thick_bar_thins_to_single_line() {
        let (img, w, h) = from_ascii(&[
            "...............",
            ".#############.",
            ".#############.",
            ".#############.",
            "...............",
        ]);
        let s = zhang_suen_thin(&img, w, h);
        let count = s.iter().filter(|v| **v).count();
        assert!((9..=13).contains(&count), "count {count}");
        for x in 0..w {
            let col = (0..h).filter(|&y| s[y * w + x]).count();
            assert!(col <= 1, "column {x} has {col} pixels");
        }
    }

    #[test]
    fn thinning_is_idempotent_on_a_line() {
        let (img, w, h) = from_ascii(&[".......", ".#####.", "......."]);
        let s = zhang_suen_thin(&img, w, h);
        assert_eq!(zhang_suen_thin(&s, w, h), s);
    }

    #[test]
    fn t_junction_is_found() {
        let (img, w, h) = from_ascii(&[
            "...........",
            ".#########.",
            ".....#.....",
            ".....#.....",
            ".....#.....",
            "...........",
        ]);
        let j = junction_mask(&img, w, h);
        let hits: Vec<_> = (0..w * h).filter(|&i| j[i]).map(|i| (i % w, i / w)).collect();
        assert!(hits.contains(&(5, 1)), "{hits:?}");
        assert!(hits.iter().all(|&(x, y)| (x as isize - 5).abs() <= 1 && (y as isize - 1).abs() <= 1));
    }

    #[test]
    fn staircase_has_no_junctions() {
        let (img, w, h) = from_ascii(&[
            "##......",
            ".##.....",
            "..##....",
            "...##...",
            "....##..",
        ]);
        assert!(junction_mask(&img, w, h).iter().all(|v| !v));
    }

    #[test]
    fn straight_line_has_no_junctions() {
        let (img, w, h) = from_ascii(&["........", ".######.", "........"]);
        assert!(junction_mask(&img, w, h).iter().all(|v| !v));
    }
}
