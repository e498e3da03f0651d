//! Plain-text scene manifests. One directive per line:
//!
//! ```text
//! name room1
//! seed 42
//! n_sem 6
//! room <min xyz> <max xyz>
//! image <width> <height> <fov_x_deg>
//! orbit <count> <radius> <height> <look_at xyz>
//! halfspace <class> <albedo rgb> <normal xyz> <offset>
//! sphere <class> <albedo rgb> <center xyz> <radius>
//! box <class> <albedo rgb> <center xyz> <half_extents xyz>
//! ```

use nalgebra::Vector3;

use crate::error::SemvoxError;
use crate::synth::{OrbitSpec, Primitive, SceneSpec, Shape};
use crate::Result;

pub fn scene_to_text(scene: &SceneSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!("name {}\n", scene.name));
    out.push_str(&format!("seed {}\n", scene.seed));
    out.push_str(&format!("n_sem {}\n", scene.n_sem));
    out.push_str(&format!(
        "room {} {} {} {} {} {}\n",
        scene.room_min.x, scene.room_min.y, scene.room_min.z, scene.room_max.x, scene.room_max.y, scene.room_max.z
    ));
    out.push_str(&format!(
        "image {} {} {}\n",
        scene.image_width, scene.image_height, scene.fov_x_deg
    ));
    for o in &scene.orbits {
        out.push_str(&format!(
            "orbit {} {} {} {} {} {}\n",
            o.count, o.radius, o.height, o.look_at.x, o.look_at.y, o.look_at.z
        ));
    }
    for p in &scene.primitives {
        let c = p.color;
        match &p.shape {
            Shape::HalfSpace { normal, offset } => out.push_str(&format!(
                "halfspace {} {} {} {} {} {} {} {}\n",
                p.class_id, c[0], c[1], c[2], normal.x, normal.y, normal.z, offset
            )),
            Shape::Sphere { center, radius } => out.push_str(&format!(
                "sphere {} {} {} {} {} {} {} {}\n",
                p.class_id, c[0], c[1], c[2], center.x, center.y, center.z, radius
            )),
            Shape::Box { center, half_extents } => out.push_str(&format!(
                "box {} {} {} {} {} {} {} {} {} {}\n",
                p.class_id,
                c[0],
                c[1],
                c[2],
                center.x,
                center.y,
                center.z,
                half_extents.x,
                half_extents.y,
                half_extents.z
            )),
        }
    }
    out
}

fn err(ln: usize, detail: impl Into<String>) -> SemvoxError {
    SemvoxError::Format {
        format: "scene",
        detail: format!("line {}: {}", ln, detail.into()),
    }
}

pub fn read_scene_text(text: &str) -> Result<SceneSpec> {
    let mut scene = SceneSpec {
        name: String::new(),
        n_sem: 0,
        room_min: Vector3::zeros(),
        room_max: Vector3::zeros(),
        primitives: Vec::new(),
        orbits: Vec::new(),
        image_width: 320,
        image_height: 256,
        fov_x_deg: 75.0,
        seed: 0,
    };
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let key = it.next().unwrap();
        let rest: Vec<&str> = it.collect();
        let pf = |s: &str| s.parse::<f64>().map_err(|_| err(ln, format!("bad float {s}")));
        let pu = |s: &str| s.parse::<usize>().map_err(|_| err(ln, format!("bad integer {s}")));
        match key {
            "name" => scene.name = rest.join(" "),
            "seed" => scene.seed = rest[0].parse().map_err(|_| err(ln, "bad seed"))?,
            "n_sem" => scene.n_sem = pu(rest[0])?,
            "room" => {
                if rest.len() != 6 {
                    return Err(err(ln, "room needs 6 numbers"));
                }
                scene.room_min = Vector3::new(pf(rest[0])?, pf(rest[1])?, pf(rest[2])?);
                scene.room_max = Vector3::new(pf(rest[3])?, pf(rest[4])?, pf(rest[5])?);
            }
            "image" => {
                if rest.len() != 3 {
                    return Err(err(ln, "image needs width height fov"));
                }
                scene.image_width = pu(rest[0])?;
                scene.image_height = pu(rest[1])?;
                scene.fov_x_deg = pf(rest[2])?;
            }
            "orbit" => {
                if rest.len() != 6 {
                    return Err(err(ln, "orbit needs 6 numbers"));
                }
                scene.orbits.push(OrbitSpec {
                    count: pu(rest[0])?,
                    radius: pf(rest[1])?,
                    height: pf(rest[2])?,
                    look_at: Vector3::new(pf(rest[3])?, pf(rest[4])?, pf(rest[5])?),
                });
            }
            "halfspace" | "sphere" | "box" => {
                let need = match key {
                    "halfspace" => 8,
                    "sphere" => 8,
                    _ => 10,
                };
                if rest.len() != need {
                    return Err(err(ln, format!("{key} needs {need} numbers")));
                }
                let class_id = rest[0].parse::<u16>().map_err(|_| err(ln, "bad class id"))?;
                let color = [pf(rest[1])?, pf(rest[2])?, pf(rest[3])?];
                let shape = match key {
                    "halfspace" => Shape::HalfSpace {
                        normal: Vector3::new(pf(rest[4])?, pf(rest[5])?, pf(rest[6])?),
                        offset: pf(rest[7])?,
                    },
                    "sphere" => Shape::Sphere {
                        center: Vector3::new(pf(rest[4])?, pf(rest[5])?, pf(rest[6])?),
                        radius: pf(rest[7])?,
                    },
                    _ => Shape::Box {
                        center: Vector3::new(pf(rest[4])?, pf(rest[5])?, pf(rest[6])?),
                        half_extents: Vector3::new(pf(rest[7])?, pf(rest[8])?, pf(rest[9])?),
                    },
                };
                scene.primitives.push(Primitive { shape, class_id, color });
            }
            other => return Err(err(ln, format!("unknown directive {other}"))),
        }
    }
    if scene.n_sem == 0 {
        return Err(SemvoxError::Format { format: "scene", detail: "missing n_sem".into() });
    }
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_scene;

    #[test]
    fn scene_text_round_trip() {
        let scene = generate_scene(12, "roundtrip");
        let text = scene_to_text(&scene);
        let back = read_scene_text(&text).unwrap();
        assert_eq!(back, scene);
        assert_eq!(scene_to_text(&back), text);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let scene = generate_scene(1, "c");
        let mut text = String::from("# header comment\n\n");
        text.push_str(&scene_to_text(&scene));
        assert_eq!(read_scene_text(&text).unwrap(), scene);
    }
}
