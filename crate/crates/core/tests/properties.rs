//! Property tests for the core invariants.

use proptest::prelude::*;

use glassgeom::camera::Camera;
use glassgeom::codec::{decode_stack, DEFAULT_MIN_CONTRAST};
use glassgeom::geom::{RigidTransform, Vec3};
use glassgeom::graycode::{gen_patterns, gray_decode, gray_encode, StackMeta};
use glassgeom::grid::Grid2;
use glassgeom::render::{
    render_capture, trace_pixel, PatternPlane, RayStatus, Scene, SensorParams, ShapeSpec,
    TransparentObject,
};

proptest! {
    /// Grid file round trips are bit-exact, NaN payloads included.
    #[test]
    fn grid_roundtrip_bit_exact(
        width in 1usize..24,
        height in 1usize..24,
        channels in 1usize..=3,
        seed in any::<u64>(),
    ) {
        let n = width * height * channels;
        let mut state = seed | 1;
        let data: Vec<f32> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let bits = (state >> 32) as u32;
                // one in four values becomes a NaN with a random payload
                if bits % 4 == 0 {
                    f32::from_bits(0x7fc0_0000 | (bits & 0x003f_ffff))
                } else {
                    f32::from_bits(bits & 0x7f7f_ffff) // finite range
                }
            })
            .collect();
        let grid = Grid2::from_data(width, height, channels, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.rfg");
        grid.write(&path).unwrap();
        let back = Grid2::read(&path).unwrap();
        prop_assert_eq!(grid.data().len(), back.data().len());
        for (a, b) in grid.data().iter().zip(back.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    /// project . backproject is the identity on pixels.
    #[test]
    fn project_backproject_identity(
        px in 0.0f64..255.0,
        py in 0.0f64..255.0,
        depth in 0.05f64..10.0,
        fx in 50.0f64..800.0,
        fy in 50.0f64..800.0,
    ) {
        let cam = Camera::new(256, 256, fx, fy, 127.5, 127.5, RigidTransform::identity()).unwrap();
        let p = cam.backproject([px, py], depth).unwrap();
        prop_assert_eq!(p.z, depth);
        let back = cam.project(p).unwrap();
        prop_assert!((back[0] - px).abs() < 1e-6);
        prop_assert!((back[1] - py).abs() < 1e-6);
    }

    /// Gray codes round trip and neighboring values differ in exactly one bit.
    #[test]
    fn gray_code_roundtrip(bits in 1u32..=16, seed in any::<u64>()) {
        let n = (seed % (1u64 << bits)) as u32;
        let c = gray_encode(n, bits).unwrap();
        prop_assert_eq!(gray_decode(c, bits).unwrap(), n);
        if n + 1 < (1 << bits) {
            let c2 = gray_encode(n + 1, bits).unwrap();
            prop_assert_eq!((c ^ c2).count_ones(), 1);
        }
    }

    /// Decoding is exactly invariant to affine intensity changes that keep
    /// the frames in range.
    #[test]
    fn decode_affine_invariance(gain in 0.3f32..1.0, offset in 0.0f32..0.1) {
        let meta = StackMeta::new(4, 16, 16).unwrap();
        let mut frames = Vec::new();
        for idx in 0..meta.frame_count() {
            let mut g = Grid2::zeros(16, 16, 1).unwrap();
            for y in 0..16 {
                for x in 0..16 {
                    g.set(x, y, 0, meta.frame_value(idx, x as u32, y as u32));
                }
            }
            frames.push(g);
        }
        let transformed: Vec<Grid2> = frames
            .iter()
            .map(|f| {
                let data = f.data().iter().map(|&v| gain * v + offset).collect();
                Grid2::from_data(16, 16, 1, data).unwrap()
            })
            .collect();
        let a = decode_stack(&frames, &meta, DEFAULT_MIN_CONTRAST).unwrap();
        let b = decode_stack(&transformed, &meta, DEFAULT_MIN_CONTRAST).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// Decoded coordinates of a rendered shell capture stay within one pattern
/// unit of the tracer's continuous background intersection.
#[test]
fn decoded_coords_track_traced_background_within_one_unit() {
    let scene = Scene {
        camera: Camera::default_256(),
        plane: PatternPlane::default_at(0.8),
        objects: vec![TransparentObject {
            shape: ShapeSpec::SphereShell { outer_r: 0.045, thickness: 0.007 },
            pose: RigidTransform::new(nalgebra::Matrix3::identity(), Vec3::new(0.01, -0.005, 0.755)),
            ior: 1.5,
        }],
        sensor: SensorParams::default(),
        seed: 11,
    };
    let patterns = gen_patterns(10, 1024, 1024).unwrap();
    let capture = render_capture(&scene, &patterns).unwrap();
    let decoded = decode_stack(&capture, &scene.plane.pattern, DEFAULT_MIN_CONTRAST).unwrap();

    let mut checked = 0usize;
    for y in (0..256).step_by(2) {
        for x in (0..256).step_by(2) {
            if !decoded.is_decoded(x, y) {
                continue;
            }
            let o = trace_pixel(&scene, [x as f64, y as f64]).unwrap();
            if !matches!(o.status, RayStatus::BackgroundDirect | RayStatus::BackgroundRefracted) {
                continue;
            }
            let [u, v] = o.background_pattern_coord;
            let d = decoded.get(x, y);
            assert!(
                (d[0] as f64 - u).abs() <= 1.0 && (d[1] as f64 - v).abs() <= 1.0,
                "pixel ({x},{y}): decoded {d:?} vs traced ({u:.2},{v:.2})",
            );
            checked += 1;
        }
    }
    assert!(checked > 5_000, "checked only {checked} pixels");
}
