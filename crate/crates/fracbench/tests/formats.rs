//! Round trips, malformed input, and CSV/JSON parity.

use fracbench::io::mha::{encode_mha, parse_mha, MhaImage, ReadOptions};
use fracbench::io::tiff::{decode_float_tiff, decode_mask_tiff, encode_float_tiff, encode_mask_tiff, FloatImage};
use fracbench::io::DEFAULT_MAX_BYTES;
use fracbench::results::{encode_results, fmt6, read_leaderboard_csv, read_leaderboard_json, round6, Format, Results};
use fracbench_core::ranking::{rank_teams, TeamMeans};
use fracbench_core::volume::{Grid, IntensityVolume, LabelVolume, MultiLabelMask2D};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Grid> {
    (1usize..12, 1usize..12, 1usize..12, prop::array::uniform3(0.1f64..5.0), prop::array::uniform3(-500.0f64..500.0))
        .prop_map(|(x, y, z, s, o)| Grid::new([x, y, z], s, o).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn label_volumes_round_trip(g in grid_strategy(), seed in any::<u64>(), compressed in any::<bool>()) {
        let voxels: Vec<u8> = (0..g.len() as u64).map(|i| ((i.wrapping_mul(seed | 1) >> 7) % 31) as u8).collect();
        let vol = LabelVolume::new(g, voxels).unwrap();
        let img = MhaImage::from_labels(&vol, compressed);
        let bytes = encode_mha(&img).unwrap();
        let back = parse_mha(&bytes, &ReadOptions::default()).unwrap();
        prop_assert_eq!(back.to_labels().unwrap(), vol);
        prop_assert_eq!(encode_mha(&back).unwrap(), bytes);
    }

    #[test]
    fn intensity_volumes_round_trip(g in grid_strategy(), v in prop::num::f32::NORMAL, compressed in any::<bool>()) {
        let vol = IntensityVolume::new(g, (0..g.len()).map(|i| v * i as f32).collect()).unwrap();
        let bytes = encode_mha(&MhaImage::from_intensity(&vol, compressed)).unwrap();
        let back = parse_mha(&bytes, &ReadOptions::default()).unwrap().to_intensity().unwrap();
        prop_assert_eq!(back.voxels().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                        vol.voxels().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back.grid(), vol.grid());
    }

    #[test]
    fn masks_round_trip(w in 1usize..40, h in 1usize..40, seed in any::<u32>()) {
        let px: Vec<u32> = (0..(w * h) as u32).map(|i| i.wrapping_mul(seed | 1).rotate_left(i % 31) & ((1 << 30) - 1)).collect();
        let mask = MultiLabelMask2D::new(w, h, px).unwrap();
        let bytes = encode_mask_tiff(&mask).unwrap();
        prop_assert_eq!(decode_mask_tiff(&bytes, DEFAULT_MAX_BYTES).unwrap(), mask);
    }

    #[test]
    fn truncated_files_are_errors_not_panics(cut in 0usize..400, g in grid_strategy(), compressed in any::<bool>()) {
        let bytes = encode_mha(&MhaImage::from_labels(&LabelVolume::zeros(g), compressed)).unwrap();
        let cut = cut.min(bytes.len().saturating_sub(1));
        prop_assert!(parse_mha(&bytes[..cut], &ReadOptions::default()).is_err());

        let mask = encode_mask_tiff(&MultiLabelMask2D::zeros(9, 7)).unwrap();
        let _ = decode_mask_tiff(&mask[..cut.min(mask.len() - 1)], DEFAULT_MAX_BYTES);
    }

    #[test]
    fn fmt6_round_trips_through_parse(x in -1e9f64..1e9) {
        let r = round6(x);
        prop_assert_eq!(fmt6(r), fmt6(x));
        prop_assert_eq!(fmt6(r).parse::<f64>().unwrap(), r);
    }

    #[test]
    fn leaderboard_csv_and_json_agree(rows in prop::collection::vec((prop::array::uniform6(0.0f64..200.0), 1.0f64..900.0), 2..8)) {
        let table: Vec<TeamMeans> = rows.iter().enumerate()
            .map(|(i, (m, r))| TeamMeans { team: format!("team, \"{i}\""), means: *m, runtime_s: *r })
            .collect();
        let board = rank_teams(&table).unwrap();
        let csv = read_leaderboard_csv(&encode_results(Results::Leaderboard(&board), Format::Csv).unwrap()).unwrap();
        let json = read_leaderboard_json(&encode_results(Results::Leaderboard(&board), Format::Json).unwrap()).unwrap();
        prop_assert_eq!(&csv, &json);
        for (rec, e) in csv.iter().zip(&board.entries) {
            prop_assert_eq!(&rec.team, &e.team);
            prop_assert_eq!(rec.final_rank, e.final_rank);
            prop_assert!((rec.iou_f - e.means[0]).abs() <= 5e-6 * e.means[0].abs().max(1e-300));
        }
    }
}

#[test]
fn float_images_round_trip() {
    let img = FloatImage { width: 5, height: 3, pixels: (0..15).map(|i| (i as f32).sqrt() - 1.0).collect() };
    assert_eq!(decode_float_tiff(&encode_float_tiff(&img).unwrap(), DEFAULT_MAX_BYTES).unwrap(), img);
}

#[test]
fn header_keys_keep_their_order() {
    let g = Grid::new([2, 2, 2], [0.83, 0.83, 0.89], [0.0; 3]).unwrap();
    let text = String::from_utf8(encode_mha(&MhaImage::from_labels(&LabelVolume::zeros(g), false)).unwrap()[..].split(|&b| b == 0).next().unwrap().to_vec()).unwrap();
    let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
    assert_eq!(
        keys,
        [
            "ObjectType", "NDims", "BinaryData", "BinaryDataByteOrderMSB", "CompressedData", "TransformMatrix", "Offset",
            "CenterOfRotation", "AnatomicalOrientation", "ElementSpacing", "DimSize", "ElementType", "ElementDataFile",
        ]
    );
    assert!(text.contains("ElementSpacing = 0.83 0.83 0.89\n"));
}
