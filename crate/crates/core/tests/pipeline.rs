//! Cross-module checks: determinism under threading, agreement between the
//! field covariance and the Green function, and small end-to-end pipelines.

use lqg_core::critical::{boundary_ladder, Norming};
use lqg_core::gff::{GaussianField, BLOCK};
use lqg_core::gmc::{bulk_measure, expected_bulk_mass};
use lqg_core::grid::{PolarGrid, PolarGridSpec};
use lqg_core::liouville::{
    kpz_covariance, partition_estimate, BoundaryInsertion, BulkInsertion, CIntegralMethod, ChaosSetup, InsertionSet,
    VolumeLawSampler,
};
use lqg_core::maps::{histogram_check, BoltzmannConfig, BoltzmannTable};
use lqg_core::{green_regularized_pair, parallel, stats, Complex64, DiskPoint, LiouvilleParams, MobiusMap, RngStream};

fn small_setup() -> ChaosSetup {
    ChaosSetup {
        grid: PolarGridSpec {
            core_rings: 3,
            bands: 4,
            sub_rings: 1,
        },
        n_modes: 128,
        n_arcs: 512,
    }
}

fn three_points(gamma: f64) -> InsertionSet {
    InsertionSet::new(
        [(0.2, 0.1), (-0.3, 0.0), (0.0, -0.4)]
            .into_iter()
            .map(|(x, y)| BulkInsertion {
                point: DiskPoint::interior(x, y).unwrap(),
                alpha: 0.9,
            })
            .collect(),
        vec![],
        LiouvilleParams::new(gamma, 1.0, 0.0).unwrap(),
    )
    .unwrap()
}

#[test]
fn field_covariance_is_the_regularised_green_function() {
    let grid = PolarGrid::new(PolarGridSpec {
        core_rings: 2,
        bands: 3,
        sub_rings: 1,
    })
    .unwrap();
    let field = GaussianField::from_cells(grid.cells()).unwrap();
    let (pts, eps) = (grid.points(), grid.eps());
    for i in (0..pts.len()).step_by(7) {
        for j in (0..pts.len()).step_by(5) {
            let g = green_regularized_pair(pts[i], eps[i], pts[j], eps[j]).unwrap();
            assert!((field.covariance(i, j) - g).abs() < 1e-12, "({i}, {j})");
        }
    }
}

#[test]
fn partition_estimates_ignore_worker_count() {
    let ins = three_points(1.0);
    let base = RngStream::new(8, 0);
    let one = partition_estimate(&ins, small_setup(), 200, &base, CIntegralMethod::Auto, 1).unwrap();
    let many = partition_estimate(&ins, small_setup(), 200, &base, CIntegralMethod::Auto, 3).unwrap();
    assert_eq!(one.value.to_bits(), many.value.to_bits());
    assert_eq!(one.stderr.to_bits(), many.stderr.to_bits());
}

#[test]
fn kpz_ratio_with_the_identity_map_is_one_in_law() {
    let r = kpz_covariance(
        &three_points(1.0),
        &MobiusMap::identity(),
        small_setup(),
        512,
        &RngStream::new(3, 0),
        2,
    )
    .unwrap();
    assert_eq!(r.predicted_ratio, 1.0);
    assert!(r.z_score.abs() < 4.0, "z = {}", r.z_score);
}

#[test]
fn rotations_leave_the_kpz_prediction_trivial() {
    let ins = three_points(1.2);
    let psi = MobiusMap::new(Complex64::new(0.0, 0.0), 1.1).unwrap();
    let r = kpz_covariance(&ins, &psi, small_setup(), 128, &RngStream::new(1, 0), 1).unwrap();
    assert!((r.predicted_ratio - 1.0).abs() < 1e-12);
}

#[test]
fn volume_sampler_ignores_worker_count() {
    let gamma = (8.0f64 / 3.0).sqrt();
    let ins = InsertionSet::new(
        vec![BulkInsertion {
            point: DiskPoint::ORIGIN,
            alpha: gamma,
        }],
        vec![BoundaryInsertion {
            point: DiskPoint::boundary(0.0),
            beta: gamma,
        }],
        LiouvilleParams::new(gamma, 1.0, 0.0).unwrap(),
    )
    .unwrap();
    let base = RngStream::new(2, 0);
    let a = VolumeLawSampler::new(&ins, small_setup(), 150, &base, 1).unwrap();
    let b = VolumeLawSampler::new(&ins, small_setup(), 150, &base, 4).unwrap();
    assert_eq!(a.weights(), b.weights());
    let draw_stream = RngStream::new(2, 1);
    let (da, db) = (a.draws(50, &draw_stream).unwrap(), b.draws(50, &draw_stream).unwrap());
    for (x, y) in da.iter().zip(&db) {
        assert_eq!((x.replica, x.volume.to_bits()), (y.replica, y.volume.to_bits()));
    }
}

#[test]
fn boundary_ladder_ignores_worker_count() {
    let base = RngStream::new(6, 0);
    let a = boundary_ladder(6, 8, 2, 70, &base, 1).unwrap();
    let b = boundary_ladder(6, 8, 2, 70, &base, 3).unwrap();
    assert_eq!(a.totals(Norming::SenetaHeyde), b.totals(Norming::SenetaHeyde));
    assert_eq!(a.totals(Norming::Plain), b.totals(Norming::Plain));
}

#[test]
fn bulk_mass_mean_matches_closed_form() {
    let gamma = 0.3;
    let grid = PolarGrid::new(PolarGridSpec::default()).unwrap();
    let field = GaussianField::from_cells(grid.cells()).unwrap();
    let w = grid.chaos_weights(gamma);
    let base = RngStream::new(4, 0);
    let totals: Vec<f64> = parallel::map_ordered(4, 2, |b| {
        field
            .sample_block(&base, b as u64)
            .iter()
            .map(|r| Ok(bulk_measure(r, gamma, &w)?.total_mass()))
            .collect::<lqg_core::Result<Vec<_>>>()
    })
    .unwrap()
    .concat();
    assert_eq!(totals.len(), 4 * BLOCK);
    let est = stats::mean_stderr(&totals);
    assert!(est.z_score(expected_bulk_mass(gamma)).abs() < 4.0, "{est:?}");
}

#[test]
fn boltzmann_draws_match_their_table() {
    let table = BoltzmannTable::new(BoltzmannConfig::new(0.2, 1.0, 1.0).unwrap()).unwrap();
    let draws = table.sample_many(20_000, &RngStream::new(5, 0));
    let report = histogram_check(&table, &draws, 50.0);
    assert!(report.cells.len() > 5);
    assert!(report.max_abs_z < 4.5, "max |z| = {}", report.max_abs_z);
    assert!(report.p_value > 1e-4, "p = {}", report.p_value);
}
