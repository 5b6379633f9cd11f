use super::raster::Raster;
use super::DataError;

/// `nDSM = DSM - DTM`, with negative heights clamped to zero.
pub fn compute_ndsm(dsm: &Raster, dtm: &Raster) -> Result<Raster, DataError> {
    if dsm.channels != 1 || dtm.channels != 1 || dsm.dims() != dtm.dims() {
        return Err(DataError::Invalid(format!(
            "dsm {}x{}x{} and dtm {}x{}x{} differ",
            dsm.channels, dsm.height, dsm.width, dtm.channels, dtm.height, dtm.width
        )));
    }
    let data = dsm.data.iter().zip(&dtm.data).map(|(s, t)| (s - t).max(0.0)).collect();
    Ok(Raster { channels: 1, height: dsm.height, width: dsm.width, data })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn equal_surfaces_give_zero() {
        let r = Raster::new(1, 2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!(compute_ndsm(&r, &r).unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_offset() {
        let dtm = Raster::new(1, 2, 2, vec![100.0, 101.5, 99.0, 102.0]).unwrap();
        let dsm = Raster::new(1, 2, 2, dtm.data.iter().map(|v| v + 5.0).collect()).unwrap();
        assert!(compute_ndsm(&dsm, &dtm).unwrap().data.iter().all(|&v| (v - 5.0).abs() < 1e-5));
    }

    #[test]
    fn matches_elementwise_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dsm = Raster::new(1, 8, 6, (0..48).map(|_| rng.gen_range(90.0..130.0)).collect()).unwrap();
        let dtm = Raster::new(1, 8, 6, (0..48).map(|_| rng.gen_range(95.0..105.0)).collect()).unwrap();
        let out = compute_ndsm(&dsm, &dtm).unwrap();
        for y in 0..8 {
            for x in 0..6 {
                let d = dsm.at(0, y, x) - dtm.at(0, y, x);
                assert_eq!(out.at(0, y, x), if d < 0.0 { 0.0 } else { d });
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        assert!(compute_ndsm(&Raster::filled(1, 2, 2, 0.0), &Raster::filled(1, 2, 4, 0.0)).is_err());
    }
}
