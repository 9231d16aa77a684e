use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::matcore::mat::Mat;
use crate::matcore::sym::SymMat;
use crate::scalar::Scalar;

impl<T: Scalar + Serialize> Serialize for Mat<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for Mat<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<T>>::deserialize(d)?;
        Mat::from_rows(&rows).map_err(D::Error::custom)
    }
}

impl<T: Scalar + Serialize> Serialize for SymMat<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.as_mat().serialize(s)
    }
}

/// Symmetric input is required to within `1e-12` (absolute).
impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for SymMat<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let m = Mat::<T>::deserialize(d)?;
        SymMat::from_mat(&m, T::c(1e-12)).map_err(D::Error::custom)
    }
}
