import numpy as np
import pytest

from flatreg.errors import DimensionError, NonFiniteError, ValidationError
from flatreg.io import coefficients_to_csv, config_hash, parse_coefficients_csv
from flatreg.spatial import (CoefficientField, SpatialDataset, coefficient_distance_matrix,
                             dataset_to_csv, euclidean_distance_matrix, parse_dataset_csv)


def test_dataset_validation():
    with pytest.raises(DimensionError):
        SpatialDataset(np.zeros((3, 1)), np.ones((3, 1)), np.ones(3))
    with pytest.raises(DimensionError):
        SpatialDataset(np.zeros((3, 2)), np.ones((4, 1)), np.ones(3))
    with pytest.raises(DimensionError):
        SpatialDataset(np.zeros((3, 2)), np.ones((3, 1)), np.ones(2))
    with pytest.raises(NonFiniteError):
        SpatialDataset(np.zeros((3, 2)), np.ones((3, 1)), np.array([1.0, np.inf, 0.0]))
    ds = SpatialDataset(np.zeros((3, 2)), np.ones(3), np.ones(3))
    assert ds.p == 1 and ds.covariate_names == ("cov1",)
    with pytest.raises(ValueError):
        ds.coords[0, 0] = 1.0


def test_distance_matrix():
    ds = SpatialDataset(np.array([[0.0, 0], [3, 4], [0, 1]]), np.ones(3), np.zeros(3))
    D = euclidean_distance_matrix(ds)
    assert D[0, 1] == 5.0 and D[1, 0] == 5.0 and np.all(np.diag(D) == 0)
    cd = coefficient_distance_matrix(CoefficientField(np.array([[0.0], [2.0], [5.0]])))
    assert cd[0, 2] == 5.0


def test_csv_round_trip():
    rng = np.random.default_rng(0)
    ds = SpatialDataset(rng.uniform(size=(6, 2)), rng.normal(size=(6, 2)), rng.normal(size=6),
                        ("temp", "intercept"))
    back = parse_dataset_csv(dataset_to_csv(ds))
    np.testing.assert_array_equal(back.coords, ds.coords)
    np.testing.assert_array_equal(back.covariates, ds.covariates)
    np.testing.assert_array_equal(back.response, ds.response)
    assert back.covariate_names == ("temp", "intercept")


def test_csv_three_dims_and_order():
    text = "id,x1,x2,x3,a,y\n1,0,0,1,2,3\n0,1,1,1,1,1\n"
    ds = parse_dataset_csv(text)
    assert ds.dim == 3 and ds.response.tolist() == [1.0, 3.0]


@pytest.mark.parametrize("text,err", [
    ("x1,x2,a,y\n0,0,1,1\n", ValidationError),
    ("id,x1,x2,a,y\n0,0,0,1\n", ValidationError),
    ("id,x1,x2,a,y\n0,0,0,nan,1\n", NonFiniteError),
    ("id,x1,x2,a,y\n0,0,0,abc,1\n", ValidationError),
    ("id,x1,x2,a,y\n0,0,0,1,1\n2,0,0,1,1\n", ValidationError),
    ("id,x1,x2,y\n0,0,0,1\n", ValidationError),
])
def test_csv_errors(text, err):
    with pytest.raises(err):
        parse_dataset_csv(text)


def test_standardized():
    rng = np.random.default_rng(1)
    ds = SpatialDataset(rng.uniform(2, 5, size=(20, 2)),
                        np.column_stack([rng.normal(3, 2, 20), np.ones(20)]), rng.normal(size=20))
    s = ds.standardized(coords=True, covariates=True)
    np.testing.assert_allclose(s.coords.min(axis=0), 0)
    np.testing.assert_allclose(s.coords.max(axis=0), 1)
    assert abs(s.covariates[:, 0].mean()) < 1e-12 and s.covariates[:, 0].std() == pytest.approx(1)
    np.testing.assert_array_equal(s.covariates[:, 1], 1.0)


def test_coefficient_csv_round_trip():
    rng = np.random.default_rng(2)
    C = rng.uniform(size=(5, 2))
    cf = CoefficientField(rng.normal(size=(5, 2)), ("a", "b"))
    coords, back = parse_coefficients_csv(coefficients_to_csv(C, cf))
    np.testing.assert_array_equal(coords, C)
    np.testing.assert_array_equal(back.beta, cf.beta)
    assert back.covariate_names == ("a", "b")


def test_config_hash_stable():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
