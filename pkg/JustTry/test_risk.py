#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
测试经验风险库: 风险值、梯度/Hessian 有限差分、惩罚目标与 Monte Carlo 总体风险
"""

import json
import math

import numpy as np
import pytest

from Losses.loss_lib import LossSpec, rho
from Data.gross_error import Dataset, DesignSpec, GrossErrorSpec, equal_theta0, generate
from Risk.empirical_risk import (
    directional_curvature,
    empirical_gradient,
    empirical_hessian,
    empirical_risk,
    evaluate,
    hessian_vector_product,
    penalized_objective,
    population_risk_mc,
    risk_and_gradient,
)

FD_STEP = 1e-5


def random_instance(rng, spec_pool):
    p = int(rng.integers(1, 21))
    n = int(rng.integers(p + 1, 201))
    design = DesignSpec(n, p, "gaussian", 1.0, rng.standard_normal(p) / math.sqrt(p))
    ds = generate(design, GrossErrorSpec(0.2), seed=int(rng.integers(0, 2 ** 31)))
    spec = spec_pool[int(rng.integers(0, len(spec_pool)))]
    theta = rng.uniform(-1.0, 1.0, p)
    return ds, spec, theta


def fd_gradient(ds, spec, theta):
    grad = np.empty_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = FD_STEP
        grad[j] = (empirical_risk(ds, spec, theta + e) - empirical_risk(ds, spec, theta - e)) / (2 * FD_STEP)
    return grad


class TestEmpiricalRisk:

    def test_zero_residuals(self):
        design = DesignSpec(100, 3, theta0=[1.0, 2.0, -1.0])
        ds = generate(design, GrossErrorSpec(0.0, sigma=1e-12), seed=0)
        assert empirical_risk(ds, LossSpec.welsch(0.1), design.theta0) <= 1e-20

    def test_single_row_huber(self):
        ds = Dataset([[1.0]], [1.0])
        assert empirical_risk(ds, LossSpec.huber(2.0), [0.0]) == 0.5

    def test_matches_termwise_sum(self, lowdim_dataset, welsch):
        theta = np.full(lowdim_dataset.p, 0.3)
        residuals = lowdim_dataset.y - lowdim_dataset.x @ theta
        expected = math.fsum(rho(welsch, float(r)) for r in residuals) / lowdim_dataset.n
        assert empirical_risk(lowdim_dataset, welsch, theta) == pytest.approx(expected, rel=1e-12)

    def test_duplicated_dataset(self, lowdim_dataset, welsch):
        theta = np.linspace(-1.0, 1.0, lowdim_dataset.p)
        double = lowdim_dataset.concat(lowdim_dataset)
        assert empirical_risk(double, welsch, theta) == empirical_risk(lowdim_dataset, welsch, theta)

    def test_dimension_mismatch(self, integer_dataset, welsch):
        with pytest.raises(ValueError):
            empirical_risk(integer_dataset, welsch, [1.0, 2.0, 3.0])


class TestGradient:

    def test_zero_residuals(self, integer_dataset, welsch):
        exact = Dataset(integer_dataset.x, integer_dataset.x @ np.array([1.0, -1.0]))
        np.testing.assert_array_equal(empirical_gradient(exact, welsch, [1.0, -1.0]), [0.0, 0.0])

    def test_hand_value(self):
        ds = Dataset([[2.0]], [1.0])
        grad = empirical_gradient(ds, LossSpec.welsch(1.0), [0.0])
        assert grad[0] == pytest.approx(-2.0 * math.exp(-0.5), rel=1e-15)

    def test_squared_is_normal_equation_residual(self, integer_dataset):
        theta = np.array([2.0, -1.0])
        x, y = integer_dataset.x, integer_dataset.y
        expected = x.T @ (x @ theta - y) / integer_dataset.n
        np.testing.assert_array_equal(empirical_gradient(integer_dataset, LossSpec.squared(), theta), expected)

    def test_finite_difference(self):
        rng = np.random.default_rng(20)
        pool = [LossSpec.squared(), LossSpec.huber(1.0), LossSpec.welsch(0.1), LossSpec.welsch(1.0)]
        for _ in range(100):
            ds, spec, theta = random_instance(rng, pool)
            analytic = empirical_gradient(ds, spec, theta)
            numeric = fd_gradient(ds, spec, theta)
            err = np.max(np.abs(analytic - numeric)) / (1.0 + np.max(np.abs(analytic)))
            assert err <= 1e-6, (spec.label(), ds.n, ds.p, err)

    def test_risk_and_gradient_consistent(self, lowdim_dataset, huber):
        theta = np.full(lowdim_dataset.p, -0.2)
        value, grad = risk_and_gradient(lowdim_dataset, huber, theta)
        assert value == empirical_risk(lowdim_dataset, huber, theta)
        np.testing.assert_array_equal(grad, empirical_gradient(lowdim_dataset, huber, theta))


class TestHessian:

    def test_squared_is_gram(self, integer_dataset):
        x = integer_dataset.x
        hess = empirical_hessian(integer_dataset, LossSpec.squared(), [0.5, 0.5])
        np.testing.assert_array_equal(hess, x.T @ x / integer_dataset.n)

    def test_symmetric(self, lowdim_dataset, welsch):
        hess = empirical_hessian(lowdim_dataset, welsch, np.full(lowdim_dataset.p, 0.1))
        assert np.max(np.abs(hess - hess.T)) <= 1e-12

    def test_welsch_zero_curvature(self):
        x = np.random.default_rng(0).standard_normal((20, 3))
        ds = Dataset(x, np.ones(20))
        hess = empirical_hessian(ds, LossSpec.welsch(1.0), np.zeros(3))
        np.testing.assert_array_equal(hess, np.zeros((3, 3)))

    def test_finite_difference(self):
        rng = np.random.default_rng(21)
        pool = [LossSpec.squared(), LossSpec.welsch(0.1), LossSpec.welsch(1.0)]
        for _ in range(100):
            ds, spec, theta = random_instance(rng, pool)
            hess = empirical_hessian(ds, spec, theta)
            numeric = np.empty_like(hess)
            for j in range(ds.p):
                e = np.zeros(ds.p)
                e[j] = FD_STEP
                numeric[:, j] = (empirical_gradient(ds, spec, theta + e)
                                 - empirical_gradient(ds, spec, theta - e)) / (2 * FD_STEP)
            assert np.max(np.abs(hess - numeric)) <= 1e-5

    def test_vector_products(self, lowdim_dataset, welsch):
        theta = np.full(lowdim_dataset.p, 0.2)
        v = np.linspace(-1.0, 1.0, lowdim_dataset.p)
        hess = empirical_hessian(lowdim_dataset, welsch, theta)
        np.testing.assert_allclose(hessian_vector_product(lowdim_dataset, welsch, theta, v), hess @ v,
                                   rtol=1e-12, atol=1e-13)
        assert directional_curvature(lowdim_dataset, welsch, theta, v) == pytest.approx(v @ hess @ v, rel=1e-12)

    def test_vector_dimension_checked(self, integer_dataset, welsch):
        with pytest.raises(ValueError):
            hessian_vector_product(integer_dataset, welsch, [0.0, 0.0], [1.0])
        with pytest.raises(ValueError):
            directional_curvature(integer_dataset, welsch, [0.0, 0.0], [1.0, 2.0, 3.0])

    def test_dense_limit(self, welsch):
        ds = Dataset(np.ones((1, 2001)), [0.0])
        with pytest.raises(ValueError, match="hessian_vector_product"):
            empirical_hessian(ds, welsch, np.zeros(2001))
        assert hessian_vector_product(ds, welsch, np.zeros(2001), np.ones(2001)).shape == (2001,)


class TestPenalizedObjective:

    def test_no_penalty(self, integer_dataset, welsch):
        theta = [1.0, -2.0]
        assert penalized_objective(integer_dataset, welsch, theta, 0.0) == empirical_risk(integer_dataset, welsch, theta)

    def test_l1_term(self, integer_dataset, welsch):
        theta = np.array([1.0, -2.0])
        value = penalized_objective(integer_dataset, welsch, theta, 0.1)
        assert value == pytest.approx(empirical_risk(integer_dataset, welsch, theta) + 0.3, rel=1e-15)

    def test_origin(self, integer_dataset, welsch):
        assert penalized_objective(integer_dataset, welsch, [0.0, 0.0], 5.0) == \
            empirical_risk(integer_dataset, welsch, [0.0, 0.0])

    def test_negative_lambda(self, integer_dataset, welsch):
        with pytest.raises(ValueError):
            penalized_objective(integer_dataset, welsch, [0.0, 0.0], -0.1)


class TestEvaluate:

    def test_serializable(self, integer_dataset, welsch):
        result = evaluate(integer_dataset, welsch, [0.5, 0.5], with_hessian=True)
        data = json.loads(json.dumps(result.to_dict()))
        assert data["value"] == result.value
        assert len(data["hessian"]) == 2

    def test_optional_parts(self, integer_dataset, welsch):
        result = evaluate(integer_dataset, welsch, [0.0, 0.0], with_gradient=False)
        assert result.gradient is None and result.hessian is None


class TestPopulationRisk:

    def test_squared_clean(self, lowdim_design, clean_noise):
        est = population_risk_mc(lowdim_design, clean_noise, LossSpec.squared(), lowdim_design.theta0,
                                 n_mc=20000, seed=1)
        assert abs(est.value - 0.5) <= 4 * est.std_error

    def test_welsch_clean(self, lowdim_design, clean_noise):
        alpha = 0.5
        est = population_risk_mc(lowdim_design, clean_noise, LossSpec.welsch(alpha), lowdim_design.theta0,
                                 n_mc=20000, seed=2)
        expected = (1.0 - (1.0 + alpha) ** -0.5) / alpha
        assert abs(est.value - expected) <= 4 * est.std_error

    def test_matches_empirical_risk_on_same_sample(self, lowdim_design, welsch):
        noise = GrossErrorSpec(0.2)
        theta = np.zeros(lowdim_design.p)
        est = population_risk_mc(lowdim_design, noise, welsch, theta, n_mc=500, seed=3)
        sample = generate(lowdim_design.with_n(500), noise, 3)
        assert est.value == empirical_risk(sample, welsch, theta)
        assert est.to_dict()["std_error"] > 0

    def test_minimum_sample_size(self, lowdim_design, clean_noise, welsch):
        with pytest.raises(ValueError):
            population_risk_mc(lowdim_design, clean_noise, welsch, np.zeros(10), n_mc=50, seed=0)

    def test_contamination_raises_squared_risk(self):
        design = DesignSpec(100, 3, theta0=equal_theta0(3))
        clean = population_risk_mc(design, GrossErrorSpec(0.0), LossSpec.squared(), design.theta0, 5000, 4)
        dirty = population_risk_mc(design, GrossErrorSpec(0.3), LossSpec.squared(), design.theta0, 5000, 4)
        assert dirty.value > clean.value + 5 * (clean.std_error + dirty.std_error)
