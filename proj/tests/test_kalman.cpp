#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "surgtrack/kalman.hpp"

using namespace surgtrack;

namespace {

double min_eigenvalue(const StateMatrix& p)
{
    Eigen::SelfAdjointEigenSolver<StateMatrix> es(p);
    return es.eigenvalues().minCoeff();
}

}  // namespace

TEST(KalmanInit, FromBox)
{
    // centre (100,100), aspect 0.5, height 40
    const auto box = BoundingBox::from_center(100, 100, 20, 40);
    const auto s = kalman_init(box);
    StateVector expected;
    expected << 100, 100, 0.5, 40, 0, 0, 0, 0;
    EXPECT_TRUE(s.mean.isApprox(expected, 1e-15));
    EXPECT_GE(min_eigenvalue(s.covariance), 0.0);
    EXPECT_TRUE(s.covariance.isDiagonal());

    const auto again = kalman_init(box);
    EXPECT_EQ(again.mean, s.mean);
    EXPECT_EQ(again.covariance, s.covariance);
}

TEST(KalmanPredict, NoiselessConstantVelocity)
{
    KalmanState s;
    s.mean << 10, 20, 0.5, 40, 2, 0, 0, 0;
    s.covariance.diagonal().head<4>() << 4, 4, 1e-4, 4;
    const auto p = kalman_predict(s, KalmanNoise::noiseless());
    EXPECT_NEAR(p.mean[0], 12.0, 1e-12);
    EXPECT_EQ(p.mean.tail<7>(), s.mean.tail<7>());
    EXPECT_TRUE(p.covariance.isApprox(s.covariance, 1e-12));
}

TEST(KalmanPredict, ZeroVelocityIdentityTransform)
{
    const auto s = kalman_init(BoundingBox(0, 0, 10, 20));
    const auto p = kalman_predict(s, KalmanNoise::noiseless(), CameraTransform::identity());
    EXPECT_EQ(p.mean, s.mean);
}

TEST(KalmanPredict, TranslationShiftsCentre)
{
    const auto s = kalman_init(BoundingBox(0, 0, 10, 20));
    const auto p = kalman_predict(s, KalmanNoise::noiseless(), CameraTransform::translation(5, 0));
    EXPECT_DOUBLE_EQ(p.mean[0], s.mean[0] + 5.0);
    EXPECT_DOUBLE_EQ(p.mean[1], s.mean[1]);
    EXPECT_DOUBLE_EQ(p.mean[3], s.mean[3]);
}

TEST(KalmanPredict, RotationTurnsVelocity)
{
    KalmanState s;
    s.mean << 10, 0, 1, 20, 3, 0, 0, 0;
    const CameraTransform rot(0, -1, 1, 0, 0, 0);
    const auto p = kalman_predict(s, KalmanNoise::noiseless(), rot);
    // centre (10,0) -> (0,10), velocity (3,0) -> (0,3), then one step
    EXPECT_NEAR(p.mean[0], 0.0, 1e-12);
    EXPECT_NEAR(p.mean[1], 13.0, 1e-12);
    EXPECT_NEAR(p.mean[5], 3.0, 1e-12);
    EXPECT_NEAR(p.mean[3], 20.0, 1e-12);
}

TEST(KalmanUpdate, ZeroInnovationKeepsMean)
{
    const auto s = kalman_predict(kalman_init(BoundingBox(5, 5, 25, 45)));
    const auto u = kalman_update(s, s.box(), 0.8, true);
    EXPECT_TRUE(u.mean.isApprox(s.mean, 1e-12));
}

TEST(KalmanUpdate, ExactMeasurementLimit)
{
    KalmanNoise noise;
    noise.measurement_weight = 0.0;
    noise.aspect_measurement_std = 0.0;
    const auto s = kalman_predict(kalman_init(BoundingBox(5, 5, 25, 45), noise), noise);
    const BoundingBox z(8, 9, 30, 50);
    const auto u = kalman_update(s, z, 1.0, true, noise);
    const auto zm = box_to_measurement(z);
    for (int i = 0; i < 4; ++i)
        EXPECT_NEAR(u.mean[i], zm[i], 1e-12);
}

TEST(KalmanUpdate, ScalarAnalogue)
{
    // prior variance 1, measurement variance 1 on every axis: posterior is
    // the midpoint with variance 0.5
    KalmanState s;
    s.mean << 0, 2, 1, 10, 0, 0, 0, 0;
    s.covariance.setIdentity();
    MeasurementVector z{4, 6, 3, 14};
    const auto u = kalman_correct(s, z, MeasurementMatrix::Identity());
    EXPECT_NEAR(u.mean[0], 2.0, 1e-12);
    EXPECT_NEAR(u.mean[1], 4.0, 1e-12);
    EXPECT_NEAR(u.mean[2], 2.0, 1e-12);
    EXPECT_NEAR(u.mean[3], 12.0, 1e-12);
    for (int i = 0; i < 4; ++i)
        EXPECT_NEAR(u.covariance(i, i), 0.5, 1e-12);
    for (int i = 4; i < 8; ++i)
        EXPECT_NEAR(u.covariance(i, i), 1.0, 1e-12);
}

TEST(KalmanUpdate, ConfidenceShrinksNoise)
{
    const auto s = kalman_predict(kalman_init(BoundingBox(0, 0, 20, 40)));
    const BoundingBox z(4, 0, 24, 40);
    const auto low = kalman_update(s, z, 0.1, true);
    const auto high = kalman_update(s, z, 0.95, true);
    const auto off = kalman_update(s, z, 0.95, false);
    // higher confidence pulls the estimate further towards the measurement
    EXPECT_GT(high.mean[0], low.mean[0]);
    EXPECT_GT(high.mean[0], off.mean[0]);
}

TEST(KalmanUpdate, RejectsNonFinite)
{
    const auto s = kalman_init(BoundingBox(0, 0, 20, 40));
    EXPECT_THROW(kalman_update(s, BoundingBox(0, 0, 20, 40), std::nan(""), true), InputError);
    MeasurementVector z{std::nan(""), 0, 1, 1};
    EXPECT_THROW(kalman_correct(s, z, MeasurementMatrix::Identity()), InputError);
}

TEST(KalmanProperty, CovarianceStaysPsd)
{
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> u(-30, 30), conf(0, 1), coin(0, 1);
    auto s = kalman_init(BoundingBox(100, 100, 140, 180));
    for (int i = 0; i < 2000; ++i) {
        std::optional<CameraTransform> t;
        if (coin(rng) < 0.3)
            t = CameraTransform(1.0 + u(rng) / 300, u(rng) / 300, u(rng) / 300, 1.0 + u(rng) / 300, u(rng), u(rng));
        s = kalman_predict(s, {}, t);
        ASSERT_GE(min_eigenvalue(s.covariance), -1e-9);
        if (coin(rng) < 0.7) {
            const double cx = s.mean[0] + u(rng), cy = s.mean[1] + u(rng);
            const double h = std::max(5.0, s.mean[3] + u(rng) / 3);
            s = kalman_update(s, BoundingBox::from_center(cx, cy, 0.5 * h, h), conf(rng), coin(rng) < 0.5);
            ASSERT_GE(min_eigenvalue(s.covariance), -1e-9);
        }
        ASSERT_GT(s.mean[3], 0.0);
        ASSERT_GT(s.mean[2], 0.0);
    }
}

TEST(Mahalanobis, ZeroAtPrediction)
{
    const auto s = kalman_predict(kalman_init(BoundingBox(0, 0, 20, 40)));
    EXPECT_NEAR(mahalanobis_sq(s, s.box()), 0.0, 1e-12);
    EXPECT_GT(mahalanobis_sq(s, BoundingBox(30, 0, 50, 40)), 9.4877);
}
