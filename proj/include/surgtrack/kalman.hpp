#pragma once

// Constant-velocity Kalman filter over (cx, cy, aspect, height) and their
// velocities, the SORT/DeepSORT parameterisation. Noise is diagonal and
// scales with the box height so behaviour is size invariant.

#include <algorithm>
#include <cmath>
#include <optional>

#include <Eigen/Dense>

#include "surgtrack/error.hpp"
#include "surgtrack/geometry.hpp"

namespace surgtrack {

using StateVector = Eigen::Matrix<double, 8, 1>;
using StateMatrix = Eigen::Matrix<double, 8, 8>;
using MeasurementVector = Eigen::Matrix<double, 4, 1>;
using MeasurementMatrix = Eigen::Matrix<double, 4, 4>;

struct KalmanNoise {
    double position_weight = 1.0 / 20.0;
    double velocity_weight = 1.0 / 160.0;
    double measurement_weight = 1.0 / 20.0;
    double aspect_position_std = 1e-2;
    double aspect_velocity_std = 1e-5;
    double aspect_measurement_std = 1e-1;
    // initial covariance multiples of the process stds
    double init_position_factor = 2.0;
    double init_velocity_factor = 10.0;
    // confidence-scaled measurement noise never drops below this fraction
    double confidence_floor = 1e-4;

    static KalmanNoise noiseless()
    {
        KalmanNoise n;
        n.position_weight = n.velocity_weight = n.measurement_weight = 0.0;
        n.aspect_position_std = n.aspect_velocity_std = n.aspect_measurement_std = 0.0;
        return n;
    }
};

inline constexpr double kMinHeight = 1e-3;
inline constexpr double kMinAspect = 1e-6;

inline MeasurementVector box_to_measurement(const BoundingBox& b)
{
    return {b.center_x(), b.center_y(), b.width() / b.height(), b.height()};
}

struct KalmanState {
    StateVector mean = StateVector::Zero();
    StateMatrix covariance = StateMatrix::Zero();

    BoundingBox box() const
    {
        const double h = std::max(mean[3], kMinHeight);
        const double w = std::max(mean[2], kMinAspect) * h;
        return BoundingBox::from_center(mean[0], mean[1], w, h);
    }

    MeasurementVector position() const { return mean.head<4>(); }
};

inline KalmanState kalman_init(const BoundingBox& box, const KalmanNoise& noise = {})
{
    KalmanState s;
    s.mean.head<4>() = box_to_measurement(box);
    const double h = box.height();
    const double p = noise.init_position_factor * noise.position_weight * h;
    const double v = noise.init_velocity_factor * noise.velocity_weight * h;
    StateVector std_dev;
    std_dev << p, p, noise.aspect_position_std, p, v, v, noise.aspect_velocity_std, v;
    s.covariance = std_dev.array().square().matrix().asDiagonal();
    return s;
}

namespace detail {

inline void clamp_shape(KalmanState& s)
{
    s.mean[2] = std::max(s.mean[2], kMinAspect);
    s.mean[3] = std::max(s.mean[3], kMinHeight);
}

inline void symmetrize(StateMatrix& p) { p = 0.5 * (p + p.transpose()); }

inline Eigen::Matrix<double, 4, 8> measurement_model()
{
    Eigen::Matrix<double, 4, 8> h = Eigen::Matrix<double, 4, 8>::Zero();
    h.leftCols<4>().setIdentity();
    return h;
}

}  // namespace detail

/// Maps the state through a global image motion. Centre and centre velocity
/// go through the affine map, height and its velocity scale by sqrt|det|,
/// aspect is kept.
inline KalmanState compensate_motion(const KalmanState& s, const CameraTransform& t)
{
    if (t.is_identity())
        return s;
    const double scale = std::sqrt(std::abs(t.determinant()));
    StateMatrix jac = StateMatrix::Identity();
    jac.block<2, 2>(0, 0) << t.a(), t.b(), t.c(), t.d();
    jac.block<2, 2>(4, 4) << t.a(), t.b(), t.c(), t.d();
    jac(3, 3) = scale;
    jac(7, 7) = scale;

    KalmanState out;
    out.mean = jac * s.mean;
    out.mean[0] += t.tx();
    out.mean[1] += t.ty();
    out.covariance = jac * s.covariance * jac.transpose();
    detail::symmetrize(out.covariance);
    detail::clamp_shape(out);
    return out;
}

inline KalmanState kalman_predict(const KalmanState& s, const KalmanNoise& noise = {},
                                  const std::optional<CameraTransform>& transform = std::nullopt)
{
    KalmanState cur = transform ? compensate_motion(s, *transform) : s;

    StateMatrix f = StateMatrix::Identity();
    f.topRightCorner<4, 4>().setIdentity();

    const double h = cur.mean[3];
    const double p = noise.position_weight * h;
    const double v = noise.velocity_weight * h;
    StateVector std_dev;
    std_dev << p, p, noise.aspect_position_std, p, v, v, noise.aspect_velocity_std, v;

    KalmanState out;
    out.mean = f * cur.mean;
    out.covariance = f * cur.covariance * f.transpose();
    out.covariance.diagonal() += std_dev.array().square().matrix();
    detail::symmetrize(out.covariance);
    detail::clamp_shape(out);
    return out;
}

/// Measurement covariance for a detection at the given state height.
inline MeasurementMatrix measurement_noise(double height, const KalmanNoise& noise,
                                           std::optional<double> confidence)
{
    const double m = noise.measurement_weight * height;
    MeasurementVector var{m * m, m * m, noise.aspect_measurement_std * noise.aspect_measurement_std, m * m};
    if (confidence)
        var *= std::max(1.0 - *confidence, noise.confidence_floor);
    return var.asDiagonal();
}

/// Projected measurement mean and innovation covariance.
inline std::pair<MeasurementVector, MeasurementMatrix> project(const KalmanState& s,
                                                               const MeasurementMatrix& r)
{
    const auto hm = detail::measurement_model();
    return {hm * s.mean, hm * s.covariance * hm.transpose() + r};
}

/// Generic linear correction with an explicit measurement covariance.
/// Uses the Joseph form so the posterior stays symmetric PSD.
inline KalmanState kalman_correct(const KalmanState& s, const MeasurementVector& z,
                                  const MeasurementMatrix& r)
{
    if (!z.allFinite() || !r.allFinite() || !s.mean.allFinite() || !s.covariance.allFinite())
        throw InputError("kalman update received non-finite input");
    const auto hm = detail::measurement_model();
    const auto [z_pred, innov_cov] = project(s, r);

    const Eigen::Matrix<double, 8, 4> pht = s.covariance * hm.transpose();
    // K = P H^T S^-1; S may be singular when both prior and noise vanish on an axis
    Eigen::Matrix<double, 8, 4> gain;
    const Eigen::LDLT<MeasurementMatrix> ldlt(innov_cov);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0.0).all())
        gain = ldlt.solve(pht.transpose()).transpose();
    else
        gain = innov_cov.completeOrthogonalDecomposition().solve(pht.transpose()).transpose();

    KalmanState out;
    out.mean = s.mean + gain * (z - z_pred);
    const StateMatrix ikh = StateMatrix::Identity() - gain * hm;
    out.covariance = ikh * s.covariance * ikh.transpose() + gain * r * gain.transpose();
    detail::symmetrize(out.covariance);
    detail::clamp_shape(out);
    return out;
}

inline KalmanState kalman_update(const KalmanState& s, const BoundingBox& measured, double confidence,
                                 bool confidence_scaling, const KalmanNoise& noise = {})
{
    if (!std::isfinite(confidence))
        throw InputError("kalman update received non-finite confidence");
    const auto r = measurement_noise(s.mean[3], noise,
                                     confidence_scaling ? std::optional<double>(confidence) : std::nullopt);
    return kalman_correct(s, box_to_measurement(measured), r);
}

/// Squared Mahalanobis distance of a box measurement from the projected state.
inline double mahalanobis_sq(const KalmanState& s, const BoundingBox& measured, const KalmanNoise& noise = {})
{
    const auto [z_pred, innov_cov] = project(s, measurement_noise(s.mean[3], noise, std::nullopt));
    const MeasurementVector d = box_to_measurement(measured) - z_pred;
    const Eigen::LDLT<MeasurementMatrix> ldlt(innov_cov);
    if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all())
        return d.dot(ldlt.solve(d));
    return d.dot(innov_cov.completeOrthogonalDecomposition().solve(d));
}

}  // namespace surgtrack
