#pragma once

#include <array>

#include "rmc/model.hpp"

namespace rmc {

// Quadratic Bezier path phi(t) = (1-t)^2 start + 2t(1-t) control + t^2 end.
struct CurveParams {
  ModelParams theta_start;
  ModelParams theta_control;
  ModelParams theta_end;

  CurveParams() = default;
  CurveParams(ModelParams start, ModelParams control, ModelParams end)
      : theta_start(std::move(start)), theta_control(std::move(control)), theta_end(std::move(end)) {
    require(theta_start.arch == theta_control.arch && theta_start.arch == theta_end.arch,
            "curve endpoints and control point must share one architecture");
  }

  // Control point at the endpoint midpoint, i.e. the straight segment.
  static CurveParams segment(const ModelParams& a, const ModelParams& b) {
    require(a.arch == b.arch, "curve endpoints have different architectures");
    ModelParams mid = a;
    for (std::size_t i = 0; i < mid.flat.size(); ++i) mid.flat[i] = 0.5 * (a.flat[i] + b.flat[i]);
    return {a, std::move(mid), b};
  }

  const ArchSpec& arch() const { return theta_start.arch; }

  friend bool operator==(const CurveParams&, const CurveParams&) = default;
};

inline std::array<Real, 3> bezier_weights(Real t) {
  const Real s = 1.0 - t;
  return {s * s, 2.0 * t * s, t * t};
}

inline ModelParams curve_point(const CurveParams& curve, Real t) {
  require(t >= 0.0 && t <= 1.0, "curve parameter t must lie in [0, 1]");
  if (t == 0.0) return curve.theta_start;
  if (t == 1.0) return curve.theta_end;
  const auto w = bezier_weights(t);
  ModelParams out = curve.theta_start;
  const auto a = curve.theta_start.flat.values();
  const auto c = curve.theta_control.flat.values();
  const auto b = curve.theta_end.flat.values();
  // Offsets from the start point: a constant curve evaluates to it exactly.
  for (std::size_t i = 0; i < out.flat.size(); ++i) out.flat[i] = a[i] + w[1] * (c[i] - a[i]) + w[2] * (b[i] - a[i]);
  return out;
}

// Chain rule through the control-point coefficient 2t(1-t).
inline Tensor control_grad(const Tensor& grad_at_point, Real t, std::size_t expected_len) {
  require(grad_at_point.size() == expected_len, "control_grad: gradient length does not match parameter count");
  const Real w = 2.0 * t * (1.0 - t);
  Tensor g = grad_at_point;
  for (auto& v : g.values()) v *= w;
  return g;
}

inline Tensor control_grad(const Tensor& grad_at_point, Real t) {
  return control_grad(grad_at_point, t, grad_at_point.size());
}

}  // namespace rmc
